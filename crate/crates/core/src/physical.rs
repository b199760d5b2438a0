//! Underwater scattering model: `J = I * T + A * (1 - T)` with `T = exp(-alpha * d)`.
//!
//! Every operation comes in two flavours. The plain functions take and return
//! validated [`Image`]s and clamp at the boundary; the `*_unclamped` variants
//! work on raw [`Planes`] so that algebraic identities (restore after degrade,
//! style transfer with equal priors) hold to rounding error.

use crate::error::{Error, Result};
use crate::image::{Image, Planes};

/// Transmission floor. Restoration divides by `T`, so amplification is bounded by `1 / EPS_T`.
pub const EPS_T: f64 = 1e-3;

/// Side length of the dark-channel window used by [`estimate_priors`].
pub const DARK_CHANNEL_WINDOW: usize = 15;

/// Fraction of pixels (by dark-channel brightness) averaged into the ambient light.
pub const AMBIENT_FRACTION: f64 = 0.001;

/// Per-pixel camera-to-object distance.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width || height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "depth map {height}x{width} with {} values",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!("depth {v} is negative or non-finite")));
        }
        Ok(DepthMap { height, width, data })
    }

    pub fn constant(height: usize, width: usize, depth: f64) -> Result<Self> {
        DepthMap::new(height, width, vec![depth; height * width])
    }
}

/// Transmission map, ambient light and (optionally) the physical quantities `T` was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct UnderwaterPriors {
    pub transmission: Planes,
    pub ambient: [f64; 3],
    pub alpha: Option<[f64; 3]>,
    pub depth: Option<DepthMap>,
}

impl UnderwaterPriors {
    /// Validates `T` in `[EPS_T, 1]` and `A` in `[0, 1]`.
    pub fn new(transmission: Planes, ambient: [f64; 3]) -> Result<Self> {
        Self::with_floor(transmission, ambient, EPS_T)
    }

    /// Like [`UnderwaterPriors::new`] with a caller-chosen transmission floor (0 disables it).
    pub fn with_floor(transmission: Planes, ambient: [f64; 3], floor: f64) -> Result<Self> {
        if let Some(v) = transmission
            .data
            .iter()
            .find(|v| !v.is_finite() || **v < floor || **v > 1.0)
        {
            return Err(Error::Domain(format!("transmission {v} outside [{floor}, 1]")));
        }
        check_unit3("ambient light", &ambient)?;
        Ok(UnderwaterPriors { transmission, ambient, alpha: None, depth: None })
    }

    /// Synthesizes `T` from attenuation and distance.
    pub fn from_depth(alpha: [f64; 3], depth: DepthMap, ambient: [f64; 3]) -> Result<Self> {
        let transmission = transmission_from_depth(alpha, &depth)?;
        check_unit3("ambient light", &ambient)?;
        Ok(UnderwaterPriors { transmission, ambient, alpha: Some(alpha), depth: Some(depth) })
    }

    /// Spatially uniform transmission.
    pub fn uniform(height: usize, width: usize, transmission: [f64; 3], ambient: [f64; 3]) -> Result<Self> {
        Self::new(Planes::filled(height, width, transmission), ambient)
    }

    pub fn height(&self) -> usize {
        self.transmission.height
    }

    pub fn width(&self) -> usize {
        self.transmission.width
    }

    /// Crops the transmission (and depth, if any) to a sub-rectangle.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        let depth = match &self.depth {
            Some(d) => {
                let mut data = Vec::with_capacity(height * width);
                for y in top..top + height {
                    data.extend_from_slice(&d.data[y * d.width + left..y * d.width + left + width]);
                }
                Some(DepthMap::new(height, width, data)?)
            }
            None => None,
        };
        Ok(UnderwaterPriors {
            transmission: self.transmission.crop(top, left, height, width)?,
            ambient: self.ambient,
            alpha: self.alpha,
            depth,
        })
    }

    pub fn flip_horizontal(&self) -> Self {
        let depth = self.depth.as_ref().map(|d| DepthMap {
            height: d.height,
            width: d.width,
            data: (0..d.height)
                .flat_map(|y| (0..d.width).rev().map(move |x| (y, x)))
                .map(|(y, x)| d.data[y * d.width + x])
                .collect(),
        });
        UnderwaterPriors {
            transmission: self.transmission.flip_horizontal(),
            ambient: self.ambient,
            alpha: self.alpha,
            depth,
        }
    }
}

fn check_unit3(what: &str, v: &[f64; 3]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite() || !(0.0..=1.0).contains(x)) {
        return Err(Error::Domain(format!("{what} {v:?} outside [0, 1]")));
    }
    Ok(())
}

/// `T[c, y, x] = exp(-alpha[c] * d[y, x])`, floored at [`EPS_T`].
pub fn transmission_from_depth(alpha: [f64; 3], depth: &DepthMap) -> Result<Planes> {
    if let Some(a) = alpha.iter().find(|a| !a.is_finite() || **a < 0.0) {
        return Err(Error::Domain(format!("attenuation {a} is negative or non-finite")));
    }
    if let Some(v) = depth.data.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain(format!("depth {v} is negative or non-finite")));
    }
    let w = depth.width;
    Ok(Planes::from_fn(depth.height, w, |c, y, x| {
        (-alpha[c] * depth.data[y * w + x]).exp().max(EPS_T)
    }))
}

fn check_shape(what: &str, img: &Planes, priors: &UnderwaterPriors) -> Result<()> {
    if !img.same_shape(&priors.transmission) {
        return Err(Error::Dimension(format!(
            "{what} is {}x{} but transmission is {}x{}",
            img.height,
            img.width,
            priors.height(),
            priors.width()
        )));
    }
    Ok(())
}

fn check_floor(priors: &UnderwaterPriors) -> Result<()> {
    match priors.transmission.data.iter().position(|&t| !(t >= EPS_T)) {
        Some(index) => Err(Error::DegenerateTransmission {
            value: priors.transmission.data[index],
            floor: EPS_T,
            index,
        }),
        None => Ok(()),
    }
}

/// `J = I * T + A * (1 - T)` without clamping.
pub fn degrade_unclamped(clear: &Planes, priors: &UnderwaterPriors) -> Result<Planes> {
    check_shape("scene", clear, priors)?;
    let n = clear.height * clear.width;
    let t = &priors.transmission.data;
    let data = clear
        .data
        .iter()
        .zip(t)
        .enumerate()
        .map(|(i, (&v, &t))| {
            let a = priors.ambient[i / n];
            v * t + a * (1.0 - t)
        })
        .collect();
    Ok(Planes { height: clear.height, width: clear.width, data })
}

pub fn degrade(clear: &Image, priors: &UnderwaterPriors) -> Result<Image> {
    Image::clamped(degrade_unclamped(clear.planes(), priors)?)
}

/// `I = (J - A * (1 - T)) / T` without clamping. Fails if any `T < EPS_T`.
pub fn restore_unclamped(captured: &Planes, priors: &UnderwaterPriors) -> Result<Planes> {
    check_shape("captured image", captured, priors)?;
    check_floor(priors)?;
    let n = captured.height * captured.width;
    let data = captured
        .data
        .iter()
        .zip(&priors.transmission.data)
        .enumerate()
        .map(|(i, (&j, &t))| {
            let a = priors.ambient[i / n];
            (j - a * (1.0 - t)) / t
        })
        .collect();
    Ok(Planes { height: captured.height, width: captured.width, data })
}

pub fn restore(captured: &Image, priors: &UnderwaterPriors) -> Result<Image> {
    Image::clamped(restore_unclamped(captured.planes(), priors)?)
}

/// Re-styles an image captured under `dictionary` priors as if captured under `input` priors.
///
/// Evaluated in the expanded single-pass form
/// `(J - A_d (1 - T_d)) / T_d * T_i + A_i (1 - T_i)`.
pub fn style_transfer_unclamped(
    captured: &Planes,
    dictionary: &UnderwaterPriors,
    input: &UnderwaterPriors,
) -> Result<Planes> {
    check_shape("dictionary image", captured, dictionary)?;
    check_shape("dictionary image", captured, input)?;
    check_floor(dictionary)?;
    let n = captured.height * captured.width;
    let td = &dictionary.transmission.data;
    let ti = &input.transmission.data;
    let data = (0..captured.data.len())
        .map(|i| {
            let c = i / n;
            let (ad, ai) = (dictionary.ambient[c], input.ambient[c]);
            (captured.data[i] - ad * (1.0 - td[i])) / td[i] * ti[i] + ai * (1.0 - ti[i])
        })
        .collect();
    Ok(Planes { height: captured.height, width: captured.width, data })
}

pub fn style_transfer(
    captured: &Image,
    dictionary: &UnderwaterPriors,
    input: &UnderwaterPriors,
) -> Result<Image> {
    Image::clamped(style_transfer_unclamped(captured.planes(), dictionary, input)?)
}

/// Sliding-window minimum with a square window clipped at the borders (separable).
fn window_min(values: &[f64], height: usize, width: usize, window: usize) -> Vec<f64> {
    let r = window / 2;
    let mut rows = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            let (x0, x1) = (x.saturating_sub(r), (x + r).min(width - 1));
            rows[y * width + x] = values[y * width + x0..=y * width + x1]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        let (y0, y1) = (y.saturating_sub(r), (y + r).min(height - 1));
        for x in 0..width {
            out[y * width + x] = (y0..=y1).map(|yy| rows[yy * width + x]).fold(f64::INFINITY, f64::min);
        }
    }
    out
}

/// Dark channel: windowed minimum of the per-pixel channel minimum.
pub fn dark_channel(img: &Planes, window: usize) -> Vec<f64> {
    let n = img.height * img.width;
    let mins: Vec<f64> = (0..n)
        .map(|i| img.data[i].min(img.data[n + i]).min(img.data[2 * n + i]))
        .collect();
    window_min(&mins, img.height, img.width, window)
}

/// Dark-channel-prior estimate of ambient light and transmission.
///
/// `A` is the mean colour of the brightest 0.1% of pixels ranked by dark
/// channel (at least one pixel). `T = 1 - windowmin(min_c J_c / A_c)` clamped
/// to `[EPS_T, 1]` and replicated over the three channels.
pub fn estimate_priors(captured: &Image) -> UnderwaterPriors {
    let planes = captured.planes();
    let (h, w) = (planes.height, planes.width);
    let n = h * w;
    let dark = dark_channel(planes, DARK_CHANNEL_WINDOW);

    let take = ((n as f64 * AMBIENT_FRACTION).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort: ties keep raster order, so the estimate is deterministic
    order.sort_by(|&a, &b| dark[b].total_cmp(&dark[a]));
    let mut ambient = [0.0; 3];
    for &i in &order[..take] {
        for (c, a) in ambient.iter_mut().enumerate() {
            *a += planes.data[c * n + i];
        }
    }
    for a in &mut ambient {
        *a /= take as f64;
    }

    let ratio: Vec<f64> = (0..n)
        .map(|i| {
            (0..3)
                .map(|c| planes.data[c * n + i] / ambient[c].max(1e-6))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let t: Vec<f64> = window_min(&ratio, h, w, DARK_CHANNEL_WINDOW)
        .into_iter()
        .map(|m| (1.0 - m).clamp(EPS_T, 1.0))
        .collect();
    let mut data = Vec::with_capacity(3 * n);
    for _ in 0..3 {
        data.extend_from_slice(&t);
    }
    UnderwaterPriors {
        transmission: Planes { height: h, width: w, data },
        ambient,
        alpha: None,
        depth: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(h: usize, w: usize, v: f64) -> Image {
        Image::filled(h, w, [v; 3]).unwrap()
    }

    #[test]
    fn transmission_closed_forms() {
        let d0 = DepthMap::constant(4, 5, 0.0).unwrap();
        let t = transmission_from_depth([0.3; 3], &d0).unwrap();
        assert!(t.data.iter().all(|&v| v == 1.0));

        let d = DepthMap::new(2, 2, vec![0.0, 1.0, 7.0, 100.0]).unwrap();
        let t = transmission_from_depth([0.0; 3], &d).unwrap();
        assert!(t.data.iter().all(|&v| v == 1.0));

        let d2 = DepthMap::constant(3, 3, 2.0).unwrap();
        let t = transmission_from_depth([0.5; 3], &d2).unwrap();
        assert!(t.data.iter().all(|&v| (v - (-1.0f64).exp()).abs() < 1e-12));
        assert!((t.data[0] - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn transmission_is_floored_and_rejects_negatives() {
        let d = DepthMap { height: 1, width: 1, data: vec![1e4] };
        assert_eq!(transmission_from_depth([1.0; 3], &d).unwrap().data[0], EPS_T);
        assert!(matches!(transmission_from_depth([-0.1, 0.0, 0.0], &d), Err(Error::Domain(_))));
        let bad = DepthMap { height: 1, width: 1, data: vec![-1.0] };
        assert!(matches!(transmission_from_depth([0.1; 3], &bad), Err(Error::Domain(_))));
        assert!(DepthMap::new(1, 1, vec![-2.0]).is_err());
    }

    #[test]
    fn degrade_examples() {
        let i = Image::from_fn(3, 4, |c, y, x| ((c + y + x) % 5) as f64 / 4.0).unwrap();
        let p = UnderwaterPriors::uniform(3, 4, [1.0; 3], [0.3, 0.6, 0.9]).unwrap();
        assert_eq!(degrade(&i, &p).unwrap(), i);

        let p0 = UnderwaterPriors::with_floor(Planes::filled(3, 4, [0.0; 3]), [0.2; 3], 0.0).unwrap();
        assert!(degrade(&i, &p0).unwrap().data().iter().all(|&v| (v - 0.2).abs() < 1e-15));

        let p = UnderwaterPriors::uniform(2, 2, [0.5; 3], [0.2; 3]).unwrap();
        let j = degrade(&img(2, 2, 0.8), &p).unwrap();
        assert!(j.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn degrade_rejects_shape_mismatch() {
        let p = UnderwaterPriors::uniform(2, 3, [0.5; 3], [0.2; 3]).unwrap();
        assert!(matches!(degrade(&img(3, 2, 0.5), &p), Err(Error::Dimension(_))));
        assert!(matches!(restore(&img(3, 2, 0.5), &p), Err(Error::Dimension(_))));
    }

    #[test]
    fn restore_examples() {
        let j = Image::from_fn(3, 3, |c, y, x| (c * 9 + y * 3 + x) as f64 / 27.0).unwrap();
        let p = UnderwaterPriors::uniform(3, 3, [1.0; 3], [0.4; 3]).unwrap();
        assert_eq!(restore(&j, &p).unwrap(), j);

        let t = Planes::from_fn(3, 3, |c, y, x| 0.1 + 0.1 * (c + y + x) as f64);
        let p = UnderwaterPriors::new(t, [0.1, 0.5, 0.7]).unwrap();
        let ja = Image::try_from(Planes::from_fn(3, 3, |c, _, _| p.ambient[c])).unwrap();
        let back = restore(&ja, &p).unwrap();
        assert!(back.planes().max_abs_diff(ja.planes()) < 1e-12);
    }

    #[test]
    fn restore_rejects_degenerate_transmission() {
        let p = UnderwaterPriors::with_floor(Planes::filled(2, 2, [0.5, 1e-4, 0.5]), [0.2; 3], 0.0).unwrap();
        assert!(matches!(
            restore(&img(2, 2, 0.5), &p),
            Err(Error::DegenerateTransmission { .. })
        ));
        assert!(matches!(
            style_transfer(&img(2, 2, 0.5), &p, &p),
            Err(Error::DegenerateTransmission { .. })
        ));
    }

    #[test]
    fn style_transfer_scalar_case() {
        let dic = UnderwaterPriors::uniform(1, 1, [0.5; 3], [0.2; 3]).unwrap();
        let inp = UnderwaterPriors::uniform(1, 1, [0.25; 3], [0.6; 3]).unwrap();
        let out = style_transfer(&img(1, 1, 0.5), &dic, &inp).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.65).abs() < 1e-12));
    }

    #[test]
    fn estimate_on_constant_image() {
        let p = estimate_priors(&img(20, 20, 0.37));
        for a in p.ambient {
            assert!((a - 0.37).abs() < 1e-12);
        }
        assert!(p.transmission.data.iter().all(|&t| (EPS_T..=1.0).contains(&t)));
    }

    fn arb_case() -> impl Strategy<Value = (Planes, UnderwaterPriors)> {
        (1usize..6, 1usize..6).prop_flat_map(|(h, w)| {
            let n = 3 * h * w;
            (
                prop::collection::vec(0.0f64..=1.0, n),
                prop::collection::vec(0.1f64..=1.0, n),
                prop::array::uniform3(0.0f64..=1.0),
            )
                .prop_map(move |(i, t, a)| {
                    let p = UnderwaterPriors::new(Planes::new(h, w, t).unwrap(), a).unwrap();
                    (Planes::new(h, w, i).unwrap(), p)
                })
        })
    }

    proptest! {
        #[test]
        fn restore_inverts_degrade((i, p) in arb_case()) {
            let back = restore_unclamped(&degrade_unclamped(&i, &p).unwrap(), &p).unwrap();
            prop_assert!(back.max_abs_diff(&i) < 1e-6);
        }

        #[test]
        fn style_transfer_with_equal_priors_is_identity((j, p) in arb_case()) {
            let out = style_transfer_unclamped(&j, &p, &p).unwrap();
            prop_assert!(out.max_abs_diff(&j) < 1e-6);
        }

        #[test]
        fn style_transfer_matches_composition((j, p) in arb_case(), seed in 0u64..1000) {
            let (h, w) = (j.height, j.width);
            let t2 = Planes::from_fn(h, w, |c, y, x| 0.05 + 0.9 * (((seed as usize + c * 7 + y * 3 + x) % 13) as f64 / 12.0));
            let q = UnderwaterPriors::new(t2, [0.3, 0.5, 0.8]).unwrap();
            let fused = style_transfer_unclamped(&j, &p, &q).unwrap();
            let composed = degrade_unclamped(&restore_unclamped(&j, &p).unwrap(), &q).unwrap();
            prop_assert!(fused.max_abs_diff(&composed) < 1e-6);
        }

        #[test]
        fn degrade_is_monotone((i, p) in arb_case(), bump in 0.0f64..0.5) {
            let brighter = Planes { data: i.data.iter().map(|v| (v + bump).min(1.0)).collect(), ..i.clone() };
            let a = degrade_unclamped(&i, &p).unwrap();
            let b = degrade_unclamped(&brighter, &p).unwrap();
            prop_assert!(a.data.iter().zip(&b.data).all(|(x, y)| x <= y));
        }

        #[test]
        fn transmission_is_antitone(d in 0.0f64..20.0, dd in 0.0f64..5.0, a in 0.0f64..2.0, da in 0.0f64..1.0) {
            let t = |alpha: f64, depth: f64| {
                transmission_from_depth([alpha; 3], &DepthMap::constant(1, 1, depth).unwrap()).unwrap().data[0]
            };
            prop_assert!(t(a, d + dd) <= t(a, d));
            prop_assert!(t(a + da, d) <= t(a, d));
        }

        #[test]
        fn clamped_outputs_stay_in_range((i, p) in arb_case(), a2 in prop::array::uniform3(0.0f64..=1.0)) {
            let img = Image::try_from(i).unwrap();
            let q = UnderwaterPriors::new(p.transmission.clone(), a2).unwrap();
            for out in [
                degrade(&img, &p).unwrap(),
                restore(&img, &p).unwrap(),
                style_transfer(&img, &p, &q).unwrap(),
            ] {
                prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
