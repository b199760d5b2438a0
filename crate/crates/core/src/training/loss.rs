//! Rate-distortion objective `L = lambda * MSE + bits / N`.

use crate::error::{Error, Result};
use crate::image::Planes;
use crate::nn::{Graph, Var};

fn check(x: &Planes, x_hat: &Planes) -> Result<()> {
    if !x.same_shape(x_hat) {
        return Err(Error::Dimension(format!(
            "reconstruction {}x{} against original {}x{}",
            x_hat.height, x_hat.width, x.height, x.width
        )));
    }
    Ok(())
}

pub fn mse(x: &Planes, x_hat: &Planes) -> Result<f64> {
    check(x, x_hat)?;
    Ok(x.data.iter().zip(&x_hat.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.data.len() as f64)
}

/// Loss for one image; `n_pixels` normalises the rate.
pub fn rd_loss(x: &Planes, x_hat: &Planes, rate_bits: f64, lambda: f64, n_pixels: usize) -> Result<f64> {
    if n_pixels == 0 {
        return Err(Error::Domain("rate of a zero-area image".into()));
    }
    Ok(lambda * mse(x, x_hat)? + rate_bits / n_pixels as f64)
}

/// Closed-form `dL/dx_hat = 2 * lambda * (x_hat - x) / n`, `n` the element count of the MSE.
pub fn rd_loss_grad(x: &Planes, x_hat: &Planes, lambda: f64) -> Result<Vec<f64>> {
    check(x, x_hat)?;
    let n = x.data.len() as f64;
    Ok(x.data.iter().zip(&x_hat.data).map(|(a, b)| 2.0 * lambda * (b - a) / n).collect())
}

/// Graph form; returns `(loss, mse)`.
pub fn rd_loss_var(g: &mut Graph, x: Var, x_hat: Var, bits: Var, lambda: f64, n_pixels: usize) -> (Var, Var) {
    let d = g.sub(x_hat, x);
    let sq = g.square(d);
    let mse = g.mean(sq);
    let dist = g.scale(mse, lambda);
    let rate = g.scale(bits, 1.0 / n_pixels as f64);
    (g.add(dist, rate), mse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn worked_values() {
        let x = Planes::filled(10, 10, [0.5, 0.5, 0.5]);
        let shifted = Planes::filled(10, 10, [0.6, 0.6, 0.6]);
        // MSE 0.01, 5 bits over 100 pixels
        let l = rd_loss(&x, &shifted, 5.0, 128.0, 100).unwrap();
        assert!((l - 1.33).abs() < 1e-9);
        assert!((rd_loss(&x, &x, 5.0, 128.0, 100).unwrap() - 0.05).abs() < 1e-15);
        assert!((rd_loss(&x, &shifted, 5.0, 0.0, 100).unwrap() - 0.05).abs() < 1e-15);
        assert!(rd_loss(&x, &Planes::filled(9, 10, [0.0; 3]), 1.0, 1.0, 90).is_err());
    }

    #[test]
    fn graph_gradient_equals_closed_form() {
        let x = Planes::from_fn(4, 4, |c, y, xx| ((c + 2 * y + 3 * xx) % 5) as f64 / 5.0);
        let xh = Planes::from_fn(4, 4, |c, y, xx| ((2 * c + y + xx) % 7) as f64 / 7.0);
        let mut g = Graph::new();
        let xv = g.constant(Tensor::from(&x));
        let hv = g.variable(Tensor::from(&xh));
        let bits = g.constant(Tensor::scalar(12.0));
        let (l, _) = rd_loss_var(&mut g, xv, hv, bits, 64.0, 16);
        assert!((g.value(l).item() - rd_loss(&x, &xh, 12.0, 64.0, 16).unwrap()).abs() < 1e-12);
        let grads = g.backward(l);
        let closed = rd_loss_grad(&x, &xh, 64.0).unwrap();
        for (a, b) in grads.wrt(hv).unwrap().data().iter().zip(&closed) {
            assert!((a - b).abs() <= 1e-15 * (1.0 + b.abs()));
        }
    }
}
