//! Training samples with cached priors and a seed-ordered augmentation stream.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::backbone::pad_to_stride;
use crate::dictionary::list_images;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::Tensor;
use crate::physical::{estimate_priors, UnderwaterPriors};
use crate::rfd::InputPriors;

/// An image padded to the latent stride and its priors, estimated once.
#[derive(Clone, Debug)]
pub struct Sample {
    pub image: Image,
    pub priors: UnderwaterPriors,
}

impl Sample {
    pub fn new(image: &Image) -> Result<Self> {
        let (padded, _, _) = pad_to_stride(image.planes());
        let image = Image::clamped(padded)?;
        let priors = estimate_priors(&image);
        Ok(Sample { image, priors })
    }

    /// Input tensor and decoder-side priors of a crop, optionally mirrored.
    pub fn view(&self, top: usize, left: usize, height: usize, width: usize, flip: bool) -> Result<(Tensor, InputPriors)> {
        let mut img = self.image.crop(top, left, height, width)?;
        let mut pri = self.priors.crop(top, left, height, width)?;
        if flip {
            img = img.flip_horizontal();
            pri = pri.flip_horizontal();
        }
        Ok((Tensor::from(img.planes()), InputPriors::from_priors(&pri)))
    }

    pub fn full(&self) -> Result<(Tensor, InputPriors)> {
        self.view(0, 0, self.image.height(), self.image.width(), false)
    }
}

#[derive(Clone, Debug)]
pub struct TrainData {
    pub samples: Vec<Sample>,
}

impl TrainData {
    pub fn from_images(images: &[Image]) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Configuration("empty training set".into()));
        }
        Ok(TrainData { samples: images.iter().map(Sample::new).collect::<Result<_>>()? })
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let images = list_images(dir.as_ref())?.iter().map(Image::load).collect::<Result<Vec<_>>>()?;
        TrainData::from_images(&images)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Endless stream of `(sample, crop, flip)` draws: epochs are seeded permutations.
pub struct Sampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
    crop: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Draw {
    pub sample: usize,
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
    pub flip: bool,
}

impl Sampler {
    pub fn new(n: usize, crop: usize, seed: u64) -> Self {
        Sampler { rng: ChaCha8Rng::seed_from_u64(seed), order: (0..n).collect(), pos: n, crop }
    }

    pub fn next(&mut self, data: &TrainData) -> Draw {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let sample = self.order[self.pos];
        self.pos += 1;
        let img = &data.samples[sample].image;
        let (h, w) = (self.crop.min(img.height()), self.crop.min(img.width()));
        let top = self.rng.random_range(0..=img.height() - h);
        let left = self.rng.random_range(0..=img.width() - w);
        let flip = self.rng.random_bool(0.5);
        Draw { sample, top, left, height: h, width: w, flip }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::underwater_set;

    #[test]
    fn sampler_is_seeded_and_covers_epochs() {
        let imgs = underwater_set(2, 3, 1, 40, 70).unwrap();
        let data = TrainData::from_images(&imgs).unwrap();
        assert_eq!((data.samples[0].image.height(), data.samples[0].image.width()), (48, 80));
        let draws = |seed| {
            let mut s = Sampler::new(3, 32, seed);
            (0..6).map(|_| s.next(&data)).collect::<Vec<_>>()
        };
        let a = draws(5);
        assert_eq!(a, draws(5));
        let mut first: Vec<_> = a[..3].iter().map(|d| d.sample).collect();
        first.sort();
        assert_eq!(first, vec![0, 1, 2]);
        for d in &a {
            assert_eq!((d.height, d.width), (32, 32));
            assert!(d.top + 32 <= 48 && d.left + 32 <= 80);
            let (x, p) = data.samples[d.sample].view(d.top, d.left, d.height, d.width, d.flip).unwrap();
            assert_eq!(x.shape(), &[3, 32, 32]);
            assert_eq!((p.grid_height, p.grid_width), (2, 2));
        }
        assert!(TrainData::from_images(&[]).is_err());
    }
}
