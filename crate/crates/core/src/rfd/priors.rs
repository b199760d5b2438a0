//! Input priors as the decoder sees them: ambient light rounded to f32 and a
//! transmission map averaged over 16x16 blocks and quantised to 8 bits.

use crate::bitstream::container::PRIOR_GRID_STRIDE;
use crate::dictionary::EntryPriors;
use crate::error::{Error, Result};
use crate::image::Planes;
use crate::nn::Tensor;
use crate::physical::UnderwaterPriors;

use super::usnb::PriorMaps;

#[derive(Clone, Debug, PartialEq)]
pub struct InputPriors {
    pub ambient: [f32; 3],
    /// `[3, gh, gw]` transmission levels, `T = level / 255`.
    pub levels: Vec<u8>,
    pub grid_height: usize,
    pub grid_width: usize,
}

impl InputPriors {
    /// Pools and quantises full-resolution priors (sides multiples of the grid stride).
    pub fn from_priors(p: &UnderwaterPriors) -> Self {
        let pooled = p.transmission.avg_pool(PRIOR_GRID_STRIDE);
        let levels = pooled.data.iter().map(|&t| (t * 255.0).round().clamp(1.0, 255.0) as u8).collect();
        InputPriors {
            ambient: p.ambient.map(|a| a as f32),
            levels,
            grid_height: pooled.height,
            grid_width: pooled.width,
        }
    }

    pub fn from_levels(ambient: [f32; 3], levels: Vec<u8>, grid_height: usize, grid_width: usize) -> Result<Self> {
        if levels.len() != 3 * grid_height * grid_width {
            return Err(Error::Dimension(format!("{} levels for a {grid_height}x{grid_width} grid", levels.len())));
        }
        Ok(InputPriors { ambient, levels, grid_height, grid_width })
    }

    pub fn grid(&self) -> Planes {
        Planes {
            height: self.grid_height,
            width: self.grid_width,
            data: self.levels.iter().map(|&q| q as f64 / 255.0).collect(),
        }
    }

    /// Priors on the `height x width` grid of `scale`.
    pub fn maps_at(&self, scale: usize, height: usize, width: usize) -> Result<PriorMaps> {
        let factor = PRIOR_GRID_STRIDE >> scale;
        let up = self.grid().upsample_nearest(factor.max(1));
        if up.height < height || up.width < width {
            return Err(Error::Dimension(format!("prior grid too small for {height}x{width} at scale {scale}")));
        }
        Ok(PriorMaps {
            transmission: Tensor::from(&up.crop(0, 0, height, width)?),
            ambient: self.ambient.map(|a| a as f64),
        })
    }
}

/// Dictionary-side priors of an entry, tiled like the entry itself.
pub fn entry_maps(p: &EntryPriors, height: usize, width: usize) -> PriorMaps {
    PriorMaps { transmission: Tensor::from(&p.transmission).tile_to(height, width), ambient: p.ambient }
}
