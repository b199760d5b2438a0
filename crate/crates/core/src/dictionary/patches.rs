use crate::error::{Error, Result};
use crate::image::Image;

/// Position of a patch: source image, patch row and patch column (in patch units).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourceId {
    pub image: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Debug, Default)]
pub struct PatchSet {
    pub patches: Vec<Image>,
    pub sources: Vec<SourceId>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn extend(&mut self, other: PatchSet) {
        self.patches.extend(other.patches);
        self.sources.extend(other.sources);
    }
}

/// Non-overlapping `size x size` tiles of the top-left region; remainders are dropped.
pub fn crop_patches(image: &Image, size: usize, image_id: usize) -> Result<PatchSet> {
    let (h, w) = (image.height(), image.width());
    if size == 0 || h < size || w < size {
        return Err(Error::TooSmall { height: h, width: w, size });
    }
    let mut set = PatchSet::default();
    for row in 0..h / size {
        for col in 0..w / size {
            set.patches.push(image.crop(row * size, col * size, size, size)?);
            set.sources.push(SourceId { image: image_id, row, col });
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiling_counts() {
        let img = |h, w| Image::from_fn(h, w, |c, y, x| ((c + y * 3 + x * 5) % 11) as f64 / 10.0).unwrap();
        assert_eq!(crop_patches(&img(256, 256), 128, 0).unwrap().len(), 4);
        let one = crop_patches(&img(128, 128), 128, 0).unwrap();
        assert_eq!(one.patches[0], img(128, 128));
        let p = crop_patches(&img(200, 300), 128, 3).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.sources[1], SourceId { image: 3, row: 0, col: 1 });
        assert!(matches!(crop_patches(&img(100, 300), 128, 0), Err(Error::TooSmall { .. })));
    }
}
