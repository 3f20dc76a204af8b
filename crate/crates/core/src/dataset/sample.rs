use super::{validate_hidden_mask, CorpusImage};
use crate::error::Result;
use crate::imaging::{apply_mask, to_unit, BinaryMask, ImageF};

/// One training tuple: the doubly masked input and its singly masked target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image_id: String,
    /// `I''`: the target with hidden regions blacked out.
    pub input_image: ImageF,
    /// Real mask `M_r`; its zeros are black pixels to keep black.
    pub retain_mask: BinaryMask,
    /// Hidden mask `M_h`; its zeros are black pixels to restore.
    pub restore_mask: BinaryMask,
    /// `I'`: the image with specular pixels blacked out.
    pub target_image: ImageF,
}

impl Sample {
    pub fn dims(&self) -> (usize, usize) {
        self.target_image.dims()
    }
}

pub fn build_sample(img: &CorpusImage, hidden: &BinaryMask) -> Result<Sample> {
    validate_hidden_mask(hidden, img)?;
    let target_image = apply_mask(&to_unit(&img.image), &img.real_mask)?;
    let input_image = apply_mask(&target_image, hidden)?;
    Ok(Sample {
        image_id: img.image_id.clone(),
        input_image,
        retain_mask: img.real_mask.clone(),
        restore_mask: hidden.clone(),
        target_image,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_hidden_mask, synth_corpus, HiddenRegionPolicy};
    use crate::error::Error;
    use crate::imaging::ImageU8;

    #[test]
    fn no_masks_means_identity() {
        let img = CorpusImage::new(
            "a",
            "p",
            ImageU8::filled(4, 4, [10, 20, 30]).unwrap(),
            BinaryMask::ones(4, 4).unwrap(),
        )
        .unwrap();
        let s = build_sample(&img, &BinaryMask::ones(4, 4).unwrap()).unwrap();
        assert_eq!(s.input_image, to_unit(&img.image));
        assert_eq!(s.target_image, s.input_image);
    }

    #[test]
    fn invariants_hold_elementwise() {
        for img in synth_corpus(5, (32, 32), 8).unwrap() {
            let hidden = generate_hidden_mask(&img, &HiddenRegionPolicy::default()).unwrap();
            let s = build_sample(&img, &hidden).unwrap();
            let unit = to_unit(&img.image);
            for i in 0..32 {
                for j in 0..32 {
                    let (r, h) = (img.real_mask.get(i, j), hidden.get(i, j));
                    assert!(h == 1 || r == 1);
                    for k in 0..3 {
                        let t = s.target_image.get(i, j, k);
                        assert_eq!(t, unit.get(i, j, k) * f64::from(r));
                        assert_eq!(s.input_image.get(i, j, k), t * f64::from(h));
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_mask_over_sr() {
        let mut real = BinaryMask::ones(4, 4).unwrap();
        real.set(1, 1, false);
        let img = CorpusImage::new("a", "p", ImageU8::filled(4, 4, [1, 1, 1]).unwrap(), real.clone()).unwrap();
        assert!(matches!(build_sample(&img, &real), Err(Error::HiddenOverlapsSr { count: 1 })));
    }
}
