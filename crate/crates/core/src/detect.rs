//! Specular reflection detection by relative intensity thresholding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{channel_sum, BinaryMask, ImageU8};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// A pixel is specular when its intensity exceeds this fraction of the
    /// image's maximum intensity.
    pub threshold_factor: f64,
    /// Chebyshev radius by which the detected region is grown.
    pub dilation_radius: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            threshold_factor: 0.85,
            dilation_radius: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_factor > 0.0 && self.threshold_factor <= 1.0) {
            return Err(Error::invalid(format!(
                "threshold_factor must lie in (0, 1], got {}",
                self.threshold_factor
            )));
        }
        Ok(())
    }
}

/// Returns the real mask: 0 on specular pixels, 1 elsewhere.
///
/// Intensities are compared as channel sums, which keeps the comparison
/// `mean > factor * max_mean` free of the division by three.
pub fn detect_sr(img: &ImageU8, cfg: &DetectorConfig) -> Result<BinaryMask> {
    cfg.validate()?;
    let max_sum = img
        .pixels()
        .map(channel_sum)
        .max()
        .ok_or_else(|| Error::invalid("cannot detect reflections in an empty image"))?;
    let threshold = cfg.threshold_factor * f64::from(max_sum);
    let data = img
        .pixels()
        .map(|p| u8::from(f64::from(channel_sum(p)) <= threshold))
        .collect();
    let mask = BinaryMask::new(img.height(), img.width(), data)?;
    Ok(dilate_zeros(&mask, cfg.dilation_radius))
}

/// Grows the zero (specular) region of `mask` by a square structuring
/// element of the given Chebyshev radius. Radius 0 is the identity.
pub fn dilate_sr(mask: &BinaryMask, radius: i64) -> Result<BinaryMask> {
    let radius = usize::try_from(radius)
        .map_err(|_| Error::invalid(format!("dilation radius must be non-negative, got {radius}")))?;
    Ok(dilate_zeros(mask, radius))
}

// Separable running minimum: rows then columns.
fn dilate_zeros(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = mask.dims();
    let src = mask.data();
    let mut rows = vec![1u8; h * w];
    for i in 0..h {
        for j in 0..w {
            let lo = j.saturating_sub(radius);
            let hi = (j + radius).min(w - 1);
            rows[i * w + j] = src[i * w + lo..=i * w + hi].iter().copied().min().unwrap_or(1);
        }
    }
    let mut out = vec![1u8; h * w];
    for i in 0..h {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(h - 1);
        for j in 0..w {
            out[i * w + j] = (lo..=hi).map(|r| rows[r * w + j]).min().unwrap_or(1);
        }
    }
    BinaryMask::new(h, w, out).expect("dimensions preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{apply_mask, max_intensity, pixel_intensity, to_u8, to_unit};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_dilate(mask: &BinaryMask, r: usize) -> BinaryMask {
        let (h, w) = mask.dims();
        BinaryMask::from_fn(h, w, |i, j| {
            let mut keep = true;
            for di in -(r as i64)..=(r as i64) {
                for dj in -(r as i64)..=(r as i64) {
                    let (y, x) = (i as i64 + di, j as i64 + dj);
                    if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w && mask.get(y as usize, x as usize) == 0 {
                        keep = false;
                    }
                }
            }
            keep
        })
        .unwrap()
    }

    #[test]
    fn dilation_radius_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = BinaryMask::from_fn(9, 9, |_, _| rng.random_bool(0.8)).unwrap();
        assert_eq!(dilate_sr(&m, 0).unwrap(), m);
        assert!(dilate_sr(&m, -1).is_err());
    }

    #[test]
    fn dilation_single_pixel() {
        let mut m = BinaryMask::ones(5, 5).unwrap();
        m.set(0, 4, false);
        m.set(2, 2, false);
        let d = dilate_sr(&m, 1).unwrap();
        let expected = BinaryMask::from_fn(5, 5, |i, j| {
            let near_center = i.abs_diff(2) <= 1 && j.abs_diff(2) <= 1;
            let near_corner = i <= 1 && j >= 3;
            !(near_center || near_corner)
        })
        .unwrap();
        assert_eq!(d, expected);
    }

    #[test]
    fn dilation_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let m = BinaryMask::from_fn(13, 11, |_, _| rng.random_bool(0.93)).unwrap();
            for r in 0..4 {
                assert_eq!(dilate_sr(&m, r).unwrap(), brute_force_dilate(&m, r as usize));
            }
        }
    }

    #[test]
    fn bound_for_saturated_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut img = ImageU8::from_fn(16, 16, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap();
        img.set_pixel(3, 3, [255, 255, 255]);
        let mask = detect_sr(&img, &DetectorConfig::default()).unwrap();
        let masked = to_u8(&apply_mask(&to_unit(&img), &mask).unwrap());
        assert!(max_intensity(&masked).unwrap() <= 216.75);
        assert_eq!(mask.get(3, 3), 0);
    }

    #[test]
    fn bound_for_dimmer_image() {
        // Brightest pixel averages 239.666.. like the last image of the evaluation table.
        let mut img = ImageU8::filled(8, 8, [120, 80, 90]).unwrap();
        img.set_pixel(4, 4, [250, 230, 239]);
        img.set_pixel(1, 1, [210, 200, 200]);
        img.set_pixel(1, 2, [200, 200, 211]);
        let cfg = DetectorConfig::default();
        let mask = detect_sr(&img, &cfg).unwrap();
        let masked = to_u8(&apply_mask(&to_unit(&img), &mask).unwrap());
        assert!(max_intensity(&masked).unwrap() <= 203.745);
        assert_eq!(mask.get(4, 4), 0);
        // Channel sums 610 and 611 stay under 0.85 * 719 = 611.15.
        assert_eq!(mask.get(1, 1), 1);
        assert_eq!(mask.get(1, 2), 1);
    }

    #[test]
    fn exact_threshold_is_not_specular() {
        // 0.75 * 600 = 450 exactly in binary floating point.
        let mut img = ImageU8::filled(2, 2, [150, 150, 150]).unwrap();
        img.set_pixel(0, 0, [200, 200, 200]);
        img.set_pixel(0, 1, [151, 150, 150]);
        let mask = detect_sr(&img, &DetectorConfig { threshold_factor: 0.75, dilation_radius: 0 }).unwrap();
        assert_eq!(mask.data(), &[0, 0, 1, 1]);
        let mut img = ImageU8::filled(2, 2, [150, 150, 150]).unwrap();
        img.set_pixel(0, 0, [200, 200, 200]);
        let mask = detect_sr(&img, &DetectorConfig { threshold_factor: 0.75, dilation_radius: 0 }).unwrap();
        assert_eq!(mask.data(), &[0, 1, 1, 1]);
    }

    #[test]
    fn uniform_image_is_entirely_specular() {
        let img = ImageU8::filled(4, 4, [90, 90, 90]).unwrap();
        let mask = detect_sr(&img, &DetectorConfig::default()).unwrap();
        assert_eq!(mask.count_zeros(), 16);
    }

    #[test]
    fn rejects_bad_config() {
        let img = ImageU8::filled(2, 2, [1, 2, 3]).unwrap();
        for f in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(detect_sr(&img, &DetectorConfig { threshold_factor: f, dilation_radius: 0 }).is_err());
        }
    }

    proptest! {
        #[test]
        fn lowering_threshold_never_shrinks(seed in any::<u64>(), a in 0.05f64..1.0, b in 0.05f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = ImageU8::from_fn(8, 8, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap();
            let m_lo = detect_sr(&img, &DetectorConfig { threshold_factor: lo, dilation_radius: 0 }).unwrap();
            let m_hi = detect_sr(&img, &DetectorConfig { threshold_factor: hi, dilation_radius: 0 }).unwrap();
            for (x, y) in m_lo.data().iter().zip(m_hi.data()) {
                prop_assert!(*x <= *y);
            }
        }

        #[test]
        fn brightest_pixel_always_flagged(seed in any::<u64>(), f in 0.05f64..0.999) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = ImageU8::from_fn(6, 7, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap();
            let m = detect_sr(&img, &DetectorConfig { threshold_factor: f, dilation_radius: 0 }).unwrap();
            let max = max_intensity(&img).unwrap();
            for i in 0..6 {
                for j in 0..7 {
                    if max > 0.0 && pixel_intensity(&img, i, j).unwrap() == max {
                        prop_assert_eq!(m.get(i, j), 0);
                    }
                }
            }
        }

        #[test]
        fn dilation_is_monotone(seed in any::<u64>(), r1 in 0i64..4, r2 in 0i64..4) {
            let (r1, r2) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = BinaryMask::from_fn(10, 10, |_, _| rng.random_bool(0.9)).unwrap();
            let a = dilate_sr(&m, r1).unwrap();
            let b = dilate_sr(&m, r2).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!(*y <= *x);
            }
        }
    }
}
