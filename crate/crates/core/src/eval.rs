//! Per-image quality metrics and reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::dataset::{CorpusImage, Sample};
use crate::detect::{detect_sr, DetectorConfig};
use crate::error::{Error, Result};
use crate::imaging::{channel_histogram, check_same_dims, max_intensity, max_intensity_where, to_u8, Channel, Histogram, ImageU8};
use crate::net::Model;
use crate::restore::{restore_hidden, restore_sr};
use crate::train::mse_loss;

/// Per-channel absolute error, in 0..=255 units.
pub fn abs_errors<'a>(expected: &'a ImageU8, restored: &'a ImageU8) -> Result<impl Iterator<Item = [u8; 3]> + 'a> {
    check_same_dims(expected.dims(), restored.dims())?;
    Ok(expected
        .data()
        .chunks_exact(3)
        .zip(restored.data().chunks_exact(3))
        .map(|(a, b)| [a[0].abs_diff(b[0]), a[1].abs_diff(b[1]), a[2].abs_diff(b[2])]))
}

/// Supremum norm of the difference, per channel `(e_R, e_G, e_B)`.
pub fn sup_norm_errors(expected: &ImageU8, restored: &ImageU8) -> Result<[u8; 3]> {
    Ok(abs_errors(expected, restored)?.fold([0; 3], |acc, e| {
        [acc[0].max(e[0]), acc[1].max(e[1]), acc[2].max(e[2])]
    }))
}

/// Error bins given by inclusive upper bounds: with `[25, 50, 255]` the bins
/// are `[0, 25]`, `(25, 50]` and `(50, 255]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRanges {
    pub upper_bounds: Vec<u8>,
}

impl Default for ErrorRanges {
    fn default() -> Self {
        Self {
            upper_bounds: vec![25, 50, 255],
        }
    }
}

impl ErrorRanges {
    pub fn validate(&self) -> Result<()> {
        let b = &self.upper_bounds;
        if b.is_empty() || b.windows(2).any(|w| w[0] >= w[1]) || *b.last().expect("non-empty") != 255 {
            return Err(Error::invalid(format!(
                "error range bounds must increase strictly and end at 255, got {b:?}"
            )));
        }
        Ok(())
    }

    pub fn bin(&self, err: u8) -> usize {
        self.upper_bounds.iter().position(|&u| err <= u).expect("last bound is 255")
    }

    pub fn labels(&self) -> Vec<String> {
        let mut lo = None;
        self.upper_bounds
            .iter()
            .map(|&u| {
                let label = match lo {
                    None => format!("[0,{u}]"),
                    Some(l) => format!("({l},{u}]"),
                };
                lo = Some(u);
                label
            })
            .collect()
    }
}

/// `pcts[channel][bin]`: percentage of pixels whose error falls in each bin.
pub fn error_range_table(expected: &ImageU8, restored: &ImageU8, ranges: &ErrorRanges) -> Result<Vec<Vec<f64>>> {
    ranges.validate()?;
    let mut counts = vec![vec![0u64; ranges.upper_bounds.len()]; 3];
    let mut total = 0u64;
    for e in abs_errors(expected, restored)? {
        for k in 0..3 {
            counts[k][ranges.bin(e[k])] += 1;
        }
        total += 1;
    }
    Ok(counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| 100.0 * c as f64 / total as f64).collect())
        .collect())
}

/// Rounds percentages to `decimals` places so they still sum to exactly
/// 100 (largest remainder method).
pub fn round_preserving_sum(pcts: &[f64], decimals: u32) -> Vec<f64> {
    let scale = 10f64.powi(decimals as i32);
    let units = (100.0 * scale).round() as i64;
    let raw: Vec<f64> = pcts.iter().map(|p| p * scale).collect();
    let mut floors: Vec<i64> = raw.iter().map(|v| v.floor() as i64).collect();
    let short = units - floors.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
    for &i in order.iter().take(short.max(0) as usize) {
        floors[i] += 1;
    }
    floors.into_iter().map(|v| v as f64 / scale).collect()
}

pub fn abs_error_histogram(expected: &ImageU8, restored: &ImageU8, channel: Channel) -> Result<Histogram> {
    let k = channel.index();
    Ok(Histogram::from_values(channel, abs_errors(expected, restored)?.map(|e| e[k])))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrVerdict {
    pub int_max_i: f64,
    pub int_max_prime: f64,
    pub int_max_r: f64,
    pub removed: bool,
}

impl SrVerdict {
    /// Reflections count as removed when the restored image is darker than
    /// the brightest non-specular pixel of the original.
    pub fn from_intensities(int_max_i: f64, int_max_prime: f64, int_max_r: f64) -> Self {
        Self {
            int_max_i,
            int_max_prime,
            int_max_r,
            removed: int_max_prime > int_max_r,
        }
    }
}

/// Compares the restored image with the original. The stored real mask must
/// be the one `cfg` produces for this image.
pub fn sr_removal_verdict(img: &CorpusImage, restored: &ImageU8, cfg: &DetectorConfig) -> Result<SrVerdict> {
    check_same_dims(img.dims(), restored.dims())?;
    if detect_sr(&img.image, cfg)? != img.real_mask {
        return Err(Error::invalid(format!(
            "{}: real mask does not match the detector configuration",
            img.image_id
        )));
    }
    let int_max_prime = max_intensity_where(&img.image, &img.real_mask)?
        .ok_or_else(|| Error::invalid(format!("{}: every pixel is specular", img.image_id)))?;
    Ok(SrVerdict::from_intensities(
        max_intensity(&img.image)?,
        int_max_prime,
        max_intensity(restored)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramReport {
    pub csv: PathBuf,
    pub plot: PathBuf,
}

const PANEL_H: u32 = 120;
const EXPECTED_COLOR: Rgb<u8> = Rgb([40, 90, 200]);
const RESTORED_COLOR: Rgb<u8> = Rgb([230, 120, 20]);

/// Writes `histograms.csv` (one row per intensity, expected and restored
/// counts per channel) and `histograms.png` (one overlay panel per channel)
/// into `out`.
pub fn histogram_overlay_report(expected: &ImageU8, restored: &ImageU8, out: impl AsRef<Path>) -> Result<HistogramReport> {
    check_same_dims(expected.dims(), restored.dims())?;
    let out = out.as_ref();
    fs::create_dir_all(out)?;
    let pairs: Vec<(Histogram, Histogram)> = Channel::ALL
        .iter()
        .map(|&c| (channel_histogram(expected, c), channel_histogram(restored, c)))
        .collect();

    let mut csv = String::from("intensity,expected_r,restored_r,expected_g,restored_g,expected_b,restored_b\n");
    for v in 0..256 {
        let _ = write!(csv, "{v}");
        for (e, r) in &pairs {
            let _ = write!(csv, ",{},{}", e.counts[v], r.counts[v]);
        }
        csv.push('\n');
    }
    let csv_path = out.join("histograms.csv");
    fs::write(&csv_path, csv)?;

    let mut img = RgbImage::from_pixel(256, PANEL_H * 3, Rgb([255, 255, 255]));
    for (p, (e, r)) in pairs.iter().enumerate() {
        let top = p as u32 * PANEL_H;
        let peak = e.counts.iter().chain(&r.counts).copied().max().unwrap_or(0).max(1) as f64;
        for x in 0..256u32 {
            img.put_pixel(x, top + PANEL_H - 1, Rgb([0, 0, 0]));
            for (hist, color) in [(e, EXPECTED_COLOR), (r, RESTORED_COLOR)] {
                let height = (hist.counts[x as usize] as f64 / peak * f64::from(PANEL_H - 10)).round() as u32;
                if hist.counts[x as usize] > 0 {
                    img.put_pixel(x, top + PANEL_H - 2 - height.min(PANEL_H - 2), color);
                }
            }
        }
    }
    let plot_path = out.join("histograms.png");
    img.save(&plot_path)?;
    Ok(HistogramReport {
        csv: csv_path,
        plot: plot_path,
    })
}

/// Metrics of one test image: hidden-region restoration against `I'` and
/// specular-region restoration against the original.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub image_id: String,
    pub sup_errors: [u8; 3],
    /// `range_pcts[channel][bin]`.
    pub range_pcts: Vec<Vec<f64>>,
    pub range_labels: Vec<String>,
    pub int_max_i: f64,
    pub int_max_prime: f64,
    pub int_max_r: f64,
    pub sr_removed: bool,
    pub mse: f64,
}

/// Runs both restorations for one image. `sample` must be built from `img`.
pub fn evaluate_image(
    model: &Model,
    img: &CorpusImage,
    sample: &Sample,
    cfg: &DetectorConfig,
    ranges: &ErrorRanges,
) -> Result<EvalReport> {
    if sample.image_id != img.image_id {
        return Err(Error::invalid(format!(
            "sample {} does not belong to image {}",
            sample.image_id, img.image_id
        )));
    }
    let hidden = restore_hidden(model, sample)?;
    let expected = to_u8(&sample.target_image);
    let restored = to_u8(&hidden);
    let sr = to_u8(&restore_sr(model, img)?);
    let verdict = sr_removal_verdict(img, &sr, cfg)?;
    Ok(EvalReport {
        image_id: img.image_id.clone(),
        sup_errors: sup_norm_errors(&expected, &restored)?,
        range_pcts: error_range_table(&expected, &restored, ranges)?,
        range_labels: ranges.labels(),
        int_max_i: verdict.int_max_i,
        int_max_prime: verdict.int_max_prime,
        int_max_r: verdict.int_max_r,
        sr_removed: verdict.removed,
        mse: mse_loss(&hidden, &sample.target_image)?,
    })
}
