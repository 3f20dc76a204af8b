//! Hidden-region masks: deliberately blacked-out, SR-free areas whose ground
//! truth is known.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusImage;
use crate::error::{Error, Result};
use crate::imaging::{channel_sum, BinaryMask};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeFamily {
    Ellipse,
    RandomBlob,
    BrushStroke,
}

/// How hidden regions are drawn for one image.
///
/// Each region covers a pixel count drawn uniformly from
/// `region_area_fraction` times the image area; regions never overlap each
/// other or specular pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HiddenRegionPolicy {
    pub num_regions: (usize, usize),
    pub region_area_fraction: (f64, f64),
    /// Each region draws its shape uniformly from this list.
    pub shape_family: Vec<ShapeFamily>,
    /// Probability that a region is centred on a high-gradient pixel rather
    /// than a uniformly random one.
    pub targeted_fraction: f64,
    pub rng_seed: u64,
}

impl Default for HiddenRegionPolicy {
    fn default() -> Self {
        Self {
            num_regions: (1, 4),
            region_area_fraction: (0.002, 0.05),
            shape_family: vec![ShapeFamily::Ellipse, ShapeFamily::RandomBlob, ShapeFamily::BrushStroke],
            targeted_fraction: 0.5,
            rng_seed: 0,
        }
    }
}

impl HiddenRegionPolicy {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.region_area_fraction;
        if !(0.0..1.0).contains(&lo) || !(0.0..1.0).contains(&hi) || lo > hi {
            return Err(Error::invalid(format!(
                "region_area_fraction must satisfy 0 <= min <= max < 1, got ({lo}, {hi})"
            )));
        }
        if self.num_regions.0 > self.num_regions.1 {
            return Err(Error::invalid(format!(
                "num_regions min {} exceeds max {}",
                self.num_regions.0, self.num_regions.1
            )));
        }
        if self.shape_family.is_empty() {
            return Err(Error::invalid("shape_family must list at least one shape"));
        }
        if !(0.0..=1.0).contains(&self.targeted_fraction) {
            return Err(Error::invalid("targeted_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Pixel-count bounds of a single region for an image of `area` pixels.
    pub fn region_pixel_bounds(&self, area: usize) -> (usize, usize) {
        let (lo, hi) = self.region_area_fraction;
        let lo_px = (lo * area as f64).ceil() as usize;
        let hi_px = ((hi * area as f64).floor() as usize).max(lo_px);
        (lo_px, hi_px)
    }
}

struct Canvas<'a> {
    height: usize,
    width: usize,
    /// true where a pixel may still be hidden
    available: Vec<bool>,
    gradient: &'a [f64],
}

impl Canvas<'_> {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + j
    }

    fn in_bounds(&self, y: i64, x: i64) -> bool {
        y >= 0 && x >= 0 && (y as usize) < self.height && (x as usize) < self.width
    }

    fn pick_center(&self, rng: &mut ChaCha8Rng, targeted: bool) -> Option<usize> {
        let weight = |p: usize| -> f64 {
            if !self.available[p] {
                0.0
            } else if targeted {
                self.gradient[p] + 1e-3
            } else {
                1.0
            }
        };
        let total: f64 = (0..self.available.len()).map(weight).sum();
        if total <= 0.0 {
            return None;
        }
        let mut r = rng.random_range(0.0..total);
        let mut last = None;
        for p in 0..self.available.len() {
            let w = weight(p);
            if w > 0.0 {
                last = Some(p);
                if r < w {
                    return Some(p);
                }
                r -= w;
            }
        }
        last
    }

    fn claim(&mut self, p: usize, region: &mut Vec<usize>) {
        if self.available[p] {
            self.available[p] = false;
            region.push(p);
        }
    }

    /// Claims available pixels inside a disc, nearest first.
    fn stamp(&mut self, cy: f64, cx: f64, radius: f64, target: usize, region: &mut Vec<usize>) {
        let r = radius.ceil() as i64;
        let mut cand = Vec::new();
        for y in (cy.floor() as i64 - r)..=(cy.floor() as i64 + r) {
            for x in (cx.floor() as i64 - r)..=(cx.floor() as i64 + r) {
                if !self.in_bounds(y, x) {
                    continue;
                }
                let d2 = (y as f64 + 0.5 - cy).powi(2) + (x as f64 + 0.5 - cx).powi(2);
                let p = self.idx(y as usize, x as usize);
                if d2 <= radius * radius && self.available[p] {
                    cand.push((d2, p));
                }
            }
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, p) in cand {
            if region.len() >= target {
                break;
            }
            self.claim(p, region);
        }
    }

    fn ellipse(&mut self, rng: &mut ChaCha8Rng, center: usize, target: usize, region: &mut Vec<usize>) {
        let aspect = rng.random_range(1.0..2.5);
        let a = (target as f64 * aspect / PI).sqrt().max(0.5);
        let b = a / aspect;
        let angle = rng.random_range(0.0..PI);
        let (ca, sa) = (angle.cos(), angle.sin());
        let (cy, cx) = ((center / self.width) as f64 + 0.5, (center % self.width) as f64 + 0.5);
        let reach = (3.0 * a).ceil() as i64 + 1;
        let mut cand = Vec::new();
        for y in (cy as i64 - reach)..=(cy as i64 + reach) {
            for x in (cx as i64 - reach)..=(cx as i64 + reach) {
                if !self.in_bounds(y, x) {
                    continue;
                }
                let p = self.idx(y as usize, x as usize);
                if !self.available[p] {
                    continue;
                }
                let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
                let u = (dx * ca + dy * sa) / a;
                let v = (-dx * sa + dy * ca) / b;
                cand.push((u * u + v * v, p));
            }
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, p) in cand.into_iter().take(target) {
            self.claim(p, region);
        }
    }

    fn random_blob(&mut self, rng: &mut ChaCha8Rng, center: usize, target: usize, region: &mut Vec<usize>) {
        let radius = ((target as f64).sqrt() / 4.0).max(1.0);
        let (mut y, mut x) = ((center / self.width) as f64 + 0.5, (center % self.width) as f64 + 0.5);
        for _ in 0..(50 * target) {
            if region.len() >= target {
                break;
            }
            self.stamp(y, x, radius, target, region);
            let theta = rng.random_range(0.0..2.0 * PI);
            y = (y + theta.sin() * radius * 0.7).clamp(0.5, self.height as f64 - 0.5);
            x = (x + theta.cos() * radius * 0.7).clamp(0.5, self.width as f64 - 0.5);
        }
    }

    fn brush_stroke(&mut self, rng: &mut ChaCha8Rng, center: usize, target: usize, region: &mut Vec<usize>) {
        let scale = (self.height.min(self.width) as f64 / 64.0).max(1.0);
        let radius = rng.random_range(1.0..2.5) * scale;
        let mut heading = rng.random_range(0.0..2.0 * PI);
        let (mut y, mut x) = ((center / self.width) as f64 + 0.5, (center % self.width) as f64 + 0.5);
        for _ in 0..(50 * target) {
            if region.len() >= target {
                break;
            }
            self.stamp(y, x, radius, target, region);
            heading += rng.random_range(-0.35..0.35);
            let (ny, nx) = (y + heading.sin(), x + heading.cos());
            if ny < 0.5 || nx < 0.5 || ny > self.height as f64 - 0.5 || nx > self.width as f64 - 0.5 {
                heading += PI;
            } else {
                y = ny;
                x = nx;
            }
        }
    }

    /// Grows the region breadth-first until it has `target` pixels, reseeding
    /// at a random available pixel when the frontier is exhausted.
    fn top_up(&mut self, rng: &mut ChaCha8Rng, target: usize, region: &mut Vec<usize>) {
        let mut queue: VecDeque<usize> = region.iter().copied().collect();
        while region.len() < target {
            let Some(p) = queue.pop_front() else {
                match self.pick_center(rng, false) {
                    Some(seed) => {
                        self.claim(seed, region);
                        queue.push_back(seed);
                        continue;
                    }
                    None => break,
                }
            };
            let (i, j) = ((p / self.width) as i64, (p % self.width) as i64);
            for (dy, dx) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                if region.len() >= target {
                    break;
                }
                if self.in_bounds(i + dy, j + dx) {
                    let q = self.idx((i + dy) as usize, (j + dx) as usize);
                    if self.available[q] {
                        self.claim(q, region);
                        queue.push_back(q);
                    }
                }
            }
        }
    }
}

fn gradient_magnitude(img: &CorpusImage) -> Vec<f64> {
    let (h, w) = img.dims();
    let s = |i: usize, j: usize| f64::from(channel_sum(img.image.pixel(i, j)));
    let mut g = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let gx = s(i, (j + 1).min(w - 1)) - s(i, j.saturating_sub(1));
            let gy = s((i + 1).min(h - 1), j) - s(i.saturating_sub(1), j);
            g[i * w + j] = (gx * gx + gy * gy).sqrt();
        }
    }
    g
}

/// Draws a hidden mask for `img`. Deterministic in `(policy.rng_seed,
/// img.image_id)`.
pub fn generate_hidden_mask(img: &CorpusImage, policy: &HiddenRegionPolicy) -> Result<BinaryMask> {
    generate_hidden_mask_variant(img, policy, 0)
}

/// Like [`generate_hidden_mask`] but drawing from an independent stream per
/// `variant`, for callers that want several masks per image.
pub fn generate_hidden_mask_variant(img: &CorpusImage, policy: &HiddenRegionPolicy, variant: u64) -> Result<BinaryMask> {
    policy.validate()?;
    let (h, w) = img.dims();
    let available: Vec<bool> = img.real_mask.data().iter().map(|&m| m == 1).collect();
    if !available.iter().any(|&a| a) {
        return Err(Error::Generation(format!(
            "image {} is entirely covered by specular reflections",
            img.image_id
        )));
    }
    let mut rng = rng::stream(policy.rng_seed, &format!("hidden/{}/{variant}", img.image_id));
    let (lo, hi) = policy.region_pixel_bounds(h * w);
    let gradient = gradient_magnitude(img);
    let mut canvas = Canvas {
        height: h,
        width: w,
        available,
        gradient: &gradient,
    };
    let regions = rng.random_range(policy.num_regions.0..=policy.num_regions.1);
    for _ in 0..regions {
        let target = rng.random_range(lo..=hi);
        if target == 0 {
            continue;
        }
        let targeted = rng.random_bool(policy.targeted_fraction);
        let Some(center) = canvas.pick_center(&mut rng, targeted) else {
            break;
        };
        let family = *policy.shape_family.choose(&mut rng).expect("validated non-empty");
        let mut region = Vec::with_capacity(target);
        match family {
            ShapeFamily::Ellipse => canvas.ellipse(&mut rng, center, target, &mut region),
            ShapeFamily::RandomBlob => canvas.random_blob(&mut rng, center, target, &mut region),
            ShapeFamily::BrushStroke => canvas.brush_stroke(&mut rng, center, target, &mut region),
        }
        canvas.top_up(&mut rng, target, &mut region);
    }
    // A pixel is hidden iff it was SR-free and got claimed.
    let data = img
        .real_mask
        .data()
        .iter()
        .zip(&canvas.available)
        .map(|(&m, &avail)| u8::from(!(m == 1 && !avail)))
        .collect();
    BinaryMask::new(h, w, data)
}

/// Checks a candidate hidden mask against an image: dimensions must agree
/// and no hidden pixel may be a specular one.
pub fn validate_hidden_mask(mask: &BinaryMask, img: &CorpusImage) -> Result<()> {
    if mask.dims() != img.dims() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            got: mask.dims(),
        });
    }
    let count = mask
        .data()
        .iter()
        .zip(img.real_mask.data())
        .filter(|(&h, &r)| h == 0 && r == 0)
        .count();
    if count > 0 {
        return Err(Error::HiddenOverlapsSr { count });
    }
    Ok(())
}

/// Loads an annotated hidden mask from a PNG file and validates it.
pub fn import_annotation_mask(file: impl AsRef<Path>, img: &CorpusImage) -> Result<BinaryMask> {
    let mask = BinaryMask::load(file)?;
    validate_hidden_mask(&mask, img)?;
    Ok(mask)
}
