//! Procedural stand-in for a colposcopic image database.
//!
//! Each synthetic patient owns a tissue model (base color, low-frequency
//! texture, a darker elliptical os, vessel curves). Every image of that
//! patient views the tissue with a different offset and receives its own
//! set of saturated specular blobs.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::CorpusImage;
use crate::detect::{detect_sr, DetectorConfig};
use crate::error::{Error, Result};
use crate::imaging::ImageU8;
use crate::rng;

struct Wave {
    amplitude: f64,
    kx: f64,
    ky: f64,
    phase: f64,
    tint: [f64; 3],
}

struct Vessel {
    points: Vec<(f64, f64)>,
    width: f64,
}

struct Tissue {
    base: [f64; 3],
    waves: Vec<Wave>,
    os_center: (f64, f64),
    os_axes: (f64, f64),
    os_angle: f64,
    os_darkness: f64,
    vessels: Vec<Vessel>,
    vessel_color: [f64; 3],
}

impl Tissue {
    // Coordinates are normalized to the unit square.
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let base = [
            rng.random_range(185.0..225.0),
            rng.random_range(85.0..125.0),
            rng.random_range(95.0..135.0),
        ];
        let waves = (0..6)
            .map(|_| {
                let freq = rng.random_range(0.5..3.0) * 2.0 * PI;
                let dir = rng.random_range(0.0..2.0 * PI);
                Wave {
                    amplitude: rng.random_range(4.0..12.0),
                    kx: freq * dir.cos(),
                    ky: freq * dir.sin(),
                    phase: rng.random_range(0.0..2.0 * PI),
                    tint: [
                        rng.random_range(0.7..1.0),
                        rng.random_range(0.4..1.0),
                        rng.random_range(0.4..1.0),
                    ],
                }
            })
            .collect();
        let vessels = (0..rng.random_range(3..=6))
            .map(|_| {
                let mut x = rng.random_range(0.05..0.95);
                let mut y = rng.random_range(0.05..0.95);
                let mut heading = rng.random_range(0.0..2.0 * PI);
                let length = rng.random_range(0.3..0.8);
                let wiggle = rng.random_range(0.02..0.12);
                let steps = 80;
                let mut points = Vec::with_capacity(steps + 1);
                points.push((x, y));
                for s in 0..steps {
                    heading += wiggle * (s as f64 * 0.3).sin() + rng.random_range(-0.15..0.15);
                    x += heading.cos() * length / steps as f64;
                    y += heading.sin() * length / steps as f64;
                    points.push((x, y));
                }
                Vessel {
                    points,
                    width: rng.random_range(0.6..1.4),
                }
            })
            .collect();
        Self {
            base,
            waves,
            os_center: (rng.random_range(0.35..0.65), rng.random_range(0.35..0.65)),
            os_axes: (rng.random_range(0.07..0.14), rng.random_range(0.04..0.09)),
            os_angle: rng.random_range(0.0..PI),
            os_darkness: rng.random_range(0.5..0.7),
            vessels,
            vessel_color: [
                rng.random_range(120.0..160.0),
                rng.random_range(30.0..50.0),
                rng.random_range(40.0..65.0),
            ],
        }
    }

    fn color(&self, u: f64, v: f64) -> [f64; 3] {
        let mut c = self.base;
        for w in &self.waves {
            let s = w.amplitude * (w.kx * u + w.ky * v + w.phase).sin();
            for k in 0..3 {
                c[k] += s * w.tint[k];
            }
        }
        let (du, dv) = (u - self.os_center.0, v - self.os_center.1);
        let (ca, sa) = (self.os_angle.cos(), self.os_angle.sin());
        let a = (du * ca + dv * sa) / self.os_axes.0;
        let b = (-du * sa + dv * ca) / self.os_axes.1;
        let r2 = a * a + b * b;
        // Smooth step from 1 (inside) to 0 (outside) across the rim.
        let inside = 1.0 / (1.0 + ((r2 - 1.0) * 6.0).exp());
        let shade = 1.0 - (1.0 - self.os_darkness) * inside;
        for ch in &mut c {
            *ch *= shade;
        }
        c
    }
}

struct Blob {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    angle: f64,
}

impl Blob {
    /// Blend weight towards white: saturated core, fast falloff.
    fn weight(&self, y: f64, x: f64) -> f64 {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let (ca, sa) = (self.angle.cos(), self.angle.sin());
        let a = (dx * ca + dy * sa) / self.rx;
        let b = (-dx * sa + dy * ca) / self.ry;
        let d = (a * a + b * b).sqrt();
        if d <= 0.6 {
            1.0
        } else {
            (-3.0 * ((d - 0.6) / 0.6).powi(2)).exp()
        }
    }
}

fn render_image(tissue: &Tissue, rng: &mut ChaCha8Rng, height: usize, width: usize) -> Result<ImageU8> {
    let scale = height.min(width) as f64 / 64.0;
    let (ou, ov) = (rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    let gain = rng.random_range(0.92..1.05);

    let mut vessel_alpha = vec![0.0f64; height * width];
    for vessel in &tissue.vessels {
        let w = vessel.width * scale.max(1.0);
        let reach = w.ceil() as i64 + 1;
        for &(pu, pv) in &vessel.points {
            let (py, px) = ((pv - ov) * height as f64, (pu - ou) * width as f64);
            for y in (py as i64 - reach)..=(py as i64 + reach) {
                for x in (px as i64 - reach)..=(px as i64 + reach) {
                    if y < 0 || x < 0 || y as usize >= height || x as usize >= width {
                        continue;
                    }
                    let d = ((y as f64 + 0.5 - py).powi(2) + (x as f64 + 0.5 - px).powi(2)).sqrt();
                    let a = (1.0 - (d / w).powi(2)).max(0.0) * 0.7;
                    let slot = &mut vessel_alpha[y as usize * width + x as usize];
                    *slot = slot.max(a);
                }
            }
        }
    }

    let blobs: Vec<Blob> = (0..rng.random_range(2..=6))
        .map(|_| {
            // Centre on a pixel centre so the core always saturates at least one pixel.
            let cy = rng.random_range(2..height.saturating_sub(2).max(3)) as f64 + 0.5;
            let cx = rng.random_range(2..width.saturating_sub(2).max(3)) as f64 + 0.5;
            Blob {
                cy,
                cx,
                ry: rng.random_range(1.2..3.5) * scale,
                rx: rng.random_range(1.2..3.5) * scale,
                angle: rng.random_range(0.0..PI),
            }
        })
        .collect();

    let mut data = Vec::with_capacity(height * width * 3);
    let (cy, cx) = (height as f64 / 2.0, width as f64 / 2.0);
    let rmax2 = cy * cy + cx * cx;
    for i in 0..height {
        for j in 0..width {
            let (y, x) = (i as f64 + 0.5, j as f64 + 0.5);
            let u = x / width as f64 + ou;
            let v = y / height as f64 + ov;
            let mut c = tissue.color(u, v);
            let va = vessel_alpha[i * width + j];
            let vignette = 1.0 - 0.3 * ((y - cy).powi(2) + (x - cx).powi(2)) / rmax2;
            for k in 0..3 {
                c[k] = (c[k] * (1.0 - va) + tissue.vessel_color[k] * va) * vignette * gain;
                c[k] += rng.random_range(-3.0..3.0);
                c[k] = c[k].clamp(0.0, 235.0);
            }
            let w = blobs.iter().map(|b| b.weight(y, x)).fold(0.0, f64::max);
            for ch in &mut c {
                *ch = *ch * (1.0 - w) + 255.0 * w;
            }
            data.extend(c.iter().map(|&ch| ch.round().clamp(0.0, 255.0) as u8));
        }
    }
    ImageU8::new(height, width, data)
}

/// Generates `count` synthetic images of size `height x width`. Images are
/// grouped into patients of one to four images each. The real mask of every
/// image is computed with the default detector.
pub fn synth_corpus(count: usize, (height, width): (usize, usize), seed: u64) -> Result<Vec<CorpusImage>> {
    if count == 0 {
        return Err(Error::invalid("synthetic corpus needs at least one image"));
    }
    if height < 8 || width < 8 {
        return Err(Error::invalid(format!(
            "synthetic images must be at least 8x8, got {height}x{width}"
        )));
    }
    let mut group_rng = rng::stream(seed, "synth/patients");
    let mut sizes = Vec::new();
    let mut remaining = count;
    while remaining > 0 {
        let s = group_rng.random_range(1..=4).min(remaining);
        sizes.push(s);
        remaining -= s;
    }

    let cfg = DetectorConfig::default();
    let mut out = Vec::with_capacity(count);
    let mut index = 0;
    for (p, &n) in sizes.iter().enumerate() {
        let patient_id = format!("pat_{p:03}");
        let tissue = Tissue::random(&mut rng::stream(seed, &format!("synth/{patient_id}")));
        for _ in 0..n {
            let image_id = format!("img_{index:04}");
            let mut rng = rng::stream(seed, &format!("synth/{image_id}"));
            let image = render_image(&tissue, &mut rng, height, width)?;
            let real_mask = detect_sr(&image, &cfg)?;
            out.push(CorpusImage::new(image_id, patient_id.clone(), image, real_mask)?);
            index += 1;
        }
    }
    Ok(out)
}
