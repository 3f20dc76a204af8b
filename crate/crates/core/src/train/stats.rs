use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub half_width: f64,
}

impl ConfidenceInterval {
    pub fn from_bounds(lower: f64, upper: f64) -> Self {
        Self {
            mean: (lower + upper) / 2.0,
            half_width: (upper - lower) / 2.0,
        }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }

    /// Disjoint intervals are read as a significant difference of means.
    pub fn significantly_differs(&self, other: &Self) -> bool {
        !self.overlaps(other)
    }
}

/// Mean and Student-t half width `t_{(1+level)/2, n-1} * s / sqrt(n)`.
pub fn test_error_ci(errors: &[f64], level: f64) -> Result<ConfidenceInterval> {
    let n = errors.len();
    if n < 2 {
        return Err(Error::invalid(format!("a confidence interval needs at least 2 values, got {n}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let nf = n as f64;
    let mean = errors.iter().sum::<f64>() / nf;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let t = StudentsT::new(0.0, 1.0, nf - 1.0)
        .map_err(|e| Error::invalid(e.to_string()))?
        .inverse_cdf(0.5 + level / 2.0);
    Ok(ConfidenceInterval {
        mean,
        half_width: t * var.sqrt() / nf.sqrt(),
    })
}
