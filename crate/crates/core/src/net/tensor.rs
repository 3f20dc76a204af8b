use crate::error::{Error, Result};

/// Dense NCHW tensor of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::Shape(format!(
                "tensor {n}x{c}x{h}x{w} needs {} values, got {}",
                n * c * h * w,
                data.len()
            )));
        }
        Ok(Self { n, c, h, w, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn sample(&self, s: usize) -> &[f64] {
        let len = self.sample_len();
        &self.data[s * len..(s + 1) * len]
    }

    pub fn at(&self, s: usize, c: usize, i: usize, j: usize) -> f64 {
        self.data[((s * self.c + c) * self.h + i) * self.w + j]
    }

    /// Concatenates single-sample tensors of equal shape along the batch axis.
    pub fn stack(items: &[&Tensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("cannot stack an empty list".into()))?;
        let mut data = Vec::with_capacity(items.len() * first.data.len());
        let mut n = 0;
        for t in items {
            if (t.c, t.h, t.w) != (first.c, first.h, first.w) {
                return Err(Error::Shape(format!(
                    "cannot stack {:?} with {:?}",
                    t.shape(),
                    first.shape()
                )));
            }
            data.extend_from_slice(&t.data);
            n += t.n;
        }
        Ok(Self {
            n,
            c: first.c,
            h: first.h,
            w: first.w,
            data,
        })
    }
}
