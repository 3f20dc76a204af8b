//! Convolution geometry, im2col/col2im and GEMM helpers.

/// Geometry of a 2-D convolution over a single `c x h x w` sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub oh: usize,
    pub ow: usize,
}

fn same_padding(size: usize, k: usize, stride: usize, dilation: usize) -> (usize, usize) {
    let eff = (k - 1) * dilation + 1;
    let out = size.div_ceil(stride);
    let total = ((out - 1) * stride + eff).saturating_sub(size);
    (out, total / 2)
}

impl ConvGeom {
    /// "Same" padding: output is `ceil(size / stride)`, with any odd padding
    /// pixel placed after the image.
    pub fn same(c: usize, h: usize, w: usize, k: usize, stride: usize, dilation: usize) -> Self {
        let (oh, pad_top) = same_padding(h, k, stride, dilation);
        let (ow, pad_left) = same_padding(w, k, stride, dilation);
        Self {
            c,
            h,
            w,
            k,
            stride,
            dilation,
            pad_top,
            pad_left,
            oh,
            ow,
        }
    }

    pub fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn source(&self, o: usize, tap: usize, pad: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + tap * self.dilation) as isize - pad as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }

    /// Unfolds `x` (`c x h x w`) into `col` (`rows x cols`).
    pub fn im2col(&self, x: &[f64], col: &mut [f64]) {
        debug_assert_eq!(x.len(), self.c * self.h * self.w);
        debug_assert_eq!(col.len(), self.rows() * self.cols());
        let cols = self.cols();
        for c in 0..self.c {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    for oy in 0..self.oh {
                        let seg = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        match self.source(oy, ki, self.pad_top, self.h) {
                            None => seg.fill(0.0),
                            Some(iy) => {
                                let src = &plane[iy * self.w..(iy + 1) * self.w];
                                for (ox, v) in seg.iter_mut().enumerate() {
                                    *v = match self.source(ox, kj, self.pad_left, self.w) {
                                        Some(ix) => src[ix],
                                        None => 0.0,
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`im2col`](Self::im2col): accumulates `col` into `x`.
    pub fn col2im(&self, col: &[f64], x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.c * self.h * self.w);
        let cols = self.cols();
        for c in 0..self.c {
            let plane = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let src = &col[row * cols..(row + 1) * cols];
                    for oy in 0..self.oh {
                        let Some(iy) = self.source(oy, ki, self.pad_top, self.h) else {
                            continue;
                        };
                        let dst = &mut plane[iy * self.w..(iy + 1) * self.w];
                        for ox in 0..self.ow {
                            if let Some(ix) = self.source(ox, kj, self.pad_left, self.w) {
                                dst[ix] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` with row-major operands, where
/// `op(a)` is `m x k` and `op(b)` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every index reachable through the
    // given dimensions and strides lies inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_conv(g: &ConvGeom, x: &[f64], kernel: &[f64]) -> Vec<f64> {
        // kernel is c x k x k for a single output channel
        let mut out = vec![0.0; g.oh * g.ow];
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let mut acc = 0.0;
                for c in 0..g.c {
                    for ki in 0..g.k {
                        for kj in 0..g.k {
                            let iy = (oy * g.stride + ki * g.dilation) as i64 - g.pad_top as i64;
                            let ix = (ox * g.stride + kj * g.dilation) as i64 - g.pad_left as i64;
                            if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                                acc += x[(c * g.h + iy as usize) * g.w + ix as usize] * kernel[(c * g.k + ki) * g.k + kj];
                            }
                        }
                    }
                }
                out[oy * g.ow + ox] = acc;
            }
        }
        out
    }

    #[test]
    fn same_padding_shapes() {
        let g = ConvGeom::same(3, 64, 64, 3, 2, 1);
        assert_eq!((g.oh, g.ow, g.pad_top), (32, 32, 0));
        let g = ConvGeom::same(3, 16, 16, 3, 1, 16);
        assert_eq!((g.oh, g.ow, g.pad_top), (16, 16, 16));
        let g = ConvGeom::same(3, 64, 64, 5, 1, 1);
        assert_eq!((g.oh, g.pad_top), (64, 2));
        // Transposed 4x4 stride-2 layers are the adjoint of this geometry.
        let g = ConvGeom::same(3, 32, 32, 4, 2, 1);
        assert_eq!((g.oh, g.pad_top), (16, 1));
    }

    #[test]
    fn im2col_gemm_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (k, s, d) in [(3, 1, 1), (3, 2, 1), (5, 1, 1), (3, 1, 2), (4, 2, 1), (3, 1, 4)] {
            let g = ConvGeom::same(2, 9, 8, k, s, d);
            let x: Vec<f64> = (0..2 * 9 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let kernel: Vec<f64> = (0..g.rows()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut col = vec![0.0; g.rows() * g.cols()];
            g.im2col(&x, &mut col);
            let mut out = vec![0.0; g.cols()];
            gemm(1, g.rows(), g.cols(), &kernel, false, &col, false, 0.0, &mut out);
            let expected = naive_conv(&g, &x, &kernel);
            for (a, b) in out.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = ConvGeom::same(3, 7, 10, 3, 2, 1);
        let x: Vec<f64> = (0..3 * 7 * 10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..g.rows() * g.cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut col = vec![0.0; y.len()];
        g.im2col(&x, &mut col);
        let mut back = vec![0.0; x.len()];
        g.col2im(&y, &mut back);
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn gemm_transposes() {
        // a: 2x3, b: 3x2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0; 4];
        gemm(2, 3, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
        // a^T stored as 3x2, b^T stored as 2x3
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0];
        let mut c2 = [1.0; 4];
        gemm(2, 3, 2, &at, true, &bt, true, 1.0, &mut c2);
        assert_eq!(c2, [59.0, 65.0, 140.0, 155.0]);
    }
}
