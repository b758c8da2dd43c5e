//! Layer kernels on channel-major `C x H x W` buffers, each with its
//! backward pass. Weight gradients accumulate into caller-owned buffers.

use crate::scalar::Scalar;

pub const LEAKY_SLOPE: f64 = 0.01;
pub const NORM_EPS: f64 = 1e-5;

/// Channel-major activation of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![S::zero(); c * h * w],
        }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Stacks channels of `a` then `b`.
    pub fn concat(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
        debug_assert_eq!((a.h, a.w), (b.h, b.w));
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Tensor {
            c: a.c + b.c,
            h: a.h,
            w: a.w,
            data,
        }
    }
}

/// Unrolls 3x3 zero-padded neighbourhoods: row `ci*9 + ky*3 + kx`, column
/// `y*w + x`.
pub fn im2col3<S: Scalar>(x: &Tensor<S>) -> Vec<S> {
    let (h, w, hw) = (x.h, x.w, x.plane());
    let mut cols = vec![S::zero(); x.c * 9 * hw];
    for ci in 0..x.c {
        let src = &x.data[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                let (y_lo, y_hi) = ((1usize).saturating_sub(ky), (h + 1 - ky).min(h));
                let (x_lo, x_hi) = ((1usize).saturating_sub(kx), (w + 1 - kx).min(w));
                for y in y_lo..y_hi {
                    let sy = y + ky - 1;
                    let d = &mut row[y * w + x_lo..y * w + x_hi];
                    let s = &src[sy * w + x_lo + kx - 1..sy * w + x_hi + kx - 1];
                    d.copy_from_slice(s);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col3`].
pub fn col2im3<S: Scalar>(cols: &[S], c: usize, h: usize, w: usize) -> Tensor<S> {
    let hw = h * w;
    let mut x = Tensor::zeros(c, h, w);
    for ci in 0..c {
        let dst = &mut x.data[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                let (y_lo, y_hi) = ((1usize).saturating_sub(ky), (h + 1 - ky).min(h));
                let (x_lo, x_hi) = ((1usize).saturating_sub(kx), (w + 1 - kx).min(w));
                for y in y_lo..y_hi {
                    let sy = y + ky - 1;
                    let s = &row[y * w + x_lo..y * w + x_hi];
                    let d = &mut dst[sy * w + x_lo + kx - 1..sy * w + x_hi + kx - 1];
                    for (dv, &sv) in d.iter_mut().zip(s) {
                        *dv += sv;
                    }
                }
            }
        }
    }
    x
}

fn add_bias<S: Scalar>(y: &mut [S], bias: &[S], plane: usize) {
    for (row, &b) in y.chunks_exact_mut(plane).zip(bias) {
        row.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad<S: Scalar>(dy: &[S], db: &mut [S], plane: usize) {
    for (row, g) in dy.chunks_exact(plane).zip(db.iter_mut()) {
        *g += row.iter().copied().sum::<S>();
    }
}

/// 3x3 convolution, stride 1, zero padding 1. `weight` is `cout x (cin*9)`.
/// Returns the output and the unrolled input for the backward pass.
pub fn conv3_forward<S: Scalar>(x: &Tensor<S>, weight: &[S], bias: &[S], cout: usize) -> (Tensor<S>, Vec<S>) {
    let cols = im2col3(x);
    let (k, hw) = (x.c * 9, x.plane());
    let mut y = Tensor::zeros(cout, x.h, x.w);
    S::gemm(cout, k, hw, S::one(), weight, k as isize, 1, &cols, hw as isize, 1, S::zero(), &mut y.data, hw as isize, 1);
    add_bias(&mut y.data, bias, hw);
    (y, cols)
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `need_dx`.
#[allow(clippy::too_many_arguments)]
pub fn conv3_backward<S: Scalar>(
    dy: &Tensor<S>,
    cols: &[S],
    weight: &[S],
    cin: usize,
    dw: &mut [S],
    db: &mut [S],
    need_dx: bool,
) -> Option<Tensor<S>> {
    let (k, hw, cout) = (cin * 9, dy.plane(), dy.c);
    S::gemm(cout, hw, k, S::one(), &dy.data, hw as isize, 1, cols, 1, hw as isize, S::one(), dw, k as isize, 1);
    bias_grad(&dy.data, db, hw);
    need_dx.then(|| {
        let mut dcols = vec![S::zero(); k * hw];
        S::gemm(k, cout, hw, S::one(), weight, 1, k as isize, &dy.data, hw as isize, 1, S::zero(), &mut dcols, hw as isize, 1);
        col2im3(&dcols, cin, dy.h, dy.w)
    })
}

/// 1x1 convolution; `weight` is `cout x cin`.
pub fn conv1_forward<S: Scalar>(x: &Tensor<S>, weight: &[S], bias: &[S], cout: usize) -> Tensor<S> {
    let hw = x.plane();
    let mut y = Tensor::zeros(cout, x.h, x.w);
    S::gemm(cout, x.c, hw, S::one(), weight, x.c as isize, 1, &x.data, hw as isize, 1, S::zero(), &mut y.data, hw as isize, 1);
    add_bias(&mut y.data, bias, hw);
    y
}

pub fn conv1_backward<S: Scalar>(
    dy: &Tensor<S>,
    x: &Tensor<S>,
    weight: &[S],
    dw: &mut [S],
    db: &mut [S],
) -> Tensor<S> {
    let (hw, cin, cout) = (x.plane(), x.c, dy.c);
    S::gemm(cout, hw, cin, S::one(), &dy.data, hw as isize, 1, &x.data, 1, hw as isize, S::one(), dw, cin as isize, 1);
    bias_grad(&dy.data, db, hw);
    let mut dx = Tensor::zeros(cin, x.h, x.w);
    S::gemm(cin, cout, hw, S::one(), weight, 1, cin as isize, &dy.data, hw as isize, 1, S::zero(), &mut dx.data, hw as isize, 1);
    dx
}

/// 2x2 transposed convolution with stride 2. `weight` is `cin x (cout*4)`,
/// entry `(ci, co*4 + a*2 + b)` feeding output pixel `(2i + a, 2j + b)`.
pub fn up_forward<S: Scalar>(x: &Tensor<S>, weight: &[S], bias: &[S], cout: usize) -> Tensor<S> {
    let (hw, cin, n4) = (x.plane(), x.c, cout * 4);
    let mut z = vec![S::zero(); n4 * hw];
    S::gemm(n4, cin, hw, S::one(), weight, 1, n4 as isize, &x.data, hw as isize, 1, S::zero(), &mut z, hw as isize, 1);
    let (h2, w2) = (x.h * 2, x.w * 2);
    let mut y = Tensor::zeros(cout, h2, w2);
    for co in 0..cout {
        for a in 0..2 {
            for b in 0..2 {
                let zrow = &z[(co * 4 + a * 2 + b) * hw..][..hw];
                let plane = &mut y.data[co * h2 * w2..(co + 1) * h2 * w2];
                for i in 0..x.h {
                    let out_row = &mut plane[(2 * i + a) * w2..(2 * i + a + 1) * w2];
                    for j in 0..x.w {
                        out_row[2 * j + b] = zrow[i * x.w + j];
                    }
                }
            }
        }
    }
    add_bias(&mut y.data, bias, h2 * w2);
    y
}

pub fn up_backward<S: Scalar>(
    dy: &Tensor<S>,
    x: &Tensor<S>,
    weight: &[S],
    dw: &mut [S],
    db: &mut [S],
) -> Tensor<S> {
    let (hw, cin, cout) = (x.plane(), x.c, dy.c);
    let n4 = cout * 4;
    let w2 = dy.w;
    let mut dz = vec![S::zero(); n4 * hw];
    for co in 0..cout {
        let plane = &dy.data[co * dy.plane()..(co + 1) * dy.plane()];
        for a in 0..2 {
            for b in 0..2 {
                let zrow = &mut dz[(co * 4 + a * 2 + b) * hw..][..hw];
                for i in 0..x.h {
                    let in_row = &plane[(2 * i + a) * w2..(2 * i + a + 1) * w2];
                    for j in 0..x.w {
                        zrow[i * x.w + j] = in_row[2 * j + b];
                    }
                }
            }
        }
    }
    bias_grad(&dy.data, db, dy.plane());
    S::gemm(cin, hw, n4, S::one(), &x.data, hw as isize, 1, &dz, 1, hw as isize, S::one(), dw, n4 as isize, 1);
    let mut dx = Tensor::zeros(cin, x.h, x.w);
    S::gemm(cin, n4, hw, S::one(), weight, n4 as isize, 1, &dz, hw as isize, 1, S::zero(), &mut dx.data, hw as isize, 1);
    dx
}

/// Per-channel normalization statistics kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NormCache<S> {
    pub xhat: Vec<S>,
    pub inv_std: Vec<S>,
}

/// Instance normalization with affine `gamma`, `beta`; in place.
pub fn norm_forward<S: Scalar>(x: &mut Tensor<S>, gamma: &[S], beta: &[S]) -> NormCache<S> {
    let hw = x.plane();
    let mut xhat = vec![S::zero(); x.data.len()];
    let mut inv_std = Vec::with_capacity(x.c);
    for (ci, (row, hrow)) in x.data.chunks_exact_mut(hw).zip(xhat.chunks_exact_mut(hw)).enumerate() {
        let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / hw as f64;
        let var = row.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / hw as f64;
        let is = 1.0 / (var + NORM_EPS).sqrt();
        let (m, s) = (S::of(mean), S::of(is));
        for (v, hv) in row.iter_mut().zip(hrow.iter_mut()) {
            *hv = (*v - m) * s;
            *v = *hv * gamma[ci] + beta[ci];
        }
        inv_std.push(s);
    }
    NormCache { xhat, inv_std }
}

/// Returns the input gradient; accumulates `dgamma` and `dbeta`.
pub fn norm_backward<S: Scalar>(
    dy: &Tensor<S>,
    cache: &NormCache<S>,
    gamma: &[S],
    dgamma: &mut [S],
    dbeta: &mut [S],
) -> Tensor<S> {
    let hw = dy.plane();
    let n = S::of(hw as f64);
    let mut dx = Tensor::zeros(dy.c, dy.h, dy.w);
    for ci in 0..dy.c {
        let g = &dy.data[ci * hw..(ci + 1) * hw];
        let xh = &cache.xhat[ci * hw..(ci + 1) * hw];
        let sum_g: S = g.iter().copied().sum();
        let sum_gx: S = g.iter().zip(xh).map(|(&a, &b)| a * b).sum();
        dgamma[ci] += sum_gx;
        dbeta[ci] += sum_g;
        let k = gamma[ci] * cache.inv_std[ci] / n;
        for ((d, &gv), &xv) in dx.data[ci * hw..(ci + 1) * hw].iter_mut().zip(g).zip(xh) {
            *d = k * (n * gv - sum_g - xv * sum_gx);
        }
    }
    dx
}

pub fn leaky_forward<S: Scalar>(x: &mut Tensor<S>, slope: S) {
    for v in &mut x.data {
        if *v < S::zero() {
            *v *= slope;
        }
    }
}

/// Gradient through the activation given its output `y` (same sign as input).
pub fn leaky_backward<S: Scalar>(dy: &mut Tensor<S>, y: &Tensor<S>, slope: S) {
    for (d, &v) in dy.data.iter_mut().zip(&y.data) {
        if v <= S::zero() {
            *d *= slope;
        }
    }
}

/// 2x2 max pooling; returns the output and flat argmax indices.
pub fn pool_forward<S: Scalar>(x: &Tensor<S>) -> (Tensor<S>, Vec<usize>) {
    let (h2, w2) = (x.h / 2, x.w / 2);
    let mut y = Tensor::zeros(x.c, h2, w2);
    let mut arg = vec![0usize; x.c * h2 * w2];
    for ci in 0..x.c {
        let base = ci * x.plane();
        for i in 0..h2 {
            for j in 0..w2 {
                let mut best = base + 2 * i * x.w + 2 * j;
                for (a, b) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + a) * x.w + 2 * j + b;
                    if x.data[idx] > x.data[best] {
                        best = idx;
                    }
                }
                let o = (ci * h2 + i) * w2 + j;
                y.data[o] = x.data[best];
                arg[o] = best;
            }
        }
    }
    (y, arg)
}

pub fn pool_backward<S: Scalar>(dy: &Tensor<S>, arg: &[usize], c: usize, h: usize, w: usize) -> Tensor<S> {
    let mut dx = Tensor::zeros(c, h, w);
    for (&g, &i) in dy.data.iter().zip(arg) {
        dx.data[i] += g;
    }
    dx
}
