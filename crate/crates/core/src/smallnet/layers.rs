//! Layer kernels with explicit forward and backward passes over NCHW data.

use crate::augment::RngStream;
use crate::scalar::{gemm, Scalar};
use crate::tensor::Tensor4;


/// 3x3 convolution, stride 1, zero "same" padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3<T = f32> {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out][in][ky][kx]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub struct ConvCache<T> {
    /// Per sample, `(in*9) x (h*w)` patch matrix.
    cols: Vec<T>,
    h: usize,
    w: usize,
}

impl<T: Scalar> Conv3x3<T> {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: vec![T::zero(); out_channels * in_channels * 9],
            bias: vec![T::zero(); out_channels],
        }
    }

    fn im2col(&self, x: &[T], h: usize, w: usize, col: &mut [T]) {
        let p = h * w;
        for c in 0..self.in_channels {
            let plane = &x[c * p..(c + 1) * p];
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = &mut col[((c * 9) + ky * 3 + kx) * p..][..p];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        let dst = &mut row[y * w..(y + 1) * w];
                        if sy < 0 || sy >= h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                        for (x, d) in dst.iter_mut().enumerate() {
                            let sx = x as isize + kx as isize - 1;
                            *d = if sx < 0 || sx >= w as isize { T::zero() } else { src[sx as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, col: &[T], h: usize, w: usize, dx: &mut [T]) {
        let p = h * w;
        for c in 0..self.in_channels {
            let plane = &mut dx[c * p..(c + 1) * p];
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = &col[((c * 9) + ky * 3 + kx) * p..][..p];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for x in 0..w {
                            let sx = x as isize + kx as isize - 1;
                            if sx >= 0 && sx < w as isize {
                                plane[sy as usize * w + sx as usize] += row[y * w + x];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, input: &Tensor4<T>, keep_cache: bool) -> (Tensor4<T>, Option<ConvCache<T>>) {
        let (n, c, h, w) = input.shape();
        assert_eq!(c, self.in_channels, "conv input channels");
        let p = h * w;
        let k = c * 9;
        let mut out = vec![T::zero(); n * self.out_channels * p];
        let mut cols = if keep_cache { vec![T::zero(); n * k * p] } else { Vec::new() };
        let mut scratch = if keep_cache { Vec::new() } else { vec![T::zero(); k * p] };
        for i in 0..n {
            let col: &mut [T] = if keep_cache { &mut cols[i * k * p..(i + 1) * k * p] } else { &mut scratch };
            self.im2col(input.sample_data(i), h, w, col);
            let out_i = &mut out[i * self.out_channels * p..(i + 1) * self.out_channels * p];
            for o in 0..self.out_channels {
                out_i[o * p..(o + 1) * p].fill(self.bias[o]);
            }
            gemm(false, false, self.out_channels, k, p, &self.weight, col, T::one(), out_i);
        }
        let cache = keep_cache.then_some(ConvCache { cols, h, w });
        (Tensor4::from_parts(n, self.out_channels, h, w, out), cache)
    }

    /// Accumulates into `dw`/`db` and returns the input gradient.
    pub fn backward(&self, cache: &ConvCache<T>, dout: &Tensor4<T>, dw: &mut [T], db: &mut [T]) -> Tensor4<T> {
        let (n, _, h, w) = dout.shape();
        debug_assert_eq!((h, w), (cache.h, cache.w));
        let p = h * w;
        let k = self.in_channels * 9;
        let mut dx = vec![T::zero(); n * self.in_channels * p];
        let mut dcol = vec![T::zero(); k * p];
        for i in 0..n {
            let col = &cache.cols[i * k * p..(i + 1) * k * p];
            let dy = dout.sample_data(i);
            for o in 0..self.out_channels {
                db[o] += dy[o * p..(o + 1) * p].iter().copied().sum::<T>();
            }
            gemm(false, true, self.out_channels, p, k, dy, col, T::one(), dw);
            gemm(true, false, k, self.out_channels, p, &self.weight, dy, T::zero(), &mut dcol);
            self.col2im_add(&dcol, h, w, &mut dx[i * self.in_channels * p..(i + 1) * self.in_channels * p]);
        }
        Tensor4::from_parts(n, self.in_channels, h, w, dx)
    }
}

pub fn relu_forward<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    let (n, c, h, w) = input.shape();
    Tensor4::from_parts(n, c, h, w, input.data().iter().map(|&v| v.max(T::zero())).collect())
}

/// Gradient through a ReLU given its output.
pub fn relu_backward<T: Scalar>(output: &Tensor4<T>, dout: &Tensor4<T>) -> Tensor4<T> {
    let (n, c, h, w) = dout.shape();
    let data = output
        .data()
        .iter()
        .zip(dout.data())
        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Tensor4::from_parts(n, c, h, w, data)
}

/// 2x2 max pooling with stride 2; returns the flat argmax of each window.
pub fn maxpool_forward<T: Scalar>(input: &Tensor4<T>) -> (Tensor4<T>, Vec<usize>) {
    let (n, c, h, w) = input.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    let x = input.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xo in 0..ow {
                let mut best = base + 2 * y * w + 2 * xo;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * xo + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (Tensor4::from_parts(n, c, oh, ow, out), arg)
}

pub fn maxpool_backward<T: Scalar>(input_shape: (usize, usize, usize, usize), argmax: &[usize], dout: &Tensor4<T>) -> Tensor4<T> {
    let (n, c, h, w) = input_shape;
    let mut dx = vec![T::zero(); n * c * h * w];
    for (&i, &g) in argmax.iter().zip(dout.data()) {
        dx[i] += g;
    }
    Tensor4::from_parts(n, c, h, w, dx)
}

/// Inverted dropout: kept units are scaled by `1 / (1 - p)` so evaluation
/// needs no rescaling. Returns the multiplier applied to each unit.
pub fn dropout_forward<T: Scalar>(input: &Tensor4<T>, p: f64, rng: &mut RngStream) -> (Tensor4<T>, Vec<T>) {
    let (n, c, h, w) = input.shape();
    let scale = T::from_f64_lossy(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..input.data().len())
        .map(|_| if rng.bernoulli(p) { T::zero() } else { scale })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    (Tensor4::from_parts(n, c, h, w, data), mask)
}

pub fn dropout_backward<T: Scalar>(mask: &[T], dout: &Tensor4<T>) -> Tensor4<T> {
    let (n, c, h, w) = dout.shape();
    Tensor4::from_parts(n, c, h, w, dout.data().iter().zip(mask).map(|(&g, &m)| g * m).collect())
}

/// Fully connected layer over the flattened `c*h*w` features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T = f32> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weight: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs] }
    }

    /// Output shape `(n, outputs, 1, 1)`.
    pub fn forward(&self, input: &Tensor4<T>) -> Tensor4<T> {
        let n = input.n();
        assert_eq!(input.sample_len(), self.inputs, "dense input width");
        let mut out: Vec<T> = (0..n).flat_map(|_| self.bias.iter().copied()).collect();
        gemm(false, true, n, self.inputs, self.outputs, input.data(), &self.weight, T::one(), &mut out);
        Tensor4::from_parts(n, self.outputs, 1, 1, out)
    }

    pub fn backward(&self, input: &Tensor4<T>, dout: &Tensor4<T>, dw: &mut [T], db: &mut [T]) -> Tensor4<T> {
        let (n, c, h, w) = input.shape();
        let g = dout.data();
        for i in 0..n {
            for (b, &gj) in db.iter_mut().zip(&g[i * self.outputs..(i + 1) * self.outputs]) {
                *b += gj;
            }
        }
        gemm(true, false, self.outputs, n, self.inputs, g, input.data(), T::one(), dw);
        let mut dx = vec![T::zero(); n * self.inputs];
        gemm(false, false, n, self.outputs, self.inputs, g, &self.weight, T::zero(), &mut dx);
        Tensor4::from_parts(n, c, h, w, dx)
    }
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor4<T>, labels: &[usize]) -> (T, Tensor4<T>) {
    let (n, k, h, w) = logits.shape();
    let mut grad = vec![T::zero(); n * k];
    let mut loss = T::zero();
    let inv_n = T::one() / T::from_count(n);
    for i in 0..n {
        let z = logits.sample_data(i);
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = z.iter().map(|&v| (v - max).exp()).sum();
        let log_sum = sum.ln() + max;
        loss += log_sum - z[labels[i]];
        let g = &mut grad[i * k..(i + 1) * k];
        for (j, gj) in g.iter_mut().enumerate() {
            let p = (z[j] - log_sum).exp();
            let target = if j == labels[i] { T::one() } else { T::zero() };
            *gj = (p - target) * inv_n;
        }
    }
    (loss * inv_n, Tensor4::from_parts(n, k, h, w, grad))
}
