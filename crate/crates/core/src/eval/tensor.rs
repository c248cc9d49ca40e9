//! Dense NCHW `f64` tensors and the handful of kernels the evaluator needs.

use rand::Rng;
use rand_distr::StandardNormal;

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
        Self { n, c, h, w, data: vec![0.0; n * c * h * w] }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor data length does not match shape");
        Self { n, c, h, w, data }
    }

    pub fn standard_normal<R: Rng>(rng: &mut R, n: usize, c: usize, h: usize, w: usize) -> Self {
        let data = (0..n * c * h * w).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        Self { n, c, h, w, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn relu_(&mut self) {
        for v in &mut self.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    pub fn add_(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    /// `self + scale * other`, elementwise.
    pub fn axpy(&self, scale: f64, other: &Tensor) -> Tensor {
        assert_eq!(self.shape(), other.shape());
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + scale * b).collect();
        Tensor { data, ..*self }
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        Tensor { data: self.data.iter().map(|v| v * factor).collect(), ..*self }
    }

    /// Sum of absolute differences.
    pub fn l1_distance(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Per-sample channel means, shape `n × c × 1 × 1`.
    pub fn global_avg_pool(&self) -> Tensor {
        let plane = self.plane();
        let mut out = Tensor::zeros(self.n, self.c, 1, 1);
        for (o, chunk) in out.data.iter_mut().zip(self.data.chunks_exact(plane)) {
            let sum: f64 = chunk.iter().sum();
            *o = sum / plane as f64;
        }
        out
    }
}

/// Range of output positions `o` for which `o*stride + offset - pad` lands in `[0, len_in)`.
fn valid_outputs(offset: usize, pad: usize, stride: usize, len_in: usize, len_out: usize) -> (usize, usize) {
    // o*stride >= pad - offset
    let lo = if pad > offset { (pad - offset).div_ceil(stride) } else { 0 };
    // o*stride + offset - pad <= len_in - 1
    let limit = len_in + pad - 1;
    let hi = if offset > limit { 0 } else { ((limit - offset) / stride + 1).min(len_out) };
    let lo = lo.min(len_out);
    (lo, hi.max(lo))
}

/// Same-padded 2-D convolution without bias.
///
/// `weight` is laid out `[out_channels][in_channels / groups][k][k]`.
pub fn conv2d(input: &Tensor, weight: &[f64], out_channels: usize, k: usize, stride: usize, groups: usize) -> Tensor {
    let cin = input.c;
    assert!(cin.is_multiple_of(groups) && out_channels.is_multiple_of(groups));
    let cin_g = cin / groups;
    let cout_g = out_channels / groups;
    assert_eq!(weight.len(), out_channels * cin_g * k * k);
    let pad = k / 2;
    let ho = input.h.div_ceil(stride);
    let wo = input.w.div_ceil(stride);
    let mut out = Tensor::zeros(input.n, out_channels, ho, wo);
    let in_plane = input.plane();
    let out_plane = ho * wo;

    for n in 0..input.n {
        for oc in 0..out_channels {
            let g = oc / cout_g;
            let dst = &mut out.data[(n * out_channels + oc) * out_plane..][..out_plane];
            for icg in 0..cin_g {
                let ic = g * cin_g + icg;
                let src = &input.data[(n * cin + ic) * in_plane..][..in_plane];
                let wbase = ((oc * cin_g) + icg) * k * k;
                for ky in 0..k {
                    let (oy0, oy1) = valid_outputs(ky, pad, stride, input.h, ho);
                    for kx in 0..k {
                        let wv = weight[wbase + ky * k + kx];
                        let (ox0, ox1) = valid_outputs(kx, pad, stride, input.w, wo);
                        if ox0 == ox1 {
                            continue;
                        }
                        for oy in oy0..oy1 {
                            let iy = oy * stride + ky - pad;
                            let row = &src[iy * input.w..][..input.w];
                            let drow = &mut dst[oy * wo..][..wo];
                            if stride == 1 {
                                let ix0 = ox0 + kx - pad;
                                let len = ox1 - ox0;
                                for (d, s) in drow[ox0..ox1].iter_mut().zip(&row[ix0..ix0 + len]) {
                                    *d += wv * *s;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    drow[ox] += wv * row[ox * stride + kx - pad];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Per-channel mean and biased variance over (batch, height, width).
pub fn channel_moments(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let plane = x.plane();
    let count = (x.n * plane) as f64;
    let mut mean = vec![0.0f64; x.c];
    let mut var = vec![0.0f64; x.c];
    for c in 0..x.c {
        let mut sum = 0.0f64;
        for n in 0..x.n {
            sum += x.data[(n * x.c + c) * plane..][..plane].iter().sum::<f64>();
        }
        let m = sum / count;
        let mut sq = 0.0f64;
        for n in 0..x.n {
            sq += x.data[(n * x.c + c) * plane..][..plane]
                .iter()
                .map(|&v| {
                    let d = v - m;
                    d * d
                })
                .sum::<f64>();
        }
        mean[c] = m;
        var[c] = sq / count;
    }
    (mean, var)
}
