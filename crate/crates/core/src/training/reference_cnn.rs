//! Small convolutional classifier with hand-written backpropagation.
//!
//! conv3x3(3→8) → ReLU → maxpool2 → conv3x3(8→16) → ReLU → global average
//! pool → linear head. The two convolutions form the backbone group.

use image::RgbImage;
use rand::Rng;

use super::backend::{softmax, BackwardPass, ClassifierBackend, ParamGroup, ParamTensor};
use crate::util::derived_rng;
use crate::{Error, Result};

const IN_CHANNELS: usize = 3;
const CONV1_CHANNELS: usize = 8;
const CONV2_CHANNELS: usize = 16;

const CONV1_W: usize = 0;
const CONV1_B: usize = 1;
const CONV2_W: usize = 2;
const CONV2_B: usize = 3;
const HEAD_W: usize = 4;
const HEAD_B: usize = 5;

#[derive(Clone, Debug)]
pub struct ReferenceCnn {
    resolution: u32,
    num_classes: usize,
    params: Vec<ParamTensor>,
}

/// Activations kept from the forward pass for backpropagation.
struct Trace {
    input: Vec<f64>,
    pre1: Vec<f64>,
    act1: Vec<f64>,
    pool_argmax: Vec<usize>,
    pooled: Vec<f64>,
    pre2: Vec<f64>,
    features: Vec<f64>,
    logits: Vec<f64>,
}

impl ReferenceCnn {
    pub const NAME: &'static str = "reference_cnn";
    pub const VERSION: &'static str = "1";

    pub fn new(resolution: u32, num_classes: usize, seed: u64) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidArgument(format!("input resolution {resolution} is below 2")));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 classes, got {num_classes}")));
        }
        let mut rng = derived_rng(seed, &[b"reference_cnn.init"]);
        let mut uniform = |n: usize, fan_in: usize, gain: f64| -> Vec<f64> {
            let bound = (gain / fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let conv1 = uniform(CONV1_CHANNELS * IN_CHANNELS * 9, IN_CHANNELS * 9, 6.0);
        let conv2 = uniform(CONV2_CHANNELS * CONV1_CHANNELS * 9, CONV1_CHANNELS * 9, 6.0);
        let head = uniform(num_classes * CONV2_CHANNELS, CONV2_CHANNELS, 3.0);
        let tensor = |name: &str, group, values| ParamTensor {
            name: name.to_string(),
            group,
            values,
        };
        Ok(ReferenceCnn {
            resolution,
            num_classes,
            params: vec![
                tensor("conv1.weight", ParamGroup::Backbone, conv1),
                tensor("conv1.bias", ParamGroup::Backbone, vec![0.0; CONV1_CHANNELS]),
                tensor("conv2.weight", ParamGroup::Backbone, conv2),
                tensor("conv2.bias", ParamGroup::Backbone, vec![0.0; CONV2_CHANNELS]),
                tensor("head.weight", ParamGroup::Head, head),
                tensor("head.bias", ParamGroup::Head, vec![0.0; num_classes]),
            ],
        })
    }

    fn check_input(&self, image: &RgbImage) -> Result<()> {
        if image.dimensions() != (self.resolution, self.resolution) {
            return Err(Error::InvalidArgument(format!(
                "expected a {r}x{r} input, got {:?}",
                image.dimensions(),
                r = self.resolution
            )));
        }
        Ok(())
    }

    fn forward(&self, image: &RgbImage) -> Trace {
        let s = self.resolution as usize;
        let plane = s * s;
        let mut input = vec![0.0; IN_CHANNELS * plane];
        for (i, p) in image.pixels().enumerate() {
            for c in 0..IN_CHANNELS {
                input[c * plane + i] = f64::from(p[c]) / 127.5 - 1.0;
            }
        }
        let p = &self.params;
        let pre1 = conv3x3(&input, IN_CHANNELS, s, s, &p[CONV1_W].values, &p[CONV1_B].values, CONV1_CHANNELS);
        let act1: Vec<f64> = pre1.iter().map(|v| v.max(0.0)).collect();
        let (pooled, pool_argmax, ps) = maxpool2(&act1, CONV1_CHANNELS, s, s);
        let pre2 = conv3x3(&pooled, CONV1_CHANNELS, ps.0, ps.1, &p[CONV2_W].values, &p[CONV2_B].values, CONV2_CHANNELS);
        let area = (ps.0 * ps.1) as f64;
        let features: Vec<f64> = pre2
            .chunks(ps.0 * ps.1)
            .map(|ch| ch.iter().map(|v| v.max(0.0)).sum::<f64>() / area)
            .collect();
        let (hw, hb) = (&p[HEAD_W].values, &p[HEAD_B].values);
        let logits = (0..self.num_classes)
            .map(|k| {
                hb[k]
                    + features
                        .iter()
                        .enumerate()
                        .map(|(j, f)| hw[k * CONV2_CHANNELS + j] * f)
                        .sum::<f64>()
            })
            .collect();
        Trace {
            input,
            pre1,
            act1,
            pool_argmax,
            pooled,
            pre2,
            features,
            logits,
        }
    }
}

impl ClassifierBackend for ReferenceCnn {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn version(&self) -> &str {
        Self::VERSION
    }

    fn input_resolution(&self) -> u32 {
        self.resolution
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn logits(&self, image: &RgbImage) -> Result<Vec<f64>> {
        self.check_input(image)?;
        Ok(self.forward(image).logits)
    }

    fn backward(&self, image: &RgbImage, target: usize) -> Result<BackwardPass> {
        self.check_input(image)?;
        if target >= self.num_classes {
            return Err(Error::InvalidArgument(format!("target class {target} out of range")));
        }
        let t = self.forward(image);
        let s = self.resolution as usize;
        let (h2, w2) = (s / 2, s / 2);
        let p = &self.params;

        let probs = softmax(&t.logits);
        let loss = -probs[target].max(f64::MIN_POSITIVE).ln();
        let mut d_logits = probs;
        d_logits[target] -= 1.0;

        let mut g_head_w = vec![0.0; self.num_classes * CONV2_CHANNELS];
        let mut d_features = [0.0; CONV2_CHANNELS];
        for (k, dz) in d_logits.iter().enumerate() {
            for j in 0..CONV2_CHANNELS {
                g_head_w[k * CONV2_CHANNELS + j] = dz * t.features[j];
                d_features[j] += dz * p[HEAD_W].values[k * CONV2_CHANNELS + j];
            }
        }

        let area = (h2 * w2) as f64;
        let mut d_pre2 = vec![0.0; t.pre2.len()];
        for (i, (d, pre)) in d_pre2.iter_mut().zip(&t.pre2).enumerate() {
            if *pre > 0.0 {
                *d = d_features[i / (h2 * w2)] / area;
            }
        }
        let (g_conv2_w, g_conv2_b, d_pooled) = conv3x3_backward(
            &t.pooled,
            CONV1_CHANNELS,
            h2,
            w2,
            &p[CONV2_W].values,
            CONV2_CHANNELS,
            &d_pre2,
            true,
        );

        let mut d_pre1 = vec![0.0; t.act1.len()];
        for (g, &src) in d_pooled.iter().zip(&t.pool_argmax) {
            d_pre1[src] += g;
        }
        for (d, pre) in d_pre1.iter_mut().zip(&t.pre1) {
            if *pre <= 0.0 {
                *d = 0.0;
            }
        }
        let (g_conv1_w, g_conv1_b, _) = conv3x3_backward(
            &t.input,
            IN_CHANNELS,
            s,
            s,
            &p[CONV1_W].values,
            CONV1_CHANNELS,
            &d_pre1,
            false,
        );

        Ok(BackwardPass {
            loss,
            logits: t.logits,
            gradients: vec![g_conv1_w, g_conv1_b, g_conv2_w, g_conv2_b, g_head_w, d_logits],
        })
    }

    fn parameters(&self) -> &[ParamTensor] {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.params
    }

    fn clone_box(&self) -> Box<dyn ClassifierBackend> {
        Box::new(self.clone())
    }
}

/// Valid output range `[lo, hi)` for a kernel offset `d` over a line of length `n`.
fn span(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)).max(0) as usize;
    (lo, hi.max(lo))
}

/// Same-padded 3x3 convolution over `[cin, h, w]`.
fn conv3x3(input: &[f64], cin: usize, h: usize, w: usize, weight: &[f64], bias: &[f64], cout: usize) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; cout * plane];
    for o in 0..cout {
        let out_plane = &mut out[o * plane..(o + 1) * plane];
        out_plane.fill(bias[o]);
        for c in 0..cin {
            let in_plane = &input[c * plane..(c + 1) * plane];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = span(h, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = span(w, dx);
                    let wv = weight[((o * cin + c) * 3 + ky) * 3 + kx];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let dst = &mut out_plane[y * w + x0..y * w + x1];
                        let src = &in_plane[sy * w + (x0 as isize + dx) as usize..];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`conv3x3`] w.r.t. weight, bias and (optionally) input.
#[allow(clippy::too_many_arguments)]
fn conv3x3_backward(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    cout: usize,
    d_out: &[f64],
    want_input_grad: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let plane = h * w;
    let mut g_w = vec![0.0; weight.len()];
    let mut g_b = vec![0.0; cout];
    let mut d_in = vec![0.0; if want_input_grad { input.len() } else { 0 }];
    for o in 0..cout {
        let dout_plane = &d_out[o * plane..(o + 1) * plane];
        g_b[o] = dout_plane.iter().sum();
        for c in 0..cin {
            let in_plane = &input[c * plane..(c + 1) * plane];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = span(h, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = span(w, dx);
                    let wi = ((o * cin + c) * 3 + ky) * 3 + kx;
                    let wv = weight[wi];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        let g = &dout_plane[y * w + x0..y * w + x1];
                        let src = &in_plane[sy * w + sx0..];
                        acc += g.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                        if want_input_grad {
                            let dst = &mut d_in[c * plane + sy * w + sx0..];
                            for (d, gv) in dst.iter_mut().zip(g) {
                                *d += wv * gv;
                            }
                        }
                    }
                    g_w[wi] = acc;
                }
            }
        }
    }
    (g_w, g_b, d_in)
}

/// 2x2 max pooling (trailing odd row/column dropped); returns the flat index
/// of each window's first maximum.
fn maxpool2(input: &[f64], channels: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>, (usize, usize)) {
    let (h2, w2) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(channels * h2 * w2);
    let mut arg = Vec::with_capacity(channels * h2 * w2);
    for c in 0..channels {
        for y in 0..h2 {
            for x in 0..w2 {
                let mut best = c * h * w + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = c * h * w + (2 * y + dy) * w + 2 * x + dx;
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg, (h2, w2))
}
