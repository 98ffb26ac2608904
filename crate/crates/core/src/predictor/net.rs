//! Convolutional encoder + MLP head with hand-written backpropagation.
//!
//! All weights live in one flat `Vec<f64>`; layers address it by offset.
//! Activations use a channel-major batch layout `[C][B·H·W]` so each
//! convolution is one matrix product per batch item over im2col columns.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

/// Raw log-variances and log-scale are clamped to this range.
pub const LOG_CLAMP: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Side of the square proxy image in pixels.
    pub input_size: usize,
    /// Average-pooling factor applied to the proxy before the encoder.
    pub pool_factor: usize,
    /// Output channels of each stride-2 3×3 convolution stage.
    pub channels: Vec<usize>,
    /// Hidden units of the MLP.
    pub hidden: usize,
    pub num_keypoints: usize,
    pub pose_dim: usize,
    pub num_betas: usize,
    /// Initial log-variance biases for pose and shape.
    pub init_pose_log_var: f64,
    pub init_shape_log_var: f64,
    /// Initial weak-perspective camera `[s, tx, ty]`.
    pub init_camera: [f64; 3],
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input_size: 256,
            pool_factor: 4,
            channels: vec![8, 16, 32],
            hidden: 512,
            num_keypoints: 17,
            pose_dim: 69,
            num_betas: 10,
            init_pose_log_var: 0.09f64.ln(),
            init_shape_log_var: 2.25f64.ln(),
            init_camera: [0.94, 0.0, -0.19],
        }
    }
}

impl NetConfig {
    pub fn in_channels(&self) -> usize {
        1 + self.num_keypoints
    }

    pub fn pooled_size(&self) -> usize {
        self.input_size / self.pool_factor
    }

    fn stage_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.pooled_size()];
        for _ in &self.channels {
            let s = *sizes.last().unwrap();
            sizes.push((s - 1) / 2 + 1);
        }
        sizes
    }

    pub fn feature_dim(&self) -> usize {
        let last = *self.stage_sizes().last().unwrap();
        self.channels.last().copied().unwrap_or(self.in_channels()) * last * last
    }

    /// `2·P + 2·K + 3 + 3`.
    pub fn output_dim(&self) -> usize {
        2 * self.pose_dim + 2 * self.num_betas + 6
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_factor == 0 || self.input_size % self.pool_factor != 0 {
            return Err(Error::Config(format!(
                "pool factor {} must divide input size {}",
                self.pool_factor, self.input_size
            )));
        }
        if self.pooled_size() < 2 || self.hidden == 0 || self.channels.contains(&0) {
            return Err(Error::Config("encoder sizes must be positive".into()));
        }
        if self.feature_dim() < 32 {
            return Err(Error::Config(format!("feature dimension {} is below 32", self.feature_dim())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Layer {
    Conv { cin: usize, cout: usize, size_in: usize, size_out: usize, w: usize, b: usize },
    Dense { nin: usize, nout: usize, w: usize, b: usize, elu: bool },
}

fn layout(cfg: &NetConfig) -> (Vec<Layer>, usize) {
    let mut layers = Vec::new();
    let mut off = 0;
    let sizes = cfg.stage_sizes();
    let mut cin = cfg.in_channels();
    for (i, &cout) in cfg.channels.iter().enumerate() {
        let w = off;
        off += cout * cin * 9;
        layers.push(Layer::Conv { cin, cout, size_in: sizes[i], size_out: sizes[i + 1], w, b: off });
        off += cout;
        cin = cout;
    }
    for (nin, nout, elu) in [(cfg.feature_dim(), cfg.hidden, true), (cfg.hidden, cfg.output_dim(), false)] {
        let w = off;
        off += nin * nout;
        layers.push(Layer::Dense { nin, nout, w, b: off, elu });
        off += nout;
    }
    (layers, off)
}

#[inline]
fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Derivative of ELU expressed through its output.
#[inline]
fn elu_grad_from_output(y: f64) -> f64 {
    if y > 0.0 {
        1.0
    } else {
        y + 1.0
    }
}

/// Source index for each kernel tap of each output pixel, or `usize::MAX`
/// for padding; shared by every channel and batch item.
fn tap_table(size_in: usize, size_out: usize) -> Vec<usize> {
    let mut table = vec![usize::MAX; 9 * size_out * size_out];
    for ky in 0..3 {
        for kx in 0..3 {
            let tap = &mut table[(ky * 3 + kx) * size_out * size_out..][..size_out * size_out];
            for oy in 0..size_out {
                let iy = (2 * oy + ky) as isize - 1;
                if iy < 0 || iy >= size_in as isize {
                    continue;
                }
                for ox in 0..size_out {
                    let ix = (2 * ox + kx) as isize - 1;
                    if ix >= 0 && ix < size_in as isize {
                        tap[oy * size_out + ox] = iy as usize * size_in + ix as usize;
                    }
                }
            }
        }
    }
    table
}

/// Columns `[C·9][H'·W']` of batch item `b`; per-item buffers stay in cache.
fn im2col(input: &Array2<f64>, b: usize, batch: usize, table: &[usize], size_in: usize, size_out: usize) -> Array2<f64> {
    let cin = input.nrows();
    let (hw_in, hw_out) = (size_in * size_in, size_out * size_out);
    let src = input.as_slice().expect("contiguous activations");
    let mut cols = Array2::<f64>::zeros((cin * 9, hw_out));
    let dst = cols.as_slice_mut().expect("contiguous columns");
    for c in 0..cin {
        let plane = &src[(c * batch + b) * hw_in..][..hw_in];
        for k in 0..9 {
            let tap = &table[k * hw_out..(k + 1) * hw_out];
            for (d, &t) in dst[(c * 9 + k) * hw_out..][..hw_out].iter_mut().zip(tap) {
                if t != usize::MAX {
                    *d = plane[t];
                }
            }
        }
    }
    cols
}

/// Adds column gradients of batch item `b` back onto the input layout.
fn col2im_add(cols: &Array2<f64>, out: &mut Array2<f64>, b: usize, batch: usize, table: &[usize], size_in: usize, size_out: usize) {
    let cin = out.nrows();
    let (hw_in, hw_out) = (size_in * size_in, size_out * size_out);
    let src = cols.as_slice().expect("contiguous columns");
    let dst = out.as_slice_mut().expect("contiguous activations");
    for c in 0..cin {
        let plane = &mut dst[(c * batch + b) * hw_in..][..hw_in];
        for k in 0..9 {
            let tap = &table[k * hw_out..(k + 1) * hw_out];
            for (v, &t) in src[(c * 9 + k) * hw_out..][..hw_out].iter().zip(tap) {
                if t != usize::MAX {
                    plane[t] += v;
                }
            }
        }
    }
}

/// Intermediate values kept for the backward pass.
pub struct ForwardCache {
    batch: usize,
    /// Network input in the channel-major layout.
    input: Array2<f64>,
    /// Post-activation outputs of every layer (last one is the raw head).
    acts: Vec<Array2<f64>>,
    /// Flattened encoder features `[B][F]`.
    features: Array2<f64>,
}

impl ForwardCache {
    /// Raw head outputs `[B][output_dim]`.
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("network has layers")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorNet {
    cfg: NetConfig,
    params: Vec<f64>,
    layers: Vec<Layer>,
}

impl PredictorNet {
    /// He-style random initialization; the output layer starts small so the
    /// initial prediction sits at the configured prior.
    pub fn new(cfg: NetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (layers, n) = layout(&cfg);
        let mut params = vec![0.0; n];
        let mut rng = substream(seed, "net-init", 0);
        let last = layers.len() - 1;
        for (i, layer) in layers.iter().enumerate() {
            let (w, fan_in, count) = match *layer {
                Layer::Conv { cin, cout, w, .. } => (w, cin * 9, cin * cout * 9),
                Layer::Dense { nin, nout, w, .. } => (w, nin, nin * nout),
            };
            let scale = if i == last { 0.01 } else { 1.0 } * (2.0 / fan_in as f64).sqrt();
            for p in &mut params[w..w + count] {
                *p = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut net = Self { cfg, params, layers };
        net.reset_output_bias();
        Ok(net)
    }

    fn reset_output_bias(&mut self) {
        let Layer::Dense { b, .. } = *self.layers.last().expect("layers") else { unreachable!() };
        let (p, k) = (self.cfg.pose_dim, self.cfg.num_betas);
        let bias = &mut self.params[b..b + self.cfg.output_dim()];
        bias.iter_mut().for_each(|x| *x = 0.0);
        bias[p..2 * p].iter_mut().for_each(|x| *x = self.cfg.init_pose_log_var);
        bias[2 * p + k..2 * p + 2 * k].iter_mut().for_each(|x| *x = self.cfg.init_shape_log_var);
        let cam = 2 * p + 2 * k + 3;
        bias[cam] = self.cfg.init_camera[0].ln();
        bias[cam + 1] = self.cfg.init_camera[1];
        bias[cam + 2] = self.cfg.init_camera[2];
    }

    pub fn from_params(cfg: NetConfig, params: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let (layers, n) = layout(&cfg);
        Error::check_dim("network parameters", n, params.len())?;
        Ok(Self { cfg, params, layers })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn mat(&self, off: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((rows, cols), &self.params[off..off + rows * cols]).expect("layout")
    }

    /// Pooled inputs are `B` blocks of `[C][S][S]` (S = pooled size).
    pub fn forward(&self, inputs: &[f32], batch: usize) -> Result<ForwardCache> {
        let (c, s) = (self.cfg.in_channels(), self.cfg.pooled_size());
        Error::check_dim("network input", batch * c * s * s, inputs.len())?;
        let hw = s * s;
        let mut x = Array2::<f64>::zeros((c, batch * hw));
        for b in 0..batch {
            for ch in 0..c {
                let src = &inputs[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                let mut dst = x.slice_mut(s![ch, b * hw..(b + 1) * hw]);
                dst.iter_mut().zip(src).for_each(|(d, v)| *d = *v as f64);
            }
        }
        let mut acts = Vec::new();
        let mut features = None;
        let input = x.clone();
        for layer in &self.layers {
            match *layer {
                Layer::Conv { cin, cout, size_in, size_out, w, b } => {
                    let hw = size_out * size_out;
                    let table = tap_table(size_in, size_out);
                    let mut z = Array2::<f64>::zeros((cout, batch * hw));
                    for bi in 0..batch {
                        let col = im2col(&x, bi, batch, &table, size_in, size_out);
                        let mut zb = z.slice_mut(s![.., bi * hw..(bi + 1) * hw]);
                        general_mat_mul(1.0, &self.mat(w, cout, cin * 9), &col, 0.0, &mut zb);
                    }
                    for (mut row, bias) in z.axis_iter_mut(Axis(0)).zip(&self.params[b..b + cout]) {
                        row.mapv_inplace(|v| elu(v + bias));
                    }
                    acts.push(z.clone());
                    x = z;
                }
                Layer::Dense { nin, nout, w, b, elu: act } => {
                    let input = match features {
                        Some(_) => x.clone(),
                        None => {
                            // [C][B·HW] -> [B][C·HW]
                            let ch = x.nrows();
                            let hw = x.ncols() / batch;
                            let mut f = Array2::<f64>::zeros((batch, ch * hw));
                            for bi in 0..batch {
                                for cc in 0..ch {
                                    f.slice_mut(s![bi, cc * hw..(cc + 1) * hw])
                                        .assign(&x.slice(s![cc, bi * hw..(bi + 1) * hw]));
                                }
                            }
                            Error::check_dim("encoder features", nin, f.ncols())?;
                            features = Some(f.clone());
                            f
                        }
                    };
                    let mut z = Array2::<f64>::zeros((batch, nout));
                    general_mat_mul(1.0, &input, &self.mat(w, nout, nin).t(), 0.0, &mut z);
                    let bias = &self.params[b..b + nout];
                    for mut row in z.axis_iter_mut(Axis(0)) {
                        row.iter_mut().zip(bias).for_each(|(v, bb)| *v = if act { elu(*v + bb) } else { *v + bb });
                    }
                    acts.push(z.clone());
                    x = z;
                }
            }
        }
        Ok(ForwardCache { batch, input, acts, features: features.expect("dense layers present") })
    }

    /// Gradient of `Σ_b dOut[b]·output[b]` with respect to all parameters.
    pub fn backward(&self, cache: &ForwardCache, d_out: &Array2<f64>) -> Result<Vec<f64>> {
        let batch = cache.batch;
        Error::check_dim("output gradient rows", batch, d_out.nrows())?;
        Error::check_dim("output gradient columns", self.cfg.output_dim(), d_out.ncols())?;
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = d_out.clone();
        let n_conv = self.cfg.channels.len();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            match *layer {
                Layer::Dense { nin, nout, w, b, elu: act } => {
                    if act {
                        delta.zip_mut_with(&cache.acts[li], |d, y| *d *= elu_grad_from_output(*y));
                    }
                    let input = if li == n_conv { cache.features.view() } else { cache.acts[li - 1].view() };
                    {
                        let mut gw = ArrayViewMut2::from_shape((nout, nin), &mut grad[w..w + nout * nin]).expect("layout");
                        general_mat_mul(1.0, &delta.t(), &input, 0.0, &mut gw);
                    }
                    for (g, col) in grad[b..b + nout].iter_mut().zip(delta.axis_iter(Axis(1))) {
                        *g = col.sum();
                    }
                    let mut d_in = Array2::<f64>::zeros((batch, nin));
                    general_mat_mul(1.0, &delta, &self.mat(w, nout, nin), 0.0, &mut d_in);
                    delta = if li == n_conv {
                        // [B][C·HW] -> [C][B·HW]
                        let ch = self.cfg.channels.last().copied().unwrap_or(0);
                        let hw = nin / ch.max(1);
                        let mut d = Array2::<f64>::zeros((ch, batch * hw));
                        for bi in 0..batch {
                            for cc in 0..ch {
                                d.slice_mut(s![cc, bi * hw..(bi + 1) * hw])
                                    .assign(&d_in.slice(s![bi, cc * hw..(cc + 1) * hw]));
                            }
                        }
                        d
                    } else {
                        d_in
                    };
                }
                Layer::Conv { cin, cout, size_in, size_out, w, b } => {
                    delta.zip_mut_with(&cache.acts[li], |d, y| *d *= elu_grad_from_output(*y));
                    let hw = size_out * size_out;
                    let table = tap_table(size_in, size_out);
                    let x = if li == 0 { &cache.input } else { &cache.acts[li - 1] };
                    let mut d_prev = (li > 0).then(|| Array2::<f64>::zeros((cin, batch * size_in * size_in)));
                    {
                        let mut gw = ArrayViewMut2::from_shape((cout, cin * 9), &mut grad[w..w + cout * cin * 9])
                            .expect("layout");
                        for bi in 0..batch {
                            let col = im2col(x, bi, batch, &table, size_in, size_out);
                            let db = delta.slice(s![.., bi * hw..(bi + 1) * hw]);
                            general_mat_mul(1.0, &db, &col.t(), 1.0, &mut gw);
                            if let Some(d) = d_prev.as_mut() {
                                let mut d_cols = Array2::<f64>::zeros((cin * 9, hw));
                                general_mat_mul(1.0, &self.mat(w, cout, cin * 9).t(), &db, 0.0, &mut d_cols);
                                col2im_add(&d_cols, d, bi, batch, &table, size_in, size_out);
                            }
                        }
                    }
                    for (g, row) in grad[b..b + cout].iter_mut().zip(delta.axis_iter(Axis(0))) {
                        *g = row.sum();
                    }
                    if let Some(d) = d_prev {
                        delta = d;
                    }
                }
            }
        }
        Ok(grad)
    }

    /// Raw head outputs for a batch of pooled inputs.
    pub fn predict_raw(&self, inputs: &[f32], batch: usize) -> Result<Array2<f64>> {
        Ok(self.forward(inputs, batch)?.acts.pop_last())
    }
}

trait PopLast {
    fn pop_last(self) -> Array2<f64>;
}

impl PopLast for Vec<Array2<f64>> {
    fn pop_last(mut self) -> Array2<f64> {
        self.pop().expect("network has layers")
    }
}
