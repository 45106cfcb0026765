//! Denoising network specifications and their forward/backward passes.
//!
//! A [`NetworkSpec`] is an alternating list of weight layers
//! (fully-connected or 3x3-style same-padded convolutions) and activations,
//! ending in a linear activation. With the residual flag set the network
//! predicts the noise and returns `input - prediction`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::autodiff::{Differentiable, GradientRecord};
use crate::error::{bail, Error, Result};
use crate::math;
use crate::rng::RngStream;
use crate::tensor::{ParamBlock, ParamRole, ParamVector, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    FullyConnected { inputs: usize, outputs: usize },
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, same_padding: bool },
    Relu,
    Linear,
}

impl LayerSpec {
    fn is_activation(&self) -> bool {
        matches!(self, LayerSpec::Relu | LayerSpec::Linear)
    }

    fn weight_count(&self) -> usize {
        match *self {
            LayerSpec::FullyConnected { inputs, outputs } => inputs * outputs,
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => in_channels * out_channels * kernel * kernel,
            _ => 0,
        }
    }

    fn bias_count(&self) -> usize {
        match *self {
            LayerSpec::FullyConnected { outputs, .. } => outputs,
            LayerSpec::Conv2d { out_channels, .. } => out_channels,
            _ => 0,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::FullyConnected { inputs, .. } => inputs,
            LayerSpec::Conv2d { in_channels, kernel, .. } => in_channels * kernel * kernel,
            _ => 0,
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::FullyConnected { inputs, outputs } => write!(f, "fc({},{})", inputs, outputs),
            LayerSpec::Conv2d { in_channels, out_channels, kernel, same_padding } => write!(
                f,
                "conv({},{},{},{})",
                in_channels,
                out_channels,
                kernel,
                if same_padding { "same" } else { "valid" }
            ),
            LayerSpec::Relu => f.write_str("relu"),
            LayerSpec::Linear => f.write_str("linear"),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => return Ok(LayerSpec::Relu),
            "linear" => return Ok(LayerSpec::Linear),
            _ => {}
        }
        let (name, rest) = s.split_once('(').ok_or_else(|| Error::Parse(format!("unknown layer `{}`", s)))?;
        let args: Vec<&str> = rest
            .strip_suffix(')')
            .ok_or_else(|| Error::Parse(format!("unterminated layer `{}`", s)))?
            .split(',')
            .map(str::trim)
            .collect();
        let num = |i: usize| -> Result<usize> {
            args.get(i)
                .and_then(|a| a.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad argument {} in `{}`", i, s)))
        };
        match (name, args.len()) {
            ("fc", 2) => Ok(LayerSpec::FullyConnected { inputs: num(0)?, outputs: num(1)? }),
            ("conv", 4) => {
                let same_padding = match args[3] {
                    "same" => true,
                    "valid" => false,
                    other => bail!(Parse, "unknown padding `{}`", other),
                };
                Ok(LayerSpec::Conv2d { in_channels: num(0)?, out_channels: num(1)?, kernel: num(2)?, same_padding })
            }
            _ => bail!(Parse, "unknown layer `{}`", s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Dense { extent: usize },
    Conv { channels: usize },
}

/// Ordered layers plus the residual flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
    residual: bool,
    family: Family,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>, residual: bool) -> Result<Self> {
        if layers.len() < 2 || layers.len() % 2 != 0 {
            bail!(Argument, "a network alternates weight layers and activations ({} layers given)", layers.len());
        }
        for (i, pair) in layers.chunks(2).enumerate() {
            if pair[0].is_activation() || !pair[1].is_activation() {
                bail!(Argument, "layer pair {} must be a weight layer followed by an activation", i);
            }
        }
        if layers[layers.len() - 1] != LayerSpec::Linear {
            bail!(Argument, "the last activation must be linear");
        }
        let family = match layers[0] {
            LayerSpec::FullyConnected { inputs, .. } => Family::Dense { extent: inputs },
            LayerSpec::Conv2d { in_channels, .. } => Family::Conv { channels: in_channels },
            _ => unreachable!(),
        };
        let mut current = match family {
            Family::Dense { extent } => extent,
            Family::Conv { channels } => channels,
        };
        for (i, layer) in layers.iter().enumerate().step_by(2) {
            match (*layer, family) {
                (LayerSpec::FullyConnected { inputs, outputs }, Family::Dense { .. }) => {
                    if inputs != current || inputs == 0 || outputs == 0 {
                        bail!(Dimension, "layer {}: fc({},{}) after extent {}", i, inputs, outputs, current);
                    }
                    current = outputs;
                }
                (LayerSpec::Conv2d { in_channels, out_channels, kernel, same_padding }, Family::Conv { .. }) => {
                    if in_channels != current || in_channels == 0 || out_channels == 0 {
                        bail!(Dimension, "layer {}: conv({},{}) after {} channels", i, in_channels, out_channels, current);
                    }
                    if kernel % 2 == 0 {
                        bail!(Argument, "layer {}: conv kernel {} must be odd", i, kernel);
                    }
                    if !same_padding {
                        bail!(Argument, "layer {}: denoising convolutions must use same padding", i);
                    }
                    current = out_channels;
                }
                _ => bail!(Argument, "layer {}: fully-connected and convolutional layers cannot be mixed", i),
            }
        }
        let first = match family {
            Family::Dense { extent } => extent,
            Family::Conv { channels } => channels,
        };
        if current != first {
            bail!(Dimension, "output extent {} differs from input extent {}", current, first);
        }
        Ok(NetworkSpec { layers, residual, family })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn residual(&self) -> bool {
        self.residual
    }

    /// Number of weight-bearing layers.
    pub fn depth(&self) -> usize {
        self.layers.len() / 2
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight_count() + l.bias_count()).sum()
    }

    /// On/off state of every ReLU unit for one input, layer by layer.
    /// Finite-difference checks use it to spot steps that cross a kink.
    pub fn relu_pattern(&self, params: &ParamVector, input: &Tensor) -> Result<Vec<bool>> {
        let (_, mut record) = self.forward_recorded(params.values(), input)?;
        let (acts, _) = record.take()?;
        Ok(self
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Relu))
            .flat_map(|(i, _)| acts[i].iter().map(|&v| v > 0.0))
            .collect())
    }

    /// Input length of a fully-connected network, `None` for convolutional ones.
    pub fn dense_extent(&self) -> Option<usize> {
        match self.family {
            Family::Dense { extent } => Some(extent),
            Family::Conv { .. } => None,
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        match self.family {
            Family::Dense { extent } => {
                if x.rank() != 1 || x.len() != extent {
                    bail!(Dimension, "network expects a {}-vector, got shape {:?}", extent, x.shape());
                }
                Ok((extent, 1, 1))
            }
            Family::Conv { channels } => {
                let (c, h, w) = match *x.shape() {
                    [h, w] => (1, h, w),
                    [c, h, w] => (c, h, w),
                    _ => bail!(Dimension, "convolutional network expects an image, got shape {:?}", x.shape()),
                };
                if c != channels {
                    bail!(Dimension, "network expects {} channels, got {}", channels, c);
                }
                Ok((c, h, w))
            }
        }
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "residual={}", if self.residual { 1 } else { 0 })?;
        for layer in &self.layers {
            write!(f, " {}", layer)?;
        }
        Ok(())
    }
}

impl FromStr for NetworkSpec {
    type Err = Error;

    /// Parses the canonical rendering produced by `Display`.
    fn from_str(s: &str) -> Result<Self> {
        let mut tokens = s.split_whitespace();
        let residual = match tokens.next() {
            Some("residual=0") => false,
            Some("residual=1") => true,
            other => bail!(Parse, "expected `residual=0|1`, found {:?}", other),
        };
        let layers = tokens.map(str::parse).collect::<Result<Vec<LayerSpec>>>()?;
        NetworkSpec::new(layers, residual)
    }
}

/// Fully-connected autoencoder `io -> h -> h -> h -> latent -> h -> h -> h -> io`
/// with ReLU hidden layers and a linear output.
pub fn build_autoencoder(io: usize, hidden: usize, latent: usize) -> Result<NetworkSpec> {
    let dims = [io, hidden, hidden, hidden, latent, hidden, hidden, hidden, io];
    let mut layers = Vec::with_capacity(16);
    for (i, w) in dims.windows(2).enumerate() {
        layers.push(LayerSpec::FullyConnected { inputs: w[0], outputs: w[1] });
        layers.push(if i + 2 == dims.len() { LayerSpec::Linear } else { LayerSpec::Relu });
    }
    NetworkSpec::new(layers, false)
}

/// The 30-sample ECG denoising autoencoder (150 hidden units, 25 latent).
pub fn build_ecg_autoencoder() -> NetworkSpec {
    build_autoencoder(30, 150, 25).expect("fixed dimensions are valid")
}

/// Conv denoiser: `conv(1->w)+relu`, `(depth-2) x [conv(w->w)+relu]`,
/// `conv(w->1)` linear, all 3x3 with same padding.
pub fn build_conv_denoiser(depth: usize, width: usize, residual: bool) -> Result<NetworkSpec> {
    if depth < 2 {
        bail!(Argument, "conv denoiser depth must be at least 2, got {}", depth);
    }
    if width < 1 {
        bail!(Argument, "conv denoiser width must be at least 1");
    }
    let conv = |i, o| LayerSpec::Conv2d { in_channels: i, out_channels: o, kernel: 3, same_padding: true };
    let mut layers = vec![conv(1, width), LayerSpec::Relu];
    for _ in 0..depth - 2 {
        layers.push(conv(width, width));
        layers.push(LayerSpec::Relu);
    }
    layers.push(conv(width, 1));
    layers.push(LayerSpec::Linear);
    NetworkSpec::new(layers, residual)
}

impl Differentiable for NetworkSpec {
    fn param_layout(&self) -> Vec<ParamBlock> {
        let mut blocks = Vec::new();
        let mut offset = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            for (role, len) in [(ParamRole::Weight, layer.weight_count()), (ParamRole::Bias, layer.bias_count())] {
                if len > 0 {
                    blocks.push(ParamBlock { layer: i, role, offset, len });
                    offset += len;
                }
            }
        }
        blocks
    }

    fn forward_recorded(&self, params: &[f64], input: &Tensor) -> Result<(Tensor, GradientRecord)> {
        if params.len() != self.param_count() {
            bail!(Dimension, "network has {} parameters, got {}", self.param_count(), params.len());
        }
        let (_, h, w) = self.check_input(input)?;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.data().to_vec());
        let mut offset = 0;
        for layer in &self.layers {
            let x = acts.last().expect("input pushed");
            let y = match *layer {
                LayerSpec::FullyConnected { inputs, outputs } => {
                    let (wts, rest) = params[offset..].split_at(inputs * outputs);
                    let bias = &rest[..outputs];
                    offset += inputs * outputs + outputs;
                    dense_forward(wts, bias, x, inputs, outputs)
                }
                LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                    let nw = in_channels * out_channels * kernel * kernel;
                    let (wts, rest) = params[offset..].split_at(nw);
                    let bias = &rest[..out_channels];
                    offset += nw + out_channels;
                    conv_forward(wts, bias, x, in_channels, out_channels, kernel, h, w)
                }
                LayerSpec::Relu => x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
                LayerSpec::Linear => x.clone(),
            };
            acts.push(y);
        }
        let head = acts.last().expect("at least one layer");
        let out: Vec<f64> = if self.residual {
            input.data().iter().zip(head).map(|(x, n)| x - n).collect()
        } else {
            head.clone()
        };
        if out.iter().any(|v| !v.is_finite()) {
            bail!(Numeric, "network output is not finite");
        }
        let out = Tensor::from_parts_unchecked(input.shape().to_vec(), out);
        Ok((out, GradientRecord::new(acts, vec![h, w])))
    }

    fn backward(&self, params: &[f64], record: &mut GradientRecord, output_grad: &[f64], param_grad: &mut [f64]) -> Result<()> {
        let (acts, extents) = record.take()?;
        if acts.len() != self.layers.len() + 1 || extents.len() != 2 {
            bail!(Dimension, "gradient record does not belong to this network");
        }
        if param_grad.len() != params.len() || params.len() != self.param_count() {
            bail!(Dimension, "parameter gradient buffer has the wrong length");
        }
        let (h, w) = (extents[0], extents[1]);
        let mut g: Vec<f64> = if self.residual { output_grad.iter().map(|v| -v).collect() } else { output_grad.to_vec() };
        let mut offset = params.len();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &acts[i];
            match *layer {
                LayerSpec::FullyConnected { inputs, outputs } => {
                    offset -= inputs * outputs + outputs;
                    let (wts, _) = params[offset..].split_at(inputs * outputs);
                    let (gw, gb) = param_grad[offset..offset + inputs * outputs + outputs].split_at_mut(inputs * outputs);
                    g = dense_backward(wts, gw, gb, x, &g, inputs, outputs, i > 0);
                }
                LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                    let nw = in_channels * out_channels * kernel * kernel;
                    offset -= nw + out_channels;
                    let wts = &params[offset..offset + nw];
                    let (gw, gb) = param_grad[offset..offset + nw + out_channels].split_at_mut(nw);
                    g = conv_backward(wts, gw, gb, x, &g, in_channels, out_channels, kernel, h, w, i > 0);
                }
                LayerSpec::Relu => {
                    for (gi, &xi) in g.iter_mut().zip(x.iter()) {
                        if xi <= 0.0 {
                            *gi = 0.0;
                        }
                    }
                }
                LayerSpec::Linear => {}
            }
        }
        Ok(())
    }
}

fn dense_forward(wts: &[f64], bias: &[f64], x: &[f64], inputs: usize, outputs: usize) -> Vec<f64> {
    (0..outputs)
        .map(|o| {
            let row = &wts[o * inputs..(o + 1) * inputs];
            bias[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    wts: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    x: &[f64],
    gout: &[f64],
    inputs: usize,
    outputs: usize,
    need_input_grad: bool,
) -> Vec<f64> {
    let mut gin = if need_input_grad { vec![0.0; inputs] } else { Vec::new() };
    for o in 0..outputs {
        let go = gout[o];
        gb[o] += go;
        if go == 0.0 {
            continue;
        }
        let grow = &mut gw[o * inputs..(o + 1) * inputs];
        for (gwi, xi) in grow.iter_mut().zip(x) {
            *gwi += go * xi;
        }
        if need_input_grad {
            let row = &wts[o * inputs..(o + 1) * inputs];
            for (gi, wi) in gin.iter_mut().zip(row) {
                *gi += go * wi;
            }
        }
    }
    gin
}

/// Valid source/target index range for a kernel offset `d` in `[-p, p]`
/// along an axis of length `n`: target `t` reads source `t + d`.
#[inline]
fn shifted_range(n: usize, d: isize) -> (usize, usize) {
    let lo = if d < 0 { (-d) as usize } else { 0 };
    let hi = if d > 0 { n.saturating_sub(d as usize) } else { n };
    (lo, hi.max(lo))
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    wts: &[f64],
    bias: &[f64],
    x: &[f64],
    cin: usize,
    cout: usize,
    k: usize,
    h: usize,
    w: usize,
) -> Vec<f64> {
    let plane = h * w;
    let p = (k / 2) as isize;
    let mut y = vec![0.0; cout * plane];
    for o in 0..cout {
        let yo = &mut y[o * plane..(o + 1) * plane];
        yo.iter_mut().for_each(|v| *v = bias[o]);
        for c in 0..cin {
            let xc = &x[c * plane..(c + 1) * plane];
            for ki in 0..k {
                let di = ki as isize - p;
                let (r0, r1) = shifted_range(h, di);
                for kj in 0..k {
                    let dj = kj as isize - p;
                    let wv = wts[((o * cin + c) * k + ki) * k + kj];
                    if wv == 0.0 {
                        continue;
                    }
                    let (c0, c1) = shifted_range(w, dj);
                    for r in r0..r1 {
                        let src = ((r as isize + di) as usize) * w;
                        let dst = &mut yo[r * w + c0..r * w + c1];
                        let s = &xc[(src as isize + c0 as isize + dj) as usize..(src as isize + c1 as isize + dj) as usize];
                        for (d, sv) in dst.iter_mut().zip(s) {
                            *d += wv * sv;
                        }
                    }
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    wts: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    x: &[f64],
    gout: &[f64],
    cin: usize,
    cout: usize,
    k: usize,
    h: usize,
    w: usize,
    need_input_grad: bool,
) -> Vec<f64> {
    let plane = h * w;
    let p = (k / 2) as isize;
    let mut gin = if need_input_grad { vec![0.0; cin * plane] } else { Vec::new() };
    for o in 0..cout {
        let go = &gout[o * plane..(o + 1) * plane];
        gb[o] += go.iter().sum::<f64>();
        for c in 0..cin {
            let xc = &x[c * plane..(c + 1) * plane];
            for ki in 0..k {
                let di = ki as isize - p;
                let (r0, r1) = shifted_range(h, di);
                for kj in 0..k {
                    let dj = kj as isize - p;
                    let widx = ((o * cin + c) * k + ki) * k + kj;
                    let (c0, c1) = shifted_range(w, dj);
                    let mut acc = 0.0;
                    for r in r0..r1 {
                        let src = ((r as isize + di) as usize * w) as isize;
                        let g = &go[r * w + c0..r * w + c1];
                        let s0 = (src + c0 as isize + dj) as usize;
                        let s = &xc[s0..s0 + (c1 - c0)];
                        acc += g.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                        if need_input_grad {
                            let wv = wts[widx];
                            let gi = &mut gin[c * plane + s0..c * plane + s0 + (c1 - c0)];
                            for (d, gv) in gi.iter_mut().zip(g) {
                                *d += wv * gv;
                            }
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    gin
}

/// He-normal weights (variance `2 / fan_in`) and zero biases.
/// Layer `i` draws from the sub-stream `seed -> i`.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> ParamVector {
    let root = RngStream::new(seed);
    let mut values = Vec::with_capacity(spec.param_count());
    for (i, layer) in spec.layers.iter().enumerate() {
        let nw = layer.weight_count();
        if nw == 0 {
            continue;
        }
        let std = math::sqrt(2.0 / layer.fan_in() as f64);
        let mut stream = root.derive(i as u64);
        values.extend((0..nw).map(|_| std * stream.standard_normal()));
        values.extend(core::iter::repeat_n(0.0, layer.bias_count()));
    }
    ParamVector::new(values, spec.param_layout()).expect("layout built from the same spec")
}

/// A network specification together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    spec: NetworkSpec,
    params: ParamVector,
}

impl DenoiserModel {
    pub fn new(spec: NetworkSpec, params: ParamVector) -> Result<Self> {
        if params.layout() != spec.param_layout().as_slice() {
            bail!(Dimension, "parameters ({} values) do not match the network layout ({} values)", params.len(), spec.param_count());
        }
        Ok(DenoiserModel { spec, params })
    }

    /// A model with He-initialised parameters.
    pub fn initialized(spec: NetworkSpec, seed: u64) -> Self {
        let params = init_params(&spec, seed);
        DenoiserModel { spec, params }
    }

    /// A model with all parameters zero.
    pub fn zeroed(spec: NetworkSpec) -> Self {
        let params = ParamVector::new(vec![0.0; spec.param_count()], spec.param_layout()).expect("layout from spec");
        DenoiserModel { spec, params }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn get_params(&self) -> &ParamVector {
        &self.params
    }

    /// Replaces the parameters; the layout must match exactly.
    pub fn set_params(&mut self, theta: ParamVector) -> Result<()> {
        if theta.layout() != self.params.layout() {
            bail!(Dimension, "expected {} parameters in the model layout, got {}", self.params.len(), theta.len());
        }
        self.params = theta;
        Ok(())
    }

    /// Value-style variant of [`set_params`](Self::set_params).
    pub fn with_params(&self, theta: ParamVector) -> Result<Self> {
        let mut m = self.clone();
        m.set_params(theta)?;
        Ok(m)
    }

    /// Replaces parameter values from a flat slice (e.g. a checkpoint).
    pub fn set_param_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.params.len() {
            bail!(Dimension, "expected {} parameters, got {}", self.params.len(), values.len());
        }
        self.params.values_mut().copy_from_slice(values);
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        forward(self, x)
    }
}

/// `x_hat = f_theta(x)`; `x - noise_head(x)` for residual networks.
pub fn forward(model: &DenoiserModel, x: &Tensor) -> Result<Tensor> {
    model.spec.forward_recorded(model.params.values(), x).map(|(out, _)| out)
}

/// Short human-readable description, e.g. for reports.
pub fn describe(spec: &NetworkSpec) -> String {
    format!("{} weight layers, {} parameters{}", spec.depth(), spec.param_count(), if spec.residual { ", residual" } else { "" })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{batch_loss, finite_diff_gradient, gradient, max_relative_error, Pair};

    fn single_fc(w: f64, b: f64) -> DenoiserModel {
        let spec = NetworkSpec::new(vec![LayerSpec::FullyConnected { inputs: 1, outputs: 1 }, LayerSpec::Linear], false).unwrap();
        let params = ParamVector::new(vec![w, b], spec.param_layout()).unwrap();
        DenoiserModel::new(spec, params).unwrap()
    }

    #[test]
    fn ecg_autoencoder_shape() {
        let spec = build_ecg_autoencoder();
        assert_eq!(spec.depth(), 8);
        assert_eq!(spec.dense_extent(), Some(30));
        assert!(!spec.residual());
        let dims = [30usize, 150, 150, 150, 25, 150, 150, 150, 30];
        let by_hand: usize = dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum();
        assert_eq!(by_hand, 107_455);
        assert_eq!(spec.param_count(), by_hand);
        let m = DenoiserModel::initialized(spec, 3);
        let x = Tensor::vector((0..30).map(|i| i as f64 / 30.0).collect()).unwrap();
        assert_eq!(m.forward(&x).unwrap().shape(), &[30]);
    }

    #[test]
    fn conv_denoiser_construction() {
        let spec = build_conv_denoiser(2, 1, false).unwrap();
        assert_eq!(spec.depth(), 2);
        assert_eq!(spec.param_count(), 20);
        assert!(matches!(build_conv_denoiser(1, 4, true), Err(Error::Argument(_))));

        let spec = build_conv_denoiser(5, 16, true).unwrap();
        let m = DenoiserModel::initialized(spec, 1);
        let x = Tensor::zeros(vec![32, 32]).unwrap();
        assert_eq!(m.forward(&x).unwrap().shape(), &[32, 32]);
    }

    #[test]
    fn zero_parameter_cases() {
        let x = Tensor::matrix(5, 7, (0..35).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let plain = DenoiserModel::zeroed(build_conv_denoiser(3, 2, false).unwrap());
        assert!(plain.forward(&x).unwrap().data().iter().all(|&v| v == 0.0));
        let residual = DenoiserModel::zeroed(build_conv_denoiser(3, 2, true).unwrap());
        assert_eq!(residual.forward(&x).unwrap(), x);
    }

    #[test]
    fn hand_evaluated_dense_layer() {
        let m = single_fc(2.0, 1.0);
        let out = m.forward(&Tensor::vector(vec![3.0]).unwrap()).unwrap();
        assert_eq!(out.data(), &[7.0]);
    }

    #[test]
    fn hand_differentiated_dense_layer() {
        // f(x) = W x, x = 1, y = 0, W = 2: L = 4, dL/dW = 2 * 2 * 1
        let m = single_fc(2.0, 0.0);
        let x = Tensor::vector(vec![1.0]).unwrap();
        let y = Tensor::vector(vec![0.0]).unwrap();
        let g = gradient(m.spec(), m.get_params(), &[(&x, &y)]).unwrap();
        assert_eq!(g.values(), &[4.0, 4.0]);
    }

    #[test]
    fn unused_parameter_has_zero_gradient() {
        // second hidden unit is dead (negative bias, zero input weight)
        let spec = NetworkSpec::new(
            vec![
                LayerSpec::FullyConnected { inputs: 1, outputs: 2 },
                LayerSpec::Relu,
                LayerSpec::FullyConnected { inputs: 2, outputs: 1 },
                LayerSpec::Linear,
            ],
            false,
        )
        .unwrap();
        let params = ParamVector::new(vec![1.0, 0.0, 0.0, -1.0, 0.5, 0.7, 0.0], spec.param_layout()).unwrap();
        let x = Tensor::vector(vec![2.0]).unwrap();
        let y = Tensor::vector(vec![0.3]).unwrap();
        let g = gradient(&spec, &params, &[(&x, &y)]).unwrap();
        // weight from the dead unit to the output
        assert_eq!(g.values()[5], 0.0);
        assert_eq!(g.values()[1], 0.0);
    }

    #[test]
    fn canonical_text_round_trip() {
        for spec in [build_ecg_autoencoder(), build_conv_denoiser(4, 3, true).unwrap()] {
            let text = alloc::string::ToString::to_string(&spec);
            assert_eq!(text.parse::<NetworkSpec>().unwrap(), spec);
        }
        assert!("residual=2 fc(1,1) linear".parse::<NetworkSpec>().is_err());
        assert!("residual=0 fc(1,2) linear".parse::<NetworkSpec>().is_err());
        assert!("residual=0 fc(1,1) relu".parse::<NetworkSpec>().is_err());
    }

    #[test]
    fn params_round_trip_and_layout_bijection() {
        let mut m = DenoiserModel::initialized(build_autoencoder(6, 5, 2).unwrap(), 9);
        let before = m.clone();
        m.set_params(m.get_params().clone()).unwrap();
        assert_eq!(m, before);
        let n = m.get_params().len();
        for i in [0, n / 2, n - 1] {
            let mut theta = before.get_params().clone();
            theta.values_mut()[i] += 1.0;
            m.set_params(theta).unwrap();
            let changed = m
                .get_params()
                .values()
                .iter()
                .zip(before.get_params().values())
                .filter(|(a, b)| a.to_bits() != b.to_bits())
                .count();
            assert_eq!(changed, 1);
        }
        assert!(m.set_params(ParamVector::flat(vec![0.0; n])).is_err());
        assert!(m.set_param_values(&[0.0; 3]).is_err());
    }

    #[test]
    fn init_is_seeded_he_normal() {
        let spec = build_ecg_autoencoder();
        let a = init_params(&spec, 42);
        let b = init_params(&spec, 42);
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        for block in a.layout().iter().filter(|b| b.role == ParamRole::Bias) {
            assert!(a.values()[block.offset..block.offset + block.len].iter().all(|&v| v == 0.0));
        }
        // second layer: fc(150,150)
        let block = a.layout().iter().find(|b| b.layer == 2 && b.role == ParamRole::Weight).unwrap();
        let ws = &a.values()[block.offset..block.offset + block.len];
        let mean = ws.iter().sum::<f64>() / ws.len() as f64;
        let var = ws.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (ws.len() - 1) as f64;
        let target = 2.0 / 150.0;
        assert!((var - target).abs() < 0.2 * target, "variance {var}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut s = RngStream::new(77);
        for (spec, shape) in [
            (build_autoencoder(5, 4, 2).unwrap(), vec![5usize]),
            (build_conv_denoiser(3, 2, false).unwrap(), vec![5, 4]),
            (build_conv_denoiser(3, 2, true).unwrap(), vec![4, 6]),
        ] {
            let mut m = DenoiserModel::initialized(spec, s.next_seed());
            // nonzero biases keep pre-activations off the relu kink
            let jittered: Vec<f64> = m.get_params().values().iter().map(|w| w + 0.1 * s.standard_normal()).collect();
            m.set_param_values(&jittered).unwrap();
            let n: usize = shape.iter().product();
            let xs: Vec<Tensor> = (0..2).map(|_| Tensor::new(shape.clone(), (0..n).map(|_| s.standard_normal()).collect()).unwrap()).collect();
            let ys: Vec<Tensor> = (0..2).map(|_| Tensor::new(shape.clone(), (0..n).map(|_| s.standard_normal()).collect()).unwrap()).collect();
            let batch: Vec<Pair<'_>> = xs.iter().zip(&ys).collect();
            let g = gradient(m.spec(), m.get_params(), &batch).unwrap();
            let fd = finite_diff_gradient(|p| batch_loss(m.spec(), p, &batch), m.get_params(), 1e-5).unwrap();
            let err = max_relative_error(&g, &fd, 1e-6);
            assert!(err < 1e-5, "relative error {err}");
        }
    }

    #[test]
    fn forward_rejects_wrong_extent() {
        let m = DenoiserModel::initialized(build_autoencoder(4, 3, 2).unwrap(), 0);
        assert!(matches!(m.forward(&Tensor::vector(vec![0.0; 5]).unwrap()), Err(Error::Dimension(_))));
        let c = DenoiserModel::initialized(build_conv_denoiser(2, 2, false).unwrap(), 0);
        assert!(matches!(c.forward(&Tensor::vector(vec![0.0; 5]).unwrap()), Err(Error::Dimension(_))));
    }

    #[test]
    fn relu_pattern_follows_preactivation_sign() {
        let spec = NetworkSpec::new(
            vec![LayerSpec::FullyConnected { inputs: 1, outputs: 2 }, LayerSpec::Relu, LayerSpec::FullyConnected { inputs: 2, outputs: 1 }, LayerSpec::Linear],
            false,
        )
        .unwrap();
        // units compute x - 1 and 1 - x
        let params = ParamVector::new(vec![1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 0.0], spec.param_layout()).unwrap();
        let at = |x: f64| spec.relu_pattern(&params, &Tensor::vector(vec![x]).unwrap()).unwrap();
        assert_eq!(at(2.0), vec![true, false]);
        assert_eq!(at(0.0), vec![false, true]);
        assert_eq!(at(1.0), vec![false, false]);
    }
}
