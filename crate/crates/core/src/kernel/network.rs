use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::params::{LayerShape, ParameterVector};
use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub width: usize,
    #[serde(default)]
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub name: String,
    pub output_dim: usize,
}

/// A multilayer perceptron: a shared trunk of hidden layers feeding one or
/// more linear heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: Vec<HiddenLayer>,
    pub heads: Vec<Head>,
}

/// Head outputs keyed by head name.
pub type HeadOutputs = BTreeMap<String, Vec<f64>>;

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden: Vec<HiddenLayer>, heads: Vec<Head>) -> Result<Self> {
        let spec = Self { input_dim, hidden, heads };
        spec.validate()?;
        Ok(spec)
    }

    /// Trunk of tanh layers with the given widths.
    pub fn mlp(input_dim: usize, widths: &[usize], heads: &[(&str, usize)]) -> Result<Self> {
        Self::new(
            input_dim,
            widths.iter().map(|&width| HiddenLayer { width, activation: Activation::Tanh }).collect(),
            heads.iter().map(|&(name, output_dim)| Head { name: name.to_string(), output_dim }).collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(contract("network input_dim must be positive"));
        }
        if self.heads.is_empty() {
            return Err(contract("network needs at least one head"));
        }
        if self.hidden.iter().any(|h| h.width == 0) {
            return Err(contract("hidden widths must be positive"));
        }
        for (i, head) in self.heads.iter().enumerate() {
            if head.output_dim == 0 {
                return Err(contract(format!("head `{}` has zero outputs", head.name)));
            }
            if self.heads[..i].iter().any(|h| h.name == head.name) {
                return Err(contract(format!("duplicate head name `{}`", head.name)));
            }
        }
        Ok(())
    }

    fn trunk_width(&self) -> usize {
        self.hidden.last().map_or(self.input_dim, |h| h.width)
    }

    pub fn layout(&self) -> Vec<LayerShape> {
        let mut layout = Vec::with_capacity(2 * (self.hidden.len() + self.heads.len()));
        let mut fan_in = self.input_dim;
        for (l, layer) in self.hidden.iter().enumerate() {
            layout.push(LayerShape::new(format!("hidden{l}.weight"), vec![layer.width, fan_in]));
            layout.push(LayerShape::new(format!("hidden{l}.bias"), vec![layer.width]));
            fan_in = layer.width;
        }
        for head in &self.heads {
            layout.push(LayerShape::new(format!("head.{}.weight", head.name), vec![head.output_dim, fan_in]));
            layout.push(LayerShape::new(format!("head.{}.bias", head.name), vec![head.output_dim]));
        }
        layout
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(LayerShape::numel).sum()
    }

    pub fn head_index(&self, name: &str) -> Option<usize> {
        self.heads.iter().position(|h| h.name == name)
    }

    fn check_params(&self, params: &ParameterVector) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(contract(format!(
                "parameter vector has {} values, network needs {}",
                params.len(),
                self.param_count()
            )));
        }
        Ok(())
    }
}

/// Intermediate activations of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    input: Vec<f64>,
    hidden: Vec<Vec<f64>>,
    heads: Vec<Vec<f64>>,
}

impl Trace {
    /// Output of the head at `index` (declaration order).
    pub fn head(&self, index: usize) -> &[f64] {
        &self.heads[index]
    }

    pub fn heads(&self) -> &[Vec<f64>] {
        &self.heads
    }

    pub fn input(&self) -> &[f64] {
        &self.input
    }
}

// y = W x + b with W stored row-major as [out, in].
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let fan_in = x.len();
    out.clear();
    out.extend(b.iter().enumerate().map(|(o, &bias)| {
        let row = &w[o * fan_in..(o + 1) * fan_in];
        bias + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>()
    }));
}

/// Forward pass that records what [`backward_into`] needs.
pub fn forward_trace(spec: &NetworkSpec, params: &ParameterVector, input: &[f64]) -> Result<Trace> {
    spec.check_params(params)?;
    if input.len() != spec.input_dim {
        return Err(contract(format!("input has length {}, network expects {}", input.len(), spec.input_dim)));
    }
    let p = params.values();
    let mut offset = 0;
    let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(spec.hidden.len());
    for (l, layer) in spec.hidden.iter().enumerate() {
        let x: &[f64] = if l == 0 { input } else { &hidden[l - 1] };
        let fan_in = x.len();
        let w = &p[offset..offset + layer.width * fan_in];
        offset += layer.width * fan_in;
        let b = &p[offset..offset + layer.width];
        offset += layer.width;
        let mut y = Vec::with_capacity(layer.width);
        affine(w, b, x, &mut y);
        y.iter_mut().for_each(|v| *v = layer.activation.apply(*v));
        hidden.push(y);
    }
    let x: &[f64] = hidden.last().map(Vec::as_slice).unwrap_or(input);
    let fan_in = spec.trunk_width();
    let mut heads = Vec::with_capacity(spec.heads.len());
    for head in &spec.heads {
        let w = &p[offset..offset + head.output_dim * fan_in];
        offset += head.output_dim * fan_in;
        let b = &p[offset..offset + head.output_dim];
        offset += head.output_dim;
        let mut y = Vec::with_capacity(head.output_dim);
        affine(w, b, x, &mut y);
        heads.push(y);
    }
    Ok(Trace { input: input.to_vec(), hidden, heads })
}

/// Evaluates every head of the network on one input.
pub fn forward(spec: &NetworkSpec, params: &ParameterVector, input: &[f64]) -> Result<HeadOutputs> {
    let trace = forward_trace(spec, params, input)?;
    Ok(spec.heads.iter().map(|h| h.name.clone()).zip(trace.heads).collect())
}

/// Accumulates dL/dθ into `grad` given dL/d(head output) for every head, in
/// declaration order.
pub fn backward_into(
    spec: &NetworkSpec,
    params: &ParameterVector,
    trace: &Trace,
    head_gradients: &[&[f64]],
    grad: &mut [f64],
) -> Result<()> {
    spec.check_params(params)?;
    if grad.len() != params.len() {
        return Err(contract("gradient buffer does not match parameter count"));
    }
    if head_gradients.len() != spec.heads.len() {
        return Err(contract(format!("got {} head gradients for {} heads", head_gradients.len(), spec.heads.len())));
    }
    for (head, g) in spec.heads.iter().zip(head_gradients) {
        if g.len() != head.output_dim {
            return Err(contract(format!("gradient for head `{}` has wrong length", head.name)));
        }
    }

    let p = params.values();
    let trunk_out: &[f64] = trace.hidden.last().map(Vec::as_slice).unwrap_or(&trace.input);
    let fan_in = trunk_out.len();

    // Offsets of each hidden layer's weight block, and of the first head.
    let mut layer_offsets = Vec::with_capacity(spec.hidden.len());
    let mut offset = 0;
    let mut prev = spec.input_dim;
    for layer in &spec.hidden {
        layer_offsets.push((offset, prev));
        offset += layer.width * prev + layer.width;
        prev = layer.width;
    }

    let mut delta = vec![0.0; fan_in];
    for (head, g) in spec.heads.iter().zip(head_gradients) {
        let w_len = head.output_dim * fan_in;
        let w = &p[offset..offset + w_len];
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            let gw = &mut grad[offset + o * fan_in..offset + (o + 1) * fan_in];
            for (gwi, &xi) in gw.iter_mut().zip(trunk_out) {
                *gwi += go * xi;
            }
            for (d, &wi) in delta.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                *d += go * wi;
            }
        }
        for (gb, &go) in grad[offset + w_len..offset + w_len + head.output_dim].iter_mut().zip(g.iter()) {
            *gb += go;
        }
        offset += w_len + head.output_dim;
    }

    for (l, layer) in spec.hidden.iter().enumerate().rev() {
        let (w_off, layer_in) = layer_offsets[l];
        let y = &trace.hidden[l];
        let x: &[f64] = if l == 0 { &trace.input } else { &trace.hidden[l - 1] };
        for (d, &yo) in delta.iter_mut().zip(y) {
            *d *= layer.activation.derivative_from_output(yo);
        }
        let w_len = layer.width * layer_in;
        for (o, &d) in delta.iter().enumerate() {
            let gw = &mut grad[w_off + o * layer_in..w_off + (o + 1) * layer_in];
            for (gwi, &xi) in gw.iter_mut().zip(x) {
                *gwi += d * xi;
            }
        }
        for (gb, &d) in grad[w_off + w_len..w_off + w_len + layer.width].iter_mut().zip(&delta) {
            *gb += d;
        }
        if l > 0 {
            let w = &p[w_off..w_off + w_len];
            let mut next = vec![0.0; layer_in];
            for (o, &d) in delta.iter().enumerate() {
                for (n, &wi) in next.iter_mut().zip(&w[o * layer_in..(o + 1) * layer_in]) {
                    *n += d * wi;
                }
            }
            delta = next;
        }
    }
    Ok(())
}

/// Gradient of a scalar loss with respect to the parameters, given the
/// loss gradient with respect to each named head output.
pub fn backward(
    spec: &NetworkSpec,
    params: &ParameterVector,
    input: &[f64],
    head_gradients: &HeadOutputs,
) -> Result<ParameterVector> {
    let trace = forward_trace(spec, params, input)?;
    let mut ordered = Vec::with_capacity(spec.heads.len());
    for head in &spec.heads {
        let g = head_gradients
            .get(&head.name)
            .ok_or_else(|| contract(format!("missing gradient for head `{}`", head.name)))?;
        ordered.push(g.as_slice());
    }
    let mut grad = params.zeros_like();
    backward_into(spec, params, &trace, &ordered, grad.values_mut())?;
    Ok(grad)
}

/// Orthonormal rows (or columns, whichever is fewer) scaled by `gain`.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    // Orthonormalize `count` random vectors of length `len` with modified Gram-Schmidt.
    let (count, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for u in &basis {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    let mut w = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            w[r * cols + c] = gain * if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
    w
}

/// Orthogonal initialization: hidden weights scaled by `hidden_gain`, each head
/// by `head_gain(name)`, all biases zero.
pub fn orthogonal_init<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    hidden_gain: f64,
    head_gain: impl Fn(&str) -> f64,
    rng: &mut R,
) -> ParameterVector {
    let mut params = ParameterVector::zeros(spec.layout());
    let mut fan_in = spec.input_dim;
    for (l, layer) in spec.hidden.iter().enumerate() {
        let w = orthogonal_matrix(layer.width, fan_in, hidden_gain, rng);
        params.segment_mut(&format!("hidden{l}.weight")).expect("layout").copy_from_slice(&w);
        fan_in = layer.width;
    }
    for head in &spec.heads {
        let w = orthogonal_matrix(head.output_dim, fan_in, head_gain(&head.name), rng);
        params.segment_mut(&format!("head.{}.weight", head.name)).expect("layout").copy_from_slice(&w);
    }
    params
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{compare_gradients, finite_difference_gradient};
    use crate::rng::seeded;

    fn affine_spec(input: usize, output: usize) -> NetworkSpec {
        NetworkSpec::mlp(input, &[], &[("out", output)]).unwrap()
    }

    #[test]
    fn identity_head_passes_input_through() {
        let spec = affine_spec(2, 2);
        let params = ParameterVector::new(spec.layout(), vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let out = forward(&spec, &params, &[1.0, 2.0]).unwrap();
        assert_eq!(out["out"], vec![1.0, 2.0]);
    }

    #[test]
    fn zero_parameters_give_zero_outputs() {
        let spec = NetworkSpec::mlp(3, &[4, 5], &[("a", 2), ("b", 1)]).unwrap();
        let params = ParameterVector::zeros(spec.layout());
        let out = forward(&spec, &params, &[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(out["a"], vec![0.0, 0.0]);
        assert_eq!(out["b"], vec![0.0]);
    }

    #[test]
    fn affine_with_bias() {
        let spec = affine_spec(2, 2);
        let params = ParameterVector::new(spec.layout(), vec![1.0, 0.0, 0.0, 1.0, 0.5, -0.5]).unwrap();
        let out = forward(&spec, &params, &[1.0, 1.0]).unwrap();
        assert_eq!(out["out"], vec![1.5, 0.5]);
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let spec = affine_spec(2, 2);
        let params = ParameterVector::zeros(spec.layout());
        assert!(matches!(forward(&spec, &params, &[1.0]), Err(crate::Error::Contract(_))));
        let short = ParameterVector::zeros(affine_spec(2, 1).layout());
        assert!(forward(&spec, &short, &[1.0, 2.0]).is_err());
        assert!(NetworkSpec::mlp(2, &[0], &[("a", 1)]).is_err());
        assert!(NetworkSpec::mlp(2, &[3], &[]).is_err());
    }

    #[test]
    fn affine_backward_matches_hand_chain_rule() {
        let spec = affine_spec(2, 1);
        let params = ParameterVector::new(spec.layout(), vec![0.3, -0.7, 0.1]).unwrap();
        let grads: HeadOutputs = [("out".to_string(), vec![1.0])].into();
        let g = backward(&spec, &params, &[1.0, 2.0], &grads).unwrap();
        assert_eq!(g.segment("head.out.weight").unwrap(), &[1.0, 2.0]);
        assert_eq!(g.segment("head.out.bias").unwrap(), &[1.0]);
    }

    #[test]
    fn zero_head_gradient_gives_zero_parameter_gradient() {
        let spec = NetworkSpec::mlp(3, &[4], &[("a", 2)]).unwrap();
        let params = orthogonal_init(&spec, 1.0, |_| 1.0, &mut seeded(3));
        let grads: HeadOutputs = [("a".to_string(), vec![0.0, 0.0])].into();
        let g = backward(&spec, &params, &[0.1, 0.2, 0.3], &grads).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_head_gradient_is_an_error() {
        let spec = NetworkSpec::mlp(2, &[3], &[("a", 2), ("b", 1)]).unwrap();
        let params = ParameterVector::zeros(spec.layout());
        let grads: HeadOutputs = [("a".to_string(), vec![1.0, 0.0])].into();
        assert!(matches!(backward(&spec, &params, &[0.0, 0.0], &grads), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn backward_matches_finite_differences_on_a_deep_net() {
        let spec = NetworkSpec::mlp(3, &[5, 4], &[("pi", 3), ("v", 1)]).unwrap();
        let params = orthogonal_init(&spec, 1.0, |_| 0.5, &mut seeded(11));
        let input = [0.4, -0.2, 0.9];
        let gh: HeadOutputs = [("pi".to_string(), vec![0.3, -1.0, 0.5]), ("v".to_string(), vec![2.0])].into();
        let analytic = backward(&spec, &params, &input, &gh).unwrap();
        let loss = |p: &ParameterVector| {
            let out = forward(&spec, p, &input).unwrap();
            gh.iter().map(|(k, g)| g.iter().zip(&out[k]).map(|(a, b)| a * b).sum::<f64>()).sum()
        };
        let numeric = finite_difference_gradient(loss, &params, 1e-5).unwrap();
        let report = compare_gradients(analytic.values(), numeric.values(), 1e-8);
        assert!(report.max_rel_diff < 1e-6, "{report:?}");
    }

    #[test]
    fn forward_is_bit_reproducible() {
        let spec = NetworkSpec::mlp(4, &[8, 8], &[("a", 3)]).unwrap();
        let params = orthogonal_init(&spec, 1.0, |_| 0.01, &mut seeded(5));
        let x = [0.1, 0.2, -0.3, 0.4];
        let a = forward(&spec, &params, &x).unwrap();
        let b = forward(&spec, &params, &x).unwrap();
        assert_eq!(
            a["a"].iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b["a"].iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn orthogonal_init_has_orthonormal_rows() {
        let spec = NetworkSpec::mlp(8, &[4], &[("a", 2)]).unwrap();
        let params = orthogonal_init(&spec, 1.0, |_| 0.01, &mut seeded(1));
        let w = params.segment("hidden0.weight").unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..8).map(|c| w[i * 8 + c] * w[j * 8 + c]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-12);
            }
        }
        let head = params.segment("head.a.weight").unwrap();
        let norm: f64 = head[..4].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 0.01).abs() < 1e-12);
        assert!(params.segment("hidden0.bias").unwrap().iter().all(|&b| b == 0.0));
    }
}
