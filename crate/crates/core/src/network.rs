//! Feedforward ReLU classifiers: concrete evaluation, classification and
//! interval (box) propagation.
//!
//! Every layer but the last applies `relu(v) = max(0, v)` after its affine
//! map; the last layer is the identity so outputs are raw confidences. A
//! label is the index of its output node.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Dense affine layer. `weights[r]` is the incoming weight row of output node `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(weights: Vec<Vec<f64>>, biases: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.len() != biases.len() {
            return Err(Error::InvalidNetwork(format!(
                "{} weight rows but {} biases",
                weights.len(),
                biases.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::InvalidNetwork("layer with no nodes".into()));
        }
        let cols = weights[0].len();
        if weights.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidNetwork("ragged weight matrix".into()));
        }
        if weights.iter().flatten().chain(biases.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer parameters"));
        }
        Ok(Layer { weights, biases, activation })
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn in_size(&self) -> usize {
        self.weights[0].len()
    }

    pub fn out_size(&self) -> usize {
        self.weights.len()
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    input_dim: usize,
}

/// Outcome of [`Network::classify`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Label(usize),
    NoUniqueLabel,
}

impl Network {
    /// Validates layer shapes and activations: all hidden layers ReLU, last identity.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::InvalidNetwork("no layers".into()));
        };
        let input_dim = first.in_size();
        if input_dim == 0 {
            return Err(Error::InvalidNetwork("zero input dimension".into()));
        }
        let mut prev = input_dim;
        for (k, layer) in layers.iter().enumerate() {
            if layer.in_size() != prev {
                return Err(Error::InvalidNetwork(format!(
                    "layer {k} expects {} inputs, previous layer has {prev}",
                    layer.in_size()
                )));
            }
            let want = if k + 1 == layers.len() { Activation::Identity } else { Activation::Relu };
            if layer.activation != want {
                return Err(Error::InvalidNetwork(format!("layer {k} must use {want:?}")));
            }
            prev = layer.out_size();
        }
        Ok(Network { layers, input_dim })
    }

    /// Builds a network from `(weights, biases)` pairs, assigning activations by position.
    pub fn from_parts(parts: Vec<(Vec<Vec<f64>>, Vec<f64>)>) -> Result<Self> {
        let n = parts.len();
        let layers = parts
            .into_iter()
            .enumerate()
            .map(|(k, (w, b))| {
                let act = if k + 1 == n { Activation::Identity } else { Activation::Relu };
                Layer::new(w, b, act)
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Layer::out_size).unwrap_or(0)
    }

    /// Labels in output order.
    pub fn labels(&self) -> std::ops::Range<usize> {
        0..self.output_dim()
    }

    /// Total number of hidden (ReLU) nodes.
    pub fn relu_count(&self) -> usize {
        self.layers[..self.layers.len() - 1].iter().map(Layer::out_size).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension { expected: self.input_dim, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input"));
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.affine(&cur);
            if layer.activation == Activation::Relu {
                cur.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(cur)
    }

    /// Pre-activation values of every layer (hidden layers followed by the output layer).
    pub fn pre_activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let mut out = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let pre = layer.affine(&cur);
            cur = match layer.activation {
                Activation::Relu => pre.iter().map(|v| v.max(0.0)).collect(),
                Activation::Identity => pre.clone(),
            };
            out.push(pre);
        }
        Ok(out)
    }

    pub fn confidence(&self, x: &[f64], label: usize) -> Result<f64> {
        if label >= self.output_dim() {
            return Err(Error::UnknownLabel(label));
        }
        Ok(self.evaluate(x)?[label])
    }

    /// The label whose confidence strictly exceeds every other, if any.
    pub fn classify(&self, x: &[f64]) -> Result<Classification> {
        Ok(classify_outputs(&self.evaluate(x)?))
    }

    /// Sound interval bounds for every node over `region`.
    pub fn interval_evaluate(&self, region: &Hyperbox) -> Result<Vec<LayerBounds>> {
        if region.dim() != self.input_dim {
            return Err(Error::Dimension { expected: self.input_dim, got: region.dim() });
        }
        let mut lo = region.lower.clone();
        let mut hi = region.upper.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut pre = Vec::with_capacity(layer.out_size());
            for (row, b) in layer.weights.iter().zip(&layer.biases) {
                let (mut l, mut h) = (*b, *b);
                for ((w, xl), xh) in row.iter().zip(&lo).zip(&hi) {
                    if *w >= 0.0 {
                        l += w * xl;
                        h += w * xh;
                    } else {
                        l += w * xh;
                        h += w * xl;
                    }
                }
                pre.push((l, h));
            }
            let post: Vec<(f64, f64)> = match layer.activation {
                Activation::Relu => pre.iter().map(|&(l, h)| (l.max(0.0), h.max(0.0))).collect(),
                Activation::Identity => pre.clone(),
            };
            lo = post.iter().map(|b| b.0).collect();
            hi = post.iter().map(|b| b.1).collect();
            out.push(LayerBounds { pre, post });
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("relunet v1\n");
        let sizes: Vec<String> = std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(Layer::out_size))
            .map(|n| n.to_string())
            .collect();
        s.push_str(&sizes.join(" "));
        s.push('\n');
        for layer in &self.layers {
            for (row, b) in layer.weights.iter().zip(&layer.biases) {
                let mut first = true;
                for v in row.iter().chain(std::iter::once(b)) {
                    if !first {
                        s.push(' ');
                    }
                    first = false;
                    let _ = write!(s, "{v:?}");
                }
                s.push('\n');
            }
        }
        s
    }

    /// Parses the `relunet v1` text format. Errors carry 1-based line numbers.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (ln, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
        if header != "relunet v1" {
            return Err(Error::Parse { line: ln, msg: format!("bad header {header:?}") });
        }
        let (ln, size_line) =
            lines.next().ok_or(Error::Parse { line: ln + 1, msg: "missing layer sizes".into() })?;
        let sizes = size_line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { line: ln, msg: format!("bad layer size: {e}") })?;
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Parse { line: ln, msg: "need at least two positive layer sizes".into() });
        }

        let mut parts = Vec::with_capacity(sizes.len() - 1);
        let mut last_line = ln;
        for pair in sizes.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let mut weights = Vec::with_capacity(n_out);
            let mut biases = Vec::with_capacity(n_out);
            for _ in 0..n_out {
                let (ln, row) = lines.next().ok_or(Error::Parse {
                    line: last_line + 1,
                    msg: "unexpected end of file".into(),
                })?;
                last_line = ln;
                let vals = row
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Parse { line: ln, msg: format!("bad number: {e}") })?;
                if vals.len() != n_in + 1 {
                    return Err(Error::Parse {
                        line: ln,
                        msg: format!("expected {} values, found {}", n_in + 1, vals.len()),
                    });
                }
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parse { line: ln, msg: "non-finite value".into() });
                }
                biases.push(vals[n_in]);
                weights.push(vals[..n_in].to_vec());
            }
            parts.push((weights, biases));
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::Parse { line: ln, msg: "trailing data".into() });
        }
        Network::from_parts(parts)
    }

    /// Random fully connected network with weights and biases uniform in `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, sizes: &[usize], scale: f64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidNetwork("need at least two layer sizes".into()));
        }
        let parts = sizes
            .windows(2)
            .map(|p| {
                let w = (0..p[1])
                    .map(|_| (0..p[0]).map(|_| rng.random_range(-scale..=scale)).collect())
                    .collect();
                let b = (0..p[1]).map(|_| rng.random_range(-scale..=scale)).collect();
                (w, b)
            })
            .collect();
        Network::from_parts(parts)
    }
}

/// Strict-maximum classification of a raw output vector.
pub fn classify_outputs(y: &[f64]) -> Classification {
    let mut best = 0;
    for (i, v) in y.iter().enumerate().skip(1) {
        if *v > y[best] {
            best = i;
        }
    }
    if y.iter().enumerate().any(|(i, v)| i != best && *v >= y[best]) {
        Classification::NoUniqueLabel
    } else {
        Classification::Label(best)
    }
}

/// Evaluates many inputs, in parallel when the `parallel` feature is enabled.
pub fn evaluate_batch(net: &Network, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        xs.par_iter().map(|x| net.evaluate(x)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        xs.iter().map(|x| net.evaluate(x)).collect()
    }
}

/// Interval bounds of one layer's nodes, before and after activation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBounds {
    pub pre: Vec<(f64, f64)>,
    pub post: Vec<(f64, f64)>,
}

/// Axis-aligned box `lower[i] <= x[i] <= upper[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperbox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Hyperbox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension { expected: lower.len(), got: upper.len() });
        }
        for (&lo, &hi) in lower.iter().zip(&upper) {
            if lo.is_nan() || hi.is_nan() {
                return Err(Error::NonFinite("box bound"));
            }
            if lo > hi {
                return Err(Error::InvertedBounds { lo, hi });
            }
        }
        Ok(Hyperbox { lower, upper })
    }

    /// The L∞ ball of radius `delta` around `center`.
    pub fn around(center: &[f64], delta: f64) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(Error::InvalidProperty(format!("negative radius {delta}")));
        }
        Hyperbox::new(
            center.iter().map(|c| c - delta).collect(),
            center.iter().map(|c| c + delta).collect(),
        )
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), h)| l <= v && v <= h)
    }

    /// True if `other` lies entirely inside `self`.
    pub fn contains(&self, other: &Hyperbox) -> bool {
        other.dim() == self.dim()
            && (0..self.dim())
                .all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }

    pub fn intersect(&self, other: &Hyperbox) -> Option<Hyperbox> {
        let lower: Vec<f64> = self.lower.iter().zip(&other.lower).map(|(a, b)| a.max(*b)).collect();
        let upper: Vec<f64> = self.upper.iter().zip(&other.upper).map(|(a, b)| a.min(*b)).collect();
        Hyperbox::new(lower, upper).ok()
    }

    /// Grows every side by `delta`.
    pub fn inflate(&self, delta: f64) -> Hyperbox {
        Hyperbox {
            lower: self.lower.iter().map(|v| v - delta).collect(),
            upper: self.upper.iter().map(|v| v + delta).collect(),
        }
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .map(|((v, l), h)| v.clamp(*l, *h))
            .collect()
    }

    pub(crate) fn set_side(&mut self, dim: usize, lower: f64, upper: f64) {
        self.lower[dim] = lower;
        self.upper[dim] = upper;
    }
}

/// Input-space distance used by robustness properties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    Linf,
    L1,
}

impl Norm {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            Norm::Linf => diffs.fold(0.0, f64::max),
            Norm::L1 => diffs.sum(),
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linf" => Ok(Norm::Linf),
            "l1" => Ok(Norm::L1),
            other => Err(Error::InvalidProperty(format!("unknown norm {other:?}"))),
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Norm::Linf => "linf",
            Norm::L1 => "l1",
        })
    }
}

/// Phase of a ReLU with respect to bounds on its pre-activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseStatus {
    Active,
    Inactive,
    Undetermined,
}

pub fn phase_of(lo: f64, hi: f64) -> PhaseStatus {
    if lo >= 0.0 {
        PhaseStatus::Active
    } else if hi <= 0.0 {
        PhaseStatus::Inactive
    } else {
        PhaseStatus::Undetermined
    }
}
