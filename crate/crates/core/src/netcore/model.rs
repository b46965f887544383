use std::fmt;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::rng;
use crate::searchspace::{CellArch, Op, EDGES, NUM_NODES};

/// Weight initialization. Every entry is drawn from N(0, 1); Xavier and He
/// multiply the draw by their standard deviation relative to LeCun's
/// `1/√fan_in`, which the forward pass already applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    #[default]
    Lecun,
    Xavier,
    He,
}

impl InitScheme {
    pub fn factor(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            InitScheme::Lecun => 1.0,
            InitScheme::Xavier => (2.0 * fan_in as f64 / (fan_in + fan_out) as f64).sqrt(),
            InitScheme::He => std::f64::consts::SQRT_2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            InitScheme::Lecun => "lecun",
            InitScheme::Xavier => "xavier",
            InitScheme::He => "he",
        }
    }
}

impl std::str::FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lecun" => Ok(InitScheme::Lecun),
            "xavier" => Ok(InitScheme::Xavier),
            "he" => Ok(InitScheme::He),
            _ => Err(Error::invalid(format!("unknown init scheme {s:?}"))),
        }
    }
}

/// What a [`ModelInstance`] computes.
///
/// `Cell` is the searchable network: a stem `n × n₀`, stacked cells, and a
/// length-`n` head, every linear map scaled by `1/√fan_in`. The other variants
/// are fixed reference models used as oracles:
/// `LinearProbe` is `f(x) = θᵀx`; `WideLinear` is `1ᵀ Σₗ Wₗ x`; `DeepLinear`
/// is `1ᵀ W_L ⋯ W_1 x`. None of the reference models scale by fan-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    Cell(CellArch),
    LinearProbe,
    WideLinear { layers: usize },
    DeepLinear { layers: usize },
}

impl Architecture {
    pub fn id(&self) -> String {
        match self {
            Architecture::Cell(c) => c.encode(),
            Architecture::LinearProbe => "linear-probe".into(),
            Architecture::WideLinear { layers } => format!("wide-linear-L{layers}"),
            Architecture::DeepLinear { layers } => format!("deep-linear-L{layers}"),
        }
    }

    /// Parameter count implied by the architecture and dimensions.
    pub fn param_count(&self, width: usize, input_dim: usize) -> usize {
        match self {
            Architecture::Cell(c) => {
                width * input_dim + c.cells * c.weighted_edges() * width * width + width
            }
            Architecture::LinearProbe => input_dim,
            Architecture::WideLinear { layers } | Architecture::DeepLinear { layers } => {
                layers * width * width
            }
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl From<CellArch> for Architecture {
    fn from(c: CellArch) -> Self {
        Architecture::Cell(c)
    }
}

/// An instantiated network. Immutable: every change produces a new instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInstance {
    arch: Architecture,
    params: Vec<f64>,
    width: usize,
    input_dim: usize,
    init_scheme: InitScheme,
    seed: u64,
    output_scale: f64,
}

impl ModelInstance {
    pub fn init(
        arch: impl Into<Architecture>,
        width: usize,
        input_dim: usize,
        scheme: InitScheme,
        seed: u64,
    ) -> Result<Self> {
        let arch = arch.into();
        validate_dims(&arch, width, input_dim)?;
        let d = arch.param_count(width, input_dim);
        let mut rng = rng::rng(seed);
        let mut params: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if let Architecture::Cell(cell) = arch {
            if scheme != InitScheme::Lecun {
                apply_scheme(&cell, width, input_dim, scheme, &mut params);
            }
        }
        Ok(Self {
            arch,
            params,
            width,
            input_dim,
            init_scheme: scheme,
            seed,
            output_scale: 1.0,
        })
    }

    /// A model with explicit parameters (test hooks, trained models).
    pub fn from_params(
        arch: impl Into<Architecture>,
        width: usize,
        input_dim: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let arch = arch.into();
        validate_dims(&arch, width, input_dim)?;
        let d = arch.param_count(width, input_dim);
        if params.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: params.len(),
            });
        }
        Ok(Self {
            arch,
            params,
            width,
            input_dim,
            init_scheme: InitScheme::Lecun,
            seed: 0,
            output_scale: 1.0,
        })
    }

    /// `f(x) = θᵀx`.
    pub fn linear_probe(theta: Vec<f64>) -> Result<Self> {
        let n = theta.len();
        Self::from_params(Architecture::LinearProbe, n, n, theta)
    }

    /// Same model with its parameters replaced.
    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        Ok(Self {
            params,
            ..self.clone()
        })
    }

    /// Same model with a fixed (non-trainable) multiplier on the output.
    pub fn with_output_scale(&self, scale: f64) -> Self {
        Self {
            output_scale: scale,
            ..self.clone()
        }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn id(&self) -> String {
        self.arch.id()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn init_scheme(&self) -> InitScheme {
        self.init_scheme
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    /// Range of the head weights inside the parameter vector (cell models).
    pub fn head_range(&self) -> Option<std::ops::Range<usize>> {
        match self.arch {
            Architecture::Cell(_) => {
                let d = self.params.len();
                Some(d - self.width..d)
            }
            _ => None,
        }
    }

    pub(crate) fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Output and, if requested, its gradient with respect to `params`
    /// (which must have this model's layout).
    pub(crate) fn eval_with(
        &self,
        params: &[f64],
        x: &[f64],
        want_grad: bool,
    ) -> (f64, Option<Vec<f64>>) {
        let (f, g) = match self.arch {
            Architecture::Cell(cell) => {
                cell_eval(&cell, self.width, self.input_dim, params, x, want_grad)
            }
            Architecture::LinearProbe => (dot(params, x), want_grad.then(|| x.to_vec())),
            Architecture::WideLinear { layers } => wide_eval(layers, self.width, params, x, want_grad),
            Architecture::DeepLinear { layers } => deep_eval(layers, self.width, params, x, want_grad),
        };
        if self.output_scale == 1.0 {
            (f, g)
        } else {
            let s = self.output_scale;
            (f * s, g.map(|g| g.into_iter().map(|v| v * s).collect()))
        }
    }
}

fn validate_dims(arch: &Architecture, width: usize, input_dim: usize) -> Result<()> {
    if width == 0 || input_dim == 0 {
        return Err(Error::invalid("width and input dimension must be at least 1"));
    }
    match arch {
        Architecture::WideLinear { layers } | Architecture::DeepLinear { layers } => {
            if *layers == 0 {
                return Err(Error::invalid("layer count must be at least 1"));
            }
            if width != input_dim {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    got: input_dim,
                });
            }
        }
        Architecture::LinearProbe if width != input_dim => {
            return Err(Error::DimensionMismatch {
                expected: input_dim,
                got: width,
            });
        }
        _ => {}
    }
    Ok(())
}

fn apply_scheme(cell: &CellArch, n: usize, n0: usize, scheme: InitScheme, params: &mut [f64]) {
    let stem = n * n0;
    let stem_f = scheme.factor(n0, n);
    params[..stem].iter_mut().for_each(|p| *p *= stem_f);
    let hidden = stem + cell.cells * cell.weighted_edges() * n * n;
    let hidden_f = scheme.factor(n, n);
    params[stem..hidden].iter_mut().for_each(|p| *p *= hidden_f);
    let head_f = scheme.factor(n, 1);
    params[hidden..].iter_mut().for_each(|p| *p *= head_f);
}

/// `out = W v / scale` for row-major `W` of shape `rows × v.len()`.
fn scaled_mat_vec(w: &[f64], v: &[f64], scale: f64) -> Vec<f64> {
    w.chunks_exact(v.len())
        .map(|row| dot(row, v) / scale)
        .collect()
}

struct EdgeCache {
    from: usize,
    to: usize,
    op: Op,
    offset: usize,
    pre: Vec<f64>,
}

struct CellCache {
    nodes: Vec<Vec<f64>>,
    edges: Vec<EdgeCache>,
}

fn cell_eval(
    cell: &CellArch,
    n: usize,
    n0: usize,
    params: &[f64],
    x: &[f64],
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let sn0 = (n0 as f64).sqrt();
    let sn = (n as f64).sqrt();
    let stem_len = n * n0;
    let mut h = scaled_mat_vec(&params[..stem_len], x, sn0);
    let mut offset = stem_len;
    let mut caches: Vec<CellCache> = Vec::with_capacity(cell.cells);

    for _ in 0..cell.cells {
        let mut nodes: Vec<Vec<f64>> = Vec::with_capacity(NUM_NODES);
        nodes.push(h);
        let mut edges = Vec::new();
        for j in 1..NUM_NODES {
            let mut acc = vec![0.0; n];
            for (e, &(from, to)) in EDGES.iter().enumerate() {
                if to != j {
                    continue;
                }
                let op = cell.edge_ops[e];
                match op {
                    Op::Zero => {}
                    Op::Skip => {
                        for (a, v) in acc.iter_mut().zip(&nodes[from]) {
                            *a += v;
                        }
                    }
                    Op::Linear | Op::LinearRelu | Op::LinearTanh => {
                        let w = &params[offset..offset + n * n];
                        let pre = scaled_mat_vec(w, &nodes[from], sn);
                        for (a, &z) in acc.iter_mut().zip(&pre) {
                            *a += activate(op, z);
                        }
                        edges.push(EdgeCache {
                            from,
                            to,
                            op,
                            offset,
                            pre,
                        });
                        offset += n * n;
                    }
                }
                if op == Op::Skip {
                    edges.push(EdgeCache {
                        from,
                        to,
                        op,
                        offset: usize::MAX,
                        pre: Vec::new(),
                    });
                }
            }
            nodes.push(acc);
        }
        h = nodes[NUM_NODES - 1].clone();
        caches.push(CellCache { nodes, edges });
    }

    let head = &params[offset..offset + n];
    let f = dot(head, &h) / sn;
    if !want_grad {
        return (f, None);
    }

    let mut grad = vec![0.0; params.len()];
    for (g, v) in grad[offset..offset + n].iter_mut().zip(&h) {
        *g = v / sn;
    }
    let mut upstream: Vec<f64> = head.iter().map(|w| w / sn).collect();

    for cache in caches.iter().rev() {
        let mut node_grads = vec![vec![0.0; n]; NUM_NODES];
        node_grads[NUM_NODES - 1] = upstream;
        // Edges were recorded in ascending target order; walking them in reverse
        // finishes every node's gradient before it is propagated.
        for edge in cache.edges.iter().rev() {
            let g_out = node_grads[edge.to].clone();
            match edge.op {
                Op::Skip => {
                    for (a, v) in node_grads[edge.from].iter_mut().zip(&g_out) {
                        *a += v;
                    }
                }
                Op::Linear | Op::LinearRelu | Op::LinearTanh => {
                    let g_pre: Vec<f64> = g_out
                        .iter()
                        .zip(&edge.pre)
                        .map(|(g, &z)| g * activate_grad(edge.op, z))
                        .collect();
                    let input = &cache.nodes[edge.from];
                    let w = &params[edge.offset..edge.offset + n * n];
                    let gw = &mut grad[edge.offset..edge.offset + n * n];
                    for r in 0..n {
                        let gr = g_pre[r] / sn;
                        if gr == 0.0 {
                            continue;
                        }
                        for (c, &xin) in input.iter().enumerate() {
                            gw[r * n + c] = gr * xin;
                        }
                        let wrow = &w[r * n..(r + 1) * n];
                        for (a, &wv) in node_grads[edge.from].iter_mut().zip(wrow) {
                            *a += gr * wv;
                        }
                    }
                }
                Op::Zero => {}
            }
        }
        upstream = std::mem::take(&mut node_grads[0]);
    }

    for r in 0..n {
        let gr = upstream[r] / sn0;
        for (c, &xv) in x.iter().enumerate() {
            grad[r * n0 + c] = gr * xv;
        }
    }
    (f, Some(grad))
}

fn activate(op: Op, z: f64) -> f64 {
    match op {
        Op::LinearRelu => z.max(0.0),
        Op::LinearTanh => z.tanh(),
        _ => z,
    }
}

/// ReLU uses the subgradient 0 at 0.
fn activate_grad(op: Op, z: f64) -> f64 {
    match op {
        Op::LinearRelu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Op::LinearTanh => {
            let t = z.tanh();
            1.0 - t * t
        }
        _ => 1.0,
    }
}

fn wide_eval(
    layers: usize,
    n: usize,
    params: &[f64],
    x: &[f64],
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let f = params
        .chunks_exact(n)
        .map(|row| dot(row, x))
        .sum::<f64>();
    let grad = want_grad.then(|| {
        let mut g = Vec::with_capacity(layers * n * n);
        for _ in 0..layers * n {
            g.extend_from_slice(x);
        }
        g
    });
    (f, grad)
}

fn deep_eval(
    layers: usize,
    n: usize,
    params: &[f64],
    x: &[f64],
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let mut acts = Vec::with_capacity(layers + 1);
    acts.push(x.to_vec());
    for l in 0..layers {
        let w = &params[l * n * n..(l + 1) * n * n];
        let next = scaled_mat_vec(w, &acts[l], 1.0);
        acts.push(next);
    }
    let f: f64 = acts[layers].iter().sum();
    if !want_grad {
        return (f, None);
    }
    let mut grad = vec![0.0; params.len()];
    let mut g = vec![1.0; n];
    for l in (0..layers).rev() {
        let w = &params[l * n * n..(l + 1) * n * n];
        let gw = &mut grad[l * n * n..(l + 1) * n * n];
        let mut next = vec![0.0; n];
        for r in 0..n {
            for c in 0..n {
                gw[r * n + c] = g[r] * acts[l][c];
                next[c] += w[r * n + c] * g[r];
            }
        }
        g = next;
    }
    (f, Some(grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(ops: [Op; 6]) -> CellArch {
        CellArch::new(ops, 1).unwrap()
    }

    #[test]
    fn param_count_matches_layout() {
        let a = cell([Op::Linear, Op::Skip, Op::Zero, Op::LinearRelu, Op::LinearTanh, Op::Zero]);
        let m = ModelInstance::init(a, 8, 4, InitScheme::Lecun, 1).unwrap();
        assert_eq!(m.param_count(), 8 * 4 + 3 * 64 + 8);
        let two = CellArch::new(a.edge_ops, 2).unwrap();
        assert_eq!(Architecture::Cell(two).param_count(8, 4), 32 + 6 * 64 + 8);
    }

    #[test]
    fn init_is_reproducible() {
        let a = CellArch::uniform(Op::LinearRelu);
        let m1 = ModelInstance::init(a, 8, 4, InitScheme::Lecun, 42).unwrap();
        let m2 = ModelInstance::init(a, 8, 4, InitScheme::Lecun, 42).unwrap();
        assert_eq!(m1.params(), m2.params());
        let m3 = ModelInstance::init(a, 8, 4, InitScheme::Lecun, 43).unwrap();
        assert_ne!(m1.params(), m3.params());
    }

    #[test]
    fn lecun_draws_look_standard_normal() {
        let a = CellArch::new([Op::Linear; 6], 3).unwrap();
        let m = ModelInstance::init(a, 8, 4, InitScheme::Lecun, 42).unwrap();
        let all = m.params();
        let n = all.len() as f64;
        assert!(n >= 1000.0);
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 4.0 / n.sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.2, "var {var}");
    }

    #[test]
    fn scheme_factors() {
        assert_eq!(InitScheme::Lecun.factor(3, 9), 1.0);
        assert_eq!(InitScheme::Xavier.factor(8, 8), 1.0);
        assert!((InitScheme::He.factor(8, 8) - 2f64.sqrt()).abs() < 1e-15);
        let a = CellArch::uniform(Op::Linear);
        let lecun = ModelInstance::init(a, 8, 4, InitScheme::Lecun, 5).unwrap();
        let he = ModelInstance::init(a, 8, 4, InitScheme::He, 5).unwrap();
        for (l, h) in lecun.params().iter().zip(he.params()) {
            assert!((h - l * 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_models_validate_dims() {
        assert!(ModelInstance::init(Architecture::WideLinear { layers: 2 }, 4, 3, InitScheme::Lecun, 0).is_err());
        assert!(ModelInstance::init(Architecture::DeepLinear { layers: 0 }, 4, 4, InitScheme::Lecun, 0).is_err());
        assert!(ModelInstance::init(CellArch::uniform(Op::Skip), 0, 4, InitScheme::Lecun, 0).is_err());
    }
}
