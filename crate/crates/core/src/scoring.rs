//! Learnable cost functions and their exact reverse-mode gradients.
//!
//! * detection cost: a small MLP over the concatenated appearance blocks and
//!   four geometry features;
//! * link cost: three branches (per-block weighted appearance similarity, a
//!   bird's-eye MLP and a frontal-view MLP over the flattened grid products)
//!   fused by one dense layer;
//! * new/end costs: two learned scalars broadcast to every detection.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assoc::AssociationGraph;
use crate::error::{Error, Result};
use crate::features::{DetectionRasters, FeatureConfig, PairFeatures, SparseBinary};
use crate::types::{Detection, TrackSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the pre-activation and the output. Relu uses 0 at
    /// the kink.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// `out = act(W x + b)` with `W` stored row-major as `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

/// Input to the first layer of a stack.
#[derive(Debug, Clone, Copy)]
pub enum LayerInput<'a> {
    Dense(&'a [f64]),
    /// Binary vector given by its active indices.
    Sparse(&'a SparseBinary),
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
            activation,
        }
    }

    fn pre_activation(&self, x: LayerInput<'_>) -> Vec<f64> {
        let mut z = self.biases.clone();
        match x {
            LayerInput::Dense(x) => {
                debug_assert_eq!(x.len(), self.in_dim);
                for (o, zo) in z.iter_mut().enumerate() {
                    let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                    *zo += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                }
            }
            LayerInput::Sparse(x) => {
                debug_assert_eq!(x.dim, self.in_dim);
                for (o, zo) in z.iter_mut().enumerate() {
                    let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                    *zo += x.active.iter().map(|&i| row[i as usize]).sum::<f64>();
                }
            }
        }
        z
    }

    /// Accumulates parameter gradients for upstream gradient `dout` and
    /// returns the gradient with respect to a dense input.
    fn backward(&self, x: LayerInput<'_>, pre: &[f64], out: &[f64], dout: &[f64], grad: &mut DenseLayer, want_input: bool) -> Vec<f64> {
        let dpre: Vec<f64> = (0..self.out_dim)
            .map(|o| dout[o] * self.activation.derivative(pre[o], out[o]))
            .collect();
        for (o, &d) in dpre.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad.biases[o] += d;
            let row = &mut grad.weights[o * self.in_dim..(o + 1) * self.in_dim];
            match x {
                LayerInput::Dense(x) => row.iter_mut().zip(x).for_each(|(g, v)| *g += d * v),
                LayerInput::Sparse(x) => x.active.iter().for_each(|&i| row[i as usize] += d),
            }
        }
        if !want_input {
            return Vec::new();
        }
        let mut din = vec![0.0; self.in_dim];
        for (o, &d) in dpre.iter().enumerate() {
            if d != 0.0 {
                let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                din.iter_mut().zip(row).for_each(|(g, w)| *g += d * w);
            }
        }
        din
    }
}

/// Activations recorded by a forward pass through a stack.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MlpTrace {
    pre: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.out.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Smallest `|pre-activation|` over the relu units of `mlp`, or infinity
    /// when there are none.
    pub fn relu_margin(&self, mlp: &Mlp) -> f64 {
        mlp.layers
            .iter()
            .zip(&self.pre)
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, pre)| pre.iter().map(|z| z.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    /// Layers of the given widths; `hidden_act` everywhere except the last,
    /// which uses `last_act`.
    pub fn zeros(in_dim: usize, widths: &[usize], hidden_act: Activation, last_act: Activation) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = in_dim;
        for (i, &w) in widths.iter().enumerate() {
            let act = if i + 1 == widths.len() { last_act } else { hidden_act };
            layers.push(DenseLayer::zeros(prev, w, act));
            prev = w;
        }
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward(&self, x: LayerInput<'_>) -> MlpTrace {
        let mut trace = MlpTrace::default();
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { x } else { LayerInput::Dense(&trace.out[i - 1]) };
            let pre = layer.pre_activation(input);
            let out = pre.iter().map(|&z| layer.activation.apply(z)).collect();
            trace.pre.push(pre);
            trace.out.push(out);
        }
        trace
    }

    pub fn backward(&self, x: LayerInput<'_>, trace: &MlpTrace, dout: &[f64], grad: &mut Mlp) {
        let mut d = dout.to_vec();
        for i in (0..self.layers.len()).rev() {
            let input = if i == 0 { x } else { LayerInput::Dense(&trace.out[i - 1]) };
            d = self.layers[i].backward(input, &trace.pre[i], &trace.out[i], &d, &mut grad.layers[i], i > 0);
            if i > 0 && d.iter().all(|&v| v == 0.0) {
                break;
            }
        }
    }
}

/// Three-branch link scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchScorer {
    /// One weight per appearance block, shared by both siamese inputs.
    pub appearance_weights: Vec<f64>,
    pub bev: Mlp,
    pub fv: Mlp,
    /// Maps `[weighted appearance (L), bev out, fv out]` to the link cost.
    pub fusion: DenseLayer,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchTrace {
    bev: MlpTrace,
    fv: MlpTrace,
    fusion_in: Vec<f64>,
    fusion_pre: Vec<f64>,
    fusion_out: Vec<f64>,
}

impl MatchScorer {
    pub fn forward(&self, p: &PairFeatures) -> (f64, MatchTrace) {
        let bev = self.bev.forward(LayerInput::Sparse(&p.bev_product));
        let fv = self.fv.forward(LayerInput::Sparse(&p.fv_product));
        let mut fusion_in: Vec<f64> = self
            .appearance_weights
            .iter()
            .zip(&p.appearance_sim)
            .map(|(w, s)| w * s)
            .collect();
        fusion_in.extend_from_slice(bev.output());
        fusion_in.extend_from_slice(fv.output());
        let fusion_pre = self.fusion.pre_activation(LayerInput::Dense(&fusion_in));
        let fusion_out: Vec<f64> = fusion_pre.iter().map(|&z| self.fusion.activation.apply(z)).collect();
        let score = fusion_out[0];
        (
            score,
            MatchTrace {
                bev,
                fv,
                fusion_in,
                fusion_pre,
                fusion_out,
            },
        )
    }

    pub fn backward(&self, p: &PairFeatures, t: &MatchTrace, dscore: f64, grad: &mut MatchScorer) {
        let din = self
            .fusion
            .backward(LayerInput::Dense(&t.fusion_in), &t.fusion_pre, &t.fusion_out, &[dscore], &mut grad.fusion, true);
        let n_app = self.appearance_weights.len();
        let n_bev = self.bev.out_dim();
        for l in 0..n_app {
            grad.appearance_weights[l] += din[l] * p.appearance_sim[l];
        }
        let d_bev = &din[n_app..n_app + n_bev];
        let d_fv = &din[n_app + n_bev..];
        if d_bev.iter().any(|&v| v != 0.0) {
            self.bev.backward(LayerInput::Sparse(&p.bev_product), &t.bev, d_bev, &mut grad.bev);
        }
        if d_fv.iter().any(|&v| v != 0.0) {
            self.fv.backward(LayerInput::Sparse(&p.fv_product), &t.fv, d_fv, &mut grad.fv);
        }
    }
}

/// Layer widths for the scorers; input sizes follow from [`FeatureConfig`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerConfig {
    /// Hidden widths of the detection scorer (relu); a final width-1
    /// identity layer is appended.
    pub det_hidden: Vec<usize>,
    /// Widths of the bird's-eye branch, all relu.
    pub bev_hidden: Vec<usize>,
    /// Widths of the frontal-view branch, all relu.
    pub fv_hidden: Vec<usize>,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            det_hidden: vec![16],
            bev_hidden: vec![16],
            fv_hidden: vec![16],
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bev_hidden.is_empty() || self.fv_hidden.is_empty() {
            return Err(Error::Config("scorer.bev_hidden and scorer.fv_hidden need at least one layer".into()));
        }
        if self.det_hidden.iter().chain(&self.bev_hidden).chain(&self.fv_hidden).any(|&w| w == 0) {
            return Err(Error::Config("scorer layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Number of geometry features appended to the detection input.
pub const DET_GEOMETRY_FEATURES: usize = 4;

/// Detection scorer input: concatenated appearance blocks, then center
/// distance (10 m units), volume (10 m^3 units), yaw (rad), and 2D box area
/// (10^4 px^2 units).
pub fn detection_input(d: &Detection) -> Vec<f64> {
    let b = &d.box3d;
    let mut x: Vec<f64> = d.appearance_flat().collect();
    let dist = (b.center_x * b.center_x + b.center_y * b.center_y + b.center_z * b.center_z).sqrt();
    x.extend_from_slice(&[dist / 10.0, b.volume() / 10.0, b.yaw, d.box2d.area() / 1e4]);
    x
}

/// All learnable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub det: Mlp,
    pub link: MatchScorer,
    pub theta_new: f64,
    pub theta_end: f64,
}

/// Read-only view of one named parameter tensor.
#[derive(Debug, Clone, Copy)]
pub struct TensorView<'a> {
    pub name: &'a str,
    pub data: &'a [f64],
}

fn layer_names(prefix: &str, mlp: &Mlp) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for (i, l) in mlp.layers.iter().enumerate() {
        let base = format!("{prefix}.{i}.{}", l.activation.name());
        out.push((format!("{base}.weight"), vec![l.out_dim, l.in_dim]));
        out.push((format!("{base}.bias"), vec![l.out_dim]));
    }
    out
}

impl CostModel {
    pub fn zeros(features: &FeatureConfig, scorers: &ScorerConfig) -> Self {
        let app = features.appearance;
        let mut det_widths = scorers.det_hidden.clone();
        det_widths.push(1);
        let det = Mlp::zeros(app.total_len() + DET_GEOMETRY_FEATURES, &det_widths, Activation::Relu, Activation::Identity);
        let bev = Mlp::zeros(features.bev.cells(), &scorers.bev_hidden, Activation::Relu, Activation::Relu);
        let fv = Mlp::zeros(features.fv.rows * features.fv.cols, &scorers.fv_hidden, Activation::Relu, Activation::Relu);
        let fusion_in = app.blocks + bev.out_dim() + fv.out_dim();
        Self {
            det,
            link: MatchScorer {
                appearance_weights: vec![0.0; app.blocks],
                bev,
                fv,
                fusion: DenseLayer::zeros(fusion_in, 1, Activation::Identity),
            },
            theta_new: 0.0,
            theta_end: 0.0,
        }
    }

    /// Every parameter drawn from a zero-mean normal with standard deviation
    /// `std`, redrawing values beyond two standard deviations.
    pub fn truncated_normal(features: &FeatureConfig, scorers: &ScorerConfig, std: f64, rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(features, scorers);
        let normal = Normal::new(0.0, std).expect("std must be finite and nonnegative");
        for t in m.tensors_mut() {
            for v in t.iter_mut() {
                *v = loop {
                    let s: f64 = normal.sample(rng);
                    if s.abs() <= 2.0 * std {
                        break s;
                    }
                };
            }
        }
        m
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    /// Tensor names and shapes in canonical order. Names encode structure as
    /// `<stack>.<layer>.<activation>.weight|bias`.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = layer_names("det", &self.det);
        out.push(("link.appearance_weights".into(), vec![self.link.appearance_weights.len()]));
        out.extend(layer_names("link.bev", &self.link.bev));
        out.extend(layer_names("link.fv", &self.link.fv));
        let f = &self.link.fusion;
        let base = format!("link.fusion.0.{}", f.activation.name());
        out.push((format!("{base}.weight"), vec![f.out_dim, f.in_dim]));
        out.push((format!("{base}.bias"), vec![f.out_dim]));
        out.push(("theta_new".into(), vec![]));
        out.push(("theta_end".into(), vec![]));
        out
    }

    /// Parameter tensors in the order of [`CostModel::tensor_specs`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        fn push_mlp<'a>(out: &mut Vec<&'a [f64]>, m: &'a Mlp) {
            for l in &m.layers {
                out.push(&l.weights);
                out.push(&l.biases);
            }
        }
        push_mlp(&mut out, &self.det);
        out.push(&self.link.appearance_weights);
        push_mlp(&mut out, &self.link.bev);
        push_mlp(&mut out, &self.link.fv);
        out.push(&self.link.fusion.weights);
        out.push(&self.link.fusion.biases);
        out.push(std::slice::from_ref(&self.theta_new));
        out.push(std::slice::from_ref(&self.theta_end));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.det.layers {
            out.push(&mut l.weights);
            out.push(&mut l.biases);
        }
        out.push(&mut self.link.appearance_weights);
        for l in &mut self.link.bev.layers {
            out.push(&mut l.weights);
            out.push(&mut l.biases);
        }
        for l in &mut self.link.fv.layers {
            out.push(&mut l.weights);
            out.push(&mut l.biases);
        }
        out.push(&mut self.link.fusion.weights);
        out.push(&mut self.link.fusion.biases);
        out.push(std::slice::from_mut(&mut self.theta_new));
        out.push(std::slice::from_mut(&mut self.theta_end));
        out
    }

    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        self.tensor_specs()
            .into_iter()
            .zip(self.tensors())
            .map(|((n, s), d)| (n, s, d))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Rebuilds a model from named tensors as produced by
    /// [`CostModel::named_tensors`].
    pub fn from_named_tensors(tensors: Vec<(String, Vec<usize>, Vec<f64>)>) -> Result<Self> {
        let bad = |m: String| Error::InvalidInput(format!("model tensors: {m}"));
        let mut det = Vec::new();
        let mut bev = Vec::new();
        let mut fv = Vec::new();
        let mut fusion = None;
        let mut app = None;
        let mut theta_new = None;
        let mut theta_end = None;
        let mut it = tensors.into_iter().peekable();
        while let Some((name, shape, data)) = it.next() {
            let numel: usize = shape.iter().product();
            if data.len() != numel {
                return Err(bad(format!("{name}: shape {shape:?} but {} values", data.len())));
            }
            match name.as_str() {
                "link.appearance_weights" => app = Some(data),
                "theta_new" => theta_new = data.first().copied(),
                "theta_end" => theta_end = data.first().copied(),
                _ => {
                    let (stack, rest) = name
                        .rsplit_once('.')
                        .and_then(|(head, kind)| (kind == "weight").then_some(head))
                        .and_then(|head| {
                            let mut parts = head.rsplitn(3, '.');
                            let act = parts.next()?;
                            let _idx = parts.next()?;
                            let stack = parts.next()?;
                            Some((stack.to_string(), act.to_string()))
                        })
                        .ok_or_else(|| bad(format!("unexpected tensor {name}")))?;
                    let activation = Activation::from_name(&rest).ok_or_else(|| bad(format!("unknown activation in {name}")))?;
                    let [out_dim, in_dim] = shape[..] else {
                        return Err(bad(format!("{name} must be 2-D")));
                    };
                    let (bname, bshape, biases) = it.next().ok_or_else(|| bad(format!("missing bias after {name}")))?;
                    if !bname.ends_with(".bias") || bshape != vec![out_dim] || biases.len() != out_dim {
                        return Err(bad(format!("bad bias {bname} after {name}")));
                    }
                    let layer = DenseLayer {
                        in_dim,
                        out_dim,
                        weights: data,
                        biases,
                        activation,
                    };
                    match stack.as_str() {
                        "det" => det.push(layer),
                        "link.bev" => bev.push(layer),
                        "link.fv" => fv.push(layer),
                        "link.fusion" => fusion = Some(layer),
                        other => return Err(bad(format!("unknown stack {other}"))),
                    }
                }
            }
        }
        let model = CostModel {
            det: Mlp { layers: det },
            link: MatchScorer {
                appearance_weights: app.ok_or_else(|| bad("missing link.appearance_weights".into()))?,
                bev: Mlp { layers: bev },
                fv: Mlp { layers: fv },
                fusion: fusion.ok_or_else(|| bad("missing fusion layer".into()))?,
            },
            theta_new: theta_new.ok_or_else(|| bad("missing theta_new".into()))?,
            theta_end: theta_end.ok_or_else(|| bad("missing theta_end".into()))?,
        };
        model.check_shapes()?;
        Ok(model)
    }

    pub fn check_shapes(&self) -> Result<()> {
        let chain = |m: &Mlp, what: &str| -> Result<()> {
            if m.layers.is_empty() {
                return Err(Error::InvalidInput(format!("{what} has no layers")));
            }
            for w in m.layers.windows(2) {
                if w[0].out_dim != w[1].in_dim {
                    return Err(Error::InvalidInput(format!("{what}: layer widths do not chain")));
                }
            }
            Ok(())
        };
        chain(&self.det, "detection scorer")?;
        chain(&self.link.bev, "bev branch")?;
        chain(&self.link.fv, "fv branch")?;
        if self.det.out_dim() != 1 || self.link.fusion.out_dim != 1 {
            return Err(Error::InvalidInput("scorers must output a scalar".into()));
        }
        let want = self.link.appearance_weights.len() + self.link.bev.out_dim() + self.link.fv.out_dim();
        if self.link.fusion.in_dim != want {
            return Err(Error::InvalidInput(format!(
                "fusion input size {} != {want}",
                self.link.fusion.in_dim
            )));
        }
        Ok(())
    }
}

impl CostModel {
    /// Checks that the input sizes of the scorers match `features`.
    pub fn check_features(&self, features: &FeatureConfig) -> Result<()> {
        let app = features.appearance;
        let checks = [
            ("detection scorer", self.det.in_dim(), app.total_len() + DET_GEOMETRY_FEATURES),
            ("appearance weights", self.link.appearance_weights.len(), app.blocks),
            ("bev branch", self.link.bev.in_dim(), features.bev.cells()),
            ("fv branch", self.link.fv.in_dim(), features.fv.rows * features.fv.cols),
        ];
        for (what, have, want) in checks {
            if have != want {
                return Err(Error::InvalidInput(format!(
                    "model {what} expects {have} inputs but the feature configuration gives {want}"
                )));
            }
        }
        Ok(())
    }
}

/// Parameter gradient, shape-congruent with a [`CostModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient(pub CostModel);

impl Gradient {
    pub fn zeros_like(model: &CostModel) -> Self {
        Gradient(model.zeros_like())
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.0.tensors_mut().into_iter().zip(other.0.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.0.tensors().into_iter().flatten().copied().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.0.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0))
    }
}

/// Parameter-independent scorer inputs for one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFeatures {
    /// Detection scorer input per layout detection.
    pub det_inputs: Vec<Vec<f64>>,
    /// Pair features per layout link.
    pub pairs: Vec<PairFeatures>,
}

impl GraphFeatures {
    pub fn build(graph: &AssociationGraph, seq: &TrackSequence, cfg: &FeatureConfig) -> Self {
        let lay = &graph.layout;
        let dets: Vec<&Detection> = lay
            .detections
            .iter()
            .map(|n| &seq.frames[n.frame_idx][n.index_in_frame])
            .collect();
        let rasters: Vec<DetectionRasters> = dets
            .par_iter()
            .map(|d| DetectionRasters::new(d, &seq.ego[d.frame_idx], &seq.camera, cfg))
            .collect();
        let pairs = lay
            .links
            .par_iter()
            .map(|&(a, b)| DetectionRasters::pair(&rasters[a], &rasters[b], dets[a], dets[b]))
            .collect();
        Self {
            det_inputs: dets.iter().map(|d| detection_input(d)).collect(),
            pairs,
        }
    }
}

/// Activations from [`score_features`], needed by [`backward`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreCache {
    det: Vec<MlpTrace>,
    link: Vec<MatchTrace>,
}

impl ScoreCache {
    /// Distance of the nearest relu unit from its kink over every scorer
    /// evaluation in the cache. The scores are differentiable in the
    /// parameters wherever this is positive.
    pub fn relu_margin(&self, model: &CostModel) -> f64 {
        let det = self.det.iter().map(|t| t.relu_margin(&model.det));
        let link = self
            .link
            .iter()
            .flat_map(|t| [t.bev.relu_margin(&model.link.bev), t.fv.relu_margin(&model.link.fv)]);
        det.chain(link).fold(f64::INFINITY, f64::min)
    }
}

/// Cost vector aligned with the graph layout, plus the activation cache.
pub fn score_features(model: &CostModel, graph: &AssociationGraph, feats: &GraphFeatures) -> Result<(Vec<f64>, ScoreCache)> {
    let lay = &graph.layout;
    let k = lay.num_detections();
    if feats.det_inputs.len() != k || feats.pairs.len() != lay.num_links() {
        return Err(Error::InvalidInput("features do not match graph layout".into()));
    }
    let det: Vec<MlpTrace> = feats
        .det_inputs
        .par_iter()
        .map(|x| model.det.forward(LayerInput::Dense(x)))
        .collect();
    let link: Vec<(f64, MatchTrace)> = feats.pairs.par_iter().map(|p| model.link.forward(p)).collect();

    let mut theta = vec![0.0; lay.num_vars()];
    for (j, t) in det.iter().enumerate() {
        theta[lay.det_var(j)] = t.output()[0];
        theta[lay.new_var(j)] = model.theta_new;
        theta[lay.end_var(j)] = model.theta_end;
    }
    for (l, (s, _)) in link.iter().enumerate() {
        theta[lay.link_var_at(l)] = *s;
    }
    if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
        let which = match lay.kind(i) {
            crate::assoc::VarKind::Det(_) => "detection scorer",
            crate::assoc::VarKind::Link(..) => "match scorer",
            _ => "new/end scalars",
        };
        return Err(Error::NonFinite(which.into()));
    }
    Ok((
        theta,
        ScoreCache {
            det,
            link: link.into_iter().map(|(_, t)| t).collect(),
        },
    ))
}

/// Builds features and scores in one go.
pub fn score_graph(model: &CostModel, graph: &AssociationGraph, seq: &TrackSequence, cfg: &FeatureConfig) -> Result<(Vec<f64>, GraphFeatures, ScoreCache)> {
    let feats = GraphFeatures::build(graph, seq, cfg);
    let (theta, cache) = score_features(model, graph, &feats)?;
    Ok((theta, feats, cache))
}

/// Accumulates the gradient of `dtheta . theta(W)` into `grad`.
pub fn backward_into(
    model: &CostModel,
    graph: &AssociationGraph,
    feats: &GraphFeatures,
    cache: &ScoreCache,
    dtheta: &[f64],
    grad: &mut Gradient,
) -> Result<()> {
    let lay = &graph.layout;
    if dtheta.len() != lay.num_vars() || cache.det.len() != lay.num_detections() || cache.link.len() != lay.num_links() {
        return Err(Error::InvalidInput("dtheta or cache does not match graph layout".into()));
    }
    let g = &mut grad.0;
    for j in 0..lay.num_detections() {
        let d = dtheta[lay.det_var(j)];
        if d != 0.0 {
            model
                .det
                .backward(LayerInput::Dense(&feats.det_inputs[j]), &cache.det[j], &[d], &mut g.det);
        }
        g.theta_new += dtheta[lay.new_var(j)];
        g.theta_end += dtheta[lay.end_var(j)];
    }
    for l in 0..lay.num_links() {
        let d = dtheta[lay.link_var_at(l)];
        if d != 0.0 {
            model.link.backward(&feats.pairs[l], &cache.link[l], d, &mut g.link);
        }
    }
    Ok(())
}

pub fn backward(model: &CostModel, graph: &AssociationGraph, feats: &GraphFeatures, cache: &ScoreCache, dtheta: &[f64]) -> Result<Gradient> {
    let mut g = Gradient::zeros_like(model);
    backward_into(model, graph, feats, cache, dtheta, &mut g)?;
    Ok(g)
}
