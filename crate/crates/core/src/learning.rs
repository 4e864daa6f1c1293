//! Structured training: Hamming-augmented inference, the structured hinge
//! loss and its subgradient, Adam, end-to-end training through the solver,
//! and the piecewise baseline (independent classifiers plus a line search
//! over the start/end scalars).

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assoc::{derive_gold, AssociationGraph, Assignment, GoldAssignment, VarKind};
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::metrics::{aggregate, evaluate, MatchCriterion, MotReport};
use crate::pipeline::{assignment_boxes, layout_boxes, split_windows, TrackingConfig};
use crate::scoring::{backward_into, score_features, CostModel, Gradient, GraphFeatures, ScoreCache};
use crate::solver::{exhaustive_argmax, solve_costs, SolverOptions};
use crate::types::{Box2D, Box3D, TrackBox, TrackSequence};

/// Per-variable-type weights of the Hamming task loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HammingWeights {
    pub det: f64,
    pub link: f64,
    pub new: f64,
    pub end: f64,
}

impl Default for HammingWeights {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

impl HammingWeights {
    pub fn uniform(w: f64) -> Self {
        Self {
            det: w,
            link: w,
            new: w,
            end: w,
        }
    }

    fn of(&self, kind: VarKind) -> f64 {
        match kind {
            VarKind::Det(_) => self.det,
            VarKind::Link(..) => self.link,
            VarKind::New(_) => self.new,
            VarKind::End(_) => self.end,
        }
    }

    fn validate(&self) -> Result<()> {
        if [self.det, self.link, self.new, self.end].iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config("hamming weights must be finite and nonnegative".into()))
        }
    }
}

/// Weighted Hamming distance between two assignments of `graph`.
pub fn weighted_hamming(graph: &AssociationGraph, a: &Assignment, b: &Assignment, w: &HammingWeights) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| w.of(graph.layout.kind(i)))
        .sum()
}

/// Costs whose linear objective equals `theta . y + hamming(y, gold)` up to
/// the returned constant: `theta_i + w_i (1 - 2 gold_i)`, constant
/// `sum_i w_i gold_i`.
pub fn augmented_costs(graph: &AssociationGraph, theta: &[f64], gold: &Assignment, w: &HammingWeights) -> Result<(Vec<f64>, f64)> {
    if theta.len() != graph.num_vars() || gold.values.len() != graph.num_vars() {
        return Err(Error::InvalidInput("theta or gold length does not match the layout".into()));
    }
    let mut constant = 0.0;
    let costs = theta
        .iter()
        .zip(&gold.values)
        .enumerate()
        .map(|(i, (&t, &g))| {
            let wi = w.of(graph.layout.kind(i));
            if g == 1 {
                constant += wi;
                t - wi
            } else {
                t + wi
            }
        })
        .collect();
    Ok((costs, constant))
}

/// Most violating assignment for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LossAugmented {
    pub assignment: Assignment,
    /// `theta . y* + hamming(y*, gold)`.
    pub objective: f64,
}

/// Maximizes `theta . y + hamming(y, gold)` over feasible assignments.
pub fn loss_augmented_solve(graph: &AssociationGraph, theta: &[f64], gold: &Assignment, w: &HammingWeights) -> Result<LossAugmented> {
    graph.check_feasible(gold)?.into_result()?;
    let (costs, constant) = augmented_costs(graph, theta, gold, w)?;
    let sol = solve_costs(graph, &costs, SolverOptions::default())?;
    Ok(LossAugmented {
        objective: sol.objective + constant,
        assignment: sol.assignment,
    })
}

/// Exhaustive reference for [`loss_augmented_solve`] on small instances.
pub fn loss_augmented_exhaustive(graph: &AssociationGraph, theta: &[f64], gold: &Assignment, w: &HammingWeights) -> Result<LossAugmented> {
    graph.check_feasible(gold)?.into_result()?;
    let (assignment, objective) = exhaustive_argmax(graph, |y| y.dot(theta) + weighted_hamming(graph, y, gold, w))?;
    Ok(LossAugmented { assignment, objective })
}

/// Hinge terms and subgradients of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct HingeBatch {
    /// Per-instance `max_y (hamming + theta . y) - theta . gold`.
    pub losses: Vec<f64>,
    /// Sum of the per-instance terms; gates the subgradient.
    pub s: f64,
    /// Per-instance `y* - gold` when `s > 0`, otherwise zeros.
    pub dthetas: Vec<Vec<f64>>,
    pub y_star: Vec<Assignment>,
}

impl HingeBatch {
    pub fn loss(&self) -> f64 {
        self.s
    }
}

/// Structured hinge loss of a batch of `(graph, theta, gold)` instances.
pub fn hinge_loss(instances: &[(&AssociationGraph, &[f64], &Assignment)], w: &HammingWeights) -> Result<HingeBatch> {
    w.validate()?;
    let solved: Vec<Result<(f64, Assignment)>> = instances
        .par_iter()
        .map(|&(g, theta, gold)| {
            let la = loss_augmented_solve(g, theta, gold, w)?;
            Ok((la.objective - gold.dot(theta), la.assignment))
        })
        .collect();
    let mut losses = Vec::with_capacity(instances.len());
    let mut y_star = Vec::with_capacity(instances.len());
    for r in solved {
        let (l, y) = r?;
        losses.push(l);
        y_star.push(y);
    }
    let s: f64 = losses.iter().sum();
    let dthetas = instances
        .iter()
        .zip(&y_star)
        .map(|(&(_, _, gold), y)| {
            y.values
                .iter()
                .zip(&gold.values)
                .map(|(&a, &b)| if s > 0.0 { a as f64 - b as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    Ok(HingeBatch {
        losses,
        s,
        dthetas,
        y_star,
    })
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Windows per iteration, taken cyclically from the training set.
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Standard deviation of the truncated-normal initialization.
    pub init_std: f64,
    pub seed: u64,
    pub hamming: HammingWeights,
    /// IoU threshold used to match candidates to labels for gold assignments.
    pub gold_iou: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            batch_size: 4,
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            init_std: 1e-3,
            seed: 0,
            hamming: HammingWeights::default(),
            gold_iou: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must be in [0, 1)");
        }
        if !(self.epsilon > 0.0) || !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return bad("epsilon must be positive and init_std nonnegative");
        }
        if !(self.gold_iou > 0.0 && self.gold_iou <= 1.0) {
            return bad("gold_iou must be in (0, 1]");
        }
        self.hamming.validate()
    }
}

/// Adam moments for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: CostModel,
    v: CostModel,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(model: &CostModel, cfg: &TrainConfig) -> Self {
        Self {
            m: model.zeros_like(),
            v: model.zeros_like(),
            step: 0,
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }

    /// One descent step along `grad`.
    pub fn update(&mut self, model: &mut CostModel, grad: &Gradient) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.epsilon);
        let params = model.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(grad.0.tensors()) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// One association window with everything training needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingWindow {
    pub graph: AssociationGraph,
    pub features: GraphFeatures,
    pub gold: GoldAssignment,
    /// Labels of the window's frames.
    pub gt: Vec<TrackBox>,
    /// Boxes of each layout detection.
    pub boxes: Vec<(Box2D, Box3D)>,
}

/// Splits a labeled sequence into windows and precomputes features and gold
/// assignments.
pub fn prepare_windows(
    seq: &TrackSequence,
    gt: &[TrackBox],
    features: &FeatureConfig,
    tracking: &TrackingConfig,
    gold_iou: f64,
) -> Result<Vec<TrainingWindow>> {
    split_windows(seq.num_frames(), tracking.window_length)?
        .into_iter()
        .map(|w| {
            let graph = crate::assoc::build_graph(seq, w.clone(), &tracking.gate)?;
            let feats = GraphFeatures::build(&graph, seq, features);
            let gold = derive_gold(&graph, seq, gt, gold_iou);
            let boxes = layout_boxes(&graph, seq);
            let gt = gt.iter().filter(|b| w.contains(&b.frame_idx)).copied().collect();
            Ok(TrainingWindow {
                graph,
                features: feats,
                gold,
                gt,
                boxes,
            })
        })
        .collect()
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub loss: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: CostModel,
    /// Batch loss before each update.
    pub loss_trace: Vec<f64>,
}

fn batch_indices(iteration: usize, batch_size: usize, n: usize) -> Vec<usize> {
    let b = batch_size.min(n);
    (0..b).map(|j| (iteration * b + j) % n).collect()
}

struct ScoredWindow {
    theta: Vec<f64>,
    cache: ScoreCache,
}

fn score_windows(model: &CostModel, windows: &[&TrainingWindow]) -> Result<Vec<ScoredWindow>> {
    windows
        .par_iter()
        .map(|w| {
            let (theta, cache) = score_features(model, &w.graph, &w.features)?;
            Ok(ScoredWindow { theta, cache })
        })
        .collect()
}

/// Structured hinge loss of `model` summed over `windows`.
pub fn structured_loss(model: &CostModel, windows: &[TrainingWindow], w: &HammingWeights) -> Result<f64> {
    let refs: Vec<&TrainingWindow> = windows.iter().collect();
    let scored = score_windows(model, &refs)?;
    let inst: Vec<(&AssociationGraph, &[f64], &Assignment)> = windows
        .iter()
        .zip(&scored)
        .map(|(w, s)| (&w.graph, s.theta.as_slice(), &w.gold.assignment))
        .collect();
    Ok(hinge_loss(&inst, w)?.s)
}

/// Hinge loss and parameter gradient over `windows`.
pub fn loss_and_gradient(model: &CostModel, windows: &[&TrainingWindow], w: &HammingWeights) -> Result<(f64, Gradient)> {
    let scored = score_windows(model, windows)?;
    let inst: Vec<(&AssociationGraph, &[f64], &Assignment)> = windows
        .iter()
        .zip(&scored)
        .map(|(w, s)| (&w.graph, s.theta.as_slice(), &w.gold.assignment))
        .collect();
    let batch = hinge_loss(&inst, w)?;
    let mut grad = Gradient::zeros_like(model);
    if batch.s > 0.0 {
        for ((win, s), d) in windows.iter().zip(&scored).zip(&batch.dthetas) {
            backward_into(model, &win.graph, &win.features, &s.cache, d, &mut grad)?;
        }
    }
    Ok((batch.s, grad))
}

fn check_finite(loss: f64, iteration: usize, trace: &[f64], model: &CostModel) -> Result<()> {
    if loss.is_finite() && model.is_finite() {
        Ok(())
    } else {
        let mut trace = trace.to_vec();
        trace.push(loss);
        Err(Error::Diverged { iteration, trace })
    }
}

/// Trains all parameters through the solver with the structured hinge loss.
pub fn train_end_to_end(
    init: CostModel,
    windows: &[TrainingWindow],
    cfg: &TrainConfig,
    mut log: impl FnMut(&IterationLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if windows.is_empty() && cfg.iterations > 0 {
        return Err(Error::InvalidInput("no training windows".into()));
    }
    let start = Instant::now();
    let mut model = init;
    let mut adam = AdamState::new(&model, cfg);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let batch: Vec<&TrainingWindow> = batch_indices(it, cfg.batch_size, windows.len())
            .into_iter()
            .map(|i| &windows[i])
            .collect();
        let (loss, grad) = match loss_and_gradient(&model, &batch, &cfg.hamming) {
            Err(Error::NonFinite(_)) => (f64::NAN, Gradient::zeros_like(&model)),
            r => r?,
        };
        check_finite(loss, it, &trace, &model)?;
        trace.push(loss);
        adam.update(&mut model, &grad);
        log(&IterationLog {
            iteration: it,
            loss,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome { model, loss_trace: trace })
}

/// Numerically stable `log(1 + exp(-y z))` and its derivative in `z` for a
/// label `y` in {-1, +1}.
pub fn logistic(z: f64, positive: bool) -> (f64, f64) {
    let m = if positive { z } else { -z };
    let loss = if m > 0.0 { (-m).exp().ln_1p() } else { -m + m.exp().ln_1p() };
    let sig_neg = 1.0 / (1.0 + m.exp());
    let d = if positive { -sig_neg } else { sig_neg };
    (loss, d)
}

/// Labels used by the piecewise classifiers: detection matched to a label,
/// and link between detections matched to the same labeled track.
pub fn classifier_labels(w: &TrainingWindow) -> (Vec<bool>, Vec<bool>) {
    let t = &w.gold.det_track;
    let det = t.iter().map(Option::is_some).collect();
    let link = w
        .graph
        .layout
        .links
        .iter()
        .map(|&(a, b)| t[a].is_some() && t[a] == t[b])
        .collect();
    (det, link)
}

/// Mean logistic losses of the detection and link classifiers, plus the
/// parameter gradient of their sum.
pub fn classifier_loss_and_gradient(model: &CostModel, windows: &[&TrainingWindow]) -> Result<(f64, Gradient)> {
    let scored = score_windows(model, windows)?;
    let labels: Vec<(Vec<bool>, Vec<bool>)> = windows.iter().map(|w| classifier_labels(w)).collect();
    let n_det: usize = labels.iter().map(|l| l.0.len()).sum();
    let n_link: usize = labels.iter().map(|l| l.1.len()).sum();
    let mut loss = 0.0;
    let mut grad = Gradient::zeros_like(model);
    for ((w, s), (det, link)) in windows.iter().zip(&scored).zip(&labels) {
        let lay = &w.graph.layout;
        let mut d = vec![0.0; lay.num_vars()];
        for (j, &y) in det.iter().enumerate() {
            let (l, g) = logistic(s.theta[lay.det_var(j)], y);
            loss += l / n_det as f64;
            d[lay.det_var(j)] = g / n_det as f64;
        }
        for (l_idx, &y) in link.iter().enumerate() {
            let v = lay.link_var_at(l_idx);
            let (l, g) = logistic(s.theta[v], y);
            loss += l / n_link as f64;
            d[v] = g / n_link as f64;
        }
        backward_into(model, &w.graph, &w.features, &s.cache, &d, &mut grad)?;
    }
    Ok((loss, grad))
}

/// Settings of the start/end scalar line search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineSearchConfig {
    pub min: f64,
    pub max: f64,
    /// Coarse grid spacing; a second pass refines around the best point at a
    /// quarter of this spacing.
    pub step: f64,
    pub criterion: MatchCriterion,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            min: -12.0,
            max: 4.0,
            step: 1.0,
            criterion: MatchCriterion::default(),
        }
    }
}

/// Per-window detection and link scores, reused across line-search points.
pub fn window_scores(model: &CostModel, windows: &[TrainingWindow]) -> Result<Vec<Vec<f64>>> {
    let refs: Vec<&TrainingWindow> = windows.iter().collect();
    Ok(score_windows(model, &refs)?.into_iter().map(|s| s.theta).collect())
}

/// Solves every window with the given start/end scalars substituted into
/// `scores` and evaluates the decoded tracks against the window labels.
pub fn evaluate_windows(
    windows: &[TrainingWindow],
    scores: &[Vec<f64>],
    theta_new: f64,
    theta_end: f64,
    criterion: MatchCriterion,
) -> Result<MotReport> {
    let reports: Vec<Result<Option<MotReport>>> = windows
        .par_iter()
        .zip(scores)
        .map(|(w, s)| {
            if w.gt.is_empty() {
                return Ok(None);
            }
            let lay = &w.graph.layout;
            let mut theta = s.clone();
            for j in 0..lay.num_detections() {
                theta[lay.new_var(j)] = theta_new;
                theta[lay.end_var(j)] = theta_end;
            }
            let sol = solve_costs(&w.graph, &theta, SolverOptions::default())?;
            let hyp = assignment_boxes(&w.graph, &sol.assignment, &w.boxes, 0)?;
            evaluate(&hyp, &w.gt, criterion).map(Some)
        })
        .collect();
    let mut out = Vec::new();
    for r in reports {
        out.extend(r?);
    }
    aggregate(&out)
}

/// Grid search for the start/end scalars maximizing MOTA; ties keep the
/// earlier grid point (lower `theta_new`, then lower `theta_end`).
pub fn line_search_new_end(model: &CostModel, windows: &[TrainingWindow], cfg: &LineSearchConfig) -> Result<(f64, f64, MotReport)> {
    if !(cfg.step > 0.0 && cfg.min <= cfg.max) {
        return Err(Error::Config("line search needs step > 0 and min <= max".into()));
    }
    let scores = window_scores(model, windows)?;
    let grid = |lo: f64, hi: f64, step: f64| -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| lo + i as f64 * step).collect()
    };
    let mut best: Option<(f64, f64, MotReport)> = None;
    let consider = |a: f64, b: f64, best: &mut Option<(f64, f64, MotReport)>| -> Result<()> {
        let r = evaluate_windows(windows, &scores, a, b, cfg.criterion)?;
        if best.as_ref().is_none_or(|(_, _, br)| r.mota > br.mota) {
            *best = Some((a, b, r));
        }
        Ok(())
    };
    let coarse = grid(cfg.min, cfg.max, cfg.step);
    for &a in &coarse {
        for &b in &coarse {
            consider(a, b, &mut best)?;
        }
    }
    let (a0, b0) = best.as_ref().map(|(a, b, _)| (*a, *b)).expect("grid is nonempty");
    let fine = cfg.step / 4.0;
    let around = |c: f64| grid(c - cfg.step + fine, c + cfg.step - fine, fine);
    for a in around(a0) {
        for b in around(b0) {
            consider(a, b, &mut best)?;
        }
    }
    Ok(best.expect("grid is nonempty"))
}

/// Piecewise baseline: the detection and link scorers are trained as
/// independent logistic classifiers with the same optimizer settings, then
/// the start/end scalars are fit by line search on `validation` (or on
/// `train` when `validation` is empty).
pub fn train_piecewise(
    init: CostModel,
    train: &[TrainingWindow],
    validation: &[TrainingWindow],
    cfg: &TrainConfig,
    search: &LineSearchConfig,
    mut log: impl FnMut(&IterationLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("no training windows".into()));
    }
    let start = Instant::now();
    let mut model = init;
    let mut adam = AdamState::new(&model, cfg);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let batch: Vec<&TrainingWindow> = batch_indices(it, cfg.batch_size, train.len())
            .into_iter()
            .map(|i| &train[i])
            .collect();
        let (loss, grad) = match classifier_loss_and_gradient(&model, &batch) {
            Err(Error::NonFinite(_)) => (f64::NAN, Gradient::zeros_like(&model)),
            r => r?,
        };
        check_finite(loss, it, &trace, &model)?;
        trace.push(loss);
        adam.update(&mut model, &grad);
        log(&IterationLog {
            iteration: it,
            loss,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    let held_out = if validation.is_empty() { train } else { validation };
    let (new, end, _) = line_search_new_end(&model, held_out, search)?;
    model.theta_new = new;
    model.theta_end = end;
    Ok(TrainOutcome { model, loss_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assoc::{build_graph, GateConfig};
    use crate::solver::solve;
    use crate::testutil::{det_at, seq_from_frames};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single() -> AssociationGraph {
        let seq = seq_from_frames(vec![vec![det_at(0, 0, 10.0, 0.0)]]);
        build_graph(&seq, 0..1, &GateConfig::default()).unwrap()
    }

    fn random_graph(rng: &mut ChaCha8Rng) -> AssociationGraph {
        let frames = rng.random_range(1..=3);
        let mut id = 0;
        let seq = seq_from_frames(
            (0..frames)
                .map(|f| {
                    (0..rng.random_range(0..=2))
                        .map(|i| {
                            id += 1;
                            det_at(id, f, 10.0 + i as f64 * 5.0, 0.0)
                        })
                        .collect()
                })
                .collect(),
        );
        build_graph(&seq, 0..frames, &GateConfig::default()).unwrap()
    }

    #[test]
    fn single_detection_gold_survives() {
        let g = single();
        let theta = vec![5.0, 0.0, 0.0];
        let gold = Assignment { values: vec![1, 1, 1] };
        let la = loss_augmented_solve(&g, &theta, &gold, &HammingWeights::default()).unwrap();
        assert_eq!(la.assignment, gold);
        assert_eq!(la.objective, 5.0);
    }

    #[test]
    fn zero_theta_zero_gold_activates_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let g = random_graph(&mut rng);
            let theta = vec![0.0; g.num_vars()];
            let gold = Assignment::zeros(g.num_vars());
            let w = HammingWeights::default();
            let la = loss_augmented_solve(&g, &theta, &gold, &w).unwrap();
            let ex = loss_augmented_exhaustive(&g, &theta, &gold, &w).unwrap();
            assert_eq!(la.objective, ex.objective);
            assert_eq!(la.objective, la.assignment.values.iter().map(|&v| v as f64).sum::<f64>());
        }
    }

    #[test]
    fn zero_weight_equals_plain_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let g = random_graph(&mut rng);
            let theta: Vec<f64> = (0..g.num_vars()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let plain = solve_costs(&g, &theta, SolverOptions::default()).unwrap();
            let la = loss_augmented_solve(&g, &theta, &plain.assignment, &HammingWeights::uniform(0.0)).unwrap();
            assert_eq!(la.objective, plain.objective);
            assert_eq!(la.assignment, plain.assignment);
        }
    }

    #[test]
    fn hinge_nonnegative_and_zero_iff_gold_is_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = HammingWeights::default();
        for _ in 0..50 {
            let g = random_graph(&mut rng);
            let theta: Vec<f64> = (0..g.num_vars()).map(|_| rng.random_range(-4.0..4.0)).collect();
            let gold = solve(&g.clone().with_costs(theta.iter().map(|t| -t).collect()).unwrap()).unwrap().assignment;
            let b = hinge_loss(&[(&g, &theta, &gold)], &w).unwrap();
            assert!(b.s >= 0.0);
            let ex = loss_augmented_exhaustive(&g, &theta, &gold, &w).unwrap();
            assert!((b.s - (ex.objective - gold.dot(&theta))).abs() < 1e-9);
            let gold_is_argmax = ex.objective <= gold.dot(&theta) + 1e-12;
            assert_eq!(b.s.abs() < 1e-12, gold_is_argmax);
        }
    }

    #[test]
    fn gate_zeroes_subgradient() {
        let g = single();
        let theta = vec![5.0, 1.0, 1.0];
        let gold = Assignment { values: vec![1, 1, 1] };
        let b = hinge_loss(&[(&g, &theta, &gold)], &HammingWeights::default()).unwrap();
        assert_eq!(b.s, 0.0);
        assert!(b.dthetas[0].iter().all(|&d| d == 0.0));
    }

    #[test]
    fn one_variable_difference() {
        // Two detections in one frame: gold uses only the first; the second
        // scores high so y* additionally activates its triple.
        let seq = seq_from_frames(vec![vec![det_at(0, 0, 10.0, 0.0), det_at(1, 0, 20.0, 0.0)]]);
        let g = build_graph(&seq, 0..1, &GateConfig::default()).unwrap();
        let lay = &g.layout;
        let mut theta = vec![0.0; g.num_vars()];
        theta[lay.det_var(0)] = 5.0;
        theta[lay.det_var(1)] = 5.0;
        let mut gold = Assignment::zeros(g.num_vars());
        for v in [lay.det_var(0), lay.new_var(0), lay.end_var(0)] {
            gold.values[v] = 1;
        }
        let b = hinge_loss(&[(&g, &theta, &gold)], &HammingWeights::default()).unwrap();
        assert_eq!(b.s, 8.0);
        let nz: Vec<(usize, f64)> = b.dthetas[0].iter().copied().enumerate().filter(|(_, d)| *d != 0.0).collect();
        assert_eq!(nz, vec![(lay.det_var(1), 1.0), (lay.new_var(1), 1.0), (lay.end_var(1), 1.0)]);
    }

    #[test]
    fn logistic_is_stable() {
        let (l, d) = logistic(1000.0, true);
        assert!(l.abs() < 1e-12 && d.abs() < 1e-12);
        let (l, d) = logistic(1000.0, false);
        assert!((l - 1000.0).abs() < 1e-9 && (d - 1.0).abs() < 1e-12);
        let (l, d) = logistic(0.0, true);
        assert!((l - 2f64.ln()).abs() < 1e-15 && (d + 0.5).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let feat = FeatureConfig::default();
        let mut m = CostModel::zeros(&feat, &crate::scoring::ScorerConfig::default());
        let cfg = TrainConfig { lr: 0.1, ..Default::default() };
        let mut adam = AdamState::new(&m, &cfg);
        let mut g = Gradient::zeros_like(&m);
        g.0.theta_new = 3.0;
        g.0.theta_end = -0.01;
        adam.update(&mut m, &g);
        assert!((m.theta_new + 0.1).abs() < 1e-6);
        assert!((m.theta_end - 0.1).abs() < 1e-4);
        assert_eq!(m.link.fusion.biases[0], 0.0);
    }

    #[test]
    fn batches_cycle() {
        assert_eq!(batch_indices(0, 2, 5), vec![0, 1]);
        assert_eq!(batch_indices(2, 2, 5), vec![4, 0]);
        assert_eq!(batch_indices(7, 9, 3), vec![0, 1, 2]);
    }
}
