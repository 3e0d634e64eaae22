//! Network encoding and the ReLU case-splitting search.
//!
//! A network copy becomes, per hidden node, a `pre` variable tied to the
//! previous layer by an equality, a `post` variable, and a `gap` variable
//! with `post − pre − gap = 0`. With `post ≥ 0` and `gap ≥ 0` this is the
//! relaxation of `post = relu(pre)` used for undetermined nodes. Fixing a
//! phase only moves bounds:
//!
//! * active: `pre ≥ 0`, `gap = 0` (so `post = pre`)
//! * inactive: `pre ≤ 0`, `post = 0`
//!
//! so branching is a clone of the system plus two bound updates.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::lincore::{FeasResult, LinearSystem, LpConfig, TightenOutcome, VarId};
use crate::network::{phase_of, Hyperbox, Network, Norm, PhaseStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Input,
    Pre,
    Post,
    Gap,
    Output,
    Aux,
}

/// Which network node a variable stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRef {
    pub copy: usize,
    pub layer: usize,
    pub node: usize,
    pub role: NodeRole,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReluPair {
    pub pre: VarId,
    pub post: VarId,
    pub gap: VarId,
    pub phase: PhaseStatus,
}

/// Linear requirement on the outputs: `Σ coeff·y[copy][output] ≥ rhs`.
///
/// `gap = Σ coeff·y − offset` is the quantity reported to users (a
/// confidence difference for every property kind).
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGoal {
    pub terms: Vec<(usize, usize, f64)>,
    pub rhs: f64,
    pub offset: f64,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Center {
    Point(Vec<f64>),
    Copy(usize),
}

/// Norm-ball membership a counterexample must satisfy concretely.
#[derive(Debug, Clone, PartialEq)]
pub struct NormCheck {
    pub copy: usize,
    pub center: Center,
    pub delta: f64,
    pub norm: Norm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeConfig {
    /// Install phases already decided by interval propagation.
    pub seed_phases: bool,
    /// Add the triangle upper envelope for undetermined ReLUs.
    pub triangle: bool,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig { seed_phases: true, triangle: false }
    }
}

#[derive(Debug, Clone)]
pub struct EncodedQuery {
    pub system: LinearSystem,
    pub relus: Vec<ReluPair>,
    /// Input variables, one vector per network copy.
    pub input_vars: Vec<Vec<VarId>>,
    pub output_vars: Vec<Vec<VarId>>,
    /// Indexed by `VarId::index`.
    pub node_map: Vec<NodeRef>,
    pub input_boxes: Vec<Hyperbox>,
    pub goal: Option<OutputGoal>,
    pub norm_checks: Vec<NormCheck>,
    network: Arc<Network>,
}

impl EncodedQuery {
    pub fn new(network: Arc<Network>) -> Self {
        EncodedQuery {
            system: LinearSystem::new(),
            relus: Vec::new(),
            input_vars: Vec::new(),
            output_vars: Vec::new(),
            node_map: Vec::new(),
            input_boxes: Vec::new(),
            goal: None,
            norm_checks: Vec::new(),
            network,
        }
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.network
    }

    pub fn copies(&self) -> usize {
        self.input_vars.len()
    }

    fn var(&mut self, lo: f64, hi: f64, at: NodeRef) -> Result<VarId> {
        let v = self.system.add_var(lo, hi)?;
        self.node_map.push(at);
        Ok(v)
    }

    pub fn add_aux_var(&mut self, lo: f64, hi: f64) -> Result<VarId> {
        let at = NodeRef { copy: usize::MAX, layer: 0, node: 0, role: NodeRole::Aux };
        self.var(lo, hi, at)
    }

    /// Appends one copy of the network over `region`. Copies must be added in order.
    pub fn encode_network(&mut self, region: &Hyperbox, copy: usize, cfg: &EncodeConfig) -> Result<()> {
        if copy != self.copies() {
            return Err(Error::InvalidProperty(format!("copy {copy} encoded out of order")));
        }
        let net = Arc::clone(&self.network);
        let bounds = net.interval_evaluate(region)?;
        let at = |layer, node, role| NodeRef { copy, layer, node, role };

        let mut prev = Vec::with_capacity(net.input_dim());
        for i in 0..net.input_dim() {
            prev.push(self.var(region.lower()[i], region.upper()[i], at(0, i, NodeRole::Input))?);
        }
        self.input_vars.push(prev.clone());
        self.input_boxes.push(region.clone());

        let last = net.layers().len() - 1;
        for (k, layer) in net.layers().iter().enumerate() {
            let mut cur = Vec::with_capacity(layer.out_size());
            for (node, (row, b)) in layer.weights().iter().zip(layer.biases()).enumerate() {
                let (lo, hi) = bounds[k].pre[node];
                let role = if k == last { NodeRole::Output } else { NodeRole::Pre };
                let pre = self.var(lo, hi, at(k + 1, node, role))?;
                let mut terms: Vec<(VarId, f64)> = vec![(pre, 1.0)];
                terms.extend(prev.iter().zip(row).map(|(v, w)| (*v, -w)));
                self.system.add_equality(&terms, *b)?;
                if k == last {
                    cur.push(pre);
                    continue;
                }
                let post = self.var(lo.max(0.0), hi.max(0.0), at(k + 1, node, NodeRole::Post))?;
                let gap = self.var(0.0, f64::INFINITY, at(k + 1, node, NodeRole::Gap))?;
                self.system.add_equality(&[(post, 1.0), (pre, -1.0), (gap, -1.0)], 0.0)?;
                let idx = self.relus.len();
                self.relus.push(ReluPair { pre, post, gap, phase: PhaseStatus::Undetermined });
                let phase = phase_of(lo, hi);
                if cfg.seed_phases && phase != PhaseStatus::Undetermined {
                    self.install_phase(idx, phase);
                } else if cfg.triangle && phase == PhaseStatus::Undetermined {
                    // post ≤ hi·(pre − lo)/(hi − lo)
                    let slope = hi / (hi - lo);
                    let t = self.add_aux_var(0.0, f64::INFINITY)?;
                    self.system.add_equality(&[(pre, slope), (post, -1.0), (t, -1.0)], slope * lo)?;
                }
                cur.push(post);
            }
            prev = cur;
        }
        self.output_vars.push(prev);
        Ok(())
    }

    /// Adds the disjunct requirement `Σ coeff·y ≥ rhs` through a nonnegative slack.
    pub fn set_goal(&mut self, goal: OutputGoal) -> Result<()> {
        if self.goal.is_some() {
            return Err(Error::InvalidProperty("query already has an output goal".into()));
        }
        let slack = self.add_aux_var(0.0, f64::INFINITY)?;
        let mut terms = Vec::with_capacity(goal.terms.len() + 1);
        for &(copy, out, c) in &goal.terms {
            let v = *self
                .output_vars
                .get(copy)
                .and_then(|o| o.get(out))
                .ok_or(Error::UnknownLabel(out))?;
            terms.push((v, c));
        }
        terms.push((slack, -1.0));
        self.system.add_equality(&terms, goal.rhs)?;
        self.goal = Some(goal);
        Ok(())
    }

    pub fn phases(&self) -> Vec<PhaseStatus> {
        self.relus.iter().map(|r| r.phase).collect()
    }

    /// Commits relu `idx` to `phase`. Returns `false` if that empties the bounds.
    pub fn install_phase(&mut self, idx: usize, phase: PhaseStatus) -> bool {
        let mut phases = self.phases();
        let ok = install(&mut self.system, &self.relus[idx], &mut phases[idx], phase);
        self.relus[idx].phase = phases[idx];
        ok
    }

    /// Installs previously derived phases. Returns `false` on an empty region.
    pub fn seed_phases(&mut self, fixed: &[(usize, PhaseStatus)]) -> bool {
        for &(idx, phase) in fixed {
            if idx >= self.relus.len() || self.relus[idx].phase == phase {
                continue;
            }
            if self.relus[idx].phase != PhaseStatus::Undetermined || !self.install_phase(idx, phase) {
                return false;
            }
        }
        true
    }

    /// Tightens bounds and fixes every phase they decide, to a fixpoint.
    pub fn fix_phases(&mut self, rounds: usize) -> FixOutcome {
        let mut phases = self.phases();
        let out = fix_phases_in(&mut self.system, &self.relus, &mut phases, rounds);
        for (r, p) in self.relus.iter_mut().zip(phases) {
            r.phase = p;
        }
        out
    }

    /// Concretely re-evaluates the network(s) at the witness's inputs and
    /// confirms the goal and norm constraints on true network semantics.
    pub fn extract_counterexample(
        &self,
        witness: &[f64],
        tol: f64,
    ) -> std::result::Result<Counterexample, ValidationFailure> {
        let points: Vec<Vec<f64>> = self
            .input_vars
            .iter()
            .zip(&self.input_boxes)
            .map(|(vars, region)| region.clamp(&vars.iter().map(|v| witness[v.index()]).collect::<Vec<_>>()))
            .collect();
        let lp_outputs: Vec<Vec<f64>> =
            self.output_vars.iter().map(|vs| vs.iter().map(|v| witness[v.index()]).collect()).collect();
        let outputs: Vec<Vec<f64>> = points
            .iter()
            .map(|p| self.network.evaluate(p).unwrap_or_else(|_| vec![f64::NAN; self.network.output_dim()]))
            .collect();
        let fail = |reason: String| ValidationFailure {
            points: points.clone(),
            lp_outputs: lp_outputs.clone(),
            outputs: outputs.clone(),
            reason,
        };
        for check in &self.norm_checks {
            let center = match &check.center {
                Center::Point(c) => c.as_slice(),
                Center::Copy(c) => points[*c].as_slice(),
            };
            let d = check.norm.distance(&points[check.copy], center);
            if !(d <= check.delta + tol) {
                return Err(fail(format!("{} distance {d} exceeds {}", check.norm, check.delta)));
            }
        }
        let (value, gap, label) = match &self.goal {
            None => (0.0, 0.0, 0),
            Some(g) => {
                let value: f64 = g.terms.iter().map(|&(c, o, k)| k * outputs[c][o]).sum();
                if !(value >= g.rhs - tol) {
                    return Err(fail(format!("goal value {value} below required {}", g.rhs)));
                }
                (value, value - g.offset, g.label)
            }
        };
        Ok(Counterexample { points, outputs, goal_value: value, gap, label })
    }
}

fn install(sys: &mut LinearSystem, relu: &ReluPair, slot: &mut PhaseStatus, phase: PhaseStatus) -> bool {
    *slot = phase;
    match phase {
        PhaseStatus::Active => sys.restrict(relu.pre, 0.0, f64::INFINITY) && sys.restrict(relu.gap, 0.0, 0.0),
        PhaseStatus::Inactive => sys.restrict(relu.pre, f64::NEG_INFINITY, 0.0) && sys.restrict(relu.post, 0.0, 0.0),
        PhaseStatus::Undetermined => true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixOutcome {
    Fixed(usize),
    InfeasibleDetected,
}

fn fix_phases_in(sys: &mut LinearSystem, relus: &[ReluPair], phases: &mut [PhaseStatus], rounds: usize) -> FixOutcome {
    let mut total = 0;
    loop {
        if sys.tighten(rounds) == TightenOutcome::InfeasibleDetected {
            return FixOutcome::InfeasibleDetected;
        }
        let mut fixed = 0;
        for (relu, slot) in relus.iter().zip(phases.iter_mut()) {
            if *slot != PhaseStatus::Undetermined {
                continue;
            }
            let (lo, hi) = sys.bounds(relu.pre);
            let mut phase = phase_of(lo, hi);
            if phase == PhaseStatus::Undetermined && sys.lower(relu.post) > 0.0 {
                phase = PhaseStatus::Active;
            }
            if phase == PhaseStatus::Undetermined {
                continue;
            }
            if !install(sys, relu, slot, phase) {
                return FixOutcome::InfeasibleDetected;
            }
            fixed += 1;
        }
        total += fixed;
        if fixed == 0 {
            return FixOutcome::Fixed(total);
        }
    }
}

/// A validated violation: concrete input point(s) and their true outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub points: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub goal_value: f64,
    pub gap: f64,
    pub label: usize,
}

/// An LP witness that does not survive concrete re-evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationFailure {
    pub points: Vec<Vec<f64>>,
    pub lp_outputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lp: LpConfig,
    pub tighten_rounds: usize,
    /// Undetermined pairs with `|post − relu(pre)|` below this are accepted.
    pub relu_tol: f64,
    /// Tolerance of concrete counterexample validation.
    pub validation_tol: f64,
    pub fix_phases: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lp: LpConfig::default(),
            tighten_rounds: 3,
            relu_tol: 1e-7,
            validation_tol: 1e-6,
            fix_phases: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Budget {
    pub timeout: Option<Duration>,
    /// Absolute cut-off shared by every solve call using this budget.
    pub deadline: Option<Instant>,
    pub max_splits: Option<u64>,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Budget {
    pub fn unlimited() -> Self {
        Budget::default()
    }

    pub fn with_timeout(timeout: Duration) -> Self {
        Budget { timeout: Some(timeout), ..Budget::default() }
    }

    fn cancelled(&self) -> bool {
        self.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SearchStats {
    pub splits: u64,
    pub lp_calls: u64,
    pub phases_fixed: u64,
    pub validation_failures: u64,
    pub wall_time: Duration,
}

impl SearchStats {
    pub fn absorb(&mut self, other: &SearchStats) {
        self.splits += other.splits;
        self.lp_calls += other.lp_calls;
        self.phases_fixed += other.phases_fixed;
        self.validation_failures += other.validation_failures;
        self.wall_time += other.wall_time;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimeoutReason {
    Deadline,
    SplitLimit,
    Cancelled,
    SolverLimit(String),
    ValidationFailure(Box<ValidationFailure>),
    WorkerFailure(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Unsat,
    /// `witness` is the full LP assignment; the counterexample is validated.
    Sat { witness: Vec<f64>, counterexample: Counterexample },
    Timeout(TimeoutReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub outcome: Outcome,
    pub stats: SearchStats,
}

impl Verdict {
    pub fn is_sat(&self) -> bool {
        matches!(self.outcome, Outcome::Sat { .. })
    }

    pub fn is_unsat(&self) -> bool {
        self.outcome == Outcome::Unsat
    }
}

struct Node {
    system: LinearSystem,
    phases: Vec<PhaseStatus>,
}

/// Depth-first lazy case-splitting. Unsat only when every branch is infeasible.
pub fn solve(q: &EncodedQuery, cfg: &SolverConfig, budget: &Budget) -> Verdict {
    let start = Instant::now();
    let deadline = match (budget.timeout.map(|t| start + t), budget.deadline) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    let mut stats = SearchStats::default();
    let mut stack = vec![Node { system: q.system.clone(), phases: q.phases() }];
    let mut solver_error: Option<String> = None;
    let mut validation: Option<ValidationFailure> = None;

    let finish = |outcome, mut stats: SearchStats| {
        stats.wall_time = start.elapsed();
        Verdict { outcome, stats }
    };

    while let Some(mut node) = stack.pop() {
        if budget.cancelled() {
            return finish(Outcome::Timeout(TimeoutReason::Cancelled), stats);
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return finish(Outcome::Timeout(TimeoutReason::Deadline), stats);
        }
        if cfg.fix_phases {
            match fix_phases_in(&mut node.system, &q.relus, &mut node.phases, cfg.tighten_rounds) {
                FixOutcome::InfeasibleDetected => continue,
                FixOutcome::Fixed(n) => stats.phases_fixed += n as u64,
            }
        }
        stats.lp_calls += 1;
        let w = match node.system.check_feasible(&cfg.lp) {
            Ok(FeasResult::Feasible(w)) => w,
            Ok(FeasResult::Infeasible) => continue,
            Err(e) => {
                solver_error = Some(e.to_string());
                continue;
            }
        };

        // largest ReLU violation, then widest pre interval, then lowest VarId
        let mut pick: Option<(usize, f64, f64)> = None;
        for (i, (relu, phase)) in q.relus.iter().zip(&node.phases).enumerate() {
            if *phase != PhaseStatus::Undetermined {
                continue;
            }
            let viol = (w[relu.post.index()] - w[relu.pre.index()].max(0.0)).abs();
            if viol <= cfg.relu_tol {
                continue;
            }
            let (lo, hi) = node.system.bounds(relu.pre);
            let width = hi - lo;
            let better = match pick {
                None => true,
                Some((_, pv, pw)) => viol > pv || (viol == pv && width > pw),
            };
            if better {
                pick = Some((i, viol, width));
            }
        }

        let Some((idx, _, _)) = pick else {
            match q.extract_counterexample(&w, cfg.validation_tol) {
                Ok(counterexample) => {
                    return finish(Outcome::Sat { witness: w, counterexample }, stats);
                }
                Err(f) => {
                    stats.validation_failures += 1;
                    validation = Some(f);
                    continue;
                }
            }
        };

        stats.splits += 1;
        if budget.max_splits.is_some_and(|m| stats.splits > m) {
            return finish(Outcome::Timeout(TimeoutReason::SplitLimit), stats);
        }
        let relu = &q.relus[idx];
        let first = if w[relu.pre.index()] > 0.0 { PhaseStatus::Active } else { PhaseStatus::Inactive };
        let second = if first == PhaseStatus::Active { PhaseStatus::Inactive } else { PhaseStatus::Active };
        for phase in [second, first] {
            let mut child = Node { system: node.system.clone(), phases: node.phases.clone() };
            if install(&mut child.system, relu, &mut child.phases[idx], phase) {
                stack.push(child);
            }
        }
    }

    let outcome = if let Some(e) = solver_error {
        Outcome::Timeout(TimeoutReason::SolverLimit(e))
    } else if let Some(f) = validation {
        Outcome::Timeout(TimeoutReason::ValidationFailure(Box::new(f)))
    } else {
        Outcome::Unsat
    };
    finish(outcome, stats)
}

/// Sat if any disjunct is Sat, Unsat iff all are Unsat, otherwise Timeout.
/// Returns the aggregated verdict and, when Sat, the index of the satisfied disjunct.
pub fn solve_disjunction(queries: &[EncodedQuery], cfg: &SolverConfig, budget: &Budget) -> (Verdict, Option<usize>) {
    let start = Instant::now();
    let mut stats = SearchStats::default();
    let mut timeout: Option<TimeoutReason> = None;
    for (i, q) in queries.iter().enumerate() {
        let remaining = Budget {
            timeout: budget.timeout.map(|t| t.saturating_sub(start.elapsed())),
            ..budget.clone()
        };
        let v = solve(q, cfg, &remaining);
        stats.absorb(&v.stats);
        match v.outcome {
            Outcome::Sat { .. } => {
                stats.wall_time = start.elapsed();
                return (Verdict { outcome: v.outcome, stats }, Some(i));
            }
            Outcome::Timeout(r) => {
                timeout.get_or_insert(r);
            }
            Outcome::Unsat => {}
        }
    }
    stats.wall_time = start.elapsed();
    let outcome = timeout.map_or(Outcome::Unsat, Outcome::Timeout);
    (Verdict { outcome, stats }, None)
}

/// Aggregates independently computed disjunct verdicts.
pub fn aggregate(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
    let mut stats = SearchStats::default();
    let mut sat = None;
    let mut timeout = None;
    for v in verdicts {
        stats.absorb(&v.stats);
        match v.outcome {
            Outcome::Sat { .. } if sat.is_none() => sat = Some(v.outcome),
            Outcome::Timeout(r) => {
                timeout.get_or_insert(r);
            }
            _ => {}
        }
    }
    let outcome = sat.or(timeout.map(Outcome::Timeout)).unwrap_or(Outcome::Unsat);
    Verdict { outcome, stats }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu_identity() -> Arc<Network> {
        // h = relu(x), y = h
        Arc::new(Network::from_parts(vec![(vec![vec![1.0]], vec![0.0]), (vec![vec![1.0]], vec![0.0])]).unwrap())
    }

    fn encode(net: Arc<Network>, lo: &[f64], hi: &[f64]) -> EncodedQuery {
        let mut q = EncodedQuery::new(net);
        let region = Hyperbox::new(lo.to_vec(), hi.to_vec()).unwrap();
        q.encode_network(&region, 0, &EncodeConfig::default()).unwrap();
        q
    }

    #[test]
    fn encoding_seeds_phases_from_intervals() {
        assert_eq!(encode(relu_identity(), &[1.0], &[2.0]).phases(), vec![PhaseStatus::Active]);
        assert_eq!(encode(relu_identity(), &[-2.0], &[-1.0]).phases(), vec![PhaseStatus::Inactive]);
        let q = encode(relu_identity(), &[-1.0], &[1.0]);
        assert_eq!(q.phases(), vec![PhaseStatus::Undetermined]);
        assert_eq!(q.relus.len(), 1);
        assert_eq!(q.node_map[q.relus[0].pre.index()].role, NodeRole::Pre);
        assert_eq!(q.input_vars[0].len(), 1);
    }

    #[test]
    fn encode_out_of_order_copy_is_rejected() {
        let mut q = EncodedQuery::new(relu_identity());
        let region = Hyperbox::new(vec![0.0], vec![1.0]).unwrap();
        assert!(q.encode_network(&region, 1, &EncodeConfig::default()).is_err());
    }

    #[test]
    fn fix_phases_on_positive_box() {
        let mut q = EncodedQuery::new(relu_identity());
        let region = Hyperbox::new(vec![0.5], vec![2.0]).unwrap();
        q.encode_network(&region, 0, &EncodeConfig { seed_phases: false, triangle: false }).unwrap();
        assert_eq!(q.fix_phases(3), FixOutcome::Fixed(1));
        let v = solve(&q, &SolverConfig::default(), &Budget::unlimited());
        assert!(v.is_sat());
        assert_eq!(v.stats.splits, 0);
    }

    #[test]
    fn fix_phases_through_chain() {
        // h1 = relu(x), h2 = relu(h1 − 3), y = h2; x ∈ [0, 1] forces h2 inactive
        let net = Arc::new(
            Network::from_parts(vec![
                (vec![vec![1.0]], vec![0.0]),
                (vec![vec![1.0]], vec![-3.0]),
                (vec![vec![1.0]], vec![0.0]),
            ])
            .unwrap(),
        );
        let mut q = EncodedQuery::new(Arc::clone(&net));
        q.encode_network(&Hyperbox::new(vec![0.0], vec![1.0]).unwrap(), 0, &EncodeConfig { seed_phases: false, triangle: false })
            .unwrap();
        assert_eq!(q.fix_phases(3), FixOutcome::Fixed(2));
        assert_eq!(q.phases(), vec![PhaseStatus::Active, PhaseStatus::Inactive]);
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert!(net.pre_activations(&[x]).unwrap()[1][0] <= -2.0);
        }
    }

    #[test]
    fn fix_phases_finds_nothing_on_spanning_box() {
        let mut q = EncodedQuery::new(relu_identity());
        q.encode_network(&Hyperbox::new(vec![-1.0], vec![1.0]).unwrap(), 0, &EncodeConfig::default()).unwrap();
        assert_eq!(q.fix_phases(3), FixOutcome::Fixed(0));
    }

    #[test]
    fn unreachable_output_is_unsat() {
        // y = relu(x), x ∈ [-1, 1], require y ≥ 2
        let mut q = encode(relu_identity(), &[-1.0], &[1.0]);
        q.set_goal(OutputGoal { terms: vec![(0, 0, 1.0)], rhs: 2.0, offset: 0.0, label: 0 }).unwrap();
        let v = solve(&q, &SolverConfig::default(), &Budget::unlimited());
        assert!(v.is_unsat());
        assert!(v.stats.splits <= 1);
    }

    #[test]
    fn linear_net_infeasible_goal() {
        // y1 = x, y2 = −x on [0.5, 1.5]; y2 ≥ y1 impossible
        let net = Arc::new(Network::from_parts(vec![(vec![vec![1.0], vec![-1.0]], vec![0.0, 0.0])]).unwrap());
        let mut q = encode(net, &[0.5], &[1.5]);
        q.set_goal(OutputGoal { terms: vec![(0, 1, 1.0), (0, 0, -1.0)], rhs: 0.0, offset: 0.0, label: 1 }).unwrap();
        let v = solve(&q, &SolverConfig::default(), &Budget::unlimited());
        assert!(v.is_unsat());
        assert_eq!(v.stats.splits, 0);
    }

    #[test]
    fn sat_witness_validates() {
        let net = Arc::new(Network::from_parts(vec![(vec![vec![1.0], vec![-1.0]], vec![0.0, 0.0])]).unwrap());
        let mut q = encode(net, &[-1.0], &[1.0]);
        q.set_goal(OutputGoal { terms: vec![(0, 1, 1.0), (0, 0, -1.0)], rhs: 0.0, offset: 0.0, label: 1 }).unwrap();
        let v = solve(&q, &SolverConfig::default(), &Budget::unlimited());
        let Outcome::Sat { counterexample, .. } = v.outcome else { panic!("expected sat") };
        let x = counterexample.points[0][0];
        assert!(x <= 1e-6);
        assert!(-x >= x - 1e-6);
    }

    #[test]
    fn spurious_witness_is_rejected() {
        // y = x on [0, 1 − 1e−5], goal y ≥ 1; hand-made witness claims x = 1 − 1e−5
        let net = Arc::new(Network::from_parts(vec![(vec![vec![1.0]], vec![0.0])]).unwrap());
        let mut q = encode(net, &[0.0], &[1.0 - 1e-5]);
        q.set_goal(OutputGoal { terms: vec![(0, 0, 1.0)], rhs: 1.0, offset: 0.0, label: 0 }).unwrap();
        let mut w = vec![0.0; q.system.var_count()];
        w[q.input_vars[0][0].index()] = 1.0 - 1e-5;
        w[q.output_vars[0][0].index()] = 1.0;
        let err = q.extract_counterexample(&w, 1e-6).unwrap_err();
        assert_eq!(err.lp_outputs, vec![vec![1.0]]);
        assert!((err.outputs[0][0] - (1.0 - 1e-5)).abs() < 1e-15);
        // within tolerance it passes
        let mut q2 = encode(Arc::new(Network::from_parts(vec![(vec![vec![1.0]], vec![0.0])]).unwrap()), &[0.0], &[1.0]);
        q2.set_goal(OutputGoal { terms: vec![(0, 0, 1.0)], rhs: 1.0 + 1e-9, offset: 0.0, label: 0 }).unwrap();
        let mut w = vec![0.0; q2.system.var_count()];
        w[q2.input_vars[0][0].index()] = 1.0;
        assert!(q2.extract_counterexample(&w, 1e-6).is_ok());
    }

    fn verdict(outcome: Outcome) -> Verdict {
        Verdict { outcome, stats: SearchStats::default() }
    }

    #[test]
    fn aggregation_rules() {
        let sat = Outcome::Sat {
            witness: vec![1.0],
            counterexample: Counterexample { points: vec![], outputs: vec![], goal_value: 0.0, gap: 0.0, label: 0 },
        };
        assert!(aggregate([verdict(Outcome::Unsat), verdict(Outcome::Unsat)]).is_unsat());
        assert_eq!(aggregate([verdict(Outcome::Unsat), verdict(sat.clone())]).outcome, sat);
        assert_eq!(
            aggregate([verdict(Outcome::Timeout(TimeoutReason::Deadline)), verdict(Outcome::Unsat)]).outcome,
            Outcome::Timeout(TimeoutReason::Deadline)
        );
        assert_eq!(
            aggregate([verdict(Outcome::Timeout(TimeoutReason::Deadline)), verdict(sat.clone())]).outcome,
            sat
        );
    }

    #[test]
    fn cancelled_budget_times_out() {
        let q = encode(relu_identity(), &[-1.0], &[1.0]);
        let budget = Budget { cancel: Some(Arc::new(AtomicBool::new(true))), ..Budget::default() };
        assert_eq!(solve(&q, &SolverConfig::default(), &budget).outcome, Outcome::Timeout(TimeoutReason::Cancelled));
    }
}
