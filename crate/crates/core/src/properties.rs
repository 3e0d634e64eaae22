//! Robustness properties as negated, disjunctive queries.
//!
//! Each property kind is turned into a list of single-goal queries whose
//! joint unsatisfiability proves the property:
//!
//! * local label: some other label reaches `C(x, ℓ) ≥ C(x, ℓ₀) + γ` inside the ball;
//! * local confidence: `C(x, ℓ) ≥ C(x₀, ℓ) + ε` or `C(x, ℓ) ≤ C(x₀, ℓ) − ε`;
//! * global: two network copies with `‖x₁ − x₂‖ ≤ δ` and `|C(x₁, ℓ) − C(x₂, ℓ)| ≥ ε`.

use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::network::{Classification, Hyperbox, Network, Norm};
use crate::reluverify::{
    solve_disjunction, Budget, Center, EncodeConfig, EncodedQuery, NormCheck, Outcome, OutputGoal, SearchStats,
    SolverConfig, TimeoutReason, Verdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PropertyKind {
    LocalLabel,
    LocalConfidence,
    GlobalConfidence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessSpec {
    pub kind: PropertyKind,
    pub x0: Option<Vec<f64>>,
    pub domain: Option<Hyperbox>,
    pub delta: f64,
    pub epsilon: Option<f64>,
    pub norm: Norm,
}

impl RobustnessSpec {
    pub fn local_label(x0: Vec<f64>, delta: f64, norm: Norm) -> Self {
        RobustnessSpec { kind: PropertyKind::LocalLabel, x0: Some(x0), domain: None, delta, epsilon: None, norm }
    }

    pub fn local_confidence(x0: Vec<f64>, delta: f64, epsilon: f64, norm: Norm) -> Self {
        RobustnessSpec {
            kind: PropertyKind::LocalConfidence,
            x0: Some(x0),
            domain: None,
            delta,
            epsilon: Some(epsilon),
            norm,
        }
    }

    pub fn global(domain: Hyperbox, delta: f64, epsilon: f64, norm: Norm) -> Self {
        RobustnessSpec {
            kind: PropertyKind::GlobalConfidence,
            x0: None,
            domain: Some(domain),
            delta,
            epsilon: Some(epsilon),
            norm,
        }
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        RobustnessSpec { delta, ..self.clone() }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        RobustnessSpec { epsilon: Some(epsilon), ..self.clone() }
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidProperty(format!("delta must be positive, got {}", self.delta)));
        }
        let needs_eps = self.kind != PropertyKind::LocalLabel;
        match self.epsilon {
            Some(e) if !(e > 0.0) || !e.is_finite() => {
                return Err(Error::InvalidProperty(format!("epsilon must be positive, got {e}")));
            }
            None if needs_eps => return Err(Error::InvalidProperty("missing epsilon".into())),
            _ => {}
        }
        let dim = match self.kind {
            PropertyKind::GlobalConfidence => {
                self.domain.as_ref().ok_or(Error::InvalidProperty("missing domain".into()))?.dim()
            }
            _ => self.x0.as_ref().ok_or(Error::InvalidProperty("missing x0".into()))?.len(),
        };
        if dim != net.input_dim() {
            return Err(Error::Dimension { expected: net.input_dim(), got: dim });
        }
        if let Some(x0) = &self.x0 {
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("x0"));
            }
        }
        Ok(())
    }

    /// The input box searched by the query (the L∞ hull of the ball, or the domain).
    pub fn input_box(&self) -> Result<Hyperbox> {
        match (&self.kind, &self.x0, &self.domain) {
            (PropertyKind::GlobalConfidence, _, Some(d)) => Ok(d.clone()),
            (_, Some(x0), _) => Hyperbox::around(x0, self.delta),
            _ => Err(Error::InvalidProperty("spec has no input region".into())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    /// Strictness margin γ for the local-label negation.
    pub margin: f64,
    pub encode: EncodeConfig,
    pub solver: SolverConfig,
    pub budget: Budget,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            margin: 1e-6,
            encode: EncodeConfig::default(),
            solver: SolverConfig::default(),
            budget: Budget::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolationReport {
    /// One point for local properties, the pair `x₁, x₂` for global ones.
    pub points: Vec<Vec<f64>>,
    pub label: usize,
    /// Confidence difference achieved by the counterexample.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropertyOutcome {
    Robust,
    Violated(ViolationReport),
    Timeout(TimeoutReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyVerdict {
    pub outcome: PropertyOutcome,
    pub stats: SearchStats,
}

impl PropertyVerdict {
    pub fn is_robust(&self) -> bool {
        self.outcome == PropertyOutcome::Robust
    }

    pub fn is_violated(&self) -> bool {
        matches!(self.outcome, PropertyOutcome::Violated(_))
    }

    pub fn is_timeout(&self) -> bool {
        matches!(self.outcome, PropertyOutcome::Timeout(_))
    }
}

impl From<Verdict> for PropertyVerdict {
    fn from(v: Verdict) -> Self {
        let outcome = match v.outcome {
            Outcome::Unsat => PropertyOutcome::Robust,
            Outcome::Sat { counterexample, .. } => PropertyOutcome::Violated(ViolationReport {
                points: counterexample.points,
                label: counterexample.label,
                gap: counterexample.gap,
            }),
            Outcome::Timeout(r) => PropertyOutcome::Timeout(r),
        };
        PropertyVerdict { outcome, stats: v.stats }
    }
}

/// Constrains copy `copy`'s inputs to the `norm` ball of radius `delta` around `center`.
///
/// L∞ uses bounds only (on the difference variables for two copies). L1
/// adds `t ≥ d`, `t ≥ −d`, `Σt ≤ δ` through nonnegative slacks, whose
/// projection onto the inputs is exactly the ball.
pub fn norm_constraint(q: &mut EncodedQuery, copy: usize, center: Center, delta: f64, norm: Norm) -> Result<()> {
    let xs = q.input_vars.get(copy).cloned().ok_or(Error::InvalidProperty(format!("no copy {copy}")))?;
    let mut diffs = Vec::with_capacity(xs.len());
    match &center {
        Center::Point(c) => {
            if c.len() != xs.len() {
                return Err(Error::Dimension { expected: xs.len(), got: c.len() });
            }
            for (x, ci) in xs.iter().zip(c) {
                if !q.system.restrict(*x, ci - delta, ci + delta) {
                    return Err(Error::InvalidProperty("norm ball misses the input region".into()));
                }
                if norm == Norm::L1 {
                    let d = q.add_aux_var(-delta, delta)?;
                    q.system.add_equality(&[(*x, 1.0), (d, -1.0)], *ci)?;
                    diffs.push(d);
                }
            }
        }
        Center::Copy(other) => {
            let ys = q.input_vars.get(*other).cloned().ok_or(Error::InvalidProperty(format!("no copy {other}")))?;
            for (x, y) in xs.iter().zip(&ys) {
                let d = q.add_aux_var(-delta, delta)?;
                q.system.add_equality(&[(*x, 1.0), (*y, -1.0), (d, -1.0)], 0.0)?;
                diffs.push(d);
            }
        }
    }
    if norm == Norm::L1 {
        let mut sum_terms = Vec::with_capacity(diffs.len() + 1);
        for d in diffs {
            let t = q.add_aux_var(0.0, delta)?;
            let s1 = q.add_aux_var(0.0, f64::INFINITY)?;
            let s2 = q.add_aux_var(0.0, f64::INFINITY)?;
            q.system.add_equality(&[(t, 1.0), (d, -1.0), (s1, -1.0)], 0.0)?;
            q.system.add_equality(&[(t, 1.0), (d, 1.0), (s2, -1.0)], 0.0)?;
            sum_terms.push((t, 1.0));
        }
        let s3 = q.add_aux_var(0.0, f64::INFINITY)?;
        sum_terms.push((s3, 1.0));
        q.system.add_equality(&sum_terms, delta)?;
    }
    q.norm_checks.push(NormCheck { copy, center, delta, norm });
    Ok(())
}

fn local_base(net: &Arc<Network>, x0: &[f64], delta: f64, norm: Norm, cfg: &VerifyConfig) -> Result<EncodedQuery> {
    let mut q = EncodedQuery::new(Arc::clone(net));
    q.encode_network(&Hyperbox::around(x0, delta)?, 0, &cfg.encode)?;
    norm_constraint(&mut q, 0, Center::Point(x0.to_vec()), delta, norm)?;
    Ok(q)
}

/// One disjunct per label other than `N(x₀)`.
pub fn encode_local_label(
    net: &Arc<Network>,
    x0: &[f64],
    delta: f64,
    norm: Norm,
    cfg: &VerifyConfig,
) -> Result<Vec<EncodedQuery>> {
    let Classification::Label(l0) = net.classify(x0)? else {
        return Err(Error::NoUniqueLabel);
    };
    let base = local_base(net, x0, delta, norm, cfg)?;
    net.labels()
        .filter(|&l| l != l0)
        .map(|l| {
            let mut q = base.clone();
            q.set_goal(OutputGoal { terms: vec![(0, l, 1.0), (0, l0, -1.0)], rhs: cfg.margin, offset: 0.0, label: l })?;
            Ok(q)
        })
        .collect()
}

/// Two disjuncts per label: confidence raised by ε, then lowered by ε.
pub fn encode_local_confidence(
    net: &Arc<Network>,
    x0: &[f64],
    delta: f64,
    epsilon: f64,
    norm: Norm,
    cfg: &VerifyConfig,
) -> Result<Vec<EncodedQuery>> {
    let c0 = net.evaluate(x0)?;
    let base = local_base(net, x0, delta, norm, cfg)?;
    let mut out = Vec::with_capacity(2 * c0.len());
    for (l, &c) in c0.iter().enumerate() {
        for sign in [1.0, -1.0] {
            let mut q = base.clone();
            q.set_goal(OutputGoal { terms: vec![(0, l, sign)], rhs: sign * c + epsilon, offset: sign * c, label: l })?;
            out.push(q);
        }
    }
    Ok(out)
}

/// Two-copy encoding over `domain`.
pub fn encode_global(
    net: &Arc<Network>,
    domain: &Hyperbox,
    delta: f64,
    epsilon: f64,
    norm: Norm,
    cfg: &VerifyConfig,
) -> Result<Vec<EncodedQuery>> {
    encode_global_split(net, domain, domain, delta, epsilon, norm, cfg)
}

/// Two-copy encoding with `x₁ ∈ first` and `x₂ ∈ second`.
pub fn encode_global_split(
    net: &Arc<Network>,
    first: &Hyperbox,
    second: &Hyperbox,
    delta: f64,
    epsilon: f64,
    norm: Norm,
    cfg: &VerifyConfig,
) -> Result<Vec<EncodedQuery>> {
    let mut base = EncodedQuery::new(Arc::clone(net));
    base.encode_network(first, 0, &cfg.encode)?;
    base.encode_network(second, 1, &cfg.encode)?;
    norm_constraint(&mut base, 0, Center::Copy(1), delta, norm)?;
    let mut out = Vec::with_capacity(2 * net.output_dim());
    for l in net.labels() {
        for sign in [1.0, -1.0] {
            let mut q = base.clone();
            q.set_goal(OutputGoal {
                terms: vec![(0, l, sign), (1, l, -sign)],
                rhs: epsilon,
                offset: 0.0,
                label: l,
            })?;
            out.push(q);
        }
    }
    Ok(out)
}

/// All disjuncts of `spec`.
pub fn encode(net: &Arc<Network>, spec: &RobustnessSpec, cfg: &VerifyConfig) -> Result<Vec<EncodedQuery>> {
    spec.validate(net)?;
    let eps = spec.epsilon.unwrap_or(0.0);
    match spec.kind {
        PropertyKind::LocalLabel => encode_local_label(net, spec.x0.as_ref().unwrap(), spec.delta, spec.norm, cfg),
        PropertyKind::LocalConfidence => {
            encode_local_confidence(net, spec.x0.as_ref().unwrap(), spec.delta, eps, spec.norm, cfg)
        }
        PropertyKind::GlobalConfidence => {
            encode_global(net, spec.domain.as_ref().unwrap(), spec.delta, eps, spec.norm, cfg)
        }
    }
}

/// Sequential verification of one property.
pub fn verify(net: &Arc<Network>, spec: &RobustnessSpec, cfg: &VerifyConfig) -> Result<PropertyVerdict> {
    let queries = encode(net, spec, cfg)?;
    let (v, _) = solve_disjunction(&queries, &cfg.solver, &cfg.budget);
    Ok(v.into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchKind {
    Label,
    Confidence(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxDeltaQuery {
    pub x0: Vec<f64>,
    pub kind: SearchKind,
    pub norm: Norm,
    pub precision: f64,
    pub delta_hi: f64,
}

impl MaxDeltaQuery {
    pub fn spec_at(&self, delta: f64) -> RobustnessSpec {
        match self.kind {
            SearchKind::Label => RobustnessSpec::local_label(self.x0.clone(), delta, self.norm),
            SearchKind::Confidence(eps) => RobustnessSpec::local_confidence(self.x0.clone(), delta, eps, self.norm),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxDelta {
    /// Largest probed radius proven robust (0 if none was).
    pub delta: f64,
    /// No probed radius was robust.
    pub never_robust: bool,
    /// Some probe timed out and was counted as non-robust.
    pub timed_out: bool,
    pub probes: usize,
    pub stats: SearchStats,
}

/// Bisection for the largest robust radius, to within `precision`.
pub fn max_delta_search(net: &Arc<Network>, query: &MaxDeltaQuery, cfg: &VerifyConfig) -> Result<MaxDelta> {
    max_delta_search_with(query, |spec| verify(net, spec, cfg))
}

/// Bisection driven by an arbitrary probe, e.g. a parallel verifier.
pub fn max_delta_search_with(
    query: &MaxDeltaQuery,
    mut probe: impl FnMut(&RobustnessSpec) -> Result<PropertyVerdict>,
) -> Result<MaxDelta> {
    if !(query.precision > 0.0) || !(query.delta_hi > 0.0) {
        return Err(Error::InvalidProperty("precision and upper bound must be positive".into()));
    }
    let mut out =
        MaxDelta { delta: 0.0, never_robust: false, timed_out: false, probes: 0, stats: SearchStats::default() };
    let mut robust_at = |delta: f64, out: &mut MaxDelta| -> Result<bool> {
        let v = probe(&query.spec_at(delta))?;
        out.probes += 1;
        out.stats.absorb(&v.stats);
        out.timed_out |= v.is_timeout();
        Ok(v.is_robust())
    };
    if robust_at(query.delta_hi, &mut out)? {
        out.delta = query.delta_hi;
        return Ok(out);
    }
    let (mut lo, mut hi) = (0.0, query.delta_hi);
    while hi - lo > query.precision {
        let mid = lo + (hi - lo) / 2.0;
        if robust_at(mid, &mut out)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    out.delta = lo;
    out.never_robust = lo == 0.0;
    Ok(out)
}

/// One line of a property file.
#[derive(Debug, Clone, PartialEq)]
pub enum SpecLine {
    Verify(RobustnessSpec),
    MaxDelta(MaxDeltaQuery),
}

/// Parses a property file; `default_norm` applies where a line omits `norm=`.
pub fn parse_spec_file(text: &str, default_norm: Norm) -> Result<Vec<SpecLine>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_spec_line(line, default_norm).map_err(|msg| Error::Parse { line: i + 1, msg })?);
    }
    Ok(out)
}

fn parse_spec_line(line: &str, default_norm: Norm) -> std::result::Result<SpecLine, String> {
    let mut words = line.split_whitespace();
    let kind = words.next().unwrap_or_default();
    let mut fields = std::collections::HashMap::new();
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| format!("expected key=value, found {w:?}"))?;
        if fields.insert(k, v).is_some() {
            return Err(format!("duplicate key {k:?}"));
        }
    }
    let allowed: &[&str] = match kind {
        "local-label" => &["x0", "delta", "norm"],
        "local-conf" => &["x0", "delta", "eps", "norm"],
        "global" => &["lo", "hi", "delta", "eps", "norm"],
        "max-delta" => &["x0", "kind", "eps", "norm", "prec", "hi"],
        other => return Err(format!("unknown property kind {other:?}")),
    };
    if let Some(k) = fields.keys().find(|k| !allowed.contains(k)) {
        return Err(format!("unexpected key {k:?} for {kind}"));
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| format!("missing {k}="));
    let num = |k: &str| -> std::result::Result<f64, String> {
        let v = get(k)?;
        v.parse::<f64>().map_err(|e| format!("bad {k}={v}: {e}"))
    };
    let vec = |k: &str| -> std::result::Result<Vec<f64>, String> {
        get(k)?.split(',').map(|t| t.parse::<f64>().map_err(|e| format!("bad {k} entry {t:?}: {e}"))).collect()
    };
    let norm = match fields.get("norm") {
        Some(n) => Norm::from_str(n).map_err(|e| e.to_string())?,
        None => default_norm,
    };
    Ok(match kind {
        "local-label" => SpecLine::Verify(RobustnessSpec::local_label(vec("x0")?, num("delta")?, norm)),
        "local-conf" => SpecLine::Verify(RobustnessSpec::local_confidence(vec("x0")?, num("delta")?, num("eps")?, norm)),
        "global" => {
            let domain = Hyperbox::new(vec("lo")?, vec("hi")?).map_err(|e| e.to_string())?;
            SpecLine::Verify(RobustnessSpec::global(domain, num("delta")?, num("eps")?, norm))
        }
        _ => {
            let kind = match get("kind")? {
                "label" => SearchKind::Label,
                "conf" => SearchKind::Confidence(num("eps")?),
                other => return Err(format!("unknown search kind {other:?}")),
            };
            SpecLine::MaxDelta(MaxDeltaQuery {
                x0: vec("x0")?,
                kind,
                norm,
                precision: num("prec")?,
                delta_hi: num("hi")?,
            })
        }
    })
}
