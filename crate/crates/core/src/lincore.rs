//! Feasibility of linear equalities over bounded real variables.
//!
//! [`LinearSystem::check_feasible`] is a dense bounded-variable primal
//! simplex running phase 1 only: one artificial per row, minimise the sum
//! of artificials. Dantzig pricing is used for a configurable number of
//! pivots, then Bland's rule, which cannot cycle. The tableau is rebuilt
//! from the original rows periodically and before a witness is returned.
//!
//! [`LinearSystem::tighten`] derives implied bounds from each equality by
//! interval arithmetic over the other terms.

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// `Σ coeff·var = rhs`
#[derive(Debug, Clone, PartialEq)]
pub struct Equality {
    pub terms: Vec<(VarId, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeasResult {
    Feasible(Vec<f64>),
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TightenOutcome {
    /// Number of bound updates made.
    Tightened(usize),
    InfeasibleDetected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpConfig {
    /// Absolute residual allowed on each equality of a witness.
    pub eq_tol: f64,
    /// Allowed bound violation of a witness.
    pub bound_tol: f64,
    /// Entries below this magnitude are never pivoted on.
    pub pivot_tol: f64,
    /// Dantzig pivots before switching to Bland's rule.
    pub dantzig_pivots: usize,
    pub max_pivots: usize,
    /// Tableau is rebuilt from the original rows every this many pivots.
    pub refactor_every: usize,
}

impl Default for LpConfig {
    fn default() -> Self {
        LpConfig {
            eq_tol: 1e-7,
            bound_tol: 1e-8,
            pivot_tol: 1e-9,
            dantzig_pivots: 200,
            max_pivots: 50_000,
            refactor_every: 64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearSystem {
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Equality>,
}

impl LinearSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, lo: f64, hi: f64) -> Result<VarId> {
        check_bounds(lo, hi)?;
        self.lower.push(lo);
        self.upper.push(hi);
        Ok(VarId(self.lower.len() - 1))
    }

    /// Records `Σ coeff·var = rhs`. Repeated variables are merged.
    pub fn add_equality(&mut self, terms: &[(VarId, f64)], rhs: f64) -> Result<()> {
        if !rhs.is_finite() {
            return Err(Error::NonFinite("equality rhs"));
        }
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for &(v, c) in terms {
            if v.0 >= self.var_count() {
                return Err(Error::UnknownVar(v.0));
            }
            if !c.is_finite() {
                return Err(Error::NonFinite("equality coefficient"));
            }
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(t) => t.1 += c,
                None => merged.push((v, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        self.rows.push(Equality { terms: merged, rhs });
        Ok(())
    }

    pub fn var_count(&self) -> usize {
        self.lower.len()
    }

    pub fn equalities(&self) -> &[Equality] {
        &self.rows
    }

    pub fn lower(&self, v: VarId) -> f64 {
        self.lower[v.0]
    }

    pub fn upper(&self, v: VarId) -> f64 {
        self.upper[v.0]
    }

    pub fn bounds(&self, v: VarId) -> (f64, f64) {
        (self.lower[v.0], self.upper[v.0])
    }

    pub fn set_bounds(&mut self, v: VarId, lo: f64, hi: f64) -> Result<()> {
        if v.0 >= self.var_count() {
            return Err(Error::UnknownVar(v.0));
        }
        check_bounds(lo, hi)?;
        self.lower[v.0] = lo;
        self.upper[v.0] = hi;
        Ok(())
    }

    /// Intersects the bounds of `v` with `[lo, hi]`. Returns `false` if the result is empty.
    pub fn restrict(&mut self, v: VarId, lo: f64, hi: f64) -> bool {
        let l = self.lower[v.0].max(lo);
        let h = self.upper[v.0].min(hi);
        if l > h {
            return false;
        }
        self.lower[v.0] = l;
        self.upper[v.0] = h;
        true
    }

    /// Largest absolute equality residual of `x`.
    pub fn max_residual(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.terms.iter().map(|(v, c)| c * x[v.0]).sum::<f64>() - r.rhs).abs())
            .fold(0.0, f64::max)
    }

    /// Largest bound violation of `x`.
    pub fn max_bound_violation(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, h))| (l - v).max(v - h).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn check_feasible(&self, cfg: &LpConfig) -> Result<FeasResult> {
        if self.lower.iter().zip(&self.upper).any(|(l, h)| l > h) {
            return Ok(FeasResult::Infeasible);
        }
        let mut kept = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            if row.terms.is_empty() {
                if row.rhs.abs() > cfg.eq_tol {
                    return Ok(FeasResult::Infeasible);
                }
            } else {
                kept.push(row);
            }
        }
        let mut tab = Tableau::build(self, &kept);
        match tab.run(cfg)? {
            false => Ok(FeasResult::Infeasible),
            true => {
                let x: Vec<f64> = tab.x[..self.var_count()]
                    .iter()
                    .zip(self.lower.iter().zip(&self.upper))
                    .map(|(v, (l, h))| v.clamp(*l, *h))
                    .collect();
                let res = self.max_residual(&x);
                if res > cfg.eq_tol {
                    return Err(Error::SolverLimit(format!("witness residual {res:e} exceeds tolerance")));
                }
                Ok(FeasResult::Feasible(x))
            }
        }
    }

    /// Interval bound propagation over the equalities, up to `max_rounds` passes.
    pub fn tighten(&mut self, max_rounds: usize) -> TightenOutcome {
        let mut changed = 0;
        for _ in 0..max_rounds {
            let mut round_changes = 0;
            for r in 0..self.rows.len() {
                match self.tighten_row(r) {
                    Some(n) => round_changes += n,
                    None => return TightenOutcome::InfeasibleDetected,
                }
            }
            changed += round_changes;
            if round_changes == 0 {
                break;
            }
        }
        TightenOutcome::Tightened(changed)
    }

    fn tighten_row(&mut self, r: usize) -> Option<usize> {
        const CROSS_TOL: f64 = 1e-9;
        let row = &self.rows[r];
        // activity range of Σ c·x, tracking infinite contributions separately
        let (mut min_sum, mut max_sum) = (0.0, 0.0);
        let (mut min_inf, mut max_inf) = (0usize, 0usize);
        let contrib = |c: f64, l: f64, h: f64| if c > 0.0 { (c * l, c * h) } else { (c * h, c * l) };
        for &(v, c) in &row.terms {
            let (lo, hi) = contrib(c, self.lower[v.0], self.upper[v.0]);
            if lo.is_finite() { min_sum += lo } else { min_inf += 1 }
            if hi.is_finite() { max_sum += hi } else { max_inf += 1 }
        }
        if min_inf == 0 && min_sum > row.rhs + CROSS_TOL * (1.0 + row.rhs.abs()) {
            return None;
        }
        if max_inf == 0 && max_sum < row.rhs - CROSS_TOL * (1.0 + row.rhs.abs()) {
            return None;
        }
        let mut updates = Vec::new();
        for &(v, c) in &row.terms {
            let (lo, hi) = contrib(c, self.lower[v.0], self.upper[v.0]);
            let rest_min = match (min_inf, lo.is_finite()) {
                (0, _) => min_sum - lo,
                (1, false) => min_sum,
                _ => f64::NEG_INFINITY,
            };
            let rest_max = match (max_inf, hi.is_finite()) {
                (0, _) => max_sum - hi,
                (1, false) => max_sum,
                _ => f64::INFINITY,
            };
            // c·x = rhs − rest
            let (a, b) = (row.rhs - rest_max, row.rhs - rest_min);
            let (new_lo, new_hi) = if c > 0.0 { (a / c, b / c) } else { (b / c, a / c) };
            updates.push((v, new_lo, new_hi));
        }
        let mut n = 0;
        for (v, new_lo, new_hi) in updates {
            let (lo, hi) = (self.lower[v.0], self.upper[v.0]);
            let slack = |x: f64| 1e-12 * (1.0 + x.abs());
            let mut l = lo;
            let mut h = hi;
            if new_lo.is_finite() && new_lo - slack(new_lo) > lo + 1e-9 * (1.0 + lo.abs().min(1e12)) {
                l = new_lo - slack(new_lo);
            }
            if new_hi.is_finite() && new_hi + slack(new_hi) < hi - 1e-9 * (1.0 + hi.abs().min(1e12)) {
                h = new_hi + slack(new_hi);
            }
            if l > h {
                if l - h > CROSS_TOL * (1.0 + l.abs().max(h.abs())) {
                    return None;
                }
                // crossing within rounding noise: collapse onto the old side
                if l != lo {
                    l = h;
                } else {
                    h = l;
                }
            }
            if l != lo || h != hi {
                self.lower[v.0] = l;
                self.upper[v.0] = h;
                n += 1;
            }
        }
        Some(n)
    }

    /// Plain-text dump, one bound or constraint per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (i, (l, h)) in self.lower.iter().zip(&self.upper).enumerate() {
            let _ = writeln!(s, "x{i} in [{l}, {h}]");
        }
        for row in &self.rows {
            let lhs: Vec<String> = row.terms.iter().map(|(v, c)| format!("{c}*{v}")).collect();
            let _ = writeln!(s, "{} = {}", if lhs.is_empty() { "0".into() } else { lhs.join(" + ") }, row.rhs);
        }
        s
    }
}

fn check_bounds(lo: f64, hi: f64) -> Result<()> {
    if lo.is_nan() || hi.is_nan() {
        return Err(Error::NonFinite("bound"));
    }
    if lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
        return Err(Error::InvertedBounds { lo, hi });
    }
    Ok(())
}

/// Dense phase-1 tableau. Columns are the structural variables followed by
/// one artificial per row.
struct Tableau {
    m: usize,
    n: usize,
    cols: usize,
    /// Original scaled rows `[A | S]` and right-hand side.
    orig: Vec<f64>,
    orig_rhs: Vec<f64>,
    /// Current `B⁻¹[A | S]`.
    t: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<Option<usize>>,
}

impl Tableau {
    fn build(sys: &LinearSystem, rows: &[&Equality]) -> Self {
        let m = rows.len();
        let n = sys.var_count();
        let cols = n + m;
        let mut lo = sys.lower.clone();
        let mut hi = sys.upper.clone();
        lo.extend(std::iter::repeat_n(0.0, m));
        hi.extend(std::iter::repeat_n(f64::INFINITY, m));
        let mut x: Vec<f64> = (0..n).map(|j| resting_value(lo[j], hi[j])).collect();
        x.extend(std::iter::repeat_n(0.0, m));

        let mut orig = vec![0.0; m * cols];
        let mut orig_rhs = vec![0.0; m];
        for (i, row) in rows.iter().enumerate() {
            let scale = row.terms.iter().map(|(_, c)| c.abs()).fold(0.0, f64::max);
            let mut resid = row.rhs / scale;
            for &(v, c) in &row.terms {
                orig[i * cols + v.0] += c / scale;
                resid -= c / scale * x[v.0];
            }
            let sign = if resid >= 0.0 { 1.0 } else { -1.0 };
            orig[i * cols + n + i] = sign;
            orig_rhs[i] = row.rhs / scale;
            x[n + i] = resid.abs();
        }
        // B = diag(sign) so B⁻¹ = B
        let mut t = orig.clone();
        for i in 0..m {
            let sign = orig[i * cols + n + i];
            t[i * cols..(i + 1) * cols].iter_mut().for_each(|v| *v *= sign);
        }
        let basis: Vec<usize> = (n..cols).collect();
        let mut row_of = vec![None; cols];
        for (i, &b) in basis.iter().enumerate() {
            row_of[b] = Some(i);
        }
        Tableau { m, n, cols, orig, orig_rhs, t, lo, hi, x, basis, row_of }
    }

    fn objective(&self) -> f64 {
        self.x[self.n..].iter().sum()
    }

    /// Runs phase 1. Returns whether the artificials were driven to zero.
    fn run(&mut self, cfg: &LpConfig) -> Result<bool> {
        let feas_tol = 1e-10 * (self.m.max(1) as f64);
        let mut pivots = 0usize;
        let mut reinverted_at_optimum = false;
        loop {
            if pivots > cfg.max_pivots {
                return Err(Error::SolverLimit(format!("{pivots} pivots without convergence")));
            }
            let bland = pivots >= cfg.dantzig_pivots;
            let entering = if self.objective() <= feas_tol { None } else { self.price(cfg, bland) };
            let Some((j, dir)) = entering else {
                if !reinverted_at_optimum {
                    self.reinvert(cfg);
                    reinverted_at_optimum = true;
                    continue;
                }
                return Ok(self.objective() <= feas_tol);
            };
            reinverted_at_optimum = false;
            self.step(j, dir, cfg, bland)?;
            pivots += 1;
            if pivots.is_multiple_of(cfg.refactor_every) {
                self.reinvert(cfg);
            }
        }
    }

    /// Chooses an entering column and its direction of movement.
    fn price(&self, cfg: &LpConfig, bland: bool) -> Option<(usize, f64)> {
        let cols = self.cols;
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..cols {
            if self.row_of[j].is_some() {
                continue;
            }
            let mut d = if j >= self.n { 1.0 } else { 0.0 };
            for i in 0..self.m {
                if self.basis[i] >= self.n {
                    d -= self.t[i * cols + j];
                }
            }
            let dir = if d < -cfg.pivot_tol && self.x[j] < self.hi[j] {
                1.0
            } else if d > cfg.pivot_tol && self.x[j] > self.lo[j] {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, _, s)| d.abs() > s) {
                best = Some((j, dir, d.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn step(&mut self, j: usize, dir: f64, cfg: &LpConfig, bland: bool) -> Result<()> {
        let cols = self.cols;
        let flip = self.hi[j] - self.lo[j];
        // (row, rate of change of its basic variable, room before it hits a bound)
        let mut best: Option<(usize, f64, f64)> = None;
        for i in 0..self.m {
            let a = self.t[i * cols + j];
            if a.abs() <= cfg.pivot_tol {
                continue;
            }
            let b = self.basis[i];
            let rate = -a * dir;
            let room = if rate < 0.0 {
                (self.x[b] - self.lo[b]) / -rate
            } else {
                (self.hi[b] - self.x[b]) / rate
            };
            if !room.is_finite() {
                continue;
            }
            let room = room.max(0.0);
            let take = match best {
                None => true,
                Some((r, _, br)) => {
                    room < br - 1e-12
                        || (room <= br + 1e-12
                            && if bland {
                                b < self.basis[r]
                            } else {
                                a.abs() > self.t[r * cols + j].abs()
                            })
                }
            };
            if take {
                best = Some((i, rate, room));
            }
        }
        let (limit, leave) = match best {
            Some((r, rate, room)) if room < flip => (room, Some((r, rate))),
            _ => (flip, None),
        };
        if !limit.is_finite() {
            return Err(Error::SolverLimit("unbounded phase-1 direction".into()));
        }
        self.x[j] += dir * limit;
        for i in 0..self.m {
            let a = self.t[i * cols + j];
            if a != 0.0 {
                let b = self.basis[i];
                self.x[b] -= a * dir * limit;
            }
        }
        let Some((r, rate)) = leave else {
            // bound flip
            self.x[j] = if dir > 0.0 { self.hi[j] } else { self.lo[j] };
            return Ok(());
        };
        let out = self.basis[r];
        self.x[out] = if rate < 0.0 { self.lo[out] } else { self.hi[out] };
        self.pivot(r, j);
        Ok(())
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let p = self.t[r * cols + j];
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (prow, after) = rest.split_at_mut(cols);
        for row in before.chunks_exact_mut(cols).chain(after.chunks_exact_mut(cols)) {
            let f = row[j];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                row[j] = 0.0;
            }
        }
        let out = self.basis[r];
        self.row_of[out] = None;
        self.row_of[j] = Some(r);
        self.basis[r] = j;
    }

    /// Rebuilds `B⁻¹[A | S]` and the basic values from the original rows.
    fn reinvert(&mut self, cfg: &LpConfig) {
        let (m, cols) = (self.m, self.cols);
        let mut t = self.orig.clone();
        let mut rhs = self.orig_rhs.clone();
        let mut assigned = vec![false; m];
        let mut new_basis = vec![usize::MAX; m];
        let old_basis = self.basis.clone();
        let mut dropped = Vec::new();

        let eliminate = |t: &mut Vec<f64>, rhs: &mut Vec<f64>, r: usize, j: usize| {
            let p = t[r * cols + j];
            for v in &mut t[r * cols..(r + 1) * cols] {
                *v /= p;
            }
            rhs[r] /= p;
            for i in 0..m {
                if i == r {
                    continue;
                }
                let f = t[i * cols + j];
                if f != 0.0 {
                    for k in 0..cols {
                        t[i * cols + k] -= f * t[r * cols + k];
                    }
                    t[i * cols + j] = 0.0;
                    rhs[i] -= f * rhs[r];
                }
            }
        };

        for &j in &old_basis {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = t[i * cols + j].abs();
                if !assigned[i] && a > best.map_or(cfg.pivot_tol * 1e-2, |b| b.1) {
                    best = Some((i, a));
                }
            }
            match best {
                Some((r, _)) => {
                    eliminate(&mut t, &mut rhs, r, j);
                    assigned[r] = true;
                    new_basis[r] = j;
                }
                None => dropped.push(j),
            }
        }
        for j in dropped {
            self.row_of[j] = None;
            self.x[j] = resting_value(self.lo[j], self.hi[j]).clamp(self.lo[j], self.hi[j]);
        }
        for r in 0..m {
            if !assigned[r] {
                let j = self.n + r;
                eliminate(&mut t, &mut rhs, r, j);
                new_basis[r] = j;
            }
        }
        self.row_of.iter_mut().for_each(|v| *v = None);
        for (r, &j) in new_basis.iter().enumerate() {
            self.row_of[j] = Some(r);
        }
        for r in 0..m {
            let mut v = rhs[r];
            for k in 0..cols {
                if self.row_of[k].is_none() {
                    v -= t[r * cols + k] * self.x[k];
                }
            }
            self.x[new_basis[r]] = v;
        }
        self.t = t;
        self.basis = new_basis;
    }
}

/// Where a nonbasic variable sits: a finite bound if one exists, else zero.
fn resting_value(lo: f64, hi: f64) -> f64 {
    if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}
