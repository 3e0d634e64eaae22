//! Work scheduling across points, disjuncts and sub-domains.

use std::collections::{HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{Hyperbox, Network, Norm, PhaseStatus};
use crate::properties::{
    encode, encode_global_split, max_delta_search_with, MaxDelta, MaxDeltaQuery, PropertyKind, PropertyOutcome,
    PropertyVerdict, RobustnessSpec, VerifyConfig,
};
use crate::reluverify::{
    aggregate, solve, solve_disjunction, Budget, EncodeConfig, EncodedQuery, FixOutcome, Outcome, TimeoutReason,
    Verdict,
};

#[derive(Debug, Clone)]
pub enum Payload {
    /// A whole property, its disjuncts solved in order by one worker.
    Point(RobustnessSpec),
    /// One pre-encoded disjunct.
    Disjunct(EncodedQuery),
    /// A global property restricted to `x₁ ∈ first`, `x₂ ∈ second`.
    SubDomain { spec: RobustnessSpec, first: Hyperbox, second: Hyperbox },
}

#[derive(Debug, Clone)]
pub struct WorkItem {
    pub id: usize,
    /// Items sharing a group are disjuncts of one property; a Sat cancels the rest.
    pub group: usize,
    pub payload: Payload,
    pub priority: f64,
}

impl WorkItem {
    pub fn new(id: usize, group: usize, payload: Payload) -> Self {
        WorkItem { id, group, payload, priority: 0.0 }
    }

    /// Box sampled by `prioritize`.
    fn region(&self) -> Option<Hyperbox> {
        match &self.payload {
            Payload::Point(spec) => spec.input_box().ok(),
            Payload::Disjunct(q) => q.input_boxes.first().cloned(),
            Payload::SubDomain { first, .. } => Some(first.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub workers: usize,
    pub early_stop: bool,
    pub verify: VerifyConfig,
    pub phase_cache: Option<Arc<PhaseCache>>,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            early_stop: true,
            verify: VerifyConfig::default(),
            phase_cache: None,
        }
    }
}

impl BatchConfig {
    pub fn with_workers(workers: usize) -> Self {
        BatchConfig { workers, ..BatchConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemResult {
    pub id: usize,
    pub group: usize,
    pub verdict: Verdict,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    /// Sorted by item id.
    pub items: Vec<ItemResult>,
    pub wall_time: Duration,
}

impl BatchResult {
    pub fn groups(&self) -> Vec<usize> {
        let mut g: Vec<usize> = self.items.iter().map(|r| r.group).collect();
        g.sort_unstable();
        g.dedup();
        g
    }

    /// Aggregate over one group. The reported witness is the lowest-id Sat item's.
    pub fn group_verdict(&self, group: usize) -> PropertyVerdict {
        let members: Vec<Verdict> =
            self.items.iter().filter(|r| r.group == group).map(|r| r.verdict.clone()).collect();
        let sat_only_cancels = members.iter().any(Verdict::is_sat);
        let mut v = aggregate(members.into_iter().filter(|v| {
            !(sat_only_cancels && v.outcome == Outcome::Timeout(TimeoutReason::Cancelled))
        }));
        v.stats.wall_time = self.group_time(group);
        v.into()
    }

    /// Sum of item times in a group (the time a single worker would spend).
    pub fn group_time(&self, group: usize) -> Duration {
        self.items.iter().filter(|r| r.group == group).map(|r| r.elapsed).sum()
    }
}

/// Runs every item and returns one verdict per item.
///
/// Items are taken in descending priority with FIFO ties. A worker panic or
/// encoding failure becomes a `WorkerFailure` timeout for that item.
pub fn run_batch(net: &Arc<Network>, items: Vec<WorkItem>, cfg: &BatchConfig) -> Result<BatchResult> {
    if cfg.workers == 0 {
        return Err(Error::InvalidProperty("workers must be at least 1".into()));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = items.iter().find(|it| !seen.insert(it.id)) {
        return Err(Error::InvalidProperty(format!("duplicate work item id {}", dup.id)));
    }
    let start = Instant::now();
    let mut queue: Vec<WorkItem> = items;
    queue.sort_by(|a, b| b.priority.total_cmp(&a.priority));
    let n = queue.len();
    let sched = Scheduler {
        net,
        cfg,
        queue: Mutex::new(queue.into()),
        groups: Mutex::new(HashMap::new()),
        results: Mutex::new(Vec::with_capacity(n)),
    };
    dispatch(&sched, cfg.workers.min(n.max(1)));
    let mut items = sched.results.into_inner().unwrap();
    items.sort_by_key(|r| r.id);
    Ok(BatchResult { items, wall_time: start.elapsed() })
}

#[cfg(feature = "parallel")]
fn dispatch(sched: &Scheduler, workers: usize) {
    if workers == 1 {
        return sched.drain();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.scope(|s| {
            for _ in 0..workers {
                s.spawn(|_| sched.drain());
            }
        }),
        Err(_) => sched.drain(),
    }
}

#[cfg(not(feature = "parallel"))]
fn dispatch(sched: &Scheduler, _workers: usize) {
    sched.drain();
}

struct GroupState {
    cancel: Arc<AtomicBool>,
    deadline: Option<Instant>,
}

struct Scheduler<'a> {
    net: &'a Arc<Network>,
    cfg: &'a BatchConfig,
    queue: Mutex<VecDeque<WorkItem>>,
    groups: Mutex<HashMap<usize, GroupState>>,
    results: Mutex<Vec<ItemResult>>,
}

impl Scheduler<'_> {
    fn drain(&self) {
        while let Some(item) = self.next() {
            let budget = self.budget_for(item.group);
            let t = Instant::now();
            let verdict = if budget.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed)) {
                timeout_verdict(TimeoutReason::Cancelled)
            } else {
                catch_unwind(AssertUnwindSafe(|| self.execute(&item.payload, &budget))).unwrap_or_else(|p| {
                    let msg = p
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| p.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "worker panicked".into());
                    timeout_verdict(TimeoutReason::WorkerFailure(msg))
                })
            };
            if self.cfg.early_stop && verdict.is_sat() {
                if let Some(c) = &budget.cancel {
                    c.store(true, Ordering::Relaxed);
                }
            }
            let elapsed = t.elapsed();
            self.results.lock().unwrap().push(ItemResult { id: item.id, group: item.group, verdict, elapsed });
        }
    }

    fn next(&self) -> Option<WorkItem> {
        self.queue.lock().unwrap().pop_front()
    }

    fn budget_for(&self, group: usize) -> Budget {
        let base = &self.cfg.verify.budget;
        let mut groups = self.groups.lock().unwrap();
        let st = groups.entry(group).or_insert_with(|| GroupState {
            cancel: Arc::new(AtomicBool::new(false)),
            deadline: base.timeout.map(|t| Instant::now() + t),
        });
        Budget {
            timeout: None,
            deadline: match (st.deadline, base.deadline) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            },
            max_splits: base.max_splits,
            cancel: Some(Arc::clone(&st.cancel)),
        }
    }

    fn execute(&self, payload: &Payload, budget: &Budget) -> Verdict {
        let vc = &self.cfg.verify;
        let queries = match payload {
            Payload::Disjunct(q) => {
                let mut q = q.clone();
                if let Some(cache) = &self.cfg.phase_cache {
                    if !cache.seed(&mut q, &vc.encode) {
                        return Verdict { outcome: Outcome::Unsat, stats: Default::default() };
                    }
                }
                return solve(&q, &vc.solver, budget);
            }
            Payload::Point(spec) => encode(self.net, spec, vc),
            Payload::SubDomain { spec, first, second } => encode_global_split(
                self.net,
                first,
                second,
                spec.delta,
                spec.epsilon.unwrap_or(0.0),
                spec.norm,
                vc,
            ),
        };
        let mut queries = match queries {
            Ok(q) => q,
            Err(e) => return timeout_verdict(TimeoutReason::WorkerFailure(e.to_string())),
        };
        if let Some(cache) = &self.cfg.phase_cache {
            queries.retain_mut(|q| cache.seed(q, &vc.encode));
        }
        solve_disjunction(&queries, &vc.solver, budget).0
    }
}

fn timeout_verdict(reason: TimeoutReason) -> Verdict {
    Verdict { outcome: Outcome::Timeout(reason), stats: Default::default() }
}

/// Splits `domain` into `n` boxes along the widest dimension, recursively.
pub fn partition_domain(domain: &Hyperbox, n: usize) -> Result<Vec<Hyperbox>> {
    if n == 0 {
        return Err(Error::Partition("need at least one part".into()));
    }
    let mut out = Vec::with_capacity(n);
    split_into(domain.clone(), n, &mut out)?;
    Ok(out)
}

fn split_into(b: Hyperbox, n: usize, out: &mut Vec<Hyperbox>) -> Result<()> {
    if n == 1 {
        out.push(b);
        return Ok(());
    }
    let dim = (0..b.dim())
        .max_by(|&i, &j| b.width(i).total_cmp(&b.width(j)).then(j.cmp(&i)))
        .ok_or(Error::Partition("zero-dimensional domain".into()))?;
    let (lo, hi) = (b.lower()[dim], b.upper()[dim]);
    let k = n / 2;
    let cut = lo + (hi - lo) * k as f64 / n as f64;
    if !(cut > lo && cut < hi) {
        return Err(Error::Partition(format!("{n} parts do not fit in [{lo}, {hi}]")));
    }
    let (mut left, mut right) = (b.clone(), b);
    left.set_side(dim, lo, cut);
    right.set_side(dim, cut, hi);
    split_into(left, k, out)?;
    split_into(right, n - k, out)
}

/// Orders items by a sampled fluctuation estimate, steepest first.
///
/// The estimate is `max |ΔC| / ‖Δx‖∞` over `samples` random pairs in the
/// item's box, seeded from the item id. Ties keep their original order.
pub fn prioritize(mut items: Vec<WorkItem>, net: &Network, samples: usize) -> Result<Vec<WorkItem>> {
    if samples < 2 {
        return Err(Error::InvalidProperty("prioritization needs at least 2 samples".into()));
    }
    for it in &mut items {
        it.priority = match it.region() {
            Some(b) => fluctuation(net, &b, samples, it.id as u64)?,
            None => 0.0,
        };
    }
    items.sort_by(|a, b| b.priority.total_cmp(&a.priority));
    Ok(items)
}

fn fluctuation(net: &Network, b: &Hyperbox, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..b.dim()).map(|i| b.lower()[i] + rng.random::<f64>() * b.width(i)).collect()
    };
    let mut best = 0.0f64;
    for _ in 0..samples {
        let (a, c) = (draw(&mut rng), draw(&mut rng));
        let dx = Norm::Linf.distance(&a, &c);
        if dx <= 0.0 {
            continue;
        }
        let (ya, yc) = (net.evaluate(&a)?, net.evaluate(&c)?);
        let dy = ya.iter().zip(&yc).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        best = best.max(dy / dx);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCacheEntry {
    pub region: Hyperbox,
    /// Per-copy ReLU indices (`0..relu_count`).
    pub fixed: Vec<(usize, PhaseStatus)>,
}

/// Phases derived on input boxes, reusable for any box they contain.
#[derive(Debug, Default)]
pub struct PhaseCache {
    entries: RwLock<Vec<PhaseCacheEntry>>,
}

impl PhaseCache {
    pub fn new() -> Self {
        PhaseCache::default()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Union of the fixings of every entry whose box contains `region`.
    pub fn lookup(&self, region: &Hyperbox) -> Vec<(usize, PhaseStatus)> {
        let entries = self.entries.read().unwrap();
        let mut out: Vec<(usize, PhaseStatus)> =
            entries.iter().filter(|e| e.region.contains(region)).flat_map(|e| e.fixed.iter().copied()).collect();
        out.sort_by_key(|&(i, p)| (i, p as u8));
        out.dedup();
        out
    }

    pub fn record(&self, region: Hyperbox, fixed: Vec<(usize, PhaseStatus)>) {
        self.entries.write().unwrap().push(PhaseCacheEntry { region, fixed });
    }

    /// Derives fixings for `region` from the network alone and records them.
    pub fn derive(&self, net: &Arc<Network>, region: &Hyperbox, cfg: &EncodeConfig) -> Result<()> {
        let mut q = EncodedQuery::new(Arc::clone(net));
        q.encode_network(region, 0, cfg)?;
        if let FixOutcome::Fixed(_) = q.fix_phases(8) {
            let fixed = q
                .phases()
                .into_iter()
                .enumerate()
                .filter(|(_, p)| *p != PhaseStatus::Undetermined)
                .collect();
            self.record(region.clone(), fixed);
        }
        Ok(())
    }

    /// Seeds every copy of `q` from the cache, deriving an entry when none
    /// contains that copy's box. Returns `false` if seeding exposed an empty region.
    pub fn seed(&self, q: &mut EncodedQuery, cfg: &EncodeConfig) -> bool {
        let net = Arc::clone(q.network());
        let per_copy = net.relu_count();
        let mut all = Vec::new();
        for (c, region) in q.input_boxes.clone().iter().enumerate() {
            if !self.entries.read().unwrap().iter().any(|e| e.region.contains(region))
                && self.derive(&net, region, cfg).is_err()
            {
                continue;
            }
            all.extend(self.lookup(region).into_iter().map(|(i, p)| (c * per_copy + i, p)));
        }
        q.seed_phases(&all)
    }
}

/// Verifies one property with its disjuncts spread over the worker pool.
pub fn verify_parallel(net: &Arc<Network>, spec: &RobustnessSpec, cfg: &BatchConfig) -> Result<PropertyVerdict> {
    let items = encode(net, spec, &cfg.verify)?
        .into_iter()
        .enumerate()
        .map(|(i, q)| WorkItem::new(i, 0, Payload::Disjunct(q)))
        .collect();
    let r = run_batch(net, items, cfg)?;
    let mut v = r.group_verdict(0);
    v.stats.wall_time = r.wall_time;
    Ok(v)
}

/// Verifies several properties at once; every disjunct of every property is
/// a separate work item. Results are in input order.
pub fn verify_many(net: &Arc<Network>, specs: &[RobustnessSpec], cfg: &BatchConfig) -> Result<Vec<PropertyVerdict>> {
    let mut items = Vec::new();
    for (g, spec) in specs.iter().enumerate() {
        for q in encode(net, spec, &cfg.verify)? {
            items.push(WorkItem::new(items.len(), g, Payload::Disjunct(q)));
        }
    }
    let r = run_batch(net, items, cfg)?;
    Ok((0..specs.len()).map(|g| r.group_verdict(g)).collect())
}

/// Global verification over `parts` sub-domains. Each sub-box constrains
/// `x₁`; `x₂` ranges over the sub-box inflated by δ and clipped to the domain,
/// so pairs straddling a cut are still covered.
pub fn verify_global_partitioned(
    net: &Arc<Network>,
    spec: &RobustnessSpec,
    parts: usize,
    cfg: &BatchConfig,
) -> Result<PropertyVerdict> {
    spec.validate(net)?;
    if spec.kind != PropertyKind::GlobalConfidence {
        return Err(Error::InvalidProperty("partitioning applies to global properties".into()));
    }
    let domain = spec.domain.as_ref().unwrap();
    let items = subdomain_items(spec, domain, parts, true)?;
    let r = run_batch(net, items, cfg)?;
    let mut v = r.group_verdict(0);
    v.stats.wall_time = r.wall_time;
    Ok(v)
}

pub(crate) fn subdomain_items(
    spec: &RobustnessSpec,
    domain: &Hyperbox,
    parts: usize,
    inflate: bool,
) -> Result<Vec<WorkItem>> {
    partition_domain(domain, parts)?
        .into_iter()
        .enumerate()
        .map(|(i, first)| {
            let second = if inflate {
                first.inflate(spec.delta).intersect(domain).ok_or(Error::Partition("empty neighbourhood".into()))?
            } else {
                first.clone()
            };
            Ok(WorkItem::new(i, 0, Payload::SubDomain { spec: spec.clone(), first, second }))
        })
        .collect()
}

/// Maximal-δ bisection with each probe verified in parallel.
pub fn max_delta_parallel(net: &Arc<Network>, query: &MaxDeltaQuery, cfg: &BatchConfig) -> Result<MaxDelta> {
    max_delta_search_with(query, |spec| verify_parallel(net, spec, cfg))
}

impl PropertyVerdict {
    /// Short status word used in reports.
    pub fn status(&self) -> &'static str {
        match self.outcome {
            PropertyOutcome::Robust => "robust",
            PropertyOutcome::Violated(_) => "violated",
            PropertyOutcome::Timeout(_) => "timeout",
        }
    }
}
