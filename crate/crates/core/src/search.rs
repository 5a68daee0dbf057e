//! Tabu search over element activation (stage 1) and fold angles (stage 2).

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{AngleSet, FoldConfiguration};

/// Binary activation vector over all layers, layer 1 first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActivationTopology {
    layers: usize,
    per_layer: usize,
    bits: Vec<bool>,
}

impl ActivationTopology {
    pub fn new(layers: usize, per_layer: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != layers * per_layer {
            return Err(Error::domain(format!(
                "activation vector has {} entries, expected {layers}x{per_layer}",
                bits.len()
            )));
        }
        Ok(ActivationTopology {
            layers,
            per_layer,
            bits,
        })
    }

    /// Every grid location active.
    pub fn dense(layers: usize, per_layer: usize) -> Self {
        ActivationTopology {
            layers,
            per_layer,
            bits: vec![true; layers * per_layer],
        }
    }

    pub fn from_active(layers: usize, per_layer: usize, active: &[usize]) -> Result<Self> {
        let mut bits = vec![false; layers * per_layer];
        for &i in active {
            *bits
                .get_mut(i)
                .ok_or_else(|| Error::domain(format!("active index {i} out of range")))? = true;
        }
        Self::new(layers, per_layer, bits)
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn per_layer(&self) -> usize {
        self.per_layer
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn layer(&self, l: usize) -> &[bool] {
        &self.bits[l * self.per_layer..(l + 1) * self.per_layer]
    }

    /// Number of active elements.
    pub fn budget(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn layer_budget(&self, l: usize) -> usize {
        self.layer(l).iter().filter(|&&b| b).count()
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }

    fn split(&self) -> (Vec<usize>, Vec<usize>) {
        (0..self.bits.len()).partition(|&i| self.bits[i])
    }
}

impl fmt::Display for ActivationTopology {
    /// Layers as runs of `0`/`1` separated by `|`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in 0..self.layers {
            if l > 0 {
                f.write_str("|")?;
            }
            for &b in self.layer(l) {
                f.write_str(if b { "1" } else { "0" })?;
            }
        }
        Ok(())
    }
}

/// Uniformly random topology with exactly `budget` active elements.
pub fn random_topology<R: Rng + ?Sized>(
    layers: usize,
    per_layer: usize,
    budget: usize,
    rng: &mut R,
) -> Result<ActivationTopology> {
    let capacity = layers * per_layer;
    if budget > capacity {
        return Err(Error::InfeasibleBudget { budget, capacity });
    }
    let mut bits = vec![false; capacity];
    for i in sample(rng, capacity, budget) {
        bits[i] = true;
    }
    ActivationTopology::new(layers, per_layer, bits)
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > items.len() {
        return out;
    }
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + items.len() - k) else {
            return out;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn swapped(z: &ActivationTopology, off: &[usize], on: &[usize]) -> ActivationTopology {
    let mut next = z.clone();
    for &i in off {
        next.bits[i] = false;
    }
    for &i in on {
        next.bits[i] = true;
    }
    next
}

/// Up to `count` distinct neighbours, each swapping `d` active elements
/// with `d` inactive ones. Small neighbourhoods are enumerated in full.
pub fn swap_neighbors<R: Rng + ?Sized>(
    z: &ActivationTopology,
    d: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<ActivationTopology>> {
    let (active, inactive) = z.split();
    if d == 0 || d > active.len() || d > inactive.len() {
        return Err(Error::domain(format!(
            "swap distance {d} infeasible with {} active and {} inactive elements",
            active.len(),
            inactive.len()
        )));
    }
    let total = binomial(active.len(), d).saturating_mul(binomial(inactive.len(), d));
    if total <= count {
        let offs = combinations(&active, d);
        let ons = combinations(&inactive, d);
        return Ok(offs
            .iter()
            .flat_map(|off| ons.iter().map(move |on| swapped(z, off, on)))
            .collect());
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 20 * count {
        attempts += 1;
        let mut off: Vec<usize> = sample(rng, active.len(), d).into_iter().map(|i| active[i]).collect();
        let mut on: Vec<usize> = sample(rng, inactive.len(), d).into_iter().map(|i| inactive[i]).collect();
        off.sort_unstable();
        on.sort_unstable();
        if seen.insert((off.clone(), on.clone())) {
            out.push(swapped(z, &off, &on));
        }
    }
    Ok(out)
}

/// Configurations that change exactly one of the two angles.
pub fn fold_neighbors(c: &FoldConfiguration, set: &AngleSet) -> Result<Vec<FoldConfiguration>> {
    let (l, r) = c.indices(set)?;
    Ok(fold_index_neighbors((l, r), set.len())
        .into_iter()
        .filter_map(|(a, b)| set.config(a, b))
        .collect())
}

fn fold_index_neighbors((l, r): (usize, usize), m: usize) -> Vec<(usize, usize)> {
    let left = (0..m).filter(|&j| j != l).map(|j| (j, r));
    let right = (0..m).filter(|&j| j != r).map(|j| (l, j));
    left.chain(right).collect()
}

/// Bounded FIFO of recently left solutions.
#[derive(Debug, Clone)]
pub struct TabuList<S> {
    entries: VecDeque<S>,
    capacity: usize,
}

impl<S: PartialEq> TabuList<S> {
    pub fn new(capacity: usize) -> Self {
        TabuList {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, s: S) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(s);
    }

    pub fn contains(&self, s: &S) -> bool {
        self.entries.iter().any(|e| e == s)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub best_candidate_rate: f64,
    pub best_so_far_rate: f64,
    pub evaluated: usize,
    pub tabu_hits: usize,
    pub aspiration_fired: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchTrace {
    pub records: Vec<TraceRecord>,
}

impl SearchTrace {
    pub fn best_rate(&self) -> f64 {
        self.records.last().map_or(f64::NEG_INFINITY, |r| r.best_so_far_rate)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iter,best_candidate_rate,best_so_far_rate,evaluated,tabu_hits,aspiration_fired")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{},{},{}",
                r.iter,
                r.best_candidate_rate,
                r.best_so_far_rate,
                r.evaluated,
                r.tabu_hits,
                r.aspiration_fired as u8
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementSearchParams {
    /// Swap distance `d`.
    pub distance: usize,
    /// Neighbours drawn per iteration.
    pub neighbors: usize,
    pub tabu_capacity: usize,
    pub max_iters: usize,
    /// Stop after this many iterations without a new best.
    pub stall_iters: Option<usize>,
}

impl Default for ElementSearchParams {
    fn default() -> Self {
        ElementSearchParams {
            distance: 1,
            neighbors: 20,
            tabu_capacity: 10,
            max_iters: 50,
            stall_iters: Some(15),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldSearchParams {
    pub tabu_capacity: usize,
    pub max_iters: usize,
    pub stall_iters: Option<usize>,
}

impl Default for FoldSearchParams {
    fn default() -> Self {
        FoldSearchParams {
            tabu_capacity: 10,
            max_iters: 9,
            stall_iters: Some(15),
        }
    }
}

fn score(x: f64) -> f64 {
    if x.is_nan() {
        f64::NEG_INFINITY
    } else {
        x
    }
}

/// Highest score wins; ties go to the smallest solution.
fn select<S: Ord>(scored: impl Iterator<Item = (S, f64)>) -> Option<(S, f64)> {
    scored.fold(None, |acc, (s, r)| match acc {
        None => Some((s, r)),
        Some((bs, br)) => {
            let (r2, br2) = (score(r), score(br));
            if r2 > br2 || (r2 == br2 && s < bs) {
                Some((s, r))
            } else {
                Some((bs, br))
            }
        }
    })
}

struct Tabu<'f, S, F> {
    eval: &'f F,
    cache: BTreeMap<S, f64>,
}

impl<S, F> Tabu<'_, S, F>
where
    S: Clone + Ord + Send + Sync,
    F: Fn(&S) -> f64 + Sync,
{
    /// Scores `cands`, evaluating the uncached ones in parallel.
    fn rates(&mut self, cands: &[S]) -> Vec<f64> {
        let mut fresh: Vec<&S> = cands.iter().filter(|c| !self.cache.contains_key(*c)).collect();
        fresh.sort();
        fresh.dedup();
        let eval = self.eval;
        let scored: Vec<(S, f64)> = fresh.into_par_iter().map(|s| (s.clone(), eval(s))).collect();
        self.cache.extend(scored);
        cands.iter().map(|c| self.cache[c]).collect()
    }
}

pub(crate) struct TabuOutcome<S> {
    pub best: S,
    pub best_rate: f64,
    pub trace: SearchTrace,
}

/// Best-improvement tabu walk with aspiration when every neighbour is tabu.
pub(crate) fn run_tabu<S, N, F>(
    init: S,
    mut neighbors: N,
    eval: &F,
    capacity: usize,
    max_iters: usize,
    stall_iters: Option<usize>,
) -> Result<TabuOutcome<S>>
where
    S: Clone + Ord + Send + Sync,
    N: FnMut(&S) -> Result<Vec<S>>,
    F: Fn(&S) -> f64 + Sync,
{
    let mut engine = Tabu {
        eval,
        cache: BTreeMap::new(),
    };
    let init_rate = engine.rates(std::slice::from_ref(&init))[0];
    let mut trace = SearchTrace {
        records: vec![TraceRecord {
            iter: 0,
            best_candidate_rate: init_rate,
            best_so_far_rate: init_rate,
            evaluated: 1,
            tabu_hits: 0,
            aspiration_fired: false,
        }],
    };
    let mut tabu = TabuList::new(capacity);
    let mut current = init.clone();
    let (mut best, mut best_rate) = (init, init_rate);
    let mut since_improvement = 0;

    for iter in 1..=max_iters {
        let cands = neighbors(&current)?;
        if cands.is_empty() {
            break;
        }
        let (allowed, banned): (Vec<S>, Vec<S>) = cands.into_iter().partition(|c| !tabu.contains(c));
        let aspiration = allowed.is_empty();
        let pool = if aspiration { banned.clone() } else { allowed };
        let rates = engine.rates(&pool);
        let evaluated = pool.len();
        let Some((next, next_rate)) = select(pool.into_iter().zip(rates)) else {
            break;
        };

        tabu.push(std::mem::replace(&mut current, next));
        if score(next_rate) > score(best_rate) {
            best = current.clone();
            best_rate = next_rate;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        trace.records.push(TraceRecord {
            iter,
            best_candidate_rate: next_rate,
            best_so_far_rate: best_rate,
            evaluated,
            tabu_hits: banned.len(),
            aspiration_fired: aspiration,
        });
        if stall_iters.is_some_and(|s| since_improvement >= s) {
            break;
        }
    }
    Ok(TabuOutcome {
        best,
        best_rate,
        trace,
    })
}

/// Stage 1: tabu search over activation topologies with a fixed budget.
pub fn tabu_search_elements<F, R>(
    eval: &F,
    init: &ActivationTopology,
    params: &ElementSearchParams,
    rng: &mut R,
) -> Result<(ActivationTopology, f64, SearchTrace)>
where
    F: Fn(&ActivationTopology) -> f64 + Sync,
    R: Rng + ?Sized,
{
    let (active, inactive) = init.split();
    // a full or empty surface has no swap neighbours
    let movable = params.distance <= active.len() && params.distance <= inactive.len();
    let out = run_tabu(
        init.clone(),
        |z: &ActivationTopology| {
            if movable {
                swap_neighbors(z, params.distance, params.neighbors, rng)
            } else {
                Ok(Vec::new())
            }
        },
        eval,
        params.tabu_capacity,
        params.max_iters,
        params.stall_iters,
    )?;
    Ok((out.best, out.best_rate, out.trace))
}

/// Stage 2: tabu search over the two shared fold angles.
pub fn tabu_search_folds<F>(
    eval: &F,
    init: &FoldConfiguration,
    set: &AngleSet,
    params: &FoldSearchParams,
) -> Result<(FoldConfiguration, f64, SearchTrace)>
where
    F: Fn(&FoldConfiguration) -> f64 + Sync,
{
    let start = init.indices(set)?;
    let m = set.len();
    let by_index = |&(l, r): &(usize, usize)| match set.config(l, r) {
        Some(c) => eval(&c),
        None => f64::NEG_INFINITY,
    };
    let out = run_tabu(
        start,
        |&s: &(usize, usize)| Ok(fold_index_neighbors(s, m)),
        &by_index,
        params.tabu_capacity,
        params.max_iters,
        params.stall_iters,
    )?;
    let best = set
        .config(out.best.0, out.best.1)
        .ok_or_else(|| Error::domain("fold search left the angle set"))?;
    Ok((best, out.best_rate, out.trace))
}
