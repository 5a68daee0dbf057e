//! A concrete physical setup (surface, arrays, carrier, losses, power) and
//! the sequential two-stage optimization that runs on it.

use crate::beamforming::{ao_solve, AoParams, AoStart, BeamformingSolution, CascadeContext, LinkBudget};
use crate::channel::{synthesize, ChannelSet};
use crate::error::{Error, Result};
use crate::geometry::{apply_fold, AngleSet, FoldConfiguration, Position, SurfaceGeometry, SurfaceSpec};
use crate::search::{
    tabu_search_elements, tabu_search_folds, ActivationTopology, ElementSearchParams, FoldSearchParams,
    SearchTrace,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub surface: SurfaceSpec,
    pub angles: AngleSet,
    pub user: Vec<Position>,
    pub bs: Vec<Position>,
    pub wavelength: f64,
    pub alpha: f64,
    pub link: LinkBudget,
}

impl Scenario {
    pub fn geometry(&self, fold: &FoldConfiguration) -> Result<SurfaceGeometry> {
        apply_fold(&self.surface, fold, &self.angles)
    }

    pub fn channels(&self, fold: &FoldConfiguration) -> Result<ChannelSet> {
        synthesize(&self.user, &self.geometry(fold)?, &self.bs, self.wavelength)
    }

    /// Runs the alternating optimization for one topology on given channels.
    pub fn solve(
        &self,
        channels: &ChannelSet,
        topology: &ActivationTopology,
        params: AoParams,
    ) -> Result<BeamformingSolution> {
        let ctx = CascadeContext::new(channels, topology, self.alpha)?;
        ao_solve(ctx, self.link, params, AoStart::Canonical)
    }

    pub fn with_power(&self, p_max: f64) -> Self {
        let mut s = self.clone();
        s.link.p_max = p_max;
        s
    }
}

/// Which stages of the joint optimization run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stages {
    /// Stage 1 only; the surface stays flat.
    Elements,
    /// Stage 1 followed by the fold search.
    ElementsAndFolds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    pub elements: ElementSearchParams,
    pub folds: FoldSearchParams,
    /// AO budget for the reported solutions and for fold candidates.
    pub ao: AoParams,
    /// Reduced AO budget for scoring activation candidates.
    pub ao_search: AoParams,
    /// Repeats of (stage 1, stage 2). One round is the plain sequential scheme.
    pub rounds: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            elements: ElementSearchParams::default(),
            folds: FoldSearchParams::default(),
            ao: AoParams::default(),
            ao_search: AoParams::search(),
            rounds: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JointOutcome {
    pub topology: ActivationTopology,
    pub fold: FoldConfiguration,
    pub solution: BeamformingSolution,
    /// Topology and full-precision solution after the first stage-1 pass.
    pub stage1_topology: ActivationTopology,
    pub stage1_solution: BeamformingSolution,
    /// Full-precision solution of the initial topology on the flat surface.
    pub init_solution: BeamformingSolution,
    pub init_topology: ActivationTopology,
    pub element_traces: Vec<SearchTrace>,
    pub fold_traces: Vec<SearchTrace>,
}

/// Stage 1 on the flat surface, then (optionally) stage 2 on the stage-1
/// topology. `init` seeds stage 1; without it a random topology with
/// `budget` active elements is drawn from `seed`.
pub fn joint_pipeline(
    scenario: &Scenario,
    budget: usize,
    stages: Stages,
    params: &PipelineParams,
    init: Option<ActivationTopology>,
    seed: u64,
) -> Result<JointOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = scenario.surface.layers;
    let per_layer = scenario.surface.elements_per_layer();
    let init = match init {
        Some(z) => {
            if z.layers() != layers || z.per_layer() != per_layer || z.budget() != budget {
                return Err(Error::domain(format!(
                    "initial topology must be {layers}x{per_layer} with {budget} active elements"
                )));
            }
            z
        }
        None => crate::search::random_topology(layers, per_layer, budget, &mut rng)?,
    };
    let flat = FoldConfiguration::flat();
    if scenario.angles.flat_index().is_none() {
        return Err(Error::ConstraintViolation(
            "the flat surface must belong to the fold-angle set (use an odd angle count)".into(),
        ));
    }

    let flat_channels = scenario.channels(&flat)?;
    let init_solution = scenario.solve(&flat_channels, &init, params.ao)?;

    let mut topology = init.clone();
    let mut fold = flat;
    let mut solution = init_solution.clone();
    let mut stage1_solution = None;
    let mut element_traces = Vec::new();
    let mut fold_traces = Vec::new();

    for _ in 0..params.rounds.max(1) {
        // stage 1 on the current fold
        let channels = scenario.channels(&fold)?;
        let eval = |z: &ActivationTopology| {
            scenario
                .solve(&channels, z, params.ao_search)
                .map_or(f64::NEG_INFINITY, |s| s.rate)
        };
        let (candidate, _, trace) = tabu_search_elements(&eval, &topology, &params.elements, &mut rng)?;
        element_traces.push(trace);
        // the search scored candidates with the cheap AO; keep the incumbent
        // unless the winner also wins at full precision
        if candidate != topology {
            let full = scenario.solve(&channels, &candidate, params.ao)?;
            if full.rate > solution.rate {
                topology = candidate;
                solution = full;
            }
        }
        if stage1_solution.is_none() {
            stage1_solution = Some((topology.clone(), solution.clone()));
        }

        if stages == Stages::Elements {
            break;
        }
        let eval = |c: &FoldConfiguration| {
            scenario
                .channels(c)
                .and_then(|ch| scenario.solve(&ch, &topology, params.ao))
                .map_or(f64::NEG_INFINITY, |s| s.rate)
        };
        let (best_fold, _, trace) = tabu_search_folds(&eval, &fold, &scenario.angles, &params.folds)?;
        fold_traces.push(trace);
        if best_fold != fold {
            let full = scenario.solve(&scenario.channels(&best_fold)?, &topology, params.ao)?;
            if full.rate > solution.rate {
                fold = best_fold;
                solution = full;
            }
        }
    }

    let (stage1_topology, stage1_solution) = stage1_solution.unwrap_or_else(|| (topology.clone(), solution.clone()));
    Ok(JointOutcome {
        topology,
        fold,
        stage1_topology,
        stage1_solution,
        solution,
        init_solution,
        init_topology: init,
        element_traces,
        fold_traces,
    })
}

/// Centred, evenly split reference topology with `budget` active elements:
/// each layer activates the grid locations closest to its centre.
pub fn dense_reference_topology(spec: &SurfaceSpec, budget: usize) -> Result<ActivationTopology> {
    let per_layer = spec.elements_per_layer();
    let capacity = spec.layers * per_layer;
    if budget > capacity {
        return Err(Error::InfeasibleBudget { budget, capacity });
    }
    let mut order: Vec<usize> = (0..per_layer).collect();
    let centre = |n: usize| {
        let r = (n / spec.cols) as f64 - (spec.rows as f64 - 1.0) / 2.0;
        let c = (n % spec.cols) as f64 - (spec.cols as f64 - 1.0) / 2.0;
        r * r + c * c
    };
    order.sort_by(|&a, &b| centre(a).total_cmp(&centre(b)).then(a.cmp(&b)));
    let base = budget / spec.layers;
    let extra = budget % spec.layers;
    let mut active = Vec::with_capacity(budget);
    for l in 0..spec.layers {
        let k = base + usize::from(l < extra);
        active.extend(order[..k].iter().map(|&n| l * per_layer + n));
    }
    ActivationTopology::from_active(spec.layers, per_layer, &active)
}
