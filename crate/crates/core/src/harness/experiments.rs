use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::Point3;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{Architecture, Stage1Init, SystemConfig};
use crate::beamforming::{AoParams, BeamformingSolution, CascadeContext, LinkBudget};
use crate::channel::ula_positions;
use crate::error::{Error, Result};
use crate::geometry::{build_angle_set, FoldConfiguration, SurfaceSpec};
use crate::metrics::{ear, power_map, EarReport, PowerMap};
use crate::scenario::{dense_reference_topology, joint_pipeline, JointOutcome, PipelineParams, Scenario, Stages};
use crate::search::{ActivationTopology, ElementSearchParams, FoldSearchParams};

pub const FORMAT_VERSION: u32 = 1;

/// One benchmark architecture after scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureSetup {
    pub architecture: Architecture,
    pub scenario: Scenario,
    /// Active elements; equals the grid size for the dense architectures.
    pub budget: usize,
}

impl ArchitectureSetup {
    pub fn is_dense(&self) -> bool {
        self.architecture.is_dense()
    }

    pub fn dense_topology(&self) -> ActivationTopology {
        let s = &self.scenario.surface;
        ActivationTopology::dense(s.layers, s.elements_per_layer())
    }
}

/// Shrinks a `rows × cols` grid by the area ratio `scale` and refactors the
/// element count into the most square grid with `rows <= cols`.
pub fn scaled_grid(dims: [usize; 2], scale: f64) -> Result<(usize, usize)> {
    let n = (dims[0] as f64 * dims[1] as f64 * scale).round() as usize;
    if n < 2 {
        return Err(Error::config(
            "scale",
            format!("scale {scale} leaves {n} elements of a {}x{} grid", dims[0], dims[1]),
        ));
    }
    let rows = (1..=n).take_while(|r| r * r <= n).filter(|r| n.is_multiple_of(*r)).max().unwrap_or(1);
    Ok((rows, n / rows))
}

pub fn scaled_budget(cfg: &SystemConfig) -> usize {
    (cfg.budget as f64 * cfg.scale).round() as usize
}

fn point(p: [f64; 3]) -> Point3<f64> {
    Point3::new(p[0], p[1], p[2])
}

/// Physical scenario for a `layers × rows × cols` surface at the first
/// configured transmit power.
pub fn build_scenario(cfg: &SystemConfig, layers: usize, rows: usize, cols: usize) -> Result<Scenario> {
    let surface = SurfaceSpec::new(layers, rows, cols, cfg.element_pitch(), cfg.layer_spacing_m)?;
    let angles = build_angle_set(cfg.fold_angles, surface.max_fold_angle())?;
    let spacing = cfg.antenna_spacing();
    Ok(Scenario {
        surface,
        angles,
        user: ula_positions(point(cfg.user_position_m), cfg.user_antennas, spacing),
        bs: ula_positions(point(cfg.bs_position_m), cfg.bs_antennas, spacing),
        wavelength: cfg.wavelength(),
        alpha: cfg.penetration_loss,
        link: LinkBudget {
            p_max: cfg.p_max_w[0],
            noise_power: cfg.noise_power_w,
        },
    })
}

/// The four benchmark architectures, scaled by `cfg.scale`.
pub fn reference_architectures(cfg: &SystemConfig) -> Result<Vec<ArchitectureSetup>> {
    cfg.validate()?;
    let g = &cfg.grids;
    let (r1, c1) = scaled_grid(g.single_layer, cfg.scale)?;
    let (r2, c2) = scaled_grid(g.multilayer, cfg.scale)?;
    let (r3, c3) = scaled_grid(g.sparse, cfg.scale)?;
    let budget = scaled_budget(cfg);
    let capacity = g.sparse_layers * r3 * c3;
    if budget == 0 || budget > capacity {
        return Err(Error::InfeasibleBudget { budget, capacity });
    }
    let sparse = build_scenario(cfg, g.sparse_layers, r3, c3)?;
    Ok(vec![
        ArchitectureSetup {
            architecture: Architecture::SingleLayer,
            scenario: build_scenario(cfg, 1, r1, c1)?,
            budget: r1 * c1,
        },
        ArchitectureSetup {
            architecture: Architecture::Multilayer,
            scenario: build_scenario(cfg, g.multilayer_layers, r2, c2)?,
            budget: g.multilayer_layers * r2 * c2,
        },
        ArchitectureSetup {
            architecture: Architecture::SparseMultilayer,
            scenario: sparse.clone(),
            budget,
        },
        ArchitectureSetup {
            architecture: Architecture::FoldableSparse,
            scenario: sparse,
            budget,
        },
    ])
}

pub fn setup_for(cfg: &SystemConfig, architecture: Architecture) -> Result<ArchitectureSetup> {
    reference_architectures(cfg)?
        .into_iter()
        .find(|a| a.architecture == architecture)
        .ok_or_else(|| Error::domain(format!("no setup for {architecture}")))
}

pub fn pipeline_params(cfg: &SystemConfig) -> PipelineParams {
    let s = &cfg.search;
    let stall = (s.stall_iters > 0).then_some(s.stall_iters);
    PipelineParams {
        elements: ElementSearchParams {
            distance: s.neighbor_distance,
            neighbors: s.neighbors,
            tabu_capacity: s.tabu_capacity,
            max_iters: s.stage1_max_iters,
            stall_iters: stall,
        },
        folds: FoldSearchParams {
            tabu_capacity: s.tabu_capacity,
            max_iters: s.stage2_max_iters,
            stall_iters: stall,
        },
        ao: AoParams {
            tol: cfg.ao.tol,
            max_sweeps: cfg.ao.max_sweeps,
        },
        ao_search: AoParams {
            tol: cfg.ao.search_tol,
            max_sweeps: cfg.ao.search_max_sweeps,
        },
        rounds: s.rounds,
    }
}

/// Runs the search pipeline of a sparse setup at the setup's power.
pub fn run_pipeline(cfg: &SystemConfig, setup: &ArchitectureSetup, stages: Stages) -> Result<JointOutcome> {
    let init = match cfg.stage1_init {
        Stage1Init::Dense => Some(dense_reference_topology(&setup.scenario.surface, setup.budget)?),
        Stage1Init::Random => None,
    };
    joint_pipeline(&setup.scenario, setup.budget, stages, &pipeline_params(cfg), init, cfg.seed)
}

/// Incident power map and EAR of a solution.
pub fn evaluate_ear(
    scenario: &Scenario,
    fold: &FoldConfiguration,
    z: &ActivationTopology,
    solution: &BeamformingSolution,
    threshold: f64,
) -> Result<(PowerMap, EarReport)> {
    let channels = scenario.channels(fold)?;
    let mut ctx = CascadeContext::new(&channels, z, scenario.alpha)?;
    ctx.set_theta(solution.theta.clone())?;
    let map = power_map(&ctx, &solution.w).with_grid(scenario.surface.rows, scenario.surface.cols)?;
    let report = ear(&map, z, threshold)?;
    Ok((map, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldRecord {
    pub phi_left: f64,
    pub phi_right: f64,
    pub left_index: usize,
    pub right_index: usize,
}

impl FoldRecord {
    pub fn new(fold: &FoldConfiguration, scenario: &Scenario) -> Result<Self> {
        let (left_index, right_index) = fold.indices(&scenario.angles)?;
        Ok(FoldRecord {
            phi_left: fold.phi_left,
            phi_right: fold.phi_right,
            left_index,
            right_index,
        })
    }
}

/// One (architecture, transmit power) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub architecture: Architecture,
    pub p_max_w: f64,
    pub rate_bps_hz: f64,
    pub snr_linear: f64,
    pub seed: u64,
    pub runtime_s: f64,
    pub ao_iterations: usize,
    pub converged: bool,
    pub degenerate: bool,
    pub topology: String,
    pub fold: FoldRecord,
    pub ear: f64,
    pub ear_per_layer: Vec<Option<f64>>,
    /// Rate of the dense-embedded topology that seeded the search.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub format_version: u32,
    pub config: SystemConfig,
    pub cells: Vec<CellResult>,
}

impl ExperimentResult {
    pub const CSV_HEADER: &'static str = "architecture,p_max_watts,rate_bps_hz,snr_linear,seed,runtime_s";

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{:.16e},{:.16e},{},{:.6}",
                c.architecture, c.p_max_w, c.rate_bps_hz, c.snr_linear, c.seed, c.runtime_s
            )?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_manifest<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self).map_err(std::io::Error::other)?;
        writeln!(out)?;
        Ok(())
    }

    /// Cells of one architecture in power order.
    pub fn series(&self, architecture: Architecture) -> Vec<&CellResult> {
        self.cells.iter().filter(|c| c.architecture == architecture).collect()
    }

    pub fn any_degenerate(&self) -> bool {
        self.cells.iter().any(|c| c.degenerate)
    }
}

/// Options that do not change results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record wall-clock runtimes; off by default so outputs are byte-stable.
    pub timing: bool,
}

struct CellInput<'a> {
    setup: &'a ArchitectureSetup,
    solution: &'a BeamformingSolution,
    topology: &'a ActivationTopology,
    fold: &'a FoldConfiguration,
    seed_rate: Option<f64>,
}

fn cell(cfg: &SystemConfig, p: f64, runtime: f64, input: CellInput<'_>) -> Result<CellResult> {
    let scenario = input.setup.scenario.with_power(p);
    let (_, report) = evaluate_ear(&scenario, input.fold, input.topology, input.solution, cfg.ear_threshold)?;
    Ok(CellResult {
        architecture: input.setup.architecture,
        p_max_w: p,
        rate_bps_hz: input.solution.rate,
        snr_linear: input.solution.snr,
        seed: cfg.seed,
        runtime_s: runtime,
        ao_iterations: input.solution.iterations,
        converged: input.solution.converged,
        degenerate: input.solution.degenerate,
        topology: input.topology.to_string(),
        fold: FoldRecord::new(input.fold, &scenario)?,
        ear: report.global,
        ear_per_layer: report.per_layer,
        seed_rate: input.seed_rate,
    })
}

enum Job<'a> {
    Dense(&'a ArchitectureSetup, usize),
    Sparse(&'a ArchitectureSetup, &'a ArchitectureSetup, usize),
}

/// Rate versus transmit power for all four architectures. The sparse and
/// foldable rows come from one pipeline run: the sparse row is its stage-1
/// result on the flat surface.
pub fn run_rate_sweep(cfg: &SystemConfig, opts: RunOptions) -> Result<ExperimentResult> {
    let setups = reference_architectures(cfg)?;
    let find = |a: Architecture| setups.iter().find(|s| s.architecture == a).expect("all four present");
    let mut jobs = Vec::new();
    for i in 0..cfg.p_max_w.len() {
        jobs.push(Job::Dense(find(Architecture::SingleLayer), i));
        jobs.push(Job::Dense(find(Architecture::Multilayer), i));
        jobs.push(Job::Sparse(
            find(Architecture::SparseMultilayer),
            find(Architecture::FoldableSparse),
            i,
        ));
    }
    let flat = FoldConfiguration::flat();
    let clock = |t: Instant| if opts.timing { t.elapsed().as_secs_f64() } else { 0.0 };

    let per_job: Vec<Result<Vec<(usize, CellResult)>>> = jobs
        .par_iter()
        .map(|job| match *job {
            Job::Dense(setup, i) => {
                let p = cfg.p_max_w[i];
                let start = Instant::now();
                let scenario = setup.scenario.with_power(p);
                let z = setup.dense_topology();
                let solution = scenario.solve(&scenario.channels(&flat)?, &z, pipeline_params(cfg).ao)?;
                let runtime = clock(start);
                let input = CellInput {
                    setup,
                    solution: &solution,
                    topology: &z,
                    fold: &flat,
                    seed_rate: None,
                };
                Ok(vec![(i, cell(cfg, p, runtime, input)?)])
            }
            Job::Sparse(sparse, foldable, i) => {
                let p = cfg.p_max_w[i];
                let start = Instant::now();
                let mut powered = foldable.clone();
                powered.scenario = foldable.scenario.with_power(p);
                let out = run_pipeline(cfg, &powered, Stages::ElementsAndFolds)?;
                let runtime = clock(start);
                let seed_rate = Some(out.init_solution.rate);
                let s = CellInput {
                    setup: sparse,
                    solution: &out.stage1_solution,
                    topology: &out.stage1_topology,
                    fold: &flat,
                    seed_rate,
                };
                let f = CellInput {
                    setup: foldable,
                    solution: &out.solution,
                    topology: &out.topology,
                    fold: &out.fold,
                    seed_rate,
                };
                Ok(vec![(i, cell(cfg, p, runtime, s)?), (i, cell(cfg, p, runtime, f)?)])
            }
        })
        .collect();

    let mut keyed = Vec::new();
    for r in per_job {
        keyed.extend(r?);
    }
    keyed.sort_by(|a, b| a.1.architecture.cmp(&b.1.architecture).then(a.0.cmp(&b.0)));
    Ok(ExperimentResult {
        format_version: FORMAT_VERSION,
        config: cfg.clone(),
        cells: keyed.into_iter().map(|(_, c)| c).collect(),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `sweep.csv`, `manifest.json` and `config.toml` into `dir`.
pub fn write_sweep(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    result.write_csv(create(&dir.join("sweep.csv"))?)?;
    result.write_manifest(create(&dir.join("manifest.json"))?)?;
    std::fs::write(dir.join("config.toml"), result.config.to_toml_string())?;
    Ok(())
}

/// Power map and EAR of one architecture in the EAR study.
#[derive(Debug, Clone, PartialEq)]
pub struct EarCase {
    pub architecture: Architecture,
    pub rate: f64,
    pub topology: ActivationTopology,
    pub fold: FoldConfiguration,
    pub map: PowerMap,
    pub report: EarReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarStudy {
    pub dense: EarCase,
    pub sparse: EarCase,
}

/// Dense multilayer versus foldable sparse on identical physics, at the
/// first configured transmit power.
pub fn run_ear_study(cfg: &SystemConfig) -> Result<EarStudy> {
    let dense = setup_for(cfg, Architecture::Multilayer)?;
    let sparse = setup_for(cfg, Architecture::FoldableSparse)?;
    let flat = FoldConfiguration::flat();
    let (dense_case, sparse_case) = rayon::join(
        || -> Result<EarCase> {
            let z = dense.dense_topology();
            let sol = dense.scenario.solve(&dense.scenario.channels(&flat)?, &z, pipeline_params(cfg).ao)?;
            let (map, report) = evaluate_ear(&dense.scenario, &flat, &z, &sol, cfg.ear_threshold)?;
            Ok(EarCase {
                architecture: dense.architecture,
                rate: sol.rate,
                topology: z,
                fold: flat,
                map,
                report,
            })
        },
        || -> Result<EarCase> {
            let out = run_pipeline(cfg, &sparse, Stages::ElementsAndFolds)?;
            let (map, report) =
                evaluate_ear(&sparse.scenario, &out.fold, &out.topology, &out.solution, cfg.ear_threshold)?;
            Ok(EarCase {
                architecture: sparse.architecture,
                rate: out.solution.rate,
                topology: out.topology,
                fold: out.fold,
                map,
                report,
            })
        },
    );
    Ok(EarStudy {
        dense: dense_case?,
        sparse: sparse_case?,
    })
}

/// Per-layer heatmaps `<arch>_layer<l>.csv` and reports `ear_<arch>.txt`.
pub fn write_ear_study(study: &EarStudy, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for case in [&study.dense, &study.sparse] {
        for l in 0..case.map.layers() {
            let path = dir.join(format!("{}_layer{}.csv", case.architecture, l + 1));
            case.map.write_layer_csv(l, create(&path)?)?;
        }
        let mut out = create(&dir.join(format!("ear_{}.txt", case.architecture)))?;
        writeln!(out, "architecture = {}", case.architecture)?;
        writeln!(out, "rate_bps_hz = {:.16e}", case.rate)?;
        writeln!(out, "topology = {}", case.topology)?;
        writeln!(out, "phi_left = {:.16e}", case.fold.phi_left)?;
        writeln!(out, "phi_right = {:.16e}", case.fold.phi_right)?;
        case.report.write_text(&mut out)?;
        out.flush()?;
    }
    Ok(())
}

/// Result of a single optimization of `cfg.architecture`.
#[derive(Debug, Clone)]
pub struct Optimized {
    pub setup: ArchitectureSetup,
    pub topology: ActivationTopology,
    pub fold: FoldConfiguration,
    pub solution: BeamformingSolution,
    /// Present for the sparse architectures.
    pub outcome: Option<JointOutcome>,
}

pub fn optimize(cfg: &SystemConfig) -> Result<Optimized> {
    let setup = setup_for(cfg, cfg.architecture)?;
    let flat = FoldConfiguration::flat();
    if setup.is_dense() {
        let z = setup.dense_topology();
        let solution = setup.scenario.solve(&setup.scenario.channels(&flat)?, &z, pipeline_params(cfg).ao)?;
        return Ok(Optimized {
            setup,
            topology: z,
            fold: flat,
            solution,
            outcome: None,
        });
    }
    let stages = match cfg.architecture {
        Architecture::SparseMultilayer => Stages::Elements,
        _ => Stages::ElementsAndFolds,
    };
    let out = run_pipeline(cfg, &setup, stages)?;
    Ok(Optimized {
        setup,
        topology: out.topology.clone(),
        fold: out.fold,
        solution: out.solution.clone(),
        outcome: Some(out),
    })
}

/// Writes `topology.txt`, `fold.txt`, `solution.txt` and the search traces.
pub fn write_optimized(result: &Optimized, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let s = &result.setup.scenario.surface;
    let mut out = create(&dir.join("topology.txt"))?;
    writeln!(out, "layers = {}", s.layers)?;
    writeln!(out, "rows = {}", s.rows)?;
    writeln!(out, "cols = {}", s.cols)?;
    writeln!(out, "active = {}", result.topology.budget())?;
    writeln!(out, "topology = {}", result.topology)?;
    out.flush()?;

    let f = FoldRecord::new(&result.fold, &result.setup.scenario)?;
    let mut out = create(&dir.join("fold.txt"))?;
    writeln!(out, "phi_left = {:.16e}", f.phi_left)?;
    writeln!(out, "phi_right = {:.16e}", f.phi_right)?;
    writeln!(out, "left_index = {}", f.left_index)?;
    writeln!(out, "right_index = {}", f.right_index)?;
    out.flush()?;

    result.solution.write_text(create(&dir.join("solution.txt"))?)?;
    if let Some(o) = &result.outcome {
        for (r, t) in o.element_traces.iter().enumerate() {
            t.write_csv(create(&dir.join(format!("stage1_trace{}.csv", r + 1)))?)?;
        }
        for (r, t) in o.fold_traces.iter().enumerate() {
            t.write_csv(create(&dir.join(format!("stage2_trace{}.csv", r + 1)))?)?;
        }
    }
    Ok(())
}
