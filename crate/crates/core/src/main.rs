use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use usris::geometry::FoldConfiguration;
use usris::harness::experiments::setup_for;
use usris::harness::{self, Architecture, RunOptions, SystemConfig};
use usris::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "usris", version, about = "Multilayer user-side transmissive surface simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML configuration file; absent keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Area ratio applied to every grid and to the active-element budget (1 = full size).
    #[arg(long, global = true)]
    scale: Option<f64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Comma-separated transmit powers in watts.
    #[arg(long, global = true, value_delimiter = ',')]
    p_max: Option<Vec<f64>>,
    /// Architecture for optimize, geometry and channels.
    #[arg(long, global = true)]
    architecture: Option<String>,
    #[arg(long, global = true)]
    ear_threshold: Option<f64>,
    /// Record wall-clock runtimes in the sweep outputs.
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rate versus transmit power for the four architectures.
    Sweep,
    /// One joint optimization; dumps topology, fold, solution and traces.
    Optimize,
    /// EAR study: dense multilayer versus foldable sparse.
    Ear,
    /// Dump folded element positions.
    Geometry(FoldArg),
    /// Dump channel matrices.
    Channels(FoldArg),
}

#[derive(Debug, Args)]
struct FoldArg {
    /// Fold as `left,right` indices into the angle set.
    #[arg(long, value_delimiter = ',')]
    fold: Option<Vec<usize>>,
}

fn load_config(g: &Global) -> Result<SystemConfig> {
    let mut cfg = match &g.config {
        Some(path) => SystemConfig::load(path)?,
        None => SystemConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(s) = g.scale {
        cfg.scale = s;
    }
    if let Some(p) = &g.p_max {
        cfg.p_max_w = p.clone();
    }
    if let Some(a) = &g.architecture {
        cfg.architecture = a.parse()?;
    }
    if let Some(t) = g.ear_threshold {
        cfg.ear_threshold = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fold_of(arg: &FoldArg, cfg: &SystemConfig, architecture: Architecture) -> Result<FoldConfiguration> {
    let setup = setup_for(cfg, architecture)?;
    match arg.fold.as_deref() {
        None => Ok(FoldConfiguration::flat()),
        Some(&[l, r]) => setup.scenario.angles.config(l, r).ok_or_else(|| Error::Config {
            path: "--fold".into(),
            message: format!("indices must be below {}", setup.scenario.angles.len()),
        }),
        Some(_) => Err(Error::Config {
            path: "--fold".into(),
            message: "expected two indices `left,right`".into(),
        }),
    }
}

fn degenerate_error(what: &str) -> Error {
    Error::DegenerateChannel(format!("{what}: the cascade is identically zero"))
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    let out = &cli.global.out;
    std::fs::create_dir_all(out)?;
    match &cli.command {
        Command::Sweep => {
            let opts = RunOptions {
                timing: cli.global.timing,
            };
            let result = harness::run_rate_sweep(&cfg, opts)?;
            harness::write_sweep(&result, out)?;
            for c in &result.cells {
                println!("{:<18} p_max={:<10} rate={:.6}", c.architecture, c.p_max_w, c.rate_bps_hz);
            }
            if result.any_degenerate() {
                return Err(degenerate_error("sweep"));
            }
        }
        Command::Optimize => {
            let result = harness::optimize(&cfg)?;
            harness::write_optimized(&result, out)?;
            std::fs::write(out.join("config.toml"), cfg.to_toml_string())?;
            println!(
                "{} rate={:.6} snr={:.6e} topology={} fold=({:.6}, {:.6})",
                cfg.architecture,
                result.solution.rate,
                result.solution.snr,
                result.topology,
                result.fold.phi_left,
                result.fold.phi_right
            );
            if result.solution.degenerate {
                return Err(degenerate_error("optimize"));
            }
        }
        Command::Ear => {
            let study = harness::run_ear_study(&cfg)?;
            harness::write_ear_study(&study, out)?;
            std::fs::write(out.join("config.toml"), cfg.to_toml_string())?;
            for case in [&study.dense, &study.sparse] {
                println!("{:<18} ear={:.6} rate={:.6}", case.architecture, case.report.global, case.rate);
            }
        }
        Command::Geometry(arg) => {
            let fold = fold_of(arg, &cfg, cfg.architecture)?;
            let setup = setup_for(&cfg, cfg.architecture)?;
            let geometry = setup.scenario.geometry(&fold)?;
            let path = out.join("geometry.csv");
            geometry.write_csv(BufWriter::new(File::create(&path)?))?;
            println!("wrote {}", path.display());
        }
        Command::Channels(arg) => {
            let fold = fold_of(arg, &cfg, cfg.architecture)?;
            let setup = setup_for(&cfg, cfg.architecture)?;
            let channels = setup.scenario.channels(&fold)?;
            channels.write_dir(out)?;
            println!("wrote {} matrices to {}", channels.layers() + 1, out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match cli.global.threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let result = match pool {
        Ok(pool) => pool.install(|| run(&cli)),
        Err(e) => Err(Error::Config {
            path: "--threads".into(),
            message: e.to_string(),
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
