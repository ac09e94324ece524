use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use awpinn::fdtd::{convergence_study, solve_reference, FdtdConfig, FieldId, YeeGrid};
use awpinn::harness::checks::{run_group, CHECK_GROUPS};
use awpinn::harness::{preset, rerun_manifest, run_benchmark, solve_seed, RunConfig, Scale};
use awpinn::ntk::{assemble_kernel, jacobi_eigen, KernelMatrix, KernelTarget, DEFAULT_MEMORY_BUDGET};
use awpinn::optimize::run_pipeline;
use awpinn::problems::{sample_points, PulseSource, TestGrid};
use awpinn::{Error, Result};
use clap::{Args, Parser, Subcommand};

/// Adaptive wavelet physics-informed solvers, diagnostics and references
#[derive(Parser, Debug)]
#[command(name = "awpinn", version, about)]
struct Cli {
    /// Worker threads for point-parallel work (default: all cores)
    #[arg(long, env = "AWPINN_WORKERS", global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run both training stages for one seed and report the test error
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Seed (default: first seed of the configuration)
        #[arg(long)]
        seed: Option<u64>,
        /// Print every n-th training iteration to stderr
        #[arg(long, default_value_t = 100)]
        log_every: usize,
    },
    /// Run Stage 1 and selection only, and print the active set as JSON
    Select {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Kernel spectrum of the transferred adaptive model on a point subsample
    Ntk {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Residual points in the subsample (supervised conditions get a tenth each)
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// FDTD reference solution of the TEz cavity
    Fdtd(FdtdArgs),
    /// Run preset grids over all their seeds, or re-run a saved manifest
    Bench {
        /// Comma-separated preset names (variants: -wpinn, -mmpinn)
        #[arg(long, value_delimiter = ',', default_value = "heat-0.12")]
        presets: Vec<String>,
        #[arg(long, default_value = "desk")]
        scale: Scale,
        /// Use the first n seeds of each preset
        #[arg(long)]
        repeats: Option<usize>,
        /// Override configuration keys, e.g. train.lbfgs.max_iterations=50
        #[arg(long = "set")]
        set: Vec<String>,
        /// Artifact root; each preset writes to a subdirectory
        #[arg(long)]
        output: Option<PathBuf>,
        /// Re-run the run recorded in this manifest and compare bit for bit
        #[arg(long, conflicts_with_all = ["presets", "repeats", "output"])]
        rerun: Option<PathBuf>,
    },
    /// Run the oracle suite (finite differences, closed forms, invariants)
    Check {
        /// Restrict to these groups
        #[arg(long = "group", value_parser = clap::builder::PossibleValuesParser::new(CHECK_GROUPS))]
        groups: Vec<String>,
        /// Randomized cases per derivative oracle
        #[arg(long, default_value_t = 500)]
        cases: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Named preset (heat-0.12, heat-0.11, heat-0.10, poisson-0.05, poisson-0.02, flow, maxwell)
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    scale: Scale,
    /// Override configuration keys, e.g. points.residual=4000
    #[arg(long = "set")]
    set: Vec<String>,
    /// Artifact directory
    #[arg(long)]
    output: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let base = match (&self.preset, &self.config) {
            (_, Some(path)) => RunConfig::load(path)?,
            (Some(name), None) => preset(name, self.scale)?,
            (None, None) => return Err(Error::Config("pass --preset or --config".into())),
        };
        let mut cfg = base.with_overrides(&self.set)?;
        if self.output.is_some() {
            cfg.output = self.output.clone();
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct FdtdArgs {
    #[arg(long, default_value_t = 2.5e-3)]
    dx: f64,
    #[arg(long, default_value_t = 2.5e-3)]
    dy: f64,
    #[arg(long, default_value_t = 1.25e-3)]
    dt: f64,
    #[arg(long, default_value_t = 0.5)]
    final_time: f64,
    /// Use the benchmark's stated grid (5e-3 spacing, 1.5e-3 step)
    #[arg(long)]
    paper_grid: bool,
    #[arg(long, default_value_t = 0.25)]
    tau: f64,
    #[arg(long, default_value_t = 0.25)]
    omega: f64,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    cx: f64,
    #[arg(long, default_value_t = 0.5)]
    cy: f64,
    /// Nodes per axis of the (x, y, t) query lattice written to reference.csv
    #[arg(long, value_delimiter = ',', default_value = "41,41,11")]
    lattice: Vec<usize>,
    /// Also run a three-level self-convergence study from this grid
    #[arg(long)]
    convergence: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn seed_of(cfg: &RunConfig, seed: Option<u64>) -> u64 {
    seed.unwrap_or(cfg.seeds[0])
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Solve { run, seed, log_every } => {
            let cfg = run.load()?;
            let seed = seed_of(&cfg, seed);
            let problem = cfg.problem.build()?;
            let test = TestGrid::new(&problem.domain, &cfg.points.test)?;
            let reference = awpinn::harness::run::reference_values(&cfg, &problem, &test.points)?;
            let every = log_every.max(1);
            let out = solve_seed(&cfg, &problem, &reference, seed, &mut |r| {
                if r.iteration % every == 0 {
                    eprintln!("{:<5} {:>6}  loss {:.4e}  |g| {:.2e}  {:.1}s", r.phase.as_str(), r.iteration, r.total, r.grad_norm, r.elapsed);
                }
            })?;
            if let Some(dir) = &cfg.output {
                let d = awpinn::harness::run::write_seed_artifacts(dir, &cfg, &problem, &reference, &out)?;
                eprintln!("artifacts in {}", d.display());
            }
            let r = &out.result;
            if let Some(h) = r.handoff {
                println!("hand-off      restricted {:.6e}  adaptive {:.6e}  rel. diff {:.2e}", h.restricted_loss, h.adaptive_loss, h.relative_error);
            }
            if let Some(s) = &r.selection {
                println!("active units  {} over {} fields, {} families per field", s.active.total_units(), problem.n_fields(), r.family.len());
            }
            println!("termination   {} after {} L-BFGS iterations", r.lbfgs.termination.as_str(), r.lbfgs.iterations);
            println!("final loss    {:.6e}", r.last.total);
            for (name, e) in problem.field_names.iter().zip(&out.errors) {
                println!("rel. L2 {name:<5} {e:.6e}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Select { run, seed } => {
            let mut cfg = run.load()?;
            let seed = seed_of(&cfg, seed);
            cfg.train.lbfgs.max_iterations = 0;
            cfg.train.adaptive = true;
            let problem = cfg.problem.build()?;
            let points = sample_points(&problem, &cfg.points.per_condition(&problem)?, &cfg.points.test, seed)?;
            let r = run_pipeline(&problem, &points, &cfg.family, &cfg.selection, &cfg.train, seed, &mut |_| {})?;
            let report = r.selection.expect("adaptive run selects");
            let json = to_json(&report)?;
            match &cfg.output {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    fs::write(dir.join("selection.json"), &json)?;
                    for f in &report.fields {
                        println!("field {}: {} of {} families selected", f.field, f.selected, f.n_families);
                    }
                }
                None => println!("{json}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Ntk { run, seed, points } => {
            let mut cfg = run.load()?;
            let seed = seed_of(&cfg, seed);
            cfg.train.lbfgs.max_iterations = 0;
            let problem = cfg.problem.build()?;
            let train_points = sample_points(&problem, &cfg.points.per_condition(&problem)?, &cfg.points.test, seed)?;
            let r = run_pipeline(&problem, &train_points, &cfg.family, &cfg.selection, &cfg.train, seed, &mut |_| {})?;
            let mut sub = cfg.points.clone();
            sub.residual = points;
            sub.initial = if sub.initial > 0 { (points / 10).max(1) } else { 0 };
            sub.boundary = if sub.boundary > 0 { (points / 10).max(2) } else { 0 };
            let probe = sample_points(&problem, &sub.per_condition(&problem)?, &cfg.points.test, seed.wrapping_add(1))?;
            let k = assemble_kernel(&problem, &r.models, &probe, KernelTarget::OperatorBlocks, DEFAULT_MEMORY_BUDGET)?;
            let eig = jacobi_eigen(&k.data, k.n)?;
            print_kernel_summary(&k);
            let top = eig.values.last().copied().unwrap_or(0.0);
            let positive = eig.values.iter().filter(|&&v| v > 1e-12 * top).count();
            println!("eigenvalues   n = {}, largest {top:.4e}, numerical rank {positive}, {} Jacobi sweeps", k.n, eig.sweeps);
            if let Some(dir) = &cfg.output {
                fs::create_dir_all(dir)?;
                let mut csv = String::from("index,eigenvalue\n");
                for (i, v) in eig.values.iter().rev().enumerate() {
                    csv.push_str(&format!("{i},{v:e}\n"));
                }
                fs::write(dir.join("eigenvalues.csv"), csv)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Fdtd(a) => fdtd(a),
        Command::Bench { presets, scale, repeats, set, output, rerun } => {
            if let Some(path) = rerun {
                let r = rerun_manifest(&path)?;
                for (old, new) in r.manifest.errors.iter().zip(&r.errors) {
                    println!("stored {old:.17e}  rerun {new:.17e}");
                }
                println!("{}", if r.identical { "identical" } else { "DIFFERENT" });
                return Ok(if r.identical { ExitCode::SUCCESS } else { ExitCode::from(3) });
            }
            let mut summary = String::new();
            for name in &presets {
                let mut cfg = preset(name, scale)?.with_overrides(&set)?;
                if let Some(n) = repeats {
                    if n == 0 || n > cfg.seeds.len() {
                        cfg.seeds = (1..=n.max(1) as u64).collect();
                    } else {
                        cfg.seeds.truncate(n);
                    }
                }
                cfg.output = output.as_ref().map(|d| d.join(name));
                let report = run_benchmark(&cfg, &mut |line| eprintln!("{line}"))?;
                summary.push_str(&report.table());
            }
            print!("{summary}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { groups, cases, seed } => {
            let groups: Vec<String> = if groups.is_empty() { CHECK_GROUPS.iter().map(|s| s.to_string()).collect() } else { groups };
            let mut failed = 0;
            for g in &groups {
                for o in run_group(g, cases, seed)? {
                    failed += usize::from(!o.passed);
                    println!("{}", o.line());
                }
            }
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
    }
}

fn print_kernel_summary(k: &KernelMatrix) {
    for a in &k.blocks {
        for b in &k.blocks {
            let block = k.block(a, b);
            let max = block.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            println!("block {:<3} {:>8} x {:<8} max |K| {max:.4e}", KernelMatrix::block_kind(a, b), a.name, b.name);
        }
    }
}

fn fdtd(a: FdtdArgs) -> Result<ExitCode> {
    let cfg = if a.paper_grid {
        FdtdConfig { final_time: a.final_time, ..FdtdConfig::paper() }
    } else {
        FdtdConfig { dx: a.dx, dy: a.dy, dt: a.dt, final_time: a.final_time }
    };
    let source = PulseSource { tau: a.tau, omega: a.omega, sigma: a.sigma, center: [a.cx, a.cy] };
    let (nx, ny) = cfg.cells()?;
    let steps = cfg.steps();
    if a.lattice.len() != 3 {
        return Err(Error::Config("query lattice needs three node counts (x, y, t)".into()));
    }
    let lattice = TestGrid::new(&[(0.0, 1.0), (0.0, 1.0), (0.0, steps as f64 * cfg.dt)], &a.lattice)?;
    let (samples, report) = solve_reference(&cfg, &source, &lattice.points)?;
    println!("grid          {nx} x {ny} cells, {steps} steps, CFL number {:.3}", report.cfl_number);
    println!("final energy  {:.6e}", report.final_energy);
    if let Some(dir) = &a.output {
        fs::create_dir_all(dir)?;
        let mut csv = String::from("x,y,t,Ex,Ey,Hz\n");
        for (i, q) in lattice.points.iter().enumerate() {
            csv.push_str(&format!("{:e},{:e},{:e},{:e},{:e},{:e}\n", q[0], q[1], q[2], samples.ex[i], samples.ey[i], samples.hz[i]));
        }
        fs::write(dir.join("reference.csv"), csv)?;
        let mut grid = YeeGrid::new(nx, ny, cfg.dt)?;
        let f = |x: f64, y: f64, t: f64| source.eval(x, y, t);
        for _ in 0..steps {
            grid.step(&f)?;
        }
        for (id, name) in [(FieldId::Ex, "Ex"), (FieldId::Ey, "Ey"), (FieldId::Hz, "Hz")] {
            fs::write(dir.join(format!("snapshot_{name}.csv")), grid.snapshot_csv(id))?;
        }
        eprintln!("wrote reference.csv and final snapshots to {}", dir.display());
    }
    if a.convergence {
        let c = convergence_study(&cfg, &source, &lattice.points)?;
        println!("convergence   spacings {:?}", c.spacings);
        println!("              differences {:.4e} {:.4e}, observed order {:.3}", c.differences[0], c.differences[1], c.order);
    }
    Ok(ExitCode::SUCCESS)
}
