use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use spectral_perturb::coefficients::{preset, PRESET_NAMES};
use spectral_perturb::geometry::{build_base, build_dumbbell, Component};
use spectral_perturb::inequalities::{records_jsonl, records_summary_csv, InequalityRecord};
use spectral_perturb::study::{run_sweep, solve_on, solver_options, write_outputs, ConvergenceReport, StudyConfig};
use spectral_perturb::Error;

const SCHEMA_HELP: &str = "Configuration files are JSON objects with \"schema\": 1. Fields: domain, preset, params, h, \
epsilon_schedule, J, k_max, p_tilde, seed, checks, tol, rel_gap, q, c3. Command-line flags override file values.\n\n\
Exit codes: 0 success, 1 invalid configuration or usage, 2 solver failure, 3 verification failure.";

#[derive(Parser, Debug)]
#[command(name = "spectral-perturb", version, about = "Dirichlet eigenvalues on dumbbell domains with a shrinking tube")]
#[command(after_help = SCHEMA_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the base mesh and one dumbbell mesh per epsilon, written as JSON.
    #[command(after_help = SCHEMA_HELP)]
    Mesh(Common),
    /// Solve for the lowest k_max eigenpairs on the base domain and at each epsilon.
    #[command(after_help = SCHEMA_HELP)]
    Solve(Common),
    /// Run the full convergence sweep and write CSV, JSON, plot script and check records.
    #[command(after_help = SCHEMA_HELP)]
    Sweep(Common),
    /// Run the sweep and report only the inequality checks.
    #[command(after_help = SCHEMA_HELP)]
    Verify(Common),
    /// Coefficient presets.
    #[command(after_help = SCHEMA_HELP)]
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand, Debug)]
enum PresetAction {
    /// Print the preset names, one per line.
    List,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Study configuration file (JSON, schema 1).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh width; every length must be a multiple of 2h.
    #[arg(long)]
    h: Option<f64>,
    /// Tube widths, strictly decreasing, comma separated.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Number of eigenpairs k_max.
    #[arg(long)]
    k: Option<usize>,
    /// Coefficient preset name (see `presets list`).
    #[arg(long)]
    preset: Option<String>,
    /// Seed for every randomized step.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the machine parallelism.
    #[arg(long, env = "SPECTRAL_PERTURB_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Solver(String),
    Verification(usize),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Solver(_) => 2,
            Failure::Verification(_) => 3,
        }
    }
}

fn is_usage(e: &Error) -> bool {
    match e {
        Error::AtEpsilon { source, .. } => is_usage(source),
        Error::GridMisaligned(_)
        | Error::TubeTooWide(_)
        | Error::InvalidDomain(_)
        | Error::NonPositiveMu(_)
        | Error::NegativeUpsilon(_)
        | Error::UnknownPreset(_)
        | Error::InvalidParameters(_)
        | Error::InvalidParameter(_)
        | Error::InvalidConfig(_) => true,
        _ => false,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if is_usage(&e) {
            Failure::Usage(e.to_string())
        } else {
            Failure::Solver(e.to_string())
        }
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::Solver(format!("i/o: {e}"))
}

/// File values first, then flag overrides, then validation.
fn load_config(args: &Common) -> Result<StudyConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<StudyConfig>(&text)
                .map_err(|e| Failure::Usage(format!("invalid study configuration: {e}")))?
        }
        None => StudyConfig::symmetric(args.preset.as_deref().unwrap_or("laplacian"), 1.0 / 64.0),
    };
    if let Some(h) = args.h {
        config.h = h;
    }
    if let Some(eps) = &args.eps {
        config.epsilon_schedule = eps.clone();
    }
    if let Some(k) = args.k {
        config.k_max = k;
        config.j = config.j.min(k);
    }
    if let Some(p) = &args.preset {
        config.preset = p.clone();
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.out = Some(args.out.clone());
    config.validate()?;
    Ok(config)
}

fn configure_threads(threads: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn eps_tag(eps: f64) -> String {
    format!("eps_{eps}")
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(io)?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io)?;
    Ok(path)
}

fn mesh(config: &StudyConfig, out: &Path) -> Result<(), Failure> {
    let base = build_base(&config.domain, config.h)?;
    write(out, "mesh_base.json", &base.to_json()?)?;
    println!(
        "base vertices={} triangles={} interior={}",
        base.num_vertices(),
        base.triangles.len(),
        base.num_interior()
    );
    for &eps in &config.epsilon_schedule {
        let mesh = build_dumbbell(&config.domain, eps, config.h)?;
        write(out, &format!("mesh_{}.json", eps_tag(eps)), &mesh.to_json()?)?;
        let tube = mesh.labels.iter().filter(|&&l| l == Component::Tube).count();
        println!(
            "eps={eps} vertices={} triangles={} interior={} tube_triangles={tube}",
            mesh.num_vertices(),
            mesh.triangles.len(),
            mesh.num_interior()
        );
    }
    Ok(())
}

fn solve(config: &StudyConfig, out: &Path) -> Result<(), Failure> {
    let tensor = preset(&config.preset, &config.params)?;
    let opts = solver_options(config);
    let mut csv = String::from("epsilon,k,sigma,residual\n");
    let mut meshes = vec![(0.0, build_base(&config.domain, config.h)?)];
    for &eps in &config.epsilon_schedule {
        meshes.push((eps, build_dumbbell(&config.domain, eps, config.h)?));
    }
    for (eps, mesh) in &meshes {
        let (stiff, _, pairs, shift) = solve_on(mesh, &tensor, config.k_max, &opts).map_err(|e| match e {
            e if *eps > 0.0 => Error::AtEpsilon {
                epsilon: *eps,
                source: Box::new(e),
            },
            e => e,
        })?;
        for (k, p) in pairs.iter().enumerate() {
            let _ = writeln!(csv, "{eps},{},{},{}", k + 1, p.sigma, p.residual);
        }
        let sigma: Vec<String> = pairs.iter().map(|p| format!("{:.6}", p.sigma)).collect();
        let worst = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
        let label = if *eps > 0.0 { format!("eps={eps}") } else { "base".to_string() };
        println!(
            "{label} dofs={} sigma=[{}] max_residual={worst:.2e} shift={shift}",
            stiff.dim(),
            sigma.join(", ")
        );
    }
    write(out, "eigenvalues.csv", &csv)?;
    Ok(())
}

fn print_sweep_summary(report: &ConvergenceReport) {
    for e in &report.epsilons {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3e}"));
        println!(
            "eps={} dofs={} cluster_diff={:.6e} gap_flag={} max_residual={:.2e} diag_deficiency={} offdiag={} projector_distance={}",
            e.epsilon,
            e.degrees_of_freedom,
            e.cluster_diff,
            e.gap_flag,
            e.max_residual,
            opt(e.diag_deficiency),
            opt(e.offdiag),
            opt(e.projector_distance)
        );
    }
    match &report.fit {
        Some(f) => println!(
            "fit a={:.4} r2={:.4} theoretical_rate={:.4}",
            f.a, f.r2, report.theoretical_rate
        ),
        None => println!("fit unavailable: {}", report.fit_error.as_deref().unwrap_or("")),
    }
}

fn verification(records: &[InequalityRecord]) -> Result<(), Failure> {
    let failed: Vec<&InequalityRecord> = records.iter().filter(|r| !r.pass).collect();
    for r in &failed {
        eprintln!(
            "check failed: {} epsilon={} constant={:e}",
            r.name,
            r.epsilon.map_or("-".to_string(), |e| e.to_string()),
            r.empirical_constant
        );
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(failed.len()))
    }
}

fn sweep(config: &StudyConfig, out: &Path) -> Result<(), Failure> {
    let report = run_sweep(config)?;
    let files = write_outputs(&report, out)?;
    info!("wrote {}", files.json.display());
    print_sweep_summary(&report);
    verification(&report.records)
}

fn verify(config: &StudyConfig, out: &Path) -> Result<(), Failure> {
    let report = run_sweep(config)?;
    write(out, "records.jsonl", &records_jsonl(&report.records)?)?;
    write(out, "records_summary.csv", &records_summary_csv(&report.records))?;
    for e in &report.epsilons {
        let mine: Vec<&InequalityRecord> = report.records.iter().filter(|r| r.epsilon == Some(e.epsilon)).collect();
        let passed = mine.iter().filter(|r| r.pass).count();
        println!("eps={} checks={} passed={} failed={}", e.epsilon, mine.len(), passed, mine.len() - passed);
    }
    verification(&report.records)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let args = match cli.command {
        Command::Presets { action: PresetAction::List } => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            return Ok(());
        }
        Command::Mesh(ref a) | Command::Solve(ref a) | Command::Sweep(ref a) | Command::Verify(ref a) => a.clone(),
    };
    configure_threads(args.threads)?;
    let config = load_config(&args)?;
    match cli.command {
        Command::Mesh(_) => mesh(&config, &args.out),
        Command::Solve(_) => solve(&config, &args.out),
        Command::Sweep(_) => sweep(&config, &args.out),
        Command::Verify(_) => verify(&config, &args.out),
        Command::Presets { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Solver(m) => eprintln!("error: {m}"),
                Failure::Verification(n) => eprintln!("error: {n} verification check(s) failed"),
            }
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use spectral_perturb::study::SCHEMA_VERSION;

    #[test]
    fn every_help_mentions_the_schema() {
        let needle = format!("\"schema\": {SCHEMA_VERSION}");
        let mut cmd = Cli::command();
        assert!(cmd.render_long_help().to_string().contains(&needle));
        for sub in cmd.get_subcommands_mut().filter(|s| s.get_name() != "help") {
            assert!(sub.render_long_help().to_string().contains(&needle), "{}", sub.get_name());
        }
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from(["x", "sweep", "--h", "0.03125", "--eps", "0.25,0.125", "--k", "4", "--seed", "9"]).unwrap();
        let Command::Sweep(args) = cli.command else { panic!() };
        let c = load_config(&args).unwrap();
        assert_eq!(c.h, 0.03125);
        assert_eq!(c.epsilon_schedule, vec![0.25, 0.125]);
        assert_eq!((c.k_max, c.seed), (4, 9));
    }

    #[test]
    fn error_classes() {
        assert_eq!(Failure::from(Error::GridMisaligned(String::new())).code(), 1);
        let nested = Error::AtEpsilon {
            epsilon: 0.1,
            source: Box::new(Error::FactorizationFailed(String::new())),
        };
        assert_eq!(Failure::from(nested).code(), 2);
    }
}
