use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use nestcert::powernet::{
    certify_gains, operating_point, solve_power_flow, synthesize_gains, GainCertificate, LyapunovFunction,
};
use nestcert::sim::{run_scenario, RunOptions};
use nestcert::toy::{self, Boundary};
use nestcert::{certify, Error, Method, NestedConstants, PowerSystemSpec, Scenario, Tolerances, ToyParams};

const EXIT_OK: u8 = 0;
const EXIT_NOT_CERTIFIED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Absolute tolerance of the toy boundary bisection.
const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "nestcert", version, about = "Stability certificates for nested multi-time-scale systems")]
struct Cli {
    /// Directory for emitted artifacts (created if missing).
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a constants file with both positivity tests and the eigenvalue oracle.
    Certify {
        #[arg(long)]
        input: PathBuf,
        /// Also synthesize time constants with this margin in (0, 1).
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Write the analytic constants of the three-scale example.
    ToyConstants {
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        k: f64,
    },
    /// Classify a grid over the (kappa, k) plane of the three-scale example.
    ToySweep {
        #[arg(long, default_value = "0:100", value_parser = parse_range)]
        kappa: (f64, f64),
        #[arg(long, default_value = "0:10", value_parser = parse_range)]
        k: (f64, f64),
        #[arg(long, default_value = "200x200", value_parser = parse_grid)]
        grid: (usize, usize),
        /// Also bisect both test boundaries in kappa for every k row.
        #[arg(long)]
        boundary: bool,
    },
    /// Converter network: power flow, gain certificates and simulation.
    #[command(subcommand)]
    Power(PowerCommand),
}

#[derive(Subcommand)]
enum PowerCommand {
    /// Solve the power flow of a network file.
    Pf(SpecArg),
    /// Check the gains of a network file.
    Certify {
        #[command(flatten)]
        spec: SpecArg,
        /// Load margin c_L; defaults to just under the available headroom.
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Synthesize certified gains for a network file.
    Synth(SpecArg),
    /// Simulate the closed loop from its equilibrium.
    Sim(SimArgs),
}

#[derive(Args)]
struct SpecArg {
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    spec: SpecArg,
    /// Event list in JSON.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    /// Output sample spacing.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol_abs: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol_rel: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Rosenbrock)]
    method: MethodArg,
    /// Relative random perturbation of the initial state, drawn from `--seed`.
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    DormandPrince,
    Rosenbrock,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected LO:HI, got '{s}'"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("'{lo}': {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("'{hi}': {e}"))?;
    Ok((lo, hi))
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got '{s}'"))?;
    let w: usize = w.trim().parse().map_err(|e| format!("'{w}': {e}"))?;
    let h: usize = h.trim().parse().map_err(|e| format!("'{h}': {e}"))?;
    Ok((w, h))
}

/// Failure of a command, already mapped to its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INPUT };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: EXIT_INPUT, message: e.to_string() }
    }
}

type CmdResult = Result<u8, Failure>;

/// Writes every float with 17 significant digits.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    let mut out = BufWriter::new(fs::File::create(&path)?);
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    value.serialize(&mut ser).map_err(|e| Failure { code: EXIT_NUMERICAL, message: e.to_string() })?;
    writeln!(out)?;
    out.flush()?;
    Ok(path)
}

fn create_file(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<fs::File>), Failure> {
    let path = dir.join(name);
    Ok((path.clone(), BufWriter::new(fs::File::create(path)?)))
}

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure { code: EXIT_INPUT, message: format!("{}: {e}", path.display()) })
}

fn read_spec(path: &Path) -> Result<PowerSystemSpec, Failure> {
    Ok(PowerSystemSpec::from_json(&read_input(path)?)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"))
}

fn cmd_certify(dir: &Path, input: &Path, margin: Option<f64>) -> CmdResult {
    let constants: NestedConstants = serde_json::from_str(&read_input(input)?)
        .map_err(|e| Failure { code: EXIT_INPUT, message: format!("constants file: {e}") })?;
    let report = certify(&constants, margin)?;
    let path = write_json(dir, "certificate.json", &report)?;

    println!("scale  cond1-slack     cond2-slack     margin");
    for i in 1..=report.n {
        // Slacks start at scale 2.
        let slack = |v: &Vec<Option<f64>>| i.checked_sub(2).and_then(|j| v.get(j).copied().flatten());
        println!(
            "{:<6} {:<15} {:<15} {}",
            i,
            fmt_opt(slack(&report.condition1_slack)),
            fmt_opt(slack(&report.condition2_slack)),
            fmt_opt(report.margins.get(i - 1).copied().flatten())
        );
    }
    println!("leading minors: {}", if report.condition1_pass { "pass" } else { "fail" });
    println!("recursive test: {}", if report.condition2_pass { "pass" } else { "fail" });
    println!("smallest eigenvalue: {}", fmt_opt(report.eigen_min));
    if let Some(eps) = &report.epsilons {
        println!("time constants: {eps:?}");
    }
    for d in &report.diagnostics {
        println!("note: {d}");
    }
    println!("verdict: {}", report.verdict.as_str());
    println!("wrote {}", path.display());

    Ok(match report.verdict {
        v if v.is_certified() => EXIT_OK,
        nestcert::Verdict::NotApplicable => EXIT_INPUT,
        _ => EXIT_NOT_CERTIFIED,
    })
}

fn cmd_toy_constants(dir: &Path, kappa: f64, k: f64) -> CmdResult {
    let params = ToyParams::new(kappa, k)?;
    let path = write_json(dir, "toy_constants.json", &toy::constants(&params))?;
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn cmd_toy_sweep(dir: &Path, kappa: (f64, f64), k: (f64, f64), grid: (usize, usize), boundary: bool) -> CmdResult {
    let rows = toy::sweep(kappa, k, grid)?;
    let (path, mut out) = create_file(dir, "toy_sweep.csv")?;
    toy::write_sweep_csv(&rows, &mut out)?;
    out.flush()?;
    println!("classified {} points, wrote {}", rows.len(), path.display());

    if boundary {
        let mut ks: Vec<f64> = rows.iter().map(|r| r.k).collect();
        ks.dedup();
        let (path, mut out) = create_file(dir, "toy_boundary.csv")?;
        writeln!(out, "k,kappa_condition1,kappa_condition2")?;
        for kk in ks {
            let c1 = toy::boundary_kappa(kk, Boundary::Condition1, BOUNDARY_TOL)?;
            let c2 = toy::boundary_kappa(kk, Boundary::Condition2, BOUNDARY_TOL)?;
            writeln!(out, "{kk},{c1},{c2}")?;
        }
        out.flush()?;
        println!("wrote {}", path.display());
    }
    Ok(EXIT_OK)
}

fn print_certificate(cert: &GainCertificate) {
    let l = &cert.loading;
    println!("loading: slack {:.6e}, eta slack {:.6e}", l.loading_slack, l.eta_slack);
    match &cert.voltage_loop {
        Some(v) => println!("voltage loop: slack {} ({})", fmt_opt(v.slack), if v.pass { "pass" } else { "fail" }),
        None => println!("voltage loop: not evaluated"),
    }
    match &cert.current_loop {
        Some(c) => println!("current loop: slack {} ({})", fmt_opt(c.slack), if c.pass { "pass" } else { "fail" }),
        None => println!("current loop: not evaluated"),
    }
    for d in &cert.diagnostics {
        println!("note: {d}");
    }
    println!("certified: {}", cert.pass);
}

fn cmd_power_pf(dir: &Path, input: &Path) -> CmdResult {
    let spec = read_spec(input)?;
    let sol = solve_power_flow(&spec)?;
    let path = write_json(dir, "operating_solution.json", &sol)?;
    println!("power flow converged in {} iterations, residual {:.3e}", sol.iterations, sol.residual);
    for w in &sol.warnings {
        println!("warning: {w}");
    }
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn cmd_power_certify(dir: &Path, input: &Path, margin: Option<f64>) -> CmdResult {
    let spec = read_spec(input)?;
    let cert = certify_gains(&spec, margin)?;
    let path = write_json(dir, "gain_certificate.json", &cert)?;
    print_certificate(&cert);
    println!("wrote {}", path.display());
    Ok(if cert.pass { EXIT_OK } else { EXIT_NOT_CERTIFIED })
}

fn cmd_power_synth(dir: &Path, input: &Path) -> CmdResult {
    let spec = read_spec(input)?;
    let cert = synthesize_gains(&spec)?;
    let gains = write_json(dir, "gains.json", &cert.gains)?;
    let path = write_json(dir, "gain_certificate.json", &cert)?;
    print_certificate(&cert);
    println!("wrote {} and {}", gains.display(), path.display());
    Ok(if cert.pass { EXIT_OK } else { EXIT_NOT_CERTIFIED })
}

fn cmd_power_sim(dir: &Path, seed: u64, args: &SimArgs) -> CmdResult {
    let spec = read_spec(&args.spec.input)?;
    spec.gains()?;
    let scenario = match &args.scenario {
        Some(p) => Scenario::from_json(&read_input(p)?)?,
        None => Scenario::default(),
    };
    if !(args.perturb >= 0.0 && args.perturb.is_finite()) {
        return Err(Error::input(format!("perturbation {} must be non-negative", args.perturb)).into());
    }
    let op = operating_point(&spec)?;
    let mut x0 = op.state.clone();
    if args.perturb > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in x0.iter_mut() {
            *v *= 1.0 + args.perturb * rng.gen_range(-1.0..=1.0);
        }
    }

    // The Lyapunov channels are only meaningful for certified gains.
    let lyapunov = certify_gains(&spec, None)
        .ok()
        .filter(|c| c.pass)
        .and_then(|c| LyapunovFunction::new(&op.model, &c).ok());

    let method = match args.method {
        MethodArg::DormandPrince => Method::DormandPrince,
        MethodArg::Rosenbrock => Method::Rosenbrock,
    };
    let tolerances = Tolerances { abs: args.tol_abs, rel: args.tol_rel, ..Tolerances::default() }.with_method(method);
    let opts = RunOptions { tolerances, sample_dt: args.dt, lyapunov: lyapunov.as_ref() };
    let run = run_scenario(&op.model, &scenario, &x0, args.t_end, &opts)?;

    let (path, mut out) = create_file(dir, "trajectory.csv")?;
    run.trajectory.write_csv(&mut out)?;
    out.flush()?;
    println!(
        "{} samples, {} accepted and {} rejected steps{}",
        run.trajectory.len(),
        run.stats.accepted,
        run.stats.rejected,
        if lyapunov.is_some() { ", with Lyapunov channels" } else { "" }
    );
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn run(cli: Cli) -> CmdResult {
    let dir = cli.output_dir.as_path();
    fs::create_dir_all(dir)?;
    match cli.command {
        Command::Certify { input, margin } => cmd_certify(dir, &input, margin),
        Command::ToyConstants { kappa, k } => cmd_toy_constants(dir, kappa, k),
        Command::ToySweep { kappa, k, grid, boundary } => cmd_toy_sweep(dir, kappa, k, grid, boundary),
        Command::Power(PowerCommand::Pf(s)) => cmd_power_pf(dir, &s.input),
        Command::Power(PowerCommand::Certify { spec, margin }) => cmd_power_certify(dir, &spec.input, margin),
        Command::Power(PowerCommand::Synth(s)) => cmd_power_synth(dir, &s.input),
        Command::Power(PowerCommand::Sim(args)) => cmd_power_sim(dir, cli.seed, &args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
