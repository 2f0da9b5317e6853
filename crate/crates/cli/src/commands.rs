use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use commeig_core::density::{delta_sq_marginal_cdf, log_rho_2x2, log_rho_2x2_stripped, projected_density};
use commeig_core::equilibrium::{axis_projection, equilibrium_radius, ks_distance_1d, minimize_energy, projected_cdf};
use commeig_core::mcmc::{default_init_scale, gaussian_init, sample_2x2_joint, sample_chain};
use commeig_core::rng::stream;
use commeig_core::tuple::{haar_unitary, reconstruct_tuple};
use commeig_core::{verify, ChainConfig, Error as CoreError, ExternalField};
use num_complex::Complex64;
use serde_json::{json, Map, Value};

use crate::doc::{write_atomic, Document, Format, Table};

pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUN: u8 = 3;

/// Default seed for `verify`.
pub const VERIFY_SEED: u64 = 20240601;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError { code: EXIT_CONFIG, message: message.into() }
}

fn run_error(e: CoreError) -> CliError {
    let code = match e {
        CoreError::InvalidArgument(_) | CoreError::UnsupportedAlpha(_) | CoreError::ShapeMismatch(_) => EXIT_CONFIG,
        _ => EXIT_RUN,
    };
    CliError { code, message: e.to_string() }
}

#[derive(Debug, Parser)]
#[command(name = "commeig", version, about = "Eigenvalue laws of random commuting matrix tuples")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample eigenvalues of a Gaussian Hermitian commuting tuple by Metropolis.
    #[command(allow_negative_numbers = true)]
    SampleHermitian(SampleArgs),
    /// Minimize the discrete logarithmic energy and compare with the closed-form law.
    #[command(allow_negative_numbers = true)]
    Equilibrium(EquilibriumArgs),
    /// Run the oracle checks.
    Verify(VerifyArgs),
    /// Tabulate the 2x2 non-Hermitian density, optionally against MCMC.
    #[command(name = "density-2x2")]
    #[command(allow_negative_numbers = true)]
    Density2x2(DensityArgs),
    /// Re-read an output file and write it again.
    Reemit(ReemitArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Weight e^{-gamma |X|^2}.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of retained configurations.
    #[arg(long, default_value_t = 1000)]
    pub length: usize,
    #[arg(long = "burn-in", default_value_t = 10_000)]
    pub burn_in: usize,
    /// Chain steps between retained configurations.
    #[arg(long, default_value_t = 100)]
    pub thin: usize,
    /// Also emit a matrix tuple per sample, conjugated by a Haar unitary.
    #[arg(long)]
    pub reconstruct: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EquilibriumArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Field Q(x) = gamma |x|^2.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long = "max-iter", default_value_t = 20_000)]
    pub max_iter: usize,
    /// Gradient-norm threshold for convergence.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Points in the closed-form density table.
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Run only the named check (repeatable).
    #[arg(long)]
    pub only: Vec<String>,
    #[arg(long, default_value_t = VERIFY_SEED)]
    pub seed: u64,
    /// Write a JSON report to this path.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Drop the Gaussian factor and tabulate the bracket alone.
    #[arg(long)]
    pub stripped: bool,
    /// Largest |Δ| on the grid; defaults to 3/√gamma.
    #[arg(long = "max-delta")]
    pub max_delta: Option<f64>,
    #[arg(long, default_value_t = 61)]
    pub points: usize,
    /// Compare the |Δ|² marginal with a Metropolis chain.
    #[arg(long)]
    pub mcmc: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Retained chain samples.
    #[arg(long, default_value_t = 100_000)]
    pub length: usize,
    #[arg(long = "burn-in", default_value_t = 20_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 20)]
    pub thin: usize,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ReemitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; the input's own format when absent.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

pub fn run(cli: Cli) -> Result<u8, CliError> {
    configure_threads()?;
    match cli.command {
        Command::SampleHermitian(a) => sample_hermitian(&a),
        Command::Equilibrium(a) => equilibrium(&a),
        Command::Verify(a) => verify_cmd(&a),
        Command::Density2x2(a) => density_2x2(&a),
        Command::Reemit(a) => reemit(&a),
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("RMT_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| config_error(format!("RMT_THREADS must be a positive integer, got `{raw}`")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn emit(doc: &Document, output: &OutputArgs) -> Result<(), CliError> {
    let text = doc.render(output.format.into());
    match &output.out {
        Some(path) => write_atomic(path, &text).map_err(|e| CliError { code: EXIT_RUN, message: format!("writing {}: {e}", path.display()) }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn require(cond: bool, msg: &str) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(config_error(msg))
    }
}

fn base_config(command: &str, seed: u64, format: FormatArg) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), json!(command));
    m.insert("seed".into(), json!(seed));
    m.insert("format".into(), json!(format!("{format:?}").to_lowercase()));
    m
}

fn chain_config(seed: u64, length: usize, burn_in: usize, thin: usize, sigma: f64) -> Result<ChainConfig, CliError> {
    let steps = length.checked_mul(thin).and_then(|s| s.checked_add(burn_in)).ok_or_else(|| config_error("chain length overflows"))?;
    Ok(ChainConfig { seed, length: steps, burn_in, thin, proposal_sigma: sigma, adapt: true })
}

pub fn sample_hermitian(a: &SampleArgs) -> Result<u8, CliError> {
    require(a.n >= 1 && a.d >= 1, "--n and --d must be at least 1")?;
    require(a.gamma > 0.0 && a.gamma.is_finite(), "--gamma must be positive")?;
    require(a.length >= 1 && a.thin >= 1, "--length and --thin must be at least 1")?;
    let q = ExternalField::gaussian(a.gamma);
    let spread = (a.n as f64).sqrt() * default_init_scale(a.gamma);
    let init = gaussian_init(a.n, a.d, spread, &mut stream(a.seed, 1));
    let cfg = chain_config(a.seed, a.length, a.burn_in, a.thin, 0.1 * default_init_scale(a.gamma))?;
    let chain = sample_chain(|x| commeig_core::density::log_ginibre_density(x, &q).log_value, &init, &cfg).map_err(run_error)?;

    let mut config = base_config("sample-hermitian", a.seed, a.output.format);
    config.insert("n".into(), json!(a.n));
    config.insert("d".into(), json!(a.d));
    config.insert("gamma".into(), json!(a.gamma));
    config.insert("length".into(), json!(a.length));
    config.insert("burn_in".into(), json!(a.burn_in));
    config.insert("thin".into(), json!(a.thin));
    config.insert("reconstruct".into(), json!(a.reconstruct));
    config.insert("weight".into(), json!("exp(-gamma |X|_F^2)"));
    config.insert("streams".into(), json!("ChaCha8 keyed by seed; chain stream 0, initial point stream 1, unitaries stream 2"));
    let mut doc = Document::new(config);

    let columns = (1..=a.n).flat_map(|i| (1..=a.d).map(move |r| format!("x{i}_{r}"))).collect();
    let mut table = Table::new(columns);
    for s in &chain.samples {
        table.push((0..a.n).flat_map(|i| s.real_point(i)).collect());
    }
    doc.tables.insert("eigenvalues".into(), table);

    if a.reconstruct {
        let columns = (1..=a.d)
            .flat_map(|r| (1..=a.n).flat_map(move |i| (1..=a.n).flat_map(move |j| [format!("X{r}_{i}_{j}_re"), format!("X{r}_{i}_{j}_im")])))
            .collect();
        let mut tuples = Table::new(columns);
        let mut rng = stream(a.seed, 2);
        for s in &chain.samples {
            let u = haar_unitary(a.n, &mut rng);
            let x = reconstruct_tuple(s, &u).map_err(run_error)?;
            tuples.push(x.components().iter().flat_map(|m| m.transpose().iter().flat_map(|z| [z.re, z.im]).collect::<Vec<_>>()).collect());
        }
        doc.tables.insert("tuples".into(), tuples);
    }

    let scale = (a.n as f64).sqrt();
    let points: Vec<Vec<f64>> = chain.samples.iter().flat_map(|s| (0..a.n).map(move |i| s.real_point(i).iter().map(|x| x / scale).collect())).collect();
    let ks = ks_distance_1d(&axis_projection(&points), projected_cdf(a.d, a.gamma)).map_err(run_error)?;
    doc.check("acceptance_rate", chain.acceptance_rate, None);
    doc.check("projection_ks", ks, None);
    eprintln!("acceptance rate {:.3}; KS of the sqrt(n)-scaled first coordinate against f_{}: {ks:.4}", chain.acceptance_rate, a.d);
    emit(&doc, &a.output)?;
    Ok(0)
}

pub fn equilibrium(a: &EquilibriumArgs) -> Result<u8, CliError> {
    require(a.n >= 1 && a.d >= 1, "--n and --d must be at least 1")?;
    require(a.gamma > 0.0 && a.gamma.is_finite(), "--gamma must be positive")?;
    require(a.grid >= 2, "--grid must be at least 2")?;
    let q = ExternalField::gaussian(a.gamma);
    let report = minimize_energy(a.n, a.d, &q, a.seed, a.max_iter, a.tol).map_err(run_error)?;
    let radius = equilibrium_radius(a.d, a.gamma);

    let mut config = base_config("equilibrium", a.seed, a.output.format);
    config.insert("n".into(), json!(a.n));
    config.insert("d".into(), json!(a.d));
    config.insert("gamma".into(), json!(a.gamma));
    config.insert("max_iter".into(), json!(a.max_iter));
    config.insert("tol".into(), json!(a.tol));
    config.insert("field".into(), json!("Q(x) = gamma |x|^2"));
    config.insert("streams".into(), json!("ChaCha8 keyed by seed; restart k uses stream k"));
    let mut doc = Document::new(config);

    let mut columns: Vec<String> = (1..=a.d).map(|r| format!("x{r}")).collect();
    columns.push("radius".into());
    let mut points = Table::new(columns);
    let mut radii = Vec::with_capacity(a.n);
    for i in 0..a.n {
        let mut p = report.config.real_point(i);
        let r = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        radii.push(r);
        p.push(r);
        points.push(p);
    }
    doc.tables.insert("points".into(), points);
    let mut density = Table::new(vec!["x".into(), "density".into()]);
    for k in 0..a.grid {
        let x = -radius + 2.0 * radius * k as f64 / (a.grid - 1) as f64;
        density.push(vec![x, projected_density(a.d, a.gamma, x)]);
    }
    doc.tables.insert("projected_density".into(), density);

    let max_r = radii.iter().copied().fold(0.0, f64::max);
    doc.check("energy", report.energy, None);
    doc.check("gradient_norm", report.gradient_norm, Some(a.tol));
    doc.check("iterations", report.iterations as f64, None);
    doc.check("closed_form_radius", radius, None);
    doc.check("max_radius_over_R", max_r / radius, Some(1.05));
    if a.d >= 4 {
        let spread = radii.iter().map(|r| (r / radius - 1.0).abs()).fold(0.0, f64::max);
        doc.check("sphere_spread", spread, Some(0.02));
    }
    eprintln!(
        "energy {:.8}, max radius {max_r:.4} against R_{} = {radius:.4}, {}",
        report.energy,
        a.d,
        if report.converged { "converged" } else { "NOT converged (best so far written)" }
    );
    emit(&doc, &a.output)?;
    Ok(if report.converged { 0 } else { EXIT_RUN })
}

pub fn verify_cmd(a: &VerifyArgs) -> Result<u8, CliError> {
    let known = verify::check_names();
    for name in &a.only {
        if !known.contains(&name.as_str()) {
            return Err(config_error(format!("unknown check `{name}`; known: {}", known.join(", "))));
        }
    }
    let names: Vec<&str> = if a.only.is_empty() { known } else { a.only.iter().map(String::as_str).collect() };
    let mut config = base_config("verify", a.seed, if a.json.is_some() { FormatArg::Json } else { a.output.format });
    config.insert("only".into(), json!(a.only));
    let mut doc = Document::new(config);
    println!("{:<20} {:>12} {:>10}  result", "check", "measured", "tolerance");
    for name in names {
        let r = verify::run_check(name, a.seed).map_err(run_error)?;
        println!("{:<20} {:>12.3e} {:>10.0e}  {}", r.name, r.measured, r.tolerance, if r.passed { "PASS" } else { "FAIL" });
        doc.check(r.name, r.measured, Some(r.tolerance));
    }
    if let Some(path) = &a.json {
        emit(&doc, &OutputArgs { out: Some(path.clone()), format: FormatArg::Json })?;
    }
    if a.output.out.is_some() {
        emit(&doc, &a.output)?;
    }
    let all = doc.checks.iter().all(|c| c.passed == Some(true));
    Ok(if all { 0 } else { EXIT_CHECK_FAILED })
}

pub fn density_2x2(a: &DensityArgs) -> Result<u8, CliError> {
    require(a.d >= 1, "--d must be at least 1")?;
    require(a.gamma > 0.0 && a.gamma.is_finite(), "--gamma must be positive")?;
    require(a.points >= 2 && a.bins >= 1, "--points must be at least 2 and --bins at least 1")?;
    let max_delta = a.max_delta.unwrap_or(3.0 / a.gamma.sqrt());
    require(max_delta > 0.0 && max_delta.is_finite(), "--max-delta must be positive")?;

    let mut config = base_config("density-2x2", a.seed, a.output.format);
    config.insert("d".into(), json!(a.d));
    config.insert("gamma".into(), json!(a.gamma));
    config.insert("stripped".into(), json!(a.stripped));
    config.insert("max_delta".into(), json!(max_delta));
    config.insert("points".into(), json!(a.points));
    config.insert("mcmc".into(), json!(a.mcmc));
    config.insert("placement".into(), json!("lambda1 = -delta/2 e1, lambda2 = +delta/2 e1"));
    let mut doc = Document::new(config);

    let mut grid = Table::new(vec!["delta".into(), "log_rho".into(), "rho".into()]);
    for k in 0..a.points {
        let t = max_delta * k as f64 / (a.points - 1) as f64;
        let report = if a.stripped {
            log_rho_2x2_stripped(t * t, a.d, a.gamma)
        } else {
            let mut l1 = vec![Complex64::new(0.0, 0.0); a.d];
            let mut l2 = l1.clone();
            l1[0].re = -t / 2.0;
            l2[0].re = t / 2.0;
            log_rho_2x2(&l1, &l2, a.d, a.gamma)
        };
        grid.push(vec![t, report.log_value, report.log_value.exp()]);
    }
    doc.tables.insert("grid".into(), grid);

    if a.mcmc {
        require(a.length >= 1 && a.thin >= 1, "--length and --thin must be at least 1")?;
        config_mcmc(&mut doc, a);
        let cfg = chain_config(a.seed, a.length, a.burn_in, a.thin, 0.5 / a.gamma.sqrt())?;
        let chain = sample_2x2_joint(a.d, a.gamma, &cfg).map_err(run_error)?;
        let mut s: Vec<f64> = chain.samples.iter().map(|x| x.delta_sq()).collect();
        let cdf = delta_sq_marginal_cdf(a.d, a.gamma);
        let ks = ks_distance_1d(&s, &cdf).map_err(run_error)?;
        s.sort_by(f64::total_cmp);
        let top = s[((s.len() as f64 * 0.995) as usize).min(s.len() - 1)];
        let mut hist = Table::new(vec!["s_lo".into(), "s_hi".into(), "empirical_mass".into(), "model_mass".into()]);
        for b in 0..a.bins {
            let (lo, hi) = (top * b as f64 / a.bins as f64, top * (b + 1) as f64 / a.bins as f64);
            let count = s.partition_point(|&x| x < hi) - s.partition_point(|&x| x < lo);
            hist.push(vec![lo, hi, count as f64 / s.len() as f64, cdf(hi) - cdf(lo)]);
        }
        doc.tables.insert("marginal".into(), hist);
        doc.check("acceptance_rate", chain.acceptance_rate, None);
        doc.check("marginal_ks", ks, Some(0.02));
        eprintln!("KS of the |delta|^2 marginal over {} samples: {ks:.4}", s.len());
    }
    emit(&doc, &a.output)?;
    Ok(0)
}

fn config_mcmc(doc: &mut Document, a: &DensityArgs) {
    doc.config.insert("length".into(), json!(a.length));
    doc.config.insert("burn_in".into(), json!(a.burn_in));
    doc.config.insert("thin".into(), json!(a.thin));
    doc.config.insert("streams".into(), json!("ChaCha8 keyed by seed; chain stream 0, initial point keyed by seed xor 0x9e3779b97f4a7c15"));
}

pub fn reemit(a: &ReemitArgs) -> Result<u8, CliError> {
    let text = std::fs::read_to_string(&a.input).map_err(|e| config_error(format!("reading {}: {e}", a.input.display())))?;
    let doc = Document::parse(&text).map_err(|e| config_error(format!("parsing {}: {e}", a.input.display())))?;
    let format = a.format.map(Format::from).unwrap_or_else(|| Format::sniff(&text));
    let out = doc.render(format);
    match &a.out {
        Some(path) => write_atomic(path, &out).map_err(|e| CliError { code: EXIT_RUN, message: format!("writing {}: {e}", path.display()) })?,
        None => print!("{out}"),
    }
    Ok(0)
}
