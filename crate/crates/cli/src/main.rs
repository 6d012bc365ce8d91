//! `sepaudit`: synthetic separability experiments and regional sensitivity
//! audits of spectra from the command line.

mod config;
mod failure;
mod manifest;
mod realdata;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sepaudit::dataio::{check_manifest, convert_wide, load_spectra, write_spectra, DatasetManifest};
use sepaudit::evalharness::{parse_values, run_experiment, AuditReport, ExperimentConfig, ExperimentId};
use sepaudit::models::ModelSpec;
use sepaudit::special::ln_gamma;
use sepaudit::synthgen::{concentration_study, ConcentrationPanel};

use failure::{CliResult, Failure};
use manifest::OutputSet;
use realdata::{parse_real_id, run_audit, AuditConfig, AuditKind};

const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(name = "sepaudit", version, about = "Separability experiments and regional sensitivity audits for spectra")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic experiment (N1-N4, S1-S3) or a real-data one (Ra1-Rb5, needs --data).
    Run(RunArgs),
    /// Norm histograms of isotropic Gaussians across dimensions.
    Concentration(ConcentrationArgs),
    /// Run one audit on a labelled spectra file.
    Audit(AuditArgs),
    /// Convert a wide table plus a sample,label map into the canonical CSV.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "SEPAUDIT_OUT_DIR", default_value = "results")]
    out_dir: PathBuf,

    /// `key = value` file applied before command-line flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    id: String,

    #[arg(long)]
    seed: Option<u64>,

    /// `key=values` with comma lists and `start:stop:step` ranges; repeatable.
    #[arg(long = "grid-override", value_name = "KEY=VALUES")]
    grid_override: Vec<String>,

    /// Comma-separated model names (qda, oracle, logistic, knn, tree, forest).
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,

    /// Labelled spectra CSV for real-data experiments.
    #[arg(long)]
    data: Option<PathBuf>,

    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ConcentrationArgs {
    #[arg(long, default_value = "2,50,500,5000")]
    n_list: String,

    #[arg(long, default_value = "1.0,1.1")]
    sigmas: String,

    /// Samples per (n, sigma).
    #[arg(long, default_value_t = 10_000)]
    samples: usize,

    #[arg(long, default_value_t = 100)]
    bins: usize,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Output directory.
    #[arg(long, env = "SEPAUDIT_OUT_DIR", default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(value_enum)]
    kind: AuditKind,

    #[arg(long)]
    data: PathBuf,

    /// Class pair FIRST:SECOND.
    #[arg(long, default_value = "EVOO:LOO")]
    task: String,

    /// rho1..rho5, first50, `lo-hi` in nm or `px:lo-hi`.
    #[arg(long)]
    region: Option<String>,

    /// Pixel counts, `lo-hi` or a comma list.
    #[arg(long)]
    k_range: Option<String>,

    #[arg(long)]
    repeats: Option<String>,

    /// Window widths, comma-separated.
    #[arg(long)]
    widths: Option<String>,

    /// Removed wavelength intervals, `lo-hi,...` or `none`.
    #[arg(long)]
    mask: Option<String>,

    #[arg(long)]
    seed: Option<u64>,

    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ConvertArgs {
    /// Wide CSV: wavelength column then one column per sample.
    #[arg(long)]
    wide: PathBuf,

    /// CSV with header and columns sample,label.
    #[arg(long)]
    labels: PathBuf,

    #[arg(long)]
    out: PathBuf,

    /// Dataset manifest (JSON) to check class counts against.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { failure::EXIT_USAGE as u8 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::usage("--jobs must be positive"));
        }
        builder = builder.num_threads(jobs);
    }
    let pool = builder.build().map_err(|e| Failure::usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Run(args) => run(args),
        Command::Concentration(args) => concentration(args),
        Command::Audit(args) => audit(args),
        Command::Convert(args) => convert(args),
    })
}

fn load_settings(path: Option<&Path>) -> CliResult<Vec<(String, String)>> {
    path.map_or(Ok(Vec::new()), config::load)
}

fn parse_models(names: &[String]) -> CliResult<Vec<ModelSpec>> {
    names.iter().map(|n| ModelSpec::parse(n.trim()).map_err(Failure::from)).collect()
}

fn run(args: RunArgs) -> CliResult<()> {
    if let Some((kind, task)) = parse_real_id(&args.id) {
        let data_path = args
            .data
            .as_deref()
            .ok_or_else(|| Failure::usage(format!("{} is a real-data experiment and needs --data", args.id)))?;
        if !args.grid_override.is_empty() || args.models.is_some() {
            return Err(Failure::usage("--grid-override and --models apply to synthetic experiments only"));
        }
        let mut config = AuditConfig::new(kind, task, DEFAULT_SEED)?;
        for (k, v) in load_settings(args.out.config.as_deref())? {
            config.set(&k, &v)?;
        }
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        return execute_audit(&config, data_path, &args.out.out_dir, &args.id);
    }

    let id: ExperimentId = args.id.parse().map_err(|_| {
        Failure::usage(format!("unknown experiment {:?}; expected N1-N4, S1-S3, Ra1-Ra5 or Rb1-Rb5", args.id))
    })?;
    let mut config = ExperimentConfig::default_for(id, DEFAULT_SEED);
    for (k, v) in load_settings(args.out.config.as_deref())? {
        match k.as_str() {
            "seed" => config.seed = v.parse().map_err(|_| Failure::usage(format!("seed must be an integer, got {v:?}")))?,
            "models" => config.models = parse_models(&v.split(',').map(String::from).collect::<Vec<_>>())?,
            _ => config.apply_override(&format!("{k}={v}"))?,
        }
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(models) = &args.models {
        config.models = parse_models(models)?;
    }
    for o in &args.grid_override {
        config.apply_override(o)?;
    }
    config.validate()?;

    let mut out = OutputSet::new(&args.out.out_dir, &id.to_string())?;
    if let Some(path) = &args.out.config {
        out.add_input(path)?;
    }
    let report = run_experiment(&config)?;
    out.write(".json", report.to_json()?.as_bytes())?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let csv_path = out.write(".csv", &csv)?;
    let manifest = out.finish(serde_json::to_value(&config)?, config.seed)?;
    print!("{}", summarise_report(&report));
    println!("wrote {} and {}", csv_path.display(), manifest.display());
    Ok(())
}

fn summarise_report(report: &AuditReport) -> String {
    const MAX_LINES: usize = 60;
    let mut s = format!("{}: {} records\n", report.experiment_id, report.records.len());
    for r in report.records.iter().take(MAX_LINES) {
        let coords: Vec<String> = report.axes.iter().zip(&r.coords).map(|(a, v)| format!("{a}={v}")).collect();
        let reference = r.reference_accuracy.map(|v| format!("  analytic {v:.4}")).unwrap_or_default();
        let _ = writeln!(s, "{:<30} {:<9} accuracy {:.4}{reference}", coords.join(" "), r.model, r.mean);
    }
    if report.records.len() > MAX_LINES {
        let _ = writeln!(s, "... {} more in the CSV", report.records.len() - MAX_LINES);
    }
    s
}

fn execute_audit(config: &AuditConfig, data_path: &Path, out_dir: &Path, stem: &str) -> CliResult<()> {
    let data = load_spectra(data_path).map_err(|e| {
        let f = Failure::from(e);
        Failure { message: format!("{}: {}", data_path.display(), f.message), ..f }
    })?;
    let mut out = OutputSet::new(out_dir, stem)?;
    out.add_input(data_path)?;
    let summary = run_audit(config, &data, &mut out)?;
    let manifest = out.finish(serde_json::to_value(config)?, config.seed)?;
    print!("{summary}");
    println!("wrote {}", manifest.display());
    Ok(())
}

fn audit(args: AuditArgs) -> CliResult<()> {
    let mut config = AuditConfig::new(args.kind, &args.task, DEFAULT_SEED)?;
    for (k, v) in load_settings(args.out.config.as_deref())? {
        config.set(&k, &v)?;
    }
    let flags = [
        ("task", Some(args.task.clone())),
        ("region", args.region),
        ("k_range", args.k_range),
        ("repeats", args.repeats),
        ("widths", args.widths),
        ("mask", args.mask),
        ("seed", args.seed.map(|s| s.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            config.set(k, &v)?;
        }
    }
    let stem = format!("{}_{}-{}", args.kind.as_str(), config.task.first, config.task.second);
    execute_audit(&config, &args.data, &args.out.out_dir, &stem)
}

/// Mean of the chi distribution scaled by `sigma`.
fn chi_mean(n: usize, sigma: f64) -> f64 {
    let k = n as f64;
    sigma * std::f64::consts::SQRT_2 * (ln_gamma((k + 1.0) / 2.0) - ln_gamma(k / 2.0)).exp()
}

#[derive(Serialize)]
struct ConcentrationReport {
    seed: u64,
    samples: usize,
    bins: usize,
    panels: Vec<ConcentrationPanel>,
}

fn concentration(args: ConcentrationArgs) -> CliResult<()> {
    let dims: Vec<usize> = parse_values(&args.n_list)?
        .into_iter()
        .map(|v| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Failure::usage(format!("--n-list entries must be positive integers, got {v}")))
            }
        })
        .collect::<CliResult<_>>()?;
    let sigmas = parse_values(&args.sigmas)?;
    if sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(Failure::usage("--sigmas must be positive"));
    }
    if args.samples < 2 || args.bins == 0 {
        return Err(Failure::usage("--samples must be at least 2 and --bins positive"));
    }
    let panels = concentration_study(&dims, &sigmas, args.samples, args.bins, 0.0, args.seed)?;

    let mut summary = String::from("n,sigma,mean_norm,sd_norm,chi_mean,overlap\n");
    let mut hist = String::from("n,sigma,bin,lo,hi,count\n");
    for p in &panels {
        for (sigma, h) in p.sigmas.iter().zip(&p.histograms) {
            let _ = writeln!(summary, "{},{sigma},{},{},{},{}", p.dim, h.mean, h.sd, chi_mean(p.dim, *sigma), p.overlap);
            for (b, c) in h.counts.iter().enumerate() {
                let _ = writeln!(hist, "{},{sigma},{b},{},{},{c}", p.dim, h.edges[b], h.edges[b + 1]);
            }
        }
    }
    let mut out = OutputSet::new(&args.out, "concentration")?;
    let report = ConcentrationReport { seed: args.seed, samples: args.samples, bins: args.bins, panels };
    out.write(".json", serde_json::to_string_pretty(&report)?.as_bytes())?;
    out.write("_summary.csv", summary.as_bytes())?;
    out.write("_histograms.csv", hist.as_bytes())?;
    let config = serde_json::json!({
        "n_list": dims, "sigmas": sigmas, "samples": args.samples, "bins": args.bins, "seed": args.seed,
    });
    let manifest = out.finish(config, args.seed)?;
    for p in &report.panels {
        let means: Vec<String> = p.histograms.iter().map(|h| format!("{:.4}", h.mean)).collect();
        println!("n={:<6} mean norms [{}]  overlap {:.4}", p.dim, means.join(", "), p.overlap);
    }
    println!("wrote {}", manifest.display());
    Ok(())
}

fn convert(args: ConvertArgs) -> CliResult<()> {
    let open = |p: &Path| {
        std::fs::File::open(p).map_err(|e| Failure { code: failure::EXIT_DATA, message: format!("{}: {e}", p.display()) })
    };
    let data = convert_wide(open(&args.wide)?, open(&args.labels)?)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_spectra(&data, std::fs::File::create(&args.out)?)?;
    println!("wrote {} spectra x {} wavelengths to {}", data.n_rows(), data.n_cols(), args.out.display());
    if let Some(path) = &args.manifest {
        let check = check_manifest(&data, &DatasetManifest::load(path)?)?;
        for (class, count) in &check.observed {
            let expected = check.expected.get(class).map(|e| e.to_string()).unwrap_or_else(|| "-".into());
            println!("{class}: {count} rows (expected {expected})");
        }
        if !check.is_consistent() {
            println!("manifest mismatch: counts differ for {:?}, undeclared {:?}", check.mismatches, check.undeclared);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_mean_two_dimensions() {
        assert!((chi_mean(2, 1.0) - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
