use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use isotns::ansatz::{AnsatzSpec, Family};
use isotns::channels::{analytic_table, build_doubled_channel, spectrum, spectrum_export, ChannelTag};
use isotns::checks;
use isotns::experiments::{self, read_csv, write_csv, ExperimentConfig, Manifest, CSV_HEADER};
use isotns::{Error, Result};

#[derive(Parser)]
#[command(name = "isotns", version, about = "Gradient variances of Haar-random isometric tensor networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo variance scan; prints CSV unless `--csv` is given
    Sample(SampleArgs),
    /// Eigenvalues of an averaged doubled channel, as JSON
    Spectrum(SpectrumArgs),
    /// Decay-factor fits of the records in a CSV file
    Fit(FitArgs),
    /// Closed-form decay rates and variances
    Predict(PredictArgs),
    /// Per-sample invariant suite
    Selftest,
}

/// Every config key is also a flag of the same name and overrides the file.
#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    branching: Option<String>,
    #[arg(long)]
    chi: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    size: Option<String>,
    #[arg(long)]
    homogeneous: Option<String>,
    #[arg(long)]
    trotter: Option<String>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    positions: Option<String>,
    #[arg(long)]
    fit_min: Option<String>,
    #[arg(long)]
    fit_max: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    tensor_kind: Option<String>,
    #[arg(long)]
    chi_list: Option<String>,
    #[arg(long)]
    csv: Option<String>,
    #[arg(long)]
    json: Option<String>,
}

impl SampleArgs {
    fn overrides(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("family", &self.family),
            ("branching", &self.branching),
            ("chi", &self.chi),
            ("d", &self.d),
            ("size", &self.size),
            ("homogeneous", &self.homogeneous),
            ("trotter", &self.trotter),
            ("width", &self.width),
            ("samples", &self.samples),
            ("seed", &self.seed),
            ("positions", &self.positions),
            ("fit_min", &self.fit_min),
            ("fit_max", &self.fit_max),
            ("workers", &self.workers),
            ("tensor_kind", &self.tensor_kind),
            ("chi_list", &self.chi_list),
            ("csv", &self.csv),
            ("json", &self.json),
        ]
    }

    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let mut problems = Vec::new();
        for (k, v) in self.overrides() {
            if let Some(v) = v {
                if let Err(e) = cfg.set(k, v) {
                    problems.push(e);
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long, default_value = "mps")]
    family: String,
    #[arg(long, default_value_t = 2)]
    branching: usize,
    #[arg(long, default_value_t = 2)]
    chi: usize,
    /// Physical dimension (MPS only)
    #[arg(long)]
    d: Option<usize>,
    /// Channel tag; defaults to the family's average channel
    #[arg(long)]
    tag: Option<String>,
    #[arg(long, default_value_t = 6)]
    top: usize,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    csv: PathBuf,
    #[arg(long)]
    fit_min: Option<usize>,
    #[arg(long)]
    fit_max: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long, default_value = "2,3,4,6,8", value_delimiter = ',')]
    chi_list: Vec<usize>,
}

// a closed pipe ends the output quietly
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Serialization(e.to_string()))
}

fn sample(args: &SampleArgs) -> Result<()> {
    let cfg = args.config()?;
    let started = Instant::now();
    let mut manifest;
    if !cfg.chi_list.is_empty() {
        let (rows, records) = experiments::run_chi_scan(&cfg)?;
        for r in &rows {
            eprintln!(
                "chi={} factor={:.5} [{:.5}, {:.5}] predicted={:.5} tau1={:.6e}",
                r.chi, r.fit.factor, r.fit.ci_low, r.fit.ci_high, r.predicted, r.tau1.mean_var
            );
        }
        manifest = Manifest::new(&cfg, records, started);
        manifest.fits = rows.iter().map(|r| r.fit.clone()).collect();
        manifest.chi_scan = rows;
    } else {
        let records = experiments::run_scan(&cfg)?;
        manifest = Manifest::new(&cfg, records, started);
        if cfg.family != Family::Mps {
            match experiments::fit_decay(&manifest.records, cfg.effective_window()) {
                Ok(fit) => {
                    eprintln!("decay factor {:.5} [{:.5}, {:.5}] on {:?}, R² = {:.4}", fit.factor, fit.ci_low, fit.ci_high, fit.window, fit.r2);
                    manifest.fits.push(fit);
                }
                Err(e) => eprintln!("no decay fit: {e}"),
            }
        }
    }
    match &cfg.csv {
        Some(p) => write_csv(&manifest.records, p)?,
        None => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(std::io::stdout());
            let err = |e: csv::Error| Error::Serialization(e.to_string());
            w.write_record(CSV_HEADER.split(',')).map_err(err)?;
            for r in &manifest.records {
                w.serialize(r).map_err(err)?;
            }
            w.flush().map_err(|e| Error::Serialization(e.to_string()))?;
        }
    }
    if let Some(p) = &cfg.json {
        manifest.wall_time_s = started.elapsed().as_secs_f64();
        manifest.write(p)?;
    }
    Ok(())
}

fn spectrum_cmd(args: &SpectrumArgs) -> Result<()> {
    let family = Family::parse(&args.family)?;
    let spec = match family {
        Family::Mps => AnsatzSpec::mps(args.chi, args.d.unwrap_or(args.chi), 4),
        Family::Ttns => AnsatzSpec::ttns(args.branching, args.chi, 4),
        Family::Mera => AnsatzSpec::mera(args.branching, args.chi, 4),
    };
    spec.validate()?;
    let tag = match &args.tag {
        Some(t) => ChannelTag::parse(t)?,
        None => ChannelTag::for_spec(&spec)?,
    };
    let channel = build_doubled_channel(&spec, tag)?;
    let s = spectrum(&channel, args.top)?;
    let export = spectrum_export(&spec, &channel, &s, args.top);
    let text = to_json(&export)?;
    match &args.json {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| Error::Io { path: p.clone(), source: e })?,
        None => emit(&text),
    }
    Ok(())
}

fn fit(args: &FitArgs) -> Result<()> {
    let records = read_csv(&args.csv)?;
    let mut out = Vec::new();
    for (key, group) in experiments::group_records(&records) {
        let t = group.iter().map(|r| r.size).max().unwrap_or(0);
        let cfg = ExperimentConfig {
            size: t,
            fit_min: args.fit_min,
            fit_max: args.fit_max,
            ..Default::default()
        };
        let fit = experiments::fit_decay(&group, cfg.effective_window())?;
        emit(&format!(
            "{key}: factor {:.6} [{:.6}, {:.6}] window {:?} R² {:.4}",
            fit.factor, fit.ci_low, fit.ci_high, fit.window, fit.r2
        ));
        out.push(fit);
    }
    if out.is_empty() {
        return Err(Error::FitDomain("no records".into()));
    }
    Ok(())
}

fn predict(args: &PredictArgs) -> Result<()> {
    if args.chi_list.iter().any(|&c| c < 1) {
        return Err(Error::Validation(vec!["chi must be >= 1".into()]));
    }
    emit(&to_json(&analytic_table(&args.chi_list)?)?);
    let mps: Vec<_> = args.chi_list.iter().filter(|&&c| c >= 2).copied().collect();
    emit(&to_json(&experiments::predictions(Family::Mps, 1, &mps)?)?);
    Ok(())
}

fn selftest() -> Result<()> {
    let mut failed = 0;
    for c in checks::run_all()? {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        emit(&format!("{status} {}: worst {:.3e} (tolerance {:.0e})", c.name, c.worst, c.tolerance));
        failed += usize::from(!c.passed());
    }
    if failed > 0 {
        return Err(Error::Numerical {
            message: format!("{failed} self-test check(s) failed"),
            residual: f64::NAN,
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Sample(a) => sample(a),
        Command::Spectrum(a) => spectrum_cmd(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Selftest => selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
