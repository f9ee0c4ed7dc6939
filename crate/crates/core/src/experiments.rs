//! Monte Carlo gradient-variance scans, decay fits and their file formats.
//!
//! Sample `s` of a run uses the instance seeded by `mix_seed(master, s)`.
//! Samples are grouped into fixed chunks whose accumulators are merged in
//! chunk order, so results are bit-identical for any number of workers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ansatz::{sample_instance, AnsatzSpec, Family, TensorKind};
use crate::basis::build_interaction;
use crate::channels::{analytic_eta, predicted_mps_bulk_variance};
use crate::error::{Error, Result};
use crate::expectation::Hamiltonian;
use crate::gradient::{layer_values, site_values, HierarchicalSweeper, mps_sweep};
use crate::unitary::mix_seed;

pub const CHUNK: usize = 64;

/// Streaming mean and second central moment.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.m2 / (self.count - 1) as f64
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Runs `n` samples of `f` (one value per probe) and returns per-probe
/// accumulators.
pub fn monte_carlo<F>(n: usize, probes: usize, workers: usize, f: F) -> Result<Vec<Welford>>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let run = || -> Result<Vec<Vec<Welford>>> {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![Welford::default(); probes];
                for s in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    for (a, v) in acc.iter_mut().zip(f(s)?) {
                        a.push(v);
                    }
                }
                Ok(acc)
            })
            .collect()
    };
    let parts = if workers == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Configuration(format!("thread pool: {e}")))?
            .install(run)?
    };
    let mut total = vec![Welford::default(); probes];
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub family: Family,
    pub branching: usize,
    pub chi: usize,
    pub d: usize,
    /// `L` for MPS, `T` for hierarchical networks.
    pub size: usize,
    pub homogeneous: bool,
    pub trotter: usize,
    /// Interaction widths; empty selects the family default.
    pub widths: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    /// Sites or layers to report; empty means all.
    pub positions: Vec<usize>,
    pub fit_min: Option<usize>,
    pub fit_max: Option<usize>,
    pub workers: usize,
    /// Which MERA tensors a layer value averages.
    pub tensor_kind: Option<TensorKind>,
    pub chi_list: Vec<usize>,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            family: Family::Mps,
            branching: 2,
            chi: 2,
            d: 2,
            size: 21,
            homogeneous: false,
            trotter: 0,
            widths: vec![],
            samples: 0,
            seed: 1,
            positions: vec![],
            fit_min: None,
            fit_max: None,
            workers: 0,
            tensor_kind: None,
            chi_list: vec![],
            csv: None,
            json: None,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "family", "branching", "chi", "d", "size", "homogeneous", "trotter", "width", "samples", "seed", "positions", "fit_min",
    "fit_max", "workers", "tensor_kind", "chi_list", "csv", "json",
];

fn parse_list(key: &str, v: &str) -> std::result::Result<Vec<usize>, String> {
    if v.trim().is_empty() {
        return Ok(vec![]);
    }
    v.split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| format!("{key}: '{x}' is not a non-negative integer")))
        .collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Sets one key; the value syntax is the one of the config file.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        let int = |v: &str| v.parse::<usize>().map_err(|_| format!("{key}: '{v}' is not a non-negative integer"));
        let opt = |v: &str| if v.is_empty() || v == "auto" { Ok(None) } else { int(v).map(Some) };
        match key {
            "family" => self.family = Family::parse(v).map_err(|e| e.to_string())?,
            "branching" => self.branching = int(v)?,
            "chi" => self.chi = int(v)?,
            "d" => self.d = int(v)?,
            "size" => self.size = int(v)?,
            "homogeneous" => {
                self.homogeneous = match v {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(format!("homogeneous: '{v}' is not a boolean")),
                }
            }
            "trotter" => self.trotter = int(v)?,
            "width" => self.widths = parse_list(key, v)?,
            "samples" => self.samples = int(v)?,
            "seed" => self.seed = v.parse().map_err(|_| format!("seed: '{v}' is not a 64-bit unsigned integer"))?,
            "positions" => self.positions = parse_list(key, v)?,
            "fit_min" => self.fit_min = opt(v)?,
            "fit_max" => self.fit_max = opt(v)?,
            "workers" => self.workers = int(v)?,
            "tensor_kind" => {
                self.tensor_kind = match v {
                    "" | "auto" => None,
                    "isometry" => Some(TensorKind::Isometry),
                    "disentangler" => Some(TensorKind::Disentangler),
                    _ => return Err(format!("tensor_kind: '{v}' (auto, isometry, disentangler)")),
                }
            }
            "chi_list" => self.chi_list = parse_list(key, v)?,
            "csv" => self.csv = (!v.is_empty()).then(|| PathBuf::from(v)),
            "json" => self.json = (!v.is_empty()).then(|| PathBuf::from(v)),
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut problems = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                problems.push(format!("line {}: expected key = value", n + 1));
                continue;
            };
            if let Err(e) = cfg.set(k.trim(), v) {
                problems.push(format!("line {}: {e}", n + 1));
            }
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form; parsing it gives back the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |o: Option<usize>| o.map(|x| x.to_string()).unwrap_or_else(|| "auto".into());
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let kind = match self.tensor_kind {
            None => "auto",
            Some(TensorKind::Isometry) => "isometry",
            Some(TensorKind::Disentangler) => "disentangler",
            Some(TensorKind::Site) => "site",
        };
        let _ = writeln!(s, "family = {}", self.family.name());
        let _ = writeln!(s, "branching = {}", self.branching);
        let _ = writeln!(s, "chi = {}", self.chi);
        let _ = writeln!(s, "d = {}", self.d);
        let _ = writeln!(s, "size = {}", self.size);
        let _ = writeln!(s, "homogeneous = {}", self.homogeneous);
        let _ = writeln!(s, "trotter = {}", self.trotter);
        let _ = writeln!(s, "width = {}", join(&self.widths));
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "positions = {}", join(&self.positions));
        let _ = writeln!(s, "fit_min = {}", opt(self.fit_min));
        let _ = writeln!(s, "fit_max = {}", opt(self.fit_max));
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "tensor_kind = {kind}");
        let _ = writeln!(s, "chi_list = {}", join(&self.chi_list));
        let _ = writeln!(s, "csv = {}", path(&self.csv));
        let _ = writeln!(s, "json = {}", path(&self.json));
        s
    }

    /// SHA-256 of the canonical text without the worker count and output
    /// paths, which do not change results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 0;
        c.csv = None;
        c.json = None;
        let digest = Sha256::digest(c.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn spec(&self) -> AnsatzSpec {
        let spec = match self.family {
            Family::Mps => AnsatzSpec::mps(self.chi, self.d, self.size),
            Family::Ttns => AnsatzSpec::ttns(self.branching, self.chi, self.size),
            Family::Mera => AnsatzSpec::mera(self.branching, self.chi, self.size),
        };
        spec.with_homogeneous(self.homogeneous).with_trotter(self.trotter)
    }

    pub fn effective_samples(&self) -> usize {
        match (self.samples, self.family) {
            (0, Family::Mps) => 64000,
            (0, _) => 1000,
            (n, _) => n,
        }
    }

    pub fn effective_widths(&self) -> Vec<usize> {
        if !self.widths.is_empty() {
            return self.widths.clone();
        }
        match self.family {
            Family::Mps => vec![1, 2],
            _ => vec![self.spec().cone_width()],
        }
    }

    pub fn effective_kind(&self) -> TensorKind {
        match (self.family, self.tensor_kind) {
            (Family::Mps, _) => TensorKind::Site,
            (Family::Ttns, _) => TensorKind::Isometry,
            (Family::Mera, Some(k)) => k,
            (Family::Mera, None) => TensorKind::Disentangler,
        }
    }

    /// `[2, T−2]`, or `[max(1, T−4), T−2]` when that has fewer than 3 layers.
    pub fn effective_window(&self) -> (usize, usize) {
        let t = self.size;
        let hi = self.fit_max.unwrap_or(t.saturating_sub(2));
        let lo = self.fit_min.unwrap_or(if t >= 6 { 2 } else { t.saturating_sub(4).max(1) });
        (lo, hi)
    }

    pub fn effective_positions(&self) -> Vec<usize> {
        if self.positions.is_empty() {
            (1..=self.size).collect()
        } else {
            self.positions.clone()
        }
    }

    /// Every violation at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let spec = self.spec();
        if let Err(e) = spec.validate() {
            match e {
                Error::Validation(v) => problems.extend(v),
                other => problems.push(other.to_string()),
            }
        }
        if self.samples == 1 {
            problems.push("samples must be >= 2".into());
        }
        for &p in &self.positions {
            if p < 1 || p > self.size {
                problems.push(format!("position {p} outside 1..={}", self.size));
            }
        }
        if spec.is_hierarchical() {
            let (lo, hi) = self.effective_window();
            if lo < 1 || hi > self.size || lo > hi {
                problems.push(format!("fit window [{lo}, {hi}] not within [1, {}]", self.size));
            }
            if self.tensor_kind == Some(TensorKind::Disentangler) && self.family != Family::Mera {
                problems.push("tensor_kind = disentangler needs a mera".into());
            }
        }
        for &w in &self.widths {
            let max = if spec.is_hierarchical() { spec.cone_width() } else { self.size };
            if w < 1 || w > max {
                problems.push(format!("interaction width {w} outside 1..={max}"));
            }
        }
        for &c in &self.chi_list {
            if c < 2 {
                problems.push(format!("chi_list entry {c} must be >= 2"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn family_label(&self) -> String {
        let b = match self.branching {
            2 => "binary",
            3 => "ternary",
            _ => "b",
        };
        match self.family {
            Family::Mps => "mps".into(),
            f => format!("{}-{b}", f.name()),
        }
    }
}

/// One row of a scan: CSV columns in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRecord {
    pub family: String,
    pub chi: usize,
    pub d: usize,
    pub size: usize,
    pub tau_or_site: usize,
    pub homogeneous: bool,
    pub trotter_t: usize,
    pub n_samples: u64,
    pub mean_var: f64,
    pub stderr: f64,
    pub seed: u64,
}

pub const CSV_HEADER: &str = "family,chi,d,size,tau_or_site,homogeneous,trotter_t,n_samples,mean_var,stderr,seed";

fn record(cfg: &ExperimentConfig, family: String, pos: usize, w: &Welford) -> VarianceRecord {
    VarianceRecord {
        family,
        chi: cfg.chi,
        d: cfg.spec().d,
        size: cfg.size,
        tau_or_site: pos,
        homogeneous: cfg.homogeneous,
        trotter_t: cfg.trotter,
        n_samples: w.count,
        mean_var: w.mean,
        stderr: w.stderr(),
        seed: cfg.seed,
    }
}

fn hamiltonian(spec: &AnsatzSpec, width: usize) -> Result<Hamiltonian> {
    let site_dim = if spec.is_hierarchical() { spec.chi } else { spec.d };
    Hamiltonian::translation_invariant(spec, &build_interaction(site_dim, width)?)
}

/// Per-site variances for every configured interaction width. Records of
/// width `n` carry the family label `mps-h{n}`.
pub fn run_mps_scan(cfg: &ExperimentConfig) -> Result<Vec<VarianceRecord>> {
    cfg.validate()?;
    if cfg.family != Family::Mps {
        return Err(Error::Validation(vec![format!("an mps scan needs family = mps, got {}", cfg.family.name())]));
    }
    let spec = cfg.spec();
    let widths = cfg.effective_widths();
    let hams: Vec<Hamiltonian> = widths.iter().map(|&w| hamiltonian(&spec, w)).collect::<Result<_>>()?;
    let sites = cfg.effective_positions();
    let acc = monte_carlo(cfg.effective_samples(), sites.len() * hams.len(), cfg.workers, |s| {
        let inst = sample_instance(&spec, mix_seed(cfg.seed, s as u64))?;
        let mut out = Vec::with_capacity(sites.len() * hams.len());
        for ham in &hams {
            let values = site_values(&inst, &mps_sweep(&spec, &inst, ham)?);
            out.extend(sites.iter().map(|&j| values[j - 1]));
        }
        Ok(out)
    })?;
    let mut records = Vec::new();
    for (h, &w) in widths.iter().enumerate() {
        for (k, &j) in sites.iter().enumerate() {
            records.push(record(cfg, format!("mps-h{w}"), j, &acc[h * sites.len() + k]));
        }
    }
    Ok(records)
}

/// Per-layer variances, averaged over the tensors of the configured kind in
/// each layer.
pub fn run_layer_scan(cfg: &ExperimentConfig) -> Result<Vec<VarianceRecord>> {
    cfg.validate()?;
    if cfg.family == Family::Mps {
        return Err(Error::Validation(vec!["a layer scan needs family = ttns or mera".into()]));
    }
    let spec = cfg.spec();
    let widths = cfg.effective_widths();
    if widths.len() != 1 {
        return Err(Error::Validation(vec!["a layer scan takes a single interaction width".into()]));
    }
    let ham = hamiltonian(&spec, widths[0])?;
    let sweeper = HierarchicalSweeper::new(&spec)?;
    let kind = cfg.effective_kind();
    let layers = cfg.effective_positions();
    let acc = monte_carlo(cfg.effective_samples(), layers.len(), cfg.workers, |s| {
        let inst = sample_instance(&spec, mix_seed(cfg.seed, s as u64))?;
        let values = layer_values(&inst, &sweeper.sweep(&inst, &ham)?, kind);
        Ok(layers.iter().map(|&t| values[t - 1]).collect())
    })?;
    Ok(layers.iter().zip(&acc).map(|(&t, w)| record(cfg, cfg.family_label(), t, w)).collect())
}

/// Dispatches on the family.
pub fn run_scan(cfg: &ExperimentConfig) -> Result<Vec<VarianceRecord>> {
    match cfg.family {
        Family::Mps => run_mps_scan(cfg),
        _ => run_layer_scan(cfg),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `exp(slope)` of `ln Var` against `τ`.
    pub factor: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub window: (usize, usize),
    pub r2: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

// two-sided 97.5% Student quantiles for 1..=10 degrees of freedom
const T975: [f64; 10] = [12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228];

/// Weighted least squares of `ln mean` on `τ` over the window. Weights are
/// `(mean/stderr)²`; without standard errors the fit is unweighted and the
/// interval comes from the residuals.
pub fn fit_decay(records: &[VarianceRecord], window: (usize, usize)) -> Result<DecayFit> {
    let (lo, hi) = window;
    let pts: Vec<&VarianceRecord> = records.iter().filter(|r| r.tau_or_site >= lo && r.tau_or_site <= hi).collect();
    if pts.len() < 3 {
        return Err(Error::FitDomain(format!("window [{lo}, {hi}] holds {} points, need 3", pts.len())));
    }
    if let Some(r) = pts.iter().find(|r| !(r.mean_var > 0.0)) {
        return Err(Error::FitDomain(format!("nonpositive mean {} at {}", r.mean_var, r.tau_or_site)));
    }
    let x: Vec<f64> = pts.iter().map(|r| r.tau_or_site as f64).collect();
    let y: Vec<f64> = pts.iter().map(|r| r.mean_var.ln()).collect();
    let weighted = pts.iter().all(|r| r.stderr > 0.0 && r.stderr.is_finite());
    let w: Vec<f64> = if weighted {
        pts.iter().map(|r| (r.mean_var / r.stderr).powi(2)).collect()
    } else {
        vec![1.0; pts.len()]
    };
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    let sxy: f64 = (0..x.len()).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).sum();
    if sxx <= 0.0 {
        return Err(Error::FitDomain("all points at the same position".into()));
    }
    let slope = sxy / sxx;
    let rss: f64 = (0..x.len()).map(|i| w[i] * (y[i] - ym - slope * (x[i] - xm)).powi(2)).sum();
    let tss: f64 = w.iter().zip(&y).map(|(w, y)| w * (y - ym).powi(2)).sum();
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let (se, q) = if weighted {
        ((1.0 / sxx).sqrt(), 1.959964)
    } else {
        let dof = x.len() - 2;
        ((rss / dof as f64 / sxx).sqrt(), T975.get(dof - 1).copied().unwrap_or(1.959964))
    };
    Ok(DecayFit {
        factor: slope.exp(),
        ci_low: (slope - q * se).exp(),
        ci_high: (slope + q * se).exp(),
        window,
        r2,
        slope,
        slope_stderr: se,
        points: x.len(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChiScanRow {
    pub chi: usize,
    pub fit: DecayFit,
    pub tau1: VarianceRecord,
    pub predicted: f64,
}

/// Decay factor and `τ = 1` variance for every `χ` of `chi_list` (`d = χ`).
pub fn run_chi_scan(cfg: &ExperimentConfig) -> Result<(Vec<ChiScanRow>, Vec<VarianceRecord>)> {
    cfg.validate()?;
    if cfg.family == Family::Mps || cfg.chi_list.is_empty() {
        return Err(Error::Validation(vec!["a chi scan needs a hierarchical family and a non-empty chi_list".into()]));
    }
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for &chi in &cfg.chi_list {
        let mut c = cfg.clone();
        c.chi = chi;
        c.d = chi;
        c.positions = vec![];
        let records = run_layer_scan(&c)?;
        let fit = fit_decay(&records, c.effective_window())?;
        rows.push(ChiScanRow {
            chi,
            fit,
            tau1: records[0].clone(),
            predicted: cfg.branching as f64 * analytic_eta(cfg.family, cfg.branching, chi, chi)?,
        });
        all.extend(records);
    }
    Ok((rows, all))
}

pub fn write_csv(records: &[VarianceRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(CSV_HEADER.split(','))
        .map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<VarianceRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?
        .iter()
        .map(String::from)
        .collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Serialization(format!("{}: unexpected header '{}'", path.display(), header.join(","))));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Serialization(format!("{}: {e}", path.display()))))
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub samples: usize,
    pub workers: usize,
    pub wall_time_s: f64,
    pub records: Vec<VarianceRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fits: Vec<DecayFit>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chi_scan: Vec<ChiScanRow>,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig, records: Vec<VarianceRecord>, started: Instant) -> Self {
        Manifest {
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.to_text(),
            config_hash: cfg.hash(),
            master_seed: cfg.seed,
            samples: cfg.effective_samples(),
            workers: if cfg.workers == 0 { rayon::current_num_threads() } else { cfg.workers },
            wall_time_s: started.elapsed().as_secs_f64(),
            records,
            fits: vec![],
            chi_scan: vec![],
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
    }
}

/// Groups records by everything except the position, for fitting.
pub fn group_records(records: &[VarianceRecord]) -> BTreeMap<String, Vec<VarianceRecord>> {
    let mut out: BTreeMap<String, Vec<VarianceRecord>> = BTreeMap::new();
    for r in records {
        let key = format!(
            "{} chi={} d={} size={} homogeneous={} trotter={} seed={}",
            r.family, r.chi, r.d, r.size, r.homogeneous, r.trotter_t, r.seed
        );
        out.entry(key).or_default().push(r.clone());
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub chi: usize,
    pub d: usize,
    pub eta: f64,
    pub b_eta: f64,
    /// Bulk MPS variance for `Tr h² = 1`.
    pub mps_bulk: Option<f64>,
}

/// Analytic predictions for one network family at `d = χ`.
pub fn predictions(family: Family, branching: usize, chis: &[usize]) -> Result<Vec<Prediction>> {
    let b = if family == Family::Mps { 1 } else { branching };
    chis.iter()
        .map(|&chi| {
            let eta = analytic_eta(family, b, chi, chi)?;
            Ok(Prediction {
                chi,
                d: chi,
                eta,
                b_eta: b as f64 * eta,
                mps_bulk: if family == Family::Mps && chi >= 2 { Some(predicted_mps_bulk_variance(chi, chi, 1.0)?) } else { None },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(factor: f64, c: f64, taus: std::ops::RangeInclusive<usize>, stderr: f64) -> Vec<VarianceRecord> {
        taus.map(|t| VarianceRecord {
            family: "mera-binary".into(),
            chi: 2,
            d: 2,
            size: 8,
            tau_or_site: t,
            homogeneous: false,
            trotter_t: 0,
            n_samples: 10,
            mean_var: c * factor.powi(t as i32),
            stderr,
            seed: 1,
        })
        .collect()
    }

    #[test]
    fn exact_log_linear_fit() {
        let fit = fit_decay(&synthetic(0.5184, 3.0, 1..=8, 0.0), (2, 6)).unwrap();
        assert!((fit.factor - 0.5184).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert_eq!(fit.points, 5);
        let weighted = fit_decay(&synthetic(0.8, 1.0, 1..=8, 1e-3), (2, 6)).unwrap();
        assert!((weighted.factor - 0.8).abs() < 1e-12);
        assert!(weighted.ci_low < 0.8 && weighted.ci_high > 0.8);
    }

    #[test]
    fn fit_domain_errors() {
        assert!(matches!(fit_decay(&synthetic(0.5, 1.0, 1..=8, 0.0), (2, 3)), Err(Error::FitDomain(_))));
        let mut r = synthetic(0.5, 1.0, 1..=8, 0.0);
        r[3].mean_var = 0.0;
        assert!(matches!(fit_decay(&r, (2, 6)), Err(Error::FitDomain(_))));
    }

    #[test]
    fn welford_merge_matches_direct() {
        let xs: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut direct = Welford::default();
        xs.iter().for_each(|&x| direct.push(x));
        let mut merged = Welford::default();
        for chunk in xs.chunks(33) {
            let mut w = Welford::default();
            chunk.iter().for_each(|&x| w.push(x));
            merged.merge(&w);
        }
        assert_eq!(merged.count, direct.count);
        assert!((merged.mean - direct.mean).abs() < 1e-12);
        assert!((merged.m2 - direct.m2).abs() < 1e-9);
    }

    #[test]
    fn config_roundtrip_and_errors() {
        let cfg = ExperimentConfig::parse("family = mera\n# comment\nchi=2\nsize = 6 # layers\nfit_min = 2\nwidth = 3\n").unwrap();
        assert_eq!(cfg.family, Family::Mera);
        assert_eq!(cfg.size, 6);
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
        let Err(Error::Validation(v)) = ExperimentConfig::parse("colour = red\nchi = two\nnonsense\n") else {
            panic!("expected a validation error")
        };
        assert_eq!(v.len(), 3);
        let mut bad = cfg.clone();
        bad.samples = 1;
        bad.positions = vec![9];
        bad.fit_max = Some(9);
        let Err(Error::Validation(v)) = bad.validate() else { panic!() };
        assert_eq!(v.len(), 3, "{v:?}");
        let mut other = cfg.clone();
        other.workers = 7;
        assert_eq!(other.hash(), cfg.hash());
        other.seed = 2;
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn window_defaults() {
        let mut cfg = ExperimentConfig {
            family: Family::Mera,
            size: 8,
            ..Default::default()
        };
        assert_eq!(cfg.effective_window(), (2, 6));
        cfg.size = 5;
        assert_eq!(cfg.effective_window(), (1, 3));
    }

    #[test]
    fn smoke_scan_is_worker_independent() {
        let mut cfg = ExperimentConfig {
            family: Family::Mps,
            size: 6,
            samples: 130,
            ..Default::default()
        };
        cfg.workers = 1;
        let a = run_mps_scan(&cfg).unwrap();
        cfg.workers = 3;
        let b = run_mps_scan(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        cfg.samples = 2;
        let two = run_mps_scan(&cfg).unwrap();
        assert!(two.iter().all(|r| r.n_samples == 2 && r.stderr.is_finite()));
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{CSV_HEADER}\n"));
        let recs = synthetic(0.3, 1.7, 1..=4, 0.01);
        write_csv(&recs, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), recs);
        assert!(matches!(write_csv(&recs, &dir.path().join("missing/r.csv")), Err(Error::Io { .. })));
    }
}
