//! Command-line front end: one subcommand per analysis plus `report`.
//!
//! Every subcommand renders its artifacts in memory and writes them only
//! once the computation succeeded, so a failure leaves no partial output.
//! Each step is recorded in `manifest.json` in the output directory with
//! its parameters, seeds and SHA-256 checksums of inputs and outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::concentration::{self, Alternative, FitReport, LrSummary};
use crate::error::{Error, Result};
use crate::independence::{hoeffding_report, PairedSample};
use crate::ingest::{self, EventFilter, ParseOptions};
use crate::rankdyn;
use crate::rhythms::{self, RhythmOptions, TimeSeries};
use crate::synth::{ScenarioOutput, ScenarioSpec, RNG_ALGORITHM};
use crate::tessellate::{self, RegionSeriesSet};

pub const MANIFEST: &str = "manifest.json";

/// Artifacts `report` looks for, in order.
pub const REPORT_INPUTS: [&str; 5] = [
    "fit.json",
    "entropy.json",
    "rhythms.json",
    "composed.json",
    "independence.json",
];

#[derive(Debug, Parser)]
#[command(
    name = "crimescope",
    version,
    about = "Spatial concentration and temporal rhythms of point events"
)]
pub struct Cli {
    /// Worker threads for parallel steps (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equal-population regions, per-region counts and weekly series.
    Tessellate(TessellateArgs),
    /// Lorenz curve, Gini and discrete power-law fit of region counts.
    Concentrate(ConcentrateArgs),
    /// Weekly rank turnover entropy per rank position.
    Ranks(RanksArgs),
    /// Wavelet spectrum and band significance of one series.
    Rhythms(RhythmsArgs),
    /// Composed band power and significant durations across regions.
    Composed(ComposedArgs),
    /// Hoeffding's test of independence between paired city values.
    Independence(IndependenceArgs),
    /// Generate a synthetic dataset from a scenario file.
    Simulate(SimulateArgs),
    /// Summarize the artifacts in an output directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TessellateArgs {
    /// Events CSV `timestamp,lon,lat,category`.
    #[arg(long)]
    pub events: PathBuf,
    /// Population CSV `lon,lat,population`.
    #[arg(long)]
    pub population: PathBuf,
    /// Residents per region.
    #[arg(long)]
    pub target_pop: f64,
    /// Keep only events of this category.
    #[arg(long)]
    pub category: Option<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ConcentrateArgs {
    /// Counts CSV `region_id,count`.
    #[arg(long, conflicts_with = "series", required_unless_present = "series")]
    pub counts: Option<PathBuf>,
    /// Region series CSV; counts are the rounded region totals.
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// Significance level of the likelihood-ratio tests.
    #[arg(long, default_value_t = 0.05)]
    pub alpha_level: f64,
    /// Goodness-of-fit bootstrap replicates; 0 skips the test.
    #[arg(long, default_value_t = 0)]
    pub boot: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct RanksArgs {
    /// Region series CSV.
    #[arg(long)]
    pub series: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct BandArgs {
    /// Band of Fourier periods in years, `lo:hi`.
    #[arg(long, default_value = "0.8:1.1", value_parser = parse_band)]
    pub band: (f64, f64),
    /// Significance level of the red-noise tests.
    #[arg(long, default_value_t = 0.05)]
    pub alpha_level: f64,
}

#[derive(Debug, Args)]
pub struct RhythmsArgs {
    /// Series CSV `week_start,value`, or a region series CSV whose `city`
    /// column is analyzed.
    #[arg(long)]
    pub series: PathBuf,
    #[command(flatten)]
    pub band: BandArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ComposedArgs {
    /// Region series CSV.
    #[arg(long)]
    pub series: PathBuf,
    #[command(flatten)]
    pub band: BandArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct IndependenceArgs {
    /// Pairs CSV `label,x,y`.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Permutations (at least 999).
    #[arg(long, default_value_t = 999)]
    pub perm: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha_level: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON `{seed, kind, parameters}`.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub out: OutArgs,
}

fn parse_band(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|_| format!("bad lower edge `{lo}`"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|_| format!("bad upper edge `{hi}`"))?;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(format!("need 0 < lo < hi, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Cli(msg.into())
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(usage(format!(
            "--alpha-level must be in (0, 1), got {alpha}"
        )))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s.into_bytes()
}

/// Render a CSV artifact with a writer function.
fn render<E>(f: impl FnOnce(&mut Vec<u8>) -> std::result::Result<(), E>) -> Result<Vec<u8>>
where
    Error: From<E>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// One subcommand's record: what it read, how it was configured, what it
/// wrote.
struct Step {
    command: &'static str,
    out: PathBuf,
    parameters: Value,
    inputs: Vec<(String, String)>,
    outputs: Vec<(String, Vec<u8>)>,
}

impl Step {
    fn new(command: &'static str, out: &Path, parameters: Value) -> Self {
        Self {
            command,
            out: out.to_path_buf(),
            parameters,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Reads an input and records its checksum. Paths inside the output
    /// directory are recorded relative to it.
    fn input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = read_bytes(path)?;
        let shown = match (path.parent(), path.file_name()) {
            (Some(dir), Some(name)) if same_dir(dir, &self.out) => {
                name.to_string_lossy().into_owned()
            }
            _ => path.display().to_string(),
        };
        self.inputs.push((shown, sha256_hex(&bytes)));
        Ok(bytes)
    }

    fn output(&mut self, name: &str, bytes: Vec<u8>) {
        self.outputs.push((name.to_string(), bytes));
    }

    /// Writes every output, then the manifest. On failure, removes what
    /// this step wrote.
    fn commit(self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(io_err(&self.out))?;
        let mut written: Vec<PathBuf> = Vec::new();
        let result = (|| {
            for (name, bytes) in &self.outputs {
                let path = self.out.join(name);
                fs::write(&path, bytes).map_err(io_err(&path))?;
                written.push(path);
            }
            self.write_manifest()
        })();
        if result.is_err() {
            for path in written {
                let _ = fs::remove_file(path);
            }
        }
        result
    }

    fn write_manifest(&self) -> Result<()> {
        let path = self.out.join(MANIFEST);
        let mut manifest: Value = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or(Value::Null),
            Err(_) => Value::Null,
        };
        if !manifest.is_object() {
            manifest = json!({ "tool": "crimescope", "steps": [] });
        }
        let files = |list: &[(String, String)]| -> Vec<Value> {
            list.iter()
                .map(|(p, h)| json!({ "path": p, "sha256": h }))
                .collect()
        };
        let outputs: Vec<(String, String)> = self
            .outputs
            .iter()
            .map(|(n, b)| (n.clone(), sha256_hex(b)))
            .collect();
        let entry = json!({
            "command": self.command,
            "created_at": Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
            "version": env!("CARGO_PKG_VERSION"),
            "rng": RNG_ALGORITHM,
            "parameters": self.parameters,
            "inputs": files(&self.inputs),
            "outputs": files(&outputs),
        });
        let steps = manifest["steps"]
            .as_array_mut()
            .map(std::mem::take)
            .unwrap_or_default();
        let mut steps: Vec<Value> = steps
            .into_iter()
            .filter(|s| s["command"] != self.command)
            .collect();
        steps.push(entry);
        manifest["tool"] = json!("crimescope");
        manifest["steps"] = Value::Array(steps);
        fs::write(&path, to_json(&manifest)).map_err(io_err(&path))
    }
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn read_region_series(bytes: &[u8]) -> Result<RegionSeriesSet<f64>> {
    Ok(RegionSeriesSet::read_csv(bytes)?)
}

fn tessellate_cmd(a: &TessellateArgs) -> Result<()> {
    if !(a.target_pop > 0.0 && a.target_pop.is_finite()) {
        return Err(usage(format!(
            "--target-pop must be positive, got {}",
            a.target_pop
        )));
    }
    let mut step = Step::new(
        "tessellate",
        &a.out.out,
        json!({ "target_pop": a.target_pop, "category": a.category }),
    );
    let events_bytes = step.input(&a.events)?;
    let population_bytes = step.input(&a.population)?;
    let parsed = ingest::parse_events_from_reader(
        events_bytes.as_slice(),
        &a.events.display().to_string(),
        &ParseOptions::default(),
    )?;
    let table = ingest::filter_events(
        &parsed.table,
        &EventFilter {
            category: a.category.clone(),
            ..EventFilter::default()
        },
    );
    let cells = ingest::parse_population_from_reader(population_bytes.as_slice())?;
    let tess = tessellate::build_tessellation(&cells, a.target_pop)?;
    let counts = tessellate::assign_events(&table, &tess)?;
    let first = table
        .records
        .first()
        .ok_or(tessellate::TessellateError::SpanTooShort { weeks: 0 })?;
    let series: RegionSeriesSet<f64> =
        tessellate::build_region_series(&table, &tess, first.timestamp.date_naive(), None)?;

    step.output("regions.csv", render(|b| tess.write_csv(b))?);
    step.output(
        "counts.csv",
        render(|b| concentration::write_counts(&counts.counts, b))?,
    );
    step.output("region_series.csv", render(|b| series.write_csv(b))?);
    step.output(
        "events.rejects.csv",
        render(|b| ingest::write_rejects(&parsed.rejects, b))?,
    );
    step.output(
        "tessellation.json",
        to_json(&json!({
            "regions": tess.len(),
            "target_population": tess.target_population,
            "total_population": tess.total_population,
            "population_spread": tess.population_spread(),
            "events": table.len(),
            "events_outside": counts.outside,
            "rejected_rows": parsed.rejects.len(),
            "weeks": series.n_weeks(),
            "warnings": tess.warnings,
        })),
    );
    step.commit()
}

fn concentrate_cmd(a: &ConcentrateArgs) -> Result<()> {
    check_level(a.alpha_level)?;
    if a.boot != 0 && a.boot < concentration::MIN_BOOTSTRAP {
        return Err(usage(format!(
            "--boot must be 0 or at least {}, got {}",
            concentration::MIN_BOOTSTRAP,
            a.boot
        )));
    }
    let mut step = Step::new(
        "concentrate",
        &a.out.out,
        json!({ "alpha_level": a.alpha_level, "boot": a.boot, "seed": a.seed }),
    );
    let counts: Vec<u64> = match (&a.counts, &a.series) {
        (Some(path), _) => concentration::read_counts(step.input(path)?.as_slice())?,
        (None, Some(path)) => read_region_series(&step.input(path)?)?
            .region_totals()
            .iter()
            .map(|&t| t.max(0.0).round() as u64)
            .collect(),
        (None, None) => return Err(usage("one of --counts or --series is required")),
    };
    let curve = concentration::lorenz::<f64>(&counts)?;
    let fit = concentration::fit_power_law(&counts)?;
    let lr = |alt| {
        concentration::likelihood_ratio(&counts, &fit, alt, a.alpha_level)
            .ok()
            .map(|r| LrSummary::from(&r))
    };
    let gof_p = if a.boot > 0 {
        Some(concentration::gof_bootstrap(&counts, &fit, a.boot, a.seed)?)
    } else {
        None
    };
    let report = FitReport {
        alpha: fit.alpha,
        xmin: fit.xmin,
        ks: fit.ks_statistic,
        n_tail: fit.n_tail,
        gini: curve.gini,
        lr_exponential: lr(Alternative::Exponential),
        lr_lognormal: lr(Alternative::Lognormal),
        gof_p,
    };
    step.output("fit.json", to_json(&report));
    step.output(
        "lorenz.csv",
        render(|b| concentration::write_lorenz(&curve, b))?,
    );
    step.commit()
}

fn ranks_cmd(a: &RanksArgs) -> Result<()> {
    let mut step = Step::new("ranks", &a.out.out, json!({}));
    let set = read_region_series(&step.input(&a.series)?)?;
    let m = rankdyn::weekly_ranks(&set)?;
    let profile = rankdyn::position_entropy::<f64>(&m)?;
    let shape = rankdyn::entropy_vs_rank_shape(&profile).ok();
    step.output(
        "entropy.csv",
        render(|b| rankdyn::write_entropy_csv(&profile, b))?,
    );
    step.output(
        "entropy.json",
        to_json(&json!({
            "mean_h": profile.mean_h,
            "h_top10": profile.h.iter().take(10).collect::<Vec<_>>(),
            "spearman_top": shape.as_ref().map(|s| s.spearman),
            "top_positions": shape.as_ref().map(|s| s.k),
            "regions": m.n_regions(),
            "weeks": m.n_weeks(),
        })),
    );
    step.commit()
}

fn band_options(b: &BandArgs) -> Result<RhythmOptions> {
    check_level(b.alpha_level)?;
    Ok(RhythmOptions {
        band: b.band,
        alpha: b.alpha_level,
    })
}

fn read_any_series(bytes: &[u8]) -> Result<TimeSeries<f64>> {
    let first_line = bytes.split(|&c| c == b'\n').next().unwrap_or_default();
    let header = String::from_utf8_lossy(first_line);
    if header.trim_end() == "week_start,value" {
        return Ok(TimeSeries::read_csv(bytes)?);
    }
    let set = read_region_series(bytes)?;
    let t0 = *set
        .week_starts
        .first()
        .ok_or_else(|| usage("series file has no rows"))?;
    Ok(TimeSeries::weekly_with_gaps(&set.city, t0)?)
}

fn rhythms_cmd(a: &RhythmsArgs) -> Result<()> {
    let opts = band_options(&a.band)?;
    let mut step = Step::new(
        "rhythms",
        &a.out.out,
        json!({ "band": [opts.band.0, opts.band.1], "alpha_level": opts.alpha }),
    );
    let y = read_any_series(&step.input(&a.series)?)?;
    let analysis = rhythms::analyze_series(&y, &opts)?;
    let recon = rhythms::reconstruct_band(&analysis.field, opts.band)?;
    let peaks: Vec<f64> = (0..analysis.spectrum.power.len())
        .filter(|&j| analysis.spectrum.is_peak(j))
        .map(|j| analysis.spectrum.periods[j])
        .collect();
    step.output("spectrum.csv", render(|b| analysis.spectrum.write_csv(b))?);
    step.output("band.csv", render(|b| analysis.band.write_csv(b))?);
    step.output("reconstruction.csv", render(|b| recon.write_csv(b))?);
    step.output(
        "rhythms.json",
        to_json(&json!({
            "n": y.len(),
            "band": [opts.band.0, opts.band.1],
            "alpha_level": opts.alpha,
            "ar1": analysis.field.null.a,
            "dominant_period_years": analysis.spectrum.dominant_period(),
            "peak_periods_years": peaks,
            "band_peak": analysis.spectrum.significant_in(opts.band.0, opts.band.1),
            "band_threshold": analysis.band.threshold,
            "band_significant_fraction": analysis.band.significant_fraction(),
        })),
    );
    step.commit()
}

fn composed_cmd(a: &ComposedArgs) -> Result<()> {
    let opts = band_options(&a.band)?;
    let mut step = Step::new(
        "composed",
        &a.out.out,
        json!({ "band": [opts.band.0, opts.band.1], "alpha_level": opts.alpha }),
    );
    let set = read_region_series(&step.input(&a.series)?)?;
    let composed = rhythms::composed_power(&set, &opts)?;
    let runs = rhythms::significant_durations(&composed.masks);
    let interior: Vec<f64> = (0..composed.c_b.len())
        .filter(|&t| composed.regions_valid[t] > 0)
        .map(|t| composed.c_b[t] as f64)
        .collect();
    let c_b_mean = if interior.is_empty() {
        None
    } else {
        Some(interior.iter().sum::<f64>() / interior.len() as f64)
    };
    step.output("composed.csv", render(|b| composed.write_csv(b))?);
    step.output(
        "durations.csv",
        render(|b| rhythms::write_durations_csv(&runs, &composed.week_starts, b))?,
    );
    let rejected: Vec<Value> = composed
        .rejected
        .iter()
        .map(|(id, why)| json!({ "region_id": id, "reason": why }))
        .collect();
    step.output(
        "composed.json",
        to_json(&json!({
            "band": [opts.band.0, opts.band.1],
            "alpha_level": opts.alpha,
            "regions": set.n_regions(),
            "regions_analyzed": set.n_regions() - composed.rejected.len(),
            "rejected": rejected,
            "weeks": set.n_weeks(),
            "c_b_mean": c_b_mean,
            "c_b_cv": composed.interior_cv(),
            "runs": runs.len(),
            "median_dt": rhythms::median_duration(&runs),
        })),
    );
    step.commit()
}

fn independence_cmd(a: &IndependenceArgs) -> Result<()> {
    check_level(a.alpha_level)?;
    if a.perm < crate::independence::MIN_PERMUTATIONS {
        return Err(usage(format!(
            "--perm must be at least {}, got {}",
            crate::independence::MIN_PERMUTATIONS,
            a.perm
        )));
    }
    let mut step = Step::new(
        "independence",
        &a.out.out,
        json!({ "perm": a.perm, "seed": a.seed, "alpha_level": a.alpha_level }),
    );
    let sample = PairedSample::<f64>::read_csv(step.input(&a.pairs)?.as_slice())?;
    let result = hoeffding_report(&sample, a.perm, a.seed, a.alpha_level)?;
    step.output("independence.json", to_json(&result));
    step.commit()
}

fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let mut spec = ScenarioSpec::from_path(&a.scenario)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let mut step = Step::new(
        "simulate",
        &a.out.out,
        serde_json::to_value(&spec).expect("scenario serializes"),
    );
    step.input(&a.scenario)?;
    let data = match spec.generate()? {
        ScenarioOutput::Counts(c) => (
            "counts.csv",
            render(|b| concentration::write_counts(&c, b))?,
        ),
        ScenarioOutput::Series(s) => ("series.csv", render(|b| s.write_csv(b))?),
        ScenarioOutput::City(set) => ("region_series.csv", render(|b| set.write_csv(b))?),
    };
    step.output("scenario.json", to_json(&spec));
    step.output(data.0, data.1);
    step.commit()
}

fn report_cmd(a: &ReportArgs) -> Result<()> {
    let dir = &a.out.out;
    let mut step = Step::new("report", dir, json!({}));
    let mut found: BTreeMap<&str, Value> = BTreeMap::new();
    let mut missing = Vec::new();
    for name in REPORT_INPUTS {
        let path = dir.join(name);
        if path.is_file() {
            let bytes = step.input(&path)?;
            let v: Value = serde_json::from_slice(&bytes)
                .map_err(|e| usage(format!("{}: not valid JSON: {e}", path.display())))?;
            found.insert(name, v);
        } else {
            missing.push(name);
        }
    }
    if found.is_empty() {
        return Err(usage(format!(
            "no artifacts in {}; missing {}",
            dir.display(),
            missing.join(", ")
        )));
    }
    let get = |file: &str, key: &str| found.get(file).map_or(Value::Null, |v| v[key].clone());
    let report = json!({
        "gini": get("fit.json", "gini"),
        "alpha": get("fit.json", "alpha"),
        "xmin": get("fit.json", "xmin"),
        "gof_p": get("fit.json", "gof_p"),
        "lr_exponential": get("fit.json", "lr_exponential"),
        "lr_lognormal": get("fit.json", "lr_lognormal"),
        "mean_h": get("entropy.json", "mean_h"),
        "h_top10": get("entropy.json", "h_top10"),
        "spearman_top": get("entropy.json", "spearman_top"),
        "dominant_period_years": get("rhythms.json", "dominant_period_years"),
        "band_peak": get("rhythms.json", "band_peak"),
        "band_significant_fraction": get("rhythms.json", "band_significant_fraction"),
        "c_b_mean": get("composed.json", "c_b_mean"),
        "c_b_cv": get("composed.json", "c_b_cv"),
        "median_dt": get("composed.json", "median_dt"),
        "hoeffding_d": get("independence.json", "D"),
        "hoeffding_p": get("independence.json", "p_value"),
        "sources": found.keys().collect::<Vec<_>>(),
        "missing": missing,
    });
    step.output("report.json", to_json(&report));
    step.commit()
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match &cli.command {
        Command::Tessellate(a) => tessellate_cmd(a),
        Command::Concentrate(a) => concentrate_cmd(a),
        Command::Ranks(a) => ranks_cmd(a),
        Command::Rhythms(a) => rhythms_cmd(a),
        Command::Composed(a) => composed_cmd(a),
        Command::Independence(a) => independence_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit
/// status: 0 on success, 2 for usage errors, 1 for analysis failures.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.module(), e.detail());
            if matches!(e, Error::Cli(_)) {
                2
            } else {
                1
            }
        }
    }
}
