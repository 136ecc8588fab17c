//! Config-driven runs that write CSV series, a JSON summary and a checksummed
//! manifest, plus re-verification of a finished run directory.
//!
//! Each scenario draws from `scenario_seed(master, name)`, so running `all`
//! produces the same files as running each scenario on its own.

pub mod config;
mod records;
mod scenarios;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::scenario_seed;

pub use config::{parse_config, Scenario, ScenarioConfig};
pub use scenarios::Headline;
use scenarios::{OutputFile, ScenarioOutput, SingleSpecies};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";
/// Largest allowed gap between a stored and a recomputed headline value.
pub const SUMMARY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Written once per run, after every other file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub config: ScenarioConfig,
    pub wall_clock_seconds: f64,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output: PathBuf,
    pub manifest: Manifest,
    /// Headline statistics per scenario.
    pub headline: BTreeMap<String, Headline>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parallelism cap from `FTLAB_THREADS`, if set.
pub fn thread_limit() -> Result<Option<usize>> {
    match std::env::var("FTLAB_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::config("FTLAB_THREADS", format!("expected a positive integer, got `{v}`"))),
        },
    }
}

fn run_part(part: Scenario, cfg: &ScenarioConfig, ss: Option<&SingleSpecies>, log: &dyn Fn(&str)) -> Result<ScenarioOutput> {
    let seed = scenario_seed(cfg.seed, part.name());
    let ss = || ss.expect("single-species setup is resolved when needed");
    let tagged = |m: &str| log(&format!("[{}] {m}", part.name()));
    match part {
        Scenario::EcosystemFig1 => scenarios::run_ecosystem(cfg, seed, &tagged),
        Scenario::ScoresFig2 => scenarios::run_scores(ss(), cfg, seed, &tagged),
        Scenario::OutcomesFig3 => scenarios::run_outcomes(ss(), cfg, seed, &tagged),
        Scenario::AdaptiveFig4 => scenarios::run_adaptive(ss(), cfg, seed, &tagged),
        Scenario::CurvesFig5 => scenarios::run_curves(ss(), cfg, seed, &tagged),
        Scenario::All => unreachable!("`all` is expanded into its parts"),
    }
}

/// Run `cfg.scenario` and write its files into `cfg.output`.
///
/// Everything is computed before the first byte is written; if writing fails
/// the files written so far are removed again.
pub fn run_scenario(cfg: &ScenarioConfig, log: &dyn Fn(&str)) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let parts = cfg.scenario.parts();
    let ss = if parts.iter().any(|p| *p != Scenario::EcosystemFig1) { Some(SingleSpecies::resolve(cfg)?) } else { None };
    let mut outputs = Vec::with_capacity(parts.len());
    for part in parts {
        outputs.push(run_part(part, cfg, ss.as_ref(), log)?);
    }
    let mut headline = BTreeMap::new();
    let mut sections = serde_json::Map::new();
    let mut files: Vec<OutputFile> = Vec::new();
    for out in outputs {
        sections.insert(
            out.scenario.name().to_string(),
            json!({ "seed": out.seed, "headline": headline_json(&out.headline), "details": out.details }),
        );
        headline.insert(out.scenario.name().to_string(), out.headline);
        files.extend(out.files);
    }
    let summary = json!({
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "tool_version": TOOL_VERSION,
        "scenarios": Value::Object(sections),
    });
    files.push(OutputFile { name: SUMMARY.into(), bytes: scenarios::pretty(&summary)? });
    files.sort_by(|a, b| a.name.cmp(&b.name));
    let mut manifest = Manifest {
        tool_version: TOOL_VERSION.into(),
        scenario: cfg.scenario,
        seed: cfg.seed,
        config: cfg.clone(),
        wall_clock_seconds: 0.0,
        files: files
            .iter()
            .map(|f| FileEntry { name: f.name.clone(), bytes: f.bytes.len() as u64, sha256: sha256_hex(&f.bytes) })
            .collect(),
    };
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    write_outputs(&cfg.output, &files, &manifest)?;
    log(&format!("wrote {} files to {}", files.len() + 1, cfg.output.display()));
    Ok(RunReport { output: cfg.output.clone(), manifest, headline })
}

fn write_outputs(dir: &Path, files: &[OutputFile], manifest: &Manifest) -> Result<()> {
    let created = !dir.exists();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stale = dir.join(MANIFEST);
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }
    let mut written = Vec::new();
    let mut write = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        written.push(path.clone());
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    };
    let result = files
        .iter()
        .try_for_each(|f| write(&f.name, &f.bytes))
        .and_then(|_| write(MANIFEST, &scenarios::pretty(manifest)?));
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        if created {
            let _ = fs::remove_dir(dir);
        }
    }
    result
}

fn headline_json(h: &Headline) -> Value {
    Value::Object(h.iter().map(|(k, v)| (k.clone(), json!(v))).collect())
}

/// Result of re-verifying a run directory.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryReport {
    pub directory: PathBuf,
    pub scenario: Scenario,
    pub files_verified: usize,
    pub statistics_checked: usize,
    pub max_abs_difference: f64,
    pub headline: BTreeMap<String, Headline>,
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Integrity(format!("{} is missing", path.display())),
        _ => Error::io(path, e),
    })?;
    serde_json::from_slice(&text).map_err(|e| Error::Integrity(format!("{} is not valid JSON: {e}", path.display())))
}

/// Verify checksums, then re-derive every headline statistic from the CSVs
/// and compare it with the stored summary.
pub fn summarize(dir: &Path) -> Result<SummaryReport> {
    let manifest: Manifest = serde_json::from_value(read_json(&dir.join(MANIFEST))?)
        .map_err(|e| Error::Integrity(format!("manifest does not parse: {e}")))?;
    for f in &manifest.files {
        let path = dir.join(&f.name);
        let bytes = fs::read(&path).map_err(|e| Error::Integrity(format!("{} listed in the manifest: {e}", f.name)))?;
        if bytes.len() as u64 != f.bytes || sha256_hex(&bytes) != f.sha256 {
            return Err(Error::Integrity(format!("checksum mismatch for {}", f.name)));
        }
    }
    let summary = read_json(&dir.join(SUMMARY))?;
    let cfg = &manifest.config;
    let mut headline = BTreeMap::new();
    let (mut checked, mut worst) = (0, 0.0f64);
    for part in cfg.scenario.parts() {
        let name = part.name();
        let seed = scenario_seed(cfg.seed, name);
        let fresh = match part {
            Scenario::EcosystemFig1 => scenarios::recompute_ecosystem(dir, cfg)?,
            Scenario::ScoresFig2 => scenarios::recompute_scores(dir, seed)?,
            Scenario::OutcomesFig3 => scenarios::recompute_outcomes(dir, cfg, seed)?,
            Scenario::AdaptiveFig4 => scenarios::recompute_adaptive(dir, cfg, seed)?,
            Scenario::CurvesFig5 => scenarios::recompute_curves(dir, cfg)?,
            Scenario::All => unreachable!(),
        };
        let stored = summary["scenarios"][name]["headline"]
            .as_object()
            .ok_or_else(|| Error::Integrity(format!("summary has no headline for {name}")))?;
        if stored.len() != fresh.len() {
            return Err(Error::Integrity(format!("{name}: summary lists {} statistics, files give {}", stored.len(), fresh.len())));
        }
        for (key, value) in &fresh {
            let want = stored
                .get(key)
                .ok_or_else(|| Error::Integrity(format!("{name}: summary lacks `{key}`")))?
                .as_f64()
                .unwrap_or(f64::NAN);
            let same_gap = !value.is_finite() && !want.is_finite();
            let diff = (value - want).abs();
            if !same_gap && !(diff <= SUMMARY_TOLERANCE) {
                return Err(Error::Integrity(format!("{name}: `{key}` is {want} in the summary but {value} from the files")));
            }
            if diff.is_finite() {
                worst = worst.max(diff);
            }
            checked += 1;
        }
        headline.insert(name.to_string(), fresh);
    }
    Ok(SummaryReport {
        directory: dir.to_path_buf(),
        scenario: cfg.scenario,
        files_verified: manifest.files.len(),
        statistics_checked: checked,
        max_abs_difference: worst,
        headline,
    })
}
