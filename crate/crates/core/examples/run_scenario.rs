//! Run a reduced `all` scenario into a temporary directory and verify it.

use ftlab::harness::{run_scenario, summarize, Scenario, ScenarioConfig};

fn main() -> ftlab::Result<()> {
    let dir = std::env::temp_dir().join("ftlab-example");
    let mut cfg = ScenarioConfig::new(Scenario::All, 42);
    cfg.output = dir.clone();
    cfg.reps = 5;
    cfg.horizon = 20;
    cfg.ecosystem.reps = 10;
    cfg.ecosystem.effort_points = 6;
    let report = run_scenario(&cfg, &|line| println!("{line}"))?;
    for f in &report.manifest.files {
        println!("{:<24} {:>9} bytes", f.name, f.bytes);
    }
    let check = summarize(&dir)?;
    println!("verified {} files, {} statistics", check.files_verified, check.statistics_checked);
    Ok(())
}
