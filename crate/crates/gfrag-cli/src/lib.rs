//! Batch verification harness: configuration, suites and reports.

pub mod config;
pub mod error;
pub mod plot;
pub mod report;
pub mod suites;

use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::{SuiteReport, Summary};

/// Suite whose output is rerun to check byte-for-byte determinism.
pub const DETERMINISM_SUITE: &str = "entrance";

/// Runs `names` in order and writes `<out>/summary.json`.
pub fn run(names: &[String], cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    std::fs::create_dir_all(out)?;
    let mut reports = Vec::new();
    for name in names {
        reports.push(suites::run_suite(name, cfg, out)?);
    }
    let summary = Summary::new(reports);
    summary.write(out)?;
    Ok(summary)
}

/// Every suite followed by a rerun of one suite into a sibling directory and
/// a byte comparison of the two outputs.
pub fn run_all(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    std::fs::create_dir_all(out)?;
    let mut reports = Vec::new();
    for name in &cfg.suites {
        reports.push(suites::run_suite(name, cfg, out)?);
    }
    let again = out.join("determinism");
    suites::run_suite(DETERMINISM_SUITE, cfg, &again)?;
    let same = dirs_equal(&out.join(DETERMINISM_SUITE), &again.join(DETERMINISM_SUITE))?;
    let mut det = SuiteReport::new("determinism", cfg.seeds.master);
    det.push(report::Check::flag(14, format!("rerun of {DETERMINISM_SUITE} is byte-identical"), same));
    det.write(&again)?;
    reports.push(det);
    let summary = Summary::new(reports);
    summary.write(out)?;
    Ok(summary)
}

/// All regular files below `dir`, relative and sorted.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(root: &Path, dir: &Path, acc: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for e in std::fs::read_dir(dir)? {
            let p = e?.path();
            if p.is_dir() {
                walk(root, &p, acc)?;
            } else {
                acc.push(p.strip_prefix(root).expect("below root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut acc = Vec::new();
    walk(dir, dir, &mut acc)?;
    acc.sort();
    Ok(acc)
}

/// True when both trees hold the same files with identical bytes.
pub fn dirs_equal(a: &Path, b: &Path) -> Result<bool> {
    let fa = list_files(a)?;
    if fa != list_files(b)? {
        return Ok(false);
    }
    for f in &fa {
        if std::fs::read(a.join(f))? != std::fs::read(b.join(f))? {
            return Ok(false);
        }
    }
    Ok(true)
}
