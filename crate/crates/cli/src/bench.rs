//! Ablation benchmark over a directory of `.poly` files.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use batchmesh::verify::verify_all;
use clap::Args;

use crate::{load, run_engine, EngineArgs, Failure};

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Directory of `.poly` files.
    dir: PathBuf,
    /// Configurations to run: `all`, or `no-rule1` .. `no-rule5`.
    #[arg(long, value_delimiter = ',', default_value = "all,no-rule1,no-rule2,no-rule3,no-rule4,no-rule5")]
    configs: Vec<String>,
    #[command(flatten)]
    engine: EngineArgs,
}

/// Rule switched off by a configuration name; `None` for `all`.
fn disabled_rule(name: &str) -> anyhow::Result<Option<u8>> {
    match name {
        "all" => Ok(None),
        _ => name
            .strip_prefix("no-rule")
            .and_then(|k| k.parse::<u8>().ok())
            .filter(|k| (1..=5).contains(k))
            .map(Some)
            .with_context(|| format!("unknown configuration `{name}`")),
    }
}

struct Row {
    input: String,
    config: String,
    wall_s: f64,
    steiner: usize,
    bad_area: f64,
    valid: Result<(), String>,
}

fn run_one(path: &std::path::Path, args: &EngineArgs, rule: Option<u8>) -> anyhow::Result<(f64, usize, f64, Result<(), String>)> {
    let (pslg, mut mesh) = load(path)?;
    let mut cfg = args.config();
    if let Some(k) = rule {
        cfg.rules = cfg.rules.without(k);
    }
    let exec = args.executor()?;
    let (report, capped) = run_engine(&mut mesh, &cfg, &exec);
    let valid = match capped {
        Some(e) => Err(e.to_string()),
        None => verify_all(&mesh, &pslg).map_err(|e| e.to_string()),
    };
    Ok((report.wall_s, report.quality.steiner_points, report.quality.bad_area_percent, valid))
}

/// Table of every input under every configuration, then the mean running
/// time increase of each disabled rule over `all`.
fn render(rows: &[Row], configs: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<24} {:<9} {:>10} {:>9} {:>9} {:>10}  valid", "input", "config", "wall_s", "steiner", "bad_area%", "slowdown%");
    let base = |input: &str| rows.iter().find(|r| r.input == input && r.config == "all" && r.valid.is_ok()).map(|r| r.wall_s);
    let slowdown = |r: &Row| base(&r.input).filter(|&b| b > 0.0 && r.valid.is_ok()).map(|b| 100.0 * (r.wall_s / b - 1.0));
    for r in rows {
        let sd = slowdown(r).map_or("-".to_string(), |v| format!("{v:.1}"));
        let valid = match &r.valid {
            Ok(()) => "ok".to_string(),
            Err(e) => format!("FAILED: {e}"),
        };
        let _ = writeln!(
            s,
            "{:<24} {:<9} {:>10.4} {:>9} {:>9.4} {:>10}  {}",
            r.input, r.config, r.wall_s, r.steiner, r.bad_area, sd, valid
        );
    }
    let disabled: Vec<&String> = configs.iter().filter(|c| c.as_str() != "all").collect();
    if !rows.is_empty() && !disabled.is_empty() {
        let _ = writeln!(s, "\n{:<9} {:>16}", "config", "mean slowdown%");
        for c in disabled {
            let v: Vec<f64> = rows.iter().filter(|r| &r.config == c).filter_map(slowdown).collect();
            let mean = if v.is_empty() { "-".to_string() } else { format!("{:.1}", v.iter().sum::<f64>() / v.len() as f64) };
            let _ = writeln!(s, "{c:<9} {mean:>16}");
        }
    }
    s
}

pub fn run(args: &BenchArgs) -> Result<(), Failure> {
    args.engine.validate().map_err(Failure::Input)?;
    let rules: Vec<Option<u8>> =
        args.configs.iter().map(|c| disabled_rule(c)).collect::<anyhow::Result<_>>().map_err(Failure::Input)?;
    let entries = fs::read_dir(&args.dir).with_context(|| format!("reading {}", args.dir.display())).map_err(Failure::Input)?;
    let mut inputs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "poly"))
        .collect();
    inputs.sort();
    let mut rows = Vec::new();
    for path in &inputs {
        let name = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        for (config, &rule) in args.configs.iter().zip(&rules) {
            let row = match run_one(path, &args.engine, rule) {
                Ok((wall_s, steiner, bad_area, valid)) => Row { input: name.clone(), config: config.clone(), wall_s, steiner, bad_area, valid },
                Err(e) => {
                    log::warn!("{}: {e:#}", path.display());
                    Row { input: name.clone(), config: config.clone(), wall_s: 0.0, steiner: 0, bad_area: 0.0, valid: Err(format!("{e:#}")) }
                }
            };
            rows.push(row);
        }
    }
    print!("{}", render(&rows, &args.configs));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_names() {
        assert_eq!(disabled_rule("all").unwrap(), None);
        assert_eq!(disabled_rule("no-rule3").unwrap(), Some(3));
        assert!(disabled_rule("no-rule6").is_err());
        assert!(disabled_rule("fast").is_err());
    }

    #[test]
    fn slowdown_is_relative_to_all() {
        let row = |config: &str, wall_s| Row { input: "a".into(), config: config.into(), wall_s, steiner: 1, bad_area: 0.0, valid: Ok(()) };
        let configs = vec!["all".to_string(), "no-rule2".to_string()];
        let out = render(&[row("all", 2.0), row("no-rule2", 3.0)], &configs);
        assert!(out.lines().any(|l| l.starts_with("no-rule2") && l.trim_end().ends_with("50.0")), "{out}");
    }
}
