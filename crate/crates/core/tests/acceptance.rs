//! Acceptance run: one PASS/FAIL line per criterion. Criteria 1-7 decide the
//! exit status; criterion 8 is a performance report and never fails the run.

mod common;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use batchmesh::cdt::{build_cdt, build_delaunay};
use batchmesh::exec::Executor;
use batchmesh::expandlist::{expand, CompactionPolicy, TupleList};
use batchmesh::fixtures::{corpus, min_input_angle_deg, small_angle_fixtures, Fixture};
use batchmesh::io::write_node_ele;
use batchmesh::mesh::Mesh;
use batchmesh::predicates::Point2;
use batchmesh::pslg::Pslg;
use batchmesh::refine::{refine, refine_baseline, refine_observed, EngineConfig};
use batchmesh::rules::{rule2_filter_beneficial, rule3_early_stop_beneficial, rule4_merge_beneficial};
use batchmesh::verify::{check_cdt, check_conformity, check_topology};
use common::{angles_at_least, CavityGrowth, Closure};
use rand::Rng;

const THETA: f64 = 20.0;
const RUNTIME_LIMIT: Duration = Duration::from_secs(60);
const STEINER_RATIO: f64 = 1.3;

/// Outcome of one refinement run, checked by the independent oracles.
struct Run {
    steiner: usize,
    wall: Duration,
    bad_oracle: usize,
    bad_area: f64,
    /// First oracle violation after any batch, or at the end.
    violation: Option<String>,
    mesh: Mesh,
}

fn oracle_scan(mesh: &Mesh, pslg: &Pslg) -> Result<(), String> {
    check_topology(mesh).map_err(|e| e.to_string())?;
    check_conformity(mesh, pslg).map_err(|e| e.to_string())?;
    check_cdt(mesh).map_err(|e| e.to_string())
}

fn bad_triangles(mesh: &Mesh) -> Vec<[Point2; 3]> {
    mesh.triangle_ids().map(|t| mesh.tri_points(t)).filter(|&p| !angles_at_least(p, THETA)).collect()
}

fn run(f: &Fixture, cfg: &EngineConfig, exec: &Executor, every_batch: bool) -> Run {
    let mut mesh = build_cdt(&f.pslg).expect("fixture triangulates");
    let n0 = mesh.vertex_count();
    let mut violation = None;
    let start = Instant::now();
    let result = refine_observed(&mut mesh, cfg, exec, |m, b| {
        if every_batch && violation.is_none() {
            if let Err(e) = oracle_scan(m, &f.pslg) {
                violation = Some(format!("after batch {}: {e}", b.batch));
            }
        }
    });
    let wall = start.elapsed();
    let report = match &result {
        Ok(r) => r.clone(),
        Err(e) => {
            violation.get_or_insert_with(|| e.to_string());
            e.report().clone()
        }
    };
    if violation.is_none() {
        violation = oracle_scan(&mesh, &f.pslg).err().map(|e| format!("final: {e}"));
    }
    Run {
        steiner: mesh.vertex_count() - n0,
        wall,
        bad_oracle: bad_triangles(&mesh).len(),
        bad_area: report.quality.bad_area_percent,
        violation,
        mesh,
    }
}

struct Line {
    pass: bool,
    detail: String,
}

fn line(pass: bool, detail: impl Into<String>) -> Line {
    Line { pass, detail: detail.into() }
}

/// Criteria 1-4 for one run against the corpus limits.
fn quality_failures(name: &str, r: &Run, baseline: usize) -> Vec<String> {
    let mut out = Vec::new();
    if r.bad_oracle > 0 {
        out.push(format!("{name}: {} triangles below {THETA} degrees", r.bad_oracle));
    }
    if r.wall >= RUNTIME_LIMIT {
        out.push(format!("{name}: {:.1} s", r.wall.as_secs_f64()));
    }
    if r.bad_area != 0.0 {
        out.push(format!("{name}: bad area {}%", r.bad_area));
    }
    if let Some(v) = &r.violation {
        out.push(format!("{name}: {v}"));
    }
    if r.steiner as f64 > STEINER_RATIO * baseline as f64 {
        out.push(format!("{name}: {} Steiner points vs baseline {baseline}", r.steiner));
    }
    out
}

fn summarize(failures: &[String], ok: String) -> Line {
    if failures.is_empty() {
        line(true, ok)
    } else {
        line(false, failures.join("; "))
    }
}

fn criterion1(runs: &[(String, Run)], inputs: &[Fixture]) -> Line {
    let mut fails = Vec::new();
    if inputs.len() < 10 {
        fails.push(format!("only {} inputs", inputs.len()));
    }
    for f in inputs {
        let n = f.pslg.points.len();
        if !(100..=10_000).contains(&n) {
            fails.push(format!("{}: {n} input vertices", f.name));
        }
        if min_input_angle_deg(&f.pslg) < 60.0 {
            fails.push(format!("{}: input angle below 60 degrees", f.name));
        }
    }
    let mut slowest = Duration::ZERO;
    for (name, r) in runs {
        slowest = slowest.max(r.wall);
        if r.bad_oracle > 0 {
            fails.push(format!("{name}: {} triangles below {THETA} degrees", r.bad_oracle));
        }
        if r.wall >= RUNTIME_LIMIT {
            fails.push(format!("{name}: {:.1} s", r.wall.as_secs_f64()));
        }
    }
    summarize(&fails, format!("{} inputs, zero triangles below {THETA} degrees, slowest {:.3} s", runs.len(), slowest.as_secs_f64()))
}

fn criterion2(runs: &[(String, Run)]) -> Line {
    let mut fails: Vec<String> =
        runs.iter().filter(|(_, r)| r.bad_area != 0.0).map(|(n, r)| format!("{n}: bad area {}%", r.bad_area)).collect();
    let mut reported = Vec::new();
    for f in small_angle_fixtures() {
        let r = run(&f, &EngineConfig::default(), &Executor::sequential(), false);
        let apexes: Vec<(Point2, f64)> = f.small_angle_apexes.iter().map(|&(i, rad)| (f.pslg.points[i], rad)).collect();
        let bad = bad_triangles(&r.mesh);
        let stray = bad.iter().filter(|tri| !tri.iter().any(|p| apexes.iter().any(|(c, rad)| p.dist(c) <= *rad))).count();
        if stray > 0 {
            fails.push(format!("{}: {stray} of {} bad triangles away from the apex", f.name, bad.len()));
        }
        reported.push(format!("{}:{}", f.name, bad.len()));
    }
    summarize(&fails, format!("bad area 0% on all {} inputs; small-angle bad triangles all at the apex ({})", runs.len(), reported.join(" ")))
}

fn criterion3(runs: &[(String, Run)]) -> Line {
    let mut fails: Vec<String> =
        runs.iter().filter_map(|(n, r)| r.violation.as_ref().map(|v| format!("{n}: {v}"))).collect();
    for f in small_angle_fixtures() {
        if let Some(v) = run(&f, &EngineConfig::default(), &Executor::sequential(), true).violation {
            fails.push(format!("{}: {v}", f.name));
        }
    }
    summarize(&fails, format!("{} inputs checked after every batch, zero violations", runs.len() + 5))
}

fn criterion4(runs: &[(String, Run)], baseline: &HashMap<String, usize>) -> Line {
    let mut worst: (f64, String) = (0.0, String::new());
    let mut fails = Vec::new();
    for (name, r) in runs {
        let b = baseline[name];
        let ratio = r.steiner as f64 / b.max(1) as f64;
        if ratio > worst.0 {
            worst = (ratio, name.clone());
        }
        if r.steiner as f64 > STEINER_RATIO * b as f64 {
            fails.push(format!("{name}: {} vs baseline {b}", r.steiner));
        }
    }
    summarize(&fails, format!("worst Steiner ratio {:.3} ({})", worst.0, worst.1))
}

fn rule_sweeps() -> Vec<String> {
    let mut fails = Vec::new();
    let grid = [0.05, 0.2, 0.5, 0.8, 0.95];
    for &alpha in &grid[..2] {
        let mut last = false;
        for &beta in &grid[2..] {
            let b = rule2_filter_beneficial(alpha, beta, 1.0, 0.5).unwrap();
            if last && !b {
                fails.push(format!("rule 2 not monotone in beta at alpha {alpha}"));
            }
            last = b;
        }
    }
    if rule2_filter_beneficial(0.5, 0.75, 2.0, 1.0).unwrap() {
        fails.push("rule 2 break-even counted as beneficial".into());
    }
    let mut last = false;
    for ell in [0.0, 0.1, 0.2, 0.3, 0.9] {
        let b = rule3_early_stop_beneficial(0.2, 1.0, ell).unwrap();
        if last && !b {
            fails.push("rule 3 not monotone in saved latency".into());
        }
        last = b;
    }
    if rule3_early_stop_beneficial(0.2, 1.0, 0.2).unwrap() {
        fails.push("rule 3 break-even counted as beneficial".into());
    }
    if rule4_merge_beneficial(1.0, 1.0, 1.0, 1.0, 2.0, 2.0).unwrap() || !rule4_merge_beneficial(1.0, 1.0, 1.0, 1.0, 2.0, 1.5).unwrap() {
        fails.push("rule 4 boundary".into());
    }
    fails
}

fn criterion5(inputs: &[Fixture], baseline: &HashMap<String, usize>, all_rules: &[(String, Run)]) -> Line {
    let mut fails = rule_sweeps();
    let mut table = Vec::new();
    let base_time: f64 = all_rules.iter().map(|(_, r)| r.wall.as_secs_f64()).sum();
    for k in 1..=5u8 {
        let cfg = EngineConfig { rules: EngineConfig::default().rules.without(k), ..EngineConfig::default() };
        let mut total = 0.0;
        for f in inputs {
            let r = run(f, &cfg, &Executor::sequential(), true);
            total += r.wall.as_secs_f64();
            fails.extend(quality_failures(&format!("no-rule{k}/{}", f.name), &r, baseline[&f.name]));
        }
        table.push(format!("no-rule{k} {:+.1}%", 100.0 * (total / base_time - 1.0)));
    }
    println!("  slowdown per disabled rule (report-only): {}", table.join(", "));
    summarize(&fails, "rule decision sweeps hold; every single-rule ablation meets criteria 1-4".to_string())
}

fn criterion6() -> Line {
    let mut fails = Vec::new();
    let mut max_tuples = 0;
    for seed in 0..100u64 {
        let mut rng = common::rng(seed);
        let execs = [Executor::sequential(), Executor::shuffled(seed), Executor::parallel(2).unwrap()];
        for policy in [CompactionPolicy::always(), CompactionPolicy::never()] {
            for exec in &execs {
                let got_want = if seed % 2 == 0 {
                    let (mut hooks, seeds) = Closure::random(&mut common::rng(seed), 50 + (seed as usize * 7) % 400);
                    let want = hooks.oracle(&seeds);
                    hooks.reset(&seeds);
                    let out = expand(TupleList::new(seeds), &mut hooks, &policy, 1000, exec);
                    out.map(|o| {
                        max_tuples = max_tuples.max(o.list.len());
                        let mut got: Vec<u32> = o.list.valid_items().copied().collect();
                        got.sort();
                        got == want
                    })
                } else {
                    let pts: Vec<Point2> = (0..150).map(|_| Point2::new(rng.gen(), rng.gen())).collect();
                    let mesh = build_delaunay(&pts).unwrap();
                    let probes: Vec<Point2> = (0..1 + seed as usize % 20).map(|_| Point2::new(rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9))).collect();
                    let want = CavityGrowth::new(&mesh, probes.clone()).oracle();
                    let mut hooks = CavityGrowth::new(&mesh, probes);
                    let seeds = hooks.seeds();
                    let out = expand(TupleList::new(seeds), &mut hooks, &policy, 1000, exec);
                    out.map(|o| {
                        max_tuples = max_tuples.max(o.list.len());
                        let mut got: Vec<_> = o.list.valid_items().copied().collect();
                        got.sort();
                        got == want
                    })
                };
                match got_want {
                    Ok(true) => {}
                    Ok(false) => fails.push(format!("instantiation {seed} ({exec:?}, {policy:?}) differs from the worklist")),
                    Err(e) => fails.push(format!("instantiation {seed}: {e}")),
                }
            }
        }
    }
    summarize(&fails, format!("100 instantiations x 2 compaction settings x 3 executors match the worklist (largest list {max_tuples} tuples)"))
}

fn criterion7(inputs: &[Fixture], baseline: &HashMap<String, usize>) -> Line {
    let mut fails = Vec::new();
    let cfg = EngineConfig::default();
    for f in inputs {
        let reference = write_node_ele(&run(f, &cfg, &Executor::sequential(), false).mesh);
        for rep in 1..5 {
            if write_node_ele(&run(f, &cfg, &Executor::sequential(), false).mesh) != reference {
                fails.push(format!("{}: sequential run {rep} differs", f.name));
            }
        }
        for seed in [11, 12] {
            if write_node_ele(&run(f, &cfg, &Executor::shuffled(seed), false).mesh) != reference {
                fails.push(format!("{}: shuffled schedule {seed} changes the output", f.name));
            }
        }
        for threads in [2, 4, 8] {
            let r = run(f, &cfg, &Executor::parallel(threads).unwrap(), true);
            fails.extend(quality_failures(&format!("{}@{threads}", f.name), &r, baseline[&f.name]));
        }
    }
    summarize(&fails, format!("{} inputs: 5 identical sequential runs, schedule-independent claims, 2/4/8 executors meet criteria 1-4", inputs.len()))
}

/// Dense uniform points in a square: nearly every triangle starts bad.
fn dense_workload(n: usize) -> Pslg {
    let mut rng = common::rng(2024);
    let side = 1000.0;
    let mut pts = vec![Point2::new(0., 0.), Point2::new(side, 0.), Point2::new(side, side), Point2::new(0., side)];
    pts.extend((0..n).map(|_| Point2::new(rng.gen_range(1.0..side - 1.0), rng.gen_range(1.0..side - 1.0))));
    Pslg::new(pts, vec![[0, 1], [1, 2], [2, 3], [3, 0]]).expect("random points are distinct")
}

fn criterion8() -> Line {
    let g = dense_workload(300_000);
    let cfg = EngineConfig::default();
    let time = |exec: &Executor| {
        let mut m = build_cdt(&g).unwrap();
        let t = Instant::now();
        let r = refine(&mut m, &cfg, exec);
        (t.elapsed().as_secs_f64(), r.is_ok(), m.vertex_count())
    };
    let (ts, ok_s, n) = time(&Executor::sequential());
    let (tp, ok_p, _) = time(&Executor::parallel(8).unwrap());
    let speedup = ts / tp;
    let cpus = std::thread::available_parallelism().map_or(1, |c| c.get());
    let detail = format!(
        "report-only: {n} vertices, sequential {ts:.2} s, 8 executors {tp:.2} s, speedup {speedup:.2}x on {cpus} available CPU(s)"
    );
    line(speedup >= 2.0 && ok_s && ok_p, detail)
}

fn main() {
    let inputs = corpus();
    let cfg = EngineConfig::default();
    let mut baseline = HashMap::new();
    for f in &inputs {
        let mut m = build_cdt(&f.pslg).unwrap();
        let n0 = m.vertex_count();
        refine_baseline(&mut m, &cfg).expect("baseline converges");
        baseline.insert(f.name.clone(), m.vertex_count() - n0);
    }
    let runs: Vec<(String, Run)> = inputs.iter().map(|f| (f.name.clone(), run(f, &cfg, &Executor::sequential(), true))).collect();

    let results: Vec<(u8, &str, Line)> = vec![
        (1, "quality bound", criterion1(&runs, &inputs)),
        (2, "bad-area parity", criterion2(&runs)),
        (3, "correctness oracles", criterion3(&runs)),
        (4, "Steiner-count parity", criterion4(&runs, &baseline)),
        (5, "rules embodiment", criterion5(&inputs, &baseline, &runs)),
        (6, "ExpandList equivalence", criterion6()),
        (7, "determinism and parallel soundness", criterion7(&inputs, &baseline)),
        (8, "parallel speedup", criterion8()),
    ];
    let mut failed = false;
    for (k, name, l) in &results {
        println!("criterion {k} {name}: {} ({})", if l.pass { "PASS" } else { "FAIL" }, l.detail);
        failed |= !l.pass && *k < 8;
    }
    if failed {
        std::process::exit(1);
    }
}
