//! Acceptance suite: one PASS/FAIL line per criterion, followed by
//! informational measurements. Exits non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use dpu2::arch::{decode, derive_config, encode, random_stream, sweep_grid, ArchConfig, Bitstream, Topology};
use dpu2::compiler::blocks::{decompose, validate_blocks};
use dpu2::compiler::mapping::{check_constraints, count_conflicts, map, random_map};
use dpu2::compiler::{compile_detailed, CompileOptions};
use dpu2::dag::{binarize, evaluate_in, evaluate_reference, ComputeDag};
use dpu2::dse::{
    latency_chart, min_edp_point, min_latency_point, report_breakdown, report_throughput, summary_csv, sweep, sweep_csv,
    synthetic_suite, SweepOptions, SweepPoint, Workload, WorkloadKind,
};
use dpu2::ingest::{parse_matrix_market, random_dag, sptrsv_dag, sptrsv_system, SparseMatrix};
use dpu2::selftest::{end_to_end, rel_err, EndToEnd};

const REL_TOL: f64 = 1e-5;
const CORRECTNESS_CONFIGS: [(usize, usize, usize); 3] = [(1, 8, 16), (2, 16, 32), (3, 64, 32)];
const CONFLICT_RATIO: f64 = 0.1;
const ENCODING_SAVING: f64 = 0.20;
const FOOTPRINT_RATIO: f64 = 0.9;
const CODEC_STREAMS: usize = 10_000;
const SCALING_PER_DOUBLING: f64 = 5.0;
const COMPILE_BUDGET: Duration = Duration::from_secs(300);
const CORRECTNESS_BUDGET: Duration = Duration::from_secs(20 * 60);

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: usize, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} criterion {id:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn cfg((d, b, r): (usize, usize, usize)) -> ArchConfig {
    derive_config(d, b, r, Topology::InputXbarOutputPerLayer).unwrap()
}

fn fixture_matrices() -> Vec<(String, SparseMatrix)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    ["lower_48.mtx", "lower_120.mtx", "lower_300.mtx"]
        .into_iter()
        .map(|f| (f.to_string(), parse_matrix_market(&std::fs::read_to_string(dir.join(f)).unwrap()).unwrap()))
        .collect()
}

fn fixture_dags() -> Vec<(String, ComputeDag)> {
    fixture_matrices().into_iter().map(|(f, m)| (f, sptrsv_dag(&m).unwrap())).collect()
}

/// Signed right-hand sides can cancel to tiny solution entries whose
/// relative error is dominated by rounding the inputs to single
/// precision; report both numbers.
fn signed_rhs_info() {
    let c = cfg((3, 64, 32));
    for (i, (f, m)) in fixture_matrices().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let rhs: Vec<f64> = (0..m.dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let dag = sptrsv_system(&m, &rhs).unwrap().dag;
        let inputs = dag.default_inputs().unwrap();
        let want = evaluate_reference(&dag, &inputs).unwrap();
        let rounded = evaluate_in(&dag, |v| inputs.get(&v).map(|&x| f64::from(x as f32))).unwrap();
        let floor = dag.outputs().iter().map(|&v| rel_err(rounded[v as usize], want[v as usize])).fold(0.0, f64::max);
        match end_to_end(&dag, &inputs, &c, &CompileOptions::default()) {
            Ok(e) => println!(
                "INFO {f} with signed rhs at D3_B64_R32: max rel err {:.2e}, input-rounding floor {floor:.2e}, hazards {}, trace mismatches {}",
                e.max_rel_err, e.hazards, e.trace_mismatches
            ),
            Err(e) => println!("INFO {f} with signed rhs: {e}"),
        }
    }
}

/// 50 random DAGs with node counts spread geometrically over 50..10000.
fn random_corpus() -> Vec<(String, ComputeDag)> {
    (0..50u64)
        .map(|i| {
            let n = (50.0 * 200f64.powf(i as f64 / 49.0)).round() as usize;
            let arity = 2 + (i as usize % 4);
            let par = (n as f64).sqrt() * (0.5 + (i % 5) as f64 * 0.5);
            (format!("random{i}_n{n}"), random_dag(n, arity, par, 1000 + i))
        })
        .collect()
}

fn correctness(rep: &mut Report) {
    let t = Instant::now();
    let mut dags = random_corpus();
    dags.extend(fixture_dags());
    let jobs: Vec<(usize, (usize, usize, usize))> =
        (0..dags.len()).flat_map(|i| CORRECTNESS_CONFIGS.into_iter().map(move |c| (i, c))).collect();
    let results: Vec<(String, Result<EndToEnd, String>)> = jobs
        .par_iter()
        .map(|&(i, c)| {
            let (name, dag) = &dags[i];
            let inputs = dag.default_inputs().unwrap();
            (format!("{name}@{c:?}"), end_to_end(dag, &inputs, &cfg(c), &CompileOptions::default()))
        })
        .collect();
    let elapsed = t.elapsed();
    let mut errors = Vec::new();
    let (mut worst, mut mismatches, mut hazards, mut spacing, mut blocks, mut constraints, mut exact) = (0f64, 0, 0, 0, 0, 0, 0);
    let mut ok_runs = 0;
    for (name, r) in &results {
        match r {
            Ok(e) => {
                worst = worst.max(e.max_rel_err);
                mismatches += e.trace_mismatches;
                hazards += e.hazards;
                spacing += e.spacing_violations;
                blocks += e.block_violations;
                constraints += e.constraint_violations;
                exact += e.exact_checked;
                if e.max_rel_err <= REL_TOL {
                    ok_runs += 1;
                }
            }
            Err(err) => errors.push(format!("{name}: {err}")),
        }
    }
    let n = results.len();
    rep.line(
        1,
        "end-to-end correctness",
        errors.is_empty() && ok_runs == n && elapsed < CORRECTNESS_BUDGET,
        format!(
            "{ok_runs}/{n} runs ({} DAGs x {} configs) within rel {REL_TOL:e}, worst {worst:.2e}, {:.1}s{}",
            dags.len(),
            CORRECTNESS_CONFIGS.len(),
            elapsed.as_secs_f64(),
            errors.first().map(|e| format!(", first error {e}")).unwrap_or_default()
        ),
    );
    rep.line(2, "write-address prediction", errors.is_empty() && mismatches == 0, format!("{mismatches} trace mismatches over {n} runs"));
    rep.line(
        3,
        "hazard freedom",
        errors.is_empty() && hazards == 0 && spacing == 0,
        format!("{hazards} runtime hazards, {spacing} static spacing violations over {n} runs"),
    );
    STATE.with(|s| {
        let mut s = s.borrow_mut();
        s.block_violations += blocks;
        s.constraint_violations += constraints;
        s.exact_checked += exact;
        s.compiled += n;
    });
}

#[derive(Default)]
struct Validity {
    block_violations: usize,
    constraint_violations: usize,
    exact_checked: usize,
    compiled: usize,
}

thread_local! {
    static STATE: std::cell::RefCell<Validity> = std::cell::RefCell::new(Validity::default());
}

fn median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[v.len() / 2]
}

fn conflict_reduction(rep: &mut Report, suite: &[Workload]) {
    let c = cfg((3, 64, 32));
    let mut dags: Vec<(String, ComputeDag)> =
        (0..5u64).map(|i| (format!("random_n{}", 5000 + 1500 * i), random_dag(5000 + 1500 * i as usize, 3, 60.0 + 20.0 * i as f64, 77 + i))).collect();
    dags.extend(suite.iter().filter(|w| w.dag.len() >= 5000).map(|w| (w.name.clone(), w.dag.clone())));
    let rows: Vec<(String, usize, usize)> = dags
        .par_iter()
        .map(|(name, dag)| {
            let bin = binarize(dag).unwrap();
            let bg = decompose(&bin, &c, 0.05);
            let ours = median((0..5).map(|s| count_conflicts(&map(&bg, &bin, &c, s), &bg)).collect());
            let rand = median((0..5).map(|s| count_conflicts(&random_map(&bg, &bin, &c, s), &bg)).collect());
            (name.clone(), ours, rand)
        })
        .collect();
    let ok = rows.len() >= 5 && rows.iter().all(|&(_, o, r)| o as f64 <= CONFLICT_RATIO * r as f64);
    let detail = rows
        .iter()
        .map(|(n, o, r)| format!("{n} {o}/{r} ({:.0}x)", *r as f64 / (*o).max(1) as f64))
        .collect::<Vec<_>>()
        .join(", ");
    rep.line(4, "bank-conflict reduction", ok, format!("median compiler/random conflicts at D3_B64_R32: {detail}"));
}

fn encoding_saving(rep: &mut Report, points: &[SweepPoint]) {
    let Some(p) = points.iter().find(|p| p.key() == (3, 64, 32)) else {
        rep.line(5, "automatic-write encoding saving", false, "D3_B64_R32 missing from sweep".into());
        return;
    };
    let savings: Vec<f64> = p.workloads.iter().map(|m| 1.0 - m.program_bits as f64 / m.explicit_addr_bits as f64).collect();
    let mean = savings.iter().sum::<f64>() / savings.len().max(1) as f64;
    let all: Vec<f64> = points
        .iter()
        .flat_map(|p| p.workloads.iter())
        .map(|m| 1.0 - m.program_bits as f64 / m.explicit_addr_bits as f64)
        .collect();
    let grid_mean = all.iter().sum::<f64>() / all.len().max(1) as f64;
    rep.line(
        5,
        "automatic-write encoding saving",
        !savings.is_empty() && mean >= ENCODING_SAVING,
        format!(
            "suite mean saving {:.1}% at D3_B64_R32 (per workload {}), {:.1}% over the whole grid",
            100.0 * mean,
            savings.iter().map(|s| format!("{:.1}%", 100.0 * s)).collect::<Vec<_>>().join(" "),
            100.0 * grid_mean
        ),
    );
}

fn footprint(rep: &mut Report, points: &[SweepPoint]) {
    let Some(p) = min_edp_point(points) else {
        rep.line(6, "memory footprint vs CSR", false, "no evaluated sweep point".into());
        return;
    };
    let ratios: Vec<(String, f64)> = p
        .workloads
        .iter()
        .filter(|m| m.workload.starts_with("pc"))
        .map(|m| (m.workload.clone(), m.footprint_bytes as f64 / m.csr_bytes as f64))
        .collect();
    let ok = !ratios.is_empty() && ratios.iter().all(|&(_, r)| r <= FOOTPRINT_RATIO);
    rep.line(
        6,
        "memory footprint vs CSR",
        ok,
        format!(
            "at min-EDP {}: {}",
            p.label(),
            ratios.iter().map(|(n, r)| format!("{n} {r:.3}")).collect::<Vec<_>>().join(", ")
        ),
    );
}

fn validity(rep: &mut Report, suite: &[Workload]) {
    let jobs: Vec<(usize, (usize, usize, usize))> =
        (0..suite.len()).flat_map(|i| CORRECTNESS_CONFIGS.into_iter().map(move |c| (i, c))).collect();
    let found: Vec<(usize, usize, usize)> = jobs
        .par_iter()
        .map(|&(i, c)| {
            let cfg = cfg(c);
            let out = compile_detailed(&suite[i].dag, &cfg, &CompileOptions::default(), false).unwrap();
            let b = validate_blocks(&out.blocks, &out.binarized, &cfg);
            let k = check_constraints(&out.blocks, &out.binarized, &out.mapping, &cfg);
            (b.violations.len(), k.len(), b.exact_checked)
        })
        .collect();
    let v = STATE.with(|s| {
        let mut s = s.borrow_mut();
        for &(b, k, e) in &found {
            s.block_violations += b;
            s.constraint_violations += k;
            s.exact_checked += e;
        }
        s.compiled += found.len();
        std::mem::take(&mut *s)
    });
    rep.line(
        7,
        "block and mapping validity",
        v.block_violations == 0 && v.constraint_violations == 0 && v.exact_checked > 0,
        format!(
            "{} compiled programs: {} block violations, {} constraint violations, {} small blocks cross-checked by exhaustive placement",
            v.compiled, v.block_violations, v.constraint_violations, v.exact_checked
        ),
    );
}

fn codec(rep: &mut Report) {
    let mut cfgs = Vec::new();
    for key in sweep_grid() {
        for t in [Topology::InputXbarOutputPerLayer, Topology::FullXbarBoth] {
            if let Ok(c) = derive_config(key.0, key.1, key.2, t) {
                cfgs.push(c);
            }
        }
    }
    let bad = (0..CODEC_STREAMS)
        .into_par_iter()
        .filter(|&i| {
            let c = &cfgs[i % cfgs.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            let len = rng.gen_range(0..60);
            let prog = random_stream(&mut rng, c, len);
            match encode(&prog, c) {
                Ok(bits) => decode(&bits, c).ok().as_ref() != Some(&prog),
                Err(_) => true,
            }
        })
        .count();
    let crashes = (0..CODEC_STREAMS)
        .into_par_iter()
        .filter(|&i| {
            let c = cfgs[i % cfgs.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(1 << 32 | i as u64);
            let bytes: Vec<u8> = (0..rng.gen_range(0..512)).map(|_| rng.gen()).collect();
            let len = (bytes.len() * 8).saturating_sub(rng.gen_range(0..8));
            catch_unwind(AssertUnwindSafe(|| {
                let _ = decode(&Bitstream::from_bytes(bytes, len), &c);
            }))
            .is_err()
        })
        .count();
    rep.line(
        8,
        "codec round trip",
        bad == 0 && crashes == 0,
        format!(
            "{bad}/{CODEC_STREAMS} random streams failed to round trip over {} configs, {crashes}/{CODEC_STREAMS} fuzzed bitstreams crashed the decoder",
            cfgs.len()
        ),
    );
}

fn dse(rep: &mut Report, suite: &[Workload], points: &[SweepPoint], sweep_time: Duration) {
    let opts = SweepOptions::default();
    let rerun = sweep(suite, &sweep_grid(), &opts);
    let identical = sweep_csv(points) == sweep_csv(&rerun) && serde_json::to_string(points).unwrap() == serde_json::to_string(&rerun).unwrap();
    let failures: usize = points.iter().map(|p| p.failures.len()).sum();
    let evaluated = points.iter().filter(|p| p.skipped.is_none()).count();
    let at = |k| points.iter().find(|p| p.key() == k);
    let mut monotone = Vec::new();
    if let (Some(big), Some(small)) = (at((3, 64, 128)), at((1, 8, 16))) {
        for w in suite {
            if let (Some(a), Some(b)) = (big.metrics(&w.name).next(), small.metrics(&w.name).next()) {
                monotone.push((w.name.clone(), a.cycles <= b.cycles, a.cycles, b.cycles));
            }
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let best = min_latency_point(points).unwrap();
    let (bcsv, bsvg) = report_breakdown(&best.workloads);
    let (tcsv, tsvg) = report_throughput(&best.workloads, opts.freq_hz);
    let artifacts = [
        ("sweep.csv", sweep_csv(points)),
        ("summary.csv", summary_csv(points)),
        ("latency.svg", latency_chart(points)),
        ("breakdown.csv", bcsv),
        ("breakdown.svg", bsvg),
        ("throughput.csv", tcsv),
        ("throughput.svg", tsvg),
    ];
    let mut written = 0;
    for (name, body) in &artifacts {
        let path = dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        let back = std::fs::read_to_string(&path).unwrap();
        let shaped = if name.ends_with(".svg") { back.starts_with("<svg") && back.trim_end().ends_with("</svg>") } else { back.lines().count() > 1 };
        if shaped {
            written += 1;
        }
    }
    let mono_ok = monotone.len() == suite.len() && monotone.iter().all(|m| m.1);
    rep.line(
        9,
        "design-space sweep",
        failures == 0 && evaluated == 48 && mono_ok && written == artifacts.len() && identical,
        format!(
            "{evaluated} points x {} workloads in {:.1}s, {failures} failures, cycles(3,64,128) <= cycles(1,8,16) on {}/{} workloads, {written}/{} artifacts, rerun identical: {identical}",
            suite.len(),
            sweep_time.as_secs_f64(),
            monotone.iter().filter(|m| m.1).count(),
            suite.len(),
            artifacts.len()
        ),
    );
}

fn best_of(reps: usize, f: impl Fn() -> Duration) -> Duration {
    (0..reps).map(|_| f()).min().unwrap()
}

fn scaling(rep: &mut Report) {
    let c = cfg((3, 64, 32));
    let sizes = [1000usize, 2000, 4000, 8000];
    let times: Vec<Duration> = sizes
        .iter()
        .map(|&n| {
            let dag = binarize(&random_dag(n, 3, (n as f64).sqrt() * 2.0, 5)).unwrap();
            best_of(3, || {
                let t = Instant::now();
                std::hint::black_box(decompose(&dag, &c, 0.05));
                t.elapsed()
            })
        })
        .collect();
    let ratios: Vec<f64> = times.windows(2).map(|w| w[1].as_secs_f64() / w[0].as_secs_f64().max(1e-9)).collect();
    let big = random_dag(10_000, 3, 200.0, 6);
    let t = Instant::now();
    let compiled = compile_detailed(&big, &c, &CompileOptions::default(), false).is_ok();
    let whole = t.elapsed();
    rep.line(
        10,
        "compile-time scaling",
        ratios.iter().all(|&r| r <= SCALING_PER_DOUBLING) && compiled && whole < COMPILE_BUDGET,
        format!(
            "decompose {} ms for N = 1k/2k/4k/8k (ratios {}), 10k-node compile {:.2}s",
            times.iter().map(|t| format!("{:.1}", t.as_secs_f64() * 1e3)).collect::<Vec<_>>().join("/"),
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(" "),
            whole.as_secs_f64()
        ),
    );
}

fn spilling(rep: &mut Report) {
    let dag = random_dag(10_000, 3, 300.0, 8);
    let inputs = dag.default_inputs().unwrap();
    let runs: Vec<(String, Result<EndToEnd, String>)> = [(3, 64, 16), (2, 16, 16), (1, 8, 16)]
        .par_iter()
        .map(|&k| {
            let c = cfg(k);
            (c.label(), end_to_end(&dag, &inputs, &c, &CompileOptions::default()))
        })
        .collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, r) in &runs {
        match r {
            Ok(e) => {
                ok &= e.spills > 0 && e.ok(REL_TOL, 16);
                parts.push(format!("{label}: {} spills, err {:.1e}, peak occupancy {}", e.spills, e.max_rel_err, e.peak_occupancy));
            }
            Err(err) => {
                ok = false;
                parts.push(format!("{label}: {err}"));
            }
        }
    }
    rep.line(11, "spilling correctness", ok, parts.join("; "));
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        // the test runner probes harness-less targets with --list
        return;
    }
    let mut rep = Report { failed: 0 };
    correctness(&mut rep);

    let suite = synthetic_suite(1.0, 7);
    let t = Instant::now();
    let points = sweep(&suite, &sweep_grid(), &SweepOptions::default());
    let sweep_time = t.elapsed();

    conflict_reduction(&mut rep, &suite);
    encoding_saving(&mut rep, &points);
    footprint(&mut rep, &points);
    validity(&mut rep, &suite);
    codec(&mut rep);
    dse(&mut rep, &suite, &points, sweep_time);
    scaling(&mut rep);
    spilling(&mut rep);

    signed_rhs_info();
    if let Some(p) = min_latency_point(&points) {
        let gops: Vec<String> = p.workloads.iter().map(|m| format!("{} {:.2}", m.workload, m.gops)).collect();
        let mean = p.workloads.iter().map(|m| m.gops).sum::<f64>() / p.workloads.len().max(1) as f64;
        println!("INFO min-latency point {} ({:.3} cycles/op): GOPS {} (mean {mean:.2})", p.label(), p.mean_latency_per_op, gops.join(", "));
    }
    if let Some(p) = min_edp_point(&points) {
        println!("INFO min-EDP point {} (placeholder energy weights)", p.label());
    }
    let kinds = suite.iter().filter(|w| w.kind == WorkloadKind::Pc).count();
    println!("INFO suite: {} workloads ({kinds} PC), {} nodes total", suite.len(), suite.iter().map(|w| w.dag.len()).sum::<usize>());

    if rep.failed > 0 {
        println!("{} criteria failed", rep.failed);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
