//! Design-space exploration: compile every workload at every grid point
//! and aggregate latency, instruction mix and energy/EDP proxies.

mod config;
mod svg;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{derive_config, program_bits, program_bits_explicit_addr, InstrCounts, InstrKind, Topology};
use crate::compiler::{compile_detailed, op_count, CompileOptions};
use crate::dag::{csr_footprint_bytes, ComputeDag, NodeId};
use crate::ingest::synth::{synth_lower_triangular, synth_psdd, PsddShape};
use crate::ingest::{parse_json_dag, parse_matrix_market, parse_psdd, sptrsv_dag, IngestError};
use crate::sim::throughput_gops;

pub use config::{ConfigError, EnergyWeights, SweepConfig, DEFAULT_WEIGHTS_TOML};
pub use svg::{stacked_bars_svg, bars_svg};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadKind {
    /// Probabilistic circuit.
    Pc,
    /// Sparse triangular solve.
    Sptrsv,
    Other,
}

#[derive(Clone, Debug)]
pub struct Workload {
    pub name: String,
    pub kind: WorkloadKind,
    pub dag: ComputeDag,
    pub inputs: BTreeMap<NodeId, f64>,
}

impl Workload {
    pub fn new(name: impl Into<String>, kind: WorkloadKind, dag: ComputeDag) -> Self {
        let inputs = dag.default_inputs().unwrap_or_else(|_| dag.inputs().map(|v| (v, 1.0)).collect());
        Workload { name: name.into(), kind, dag, inputs }
    }
}

/// Reads a workload file; the format follows the extension (`.mtx`
/// builds the triangular-solve DAG, `.psdd` a circuit, anything else is
/// read as JSON).
pub fn load_workload(path: &Path) -> Result<Workload, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::Schema(format!("{}: {e}", path.display())))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()).unwrap_or_default();
    Ok(match ext.as_str() {
        "mtx" => Workload::new(name, WorkloadKind::Sptrsv, sptrsv_dag(&parse_matrix_market(&text)?)?),
        "psdd" | "sdd" => Workload::new(name, WorkloadKind::Pc, parse_psdd(&text)?),
        _ => Workload::new(name, WorkloadKind::Other, parse_json_dag(&text)?),
    })
}

/// Seeded stand-ins for the benchmark families: three circuits and three
/// triangular systems. `scale` multiplies their sizes.
pub fn synthetic_suite(scale: f64, seed: u64) -> Vec<Workload> {
    let s = |x: usize| ((x as f64 * scale) as usize).max(8);
    let mut out = Vec::new();
    for (i, (n, w, e)) in [(2000, 4, 3), (6000, 6, 3), (12000, 8, 4)].into_iter().enumerate() {
        let text = synth_psdd(PsddShape::for_nodes(s(n), w, e), seed + i as u64);
        let dag = parse_psdd(&text).expect("synthetic circuit parses");
        out.push(Workload::new(format!("pc{}", i + 1), WorkloadKind::Pc, dag));
    }
    for (i, (dim, per_row, band)) in [(400, 4, 40), (1500, 3, 200), (3000, 5, 300)].into_iter().enumerate() {
        let m = synth_lower_triangular(s(dim), per_row, band, seed + 10 + i as u64);
        let dag = sptrsv_dag(&m).expect("synthetic system is solvable");
        out.push(Workload::new(format!("tr{}", i + 1), WorkloadKind::Sptrsv, dag));
    }
    out
}

/// Σ count × weight over the instruction categories.
pub fn energy_proxy(counts: &InstrCounts, w: &EnergyWeights) -> f64 {
    InstrKind::ALL.iter().map(|&k| counts.get(k) as f64 * w.get(k)).sum()
}

pub fn edp_proxy(counts: &InstrCounts, w: &EnergyWeights, cycles: u64) -> f64 {
    energy_proxy(counts, w) * cycles as f64
}

/// Results for one workload compiled at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMetrics {
    pub workload: String,
    pub seed: u64,
    /// Operator nodes before and after binarization.
    pub ops_source: usize,
    pub ops_binary: usize,
    pub cycles: u64,
    pub gops: f64,
    pub counts: InstrCounts,
    pub conflicts: usize,
    pub spills: usize,
    pub blocks: usize,
    pub program_bits: usize,
    pub explicit_addr_bits: usize,
    pub footprint_bytes: usize,
    pub csr_bytes: usize,
    pub energy: f64,
}

impl WorkloadMetrics {
    /// Cycles per operator node of the source DAG.
    pub fn latency_per_op(&self) -> f64 {
        self.cycles as f64 / self.ops_source.max(1) as f64
    }

    /// Cycles per operator node of the binarized DAG.
    pub fn latency_per_binary_op(&self) -> f64 {
        self.cycles as f64 / self.ops_binary.max(1) as f64
    }

    pub fn energy_per_op(&self) -> f64 {
        self.energy / self.ops_source.max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub depth: usize,
    pub banks: usize,
    pub regs: usize,
    /// Why the point was not evaluated.
    pub skipped: Option<String>,
    pub workloads: Vec<WorkloadMetrics>,
    /// Per-workload failures `(workload, error)`.
    pub failures: Vec<(String, String)>,
    pub mean_latency_per_op: f64,
    pub mean_latency_per_binary_op: f64,
    pub mean_energy_per_op: f64,
    pub mean_edp_per_op: f64,
}

impl SweepPoint {
    pub fn key(&self) -> (usize, usize, usize) {
        (self.depth, self.banks, self.regs)
    }

    pub fn label(&self) -> String {
        format!("D{}_B{}_R{}", self.depth, self.banks, self.regs)
    }

    pub fn metrics(&self, workload: &str) -> impl Iterator<Item = &WorkloadMetrics> {
        let w = workload.to_string();
        self.workloads.iter().filter(move |m| m.workload == w)
    }
}

/// Options shared by every point of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub topology: Topology,
    pub seeds: Vec<u64>,
    pub lambda: f64,
    pub window: usize,
    pub weights: EnergyWeights,
    pub freq_hz: f64,
    /// Evaluate points on the rayon pool.
    pub parallel: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            topology: Topology::InputXbarOutputPerLayer,
            seeds: vec![0],
            lambda: 0.05,
            window: 300,
            weights: EnergyWeights::default(),
            freq_hz: crate::arch::DEFAULT_FREQ_HZ,
            parallel: true,
        }
    }
}

fn eval_point(workloads: &[Workload], (d, b, r): (usize, usize, usize), opts: &SweepOptions) -> SweepPoint {
    let mut pt = SweepPoint {
        depth: d,
        banks: b,
        regs: r,
        skipped: None,
        workloads: Vec::new(),
        failures: Vec::new(),
        mean_latency_per_op: 0.0,
        mean_latency_per_binary_op: 0.0,
        mean_energy_per_op: 0.0,
        mean_edp_per_op: 0.0,
    };
    let cfg = match derive_config(d, b, r, opts.topology) {
        Ok(c) => c,
        Err(e) => {
            pt.skipped = Some(e.to_string());
            return pt;
        }
    };
    for w in workloads {
        for &seed in &opts.seeds {
            let co = CompileOptions { seed, lambda: opts.lambda, window: opts.window, ..Default::default() };
            match compile_detailed(&w.dag, &cfg, &co, false) {
                Ok(c) => {
                    let p = &c.program;
                    let ops_source = op_count(&w.dag);
                    let cycles = p.cycles();
                    pt.workloads.push(WorkloadMetrics {
                        workload: w.name.clone(),
                        seed,
                        ops_source,
                        ops_binary: op_count(&c.binarized),
                        cycles,
                        gops: throughput_gops(ops_source, cycles, opts.freq_hz),
                        counts: p.meta.counts,
                        conflicts: p.meta.conflicts,
                        spills: p.meta.spills,
                        blocks: p.meta.blocks,
                        program_bits: program_bits(&p.instrs, &cfg),
                        explicit_addr_bits: program_bits_explicit_addr(&p.instrs, &cfg),
                        footprint_bytes: p.instruction_bytes() + p.data_bytes(),
                        csr_bytes: csr_footprint_bytes(&w.dag),
                        energy: energy_proxy(&p.meta.counts, &opts.weights),
                    });
                }
                Err(e) => pt.failures.push((w.name.clone(), e.to_string())),
            }
        }
    }
    let n = pt.workloads.len().max(1) as f64;
    pt.mean_latency_per_op = pt.workloads.iter().map(WorkloadMetrics::latency_per_op).sum::<f64>() / n;
    pt.mean_latency_per_binary_op = pt.workloads.iter().map(WorkloadMetrics::latency_per_binary_op).sum::<f64>() / n;
    pt.mean_energy_per_op = pt.workloads.iter().map(WorkloadMetrics::energy_per_op).sum::<f64>() / n;
    pt.mean_edp_per_op = pt.workloads.iter().map(|m| m.energy_per_op() * m.latency_per_op()).sum::<f64>() / n;
    pt
}

/// Evaluates every grid point. Results are ordered by `(D, B, R)`
/// whatever the degree of parallelism.
pub fn sweep(workloads: &[Workload], grid: &[(usize, usize, usize)], opts: &SweepOptions) -> Vec<SweepPoint> {
    let mut keys = grid.to_vec();
    keys.sort_unstable();
    keys.dedup();
    if opts.parallel {
        keys.par_iter().map(|&k| eval_point(workloads, k, opts)).collect()
    } else {
        keys.iter().map(|&k| eval_point(workloads, k, opts)).collect()
    }
}

/// Evaluated point with the smallest mean EDP proxy.
pub fn min_edp_point(points: &[SweepPoint]) -> Option<&SweepPoint> {
    points
        .iter()
        .filter(|p| p.skipped.is_none() && !p.workloads.is_empty())
        .min_by(|a, b| a.mean_edp_per_op.total_cmp(&b.mean_edp_per_op).then(a.key().cmp(&b.key())))
}

/// Evaluated point with the smallest mean latency.
pub fn min_latency_point(points: &[SweepPoint]) -> Option<&SweepPoint> {
    points
        .iter()
        .filter(|p| p.skipped.is_none() && !p.workloads.is_empty())
        .min_by(|a, b| a.mean_latency_per_op.total_cmp(&b.mean_latency_per_op).then(a.key().cmp(&b.key())))
}

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

/// One row per (point, workload, seed), plus skipped points.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut rows = vec![[
        "D", "B", "R", "workload", "seed", "status", "ops", "ops_binary", "cycles", "gops", "exec", "copy", "load", "store",
        "nop", "conflicts", "spills", "blocks", "program_bits", "explicit_addr_bits", "footprint_bytes", "csr_bytes",
        "energy_proxy", "latency_per_op", "latency_per_binary_op", "edp_per_op",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect::<Vec<_>>()];
    for p in points {
        let head = vec![p.depth.to_string(), p.banks.to_string(), p.regs.to_string()];
        if let Some(why) = &p.skipped {
            let mut r = head.clone();
            r.extend(["".into(), "".into(), format!("skipped: {why}")]);
            r.resize(rows[0].len(), String::new());
            rows.push(r);
            continue;
        }
        for m in &p.workloads {
            let c = &m.counts;
            let mut r = head.clone();
            r.extend([
                m.workload.clone(),
                m.seed.to_string(),
                "ok".into(),
                m.ops_source.to_string(),
                m.ops_binary.to_string(),
                m.cycles.to_string(),
                num(m.gops),
                c.exec.to_string(),
                c.copy.to_string(),
                c.load.to_string(),
                c.store.to_string(),
                c.nop.to_string(),
                m.conflicts.to_string(),
                m.spills.to_string(),
                m.blocks.to_string(),
                m.program_bits.to_string(),
                m.explicit_addr_bits.to_string(),
                m.footprint_bytes.to_string(),
                m.csr_bytes.to_string(),
                num(m.energy),
                num(m.latency_per_op()),
                num(m.latency_per_binary_op()),
                num(m.energy_per_op() * m.latency_per_op()),
            ]);
            rows.push(r);
        }
        for (w, e) in &p.failures {
            let mut r = head.clone();
            r.extend([w.clone(), String::new(), format!("failed: {e}")]);
            r.resize(rows[0].len(), String::new());
            rows.push(r);
        }
    }
    csv_string(rows)
}

/// Mean metrics per point.
pub fn summary_csv(points: &[SweepPoint]) -> String {
    let mut rows = vec![vec![
        "D".to_string(),
        "B".into(),
        "R".into(),
        "status".into(),
        "mean_latency_per_op".into(),
        "mean_latency_per_binary_op".into(),
        "mean_energy_per_op".into(),
        "mean_edp_per_op".into(),
    ]];
    for p in points {
        let status = p.skipped.as_ref().map_or_else(|| "ok".to_string(), |w| format!("skipped: {w}"));
        rows.push(vec![
            p.depth.to_string(),
            p.banks.to_string(),
            p.regs.to_string(),
            status,
            num(p.mean_latency_per_op),
            num(p.mean_latency_per_binary_op),
            num(p.mean_energy_per_op),
            num(p.mean_edp_per_op),
        ]);
    }
    csv_string(rows)
}

/// Instruction mix of one workload in percent, in [`InstrKind::ALL`] order.
pub fn breakdown_percent(c: &InstrCounts) -> [f64; 5] {
    let total = c.total().max(1) as f64;
    InstrKind::ALL.map(|k| 100.0 * c.get(k) as f64 / total)
}

/// Instruction-mix table and stacked-bar chart for the given metrics
/// (one bar per workload).
pub fn report_breakdown(metrics: &[WorkloadMetrics]) -> (String, String) {
    let mut rows = vec![vec!["workload".to_string(), "exec".into(), "copy".into(), "load".into(), "store".into(), "nop".into()]];
    let mut bars = Vec::new();
    for m in metrics {
        let pct = breakdown_percent(&m.counts);
        let mut r = vec![m.workload.clone()];
        r.extend(pct.iter().map(|&x| format!("{x:.2}")));
        rows.push(r);
        bars.push((m.workload.clone(), pct.to_vec()));
    }
    let names: Vec<&str> = InstrKind::ALL.iter().map(|k| k.name()).collect();
    (csv_string(rows), stacked_bars_svg("Instruction mix (%)", &names, &bars))
}

/// Throughput table (`workload,nodes,cycles,gops`) and bar chart.
pub fn report_throughput(metrics: &[WorkloadMetrics], freq_hz: f64) -> (String, String) {
    let mut rows = vec![vec!["workload".to_string(), "nodes".into(), "cycles".into(), "gops".into()]];
    let mut bars = Vec::new();
    for m in metrics {
        let g = throughput_gops(m.ops_source, m.cycles, freq_hz);
        rows.push(vec![m.workload.clone(), m.ops_source.to_string(), m.cycles.to_string(), format!("{g:.4}")]);
        bars.push((m.workload.clone(), g));
    }
    (csv_string(rows), bars_svg("Throughput (GOPS)", &bars))
}

/// Mean-latency chart over all evaluated points.
pub fn latency_chart(points: &[SweepPoint]) -> String {
    let bars: Vec<(String, f64)> = points
        .iter()
        .filter(|p| p.skipped.is_none())
        .map(|p| (p.label(), p.mean_latency_per_op))
        .collect();
    bars_svg("Mean latency per operation (cycles)", &bars)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Vec<Workload> {
        vec![Workload::new("r", WorkloadKind::Other, crate::ingest::random_dag(300, 3, 10.0, 1))]
    }

    #[test]
    fn single_point_grid() {
        let pts = sweep(&tiny(), &[(2, 16, 32)], &SweepOptions::default());
        assert_eq!(pts.len(), 1);
        assert!(pts[0].skipped.is_none());
        assert_eq!(pts[0].workloads.len(), 1);
    }

    #[test]
    fn infeasible_points_are_skipped() {
        let pts = sweep(&tiny(), &[(3, 4, 16)], &SweepOptions::default());
        assert!(pts[0].skipped.is_some());
    }

    #[test]
    fn energy_weights() {
        let c = InstrCounts { exec: 3, copy: 2, load: 1, store: 4, nop: 5 };
        assert_eq!(energy_proxy(&c, &EnergyWeights::zero()), 0.0);
        assert_eq!(energy_proxy(&c, &EnergyWeights::uniform(1.0)), c.total() as f64);
    }

    #[test]
    fn breakdown_sums_to_100() {
        let c = InstrCounts { exec: 3, copy: 2, load: 1, store: 4, nop: 5 };
        assert!((breakdown_percent(&c).iter().sum::<f64>() - 100.0).abs() < 0.1);
        let only = InstrCounts { exec: 7, ..Default::default() };
        assert_eq!(breakdown_percent(&only)[0], 100.0);
    }

    #[test]
    fn empty_throughput_has_header() {
        let (csv, _) = report_throughput(&[], 3e8);
        assert_eq!(csv.trim(), "workload,nodes,cycles,gops");
    }

    #[test]
    fn parallel_matches_serial() {
        let grid = [(1, 8, 16), (2, 16, 32)];
        let a = sweep(&tiny(), &grid, &SweepOptions::default());
        let b = sweep(&tiny(), &grid, &SweepOptions { parallel: false, ..Default::default() });
        assert_eq!(sweep_csv(&a), sweep_csv(&b));
    }
}
