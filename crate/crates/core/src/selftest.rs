//! Built-in oracle suites: each check compares a production path with an
//! independent reference implementation.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{decode, derive_config, encode, random_stream, sweep_grid, ArchConfig, Bitstream, Topology};
use crate::compiler::blocks::validate_blocks;
use crate::compiler::mapping::check_constraints;
use crate::compiler::schedule::check_spacing;
use crate::compiler::{compile_detailed, CompileOptions};
use crate::dag::{binarize, evaluate_reference, ComputeDag, NodeId};
use crate::ingest::synth::synth_lower_triangular;
use crate::ingest::{random_dag, sptrsv_system, SparseMatrix};
use crate::sim::run;

/// Outcome of one end-to-end compile-and-simulate run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EndToEnd {
    pub max_rel_err: f64,
    pub outputs: usize,
    pub trace_mismatches: usize,
    pub hazards: usize,
    pub spacing_violations: usize,
    pub block_violations: usize,
    pub exact_checked: usize,
    pub constraint_violations: usize,
    pub spills: usize,
    pub cycles: u64,
    /// Highest per-bank occupancy seen by the simulator.
    pub peak_occupancy: usize,
    pub compile_time: Duration,
}

impl EndToEnd {
    /// All oracles agree within `tol` relative error.
    pub fn ok(&self, tol: f64, regs: usize) -> bool {
        self.max_rel_err <= tol
            && self.trace_mismatches == 0
            && self.hazards == 0
            && self.spacing_violations == 0
            && self.block_violations == 0
            && self.constraint_violations == 0
            && self.peak_occupancy <= regs
    }
}

/// Relative error with a denormal floor on the denominator.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::from(f32::MIN_POSITIVE))
}

/// Compiles, validates and simulates `dag`, comparing against the
/// double-precision reference.
pub fn end_to_end(
    dag: &ComputeDag,
    inputs: &BTreeMap<NodeId, f64>,
    cfg: &ArchConfig,
    opts: &CompileOptions,
) -> Result<EndToEnd, String> {
    let t = Instant::now();
    let c = compile_detailed(dag, cfg, opts, false).map_err(|e| format!("compile: {e}"))?;
    let compile_time = t.elapsed();
    let blocks = validate_blocks(&c.blocks, &c.binarized, cfg);
    let constraints = check_constraints(&c.blocks, &c.binarized, &c.mapping, cfg);
    let p = &c.program;
    let res = run(p, inputs).map_err(|e| format!("simulate: {e}"))?;
    let want = evaluate_reference(dag, inputs).map_err(|e| format!("reference: {e}"))?;
    let max_rel_err = dag
        .outputs()
        .iter()
        .map(|v| res.outputs.get(v).map_or(f64::INFINITY, |&g| rel_err(f64::from(g), want[*v as usize])))
        .fold(0.0, f64::max);
    Ok(EndToEnd {
        max_rel_err,
        outputs: dag.outputs().len(),
        trace_mismatches: res.trace_mismatches(&p.write_trace),
        hazards: res.hazard_violations.len(),
        spacing_violations: check_spacing(&p.write_trace, &p.read_trace, cfg.pipe_stages).len(),
        block_violations: blocks.violations.len(),
        exact_checked: blocks.exact_checked,
        constraint_violations: constraints.len(),
        spills: p.meta.spills,
        cycles: res.cycles,
        peak_occupancy: res.peak_occupancy.iter().copied().max().unwrap_or(0) as usize,
        compile_time,
    })
}

/// Dense forward substitution of the lower-triangular system.
pub fn dense_forward_substitution(m: &SparseMatrix, rhs: &[f64]) -> Vec<f64> {
    let n = m.dim;
    let mut a = vec![vec![0.0; n]; n];
    for (i, &d) in m.diagonal.iter().enumerate() {
        a[i][i] = d;
    }
    for e in &m.entries {
        if e.row != e.col {
            a[e.row][e.col] += e.value;
        }
    }
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|j| a[i][j] * x[j]).sum();
        x[i] = (rhs[i] - s) / a[i][i];
    }
    x
}

/// One named check.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, r: Result<String, String>) -> Check {
    match r {
        Ok(detail) => Check { name, passed: true, detail },
        Err(detail) => Check { name, passed: false, detail },
    }
}

fn binarize_suite(n: usize) -> Result<String, String> {
    for seed in 0..n as u64 {
        let dag = random_dag(200, 5, 8.0, seed);
        let bin = binarize(&dag).map_err(|e| e.to_string())?;
        if !bin.is_binary() {
            return Err(format!("seed {seed}: result not binary"));
        }
        let inputs = dag.default_inputs().map_err(|e| e.to_string())?;
        let a = evaluate_reference(&dag, &inputs).map_err(|e| e.to_string())?;
        let b = evaluate_reference(&bin, &inputs).map_err(|e| e.to_string())?;
        for &v in dag.outputs() {
            if rel_err(b[v as usize], a[v as usize]) > 1e-12 {
                return Err(format!("seed {seed}: node {v} differs"));
            }
        }
    }
    Ok(format!("{n} DAGs"))
}

fn sptrsv_suite(n: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..n as u64 {
        let m = synth_lower_triangular(60, 3, 20, seed);
        let rhs: Vec<f64> = (0..m.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sys = sptrsv_system(&m, &rhs).map_err(|e| e.to_string())?;
        let inputs = sys.dag.default_inputs().map_err(|e| e.to_string())?;
        let got = evaluate_reference(&sys.dag, &inputs).map_err(|e| e.to_string())?;
        let want = dense_forward_substitution(&m, &rhs);
        for (i, &v) in sys.solution.iter().enumerate() {
            if (got[v as usize] - want[i]).abs() > 1e-9 * want[i].abs().max(1.0) {
                return Err(format!("seed {seed}: x[{i}] {} vs {}", got[v as usize], want[i]));
            }
        }
    }
    Ok(format!("{n} systems"))
}

fn codec_suite(streams: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut configs = 0;
    for (d, b, r) in sweep_grid() {
        for topo in [Topology::InputXbarOutputPerLayer, Topology::FullXbarBoth] {
            let Ok(cfg) = derive_config(d, b, r, topo) else { continue };
            configs += 1;
            for _ in 0..streams {
                let len = rng.gen_range(0..12);
                let s = random_stream(&mut rng, &cfg, len);
                let bits = encode(&s, &cfg).map_err(|e| e.to_string())?;
                if decode(&bits, &cfg).map_err(|e| e.to_string())? != s {
                    return Err(format!("round trip failed at {d},{b},{r}"));
                }
                let fuzz: Vec<u8> = (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect();
                let len = fuzz.len() * 8;
                let _ = decode(&Bitstream::from_bytes(fuzz, len), &cfg);
            }
        }
    }
    Ok(format!("{streams} streams on each of {configs} configs"))
}

fn compile_suite(n: usize) -> Result<String, String> {
    let mut runs = 0;
    for (d, b, r) in [(1, 8, 16), (2, 16, 32), (3, 64, 32)] {
        for topo in [Topology::InputXbarOutputPerLayer, Topology::FullXbarBoth] {
            let cfg = derive_config(d, b, r, topo).map_err(|e| e.to_string())?;
            for seed in 0..n as u64 {
                let dag = random_dag(100 + 150 * seed as usize, 3, 12.0, seed);
                let inputs = dag.default_inputs().map_err(|e| e.to_string())?;
                let e = end_to_end(&dag, &inputs, &cfg, &CompileOptions { seed, ..Default::default() })?;
                if !e.ok(1e-5, r) {
                    return Err(format!("({d},{b},{r},{topo}) seed {seed}: {e:?}"));
                }
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} compile/simulate runs"))
}

/// Runs all suites; `quick` shrinks them to a few seconds.
pub fn run_all(quick: bool) -> Vec<Check> {
    let k = if quick { 1 } else { 4 };
    vec![
        check("binarize preserves values", binarize_suite(5 * k)),
        check("sptrsv matches dense solve", sptrsv_suite(3 * k)),
        check("codec round trip and fuzz", codec_suite(10 * k)),
        check("compile and simulate match reference", compile_suite(2 * k)),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn quick_selftest_passes() {
        for c in super::run_all(true) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
