//! Seeded synthetic workloads shaped like the benchmark families:
//! probabilistic circuits in PSDD text form and sparse lower-triangular
//! systems.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SparseMatrix;

/// Shape of a synthetic probabilistic circuit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsddShape {
    /// Number of Boolean variables (at least 2).
    pub vars: usize,
    /// Decision nodes created per internal vtree node.
    pub width: usize,
    /// Elements per decision node.
    pub elements: usize,
}

impl PsddShape {
    /// Approximate node count of the parsed DAG.
    pub fn estimated_nodes(&self) -> usize {
        let internal = self.vars - 1;
        3 * self.vars + internal * self.width * (2 * self.elements + 1)
    }

    /// A shape whose parsed DAG has roughly `nodes` nodes.
    pub fn for_nodes(nodes: usize, width: usize, elements: usize) -> Self {
        let per = width * (2 * elements + 1) + 3;
        PsddShape { vars: (nodes / per).max(2), width, elements }
    }
}

/// Generates PSDD text over a balanced vtree.
///
/// Each vtree leaf contributes the two literals of its variable and a
/// true node. Each internal vtree node builds `width` decision nodes
/// whose elements pair a prime from the left pool with a sub from the
/// right pool; every pool node is used at least once. The root vtree
/// node gets one decision node, so the circuit has a single root.
/// Element weights of every decision node sum to 1, so with all
/// indicators at 1 every node evaluates to 1.
pub fn synth_psdd(shape: PsddShape, seed: u64) -> String {
    assert!(shape.vars >= 2, "need at least two variables");
    assert!(shape.width >= 1 && shape.elements >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines: Vec<String> = Vec::new();
    let mut next_id = 0u64;
    let mut next_vtree = 0u64;

    vtree_level(0, shape.vars, true, &shape, &mut rng, &mut lines, &mut next_id, &mut next_vtree);

    let mut out = String::new();
    let _ = writeln!(out, "c synthetic psdd: {} vars, seed {seed}", shape.vars);
    let _ = writeln!(out, "psdd {}", lines.len());
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn vtree_level(
    lo: usize,
    hi: usize,
    root: bool,
    shape: &PsddShape,
    rng: &mut ChaCha8Rng,
    lines: &mut Vec<String>,
    next_id: &mut u64,
    next_vtree: &mut u64,
) -> Vec<u64> {
    if hi - lo == 1 {
        let var = lo + 1;
        let vt = *next_vtree;
        *next_vtree += 1;
        let mut pool = Vec::with_capacity(3);
        for lit in [var as i64, -(var as i64)] {
            lines.push(format!("L {} {} {}", *next_id, vt, lit));
            pool.push(*next_id);
            *next_id += 1;
        }
        let theta: f64 = rng.gen_range(0.2..0.8);
        lines.push(format!("T {} {} {} {:.12}", *next_id, vt, var, theta.ln()));
        pool.push(*next_id);
        *next_id += 1;
        return pool;
    }
    let mid = (lo + hi) / 2;
    let left = vtree_level(lo, mid, false, shape, rng, lines, next_id, next_vtree);
    let right = vtree_level(mid, hi, false, shape, rng, lines, next_id, next_vtree);
    let vt = *next_vtree;
    *next_vtree += 1;
    let count = if root { 1 } else { shape.width };
    let k = if root { shape.elements.max(left.len()).max(right.len()) } else { shape.elements };
    let total = count * k;
    let primes = covering_sequence(&left, total, rng);
    let subs = covering_sequence(&right, total, rng);
    let mut pool = Vec::with_capacity(count);
    for j in 0..count {
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let norm: f64 = raw.iter().sum();
        let mut line = format!("D {} {} {}", *next_id, vt, k);
        for (e, w) in raw.iter().enumerate() {
            let idx = j * k + e;
            let _ = write!(line, " {} {} {:.12}", primes[idx], subs[idx], (w / norm).ln());
        }
        lines.push(line);
        pool.push(*next_id);
        *next_id += 1;
    }
    pool
}

/// `total` picks from `pool` that include every member at least once
/// (when `total >= pool.len()`), in random order.
fn covering_sequence(pool: &[u64], total: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut seq: Vec<u64> = pool.iter().copied().cycle().take(total.max(pool.len())).collect();
    seq.shuffle(rng);
    seq.truncate(total);
    seq
}

/// Random sparse lower-triangular M-matrix: positive diagonal, negative
/// off-diagonal entries, and a diagonal that dominates its row. Forward
/// substitution with a nonnegative right-hand side then adds only
/// nonnegative terms, so the solve is free of cancellation.
///
/// Each row draws about `per_row` off-diagonal columns, mostly within
/// `band` columns of the diagonal.
pub fn synth_lower_triangular(dim: usize, per_row: usize, band: usize, seed: u64) -> SparseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = band.max(1);
    let mut triplets = Vec::new();
    for i in 0..dim {
        let mut cols: Vec<usize> = Vec::new();
        if i > 0 {
            let want = rng.gen_range(0..=2 * per_row).min(i);
            for _ in 0..want {
                let j = if rng.gen_bool(0.85) {
                    i - rng.gen_range(1..=band.min(i))
                } else {
                    rng.gen_range(0..i)
                };
                if !cols.contains(&j) {
                    cols.push(j);
                }
            }
        }
        let mut off = 0.0;
        for &j in &cols {
            let v: f64 = rng.gen_range(0.1..1.0);
            off += v;
            triplets.push((i, j, -v));
        }
        triplets.push((i, i, 1.0 + off * rng.gen_range(1.0..1.5)));
    }
    SparseMatrix::from_triplets(dim, triplets).expect("diagonal is positive")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::evaluate_reference;
    use crate::ingest::{parse_matrix_market, parse_psdd, sptrsv_dag, write_matrix_market};

    #[test]
    fn psdd_parses_to_single_root_valued_one() {
        let shape = PsddShape { vars: 9, width: 4, elements: 3 };
        let text = synth_psdd(shape, 3);
        let dag = parse_psdd(&text).unwrap();
        dag.validate().unwrap();
        assert_eq!(dag.outputs().len(), 1);
        let v = evaluate_reference(&dag, &dag.default_inputs().unwrap()).unwrap();
        assert!((v[dag.outputs()[0] as usize] - 1.0).abs() < 1e-9);
        let est = shape.estimated_nodes() as f64;
        assert!((dag.len() as f64 - est).abs() / est < 0.2, "{} vs {est}", dag.len());
    }

    #[test]
    fn psdd_deterministic() {
        let s = PsddShape { vars: 5, width: 2, elements: 2 };
        assert_eq!(synth_psdd(s, 1), synth_psdd(s, 1));
    }

    #[test]
    fn m_matrix_round_trips_and_solves() {
        let m = synth_lower_triangular(60, 3, 6, 11);
        assert!(m.entries.iter().all(|e| (e.row == e.col) == (e.value > 0.0)));
        assert_eq!(parse_matrix_market(&write_matrix_market(&m)).unwrap(), m);
        let dag = sptrsv_dag(&m).unwrap();
        dag.validate().unwrap();
        let v = evaluate_reference(&dag, &dag.default_inputs().unwrap()).unwrap();
        for &o in dag.outputs() {
            assert!(v[o as usize] > 0.0 && v[o as usize] <= 1.0 + 1e-12);
        }
    }
}
