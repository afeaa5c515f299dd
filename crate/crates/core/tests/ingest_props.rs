use std::path::PathBuf;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpu2::dag::evaluate_reference;
use dpu2::dse::load_workload;
use dpu2::ingest::synth::{synth_lower_triangular, synth_psdd, PsddShape};
use dpu2::ingest::{parse_json_dag, parse_matrix_market, parse_psdd, random_dag, sptrsv_system, write_json_dag, SparseMatrix};
use dpu2::selftest::dense_forward_substitution;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn check_solution(m: &SparseMatrix, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rhs: Vec<f64> = (0..m.dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let sys = sptrsv_system(m, &rhs).unwrap();
    let vals = evaluate_reference(&sys.dag, &sys.dag.default_inputs().unwrap()).unwrap();
    let want = dense_forward_substitution(m, &rhs);
    for (i, &v) in sys.solution.iter().enumerate() {
        let got = vals[v as usize];
        assert!((got - want[i]).abs() <= 1e-9 * want[i].abs().max(1.0), "x[{i}] = {got}, want {}", want[i]);
    }
}

#[test]
fn fixture_systems_match_dense_substitution() {
    for (i, f) in ["lower_48.mtx", "lower_120.mtx", "lower_300.mtx"].into_iter().enumerate() {
        let m = parse_matrix_market(&std::fs::read_to_string(fixture(f)).unwrap()).unwrap();
        check_solution(&m, i as u64);
    }
}

#[test]
fn hand_solved_2x2() {
    let text = "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 2.0\n2 1 -1.0\n2 2 4.0\n";
    let m = parse_matrix_market(text).unwrap();
    let sys = sptrsv_system(&m, &[6.0, 7.0]).unwrap();
    let vals = evaluate_reference(&sys.dag, &sys.dag.default_inputs().unwrap()).unwrap();
    assert_eq!(vals[sys.solution[0] as usize], 3.0);
    assert_eq!(vals[sys.solution[1] as usize], 2.5);
}

#[test]
fn random_dag_parallelism_tracks_request() {
    let dag = random_dag(10_000, 3, 400.0, 1);
    let st = dag.validate().unwrap();
    assert_eq!(st.node_count, 10_000);
    let ratio = st.node_count as f64 / st.longest_path as f64;
    assert!((200.0..=800.0).contains(&ratio), "n/l = {ratio}");
}

#[test]
fn synthetic_circuit_evaluates_to_one() {
    let text = synth_psdd(PsddShape::for_nodes(1500, 4, 3), 9);
    let dag = parse_psdd(&text).unwrap();
    let vals = evaluate_reference(&dag, &dag.default_inputs().unwrap()).unwrap();
    let root = dag.outputs()[0];
    assert!((vals[root as usize] - 1.0).abs() < 1e-9);
}

/// Real benchmark files are not distributed; point `DPU2_BENCH_DIR` at a
/// directory holding them to run these checks.
fn bench(name: &str) -> Option<PathBuf> {
    let p = PathBuf::from(std::env::var_os("DPU2_BENCH_DIR")?).join(name);
    p.exists().then_some(p)
}

#[test]
fn benchmark_sizes_when_available() {
    if let Some(p) = bench("tretail.psdd") {
        let st = load_workload(&p).unwrap().dag.validate().unwrap();
        assert!((4_500..=18_000).contains(&st.node_count), "tretail has {} nodes", st.node_count);
        assert_eq!(st.longest_path, 49);
    }
    if let Some(p) = bench("bp_200.mtx") {
        let st = load_workload(&p).unwrap().dag.validate().unwrap();
        assert!((4_000..=16_000).contains(&st.node_count), "bp_200 has {} nodes", st.node_count);
        assert!((70..=278).contains(&st.longest_path), "bp_200 longest path {}", st.longest_path);
    }
    if let Some(p) = bench("mnist.psdd") {
        let st = load_workload(&p).unwrap().dag.validate().unwrap();
        assert!((5_000..=20_000).contains(&st.node_count), "mnist has {} nodes", st.node_count);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn json_round_trip(n in 1usize..300, arity in 2usize..5, seed in any::<u64>()) {
        let dag = random_dag(n, arity, 5.0, seed);
        let back = parse_json_dag(&write_json_dag(&dag)).unwrap();
        prop_assert_eq!(back, dag);
    }

    #[test]
    fn synthetic_systems_match_dense_substitution(dim in 1usize..80, per_row in 1usize..5, band in 1usize..30, seed in any::<u64>()) {
        check_solution(&synth_lower_triangular(dim, per_row, band, seed), seed);
    }

    #[test]
    fn parsers_never_panic_on_garbage(s in "\\PC{0,300}") {
        let _ = parse_json_dag(&s);
        let _ = parse_matrix_market(&s);
        let _ = parse_psdd(&s);
    }

    #[test]
    fn parsers_never_panic_on_mutated_input(pos in any::<prop::sample::Index>(), byte in any::<u8>(), which in 0usize..3) {
        let src = match which {
            0 => write_json_dag(&random_dag(30, 3, 4.0, 1)),
            1 => std::fs::read_to_string(fixture("lower_48.mtx")).unwrap(),
            _ => synth_psdd(PsddShape::for_nodes(200, 3, 2), 4),
        };
        let mut bytes = src.into_bytes();
        let i = pos.index(bytes.len());
        bytes[i] = byte;
        let s = String::from_utf8_lossy(&bytes);
        let _ = parse_json_dag(&s);
        let _ = parse_matrix_market(&s);
        let _ = parse_psdd(&s);
    }

    #[test]
    fn mtx_line_noise(lines in prop::collection::vec((0i64..6, 0i64..6, -5.0f64..5.0), 0..20)) {
        let mut text = String::from("%%MatrixMarket matrix coordinate real general\n5 5 ");
        text.push_str(&format!("{}\n", lines.len()));
        for (r, c, v) in &lines {
            text.push_str(&format!("{r} {c} {v}\n"));
        }
        if let Ok(m) = parse_matrix_market(&text) {
            prop_assert!(m.entries.iter().all(|e| e.row >= e.col && e.row < m.dim));
        }
    }
}
