use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dpu2::arch::{derive_config, CompiledProgram, Sidecar, Topology};
use dpu2::compiler::{compile_detailed, CompileOptions, Mapper};
use dpu2::dag::{evaluate_reference, ComputeDag, NodeId};
use dpu2::dse::{
    latency_chart, load_workload, min_edp_point, min_latency_point, report_breakdown, report_throughput, summary_csv,
    sweep, sweep_csv, synthetic_suite, SweepConfig, SweepPoint, Workload, DEFAULT_WEIGHTS_TOML,
};
use dpu2::ingest::{parse_matrix_market, random_dag, write_json_dag, write_matrix_market};
use dpu2::selftest::{rel_err, run_all};
use dpu2::sim::{run_with, throughput_gops, RunOptions};

const EXIT_USAGE: u8 = 1;
const EXIT_COMPILE: u8 = 2;
const EXIT_SIM: u8 = 3;

#[derive(Parser)]
#[command(name = "dpu2", version, about = "Compiler, simulator and design-space sweep for a tree-datapath DAG processor")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a DAG into a program file plus JSON sidecar.
    Compile(CompileArgs),
    /// Run a compiled program on the simulator.
    Simulate(SimulateArgs),
    /// Sweep the (D, B, R) grid over a workload suite.
    Sweep(SweepArgs),
    /// Instruction-mix and throughput reports from sweep results.
    Report(ReportArgs),
    /// Convert between workload formats or generate random DAGs.
    Ingest(IngestArgs),
    /// Run the built-in oracle suites.
    Selftest {
        /// Larger suites.
        #[arg(long)]
        full: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MapperArg {
    Compiler,
    Random,
}

#[derive(Args)]
struct CompileArgs {
    /// Workload file (.json DAG, .mtx matrix or .psdd circuit).
    #[arg(long)]
    dag: PathBuf,
    #[arg(short = 'D', long = "D", default_value_t = 3)]
    depth: usize,
    #[arg(short = 'B', long = "B", default_value_t = 64)]
    banks: usize,
    #[arg(short = 'R', long = "R", default_value_t = 32)]
    regs: usize,
    /// `per-layer` or `full-xbar`.
    #[arg(long, default_value = "per-layer")]
    topology: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,
    #[arg(long, default_value_t = 300)]
    window: usize,
    #[arg(long, value_enum, default_value = "compiler")]
    mapper: MapperArg,
    /// Output program; the sidecar is written next to it with `.json` appended.
    #[arg(short, long, default_value = "prog.dpu2")]
    output: PathBuf,
    /// Also write the block graph as JSON.
    #[arg(long)]
    blocks_json: Option<PathBuf>,
    /// Also write the bank mapping as JSON.
    #[arg(long)]
    mapping_json: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    prog: PathBuf,
    /// Sidecar path (default: `<prog>.json`).
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// JSON object mapping input node id to value.
    #[arg(long)]
    inputs: Option<PathBuf>,
    /// Source workload: supplies default input values and enables the
    /// reference comparison.
    #[arg(long)]
    dag: Option<PathBuf>,
    /// Write a per-cycle trace (JSON lines).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Relative tolerance of the reference comparison.
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML sweep description.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Workload files (override the config's list).
    #[arg(long = "workload")]
    workloads: Vec<PathBuf>,
    /// Output directory.
    #[arg(short, long, default_value = "sweep_out")]
    out: PathBuf,
    /// Print the default energy-weights file and exit.
    #[arg(long)]
    print_default_weights: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// `points.json` written by `sweep`.
    #[arg(long)]
    points: PathBuf,
    /// Design point `D,B,R` (default: the minimum-latency point).
    #[arg(long)]
    at: Option<String>,
    #[arg(long, default_value_t = dpu2::arch::DEFAULT_FREQ_HZ)]
    freq: f64,
    #[arg(short, long, default_value = "report_out")]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Input workload file.
    #[arg(long, conflicts_with = "random")]
    input: Option<PathBuf>,
    /// Generate a random DAG with this many nodes instead.
    #[arg(long)]
    random: Option<usize>,
    #[arg(long, default_value_t = 3)]
    arity: usize,
    #[arg(long, default_value_t = 16.0)]
    parallelism: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (`.json` DAG, or `.mtx` when the input is a matrix).
    #[arg(short, long)]
    output: PathBuf,
}

/// Error carrying its process exit code.
struct Fail(u8, anyhow::Error);

trait Code<T> {
    fn code(self, c: u8) -> Result<T, Fail>;
}

impl<T, E: Into<anyhow::Error>> Code<T> for Result<T, E> {
    fn code(self, c: u8) -> Result<T, Fail> {
        self.map_err(|e| Fail(c, e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let r = match cli.cmd {
        Cmd::Compile(a) => compile_cmd(a),
        Cmd::Simulate(a) => simulate_cmd(a),
        Cmd::Sweep(a) => sweep_cmd(a),
        Cmd::Report(a) => report_cmd(a),
        Cmd::Ingest(a) => ingest_cmd(a),
        Cmd::Selftest { full } => selftest_cmd(full),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(c, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(c)
        }
    }
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> Result<(), Fail> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).code(EXIT_USAGE)?;
    }
    fs::write(path, data).with_context(|| format!("writing {}", path.display())).code(EXIT_USAGE)
}

fn sidecar_path(prog: &Path) -> PathBuf {
    let mut s = prog.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn compile_cmd(a: CompileArgs) -> Result<(), Fail> {
    let topology: Topology = a.topology.parse().code(EXIT_USAGE)?;
    let cfg = derive_config(a.depth, a.banks, a.regs, topology).code(EXIT_USAGE)?;
    let w = load_workload(&a.dag).with_context(|| format!("reading {}", a.dag.display())).code(EXIT_COMPILE)?;
    let mapper = match a.mapper {
        MapperArg::Compiler => Mapper::Compiler,
        MapperArg::Random => Mapper::Random,
    };
    let opts = CompileOptions { seed: a.seed, lambda: a.lambda, window: a.window, mapper };
    let c = compile_detailed(&w.dag, &cfg, &opts, false).code(EXIT_COMPILE)?;
    let p = &c.program;
    write(&a.output, p.to_file_bytes())?;
    let side = serde_json::to_string_pretty(&p.sidecar()).code(EXIT_USAGE)?;
    write(&sidecar_path(&a.output), side)?;
    if let Some(f) = &a.blocks_json {
        write(f, c.blocks.to_json())?;
    }
    if let Some(f) = &a.mapping_json {
        write(f, c.mapping.to_json())?;
    }
    let m = &p.meta;
    println!(
        "compiled {} ops into {} instructions ({} bits), {} cycles, {} blocks, {} conflicts, {} spills",
        dpu2::compiler::op_count(&w.dag),
        p.instrs.len(),
        p.bitstream.len_bits,
        p.cycles(),
        m.blocks,
        m.conflicts,
        m.spills
    );
    println!(
        "mix: exec {} copy {} load {} store {} nop {}",
        m.counts.exec, m.counts.copy, m.counts.load, m.counts.store, m.counts.nop
    );
    Ok(())
}

fn read_inputs(path: &Path) -> anyhow::Result<BTreeMap<NodeId, f64>> {
    let text = fs::read_to_string(path)?;
    let raw: BTreeMap<String, f64> = serde_json::from_str(&text)?;
    raw.into_iter()
        .map(|(k, v)| Ok((k.trim().parse::<NodeId>().map_err(|_| anyhow!("bad node id `{k}`"))?, v)))
        .collect()
}

fn simulate_cmd(a: SimulateArgs) -> Result<(), Fail> {
    let bytes = fs::read(&a.prog).with_context(|| format!("reading {}", a.prog.display())).code(EXIT_USAGE)?;
    let sp = a.sidecar.clone().unwrap_or_else(|| sidecar_path(&a.prog));
    let side: Sidecar = serde_json::from_str(
        &fs::read_to_string(&sp).with_context(|| format!("reading {}", sp.display())).code(EXIT_USAGE)?,
    )
    .with_context(|| format!("parsing {}", sp.display()))
    .code(EXIT_USAGE)?;
    let prog = CompiledProgram::from_files(&bytes, side).code(EXIT_SIM)?;
    let dag: Option<ComputeDag> = match &a.dag {
        Some(p) => Some(load_workload(p).with_context(|| format!("reading {}", p.display())).code(EXIT_USAGE)?.dag),
        None => None,
    };
    let mut inputs = match &dag {
        Some(d) => d.default_inputs().code(EXIT_USAGE)?,
        None => BTreeMap::new(),
    };
    if let Some(p) = &a.inputs {
        inputs.extend(read_inputs(p).with_context(|| format!("reading {}", p.display())).code(EXIT_USAGE)?);
    }
    let res = run_with(&prog, &inputs, RunOptions { trace: a.trace.is_some() }).code(EXIT_SIM)?;
    if let (Some(path), Some(tr)) = (&a.trace, &res.trace) {
        let mut s = Vec::new();
        for c in tr {
            serde_json::to_writer(&mut s, c).code(EXIT_USAGE)?;
            s.push(b'\n');
        }
        write(path, s)?;
    }
    let mismatches = res.trace_mismatches(&prog.write_trace);
    let outputs: BTreeMap<String, f32> = res.outputs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&outputs).unwrap_or_default());
    let ops = prog.meta.source.as_ref().map_or(0, |s| s.node_count - s.input_count);
    let _ = writeln!(
        out,
        "cycles {}  ops {}  gops {:.3}  hazards {}  trace mismatches {}",
        res.cycles,
        ops,
        throughput_gops(ops, res.cycles, prog.cfg.freq_hz),
        res.hazard_violations.len(),
        mismatches
    );
    if !res.hazard_violations.is_empty() || mismatches > 0 {
        return Err(Fail(EXIT_SIM, anyhow!("{} hazards, {mismatches} write-trace mismatches", res.hazard_violations.len())));
    }
    if let Some(d) = &dag {
        let want = evaluate_reference(d, &inputs).code(EXIT_USAGE)?;
        let worst = d
            .outputs()
            .iter()
            .map(|v| res.outputs.get(v).map_or(f64::INFINITY, |&g| rel_err(f64::from(g), want[*v as usize])))
            .fold(0.0, f64::max);
        let _ = writeln!(out, "max relative error vs reference {worst:.3e}");
        if worst > a.tolerance {
            return Err(Fail(EXIT_SIM, anyhow!("outputs differ from reference by {worst:.3e}")));
        }
    }
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<(), Fail> {
    if a.print_default_weights {
        print!("{DEFAULT_WEIGHTS_TOML}");
        return Ok(());
    }
    let (cfg, base) = match &a.config {
        Some(p) => (SweepConfig::load(p).code(EXIT_USAGE)?, p.parent().map(Path::to_path_buf)),
        None => (SweepConfig::default(), None),
    };
    let grid = cfg.grid().code(EXIT_USAGE)?;
    let opts = cfg.options(base.as_deref()).code(EXIT_USAGE)?;
    let files: Vec<PathBuf> = if a.workloads.is_empty() {
        cfg.workloads.iter().map(|f| base.as_deref().map_or_else(|| PathBuf::from(f), |b| b.join(f))).collect()
    } else {
        a.workloads.clone()
    };
    let workloads: Vec<Workload> = if files.is_empty() {
        synthetic_suite(cfg.scale.unwrap_or(1.0), 7)
    } else {
        files
            .iter()
            .map(|f| load_workload(f).with_context(|| format!("reading {}", f.display())))
            .collect::<anyhow::Result<_>>()
            .code(EXIT_USAGE)?
    };
    eprintln!("sweeping {} points over {} workloads", grid.len(), workloads.len());
    let pts = sweep(&workloads, &grid, &opts);
    write(&a.out.join("sweep.csv"), sweep_csv(&pts))?;
    write(&a.out.join("summary.csv"), summary_csv(&pts))?;
    write(&a.out.join("latency.svg"), latency_chart(&pts))?;
    write(&a.out.join("points.json"), serde_json::to_string_pretty(&pts).code(EXIT_USAGE)?)?;
    let evaluated = pts.iter().filter(|p| p.skipped.is_none()).count();
    println!("{evaluated} of {} points evaluated, results in {}", pts.len(), a.out.display());
    if let Some(p) = min_latency_point(&pts) {
        println!("min latency: {} ({:.4} cycles/op)", p.label(), p.mean_latency_per_op);
    }
    if let Some(p) = min_edp_point(&pts) {
        println!("min EDP proxy: {} ({:.4})", p.label(), p.mean_edp_per_op);
    }
    let failures: usize = pts.iter().map(|p| p.failures.len()).sum();
    if failures > 0 {
        return Err(Fail(EXIT_COMPILE, anyhow!("{failures} workload compilations failed (see sweep.csv)")));
    }
    Ok(())
}

fn parse_point(s: &str) -> anyhow::Result<(usize, usize, usize)> {
    let v: Vec<usize> = s.split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>()?;
    match v[..] {
        [d, b, r] => Ok((d, b, r)),
        _ => Err(anyhow!("expected D,B,R")),
    }
}

fn report_cmd(a: ReportArgs) -> Result<(), Fail> {
    let text = fs::read_to_string(&a.points).with_context(|| format!("reading {}", a.points.display())).code(EXIT_USAGE)?;
    let pts: Vec<SweepPoint> = serde_json::from_str(&text).context("parsing sweep points").code(EXIT_USAGE)?;
    let point = match &a.at {
        Some(s) => {
            let k = parse_point(s).code(EXIT_USAGE)?;
            pts.iter().find(|p| p.key() == k && p.skipped.is_none()).ok_or_else(|| Fail(EXIT_USAGE, anyhow!("point {s} not evaluated")))?
        }
        None => min_latency_point(&pts).ok_or_else(|| Fail(EXIT_USAGE, anyhow!("no evaluated points")))?,
    };
    let (csv, svg) = report_breakdown(&point.workloads);
    write(&a.out.join("breakdown.csv"), csv)?;
    write(&a.out.join("breakdown.svg"), svg)?;
    let (csv, svg) = report_throughput(&point.workloads, a.freq);
    write(&a.out.join("throughput.csv"), csv)?;
    write(&a.out.join("throughput.svg"), svg)?;
    println!("report for {} written to {}", point.label(), a.out.display());
    Ok(())
}

fn ingest_cmd(a: IngestArgs) -> Result<(), Fail> {
    let out_ext = a.output.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()).unwrap_or_default();
    if let Some(n) = a.random {
        if out_ext != "json" {
            return Err(Fail(EXIT_USAGE, anyhow!("random DAGs can only be written as .json")));
        }
        return write(&a.output, write_json_dag(&random_dag(n, a.arity, a.parallelism, a.seed)));
    }
    let input = a.input.ok_or_else(|| Fail(EXIT_USAGE, anyhow!("give --input or --random")))?;
    if out_ext == "mtx" {
        let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display())).code(EXIT_USAGE)?;
        let m = parse_matrix_market(&text).code(EXIT_USAGE)?;
        return write(&a.output, write_matrix_market(&m));
    }
    let w = load_workload(&input).with_context(|| format!("reading {}", input.display())).code(EXIT_USAGE)?;
    write(&a.output, write_json_dag(&w.dag))?;
    println!("{}: {} nodes, {} outputs", a.output.display(), w.dag.len(), w.dag.outputs().len());
    Ok(())
}

fn selftest_cmd(full: bool) -> Result<(), Fail> {
    let checks = run_all(!full);
    let mut failed = 0;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        return Err(Fail(EXIT_SIM, anyhow!("{failed} self-test suites failed")));
    }
    Ok(())
}
