use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ciaftp_core::oracle::{self, Algorithm, OracleError};
use ciaftp_core::update_rule::DepthOverflow;
use ciaftp_core::{
    build_slice_with, expected_depth_bound, interval_table, min_mass, prefix_closure, pw_extended, run, EngineError,
    Limits, RngStream, RunOutput, SliceLabel, TransitionKernel, GENERATOR,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::spec::{parse_kernel_spec, LoadedKernel, SpecError};

#[derive(Debug, Parser)]
#[command(
    name = "ciaftp",
    version,
    about = "Exact sampling from variable-length and infinite-memory Markov chains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw independent exact samples of L consecutive stationary symbols.
    Sample(RunArgs),
    /// Compare the sample law with the exact stationary law (finite-order kernels).
    Validate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = AlgorithmArg::Ciaftp)]
        algorithm: AlgorithmArg,
    },
    /// Run the adaptive engine and the extended-chain baseline on the same seeds.
    Bench(RunArgs),
    /// Per-iteration records of one run.
    Trace(RunArgs),
    /// Show a kernel's dictionary and coupling masses, or the slice for one draw.
    #[command(alias = "inspect-slice")]
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Ciaftp,
    PwExtended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Kernel spec (JSON).
    #[arg(long)]
    pub kernel: PathBuf,
    /// Window length L.
    #[arg(long, default_value_t = 1)]
    pub length: usize,
    /// Number of independent runs N.
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Base seed; run i uses seed + i. Falls back to CIAFTP_SEED, then OS entropy.
    #[arg(long, env = "CIAFTP_SEED")]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iter: u64,
    #[arg(long, default_value_t = 10_000)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 10_000_000)]
    pub max_nodes: usize,
    /// Fail a run instead of bounding a slice that reaches --max-depth.
    #[arg(long)]
    pub strict_depth: bool,
    /// Worker threads (default: all cores). Output order does not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Omit wall-clock fields so that reruns are byte-identical.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub kernel: PathBuf,
    /// Show the slice and interval table for this draw.
    #[arg(long)]
    pub u: Option<f64>,
    /// Largest k in the A_k^- table.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Window length used for the expected-depth bound.
    #[arg(long, default_value_t = 1)]
    pub length: usize,
    #[arg(long, default_value_t = 10_000)]
    pub max_depth: usize,
    /// Print the slice as Graphviz DOT instead of indented text.
    #[arg(long)]
    pub dot: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failed command: a stable code, a message and an exit status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub exit: i32,
}

impl CliError {
    pub fn new(code: &str, message: impl Into<String>, exit: i32) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
            exit,
        }
    }

    /// `error[code]: message` on one line.
    pub fn line(&self) -> String {
        format!("error[{}]: {}", self.code, self.message.replace('\n', " "))
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        CliError::new(e.code(), e.to_string(), 2)
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        let code = match &e {
            OracleError::NotFiniteOrder => "not_finite_order",
            OracleError::StateSpaceGuard { .. } => "state_space_guard",
            OracleError::Reducible(_) => "reducible",
            OracleError::Periodic(_) => "periodic",
            _ => "oracle_error",
        };
        CliError::new(code, e.to_string(), 1)
    }
}

/// What a command produced: text for the output file (or stdout), notes for stderr, and
/// the exit status.
#[derive(Debug, Default)]
pub struct Outcome {
    pub output: String,
    pub notes: Vec<String>,
    pub exit: i32,
}

pub fn execute(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Sample(args) => sample(&args),
        Command::Validate { run, algorithm } => validate(&run, algorithm),
        Command::Bench(args) => bench(&args),
        Command::Trace(args) => trace(&args),
        Command::Inspect(args) => inspect(&args),
    }
}

fn load(path: &Path) -> Result<LoadedKernel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new("missing_file", format!("cannot read {}: {e}", path.display()), 2))?;
    Ok(parse_kernel_spec(&text)?)
}

struct Prepared {
    loaded: LoadedKernel,
    seed: u64,
    limits: Limits,
    pool: rayon::ThreadPool,
}

fn prepare(args: &RunArgs) -> Result<Prepared, CliError> {
    if args.length == 0 {
        return Err(CliError::new("usage", "--length must be at least 1", 2));
    }
    if args.runs == 0 {
        return Err(CliError::new("usage", "--runs must be at least 1", 2));
    }
    if args.max_iter == 0 || args.max_depth == 0 || args.max_nodes == 0 {
        return Err(CliError::new("usage", "limits must be positive", 2));
    }
    let loaded = load(&args.kernel)?;
    let seed = args.seed.unwrap_or_else(rand::random);
    let limits = Limits {
        max_iter: args.max_iter,
        max_depth: args.max_depth,
        max_nodes: args.max_nodes,
        overflow: if args.strict_depth {
            DepthOverflow::Fail
        } else {
            DepthOverflow::Bound
        },
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::new("thread_pool", e.to_string(), 1))?;
    Ok(Prepared {
        loaded,
        seed,
        limits,
        pool,
    })
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn metadata(command: &str, args: &RunArgs, p: &Prepared) -> Value {
    json!({
        "command": command,
        "kernel": file_name(&args.kernel),
        "kernel_sha256": p.loaded.sha256,
        "kernel_type": p.loaded.kernel.family_name(),
        "length": args.length,
        "runs": args.runs,
        "seed": p.seed,
        "generator": GENERATOR,
        "max_iter": p.limits.max_iter,
        "max_depth": p.limits.max_depth,
        "max_nodes": p.limits.max_nodes,
        "depth_overflow": if args.strict_depth { "fail" } else { "bound" },
    })
}

fn header(meta: &Value) -> String {
    let mut out = String::new();
    if let Value::Object(map) = meta {
        for (k, v) in map {
            let v = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            let _ = writeln!(out, "# {k}={v}");
        }
    }
    out
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn run_many(p: &Prepared, length: usize, runs: usize, algorithm: Algorithm) -> Vec<Result<RunOutput, EngineError>> {
    let kernel = &p.loaded.kernel;
    p.pool.install(|| {
        (0..runs as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::for_run(p.seed, i);
                match algorithm {
                    Algorithm::Ciaftp => run(kernel, length, &mut rng, &p.limits),
                    Algorithm::PwExtended => pw_extended(kernel, length, &mut rng, &p.limits),
                }
            })
            .collect()
    })
}

fn failure_summary(results: &[Result<RunOutput, EngineError>]) -> Option<CliError> {
    let failed: Vec<&EngineError> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    let first = failed.first()?;
    Some(CliError::new(
        "run_failed",
        format!(
            "{} of {} runs failed; first: {} ({first})",
            failed.len(),
            results.len(),
            first.code()
        ),
        1,
    ))
}

fn sample(args: &RunArgs) -> Result<Outcome, CliError> {
    let p = prepare(args)?;
    let start = std::time::Instant::now();
    let results = run_many(&p, args.length, args.runs, Algorithm::Ciaftp);
    let alphabet = &p.loaded.alphabet;
    let mut meta = metadata("sample", args, &p);
    if !args.no_timing {
        meta["wall_ns"] = json!(start.elapsed().as_nanos() as u64);
    }
    let rows: Vec<Value> = results
        .iter()
        .enumerate()
        .map(|(i, r)| match r {
            Ok(o) => json!({
                "run_id": i,
                "sample": alphabet.format_symbols(&o.window),
                "tau": o.diagnostics.tau,
                "iterations": o.diagnostics.iterations,
                "node_touches": o.diagnostics.node_touches,
                "status": "ok",
            }),
            Err(e) => {
                let d = e.diagnostics();
                json!({
                    "run_id": i,
                    "sample": "",
                    "tau": Value::Null,
                    "iterations": d.map_or(0, |d| d.iterations),
                    "node_touches": d.map_or(0, |d| d.node_touches),
                    "status": e.code(),
                })
            }
        })
        .collect();
    let output = match args.format {
        Format::Json => serde_json::to_string_pretty(&json!({ "metadata": meta, "runs": rows })).unwrap() + "\n",
        Format::Csv => {
            let cols = ["run_id", "sample", "tau", "iterations", "node_touches", "status"];
            header(&meta) + &csv_text(&cols, rows.iter().map(|r| cols.iter().map(|c| cell(&r[*c])).collect()))
        }
    };
    finish(output, p.seed, failure_summary(&results))
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn finish(output: String, seed: u64, failure: Option<CliError>) -> Result<Outcome, CliError> {
    let mut notes = vec![format!("seed={seed}")];
    let exit = match failure {
        Some(e) => {
            notes.push(e.line());
            e.exit
        }
        None => 0,
    };
    Ok(Outcome { output, notes, exit })
}

fn validate(args: &RunArgs, algorithm: AlgorithmArg) -> Result<Outcome, CliError> {
    let p = prepare(args)?;
    let algorithm = match algorithm {
        AlgorithmArg::Ciaftp => Algorithm::Ciaftp,
        AlgorithmArg::PwExtended => Algorithm::PwExtended,
    };
    let start = std::time::Instant::now();
    let report = p
        .pool
        .install(|| oracle::validate_with(&p.loaded.kernel, args.length, args.runs, p.seed, &p.limits, algorithm))?;
    let codec = ciaftp_core::WindowCodec::new(p.loaded.alphabet.size(), args.length).expect("oracle built it");
    let mut meta = metadata("validate", args, &p);
    meta["algorithm"] = json!(algorithm.name());
    if !args.no_timing {
        meta["wall_ns"] = json!(start.elapsed().as_nanos() as u64);
    }
    let failures: serde_json::Map<String, Value> =
        report.failures.iter().map(|(c, n)| (c.to_string(), json!(n))).collect();
    let cells: Vec<Value> = report
        .cells
        .iter()
        .map(|c| {
            json!({
                "window": p.loaded.alphabet.format_symbols(&codec.decode(c.window_id)),
                "expected": c.expected,
                "count": c.count,
                "observed": c.observed,
            })
        })
        .collect();
    let doc = json!({
        "metadata": meta,
        "tv": report.tv,
        "tolerance": report.tolerance,
        "n_runs": report.n_runs,
        "n_failed": report.n_failed,
        "failures": failures,
        "passed": report.passed,
        "cells": cells,
    });
    let failure = (!report.passed).then(|| {
        CliError::new(
            "validation_failed",
            format!(
                "tv {} > tolerance {} or {} failed runs",
                report.tv, report.tolerance, report.n_failed
            ),
            1,
        )
    });
    finish(serde_json::to_string_pretty(&doc).unwrap() + "\n", p.seed, failure)
}

fn bench(args: &RunArgs) -> Result<Outcome, CliError> {
    let p = prepare(args)?;
    let kernel = &p.loaded.kernel;
    let law = match kernel.order() {
        Some(_) => Some(oracle::oracle_window_law(kernel, args.length)?),
        None => None,
    };
    let mut algorithms = vec![Algorithm::Ciaftp];
    if kernel.order().is_some() {
        algorithms.push(Algorithm::PwExtended);
    }
    let mut rows = Vec::new();
    let mut summary = String::new();
    let mut failure = None;
    for &alg in &algorithms {
        let results = run_many(&p, args.length, args.runs, alg);
        let mut counts = law.as_ref().map(|l| vec![0u64; l.probs.len()]);
        let (mut tau_sum, mut touch_sum, mut ok) = (0i64, 0u64, 0usize);
        let mut failures: Vec<(&'static str, usize)> = Vec::new();
        for (i, r) in results.iter().enumerate() {
            let seed = p.seed.wrapping_add(i as u64);
            match r {
                Ok(o) => {
                    ok += 1;
                    tau_sum += o.diagnostics.tau;
                    touch_sum += o.diagnostics.node_touches;
                    if let Some(c) = counts.as_mut() {
                        c[o.window_id as usize] += 1;
                    }
                    rows.push(vec![
                        alg.name().to_string(),
                        seed.to_string(),
                        p.loaded.alphabet.format_symbols(&o.window),
                        o.diagnostics.tau.to_string(),
                        o.diagnostics.node_touches.to_string(),
                        if args.no_timing {
                            String::new()
                        } else {
                            o.diagnostics.wall_ns.to_string()
                        },
                    ]);
                }
                Err(e) => {
                    match failures.iter_mut().find(|(c, _)| *c == e.code()) {
                        Some((_, n)) => *n += 1,
                        None => failures.push((e.code(), 1)),
                    }
                    rows.push(vec![
                        alg.name().to_string(),
                        seed.to_string(),
                        String::new(),
                        String::new(),
                        e.diagnostics().map_or(0, |d| d.node_touches).to_string(),
                        String::new(),
                    ]);
                }
            }
        }
        if failure.is_none() {
            failure = failure_summary(&results);
        }
        let _ = write!(
            summary,
            "# summary algorithm={} runs={} ok={} mean_tau={} mean_node_touches={}",
            alg.name(),
            args.runs,
            ok,
            tau_sum as f64 / ok.max(1) as f64,
            touch_sum as f64 / ok.max(1) as f64,
        );
        if let (Some(law), Some(counts)) = (&law, &counts) {
            let r = oracle::compare(law, counts, args.runs, failures);
            let _ = write!(summary, " tv={} tolerance={} passed={}", r.tv, r.tolerance, r.passed);
        }
        summary.push('\n');
    }
    if law.is_none() {
        summary.push_str("# pw_extended skipped: kernel has infinite memory\n");
    }
    let meta = metadata("bench", args, &p);
    let cols = ["algorithm", "seed", "sample", "tau", "node_touches", "wall_ns"];
    let output = header(&meta) + &csv_text(&cols, rows) + &summary;
    finish(output, p.seed, failure)
}

fn trace(args: &RunArgs) -> Result<Outcome, CliError> {
    let p = prepare(args)?;
    let mut rng = RngStream::new(p.seed);
    let result = run(&p.loaded.kernel, args.length, &mut rng, &p.limits);
    let (diag, failure) = match &result {
        Ok(o) => (&o.diagnostics, None),
        Err(e) => match e.diagnostics() {
            Some(d) => (d, Some(CliError::new(e.code(), e.to_string(), 1))),
            None => return Err(CliError::new(e.code(), e.to_string(), 1)),
        },
    };
    let mut meta = metadata("trace", args, &p);
    if let Ok(o) = &result {
        meta["sample"] = json!(p.loaded.alphabet.format_symbols(&o.window));
        meta["tau"] = json!(o.diagnostics.tau);
    }
    if !args.no_timing {
        meta["wall_ns"] = json!(diag.wall_ns);
    }
    let output = match args.format {
        Format::Json => {
            serde_json::to_string_pretty(&json!({
                "metadata": meta,
                "regeneration_times": diag.regeneration_times,
                "records": diag.records.iter().map(|r| json!({
                    "t": r.t, "leaves": r.leaves, "depth": r.depth,
                    "node_touches": r.node_touches, "slice_depth": r.slice_depth,
                })).collect::<Vec<_>>(),
            }))
            .unwrap()
                + "\n"
        }
        Format::Csv => {
            let cols = ["t", "leaves", "depth", "node_touches", "slice_depth"];
            header(&meta)
                + &csv_text(
                    &cols,
                    diag.records.iter().map(|r| {
                        vec![
                            r.t.to_string(),
                            r.leaves.to_string(),
                            r.depth.to_string(),
                            r.node_touches.to_string(),
                            r.slice_depth.to_string(),
                        ]
                    }),
                )
        }
    };
    finish(output, p.seed, failure)
}

fn inspect(args: &InspectArgs) -> Result<Outcome, CliError> {
    let loaded = load(&args.kernel)?;
    let kernel = &loaded.kernel;
    let alphabet = &loaded.alphabet;
    let mut out = String::new();
    let _ = writeln!(out, "# kernel={} sha256={}", file_name(&args.kernel), loaded.sha256);
    let _ = writeln!(out, "# type={}", kernel.family_name());
    match args.u {
        Some(u) => {
            if !(0.0..1.0).contains(&u) {
                return Err(CliError::new("usage", "--u must lie in [0, 1)", 2));
            }
            let slice = build_slice_with(kernel, u, args.max_depth, DepthOverflow::Fail)
                .map_err(|e| CliError::new("max_depth_exceeded", e.to_string(), 1))?;
            let _ = writeln!(
                out,
                "# slice u={u} depth={} leaves={} node_touches={} regeneration={}",
                slice.depth(),
                slice.trie.leaf_count(),
                slice.node_touches,
                slice.is_regeneration()
            );
            let label = |l: &SliceLabel| match l {
                SliceLabel::Next(g) => alphabet.name(*g).to_string(),
                SliceLabel::Unresolved => "?".to_string(),
            };
            if args.dot {
                out.push_str(&slice.trie.to_dot(alphabet, label));
            } else {
                out.push_str(&slice.trie.to_text(alphabet, label));
            }
            let mut rows = Vec::new();
            for ctx in slice.trie.leaf_contexts() {
                let name = alphabet.format(&ctx);
                let table = interval_table(kernel, &ctx, Some(u))
                    .map_err(|e| CliError::new("kernel_error", e.to_string(), 1))?;
                // Empty intervals carry no mass; only the ones a draw can land in are listed.
                for iv in table.into_iter().filter(|iv| iv.alpha < iv.beta) {
                    rows.push(vec![
                        name.clone(),
                        iv.level.to_string(),
                        alphabet.name(iv.symbol).to_string(),
                        iv.alpha.to_string(),
                        iv.beta.to_string(),
                    ]);
                }
            }
            out.push_str(&csv_text(&["context", "level", "symbol", "alpha", "beta"], rows));
        }
        None => {
            if let Some(tree) = kernel.as_tree() {
                let d = tree.tree();
                let _ = writeln!(out, "# dictionary leaves={} depth={}", d.leaf_count(), d.depth());
                out.push_str(&d.to_text(alphabet, |p| {
                    p.probs().iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
                }));
                let closure = prefix_closure(d).map_err(|e| CliError::new("trie_error", e.to_string(), 1))?;
                let _ = writeln!(
                    out,
                    "# prefix_closure leaves={} bound={} (|D|*d(D))",
                    closure.leaf_count(),
                    d.leaf_count() * d.depth().max(1)
                );
                let mut words: Vec<String> = closure
                    .leaf_contexts()
                    .iter()
                    .map(|c| {
                        if c.is_empty() {
                            "ε".to_string()
                        } else {
                            alphabet.format(c)
                        }
                    })
                    .collect();
                words.sort();
                let _ = writeln!(out, "{}", words.join(" "));
            }
            let k_max = args.k_max.unwrap_or(match kernel.order() {
                Some(d) => d + 1,
                None => 16,
            });
            let mut rows = Vec::new();
            for k in 0..=k_max {
                match min_mass(kernel, k) {
                    Ok(m) => rows.push(vec![k.to_string(), m.to_string()]),
                    Err(e) => {
                        let _ = writeln!(out, "# A_k^- table stops at k={k}: {e}");
                        break;
                    }
                }
            }
            out.push_str(&csv_text(&["k", "min_mass"], rows));
            match expected_depth_bound(kernel, args.length, k_max) {
                Ok(b) => {
                    let _ = writeln!(
                        out,
                        "# expected_depth_bound length={} k_max={k_max} bound={} regeneration_sum={} regeneration_sum_finite={}",
                        args.length, b.bound, b.regeneration_sum, b.regeneration_sum_finite
                    );
                }
                Err(e) => {
                    let _ = writeln!(out, "# expected_depth_bound unavailable: {e}");
                }
            }
        }
    }
    Ok(Outcome {
        output: out,
        notes: Vec::new(),
        exit: 0,
    })
}

/// Output destination of a command, if it has one.
pub fn out_path(cli: &Cli) -> Option<&Path> {
    match &cli.command {
        Command::Sample(a) | Command::Bench(a) | Command::Trace(a) | Command::Validate { run: a, .. } => {
            a.out.as_deref()
        }
        Command::Inspect(a) => a.out.as_deref(),
    }
}
