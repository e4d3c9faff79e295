//! `blowpack`: generate packing instances, pack them, re-verify packings
//! against their instance, and sweep benchmarks into CSV.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use blowpack::generate::{generate, GeneratorSpec, HostKind, InstanceFile};
use blowpack::io::{read_json, to_canonical_json, write_json};
use blowpack::orchestrator::{
    pack_extended, pack_quasirandom, quasirandom_frame, verify_result, InductionLedger, PackingResult,
    PipelineConfig, PipelineReport,
};
use blowpack::rng;
use blowpack::testers::TesterSuite;
use blowpack::instance::{BlowUpInstance, ConditionRow};
use blowpack::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "blowpack", version, about = "Pack bounded-degree graphs into regular blow-ups and quasirandom hosts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    Extended,
    Quasirandom,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance (with its testers) into `<out>/instance.json`.
    Gen {
        #[arg(long)]
        seed: u64,
        /// Generator spec JSON; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Pack an instance and write result, report and timings into `<out>`.
    Pack {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        instance: PathBuf,
        /// Tester suite JSON overriding the one stored in the instance.
        #[arg(long)]
        testers: Option<PathBuf>,
        /// Pipeline config JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write `ledger.json` with a packing snapshot after every step.
        #[arg(long)]
        dump_ledger: bool,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Re-check a result file against its instance. Exit 1 on any violation.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        testers: Option<PathBuf>,
        /// Tester tolerance as a fraction of the cluster size; defaults to the
        /// instance's `alpha`.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Generate and pack a sweep of instances in parallel, writing
    /// `bench.csv` (one row per run) and `bench_summary.csv`.
    Bench {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generator spec JSON used as the base of every run.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![128, 256, 512])]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5])]
        densities: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![8])]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        reps: usize,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
}

/// The packing as written by `pack`.
#[derive(Debug, Serialize, Deserialize)]
struct ResultFile {
    mode: Mode,
    seed: u64,
    phi: Vec<Vec<[usize; 2]>>,
}

#[derive(Serialize)]
struct StageTime {
    stage: String,
    seconds: f64,
}

#[derive(Serialize)]
struct TimingsFile {
    stages: Vec<StageTime>,
    total: f64,
}

#[derive(Serialize)]
struct PackSummary {
    valid: bool,
    out: String,
    violations: Vec<ConditionRow>,
}

#[derive(Serialize)]
struct VerifySummary {
    valid: bool,
    violations: Vec<ConditionRow>,
    set_testers_within: usize,
    set_testers: usize,
    leftover_within: bool,
}

#[derive(Serialize)]
struct ErrorFile<'a> {
    error: &'a Error,
}

/// Exit status of a command that ran to completion.
enum Outcome {
    Ok,
    Violations,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("BLOWPACK_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("BLOWPACK_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn mode_of(file: &InstanceFile) -> Mode {
    if file.quasirandom.is_some() {
        Mode::Quasirandom
    } else {
        Mode::Extended
    }
}

fn apply_mode(spec: &mut GeneratorSpec, mode: Option<Mode>) {
    match mode {
        Some(Mode::Quasirandom) if !spec.host.is_quasirandom() => spec.host = HostKind::ErdosRenyiQuasirandom,
        Some(Mode::Extended) if spec.host.is_quasirandom() => spec.host = HostKind::RandomSuperregularMultipartite,
        _ => {}
    }
}

fn load_spec(config: Option<&Path>) -> Result<GeneratorSpec> {
    config.map_or_else(|| Ok(GeneratorSpec::default()), read_json)
}

fn load_testers(file: &InstanceFile, testers: Option<&Path>) -> Result<TesterSuite> {
    testers.map_or_else(|| Ok(file.testers.clone()), read_json)
}

fn create_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))
}

/// Runs the pipeline on a loaded instance in the requested mode.
fn run_pipeline(file: &InstanceFile, testers: &TesterSuite, mode: Mode, cfg: &PipelineConfig) -> Result<PackingResult> {
    match mode {
        Mode::Extended => {
            let inst = file
                .extended
                .as_ref()
                .ok_or_else(|| Error::Config("instance has no extended blow-up part".into()))?;
            pack_extended(inst, testers, cfg)
        }
        Mode::Quasirandom => {
            let q = file
                .quasirandom
                .as_ref()
                .ok_or_else(|| Error::Config("instance has no quasirandom part".into()))?;
            pack_quasirandom(&q.host, &q.guests, testers, cfg)
        }
    }
}

fn verification_frame(file: &InstanceFile, mode: Mode) -> Result<BlowUpInstance> {
    match mode {
        Mode::Extended => file
            .extended
            .clone()
            .ok_or_else(|| Error::Config("instance has no extended blow-up part".into())),
        Mode::Quasirandom => {
            let q = file
                .quasirandom
                .as_ref()
                .ok_or_else(|| Error::Config("instance has no quasirandom part".into()))?;
            quasirandom_frame(&q.host, &q.guests)
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    print!("{}", to_canonical_json(value)?);
    Ok(())
}

fn cmd_gen(seed: u64, config: Option<&Path>, out: &Path, mode: Option<Mode>) -> Result<Outcome> {
    let mut spec = load_spec(config)?;
    apply_mode(&mut spec, mode);
    let file = generate(&spec, seed).map_err(|e| e.in_stage("generate"))?;
    create_dir(out)?;
    write_json(&out.join("instance.json"), &file)?;
    write_json(&out.join("testers.json"), &file.testers)?;
    print_json(&file.report)?;
    Ok(Outcome::Ok)
}

#[allow(clippy::too_many_arguments)]
fn cmd_pack(
    seed: u64,
    instance: &Path,
    testers: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
    dump_ledger: bool,
    mode: Option<Mode>,
) -> Result<Outcome> {
    let file: InstanceFile = read_json(instance)?;
    let testers = load_testers(&file, testers)?;
    let mut cfg: PipelineConfig = config.map_or_else(|| Ok(PipelineConfig::default()), read_json)?;
    cfg.seed = seed;
    cfg.snapshots = dump_ledger;
    let mode = mode.unwrap_or_else(|| mode_of(&file));
    let start = Instant::now();
    let mut result = run_pipeline(&file, &testers, mode, &cfg)?;
    let total = start.elapsed().as_secs_f64();
    create_dir(out)?;
    let snapshots = std::mem::take(&mut result.report.ledger.snapshots);
    write_json(&out.join("result.json"), &ResultFile { mode, seed, phi: result.phi.clone() })?;
    write_json(&out.join("report.json"), &result.report)?;
    let stages = result.timings.iter().map(|(s, t)| StageTime { stage: s.clone(), seconds: *t }).collect();
    write_json(&out.join("timings.json"), &TimingsFile { stages, total })?;
    if dump_ledger {
        let ledger = InductionLedger { snapshots, ..result.report.ledger.clone() };
        write_json(&out.join("ledger.json"), &ledger)?;
    }
    let violations: Vec<_> = result.report.verification.rows.iter().filter(|r| !r.passed).cloned().collect();
    let valid = violations.is_empty();
    print_json(&PackSummary { valid, out: out.display().to_string(), violations })?;
    Ok(if valid { Outcome::Ok } else { Outcome::Violations })
}

fn cmd_verify(instance: &Path, result: &Path, testers: Option<&Path>, alpha: Option<f64>) -> Result<Outcome> {
    let file: InstanceFile = read_json(instance)?;
    let testers = load_testers(&file, testers)?;
    let res: ResultFile = read_json(result)?;
    let frame = verification_frame(&file, res.mode)?;
    let alpha = alpha.unwrap_or(file.spec.alpha);
    let packing = PackingResult { phi: res.phi, report: PipelineReport::default(), timings: Vec::new() };
    let report = verify_result(&packing, &frame, &testers, alpha);
    let violations: Vec<_> = report.rows.iter().filter(|r| !r.passed).cloned().collect();
    let summary = VerifySummary {
        valid: violations.is_empty(),
        violations,
        set_testers_within: report.set_testers.iter().filter(|t| t.within).count(),
        set_testers: report.set_testers.len(),
        leftover_within: report.leftover.within,
    };
    print_json(&summary)?;
    Ok(if summary.valid { Outcome::Ok } else { Outcome::Violations })
}

#[derive(Clone, Debug, Default, Serialize)]
struct BenchRow {
    n: usize,
    d: f64,
    count: usize,
    rep: usize,
    seed: u64,
    success: bool,
    valid: bool,
    measured_eps: f64,
    gen_s: f64,
    refine_s: f64,
    slices_s: f64,
    candidacy_s: f64,
    steps_s: f64,
    completion_s: f64,
    verify_s: f64,
    total_s: f64,
    set_within_fraction: f64,
    max_set_deviation: f64,
    max_leftover_deviation: f64,
    step_pass_fraction: f64,
    error: String,
}

impl BenchRow {
    fn stage_mut(&mut self, stage: &str) -> Option<&mut f64> {
        Some(match stage {
            "refine" => &mut self.refine_s,
            "slices" => &mut self.slices_s,
            "candidacy" => &mut self.candidacy_s,
            "steps" => &mut self.steps_s,
            "completion" => &mut self.completion_s,
            "verify" => &mut self.verify_s,
            _ => return None,
        })
    }
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    n: usize,
    d: f64,
    count: usize,
    runs: usize,
    successes: usize,
    success_rate: f64,
    mean_gen_s: f64,
    mean_pack_s: f64,
    mean_total_s: f64,
    mean_set_within_fraction: f64,
    mean_max_leftover_deviation: f64,
}

fn bench_run(base: &GeneratorSpec, mode: Option<Mode>, n: usize, d: f64, count: usize, rep: usize, seed: u64) -> BenchRow {
    let mut spec = GeneratorSpec { n, d, count, ..base.clone() };
    apply_mode(&mut spec, mode);
    let mut row = BenchRow { n, d, count, rep, seed, ..BenchRow::default() };
    let start = Instant::now();
    let file = match generate(&spec, seed) {
        Ok(f) => f,
        Err(e) => {
            row.error = e.in_stage("generate").to_string();
            return row;
        }
    };
    row.gen_s = start.elapsed().as_secs_f64();
    row.measured_eps = file.report.measured_eps;
    let cfg = PipelineConfig { alpha: spec.alpha, ..PipelineConfig::new(seed) };
    match run_pipeline(&file, &file.testers, mode_of(&file), &cfg) {
        Ok(res) => {
            row.success = true;
            row.valid = res.valid();
            for (stage, t) in &res.timings {
                if let Some(slot) = row.stage_mut(stage) {
                    *slot += t;
                }
            }
            let v = &res.report.verification;
            if !v.set_testers.is_empty() {
                row.set_within_fraction = v.set_testers.iter().filter(|t| t.within).count() as f64 / v.set_testers.len() as f64;
            }
            row.max_set_deviation = v.set_testers.iter().map(|t| t.deviation).fold(0.0, f64::max);
            row.max_leftover_deviation = v.leftover.max_deviation;
            let steps: Vec<_> = res.report.ledger.entries.iter().filter_map(|e| e.step.as_ref()).collect();
            if !steps.is_empty() {
                row.step_pass_fraction = steps.iter().filter(|s| s.all_passed()).count() as f64 / steps.len() as f64;
            }
        }
        Err(e) => row.error = e.to_string(),
    }
    row.total_s = start.elapsed().as_secs_f64();
    row
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = xs.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    if k == 0 {
        0.0
    } else {
        s / k as f64
    }
}

fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, u64, usize), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.n, r.d.to_bits(), r.count)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((n, d, count), rs)| {
            let ok: Vec<&&BenchRow> = rs.iter().filter(|r| r.success && r.valid).collect();
            SummaryRow {
                n,
                d: f64::from_bits(d),
                count,
                runs: rs.len(),
                successes: ok.len(),
                success_rate: ok.len() as f64 / rs.len() as f64,
                mean_gen_s: mean(rs.iter().map(|r| r.gen_s)),
                mean_pack_s: mean(rs.iter().map(|r| r.total_s - r.gen_s)),
                mean_total_s: mean(rs.iter().map(|r| r.total_s)),
                mean_set_within_fraction: mean(ok.iter().map(|r| r.set_within_fraction)),
                mean_max_leftover_deviation: mean(ok.iter().map(|r| r.max_leftover_deviation)),
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    seed: u64,
    config: Option<&Path>,
    out: &Path,
    sizes: &[usize],
    densities: &[f64],
    counts: &[usize],
    reps: usize,
    mode: Option<Mode>,
) -> Result<Outcome> {
    let base = load_spec(config)?;
    let mut jobs = Vec::new();
    for &n in sizes {
        for &d in densities {
            for &count in counts {
                for rep in 0..reps {
                    let run_seed = rng::derive(seed, &[jobs.len() as u64]);
                    jobs.push((n, d, count, rep, run_seed));
                }
            }
        }
    }
    let rows: Vec<BenchRow> = jobs
        .par_iter()
        .map(|&(n, d, count, rep, s)| bench_run(&base, mode, n, d, count, rep, s))
        .collect();
    create_dir(out)?;
    write_csv(&out.join("bench.csv"), &rows)?;
    let summary = summarize(&rows);
    write_csv(&out.join("bench_summary.csv"), &summary)?;
    Ok(Outcome::Ok)
}

fn run(cli: Cli) -> Result<Outcome> {
    configure_threads()?;
    match cli.command {
        Command::Gen { seed, config, out, mode } => cmd_gen(seed, config.as_deref(), &out, mode),
        Command::Pack { seed, instance, testers, config, out, dump_ledger, mode } => {
            cmd_pack(seed, &instance, testers.as_deref(), config.as_deref(), &out, dump_ledger, mode)
        }
        Command::Verify { instance, result, testers, alpha } => {
            cmd_verify(&instance, &result, testers.as_deref(), alpha)
        }
        Command::Bench { seed, config, out, sizes, densities, counts, reps, mode } => {
            cmd_bench(seed, config.as_deref(), &out, &sizes, &densities, &counts, reps, mode)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Violations) => ExitCode::from(1),
        Err(e) => {
            match to_canonical_json(&ErrorFile { error: &e }) {
                Ok(s) => eprint!("{s}"),
                Err(_) => eprintln!("{{\"format\":1,\"error\":{{\"kind\":\"format\",\"detail\":{:?}}}}}", e.to_string()),
            }
            ExitCode::from(2)
        }
    }
}
