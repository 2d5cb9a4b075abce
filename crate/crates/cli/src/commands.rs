use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use secfpp::bench::{run_bench, BenchConfig, BenchError};
use secfpp::infotheory::{figure3_experiment, rows_to_csv, Figure3Config, InfoError};
use secfpp::protocol::{
    audit_transcript, matches_partition, ProtocolError, ReconPolicy, RunConfig, Simulation, Transcript,
};

use crate::{load, Failure};

pub struct Context {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Protocol(format!("{}: {e}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| io_failure(&path, e))
}

fn output_dir(ctx: &Context, id: &str) -> Result<PathBuf, Failure> {
    let dir = ctx.out.join(id);
    fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    Ok(dir)
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Protocol(e.to_string()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| io_failure(&dir.join(name), e))
}

fn protocol_failure(e: ProtocolError) -> Failure {
    match e {
        ProtocolError::BadConfig(errs) => Failure::Config(errs.join("; ")),
        other => Failure::Protocol(other.to_string()),
    }
}

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let cfg: RunConfig = load::config(ctx.config.as_deref(), ctx.seed)?;
    cfg.validate().map_err(|errs| Failure::Config(errs.join("; ")))?;
    let id = load::run_id("run", &cfg);
    let mut sim = Simulation::init(cfg.clone()).map_err(protocol_failure)?;
    sim.run().map_err(protocol_failure)?;
    let dir = output_dir(ctx, &id)?;
    write_json(&dir, "config.json", &cfg)?;

    let t = sim.transcript();
    let mut w = create(&dir, "transcript.jsonl")?;
    t.write_messages(&mut w).and_then(|_| w.flush()).map_err(|e| io_failure(&dir, e))?;
    let mut w = create(&dir, "reconstructions.jsonl")?;
    t.write_reconstructions(&mut w).and_then(|_| w.flush()).map_err(|e| io_failure(&dir, e))?;

    let mut w = create(&dir, "metrics.jsonl")?;
    for m in sim.metrics() {
        serde_json::to_writer(&mut w, m).map_err(|e| Failure::Protocol(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| io_failure(&dir, e))?;
    }
    w.flush().map_err(|e| io_failure(&dir, e))?;

    let domains = &sim.task().domain_of;
    let mut csv = csv::Writer::from_writer(create(&dir, "summary.csv")?);
    csv.write_record(["round", "mean_loss", "clusters", "domain_partition"])
        .map_err(|e| Failure::Protocol(e.to_string()))?;
    for m in sim.metrics() {
        let s = secfpp::cluster::ClusterAssignment::new(
            cfg.n,
            (0..m.clusters).map(|c| (0..cfg.n).filter(|&i| m.assignment[i] == c).collect()).collect(),
        )
        .map_err(|e| Failure::Protocol(e.to_string()))?;
        csv.write_record([
            m.round.to_string(),
            format!("{:.9}", m.mean_loss),
            m.clusters.to_string(),
            matches_partition(&s, domains).to_string(),
        ])
        .map_err(|e| Failure::Protocol(e.to_string()))?;
    }
    csv.flush().map_err(|e| io_failure(&dir, e))?;

    let report = sim.audit();
    write_json(&dir, "audit.json", &report)?;
    println!("run {id}: {} rounds, {} clusters, mean loss {:.6}", sim.rounds_done(), sim.assignment().len(), sim.mean_loss());
    println!("outputs in {}", dir.display());
    if report.passed {
        println!("audit passed ({} messages, {} reconstructions)", report.messages_checked, report.reconstructions_checked);
        Ok(())
    } else {
        Err(Failure::Audit(format!("{} violations, see {}", report.violations.len(), dir.join("audit.json").display())))
    }
}

fn info_failure(e: InfoError) -> Failure {
    match e {
        InfoError::BadConfig(m) => Failure::Config(m),
        other => Failure::Protocol(other.to_string()),
    }
}

pub fn mi(ctx: &Context) -> Result<(), Failure> {
    let cfg: Figure3Config = load::config(ctx.config.as_deref(), ctx.seed)?;
    cfg.validate().map_err(info_failure)?;
    let id = load::run_id("mi", &cfg);
    let rows = figure3_experiment(&cfg).map_err(info_failure)?;
    let csv = rows_to_csv(&rows).map_err(info_failure)?;
    let dir = output_dir(ctx, &id)?;
    write_json(&dir, "config.json", &cfg)?;
    let path = dir.join("mi.csv");
    fs::write(&path, &csv).map_err(|e| io_failure(&path, e))?;
    print!("{csv}");
    Ok(())
}

pub fn bench(ctx: &Context) -> Result<(), Failure> {
    let cfg: BenchConfig = load::config(ctx.config.as_deref(), ctx.seed)?;
    let report = run_bench(&cfg).map_err(|e| match e {
        BenchError::BadConfig(m) => Failure::Config(m),
        other => Failure::Protocol(other.to_string()),
    })?;
    let id = load::run_id("bench", &cfg);
    let dir = output_dir(ctx, &id)?;
    write_json(&dir, "config.json", &cfg)?;
    let csv = report.to_csv().map_err(|e| Failure::Protocol(e.to_string()))?;
    let path = dir.join("bench.csv");
    fs::write(&path, &csv).map_err(|e| io_failure(&path, e))?;
    write_json(&dir, "fits.json", &serde_json::json!({
        "user_time_vs_nd": report.user_fit,
        "server_decode_vs_kn2log2n": report.server_fit,
        "bytes_match_formula": report.bytes_match,
    }))?;
    print!("{csv}");
    println!(
        "user time ~ n*d: R^2 = {:.4}; server decode ~ k n^2 log^2 n: R^2 = {:.4}; bytes match formula: {}",
        report.user_fit.r_squared, report.server_fit.r_squared, report.bytes_match
    );
    Ok(())
}

pub fn audit(ctx: &Context) -> Result<(), Failure> {
    let given = ctx
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config("audit needs --config pointing at a run directory".into()))?;
    let (dir, cfg_path) = if given.is_dir() {
        (given.to_path_buf(), given.join("config.json"))
    } else {
        (given.parent().unwrap_or(Path::new(".")).to_path_buf(), given.to_path_buf())
    };
    let cfg: RunConfig = load::config(Some(&cfg_path), None)?;
    cfg.validate().map_err(|errs| Failure::Config(errs.join("; ")))?;
    let policy = ReconPolicy { code_degree: cfg.ell() + cfg.t() - 1, n: cfg.n };
    let open = |name: &str| {
        let path = dir.join(name);
        File::open(&path).map(BufReader::new).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    };
    let t = Transcript::read(policy, open("transcript.jsonl")?, open("reconstructions.jsonl")?)
        .map_err(|e| Failure::Config(format!("transcript: {e}")))?;
    let report = audit_transcript(&t);
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Audit(format!("{} violations", report.violations.len())))
    }
}
