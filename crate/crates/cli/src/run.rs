use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use commnet::analysis::{
    brake_map, norm_heatmap, pca_project, record, two_car_probe, write_grid_csv,
    write_projection_csv, VectorKind, VectorLog,
};
use commnet::envs::{write_trace_lines, TaskConfig};
use commnet::model::{Controller, ControllerKind};
use commnet::numerics::{checkpoint, Rng};
use commnet::training::{
    evaluate, train, write_metrics_row, EpisodeTrace, EpochMetrics, Evaluation, RolloutOptions,
    METRICS_HEADER,
};
use sha2::{Digest, Sha256};

use crate::config::{cell_name, kind_name, Mode, RunConfig};
use crate::selftest::{self, PropertyResult};
use crate::{CliError, Result};

/// Artifacts excluded from the manifest hashes because they hold wall-clock data.
const UNHASHED: &[&str] = &["timing.csv"];

#[derive(Debug, Default)]
pub struct RunReport {
    /// Artifacts written, relative to the output directory.
    pub files: Vec<PathBuf>,
    pub history: Vec<EpochMetrics>,
    pub evaluation: Option<Evaluation>,
    pub properties: Vec<PropertyResult>,
    /// Notes echoed into the manifest, e.g. skipped analysis tables.
    pub notes: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Runs one mode and writes its artifacts under `cfg.out`. The manifest is
/// written first with status `running` and rewritten at the end with either
/// `complete` and the artifact hashes or `failed` and the error.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    fs::create_dir_all(&cfg.out)?;
    write_manifest(cfg, "running", &RunReport::default())?;
    let result = match cfg.mode {
        Mode::Train => train_mode(cfg),
        Mode::Eval => eval_mode(cfg),
        Mode::Analyze => analyze_mode(cfg),
        Mode::Selftest => selftest_mode(cfg),
    };
    match result {
        Ok(report) => {
            write_manifest(cfg, "complete", &report)?;
            Ok(report)
        }
        Err(e) => {
            write_manifest(cfg, &format!("failed: {e}"), &RunReport::default())?;
            Err(e)
        }
    }
}

fn write_manifest(cfg: &RunConfig, status: &str, report: &RunReport) -> Result<()> {
    let mut text = format!(
        "# commnet-cli {}\n# status: {}\n",
        env!("CARGO_PKG_VERSION"),
        status.replace('\n', " ")
    );
    for file in &report.files {
        let name = file.display().to_string();
        if UNHASHED.contains(&name.as_str()) {
            continue;
        }
        let bytes = fs::read(cfg.out.join(file))?;
        text.push_str(&format!("# sha256 {name} {}\n", sha256_hex(&bytes)));
    }
    for note in &report.notes {
        text.push_str(&format!("# note: {note}\n"));
    }
    text.push_str(&cfg.to_text());
    fs::write(cfg.out.join("manifest.txt"), text)?;
    Ok(())
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = out.join(name);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn save_checkpoint(out: &Path, controller: &Controller) -> commnet::Result<()> {
    let tmp = out.join("checkpoint.bin.tmp");
    fs::write(&tmp, checkpoint::to_bytes(&controller.params().to_named()))?;
    fs::rename(tmp, out.join("checkpoint.bin"))?;
    Ok(())
}

/// Builds the configured controller and loads `cfg.checkpoint` into it.
pub fn load_controller(cfg: &RunConfig) -> Result<Controller> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Invalid("no checkpoint configured".into()))?;
    let file = File::open(path).map_err(|e| CliError::File {
        path: path.clone(),
        source: e,
    })?;
    let named = checkpoint::read(std::io::BufReader::new(file))?;
    let mut controller =
        Controller::new(cfg.controller_config()?, &mut Rng::new(cfg.seed).split(0))?;
    controller.params_mut().load_named(named)?;
    Ok(controller)
}

fn train_mode(cfg: &RunConfig) -> Result<RunReport> {
    let root = Rng::new(cfg.seed);
    let mut controller = Controller::new(cfg.controller_config()?, &mut root.split(0))?;
    let mut factory = cfg.factory()?;
    let mut metrics = create(&cfg.out, "metrics.csv")?;
    let mut timing = create(&cfg.out, "timing.csv")?;
    writeln!(metrics, "{METRICS_HEADER}")?;
    writeln!(timing, "epoch,seconds")?;
    let start = Instant::now();
    let mut last = start;
    let history = train(
        &mut controller,
        &mut factory,
        &cfg.train,
        &root.split(1),
        |m, c| {
            write_metrics_row(&mut metrics, m)?;
            metrics.flush()?;
            let now = Instant::now();
            writeln!(timing, "{},{:.3}", m.epoch, (now - last).as_secs_f64())?;
            timing.flush()?;
            last = now;
            save_checkpoint(&cfg.out, c)?;
            eprintln!(
                "epoch {:>4}  metric {:.4}  reward {:.4}  loss {:.4}  ({:.0}s)",
                m.epoch,
                m.metric_mean,
                m.reward_mean,
                m.loss_mean,
                start.elapsed().as_secs_f64()
            );
            Ok(())
        },
    )?;
    save_checkpoint(&cfg.out, &controller)?;
    Ok(RunReport {
        files: ["checkpoint.bin", "metrics.csv", "timing.csv"]
            .map(PathBuf::from)
            .to_vec(),
        history,
        ..RunReport::default()
    })
}

fn write_traces(out: &Path, name: &str, traces: &[EpisodeTrace]) -> Result<()> {
    let mut w = create(out, name)?;
    for trace in traces {
        write_trace_lines(&mut w, &trace.trace_lines())?;
    }
    w.flush()?;
    Ok(())
}

fn eval_mode(cfg: &RunConfig) -> Result<RunReport> {
    let controller = load_controller(cfg)?;
    let factory = cfg.final_factory()?;
    let opts = RolloutOptions {
        records: true,
        vectors: false,
    };
    let root = Rng::new(cfg.seed).split(2);
    let (eval, traces) = evaluate(
        &controller,
        &factory,
        cfg.eval_trials,
        &root,
        &cfg.parallel(),
        opts,
    )?;
    let mut w = create(&cfg.out, "eval.csv")?;
    writeln!(
        w,
        "task,controller,cell,trials,metric_mean,metric_std,half_width,reward_mean"
    )?;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{}",
        factory.name(),
        kind_name(cfg.model.kind),
        cell_name(cfg.model.cell),
        eval.trials,
        eval.mean,
        eval.std,
        eval.half_width,
        eval.reward_mean
    )?;
    w.flush()?;
    write_traces(&cfg.out, "traces/eval.jsonl", &traces)?;
    println!(
        "{}: metric {:.4} ± {:.4} over {} trials",
        factory.name(),
        eval.mean,
        eval.half_width,
        eval.trials
    );
    Ok(RunReport {
        files: ["eval.csv", "traces/eval.jsonl"]
            .map(PathBuf::from)
            .to_vec(),
        evaluation: Some(eval),
        ..RunReport::default()
    })
}

fn analyze_mode(cfg: &RunConfig) -> Result<RunReport> {
    if cfg.model.kind != ControllerKind::CommNet {
        return Err(CliError::Invalid(
            "analyze mode records communication vectors of a commnet controller".into(),
        ));
    }
    let controller = load_controller(cfg)?;
    let factory = cfg.final_factory()?;
    let root = Rng::new(cfg.seed);
    let (log, traces) = record(
        &controller,
        &factory,
        cfg.analysis_episodes,
        &root.split(3),
        &cfg.parallel(),
    )?;
    let mut report = RunReport::default();
    let out = &cfg.out;

    let mut w = create(out, "traces/vectors.jsonl")?;
    log.write_jsonl(&mut w)?;
    w.flush()?;
    report.files.push("traces/vectors.jsonl".into());
    write_traces(out, "traces/analysis.jsonl", &traces)?;
    report.files.push("traces/analysis.jsonl".into());

    for (kind, name) in [(VectorKind::Comm, "comm"), (VectorKind::Hidden, "hidden")] {
        let file = format!("analysis/pca_{name}.csv");
        match projection_table(&log, kind) {
            Ok(bytes) => {
                fs::create_dir_all(out.join("analysis"))?;
                fs::write(out.join(&file), bytes)?;
                report.files.push(file.into());
            }
            Err(e) => report.notes.push(format!("{file} skipped: {e}")),
        }
    }

    let mut w = create(out, "analysis/norm_histogram.csv")?;
    writeln!(w, "bin_start,count")?;
    for (start, count) in log.norm_histogram(20) {
        writeln!(w, "{start},{count}")?;
    }
    w.flush()?;
    report.files.push("analysis/norm_histogram.csv".into());

    let mut w = create(out, "analysis/summary.csv")?;
    writeln!(w, "key,value")?;
    writeln!(w, "episodes,{}", traces.len())?;
    writeln!(w, "records,{}", log.len())?;
    writeln!(w, "silent_fraction_0.1,{}", log.silent_fraction(0.1))?;
    w.flush()?;
    report.files.push("analysis/summary.csv".into());

    if let Some((rows, cols)) = factory.make()?.grid() {
        let heat = norm_heatmap(&log, rows, cols)?;
        let mut w = create(out, "analysis/norm_heatmap.csv")?;
        write_grid_csv(&mut w, &heat.mean, Some(&heat.counts))?;
        w.flush()?;
        report.files.push("analysis/norm_heatmap.csv".into());
    }
    if matches!(cfg.task, TaskConfig::Traffic(_)) {
        let (rows, cols) = factory.make()?.grid().unwrap_or((0, 0));
        let brakes = brake_map(&traces, rows, cols)?;
        let mut w = create(out, "analysis/brake_map.csv")?;
        write_grid_csv(&mut w, &brakes, None)?;
        w.flush()?;
        report.files.push("analysis/brake_map.csv".into());

        let probes = two_car_probe(
            &controller,
            &factory,
            cfg.probe_episodes,
            &root.split(4),
            &cfg.parallel(),
        )?;
        let mut w = create(out, "analysis/probe.csv")?;
        writeln!(
            w,
            "episode,step,braking,braking_row,braking_col,braking_norm,other,other_row,other_col,other_norm"
        )?;
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for p in &probes {
            let (orow, ocol) = p
                .other_pos
                .map_or((String::new(), String::new()), |(r, c)| {
                    (r.to_string(), c.to_string())
                });
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                p.episode,
                p.step,
                p.braking,
                p.braking_pos.0,
                p.braking_pos.1,
                norm(&p.braking_comm),
                p.other.map_or(String::new(), |o| o.to_string()),
                orow,
                ocol,
                p.other_comm
                    .as_deref()
                    .map_or(String::new(), |c| norm(c).to_string()),
            )?;
        }
        w.flush()?;
        report.files.push("analysis/probe.csv".into());
    }
    println!(
        "recorded {} vectors from {} episodes",
        log.len(),
        traces.len()
    );
    Ok(report)
}

fn projection_table(log: &VectorLog, kind: VectorKind) -> Result<Vec<u8>> {
    let points = log.vectors(kind);
    let width = points.first().map_or(0, Vec::len);
    let projection = pca_project(&points, width.min(3))?;
    let mut buf = Vec::new();
    write_projection_csv(&mut buf, log, &projection)?;
    Ok(buf)
}

fn selftest_mode(cfg: &RunConfig) -> Result<RunReport> {
    let properties = selftest::run_all(cfg.seed);
    let mut w = create(&cfg.out, "selftest.csv")?;
    writeln!(w, "property,pass,detail")?;
    for p in &properties {
        println!(
            "{} {}: {}",
            if p.pass { "PASS" } else { "FAIL" },
            p.name,
            p.detail
        );
        writeln!(
            w,
            "{},{},\"{}\"",
            p.name,
            p.pass,
            p.detail.replace('"', "'")
        )?;
    }
    w.flush()?;
    let failed: Vec<&str> = properties
        .iter()
        .filter(|p| !p.pass)
        .map(|p| p.name)
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Selftest(failed.join(", ")));
    }
    Ok(RunReport {
        files: vec!["selftest.csv".into()],
        properties,
        ..RunReport::default()
    })
}
