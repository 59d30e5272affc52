//! Train, evaluate and sweep drivers plus the on-disk run layout.
//!
//! A run directory holds:
//!
//! | file                  | contents                                            |
//! |-----------------------|-----------------------------------------------------|
//! | `config.resolved`     | every configuration key, reloadable                 |
//! | `q_table.csv`         | `state_index,action_index,q_value`                  |
//! | `metadata.json`       | hyperparameters, seed, initial value, discretization |
//! | `training_log.csv`    | per-episode reward and schedules                    |
//! | `visitation.csv`      | per-state visit counts                              |
//! | `policy_matrix.csv`   | greedy action per (infected, risk) level, 1-based   |
//! | `DONE`                | written last; absent means the run is incomplete    |
//!
//! Multi-course runs write `policy_flat.csv` (`state_index,action`) instead of
//! the policy matrix.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{self, EpisodeRecord, EvaluationSummary, Hyperparameters, Policy, QTable};
use crate::analytics::{self, TradeoffPoint};
use crate::config::RunConfig;
use crate::env::{CampusEnv, DiscretizationSpec, TabularEnv};
use crate::error::{Error, Result};

pub const DONE_MARKER: &str = "DONE";
pub const TRADEOFF_FILE: &str = "tradeoff.csv";

/// Spacing between sweep child seeds.
pub const SWEEP_SEED_STRIDE: u64 = 1000;
/// Offset from a run's training seed to its evaluation seed.
pub const EVAL_SEED_OFFSET: u64 = 500;

/// Seed of the `index`-th sweep child.
pub fn child_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(SWEEP_SEED_STRIDE.wrapping_mul(index as u64))
}

pub fn alpha_dir_name(alpha_r: f64) -> String {
    format!("alpha_{alpha_r:?}")
}

/// Destination for per-episode training metrics.
pub trait MetricsSink {
    fn append(&mut self, record: &EpisodeRecord) -> Result<()>;
}

/// Writes `training_log.csv` rows as episodes finish.
pub struct CsvLogSink<W: Write> {
    out: csv::Writer<W>,
    rewards: Vec<f64>,
    window: usize,
}

impl<W: Write> CsvLogSink<W> {
    pub fn new(writer: W, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::config("moving_average_window", "must be at least 1"));
        }
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["episode", "total_reward", "epsilon", "learning_rate", "moving_avg_reward"])?;
        Ok(CsvLogSink {
            out,
            rewards: Vec::new(),
            window,
        })
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|e| Error::io("<training log>", e))?;
        self.out
            .into_inner()
            .map_err(|e| Error::io("<training log>", e.into_error()))
    }
}

impl<W: Write> MetricsSink for CsvLogSink<W> {
    fn append(&mut self, record: &EpisodeRecord) -> Result<()> {
        self.rewards.push(record.total_reward as f64);
        let span = &self.rewards[self.rewards.len().saturating_sub(self.window)..];
        let avg = span.iter().sum::<f64>() / span.len() as f64;
        self.out.write_record([
            record.episode.to_string(),
            record.total_reward.to_string(),
            record.epsilon.to_string(),
            record.learning_rate.to_string(),
            avg.to_string(),
        ])?;
        Ok(())
    }
}

/// Sidecar describing how a stored Q-table was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    pub q_init: f64,
    pub discretization: DiscretizationSpec,
    pub students_per_course: Vec<u32>,
    pub weeks: u32,
    pub state_count: usize,
    pub action_count: usize,
}

pub fn write_q_table_csv<W: Write>(q: &QTable, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["state_index", "action_index", "q_value"])?;
    for state in 0..q.states() {
        for (action, value) in q.row(state).iter().enumerate() {
            out.write_record([state.to_string(), action.to_string(), value.to_string()])?;
        }
    }
    out.flush().map_err(|e| Error::io("<q table>", e))?;
    Ok(())
}

pub fn read_q_table_csv<R: Read>(reader: R, meta: &RunMetadata) -> Result<QTable> {
    let bad = |reason: String| Error::Artifact {
        path: "q_table.csv".into(),
        reason,
    };
    let mut values = vec![None; meta.state_count * meta.action_count];
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().ne(["state_index", "action_index", "q_value"]) {
        return Err(bad("expected header `state_index,action_index,q_value`".into()));
    }
    for rec in rdr.records() {
        let rec = rec?;
        let get = |k: usize| rec.get(k).unwrap_or("").trim().to_string();
        let state: usize = get(0).parse().map_err(|_| bad(format!("bad state `{}`", get(0))))?;
        let action: usize = get(1).parse().map_err(|_| bad(format!("bad action `{}`", get(1))))?;
        let value: f64 = get(2).parse().map_err(|_| bad(format!("bad value `{}`", get(2))))?;
        if state >= meta.state_count || action >= meta.action_count {
            return Err(bad(format!("entry ({state}, {action}) outside the table")));
        }
        values[state * meta.action_count + action] = Some(value);
    }
    let values = values
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| bad("table is not dense".into()))?;
    QTable::from_parts(meta.state_count, meta.action_count, meta.q_init, values)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn build_env(config: &RunConfig) -> Result<CampusEnv> {
    CampusEnv::new(
        config.model.clone(),
        config.si,
        config.risk_process()?,
        config.spec,
        config.alpha_r(),
    )
}

/// Default run directory for a config: `<output_dir>/alpha_<alpha_r>`.
pub fn run_dir_for(config: &RunConfig) -> PathBuf {
    config.output_dir.join(alpha_dir_name(config.alpha_r()))
}

/// Trains into `run_dir_for(config)`.
pub fn run_training(config: &RunConfig) -> Result<PathBuf> {
    let dir = run_dir_for(config);
    run_training_in(config, &dir)?;
    Ok(dir)
}

/// Trains and writes every artifact into `dir`, finishing with `DONE`.
pub fn run_training_in(config: &RunConfig, dir: &Path) -> Result<()> {
    config.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let marker = dir.join(DONE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    fs::write(dir.join("config.resolved"), config.to_config_string())
        .map_err(|e| Error::io(dir.join("config.resolved"), e))?;

    let mut env = build_env(config)?;
    let log_path = dir.join("training_log.csv");
    let mut sink = CsvLogSink::new(create(&log_path)?, config.moving_average_window)?;
    let mut sink_error = None;
    let (q, log) = agent::train_with_observer(&mut env, &config.hp, config.seed, |record, _| {
        if sink_error.is_none() {
            sink_error = sink.append(record).err();
        }
    })?;
    if let Some(e) = sink_error {
        return Err(e);
    }
    sink.finish()?
        .flush()
        .map_err(|e| Error::io(&log_path, e))?;

    write_file(&dir.join("q_table.csv"), |w| write_q_table_csv(&q, w))?;
    let meta = RunMetadata {
        hyperparameters: config.hp,
        seed: config.seed,
        q_init: q.optimistic_init(),
        discretization: config.spec,
        students_per_course: config.model.students_per_course.clone(),
        weeks: config.model.weeks,
        state_count: q.states(),
        action_count: q.actions(),
    };
    write_file(&dir.join("metadata.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &meta)?;
        writeln!(w).map_err(|e| Error::io("metadata.json", e))
    })?;

    let courses = config.model.courses();
    let counts = analytics::visitation_histogram(&log, env.state_count());
    write_file(&dir.join("visitation.csv"), |w| {
        analytics::write_visitation_csv(&counts, &config.spec, courses, w)
    })?;
    let policy = agent::extract_policy(&q);
    if courses == 1 {
        let matrix = analytics::build_policy_matrix(&policy, &config.spec, 1)?;
        write_file(&dir.join("policy_matrix.csv"), |w| matrix.write_csv(w))?;
    } else {
        write_file(&dir.join("policy_flat.csv"), |w| write_flat_policy(&policy, w))?;
    }

    fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;
    log::info!(
        "trained alpha_r={:?} seed={} for {} episodes into {}",
        config.alpha_r(),
        config.seed,
        config.hp.max_episodes,
        dir.display()
    );
    Ok(())
}

fn write_flat_policy<W: Write>(policy: &Policy, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["state_index", "action"])?;
    for (state, action) in policy.0.iter().enumerate() {
        out.write_record([state.to_string(), action.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<policy>", e))?;
    Ok(())
}

pub fn read_metadata(dir: &Path) -> Result<RunMetadata> {
    let path = dir.join("metadata.json");
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_reader(file)?)
}

/// Reloads a completed run's Q-table.
pub fn load_q_table(dir: &Path) -> Result<(QTable, RunMetadata)> {
    if !dir.join(DONE_MARKER).exists() {
        return Err(Error::Artifact {
            path: dir.to_path_buf(),
            reason: "run is incomplete (no DONE marker)".into(),
        });
    }
    let meta = read_metadata(dir)?;
    let path = dir.join("q_table.csv");
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    Ok((read_q_table_csv(file, &meta)?, meta))
}

/// Greedy evaluation of a trained run without touching `tradeoff.csv`.
pub fn evaluate_run(config: &RunConfig, dir: &Path, episodes: usize) -> Result<EvaluationSummary> {
    let (q, meta) = load_q_table(dir)?;
    if meta.discretization != config.spec || meta.students_per_course != config.model.students_per_course {
        return Err(Error::Mismatch(format!(
            "run {} was trained with {:?} over courses {:?}; config has {:?} over courses {:?}",
            dir.display(),
            meta.discretization,
            meta.students_per_course,
            config.spec,
            config.model.students_per_course,
        )));
    }
    let mut eval_config = config.clone();
    eval_config.hp.alpha_r = meta.hyperparameters.alpha_r;
    let mut env = build_env(&eval_config)?;
    let policy = agent::extract_policy(&q);
    agent::evaluate(&policy, &mut env, episodes, meta.seed.wrapping_add(EVAL_SEED_OFFSET))
}

/// Evaluates the run and appends its trade-off row to
/// `<output_dir>/tradeoff.csv`, creating the file with a header if needed.
pub fn run_evaluation(config: &RunConfig, dir: &Path, episodes: usize) -> Result<EvaluationSummary> {
    let summary = evaluate_run(config, dir, episodes)?;
    let path = config.output_dir.join(TRADEOFF_FILE);
    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    let fresh = !path.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    let mut out = csv::Writer::from_writer(file);
    if fresh {
        out.write_record(analytics::TRADEOFF_HEADER)?;
    }
    let point = analytics::collect_tradeoff(&[summary])[0];
    out.write_record(analytics::tradeoff_row(&point))?;
    out.flush().map_err(|e| Error::io(&path, e))?;
    log::info!(
        "alpha_r={:?}: mean allowed {:.2}, mean infected {:.2}, mean reward {:.2}",
        summary.alpha_r,
        summary.mean_allowed,
        summary.mean_infected,
        summary.mean_reward
    );
    Ok(summary)
}

#[derive(Debug)]
pub struct SweepChild {
    pub alpha_r: f64,
    pub seed: u64,
    pub dir: PathBuf,
    pub outcome: Result<EvaluationSummary>,
}

#[derive(Debug)]
pub struct SweepReport {
    pub children: Vec<SweepChild>,
    pub points: Vec<TradeoffPoint>,
}

impl SweepReport {
    pub fn failures(&self) -> impl Iterator<Item = &SweepChild> {
        self.children.iter().filter(|c| c.outcome.is_err())
    }
}

/// Trains and evaluates every reward weight of `config.sweep`, children in
/// parallel, then writes the combined `tradeoff.csv` once.
pub fn run_sweep(config: &RunConfig) -> Result<SweepReport> {
    config.validate()?;
    let per_value = config.sweep.seeds_per_value;
    let jobs: Vec<(f64, u64, PathBuf)> = config
        .sweep
        .alphas
        .iter()
        .enumerate()
        .flat_map(|(ai, &alpha_r)| {
            (0..per_value).map(move |rep| {
                let seed = child_seed(config.seed, ai * per_value + rep);
                let mut dir = config.output_dir.join(alpha_dir_name(alpha_r));
                if per_value > 1 {
                    dir = dir.join(format!("seed_{seed}"));
                }
                (alpha_r, seed, dir)
            })
        })
        .collect();

    let children: Vec<SweepChild> = jobs
        .into_par_iter()
        .map(|(alpha_r, seed, dir)| {
            let mut child = config.clone();
            child.hp.alpha_r = alpha_r;
            child.seed = seed;
            let outcome = run_training_in(&child, &dir)
                .and_then(|()| evaluate_run(&child, &dir, child.eval_episodes));
            if let Err(e) = &outcome {
                log::error!("alpha_r={alpha_r:?} seed={seed}: {e}");
            }
            SweepChild {
                alpha_r,
                seed,
                dir,
                outcome,
            }
        })
        .collect();

    let summaries: Vec<EvaluationSummary> = children
        .iter()
        .filter_map(|c| c.outcome.as_ref().ok().copied())
        .collect();
    let points = analytics::collect_tradeoff(&summaries);
    let path = config.output_dir.join(TRADEOFF_FILE);
    write_file(&path, |w| analytics::write_tradeoff_csv(&points, w))?;
    Ok(SweepReport { children, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn config(dir: &Path, extra: &str) -> RunConfig {
        let text = format!(
            "alpha_m = 0.005\nbeta = 0.01\nalpha_r = 0.5\nseed = 42\noutput_dir = {}\n{extra}",
            dir.display()
        );
        parse_config(&text, dir).unwrap().0
    }

    #[test]
    fn seeds_and_names() {
        assert_eq!(child_seed(42, 0), 42);
        assert_eq!(child_seed(42, 3), 3042);
        assert_eq!(alpha_dir_name(1.0), "alpha_1.0");
        assert_eq!(alpha_dir_name(0.01), "alpha_0.01");
    }

    #[test]
    fn q_table_csv_round_trips_exactly() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config(tmp.path(), "max_episodes = 30\n");
        let dir = run_training(&cfg).unwrap();
        let (q, meta) = load_q_table(&dir).unwrap();
        let mut env = build_env(&cfg).unwrap();
        let (fresh, _) = agent::train(&mut env, &cfg.hp, cfg.seed).unwrap();
        assert_eq!(q, fresh);
        assert!((meta.q_init - 500.0).abs() < 1e-9);
        assert_eq!(meta.state_count, 100);
    }

    #[test]
    fn incomplete_run_is_refused() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config(tmp.path(), "max_episodes = 2\n");
        let dir = run_training(&cfg).unwrap();
        fs::remove_file(dir.join(DONE_MARKER)).unwrap();
        assert!(matches!(load_q_table(&dir), Err(Error::Artifact { .. })));
    }

    #[test]
    fn multi_course_run_writes_flat_policy() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config(tmp.path(), "max_episodes = 3\ncourses = 2\nstudents_per_course = 40\n");
        let dir = run_training(&cfg).unwrap();
        assert!(dir.join("policy_flat.csv").exists());
        assert!(!dir.join("policy_matrix.csv").exists());
        let visits = fs::read_to_string(dir.join("visitation.csv")).unwrap();
        assert!(visits.starts_with("state_index,count\n"));
        assert_eq!(visits.lines().count(), 1 + 1000);
    }

    #[test]
    fn sink_matches_batch_moving_average() {
        let records: Vec<EpisodeRecord> = (0..7)
            .map(|i| EpisodeRecord {
                episode: i,
                total_reward: (i as i64 * 37) % 11 - 5,
                epsilon: 0.5,
                learning_rate: 0.25,
                steps: 3,
            })
            .collect();
        let mut sink = CsvLogSink::new(Vec::new(), 3).unwrap();
        for r in &records {
            sink.append(r).unwrap();
        }
        let streamed = sink.finish().unwrap();
        let log = agent::TrainingLog {
            episodes: records,
            visits: vec![],
        };
        let mut batch = Vec::new();
        analytics::write_training_log_csv(&log, 3, &mut batch).unwrap();
        assert_eq!(streamed, batch);
    }
}
