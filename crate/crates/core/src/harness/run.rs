//! Multi-seed training runs writing CSV logs and checkpoints to disk.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::nn::Network;
use crate::ppo::{train, EvalRecord, StageRecord, TrainSink, TrainStatus, UpdateRecord};
use crate::scalar::Scalar;

use super::config::{Precision, RunConfig};
use super::metrics::{aggregate_csv, aggregate_runs, aggregate_table, sample_efficiency, MetricColumn};
use super::HarnessError;

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `metrics.csv`, `eval.csv`, `stages.csv` and `*.ckpt` into one
/// directory. Only `stages.csv` carries wall-clock time.
pub struct CsvSink {
    dir: PathBuf,
    levels: usize,
    metrics: csv::Writer<BufWriter<File>>,
    evals: csv::Writer<BufWriter<File>>,
    stages: csv::Writer<BufWriter<File>>,
    pub eval_log: Vec<EvalRecord>,
    pub stage_log: Vec<StageRecord>,
}

fn writer(path: &Path, header: &[String]) -> io::Result<csv::Writer<BufWriter<File>>> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    Ok(w)
}

fn per_level(prefix: &str, levels: usize) -> impl Iterator<Item = String> + '_ {
    (1..=levels).map(move |l| format!("{prefix}_level_{l}"))
}

impl CsvSink {
    pub fn create(dir: &Path, levels: usize) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let mut mh = s(&["update", "total_transitions", "stage", "pool_size"]);
        mh.extend(per_level("transitions", levels));
        mh.extend(s(&[
            "policy_loss",
            "value_loss",
            "entropy",
            "clip_fraction",
            "approx_kl",
            "grad_norm",
            "episodes_finished",
            "mean_episode_rate",
        ]));
        mh.extend(per_level("eval_rate", levels));
        mh.extend(per_level("ema", levels));
        mh.extend(per_level("advantage_mean", levels));
        let eh = s(&["eval_index", "level", "mean_rate", "ema", "level_transitions", "total_transitions"]);
        let mut sh = s(&["stage", "level", "pool_size"]);
        sh.extend(per_level("slots", levels));
        sh.extend(s(&["total_transitions", "elapsed_secs"]));
        Ok(Self {
            dir: dir.to_path_buf(),
            levels,
            metrics: writer(&dir.join("metrics.csv"), &mh)?,
            evals: writer(&dir.join("eval.csv"), &eh)?,
            stages: writer(&dir.join("stages.csv"), &sh)?,
            eval_log: Vec::new(),
            stage_log: Vec::new(),
        })
    }

    pub fn finish(&mut self) -> io::Result<()> {
        self.metrics.flush()?;
        self.evals.flush()?;
        self.stages.flush()
    }
}

impl<T: Scalar> TrainSink<T> for CsvSink {
    fn update(&mut self, r: &UpdateRecord) -> io::Result<()> {
        let mut rec =
            vec![r.update.to_string(), r.total_transitions.to_string(), r.stage.to_string(), r.pool_size.to_string()];
        rec.extend(r.transitions_per_level.iter().map(|c| c.to_string()));
        let st = &r.stats;
        rec.extend([
            st.policy_loss.to_string(),
            st.value_loss.to_string(),
            st.entropy.to_string(),
            st.clip_fraction.to_string(),
            st.approx_kl.to_string(),
            st.grad_norm.to_string(),
            r.episodes_finished.to_string(),
            opt(r.mean_episode_rate),
        ]);
        rec.extend(r.latest_eval.iter().map(|e| opt(e.map(|x| x.0))));
        rec.extend(r.latest_eval.iter().map(|e| opt(e.map(|x| x.1))));
        rec.extend(
            (1..=self.levels)
                .map(|l| opt(st.advantage_mean_per_level.iter().find(|(lv, _)| *lv == l).map(|(_, m)| *m))),
        );
        self.metrics.write_record(&rec)?;
        self.metrics.flush()
    }

    fn eval(&mut self, r: &EvalRecord) -> io::Result<()> {
        self.evals.write_record([
            r.eval_index.to_string(),
            r.level.to_string(),
            r.mean_rate.to_string(),
            r.ema.to_string(),
            r.level_transitions.to_string(),
            r.total_transitions.to_string(),
        ])?;
        self.eval_log.push(r.clone());
        self.evals.flush()
    }

    fn stage(&mut self, r: &StageRecord) -> io::Result<()> {
        let mut rec = vec![r.stage.to_string(), r.level.to_string(), r.pool_size.to_string()];
        rec.extend(r.slots_per_level.iter().map(|c| c.to_string()));
        rec.extend([r.total_transitions.to_string(), format!("{:.3}", r.elapsed_secs)]);
        self.stages.write_record(&rec)?;
        self.stage_log.push(r.clone());
        self.stages.flush()
    }

    fn checkpoint(&mut self, name: &str, net: &Network<T>) -> io::Result<()> {
        net.save_path(&self.dir.join(format!("{name}.ckpt"))).map_err(io::Error::other)
    }
}

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub dir: PathBuf,
    pub status: TrainStatus,
    pub updates: u64,
    pub total_transitions: u64,
    /// Indexed by `level - 1`.
    pub sample_efficiency: Vec<Option<u64>>,
    /// Mean of the last `switch_window` evaluations per level.
    pub retention: Vec<Option<f64>>,
    pub evals: Vec<EvalRecord>,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seeds: Vec<SeedSummary>,
}

impl RunSummary {
    pub fn metric_columns(&self) -> Vec<MetricColumn> {
        let levels = self.seeds.first().map_or(0, |s| s.sample_efficiency.len());
        let mut cols = Vec::new();
        for l in 0..levels {
            cols.push(MetricColumn {
                name: format!("sample_efficiency_level_{}", l + 1),
                values: self.seeds.iter().map(|s| s.sample_efficiency[l].map(|v| v as f64)).collect(),
            });
        }
        for l in 0..levels {
            cols.push(MetricColumn {
                name: format!("retention_level_{}", l + 1),
                values: self.seeds.iter().map(|s| s.retention[l]).collect(),
            });
        }
        cols.push(MetricColumn {
            name: "total_transitions".into(),
            values: self.seeds.iter().map(|s| Some(s.total_transitions as f64)).collect(),
        });
        cols
    }

    pub fn seeds_csv(&self) -> String {
        let levels = self.seeds.first().map_or(0, |s| s.sample_efficiency.len());
        let mut out = String::from("seed,status,updates,total_transitions");
        for l in 1..=levels {
            out.push_str(&format!(",sample_efficiency_level_{l}"));
        }
        for l in 1..=levels {
            out.push_str(&format!(",retention_level_{l}"));
        }
        out.push('\n');
        for s in &self.seeds {
            let status = match s.status {
                TrainStatus::Converged => "converged",
                TrainStatus::BudgetExhausted => "budget_exhausted",
            };
            out.push_str(&format!("{},{status},{},{}", s.seed, s.updates, s.total_transitions));
            for v in &s.sample_efficiency {
                out.push_str(&format!(",{}", opt(*v)));
            }
            for v in &s.retention {
                out.push_str(&format!(",{}", opt(*v)));
            }
            out.push('\n');
        }
        out
    }
}

fn run_seed<T: Scalar>(cfg: &RunConfig, seed: u64) -> Result<SeedSummary, HarnessError> {
    let dir = cfg.output_dir.join(format!("seed_{seed}"));
    let levels = cfg.levels.len();
    let mut sink = CsvSink::create(&dir, levels)?;
    let out = train::<T>(&cfg.train_config(seed), &mut sink)?;
    sink.finish()?;
    let window = cfg.eval.switch_window.max(1);
    let retention = (1..=levels)
        .map(|l| {
            let h = out.stage.history(l);
            (!h.is_empty()).then(|| {
                let tail = &h[h.len().saturating_sub(window)..];
                tail.iter().sum::<f64>() / tail.len() as f64
            })
        })
        .collect();
    Ok(SeedSummary {
        seed,
        dir,
        status: out.status,
        updates: out.updates,
        total_transitions: out.total_transitions,
        sample_efficiency: (1..=levels).map(|l| sample_efficiency(&sink.eval_log, l, cfg.eval.final_ema)).collect(),
        retention,
        evals: std::mem::take(&mut sink.eval_log),
        stages: std::mem::take(&mut sink.stage_log),
    })
}

/// Trains once per configured seed and writes the per-seed directories plus
/// `config.toml`, `seeds.csv`, `aggregate.csv` and `aggregate.txt`.
pub fn run_training(cfg: &RunConfig) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("config.toml"), cfg.to_toml())?;
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        log::info!("training seed {seed} ({:?}, {} levels)", cfg.mode, cfg.levels.len());
        let s = match cfg.precision {
            Precision::F32 => run_seed::<f32>(cfg, seed)?,
            Precision::F64 => run_seed::<f64>(cfg, seed)?,
        };
        log::info!("seed {seed}: {:?} after {} transitions", s.status, s.total_transitions);
        seeds.push(s);
    }
    let summary = RunSummary { seeds };
    let rows = aggregate_runs(&summary.metric_columns());
    fs::write(cfg.output_dir.join("seeds.csv"), summary.seeds_csv())?;
    fs::write(cfg.output_dir.join("aggregate.csv"), aggregate_csv(&rows))?;
    let mut f = File::create(cfg.output_dir.join("aggregate.txt"))?;
    f.write_all(aggregate_table(&rows, 3).as_bytes())?;
    Ok(summary)
}
