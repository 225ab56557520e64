//! Grid sweeps: one child run per point of a cross-product, trained on a
//! pool of worker threads, then tabulated.
//!
//! ```toml
//! output_dir = "runs/sweep"
//! workers = 2
//! compress_rates = [0.4, 0.6, 0.8]
//!
//! [grid]
//! kind = ["muon", "numuon"]
//! seed = [0, 1, 2]
//! r_end = [0.25, 0.5]
//!
//! [base]
//! # a complete run config
//! ```
//!
//! `seed` sets the run, optimizer and data seeds together. `r_end` replaces
//! the final fraction of a cosine-hold rank schedule (or the fraction of a
//! fixed one) and only applies to NuMuon children.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use numuon::compress::{compress_model, eval_compressed, CompressionPolicy};
use numuon::optim::OptimizerKind;
use numuon::persist::Checkpoint;
use numuon::schedule::RankSchedule;
use numuon::{Error, Result, RunConfig};

use crate::commands::run_into;

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub kind: Vec<OptimizerKind>,
    #[serde(default)]
    pub seed: Vec<u64>,
    #[serde(default)]
    pub r_end: Vec<f64>,
    #[serde(default)]
    pub lr: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub compress_rates: Vec<f64>,
    #[serde(default)]
    pub compress_policy: CompressionPolicy,
    #[serde(default)]
    pub grid: Grid,
    pub base: RunConfig,
}

#[derive(Debug, Clone)]
pub struct Child {
    pub label: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub kind: OptimizerKind,
    pub seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_eval_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_nsr: Option<f64>,
    /// Eval loss after compression, keyed by rate.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub compressed_eval_loss: BTreeMap<String, f64>,
}

fn axis<T: Clone>(values: &[T], fallback: T) -> Vec<T> {
    if values.is_empty() {
        vec![fallback]
    } else {
        values.to_vec()
    }
}

fn set_r_end(rank: &mut RankSchedule, r: f64) -> Result<()> {
    match rank {
        RankSchedule::CosineHold { r_end, .. } => *r_end = r,
        RankSchedule::Fixed { fraction } => *fraction = r,
        RankSchedule::Piecewise { .. } => {
            return Err(Error::Config("r_end cannot be swept over a piecewise rank schedule".into()))
        }
    }
    Ok(())
}

/// Expands the grid into uniquely labelled child configs.
pub fn expand(sweep: &SweepConfig) -> Result<Vec<Child>> {
    let base = &sweep.base;
    let g = &sweep.grid;
    let kinds = axis(&g.kind, base.optimizer.kind);
    let seeds = axis(&g.seed, base.seed);
    let lrs = axis(&g.lr, base.optimizer.lr.base_lr);
    let mut children = Vec::new();
    let mut seen = BTreeSet::new();
    for &kind in &kinds {
        let r_ends: Vec<Option<f64>> = if kind == OptimizerKind::Numuon && !g.r_end.is_empty() {
            g.r_end.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        for &lr in &lrs {
            for &r in &r_ends {
                for &seed in &seeds {
                    let mut cfg = base.clone();
                    cfg.optimizer.kind = kind;
                    cfg.optimizer.lr.base_lr = lr;
                    cfg.seed = seed;
                    cfg.optimizer.seed = seed;
                    cfg.task.data_seed = seed;
                    let mut label = format!("{kind:?}").to_lowercase();
                    if lrs.len() > 1 {
                        write!(label, "-lr{lr}").unwrap();
                    }
                    if let Some(r) = r {
                        set_r_end(&mut cfg.optimizer.rank, r)?;
                        write!(label, "-r{r}").unwrap();
                    }
                    write!(label, "-s{seed}").unwrap();
                    cfg.validate()?;
                    if seen.insert(label.clone()) {
                        children.push(Child { label, config: cfg });
                    }
                }
            }
        }
    }
    Ok(children)
}

fn run_child(child: &Child, dir: &Path, rates: &[f64], policy: &CompressionPolicy) -> Result<SweepRow> {
    let (summary, out) = run_into(&child.config, dir)?;
    let mut compressed_eval_loss = BTreeMap::new();
    if !rates.is_empty() {
        let ckpt = Checkpoint::from_model(&out.model);
        for &rate in rates {
            let (c, _) = compress_model(&ckpt, rate, policy)?;
            compressed_eval_loss.insert(rate.to_string(), eval_compressed(&c, &child.config.task)?.loss);
        }
    }
    Ok(SweepRow {
        label: child.label.clone(),
        kind: child.config.optimizer.kind,
        seed: child.config.seed,
        status: "ok".into(),
        final_train_loss: Some(summary.final_train_loss),
        final_eval_loss: Some(summary.final_eval_loss),
        hidden_nsr: summary.hidden_nsr,
        compressed_eval_loss,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4e}"))
}

fn table(rows: &[SweepRow], rates: &[f64]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
    let mut t = format!("{:<width$}  {:>10}  {:>10}  {:>10}", "run", "train", "eval", "hidden_nsr");
    for r in rates {
        write!(t, "  {:>10}", format!("eval@{r}")).unwrap();
    }
    t.push_str("  status\n");
    for row in rows {
        write!(
            t,
            "{:<width$}  {:>10}  {:>10}  {:>10}",
            row.label,
            opt(row.final_train_loss),
            opt(row.final_eval_loss),
            row.hidden_nsr.map_or("-".into(), |v| format!("{v:.4}"))
        )
        .unwrap();
        for r in rates {
            write!(t, "  {:>10}", opt(row.compressed_eval_loss.get(&r.to_string()).copied())).unwrap();
        }
        writeln!(t, "  {}", row.status).unwrap();
    }
    t
}

pub fn load(path: &Path) -> Result<SweepConfig> {
    let text = fs::read_to_string(path)?;
    let sweep: SweepConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    if sweep.compress_rates.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
        return Err(Error::Config("compress_rates must lie in (0, 1)".into()));
    }
    Ok(sweep)
}

pub fn run(path: &Path, workers: Option<usize>) -> Result<()> {
    let sweep = load(path)?;
    let children = expand(&sweep)?;
    let workers = workers.unwrap_or(sweep.workers).clamp(1, children.len().max(1));
    fs::create_dir_all(&sweep.output_dir)?;

    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<SweepRow>>>> = children.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(child) = children.get(i) else { break };
                let dir = sweep.output_dir.join(&child.label);
                let r = run_child(child, &dir, &sweep.compress_rates, &sweep.compress_policy);
                eprintln!(
                    "[{}/{}] {} {}",
                    i + 1,
                    children.len(),
                    child.label,
                    if r.is_ok() { "done" } else { "failed" }
                );
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });

    let mut rows = Vec::new();
    let mut first_err = None;
    for (child, slot) in children.iter().zip(results) {
        match slot.into_inner().unwrap().expect("every child runs") {
            Ok(row) => rows.push(row),
            Err(e) => {
                rows.push(SweepRow {
                    label: child.label.clone(),
                    kind: child.config.optimizer.kind,
                    seed: child.config.seed,
                    status: e.to_string(),
                    final_train_loss: None,
                    final_eval_loss: None,
                    hidden_nsr: None,
                    compressed_eval_loss: BTreeMap::new(),
                });
                first_err.get_or_insert(e);
            }
        }
    }

    let mut jsonl = String::new();
    for row in &rows {
        jsonl.push_str(&serde_json::to_string(row).map_err(|e| Error::FormatError(e.to_string()))?);
        jsonl.push('\n');
    }
    fs::write(sweep.output_dir.join("summary.jsonl"), jsonl)?;
    let text = table(&rows, &sweep.compress_rates);
    fs::write(sweep.output_dir.join("summary.txt"), &text)?;
    print!("{text}");
    first_err.map_or(Ok(()), Err)
}
