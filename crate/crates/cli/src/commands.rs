use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use numuon::compress::{compress_model, eval_compressed, CompressionPolicy};
use numuon::diagnostics::{mean_normalized_stable_rank, normalized_stable_rank, report_block, SpectralReport};
use numuon::harness::{train_run, TaskSpec, TrainOutput};
use numuon::lmo::{capped_simplex_lp, NormBudget};
use numuon::persist::{Checkpoint, MetricsWriter};
use numuon::{Error, Result, RunConfig};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "final.spopt";
pub const SUMMARY_FILE: &str = "summary.json";

/// Written to `summary.json` at the end of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub final_train_loss: f64,
    pub final_eval_loss: f64,
    /// Mean normalized stable rank of the hidden-layer weights.
    pub hidden_nsr: Option<f64>,
    /// Normalized stable rank of every weight, input layer first.
    pub layer_nsr: Vec<f64>,
    pub wall_time_s: f64,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::FormatError(e.to_string()))
}

fn default_run_dir(config: &Path) -> PathBuf {
    let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    PathBuf::from("runs").join(stem)
}

/// Trains `cfg` into `dir`: resolved config, metrics stream, final
/// checkpoint and summary.
pub fn run_into(cfg: &RunConfig, dir: &Path) -> Result<(RunSummary, TrainOutput)> {
    fs::create_dir_all(dir)?;
    let mut resolved = cfg.clone();
    resolved.output_dir = Some(dir.to_path_buf());
    resolved.save(&dir.join(CONFIG_FILE))?;

    let started = Instant::now();
    let mut metrics = MetricsWriter::create(&dir.join(METRICS_FILE))?;
    let out = train_run(&resolved, |r| metrics.write(r));
    metrics.finish()?;
    let out = out?;

    let mut ckpt = Checkpoint::from_model(&out.model);
    ckpt.meta.insert("steps".into(), cfg.total_steps.to_string());
    ckpt.meta.insert("seed".into(), cfg.seed.to_string());
    ckpt.meta.insert("optimizer".into(), format!("{:?}", cfg.optimizer.kind).to_lowercase());
    ckpt.save(&dir.join(CHECKPOINT_FILE))?;

    let layer_nsr = (0..out.model.num_layers())
        .map(|i| normalized_stable_rank(out.model.weight(i)))
        .collect::<Result<Vec<_>>>()?;
    let summary = RunSummary {
        steps: cfg.total_steps,
        final_train_loss: out.final_train_loss,
        final_eval_loss: out.final_eval_loss,
        hidden_nsr: mean_normalized_stable_rank(out.model.hidden_weights())?,
        layer_nsr,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    fs::write(dir.join(SUMMARY_FILE), to_json(&summary)?)?;
    Ok((summary, out))
}

pub fn train(config: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| default_run_dir(config));
    let (s, _) = run_into(&cfg, &dir)?;
    println!(
        "steps {}  train loss {:.6e}  eval loss {:.6e}  hidden nsr {}  ({:.1}s)",
        s.steps,
        s.final_train_loss,
        s.final_eval_loss,
        s.hidden_nsr.map_or("-".into(), |v| format!("{v:.4}")),
        s.wall_time_s
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn csv_header(ks: &[usize]) -> String {
    let mut h = "block,step,rows,cols,stable_rank,normalized_stable_rank,nuclear_norm,top_singular".to_string();
    for k in ks {
        write!(h, ",tail_energy_{k}").unwrap();
    }
    h
}

fn csv_row(r: &SpectralReport, ks: &[usize]) -> String {
    let mut row = format!(
        "{},{},{},{},{},{},{},{}",
        r.block_name, r.step, r.rows, r.cols, r.stable_rank, r.normalized_stable_rank, r.nuclear_norm, r.top_singular
    );
    for k in ks {
        match r.tail_energy_k.get(k) {
            Some(v) => write!(row, ",{v}").unwrap(),
            None => row.push(','),
        }
    }
    row
}

pub fn diagnose(ckpt_path: &Path, csv: Option<&Path>, ks: &[usize], out: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let step = ckpt.meta.get("steps").and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut reports = Vec::new();
    for b in ckpt.blocks.iter().filter(|b| b.is_matrix_param) {
        let w = b.tensor.to_dense();
        let q = w.min_dim();
        reports.push(report_block(&b.name, step, &w, None, ks, q)?);
    }

    let mut lines = String::new();
    for r in &reports {
        lines.push_str(&serde_json::to_string(r).map_err(|e| Error::FormatError(e.to_string()))?);
        lines.push('\n');
    }
    match out {
        Some(p) => fs::write(p, &lines)?,
        None => std::io::stdout().write_all(lines.as_bytes())?,
    }
    if let Some(p) = csv {
        let mut text = csv_header(ks);
        text.push('\n');
        for r in &reports {
            text.push_str(&csv_row(r, ks));
            text.push('\n');
        }
        fs::write(p, text)?;
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn plan_path(ckpt_out: &Path) -> PathBuf {
    ckpt_out.with_extension("plan.json")
}

pub fn compress(ckpt_path: &Path, rate: f64, policy: &str, out: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let (compressed, plan) = compress_model(&ckpt, rate, &CompressionPolicy::parse(policy))?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| {
        let stem = ckpt_path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        ckpt_path.with_file_name(format!("{stem}.r{rate}.spopt"))
    });
    compressed.save(&out)?;
    fs::write(plan_path(&out), to_json(&plan)?)?;
    for (name, k) in &plan.per_block_rank {
        println!("{name}: rank {k}");
    }
    for name in &plan.skipped_blocks {
        println!("{name}: kept dense");
    }
    println!(
        "params {} -> {} ({} dense)",
        plan.original_params + plan.dense_params,
        plan.total_params,
        plan.dense_params
    );
    println!("wrote {}", out.display());
    Ok(())
}

/// A run config's task, or a bare task spec.
pub fn load_task(path: &Path) -> Result<TaskSpec> {
    let text = fs::read_to_string(path)?;
    if let Ok(cfg) = RunConfig::from_toml(&text) {
        return Ok(cfg.task);
    }
    let task: TaskSpec = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    task.validate()?;
    Ok(task)
}

pub fn eval(ckpt_path: &Path, task_path: &Path, out: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let task = load_task(task_path)?;
    let metrics = eval_compressed(&ckpt, &task)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| with_suffix(ckpt_path, ".eval.json"));
    fs::write(&out, to_json(&metrics)?)?;
    print!("eval loss {:.6e} over {} samples", metrics.loss, metrics.samples);
    if let Some(p) = metrics.perplexity {
        print!("  perplexity {p:.4}");
    }
    println!();
    Ok(())
}

/// Best objective over the vertices of `{0 ≤ s ≤ ρ, Σs ≤ τ}`: every
/// coordinate at 0 or ρ except at most one carrying the leftover budget.
fn lp_by_enumeration(sigma: &[f64], rho: f64, tau: Option<f64>) -> f64 {
    let q = sigma.len();
    let tau = tau.unwrap_or(f64::INFINITY);
    let mut best = 0.0f64;
    for mask in 0u32..(1 << q) {
        let full = mask.count_ones() as f64 * rho;
        if full > tau * (1.0 + 1e-12) {
            continue;
        }
        let base: f64 = (0..q).filter(|i| mask >> i & 1 == 1).map(|i| sigma[i] * rho).sum();
        best = best.max(base);
        let left = (tau - full).min(rho);
        if left > 0.0 {
            for i in (0..q).filter(|i| mask >> i & 1 == 0) {
                best = best.max(base + sigma[i] * left);
            }
        }
    }
    best
}

/// Largest `q` checked by enumeration.
const ENUMERATION_LIMIT: usize = 20;

pub fn lp(sigma: &[f64], rho: f64, tau: Option<f64>) -> Result<()> {
    let budget = NormBudget::new(rho, tau)?;
    let sol = capped_simplex_lp(sigma, budget)?;
    println!("s          = {:?}", sol.s);
    println!("active     = {}", sol.active_rank);
    println!("residual   = {}", sol.residual);
    println!("objective  = {}", sol.objective);
    if sigma.len() > ENUMERATION_LIMIT {
        println!("brute force skipped (q > {ENUMERATION_LIMIT})");
        return Ok(());
    }
    let brute = lp_by_enumeration(sigma, rho, budget.tau());
    let gap = (brute - sol.objective).abs();
    println!("brute      = {brute}");
    if gap > 1e-10 * brute.abs().max(1.0) {
        return Err(Error::InvalidStep(format!("greedy and enumeration differ by {gap:e}")));
    }
    println!("verified (|gap| = {gap:e})");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_matches_hand_cases() {
        assert_eq!(lp_by_enumeration(&[3.0, 2.0, 1.0], 1.0, Some(1.5)), 4.0);
        assert_eq!(lp_by_enumeration(&[3.0, 2.0, 1.0], 2.0, None), 12.0);
        assert_eq!(lp_by_enumeration(&[3.0, 2.0, 1.0], 1.0, Some(0.5)), 1.5);
    }

    #[test]
    fn plan_path_replaces_extension() {
        assert_eq!(plan_path(Path::new("a/m.r0.6.spopt")), PathBuf::from("a/m.r0.6.plan.json"));
    }
}
