//! Trains Muon and NuMuon on the teacher task and prints final metrics.
//!
//! Usage: `cargo run --release --example desk_run -- [steps] [lr] [wd] [seed]`

use std::time::Instant;

use numuon::config::{ModelSpec, RunConfig};
use numuon::diagnostics::normalized_stable_rank;
use numuon::harness::{train_run, TaskSpec};
use numuon::optim::{OptimizerKind, OptimizerSpec};
use numuon::schedule::{LrSchedule, RankSchedule};

fn main() -> numuon::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let steps = arg(0, 3000.0) as usize;
    let (lr, wd, seed) = (arg(1, 0.05), arg(2, 0.2), arg(3, 0.0) as u64);
    for kind in [OptimizerKind::Muon, OptimizerKind::Numuon] {
        let mut opt = OptimizerSpec::new(
            kind,
            LrSchedule::wsd(lr, 0, steps),
            RankSchedule::cosine_hold(1.0, 0.25, steps),
        );
        opt.weight_decay = wd;
        opt.seed = seed;
        let cfg = RunConfig {
            total_steps: steps,
            batch_size: 64,
            seed,
            diagnostics_every: 0,
            diagnostic_ks: vec![],
            subspace_k: 64,
            log_wall_time: false,
            output_dir: None,
            model: ModelSpec::default(),
            task: TaskSpec::regression(seed),
            optimizer: opt,
        };
        let t0 = Instant::now();
        let out = train_run(&cfg, |_| Ok(()))?;
        let nsr: Vec<f64> = (0..out.model.num_layers())
            .map(|i| normalized_stable_rank(out.model.weight(i)).unwrap())
            .collect();
        println!(
            "{kind:?} train {:.4e} eval {:.4e} nsr {:.3?} {:.1}s",
            out.final_train_loss,
            out.final_eval_loss,
            nsr,
            t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
