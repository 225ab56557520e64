use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use numuon::harness::{train_run, Activation, MlpModel, TaskSpec};
use numuon::optim::{OptimizerKind, OptimizerSpec};
use numuon::schedule::{LrSchedule, RankSchedule};
use numuon::{Error, ModelSpec, RunConfig};

fn config(kind: OptimizerKind, lr: f64, steps: usize) -> RunConfig {
    let task = TaskSpec {
        input_dim: 16,
        output_dim: 16,
        train_size: 512,
        eval_size: 128,
        teacher_rank: 4,
        noise_std: 0.0,
        ..TaskSpec::regression(5)
    };
    RunConfig {
        total_steps: steps,
        batch_size: 64,
        seed: 5,
        diagnostics_every: 0,
        diagnostic_ks: vec![1],
        subspace_k: 4,
        log_wall_time: false,
        output_dir: None,
        model: ModelSpec {
            hidden: vec![32, 32],
            activation: Activation::Tanh,
        },
        task,
        optimizer: OptimizerSpec {
            weight_decay: 0.0,
            ..OptimizerSpec::new(kind, LrSchedule::wsd(lr, 0, steps), RankSchedule::cosine_hold(1.0, 0.5, steps))
        },
    }
}

#[test]
fn every_optimizer_fits_the_teacher() {
    for (kind, lr) in [
        (OptimizerKind::AdamW, 3e-3),
        (OptimizerKind::Muon, 0.05),
        (OptimizerKind::Numuon, 0.05),
    ] {
        let cfg = config(kind, lr, 600);
        let mut first = None;
        let out = train_run(&cfg, |r| {
            first.get_or_insert(r.loss);
            Ok(())
        })
        .unwrap();
        let first = first.unwrap();
        assert!(
            out.final_train_loss < 0.1 * first,
            "{kind:?}: {first} -> {}",
            out.final_train_loss
        );
        assert!(out.final_eval_loss < 0.2 * first, "{kind:?}: eval {}", out.final_eval_loss);
    }
}

#[test]
fn huge_step_size_reports_divergence() {
    let cfg = config(OptimizerKind::AdamW, 1e6, 50);
    match train_run(&cfg, |_| Ok(())) {
        Err(Error::Diverged { step, loss }) => assert!(step < 50 && !(loss <= 1e6)),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn sink_errors_stop_the_run() {
    let cfg = config(OptimizerKind::Muon, 0.05, 20);
    let mut seen = 0;
    let r = train_run(&cfg, |rec| {
        seen += 1;
        if rec.step == 4 {
            Err(Error::Config("stop".into()))
        } else {
            Ok(())
        }
    });
    assert!(matches!(r, Err(Error::Config(_))));
    assert_eq!(seen, 5);
}

#[test]
fn config_survives_toml_round_trip() {
    let mut cfg = config(OptimizerKind::Numuon, 0.02, 100);
    cfg.optimizer.fw_style = true;
    cfg.output_dir = Some("runs/x".into());
    let text = cfg.to_toml().unwrap();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    cfg.save(&path).unwrap();
    assert_eq!(RunConfig::load(&path).unwrap(), cfg);
}

#[test]
fn minimal_config_takes_defaults() {
    let cfg = RunConfig::from_toml(
        r#"
total_steps = 10
[task]
kind = "lowrank_teacher_regression"
[optimizer]
kind = "muon"
lr = { kind = "cosine", base_lr = 0.02, warmup_steps = 1, total_steps = 10 }
rank = { kind = "fixed", fraction = 1.0 }
"#,
    )
    .unwrap();
    assert_eq!(cfg.batch_size, 64);
    assert_eq!(cfg.model.hidden, [128, 128, 128]);
    assert_eq!(cfg.optimizer.beta, 0.95);
    assert!(cfg.optimizer.rms_scaling);
}

#[test]
fn unknown_fields_and_bad_values_are_rejected() {
    assert!(matches!(
        RunConfig::from_toml("total_steps = 1\nfoo = 2\n"),
        Err(Error::Config(_))
    ));
    let mut cfg = config(OptimizerKind::Muon, 0.05, 10);
    cfg.optimizer.beta = 1.5;
    assert!(cfg.validate().is_err());
}

#[test]
fn classification_gradient_matches_finite_differences() {
    let task = TaskSpec {
        input_dim: 6,
        train_size: 24,
        eval_size: 8,
        teacher_rank: 3,
        ..TaskSpec::classification(2, 4)
    };
    let data = task.generate().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = MlpModel::init(6, &[7], 4, Activation::Tanh, &mut rng).unwrap();
    let (_, grads) = model.loss_and_grad(&data.train).unwrap();

    let h = 1e-5;
    for p in model.params() {
        let g = &grads[&p.name];
        for idx in 0..p.weight.as_slice().len() {
            let mut plus = model.clone();
            let mut minus = model.clone();
            let pos = plus.params().iter().position(|q| q.name == p.name).unwrap();
            plus.params_mut()[pos].weight.as_mut_slice()[idx] += h;
            minus.params_mut()[pos].weight.as_mut_slice()[idx] -= h;
            let fd = (plus.loss(&data.train).unwrap() - minus.loss(&data.train).unwrap()) / (2.0 * h);
            let an = g.as_slice()[idx];
            assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "{} [{idx}]: {an} vs {fd}", p.name);
        }
    }
}
