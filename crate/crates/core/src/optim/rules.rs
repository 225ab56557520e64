use crate::error::{Error, Result};
use crate::linalg::{newton_schulz, polar_factor_exact, thin_svd, Matrix};
use crate::lmo::{rms_scale, top_k_factors, SvdMode};

use super::{MomentumInit, OptimizerState, Orthogonalizer, ParamBlock, StepConfig};

/// What a single block update did.
#[derive(Debug, Clone, Default)]
pub struct Update {
    /// Raw orthogonalized direction before `−γ·ρ·scale`; `None` when the
    /// momentum was zero or the rule is elementwise.
    pub direction: Option<Matrix>,
    /// The randomized SVD failed and an exact SVD was used instead.
    pub used_fallback: bool,
}

/// `M_t = β·M_{t−1} + (1 − β)·G_t`, stored in `state` and returned.
pub fn momentum_update(state: &mut OptimizerState, grad: &Matrix, beta: f64) -> Result<Matrix> {
    momentum_update_with(state, grad, beta, MomentumInit::Zeros)
}

/// Like [`momentum_update`], with a choice of how the first step is seeded.
pub fn momentum_update_with(
    state: &mut OptimizerState,
    grad: &Matrix,
    beta: f64,
    init: MomentumInit,
) -> Result<Matrix> {
    if grad.shape() != state.momentum.shape() {
        return Err(Error::shape(state.momentum.shape(), grad.shape()));
    }
    if state.step == 0 && init == MomentumInit::FirstGradient {
        state.momentum = grad.clone();
    } else {
        state.momentum.scale_in_place(beta);
        state.momentum.axpy(1.0 - beta, grad)?;
    }
    Ok(state.momentum.clone())
}

/// Convex combination `(1 − γ)·W + γ·Δ`.
pub fn fw_step(weight: &Matrix, direction: &Matrix, gamma: f64) -> Result<Matrix> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidStep(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let mut out = weight.scale(1.0 - gamma);
    out.axpy(gamma, direction)?;
    Ok(out)
}

fn check_grad(block: &ParamBlock, grad: &Matrix) -> Result<()> {
    if grad.shape() != block.weight.shape() {
        return Err(Error::shape(block.weight.shape(), grad.shape()));
    }
    Ok(())
}

/// Applies `W ← decay(W) − γ·ρ·scale·D` in either additive or FW form.
fn apply_direction(block: &mut ParamBlock, direction: Option<&Matrix>, cfg: &StepConfig) -> Result<()> {
    let (d_out, d_in) = block.weight.shape();
    let scale = if cfg.rms_scaling { rms_scale(d_out, d_in) } else { 1.0 };
    if cfg.fw_style {
        if cfg.lr == 0.0 {
            return Ok(());
        }
        let target = match direction {
            Some(d) => d.scale(-cfg.rho * scale),
            None => Matrix::zeros(d_out, d_in),
        };
        block.weight = fw_step(&block.weight, &target, cfg.lr)?;
    } else {
        block.weight.scale_in_place(1.0 - cfg.lr * cfg.weight_decay);
        if let Some(d) = direction {
            block.weight.axpy(-cfg.lr * cfg.rho * scale, d)?;
        }
    }
    Ok(())
}

fn require_matrix(block: &ParamBlock, rule: &str) -> Result<()> {
    if !block.is_matrix_param {
        return Err(Error::InvalidInput(format!(
            "{rule} needs a matrix parameter, `{}` is not one",
            block.name
        )));
    }
    Ok(())
}

/// One Muon update: momentum, polar factor of the momentum, decayed step.
pub fn muon_step(
    block: &mut ParamBlock,
    state: &mut OptimizerState,
    grad: &Matrix,
    cfg: &StepConfig,
) -> Result<Update> {
    require_matrix(block, "muon")?;
    check_grad(block, grad)?;
    let m = momentum_update_with(state, grad, cfg.beta, cfg.momentum_init)?;
    let direction = if m.is_zero() {
        None
    } else {
        Some(match cfg.orthogonalizer {
            Orthogonalizer::NewtonSchulz { iters, coeffs } => newton_schulz(&m, iters, coeffs)?,
            Orthogonalizer::Exact => polar_factor_exact(&m)?,
        })
    };
    apply_direction(block, direction.as_ref(), cfg)?;
    state.step += 1;
    Ok(Update {
        direction,
        used_fallback: false,
    })
}

/// One NuMuon update with the rank-`k` direction `U_k·V_kᵀ` of the momentum.
pub fn numuon_step(
    block: &mut ParamBlock,
    state: &mut OptimizerState,
    grad: &Matrix,
    k: usize,
    cfg: &StepConfig,
) -> Result<Update> {
    require_matrix(block, "numuon")?;
    check_grad(block, grad)?;
    let q = block.weight.min_dim();
    if k == 0 || k > q {
        return Err(Error::InvalidRank { k, max: q });
    }
    let m = momentum_update_with(state, grad, cfg.beta, cfg.momentum_init)?;
    let mut used_fallback = false;
    let direction = if m.is_zero() {
        None
    } else {
        let factors = match top_k_factors(&m, k, cfg.svd_mode, cfg.seed, state.warm_block.as_ref()) {
            Err(Error::RankDeficient) => {
                used_fallback = true;
                thin_svd(&m)?.truncate(k)?
            }
            other => other?,
        };
        if matches!(cfg.svd_mode, SvdMode::Krylov { .. }) {
            state.warm_block = Some(factors.v.clone());
        }
        Some(factors.isometry())
    };
    apply_direction(block, direction.as_ref(), cfg)?;
    state.step += 1;
    Ok(Update {
        direction,
        used_fallback,
    })
}

/// Bias-corrected AdamW with decoupled weight decay.
pub fn adamw_step(
    block: &mut ParamBlock,
    state: &mut OptimizerState,
    grad: &Matrix,
    cfg: &StepConfig,
) -> Result<Update> {
    check_grad(block, grad)?;
    let (rows, cols) = grad.shape();
    let super::AdamParams { beta1, beta2, eps } = cfg.adam;
    let m = state.adam_m.get_or_insert_with(|| Matrix::zeros(rows, cols));
    let v = state.adam_v.get_or_insert_with(|| Matrix::zeros(rows, cols));
    if m.shape() != grad.shape() || v.shape() != grad.shape() {
        return Err(Error::shape(m.shape(), grad.shape()));
    }
    let t = (state.step + 1) as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    let w = block.weight.as_mut_slice();
    let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
    for (i, &g) in grad.as_slice().iter().enumerate() {
        ms[i] = beta1 * ms[i] + (1.0 - beta1) * g;
        vs[i] = beta2 * vs[i] + (1.0 - beta2) * g * g;
        let m_hat = ms[i] / c1;
        let v_hat = vs[i] / c2;
        let denom = v_hat.sqrt() + eps;
        let step = if denom > 0.0 { m_hat / denom } else { 0.0 };
        w[i] = decay * w[i] - cfg.lr * step;
    }
    state.step += 1;
    Ok(Update::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::OptimizerKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plain(kind: OptimizerKind, lr: f64) -> StepConfig {
        let mut cfg = StepConfig::new(kind, lr);
        cfg.weight_decay = 0.0;
        cfg.rms_scaling = false;
        cfg.beta = 0.0;
        cfg
    }

    #[test]
    fn momentum_examples() {
        let mut s = OptimizerState::new(2, 2);
        let ones = Matrix::from_fn(2, 2, |_, _| 1.0);
        let m = momentum_update(&mut s, &ones, 0.9).unwrap();
        assert!(m.max_abs_diff(&ones.scale(0.1)).unwrap() < 1e-15);

        let mut s = OptimizerState::new(2, 2);
        let m = momentum_update(&mut s, &ones, 0.0).unwrap();
        assert_eq!(m, ones);

        let mut s = OptimizerState::new(2, 2);
        let m = momentum_update_with(&mut s, &ones, 0.9, MomentumInit::FirstGradient).unwrap();
        assert_eq!(m, ones);

        let mut s = OptimizerState::new(2, 2);
        for _ in 0..50 {
            momentum_update(&mut s, &ones, 0.95).unwrap();
        }
        let expect = 1.0 - 0.95f64.powi(50);
        assert!((s.momentum[(0, 0)] - expect).abs() < 1e-12);
        for _ in 0..40 {
            momentum_update(&mut s, &ones, 0.95).unwrap();
        }
        assert!(s.momentum.max_abs_diff(&ones).unwrap() < 1e-2);

        let mut s = OptimizerState::new(2, 2);
        for step in 0..50 {
            momentum_update_with(&mut s, &ones, 0.95, MomentumInit::FirstGradient).unwrap();
            s.step = step + 1;
        }
        assert!(s.momentum.max_abs_diff(&ones).unwrap() < 1e-12);
        assert!(momentum_update(&mut s, &Matrix::zeros(3, 2), 0.9).is_err());
    }

    #[test]
    fn fw_examples() {
        let w = Matrix::identity(2).scale(2.0);
        let d = Matrix::zeros(2, 2);
        assert_eq!(fw_step(&w, &d, 0.5).unwrap(), Matrix::identity(2));
        let d = Matrix::from_fn(2, 2, |i, j| (i + 2 * j) as f64);
        assert_eq!(fw_step(&w, &d, 1.0).unwrap(), d);
        assert!(matches!(fw_step(&w, &d, 0.0), Err(Error::InvalidStep(_))));
        assert!(matches!(fw_step(&w, &d, 1.5), Err(Error::InvalidStep(_))));
    }

    #[test]
    fn muon_orthogonal_momentum_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = thin_svd(&Matrix::gaussian(4, 4, &mut rng)).unwrap().isometry();
        let w0 = Matrix::gaussian(4, 4, &mut rng);
        let mut block = ParamBlock::matrix("w", w0.clone());
        let mut state = OptimizerState::for_block(&block);
        let cfg = plain(OptimizerKind::Muon, 0.1);
        muon_step(&mut block, &mut state, &q, &cfg).unwrap();
        let expect = w0.sub(&q.scale(0.1)).unwrap();
        assert!(block.weight.max_abs_diff(&expect).unwrap() < 1e-6);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_lr_only_decays() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w0 = Matrix::gaussian(3, 5, &mut rng);
        let g = Matrix::gaussian(3, 5, &mut rng);
        let mut block = ParamBlock::matrix("w", w0.clone());
        let mut state = OptimizerState::for_block(&block);
        let cfg = StepConfig::new(OptimizerKind::Muon, 0.0);
        muon_step(&mut block, &mut state, &g, &cfg).unwrap();
        assert_eq!(block.weight, w0);
        let zero = Matrix::zeros(3, 5);
        let mut cfg = StepConfig::new(OptimizerKind::Numuon, 0.5);
        cfg.weight_decay = 0.2;
        let mut state = OptimizerState::for_block(&block);
        let out = numuon_step(&mut block, &mut state, &zero, 2, &cfg).unwrap();
        assert!(out.direction.is_none());
        assert!(block.weight.max_abs_diff(&w0.scale(0.9)).unwrap() < 1e-15);
    }

    #[test]
    fn numuon_direction_has_norm_sqrt_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Matrix::gaussian(32, 16, &mut rng);
        let mut block = ParamBlock::matrix("w", Matrix::zeros(32, 16));
        let mut state = OptimizerState::for_block(&block);
        let mut cfg = plain(OptimizerKind::Numuon, 0.1);
        cfg.svd_mode = SvdMode::Exact;
        let out = numuon_step(&mut block, &mut state, &g, 4, &cfg).unwrap();
        let d = out.direction.unwrap();
        assert!((d.frobenius_norm() - 2.0).abs() < 1e-9);
        let s = thin_svd(&d).unwrap().s;
        assert!(s[..4].iter().all(|x| (x - 1.0).abs() < 1e-9));
        assert!(s[4..].iter().all(|x| x.abs() < 1e-9));
        assert!(numuon_step(&mut block, &mut state, &g, 17, &cfg).is_err());
    }

    #[test]
    fn numuon_rank_one_momentum() {
        let u = Matrix::from_columns(&[vec![0.6, 0.8, 0.0]]);
        let v = Matrix::from_columns(&[vec![0.0, 1.0]]);
        let g = u.matmul_t(&v).unwrap().scale(3.0);
        let w0 = Matrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        let mut block = ParamBlock::matrix("w", w0.clone());
        let mut state = OptimizerState::for_block(&block);
        let mut cfg = plain(OptimizerKind::Numuon, 0.25);
        cfg.rms_scaling = true;
        numuon_step(&mut block, &mut state, &g, 1, &cfg).unwrap();
        let expect = w0
            .sub(&u.matmul_t(&v).unwrap().scale(0.25 * (1.5f64).sqrt()))
            .unwrap();
        assert!(block.weight.max_abs_diff(&expect).unwrap() < 1e-12);
        // Krylov mode remembers the subspace for the next call.
        assert!(state.warm_block.is_some());
    }

    #[test]
    fn fw_form_uses_convex_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = Matrix::gaussian(5, 5, &mut rng);
        let w0 = Matrix::gaussian(5, 5, &mut rng);
        let mut block = ParamBlock::matrix("w", w0.clone());
        let mut state = OptimizerState::for_block(&block);
        let mut cfg = plain(OptimizerKind::Muon, 0.3);
        cfg.fw_style = true;
        cfg.orthogonalizer = Orthogonalizer::Exact;
        muon_step(&mut block, &mut state, &g, &cfg).unwrap();
        let lmo = polar_factor_exact(&g).unwrap().scale(-1.0);
        let expect = fw_step(&w0, &lmo, 0.3).unwrap();
        assert!(block.weight.max_abs_diff(&expect).unwrap() < 1e-12);
    }

    #[test]
    fn adamw_first_step() {
        let mut cfg = StepConfig::new(OptimizerKind::AdamW, 0.01);
        cfg.weight_decay = 0.0;
        cfg.adam.eps = 0.0;
        for g in [2.5, -0.3] {
            let mut block = ParamBlock::vector("b", vec![1.0]);
            let mut state = OptimizerState::for_block(&block);
            let grad = Matrix::from_fn(1, 1, |_, _| g);
            adamw_step(&mut block, &mut state, &grad, &cfg).unwrap();
            let moved = block.weight[(0, 0)] - 1.0;
            assert!((moved + 0.01 * g.signum()).abs() < 1e-15);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grad = Matrix::gaussian(3, 4, &mut rng);
        let w0 = Matrix::gaussian(3, 4, &mut rng);
        let run = |g: &Matrix| {
            let mut block = ParamBlock::matrix("w", w0.clone());
            let mut state = OptimizerState::for_block(&block);
            adamw_step(&mut block, &mut state, g, &cfg).unwrap();
            block.weight
        };
        assert!(run(&grad).max_abs_diff(&run(&grad.scale(10.0))).unwrap() < 1e-15);

        cfg.weight_decay = 0.1;
        let mut block = ParamBlock::matrix("w", w0.clone());
        let mut state = OptimizerState::for_block(&block);
        adamw_step(&mut block, &mut state, &Matrix::zeros(3, 4), &cfg).unwrap();
        assert!(block.weight.max_abs_diff(&w0.scale(1.0 - 0.001)).unwrap() < 1e-15);
    }
}
