mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use numuon::compress::LowRankFactors;
use numuon::linalg::thin_svd;
use numuon::lmo::{capped_simplex_lp, NormBudget};
use numuon::persist::{Checkpoint, StoredBlock, StoredTensor};
use numuon::schedule::{rank_at, LrSchedule, RankSchedule};
use numuon::Matrix;

fn sorted_sigma() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, 1..9).prop_map(|mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    })
}

/// Best objective over all vertices of `{0 ≤ s ≤ ρ, Σs ≤ τ}`: every
/// coordinate is 0, ρ, or the single leftover `τ − jρ`.
fn lp_brute(sigma: &[f64], rho: f64, tau: f64) -> f64 {
    let q = sigma.len();
    let mut best = 0.0f64;
    for mask in 0u32..(1 << q) {
        let full: Vec<usize> = (0..q).filter(|i| mask & (1 << i) != 0).collect();
        let used = full.len() as f64 * rho;
        if used > tau + 1e-12 {
            continue;
        }
        let base: f64 = full.iter().map(|&i| sigma[i] * rho).sum();
        best = best.max(base);
        let left = (tau - used).min(rho);
        for (i, s) in sigma.iter().enumerate() {
            if mask & (1 << i) == 0 {
                best = best.max(base + s * left);
            }
        }
    }
    best
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    common::gaussian(rows, cols, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn greedy_lp_matches_vertex_search(sigma in sorted_sigma(), rho in 0.1f64..3.0, frac in 0.0f64..1.2) {
        let tau = frac * rho * sigma.len() as f64;
        let sol = capped_simplex_lp(&sigma, NormBudget::new(rho, Some(tau)).unwrap()).unwrap();
        let best = lp_brute(&sigma, rho, tau);
        prop_assert!((sol.objective - best).abs() <= 1e-9 * best.max(1.0));
        prop_assert!(sol.s.iter().all(|&x| (0.0..=rho).contains(&x)));
        prop_assert!(sol.s.iter().sum::<f64>() <= tau + 1e-9);
    }

    #[test]
    fn rank_stays_in_bounds_and_grows_with_fraction(f1 in 0.0f64..=1.0, f2 in 0.0f64..=1.0, d_in in 1usize..300, d_out in 1usize..300) {
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let (k_lo, k_hi) = (rank_at(lo, d_in, d_out), rank_at(hi, d_in, d_out));
        prop_assert!(k_lo >= 1 && k_hi <= d_in.min(d_out));
        prop_assert!(k_lo <= k_hi);
    }

    #[test]
    fn schedules_stay_in_range(total in 10usize..500, warm in 0usize..5, r_end in 0.01f64..1.0, t in 0usize..600) {
        let t = t % total;
        for lr in [LrSchedule::wsd(0.1, warm, total), LrSchedule::cosine(0.1, warm, total)] {
            let v = lr.lr_at(t).unwrap();
            prop_assert!((0.0..=0.1 + 1e-15).contains(&v));
        }
        let rank = RankSchedule::cosine_hold(1.0, r_end, total);
        let r = rank.rank_fraction_at(t).unwrap();
        prop_assert!(r >= r_end - 1e-12 && r <= 1.0 + 1e-12);
        if t > 0 {
            prop_assert!(r <= rank.rank_fraction_at(t - 1).unwrap() + 1e-12);
        }
    }

    #[test]
    fn svd_reconstructs_with_orthonormal_factors(rows in 1usize..12, cols in 1usize..12, seed in any::<u64>()) {
        let a = random_matrix(rows, cols, seed);
        let svd = thin_svd(&a).unwrap();
        prop_assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(common::frob_dist(&svd.reconstruct(), &a) <= 1e-10 * a.frobenius_norm().max(1.0));
        let k = svd.rank();
        let utu = svd.u.t_matmul(&svd.u).unwrap();
        let vtv = svd.v.t_matmul(&svd.v).unwrap();
        prop_assert!(utu.max_abs_diff(&Matrix::identity(k)).unwrap() < 1e-10);
        prop_assert!(vtv.max_abs_diff(&Matrix::identity(k)).unwrap() < 1e-10);
        let oracle = common::singular_values(&a);
        for (s, o) in svd.s.iter().zip(&oracle) {
            prop_assert!((s - o).abs() <= 1e-8 * oracle[0].max(1.0));
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact(shapes in prop::collection::vec((1usize..6, 1usize..6, 0usize..3), 1..5), seed in any::<u64>()) {
        let mut ckpt = Checkpoint::default();
        ckpt.meta.insert("seed".into(), seed.to_string());
        for (i, &(r, c, kind)) in shapes.iter().enumerate() {
            let s = seed.wrapping_add(i as u64);
            let tensor = match kind {
                0 => StoredTensor::Dense(random_matrix(r, c, s)),
                1 => {
                    let k = r.min(c);
                    StoredTensor::Factored(LowRankFactors::new(random_matrix(r, k, s), random_matrix(c, k, !s)).unwrap())
                }
                _ => StoredTensor::Dense(random_matrix(r, 1, s)),
            };
            ckpt.blocks.push(StoredBlock { name: format!("b{i}"), is_matrix_param: kind != 2, tensor });
        }
        let mut bytes = Vec::new();
        ckpt.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
        prop_assert_eq!(back, ckpt);
    }
}

#[test]
fn planted_spectrum_oracle_is_self_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u = common::random_orthogonal(9, &mut rng);
    let v = common::random_orthogonal(6, &mut rng);
    let s = [5.0, 3.0, 2.0, 1.0, 0.5, 0.25];
    let a = common::with_spectrum(&u, &s, &v);
    let got = common::singular_values(&a);
    for (g, e) in got.iter().zip(s) {
        assert!((g - e).abs() < 1e-12, "{got:?}");
    }
}

#[test]
fn truncated_lp_stops_at_budget() {
    let sol = capped_simplex_lp(&[4.0, 3.0, 2.0, 1.0], NormBudget::new(1.0, Some(2.5)).unwrap()).unwrap();
    assert_eq!(sol.s, [1.0, 1.0, 0.5, 0.0]);
    assert_eq!(sol.active_rank, 3);
    assert_eq!(sol.objective, 8.0);
}
