//! Rough timings of the spectral kernels at desk-model sizes.

use std::time::{Duration, Instant};

use numuon::linalg::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn time<T>(reps: u32, mut f: impl FnMut(u32) -> T) -> Duration {
    let t = Instant::now();
    for i in 0..reps {
        std::hint::black_box(f(i));
    }
    t.elapsed() / reps
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = Matrix::gaussian(128, 128, &mut rng);
    println!("thin_svd 128x128     {:?}", time(5, |_| thin_svd(&a).unwrap()));
    println!("qr 128x128           {:?}", time(5, |_| qr_orthonormalize(&a).unwrap()));
    println!("newton_schulz 5 it   {:?}", time(5, |_| newton_schulz(&a, 5, NsCoefficients::default()).unwrap()));
    for k in [32, 96, 128] {
        let p = |s| KrylovParams { block: k, iters: 2, seed: s as u64 };
        println!("krylov k={k:<3} cold    {:?}", time(5, |s| block_krylov_topk(&a, k, p(s), None).unwrap()));
        let warm = block_krylov_topk(&a, k, p(99), None).unwrap().v;
        let b = a.add(&Matrix::gaussian(128, 128, &mut rng).scale(0.01)).unwrap();
        println!("krylov k={k:<3} warm    {:?}", time(5, |s| block_krylov_topk(&b, k, p(s), Some(&warm)).unwrap()));
    }
}
