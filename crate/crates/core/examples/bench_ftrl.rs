use mset_core::baselines::{ftrl_round, FtrlState, Regularizer};
use mset_core::rng::seeded_rng;
use rand::Rng;

fn main() {
    for reg in [Regularizer::Shannon, Regularizer::LogBarrier, Regularizer::Hybrid] {
        let mut state = FtrlState::new(10, 5, reg, 1.0).unwrap();
        let mut rng = seeded_rng(1);
        let n = 100_000;
        let t0 = std::time::Instant::now();
        for _ in 0..n {
            let losses: Vec<f64> = (0..10).map(|i| ((rng.random::<f64>() < if i < 5 {0.4} else {0.6}) as u64) as f64).collect();
            ftrl_round(&mut state, &losses, 1e-9, &mut rng).unwrap();
        }
        let el = t0.elapsed();
        eprintln!("{reg:?}: {n} rounds in {el:?} ({:.2} us/round)", el.as_secs_f64() * 1e6 / n as f64);
    }
}
