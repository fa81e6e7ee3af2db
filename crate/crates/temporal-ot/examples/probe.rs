use temporal_ot::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn random_traj(rng: &mut ChaCha8Rng, t: usize, dim: usize, smooth: bool) -> Trajectory {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut cur: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    for _ in 0..t {
        if smooth {
            for x in cur.iter_mut() { *x += rng.random_range(-0.2..0.2); }
        } else {
            cur = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        }
        if cur.iter().map(|x| x * x).sum::<f64>() < 1e-6 { cur[0] += 0.5; }
        rows.push(cur.clone());
    }
    Trajectory::from_rows(rows, TrajectorySource::Agent, 0).unwrap()
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut total = std::time::Duration::ZERO;
    let mut n = 0;
    for smooth in [true, false] {
        for rep in 0..13 {
            let t_a = rng.random_range(2..=64);
            let t_e = if rep % 2 == 0 { t_a } else { rng.random_range(2..=64) };
            let a = random_traj(&mut rng, t_a, 6, smooth);
            let d = random_traj(&mut rng, t_e, 6, smooth);
            let k_c = rng.random_range(1..=3);
            let c = context_cost_matrix(&a, &d, k_c).unwrap();
            for (mk, mask) in [
                ("ones", ones_mask(t_a, t_e)),
                ("causal", causal_mask(t_a, t_e)),
                ("band", band_mask(t_a, t_e, rng.random_range(0..=12))),
                ("dyn", dynamic_mask(&c, rng.random_range(0..=12))),
            ] {
                for eps in [0.1, 0.01] {
                    let cfg = SinkhornConfig { epsilon: eps, max_iterations: 20_000, tolerance: 1e-6, log_domain: true };
                    let start = Instant::now();
                    let plan = solve(&c, &mask, &Marginals::uniform(t_a, t_e), &cfg).unwrap();
                    let el = start.elapsed();
                    total += el; n += 1;
                    eprintln!("{mk} smooth={smooth} T=({t_a},{t_e}) kc={k_c} eps={eps} iters={} conv={} viol={:.1e} time={el:.1?}",
                        plan.iterations_used(), plan.converged(), plan.marginal_violation());
                }
            }
        }
    }
    eprintln!("solves={n} total={total:.2?}");
}
