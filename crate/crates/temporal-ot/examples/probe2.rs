use temporal_ot::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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
    // walk the probe RNG to the failing instance: smooth=true rep=5 -> T=(6,25)
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut target = None;
    for rep in 0..13 {
        let t_a = rng.random_range(2..=64);
        let t_e = if rep % 2 == 0 { t_a } else { rng.random_range(2..=64) };
        let a = random_traj(&mut rng, t_a, 6, true);
        let d = random_traj(&mut rng, t_e, 6, true);
        let k_c = rng.random_range(1..=3);
        let km_band = rng.random_range(0..=12usize);
        let km_dyn = rng.random_range(0..=12usize);
        if t_a == 6 && t_e == 25 {
            let c = context_cost_matrix(&a, &d, k_c).unwrap();
            target = Some((c, km_band));
            eprintln!("found rep={rep} k_c={k_c} km_band={km_band} km_dyn={km_dyn}");
            break;
        }
    }
    let (c, km) = target.expect("instance not found");
    let mask = band_mask(6, 25, km);
    eprintln!("mask:");
    for i in 0..6 {
        let row: String = (0..25).map(|j| if mask.is_set(i, j) { '1' } else { '.' }).collect();
        eprintln!("  {row}");
    }
    let marg = Marginals::uniform(6, 25);
    for eps in [0.1, 0.01] {
        let cfg = SinkhornConfig { epsilon: eps, max_iterations: 50_000, tolerance: 1e-6, log_domain: true };
        let plan = solve(&c, &mask, &marg, &cfg).unwrap();
        eprintln!("eps={eps} iters={} conv={} viol={:.2e}", plan.iterations_used(), plan.converged(), plan.marginal_violation());
        let lin = SinkhornConfig { epsilon: eps, max_iterations: 50_000, tolerance: 1e-6, log_domain: false };
        let plan = solve(&c, &mask, &marg, &lin).unwrap();
        eprintln!("  linear: iters={} conv={} viol={:.2e}", plan.iterations_used(), plan.converged(), plan.marginal_violation());
    }
}
