use temporal_ot::*;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_traj(rng: &mut ChaCha8Rng, t: usize, dim: usize, smooth: bool) -> Trajectory {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut cur: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    for _ in 0..t {
        if smooth { for x in cur.iter_mut() { *x += rng.random_range(-0.2..0.2); } }
        else { cur = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(); }
        if cur.iter().map(|x| x * x).sum::<f64>() < 1e-6 { cur[0] += 0.5; }
        rows.push(cur.clone());
    }
    Trajectory::from_rows(rows, TrajectorySource::Agent, 0).unwrap()
}

fn logsumexp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() { return max; }
    max + vals.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut target = None;
    for rep in 0..13 {
        let t_a = rng.random_range(2..=64);
        let t_e = if rep % 2 == 0 { t_a } else { rng.random_range(2..=64) };
        let a = random_traj(&mut rng, t_a, 6, true);
        let d = random_traj(&mut rng, t_e, 6, true);
        let k_c = rng.random_range(1..=3);
        let km_band = rng.random_range(0..=12usize);
        let _ = rng.random_range(0..=12usize);
        if t_a == 6 && t_e == 25 { target = Some((context_cost_matrix(&a, &d, k_c).unwrap(), km_band)); break; }
        let _ = rep;
    }
    let (c, km) = target.unwrap();
    let (ta, te) = c.shape();
    let mask = band_mask(ta, te, km);
    let eps = 0.01;
    let row = vec![1.0 / ta as f64; ta];
    let col = vec![1.0 / te as f64; te];
    let log_k = Array2::from_shape_fn((ta, te), |(i, j)| if mask.is_set(i, j) { -c.entries()[[i, j]] / eps } else { f64::NEG_INFINITY });
    let mut log_u = vec![0.0; ta];
    let mut log_v = vec![0.0; te];
    for iter in 1..=200usize {
        for i in 0..ta {
            let lse = logsumexp((0..te).map(|j| log_k[[i, j]] + log_v[j]));
            log_u[i] = row[i].ln() - lse;
        }
        for j in 0..te {
            let lse = logsumexp((0..ta).map(|i| log_k[[i, j]] + log_u[i]));
            log_v[j] = col[j].ln() - lse;
        }
        let mut viol = 0.0f64;
        let mut colsum = vec![0.0; te];
        for i in 0..ta {
            let mut rs = 0.0;
            for j in 0..te {
                let p = (log_u[i] + log_k[[i, j]] + log_v[j]).exp();
                rs += p; colsum[j] += p;
            }
            viol = viol.max((rs - row[i]).abs());
        }
        for j in 0..te { viol = viol.max((colsum[j] - col[j]).abs()); }
        if iter % 20 == 0 || iter <= 5 { eprintln!("iter={iter} viol={viol:.3e}"); }
        if viol < 1e-6 { eprintln!("converged iter={iter}"); break; }
    }
}
