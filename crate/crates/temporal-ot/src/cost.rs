//! Transport-cost matrices between an agent trajectory and an expert demo.
//!
//! The per-pair cost is the cosine cost `1 - <a,b>/(|a||b|)`, in `[0, 2]`.
//! The context variant averages the cosine cost over a window of `k_c`
//! consecutive frame pairs, which smooths the cost surface and encodes local
//! progress; `k_c = 1` reduces to the plain pairwise matrix.

use ndarray::Array2;
use thiserror::Error;

use crate::trajectory::{FeatureVector, Trajectory};

#[derive(Debug, Error)]
pub enum CostError {
    #[error("cosine cost undefined for zero-norm vector")]
    ZeroNorm,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cost at ({row}, {col}): {source}")]
    At {
        row: usize,
        col: usize,
        #[source]
        source: Box<CostError>,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Dense `T_a x T_e` matrix of transport costs, entries in `[0, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
    context_length: usize,
}

impl CostMatrix {
    /// Wrap a precomputed matrix; entries must be finite and in `[0, 2]`.
    pub fn from_entries(entries: Array2<f64>) -> Result<Self, CostError> {
        if let Some(bad) = entries.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 2.0) {
            return Err(CostError::Argument(format!(
                "cost entries must be finite and in [0, 2], found {bad}"
            )));
        }
        Ok(Self {
            entries,
            context_length: 1,
        })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn shape(&self) -> (usize, usize) {
        let s = self.entries.dim();
        (s.0, s.1)
    }

    /// Context window length `k_c` this matrix was built with.
    pub fn context_length(&self) -> usize {
        self.context_length
    }
}

/// Cosine cost `1 - <a,b>/(|a||b|)`, clamped into `[0, 2]` against rounding.
pub fn cosine_cost(a: &FeatureVector, b: &FeatureVector) -> Result<f64, CostError> {
    if a.dim() != b.dim() {
        return Err(CostError::DimensionMismatch(a.dim(), b.dim()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(CostError::ZeroNorm);
    }
    let cost = 1.0 - dot / (na.sqrt() * nb.sqrt());
    Ok(cost.clamp(0.0, 2.0))
}

/// Pairwise cosine-cost matrix: `entries[i][j] = cosine_cost(agent[i], demo[j])`.
pub fn pairwise_cost_matrix(agent: &Trajectory, demo: &Trajectory) -> Result<CostMatrix, CostError> {
    context_cost_matrix(agent, demo, 1)
}

/// Context cost matrix: each entry averages the cosine cost over `k_c`
/// consecutive frame pairs starting at `(i, j)`. Window indices past either
/// trajectory end are clamped to the final frame, so every window has length
/// `k_c` and the terminal state acts as absorbing.
pub fn context_cost_matrix(
    agent: &Trajectory,
    demo: &Trajectory,
    k_c: usize,
) -> Result<CostMatrix, CostError> {
    if k_c < 1 {
        return Err(CostError::Argument("context length k_c must be >= 1".into()));
    }
    let (t_a, t_e) = (agent.len(), demo.len());
    let mut entries = Array2::zeros((t_a, t_e));
    for i in 0..t_a {
        for j in 0..t_e {
            let mut acc = 0.0;
            for h in 0..k_c {
                let ai = (i + h).min(t_a - 1);
                let ej = (j + h).min(t_e - 1);
                acc += cosine_cost(agent.frame(ai), demo.frame(ej)).map_err(|source| {
                    CostError::At {
                        row: i,
                        col: j,
                        source: Box::new(source),
                    }
                })?;
            }
            entries[[i, j]] = acc / k_c as f64;
        }
    }
    Ok(CostMatrix {
        entries,
        context_length: k_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrajectorySource;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn fv(v: Vec<f64>) -> FeatureVector {
        FeatureVector::new(v).unwrap()
    }

    fn traj(rows: Vec<Vec<f64>>) -> Trajectory {
        Trajectory::from_rows(rows, TrajectorySource::Agent, 0).unwrap()
    }

    /// Standard basis frames e_0..e_{n-1}: any two distinct frames cost 1.
    fn orthonormal(n: usize) -> Trajectory {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                r
            })
            .collect();
        traj(rows)
    }

    #[test]
    fn cosine_identical_orthogonal_antipodal() {
        let e1 = fv(vec![1.0, 0.0]);
        let e2 = fv(vec![0.0, 1.0]);
        let neg = fv(vec![-1.0, 0.0]);
        assert_abs_diff_eq!(cosine_cost(&e1, &e1).unwrap(), 0.0);
        assert_abs_diff_eq!(cosine_cost(&e1, &e2).unwrap(), 1.0);
        assert_abs_diff_eq!(cosine_cost(&e1, &neg).unwrap(), 2.0);
    }

    #[test]
    fn cosine_rejects_zero_norm_and_dim_mismatch() {
        let z = fv(vec![0.0, 0.0]);
        let a = fv(vec![1.0, 0.0]);
        assert!(matches!(cosine_cost(&a, &z), Err(CostError::ZeroNorm)));
        let b = fv(vec![1.0]);
        assert!(matches!(
            cosine_cost(&a, &b),
            Err(CostError::DimensionMismatch(2, 1))
        ));
    }

    #[test]
    fn pairwise_on_orthonormal_self_is_zero_diag_one_off() {
        let t = orthonormal(4);
        let c = pairwise_cost_matrix(&t, &t).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 0.0 } else { 1.0 };
                assert_abs_diff_eq!(c.entries()[[i, j]], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pairwise_shape_is_rectangular() {
        let a = traj(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let d = traj(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let c = pairwise_cost_matrix(&a, &d).unwrap();
        assert_eq!(c.shape(), (2, 3));
    }

    #[test]
    fn zero_norm_error_carries_location() {
        let a = traj(vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        let d = traj(vec![vec![1.0, 0.0]]);
        match pairwise_cost_matrix(&a, &d) {
            Err(CostError::At { row: 1, col: 0, .. }) => {}
            other => panic!("expected located error, got {other:?}"),
        }
    }

    #[test]
    fn context_diag_is_zero_for_identical_trajectories() {
        let t = orthonormal(5);
        for k_c in [1, 2, 3, 7] {
            let c = context_cost_matrix(&t, &t, k_c).unwrap();
            for i in 0..5 {
                assert_abs_diff_eq!(c.entries()[[i, i]], 0.0, epsilon = 1e-12);
            }
        }
    }

    // Entry (1,2) with k_c=3 on orthonormal frames: the window pairs
    // (e1,e2), (e2,e3), (e3,e4) are all distinct, so the mean is 1.0. Entry
    // (3,4) clamps the demo index: (e3,e4), (e4,e4), (e4,e4) -> 1/3.
    #[test]
    fn context_entry_matches_three_term_sum() {
        let t = orthonormal(5);
        let c = context_cost_matrix(&t, &t, 3).unwrap();
        assert_abs_diff_eq!(c.entries()[[1, 2]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.entries()[[3, 4]], 1.0 / 3.0, epsilon = 1e-12);

        // Independent literal summation with clamped indices.
        let direct = |i: usize, j: usize, k_c: usize| -> f64 {
            (0..k_c)
                .map(|h| {
                    cosine_cost(t.frame((i + h).min(4)), t.frame((j + h).min(4))).unwrap()
                })
                .sum::<f64>()
                / k_c as f64
        };
        for i in 0..5 {
            for j in 0..5 {
                assert_abs_diff_eq!(c.entries()[[i, j]], direct(i, j, 3), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn context_k1_equals_pairwise() {
        let a = traj(vec![vec![1.0, 2.0], vec![-0.5, 1.0], vec![3.0, 0.1]]);
        let d = traj(vec![vec![0.3, 0.7], vec![1.0, -1.0]]);
        let k1 = context_cost_matrix(&a, &d, 1).unwrap();
        let pw = pairwise_cost_matrix(&a, &d).unwrap();
        assert_eq!(k1.entries(), pw.entries());
    }

    #[test]
    fn context_rejects_zero_window() {
        let t = orthonormal(2);
        assert!(matches!(
            context_cost_matrix(&t, &t, 0),
            Err(CostError::Argument(_))
        ));
    }

    fn arb_traj(len: std::ops::Range<usize>) -> impl Strategy<Value = Trajectory> {
        proptest::collection::vec(
            proptest::collection::vec(-5.0f64..5.0, 3).prop_filter("nonzero", |r| {
                r.iter().map(|x| x * x).sum::<f64>() > 1e-3
            }),
            len,
        )
        .prop_map(traj)
    }

    proptest! {
        #[test]
        fn entries_stay_in_range(a in arb_traj(1..8), d in arb_traj(1..8), k_c in 1usize..5) {
            let c = context_cost_matrix(&a, &d, k_c).unwrap();
            for v in c.entries() {
                prop_assert!((0.0..=2.0).contains(v));
            }
        }

        // Context cost is a mean of pairwise costs over the window, so it is
        // bounded by the window's min and max pairwise cost.
        #[test]
        fn context_is_bounded_by_window_extremes(
            a in arb_traj(2..8), d in arb_traj(2..8), k_c in 2usize..5
        ) {
            let pw = pairwise_cost_matrix(&a, &d).unwrap();
            let ctx = context_cost_matrix(&a, &d, k_c).unwrap();
            let (t_a, t_e) = pw.shape();
            for i in 0..t_a {
                for j in 0..t_e {
                    let window: Vec<f64> = (0..k_c)
                        .map(|h| pw.entries()[[(i + h).min(t_a - 1), (j + h).min(t_e - 1)]])
                        .collect();
                    let lo = window.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(ctx.entries()[[i, j]] >= lo - 1e-12);
                    prop_assert!(ctx.entries()[[i, j]] <= hi + 1e-12);
                }
            }
        }

        // Cosine is scale-free: rescaling every feature leaves costs unchanged.
        #[test]
        fn positive_rescaling_leaves_costs_unchanged(
            a in arb_traj(1..6), d in arb_traj(1..6), scale in 0.01f64..100.0, k_c in 1usize..4
        ) {
            let scale_traj = |t: &Trajectory| {
                traj(t.features()
                    .iter()
                    .map(|f| f.as_slice().iter().map(|x| x * scale).collect())
                    .collect())
            };
            let base = context_cost_matrix(&a, &d, k_c).unwrap();
            let scaled = context_cost_matrix(&scale_traj(&a), &scale_traj(&d), k_c).unwrap();
            for (x, y) in base.entries().iter().zip(scaled.entries()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn pairwise_is_transpose_symmetric(a in arb_traj(1..6), d in arb_traj(1..6)) {
            let ab = pairwise_cost_matrix(&a, &d).unwrap();
            let ba = pairwise_cost_matrix(&d, &a).unwrap();
            prop_assert_eq!(ab.entries(), &ba.entries().t().to_owned());
        }
    }
}
