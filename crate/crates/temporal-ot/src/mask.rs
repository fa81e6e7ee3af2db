//! Binary temporal masks restricting the transport plan's support.
//!
//! Four kinds: all-ones (no temporal structure), causal lower-triangle, a
//! fixed band of half-width `k_m` around the diagonal, and a cost-adaptive
//! band centered per row on the cheapest past column. For rectangular shapes
//! the diagonal is the proportionally rescaled index, assuming similar
//! agent/expert movement speed per frame.
//!
//! Every constructed mask must admit a transport plan with uniform marginals
//! on its support; nonempty rows and columns alone do not guarantee that
//! (two rows pinned to the same singleton column already overload it). Each
//! constructor therefore unions in the support of the monotone staircase
//! coupling between uniform marginals, which is itself a feasible plan. In
//! the square case the staircase is exactly the main diagonal, so this
//! reduces to switching the empty columns' diagonal cells back on.

use ndarray::Array2;

use crate::cost::CostMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Ones,
    Causal,
    Band { k_m: usize },
    Dynamic { k_m: usize },
}

/// Binary `T_a x T_e` plan-support matrix with nonempty rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    entries: Array2<u8>,
    kind: MaskKind,
}

impl Mask {
    pub fn entries(&self) -> &Array2<u8> {
        &self.entries
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        let d = self.entries.dim();
        (d.0, d.1)
    }

    pub fn is_set(&self, i: usize, j: usize) -> bool {
        self.entries[[i, j]] == 1
    }

    /// Bypass construction rules; only for exercising solver error paths.
    #[cfg(test)]
    pub(crate) fn from_raw(entries: Array2<u8>, kind: MaskKind) -> Self {
        Self { entries, kind }
    }

    /// True when every row and every column carries at least one 1.
    pub fn is_feasible(&self) -> bool {
        let (rows, cols) = self.shape();
        (0..rows).all(|i| (0..cols).any(|j| self.is_set(i, j)))
            && (0..cols).all(|j| (0..rows).any(|i| self.is_set(i, j)))
    }
}

/// Map row index `i` onto the demo axis: `round(i * (t_e-1) / (t_a-1))`.
/// A length-1 source axis maps to index 0.
pub(crate) fn rescaled_index(i: usize, t_a: usize, t_e: usize) -> usize {
    if t_a <= 1 {
        return 0;
    }
    ((i as f64) * (t_e as f64 - 1.0) / (t_a as f64 - 1.0)).round() as usize
}

/// Union the mask with the support of the monotone staircase coupling
/// between uniform marginals `1/t_a` and `1/t_e`. Cell `(i, j)` is in the
/// staircase iff the mass intervals `[i/t_a, (i+1)/t_a)` and
/// `[j/t_e, (j+1)/t_e)` overlap. The staircase plan lives on this support,
/// so the repaired mask always admits a feasible plan. For square shapes the
/// staircase is the main diagonal.
fn ensure_feasible_support(entries: &mut Array2<u8>) {
    let (t_a, t_e) = entries.dim();
    for i in 0..t_a {
        for j in 0..t_e {
            if i * t_e < (j + 1) * t_a && j * t_a < (i + 1) * t_e {
                entries[[i, j]] = 1;
            }
        }
    }
}

pub fn ones_mask(t_a: usize, t_e: usize) -> Mask {
    Mask {
        entries: Array2::ones((t_a, t_e)),
        kind: MaskKind::Ones,
    }
}

/// Lower triangle under the rescaled diagonal: row `i` admits columns
/// `j <= rescaled(i)`.
pub fn causal_mask(t_a: usize, t_e: usize) -> Mask {
    let mut entries = Array2::zeros((t_a, t_e));
    for i in 0..t_a {
        let c = rescaled_index(i, t_a, t_e);
        for j in 0..=c.min(t_e - 1) {
            entries[[i, j]] = 1;
        }
    }
    ensure_feasible_support(&mut entries);
    Mask {
        entries,
        kind: MaskKind::Causal,
    }
}

/// Fixed band: row `i` admits columns within `k_m` of the rescaled diagonal.
/// `k_m >= max(t_a, t_e)` covers everything and equals the ones mask.
pub fn band_mask(t_a: usize, t_e: usize, k_m: usize) -> Mask {
    let mut entries = Array2::zeros((t_a, t_e));
    for i in 0..t_a {
        let c = rescaled_index(i, t_a, t_e) as isize;
        let lo = (c - k_m as isize).max(0) as usize;
        let hi = (c + k_m as isize).min(t_e as isize - 1) as usize;
        for j in lo..=hi {
            entries[[i, j]] = 1;
        }
    }
    ensure_feasible_support(&mut entries);
    Mask {
        entries,
        kind: MaskKind::Band { k_m },
    }
}

/// Cost-adaptive band: each row's window centers on the cheapest column among
/// the already-seen indices `j <= i` (ties broken toward the smallest `j`).
pub fn dynamic_mask(cost: &CostMatrix, k_m: usize) -> Mask {
    let (t_a, t_e) = cost.shape();
    let mut entries = Array2::zeros((t_a, t_e));
    for i in 0..t_a {
        let upper = i.min(t_e - 1);
        let mut center = 0usize;
        let mut best = f64::INFINITY;
        for j in 0..=upper {
            let v = cost.entries()[[i, j]];
            if v < best {
                best = v;
                center = j;
            }
        }
        let lo = (center as isize - k_m as isize).max(0) as usize;
        let hi = (center as isize + k_m as isize).min(t_e as isize - 1) as usize;
        for j in lo..=hi {
            entries[[i, j]] = 1;
        }
    }
    ensure_feasible_support(&mut entries);
    Mask {
        entries,
        kind: MaskKind::Dynamic { k_m },
    }
}

/// Build the mask a [`MaskKind`] describes; `Dynamic` reads the cost matrix,
/// the other kinds ignore it.
pub fn build_mask(kind: MaskKind, cost: &CostMatrix) -> Mask {
    let (t_a, t_e) = cost.shape();
    match kind {
        MaskKind::Ones => ones_mask(t_a, t_e),
        MaskKind::Causal => causal_mask(t_a, t_e),
        MaskKind::Band { k_m } => band_mask(t_a, t_e, k_m),
        MaskKind::Dynamic { k_m } => dynamic_mask(cost, k_m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn cost_from(entries: Array2<f64>) -> CostMatrix {
        CostMatrix::from_entries(entries).unwrap()
    }

    #[test]
    fn ones_mask_is_all_ones() {
        assert_eq!(ones_mask(2, 2).entries(), &array![[1u8, 1], [1, 1]]);
        assert_eq!(ones_mask(1, 3).entries(), &array![[1u8, 1, 1]]);
    }

    #[test]
    fn causal_square_is_lower_triangle() {
        let m = causal_mask(3, 3);
        assert_eq!(m.entries(), &array![[1u8, 0, 0], [1, 1, 0], [1, 1, 1]]);
        assert_eq!(causal_mask(1, 1).entries(), &array![[1u8]]);
    }

    #[test]
    fn causal_row_zero_has_single_one() {
        for t in [2usize, 5, 9] {
            let m = causal_mask(t, t);
            let ones: usize = (0..t).map(|j| m.entries()[[0, j]] as usize).sum();
            assert_eq!(ones, 1);
            assert!(m.is_set(0, 0));
        }
    }

    #[test]
    fn band_k0_is_diagonal() {
        let m = band_mask(5, 5, 0);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(m.is_set(i, j), i == j, "({i},{j})");
            }
        }
    }

    #[test]
    fn band_k1_is_tridiagonal() {
        let m = band_mask(5, 5, 1);
        for i in 0..5i64 {
            for j in 0..5i64 {
                assert_eq!(m.is_set(i as usize, j as usize), (i - j).abs() <= 1);
            }
        }
    }

    #[test]
    fn band_wide_window_is_ones() {
        assert_eq!(band_mask(5, 5, 10).entries(), ones_mask(5, 5).entries());
        assert_eq!(band_mask(3, 7, 7).entries(), ones_mask(3, 7).entries());
    }

    #[test]
    fn band_rectangular_centers_on_rescaled_diagonal() {
        // t_a=3, t_e=5: band centers 0, 2, 4; the staircase completion adds
        // (0,1), (1,1), (1,3), (2,3) so uniform marginals stay feasible.
        let m = band_mask(3, 5, 0);
        let expected = array![[1u8, 1, 0, 0, 0], [0, 1, 1, 1, 0], [0, 0, 0, 1, 1]];
        assert_eq!(m.entries(), &expected);
        assert!(m.is_feasible());
    }

    /// Independent oracle: row-wise argmin over j <= i (ties toward the
    /// smallest j), band of half-width k_m, then the staircase completion.
    fn dynamic_oracle(c: &CostMatrix, k_m: usize) -> Array2<u8> {
        let (t_a, t_e) = c.shape();
        let mut e = Array2::zeros((t_a, t_e));
        for i in 0..t_a {
            let mut center = 0;
            for j in 0..=i.min(t_e - 1) {
                if c.entries()[[i, j]] < c.entries()[[i, center]] {
                    center = j;
                }
            }
            for j in 0..t_e {
                if (j as isize - center as isize).abs() <= k_m as isize {
                    e[[i, j]] = 1;
                }
            }
        }
        for i in 0..t_a {
            for j in 0..t_e {
                if i * t_e < (j + 1) * t_a && j * t_a < (i + 1) * t_e {
                    e[[i, j]] = 1;
                }
            }
        }
        e
    }

    #[test]
    fn dynamic_centers_follow_row_argmin_with_repair() {
        // Strict minimum at j=0 in every row, k_m=0: rows collapse onto
        // column 0, then the empty columns 1 and 2 get their diagonal cells
        // back via the staircase completion.
        let c = cost_from(array![[0.0, 1.0, 1.0], [0.0, 1.0, 1.0], [0.0, 1.0, 1.0]]);
        let m = dynamic_mask(&c, 0);
        assert_eq!(m.entries(), &array![[1u8, 0, 0], [1, 1, 0], [1, 0, 1]]);
        assert_eq!(m.entries(), &dynamic_oracle(&c, 0));
    }

    #[test]
    fn dynamic_matches_oracle_on_random_costs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let t_a = rng.random_range(1..12);
            let t_e = rng.random_range(1..12);
            let k_m = rng.random_range(0..4);
            let c = cost_from(Array2::from_shape_fn((t_a, t_e), |_| {
                rng.random_range(0.0..2.0)
            }));
            assert_eq!(dynamic_mask(&c, k_m).entries(), &dynamic_oracle(&c, k_m));
        }
    }

    #[test]
    fn dynamic_uniform_cost_ties_break_to_column_zero() {
        let c = cost_from(Array2::zeros((4, 4)));
        let m = dynamic_mask(&c, 1);
        // centers all 0 -> band {0, 1} in every row; columns 2, 3 repaired.
        for i in 0..4 {
            assert!(m.is_set(i, 0));
            assert!(m.is_set(i, 1));
        }
        assert!(m.is_feasible());
    }

    #[test]
    fn dynamic_wide_window_is_all_ones() {
        let c = cost_from(array![[0.1, 0.9], [0.9, 0.1]]);
        let m = dynamic_mask(&c, 2);
        assert_eq!(m.entries(), ones_mask(2, 2).entries());
    }

    proptest! {
        // Growing the window never removes support.
        #[test]
        fn band_dominates_smaller_window(
            t_a in 1usize..20, t_e in 1usize..20, k_m in 1usize..8
        ) {
            let small = band_mask(t_a, t_e, k_m - 1);
            let big = band_mask(t_a, t_e, k_m);
            for (s, b) in small.entries().iter().zip(big.entries()) {
                prop_assert!(b >= s);
            }
        }

        #[test]
        fn band_contains_rescaled_diagonal(t_a in 1usize..20, t_e in 1usize..20, k_m in 0usize..8) {
            let m = band_mask(t_a, t_e, k_m);
            for i in 0..t_a {
                prop_assert!(m.is_set(i, rescaled_index(i, t_a, t_e)));
            }
        }

        #[test]
        fn every_mask_kind_is_feasible(
            t_a in 1usize..16, t_e in 1usize..16, k_m in 0usize..6, seed in 0u64..128
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let c = cost_from(Array2::from_shape_fn((t_a, t_e), |_| rng.random_range(0.0..2.0)));
            prop_assert!(ones_mask(t_a, t_e).is_feasible());
            prop_assert!(causal_mask(t_a, t_e).is_feasible());
            prop_assert!(band_mask(t_a, t_e, k_m).is_feasible());
            prop_assert!(dynamic_mask(&c, k_m).is_feasible());
        }

        #[test]
        fn wide_band_equals_ones(t_a in 1usize..12, t_e in 1usize..12) {
            let band = band_mask(t_a, t_e, t_a.max(t_e));
            let ones = ones_mask(t_a, t_e);
            prop_assert_eq!(band.entries(), ones.entries());
        }
    }
}
