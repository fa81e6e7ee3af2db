//! Masked entropic optimal transport via Sinkhorn iterations.
//!
//! Solves for the plan `diag(u) K diag(v)` with kernel `K = M .* exp(-C/eps)`
//! by alternating the scaling updates `u = s_row / (K v)` and
//! `v = s_col / (K' u)` until the realized plan's marginals match the targets
//! within tolerance. The default path works in log space (masked-out cells
//! are -inf), which survives small `eps` where `exp(-C/eps)` underflows; the
//! linear path is kept for cross-checking and fails loudly on overflow.
//!
//! Convergence is declared on the marginal violation of the realized plan,
//! not on movement of the potentials, since the violation is what the
//! downstream reward depends on.

use ndarray::Array2;
use thiserror::Error;

use crate::cost::CostMatrix;
use crate::mask::Mask;

#[derive(Debug, Error)]
pub enum SinkhornError {
    #[error("shape mismatch: cost is {0}x{1} but {2} is {3}x{4}")]
    ShapeMismatch(usize, usize, &'static str, usize, usize),
    #[error("infeasible mask: {0} {1} has no support")]
    InfeasibleMask(&'static str, usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid marginals: {0}")]
    InvalidMarginals(String),
    #[error(
        "numerical overflow in linear-domain iteration {0}; rerun with log_domain = true"
    )]
    LinearOverflow(usize),
}

/// Solver settings. `tolerance` bounds the max marginal violation accepted
/// as converged.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub log_domain: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            max_iterations: 100,
            tolerance: 1e-6,
            log_domain: true,
        }
    }
}

impl SinkhornConfig {
    fn validate(&self) -> Result<(), SinkhornError> {
        if !(self.epsilon > 0.0) {
            return Err(SinkhornError::InvalidConfig(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(SinkhornError::InvalidConfig(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations < 1 {
            return Err(SinkhornError::InvalidConfig(
                "max_iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Required row and column sums of the plan; positive, each summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    row: Vec<f64>,
    col: Vec<f64>,
}

impl Marginals {
    pub fn new(row: Vec<f64>, col: Vec<f64>) -> Result<Self, SinkhornError> {
        for (name, v) in [("row", &row), ("col", &col)] {
            if v.is_empty() {
                return Err(SinkhornError::InvalidMarginals(format!(
                    "{name} marginal is empty"
                )));
            }
            if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(SinkhornError::InvalidMarginals(format!(
                    "{name} marginal entries must be positive and finite"
                )));
            }
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(SinkhornError::InvalidMarginals(format!(
                    "{name} marginal sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { row, col })
    }

    /// `1/T_a` per row and `1/T_e` per column, the rectangular
    /// generalization of the uniform constraint.
    pub fn uniform(t_a: usize, t_e: usize) -> Self {
        Self {
            row: vec![1.0 / t_a as f64; t_a],
            col: vec![1.0 / t_e as f64; t_e],
        }
    }

    pub fn row(&self) -> &[f64] {
        &self.row
    }

    pub fn col(&self) -> &[f64] {
        &self.col
    }
}

/// Output of [`solve`]: the masked plan plus convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    plan: Array2<f64>,
    iterations_used: usize,
    marginal_violation: f64,
    converged: bool,
}

impl TransportPlan {
    pub fn plan(&self) -> &Array2<f64> {
        &self.plan
    }

    pub fn iterations_used(&self) -> usize {
        self.iterations_used
    }

    pub fn marginal_violation(&self) -> f64 {
        self.marginal_violation
    }

    pub fn converged(&self) -> bool {
        self.converged
    }
}

/// Max over all rows and columns of |realized sum - target|.
pub fn marginal_violation(plan: &TransportPlan, marg: &Marginals) -> f64 {
    violation_of(&plan.plan, marg)
}

fn violation_of(plan: &Array2<f64>, marg: &Marginals) -> f64 {
    let (t_a, t_e) = plan.dim();
    let mut worst = 0.0f64;
    for i in 0..t_a {
        let sum: f64 = (0..t_e).map(|j| plan[[i, j]]).sum();
        worst = worst.max((sum - marg.row[i]).abs());
    }
    for j in 0..t_e {
        let sum: f64 = (0..t_a).map(|i| plan[[i, j]]).sum();
        worst = worst.max((sum - marg.col[j]).abs());
    }
    worst
}

/// Frobenius inner product `<plan, C>`: the transport cost of the plan.
pub fn transport_objective(plan: &TransportPlan, cost: &CostMatrix) -> f64 {
    objective_of(&plan.plan, cost)
}

pub(crate) fn objective_of(plan: &Array2<f64>, cost: &CostMatrix) -> f64 {
    plan.iter().zip(cost.entries()).map(|(p, c)| p * c).sum()
}

/// Solve the masked entropic OT problem for the given cost, mask, and
/// marginals. Deterministic given inputs: fixed iteration order, no
/// parallelism. Returns a plan with exact zeros off the mask support; the
/// `converged` flag reports whether tolerance was reached before the
/// iteration cap.
pub fn solve(
    cost: &CostMatrix,
    mask: &Mask,
    marg: &Marginals,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan, SinkhornError> {
    cfg.validate()?;
    let (t_a, t_e) = cost.shape();
    {
        let (m_a, m_e) = mask.shape();
        if (m_a, m_e) != (t_a, t_e) {
            return Err(SinkhornError::ShapeMismatch(t_a, t_e, "mask", m_a, m_e));
        }
        if marg.row.len() != t_a || marg.col.len() != t_e {
            return Err(SinkhornError::ShapeMismatch(
                t_a,
                t_e,
                "marginals",
                marg.row.len(),
                marg.col.len(),
            ));
        }
    }
    // Empty rows or columns make the marginal constraints unsatisfiable;
    // refuse before iterating rather than diverging.
    for i in 0..t_a {
        if (0..t_e).all(|j| !mask.is_set(i, j)) {
            return Err(SinkhornError::InfeasibleMask("row", i));
        }
    }
    for j in 0..t_e {
        if (0..t_a).all(|i| !mask.is_set(i, j)) {
            return Err(SinkhornError::InfeasibleMask("column", j));
        }
    }

    // Support cells that carry zero mass in EVERY feasible plan (a square
    // causal mask forces the diagonal plan, for instance) make the optimal
    // duals infinite and the scaling iteration crawl at O(1/n). Prune them
    // exactly; the optimizer is unchanged since it is feasible itself.
    let support = match tighten_support(mask, marg) {
        Some(tight) => tight,
        None => Array2::from_shape_fn((t_a, t_e), |(i, j)| mask.is_set(i, j)),
    };

    if cfg.log_domain {
        solve_log(cost, &support, marg, cfg)
    } else {
        solve_linear(cost, &support, marg, cfg)
    }
}

/// Monotone (north-west corner) coupling of the marginals: the unique plan
/// that fills cells in lexicographic order. Feasible by construction; its
/// support is the staircase of overlapping cumulative-mass intervals.
fn northwest_plan(marg: &Marginals) -> Array2<f64> {
    let (t_a, t_e) = (marg.row.len(), marg.col.len());
    let mut plan = Array2::zeros((t_a, t_e));
    let mut row_left = marg.row[0];
    let mut col_left = marg.col[0];
    let (mut i, mut j) = (0usize, 0usize);
    loop {
        let move_mass = row_left.min(col_left);
        plan[[i, j]] += move_mass;
        row_left -= move_mass;
        col_left -= move_mass;
        let row_done = row_left <= f64::EPSILON;
        let col_done = col_left <= f64::EPSILON;
        if row_done && i + 1 < t_a {
            i += 1;
            row_left = marg.row[i];
        } else if col_done && j + 1 < t_e {
            j += 1;
            col_left = marg.col[j];
        } else if row_done && col_done {
            break;
        } else if row_done || col_done {
            // one axis exhausted with mass left on the other: marginals do
            // not balance exactly; bail out by dumping the remainder here.
            plan[[i, j]] += row_left.max(col_left);
            break;
        }
    }
    plan
}

/// Restrict the mask to cells that can carry positive mass in some feasible
/// plan. Starting from the north-west feasible plan P, a support cell
/// `(a, b)` with zero mass can become positive iff the residual graph (edges
/// `row -> col` for support cells, `col -> row` for positive-mass cells)
/// reaches row `a` from column `b`; otherwise every feasible plan is zero
/// there. Returns None when the north-west plan leaves the support, in which
/// case no pruning is attempted.
fn tighten_support(mask: &Mask, marg: &Marginals) -> Option<Array2<bool>> {
    let (t_a, t_e) = mask.shape();
    let plan = northwest_plan(marg);
    let positive_floor = 1e-15;
    for i in 0..t_a {
        for j in 0..t_e {
            if plan[[i, j]] > positive_floor && !mask.is_set(i, j) {
                return None;
            }
        }
    }

    // Reachability of rows from each column over the residual graph, done as
    // one BFS per column. Row -> every support column; col -> rows with
    // positive plan mass in that column.
    let mut keep = Array2::from_elem((t_a, t_e), false);
    for i in 0..t_a {
        for j in 0..t_e {
            keep[[i, j]] = plan[[i, j]] > positive_floor;
        }
    }
    let mut row_seen = vec![false; t_a];
    let mut col_seen = vec![false; t_e];
    let mut queue: Vec<usize> = Vec::with_capacity(t_a + t_e);
    for b in 0..t_e {
        row_seen.iter_mut().for_each(|x| *x = false);
        col_seen.iter_mut().for_each(|x| *x = false);
        queue.clear();
        col_seen[b] = true;
        queue.push(t_a + b); // encode cols as t_a + j
        let mut head = 0;
        while head < queue.len() {
            let node = queue[head];
            head += 1;
            if node < t_a {
                let i = node;
                for j in 0..t_e {
                    if mask.is_set(i, j) && !col_seen[j] {
                        col_seen[j] = true;
                        queue.push(t_a + j);
                    }
                }
            } else {
                let j = node - t_a;
                for i in 0..t_a {
                    if plan[[i, j]] > positive_floor && !row_seen[i] {
                        row_seen[i] = true;
                        queue.push(i);
                    }
                }
            }
        }
        for a in 0..t_a {
            if row_seen[a] && mask.is_set(a, b) {
                keep[[a, b]] = true;
            }
        }
    }
    Some(keep)
}

/// Anderson-acceleration history depth for the log-domain path.
///
/// Plain Sinkhorn sweeps crawl (violation ~ 1/iterations) when the optimal
/// duals must stretch far, e.g. wide-range costs at small epsilon under a
/// tight mask. The residual direction is then nearly constant, which is the
/// regime where Anderson mixing over a few past sweeps extrapolates to the
/// fixed point orders of magnitude faster. Mixed steps that do not reduce
/// the sweep residual are discarded for the plain step, so the iteration
/// stays a safeguarded fixed-point scheme; it remains fully deterministic.
const ANDERSON_DEPTH: usize = 5;

struct LogProblem {
    log_k: Array2<f64>,
    log_row: Vec<f64>,
    log_col: Vec<f64>,
}

impl LogProblem {
    /// One full Sinkhorn sweep (u-update then v-update) in log space,
    /// gauge-fixed so mean(log_u) = 0.
    fn sweep(&self, phi: &[f64]) -> Vec<f64> {
        let (t_a, t_e) = self.log_k.dim();
        let (_, log_v) = phi.split_at(t_a);
        let mut new_u = vec![0.0; t_a];
        for i in 0..t_a {
            let lse = logsumexp((0..t_e).map(|j| self.log_k[[i, j]] + log_v[j]));
            new_u[i] = self.log_row[i] - lse;
        }
        let mut new_v = vec![0.0; t_e];
        for j in 0..t_e {
            let lse = logsumexp((0..t_a).map(|i| self.log_k[[i, j]] + new_u[i]));
            new_v[j] = self.log_col[j] - lse;
        }
        // Duals are defined up to (u + c, v - c); pin the gauge so that the
        // acceleration's least-squares problem is well posed.
        let shift = new_u.iter().sum::<f64>() / t_a as f64;
        let mut out = Vec::with_capacity(t_a + t_e);
        out.extend(new_u.iter().map(|x| x - shift));
        out.extend(new_v.iter().map(|x| x + shift));
        out
    }

    fn realize(&self, phi: &[f64]) -> Array2<f64> {
        let (t_a, t_e) = self.log_k.dim();
        let (log_u, log_v) = phi.split_at(t_a);
        Array2::from_shape_fn((t_a, t_e), |(i, j)| {
            // exp(-inf) is an exact 0.0, so masked cells stay zero.
            (log_u[i] + self.log_k[[i, j]] + log_v[j]).exp()
        })
    }
}

fn solve_log(
    cost: &CostMatrix,
    support: &Array2<bool>,
    marg: &Marginals,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan, SinkhornError> {
    let (t_a, t_e) = cost.shape();
    let problem = LogProblem {
        // log K = -C/eps on the support, -inf elsewhere.
        log_k: Array2::from_shape_fn((t_a, t_e), |(i, j)| {
            if support[[i, j]] {
                -cost.entries()[[i, j]] / cfg.epsilon
            } else {
                f64::NEG_INFINITY
            }
        }),
        log_row: marg.row.iter().map(|s| s.ln()).collect(),
        log_col: marg.col.iter().map(|s| s.ln()).collect(),
    };

    let dim = t_a + t_e;
    let mut phi = vec![0.0f64; dim];
    // Rolling windows of post-sweep iterates and residuals for Anderson
    // mixing; cleared whenever a mixed step fails its acceptance test.
    let mut hist_g: Vec<Vec<f64>> = Vec::new();
    let mut hist_r: Vec<Vec<f64>> = Vec::new();
    let mut best_phi = phi.clone();
    let mut best_viol = f64::INFINITY;
    let mut stalled = 0usize;
    let mut restarts = 0u32;
    let mut plain_only_left = 0usize;

    let mut iterations_used = 0;
    for iter in 1..=cfg.max_iterations {
        let swept = problem.sweep(&phi);
        let residual: Vec<f64> = swept.iter().zip(&phi).map(|(a, b)| a - b).collect();
        hist_g.push(swept.clone());
        hist_r.push(residual);
        if hist_g.len() > ANDERSON_DEPTH + 1 {
            hist_g.remove(0);
            hist_r.remove(0);
        }

        let swept_viol = violation_of(&problem.realize(&swept), marg);
        let mut next = swept;
        let mut next_viol = swept_viol;
        if plain_only_left > 0 {
            plain_only_left -= 1;
        } else if let Some(mixed) = anderson_mix(&hist_g, &hist_r) {
            // Extrapolated duals may transiently look worse on the realized
            // violation while they stretch toward the fixed point, so allow
            // a bounded excursion; wild steps get discarded.
            let mixed_viol = violation_of(&problem.realize(&mixed), marg);
            if mixed_viol.is_finite() && mixed_viol <= 3.0 * swept_viol {
                next = mixed;
                next_viol = mixed_viol;
            } else {
                hist_g.clear();
                hist_r.clear();
            }
        }
        phi = next;

        if std::env::var_os("SINKDBG").is_some() && (iter % 500 == 0 || iter < 80) {
            eprintln!(
                "it={iter} swept={swept_viol:.3e} next={next_viol:.3e} best={best_viol:.3e} stalled={stalled} plain={plain_only_left} hist={}",
                hist_g.len()
            );
        }

        iterations_used = iter;
        if next_viol < best_viol {
            best_viol = next_viol;
            best_phi.clone_from(&phi);
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 50 {
                // Mixing went on an unproductive excursion. Resume from the
                // best iterate, with a growing plain-sweep phase so repeated
                // restarts cannot replay the same failing trajectory.
                phi.clone_from(&best_phi);
                hist_g.clear();
                hist_r.clear();
                stalled = 0;
                restarts += 1;
                plain_only_left = 50usize.saturating_mul(1 << restarts.min(16));
            }
        }
        if best_viol <= cfg.tolerance {
            break;
        }
    }

    let plan = problem.realize(&best_phi);
    let violation = best_viol;
    let converged = violation <= cfg.tolerance;
    Ok(TransportPlan {
        plan,
        iterations_used,
        marginal_violation: violation,
        converged,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Type-II Anderson mixing: combine the stored post-sweep iterates with
/// weights that minimize the combined residual, solved via regularized
/// normal equations on residual differences.
fn anderson_mix(hist_x: &[Vec<f64>], hist_r: &[Vec<f64>]) -> Option<Vec<f64>> {
    let m = hist_r.len() - 1;
    let latest_r = &hist_r[m];
    let latest_x = &hist_x[m];
    // Columns: r_m - r_{m-1-k}
    let cols: Vec<Vec<f64>> = (0..m)
        .map(|k| {
            latest_r
                .iter()
                .zip(&hist_r[m - 1 - k])
                .map(|(a, b)| a - b)
                .collect()
        })
        .collect();
    // Normal equations (cols' cols) gamma = cols' r_m with Tikhonov guard.
    let mut a = vec![vec![0.0f64; m]; m];
    let mut b = vec![0.0f64; m];
    for p in 0..m {
        for q in 0..m {
            a[p][q] = dot(&cols[p], &cols[q]);
        }
        b[p] = dot(&cols[p], latest_r);
    }
    let reg = 1e-12 * (0..m).map(|p| a[p][p]).sum::<f64>().max(1e-300);
    for (p, row) in a.iter_mut().enumerate() {
        row[p] += reg;
    }
    let gamma = solve_dense(&mut a, &mut b)?;

    let mut mixed = latest_x.clone();
    for (k, g) in gamma.iter().enumerate() {
        let other = &hist_x[m - 1 - k];
        for (x, (cur, prev)) in mixed.iter_mut().zip(latest_x.iter().zip(other)) {
            *x -= g * (cur - prev);
        }
    }
    mixed.iter().all(|x| x.is_finite()).then_some(mixed)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting for the tiny mixing system.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| {
            a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn solve_linear(
    cost: &CostMatrix,
    support: &Array2<bool>,
    marg: &Marginals,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan, SinkhornError> {
    let (t_a, t_e) = cost.shape();
    let kernel = Array2::from_shape_fn((t_a, t_e), |(i, j)| {
        if support[[i, j]] {
            (-cost.entries()[[i, j]] / cfg.epsilon).exp()
        } else {
            0.0
        }
    });
    let mut u = vec![1.0f64; t_a];
    let mut v = vec![1.0f64; t_e];

    let mut iterations_used = 0;
    let mut violation = f64::INFINITY;
    let mut plan = Array2::zeros((t_a, t_e));
    for iter in 1..=cfg.max_iterations {
        for i in 0..t_a {
            let kv: f64 = (0..t_e).map(|j| kernel[[i, j]] * v[j]).sum();
            u[i] = marg.row[i] / kv;
            if !u[i].is_finite() {
                return Err(SinkhornError::LinearOverflow(iter));
            }
        }
        for j in 0..t_e {
            let ku: f64 = (0..t_a).map(|i| kernel[[i, j]] * u[i]).sum();
            v[j] = marg.col[j] / ku;
            if !v[j].is_finite() {
                return Err(SinkhornError::LinearOverflow(iter));
            }
        }
        iterations_used = iter;
        plan = Array2::from_shape_fn((t_a, t_e), |(i, j)| u[i] * kernel[[i, j]] * v[j]);
        if plan.iter().any(|p| !p.is_finite()) {
            return Err(SinkhornError::LinearOverflow(iter));
        }
        violation = violation_of(&plan, marg);
        if violation <= cfg.tolerance {
            break;
        }
    }

    let converged = violation <= cfg.tolerance;
    Ok(TransportPlan {
        plan,
        iterations_used,
        marginal_violation: violation,
        converged,
    })
}

/// Stable log(sum(exp(x))); returns -inf for all -inf input.
fn logsumexp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.map(|x| (x - max).exp()).sum();
    max + sum.ln()
}
