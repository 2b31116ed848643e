//! The agent's dynamic program at fixed prices (p, r): value-function
//! iteration with a continuous savings choice. Each sweep maximizes
//! v(a − b, p) + β Σ_y e(y) Ṽ((1+r)b + p·y) over b in the feasible
//! interval, where Ṽ is the piecewise-linear interpolant of the incoming
//! values. The argmax is bracketed on the wealth-node lattice (warm-started
//! from the previous node, since the policy is monotone in wealth) and then
//! refined by golden-section search.

use crate::demand::IndirectUtility;
use crate::economy::{savings_cap, solver_wealth_bounds, EconomyConfig, PriceSystem, WealthGrid};
use crate::{CseError, Result};

const GOLDEN_TOL: f64 = 1e-10;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Relative consumption floor: at the bottom grid node the feasible choice
/// forces c = 0, which the Inada conditions send to −∞/0; utility is
/// evaluated at this floor instead so values stay finite.
const C_MIN_REL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct DpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Howard policy-improvement acceleration (20 evaluation sweeps per
    /// improvement). Off by default for bit-reproducibility of reference
    /// outputs.
    pub howard: bool,
}

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions {
            tol: 1e-8,
            max_iter: 5000,
            howard: false,
        }
    }
}

/// Converged value function and savings policy on a wealth grid for one
/// (p, r).
#[derive(Debug, Clone)]
pub struct PolicySolution {
    pub grid: WealthGrid,
    pub values: Vec<f64>,
    pub savings: Vec<f64>,
    pub consumption: Vec<f64>,
    /// Relative Euler residuals; NaN at nodes where the policy is not
    /// interior.
    pub euler_residuals: Vec<f64>,
    pub iterations: usize,
    pub sup_norm_gap: f64,
    pub borrowing_limit: f64,
    pub savings_cap: f64,
    /// True when the diagnostic cap on |a̲| was active at these prices.
    pub borrowing_limit_capped: bool,
}

impl PolicySolution {
    /// Interpolated savings at an arbitrary wealth level; exact at nodes.
    pub fn policy_at(&self, a: f64) -> Result<f64> {
        // tolerate rounding-level overshoot at the endpoints
        let slack = 1e-9 * (self.grid.upper() - self.grid.lower());
        if a < self.grid.lower() - slack || a > self.grid.upper() + slack {
            return Err(CseError::Config(format!(
                "wealth {a} outside [{}, {}]",
                self.grid.lower(),
                self.grid.upper()
            )));
        }
        let a = a.clamp(self.grid.lower(), self.grid.upper());
        Ok(self.grid.interp(&self.savings, a))
    }

    /// Relative Euler residuals at interior nodes.
    pub fn interior_euler_residuals(&self) -> impl Iterator<Item = f64> + '_ {
        self.euler_residuals.iter().copied().filter(|r| !r.is_nan())
    }

    /// Checks the feasibility, positivity, concavity, and monotonicity
    /// invariants; returns one message per violation.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut out = Vec::new();
        let nodes = self.grid.nodes();
        let slack = 1e-9 * self.grid.upper().abs().max(self.borrowing_limit.abs());
        for (j, (&a, &b)) in nodes.iter().zip(&self.savings).enumerate() {
            let hi = a.min(self.savings_cap);
            if b < self.borrowing_limit - slack || b > hi + slack {
                out.push(format!("node {j}: savings {b} outside [{}, {hi}]", self.borrowing_limit));
            }
            if !(self.consumption[j] > 0.0) {
                out.push(format!("node {j}: consumption {} not positive", self.consumption[j]));
            }
        }
        let vscale = self
            .values
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()));
        for j in 1..nodes.len() - 1 {
            let s_left = (self.values[j] - self.values[j - 1]) / (nodes[j] - nodes[j - 1]);
            let s_right = (self.values[j + 1] - self.values[j]) / (nodes[j + 1] - nodes[j]);
            if s_right - s_left > 1e-9 * vscale.max(1.0) {
                out.push(format!("value function not concave at node {j}"));
            }
        }
        let gscale = self
            .savings
            .iter()
            .fold(0.0f64, |acc, &g| acc.max(g.abs()))
            .max(1.0);
        for j in 1..self.savings.len() {
            if self.savings[j] < self.savings[j - 1] - 1e-9 * gscale {
                out.push(format!("savings policy decreasing at node {j}"));
            }
        }
        out
    }
}

struct DpProblem<'a> {
    grid: &'a WealthGrid,
    iu: IndirectUtility,
    beta: f64,
    gross_r: f64,
    /// p·y per endowment support point.
    endow_values: Vec<f64>,
    probs: &'a [f64],
    b_lo: f64,
    cap: f64,
    c_min: f64,
}

impl<'a> DpProblem<'a> {
    fn new(cfg: &'a EconomyConfig, prices: &PriceSystem, grid: &'a WealthGrid) -> Result<Self> {
        prices.validate()?;
        let iu = IndirectUtility::new(&cfg.utility, &prices.p)?;
        let endow_values = cfg
            .endowments
            .support
            .iter()
            .map(|y| prices.value(y))
            .collect();
        Ok(DpProblem {
            grid,
            iu,
            beta: cfg.beta,
            gross_r: 1.0 + prices.r,
            endow_values,
            probs: &cfg.endowments.probs,
            b_lo: grid.lower(),
            cap: savings_cap(cfg, prices),
            c_min: C_MIN_REL * cfg.endowments.mean_value(&prices.p),
        })
    }

    #[inline]
    fn continuation(&self, values: &[f64], b: f64) -> f64 {
        let mut acc = 0.0;
        for (pv, q) in self.endow_values.iter().zip(self.probs) {
            acc += q * self.grid.interp(values, self.gross_r * b + pv);
        }
        acc
    }

    #[inline]
    fn objective(&self, values: &[f64], a: f64, b: f64) -> f64 {
        let c = (a - b).max(self.c_min);
        self.iu.value(c) + self.beta * self.continuation(values, b)
    }

    /// Maximizes the (strictly concave) objective over b ∈ [b_lo, b_hi].
    /// `start` is the lattice index of the previous node's argmax.
    fn maximize(&self, values: &[f64], a: f64, start: usize) -> (f64, f64, usize) {
        let b_hi = a.min(self.cap);
        if b_hi <= self.b_lo {
            return (self.objective(values, a, self.b_lo), self.b_lo, 0);
        }
        let nodes = self.grid.nodes();
        // lattice scan, warm-started; concavity makes the sampled values
        // unimodal so we stop on the first decrease
        let mut best_k = start;
        let mut best_b = nodes[start].min(b_hi).max(self.b_lo);
        let mut best_v = self.objective(values, a, best_b);
        let mut k = start + 1;
        while k < nodes.len() && nodes[k] <= b_hi {
            let v = self.objective(values, a, nodes[k]);
            if v > best_v {
                best_v = v;
                best_b = nodes[k];
                best_k = k;
            } else {
                break;
            }
            k += 1;
        }
        // try the interval endpoint if the lattice ran out before reaching it
        if k >= nodes.len() || nodes[k] > b_hi {
            let v = self.objective(values, a, b_hi);
            if v > best_v {
                best_v = v;
                best_b = b_hi;
                best_k = k.saturating_sub(1);
            }
        }
        // golden-section refinement between the lattice neighbors
        let left = if best_k == 0 {
            self.b_lo
        } else {
            nodes[best_k - 1].max(self.b_lo)
        };
        let right = nodes
            .get(best_k + 1)
            .copied()
            .unwrap_or(b_hi)
            .min(b_hi);
        let (b_star, v_star) = self.golden(values, a, left, right);
        if v_star > best_v {
            (v_star, b_star, best_k)
        } else {
            (best_v, best_b, best_k)
        }
    }

    fn golden(&self, values: &[f64], a: f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
        let mut x1 = hi - INV_PHI * (hi - lo);
        let mut x2 = lo + INV_PHI * (hi - lo);
        let mut f1 = self.objective(values, a, x1);
        let mut f2 = self.objective(values, a, x2);
        while hi - lo > GOLDEN_TOL {
            if f1 >= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - INV_PHI * (hi - lo);
                f1 = self.objective(values, a, x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + INV_PHI * (hi - lo);
                f2 = self.objective(values, a, x2);
            }
        }
        // smallest b on ties
        let b = 0.5 * (lo + hi);
        (b, self.objective(values, a, b))
    }

    /// Next-period consumption implied by a savings choice b and the current
    /// consumption policy (piecewise linear in wealth), per endowment state.
    #[inline]
    fn marginal_continuation(&self, consumption: &[f64], b: f64) -> f64 {
        let mut acc = 0.0;
        for (pv, q) in self.endow_values.iter().zip(self.probs) {
            let a_next = (self.gross_r * b + pv).clamp(self.grid.lower(), self.grid.upper());
            let c_next = self.grid.interp(consumption, a_next).max(self.c_min);
            acc += q * self.iu.marginal(c_next);
        }
        acc
    }

    /// One Coleman (time-iteration) sweep: at each node solve the first-order
    /// condition v′(a − b) = β(1+r)·E[v′(c(a′))] for b by bisection, with the
    /// borrowing limit and the savings cap as corner cases. The left side is
    /// increasing and the right side decreasing in b, so the root is unique.
    fn euler_sweep(&self, consumption_in: &[f64]) -> Vec<f64> {
        let nodes = self.grid.nodes();
        let span = self.cap - self.b_lo;
        let mut out = Vec::with_capacity(nodes.len());
        for &a in nodes {
            let b_hi = a.min(self.cap);
            if b_hi <= self.b_lo {
                out.push(self.b_lo);
                continue;
            }
            let foc = |b: f64| {
                let c = (a - b).max(self.c_min);
                self.iu.marginal(c)
                    - self.beta * self.gross_r * self.marginal_continuation(consumption_in, b)
            };
            if foc(self.b_lo) >= 0.0 {
                out.push(self.b_lo); // borrowing constraint binds
                continue;
            }
            if foc(b_hi) <= 0.0 {
                out.push(b_hi); // savings cap (or a itself) binds
                continue;
            }
            let (mut lo, mut hi) = (self.b_lo, b_hi);
            while hi - lo > 1e-14 * span {
                let mid = 0.5 * (lo + hi);
                if foc(mid) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        out
    }

    /// Polishes a converged value-iteration policy by iterating the Euler
    /// operator to a fixed point; removes the O(cell-width) argmax bias the
    /// piecewise-linear value interpolant leaves behind.
    fn polish(&self, savings: &[f64]) -> Vec<f64> {
        let nodes = self.grid.nodes();
        let span = self.cap - self.b_lo;
        let mut g: Vec<f64> = savings.to_vec();
        for _ in 0..POLISH_MAX_SWEEPS {
            let c: Vec<f64> = nodes
                .iter()
                .zip(&g)
                .map(|(&a, &b)| (a - b).max(self.c_min))
                .collect();
            let next = self.euler_sweep(&c);
            let gap = sup_gap(&next, &g);
            g = next;
            if gap < 1e-11 * span.max(1.0) {
                break;
            }
        }
        g
    }
}

const POLISH_MAX_SWEEPS: usize = 2000;

/// One application of the Bellman operator: returns the maximized values
/// and the argmax savings per node.
pub fn apply_bellman(
    cfg: &EconomyConfig,
    prices: &PriceSystem,
    grid: &WealthGrid,
    values_in: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let prob = DpProblem::new(cfg, prices, grid)?;
    Ok(sweep(&prob, values_in))
}

fn sweep(prob: &DpProblem, values_in: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nodes = prob.grid.nodes();
    let mut values_out = Vec::with_capacity(nodes.len());
    let mut savings = Vec::with_capacity(nodes.len());
    let mut start = 0usize;
    for &a in nodes {
        let (v, b, k) = prob.maximize(values_in, a, start);
        values_out.push(v);
        savings.push(b);
        start = k;
    }
    (values_out, savings)
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Iterates the Bellman operator to its fixed point. Stops when
/// ‖V_{k+1} − V_k‖∞ < tol·(1−β)/(2β) (the error-bound form of the Banach
/// contraction), then extracts the policy and post-hoc Euler residuals.
pub fn solve_value_function(
    cfg: &EconomyConfig,
    prices: &PriceSystem,
    grid: &WealthGrid,
    opts: &DpOptions,
    init: Option<&[f64]>,
) -> Result<PolicySolution> {
    let prob = DpProblem::new(cfg, prices, grid)?;
    if !(opts.tol > 0.0) {
        return Err(CseError::Config(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let nodes = grid.nodes();
    let mut values: Vec<f64> = match init {
        Some(v) => {
            if v.len() != nodes.len() {
                return Err(CseError::Internal(format!(
                    "initial values have {} entries for {} nodes",
                    v.len(),
                    nodes.len()
                )));
            }
            v.to_vec()
        }
        // myopic start: static indirect utility at maximal consumption
        None => nodes
            .iter()
            .map(|&a| prob.iu.value((a - prob.b_lo).max(prob.c_min)))
            .collect(),
    };

    let stop = opts.tol * (1.0 - cfg.beta) / (2.0 * cfg.beta);
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut savings = vec![prob.b_lo; nodes.len()];
    while iterations < opts.max_iter {
        let (next, g) = sweep(&prob, &values);
        gap = sup_gap(&next, &values);
        values = next;
        savings = g;
        iterations += 1;
        if gap < stop {
            break;
        }
        if opts.howard {
            for _ in 0..20 {
                let evaluated: Vec<f64> = nodes
                    .iter()
                    .zip(&savings)
                    .map(|(&a, &b)| prob.objective(&values, a, b))
                    .collect();
                values = evaluated;
            }
        }
    }
    if gap >= stop {
        return Err(CseError::NonConvergence {
            what: format!("value iteration at p={:?}, r={}", prices.p, prices.r),
            gap,
            iterations,
        });
    }
    // one final policy extraction against the converged values, then an
    // Euler-operator polish of the policy
    let (final_values, final_savings) = sweep(&prob, &values);
    values = final_values;
    savings = prob.polish(&final_savings);

    let consumption: Vec<f64> = nodes
        .iter()
        .zip(&savings)
        .map(|(&a, &b)| (a - b).max(prob.c_min))
        .collect();

    let (lo_capped_bound, _, capped) = solver_wealth_bounds(cfg, prices);
    debug_assert_eq!(lo_capped_bound, grid.lower());

    let euler = euler_residuals(&prob, &savings, &consumption);

    Ok(PolicySolution {
        grid: grid.clone(),
        values,
        consumption,
        euler_residuals: euler,
        iterations,
        sup_norm_gap: gap,
        borrowing_limit: prob.b_lo,
        savings_cap: prob.cap,
        borrowing_limit_capped: capped,
        savings,
    })
}

/// u′(c(a)) − β(1+r)·E[u′(c(a′))], relative to u′(c(a)), at nodes where
/// the policy is interior; the next-period consumption uses the same
/// piecewise-linear interpolant as the solve.
fn euler_residuals(prob: &DpProblem, savings: &[f64], consumption: &[f64]) -> Vec<f64> {
    let nodes = prob.grid.nodes();
    let eps = 1e-7 * prob.b_lo.abs().max(prob.cap.abs()).max(1.0);
    nodes
        .iter()
        .zip(savings.iter().zip(consumption))
        .map(|(&a, (&b, &c))| {
            let hi = a.min(prob.cap);
            if b <= prob.b_lo + eps || b >= hi - eps {
                return f64::NAN;
            }
            let lhs = prob.iu.marginal(c);
            let mut expect = 0.0;
            for (pv, q) in prob.endow_values.iter().zip(prob.probs) {
                let a_next = (prob.gross_r * b + pv)
                    .clamp(prob.grid.lower(), prob.grid.upper());
                let b_next = prob.grid.interp(savings, a_next);
                let c_next = (a_next - b_next).max(prob.c_min);
                expect += q * prob.iu.marginal(c_next);
            }
            (lhs - prob.beta * prob.gross_r * expect) / lhs
        })
        .collect()
}
