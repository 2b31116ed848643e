//! Brute-force ground-truth implementations at tiny scale: golden-section
//! demand on the budget line, an exhaustive finite-choice dynamic program,
//! an explicit transition-matrix stationary solve, and a lattice sweep for
//! the equilibrium. Deliberately shares no numerical kernels with the main
//! modules: independent formulas, independent loops. Restricted to n = 2
//! and small grids — brute force is only trustworthy where it is
//! exhaustive.

use nalgebra::{DMatrix, DVector};

use crate::bellman::PolicySolution;
use crate::distribution::WealthDistribution;
use crate::economy::{EconomyConfig, PriceSystem, UtilityKind, UtilitySpec, WealthGrid};
use crate::{CseError, Result};

#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    /// Explicit savings-choice grid size per node.
    pub b_grid_points: usize,
    /// Lattice resolution per axis for the equilibrium sweep.
    pub price_lattice: usize,
    /// Wealth-grid cap (≤ 200).
    pub max_nodes: usize,
    /// p_2/p_1 sweep range (log-spaced).
    pub ratio_range: (f64, f64),
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            b_grid_points: 2000,
            price_lattice: 200,
            max_nodes: 200,
            ratio_range: (0.5, 2.0),
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b_grid_points < 2 || self.price_lattice < 2 {
            return Err(CseError::Config(
                "oracle resolutions must be at least 2".into(),
            ));
        }
        if self.max_nodes == 0 || self.max_nodes > 200 {
            return Err(CseError::Config(format!(
                "oracle max_nodes must lie in 1..=200, got {}",
                self.max_nodes
            )));
        }
        if !(self.ratio_range.0 > 0.0 && self.ratio_range.1 > self.ratio_range.0) {
            return Err(CseError::Config(format!(
                "oracle ratio range must satisfy 0 < lo < hi, got {:?}",
                self.ratio_range
            )));
        }
        Ok(())
    }
}

fn direct_utility(u: &UtilitySpec, x1: f64, x2: f64) -> f64 {
    match u.kind {
        UtilityKind::Ces => {
            let g = u.gamma.expect("CES gamma");
            u.alphas[0] * x1.powf(g) + u.alphas[1] * x2.powf(g)
        }
        UtilityKind::CobbDouglas => u.alphas[0] * x1.ln() + u.alphas[1] * x2.ln(),
    }
}

fn direct_marginal(u: &UtilitySpec, i: usize, x: f64) -> f64 {
    match u.kind {
        UtilityKind::Ces => {
            let g = u.gamma.expect("CES gamma");
            u.alphas[i] * g * x.powf(g - 1.0)
        }
        UtilityKind::CobbDouglas => u.alphas[i] / x,
    }
}

/// Demand by bisection on the budget-line first-order condition
/// ∂U/∂x_1 − (p_1/p_2)·∂U/∂x_2 over x_1 ∈ (0, c/p_1), x_2 = (c − p_1
/// x_1)/p_2. The slope is strictly decreasing along the line and the Inada
/// conditions pin its signs at the corners, so the root is unique and the
/// interval contracts to machine precision. n = 2 only.
pub fn oracle_demand(u: &UtilitySpec, c: f64, p: &[f64]) -> Result<Vec<f64>> {
    if p.len() != 2 || u.alphas.len() != 2 {
        return Err(CseError::Config(format!(
            "oracle demand handles exactly 2 goods, got {}",
            p.len()
        )));
    }
    if !(c > 0.0) || p.iter().any(|&pi| !(pi > 0.0)) {
        return Err(CseError::Config(format!(
            "oracle demand needs c > 0 and p >> 0, got c={c}, p={p:?}"
        )));
    }
    let span = c / p[0];
    let slope = |x1: f64| {
        let x2 = (c - p[0] * x1) / p[1];
        direct_marginal(u, 0, x1) - (p[0] / p[1]) * direct_marginal(u, 1, x2)
    };
    // open interval: keep a hair away from the corners
    let mut lo = span * 1e-14;
    let mut hi = span * (1.0 - 1e-14);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * span {
            break;
        }
    }
    let x1 = 0.5 * (lo + hi);
    Ok(vec![x1, (c - p[0] * x1) / p[1]])
}

/// Indirect utility from homotheticity: with x*(1, p) in hand, the CES
/// value at spending c is c^γ·U(x*(1,p)) and the log case adds ln c.
struct OracleIu {
    kind: UtilityKind,
    gamma: f64,
    /// U(x*(1, p)) for CES; Σ α_i ln x*_i(1, p) for the log case.
    base: f64,
    pub bundle1: Vec<f64>,
}

impl OracleIu {
    fn new(u: &UtilitySpec, p: &[f64]) -> Result<Self> {
        let bundle1 = oracle_demand(u, 1.0, p)?;
        let base = direct_utility(u, bundle1[0], bundle1[1]);
        Ok(OracleIu {
            kind: u.kind,
            gamma: u.gamma.unwrap_or(f64::NAN),
            base,
            bundle1,
        })
    }

    fn value(&self, c: f64) -> f64 {
        match self.kind {
            UtilityKind::Ces => self.base * c.powf(self.gamma),
            UtilityKind::CobbDouglas => self.base + c.ln(),
        }
    }
}

/// The finite-choice dynamic program shared by `oracle_dp` and the
/// equilibrium sweep: savings restricted to an explicit b-grid, linear
/// interpolation only in the continuation value.
struct FiniteDp {
    beta: f64,
    gross_r: f64,
    nodes: Vec<f64>,
    b_nodes: Vec<f64>,
    /// Destination (cell, weight) per (b-node, endowment state).
    dest: Vec<Vec<(usize, f64)>>,
    /// p·y per endowment state.
    pv: Vec<f64>,
    probs: Vec<f64>,
    /// u(c) at consumption a_j − b_k, NaN where infeasible.
    c_min: f64,
    iu: OracleIu,
}

fn lower_cell(nodes: &[f64], a: f64) -> (usize, f64) {
    let n = nodes.len();
    if a <= nodes[0] {
        return (0, 0.0);
    }
    if a >= nodes[n - 1] {
        return (n - 2, 1.0);
    }
    let mut lo = 0usize;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if nodes[mid] <= a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ((lo), (a - nodes[lo]) / (nodes[lo + 1] - nodes[lo]))
}

impl FiniteDp {
    fn new(
        cfg: &EconomyConfig,
        prices: &PriceSystem,
        grid: &WealthGrid,
        b_grid_points: usize,
    ) -> Result<Self> {
        let p = &prices.p;
        let pv: Vec<f64> = cfg.endowments.support.iter().map(|y| prices.value(y)).collect();
        let min_pv = pv.iter().copied().fold(f64::INFINITY, f64::min);
        let mean_pv: f64 = pv.iter().zip(&cfg.endowments.probs).map(|(v, q)| v * q).sum();
        let b_lo = (-min_pv / prices.r).max(-1e4 * mean_pv);
        let cap = p.iter().sum::<f64>() * cfg.b_bar() / ((1.0 - prices.r) * (1.0 - prices.r));
        // choice grid mirrors the wealth grid's curvature so resolution
        // concentrates where policies live
        let nb = b_grid_points;
        let mut b_nodes = Vec::with_capacity(nb);
        for k in 0..nb {
            let t = (k as f64 / (nb - 1) as f64).powf(1.7);
            b_nodes.push(b_lo + (cap - b_lo) * t);
        }
        let gross_r = 1.0 + prices.r;
        let nodes = grid.nodes().to_vec();
        let dest = b_nodes
            .iter()
            .map(|&b| {
                pv.iter()
                    .map(|&v| lower_cell(&nodes, gross_r * b + v))
                    .collect()
            })
            .collect();
        Ok(FiniteDp {
            beta: cfg.beta,
            gross_r,
            nodes,
            b_nodes,
            dest,
            pv,
            probs: cfg.endowments.probs.clone(),
            c_min: 1e-10 * mean_pv,
            iu: OracleIu::new(&cfg.utility, p)?,
        })
    }

    fn expected_values(&self, values: &[f64]) -> Vec<f64> {
        self.b_nodes
            .iter()
            .enumerate()
            .map(|(k, _)| {
                self.dest[k]
                    .iter()
                    .zip(&self.probs)
                    .map(|(&(j, w), &q)| q * ((1.0 - w) * values[j] + w * values[j + 1]))
                    .sum()
            })
            .collect()
    }

    /// One exhaustive greedy sweep: per node, the argmax over the b-grid.
    /// With `prune` the scan starts at the previous node's argmax (policy
    /// monotonicity) and stops shortly after the objective turns down
    /// (concavity); without it every feasible candidate is evaluated.
    fn greedy(&self, ev: &[f64], prune: bool, warm: Option<&[usize]>) -> (Vec<usize>, Vec<f64>) {
        let mut policy = Vec::with_capacity(self.nodes.len());
        let mut values = Vec::with_capacity(self.nodes.len());
        let mut floor = 0usize;
        for (j, &a) in self.nodes.iter().enumerate() {
            // largest feasible choice index: consumption stays above c_min
            let k_hi = self
                .b_nodes
                .partition_point(|&b| a - b > self.c_min)
                .saturating_sub(1);
            // small backtrack below the monotone floor guards against
            // near-ties at the previous node
            let start = if prune {
                warm.map_or(floor, |w| w[j].max(floor))
                    .saturating_sub(2)
                    .min(k_hi)
            } else {
                0
            };
            let mut best_k = start;
            let mut best = f64::NEG_INFINITY;
            let mut downhill = 0usize;
            for k in start..=k_hi {
                let c = (a - self.b_nodes[k]).max(self.c_min);
                let val = self.iu.value(c) + self.beta * ev[k];
                if val > best {
                    best = val;
                    best_k = k;
                    downhill = 0;
                } else if prune {
                    downhill += 1;
                    if downhill > 3 {
                        break;
                    }
                }
            }
            if prune {
                floor = best_k;
            }
            policy.push(best_k);
            values.push(best);
        }
        (policy, values)
    }

    /// Exact policy evaluation: solves (I − βT_π) v = u_π by LU.
    fn evaluate(&self, policy: &[usize]) -> Result<Vec<f64>> {
        let n = self.nodes.len();
        let mut mat = DMatrix::<f64>::identity(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for (j, (&a, &k)) in self.nodes.iter().zip(policy).enumerate() {
            let c = (a - self.b_nodes[k]).max(self.c_min);
            rhs[j] = self.iu.value(c);
            for (&(d, w), &q) in self.dest[k].iter().zip(&self.probs) {
                mat[(j, d)] -= self.beta * q * (1.0 - w);
                mat[(j, d + 1)] -= self.beta * q * w;
            }
        }
        let lu = mat.lu();
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| CseError::Internal("singular policy-evaluation system".into()))?;
        Ok(sol.iter().copied().collect())
    }

    /// Policy iteration to the exact fixed point of the finite-choice
    /// problem: alternate exhaustive greedy and exact evaluation until the
    /// policy repeats.
    fn solve(&self, prune: bool, warm: Option<&Warm>) -> Result<(Vec<f64>, Vec<usize>, usize, f64)> {
        let mut values: Vec<f64> = match warm {
            Some(w) if w.values.len() == self.nodes.len() => w.values.clone(),
            _ => self
                .nodes
                .iter()
                .map(|&a| self.iu.value((a - self.b_nodes[0]).max(self.c_min)))
                .collect(),
        };
        let mut policy: Vec<usize> = warm
            .filter(|w| w.policy.len() == self.nodes.len())
            .map(|w| w.policy.clone())
            .unwrap_or_else(|| vec![0; self.nodes.len()]);
        let max_iter = 200;
        for it in 1..=max_iter {
            let ev = self.expected_values(&values);
            let (next_policy, greedy_values) = self.greedy(&ev, prune, Some(&policy));
            let stable = next_policy == policy && it > 1;
            let gap = greedy_values
                .iter()
                .zip(&values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            policy = next_policy;
            values = self.evaluate(&policy)?;
            if stable || gap < 1e-10 {
                // certify the Bellman residual at the returned values
                let ev = self.expected_values(&values);
                let (_, check) = self.greedy(&ev, false, None);
                let residual = check
                    .iter()
                    .zip(&values)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                return Ok((values, policy, it, residual));
            }
        }
        Err(CseError::NonConvergence {
            what: "oracle policy iteration".into(),
            gap: f64::INFINITY,
            iterations: max_iter,
        })
    }
}

struct Warm {
    values: Vec<f64>,
    policy: Vec<usize>,
}

/// Exhaustive finite-choice DP. Savings restricted to an explicit b-grid
/// of `oc.b_grid_points` values; converged to the exact fixed point of the
/// discretized problem (certified Bellman residual ≤ 1e-10).
pub fn oracle_dp(
    cfg: &EconomyConfig,
    prices: &PriceSystem,
    grid: &WealthGrid,
    oc: &OracleConfig,
) -> Result<PolicySolution> {
    oc.validate()?;
    if grid.len() > oc.max_nodes {
        return Err(CseError::Config(format!(
            "oracle grid has {} nodes, cap is {}",
            grid.len(),
            oc.max_nodes
        )));
    }
    let dp = FiniteDp::new(cfg, prices, grid, oc.b_grid_points)?;
    let (values, policy, iterations, residual) = dp.solve(false, None)?;
    if residual > 1e-10 * values.iter().map(|v| v.abs()).fold(1.0, f64::max) {
        return Err(CseError::NonConvergence {
            what: "oracle DP Bellman residual".into(),
            gap: residual,
            iterations,
        });
    }
    let savings: Vec<f64> = policy.iter().map(|&k| dp.b_nodes[k]).collect();
    let consumption: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(&savings)
        .map(|(&a, &b)| (a - b).max(dp.c_min))
        .collect();
    let n = grid.len();
    Ok(PolicySolution {
        grid: grid.clone(),
        values,
        savings,
        consumption,
        euler_residuals: vec![f64::NAN; n],
        iterations,
        sup_norm_gap: residual,
        borrowing_limit: dp.b_nodes[0],
        savings_cap: *dp.b_nodes.last().unwrap(),
        borrowing_limit_capped: false,
    })
}

/// Spacing of the oracle's savings-choice grid near a given level: the
/// tolerance unit for "within one b-grid cell" comparisons.
pub fn oracle_b_cell_width(
    cfg: &EconomyConfig,
    prices: &PriceSystem,
    oc: &OracleConfig,
    near: f64,
) -> f64 {
    let min_pv = cfg.endowments.min_value(&prices.p);
    let mean_pv = cfg.endowments.mean_value(&prices.p);
    let b_lo = (-min_pv / prices.r).max(-1e4 * mean_pv);
    let cap =
        prices.price_sum() * cfg.b_bar() / ((1.0 - prices.r) * (1.0 - prices.r));
    let nb = oc.b_grid_points as f64;
    // invert the power map to find the local spacing at `near`
    let t = ((near - b_lo) / (cap - b_lo)).clamp(0.0, 1.0);
    let u = t.powf(1.0 / 1.7);
    (cap - b_lo) * 1.7 * u.powf(0.7).max(1e-3) / (nb - 1.0)
}

#[derive(Debug, Clone)]
pub struct OracleInvariant {
    pub distribution: WealthDistribution,
    /// max_j |Σ_k P_{jk} − 1| of the materialized transition matrix.
    pub max_row_sum_error: f64,
}

/// Stationary distribution by explicit linear algebra: materializes the
/// N×N lottery transition matrix P and solves μᵀP = μᵀ with Σμ = 1.
pub fn oracle_invariant(
    cfg: &EconomyConfig,
    prices: &PriceSystem,
    policy: &PolicySolution,
    oc: &OracleConfig,
) -> Result<OracleInvariant> {
    oc.validate()?;
    let nodes = policy.grid.nodes();
    let n = nodes.len();
    if n > oc.max_nodes {
        return Err(CseError::Config(format!(
            "oracle grid has {n} nodes, cap is {}",
            oc.max_nodes
        )));
    }
    let gross_r = 1.0 + prices.r;
    let mut p_mat = DMatrix::<f64>::zeros(n, n);
    for (j, &b) in policy.savings.iter().enumerate() {
        for (y, &q) in cfg.endowments.support.iter().zip(&cfg.endowments.probs) {
            let a_next = gross_r * b + prices.value(y);
            let (d, w) = lower_cell(nodes, a_next);
            p_mat[(j, d)] += q * (1.0 - w);
            p_mat[(j, d + 1)] += q * w;
        }
    }
    let max_row_sum_error = (0..n)
        .map(|j| ((0..n).map(|k| p_mat[(j, k)]).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);

    // (Pᵀ − I) μ = 0 with the last equation replaced by Σμ = 1
    let mut sys = p_mat.transpose() - DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for k in 0..n {
        sys[(n - 1, k)] = 1.0;
    }
    rhs[n - 1] = 1.0;
    let mu = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| CseError::Internal("singular stationary system".into()))?;
    let mut mass: Vec<f64> = mu.iter().copied().collect();
    for m in mass.iter_mut() {
        if *m < 0.0 {
            if *m < -1e-10 {
                return Err(CseError::Internal(format!(
                    "stationary solve produced mass {m:.3e} < 0"
                )));
            }
            *m = 0.0;
        }
    }
    let total: f64 = mass.iter().sum();
    for m in mass.iter_mut() {
        *m /= total;
    }
    Ok(OracleInvariant {
        distribution: WealthDistribution::new(policy.grid.clone(), mass)?,
        max_row_sum_error,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct FieldCell {
    pub ratio: f64,
    pub r: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct OracleEquilibrium {
    /// Numéraire minimizer: p = (1, ratio).
    pub ratio: f64,
    pub r: f64,
    pub residual: f64,
    pub ratio_axis: Vec<f64>,
    pub r_axis: Vec<f64>,
    /// Row-major over (ratio, r).
    pub field: Vec<FieldCell>,
}

impl OracleEquilibrium {
    /// Local lattice spacing at the minimizer: the axes are nonuniform, so
    /// "within one cell" means the widest interval touching the minimizer.
    pub fn ratio_cell(&self) -> f64 {
        local_cell(&self.ratio_axis, self.ratio)
    }

    pub fn r_cell(&self) -> f64 {
        local_cell(&self.r_axis, self.r)
    }

    /// Number of 4-connected components of {cells : residual ≤ threshold}.
    pub fn components_below(&self, threshold: f64) -> usize {
        let nx = self.ratio_axis.len();
        let ny = self.r_axis.len();
        let inside: Vec<bool> = self.field.iter().map(|c| c.residual <= threshold).collect();
        let mut seen = vec![false; inside.len()];
        let mut components = 0;
        for start in 0..inside.len() {
            if !inside[start] || seen[start] {
                continue;
            }
            components += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(idx) = stack.pop() {
                let (ix, iy) = (idx / ny, idx % ny);
                let mut try_push = |jx: usize, jy: usize| {
                    let j = jx * ny + jy;
                    if inside[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                if ix > 0 {
                    try_push(ix - 1, iy);
                }
                if ix + 1 < nx {
                    try_push(ix + 1, iy);
                }
                if iy > 0 {
                    try_push(ix, iy - 1);
                }
                if iy + 1 < ny {
                    try_push(ix, iy + 1);
                }
            }
        }
        components
    }
}

fn local_cell(axis: &[f64], at: f64) -> f64 {
    let i = axis
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - at).abs().total_cmp(&(b.1 - at).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let left = if i > 0 { axis[i] - axis[i - 1] } else { 0.0 };
    let right = if i + 1 < axis.len() {
        axis[i + 1] - axis[i]
    } else {
        0.0
    };
    left.max(right)
}

/// Exhaustive lattice search for the equilibrium: sweeps (p_2/p_1, r) with
/// p_1 = 1, evaluates ζ via the oracle components at every cell, returns
/// the sup-norm minimizer and the full residual field.
pub fn oracle_equilibrium(cfg: &EconomyConfig, oc: &OracleConfig) -> Result<OracleEquilibrium> {
    oc.validate()?;
    if cfg.n != 2 {
        return Err(CseError::Config(format!(
            "oracle equilibrium handles exactly 2 goods, got {}",
            cfg.n
        )));
    }
    let n_nodes = cfg.grid.n_points.min(oc.max_nodes);
    let nx = oc.price_lattice;
    let ny = oc.price_lattice;
    let (lo, hi) = oc.ratio_range;
    let ratio_axis: Vec<f64> = (0..nx)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (nx - 1) as f64).exp())
        .collect();
    // aggregate savings is extremely steep in r near 1/β − 1 and the
    // crossing can sit within 1e-3 of it, so the r axis is power-spaced
    // toward the top (and runs closer to the supremum than the solver's
    // default bracket endpoint)
    let r_lo = 1e-3;
    let r_hi = (1.0 / cfg.beta - 1.0) - 1e-4;
    let r_axis: Vec<f64> = (0..ny)
        .map(|i| {
            let u = (ny - 1 - i) as f64 / (ny - 1) as f64;
            r_hi - (r_hi - r_lo) * u.powi(3)
        })
        .collect();
    let supply: Vec<f64> = (0..2).map(|i| cfg.endowments.mean_good(i)).collect();

    // ζ at one (ratio, r): goods components are homogeneous of degree 0 in
    // prices, but the savings component scales with the price level, so it
    // is rescaled to the Σp = 1 − r simplex for cross-ratio comparability.
    let eval_cell = |ratio: f64, r: f64, warm: Option<&Warm>| -> Result<(f64, f64, f64, Warm)> {
        let prices = PriceSystem::new(vec![1.0, ratio], r)?;
        // oracle's own grid: same geometry definition, local loop
        let min_pv = cfg.endowments.min_value(&prices.p);
        let max_pv = cfg.endowments.max_value(&prices.p);
        let mean_pv = cfg.endowments.mean_value(&prices.p);
        let a_lo = (-min_pv / r).max(-1e4 * mean_pv);
        let cap = prices.price_sum() * cfg.b_bar() / ((1.0 - r) * (1.0 - r));
        let a_hi = (1.0 + r) * cap + max_pv;
        let grid = WealthGrid::with_spacing(a_lo, a_hi, n_nodes, cfg.grid.curvature)?;
        let dp = FiniteDp::new(cfg, &prices, &grid, oc.b_grid_points)?;
        let (values, policy, _, _) = dp.solve(true, warm)?;

        // stationary μ by the dense solve, then ζ by hand
        let savings: Vec<f64> = policy.iter().map(|&k| dp.b_nodes[k]).collect();
        let mu = stationary_mass(&dp, &savings, grid.nodes())?;
        let mut agg_savings = 0.0;
        let mut spend = 0.0;
        for ((&m, &b), &a) in mu.iter().zip(&savings).zip(grid.nodes()) {
            agg_savings += m * b;
            spend += m * (a - b).max(dp.c_min);
        }
        let zeta1 = dp.iu.bundle1[0] * spend - supply[0];
        let zeta2 = dp.iu.bundle1[1] * spend - supply[1];
        let zs = -agg_savings * (1.0 - r) / prices.price_sum();
        Ok((zeta1, zeta2, zs, Warm { values, policy }))
    };

    let mut field = Vec::with_capacity(nx * ny);
    let mut best = FieldCell {
        ratio: f64::NAN,
        r: f64::NAN,
        residual: f64::INFINITY,
    };
    for &ratio in &ratio_axis {
        let mut warm: Option<Warm> = None;
        let mut column: Vec<(f64, f64)> = Vec::with_capacity(ny); // (r, ζ_savings)
        for &r in &r_axis {
            let (z1, z2, zs, w) = eval_cell(ratio, r, warm.as_ref())?;
            let residual = z1.abs().max(z2.abs()).max(zs.abs());
            field.push(FieldCell { ratio, r, residual });
            if residual < best.residual {
                best = FieldCell { ratio, r, residual };
            }
            column.push((r, zs));
            warm = Some(w);
        }
        // the savings residual is far steeper in r than the lattice pitch:
        // refine the root of ζ_savings between the sign-change cells by
        // bisection so the column's residual reflects the goods markets
        if let Some(k) = column.windows(2).position(|w| w[0].1 * w[1].1 < 0.0) {
            let (mut lo, mut z_lo) = column[k];
            let mut hi = column[k + 1].0;
            let mut last = None;
            for _ in 0..50 {
                if hi - lo < 1e-11 {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let (z1, z2, zs, w) = eval_cell(ratio, mid, warm.as_ref())?;
                warm = Some(w);
                last = Some((mid, z1.abs().max(z2.abs()).max(zs.abs())));
                if zs * z_lo > 0.0 {
                    lo = mid;
                    z_lo = zs;
                } else {
                    hi = mid;
                }
            }
            if let Some((r, residual)) = last {
                if residual < best.residual {
                    best = FieldCell { ratio, r, residual };
                }
            }
        }
    }
    Ok(OracleEquilibrium {
        ratio: best.ratio,
        r: best.r,
        residual: best.residual,
        ratio_axis,
        r_axis,
        field,
    })
}

fn stationary_mass(dp: &FiniteDp, savings: &[f64], nodes: &[f64]) -> Result<Vec<f64>> {
    let n = nodes.len();
    // (Pᵀ − I) μ = 0 with the last equation replaced by Σμ = 1
    let mut sys = DMatrix::<f64>::identity(n, n) * -1.0;
    for (j, &b) in savings.iter().enumerate() {
        for (&q, &pv) in dp.probs.iter().zip(&dp.pv) {
            let (d, w) = lower_cell(nodes, dp.gross_r * b + pv);
            sys[(d, j)] += q * (1.0 - w);
            sys[(d + 1, j)] += q * w;
        }
    }
    let mut rhs = DVector::<f64>::zeros(n);
    for k in 0..n {
        sys[(n - 1, k)] = 1.0;
    }
    rhs[n - 1] = 1.0;
    let mu = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| CseError::Internal("singular stationary system in sweep".into()))?;
    let mut mass: Vec<f64> = mu.iter().map(|m| m.max(0.0)).collect();
    let total: f64 = mass.iter().sum();
    for m in mass.iter_mut() {
        *m /= total;
    }
    Ok(mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::tiny;

    #[test]
    fn demand_symmetric_case() {
        let u = UtilitySpec::ces(0.5, vec![0.5, 0.5]);
        for c in [0.5, 1.0, 7.0] {
            let x = oracle_demand(&u, c, &[1.0, 1.0]).unwrap();
            assert!((x[0] - c / 2.0).abs() < 1e-10);
            assert!((x[1] - c / 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn demand_cobb_douglas_shares() {
        let u = UtilitySpec::cobb_douglas(vec![0.3, 0.7]);
        let x = oracle_demand(&u, 1.0, &[1.0, 1.0]).unwrap();
        assert!((x[0] - 0.3).abs() < 1e-9);
        assert!((x[1] - 0.7).abs() < 1e-9);
    }

    #[test]
    fn demand_rejects_other_dimensions() {
        let u = UtilitySpec::ces(0.5, vec![0.5, 0.5]);
        assert!(oracle_demand(&u, 1.0, &[1.0, 1.0, 1.0]).is_err());
        assert!(oracle_demand(&u, 0.0, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn dp_is_myopic_at_beta_zero() {
        let mut cfg = tiny();
        cfg.beta = 0.0;
        let prices = PriceSystem::new(vec![0.45, 0.45], 0.05).unwrap();
        let grid = crate::economy::build_grid(&cfg, &prices, 60, 1.7).unwrap();
        let sol = oracle_dp(&cfg, &prices, &grid, &OracleConfig::default()).unwrap();
        for &b in &sol.savings {
            assert_eq!(b, sol.borrowing_limit);
        }
    }

    #[test]
    fn dp_policy_is_monotone() {
        let cfg = tiny();
        let prices = PriceSystem::new(vec![0.45, 0.45], 0.05).unwrap();
        let grid = crate::economy::build_grid(&cfg, &prices, 60, 1.7).unwrap();
        let sol = oracle_dp(&cfg, &prices, &grid, &OracleConfig::default()).unwrap();
        for w in sol.savings.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn invariant_row_sums_and_point_mass() {
        // degenerate endowment + constant policy: everything lands on one
        // wealth level
        use crate::economy::{EndowmentProcess, GridSpec};
        let mut cfg = tiny();
        cfg.endowments = EndowmentProcess::new(vec![vec![2.0, 2.0]], vec![1.0]);
        cfg.grid = GridSpec {
            n_points: 60,
            curvature: 1.0,
        };
        let prices = PriceSystem::new(vec![0.45, 0.45], 0.05).unwrap();
        let grid = crate::economy::build_grid(&cfg, &prices, 60, 1.0).unwrap();
        let n = grid.len();
        let policy = PolicySolution {
            grid: grid.clone(),
            values: vec![0.0; n],
            savings: vec![0.0; n],
            consumption: grid.nodes().to_vec(),
            euler_residuals: vec![f64::NAN; n],
            iterations: 0,
            sup_norm_gap: 0.0,
            borrowing_limit: grid.lower(),
            savings_cap: 100.0,
            borrowing_limit_capped: false,
        };
        let inv = oracle_invariant(&cfg, &prices, &policy, &OracleConfig::default()).unwrap();
        assert!(inv.max_row_sum_error < 1e-14);
        // all mass on the lottery pair around p·y = 1.8
        let mean = inv.distribution.mean();
        assert!((mean - 1.8).abs() < 1e-9, "mean {mean}");
        let support: usize = inv
            .distribution
            .mass
            .iter()
            .filter(|&&m| m > 1e-12)
            .count();
        assert!(support <= 2, "support size {support}");
    }

    #[test]
    fn invariant_on_a_five_node_chain_by_hand() {
        // uniform grid 0..4, policy g ≡ 0, degenerate endowment p·y = 2.1:
        // every agent jumps to 2.1 → lottery (0.9, 0.1) on nodes 2 and 3
        use crate::economy::EndowmentProcess;
        let mut cfg = tiny();
        cfg.endowments = EndowmentProcess::new(vec![vec![1.05, 1.05]], vec![1.0]);
        let prices = PriceSystem::new(vec![1.0, 1.0], 0.05).unwrap();
        let grid = WealthGrid::with_spacing(0.0, 4.0, 5, 1.0).unwrap();
        let policy = PolicySolution {
            grid: grid.clone(),
            values: vec![0.0; 5],
            savings: vec![0.0; 5],
            consumption: grid.nodes().to_vec(),
            euler_residuals: vec![f64::NAN; 5],
            iterations: 0,
            sup_norm_gap: 0.0,
            borrowing_limit: 0.0,
            savings_cap: 100.0,
            borrowing_limit_capped: false,
        };
        let oc = OracleConfig {
            max_nodes: 5,
            ..OracleConfig::default()
        };
        let inv = oracle_invariant(&cfg, &prices, &policy, &oc).unwrap();
        let expect = [0.0, 0.0, 0.9, 0.1, 0.0];
        for (m, e) in inv.distribution.mass.iter().zip(expect) {
            assert!((m - e).abs() < 1e-12, "mass {:?}", inv.distribution.mass);
        }
    }

    #[test]
    fn small_lattice_sweep_finds_the_symmetric_equilibrium() {
        let cfg = tiny();
        let oc = OracleConfig {
            b_grid_points: 600,
            price_lattice: 41,
            max_nodes: 60,
            ratio_range: (0.7, 1.0 / 0.7),
        };
        let out = oracle_equilibrium(&cfg, &oc).unwrap();
        assert!(
            (out.ratio - 1.0).abs() <= out.ratio_cell(),
            "minimizer ratio {} (cell {})",
            out.ratio,
            out.ratio_cell()
        );
        // single basin near the minimum
        let threshold = 10.0 * out.residual.max(1e-3);
        assert_eq!(out.components_below(threshold), 1);
    }
}
