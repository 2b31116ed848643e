//! Wealth distributions on the grid and the push-forward operator M.
//! Off-grid destinations are split between the two bracketing nodes with
//! linear lottery weights, which preserves the mean exactly; the invariant
//! distribution is found by power iteration without materializing the
//! transition matrix.

use crate::bellman::PolicySolution;
use crate::economy::{EconomyConfig, PriceSystem, WealthGrid};
use crate::{CseError, Result};

const MASS_TOL: f64 = 1e-12;
const DRIFT_TOL: f64 = 1e-12;

/// Probability masses on the wealth grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthDistribution {
    pub grid: WealthGrid,
    pub mass: Vec<f64>,
}

impl WealthDistribution {
    pub fn new(grid: WealthGrid, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.len() {
            return Err(CseError::Internal(format!(
                "{} masses for {} nodes",
                mass.len(),
                grid.len()
            )));
        }
        let d = WealthDistribution { grid, mass };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(grid: WealthGrid) -> Self {
        let n = grid.len();
        WealthDistribution {
            grid,
            mass: vec![1.0 / n as f64; n],
        }
    }

    /// All mass lottery-split at one wealth level.
    pub fn point_mass(grid: WealthGrid, a: f64) -> Self {
        let mut mass = vec![0.0; grid.len()];
        let (j, w) = grid.locate(a);
        mass[j] = 1.0 - w;
        mass[j + 1] += w;
        WealthDistribution { grid, mass }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mass.iter().any(|&m| m < 0.0) {
            return Err(CseError::Internal("negative mass".into()));
        }
        let s: f64 = self.mass.iter().sum();
        if (s - 1.0).abs() > MASS_TOL {
            return Err(CseError::Internal(format!("mass sums to {s:.17}")));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.grid
            .nodes()
            .iter()
            .zip(&self.mass)
            .map(|(a, m)| a * m)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.grid
            .nodes()
            .iter()
            .zip(&self.mass)
            .map(|(a, m)| m * (a - mu) * (a - mu))
            .sum()
    }

    /// Gini coefficient from the discrete distribution (reporting only).
    pub fn gini(&self) -> f64 {
        let nodes = self.grid.nodes();
        let mean = self.mean();
        if mean.abs() < 1e-300 {
            return f64::NAN;
        }
        // E|X−Y| = 2 Σ_cells F(1−F) Δa with F constant between nodes
        let mut f_cum = 0.0;
        let mut mad = 0.0;
        for j in 0..nodes.len() - 1 {
            f_cum += self.mass[j];
            mad += 2.0 * f_cum * (1.0 - f_cum) * (nodes[j + 1] - nodes[j]);
        }
        mad / (2.0 * mean)
    }

    pub fn l1_distance(&self, other: &WealthDistribution) -> f64 {
        self.mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// E[f(a)].
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.grid
            .nodes()
            .iter()
            .zip(&self.mass)
            .map(|(&a, m)| m * f(a))
            .sum()
    }

    /// Quantile at probability q ∈ [0, 1].
    pub fn quantile(&self, q: f64) -> f64 {
        let mut acc = 0.0;
        for (a, m) in self.grid.nodes().iter().zip(&self.mass) {
            acc += m;
            if acc >= q {
                return *a;
            }
        }
        self.grid.upper()
    }
}

/// Lottery transition table: for each (source node, endowment draw), the
/// destination cell index and weight.
struct Pushforward {
    /// (source node, destination index, mass fraction) triples.
    entries: Vec<(usize, usize, f64)>,
}

fn build_pushforward(
    cfg: &EconomyConfig,
    prices: &PriceSystem,
    policy: &PolicySolution,
) -> Result<Pushforward> {
    let grid = &policy.grid;
    let scale = grid.upper() - grid.lower();
    let mut entries = Vec::with_capacity(grid.len() * cfg.endowments.len() * 2);
    for (j, &b) in policy.savings.iter().enumerate() {
        for (y, &q) in cfg.endowments.support.iter().zip(&cfg.endowments.probs) {
            let dest = (1.0 + prices.r) * b + prices.value(y);
            if dest < grid.lower() - 1e-9 * scale || dest > grid.upper() + 1e-9 * scale {
                return Err(CseError::Internal(format!(
                    "pushforward destination {dest} escapes [{}, {}]",
                    grid.lower(),
                    grid.upper()
                )));
            }
            let (idx, w) = grid.locate(dest);
            entries.push((j, idx, q * (1.0 - w)));
            entries.push((j, idx + 1, q * w));
        }
    }
    Ok(Pushforward { entries })
}

fn push(table: &Pushforward, mass_in: &[f64], mass_out: &mut [f64]) {
    mass_out.fill(0.0);
    for &(src, dst, frac) in &table.entries {
        mass_out[dst] += frac * mass_in[src];
    }
}

/// One application of the operator M.
pub fn apply_m(
    cfg: &EconomyConfig,
    prices: &PriceSystem,
    policy: &PolicySolution,
    dist_in: &WealthDistribution,
) -> Result<WealthDistribution> {
    dist_in.validate()?;
    let table = build_pushforward(cfg, prices, policy)?;
    let mut mass = vec![0.0; dist_in.mass.len()];
    push(&table, &dist_in.mass, &mut mass);
    renormalize(&mut mass)?;
    Ok(WealthDistribution {
        grid: dist_in.grid.clone(),
        mass,
    })
}

fn renormalize(mass: &mut [f64]) -> Result<()> {
    let s: f64 = mass.iter().sum();
    if (s - 1.0).abs() > DRIFT_TOL {
        return Err(CseError::Internal(format!(
            "mass drift {:.3e} through the pushforward",
            s - 1.0
        )));
    }
    for m in mass.iter_mut() {
        *m /= s;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct InvariantResult {
    pub distribution: WealthDistribution,
    pub iterations: usize,
    /// Certified fixed-point residual ‖Mμ − μ‖₁.
    pub residual: f64,
}

/// Power-iterates M from the given start (uniform by default) until the
/// L1 gap between successive distributions falls below `tol`.
pub fn invariant_distribution(
    cfg: &EconomyConfig,
    prices: &PriceSystem,
    policy: &PolicySolution,
    tol: f64,
    max_iter: usize,
    start: Option<WealthDistribution>,
) -> Result<InvariantResult> {
    if !(tol > 0.0) {
        return Err(CseError::Config(format!("tolerance must be positive, got {tol}")));
    }
    let table = build_pushforward(cfg, prices, policy)?;
    let mut current = match start {
        Some(d) => {
            d.validate()?;
            d
        }
        None => WealthDistribution::uniform(policy.grid.clone()),
    };
    let mut next = vec![0.0; current.mass.len()];
    for it in 1..=max_iter {
        push(&table, &current.mass, &mut next);
        let gap: f64 = current
            .mass
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .sum();
        std::mem::swap(&mut current.mass, &mut next);
        if gap < tol {
            renormalize(&mut current.mass)?;
            // the stopping gap is the certified residual ‖Mμ − μ‖₁ of the
            // previous iterate; recompute at the returned μ
            push(&table, &current.mass, &mut next);
            let residual: f64 = current
                .mass
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .sum();
            return Ok(InvariantResult {
                distribution: current,
                iterations: it,
                residual,
            });
        }
    }
    Err(CseError::NonConvergence {
        what: "invariant-distribution power iteration".into(),
        gap: tol,
        iterations: max_iter,
    })
}

/// Aggregates under a wealth distribution.
#[derive(Debug, Clone)]
pub struct Aggregates {
    pub savings: f64,
    pub demand: Vec<f64>,
    pub mean_wealth: f64,
}

/// Σ m_j g(a_j), Σ m_j x*_i(c_j, p), Σ m_j a_j.
pub fn aggregate(
    cfg: &EconomyConfig,
    prices: &PriceSystem,
    policy: &PolicySolution,
    mu: &WealthDistribution,
) -> Result<Aggregates> {
    let shares = crate::demand::expenditure_shares(&cfg.utility, &prices.p)?;
    let mut savings = 0.0;
    let mut spend = 0.0;
    let mut mean_wealth = 0.0;
    for ((&m, &g), (&c, &a)) in mu
        .mass
        .iter()
        .zip(&policy.savings)
        .zip(policy.consumption.iter().zip(policy.grid.nodes()))
    {
        savings += m * g;
        spend += m * c;
        mean_wealth += m * a;
    }
    let demand = shares.iter().map(|z| z * spend).collect();
    Ok(Aggregates {
        savings,
        demand,
        mean_wealth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderMode {
    /// Increasing convex order.
    Icx,
    /// Convex order (also requires equal means).
    Cx,
}

/// Report from a stochastic-order test battery.
#[derive(Debug, Clone)]
pub struct OrderReport {
    pub holds: bool,
    pub max_violation: f64,
    pub mean_gap: f64,
    pub tolerance: f64,
    pub n_tests: usize,
}

/// Checks d1 ⪰ d2 in the requested order: ∫f d1 ≥ ∫f d2 − tol over a
/// battery of test functions with quantile-spaced thresholds. The order
/// results are exact for measures; lottery discretization perturbs
/// expectations by O(cell width), so callers pass a discretization-scaled
/// tolerance (see `order_tolerance`).
pub fn convex_order_geq(
    d1: &WealthDistribution,
    d2: &WealthDistribution,
    mode: OrderMode,
    tol: f64,
) -> OrderReport {
    let mut max_violation: f64 = 0.0;
    let mut n_tests = 0;
    let mut check = |e1: f64, e2: f64| {
        max_violation = max_violation.max(e2 - e1);
        n_tests += 1;
    };
    // identity test function
    check(d1.mean(), d2.mean());
    // 101 quantile-spaced thresholds over the pooled distributions
    for k in 0..=100 {
        let q = k as f64 / 100.0;
        let t = 0.5 * (d1.quantile(q) + d2.quantile(q));
        check(
            d1.expect(|a| (a - t).max(0.0)),
            d2.expect(|a| (a - t).max(0.0)),
        );
        if mode == OrderMode::Cx {
            check(d1.expect(|a| (a - t).abs()), d2.expect(|a| (a - t).abs()));
        }
    }
    let mean_gap = (d1.mean() - d2.mean()).abs();
    let mean_ok = mode == OrderMode::Icx || mean_gap <= tol;
    OrderReport {
        holds: max_violation <= tol && mean_ok,
        max_violation,
        mean_gap,
        tolerance: tol,
        n_tests,
    }
}

/// Discretization-scaled tolerance for order checks: 5 times the maximum
/// cell width times total mass.
pub fn order_tolerance(d1: &WealthDistribution, d2: &WealthDistribution) -> f64 {
    5.0 * d1.grid.max_cell_width().max(d2.grid.max_cell_width())
}
