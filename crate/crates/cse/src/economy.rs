//! Economy primitives: endowment process, preferences, prices, and the
//! wealth-interval geometry that the dynamic program lives on.

use serde::{Deserialize, Serialize};

use crate::{CseError, Result};

const PROB_SUM_TOL: f64 = 1e-12;

/// Finite-support endowment process: joint support vectors and their
/// probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndowmentProcess {
    pub support: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl EndowmentProcess {
    pub fn new(support: Vec<Vec<f64>>, probs: Vec<f64>) -> Self {
        EndowmentProcess { support, probs }
    }

    pub fn n_goods(&self) -> usize {
        self.support.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// min_y p·y over the support.
    pub fn min_value(&self, p: &[f64]) -> f64 {
        self.support
            .iter()
            .map(|y| dot(p, y))
            .fold(f64::INFINITY, f64::min)
    }

    /// max_y p·y over the support.
    pub fn max_value(&self, p: &[f64]) -> f64 {
        self.support
            .iter()
            .map(|y| dot(p, y))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Σ_y e(y) p·y.
    pub fn mean_value(&self, p: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(y, q)| q * dot(p, y))
            .sum()
    }

    /// Mean endowment vector ȳ.
    pub fn mean_vector(&self) -> Vec<f64> {
        let n = self.n_goods();
        let mut m = vec![0.0; n];
        for (y, q) in self.support.iter().zip(&self.probs) {
            for i in 0..n {
                m[i] += q * y[i];
            }
        }
        m
    }

    /// Per-good mean Σ e_i(y_i) y_i; the aggregate supply of good `i`.
    pub fn mean_good(&self, i: usize) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(y, q)| q * y[i])
            .sum()
    }

    /// Marginal distribution of good `i`, values aggregated and sorted.
    pub fn marginal(&self, i: usize) -> Vec<(f64, f64)> {
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        for (y, q) in self.support.iter().zip(&self.probs) {
            match pairs.iter_mut().find(|(v, _)| *v == y[i]) {
                Some((_, acc)) => *acc += q,
                None => pairs.push((y[i], *q)),
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs
    }

    /// Mean endowment value at unit prices, Σ_y e(y) Σ_i y_i.
    pub fn mean_value_unit_prices(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(y, q)| q * y.iter().sum::<f64>())
            .sum()
    }

    fn violations(&self, n: usize, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.support.is_empty() {
            out.push(Violation::fatal(format!(
                "{prefix}endowment support must be non-empty"
            )));
            return out;
        }
        if self.support.len() != self.probs.len() {
            out.push(Violation::fatal(format!(
                "{prefix}endowment support and probs lengths differ ({} vs {})",
                self.support.len(),
                self.probs.len()
            )));
        }
        for (k, y) in self.support.iter().enumerate() {
            if y.len() != n {
                out.push(Violation::fatal(format!(
                    "{prefix}endowment support vector {k} has dimension {} (expected {n})",
                    y.len()
                )));
            }
            if y.iter().any(|&v| !(v > 0.0)) {
                out.push(Violation::fatal(format!(
                    "{prefix}endowment support vector {k} must be strictly positive in every coordinate"
                )));
            }
        }
        if self.probs.iter().any(|&q| !(q > 0.0)) {
            out.push(Violation::fatal(format!(
                "{prefix}endowment probabilities must all be strictly positive"
            )));
        }
        let s: f64 = self.probs.iter().sum();
        if (s - 1.0).abs() > PROB_SUM_TOL {
            out.push(Violation::fatal(format!(
                "{prefix}endowment probabilities must sum to 1 (got {s:.15})"
            )));
        }
        if !self.has_dominating_point() {
            out.push(Violation::warning(format!(
                "{prefix}endowment dominance condition fails: no support point y' with y' - y >> 0 \
                 for every other support point"
            )));
        }
        out
    }

    /// There must be a support point strictly above every other support point.
    pub fn has_dominating_point(&self) -> bool {
        self.support.iter().any(|cand| {
            self.support
                .iter()
                .filter(|y| *y != cand)
                .all(|y| cand.iter().zip(y).all(|(c, v)| c > v))
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UtilityKind {
    #[serde(rename = "CES")]
    Ces,
    CobbDouglas,
}

/// Preferences over bundles: CES U(x) = Σ α_i x_i^γ with γ ∈ (0,1), or
/// Cobb-Douglas U(x) = Σ α_i ln x_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySpec {
    pub kind: UtilityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub alphas: Vec<f64>,
}

impl UtilitySpec {
    pub fn ces(gamma: f64, alphas: Vec<f64>) -> Self {
        UtilitySpec {
            kind: UtilityKind::Ces,
            gamma: Some(gamma),
            alphas,
        }
    }

    pub fn cobb_douglas(alphas: Vec<f64>) -> Self {
        UtilitySpec {
            kind: UtilityKind::CobbDouglas,
            gamma: None,
            alphas,
        }
    }

    /// Direct utility at a bundle.
    pub fn utility(&self, x: &[f64]) -> f64 {
        match self.kind {
            UtilityKind::Ces => {
                let g = self.gamma.expect("validated CES has gamma");
                self.alphas
                    .iter()
                    .zip(x)
                    .map(|(a, xi)| a * xi.powf(g))
                    .sum()
            }
            UtilityKind::CobbDouglas => self.alphas.iter().zip(x).map(|(a, xi)| a * xi.ln()).sum(),
        }
    }

    fn violations(&self, n: usize, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.alphas.len() != n {
            out.push(Violation::fatal(format!(
                "{prefix}utility has {} alphas (expected {n})",
                self.alphas.len()
            )));
        }
        if self.alphas.iter().any(|&a| !(a > 0.0)) {
            out.push(Violation::fatal(format!(
                "{prefix}utility alphas must be strictly positive"
            )));
        }
        let s: f64 = self.alphas.iter().sum();
        if (s - 1.0).abs() > PROB_SUM_TOL {
            out.push(Violation::fatal(format!(
                "{prefix}utility alphas must sum to 1 (got {s:.15})"
            )));
        }
        match self.kind {
            UtilityKind::Ces => match self.gamma {
                None => out.push(Violation::fatal(format!(
                    "{prefix}CES utility requires gamma"
                ))),
                Some(g) => {
                    if !(g > 0.0 && g < 1.0) {
                        out.push(Violation::fatal(format!(
                            "{prefix}gamma must lie strictly in (0, 1), got {g}"
                        )));
                    }
                }
            },
            UtilityKind::CobbDouglas => {
                if self.gamma.is_some() {
                    out.push(Violation::fatal(format!(
                        "{prefix}Cobb-Douglas utility does not take gamma"
                    )));
                }
            }
        }
        out
    }
}

/// One ex-ante agent type: population weight φ(θ) plus its own primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeProfile {
    pub weight: f64,
    pub utility: UtilitySpec,
    pub endowments: EndowmentProcess,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_points: usize,
    pub curvature: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_points: 200,
            curvature: 1.7,
        }
    }
}

/// The immutable problem statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomyConfig {
    pub n: usize,
    pub beta: f64,
    pub endowments: EndowmentProcess,
    pub utility: UtilitySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_bar: Option<f64>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "theta_types")]
    pub types: Option<Vec<TypeProfile>>,
}

impl EconomyConfig {
    /// Savings-cap constant b̄; defaults to 50 times the mean endowment
    /// value at unit prices so the cap never binds at interior equilibria.
    pub fn b_bar(&self) -> f64 {
        self.b_bar
            .unwrap_or_else(|| 50.0 * self.endowments.mean_value_unit_prices())
    }

    pub fn has_types(&self) -> bool {
        self.types.as_ref().is_some_and(|t| !t.is_empty())
    }

    /// A single-type view of this economy with the given primitives.
    pub fn with_primitives(&self, utility: UtilitySpec, endowments: EndowmentProcess) -> Self {
        EconomyConfig {
            n: self.n,
            beta: self.beta,
            endowments,
            utility,
            b_bar: Some(self.b_bar()),
            grid: self.grid,
            types: None,
        }
    }
}

/// A single config violation; non-fatal ones are surfaced as warnings and
/// do not block a solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub message: String,
    pub fatal: bool,
}

impl Violation {
    fn fatal(message: String) -> Self {
        Violation {
            message,
            fatal: true,
        }
    }

    fn warning(message: String) -> Self {
        Violation {
            message,
            fatal: false,
        }
    }
}

/// Checks every economy invariant; the returned list is empty iff the
/// config is valid. Violations are data, not failures.
pub fn validate_config(cfg: &EconomyConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if cfg.n < 2 {
        out.push(Violation::fatal(format!(
            "good count n must be at least 2, got {}",
            cfg.n
        )));
    }
    if !(cfg.beta > 0.5 && cfg.beta < 1.0) {
        out.push(Violation::fatal(format!(
            "beta must lie strictly in (1/2, 1), got {}",
            cfg.beta
        )));
    }
    out.extend(cfg.utility.violations(cfg.n, ""));
    out.extend(cfg.endowments.violations(cfg.n, ""));
    if let Some(b) = cfg.b_bar {
        if !(b > 0.0) {
            out.push(Violation::fatal(format!("b_bar must be positive, got {b}")));
        }
    }
    if cfg.grid.n_points < 50 {
        out.push(Violation::fatal(format!(
            "grid n_points must be at least 50, got {}",
            cfg.grid.n_points
        )));
    }
    if !(cfg.grid.curvature > 0.0) {
        out.push(Violation::fatal(format!(
            "grid curvature must be positive, got {}",
            cfg.grid.curvature
        )));
    }
    if let Some(types) = &cfg.types {
        if types.is_empty() {
            out.push(Violation::fatal(
                "theta_types must be non-empty when present".to_string(),
            ));
        }
        let s: f64 = types.iter().map(|t| t.weight).sum();
        if !types.is_empty() && (s - 1.0).abs() > PROB_SUM_TOL {
            out.push(Violation::fatal(format!(
                "type weights must sum to 1 (got {s:.15})"
            )));
        }
        for (k, t) in types.iter().enumerate() {
            if !(t.weight > 0.0 && t.weight <= 1.0) {
                out.push(Violation::fatal(format!(
                    "type {k}: weight must lie in (0, 1], got {}",
                    t.weight
                )));
            }
            let prefix = format!("type {k}: ");
            out.extend(t.utility.violations(cfg.n, &prefix));
            out.extend(t.endowments.violations(cfg.n, &prefix));
        }
    }
    out
}

/// Goods prices p ≫ 0 and interest rate r ∈ (0,1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSystem {
    pub p: Vec<f64>,
    pub r: f64,
}

impl PriceSystem {
    pub fn new(p: Vec<f64>, r: f64) -> Result<Self> {
        let ps = PriceSystem { p, r };
        ps.validate()?;
        Ok(ps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.is_empty() || self.p.iter().any(|&pi| !(pi > 0.0) || !pi.is_finite()) {
            return Err(CseError::Config(format!(
                "goods prices must be strictly positive and finite, got {:?}",
                self.p
            )));
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(CseError::Config(format!(
                "interest rate must lie strictly in (0, 1), got {}",
                self.r
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn price_sum(&self) -> f64 {
        self.p.iter().sum()
    }

    /// Membership in P: Σ p_i + r = 1.
    pub fn is_normalized(&self) -> bool {
        (self.price_sum() + self.r - 1.0).abs() <= 1e-12
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        dot(&self.p, y)
    }

    pub fn scaled(&self, theta: f64) -> PriceSystem {
        PriceSystem {
            p: self.p.iter().map(|pi| theta * pi).collect(),
            r: self.r,
        }
    }

    /// The numéraire representative with p_1 = 1.
    pub fn numeraire(&self) -> PriceSystem {
        self.scaled(1.0 / self.p[0])
    }
}

/// Maps (p, r) to the representative on the simplex P by scaling goods
/// prices only: θ = (1 − r) / Σ p_i. The interest rate is untouched.
pub fn normalize_prices(prices: &PriceSystem) -> PriceSystem {
    let theta = (1.0 - prices.r) / prices.price_sum();
    prices.scaled(theta)
}

/// The natural borrowing limit b̲ = −min_y p·y / r.
pub fn borrowing_limit(cfg: &EconomyConfig, prices: &PriceSystem) -> f64 {
    -cfg.endowments.min_value(&prices.p) / prices.r
}

/// The savings cap Σ p_i b̄ / (1 − r)².
pub fn savings_cap(cfg: &EconomyConfig, prices: &PriceSystem) -> f64 {
    prices.price_sum() * cfg.b_bar() / ((1.0 - prices.r) * (1.0 - prices.r))
}

/// The wealth interval [a̲, ā]: a̲ = −min_y p·y / r and
/// ā = (1 + r)·cap + max_y p·y.
pub fn wealth_bounds(cfg: &EconomyConfig, prices: &PriceSystem) -> (f64, f64) {
    let lo = borrowing_limit(cfg, prices);
    let hi = (1.0 + prices.r) * savings_cap(cfg, prices) + cfg.endowments.max_value(&prices.p);
    (lo, hi)
}

/// Wealth bounds with the diagnostic cap on |a̲| applied: at very small r
/// the natural limit explodes and grid resolution per unit wealth
/// collapses, so the solver truncates it at 1e4 times the mean endowment
/// value. Returns (lo, hi, capped).
pub fn solver_wealth_bounds(cfg: &EconomyConfig, prices: &PriceSystem) -> (f64, f64, bool) {
    let (lo, hi) = wealth_bounds(cfg, prices);
    let floor = -1e4 * cfg.endowments.mean_value(&prices.p);
    if lo < floor {
        (floor, hi, true)
    } else {
        (lo, hi, false)
    }
}

/// Strictly increasing wealth nodes spanning [a̲, ā] with power-map
/// spacing so density concentrates near the borrowing limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthGrid {
    nodes: Vec<f64>,
}

impl WealthGrid {
    /// Nodes a_j = lo + (hi − lo)·(j/(N−1))^curvature, endpoints pinned
    /// bit-exactly.
    pub fn with_spacing(lo: f64, hi: f64, n: usize, curvature: f64) -> Result<Self> {
        if n < 2 {
            return Err(CseError::Config(format!("grid needs at least 2 nodes, got {n}")));
        }
        if !(hi > lo) {
            return Err(CseError::Config(format!(
                "grid bounds must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        if !(curvature > 0.0) {
            return Err(CseError::Config(format!(
                "grid curvature must be positive, got {curvature}"
            )));
        }
        let span = hi - lo;
        let mut nodes = Vec::with_capacity(n);
        nodes.push(lo);
        for j in 1..n - 1 {
            let t = (j as f64 / (n - 1) as f64).powf(curvature);
            nodes.push(lo + span * t);
        }
        nodes.push(hi);
        Ok(WealthGrid { nodes })
    }

    /// Wraps explicit nodes; they must be finite and strictly increasing.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(CseError::Config(format!(
                "grid needs at least 2 nodes, got {}",
                nodes.len()
            )));
        }
        if nodes.iter().any(|a| !a.is_finite())
            || nodes.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(CseError::Config(
                "grid nodes must be finite and strictly increasing".into(),
            ));
        }
        Ok(WealthGrid { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.nodes[0]
    }

    pub fn upper(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn max_cell_width(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Bracketing cell and lottery weight for `a`: returns (j, w) with
    /// a = (1−w)·nodes[j] + w·nodes[j+1], clamped to the grid.
    pub fn locate(&self, a: f64) -> (usize, f64) {
        let n = self.nodes.len();
        if a <= self.nodes[0] {
            return (0, 0.0);
        }
        if a >= self.nodes[n - 1] {
            return (n - 2, 1.0);
        }
        let j = match self.nodes.binary_search_by(|x| x.total_cmp(&a)) {
            Ok(j) => j.min(n - 2),
            Err(j) => j - 1,
        };
        let w = (a - self.nodes[j]) / (self.nodes[j + 1] - self.nodes[j]);
        (j, w.clamp(0.0, 1.0))
    }

    /// Piecewise-linear interpolation of nodal values, clamped to the grid.
    pub fn interp(&self, values: &[f64], a: f64) -> f64 {
        let (j, w) = self.locate(a);
        (1.0 - w) * values[j] + w * values[j + 1]
    }
}

/// The solver's grid over [a̲, ā] at the given prices. Rejects N < 50.
pub fn build_grid(
    cfg: &EconomyConfig,
    prices: &PriceSystem,
    n: usize,
    curvature: f64,
) -> Result<WealthGrid> {
    if n < 50 {
        return Err(CseError::Config(format!(
            "wealth grid needs at least 50 nodes, got {n}"
        )));
    }
    let (lo, hi, _) = solver_wealth_bounds(cfg, prices);
    WealthGrid::with_spacing(lo, hi, n, curvature)
}
