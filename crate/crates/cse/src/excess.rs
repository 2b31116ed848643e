//! The (n+1)-dimensional excess-demand function ζ(p, r): per-good
//! aggregate demand minus mean endowment, plus the negative of aggregate
//! savings. Accepts non-normalized prices so homogeneity is directly
//! testable; only the equilibrium solver insists on simplex membership.

use std::sync::Mutex;

use serde_json::json;

use crate::bellman::{solve_value_function, DpOptions, PolicySolution};
use crate::distribution::{aggregate, invariant_distribution, WealthDistribution};
use crate::economy::{build_grid, EconomyConfig, PriceSystem};
use crate::Result;

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub dp: DpOptions,
    pub dist_tol: f64,
    pub dist_max_iter: usize,
    /// Grid override; defaults to the config's grid spec.
    pub grid_points: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            dp: DpOptions::default(),
            dist_tol: 1e-12,
            dist_max_iter: 200_000,
            grid_points: None,
        }
    }
}

/// One agent population's solved block inside an excess-demand evaluation.
#[derive(Debug, Clone)]
pub struct EdPart {
    pub weight: f64,
    pub policy: PolicySolution,
    pub distribution: WealthDistribution,
    pub dist_iterations: usize,
}

/// ζ(p, r) with its diagnostics and the objects it was computed from.
#[derive(Debug, Clone)]
pub struct ExcessDemand {
    pub zeta_goods: Vec<f64>,
    pub zeta_savings: f64,
    pub walras_residual: f64,
    pub sup_norm: f64,
    pub parts: Vec<EdPart>,
}

impl ExcessDemand {
    pub fn dp_iterations(&self) -> usize {
        self.parts.iter().map(|p| p.policy.iterations).sum()
    }

    pub fn dist_iterations(&self) -> usize {
        self.parts.iter().map(|p| p.dist_iterations).sum()
    }

    /// One JSON line per evaluation, for structured logs.
    pub fn to_json_line(&self, prices: &PriceSystem) -> String {
        let mut zeta = self.zeta_goods.clone();
        zeta.push(self.zeta_savings);
        json!({
            "p": prices.p,
            "r": prices.r,
            "zeta": zeta,
            "walras": self.walras_residual,
            "dp_iters": self.dp_iterations(),
            "dist_iters": self.dist_iterations(),
        })
        .to_string()
    }
}

/// Σ p_i ζ_i + r ζ_{n+1}.
pub fn walras_residual(ed: &ExcessDemand, prices: &PriceSystem) -> f64 {
    prices
        .p
        .iter()
        .zip(&ed.zeta_goods)
        .map(|(p, z)| p * z)
        .sum::<f64>()
        + prices.r * ed.zeta_savings
}

struct CacheEntry {
    p: Vec<f64>,
    r: f64,
    type_idx: usize,
    nodes: Vec<f64>,
    values: Vec<f64>,
    mass: Vec<f64>,
}

/// Warm-start cache across ζ evaluations: the DP at each new (p, r) is
/// initialized from the nearest cached value function.
#[derive(Default)]
pub struct EvalContext {
    entries: Mutex<Vec<CacheEntry>>,
}

const CACHE_CAP: usize = 64;

impl EvalContext {
    pub fn new() -> Self {
        Self::default()
    }

    fn warm_start(&self, prices: &PriceSystem, type_idx: usize, nodes: &[f64]) -> Option<Vec<f64>> {
        let entries = self.entries.lock().unwrap();
        let best = entries
            .iter()
            .filter(|e| e.type_idx == type_idx && e.p.len() == prices.p.len())
            .min_by(|a, b| {
                let da = price_distance(&a.p, a.r, prices);
                let db = price_distance(&b.p, b.r, prices);
                da.total_cmp(&db)
            })?;
        let grid_lo = best.nodes[0];
        let grid_hi = *best.nodes.last().unwrap();
        Some(
            nodes
                .iter()
                .map(|&a| interp_sorted(&best.nodes, &best.values, a.clamp(grid_lo, grid_hi)))
                .collect(),
        )
    }

    /// Starting distribution interpolated (through the CDF, so mass is
    /// conserved across unequal cells) from the nearest cached evaluation.
    fn warm_start_mass(
        &self,
        prices: &PriceSystem,
        type_idx: usize,
        nodes: &[f64],
    ) -> Option<Vec<f64>> {
        let entries = self.entries.lock().unwrap();
        let best = entries
            .iter()
            .filter(|e| e.type_idx == type_idx && e.p.len() == prices.p.len())
            .min_by(|a, b| {
                let da = price_distance(&a.p, a.r, prices);
                let db = price_distance(&b.p, b.r, prices);
                da.total_cmp(&db)
            })?;
        let mut cdf = Vec::with_capacity(best.mass.len());
        let mut acc = 0.0;
        for m in &best.mass {
            acc += m;
            cdf.push(acc);
        }
        let mut out = Vec::with_capacity(nodes.len());
        let mut prev = 0.0;
        for &a in nodes {
            let c = interp_sorted(&best.nodes, &cdf, a).clamp(0.0, 1.0);
            out.push((c - prev).max(0.0));
            prev = c;
        }
        // whatever the cached CDF leaves above the new top node lands there
        if let Some(last) = out.last_mut() {
            *last += 1.0 - prev;
        }
        let s: f64 = out.iter().sum();
        if !(s > 0.0) {
            return None;
        }
        for m in out.iter_mut() {
            *m /= s;
        }
        Some(out)
    }

    fn insert(
        &self,
        prices: &PriceSystem,
        type_idx: usize,
        nodes: Vec<f64>,
        values: Vec<f64>,
        mass: Vec<f64>,
    ) {
        let mut entries = self.entries.lock().unwrap();
        let key = |x: f64| (x * 1e12).round();
        let same = |e: &CacheEntry| {
            e.type_idx == type_idx
                && key(e.r) == key(prices.r)
                && e.p.len() == prices.p.len()
                && e.p.iter().zip(&prices.p).all(|(a, b)| key(*a) == key(*b))
        };
        entries.retain(|e| !same(e));
        if entries.len() >= CACHE_CAP {
            entries.remove(0);
        }
        entries.push(CacheEntry {
            p: prices.p.clone(),
            r: prices.r,
            type_idx,
            nodes,
            values,
            mass,
        });
    }
}

fn price_distance(p: &[f64], r: f64, prices: &PriceSystem) -> f64 {
    p.iter()
        .zip(&prices.p)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        + (r - prices.r) * (r - prices.r)
}

fn interp_sorted(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let j = match xs.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(j) => return ys[j],
        Err(j) => j - 1,
    };
    let w = (x - xs[j]) / (xs[j + 1] - xs[j]);
    (1.0 - w) * ys[j] + w * ys[j + 1]
}

/// Solves the DP and invariant distribution for one (single-type) economy
/// at (p, r).
pub fn eval_part(
    cfg: &EconomyConfig,
    prices: &PriceSystem,
    ctx: &EvalContext,
    opts: &EvalOptions,
    type_idx: usize,
    weight: f64,
) -> Result<EdPart> {
    let n_points = opts.grid_points.unwrap_or(cfg.grid.n_points);
    let grid = build_grid(cfg, prices, n_points, cfg.grid.curvature)?;
    let init = ctx.warm_start(prices, type_idx, grid.nodes());
    let policy = solve_value_function(cfg, prices, &grid, &opts.dp, init.as_deref())?;
    let mu_start = ctx
        .warm_start_mass(prices, type_idx, grid.nodes())
        .map(|mass| WealthDistribution::new(grid.clone(), mass))
        .transpose()?;
    let inv =
        invariant_distribution(cfg, prices, &policy, opts.dist_tol, opts.dist_max_iter, mu_start)?;
    ctx.insert(
        prices,
        type_idx,
        grid.nodes().to_vec(),
        policy.values.clone(),
        inv.distribution.mass.clone(),
    );
    Ok(EdPart {
        weight,
        policy,
        distribution: inv.distribution,
        dist_iterations: inv.iterations,
    })
}

/// ζ(p, r). With ex-ante types the aggregates are φ(θ)-weighted sums
/// across per-type solves.
pub fn compute_excess_demand(
    cfg: &EconomyConfig,
    prices: &PriceSystem,
    ctx: &EvalContext,
    opts: &EvalOptions,
) -> Result<ExcessDemand> {
    prices.validate()?;
    if cfg.has_types() {
        return crate::typed::compute_excess_demand_typed(cfg, prices, ctx, opts);
    }
    let part = eval_part(cfg, prices, ctx, opts, 0, 1.0)?;
    let agg = aggregate(cfg, prices, &part.policy, &part.distribution)?;
    let zeta_goods: Vec<f64> = (0..cfg.n)
        .map(|i| agg.demand[i] - cfg.endowments.mean_good(i))
        .collect();
    let zeta_savings = -agg.savings;
    Ok(assemble(zeta_goods, zeta_savings, prices, vec![part]))
}

pub(crate) fn assemble(
    zeta_goods: Vec<f64>,
    zeta_savings: f64,
    prices: &PriceSystem,
    parts: Vec<EdPart>,
) -> ExcessDemand {
    let mut ed = ExcessDemand {
        sup_norm: 0.0,
        walras_residual: 0.0,
        zeta_goods,
        zeta_savings,
        parts,
    };
    ed.walras_residual = walras_residual(&ed, prices);
    ed.sup_norm = ed
        .zeta_goods
        .iter()
        .map(|z| z.abs())
        .fold(ed.zeta_savings.abs(), f64::max);
    ed
}
