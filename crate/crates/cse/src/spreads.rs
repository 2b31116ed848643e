//! Endowment-risk comparative statics: mean-preserving spreads of the
//! endowment process and the spread experiment (interest rate falls,
//! goods price ratios stay put, partial-equilibrium wealth risk rises).

use serde::{Deserialize, Serialize};

use crate::distribution::{
    aggregate, convex_order_geq, order_tolerance, OrderMode, OrderReport,
};
use crate::economy::{EconomyConfig, EndowmentProcess, PriceSystem, UtilityKind};
use crate::equilibrium::{solve_equilibrium, EquilibriumResult, SolveOptions};
use crate::excess::{eval_part, EvalContext, EvalOptions};
use crate::{CseError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadScheme {
    /// Each support point y with probability q splits into y(1−s) and
    /// y(1+s), each with probability q/2.
    SplitPoint,
    /// Support points move to ȳ + (1+s)(y − ȳ).
    ScaleAboutMean,
}

/// A mean-preserving spread of magnitude `s ≥ 0`. Whole support vectors
/// move, so the joint convex order is preserved by construction.
pub fn mean_preserving_spread(
    base: &EndowmentProcess,
    s: f64,
    scheme: SpreadScheme,
) -> Result<EndowmentProcess> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(CseError::Config(format!(
            "spread magnitude must be a finite s >= 0, got {s}"
        )));
    }
    if s == 0.0 {
        return Ok(base.clone());
    }
    let spread = match scheme {
        SpreadScheme::SplitPoint => {
            let mut support = Vec::with_capacity(2 * base.support.len());
            let mut probs = Vec::with_capacity(2 * base.probs.len());
            for (y, q) in base.support.iter().zip(&base.probs) {
                support.push(y.iter().map(|v| v * (1.0 - s)).collect());
                probs.push(q / 2.0);
                support.push(y.iter().map(|v| v * (1.0 + s)).collect());
                probs.push(q / 2.0);
            }
            EndowmentProcess::new(support, probs)
        }
        SpreadScheme::ScaleAboutMean => {
            let mean = base.mean_vector();
            let support = base
                .support
                .iter()
                .map(|y| {
                    y.iter()
                        .zip(&mean)
                        .map(|(v, m)| m + (1.0 + s) * (v - m))
                        .collect()
                })
                .collect();
            EndowmentProcess::new(support, base.probs.clone())
        }
    };
    if spread
        .support
        .iter()
        .any(|y| y.iter().any(|&v| !(v > 0.0)))
    {
        return Err(CseError::Config(format!(
            "spread s={s} ({scheme:?}) drives an endowment coordinate nonpositive"
        )));
    }
    Ok(spread)
}

/// E[max(X − t, 0)] for a discrete marginal given as (value, prob) pairs.
fn stop_loss(marginal: &[(f64, f64)], t: f64) -> f64 {
    marginal.iter().map(|(v, q)| q * (v - t).max(0.0)).sum()
}

/// Convex-order dominance of one discrete marginal over another, via the
/// stop-loss test battery plus mean equality.
pub fn marginal_cx_dominates(
    riskier: &[(f64, f64)],
    base: &[(f64, f64)],
    tol: f64,
) -> bool {
    let mean = |m: &[(f64, f64)]| m.iter().map(|(v, q)| v * q).sum::<f64>();
    if (mean(riskier) - mean(base)).abs() > tol {
        return false;
    }
    let mut thresholds: Vec<f64> = riskier
        .iter()
        .chain(base)
        .map(|(v, _)| *v)
        .collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds
        .iter()
        .all(|&t| stop_loss(riskier, t) >= stop_loss(base, t) - tol)
}

/// One row of the spread-experiment table.
#[derive(Debug, Clone)]
pub struct SpreadRow {
    pub s: f64,
    pub r_star: Option<f64>,
    /// Numéraire goods prices p_i / p_1 (p_1 = 1 first).
    pub price_ratios: Option<Vec<f64>>,
    /// μ(·; p₀, r₀, e_s) ⪰_I-CX μ(·; p₀, r₀, e₀) at the base equilibrium prices.
    pub partial_icx: Option<OrderReport>,
    /// Aggregate savings at the base prices under e_s (precautionary effect).
    pub partial_savings: Option<f64>,
    /// μ(·; p(e_s), r(e_s), e_s) ⪰_CX μ(·; p(e₀), r(e₀), e₀), both in
    /// numéraire units so means are comparable.
    pub equilibrium_cx: Option<OrderReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SpreadExperiment {
    /// Price comparisons use numéraire form p_1 = 1: the simplex
    /// normalization mixes r into goods prices, so "prices unchanged" is
    /// only meaningful as ratios.
    pub header: String,
    /// False when the utility lies outside the comparative-statics
    /// hypothesis (Cobb-Douglas); the run proceeds but is flagged.
    pub within_hypothesis: bool,
    pub scheme: SpreadScheme,
    pub base_prices: PriceSystem,
    pub rows: Vec<SpreadRow>,
}

fn partial_equilibrium_block(
    cfg: &EconomyConfig,
    prices: &PriceSystem,
) -> Result<(crate::distribution::WealthDistribution, f64)> {
    let part = eval_part(cfg, prices, &EvalContext::new(), &EvalOptions::default(), 0, 1.0)?;
    let agg = aggregate(cfg, prices, &part.policy, &part.distribution)?;
    Ok((part.distribution, agg.savings))
}

/// Solves the equilibrium for each spread magnitude and runs the
/// stochastic-order checks against the base (s = 0) economy. Rows record
/// their own failures; one bad row does not stop the table.
pub fn run_spread_experiment(
    cfg: &EconomyConfig,
    spreads: &[f64],
    scheme: SpreadScheme,
    opts: &SolveOptions,
) -> Result<SpreadExperiment> {
    if cfg.has_types() {
        return Err(CseError::Config(
            "spread experiments operate on single-type economies".into(),
        ));
    }
    let within_hypothesis = cfg.utility.kind == UtilityKind::Ces;
    let base_res: EquilibriumResult = solve_equilibrium(cfg, opts)?;
    let base_prices = base_res.prices_normalized.clone();
    // base blocks: partial-equilibrium μ at (p₀, r₀) is the equilibrium μ
    // itself; the numéraire-unit μ needs one extra solve
    let base_mu = base_res.distribution.clone();
    let base_savings = {
        let agg = aggregate(cfg, &base_prices, &base_res.policy, &base_mu)?;
        agg.savings
    };
    let (base_mu_num, _) = partial_equilibrium_block(cfg, &base_res.prices_numeraire)?;

    let mut rows = Vec::with_capacity(spreads.len());
    for &s in spreads {
        let row = (|| -> Result<SpreadRow> {
            let endowments = mean_preserving_spread(&cfg.endowments, s, scheme)?;
            let spread_cfg = cfg.with_primitives(cfg.utility.clone(), endowments);
            let res = solve_equilibrium(&spread_cfg, opts)?;
            let ratios = res.prices_numeraire.p.clone();

            let (pe_mu, pe_savings) = partial_equilibrium_block(&spread_cfg, &base_prices)?;
            let icx_tol = order_tolerance(&pe_mu, &base_mu);
            let partial_icx = convex_order_geq(&pe_mu, &base_mu, OrderMode::Icx, icx_tol);

            let (eq_mu_num, _) = partial_equilibrium_block(&spread_cfg, &res.prices_numeraire)?;
            let cx_tol = order_tolerance(&eq_mu_num, &base_mu_num);
            let equilibrium_cx =
                convex_order_geq(&eq_mu_num, &base_mu_num, OrderMode::Cx, cx_tol);

            Ok(SpreadRow {
                s,
                r_star: Some(res.prices_normalized.r),
                price_ratios: Some(ratios),
                partial_icx: Some(partial_icx),
                partial_savings: Some(pe_savings),
                equilibrium_cx: Some(equilibrium_cx),
                error: None,
            })
        })();
        rows.push(row.unwrap_or_else(|e| SpreadRow {
            s,
            r_star: None,
            price_ratios: None,
            partial_icx: None,
            partial_savings: None,
            equilibrium_cx: None,
            error: Some(e.to_string()),
        }));
    }
    // anchor rows at s = 0 to the base solve's own savings for exactness
    for row in rows.iter_mut().filter(|r| r.s == 0.0) {
        row.partial_savings = Some(base_savings);
    }
    Ok(SpreadExperiment {
        header: "price ratios reported in numéraire form (p_1 = 1); simplex \
                 normalization mixes r into goods prices"
            .into(),
        within_hypothesis,
        scheme,
        base_prices,
        rows,
    })
}
