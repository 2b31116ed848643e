//! Equilibrium solver: finds (p*, r*) on the simplex P with ζ(p*, r*) = 0.
//!
//! Nested scheme. The outer loop is a bracketed scalar root-find on
//! r ↦ ζ_{n+1}(p*(r), r). The inner loop, at fixed r, runs damped
//! tâtonnement p_i ← p_i·(1 + η·ζ_i/s_i) renormalized to Σp_i = 1 − r.
//! Because of Walras' law the goods residuals cannot all vanish at fixed r
//! unless ζ_{n+1} = 0; the inner fixed point is instead "ζ_i proportional
//! to supply s_i", and the common factor dies exactly at the outer root.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bellman::{apply_bellman, PolicySolution};
use crate::distribution::{apply_m, WealthDistribution};
use crate::economy::{normalize_prices, EconomyConfig, PriceSystem};
use crate::excess::{compute_excess_demand, EvalContext, EvalOptions, ExcessDemand};
use crate::{CseError, Result};

const CAP_MASS_WARN: f64 = 1e-6;
const CAP_MASS_ERROR: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Absolute ‖ζ‖∞ tolerance; defaults to 1e-6·max(1, Σ_i s_i).
    pub tol: Option<f64>,
    pub eval: EvalOptions,
    /// Initial tâtonnement damping; halved on oscillation.
    pub eta: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    /// r-bracket; defaults to [1e-3, (1/β − 1) − 1e-3].
    pub r_bracket: Option<(f64, f64)>,
    /// First interior r probe inside the bracket (randomized by the
    /// uniqueness probe).
    pub initial_r: Option<f64>,
    /// Initial goods-price direction (scaled onto Σp = 1 − r).
    pub initial_prices: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: None,
            eval: EvalOptions::default(),
            eta: 0.5,
            max_inner: 500,
            max_outer: 100,
            r_bracket: None,
            initial_r: None,
            initial_prices: None,
        }
    }
}

/// One outer evaluation in the iteration history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer: usize,
    pub r: f64,
    pub zeta_savings: f64,
    pub inner_iterations: usize,
    pub goods_dispersion: f64,
    pub eta: f64,
}

/// The full competitive-stationary-equilibrium object.
#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub prices_normalized: PriceSystem,
    pub prices_numeraire: PriceSystem,
    pub policy: PolicySolution,
    pub distribution: WealthDistribution,
    pub excess: ExcessDemand,
    /// ‖ζ‖∞ at the solution.
    pub residual: f64,
    pub tolerance: f64,
    pub trace: Vec<TraceRow>,
    pub warnings: Vec<String>,
    /// Stationary mass at the top grid node (cap-binding diagnostic).
    pub cap_mass: f64,
}

/// Per-good aggregate supply s_i, φ-weighted when types are present.
pub fn supply(cfg: &EconomyConfig, i: usize) -> f64 {
    match &cfg.types {
        Some(types) if !types.is_empty() => types
            .iter()
            .map(|t| t.weight * t.endowments.mean_good(i))
            .sum(),
        _ => cfg.endowments.mean_good(i),
    }
}

/// Default solver tolerance 1e-6·max(1, Σ_i s_i).
pub fn default_tolerance(cfg: &EconomyConfig) -> f64 {
    let total: f64 = (0..cfg.n).map(|i| supply(cfg, i)).sum();
    1e-6 * total.max(1.0)
}

fn r_bracket(cfg: &EconomyConfig, opts: &SolveOptions) -> (f64, f64) {
    opts.r_bracket
        .unwrap_or((1e-3, (1.0 / cfg.beta - 1.0) - 1e-3))
}

struct InnerSolve {
    prices: PriceSystem,
    excess: ExcessDemand,
    iterations: usize,
    dispersion: f64,
    eta: f64,
}

/// Damped tâtonnement at fixed r. Converges when every ζ_i sits within
/// `tol` of the common proportional-to-supply level κ̄·s_i that Walras'
/// law forces at fixed r.
fn inner_tatonnement(
    cfg: &EconomyConfig,
    r: f64,
    direction: &[f64],
    ctx: &EvalContext,
    opts: &SolveOptions,
    tol: f64,
) -> Result<InnerSolve> {
    let s: Vec<f64> = (0..cfg.n).map(|i| supply(cfg, i)).collect();
    let scale = (1.0 - r) / direction.iter().sum::<f64>();
    let mut p: Vec<f64> = direction.iter().map(|d| d * scale).collect();
    let mut eta = opts.eta;
    let mut prev_dev: Option<Vec<f64>> = None;
    let mut flip_streak = 0usize;
    let mut path: Vec<Vec<f64>> = Vec::new();
    for it in 1..=opts.max_inner {
        let prices = PriceSystem::new(p.clone(), r)?;
        let ed = compute_excess_demand(cfg, &prices, ctx, &opts.eval)?;
        // price-weighted common level: κ̄ = Σ p_i ζ_i / Σ p_i s_i
        let kappa: f64 = p.iter().zip(&ed.zeta_goods).map(|(pi, z)| pi * z).sum::<f64>()
            / p.iter().zip(&s).map(|(pi, si)| pi * si).sum::<f64>();
        let dev: Vec<f64> = ed
            .zeta_goods
            .iter()
            .zip(&s)
            .map(|(z, si)| z - kappa * si)
            .collect();
        let dispersion = dev.iter().map(|d| d.abs()).fold(0.0, f64::max);
        if dispersion < tol {
            return Ok(InnerSolve {
                prices,
                excess: ed,
                iterations: it,
                dispersion,
                eta,
            });
        }
        if let Some(prev) = &prev_dev {
            if dev.iter().zip(prev).any(|(d, q)| d * q < 0.0) {
                flip_streak += 1;
                if flip_streak >= 2 {
                    eta *= 0.5;
                    flip_streak = 0;
                }
            } else {
                flip_streak = 0;
            }
        }
        prev_dev = Some(dev.clone());
        for (pi, (d, si)) in p.iter_mut().zip(dev.iter().zip(&s)) {
            // factor floor keeps prices strictly positive under any ζ
            *pi *= (1.0 + eta * d / si).max(0.1);
        }
        let renorm = (1.0 - r) / p.iter().sum::<f64>();
        for pi in p.iter_mut() {
            *pi *= renorm;
        }
        path.push(p.clone());
    }
    let tail: Vec<&Vec<f64>> = path.iter().rev().take(5).collect();
    Err(CseError::NonConvergence {
        what: format!(
            "inner tâtonnement at r={r} (last prices, newest first: {tail:?})"
        ),
        gap: prev_dev
            .map(|d| d.iter().map(|x| x.abs()).fold(0.0, f64::max))
            .unwrap_or(f64::INFINITY),
        iterations: opts.max_inner,
    })
}

/// Solves for a CSE by the nested scheme. The outer bracket is validated
/// by sign (ζ_{n+1} must change sign across [r_lo, r_hi]); failure is a
/// first-class diagnostic carrying both endpoint values.
pub fn solve_equilibrium(cfg: &EconomyConfig, opts: &SolveOptions) -> Result<EquilibriumResult> {
    let fatal: Vec<String> = crate::economy::validate_config(cfg)
        .into_iter()
        .filter(|v| v.fatal)
        .map(|v| v.message)
        .collect();
    if !fatal.is_empty() {
        return Err(CseError::Config(fatal.join("; ")));
    }
    let tol = opts.tol.unwrap_or_else(|| default_tolerance(cfg));
    let (r_lo, r_hi) = r_bracket(cfg, opts);
    if !(r_lo > 0.0 && r_hi > r_lo && r_hi < 1.0) {
        return Err(CseError::Config(format!(
            "invalid r bracket [{r_lo}, {r_hi}]"
        )));
    }
    let ctx = EvalContext::new();
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut direction: Vec<f64> = opts
        .initial_prices
        .clone()
        .unwrap_or_else(|| vec![1.0; cfg.n]);
    if direction.len() != cfg.n || direction.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(CseError::Config(format!(
            "initial prices must be {} positive finite numbers",
            cfg.n
        )));
    }

    let mut outer = 0usize;
    let eval_at = |r: f64,
                       direction: &mut Vec<f64>,
                       trace: &mut Vec<TraceRow>,
                       outer: &mut usize|
     -> Result<InnerSolve> {
        *outer += 1;
        let inner = inner_tatonnement(cfg, r, direction, &ctx, opts, tol)?;
        *direction = inner.prices.p.clone();
        trace.push(TraceRow {
            outer: *outer,
            r,
            zeta_savings: inner.excess.zeta_savings,
            inner_iterations: inner.iterations,
            goods_dispersion: inner.dispersion,
            eta: inner.eta,
        });
        Ok(inner)
    };

    // bracket the root of r ↦ ζ_{n+1}(p*(r), r)
    let mut lo = r_lo;
    let mut hi = r_hi;
    let mut f_lo = eval_at(lo, &mut direction, &mut trace, &mut outer)?;
    if f_lo.excess.sup_norm < tol {
        return finish(cfg, f_lo, tol, trace);
    }
    let mut f_hi = eval_at(hi, &mut direction, &mut trace, &mut outer)?;
    if f_hi.excess.sup_norm < tol {
        return finish(cfg, f_hi, tol, trace);
    }
    if f_lo.excess.zeta_savings * f_hi.excess.zeta_savings > 0.0 {
        // optional interior probe, then a coarse scan, before giving up
        let mut probes: Vec<f64> = Vec::new();
        if let Some(r0) = opts.initial_r {
            if r0 > lo && r0 < hi {
                probes.push(r0);
            }
        }
        // ζ_{n+1} > 0 at both endpoints means aggregate savings is still
        // short at r_hi, so the root lies above: skip the interior scan
        let both_positive =
            f_lo.excess.zeta_savings > 0.0 && f_hi.excess.zeta_savings > 0.0;
        if !both_positive {
            probes.extend((1..8).map(|k| lo + (hi - lo) * k as f64 / 8.0));
        }
        let mut found = false;
        for r in probes {
            if r <= lo || r >= hi {
                continue;
            }
            let f = eval_at(r, &mut direction, &mut trace, &mut outer)?;
            if f.excess.sup_norm < tol {
                return finish(cfg, f, tol, trace);
            }
            if f.excess.zeta_savings * f_lo.excess.zeta_savings < 0.0 {
                hi = r;
                f_hi = f;
                found = true;
                break;
            }
            lo = r;
            f_lo = f;
        }
        // the root can sit between r_hi and 1/β − 1 (savings turn positive
        // only as wealth piles toward the cap): push the top endpoint
        // geometrically toward 1/β − 1 until the sign flips
        let r_sup = 1.0 / cfg.beta - 1.0;
        if !found && hi < r_sup {
            let mut gap = r_sup - hi;
            while gap > 1e-7 && outer < opts.max_outer {
                gap *= 0.5;
                let r = r_sup - gap;
                let f = eval_at(r, &mut direction, &mut trace, &mut outer)?;
                if f.excess.sup_norm < tol {
                    return finish(cfg, f, tol, trace);
                }
                lo = hi;
                f_lo = std::mem::replace(&mut f_hi, f);
                hi = r;
                if f_hi.excess.zeta_savings * f_lo.excess.zeta_savings < 0.0 {
                    found = true;
                    break;
                }
            }
        }
        if !found {
            return Err(CseError::NonConvergence {
                what: format!(
                    "r bracket failure: ζ_savings has the same sign at both endpoints \
                     (ζ_savings({r_lo}) = {:.6e}, ζ_savings({r_hi}) = {:.6e}); \
                     scan trace: {:?}",
                    f_lo.excess.zeta_savings,
                    f_hi.excess.zeta_savings,
                    trace
                        .iter()
                        .map(|t| (t.r, t.zeta_savings))
                        .collect::<Vec<_>>()
                ),
                gap: f_hi.excess.zeta_savings.abs(),
                iterations: outer,
            });
        }
    } else if let Some(r0) = opts.initial_r {
        // honor a randomized interior start by splitting the bracket there
        if r0 > lo && r0 < hi {
            let f = eval_at(r0, &mut direction, &mut trace, &mut outer)?;
            if f.excess.sup_norm < tol {
                return finish(cfg, f, tol, trace);
            }
            if f.excess.zeta_savings * f_lo.excess.zeta_savings < 0.0 {
                hi = r0;
                f_hi = f;
            } else {
                lo = r0;
                f_lo = f;
            }
        }
    }

    // Illinois false-position with bisection safeguard
    let mut side = 0i8;
    let mut w_lo = f_lo.excess.zeta_savings;
    let mut w_hi = f_hi.excess.zeta_savings;
    while outer < opts.max_outer {
        let mut r = hi - w_hi * (hi - lo) / (w_hi - w_lo);
        let margin = 0.01 * (hi - lo);
        if !r.is_finite() || r <= lo + margin || r >= hi - margin {
            r = 0.5 * (lo + hi);
        }
        let f = eval_at(r, &mut direction, &mut trace, &mut outer)?;
        if f.excess.sup_norm < tol {
            return finish(cfg, f, tol, trace);
        }
        if f.excess.zeta_savings * f_lo.excess.zeta_savings < 0.0 {
            hi = r;
            w_hi = f.excess.zeta_savings;
            f_hi = f;
            if side == -1 {
                w_lo *= 0.5;
            }
            side = -1;
        } else {
            lo = r;
            w_lo = f.excess.zeta_savings;
            f_lo = f;
            if side == 1 {
                w_hi *= 0.5;
            }
            side = 1;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let best = if f_lo.excess.sup_norm <= f_hi.excess.sup_norm {
        f_lo
    } else {
        f_hi
    };
    Err(CseError::NonConvergence {
        what: format!(
            "outer root-find on r: residual {:.3e} > tol {:.3e} at r={}",
            best.excess.sup_norm, tol, best.prices.r
        ),
        gap: best.excess.sup_norm,
        iterations: outer,
    })
}

fn finish(
    cfg: &EconomyConfig,
    inner: InnerSolve,
    tol: f64,
    trace: Vec<TraceRow>,
) -> Result<EquilibriumResult> {
    let prices_normalized = normalize_prices(&inner.prices);
    let prices_numeraire = prices_normalized.numeraire();
    let mut warnings: Vec<String> = Vec::new();
    let cap_mass = inner
        .excess
        .parts
        .iter()
        .map(|part| {
            part.weight * part.distribution.mass.last().copied().unwrap_or(0.0)
        })
        .sum::<f64>();
    if cap_mass > CAP_MASS_ERROR {
        return Err(CseError::NonConvergence {
            what: format!(
                "savings cap binds: stationary mass {cap_mass:.3e} at the top wealth node \
                 exceeds {CAP_MASS_ERROR:.0e}"
            ),
            gap: cap_mass,
            iterations: trace.len(),
        });
    }
    if cap_mass > CAP_MASS_WARN {
        warnings.push(format!(
            "savings cap nearly binds: stationary mass {cap_mass:.3e} at the top wealth node"
        ));
    }
    for part in &inner.excess.parts {
        if part.policy.borrowing_limit_capped {
            warnings.push("natural borrowing limit truncated for grid resolution".into());
        }
    }
    let part0 = inner
        .excess
        .parts
        .first()
        .ok_or_else(|| CseError::Internal("equilibrium solve produced no agent block".into()))?;
    if !cfg.has_types() {
        debug_assert_eq!(inner.excess.parts.len(), 1);
    }
    Ok(EquilibriumResult {
        prices_normalized,
        prices_numeraire,
        policy: part0.policy.clone(),
        distribution: part0.distribution.clone(),
        residual: inner.excess.sup_norm,
        tolerance: tol,
        trace,
        warnings,
        cap_mass,
        excess: inner.excess,
    })
}

/// One re-derived Definition-1 condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub conditions: Vec<ConditionReport>,
    pub walras_residual: f64,
    pub pass: bool,
}

/// Re-derives the four equilibrium conditions from scratch at the stored
/// prices: (i) Bellman-residual policy optimality, (ii) stationarity of μ
/// under M, (iii) goods clearing, (iv) bond clearing. Independent of the
/// solve trace.
pub fn verify_cse(cfg: &EconomyConfig, result: &EquilibriumResult) -> Result<VerificationReport> {
    let prices = &result.prices_normalized;
    prices.validate()?;
    let tol = result.tolerance;

    // (iii)/(iv): fresh excess-demand evaluation, cold cache; an evaluation
    // that blows up (e.g. on tampered inputs) is a failed condition, not an
    // abort
    let (goods_residual, bond_residual, walras) =
        match compute_excess_demand(cfg, prices, &EvalContext::new(), &EvalOptions::default()) {
            Ok(ed) => (
                ed.zeta_goods.iter().map(|z| z.abs()).fold(0.0, f64::max),
                ed.zeta_savings.abs(),
                ed.walras_residual,
            ),
            Err(_) => (f64::INFINITY, f64::INFINITY, f64::INFINITY),
        };

    // (i): one Bellman application to the stored values must not move them
    let mut bellman_residual = 0.0f64;
    let mut stationarity_residual = 0.0f64;
    let type_cfgs: Vec<EconomyConfig> = match &cfg.types {
        Some(types) if !types.is_empty() => types
            .iter()
            .map(|t| cfg.with_primitives(t.utility.clone(), t.endowments.clone()))
            .collect(),
        _ => vec![cfg.clone()],
    };
    let stored_parts: Vec<(&PolicySolution, &WealthDistribution)> = if result.excess.parts.len()
        == type_cfgs.len()
    {
        result
            .excess
            .parts
            .iter()
            .map(|p| (&p.policy, &p.distribution))
            .collect()
    } else {
        vec![(&result.policy, &result.distribution)]
    };
    for (sub, (policy, mu)) in type_cfgs.iter().zip(&stored_parts) {
        let gap = match apply_bellman(sub, prices, &policy.grid, &policy.values) {
            Ok((tv, _)) => tv
                .iter()
                .zip(&policy.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
            Err(_) => f64::INFINITY,
        };
        bellman_residual = bellman_residual.max(gap);
        let step = match apply_m(sub, prices, policy, mu) {
            Ok(m_mu) => mu.l1_distance(&m_mu),
            Err(_) => f64::INFINITY,
        };
        stationarity_residual = stationarity_residual.max(step);
    }
    let bellman_tol = EvalOptions::default().dp.tol;
    let stationarity_tol = 1e2 * EvalOptions::default().dist_tol;

    let conditions = vec![
        ConditionReport {
            name: "(i) policy optimality (sup-norm Bellman residual)".into(),
            residual: bellman_residual,
            tolerance: bellman_tol,
            pass: bellman_residual < bellman_tol,
        },
        ConditionReport {
            name: "(ii) stationarity (L1 residual of M)".into(),
            residual: stationarity_residual,
            tolerance: stationarity_tol,
            pass: stationarity_residual < stationarity_tol,
        },
        ConditionReport {
            name: "(iii) goods market clearing (max |zeta_i|)".into(),
            residual: goods_residual,
            tolerance: tol,
            pass: goods_residual < tol,
        },
        ConditionReport {
            name: "(iv) bond market clearing (|zeta_savings|)".into(),
            residual: bond_residual,
            tolerance: tol,
            pass: bond_residual < tol,
        },
    ];
    let pass = conditions.iter().all(|c| c.pass) && prices.is_normalized();
    Ok(VerificationReport {
        conditions,
        walras_residual: walras,
        pass,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniquenessReport {
    /// Normalized (p, r) per successful start.
    pub solutions: Vec<PriceSystem>,
    pub failures: Vec<String>,
    pub clusters: usize,
    pub resolution: f64,
}

/// Runs the solver from `n_starts` randomized initial configurations
/// (random price direction; random interior r splitting the bracket) and
/// clusters the solutions at 1e-5 sup-norm resolution.
pub fn uniqueness_probe(
    cfg: &EconomyConfig,
    n_starts: usize,
    seed: u64,
    base: &SolveOptions,
) -> Result<UniquenessReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r_lo, r_hi) = r_bracket(cfg, base);
    let mut solutions: Vec<PriceSystem> = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    for k in 0..n_starts {
        // exponential draws normalized: uniform direction on the simplex
        let direction: Vec<f64> = (0..cfg.n)
            .map(|_| -f64::ln(rng.gen_range(1e-12..1.0f64)))
            .collect();
        let r0 = r_lo + (r_hi - r_lo) * rng.gen_range(0.1..0.9);
        let opts = SolveOptions {
            initial_prices: Some(direction),
            initial_r: Some(r0),
            ..base.clone()
        };
        match solve_equilibrium(cfg, &opts) {
            Ok(res) => solutions.push(res.prices_normalized),
            Err(e) => failures.push(format!("start {k}: {e}")),
        }
    }
    let resolution = 1e-5;
    let mut reps: Vec<&PriceSystem> = Vec::new();
    for s in &solutions {
        let close = reps.iter().any(|r| {
            let dp = r
                .p
                .iter()
                .zip(&s.p)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            dp.max((r.r - s.r).abs()) <= resolution
        });
        if !close {
            reps.push(s);
        }
    }
    let clusters = reps.len();
    Ok(UniquenessReport {
        solutions,
        failures,
        clusters,
        resolution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::tiny;

    fn solve_tiny() -> EquilibriumResult {
        solve_equilibrium(&tiny(), &SolveOptions::default()).unwrap()
    }

    #[test]
    fn tiny_equilibrium_clears_all_markets() {
        let cfg = tiny();
        let res = solve_tiny();
        assert!(res.residual < res.tolerance);
        assert!(res.prices_normalized.is_normalized());
        for i in 0..cfg.n {
            let demand = supply(&cfg, i) + res.excess.zeta_goods[i];
            assert!((demand - supply(&cfg, i)).abs() < res.tolerance);
        }
        assert!(res.excess.zeta_savings.abs() < res.tolerance);
        // symmetric economy: equal goods prices
        assert!(
            (res.prices_normalized.p[0] - res.prices_normalized.p[1]).abs() < 1e-6,
            "p = {:?}",
            res.prices_normalized.p
        );
        // numéraire form has p_1 = 1 and the same ratios
        assert_eq!(res.prices_numeraire.p[0], 1.0);
        assert!(
            (res.prices_numeraire.p[1]
                - res.prices_normalized.p[1] / res.prices_normalized.p[0])
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn aggregate_resources_identity_at_the_solution() {
        // mean wealth = Σ e(y) p·y once the bond clears
        let cfg = tiny();
        let res = solve_tiny();
        let mean_wealth = res.distribution.mean();
        let endow_value = cfg.endowments.mean_value(&res.prices_normalized.p);
        assert!(
            (mean_wealth - endow_value).abs() < 1e-4,
            "mean wealth {mean_wealth} vs endowment value {endow_value}"
        );
    }

    #[test]
    fn trace_brackets_the_root_in_savings_sign() {
        let res = solve_tiny();
        // somewhere along the trace the savings residual changes sign
        let has_pos = res.trace.iter().any(|t| t.zeta_savings > 0.0);
        let has_neg = res.trace.iter().any(|t| t.zeta_savings < 0.0);
        assert!(
            has_pos && has_neg,
            "trace: {:?}",
            res.trace
                .iter()
                .map(|t| (t.r, t.zeta_savings))
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn verify_passes_on_a_fresh_solve_and_flags_tampering() {
        let cfg = tiny();
        let res = solve_tiny();
        let report = verify_cse(&cfg, &res).unwrap();
        assert!(report.pass, "report: {report:?}");
        assert!(report.walras_residual.abs() < 1e-8);

        // perturbing r must break condition (iv)
        let mut tampered = res.clone();
        tampered.prices_normalized.r += 0.01;
        let report = verify_cse(&cfg, &tampered).unwrap();
        assert!(!report.conditions[3].pass, "report: {report:?}");
        assert!(!report.pass);
    }

    #[test]
    fn perturbed_distribution_fails_stationarity() {
        let cfg = tiny();
        let res = solve_tiny();
        let mut tampered = res.clone();
        // move 1% of mass to the top node
        let n = tampered.distribution.mass.len();
        for m in tampered.distribution.mass.iter_mut() {
            *m *= 0.99;
        }
        tampered.distribution.mass[n - 1] += 0.01;
        tampered.excess.parts.clear(); // force verify to use the stored block
        let report = verify_cse(&cfg, &tampered).unwrap();
        assert!(!report.conditions[1].pass);
        assert!(
            report.conditions[1].residual < 0.05,
            "one application of M moves the perturbation by at most ~2·1%"
        );
    }

    #[test]
    fn solution_invariant_to_starting_direction() {
        let cfg = tiny();
        let res = solve_tiny();
        let opts = SolveOptions {
            initial_prices: Some(vec![5.0, 1.0]),
            initial_r: Some(0.02),
            ..SolveOptions::default()
        };
        let res2 = solve_equilibrium(&cfg, &opts).unwrap();
        for i in 0..cfg.n {
            assert!(
                (res.prices_normalized.p[i] - res2.prices_normalized.p[i]).abs() < 1e-5
            );
        }
        assert!((res.prices_normalized.r - res2.prices_normalized.r).abs() < 1e-5);
    }

    #[test]
    fn uniqueness_probe_finds_one_cluster_on_tiny() {
        let cfg = tiny();
        let report = uniqueness_probe(&cfg, 3, 7, &SolveOptions::default()).unwrap();
        assert!(report.failures.is_empty(), "failures: {:?}", report.failures);
        assert_eq!(report.clusters, 1);
        assert_eq!(report.solutions.len(), 3);
    }

    #[test]
    fn bad_bracket_is_a_config_error() {
        let cfg = tiny();
        let opts = SolveOptions {
            r_bracket: Some((0.5, 0.1)),
            ..SolveOptions::default()
        };
        assert!(matches!(
            solve_equilibrium(&cfg, &opts),
            Err(CseError::Config(_))
        ));
    }
}
