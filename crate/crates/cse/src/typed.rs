//! Ex-ante heterogeneity: finitely many agent types θ with population
//! weights φ(θ), each with its own preferences and endowment process.
//! Every type faces the same prices; aggregates are φ-weighted sums of
//! per-type aggregates.

use crate::distribution::aggregate;
use crate::economy::{EconomyConfig, PriceSystem};
use crate::excess::{assemble, eval_part, EvalContext, EvalOptions, ExcessDemand};
use crate::{CseError, Result};

/// ζ(p, r) for an economy with ex-ante types. Each type gets its own DP
/// and invariant distribution on its own wealth interval; supplies are
/// φ-weighted per-type mean endowments.
pub fn compute_excess_demand_typed(
    cfg: &EconomyConfig,
    prices: &PriceSystem,
    ctx: &EvalContext,
    opts: &EvalOptions,
) -> Result<ExcessDemand> {
    let types = cfg
        .types
        .as_ref()
        .filter(|t| !t.is_empty())
        .ok_or_else(|| CseError::Config("typed evaluation needs theta_types".into()))?;
    let mut zeta_goods = vec![0.0; cfg.n];
    let mut zeta_savings = 0.0;
    let mut parts = Vec::with_capacity(types.len());
    for (k, t) in types.iter().enumerate() {
        let sub = cfg.with_primitives(t.utility.clone(), t.endowments.clone());
        let part = eval_part(&sub, prices, ctx, opts, k, t.weight)?;
        let agg = aggregate(&sub, prices, &part.policy, &part.distribution)?;
        for i in 0..cfg.n {
            zeta_goods[i] += t.weight * (agg.demand[i] - sub.endowments.mean_good(i));
        }
        zeta_savings += t.weight * (-agg.savings);
        parts.push(part);
    }
    Ok(assemble(zeta_goods, zeta_savings, prices, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::TypeProfile;
    use crate::excess::compute_excess_demand;
    use crate::testutil::tiny;

    fn as_single_type(cfg: &EconomyConfig) -> EconomyConfig {
        let mut typed = cfg.clone();
        typed.types = Some(vec![TypeProfile {
            weight: 1.0,
            utility: cfg.utility.clone(),
            endowments: cfg.endowments.clone(),
        }]);
        typed
    }

    #[test]
    fn single_type_weight_one_matches_untyped_exactly() {
        let cfg = tiny();
        let typed = as_single_type(&cfg);
        let prices = PriceSystem::new(vec![0.45, 0.45], 0.05).unwrap();
        let opts = EvalOptions::default();
        let base = compute_excess_demand(&cfg, &prices, &EvalContext::new(), &opts).unwrap();
        let via_types = compute_excess_demand(&typed, &prices, &EvalContext::new(), &opts).unwrap();
        assert_eq!(base.zeta_goods, via_types.zeta_goods);
        assert_eq!(base.zeta_savings, via_types.zeta_savings);
        assert_eq!(base.walras_residual, via_types.walras_residual);
    }

    #[test]
    fn identical_types_match_the_pooled_economy() {
        // splitting one population into two identical types of weight 1/2
        // changes nothing but roundoff
        let cfg = tiny();
        let mut typed = cfg.clone();
        let profile = TypeProfile {
            weight: 0.5,
            utility: cfg.utility.clone(),
            endowments: cfg.endowments.clone(),
        };
        typed.types = Some(vec![profile.clone(), profile]);
        let prices = PriceSystem::new(vec![0.45, 0.45], 0.05).unwrap();
        let opts = EvalOptions::default();
        let base = compute_excess_demand(&cfg, &prices, &EvalContext::new(), &opts).unwrap();
        let split = compute_excess_demand(&typed, &prices, &EvalContext::new(), &opts).unwrap();
        for i in 0..cfg.n {
            assert!((base.zeta_goods[i] - split.zeta_goods[i]).abs() < 1e-12);
        }
        assert!((base.zeta_savings - split.zeta_savings).abs() < 1e-12);
    }

    #[test]
    fn typed_walras_law_holds_with_heterogeneous_types() {
        use crate::economy::{EndowmentProcess, UtilitySpec};
        let cfg = tiny();
        let mut typed = cfg.clone();
        typed.types = Some(vec![
            TypeProfile {
                weight: 0.6,
                utility: UtilitySpec::ces(0.5, vec![0.7, 0.3]),
                endowments: EndowmentProcess::new(
                    vec![vec![1.0, 2.0], vec![2.0, 4.0]],
                    vec![0.5, 0.5],
                ),
            },
            TypeProfile {
                weight: 0.4,
                utility: UtilitySpec::cobb_douglas(vec![0.4, 0.6]),
                endowments: cfg.endowments.clone(),
            },
        ]);
        let prices = PriceSystem::new(vec![0.5, 0.4], 0.04).unwrap();
        let ed =
            compute_excess_demand(&typed, &prices, &EvalContext::new(), &EvalOptions::default())
                .unwrap();
        assert!(
            ed.walras_residual.abs() < 1e-8,
            "walras residual {}",
            ed.walras_residual
        );
        // both types contributed a solved block
        assert_eq!(ed.parts.len(), 2);
        assert!((ed.parts[0].weight - 0.6).abs() < 1e-15);
    }

    #[test]
    fn missing_types_is_a_config_error() {
        let cfg = tiny();
        let prices = PriceSystem::new(vec![0.45, 0.45], 0.05).unwrap();
        let err = compute_excess_demand_typed(
            &cfg,
            &prices,
            &EvalContext::new(),
            &EvalOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CseError::Config(_)));
    }
}
