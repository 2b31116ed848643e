//! Closed-form static demand system. For CES and Cobb-Douglas preferences
//! the demanded bundle is linear in total expenditure, x*(c, p) = c·z(p),
//! with price-dependent shares z(p), and the indirect utility has a CRRA
//! (resp. log) shape in expenditure.

use crate::economy::{UtilityKind, UtilitySpec};
use crate::{CseError, Result};

/// Static demand at one (c, p).
#[derive(Debug, Clone, PartialEq)]
pub struct DemandResult {
    /// z_i(p), normalized so Σ p_i z_i = 1.
    pub shares: Vec<f64>,
    /// x*(c, p) = c·z(p).
    pub bundle: Vec<f64>,
    /// CES: z(p) = Σ α_i z_i(p)^γ so that v(c, p) = c^γ·z(p).
    /// Cobb-Douglas: the additive constant Σ α_i ln z_i(p).
    pub indirect_utility_scale: f64,
}

/// Expenditure shares z(p). CES: z_i ∝ (α_i/p_i)^{1/(1−γ)} normalized so
/// Σ p_i z_i = 1; Cobb-Douglas: z_i = α_i/p_i. Computed in log space to
/// survive extreme prices or γ near 1.
pub fn expenditure_shares(utility: &UtilitySpec, p: &[f64]) -> Result<Vec<f64>> {
    check_prices(p)?;
    if p.len() != utility.alphas.len() {
        return Err(CseError::Config(format!(
            "price vector has {} entries, utility has {} alphas",
            p.len(),
            utility.alphas.len()
        )));
    }
    match utility.kind {
        UtilityKind::Ces => {
            let gamma = utility
                .gamma
                .ok_or_else(|| CseError::Config("CES utility missing gamma".into()))?;
            let inv = 1.0 / (1.0 - gamma);
            let logs: Vec<f64> = utility
                .alphas
                .iter()
                .zip(p)
                .map(|(a, pi)| inv * (a.ln() - pi.ln()))
                .collect();
            let m = logs.iter().fold(f64::NEG_INFINITY, |acc, &t| acc.max(t));
            let raw: Vec<f64> = logs.iter().map(|t| (t - m).exp()).collect();
            let denom: f64 = raw.iter().zip(p).map(|(w, pi)| w * pi).sum();
            Ok(raw.iter().map(|w| w / denom).collect())
        }
        UtilityKind::CobbDouglas => {
            // Σ p_i (α_i/p_i) = Σ α_i = 1 already.
            Ok(utility.alphas.iter().zip(p).map(|(a, pi)| a / pi).collect())
        }
    }
}

/// The demanded bundle x*(c, p) = c·z(p).
pub fn demand(utility: &UtilitySpec, c: f64, p: &[f64]) -> Result<Vec<f64>> {
    if !(c > 0.0) {
        return Err(CseError::Config(format!(
            "expenditure must be positive, got {c}"
        )));
    }
    Ok(expenditure_shares(utility, p)?
        .into_iter()
        .map(|z| c * z)
        .collect())
}

/// Full demand-system evaluation at one (c, p).
pub fn demand_result(utility: &UtilitySpec, c: f64, p: &[f64]) -> Result<DemandResult> {
    let shares = expenditure_shares(utility, p)?;
    if !(c > 0.0) {
        return Err(CseError::Config(format!(
            "expenditure must be positive, got {c}"
        )));
    }
    let bundle = shares.iter().map(|z| c * z).collect();
    let scale = indirect_scale(utility, &shares);
    Ok(DemandResult {
        shares,
        bundle,
        indirect_utility_scale: scale,
    })
}

fn indirect_scale(utility: &UtilitySpec, shares: &[f64]) -> f64 {
    match utility.kind {
        UtilityKind::Ces => {
            let g = utility.gamma.expect("validated CES has gamma");
            utility
                .alphas
                .iter()
                .zip(shares)
                .map(|(a, z)| a * z.powf(g))
                .sum()
        }
        UtilityKind::CobbDouglas => utility
            .alphas
            .iter()
            .zip(shares)
            .map(|(a, z)| a * z.ln())
            .sum(),
    }
}

/// Indirect utility v(c, p) and its marginal v'(c).
pub fn indirect_utility(utility: &UtilitySpec, c: f64, p: &[f64]) -> Result<(f64, f64)> {
    let iu = IndirectUtility::new(utility, p)?;
    if !(c > 0.0) {
        return Err(CseError::Config(format!(
            "expenditure must be positive, got {c}"
        )));
    }
    Ok((iu.value(c), iu.marginal(c)))
}

/// Indirect utility with the price-dependent pieces precomputed, for the
/// inner loops of the dynamic program.
#[derive(Debug, Clone)]
pub struct IndirectUtility {
    kind: UtilityKind,
    gamma: f64,
    /// CES: z(p); Cobb-Douglas: Σ α_i ln z_i(p).
    scale: f64,
}

impl IndirectUtility {
    pub fn new(utility: &UtilitySpec, p: &[f64]) -> Result<Self> {
        let shares = expenditure_shares(utility, p)?;
        Ok(IndirectUtility {
            kind: utility.kind,
            gamma: utility.gamma.unwrap_or(0.0),
            scale: indirect_scale(utility, &shares),
        })
    }

    /// v(c, p); caller guarantees c > 0.
    #[inline]
    pub fn value(&self, c: f64) -> f64 {
        match self.kind {
            UtilityKind::Ces => c.powf(self.gamma) * self.scale,
            UtilityKind::CobbDouglas => c.ln() + self.scale,
        }
    }

    /// v'(c, p).
    #[inline]
    pub fn marginal(&self, c: f64) -> f64 {
        match self.kind {
            UtilityKind::Ces => self.gamma * c.powf(self.gamma - 1.0) * self.scale,
            UtilityKind::CobbDouglas => 1.0 / c,
        }
    }
}

fn check_prices(p: &[f64]) -> Result<()> {
    if p.is_empty() || p.iter().any(|&pi| !(pi > 0.0) || !pi.is_finite()) {
        return Err(CseError::Config(format!(
            "prices must be strictly positive and finite, got {p:?}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::UtilitySpec;

    #[test]
    fn symmetric_ces_splits_evenly() {
        let u = UtilitySpec::ces(0.5, vec![0.5, 0.5]);
        let z = expenditure_shares(&u, &[1.0, 1.0]).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-15);
        assert!((z[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cobb_douglas_shares_are_alpha_over_price() {
        let u = UtilitySpec::cobb_douglas(vec![0.3, 0.7]);
        let z = expenditure_shares(&u, &[1.0, 2.0]).unwrap();
        assert!((z[0] - 0.3).abs() < 1e-15);
        assert!((z[1] - 0.35).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_ces_shares() {
        // γ=0.5 ⇒ z_i ∝ (α_i/p_i)², p=(1,4): raw (0.25, 1/128),
        // normalized against Σ p_i z_i ⇒ z = (0.8, 0.05).
        let u = UtilitySpec::ces(0.5, vec![0.5, 0.5]);
        let z = expenditure_shares(&u, &[1.0, 4.0]).unwrap();
        assert!((z[0] - 0.8).abs() < 1e-12);
        assert!((z[1] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn ces_indirect_utility_matches_direct_evaluation() {
        let u = UtilitySpec::ces(0.5, vec![0.5, 0.5]);
        let p = [1.0, 1.0];
        let (v, _) = indirect_utility(&u, 4.0, &p).unwrap();
        // z(p) = Σ α_i √z_i = √0.5, v = 4^0.5·z(p) = 2·0.70710678…
        assert!((v - 2.0 * 0.5f64.sqrt()).abs() < 1e-12);
        // and it equals U at the demanded bundle
        let x = demand(&u, 4.0, &p).unwrap();
        assert!((v - u.utility(&x)).abs() < 1e-12);
    }

    #[test]
    fn cobb_douglas_marginal_is_reciprocal() {
        let u = UtilitySpec::cobb_douglas(vec![0.4, 0.6]);
        let (_, vp) = indirect_utility(&u, 1.0, &[0.8, 2.3]).unwrap();
        assert!((vp - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ces_marginal_satisfies_inada_limits() {
        let u = UtilitySpec::ces(0.5, vec![0.5, 0.5]);
        let p = [1.0, 1.0];
        let (_, vp_small) = indirect_utility(&u, 1e-8, &p).unwrap();
        let (_, vp_big) = indirect_utility(&u, 1e8, &p).unwrap();
        assert!(vp_small > 1e3);
        assert!(vp_big < 1e-3);
    }

    #[test]
    fn rejects_bad_inputs() {
        let u = UtilitySpec::ces(0.5, vec![0.5, 0.5]);
        assert!(expenditure_shares(&u, &[1.0, 0.0]).is_err());
        assert!(expenditure_shares(&u, &[1.0, -2.0]).is_err());
        assert!(indirect_utility(&u, 0.0, &[1.0, 1.0]).is_err());
        assert!(demand(&u, -1.0, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn budget_exhaustion_on_random_draws() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for kind in 0..2 {
            for _ in 0..5000 {
                let gamma = 0.05 + 0.9 * next();
                let a0 = 0.05 + 0.9 * next();
                let alphas = vec![a0, 1.0 - a0];
                let u = if kind == 0 {
                    UtilitySpec::ces(gamma, alphas)
                } else {
                    UtilitySpec::cobb_douglas(alphas)
                };
                let p = [0.01 + 10.0 * next(), 0.01 + 10.0 * next()];
                let c = 0.01 + 100.0 * next();
                let x = demand(&u, c, &p).unwrap();
                let spent: f64 = p.iter().zip(&x).map(|(pi, xi)| pi * xi).sum();
                assert!(
                    (spent - c).abs() <= 1e-12 * c,
                    "budget violated: {spent} vs {c}"
                );
                assert!(x.iter().all(|&xi| xi > 0.0));
            }
        }
    }
}
