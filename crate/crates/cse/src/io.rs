//! Persistence: strict JSON config ingestion, equilibrium documents,
//! CSV sidecars for plotting, and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bellman::PolicySolution;
use crate::distribution::WealthDistribution;
use crate::economy::{validate_config, EconomyConfig, PriceSystem, WealthGrid};
use crate::equilibrium::{EquilibriumResult, TraceRow};
use crate::excess::{EdPart, ExcessDemand};
use crate::spreads::SpreadExperiment;
use crate::{CseError, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Reads and validates a config. Returns the config, its content hash,
/// and any non-fatal warnings; fatal violations are an error listing
/// every one of them. Unknown JSON fields are rejected.
pub fn load_config(path: &Path) -> Result<(EconomyConfig, String, Vec<String>)> {
    let bytes = std::fs::read(path)?;
    let cfg: EconomyConfig = serde_json::from_slice(&bytes)?;
    let violations = validate_config(&cfg);
    let (fatal, warnings): (Vec<_>, Vec<_>) = violations.into_iter().partition(|v| v.fatal);
    if !fatal.is_empty() {
        let msgs: Vec<String> = fatal.into_iter().map(|v| v.message).collect();
        return Err(CseError::Config(msgs.join("; ")));
    }
    Ok((
        cfg,
        sha256_hex(&bytes),
        warnings.into_iter().map(|v| v.message).collect(),
    ))
}

/// Serializable mirror of one solved agent block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartDoc {
    pub weight: f64,
    pub grid_nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub savings: Vec<f64>,
    pub consumption: Vec<f64>,
    /// None where the policy is non-interior.
    pub euler_residuals: Vec<Option<f64>>,
    pub dp_iterations: usize,
    pub dist_iterations: usize,
    pub sup_norm_gap: f64,
    pub borrowing_limit: f64,
    pub savings_cap: f64,
    pub borrowing_limit_capped: bool,
    pub mass: Vec<f64>,
}

/// The persisted equilibrium document. Policy and distribution are stored
/// inline (the CSVs are plot-friendly sidecars, not the source of truth).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumDoc {
    pub config_sha256: String,
    pub tolerance: f64,
    pub prices_normalized: PriceSystem,
    pub prices_numeraire: PriceSystem,
    pub residual: f64,
    pub zeta_goods: Vec<f64>,
    pub zeta_savings: f64,
    pub walras_residual: f64,
    pub cap_mass: f64,
    pub warnings: Vec<String>,
    pub trace: Vec<TraceRow>,
    pub parts: Vec<PartDoc>,
}

fn part_to_doc(part: &EdPart) -> PartDoc {
    PartDoc {
        weight: part.weight,
        grid_nodes: part.policy.grid.nodes().to_vec(),
        values: part.policy.values.clone(),
        savings: part.policy.savings.clone(),
        consumption: part.policy.consumption.clone(),
        euler_residuals: part
            .policy
            .euler_residuals
            .iter()
            .map(|e| if e.is_finite() { Some(*e) } else { None })
            .collect(),
        dp_iterations: part.policy.iterations,
        dist_iterations: part.dist_iterations,
        sup_norm_gap: part.policy.sup_norm_gap,
        borrowing_limit: part.policy.borrowing_limit,
        savings_cap: part.policy.savings_cap,
        borrowing_limit_capped: part.policy.borrowing_limit_capped,
        mass: part.distribution.mass.clone(),
    }
}

fn doc_to_part(doc: &PartDoc) -> Result<EdPart> {
    let grid = WealthGrid::from_nodes(doc.grid_nodes.clone())?;
    let policy = PolicySolution {
        grid: grid.clone(),
        values: doc.values.clone(),
        savings: doc.savings.clone(),
        consumption: doc.consumption.clone(),
        euler_residuals: doc
            .euler_residuals
            .iter()
            .map(|e| e.unwrap_or(f64::NAN))
            .collect(),
        iterations: doc.dp_iterations,
        sup_norm_gap: doc.sup_norm_gap,
        borrowing_limit: doc.borrowing_limit,
        savings_cap: doc.savings_cap,
        borrowing_limit_capped: doc.borrowing_limit_capped,
    };
    let distribution = WealthDistribution::new(grid, doc.mass.clone())?;
    Ok(EdPart {
        weight: doc.weight,
        policy,
        distribution,
        dist_iterations: doc.dist_iterations,
    })
}

pub fn equilibrium_to_doc(result: &EquilibriumResult, config_sha256: &str) -> EquilibriumDoc {
    EquilibriumDoc {
        config_sha256: config_sha256.to_string(),
        tolerance: result.tolerance,
        prices_normalized: result.prices_normalized.clone(),
        prices_numeraire: result.prices_numeraire.clone(),
        residual: result.residual,
        zeta_goods: result.excess.zeta_goods.clone(),
        zeta_savings: result.excess.zeta_savings,
        walras_residual: result.excess.walras_residual,
        cap_mass: result.cap_mass,
        warnings: result.warnings.clone(),
        trace: result.trace.clone(),
        parts: result.excess.parts.iter().map(part_to_doc).collect(),
    }
}

pub fn doc_to_equilibrium(doc: &EquilibriumDoc) -> Result<EquilibriumResult> {
    let parts: Vec<EdPart> = doc.parts.iter().map(doc_to_part).collect::<Result<_>>()?;
    let part0 = parts
        .first()
        .ok_or_else(|| CseError::Config("equilibrium document has no agent blocks".into()))?;
    let excess = ExcessDemand {
        zeta_goods: doc.zeta_goods.clone(),
        zeta_savings: doc.zeta_savings,
        walras_residual: doc.walras_residual,
        sup_norm: doc.residual,
        parts: parts.clone(),
    };
    Ok(EquilibriumResult {
        prices_normalized: doc.prices_normalized.clone(),
        prices_numeraire: doc.prices_numeraire.clone(),
        policy: part0.policy.clone(),
        distribution: part0.distribution.clone(),
        excess,
        residual: doc.residual,
        tolerance: doc.tolerance,
        trace: doc.trace.clone(),
        warnings: doc.warnings.clone(),
        cap_mass: doc.cap_mass,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_equilibrium(path: &Path) -> Result<EquilibriumDoc> {
    let bytes = std::fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.17e}")
    } else {
        String::new()
    }
}

/// Policy CSV: one row per wealth node with the value, savings,
/// consumption, per-good demand, and Euler residual.
pub fn write_policy_csv(
    path: &Path,
    cfg: &EconomyConfig,
    prices: &PriceSystem,
    policy: &PolicySolution,
) -> Result<()> {
    let shares = crate::demand::expenditure_shares(&cfg.utility, &prices.p)?;
    let mut out = String::from("a,value,savings,consumption");
    for i in 0..cfg.n {
        let _ = write!(out, ",x_{}", i + 1);
    }
    out.push_str(",euler_residual\n");
    for (j, &a) in policy.grid.nodes().iter().enumerate() {
        let _ = write!(
            out,
            "{},{},{},{}",
            fmt_num(a),
            fmt_num(policy.values[j]),
            fmt_num(policy.savings[j]),
            fmt_num(policy.consumption[j]),
        );
        for z in &shares {
            let _ = write!(out, ",{}", fmt_num(z * policy.consumption[j]));
        }
        let _ = writeln!(out, ",{}", fmt_num(policy.euler_residuals[j]));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Distribution CSV: node, mass, cumulative mass.
pub fn write_distribution_csv(path: &Path, dist: &WealthDistribution) -> Result<()> {
    let mut out = String::from("a,mass,cumulative_mass\n");
    let mut cum = 0.0;
    for (&a, &m) in dist.grid.nodes().iter().zip(&dist.mass) {
        cum += m;
        let _ = writeln!(out, "{},{},{}", fmt_num(a), fmt_num(m), fmt_num(cum));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Spread-experiment CSV: one row per magnitude with the solved rate,
/// numéraire price ratios, order-check flags, and any row error.
pub fn write_spread_csv(path: &Path, exp: &SpreadExperiment, n: usize) -> Result<()> {
    let mut out = String::from("s,r_star");
    for i in 1..n {
        let _ = write!(out, ",p{}_over_p1", i + 1);
    }
    out.push_str(",partial_savings,partial_icx_pass,equilibrium_cx_pass,error\n");
    for row in &exp.rows {
        let _ = write!(out, "{}", fmt_num(row.s));
        let _ = write!(out, ",{}", row.r_star.map(fmt_num).unwrap_or_default());
        for i in 1..n {
            let cell = row
                .price_ratios
                .as_ref()
                .map(|p| fmt_num(p[i]))
                .unwrap_or_default();
            let _ = write!(out, ",{cell}");
        }
        let _ = write!(
            out,
            ",{}",
            row.partial_savings.map(fmt_num).unwrap_or_default()
        );
        let flag = |o: &Option<crate::distribution::OrderReport>| {
            o.as_ref()
                .map(|r| if r.holds { "1" } else { "0" })
                .unwrap_or("")
                .to_string()
        };
        let _ = write!(out, ",{},{}", flag(&row.partial_icx), flag(&row.equilibrium_cx));
        let _ = writeln!(
            out,
            ",{}",
            row.error.as_deref().unwrap_or("").replace(['\n', ','], ";")
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Oracle residual field CSV: (p-ratio, r, sup-norm residual) per cell.
pub fn write_field_csv(path: &Path, field: &crate::oracle::OracleEquilibrium) -> Result<()> {
    let mut out = String::from("p2_over_p1,r,residual\n");
    for cell in &field.field {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_num(cell.ratio),
            fmt_num(cell.r),
            fmt_num(cell.residual)
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Provenance record for one CLI run. Every output file is listed; the
/// config hash is recomputable from the config file bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub tool_version: String,
    pub subcommand: String,
    pub options: BTreeMap<String, String>,
    pub wall_time_ms: u128,
    pub outputs: Vec<String>,
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    write_json(path, manifest)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let bytes = std::fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Checks that every output listed in the manifest still exists under
/// `dir`. Returns the missing paths.
pub fn manifest_missing_outputs(dir: &Path, manifest: &RunManifest) -> Vec<String> {
    manifest
        .outputs
        .iter()
        .filter(|name| !dir.join(name).exists())
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::tiny;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn config_round_trip_and_strictness() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        let cfg = tiny();
        std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
        let (loaded, hash, warnings) = load_config(&path).unwrap();
        assert_eq!(loaded, cfg);
        assert_eq!(hash.len(), 64);
        assert!(warnings.is_empty());

        // unknown fields are rejected
        let mut v: serde_json::Value =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        v["surprise"] = serde_json::json!(1);
        std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
        assert!(matches!(load_config(&path), Err(CseError::Json(_))));
    }

    #[test]
    fn fatal_violations_block_loading() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        let mut cfg = tiny();
        cfg.utility.gamma = Some(1.0);
        std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
        let err = load_config(&path).unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
    }

    #[test]
    fn equilibrium_document_round_trips() {
        use crate::equilibrium::{solve_equilibrium, SolveOptions};
        let cfg = tiny();
        let res = solve_equilibrium(&cfg, &SolveOptions::default()).unwrap();
        let doc = equilibrium_to_doc(&res, "deadbeef");
        let text = serde_json::to_string(&doc).unwrap();
        let back: EquilibriumDoc = serde_json::from_str(&text).unwrap();
        let rebuilt = doc_to_equilibrium(&back).unwrap();
        assert_eq!(rebuilt.prices_normalized, res.prices_normalized);
        assert_eq!(rebuilt.policy.values, res.policy.values);
        assert_eq!(rebuilt.distribution.mass, res.distribution.mass);
        assert_eq!(rebuilt.residual, res.residual);
    }

    #[test]
    fn manifest_detects_missing_outputs() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("keep.csv"), "x").unwrap();
        let manifest = RunManifest {
            config_sha256: "00".into(),
            tool_version: "0".into(),
            subcommand: "solve".into(),
            options: BTreeMap::new(),
            wall_time_ms: 1,
            outputs: vec!["keep.csv".into(), "gone.json".into()],
        };
        let missing = manifest_missing_outputs(dir.path(), &manifest);
        assert_eq!(missing, vec!["gone.json".to_string()]);
    }

    #[test]
    fn csv_writers_produce_headers_and_rows() {
        use crate::excess::{compute_excess_demand, EvalContext, EvalOptions};
        let cfg = tiny();
        let prices = PriceSystem::new(vec![0.45, 0.45], 0.05).unwrap();
        let ed =
            compute_excess_demand(&cfg, &prices, &EvalContext::new(), &EvalOptions::default())
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let ppath = dir.path().join("policy.csv");
        let dpath = dir.path().join("dist.csv");
        write_policy_csv(&ppath, &cfg, &prices, &ed.parts[0].policy).unwrap();
        write_distribution_csv(&dpath, &ed.parts[0].distribution).unwrap();
        let policy = std::fs::read_to_string(&ppath).unwrap();
        assert!(policy.starts_with("a,value,savings,consumption,x_1,x_2,euler_residual\n"));
        assert_eq!(policy.lines().count(), 61);
        let dist = std::fs::read_to_string(&dpath).unwrap();
        assert!(dist.starts_with("a,mass,cumulative_mass\n"));
        let last = dist.lines().last().unwrap();
        let cum: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
        assert!((cum - 1.0).abs() < 1e-9);
    }
}
