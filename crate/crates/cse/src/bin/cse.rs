//! Command-line front end. Exit codes: 0 success, 1 input error,
//! 2 numerical/solver failure, 3 verification failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cse::economy::{EconomyConfig, PriceSystem};
use cse::equilibrium::{solve_equilibrium, verify_cse, SolveOptions};
use cse::excess::{compute_excess_demand, EvalContext, EvalOptions};
use cse::io;
use cse::oracle::{oracle_equilibrium, OracleConfig};
use cse::spreads::{run_spread_experiment, SpreadScheme};
use cse::{CseError, Result};

const EXIT_OK: i32 = 0;
const EXIT_INPUT: i32 = 1;
const EXIT_NUMERICAL: i32 = 2;
const EXIT_VERIFICATION: i32 = 3;

/// Solver for competitive stationary equilibria of a multi-good
/// pure-exchange economy with idiosyncratic endowment risk and a
/// risk-free bond. Flags can also be set via CSE_* environment
/// variables (e.g. CSE_CONFIG, CSE_SEED).
#[derive(Parser)]
#[command(name = "cse", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Economy config (strict JSON).
    #[arg(long, env = "CSE_CONFIG")]
    config: PathBuf,

    /// Output directory.
    #[arg(long, env = "CSE_OUT", default_value = "out")]
    out: PathBuf,

    /// Equilibrium sup-norm tolerance override.
    #[arg(long, env = "CSE_TOL")]
    tol: Option<f64>,

    /// Seed for randomized sampling.
    #[arg(long, env = "CSE_SEED", default_value_t = 0)]
    seed: u64,

    /// Worker threads (this build computes sequentially; values > 1 are
    /// accepted for interface compatibility and do not change results).
    #[arg(long, env = "CSE_THREADS", default_value_t = 1)]
    threads: usize,

    /// Wealth-grid size override.
    #[arg(long, env = "CSE_GRID_POINTS")]
    grid_points: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve for the equilibrium and persist it.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Re-derive the four equilibrium conditions from a stored solve.
    Verify {
        #[command(flatten)]
        common: CommonArgs,

        /// Stored equilibrium JSON (defaults to <out>/equilibrium.json).
        #[arg(long)]
        equilibrium: Option<PathBuf>,
    },
    /// Mean-preserving-spread comparative statics.
    Compare {
        #[command(flatten)]
        common: CommonArgs,

        /// Comma-separated spread magnitudes.
        #[arg(long, env = "CSE_SPREADS", default_value = "0,0.1,0.2,0.3", value_delimiter = ',')]
        spreads: Vec<f64>,

        /// Spread construction: split_point or scale_about_mean.
        #[arg(long, default_value = "split_point")]
        scheme: String,
    },
    /// Property battery at randomized prices.
    Check {
        #[command(flatten)]
        common: CommonArgs,

        /// Number of randomized (p, r) samples.
        #[arg(long, default_value_t = 10)]
        samples: usize,
    },
    /// Exhaustive lattice search; exports the residual field.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,

        /// Lattice resolution per axis.
        #[arg(long, default_value_t = 200)]
        lattice: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CseError::Config(_) | CseError::Io(_) | CseError::Json(_) => EXIT_INPUT,
                CseError::NonConvergence { .. } | CseError::Internal(_) => EXIT_NUMERICAL,
            }
        }
    };
    std::process::exit(code);
}

fn load(common: &CommonArgs) -> Result<(EconomyConfig, String)> {
    let (mut cfg, hash, warnings) = io::load_config(&common.config)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    if common.threads == 0 {
        return Err(CseError::Config("--threads must be at least 1".into()));
    }
    if let Some(n) = common.grid_points {
        cfg.grid.n_points = n;
    }
    Ok((cfg, hash))
}

fn solve_options(common: &CommonArgs) -> SolveOptions {
    SolveOptions {
        tol: common.tol,
        ..SolveOptions::default()
    }
}

fn manifest_options(common: &CommonArgs, extra: &[(&str, String)]) -> BTreeMap<String, String> {
    let mut options = BTreeMap::new();
    options.insert("seed".into(), common.seed.to_string());
    options.insert("threads".into(), common.threads.to_string());
    if let Some(t) = common.tol {
        options.insert("tol".into(), format!("{t:e}"));
    }
    if let Some(g) = common.grid_points {
        options.insert("grid_points".into(), g.to_string());
    }
    for (k, v) in extra {
        options.insert((*k).into(), v.clone());
    }
    options
}

fn write_manifest(
    out: &Path,
    hash: &str,
    subcommand: &str,
    options: BTreeMap<String, String>,
    started: Instant,
    outputs: Vec<String>,
) -> Result<()> {
    let manifest = io::RunManifest {
        config_sha256: hash.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: subcommand.to_string(),
        options,
        wall_time_ms: started.elapsed().as_millis(),
        outputs,
    };
    io::write_manifest(&out.join("manifest.json"), &manifest)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Solve { common } => cmd_solve(&common),
        Cmd::Verify {
            common,
            equilibrium,
        } => cmd_verify(&common, equilibrium),
        Cmd::Compare {
            common,
            spreads,
            scheme,
        } => cmd_compare(&common, &spreads, &scheme),
        Cmd::Check { common, samples } => cmd_check(&common, samples),
        Cmd::Oracle { common, lattice } => cmd_oracle(&common, lattice),
    }
}

fn cmd_solve(common: &CommonArgs) -> Result<i32> {
    let started = Instant::now();
    let (cfg, hash) = load(common)?;
    std::fs::create_dir_all(&common.out)?;
    let res = solve_equilibrium(&cfg, &solve_options(common))?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    let doc = io::equilibrium_to_doc(&res, &hash);
    let mut outputs = vec!["equilibrium.json".to_string()];
    io::write_json(&common.out.join("equilibrium.json"), &doc)?;
    for (k, part) in res.excess.parts.iter().enumerate() {
        let (pname, dname) = if res.excess.parts.len() == 1 {
            ("policy.csv".to_string(), "distribution.csv".to_string())
        } else {
            (format!("policy_type{k}.csv"), format!("distribution_type{k}.csv"))
        };
        io::write_policy_csv(
            &common.out.join(&pname),
            &cfg,
            &res.prices_normalized,
            &part.policy,
        )?;
        io::write_distribution_csv(&common.out.join(&dname), &part.distribution)?;
        outputs.push(pname);
        outputs.push(dname);
    }
    write_manifest(
        &common.out,
        &hash,
        "solve",
        manifest_options(common, &[]),
        started,
        outputs,
    )?;
    println!(
        "equilibrium: r = {:.12}, p = {:?}, residual = {:.3e} (tol {:.3e})",
        res.prices_normalized.r, res.prices_normalized.p, res.residual, res.tolerance
    );
    Ok(if res.residual < res.tolerance {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    })
}

fn cmd_verify(common: &CommonArgs, equilibrium: Option<PathBuf>) -> Result<i32> {
    let (cfg, hash) = load(common)?;
    let eq_path = equilibrium.unwrap_or_else(|| common.out.join("equilibrium.json"));
    let doc = io::read_equilibrium(&eq_path)?;
    if doc.config_sha256 != hash {
        return Err(CseError::Config(format!(
            "config hash mismatch: equilibrium was solved from {}, got {}",
            doc.config_sha256, hash
        )));
    }
    if let Some(dir) = eq_path.parent() {
        let manifest_path = dir.join("manifest.json");
        if manifest_path.exists() {
            let manifest = io::read_manifest(&manifest_path)?;
            let missing = io::manifest_missing_outputs(dir, &manifest);
            if !missing.is_empty() {
                return Err(CseError::Config(format!(
                    "manifest lists outputs that are missing: {}",
                    missing.join(", ")
                )));
            }
        }
    }
    let res = io::doc_to_equilibrium(&doc)?;
    let report = verify_cse(&cfg, &res)?;
    println!("{:<55} {:>13} {:>10} {}", "condition", "residual", "tol", "pass");
    for c in &report.conditions {
        println!(
            "{:<55} {:>13.3e} {:>10.1e} {}",
            c.name, c.residual, c.tolerance, c.pass
        );
    }
    println!("walras residual: {:.3e}", report.walras_residual);
    Ok(if report.pass { EXIT_OK } else { EXIT_VERIFICATION })
}

fn cmd_compare(common: &CommonArgs, spreads: &[f64], scheme: &str) -> Result<i32> {
    let started = Instant::now();
    let (cfg, hash) = load(common)?;
    let scheme = match scheme {
        "split_point" => SpreadScheme::SplitPoint,
        "scale_about_mean" => SpreadScheme::ScaleAboutMean,
        other => {
            return Err(CseError::Config(format!(
                "unknown scheme {other:?}; use split_point or scale_about_mean"
            )))
        }
    };
    std::fs::create_dir_all(&common.out)?;
    let exp = run_spread_experiment(&cfg, spreads, scheme, &solve_options(common))?;
    if !exp.within_hypothesis {
        eprintln!(
            "warning: utility is outside the comparative-statics hypothesis \
             (needs CES); results are exploratory"
        );
    }
    io::write_spread_csv(&common.out.join("spreads.csv"), &exp, cfg.n)?;

    // Theorem-level checks across the table
    let solved: Vec<_> = exp.rows.iter().filter(|r| r.error.is_none()).collect();
    let rates: Vec<f64> = solved.iter().filter_map(|r| r.r_star).collect();
    let r_nonincreasing = rates.windows(2).all(|w| w[1] <= w[0] + 1e-5);
    let ratios_constant = solved
        .iter()
        .filter_map(|r| r.price_ratios.as_ref())
        .collect::<Vec<_>>()
        .windows(2)
        .all(|w| w[0].iter().zip(w[1]).all(|(a, b)| (a - b).abs() < 1e-5));
    let orders_pass = solved.iter().all(|r| {
        r.partial_icx.as_ref().is_some_and(|o| o.holds)
            && r.equilibrium_cx.as_ref().is_some_and(|o| o.holds)
    });
    let report = serde_json::json!({
        "header": exp.header,
        "within_hypothesis": exp.within_hypothesis,
        "r_nonincreasing": r_nonincreasing,
        "price_ratios_constant": ratios_constant,
        "order_checks_pass": orders_pass,
        "rows_solved": solved.len(),
        "rows_total": exp.rows.len(),
        "row_errors": exp.rows.iter().filter_map(|r| r.error.clone()).collect::<Vec<_>>(),
    });
    io::write_json(&common.out.join("spreads_report.json"), &report)?;
    write_manifest(
        &common.out,
        &hash,
        "compare",
        manifest_options(
            common,
            &[("spreads", format!("{spreads:?}")), ("scheme", format!("{scheme:?}"))],
        ),
        started,
        vec!["spreads.csv".into(), "spreads_report.json".into()],
    )?;
    for row in &exp.rows {
        match (&row.error, row.r_star) {
            (Some(e), _) => println!("s={:<6} error: {e}", row.s),
            (None, Some(r)) => println!("s={:<6} r*={r:.10}", row.s),
            _ => {}
        }
    }
    Ok(if orders_pass && r_nonincreasing && ratios_constant {
        EXIT_OK
    } else {
        EXIT_VERIFICATION
    })
}

fn sample_prices(cfg: &EconomyConfig, rng: &mut ChaCha8Rng) -> Result<PriceSystem> {
    let r_hi = (1.0 / cfg.beta - 1.0) - 1e-3;
    let r = rng.gen_range(0.005..r_hi.max(0.006));
    let raw: Vec<f64> = (0..cfg.n)
        .map(|_| -f64::ln(rng.gen_range(1e-12..1.0f64)))
        .collect();
    let scale = (1.0 - r) / raw.iter().sum::<f64>();
    PriceSystem::new(raw.iter().map(|x| x * scale).collect(), r)
}

fn cmd_check(common: &CommonArgs, samples: usize) -> Result<i32> {
    let started = Instant::now();
    let (cfg, hash) = load(common)?;
    std::fs::create_dir_all(&common.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let ctx = EvalContext::new();
    let opts = EvalOptions::default();
    let supply_total: f64 = (0..cfg.n)
        .map(|i| cse::equilibrium::supply(&cfg, i))
        .sum();
    let walras_tol = 1e-6 * supply_total.max(1.0);

    let mut lines: Vec<String> = Vec::new();
    let mut all_pass = true;
    let mut record = |name: &str, sample: usize, residual: f64, pass: bool, all: &mut bool| {
        *all &= pass;
        lines.push(format!(
            "{name:<28} sample {sample:>3}: residual {residual:>12.3e} {}",
            if pass { "pass" } else { "FAIL" }
        ));
    };

    for k in 0..samples {
        let prices = sample_prices(&cfg, &mut rng)?;
        let ed = compute_excess_demand(&cfg, &prices, &ctx, &opts)?;
        record(
            "walras",
            k,
            ed.walras_residual.abs(),
            ed.walras_residual.abs() < walras_tol,
            &mut all_pass,
        );
        for theta in [0.5, 2.0] {
            let ed_t = compute_excess_demand(&cfg, &prices.scaled(theta), &ctx, &opts)?;
            let goods_gap = ed
                .zeta_goods
                .iter()
                .zip(&ed_t.zeta_goods)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let savings_gap = (ed_t.zeta_savings - theta * ed.zeta_savings).abs();
            record(
                "homogeneity goods",
                k,
                goods_gap,
                goods_gap < 1e-5,
                &mut all_pass,
            );
            record(
                "homogeneity savings",
                k,
                savings_gap,
                savings_gap < 1e-5 * theta,
                &mut all_pass,
            );
        }
        for part in &ed.parts {
            let violations = part.policy.check_invariants();
            record(
                "policy shape",
                k,
                violations.len() as f64,
                violations.is_empty(),
                &mut all_pass,
            );
            // convergence from a second initialization
            let alt = cse::distribution::WealthDistribution::point_mass(
                part.policy.grid.clone(),
                part.policy.grid.upper(),
            );
            let sub = match &cfg.types {
                Some(_) => continue, // per-type prints handled via parts below
                None => &cfg,
            };
            let again = cse::distribution::invariant_distribution(
                sub,
                &prices,
                &part.policy,
                opts.dist_tol,
                opts.dist_max_iter,
                Some(alt),
            )?;
            let gap = part.distribution.l1_distance(&again.distribution);
            record(
                "distribution convergence",
                k,
                gap,
                gap < 1e-8,
                &mut all_pass,
            );
        }
    }
    let text = lines.join("\n") + "\n";
    print!("{text}");
    std::fs::write(common.out.join("check.txt"), &text)?;
    write_manifest(
        &common.out,
        &hash,
        "check",
        manifest_options(common, &[("samples", samples.to_string())]),
        started,
        vec!["check.txt".into()],
    )?;
    Ok(if all_pass { EXIT_OK } else { EXIT_VERIFICATION })
}

fn cmd_oracle(common: &CommonArgs, lattice: usize) -> Result<i32> {
    let started = Instant::now();
    let (cfg, hash) = load(common)?;
    std::fs::create_dir_all(&common.out)?;
    let oc = OracleConfig {
        price_lattice: lattice,
        max_nodes: common.grid_points.unwrap_or(cfg.grid.n_points).min(200),
        ..OracleConfig::default()
    };
    let out = oracle_equilibrium(&cfg, &oc)?;
    io::write_field_csv(&common.out.join("oracle_field.csv"), &out)?;
    let summary = serde_json::json!({
        "ratio": out.ratio,
        "r": out.r,
        "residual": out.residual,
        "ratio_cell": out.ratio_cell(),
        "r_cell": out.r_cell(),
    });
    io::write_json(&common.out.join("oracle.json"), &summary)?;
    write_manifest(
        &common.out,
        &hash,
        "oracle",
        manifest_options(common, &[("lattice", lattice.to_string())]),
        started,
        vec!["oracle_field.csv".into(), "oracle.json".into()],
    )?;
    println!(
        "oracle minimizer: p2/p1 = {:.8}, r = {:.8}, residual = {:.3e}",
        out.ratio, out.r, out.residual
    );
    Ok(EXIT_OK)
}
