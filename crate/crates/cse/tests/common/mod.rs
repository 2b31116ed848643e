//! Shared fixtures for the integration suites.
#![allow(dead_code)]

use std::path::Path;
use std::process::Output;

use cse::economy::{EconomyConfig, EndowmentProcess, GridSpec, UtilitySpec};

/// The benchmark economy: 2 goods, symmetric CES, four endowment states.
pub fn benchmark() -> EconomyConfig {
    EconomyConfig {
        n: 2,
        beta: 0.95,
        endowments: EndowmentProcess::new(
            vec![
                vec![1.0, 1.0],
                vec![1.0, 3.0],
                vec![3.0, 1.0],
                vec![3.0, 3.0],
            ],
            vec![0.25, 0.25, 0.25, 0.25],
        ),
        utility: UtilitySpec::ces(0.5, vec![0.5, 0.5]),
        b_bar: None,
        grid: GridSpec::default(),
        types: None,
    }
}

/// The benchmark economy with Cobb-Douglas preferences.
pub fn benchmark_cobb_douglas() -> EconomyConfig {
    let mut cfg = benchmark();
    cfg.utility = UtilitySpec::cobb_douglas(vec![0.5, 0.5]);
    cfg
}

/// A tiny economy (2 goods, 2 endowment states, 60-node grid) small enough
/// for the brute-force oracles.
pub fn tiny() -> EconomyConfig {
    EconomyConfig {
        n: 2,
        beta: 0.95,
        endowments: EndowmentProcess::new(vec![vec![0.5, 0.5], vec![3.5, 3.5]], vec![0.5, 0.5]),
        utility: UtilitySpec::ces(0.5, vec![0.5, 0.5]),
        b_bar: Some(50.0),
        grid: GridSpec {
            n_points: 60,
            curvature: 1.7,
        },
        types: None,
    }
}

pub fn write_config(path: &Path, cfg: &EconomyConfig) {
    std::fs::write(path, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
}

/// Runs the installed `cse` binary with the given arguments.
pub fn run_cli(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_cse"))
        .args(args)
        .output()
        .expect("spawn cse binary")
}
