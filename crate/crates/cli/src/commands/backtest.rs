//! Runs every configured strategy over one dataset and emits plot-ready
//! performance, turnover and weight-history files.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use qfkernels::portfolio::{backtest, BacktestConfig, PortfolioProblem};
use serde_json::json;

use crate::config::{BacktestCliConfig, StrategyConfig};
use crate::error::{config_err, CliError, Result};
use crate::io::{fmt_full, read_timeseries, write_json, write_table};

fn max_drawdown(performance: &[f64]) -> f64 {
    let mut peak: f64 = 1.0;
    let mut worst: f64 = 0.0;
    for &p in performance {
        peak = peak.max(p);
        worst = worst.max(1.0 - p / peak);
    }
    worst
}

fn step_volatility(performance: &[f64]) -> f64 {
    let mut prev = 1.0;
    let returns: Vec<f64> = performance
        .iter()
        .map(|&p| {
            let r = p / prev - 1.0;
            prev = p;
            r
        })
        .collect();
    if returns.len() < 2 {
        return 0.0;
    }
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    (returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (returns.len() - 1) as f64)
        .sqrt()
}

pub fn run(cfg: &BacktestCliConfig, out: &Path) -> Result<()> {
    if cfg.strategies.is_empty() {
        return Err(CliError::Config("no strategies configured".into()));
    }
    if !unique_labels(&cfg.strategies) {
        return Err(CliError::Config(
            "duplicate strategy labels; each strategy may appear once".into(),
        ));
    }
    let csv = read_timeseries(&cfg.input)?;
    let x = &csv.series;
    let d = x.assets();
    // the engine rebalances from step window+1 onward
    if cfg.window == 0 || cfg.window + 2 > x.len() {
        return Err(CliError::Config(format!(
            "window {} leaves no rebalancing steps in a series of {} observations",
            cfg.window,
            x.len()
        )));
    }

    let mut template = PortfolioProblem::new(
        DMatrix::identity(d, d),
        DVector::zeros(d),
        cfg.risk_appetite,
        cfg.cost_coeff,
    )
    .map_err(config_err)?
    .long_short();
    if let Some(limit) = cfg.box_limit {
        if !(limit > 0.0) {
            return Err(CliError::Config("box_limit must be positive".into()));
        }
        template.box_limit = Some(limit);
    }

    let mut performance_rows = Vec::new();
    let mut summaries = Vec::new();
    for strategy in &cfg.strategies {
        let result = backtest(
            x,
            &BacktestConfig {
                window: cfg.window,
                strategy: strategy.build(),
                same_time: cfg.same_time,
                seed: cfg.seed,
            },
            &template,
        )?;

        let dates: Vec<String> = result
            .timestamps
            .iter()
            .map(|&ts| csv.dates[ts as usize].format("%Y-%m-%d").to_string())
            .collect();
        for (i, date) in dates.iter().enumerate() {
            performance_rows.push(vec![
                date.clone(),
                strategy.label().to_owned(),
                fmt_full(result.performance[i]),
                fmt_full(result.turnover[i]),
            ]);
        }

        let mut header = vec!["date".to_owned()];
        header.extend(csv.assets.iter().cloned());
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let weight_rows: Vec<Vec<String>> = dates
            .iter()
            .enumerate()
            .map(|(i, date)| {
                let mut row = vec![date.clone()];
                row.extend((0..d).map(|j| fmt_full(result.weights[(i, j)])));
                row
            })
            .collect();
        write_table(
            &out.join(format!("weights_{}.csv", strategy.label())),
            &header_refs,
            &weight_rows,
        )?;

        summaries.push(json!({
            "strategy": strategy.label(),
            "terminal": result.terminal(),
            "max_drawdown": max_drawdown(&result.performance),
            "volatility": step_volatility(&result.performance),
            "turnover": result.realized_turnover(),
            "flagged_steps": result.flagged_steps.len(),
        }));
    }

    write_table(
        &out.join("performance.csv"),
        &["date", "strategy", "performance", "turnover"],
        &performance_rows,
    )?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "window": cfg.window,
            "same_time": cfg.same_time,
            "strategies": summaries,
        }),
    )
}

/// Strategy labels double as file-name stems; keep them collision-free.
pub fn unique_labels(strategies: &[StrategyConfig]) -> bool {
    let mut labels: Vec<&str> = strategies.iter().map(StrategyConfig::label).collect();
    labels.sort_unstable();
    labels.dedup();
    labels.len() == strategies.len()
}
