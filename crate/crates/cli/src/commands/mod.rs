use qfkernels::kernel::PointSet;
use qfkernels::pricing::gbm_scenarios;

use crate::config::ScenarioSource;
use crate::error::{CliError, Result};
use crate::io::{default_asset_names, read_timeseries};

pub mod backtest;
pub mod generate;
pub mod price_extrapolate;
pub mod reverse_stress;

/// Loads stress scenarios plus asset names. CSV rows are scenarios;
/// synthetic draws are geometric-Brownian terminal values at the horizon.
fn load_scenarios(
    source: &ScenarioSource,
    expected_dim: usize,
    horizon_days: u32,
    seed: u64,
) -> Result<(PointSet, Vec<String>)> {
    match source {
        ScenarioSource::Csv { path } => {
            let csv = read_timeseries(path)?;
            if csv.assets.len() != expected_dim {
                return Err(CliError::Data(format!(
                    "{}: {} asset columns, option has {} weights",
                    path.display(),
                    csv.assets.len(),
                    expected_dim
                )));
            }
            let points = PointSet::new(csv.series.values.transpose())
                .map_err(|e| CliError::Data(e.to_string()))?;
            Ok((points, csv.assets))
        }
        ScenarioSource::Gbm {
            spots,
            vols,
            drift,
            count,
        } => {
            if spots.len() != expected_dim || vols.len() != expected_dim {
                return Err(CliError::Config(format!(
                    "gbm spots/vols have {}/{} entries, option has {} weights",
                    spots.len(),
                    vols.len(),
                    expected_dim
                )));
            }
            let points = gbm_scenarios(spots, vols, *drift, horizon_days, *count, seed)
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok((points, default_asset_names(expected_dim)))
        }
    }
}
