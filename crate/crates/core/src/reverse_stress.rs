//! Reverse stress testing: invert the PnL map p -> x with a permuted kernel
//! decoder and benchmark the round-trip pricing error in basis points.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::encoding::{fit_encoder, generate, Encoder, LatentSpec, PermutationStrategy};
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, PointSet};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Smooth representative of the preimage map p -> x. Many scenarios can
/// share a PnL; the decoder returns one smooth pick, not the preimage set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReverseStressModel {
    pub decoder: Encoder,
    /// Normalization for bps reporting, typically the option strike or the
    /// book notional. Changing it rescales every headline error number.
    pub scale: f64,
}

/// Fits the decoder from PnL rows `p` (N x D_p) to scenario rows `x`.
pub fn fit_reverse(
    spec: &KernelSpec,
    x: &PointSet,
    p: &DMatrix<f64>,
    strategy: PermutationStrategy,
    scale: f64,
) -> Result<ReverseStressModel> {
    if !(scale > 0.0) {
        return Err(Error::InvalidParam(format!(
            "bps scale must be positive, got {scale}"
        )));
    }
    if p.nrows() != x.len() {
        return Err(Error::size(x.len(), p.nrows(), "scenario/PnL pairs"));
    }
    let inputs = PointSet::new(p.clone())?;
    let decoder = fit_encoder(spec, &inputs, x.matrix(), strategy)?;
    Ok(ReverseStressModel { decoder, scale })
}

impl ReverseStressModel {
    /// Scenario estimate for a PnL vector.
    pub fn invert(&self, p: &[f64]) -> Result<Vec<f64>> {
        let x = self.decoder.apply_point(p)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reverse stress inversion"));
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RstSummary {
    pub median_bps: f64,
    pub p95_bps: f64,
    /// Signed errors in sample order.
    pub errors_bps: Vec<f64>,
    /// (bin_left, bin_right, count) over the absolute errors.
    pub histogram: Vec<(f64, f64, usize)>,
}

/// Generates n PnL samples, inverts each to a scenario, reprices it, and
/// summarizes (P(x_hat) - p) / scale in basis points. Medians and p95 are
/// over absolute errors.
pub fn rst_benchmark<F>(
    model: &ReverseStressModel,
    generator: &Encoder,
    latent: &LatentSpec,
    pricer: F,
    n: usize,
    seed: u64,
) -> Result<RstSummary>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if generator.output_dim() != model.decoder.input_dim() {
        return Err(Error::dim(
            model.decoder.input_dim(),
            generator.output_dim(),
            "generator PnL dimension",
        ));
    }
    if n == 0 {
        return Ok(RstSummary {
            median_bps: 0.0,
            p95_bps: 0.0,
            errors_bps: Vec::new(),
            histogram: Vec::new(),
        });
    }
    if model.decoder.input_dim() != 1 {
        return Err(Error::InvalidParam(format!(
            "benchmark reprices a scalar PnL, decoder consumes {} values",
            model.decoder.input_dim()
        )));
    }

    let samples = generate(generator, &latent.with_seed(latent.seed ^ seed), n)?;
    let one = |i: usize| -> Result<f64> {
        let p_bar = samples[(i, 0)];
        let x_hat = model.invert(&[p_bar])?;
        let repriced = pricer(&x_hat).map_err(|e| Error::PricerFailure {
            index: i,
            message: e.to_string(),
        })?;
        Ok((repriced - p_bar) / model.scale * 1e4)
    };
    #[cfg(feature = "parallel")]
    let errors: Result<Vec<f64>> = (0..n).into_par_iter().map(one).collect();
    #[cfg(not(feature = "parallel"))]
    let errors: Result<Vec<f64>> = (0..n).map(one).collect();
    let errors_bps = errors?;

    let mut abs: Vec<f64> = errors_bps.iter().map(|e| e.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let median_bps = abs[abs.len() / 2];
    let p95_bps = abs[((abs.len() as f64 * 0.95) as usize).min(abs.len() - 1)];

    Ok(RstSummary {
        median_bps,
        p95_bps,
        histogram: histogram(&abs, 20),
        errors_bps,
    })
}

fn histogram(sorted_abs: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let lo = sorted_abs[0];
    let hi = sorted_abs[sorted_abs.len() - 1];
    let width = ((hi - lo) / bins as f64).max(1e-12);
    let mut counts = vec![0usize; bins];
    for &v in sorted_abs {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (lo + b as f64 * width, lo + (b + 1) as f64 * width, c))
        .collect()
}
