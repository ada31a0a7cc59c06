//! Kernel encoders/decoders built from matched (permuted) samples,
//! generators over known latent distributions, and the conditioned-law
//! sampler.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{
    duplicate_rows, gram, median_pairwise_distance, regularized_solve, KernelSpec, PointSet,
};
use crate::scale::Standardizer;
use crate::transport::{lap_solve, mmd_cost, sp_solve, Permutation};

/// How the output rows are matched to the input rows before solving.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PermutationStrategy {
    /// Identity permutation: direct inversion, no matching.
    None,
    /// Exact assignment minimizing the summed kernel discrepancy. Requires
    /// matching input/output dimensions.
    OtMmd,
    /// Local-search minimization of the decoder smoothness (Dirichlet
    /// energy); works across unrelated spaces.
    SpSmooth { budget: usize, seed: u64 },
    /// Caller-supplied matching.
    Precomputed(Permutation),
}

impl PermutationStrategy {
    pub fn sp_default(seed: u64) -> Self {
        PermutationStrategy::SpSmooth {
            budget: 50_000,
            seed,
        }
    }
}

/// A fitted smooth map from one sample space to another:
/// q -> k(inputs, q)^T (k(inputs, inputs) + lambda I)^{-1} outputs^sigma.
/// Inputs are standardized internally; coefficients refer to raw outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Encoder {
    version: u32,
    spec: KernelSpec,
    inputs: DMatrix<f64>,
    standardizer: Standardizer,
    outputs_permuted: DMatrix<f64>,
    permutation: Permutation,
    coefficients: DMatrix<f64>,
}

pub const ENCODER_SNAPSHOT_VERSION: u32 = 1;

impl Encoder {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs_permuted.ncols()
    }

    pub fn permutation(&self) -> &Permutation {
        &self.permutation
    }

    pub fn outputs_permuted(&self) -> &DMatrix<f64> {
        &self.outputs_permuted
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn apply(&self, query: &PointSet) -> Result<DMatrix<f64>> {
        if query.dim() != self.input_dim() {
            return Err(Error::dim(self.input_dim(), query.dim(), "encoder query"));
        }
        let q_std = PointSet::new(self.standardizer.transform(query.matrix()))?;
        let in_std = PointSet::new(self.standardizer.transform(&self.inputs))?;
        let k = gram(&self.spec, &q_std, &in_std)?;
        Ok(k.entries() * &self.coefficients)
    }

    pub fn apply_point(&self, q: &[f64]) -> Result<Vec<f64>> {
        let out = self.apply(&PointSet::from_rows(&[q.to_vec()])?)?;
        Ok(out.row(0).iter().copied().collect())
    }

    /// Versioned JSON snapshot; `from_json` restores bit-exactly.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Encoder> {
        let enc: Encoder =
            serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        if enc.version != ENCODER_SNAPSHOT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported encoder snapshot version {}",
                enc.version
            )));
        }
        Ok(enc)
    }
}

/// Fits the permuted kernel map from `inputs` to `outputs`.
pub fn fit_encoder(
    spec: &KernelSpec,
    inputs: &PointSet,
    outputs: &DMatrix<f64>,
    strategy: PermutationStrategy,
) -> Result<Encoder> {
    spec.validate()?;
    if outputs.nrows() != inputs.len() {
        return Err(Error::size(inputs.len(), outputs.nrows(), "encoder outputs"));
    }

    // duplicate training inputs make the system rank-deficient; collapse them
    let dups = duplicate_rows(inputs);
    let (inputs, outputs) = if dups.is_empty() {
        (inputs.clone(), outputs.clone())
    } else {
        log::warn!(
            "fit_encoder: collapsing {} duplicate training input rows",
            dups.len()
        );
        let keep: Vec<usize> = (0..inputs.len()).filter(|i| !dups.contains(i)).collect();
        let in2 = DMatrix::from_fn(keep.len(), inputs.dim(), |i, j| {
            inputs.matrix()[(keep[i], j)]
        });
        let out2 = DMatrix::from_fn(keep.len(), outputs.ncols(), |i, j| outputs[(keep[i], j)]);
        (PointSet::new(in2)?, out2)
    };

    let standardizer = Standardizer::fit(inputs.matrix());
    let in_std = PointSet::new(standardizer.transform(inputs.matrix()))?;

    let permutation = match strategy {
        PermutationStrategy::None => Permutation::identity(inputs.len()),
        PermutationStrategy::OtMmd => {
            if inputs.dim() != outputs.ncols() {
                return Err(Error::InvalidParam(format!(
                    "ot_mmd requires matching dimensions (inputs {}, outputs {}); \
                     use sp_smooth for maps between unrelated spaces",
                    inputs.dim(),
                    outputs.ncols()
                )));
            }
            let out_scaler = Standardizer::fit(&outputs);
            let out_std = PointSet::new(out_scaler.transform(&outputs))?;
            let cost = mmd_cost(spec, &out_std, &in_std)?;
            lap_solve(&cost)?.0
        }
        PermutationStrategy::SpSmooth { budget, seed } => {
            let out_scaler = Standardizer::fit(&outputs);
            let out_std = PointSet::new(out_scaler.transform(&outputs))?;
            sp_solve(spec, &in_std, &out_std, budget, seed)?.0
        }
        PermutationStrategy::Precomputed(p) => {
            if p.len() != inputs.len() {
                return Err(Error::size(inputs.len(), p.len(), "precomputed permutation"));
            }
            p
        }
    };

    let outputs_permuted = permutation.apply_rows(&outputs);
    let g = gram(spec, &in_std, &in_std)?;
    let coefficients = regularized_solve(&g, &outputs_permuted, spec.regularization)?;

    Ok(Encoder {
        version: ENCODER_SNAPSHOT_VERSION,
        spec: *spec,
        inputs: inputs.matrix().clone(),
        standardizer,
        outputs_permuted,
        permutation,
        coefficients,
    })
}

/// Known sampling distributions for the latent side of a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentKind {
    UniformCube,
    StandardGaussian,
    /// Reuse the encoder's own training inputs (the trivial latent map).
    IdentityPassthrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentSpec {
    pub kind: LatentKind,
    pub dimension: usize,
    pub seed: u64,
}

impl LatentSpec {
    pub fn uniform(dimension: usize, seed: u64) -> Self {
        LatentSpec {
            kind: LatentKind::UniformCube,
            dimension,
            seed,
        }
    }

    pub fn gaussian(dimension: usize, seed: u64) -> Self {
        LatentSpec {
            kind: LatentKind::StandardGaussian,
            dimension,
            seed,
        }
    }

    pub fn passthrough(dimension: usize) -> Self {
        LatentSpec {
            kind: LatentKind::IdentityPassthrough,
            dimension,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn draw(&self, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        match self.kind {
            LatentKind::UniformCube => {
                DMatrix::from_fn(n, self.dimension, |_, _| rng.random_range(0.0..1.0))
            }
            LatentKind::StandardGaussian => {
                DMatrix::from_fn(n, self.dimension, |_, _| StandardNormal.sample(rng))
            }
            LatentKind::IdentityPassthrough => {
                panic!("identity_passthrough latent cannot be drawn; it reuses training inputs")
            }
        }
    }
}

/// Draws n latent samples and pushes them through the encoder. With
/// `identity_passthrough` the first n training inputs are replayed, which
/// reproduces the training outputs exactly.
pub fn generate(encoder: &Encoder, latent: &LatentSpec, n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Ok(DMatrix::zeros(0, encoder.output_dim()));
    }
    let query = match latent.kind {
        LatentKind::IdentityPassthrough => {
            if latent.dimension != encoder.input_dim() {
                return Err(Error::dim(
                    encoder.input_dim(),
                    latent.dimension,
                    "latent dimension",
                ));
            }
            if n > encoder.len() {
                return Err(Error::InvalidParam(format!(
                    "identity_passthrough latent has only {} training inputs, asked for {n}",
                    encoder.len()
                )));
            }
            DMatrix::from_fn(n, encoder.input_dim(), |i, j| encoder.inputs()[(i, j)])
        }
        _ => {
            if latent.dimension != encoder.input_dim() {
                return Err(Error::dim(
                    encoder.input_dim(),
                    latent.dimension,
                    "latent dimension",
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(latent.seed);
            latent.draw(n, &mut rng)
        }
    };
    encoder.apply(&PointSet::new(query)?)
}

/// Fits a generator for `data`: draws N latent points, matches them to the
/// data rows (exact assignment when the dimensions agree, smoothness search
/// otherwise), and fits the decoding map latent -> data. The kernel
/// bandwidth comes from the median heuristic on the latent draws.
pub fn fit_generator(
    spec: &KernelSpec,
    data: &DMatrix<f64>,
    latent: &LatentSpec,
) -> Result<Encoder> {
    let n = data.nrows();
    if n == 0 {
        return Err(Error::Empty("fit_generator data"));
    }
    match latent.kind {
        LatentKind::IdentityPassthrough => {
            // trivial latent: inputs are the data itself, identity matching
            let inputs = PointSet::new(data.clone())?;
            fit_encoder(spec, &inputs, data, PermutationStrategy::None)
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(latent.seed);
            let draws = latent.draw(n, &mut rng);
            let inputs = PointSet::new(draws)?;
            let strategy = if latent.dimension == data.ncols() {
                PermutationStrategy::OtMmd
            } else {
                PermutationStrategy::sp_default(latent.seed)
            };
            fit_encoder(spec, &inputs, data, strategy)
        }
    }
}

/// Draws n samples of Y | X = condition from a joint variate (X, Y).
///
/// A joint latent with one coordinate block per data block is matched to the
/// standardized joint sample by exact assignment; the conditioning value is
/// encoded into the latent x-block once, and the latent y-block is redrawn
/// per sample before decoding.
pub fn conditional_sampler(
    spec: &KernelSpec,
    x: &PointSet,
    y: &PointSet,
    latent: &LatentSpec,
    condition: &[f64],
    n: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let big_n = x.len();
    if y.len() != big_n {
        return Err(Error::size(big_n, y.len(), "conditional joint variate"));
    }
    if big_n < 2 {
        return Err(Error::InvalidParam(
            "conditional_sampler needs at least 2 joint samples".into(),
        ));
    }
    let (dx, dy) = (x.dim(), y.dim());
    if condition.len() != dx {
        return Err(Error::dim(dx, condition.len(), "conditioning value"));
    }
    if latent.dimension != dx + dy {
        return Err(Error::dim(dx + dy, latent.dimension, "joint latent dimension"));
    }
    flag_out_of_range(x, condition);
    if n == 0 {
        return Ok(DMatrix::zeros(0, dy));
    }

    // joint variate Z = (X, Y), standardized blockwise by the encoder fits
    let mut z = DMatrix::zeros(big_n, dx + dy);
    for i in 0..big_n {
        for j in 0..dx {
            z[(i, j)] = x.matrix()[(i, j)];
        }
        for j in 0..dy {
            z[(i, dx + j)] = y.matrix()[(i, j)];
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(latent.seed);
    match latent.kind {
        LatentKind::IdentityPassthrough => {
            // trivial map eps_x = X; only the y-block is latent
            let eps_y = LatentSpec::uniform(dy, latent.seed).draw(big_n, &mut rng);
            let mut eps = DMatrix::zeros(big_n, dx + dy);
            let x_std = Standardizer::fit(x.matrix()).transform(x.matrix());
            for i in 0..big_n {
                for j in 0..dx {
                    eps[(i, j)] = x_std[(i, j)];
                }
                for j in 0..dy {
                    eps[(i, dx + j)] = eps_y[(i, j)];
                }
            }
            // pair the y-block to the joint sample by exact assignment on
            // (standardized) Z so the latent keeps the joint dependence
            let z_std = Standardizer::fit(&z).transform(&z);
            let sigma = conditional_matching(spec, z_std, eps.clone(), dx)?;
            let z_perm = sigma.apply_rows(&z);
            // decoder maps eps -> Y block of the matched joint rows
            let keep = fit_subsample(big_n);
            let y_perm = take_rows(&z_perm.columns(dx, dy).into_owned(), &keep);
            let eps_ps = PointSet::new(take_rows(&eps, &keep))?;
            let spec_d = fit_spec(spec, &eps_ps)?;
            let decoder = fit_encoder(&spec_d, &eps_ps, &y_perm, PermutationStrategy::None)?;
            let cond_std = Standardizer::fit(x.matrix()).transform_point(condition);
            decode_conditional(&decoder, &cond_std, dy, latent, n, seed)
        }
        _ => {
            let eps = latent.draw(big_n, &mut rng);
            // match latent to standardized joint sample
            let z_std = Standardizer::fit(&z).transform(&z);
            let eps_std = Standardizer::fit(&eps).transform(&eps);
            let sigma = conditional_matching(spec, z_std, eps_std, dx)?;
            let z_perm = sigma.apply_rows(&z);
            // the matching uses every pair; the smoothing fits cap the
            // linear-system size on a strided subsample
            let keep = fit_subsample(big_n);

            // encoder: matched X rows -> latent x-block
            let x_perm = PointSet::new(take_rows(&z_perm.columns(0, dx).into_owned(), &keep))?;
            let eps_x = take_rows(&eps.columns(0, dx).into_owned(), &keep);
            let spec_x = fit_spec(spec, &x_perm)?;
            let encoder_x = fit_encoder(&spec_x, &x_perm, &eps_x, PermutationStrategy::None)?;
            let eta_x = encoder_x.apply_point(condition)?;

            // decoder: latent -> matched Y rows
            let y_perm = take_rows(&z_perm.columns(dx, dy).into_owned(), &keep);
            let eps_ps = PointSet::new(take_rows(&eps, &keep))?;
            let spec_d = fit_spec(spec, &eps_ps)?;
            let decoder = fit_encoder(&spec_d, &eps_ps, &y_perm, PermutationStrategy::None)?;
            decode_conditional(&decoder, &eta_x, dy, latent, n, seed)
        }
    }
}

/// Weight applied to the x-block before matching. Anisotropic assignment
/// costs converge to the triangular (Knothe-Rosenblatt) coupling as the
/// weight grows, and only the triangular coupling preserves the conditional
/// law when the latent blocks are independent; the isotropic optimum instead
/// approaches the symmetric-root transport map, whose fibers mix the blocks.
const X_BLOCK_WEIGHT: f64 = 3.0;

/// Matches latent rows to (standardized) joint-sample rows with the x-block
/// scaled up, so the pairing is near-triangular in x. Above `MATCH_BLOCK`
/// rows the weighted cost makes the assignment local in x-rank, so both
/// sides are sorted by their weighted x-key and exact assignments are solved
/// per rank block; the cubic solve on the full set buys nothing there.
fn conditional_matching(
    spec: &KernelSpec,
    mut z_std: DMatrix<f64>,
    mut eps_std: DMatrix<f64>,
    dx: usize,
) -> Result<Permutation> {
    const MATCH_BLOCK: usize = 500;
    let n = z_std.nrows();
    for m in [&mut z_std, &mut eps_std] {
        for i in 0..n {
            for j in 0..dx {
                m[(i, j)] *= X_BLOCK_WEIGHT;
            }
        }
    }
    let zp = PointSet::new(z_std)?;
    let ep = PointSet::new(eps_std)?;
    let mspec = matching_spec(spec, &zp, &ep)?;
    if n <= MATCH_BLOCK + MATCH_BLOCK / 2 {
        let cost = mmd_cost(&mspec, &zp, &ep)?;
        return Ok(lap_solve(&cost)?.0);
    }

    let xkey = |m: &DMatrix<f64>, i: usize| -> f64 { (0..dx).map(|j| m[(i, j)]).sum() };
    let sort_idx = |m: &DMatrix<f64>| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| xkey(m, a).total_cmp(&xkey(m, b)).then(a.cmp(&b)));
        idx
    };
    let zi = sort_idx(zp.matrix());
    let ei = sort_idx(ep.matrix());

    let blocks = n.div_ceil(MATCH_BLOCK);
    let mut map = vec![0usize; n];
    let mut start = 0usize;
    for b in 0..blocks {
        let len = n / blocks + usize::from(b < n % blocks);
        let z_rows: Vec<Vec<f64>> = zi[start..start + len]
            .iter()
            .map(|&i| zp.matrix().row(i).iter().copied().collect())
            .collect();
        let e_rows: Vec<Vec<f64>> = ei[start..start + len]
            .iter()
            .map(|&i| ep.matrix().row(i).iter().copied().collect())
            .collect();
        let cost = mmd_cost(
            &mspec,
            &PointSet::from_rows(&z_rows)?,
            &PointSet::from_rows(&e_rows)?,
        )?;
        let sigma = lap_solve(&cost)?.0;
        for (q, &p) in sigma.indices().iter().enumerate() {
            map[ei[start + q]] = zi[start + p];
        }
        start += len;
    }
    Permutation::new(map)
}

/// Strided row indices capping the conditional-sampler ridge fits at 1000
/// training points; the cubic factorization cost dominates far earlier than
/// the statistical benefit of more smoothing points.
fn fit_subsample(n: usize) -> Vec<usize> {
    let stride = n.div_ceil(1000).max(1);
    (0..n).step_by(stride).collect()
}

fn take_rows(m: &DMatrix<f64>, keep: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(keep.len(), m.ncols(), |i, j| m[(keep[i], j)])
}

/// Internal conditional-sampler fits keep the caller's kernel family but
/// re-derive the bandwidth from the standardized inputs and floor the ridge:
/// the empirical matching is noisy, so the fitted maps must smooth it rather
/// than interpolate it.
fn fit_spec(spec: &KernelSpec, inputs: &PointSet) -> Result<KernelSpec> {
    let std = Standardizer::fit(inputs.matrix());
    let h = subsampled_median(&std.transform(inputs.matrix()))?;
    Ok(spec
        .with_bandwidth(h)
        .with_regularization(spec.regularization.max(1e-3)))
}

/// A kernel much narrower than the point spread makes every off-diagonal
/// assignment cost saturate near its maximum, which destroys the matching.
/// The assignment therefore always uses a median-heuristic bandwidth over
/// the pooled points, keeping the caller's family and regularization.
fn matching_spec(spec: &KernelSpec, a: &PointSet, b: &PointSet) -> Result<KernelSpec> {
    let d = a.dim();
    let total = a.len() + b.len();
    let mut pooled = DMatrix::zeros(total, d);
    for i in 0..a.len() {
        for j in 0..d {
            pooled[(i, j)] = a.matrix()[(i, j)];
        }
    }
    for i in 0..b.len() {
        for j in 0..d {
            pooled[(a.len() + i, j)] = b.matrix()[(i, j)];
        }
    }
    Ok(spec.with_bandwidth(subsampled_median(&pooled)?))
}

/// Median pairwise distance over at most 1024 strided rows; the median only
/// needs a statistical estimate and the full pair count is quadratic.
fn subsampled_median(points: &DMatrix<f64>) -> Result<f64> {
    let total = points.nrows();
    let stride = total.div_ceil(1024).max(1);
    let picked: Vec<usize> = (0..total).step_by(stride).collect();
    let mut sub = DMatrix::zeros(picked.len(), points.ncols());
    for (row, &idx) in picked.iter().enumerate() {
        for j in 0..points.ncols() {
            sub[(row, j)] = points[(idx, j)];
        }
    }
    Ok(median_pairwise_distance(&PointSet::new(sub)?).max(1e-8))
}

fn decode_conditional(
    decoder: &Encoder,
    eta_x: &[f64],
    dy: usize,
    latent: &LatentSpec,
    n: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let dx = decoder.input_dim() - dy;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let eta_y = match latent.kind {
        LatentKind::StandardGaussian => LatentSpec::gaussian(dy, 0).draw(n, &mut rng),
        _ => LatentSpec::uniform(dy, 0).draw(n, &mut rng),
    };
    let mut query = DMatrix::zeros(n, dx + dy);
    for i in 0..n {
        for j in 0..dx {
            query[(i, j)] = eta_x[j];
        }
        for j in 0..dy {
            query[(i, dx + j)] = eta_y[(i, j)];
        }
    }
    decoder.apply(&PointSet::new(query)?)
}

fn flag_out_of_range(x: &PointSet, condition: &[f64]) {
    let m = x.matrix();
    for j in 0..x.dim() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..x.len() {
            lo = lo.min(m[(i, j)]);
            hi = hi.max(m[(i, j)]);
        }
        let pad = 0.1 * (hi - lo).max(1e-12);
        if condition[j] < lo - pad || condition[j] > hi + pad {
            log::warn!(
                "conditional_sampler: condition coordinate {j} = {} lies outside the \
                 training range [{lo}, {hi}] (inflated 10%); extrapolation may degrade",
                condition[j]
            );
        }
    }
}
