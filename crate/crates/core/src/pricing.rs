//! Black-Scholes basket pricing with analytic greeks, a delta-gamma Taylor
//! benchmark, and kernel extrapolation of pricer values across stress
//! scenarios.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gradient_with_coefficients, gram, projection_coefficients, KernelSpec, PointSet};
use crate::scale::Standardizer;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const TRADING_DAYS: f64 = 252.0;

/// European basket call priced by applying scalar Black-Scholes to the
/// basket value S = <weights, x>.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasketOption {
    pub weights: Vec<f64>,
    pub strike: f64,
    pub maturity: f64,
    pub volatility: f64,
    pub rate: f64,
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Scalar Black-Scholes call value and derivatives at basket level s and
/// time-to-maturity tau.
#[derive(Debug, Clone, Copy)]
struct ScalarBs {
    price: f64,
    delta: f64,
    gamma: f64,
    /// Calendar-time derivative (dP/dt = -dP/dtau).
    theta: f64,
}

impl BasketOption {
    pub fn new(weights: Vec<f64>, strike: f64, maturity: f64, volatility: f64, rate: f64) -> Result<Self> {
        let opt = BasketOption {
            weights,
            strike,
            maturity,
            volatility,
            rate,
        };
        opt.validate()?;
        Ok(opt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::Empty("basket weights"));
        }
        if !self.weights.iter().all(|w| w.is_finite()) {
            return Err(Error::NonFinite("basket weights"));
        }
        if !(self.maturity > 0.0) {
            return Err(Error::InvalidParam(format!(
                "maturity must be positive, got {}",
                self.maturity
            )));
        }
        if !(self.volatility > 0.0) {
            return Err(Error::InvalidParam(format!(
                "volatility must be positive, got {}",
                self.volatility
            )));
        }
        if !self.strike.is_finite() || !self.rate.is_finite() {
            return Err(Error::NonFinite("strike/rate"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn basket_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::dim(self.weights.len(), x.len(), "basket value"));
        }
        Ok(self.weights.iter().zip(x).map(|(w, v)| w * v).sum())
    }

    pub fn payoff(&self, x: &[f64]) -> Result<f64> {
        Ok((self.basket_value(x)? - self.strike).max(0.0))
    }

    fn scalar_bs(&self, s: f64, tau: f64) -> ScalarBs {
        let (k, r, sig) = (self.strike, self.rate, self.volatility);
        if tau <= 0.0 {
            // maturity limit: intrinsic value, sub-gradient conventions
            let itm = s > k;
            return ScalarBs {
                price: (s - k).max(0.0),
                delta: if itm { 1.0 } else { 0.0 },
                gamma: 0.0,
                theta: 0.0,
            };
        }
        let sq = sig * tau.sqrt();
        let d1 = ((s / k).ln() + (r + 0.5 * sig * sig) * tau) / sq;
        let d2 = d1 - sq;
        let disc = (-r * tau).exp();
        ScalarBs {
            price: s * norm_cdf(d1) - k * disc * norm_cdf(d2),
            delta: norm_cdf(d1),
            gamma: norm_pdf(d1) / (s * sq),
            theta: -s * norm_pdf(d1) * sig / (2.0 * tau.sqrt()) - r * k * disc * norm_cdf(d2),
        }
    }

    /// Call value at calendar time t and asset vector x. Past maturity the
    /// intrinsic payoff is returned (the t -> T limit).
    pub fn bs_price(&self, t: f64, x: &[f64]) -> Result<f64> {
        let s = self.basket_value(x)?;
        if s <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "non-positive basket value {s}"
            )));
        }
        Ok(self.scalar_bs(s, self.maturity - t).price)
    }

    /// Chain-rule greeks through S = <weights, x>:
    /// delta_d = w_d * Delta, gamma_{de} = w_d w_e * Gamma, theta = dP/dt.
    pub fn bs_greeks(&self, t: f64, x: &[f64]) -> Result<(Vec<f64>, f64, DMatrix<f64>)> {
        let s = self.basket_value(x)?;
        if s <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "non-positive basket value {s}"
            )));
        }
        let bs = self.scalar_bs(s, self.maturity - t);
        let d = self.dim();
        let delta: Vec<f64> = self.weights.iter().map(|w| w * bs.delta).collect();
        let gamma = DMatrix::from_fn(d, d, |i, j| self.weights[i] * self.weights[j] * bs.gamma);
        Ok((delta, bs.theta, gamma))
    }

    /// Second-order Taylor expansion of the price around (base_t, base_x)
    /// with the full (1+D)x(1+D) Hessian in (t, x). Time-involving second
    /// derivatives come from central differences of the analytic firsts.
    pub fn taylor_dg(
        &self,
        base_t: f64,
        base_x: &[f64],
        query_t: f64,
        query_z: &[f64],
    ) -> Result<f64> {
        if query_z.len() != base_x.len() {
            return Err(Error::dim(base_x.len(), query_z.len(), "taylor query"));
        }
        let s0 = self.basket_value(base_x)?;
        let tau = self.maturity - base_t;
        let bs = self.scalar_bs(s0, tau);
        let (delta, theta, gamma) = self.bs_greeks(base_t, base_x)?;

        let dt = query_t - base_t;
        let dx: Vec<f64> = query_z.iter().zip(base_x).map(|(z, x)| z - x).collect();

        // cross and pure time second derivatives by central differences of
        // the analytic first derivatives
        let ht = 1e-5 * tau.max(1e-3);
        let up = self.scalar_bs(s0, tau - ht);
        let dn = self.scalar_bs(s0, tau + ht);
        // d(theta)/dt and d(delta_s)/dt; tau decreases as t increases
        let theta_t = (up.theta - dn.theta) / (2.0 * ht);
        let delta_s_t = (up.delta - dn.delta) / (2.0 * ht);

        let ds: f64 = self.weights.iter().zip(&dx).map(|(w, d)| w * d).sum();
        let mut out = bs.price + theta * dt + theta_t * 0.5 * dt * dt;
        for d in 0..self.dim() {
            out += delta[d] * dx[d];
            // cross term dP/(dt dx_d) = w_d * d(Delta)/dt
            out += self.weights[d] * delta_s_t * dt * dx[d];
        }
        // pure asset block collapses onto the basket direction
        let _ = &gamma;
        out += 0.5 * self.scalar_bs(s0, tau).gamma * ds * ds;
        Ok(out)
    }
}

/// Asset scenarios at a fixed future horizon.
#[derive(Debug, Clone)]
pub struct StressScenarioSet {
    pub scenarios: PointSet,
    pub horizon_days: u32,
    /// Pricing time t0 in year fractions; the scenario time is
    /// t0 + horizon_days / 252.
    pub pricing_time: f64,
}

impl StressScenarioSet {
    pub fn new(scenarios: PointSet, horizon_days: u32, pricing_time: f64) -> Result<Self> {
        if scenarios.matrix().iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParam(
                "scenario asset values must be positive".into(),
            ));
        }
        Ok(StressScenarioSet {
            scenarios,
            horizon_days,
            pricing_time,
        })
    }

    pub fn horizon_time(&self) -> f64 {
        self.pricing_time + f64::from(self.horizon_days) / TRADING_DAYS
    }
}

/// Kernel extrapolation of an external pricer across scenarios.
#[derive(Debug, Clone)]
pub struct StressExtrapolation {
    pub prices: Vec<f64>,
    /// Row per test scenario, one column per asset.
    pub deltas: DMatrix<f64>,
    pub thetas: Vec<f64>,
}

/// Learns the pricer on the training scenarios and extrapolates price,
/// deltas, and theta onto the test scenarios.
///
/// Training inputs are (t, x) pairs over three time slices one day apart
/// around the horizon, so the fitted surface carries a genuine time
/// direction and theta falls out of the same analytic gradient as the
/// deltas.
pub fn stress_extrapolate<F>(
    spec: &KernelSpec,
    train: &StressScenarioSet,
    pricer: F,
    test: &StressScenarioSet,
) -> Result<StressExtrapolation>
where
    F: Fn(f64, &[f64]) -> Result<f64> + Sync,
{
    let d = train.scenarios.dim();
    if test.scenarios.dim() != d {
        return Err(Error::dim(d, test.scenarios.dim(), "test scenarios"));
    }
    if test.horizon_days != train.horizon_days {
        return Err(Error::InvalidParam(format!(
            "horizon mismatch: train {} days, test {} days",
            train.horizon_days, test.horizon_days
        )));
    }
    let n = train.scenarios.len();
    let t1 = train.horizon_time();
    let day = 1.0 / TRADING_DAYS;
    let slices = [t1 - day, t1, t1 + day];

    // training rows: (t, x) across the three slices
    let mut inputs = DMatrix::zeros(3 * n, d + 1);
    for (si, &t) in slices.iter().enumerate() {
        for i in 0..n {
            inputs[(si * n + i, 0)] = t;
            for j in 0..d {
                inputs[(si * n + i, 1 + j)] = train.scenarios.matrix()[(i, j)];
            }
        }
    }

    let price_row = |row: usize| -> Result<f64> {
        let t = inputs[(row, 0)];
        let x: Vec<f64> = (0..d).map(|j| inputs[(row, 1 + j)]).collect();
        let v = pricer(t, &x).map_err(|e| Error::PricerFailure {
            index: row % n,
            message: e.to_string(),
        })?;
        if !v.is_finite() {
            return Err(Error::PricerFailure {
                index: row % n,
                message: format!("non-finite price {v}"),
            });
        }
        Ok(v)
    };
    #[cfg(feature = "parallel")]
    let values: Result<Vec<f64>> = (0..3 * n).into_par_iter().map(price_row).collect();
    #[cfg(not(feature = "parallel"))]
    let values: Result<Vec<f64>> = (0..3 * n).map(price_row).collect();
    let values = DMatrix::from_column_slice(3 * n, 1, &values?);

    // standardized (t, x) space; the caller bandwidth applies there
    let scaler = Standardizer::fit(&inputs);
    let in_std = PointSet::new(scaler.transform(&inputs))?;
    let coeffs = projection_coefficients(spec, &in_std, &values)?;

    let n_test = test.scenarios.len();
    let mut queries = DMatrix::zeros(n_test, d + 1);
    for i in 0..n_test {
        queries[(i, 0)] = t1;
        for j in 0..d {
            queries[(i, 1 + j)] = test.scenarios.matrix()[(i, j)];
        }
    }
    let q_std = PointSet::new(scaler.transform(&queries))?;
    let kzx = gram(spec, &q_std, &in_std)?;
    let prices: Vec<f64> = (kzx.entries() * &coeffs).column(0).iter().copied().collect();

    let grads = gradient_with_coefficients(spec, &in_std, &coeffs, &q_std)?;
    let scales = scaler.scales();
    let mut deltas = DMatrix::zeros(n_test, d);
    let mut thetas = Vec::with_capacity(n_test);
    for (i, g) in grads.iter().enumerate() {
        // chain rule back through the standardization
        thetas.push(g[(0, 0)] / scales[0]);
        for j in 0..d {
            deltas[(i, j)] = g[(1 + j, 0)] / scales[1 + j];
        }
    }

    Ok(StressExtrapolation {
        prices,
        deltas,
        thetas,
    })
}

/// Independent geometric Brownian motion scenarios at the horizon:
/// x_d = spot_d * exp((mu - vol_d^2/2) tau + vol_d sqrt(tau) Z).
pub fn gbm_scenarios(
    spots: &[f64],
    vols: &[f64],
    drift: f64,
    horizon_days: u32,
    n: usize,
    seed: u64,
) -> Result<PointSet> {
    if spots.len() != vols.len() {
        return Err(Error::size(spots.len(), vols.len(), "gbm spots/vols"));
    }
    if spots.is_empty() || n == 0 {
        return Err(Error::Empty("gbm scenarios"));
    }
    if spots.iter().any(|s| !(*s > 0.0)) || vols.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParam(
            "gbm spots and vols must be positive".into(),
        ));
    }
    let tau = f64::from(horizon_days) / TRADING_DAYS;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spots.len();
    let mut m = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            m[(i, j)] =
                spots[j] * ((drift - 0.5 * vols[j] * vols[j]) * tau + vols[j] * tau.sqrt() * z).exp();
        }
    }
    PointSet::new(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::median_pairwise_distance;

    fn option_3() -> BasketOption {
        BasketOption::new(vec![0.5, 0.3, 0.2], 100.0, 1.0, 0.2, 0.0).unwrap()
    }

    #[test]
    fn payoff_examples() {
        let o = BasketOption::new(vec![1.0], 90.0, 1.0, 0.2, 0.0).unwrap();
        assert_eq!(o.payoff(&[100.0]).unwrap(), 10.0);
        assert_eq!(o.payoff(&[90.0]).unwrap(), 0.0);
        // convexity along random segments
        let o3 = option_3();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(50.0..150.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(50.0..150.0)).collect();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            assert!(
                o3.payoff(&mid).unwrap()
                    <= 0.5 * (o3.payoff(&a).unwrap() + o3.payoff(&b).unwrap()) + 1e-12
            );
        }
    }

    #[test]
    fn bs_price_atm_reference() {
        let o = BasketOption::new(vec![1.0], 100.0, 1.0, 0.2, 0.0).unwrap();
        let p = o.bs_price(0.0, &[100.0]).unwrap();
        assert!((p - 7.965567).abs() < 1e-4, "price {p}");
    }

    #[test]
    fn bs_price_deep_itm() {
        let o = BasketOption::new(vec![1.0], 1.0, 1.0, 0.2, 0.03).unwrap();
        let p = o.bs_price(0.0, &[1000.0]).unwrap();
        let intrinsic = 1000.0 - 1.0 * (-0.03f64).exp();
        assert!((p - intrinsic).abs() < 1e-6, "price {p} vs {intrinsic}");
    }

    #[test]
    fn bs_price_vanishing_vol() {
        let o = BasketOption::new(vec![1.0], 90.0, 1.0, 1e-8, 0.01).unwrap();
        let p = o.bs_price(0.0, &[100.0]).unwrap();
        let limit = (100.0 - 90.0 * (-0.01f64).exp()).max(0.0);
        assert!((p - limit).abs() < 1e-6);
    }

    #[test]
    fn bs_price_bounds_and_monotonicity() {
        let o = BasketOption::new(vec![1.0], 100.0, 2.0, 0.3, 0.02).unwrap();
        let mut prev = 0.0;
        for s in [60.0, 80.0, 100.0, 120.0, 140.0] {
            let p = o.bs_price(0.5, &[s]).unwrap();
            let tau: f64 = 1.5;
            assert!(p >= (s - 100.0 * (-0.02 * tau).exp()).max(0.0) - 1e-12);
            assert!(p <= s);
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn bs_price_converges_to_payoff() {
        let o = option_3();
        let x = [110.0, 95.0, 105.0];
        let payoff = o.payoff(&x).unwrap();
        let p = o.bs_price(1.0 - 1e-9, &x).unwrap();
        assert!((p - payoff).abs() < 1e-3);
        assert_eq!(o.bs_price(1.0, &x).unwrap(), payoff);
    }

    #[test]
    fn atm_delta_closed_form() {
        // r = 0, S = K: d1 = sigma sqrt(tau) / 2
        let o = option_3();
        let x = [100.0, 100.0, 100.0];
        let (delta, _, _) = o.bs_greeks(0.0, &x).unwrap();
        let expect = norm_cdf(0.1);
        for (d, w) in delta.iter().zip(&o.weights) {
            assert!((d - w * expect).abs() < 1e-12);
        }
    }

    #[test]
    fn greeks_match_finite_differences() {
        let o = option_3();
        let x = [104.0, 96.0, 101.0];
        let t = 0.3;
        let (delta, theta, gamma) = o.bs_greeks(t, &x).unwrap();
        let s = o.basket_value(&x).unwrap();
        let h = 1e-4 * s;
        for d in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[d] += h;
            xm[d] -= h;
            let fd = (o.bs_price(t, &xp).unwrap() - o.bs_price(t, &xm).unwrap()) / (2.0 * h);
            assert!(
                (fd - delta[d]).abs() <= 1e-5 * delta[d].abs().max(1e-3),
                "delta[{d}]: fd {fd} vs {}",
                delta[d]
            );
            for e in 0..3 {
                let mut xpp = x;
                let mut xpm = x;
                let mut xmp = x;
                let mut xmm = x;
                xpp[d] += h;
                xpp[e] += h;
                xpm[d] += h;
                xpm[e] -= h;
                xmp[d] -= h;
                xmp[e] += h;
                xmm[d] -= h;
                xmm[e] -= h;
                let fd2 = (o.bs_price(t, &xpp).unwrap() - o.bs_price(t, &xpm).unwrap()
                    - o.bs_price(t, &xmp).unwrap()
                    + o.bs_price(t, &xmm).unwrap())
                    / (4.0 * h * h);
                assert!(
                    (fd2 - gamma[(d, e)]).abs() <= 1e-4 * gamma[(d, e)].abs().max(1e-5),
                    "gamma[{d},{e}]: fd {fd2} vs {}",
                    gamma[(d, e)]
                );
            }
        }
        let ht = 1e-6;
        let fd_theta =
            (o.bs_price(t + ht, &x).unwrap() - o.bs_price(t - ht, &x).unwrap()) / (2.0 * ht);
        assert!(
            (fd_theta - theta).abs() <= 1e-5 * theta.abs().max(1e-3),
            "theta: fd {fd_theta} vs {theta}"
        );
    }

    #[test]
    fn atm_theta_is_negative() {
        let o = option_3();
        let (_, theta, _) = o.bs_greeks(0.0, &[100.0, 100.0, 100.0]).unwrap();
        assert!(theta < 0.0);
    }

    #[test]
    fn taylor_exact_at_base() {
        let o = option_3();
        let x = [103.0, 97.0, 100.0];
        let p = o.bs_price(0.2, &x).unwrap();
        let t = o.taylor_dg(0.2, &x, 0.2, &x).unwrap();
        assert_eq!(p, t);
    }

    #[test]
    fn taylor_small_perturbation() {
        let o = option_3();
        let x = [100.0, 100.0, 100.0];
        let s = o.basket_value(&x).unwrap();
        let dx = 1e-4 * s;
        let z = [x[0] + dx, x[1] - 0.5 * dx, x[2] + 0.3 * dx];
        let t_q = 0.0 + 1e-4;
        let exact = o.bs_price(t_q, &z).unwrap();
        let approx = o.taylor_dg(0.0, &x, t_q, &z).unwrap();
        assert!(
            (approx - exact).abs() <= 1e-8 * exact.abs(),
            "taylor {approx} vs exact {exact}"
        );
    }

    #[test]
    fn taylor_error_scales_cubically() {
        let o = option_3();
        let x = [100.0, 100.0, 100.0];
        let err = |scale: f64| {
            let z = [x[0] + scale, x[1] + 0.7 * scale, x[2] - 0.4 * scale];
            let tq = 0.01 * scale / 5.0;
            (o.taylor_dg(0.0, &x, tq, &z).unwrap() - o.bs_price(tq, &z).unwrap()).abs()
        };
        let e1 = err(2.0);
        let e2 = err(4.0);
        assert!(e2 / e1 >= 4.0, "ratio {} (e1={e1}, e2={e2})", e2 / e1);
    }

    fn pricer_for(o: &BasketOption) -> impl Fn(f64, &[f64]) -> Result<f64> + Sync + '_ {
        move |t, x| o.bs_price(t, x)
    }

    #[test]
    fn stress_extrapolation_reproduces_training_prices() {
        let o = option_3();
        let spots = [100.0, 100.0, 100.0];
        let vols = [0.2, 0.25, 0.15];
        let scen = gbm_scenarios(&spots, &vols, 0.0, 10, 120, 3).unwrap();
        let train = StressScenarioSet::new(scen.clone(), 10, 0.0).unwrap();
        let test = StressScenarioSet::new(scen, 10, 0.0).unwrap();
        let spec = stress_spec(&train);
        let out = stress_extrapolate(&spec, &train, pricer_for(&o), &test).unwrap();
        let t1 = train.horizon_time();
        for (i, p) in out.prices.iter().enumerate() {
            let exact = o.bs_price(t1, &train.scenarios.point(i)).unwrap();
            assert!(
                (p - exact).abs() <= 1e-6 * exact.abs().max(1.0),
                "scenario {i}: {p} vs {exact}"
            );
        }
    }

    fn stress_spec(train: &StressScenarioSet) -> KernelSpec {
        // median bandwidth over the standardized (t, x) training grid
        let n = train.scenarios.len();
        let d = train.scenarios.dim();
        let t1 = train.horizon_time();
        let day = 1.0 / TRADING_DAYS;
        let mut inputs = DMatrix::zeros(3 * n, d + 1);
        for (si, t) in [t1 - day, t1, t1 + day].iter().enumerate() {
            for i in 0..n {
                inputs[(si * n + i, 0)] = *t;
                for j in 0..d {
                    inputs[(si * n + i, 1 + j)] = train.scenarios.matrix()[(i, j)];
                }
            }
        }
        let std = Standardizer::fit(&inputs);
        let ps = PointSet::new(std.transform(&inputs)).unwrap();
        KernelSpec::gaussian(median_pairwise_distance(&ps)).with_regularization(0.0)
    }

    #[test]
    fn stress_extrapolation_basis_point_accuracy_small() {
        let o = option_3();
        let spots = [100.0, 100.0, 100.0];
        let vols = [0.2, 0.25, 0.15];
        let train_set = gbm_scenarios(&spots, &vols, 0.0, 10, 200, 5).unwrap();
        let test_set = gbm_scenarios(&spots, &vols, 0.0, 10, 200, 6).unwrap();
        let train = StressScenarioSet::new(train_set, 10, 0.0).unwrap();
        let test = StressScenarioSet::new(test_set, 10, 0.0).unwrap();
        let spec = stress_spec(&train);
        let out = stress_extrapolate(&spec, &train, pricer_for(&o), &test).unwrap();
        let t1 = train.horizon_time();
        let mut errs: Vec<f64> = (0..test.scenarios.len())
            .map(|i| {
                let exact = o.bs_price(t1, &test.scenarios.point(i)).unwrap();
                (out.prices[i] - exact).abs() / o.strike * 1e4
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        let median = errs[errs.len() / 2];
        assert!(median <= 5.0, "median extrapolation error {median} bps");
    }

    #[test]
    fn stress_deltas_and_theta_match_analytic() {
        let o = option_3();
        let spots = [100.0, 100.0, 100.0];
        let vols = [0.2, 0.25, 0.15];
        let train_set = gbm_scenarios(&spots, &vols, 0.0, 10, 250, 7).unwrap();
        let test_set = gbm_scenarios(&spots, &vols, 0.0, 10, 40, 8).unwrap();
        let train = StressScenarioSet::new(train_set, 10, 0.0).unwrap();
        let test = StressScenarioSet::new(test_set, 10, 0.0).unwrap();
        let spec = stress_spec(&train);
        let out = stress_extrapolate(&spec, &train, pricer_for(&o), &test).unwrap();
        let t1 = train.horizon_time();
        let mut delta_errs = Vec::new();
        let mut theta_errs = Vec::new();
        for i in 0..test.scenarios.len() {
            let (delta, theta, _) = o.bs_greeks(t1, &test.scenarios.point(i)).unwrap();
            for j in 0..3 {
                delta_errs.push((out.deltas[(i, j)] - delta[j]).abs());
            }
            theta_errs.push((out.thetas[i] - theta).abs() / theta.abs());
        }
        delta_errs.sort_by(f64::total_cmp);
        theta_errs.sort_by(f64::total_cmp);
        // kernel greeks are approximations; medians must land close
        assert!(
            delta_errs[delta_errs.len() / 2] < 0.02,
            "median delta error {}",
            delta_errs[delta_errs.len() / 2]
        );
        assert!(
            theta_errs[theta_errs.len() / 2] < 0.15,
            "median theta relative error {}",
            theta_errs[theta_errs.len() / 2]
        );
    }

    #[test]
    fn pricer_failures_are_reported() {
        let scen = gbm_scenarios(&[100.0], &[0.2], 0.0, 10, 20, 1).unwrap();
        let set = StressScenarioSet::new(scen, 10, 0.0).unwrap();
        let spec = KernelSpec::gaussian(1.0);
        let res = stress_extrapolate(
            &spec,
            &set,
            |_t, _x| Err(Error::InvalidParam("boom".into())),
            &set,
        );
        assert!(matches!(res, Err(Error::PricerFailure { .. })));
    }
}
