//! Continuous drift-diffusion model of programming latency.
//!
//! Under the linearized model a cell driven by identical pulses follows
//! `dG = mu dt + sigma dW`. Open-loop writing stops after the nominal time
//! `dG / mu`; closed-loop writing stops at the first passage through the
//! target, which is inverse-Gaussian distributed.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;

use crate::crossbar::{encode_targets_raw, CrossbarArray, ProgramOptions, Scheme};
use crate::device::DeviceModel;
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{summarize, Summary};

/// Open-loop end state after writing `delta_g` from rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndState {
    pub time: f64,
    /// Mean end conductance relative to the start.
    pub end_mean: f64,
    pub end_var: f64,
}

pub fn wwov_end_state(delta_g: f64, model: &DeviceModel) -> Result<EndState> {
    if !(delta_g >= 0.0) {
        return Err(Error::InvalidInput(format!("delta_g must be non-negative, got {delta_g}")));
    }
    let d = model.drift_params();
    let time = delta_g / d.mu;
    Ok(EndState {
        time,
        end_mean: delta_g,
        end_var: d.sigma * d.sigma * time,
    })
}

/// Draws from `IG(mean, shape)` by the Michael-Schucany-Haas transformation.
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> f64 {
    if shape.is_infinite() {
        return mean;
    }
    let nu: f64 = rng.sample(StandardNormal);
    let y = nu * nu;
    let my = mean * y;
    let x = mean + mean * my / (2.0 * shape) - mean / (2.0 * shape) * (4.0 * shape * my + my * my).sqrt();
    let u: f64 = rng.random();
    if u <= mean / (mean + x) {
        x
    } else {
        mean * mean / x
    }
}

/// `exp(x^2) erfc(x)`, stable for large `x`.
fn erfcx(x: f64) -> f64 {
    if x < 25.0 {
        (x * x).exp() * erfc(x)
    } else {
        let inv2 = 1.0 / (2.0 * x * x);
        (1.0 - inv2 + 3.0 * inv2 * inv2 - 15.0 * inv2 * inv2 * inv2) / (x * std::f64::consts::PI.sqrt())
    }
}

/// CDF of `IG(mean, shape)`.
pub fn inverse_gaussian_cdf(x: f64, mean: f64, shape: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let s = (shape / x).sqrt();
    let phi = |z: f64| 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    let first = phi(s * (x / mean - 1.0));
    // exp(2 shape / mean) * Phi(-b) rewritten to avoid overflow.
    let b = s * (x / mean + 1.0) / std::f64::consts::SQRT_2;
    let expo = -shape * (x - mean).powi(2) / (2.0 * x * mean * mean);
    (first + 0.5 * expo.exp() * erfcx(b)).min(1.0)
}

/// One first-passage time to climb `delta_g` under the model's drift.
pub fn sample_fpt<R: Rng + ?Sized>(delta_g: f64, model: &DeviceModel, rng: &mut R) -> Result<f64> {
    if !(delta_g > 0.0) || !delta_g.is_finite() {
        return Err(Error::InvalidInput(format!("delta_g must be positive, got {delta_g}")));
    }
    let (mean, shape) = fpt_params(delta_g, model);
    Ok(sample_inverse_gaussian(mean, shape, rng))
}

/// `(mean, shape)` of the first-passage law for `delta_g`.
pub fn fpt_params(delta_g: f64, model: &DeviceModel) -> (f64, f64) {
    let d = model.drift_params();
    let shape = if d.sigma == 0.0 { f64::INFINITY } else { (delta_g / d.sigma).powi(2) };
    (delta_g / d.mu, shape)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyBound {
    pub scheme: Scheme,
    pub n_t: usize,
    pub n_r: usize,
    pub bound: f64,
}

/// Closed-form upper bounds on the expected time to write a real-mapped
/// `n_r x n_t` Rayleigh channel row by row. `G` is the full modeled range.
pub fn latency_bound(scheme: Scheme, n_t: usize, n_r: usize, model: &DeviceModel) -> Result<LatencyBound> {
    if n_t < 2 {
        return Err(Error::config("n_t", "latency bounds need at least two transmit antennas"));
    }
    if n_r < 1 {
        return Err(Error::config("n_r", "must be positive"));
    }
    let d = model.drift_params();
    let g = model.range();
    let (nt, nr) = (n_t as f64, n_r as f64);
    let lead = 2.0 * std::f64::consts::SQRT_2 * g / (3.0 * d.mu);
    let bound = match scheme {
        Scheme::WithoutVerification => {
            let l = nt.ln();
            lead * nr * (l.sqrt() + 1.0 / (std::f64::consts::PI.sqrt() * l))
        }
        Scheme::WithVerification => {
            let l4 = (4.0 * nt).ln();
            let drift = lead * l4.sqrt();
            let diffusion = if d.sigma == 0.0 {
                f64::INFINITY
            } else {
                2.0 * d.sigma * d.sigma / (d.mu * d.mu) * l4 + g * g / (9.0 * d.sigma * d.sigma)
            };
            2.0 * nr * drift.min(diffusion)
        }
        Scheme::Exact => return Err(Error::config("scheme", "latency bounds exist only for the two write schemes")),
    };
    Ok(LatencyBound { scheme, n_t, n_r, bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatencyMode {
    /// Idealized continuous model (no clamps, no reads).
    Analytic,
    /// Pulse-level programming of a sampled array.
    Discrete,
}

impl LatencyMode {
    pub fn name(self) -> &'static str {
        match self {
            LatencyMode::Analytic => "analytic",
            LatencyMode::Discrete => "discrete",
        }
    }
}

/// Monte Carlo write latency. `write` is the theorem-comparable write time;
/// `total` adds reset and verification reads (equal to `write` in analytic mode).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McLatency {
    pub write: Summary,
    pub total: Summary,
}

/// Writes a Rayleigh-scaled `2 n_r x 2 n_t` real channel: each cell climbs a
/// half-normal `dG` with std `G / 3`, rows are sequential and cells within a
/// row parallel.
pub fn mc_write_latency<R: Rng + ?Sized>(
    n_t: usize,
    n_r: usize,
    model: &DeviceModel,
    scheme: Scheme,
    mode: LatencyMode,
    trials: usize,
    rng: &mut R,
) -> Result<McLatency> {
    if n_t == 0 || n_r == 0 {
        return Err(Error::config("n", "antenna counts must be positive"));
    }
    if trials == 0 {
        return Err(Error::config("trials", "must be positive"));
    }
    if scheme == Scheme::Exact && mode == LatencyMode::Analytic {
        return Err(Error::config("scheme", "analytic mode models the two write schemes only"));
    }
    model.validate()?;
    let base = rng::fork_seed(rng);
    let g_std = model.range() / 3.0;
    let mut write = Vec::with_capacity(trials);
    let mut total = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut r = rng::stream(base, &[t as u64]);
        match mode {
            LatencyMode::Analytic => {
                let mut sum = 0.0;
                for _ in 0..n_r {
                    let mut row_max: f64 = 0.0;
                    for _ in 0..2 * n_t {
                        let z: f64 = r.sample(StandardNormal);
                        let dg = (z * g_std).abs();
                        let time = match scheme {
                            Scheme::WithoutVerification => wwov_end_state(dg, model)?.time,
                            _ if dg == 0.0 => 0.0,
                            _ => sample_fpt(dg, model, &mut r)?,
                        };
                        row_max = row_max.max(time);
                    }
                    sum += row_max;
                }
                write.push(2.0 * sum);
                total.push(2.0 * sum);
            }
            LatencyMode::Discrete => {
                let (rows, cols) = (2 * n_r, 2 * n_t);
                let plus: Vec<f64> = (0..rows * cols)
                    .map(|_| {
                        let z: f64 = r.sample(StandardNormal);
                        model.g_min + (z * g_std).abs().min(model.range())
                    })
                    .collect();
                let targets = encode_targets_raw(rows, cols, plus, model)?;
                let mut array = CrossbarArray::new(t as u64, rows, cols, 1, model.clone())?;
                let rep = array.program(&targets, scheme, &ProgramOptions::default(), &mut r)?;
                write.push(rep.write_latency);
                total.push(rep.latency);
            }
        }
    }
    Ok(McLatency {
        write: summarize(&write),
        total: summarize(&total),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::preset;
    use crate::rng::seeded;
    use crate::stats::{ks_statistic, mean, variance};

    #[test]
    fn end_state_examples() {
        let m = preset("ta_taox_pt").unwrap();
        let e = wwov_end_state(0.0, &m).unwrap();
        assert_eq!((e.time, e.end_mean, e.end_var), (0.0, 0.0, 0.0));
        let mu = m.drift_params().mu;
        assert!((wwov_end_state(mu, &m).unwrap().time - 1.0).abs() < 1e-12);
        assert!((wwov_end_state(m.range(), &m).unwrap().time - 2.56e-6).abs() < 1e-15);
        assert!(wwov_end_state(-1e-6, &m).is_err());
    }

    #[test]
    fn ig_moments_and_ks() {
        let m = DeviceModel { gamma_pot: 0.02, ..preset("ta_taox_pt").unwrap() };
        let dg = 0.4 * m.range();
        let d = m.drift_params();
        let mut rng = seeded(21);
        let xs: Vec<f64> = (0..200_000).map(|_| sample_fpt(dg, &m, &mut rng).unwrap()).collect();
        let want_mean = dg / d.mu;
        let want_var = d.sigma * d.sigma * dg / d.mu.powi(3);
        assert!((mean(&xs) / want_mean - 1.0).abs() < 0.01);
        assert!((variance(&xs) / want_var - 1.0).abs() < 0.05);
        let (mean_ig, shape) = fpt_params(dg, &m);
        assert!(ks_statistic(&xs[..100_000], |x| inverse_gaussian_cdf(x, mean_ig, shape)) < 0.01);
    }

    #[test]
    fn ig_concentrates_without_noise() {
        let m = preset("ta_taox_pt").unwrap().noiseless();
        let t = sample_fpt(m.range(), &m, &mut seeded(1)).unwrap();
        assert!((t - 2.56e-6).abs() < 1e-15);
        assert!(sample_fpt(0.0, &m, &mut seeded(1)).is_err());
    }

    #[test]
    fn cdf_limits() {
        assert_eq!(inverse_gaussian_cdf(-1.0, 1.0, 2.0), 0.0);
        assert!((inverse_gaussian_cdf(1e6, 1.0, 2.0) - 1.0).abs() < 1e-12);
        // Large shape/mean ratio stays finite.
        let c = inverse_gaussian_cdf(1.0, 1.0, 1e6);
        assert!(c.is_finite() && (c - 0.5).abs() < 0.01);
    }

    #[test]
    fn bounds_monotone_in_rows_and_need_two_tx() {
        let m = preset("ta_taox_pt").unwrap();
        for s in [Scheme::WithoutVerification, Scheme::WithVerification] {
            let b: Vec<f64> = (1..6).map(|nr| latency_bound(s, 4, nr, &m).unwrap().bound).collect();
            assert!(b.windows(2).all(|w| w[1] > w[0]));
            assert!(latency_bound(s, 1, 4, &m).is_err());
        }
    }

    #[test]
    fn single_trial_has_no_interval() {
        let m = preset("fefet").unwrap();
        let r = mc_write_latency(2, 2, &m, Scheme::WithVerification, LatencyMode::Analytic, 1, &mut seeded(2)).unwrap();
        assert_eq!(r.write.n, 1);
        assert!(r.write.ci95.is_none());
        assert!(mc_write_latency(2, 2, &m, Scheme::WithVerification, LatencyMode::Analytic, 0, &mut seeded(2)).is_err());
    }

    #[test]
    fn discrete_write_time_below_total() {
        let m = preset("ta_taox_pt").unwrap();
        let r = mc_write_latency(2, 2, &m, Scheme::WithVerification, LatencyMode::Discrete, 3, &mut seeded(3)).unwrap();
        assert!(r.write.mean < r.total.mean);
    }
}
