//! Behavioral model of a single memristive cell.
//!
//! Each write pulse moves the conductance by one nominal step
//! `(g_max - g_min) / n_states` plus Gaussian cycle-to-cycle noise whose
//! standard deviation is `gamma` times the full conductance range. Reads add
//! independent Gaussian noise. Conductances are in siemens, times in seconds.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Behavioral parameters of one device technology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceModel {
    pub g_min: f64,
    pub g_max: f64,
    /// Pulses needed to sweep the full range.
    pub n_states: u32,
    pub pulse_width: f64,
    /// Cycle-to-cycle variation of potentiation, as a fraction of the range.
    pub gamma_pot: f64,
    /// Cycle-to-cycle variation of depression, as a fraction of the range.
    pub gamma_dep: f64,
    pub v_set: f64,
    pub v_reset: f64,
    pub v_read: f64,
    pub v_full_reset: f64,
    /// Standard deviation of read noise (siemens).
    pub sigma_read: f64,
}

/// The device technologies characterized for the simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DevicePreset {
    /// Ta/TaOx/Pt filamentary RRAM.
    TaTaoxPt,
    /// TiN/HZO/SiO2/Si ferroelectric FET.
    Fefet,
    /// Ag/PZT/Nb:SrTiO3 ferroelectric tunnel junction, 10 ns pulses.
    Ftj10ns,
    /// Same FTJ stack driven with 630 ps pulses.
    Ftj630ps,
}

impl DevicePreset {
    pub const ALL: [DevicePreset; 4] = [Self::TaTaoxPt, Self::Fefet, Self::Ftj10ns, Self::Ftj630ps];

    pub fn name(self) -> &'static str {
        match self {
            Self::TaTaoxPt => "ta_taox_pt",
            Self::Fefet => "fefet",
            Self::Ftj10ns => "ftj_10ns",
            Self::Ftj630ps => "ftj_630ps",
        }
    }

    pub fn model(self) -> DeviceModel {
        // Read noise of the measured RRAM (1 uS) as a fraction of its range;
        // the other technologies reuse the same relative read precision.
        const READ_FRACTION: f64 = 1.0e-6 / (230.99e-6 - 79.93e-6);
        let (g_min, g_max, n_states, pulse_width, gamma_pot, gamma_dep, v_set, v_reset) = match self {
            Self::TaTaoxPt => (79.93e-6, 230.99e-6, 256, 10e-9, 0.0441, 0.0544, 0.65, -0.575),
            Self::Fefet => (0.04e-6, 1.79e-6, 32, 75e-9, 0.005, 0.005, 3.65, -2.95),
            Self::Ftj10ns => (1e-6, 80e-6, 256, 10e-9, 0.0206, 0.0206, 1.675, -3.5),
            Self::Ftj630ps => (1e-6, 27.5e-6, 150, 630e-12, 0.0365, 0.0365, 4.0, -5.0),
        };
        let (v_full_reset, sigma_read) = match self {
            Self::TaTaoxPt => (-1.5, 1e-6),
            _ => (v_reset, READ_FRACTION * (g_max - g_min)),
        };
        DeviceModel {
            g_min,
            g_max,
            n_states,
            pulse_width,
            gamma_pot,
            gamma_dep,
            v_set,
            v_reset,
            v_read: 0.15,
            v_full_reset,
            sigma_read,
        }
    }
}

impl fmt::Display for DevicePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DevicePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("preset", format!("unknown device preset `{s}`")))
    }
}

/// Looks up a preset by its identifier.
pub fn preset(name: &str) -> Result<DeviceModel> {
    Ok(name.parse::<DevicePreset>()?.model())
}

/// Drift-diffusion parameters of the continuous write model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftParams {
    /// Mean conductance slope, S/s.
    pub mu: f64,
    /// Diffusion coefficient, S/sqrt(s).
    pub sigma: f64,
    /// Per-pulse noise standard deviation, S.
    pub sigma_c: f64,
}

impl DeviceModel {
    pub fn range(&self) -> f64 {
        self.g_max - self.g_min
    }

    /// Nominal conductance change of one write pulse.
    pub fn step(&self) -> f64 {
        self.range() / self.n_states as f64
    }

    pub fn sigma_c_pot(&self) -> f64 {
        self.gamma_pot * self.range()
    }

    pub fn sigma_c_dep(&self) -> f64 {
        self.gamma_dep * self.range()
    }

    /// Read pulse duration; equal to the write pulse width.
    pub fn read_time(&self) -> f64 {
        self.pulse_width
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(Error::config(key, msg)) };
        check(self.g_min.is_finite() && self.g_min >= 0.0, "g_min", "must be finite and >= 0")?;
        check(self.g_max.is_finite() && self.g_max > self.g_min, "g_max", "must exceed g_min")?;
        check(self.n_states >= 2, "n_states", "must be at least 2")?;
        check(self.pulse_width.is_finite() && self.pulse_width > 0.0, "pulse_width", "must be positive")?;
        check((0.0..1.0).contains(&self.gamma_pot), "gamma_pot", "must lie in [0, 1)")?;
        check((0.0..1.0).contains(&self.gamma_dep), "gamma_dep", "must lie in [0, 1)")?;
        check(self.sigma_read.is_finite() && self.sigma_read >= 0.0, "sigma_read", "must be >= 0")?;
        for (key, v) in [
            ("v_set", self.v_set),
            ("v_reset", self.v_reset),
            ("v_read", self.v_read),
            ("v_full_reset", self.v_full_reset),
        ] {
            check(v.is_finite(), key, "must be finite")?;
        }
        Ok(())
    }

    /// `mu = range / (n_states * pulse_width)`, `sigma = sigma_c / sqrt(pulse_width)`,
    /// with `sigma_c` taken from the potentiation variation.
    pub fn drift_params(&self) -> DriftParams {
        let sigma_c = self.sigma_c_pot();
        DriftParams {
            mu: self.range() / (self.n_states as f64 * self.pulse_width),
            sigma: sigma_c / self.pulse_width.sqrt(),
            sigma_c,
        }
    }

    /// Same device with cycle-to-cycle and read noise removed.
    pub fn noiseless(&self) -> Self {
        Self {
            gamma_pot: 0.0,
            gamma_dep: 0.0,
            sigma_read: 0.0,
            ..self.clone()
        }
    }
}

pub fn drift_params(model: &DeviceModel) -> DriftParams {
    model.drift_params()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defect {
    Healthy,
    StuckOn,
    StuckOff,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellState {
    pub conductance: f64,
    pub defect: Defect,
}

impl CellState {
    pub fn healthy(conductance: f64) -> Self {
        Self {
            conductance,
            defect: Defect::Healthy,
        }
    }

    /// Marks the cell defective and pins its conductance.
    pub fn with_defect(self, defect: Defect, model: &DeviceModel) -> Self {
        let conductance = match defect {
            Defect::Healthy => self.conductance,
            Defect::StuckOn => model.g_max,
            Defect::StuckOff => model.g_min,
        };
        Self { conductance, defect }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pulse {
    Potentiate,
    Depress,
    FullReset,
}

impl Pulse {
    pub fn voltage(self, model: &DeviceModel) -> f64 {
        match self {
            Pulse::Potentiate => model.v_set,
            Pulse::Depress => model.v_reset,
            Pulse::FullReset => model.v_full_reset,
        }
    }
}

/// Applies one pulse. Healthy cells move by one noisy step and are clamped to
/// the physical range; a full reset lands exactly on `g_min`. Defective cells
/// do not respond.
pub fn apply_write_pulse<R: Rng + ?Sized>(state: CellState, pulse: Pulse, model: &DeviceModel, rng: &mut R) -> CellState {
    if state.defect != Defect::Healthy {
        return state;
    }
    let g = match pulse {
        Pulse::FullReset => model.g_min,
        Pulse::Potentiate => {
            let n: f64 = rng.sample(StandardNormal);
            state.conductance + model.step() + model.sigma_c_pot() * n
        }
        Pulse::Depress => {
            let n: f64 = rng.sample(StandardNormal);
            state.conductance - model.step() + model.sigma_c_dep() * n
        }
    };
    CellState::healthy(g.clamp(model.g_min, model.g_max))
}

/// Noisy read of the cell conductance.
pub fn read_conductance<R: Rng + ?Sized>(state: CellState, model: &DeviceModel, rng: &mut R) -> f64 {
    if model.sigma_read == 0.0 {
        return state.conductance;
    }
    let n: f64 = rng.sample(StandardNormal);
    state.conductance + model.sigma_read * n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::stats::{mean, variance};

    #[test]
    fn table_values() {
        let ta = preset("ta_taox_pt").unwrap();
        assert_eq!(ta.g_max, 230.99e-6);
        assert_eq!(ta.g_min, 79.93e-6);
        assert_eq!(ta.n_states, 256);
        assert_eq!((ta.gamma_pot, ta.gamma_dep), (0.0441, 0.0544));
        assert_eq!((ta.v_set, ta.v_reset, ta.v_read, ta.v_full_reset), (0.65, -0.575, 0.15, -1.5));
        assert_eq!(ta.sigma_read, 1e-6);

        let fe = preset("fefet").unwrap();
        assert_eq!((fe.n_states, fe.pulse_width, fe.gamma_pot), (32, 75e-9, 0.005));
        assert_eq!((fe.g_max, fe.g_min, fe.v_set, fe.v_reset), (1.79e-6, 0.04e-6, 3.65, -2.95));

        let ftj = preset("ftj_630ps").unwrap();
        assert_eq!((ftj.n_states, ftj.pulse_width, ftj.gamma_pot), (150, 630e-12, 0.0365));
        assert_eq!((ftj.g_max, ftj.g_min), (27.5e-6, 1e-6));

        for p in DevicePreset::ALL {
            p.model().validate().unwrap();
        }
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(preset("pcm"), Err(Error::Config { .. })));
    }

    #[test]
    fn slope_of_measured_rram() {
        let d = preset("ta_taox_pt").unwrap().drift_params();
        let expected = (230.99e-6 - 79.93e-6) / (256.0 * 10e-9);
        assert!((d.mu - expected).abs() < 1e-9);
        assert!((d.mu - 59.0).abs() < 0.01);
    }

    #[test]
    fn drift_scaling() {
        let m = preset("ta_taox_pt").unwrap();
        let half = DeviceModel {
            pulse_width: m.pulse_width / 2.0,
            ..m.clone()
        };
        let (a, b) = (m.drift_params(), half.drift_params());
        assert!((b.mu / a.mu - 2.0).abs() < 1e-12);
        assert!((b.sigma / a.sigma - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.noiseless().drift_params().sigma, 0.0);
    }

    #[test]
    fn noiseless_steps_are_exact() {
        let m = preset("ta_taox_pt").unwrap().noiseless();
        let mut rng = seeded(1);
        let mut s = CellState::healthy(m.g_min);
        for n in 1..=m.n_states {
            s = apply_write_pulse(s, Pulse::Potentiate, &m, &mut rng);
            let expected = m.g_min + n as f64 * m.step();
            assert!((s.conductance - expected).abs() <= 1e-12 * m.g_max, "n={n}");
        }
        assert_eq!(s.conductance, m.g_max);
        s = apply_write_pulse(s, Pulse::FullReset, &m, &mut rng);
        assert_eq!(s.conductance, m.g_min);
    }

    #[test]
    fn pulse_moments() {
        let m = preset("ta_taox_pt").unwrap();
        let mut rng = seeded(2);
        let start = CellState::healthy(0.5 * (m.g_min + m.g_max));
        let deltas: Vec<f64> = (0..100_000)
            .map(|_| apply_write_pulse(start, Pulse::Potentiate, &m, &mut rng).conductance - start.conductance)
            .collect();
        // Mid-range start: clamping at +-75 uS is > 11 sigma away.
        assert!((mean(&deltas) - m.step()).abs() < 3.0 * m.sigma_c_pot() / (1e5f64).sqrt());
        let var_ratio = variance(&deltas) / m.sigma_c_pot().powi(2);
        assert!((var_ratio - 1.0).abs() < 0.05, "{var_ratio}");
    }

    #[test]
    fn reads() {
        let m = preset("ta_taox_pt").unwrap();
        let mut rng = seeded(3);
        let s = CellState::healthy(150e-6);
        assert_eq!(read_conductance(s, &m.noiseless(), &mut rng), 150e-6);
        let xs: Vec<f64> = (0..100_000).map(|_| read_conductance(s, &m, &mut rng)).collect();
        assert!((variance(&xs).sqrt() / m.sigma_read - 1.0).abs() < 0.05);

        let stuck = s.with_defect(Defect::StuckOn, &m);
        let after = apply_write_pulse(stuck, Pulse::FullReset, &m, &mut rng);
        assert_eq!(after.conductance, m.g_max);
        let r: Vec<f64> = (0..1000).map(|_| read_conductance(after, &m, &mut rng)).collect();
        assert!((mean(&r) - m.g_max).abs() < 4.0 * m.sigma_read / 1000f64.sqrt());
    }
}
