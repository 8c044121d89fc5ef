//! Experiment configuration files.
//!
//! TOML with the sections `[frame]`, `[device]`, `[programming]`,
//! `[defects]`, `[sweep]` and `[bounds]`. Every key is optional; unknown
//! keys are rejected. Defaults are the full-size link with the Ta/TaOx/Pt
//! device.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crossbar::{ProgramOptions, Scheme};
use crate::device::{DeviceModel, DevicePreset};
use crate::error::{Error, Result};
use crate::latency_theory::LatencyMode;
use crate::mimo::DetectMode;
use crate::pipeline::{FrameConfig, Processing, Variant};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameSection {
    n_c: Option<usize>,
    n_t: Option<usize>,
    n_r: Option<usize>,
    pilots: Option<usize>,
    symbols: Option<usize>,
    snr_db: Option<f64>,
    scheme: Option<Scheme>,
    processing: Option<Processing>,
    detector: Option<DetectMode>,
    averaging: Option<usize>,
    fading: Option<bool>,
    flat: Option<bool>,
    cp_len: Option<usize>,
    crossbar_idft: Option<bool>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceSection {
    preset: Option<String>,
    g_min: Option<f64>,
    g_max: Option<f64>,
    n_states: Option<u32>,
    pulse_width: Option<f64>,
    gamma_pot: Option<f64>,
    gamma_dep: Option<f64>,
    v_set: Option<f64>,
    v_reset: Option<f64>,
    v_read: Option<f64>,
    v_full_reset: Option<f64>,
    sigma_read: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DefectSection {
    p_stuck_on: Option<f64>,
    p_stuck_off: Option<f64>,
    correction: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    snr_db: Option<Vec<f64>>,
    antennas: Option<Vec<usize>>,
    trials: Option<usize>,
    variants: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsSection {
    n: Option<Vec<usize>>,
    trials: Option<usize>,
    modes: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ConfigFile {
    frame: FrameSection,
    device: DeviceSection,
    programming: ProgramOptions,
    defects: DefectSection,
    sweep: SweepSection,
    bounds: BoundsSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    pub antennas: Vec<usize>,
    pub trials: usize,
    pub variants: Vec<Variant>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            antennas: vec![2, 4, 8, 16, 32],
            trials: 20,
            variants: vec![
                Variant::Digital,
                Variant::Rram(Scheme::WithVerification),
                Variant::Rram(Scheme::WithoutVerification),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsConfig {
    pub n: Vec<usize>,
    pub trials: usize,
    pub modes: Vec<LatencyMode>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            n: vec![2, 4, 8, 16, 32],
            trials: 200,
            modes: vec![LatencyMode::Analytic],
        }
    }
}

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub frame: FrameConfig,
    /// Preset the device parameters started from.
    pub device_preset: DevicePreset,
    pub sweep: SweepConfig,
    pub bounds: BoundsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            device_preset: DevicePreset::TaTaoxPt,
            sweep: SweepConfig::default(),
            bounds: BoundsConfig::default(),
        }
    }
}

fn parse_mode(s: &str) -> Result<LatencyMode> {
    match s {
        "analytic" => Ok(LatencyMode::Analytic),
        "discrete" => Ok(LatencyMode::Discrete),
        _ => Err(Error::config("modes", format!("unknown latency mode `{s}`"))),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses configuration text; errors carry the line number or the key.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    resolve(file)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

fn resolve(file: ConfigFile) -> Result<RunConfig> {
    let d = RunConfig::default();
    let f = file.frame;
    let dev = file.device;
    let device_preset: DevicePreset = match &dev.preset {
        Some(p) => p.parse().map_err(|_| Error::config("preset", format!("unknown device preset `{p}`")))?,
        None => d.device_preset,
    };
    let base = device_preset.model();
    let device = DeviceModel {
        g_min: dev.g_min.unwrap_or(base.g_min),
        g_max: dev.g_max.unwrap_or(base.g_max),
        n_states: dev.n_states.unwrap_or(base.n_states),
        pulse_width: dev.pulse_width.unwrap_or(base.pulse_width),
        gamma_pot: dev.gamma_pot.unwrap_or(base.gamma_pot),
        gamma_dep: dev.gamma_dep.unwrap_or(base.gamma_dep),
        v_set: dev.v_set.unwrap_or(base.v_set),
        v_reset: dev.v_reset.unwrap_or(base.v_reset),
        v_read: dev.v_read.unwrap_or(base.v_read),
        v_full_reset: dev.v_full_reset.unwrap_or(base.v_full_reset),
        sigma_read: dev.sigma_read.unwrap_or(base.sigma_read),
    };
    let df = d.frame;
    let frame = FrameConfig {
        n_c: f.n_c.unwrap_or(df.n_c),
        n_t: f.n_t.unwrap_or(df.n_t),
        n_r: f.n_r.unwrap_or(df.n_r),
        pilots: f.pilots.or(f.n_t).unwrap_or(df.pilots),
        symbols: f.symbols.unwrap_or(df.symbols),
        snr_db: f.snr_db.unwrap_or(df.snr_db),
        scheme: f.scheme.unwrap_or(df.scheme),
        processing: f.processing.unwrap_or(df.processing),
        detector: f.detector.unwrap_or(df.detector),
        averaging: f.averaging.unwrap_or(df.averaging),
        device,
        program: file.programming,
        p_stuck_on: file.defects.p_stuck_on.unwrap_or(df.p_stuck_on),
        p_stuck_off: file.defects.p_stuck_off.unwrap_or(df.p_stuck_off),
        defect_correction: file.defects.correction.unwrap_or(df.defect_correction),
        fading: f.fading.unwrap_or(df.fading),
        flat: f.flat.unwrap_or(df.flat),
        cp_len: f.cp_len.or(df.cp_len),
        crossbar_idft: f.crossbar_idft.unwrap_or(df.crossbar_idft),
        seed: f.seed.unwrap_or(df.seed),
    };
    frame.validate()?;

    let s = file.sweep;
    let sweep = SweepConfig {
        snr_db: s.snr_db.unwrap_or(d.sweep.snr_db),
        antennas: s.antennas.unwrap_or(d.sweep.antennas),
        trials: s.trials.unwrap_or(d.sweep.trials),
        variants: match s.variants {
            Some(v) => v.iter().map(|x| x.parse()).collect::<Result<_>>()?,
            None => d.sweep.variants,
        },
    };
    if sweep.trials == 0 {
        return Err(Error::config("trials", "must be positive"));
    }
    if sweep.snr_db.iter().any(|x| x.is_nan()) {
        return Err(Error::config("snr_db", "sweep values must be numbers"));
    }
    if sweep.antennas.contains(&0) {
        return Err(Error::config("antennas", "must be positive"));
    }

    let b = file.bounds;
    let bounds = BoundsConfig {
        n: b.n.unwrap_or(d.bounds.n),
        trials: b.trials.unwrap_or(d.bounds.trials),
        modes: match b.modes {
            Some(v) => v.iter().map(|x| parse_mode(x)).collect::<Result<_>>()?,
            None => d.bounds.modes,
        },
    };
    if bounds.trials == 0 {
        return Err(Error::config("trials", "must be positive"));
    }
    if bounds.n.iter().any(|&n| n < 2) {
        return Err(Error::config("n", "bounds need at least two antennas"));
    }
    Ok(RunConfig {
        frame,
        device_preset,
        sweep,
        bounds,
    })
}

/// Serializes every effective setting; the output re-parses to `cfg`.
pub fn to_toml(cfg: &RunConfig) -> Result<String> {
    let f = &cfg.frame;
    let m = &f.device;
    let file = ConfigFile {
        frame: FrameSection {
            n_c: Some(f.n_c),
            n_t: Some(f.n_t),
            n_r: Some(f.n_r),
            pilots: Some(f.pilots),
            symbols: Some(f.symbols),
            snr_db: Some(f.snr_db),
            scheme: Some(f.scheme),
            processing: Some(f.processing),
            detector: Some(f.detector),
            averaging: Some(f.averaging),
            fading: Some(f.fading),
            flat: Some(f.flat),
            cp_len: f.cp_len,
            crossbar_idft: Some(f.crossbar_idft),
            seed: Some(f.seed),
        },
        device: DeviceSection {
            preset: Some(cfg.device_preset.name().into()),
            g_min: Some(m.g_min),
            g_max: Some(m.g_max),
            n_states: Some(m.n_states),
            pulse_width: Some(m.pulse_width),
            gamma_pot: Some(m.gamma_pot),
            gamma_dep: Some(m.gamma_dep),
            v_set: Some(m.v_set),
            v_reset: Some(m.v_reset),
            v_read: Some(m.v_read),
            v_full_reset: Some(m.v_full_reset),
            sigma_read: Some(m.sigma_read),
        },
        programming: f.program,
        defects: DefectSection {
            p_stuck_on: Some(f.p_stuck_on),
            p_stuck_off: Some(f.p_stuck_off),
            correction: Some(f.defect_correction),
        },
        sweep: SweepSection {
            snr_db: Some(cfg.sweep.snr_db.clone()),
            antennas: Some(cfg.sweep.antennas.clone()),
            trials: Some(cfg.sweep.trials),
            variants: Some(cfg.sweep.variants.iter().map(|v| v.name().to_string()).collect()),
        },
        bounds: BoundsSection {
            n: Some(cfg.bounds.n.clone()),
            trials: Some(cfg.bounds.trials),
            modes: Some(cfg.bounds.modes.iter().map(|m| m.name().to_string()).collect()),
        },
    };
    toml::to_string(&file).map_err(|e| Error::InvalidInput(format!("cannot serialize config: {e}")))
}
