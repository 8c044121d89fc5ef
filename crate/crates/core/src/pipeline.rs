//! End-to-end MIMO-OFDM frames, parameter sweeps, image transfer and the
//! digital-baseline cost model.
//!
//! A frame carries `symbols` OFDM symbols: the first `pilots` hold a unitary
//! pilot matrix (the same on every sub-carrier), the rest carry 16-QAM data.
//! The receiver removes the prefix, applies the crossbar DFT to every block,
//! estimates the channel by least squares and detects each data vector on a
//! crossbar detector bank.
//!
//! Latency accounting: the detector banks are programmed at the start of the
//! frame; afterwards every OFDM symbol costs one DFT read plus one detector
//! settle, with one bank per sub-carrier working in parallel. The DFT arrays
//! are static and their programming is not charged to the frame.

use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{estimate_channel, noise_variance, sample_channel, unitary_pilot, ChannelRealization};
use crate::crossbar::{ProgramOptions, ProgramReport, Scheme};
use crate::device::{DevicePreset, DeviceModel};
use crate::error::{Error, Result};
use crate::linmap::{ComplexMatrix, C64};
use crate::mimo::{build_detector_bank, DetectMode, DetectorBank, DigitalDetector};
use crate::modem::{qam16_demodulate, qam16_modulate, Metrics, MetricsAccumulator};
use crate::ofdm::{build_dft_operator, cyclic_prefix, DftOperator, Direction, ExactDft, PrefixMode};
use crate::rng::{derive_seed, stream};
use crate::stats::summarize;

/// Labels of the per-frame random sub-streams.
pub mod streams {
    pub const BITS: u64 = 1;
    pub const CHANNEL: u64 = 2;
    /// Followed by the OFDM symbol index.
    pub const NOISE: u64 = 3;
    /// Followed by the chunk index.
    pub const DFT_READ: u64 = 4;
    pub const IDFT_READ: u64 = 5;
    /// Followed by the bank index.
    pub const BANK: u64 = 6;
    /// Followed by the chunk index.
    pub const DETECT: u64 = 7;
    /// Hardware-level streams, derived from the run seed.
    pub const DFT_PROGRAM: u64 = 100;
    pub const IDFT_PROGRAM: u64 = 101;
    pub const DEFECTS: u64 = 102;
}

/// OFDM symbols processed together.
pub const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Processing {
    /// Crossbar DFT and detection.
    Rram,
    /// Exact floating-point DFT and detection.
    Digital,
}

impl Processing {
    pub fn name(self) -> &'static str {
        match self {
            Processing::Rram => "rram",
            Processing::Digital => "digital",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfig {
    pub n_c: usize,
    pub n_t: usize,
    pub n_r: usize,
    pub pilots: usize,
    /// OFDM symbols per frame, pilots included.
    pub symbols: usize,
    pub snr_db: f64,
    pub scheme: Scheme,
    pub processing: Processing,
    pub detector: DetectMode,
    pub averaging: usize,
    pub device: DeviceModel,
    pub program: ProgramOptions,
    pub p_stuck_on: f64,
    pub p_stuck_off: f64,
    pub defect_correction: bool,
    /// Rayleigh fading; when false the channel is an identity.
    pub fading: bool,
    /// One channel for all sub-carriers.
    pub flat: bool,
    /// Defaults to `n_c / 8`.
    pub cp_len: Option<usize>,
    /// Host the transmit IDFT on a crossbar as well.
    pub crossbar_idft: bool,
    pub seed: u64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            n_c: 1024,
            n_t: 4,
            n_r: 4,
            pilots: 4,
            symbols: 14 * 160,
            snr_db: 20.0,
            scheme: Scheme::WithVerification,
            processing: Processing::Rram,
            detector: DetectMode::Lmmse,
            averaging: 1,
            device: DevicePreset::TaTaoxPt.model(),
            program: ProgramOptions::default(),
            p_stuck_on: 0.0,
            p_stuck_off: 0.0,
            defect_correction: false,
            fading: true,
            flat: true,
            cp_len: None,
            crossbar_idft: false,
            seed: 0,
        }
    }
}

impl FrameConfig {
    pub fn cp_len(&self) -> usize {
        self.cp_len.unwrap_or(self.n_c / 8)
    }

    pub fn data_symbols(&self) -> usize {
        self.symbols.saturating_sub(self.pilots)
    }

    /// Payload bits per frame.
    pub fn capacity_bits(&self) -> usize {
        self.data_symbols() * self.n_c * self.n_t * 4
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: usize| {
            if v == 0 {
                Err(Error::config(key, "must be positive"))
            } else {
                Ok(())
            }
        };
        positive("n_c", self.n_c)?;
        positive("n_t", self.n_t)?;
        positive("n_r", self.n_r)?;
        positive("averaging", self.averaging)?;
        if self.n_c < 2 || !self.n_c.is_power_of_two() {
            return Err(Error::config("n_c", format!("must be a power of two of at least 2, got {}", self.n_c)));
        }
        if self.pilots != self.n_t {
            return Err(Error::config("pilots", format!("must equal n_t ({}) for a square unitary pilot", self.n_t)));
        }
        if self.symbols <= self.pilots {
            return Err(Error::config("symbols", "must exceed the pilot count"));
        }
        if self.cp_len() >= self.n_c {
            return Err(Error::config("cp_len", "must be below n_c"));
        }
        if self.snr_db.is_nan() {
            return Err(Error::config("snr_db", "must be a number"));
        }
        let prob = |key: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::config(key, "must lie in [0, 1]"))
            }
        };
        prob("p_stuck_on", self.p_stuck_on)?;
        prob("p_stuck_off", self.p_stuck_off)?;
        if self.p_stuck_on + self.p_stuck_off > 1.0 {
            return Err(Error::config("p_stuck_off", "defect probabilities sum above 1"));
        }
        if !self.fading && self.n_t > self.n_r {
            return Err(Error::config("n_t", "an identity channel needs n_t <= n_r"));
        }
        if let Some(t) = self.program.tolerance {
            if !(t > 0.0) {
                return Err(Error::config("tolerance", "must be positive"));
            }
        }
        if self.program.max_pulses == Some(0) {
            return Err(Error::config("max_pulses", "must be positive"));
        }
        self.device.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameResult {
    pub metrics: Metrics,
    pub latency_program: f64,
    pub latency_data: f64,
    pub energy_program: f64,
    pub energy_data: f64,
    /// `symbols * n_c * n_t * 4` bits over the frame latency.
    pub throughput: f64,
    pub energy_efficiency: f64,
    /// Bits the frame is accounted for.
    pub frame_bits: u64,
    /// Detections whose circuit had no steady state.
    pub detection_failures: u64,
    pub unreached_cells: usize,
}

impl FrameResult {
    pub fn latency(&self) -> f64 {
        self.latency_program + self.latency_data
    }

    pub fn energy(&self) -> f64 {
        self.energy_program + self.energy_data
    }
}

/// Everything a frame produced.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub result: FrameResult,
    pub tx_bits: Vec<u8>,
    pub rx_bits: Vec<u8>,
    /// Data symbols in `(symbol, sub-carrier, antenna)` order.
    pub tx_symbols: Vec<C64>,
    pub rx_symbols: Vec<C64>,
    pub accumulator: MetricsAccumulator,
    pub channel: ChannelRealization,
}

enum Detectors {
    Digital(Vec<DigitalDetector>),
    Rram(Vec<DetectorBank>),
}

/// Static transceiver hardware: the DFT crossbars are programmed once and
/// reused by every frame.
#[derive(Debug)]
pub struct Transceiver {
    cfg: FrameConfig,
    pilot: ComplexMatrix,
    fft: ExactDft,
    ifft: ExactDft,
    dft: Option<DftOperator>,
    idft: Option<DftOperator>,
    dft_report: Option<ProgramReport>,
}

impl Transceiver {
    pub fn new(cfg: &FrameConfig) -> Result<Self> {
        cfg.validate()?;
        let rram = cfg.processing == Processing::Rram;
        let mut dft = None;
        let mut dft_report = None;
        let mut idft = None;
        if rram {
            let (mut op, rep) = build_dft_operator(
                cfg.n_c,
                Direction::Forward,
                &cfg.device,
                cfg.scheme,
                &cfg.program,
                &mut stream(cfg.seed, &[streams::DFT_PROGRAM]),
            )?;
            if cfg.p_stuck_on > 0.0 || cfg.p_stuck_off > 0.0 {
                op.inject_defects(cfg.p_stuck_on, cfg.p_stuck_off, cfg.defect_correction, &mut stream(cfg.seed, &[streams::DEFECTS]))?;
            }
            dft = Some(op);
            dft_report = Some(rep);
            if cfg.crossbar_idft {
                let (op, _) = build_dft_operator(
                    cfg.n_c,
                    Direction::Inverse,
                    &cfg.device,
                    cfg.scheme,
                    &cfg.program,
                    &mut stream(cfg.seed, &[streams::IDFT_PROGRAM]),
                )?;
                idft = Some(op);
            }
        }
        Ok(Self {
            pilot: unitary_pilot(cfg.n_t)?,
            fft: ExactDft::new(cfg.n_c, Direction::Forward),
            ifft: ExactDft::new(cfg.n_c, Direction::Inverse),
            cfg: cfg.clone(),
            dft,
            idft,
            dft_report,
        })
    }

    pub fn config(&self) -> &FrameConfig {
        &self.cfg
    }

    pub fn dft(&self) -> Option<&DftOperator> {
        self.dft.as_ref()
    }

    /// Cost of programming the receive DFT array (not charged to frames).
    pub fn dft_report(&self) -> Option<&ProgramReport> {
        self.dft_report.as_ref()
    }

    pub fn run_frame(&self, frame: u64, payload: Option<&[u8]>) -> Result<FrameOutput> {
        self.run_frame_at(frame, payload, self.cfg.snr_db)
    }

    /// Runs frame number `frame` at `snr_db`. `payload` fills the first data
    /// bits; the remainder is random padding.
    pub fn run_frame_at(&self, frame: u64, payload: Option<&[u8]>, snr_db: f64) -> Result<FrameOutput> {
        let c = &self.cfg;
        if snr_db.is_nan() {
            return Err(Error::config("snr_db", "must be a number"));
        }
        let (n_c, n_t, n_r, np) = (c.n_c, c.n_t, c.n_r, c.pilots);
        let seed = derive_seed(c.seed, &[frame]);
        let cap = c.capacity_bits();
        if let Some(p) = payload {
            if p.len() > cap {
                return Err(Error::InvalidInput(format!("payload of {} bits exceeds the frame capacity {cap}", p.len())));
            }
        }
        let mut brng = stream(seed, &[streams::BITS]);
        let bits: Vec<u8> = (0..cap)
            .map(|i| match payload {
                Some(p) if i < p.len() => p[i],
                _ => brng.random::<bool>() as u8,
            })
            .collect();
        let tx_symbols = qam16_modulate(&bits)?;

        let channel = if c.fading {
            sample_channel(n_t, n_r, n_c, c.flat, &mut stream(seed, &[streams::CHANNEL]))?
        } else {
            let eye = ComplexMatrix::from_fn(n_r, n_t, |r, t| if r == t { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
            ChannelRealization::from_matrices(vec![eye], n_c)?
        };

        // Transmit, propagate and transform back, chunk by chunk.
        let chunks: Vec<Range<usize>> = (0..c.symbols).step_by(CHUNK).map(|s| s..(s + CHUNK).min(c.symbols)).collect();
        let received: Vec<(Vec<C64>, f64)> = chunks
            .par_iter()
            .enumerate()
            .map(|(ci, range)| self.receive_chunk(seed, ci, range.clone(), &tx_symbols, &channel, snr_db))
            .collect::<Result<_>>()?;
        let mut dft_energy = 0.0;
        let mut y = Vec::with_capacity(c.symbols * n_r * n_c);
        for (block, e) in received {
            y.extend(block);
            dft_energy += e;
        }
        let at = |m: usize, r: usize, k: usize| y[(m * n_r + r) * n_c + k];

        // Least-squares estimate per sub-carrier, averaged when flat.
        let mut estimates: Vec<ComplexMatrix> = (0..n_c)
            .map(|k| estimate_channel(&ComplexMatrix::from_fn(n_r, np, |r, m| at(m, r, k)), &self.pilot))
            .collect::<Result<_>>()?;
        if c.flat {
            let mut avg = ComplexMatrix::zeros(n_r, n_t);
            for e in &estimates {
                avg = avg.add(e)?;
            }
            estimates = vec![avg.scale(C64::new(1.0 / n_c as f64, 0.0))];
        }

        let mut report = ProgramReport::default();
        let detectors = match c.processing {
            Processing::Digital => Detectors::Digital(
                estimates
                    .iter()
                    .map(|h| DigitalDetector::new(h, snr_db, c.detector))
                    .collect::<Result<_>>()?,
            ),
            Processing::Rram => {
                let mut banks = Vec::with_capacity(estimates.len());
                for (i, h) in estimates.iter().enumerate() {
                    let (bank, rep) = build_detector_bank(
                        h,
                        std::f64::consts::FRAC_1_SQRT_2,
                        snr_db,
                        c.detector,
                        &c.device,
                        c.scheme,
                        &c.program,
                        c.averaging,
                        &mut stream(seed, &[streams::BANK, i as u64]),
                    )?;
                    // Separate banks are separate hardware written side by side.
                    report = if i == 0 { rep } else { report.alongside(rep) };
                    banks.push(bank);
                }
                Detectors::Rram(banks)
            }
        };

        let n_data = c.data_symbols();
        let det_chunks: Vec<Range<usize>> = (0..n_data).step_by(CHUNK).map(|s| s..(s + CHUNK).min(n_data)).collect();
        let detected: Vec<(Vec<C64>, u64)> = det_chunks
            .par_iter()
            .enumerate()
            .map(|(ci, range)| {
                let mut rng = stream(seed, &[streams::DETECT, ci as u64]);
                let mut out = Vec::with_capacity(range.len() * n_c * n_t);
                let mut failures = 0u64;
                for md in range.clone() {
                    let m = md + np;
                    for k in 0..n_c {
                        let yv: Vec<C64> = (0..n_r).map(|r| at(m, r, k)).collect();
                        let which = if estimates.len() == 1 { 0 } else { k };
                        let x = match &detectors {
                            Detectors::Digital(d) => d[which].apply(&yv),
                            Detectors::Rram(b) => b[which].detect(&yv, &mut rng),
                        };
                        match x {
                            Ok(x) => out.extend(x),
                            Err(Error::Singular(_)) => {
                                failures += 1;
                                out.extend(std::iter::repeat_n(C64::new(0.0, 0.0), n_t));
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
                Ok((out, failures))
            })
            .collect::<Result<_>>()?;
        let mut rx_symbols = Vec::with_capacity(tx_symbols.len());
        let mut failures = 0;
        for (s, f) in detected {
            rx_symbols.extend(s);
            failures += f;
        }

        let rx_bits = qam16_demodulate(&rx_symbols);
        let mut acc = MetricsAccumulator::default();
        acc.add_symbols(&tx_symbols, &rx_symbols)?;
        let scored = payload.map_or(cap, |p| p.len());
        acc.add_bits(&bits[..scored], &rx_bits[..scored])?;

        let frame_bits = (c.symbols * n_c * n_t * 4) as u64;
        let (latency_program, latency_data, energy_program, energy_data) = match &detectors {
            Detectors::Digital(_) => (0.0, 0.0, 0.0, 0.0),
            Detectors::Rram(banks) => {
                let t_read = c.device.read_time();
                let per_bank = if banks.len() == 1 { (n_data * n_c) as f64 } else { n_data as f64 };
                let detect_energy: f64 = banks.iter().map(|b| b.settle_energy() * per_bank).sum();
                (report.latency, c.symbols as f64 * 2.0 * t_read, report.energy, dft_energy + detect_energy)
            }
        };
        let latency = latency_program + latency_data;
        let energy = energy_program + energy_data;
        let result = FrameResult {
            metrics: acc.finish(),
            latency_program,
            latency_data,
            energy_program,
            energy_data,
            throughput: frame_bits as f64 / latency,
            energy_efficiency: frame_bits as f64 / energy,
            frame_bits,
            detection_failures: failures,
            unreached_cells: report.unreached_cells.len(),
        };
        Ok(FrameOutput {
            result,
            tx_bits: bits,
            rx_bits,
            tx_symbols,
            rx_symbols,
            accumulator: acc,
            channel,
        })
    }

    /// Received frequency-domain blocks of OFDM symbols `range`, laid out
    /// `(symbol, rx antenna, sub-carrier)`, plus the DFT read energy.
    fn receive_chunk(
        &self,
        seed: u64,
        chunk: usize,
        range: Range<usize>,
        tx_symbols: &[C64],
        channel: &ChannelRealization,
        snr_db: f64,
    ) -> Result<(Vec<C64>, f64)> {
        let c = &self.cfg;
        let (n_c, n_t, n_r, np) = (c.n_c, c.n_t, c.n_r, c.pilots);
        let cp = c.cp_len();
        let nv = noise_variance(snr_db);
        let mut idft_rng = stream(seed, &[streams::IDFT_READ, chunk as u64]);
        let mut blocks = Vec::with_capacity(range.len() * n_r);
        for m in range {
            let xf: Vec<Vec<C64>> = (0..n_t)
                .map(|t| {
                    (0..n_c)
                        .map(|k| if m < np { self.pilot[(t, m)] } else { tx_symbols[((m - np) * n_c + k) * n_t + t] })
                        .collect()
                })
                .collect();
            let xt: Vec<Vec<C64>> = match &self.idft {
                Some(op) => op.apply_batch(&xf, &mut idft_rng)?.0,
                None => xf.iter().map(|x| self.ifft.apply(x)).collect::<Result<_>>()?,
            };
            let mut rx: Vec<Vec<C64>> = if channel.is_flat() {
                let h = channel.at(0);
                let with_cp: Vec<Vec<C64>> = xt.iter().map(|x| cyclic_prefix(x, cp, PrefixMode::Add)).collect::<Result<_>>()?;
                (0..n_r)
                    .map(|r| {
                        let mut out = vec![C64::new(0.0, 0.0); n_c + cp];
                        for (t, x) in with_cp.iter().enumerate() {
                            let g = h[(r, t)];
                            out.iter_mut().zip(x).for_each(|(o, v)| *o += g * v);
                        }
                        out
                    })
                    .collect()
            } else {
                // Per-sub-carrier propagation of the actually transmitted signal.
                let xs: Vec<Vec<C64>> = xt.iter().map(|x| self.fft.apply(x)).collect::<Result<_>>()?;
                (0..n_r)
                    .map(|r| {
                        let yf: Vec<C64> = (0..n_c).map(|k| (0..n_t).map(|t| channel.at(k)[(r, t)] * xs[t][k]).sum()).collect();
                        cyclic_prefix(&self.ifft.apply(&yf)?, cp, PrefixMode::Add)
                    })
                    .collect::<Result<_>>()?
            };
            let mut nrng = stream(seed, &[streams::NOISE, m as u64]);
            for block in rx.iter_mut() {
                crate::channel::add_awgn(block, nv, &mut nrng);
            }
            for block in &rx {
                blocks.push(cyclic_prefix(block, cp, PrefixMode::Remove)?);
            }
        }
        let (freq, energy) = match &self.dft {
            Some(op) => op.apply_batch(&blocks, &mut stream(seed, &[streams::DFT_READ, chunk as u64]))?,
            None => (blocks.iter().map(|b| self.fft.apply(b)).collect::<Result<_>>()?, 0.0),
        };
        Ok((freq.into_iter().flatten().collect(), energy))
    }
}

/// Builds the hardware and runs frame 0.
pub fn run_frame(cfg: &FrameConfig) -> Result<FrameResult> {
    Ok(Transceiver::new(cfg)?.run_frame(0, None)?.result)
}

/// A processing chain compared in sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Digital,
    Rram(Scheme),
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Digital => "digital",
            Variant::Rram(s) => s.name(),
        }
    }

    pub fn scheme_label(self) -> &'static str {
        match self {
            Variant::Digital => "none",
            Variant::Rram(s) => s.name(),
        }
    }

    pub fn mode_label(self) -> &'static str {
        match self {
            Variant::Digital => "digital",
            Variant::Rram(_) => "rram",
        }
    }

    pub fn apply(self, cfg: &FrameConfig) -> FrameConfig {
        let mut c = cfg.clone();
        match self {
            Variant::Digital => c.processing = Processing::Digital,
            Variant::Rram(s) => {
                c.processing = Processing::Rram;
                c.scheme = s;
            }
        }
        c
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "digital" {
            Ok(Variant::Digital)
        } else {
            s.parse::<Scheme>().map(Variant::Rram).map_err(|_| Error::config("variants", format!("unknown variant `{s}`")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub snr_db: f64,
    pub scheme: String,
    pub mode: String,
    pub trial: usize,
    pub mer_db: f64,
    pub ber: f64,
}

/// Runs `trials` frames per SNR value and variant. Trial `t` uses the same
/// bits, channel and noise for every variant and SNR.
pub fn sweep_snr(cfg: &FrameConfig, variants: &[Variant], snrs: &[f64], trials: usize) -> Result<Vec<MetricsRow>> {
    if snrs.is_empty() || variants.is_empty() {
        return Err(Error::config("snr_db", "sweep needs at least one value and one variant"));
    }
    if trials == 0 {
        return Err(Error::config("trials", "must be positive"));
    }
    let mut rows = Vec::new();
    for &v in variants {
        let tr = Transceiver::new(&v.apply(cfg))?;
        let jobs: Vec<(f64, usize)> = snrs.iter().flat_map(|&s| (0..trials).map(move |t| (s, t))).collect();
        let out: Vec<MetricsRow> = jobs
            .par_iter()
            .map(|&(snr, t)| {
                let r = tr.run_frame_at(t as u64, None, snr)?.result;
                Ok(MetricsRow {
                    snr_db: snr,
                    scheme: v.scheme_label().into(),
                    mode: v.mode_label().into(),
                    trial: t,
                    mer_db: r.metrics.mer_db,
                    ber: r.metrics.ber,
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(out);
    }
    rows.sort_by(|a, b| {
        a.snr_db
            .total_cmp(&b.snr_db)
            .then_with(|| a.scheme.cmp(&b.scheme))
            .then_with(|| a.mode.cmp(&b.mode))
            .then_with(|| a.trial.cmp(&b.trial))
    });
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub n_antennas: usize,
    pub scheme: String,
    /// Mean frame latency.
    pub latency_s: f64,
    /// Mean frame energy.
    pub energy_j: f64,
    /// Mean energy spent writing the detector arrays.
    pub program_energy_j: f64,
    /// 95% half-width of the latency mean.
    pub ci95: Option<f64>,
}

/// Frame latency and energy for `n_t = n_r = pilots = n`.
pub fn sweep_antennas(cfg: &FrameConfig, schemes: &[Scheme], ns: &[usize], trials: usize) -> Result<Vec<LatencyRow>> {
    if ns.is_empty() || schemes.is_empty() {
        return Err(Error::config("antennas", "sweep needs at least one value and one scheme"));
    }
    if trials == 0 {
        return Err(Error::config("trials", "must be positive"));
    }
    let mut rows = Vec::new();
    for &n in ns {
        for &s in schemes {
            let mut c = Variant::Rram(s).apply(cfg);
            c.n_t = n;
            c.n_r = n;
            c.pilots = n;
            let tr = Transceiver::new(&c)?;
            let results: Vec<FrameResult> = (0..trials)
                .into_par_iter()
                .map(|t| Ok(tr.run_frame(t as u64, None)?.result))
                .collect::<Result<_>>()?;
            let lat: Vec<f64> = results.iter().map(|r| r.latency()).collect();
            let en: Vec<f64> = results.iter().map(|r| r.energy()).collect();
            let pe: Vec<f64> = results.iter().map(|r| r.energy_program).collect();
            let ls = summarize(&lat);
            rows.push(LatencyRow {
                n_antennas: n,
                scheme: s.name().into(),
                latency_s: ls.mean,
                energy_j: summarize(&en).mean,
                program_energy_j: summarize(&pe).mean,
                ci95: ls.ci95,
            });
        }
    }
    rows.sort_by(|a, b| a.n_antennas.cmp(&b.n_antennas).then_with(|| a.scheme.cmp(&b.scheme)));
    Ok(rows)
}

/// 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Image(format!("{} pixels for a {width}x{height} image", pixels.len())));
        }
        Ok(Self { width, height, pixels })
    }

    /// Parses binary PGM (P5) with maxval at most 255.
    pub fn read_pgm(data: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut token = || -> Result<String> {
            loop {
                while pos < data.len() && data[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < data.len() && data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Image("truncated PGM header".into()));
            }
            Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
        };
        if token()? != "P5" {
            return Err(Error::Image("not a binary PGM (P5) file".into()));
        }
        let mut num = |name: &str| -> Result<usize> {
            token()?.parse().map_err(|_| Error::Image(format!("bad PGM {name}")))
        };
        let width = num("width")?;
        let height = num("height")?;
        let maxval = num("maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::Image(format!("only 8-bit PGM is supported (maxval {maxval})")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        let start = pos + 1;
        let end = start + width * height;
        if end > data.len() {
            return Err(Error::Image("truncated PGM raster".into()));
        }
        Self::new(width, height, data[start..end].to_vec())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|&p| (0..8).rev().map(move |i| (p >> i) & 1)).collect()
    }

    pub fn from_bits(width: usize, height: usize, bits: &[u8]) -> Result<Self> {
        let pixels = bits.chunks(8).take(width * height).map(|b| b.iter().fold(0u8, |a, &x| (a << 1) | x)).collect();
        Self::new(width, height, pixels)
    }
}

/// Sends the image through as many frames as needed.
pub fn transmit_image(image: &GrayImage, cfg: &FrameConfig) -> Result<(GrayImage, Metrics)> {
    let tr = Transceiver::new(cfg)?;
    let bits = image.to_bits();
    let cap = cfg.capacity_bits();
    let mut rx = Vec::with_capacity(bits.len());
    let mut acc = MetricsAccumulator::default();
    for (f, part) in bits.chunks(cap).enumerate() {
        let out = tr.run_frame(f as u64, Some(part))?;
        rx.extend_from_slice(&out.rx_bits[..part.len()]);
        acc.merge(&out.accumulator);
    }
    Ok((GrayImage::from_bits(image.width, image.height, &rx)?, acc.finish()))
}

/// Published figures of a digital baseband implementation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessorProfile {
    pub name: String,
    /// FFT processor clock, Hz.
    pub fft_clock_hz: Option<f64>,
    /// Cycles per OFDM-symbol FFT.
    pub fft_cycles: Option<f64>,
    /// FFTs per joule.
    pub ffts_per_joule: Option<f64>,
    /// Detector clock, Hz.
    pub detection_clock_hz: Option<f64>,
    /// Energy per MIMO detection, J.
    pub detection_energy: Option<f64>,
}

impl ProcessorProfile {
    /// 65 nm FFT processor plus 65 nm LU-based MIMO detector.
    pub fn combined_65nm() -> Self {
        Self {
            name: "combined_65nm".into(),
            fft_clock_hz: Some(250e6),
            fft_cycles: Some(688.0),
            ffts_per_joule: Some(2.07e6),
            detection_clock_hz: Some(625e6),
            detection_energy: Some(153.6e-12),
        }
    }
}

/// Data and pilot symbol counts of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Workload {
    pub n_c: usize,
    pub n_t: usize,
    pub pilots: usize,
    pub data_symbols: usize,
}

impl From<&FrameConfig> for Workload {
    fn from(c: &FrameConfig) -> Self {
        Self {
            n_c: c.n_c,
            n_t: c.n_t,
            pilots: c.pilots,
            data_symbols: c.data_symbols(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub fft_latency: f64,
    pub detection_latency: f64,
    pub fft_energy: f64,
    pub detection_energy: f64,
}

impl CostReport {
    pub fn latency(&self) -> f64 {
        self.fft_latency + self.detection_latency
    }

    pub fn energy(&self) -> f64 {
        self.fft_energy + self.detection_energy
    }
}

/// Gaussian-elimination cost model: forward elimination (`2N(N-1)` cycles)
/// once per sub-carrier and back substitution (`N(N-1)` cycles) per data
/// symbol and sub-carrier; one FFT per OFDM symbol.
pub fn digital_cost(w: &Workload, profile: &ProcessorProfile) -> Result<CostReport> {
    let need = |v: Option<f64>, key: &str| -> Result<f64> {
        match v {
            Some(x) if x > 0.0 && x.is_finite() => Ok(x),
            Some(_) => Err(Error::config(key, "must be positive")),
            None => Err(Error::config(key, format!("missing from profile `{}`", profile.name))),
        }
    };
    let fft_clock = need(profile.fft_clock_hz, "fft_clock_hz")?;
    let fft_cycles = need(profile.fft_cycles, "fft_cycles")?;
    let ffts_per_joule = need(profile.ffts_per_joule, "ffts_per_joule")?;
    let det_clock = need(profile.detection_clock_hz, "detection_clock_hz")?;
    let det_energy = need(profile.detection_energy, "detection_energy")?;
    let n = w.n_t as f64;
    let forward = 2.0 * n * (n - 1.0);
    let backward = n * (n - 1.0);
    let ffts = (w.data_symbols + w.pilots) as f64;
    let data = w.data_symbols as f64;
    let nc = w.n_c as f64;
    Ok(CostReport {
        fft_latency: fft_cycles * ffts / fft_clock,
        detection_latency: nc * (forward + backward * data) / det_clock,
        fft_energy: ffts / ffts_per_joule,
        detection_energy: det_energy * backward * data * nc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::preset;

    fn small() -> FrameConfig {
        FrameConfig {
            n_c: 16,
            symbols: 12,
            ..FrameConfig::default()
        }
    }

    #[test]
    fn defaults_validate() {
        let c = FrameConfig::default();
        c.validate().unwrap();
        assert_eq!(c.cp_len(), 128);
        let bad = FrameConfig { n_t: 0, ..FrameConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config { key, .. }) if key == "n_t"));
        let bad = FrameConfig { symbols: 4, ..FrameConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn ideal_noiseless_frame_is_error_free() {
        let c = FrameConfig {
            snr_db: f64::INFINITY,
            scheme: Scheme::Exact,
            device: preset("ta_taox_pt").unwrap().noiseless(),
            ..small()
        };
        let r = run_frame(&c).unwrap();
        assert_eq!(r.metrics.ber, 0.0);
        assert!(r.metrics.mer_db > 150.0, "{}", r.metrics.mer_db);
    }

    #[test]
    fn throughput_identity() {
        let r = run_frame(&small()).unwrap();
        assert_eq!(r.throughput, r.frame_bits as f64 / (r.latency_program + r.latency_data));
        assert_eq!(r.energy_efficiency, r.frame_bits as f64 / (r.energy_program + r.energy_data));
        assert_eq!(r.latency_data, 12.0 * 2.0 * 10e-9);
    }

    #[test]
    fn deterministic() {
        let c = small();
        let a = run_frame(&c).unwrap();
        let b = run_frame(&c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cost_arithmetic() {
        let w = Workload::from(&FrameConfig::default());
        let r = digital_cost(&w, &ProcessorProfile::combined_65nm()).unwrap();
        assert!((r.latency() - 0.050_165_35).abs() < 1e-9);
        assert!((r.energy() - 0.005_302_4).abs() < 1e-7);
        let empty = Workload { data_symbols: 0, ..w };
        let r = digital_cost(&empty, &ProcessorProfile::combined_65nm()).unwrap();
        assert!((r.fft_latency - 688.0 * 4.0 / 250e6).abs() < 1e-18);
        assert_eq!(r.detection_energy, 0.0);
        let missing = ProcessorProfile { fft_cycles: None, ..ProcessorProfile::combined_65nm() };
        assert!(matches!(digital_cost(&w, &missing), Err(Error::Config { key, .. }) if key == "fft_cycles"));
    }

    #[test]
    fn pgm_round_trip() {
        let img = GrayImage::new(3, 2, vec![0, 1, 2, 250, 128, 255]).unwrap();
        let bytes = img.to_pgm();
        assert_eq!(GrayImage::read_pgm(&bytes).unwrap(), img);
        let with_comment = b"P5\n# hi\n3 2\n255\n\x00\x01\x02\xfa\x80\xff";
        assert_eq!(GrayImage::read_pgm(with_comment).unwrap(), img);
        assert!(GrayImage::read_pgm(b"P2\n1 1\n255\n0").is_err());
        assert_eq!(GrayImage::from_bits(3, 2, &img.to_bits()).unwrap(), img);
    }

    #[test]
    fn variants_parse() {
        assert_eq!("digital".parse::<Variant>().unwrap(), Variant::Digital);
        assert_eq!("with_verification".parse::<Variant>().unwrap(), Variant::Rram(Scheme::WithVerification));
        assert!("bogus".parse::<Variant>().is_err());
    }
}
