//! Differential-pair crossbar arrays.
//!
//! A signed value is stored as `G+ - G-` on two physical arrays; with an
//! averaging factor `k` every pair is replicated `k` times and the decoded
//! value is the mean of the copies. Arrays are written row by row: the cells
//! of one row are pulsed in parallel, so a row costs as much as its slowest
//! cell, and rows add up.
//!
//! Energy follows an Ohmic policy: every pulse dissipates `V^2 * G * dt`
//! with the conductance seen at the start of the pulse.

use std::io::Write;
use std::sync::Mutex;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{apply_write_pulse, read_conductance, CellState, Defect, DeviceModel, Pulse};
use crate::error::{Error, Result};
use crate::linmap::RealMatrix;
use crate::rng::{self, SimRng};

/// How target conductances are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Pre-computed number of potentiation pulses, no reads.
    WithoutVerification,
    /// Write/read iterations until the read-back value is within tolerance.
    WithVerification,
    /// Idealized writer that lands exactly on the target; charged as the
    /// nominal open-loop pulse count. Used for oracle comparisons.
    Exact,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::WithoutVerification => "without_verification",
            Scheme::WithVerification => "with_verification",
            Scheme::Exact => "exact",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Scheme::WithoutVerification, Scheme::WithVerification, Scheme::Exact]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config("scheme", format!("unknown programming scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Plus => "plus",
            Side::Minus => "minus",
        }
    }
}

/// Verification tolerance and pulse budget. `None` picks the device default:
/// half a nominal step and `50 * n_states` pulses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramOptions {
    pub tolerance: Option<f64>,
    pub max_pulses: Option<u32>,
}

impl ProgramOptions {
    pub fn tolerance(&self, model: &DeviceModel) -> f64 {
        self.tolerance.unwrap_or(model.step() / 2.0)
    }

    pub fn max_pulses(&self, model: &DeviceModel) -> u32 {
        self.max_pulses.unwrap_or(50 * model.n_states)
    }

    fn validate(&self, scheme: Scheme) -> Result<()> {
        if let Some(t) = self.tolerance {
            if scheme == Scheme::WithVerification && !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("tolerance", "must be positive for with_verification"));
            }
        }
        if self.max_pulses == Some(0) {
            return Err(Error::config("max_pulses", "must be positive"));
        }
        Ok(())
    }
}

/// Per-pair target conductances for a real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceTargets {
    rows: usize,
    cols: usize,
    plus: Vec<f64>,
    minus: Vec<f64>,
    /// Siemens per unit value.
    pub alpha: f64,
}

impl ConductanceTargets {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn plus(&self, r: usize, c: usize) -> f64 {
        self.plus[r * self.cols + c]
    }

    pub fn minus(&self, r: usize, c: usize) -> f64 {
        self.minus[r * self.cols + c]
    }

    pub fn side(&self, side: Side, r: usize, c: usize) -> f64 {
        match side {
            Side::Plus => self.plus(r, c),
            Side::Minus => self.minus(r, c),
        }
    }

    /// `G+ - G-` per pair.
    pub fn decoded(&self) -> RealMatrix {
        RealMatrix::from_fn(self.rows, self.cols, |r, c| self.plus(r, c) - self.minus(r, c))
    }

    pub fn transpose(&self) -> Self {
        let t = |v: &[f64]| (0..self.cols * self.rows).map(|i| v[(i % self.rows) * self.cols + i / self.rows]).collect();
        Self {
            rows: self.cols,
            cols: self.rows,
            plus: t(&self.plus),
            minus: t(&self.minus),
            alpha: self.alpha,
        }
    }
}

/// Scales `values` by `alpha = range / (3 * sigma_value)` and splits signs
/// over the pair. Values beyond `3 * sigma_value` clip at full range.
pub fn encode_targets(values: &RealMatrix, model: &DeviceModel, sigma_value: f64) -> Result<ConductanceTargets> {
    if !(sigma_value > 0.0 && sigma_value.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma_value must be positive, got {sigma_value}")));
    }
    if !values.is_finite() {
        return Err(Error::InvalidInput("non-finite value in target matrix".into()));
    }
    let range = model.range();
    let alpha = range / (3.0 * sigma_value);
    let n = values.rows() * values.cols();
    let mut plus = Vec::with_capacity(n);
    let mut minus = Vec::with_capacity(n);
    for &v in values.as_slice() {
        let g = model.g_min + (alpha * v.abs()).min(range);
        if v >= 0.0 {
            plus.push(g);
            minus.push(model.g_min);
        } else {
            plus.push(model.g_min);
            minus.push(g);
        }
    }
    Ok(ConductanceTargets {
        rows: values.rows(),
        cols: values.cols(),
        plus,
        minus,
        alpha,
    })
}

/// Targets given directly as plus-side conductances (minus side idle).
pub fn encode_targets_raw(rows: usize, cols: usize, plus: Vec<f64>, model: &DeviceModel) -> Result<ConductanceTargets> {
    if plus.len() != rows * cols {
        return Err(Error::dim("encode_targets_raw", rows * cols, plus.len()));
    }
    if let Some(g) = plus.iter().find(|g| !(model.g_min..=model.g_max).contains(*g)) {
        return Err(Error::InvalidInput(format!("target {g} S outside the conductance range")));
    }
    Ok(ConductanceTargets {
        rows,
        cols,
        minus: vec![model.g_min; plus.len()],
        plus,
        alpha: 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnreachedCell {
    pub row: usize,
    pub col: usize,
    pub copy: usize,
    pub side: Side,
    /// True conductance minus target, siemens.
    pub residual: f64,
}

/// Cost of programming one or more arrays.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProgramReport {
    /// Total time including the reset pulse and verification reads.
    pub latency: f64,
    /// Time spent on tuning write pulses only (row maxima summed).
    pub write_latency: f64,
    pub energy: f64,
    pub write_pulses: u64,
    pub read_pulses: u64,
    pub reset_pulses: u64,
    pub unreached_cells: Vec<UnreachedCell>,
}

impl ProgramReport {
    /// Combines two reports for arrays written one after the other.
    pub fn then(mut self, other: ProgramReport) -> ProgramReport {
        self.latency += other.latency;
        self.write_latency += other.write_latency;
        self.merge_counts(other);
        self
    }

    /// Combines two reports for arrays written simultaneously.
    pub fn alongside(mut self, other: ProgramReport) -> ProgramReport {
        self.latency = self.latency.max(other.latency);
        self.write_latency = self.write_latency.max(other.write_latency);
        self.merge_counts(other);
        self
    }

    fn merge_counts(&mut self, other: ProgramReport) {
        self.energy += other.energy;
        self.write_pulses += other.write_pulses;
        self.read_pulses += other.read_pulses;
        self.reset_pulses += other.reset_pulses;
        self.unreached_cells.extend(other.unreached_cells);
    }
}

/// Running cost of everything done to an array.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Ledger {
    pub latency: f64,
    pub energy: f64,
    pub write_pulses: u64,
    pub read_pulses: u64,
    pub reset_pulses: u64,
    /// Number of analog MVM evaluations.
    pub mvm_reads: u64,
}

/// One event of a programming trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub side: Side,
    pub target: f64,
    pub voltage: f64,
    /// Conductance after the pulse (true value; for reads, the read-back value).
    pub conductance: f64,
    pub duration: f64,
    pub energy: f64,
    pub is_read: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOutcome {
    pub state: CellState,
    pub writes: u32,
    pub reads: u32,
    pub resets: u32,
    pub energy: f64,
    /// Total time including reset and reads.
    pub time: f64,
    pub write_time: f64,
    pub reached: bool,
}

/// Resets a cell and tunes it toward `target`.
///
/// A cell whose target equals `g_min` is left at its reset state, as is the
/// idle side of a differential pair.
pub fn program_cell<R: Rng + ?Sized>(
    start: CellState,
    target: f64,
    scheme: Scheme,
    model: &DeviceModel,
    opts: &ProgramOptions,
    rng: &mut R,
    mut trace: Option<&mut dyn FnMut(TraceEvent)>,
    side: Side,
) -> CellOutcome {
    let dt_w = model.pulse_width;
    let dt_r = model.read_time();
    let mut out = CellOutcome {
        state: start,
        writes: 0,
        reads: 0,
        resets: 0,
        energy: 0.0,
        time: 0.0,
        write_time: 0.0,
        reached: true,
    };
    let mut emit = |ev: TraceEvent| {
        if let Some(t) = trace.as_mut() {
            t(ev)
        }
    };

    let pulse = |out: &mut CellOutcome, p: Pulse, rng: &mut R, emit: &mut dyn FnMut(TraceEvent)| {
        let v = p.voltage(model);
        let e = v * v * out.state.conductance * dt_w;
        out.state = apply_write_pulse(out.state, p, model, rng);
        out.energy += e;
        out.time += dt_w;
        if p == Pulse::FullReset {
            out.resets += 1;
        } else {
            out.writes += 1;
            out.write_time += dt_w;
        }
        emit(TraceEvent {
            side,
            target,
            voltage: v,
            conductance: out.state.conductance,
            duration: dt_w,
            energy: e,
            is_read: false,
        });
    };

    pulse(&mut out, Pulse::FullReset, rng, &mut emit);
    if target <= model.g_min {
        out.reached = out.state.defect == Defect::Healthy || out.state.conductance == target;
        return out;
    }

    let nominal = ((target - model.g_min) / model.step()).round() as u32;
    match scheme {
        Scheme::Exact => {
            for _ in 0..nominal {
                let e = model.v_set * model.v_set * out.state.conductance * dt_w;
                out.energy += e;
                out.time += dt_w;
                out.write_time += dt_w;
                out.writes += 1;
            }
            if out.state.defect == Defect::Healthy {
                out.state.conductance = target;
            } else {
                out.reached = false;
            }
            emit(TraceEvent {
                side,
                target,
                voltage: model.v_set,
                conductance: out.state.conductance,
                duration: nominal as f64 * dt_w,
                energy: out.energy,
                is_read: false,
            });
        }
        Scheme::WithoutVerification => {
            for _ in 0..nominal {
                pulse(&mut out, Pulse::Potentiate, rng, &mut emit);
            }
            out.reached = out.state.defect == Defect::Healthy;
        }
        Scheme::WithVerification => {
            let tol = opts.tolerance(model);
            let max = opts.max_pulses(model);
            let read = |out: &mut CellOutcome, rng: &mut R, emit: &mut dyn FnMut(TraceEvent)| {
                let e = model.v_read * model.v_read * out.state.conductance * dt_r;
                let g = read_conductance(out.state, model, rng);
                out.energy += e;
                out.time += dt_r;
                out.reads += 1;
                emit(TraceEvent {
                    side,
                    target,
                    voltage: model.v_read,
                    conductance: g,
                    duration: dt_r,
                    energy: e,
                    is_read: true,
                });
                g
            };
            let mut g = read(&mut out, rng, &mut emit);
            while (g - target).abs() > tol && out.writes < max {
                let p = if g < target { Pulse::Potentiate } else { Pulse::Depress };
                pulse(&mut out, p, rng, &mut emit);
                g = read(&mut out, rng, &mut emit);
            }
            out.reached = (g - target).abs() <= tol;
        }
    }
    out
}

/// A differential crossbar with `k` copies of every pair.
#[derive(Debug)]
pub struct CrossbarArray {
    id: u64,
    rows: usize,
    cols: usize,
    k: usize,
    model: DeviceModel,
    plus: Vec<CellState>,
    minus: Vec<CellState>,
    decoded: RealMatrix,
    col_conductance: Vec<f64>,
    ledger: Mutex<Ledger>,
}

impl Clone for CrossbarArray {
    fn clone(&self) -> Self {
        Self {
            id: self.id,
            rows: self.rows,
            cols: self.cols,
            k: self.k,
            model: self.model.clone(),
            plus: self.plus.clone(),
            minus: self.minus.clone(),
            decoded: self.decoded.clone(),
            col_conductance: self.col_conductance.clone(),
            ledger: Mutex::new(self.ledger()),
        }
    }
}

impl CrossbarArray {
    /// Fresh array with every cell at `g_min`. `id` labels the array's random
    /// sub-streams.
    pub fn new(id: u64, rows: usize, cols: usize, k: usize, model: DeviceModel) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("crossbar dimensions must be positive".into()));
        }
        if k == 0 {
            return Err(Error::config("averaging", "must be at least 1"));
        }
        model.validate()?;
        let cell = CellState::healthy(model.g_min);
        let mut a = Self {
            id,
            rows,
            cols,
            k,
            plus: vec![cell; rows * cols * k],
            minus: vec![cell; rows * cols * k],
            decoded: RealMatrix::zeros(rows, cols),
            col_conductance: vec![0.0; cols],
            model,
            ledger: Mutex::new(Ledger::default()),
        };
        a.refresh();
        Ok(a)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn averaging(&self) -> usize {
        self.k
    }

    pub fn model(&self) -> &DeviceModel {
        &self.model
    }

    fn idx(&self, r: usize, c: usize, copy: usize) -> usize {
        (r * self.cols + c) * self.k + copy
    }

    pub fn cell(&self, side: Side, r: usize, c: usize, copy: usize) -> CellState {
        let i = self.idx(r, c, copy);
        match side {
            Side::Plus => self.plus[i],
            Side::Minus => self.minus[i],
        }
    }

    /// Noise-free decoded matrix `mean_k(G+ - G-)` in siemens.
    pub fn decoded(&self) -> &RealMatrix {
        &self.decoded
    }

    pub fn ledger(&self) -> Ledger {
        *self.ledger.lock().unwrap()
    }

    fn refresh(&mut self) {
        let k = self.k as f64;
        let mut col = vec![0.0; self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                let mut d = 0.0;
                for copy in 0..self.k {
                    let i = self.idx(r, c, copy);
                    d += self.plus[i].conductance - self.minus[i].conductance;
                    col[c] += self.plus[i].conductance + self.minus[i].conductance;
                }
                self.decoded[(r, c)] = d / k;
            }
        }
        self.col_conductance = col;
    }

    /// Programs every cell toward `targets` (full reset first, then tuning).
    pub fn program<R: Rng + ?Sized>(
        &mut self,
        targets: &ConductanceTargets,
        scheme: Scheme,
        opts: &ProgramOptions,
        rng: &mut R,
    ) -> Result<ProgramReport> {
        if targets.rows != self.rows || targets.cols != self.cols {
            return Err(Error::dim("CrossbarArray::program", self.rows * self.cols, targets.rows * targets.cols));
        }
        opts.validate(scheme)?;
        let base = rng::fork_seed(rng);
        let (id, cols, k) = (self.id, self.cols, self.k);
        let model = &self.model;
        let row_len = cols * k;

        struct RowResult {
            time: f64,
            write_time: f64,
            energy: f64,
            writes: u64,
            reads: u64,
            resets: u64,
            unreached: Vec<UnreachedCell>,
        }

        let results: Vec<RowResult> = self
            .plus
            .par_chunks_mut(row_len)
            .zip(self.minus.par_chunks_mut(row_len))
            .enumerate()
            .map(|(r, (plus_row, minus_row))| {
                let mut rr = RowResult {
                    time: 0.0,
                    write_time: 0.0,
                    energy: 0.0,
                    writes: 0,
                    reads: 0,
                    resets: 0,
                    unreached: Vec::new(),
                };
                for (side, row) in [(Side::Plus, plus_row), (Side::Minus, minus_row)] {
                    for (j, cell) in row.iter_mut().enumerate() {
                        let (c, copy) = (j / k, j % k);
                        let target = targets.side(side, r, c);
                        let mut cell_rng: SimRng =
                            rng::stream(base, &[id, r as u64, c as u64, copy as u64, side as u64]);
                        let o = program_cell(*cell, target, scheme, model, opts, &mut cell_rng, None, side);
                        *cell = o.state;
                        rr.time = rr.time.max(o.time);
                        rr.write_time = rr.write_time.max(o.write_time);
                        rr.energy += o.energy;
                        rr.writes += o.writes as u64;
                        rr.reads += o.reads as u64;
                        rr.resets += o.resets as u64;
                        if !o.reached {
                            rr.unreached.push(UnreachedCell {
                                row: r,
                                col: c,
                                copy,
                                side,
                                residual: o.state.conductance - target,
                            });
                        }
                    }
                }
                rr
            })
            .collect();

        let mut report = ProgramReport::default();
        for rr in results {
            report.latency += rr.time;
            report.write_latency += rr.write_time;
            report.energy += rr.energy;
            report.write_pulses += rr.writes;
            report.read_pulses += rr.reads;
            report.reset_pulses += rr.resets;
            report.unreached_cells.extend(rr.unreached);
        }
        self.refresh();
        let mut l = self.ledger.lock().unwrap();
        l.latency += report.latency;
        l.energy += report.energy;
        l.write_pulses += report.write_pulses;
        l.read_pulses += report.read_pulses;
        l.reset_pulses += report.reset_pulses;
        Ok(report)
    }

    /// Energy of one MVM with input `volts`.
    pub fn read_energy(&self, volts: &[f64]) -> f64 {
        let dt = self.model.read_time();
        self.col_conductance.iter().zip(volts).map(|(g, v)| g * v * v).sum::<f64>() * dt
    }

    fn charge_read(&self, n: u64, energy: f64) {
        let mut l = self.ledger.lock().unwrap();
        l.latency += n as f64 * self.model.read_time();
        l.energy += energy;
        l.mvm_reads += n;
    }

    /// Analog matrix-vector product `mean_k(G+ - G-) * volts` with fresh read
    /// noise. Per-cell Gaussian read noise enters each output as
    /// `sum_j (n+_j - n-_j) v_j / k`, which is sampled directly as one
    /// Gaussian of variance `2 sigma_read^2 / k * sum_j v_j^2`.
    pub fn mvm_read<R: Rng + ?Sized>(&self, volts: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        if volts.len() != self.cols {
            return Err(Error::dim("CrossbarArray::mvm_read", self.cols, volts.len()));
        }
        let mut out = self.decoded.matvec(volts)?;
        self.add_read_noise(&mut out, volts, rng);
        self.charge_read(1, self.read_energy(volts));
        Ok(out)
    }

    fn add_read_noise<R: Rng + ?Sized>(&self, out: &mut [f64], volts: &[f64], rng: &mut R) {
        if self.model.sigma_read == 0.0 {
            return;
        }
        let power: f64 = volts.iter().map(|v| v * v).sum();
        let std = self.model.sigma_read * (2.0 * power / self.k as f64).sqrt();
        for o in out.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *o += std * n;
        }
    }

    /// Evaluates many independent MVMs at once. `volts` holds one input
    /// vector per row (`batch x cols`); the result is `batch x rows`. Each
    /// input is charged as a separate read.
    pub fn mvm_read_batch<R: Rng + ?Sized>(&self, volts: &RealMatrix, rng: &mut R) -> Result<RealMatrix> {
        if volts.cols() != self.cols {
            return Err(Error::dim("CrossbarArray::mvm_read_batch", self.cols, volts.cols()));
        }
        let batch = volts.rows();
        let mut out = RealMatrix::zeros(batch, self.rows);
        // out (batch x rows) = volts (batch x cols) * decoded^T
        unsafe {
            matrixmultiply::dgemm(
                batch,
                self.cols,
                self.rows,
                1.0,
                volts.as_slice().as_ptr(),
                self.cols as isize,
                1,
                self.decoded.as_slice().as_ptr(),
                1,
                self.cols as isize,
                0.0,
                out.as_mut_slice().as_mut_ptr(),
                self.rows as isize,
                1,
            );
        }
        let mut energy = 0.0;
        for b in 0..batch {
            let v = volts.row(b);
            energy += self.read_energy(v);
            let row = &mut out.as_mut_slice()[b * self.rows..(b + 1) * self.rows];
            self.add_read_noise(row, v, rng);
        }
        self.charge_read(batch as u64, energy);
        Ok(out)
    }

    /// Reads every cell once (fresh noise) and returns the decoded matrix.
    /// Used by circuits that need the conductances seen during one settle.
    pub fn read_decoded<R: Rng + ?Sized>(&self, rng: &mut R) -> RealMatrix {
        if self.model.sigma_read == 0.0 {
            return self.decoded.clone();
        }
        // The difference of two independent reads averaged over k copies.
        let std = self.model.sigma_read * (2.0 / self.k as f64).sqrt();
        let mut m = self.decoded.clone();
        for v in m.as_mut_slice() {
            let n: f64 = rng.sample(StandardNormal);
            *v += std * n;
        }
        m
    }

    /// Read energy of one settle with every cell biased at `v_read`.
    pub fn full_read_energy(&self) -> f64 {
        let v = self.model.v_read;
        self.col_conductance.iter().sum::<f64>() * v * v * self.model.read_time()
    }

    /// Charges `n` circuit evaluations of `energy` each to this array.
    pub fn charge_settles(&self, n: u64, energy: f64) {
        self.charge_read(n, energy * n as f64);
    }

    /// Marks every physical cell stuck-on with probability `p_stuck_on` and
    /// stuck-off with probability `p_stuck_off`.
    pub fn inject_defects<R: Rng + ?Sized>(&mut self, p_stuck_on: f64, p_stuck_off: f64, rng: &mut R) -> Result<DefectMap> {
        let valid = |p: f64| (0.0..=1.0).contains(&p);
        if !valid(p_stuck_on) || !valid(p_stuck_off) || p_stuck_on + p_stuck_off > 1.0 {
            return Err(Error::InvalidInput(format!(
                "defect probabilities must lie in [0, 1] and sum to at most 1 (got {p_stuck_on}, {p_stuck_off})"
            )));
        }
        let mut map = DefectMap {
            rows: self.rows,
            cols: self.cols,
            k: self.k,
            entries: Vec::new(),
        };
        if p_stuck_on == 0.0 && p_stuck_off == 0.0 {
            return Ok(map);
        }
        for side in [Side::Plus, Side::Minus] {
            for r in 0..self.rows {
                for c in 0..self.cols {
                    for copy in 0..self.k {
                        let u: f64 = rng.random();
                        let defect = if u < p_stuck_on {
                            Defect::StuckOn
                        } else if u < p_stuck_on + p_stuck_off {
                            Defect::StuckOff
                        } else {
                            continue;
                        };
                        let i = self.idx(r, c, copy);
                        let cells = match side {
                            Side::Plus => &mut self.plus,
                            Side::Minus => &mut self.minus,
                        };
                        cells[i] = cells[i].with_defect(defect, &self.model);
                        map.entries.push(DefectEntry {
                            side,
                            row: r,
                            col: c,
                            copy,
                            defect,
                            pinned: cells[i].conductance,
                        });
                    }
                }
            }
        }
        self.refresh();
        Ok(map)
    }

    /// Writes `row, col, g_plus, g_minus, defect`; copies of a pair occupy
    /// adjacent physical columns.
    pub fn export_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,col,g_plus,g_minus,defect")?;
        for r in 0..self.rows {
            for c in 0..self.cols {
                for copy in 0..self.k {
                    let i = self.idx(r, c, copy);
                    let (p, m) = (self.plus[i], self.minus[i]);
                    let defect = match (p.defect, m.defect) {
                        (Defect::Healthy, Defect::Healthy) => "healthy",
                        (Defect::StuckOn, _) => "plus_stuck_on",
                        (Defect::StuckOff, _) => "plus_stuck_off",
                        (_, Defect::StuckOn) => "minus_stuck_on",
                        (_, Defect::StuckOff) => "minus_stuck_off",
                    };
                    writeln!(w, "{},{},{},{},{}", r, c * self.k + copy, p.conductance, m.conductance, defect)?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectEntry {
    pub side: Side,
    pub row: usize,
    pub col: usize,
    pub copy: usize,
    pub defect: Defect,
    pub pinned: f64,
}

/// Known defective cells of one array.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectMap {
    pub rows: usize,
    pub cols: usize,
    pub k: usize,
    pub entries: Vec<DefectEntry>,
}

impl DefectMap {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Compensatory matrix: for every stuck cell, the decoded contribution it
    /// should have had minus the one it has.
    pub fn compensation(&self, targets: &ConductanceTargets) -> RealMatrix {
        let mut m = RealMatrix::zeros(self.rows, self.cols);
        for e in &self.entries {
            let delta = (targets.side(e.side, e.row, e.col) - e.pinned) / self.k as f64;
            m[(e.row, e.col)] += match e.side {
                Side::Plus => delta,
                Side::Minus => -delta,
            };
        }
        m
    }
}

/// Adds the digitally computed contribution of stuck cells back to an
/// analog MVM output.
pub fn defection_correct(
    raw_output: &[f64],
    defect_map: &DefectMap,
    targets: &ConductanceTargets,
    volts: &[f64],
) -> Result<Vec<f64>> {
    if raw_output.len() != defect_map.rows {
        return Err(Error::dim("defection_correct (output)", defect_map.rows, raw_output.len()));
    }
    if volts.len() != defect_map.cols {
        return Err(Error::dim("defection_correct (volts)", defect_map.cols, volts.len()));
    }
    if targets.rows != defect_map.rows || targets.cols != defect_map.cols {
        return Err(Error::dim("defection_correct (targets)", defect_map.rows * defect_map.cols, targets.rows * targets.cols));
    }
    let mut out = raw_output.to_vec();
    for e in &defect_map.entries {
        let delta = (targets.side(e.side, e.row, e.col) - e.pinned) / defect_map.k as f64;
        let signed = match e.side {
            Side::Plus => delta,
            Side::Minus => -delta,
        };
        out[e.row] += signed * volts[e.col];
    }
    Ok(out)
}

/// Programs a single differential pair and records every pulse, as used for
/// conductance-tuning traces. `value` is in units of full scale (`|value| <= 1`
/// maps onto the conductance range).
pub fn trace_pair<R: Rng + ?Sized>(
    value: f64,
    scheme: Scheme,
    model: &DeviceModel,
    opts: &ProgramOptions,
    rng: &mut R,
) -> Vec<TraceEvent> {
    let g = model.g_min + value.abs().min(1.0) * model.range();
    let (t_plus, t_minus) = if value >= 0.0 { (g, model.g_min) } else { (model.g_min, g) };
    let mut events = Vec::new();
    let start = CellState::healthy(model.g_min + 0.5 * model.range());
    for (side, target) in [(Side::Plus, t_plus), (Side::Minus, t_minus)] {
        let mut push = |e: TraceEvent| events.push(e);
        program_cell(start, target, scheme, model, opts, rng, Some(&mut push), side);
    }
    events
}
