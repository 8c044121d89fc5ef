//! Crossbar-hosted DFT/IDFT and cyclic prefix handling.
//!
//! The unitary DFT matrix `W` is stored through its real mapping, so one
//! analog read transforms a whole block. The inverse stores the transposed
//! mapping, which equals the mapping of `W^H`.

use std::sync::Arc;

use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::crossbar::{
    defection_correct, encode_targets, ConductanceTargets, CrossbarArray, DefectMap, ProgramOptions, ProgramReport, Scheme,
};
use crate::device::DeviceModel;
use crate::error::{Error, Result};
use crate::linmap::{real_map_matrix, unmap_vector, ComplexMatrix, RealMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Inverse,
}

/// Unitary DFT matrix (`W[k][n] = exp(-2 pi i k n / N) / sqrt(N)`) or its
/// adjoint.
pub fn dft_matrix(n: usize, direction: Direction) -> ComplexMatrix {
    let s = 1.0 / (n as f64).sqrt();
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    ComplexMatrix::from_fn(n, n, |k, j| {
        C64::from_polar(s, sign * 2.0 * std::f64::consts::PI * ((k * j) % n) as f64 / n as f64)
    })
}

/// Exact unitary FFT.
#[derive(Clone)]
pub struct ExactDft {
    n: usize,
    scale: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ExactDft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ExactDft({})", self.n)
    }
}

impl ExactDft {
    pub fn new(n: usize, direction: Direction) -> Self {
        let mut planner = FftPlanner::new();
        let fft = match direction {
            Direction::Forward => planner.plan_fft_forward(n),
            Direction::Inverse => planner.plan_fft_inverse(n),
        };
        Self {
            n,
            scale: 1.0 / (n as f64).sqrt(),
            fft,
        }
    }

    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.n {
            return Err(Error::dim("ExactDft::apply", self.n, x.len()));
        }
        let mut buf = x.to_vec();
        self.fft.process(&mut buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
        Ok(buf)
    }
}

/// A programmed DFT or IDFT crossbar.
#[derive(Debug, Clone)]
pub struct DftOperator {
    n_c: usize,
    direction: Direction,
    array: CrossbarArray,
    targets: ConductanceTargets,
    /// Siemens per unit matrix entry.
    pub alpha: f64,
    defects: Option<DefectMap>,
    correct_defects: bool,
}

/// Programs the real-mapped DFT (or its transpose for the inverse) with
/// `1/sqrt(n_c)` mapped to the full conductance range.
pub fn build_dft_operator<R: Rng + ?Sized>(
    n_c: usize,
    direction: Direction,
    model: &DeviceModel,
    scheme: Scheme,
    opts: &ProgramOptions,
    rng: &mut R,
) -> Result<(DftOperator, ProgramReport)> {
    if n_c < 2 || !n_c.is_power_of_two() {
        return Err(Error::config("n_c", format!("must be a power of two of at least 2, got {n_c}")));
    }
    let mapped = real_map_matrix(&dft_matrix(n_c, Direction::Forward));
    let mapped = match direction {
        Direction::Forward => mapped,
        Direction::Inverse => mapped.transpose(),
    };
    let sigma_value = 1.0 / (n_c as f64).sqrt() / 3.0;
    let targets = encode_targets(&mapped, model, sigma_value)?;
    let id = match direction {
        Direction::Forward => 0xdf7,
        Direction::Inverse => 0x1df7,
    };
    let mut array = CrossbarArray::new(id, 2 * n_c, 2 * n_c, 1, model.clone())?;
    let report = array.program(&targets, scheme, opts, rng)?;
    let alpha = targets.alpha;
    Ok((
        DftOperator {
            n_c,
            direction,
            array,
            targets,
            alpha,
            defects: None,
            correct_defects: false,
        },
        report,
    ))
}

impl DftOperator {
    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn array(&self) -> &CrossbarArray {
        &self.array
    }

    pub fn defects(&self) -> Option<&DefectMap> {
        self.defects.as_ref()
    }

    /// Marks stuck cells; with `correct` the known defects are compensated
    /// digitally on every read.
    pub fn inject_defects<R: Rng + ?Sized>(&mut self, p_stuck_on: f64, p_stuck_off: f64, correct: bool, rng: &mut R) -> Result<usize> {
        let map = self.array.inject_defects(p_stuck_on, p_stuck_off, rng)?;
        let n = map.len();
        self.defects = Some(map);
        self.correct_defects = correct;
        Ok(n)
    }

    fn volts(&self, x: &[C64]) -> (Vec<f64>, f64) {
        let mut v = Vec::with_capacity(2 * x.len());
        v.extend(x.iter().map(|c| c.re));
        v.extend(x.iter().map(|c| c.im));
        // Peak input drive equals the read voltage.
        let peak = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let s = if peak > 0.0 { self.array.model().v_read / peak } else { 1.0 };
        v.iter_mut().for_each(|a| *a *= s);
        (v, s)
    }

    fn finish(&self, raw: &[f64], volts: &[f64], s: f64) -> Result<Vec<C64>> {
        let out = match (&self.defects, self.correct_defects) {
            (Some(map), true) => defection_correct(raw, map, &self.targets, volts)?,
            _ => raw.to_vec(),
        };
        let k = 1.0 / (self.alpha * s);
        unmap_vector(&out.iter().map(|v| v * k).collect::<Vec<_>>())
    }

    /// One analog read transforms the block.
    pub fn apply<R: Rng + ?Sized>(&self, x: &[C64], rng: &mut R) -> Result<Vec<C64>> {
        if x.len() != self.n_c {
            return Err(Error::dim("DftOperator::apply", self.n_c, x.len()));
        }
        let (v, s) = self.volts(x);
        let raw = self.array.mvm_read(&v, rng)?;
        self.finish(&raw, &v, s)
    }

    /// Transforms many blocks; each block is charged as its own read. Also
    /// returns the read energy of the batch.
    pub fn apply_batch<R: Rng + ?Sized>(&self, xs: &[Vec<C64>], rng: &mut R) -> Result<(Vec<Vec<C64>>, f64)> {
        let n2 = 2 * self.n_c;
        let mut volts = RealMatrix::zeros(xs.len(), n2);
        let mut scales = Vec::with_capacity(xs.len());
        for (b, x) in xs.iter().enumerate() {
            if x.len() != self.n_c {
                return Err(Error::dim("DftOperator::apply_batch", self.n_c, x.len()));
            }
            let (v, s) = self.volts(x);
            volts.as_mut_slice()[b * n2..(b + 1) * n2].copy_from_slice(&v);
            scales.push(s);
        }
        let raw = self.array.mvm_read_batch(&volts, rng)?;
        let energy = (0..xs.len()).map(|b| self.array.read_energy(volts.row(b))).sum();
        let out = (0..xs.len()).map(|b| self.finish(raw.row(b), volts.row(b), scales[b])).collect::<Result<_>>()?;
        Ok((out, energy))
    }
}

/// Convenience wrapper for [`DftOperator::apply`].
pub fn dft_apply<R: Rng + ?Sized>(op: &DftOperator, x: &[C64], rng: &mut R) -> Result<Vec<C64>> {
    op.apply(x, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefixMode {
    Add,
    Remove,
}

/// Adds (prepends the last `cp_len` samples) or removes a cyclic prefix.
pub fn cyclic_prefix<T: Clone>(x: &[T], cp_len: usize, mode: PrefixMode) -> Result<Vec<T>> {
    match mode {
        PrefixMode::Add => {
            if cp_len >= x.len() {
                return Err(Error::config("cp_len", format!("must be below the block length {}", x.len())));
            }
            let mut out = Vec::with_capacity(x.len() + cp_len);
            out.extend_from_slice(&x[x.len() - cp_len..]);
            out.extend_from_slice(x);
            Ok(out)
        }
        PrefixMode::Remove => {
            if 2 * cp_len >= x.len() {
                return Err(Error::config("cp_len", format!("too long for a block of {} samples", x.len())));
            }
            Ok(x[cp_len..].to_vec())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::preset;
    use crate::linmap::rel_diff_vec;
    use crate::rng::seeded;
    use rand::Rng;

    fn ideal(n: usize, dir: Direction) -> DftOperator {
        let m = preset("ta_taox_pt").unwrap().noiseless();
        build_dft_operator(n, dir, &m, Scheme::Exact, &ProgramOptions::default(), &mut seeded(1)).unwrap().0
    }

    fn random_vec(n: usize, seed: u64) -> Vec<C64> {
        let mut r = seeded(seed);
        (0..n).map(|_| C64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)).collect()
    }

    #[test]
    fn delta_gives_constant() {
        let op = ideal(4, Direction::Forward);
        let mut e0 = vec![C64::new(0.0, 0.0); 4];
        e0[0] = C64::new(1.0, 0.0);
        let y = op.apply(&e0, &mut seeded(2)).unwrap();
        for v in y {
            assert!((v - C64::new(0.5, 0.0)).norm() < 1e-12);
        }
        let z = op.apply(&[C64::new(0.0, 0.0); 4], &mut seeded(2)).unwrap();
        assert!(z.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn matches_fft_and_round_trips() {
        let fwd = ideal(32, Direction::Forward);
        let inv = ideal(32, Direction::Inverse);
        let x = random_vec(32, 3);
        let y = fwd.apply(&x, &mut seeded(4)).unwrap();
        let oracle = ExactDft::new(32, Direction::Forward).apply(&x).unwrap();
        assert!(rel_diff_vec(&y, &oracle) < 1e-12);
        let back = inv.apply(&y, &mut seeded(5)).unwrap();
        assert!(rel_diff_vec(&back, &x) < 1e-9);
        assert_eq!(fwd.array().ledger().mvm_reads, 1);
    }

    #[test]
    fn batch_equals_single() {
        let op = ideal(8, Direction::Forward);
        let xs: Vec<_> = (0..3).map(|s| random_vec(8, 10 + s)).collect();
        let (batch, energy) = op.apply_batch(&xs, &mut seeded(1)).unwrap();
        assert!(energy > 0.0);
        for (x, y) in xs.iter().zip(&batch) {
            assert!(rel_diff_vec(&op.apply(x, &mut seeded(1)).unwrap(), y) < 1e-12);
        }
    }

    #[test]
    fn noisy_parseval() {
        let m = preset("ta_taox_pt").unwrap();
        let (op, _) = build_dft_operator(32, Direction::Forward, &m, Scheme::WithVerification, &ProgramOptions::default(), &mut seeded(6)).unwrap();
        let x = random_vec(32, 7);
        let y = op.apply(&x, &mut seeded(8)).unwrap();
        let n = |v: &[C64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!((n(&y) / n(&x) - 1.0).abs() < 0.02);
    }

    #[test]
    fn rejects_bad_sizes() {
        let m = preset("ta_taox_pt").unwrap();
        assert!(build_dft_operator(12, Direction::Forward, &m, Scheme::Exact, &ProgramOptions::default(), &mut seeded(1)).is_err());
        assert!(ideal(4, Direction::Forward).apply(&[C64::new(0.0, 0.0); 3], &mut seeded(1)).is_err());
    }

    #[test]
    fn prefix() {
        assert_eq!(cyclic_prefix(&[1, 2, 3, 4], 2, PrefixMode::Add).unwrap(), vec![3, 4, 1, 2, 3, 4]);
        let x = [1, 2, 3, 4];
        assert_eq!(cyclic_prefix(&x, 0, PrefixMode::Add).unwrap(), x.to_vec());
        let added = cyclic_prefix(&x, 3, PrefixMode::Add).unwrap();
        assert_eq!(cyclic_prefix(&added, 3, PrefixMode::Remove).unwrap(), x.to_vec());
        assert!(cyclic_prefix(&x, 4, PrefixMode::Add).is_err());
    }
}
