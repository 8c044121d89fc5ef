//! L-MMSE and ZF detection, digitally and on a crossbar feedback circuit.
//!
//! The circuit holds the scaled real channel `G = alpha R(H)` twice: a left
//! array driven by the TIA outputs and a right array storing `G^T`. At steady
//! state the output voltages solve `(G_R^T G_L + g1 g2 I) v = G_R^T i`, which
//! with `i = alpha T(y)` and `g1 g2 = alpha^2 / SNR` is the L-MMSE estimate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crossbar::{encode_targets, CrossbarArray, ProgramOptions, ProgramReport, Scheme};
use crate::device::DeviceModel;
use crate::error::{Error, Result};
use crate::linmap::{real_map_matrix, real_map_vector, unmap_vector, ComplexMatrix, RealMatrix, C64};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectMode {
    Lmmse,
    Zf,
}

impl DetectMode {
    pub fn name(self) -> &'static str {
        match self {
            DetectMode::Lmmse => "lmmse",
            DetectMode::Zf => "zf",
        }
    }
}

/// Regularizer `1/SNR` (zero for ZF or infinite SNR).
fn regularizer(snr_db: f64, mode: DetectMode) -> f64 {
    match mode {
        DetectMode::Zf => 0.0,
        DetectMode::Lmmse => 10f64.powf(-snr_db / 10.0),
    }
}

/// Precomputed digital equalizer `(H^H H + I/SNR)^-1 H^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalDetector {
    w: ComplexMatrix,
}

impl DigitalDetector {
    pub fn new(h_hat: &ComplexMatrix, snr_db: f64, mode: DetectMode) -> Result<Self> {
        let hh = h_hat.adjoint();
        let mut gram = hh.matmul(h_hat)?;
        let reg = regularizer(snr_db, mode);
        for i in 0..gram.rows() {
            gram[(i, i)] += C64::new(reg, 0.0);
        }
        let w = gram.solve_matrix(&hh).map_err(|e| match e {
            Error::Singular(_) => Error::Singular(format!("{} detection: H^H H is rank deficient", mode.name())),
            e => e,
        })?;
        Ok(Self { w })
    }

    pub fn apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        self.w.matvec(y)
    }
}

pub fn detect_digital(h_hat: &ComplexMatrix, y: &[C64], snr_db: f64, mode: DetectMode) -> Result<Vec<C64>> {
    if y.len() != h_hat.rows() {
        return Err(Error::dim("detect_digital", h_hat.rows(), y.len()));
    }
    let hh = h_hat.adjoint();
    let mut gram = hh.matmul(h_hat)?;
    let reg = regularizer(snr_db, mode);
    for i in 0..gram.rows() {
        gram[(i, i)] += C64::new(reg, 0.0);
    }
    gram.solve(&hh.matvec(y)?)
}

/// Solves the feedback circuit's steady state `(G_R^T G_L + g1g2 I) v = G_R^T i`
/// given the left matrix and the transposed right matrix.
pub fn solve_feedback(g_left: &RealMatrix, g_right_t: &RealMatrix, g1g2: f64, current: &[f64]) -> Result<Vec<f64>> {
    let mut a = g_right_t.matmul(g_left)?;
    for i in 0..a.rows() {
        a[(i, i)] += g1g2;
    }
    a.solve(&g_right_t.matvec(current)?)
}

/// Left/right crossbar pair configured as a detector.
#[derive(Debug, Clone)]
pub struct DetectorBank {
    n_t: usize,
    n_r: usize,
    left: CrossbarArray,
    right: CrossbarArray,
    pub alpha: f64,
    pub g1: f64,
    pub g2: f64,
    pub mode: DetectMode,
}

/// Programs both halves of a detector from the same targets with independent
/// randomness. `sigma_h` is the per-component channel std used for the
/// three-sigma scaling; the scale widens if an entry would clip.
#[allow(clippy::too_many_arguments)]
pub fn build_detector_bank<R: Rng + ?Sized>(
    h_hat: &ComplexMatrix,
    sigma_h: f64,
    snr_db: f64,
    mode: DetectMode,
    model: &DeviceModel,
    scheme: Scheme,
    opts: &ProgramOptions,
    averaging: usize,
    rng: &mut R,
) -> Result<(DetectorBank, ProgramReport)> {
    if !h_hat.is_finite() {
        return Err(Error::InvalidInput("channel estimate has non-finite entries".into()));
    }
    if snr_db.is_nan() {
        return Err(Error::config("snr_db", "must be a number"));
    }
    let r = real_map_matrix(h_hat);
    let sigma_value = sigma_h.max(r.max_abs() / 3.0);
    let left_t = encode_targets(&r, model, sigma_value)?;
    let right_t = encode_targets(&r.transpose(), model, sigma_value)?;
    let alpha = left_t.alpha;
    let base = rng::fork_seed(rng);
    let (rows, cols) = (r.rows(), r.cols());
    let mut left = CrossbarArray::new(1, rows, cols, averaging, model.clone())?;
    let mut right = CrossbarArray::new(2, cols, rows, averaging, model.clone())?;
    let rep_l = left.program(&left_t, scheme, opts, &mut rng::stream(base, &[1]))?;
    let rep_r = right.program(&right_t, scheme, opts, &mut rng::stream(base, &[2]))?;
    let (g1, g2) = match mode {
        DetectMode::Lmmse => {
            let g = alpha * regularizer(snr_db, mode).sqrt();
            (g, g)
        }
        DetectMode::Zf => (alpha, 0.0),
    };
    Ok((
        DetectorBank {
            n_t: h_hat.cols(),
            n_r: h_hat.rows(),
            left,
            right,
            alpha,
            g1,
            g2,
            mode,
        },
        rep_l.then(rep_r),
    ))
}

impl DetectorBank {
    pub fn left(&self) -> &CrossbarArray {
        &self.left
    }

    pub fn right(&self) -> &CrossbarArray {
        &self.right
    }

    /// Read energy of one detection (both arrays biased once).
    pub fn settle_energy(&self) -> f64 {
        self.left.full_read_energy() + self.right.full_read_energy()
    }

    fn settle<R: Rng + ?Sized>(&self, y: &[C64], rng: &mut R) -> Result<Vec<C64>> {
        if y.len() != self.n_r {
            return Err(Error::dim("detect_crossbar", self.n_r, y.len()));
        }
        let g_l = self.left.read_decoded(rng);
        let g_rt = self.right.read_decoded(rng);
        let current: Vec<f64> = real_map_vector(y).iter().map(|v| v * self.alpha).collect();
        let v = solve_feedback(&g_l, &g_rt, self.g1 * self.g2, &current)?;
        debug_assert_eq!(v.len(), 2 * self.n_t);
        unmap_vector(&v)
    }

    /// One circuit evaluation; charged as a single read on both arrays.
    pub fn detect<R: Rng + ?Sized>(&self, y: &[C64], rng: &mut R) -> Result<Vec<C64>> {
        let out = self.settle(y, rng);
        self.charge(1);
        out
    }

    /// Evaluates many received vectors, keeping per-vector failures.
    pub fn detect_batch<R: Rng + ?Sized>(&self, ys: &[Vec<C64>], rng: &mut R) -> Vec<Result<Vec<C64>>> {
        let out = ys.iter().map(|y| self.settle(y, rng)).collect();
        self.charge(ys.len() as u64);
        out
    }

    fn charge(&self, n: u64) {
        self.left.charge_settles(n, self.left.full_read_energy());
        self.right.charge_settles(n, self.right.full_read_energy());
    }
}

pub fn detect_crossbar<R: Rng + ?Sized>(bank: &DetectorBank, y: &[C64], rng: &mut R) -> Result<Vec<C64>> {
    bank.detect(y, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channel;
    use crate::device::preset;
    use crate::linmap::rel_diff_vec;
    use crate::rng::seeded;

    fn h(seed: u64) -> ComplexMatrix {
        sample_channel(4, 4, 1, true, &mut seeded(seed)).unwrap().at(0).clone()
    }

    fn y(seed: u64) -> Vec<C64> {
        let mut r = seeded(seed);
        (0..4).map(|_| crate::channel::complex_gaussian(1.0, &mut r)).collect()
    }

    #[test]
    fn identity_channel() {
        let yv = y(1);
        let x = detect_digital(&ComplexMatrix::identity(4), &yv, f64::INFINITY, DetectMode::Lmmse).unwrap();
        assert!(rel_diff_vec(&x, &yv) < 1e-15);
    }

    #[test]
    fn zf_inverts() {
        let hm = h(2);
        let x = y(3);
        let yv = hm.matvec(&x).unwrap();
        assert!(rel_diff_vec(&detect_digital(&hm, &yv, 10.0, DetectMode::Zf).unwrap(), &x) < 1e-10);
        let sing = ComplexMatrix::zeros(4, 4);
        assert!(matches!(detect_digital(&sing, &yv, 10.0, DetectMode::Zf), Err(Error::Singular(_))));
        assert!(matches!(DigitalDetector::new(&sing, 10.0, DetectMode::Zf), Err(Error::Singular(_))));
    }

    #[test]
    fn mmse_approaches_zf() {
        let hm = h(4);
        let yv = y(5);
        let a = detect_digital(&hm, &yv, 60.0, DetectMode::Lmmse).unwrap();
        let b = detect_digital(&hm, &yv, 60.0, DetectMode::Zf).unwrap();
        assert!(rel_diff_vec(&a, &b) < 1e-4);
        let pre = DigitalDetector::new(&hm, 12.0, DetectMode::Lmmse).unwrap().apply(&yv).unwrap();
        assert!(rel_diff_vec(&pre, &detect_digital(&hm, &yv, 12.0, DetectMode::Lmmse).unwrap()) < 1e-12);
    }

    #[test]
    fn ideal_bank_matches_digital() {
        let m = preset("ta_taox_pt").unwrap().noiseless();
        for seed in 0..20 {
            let hm = h(100 + seed);
            for mode in [DetectMode::Lmmse, DetectMode::Zf] {
                let (bank, _) = build_detector_bank(&hm, 0.5f64.sqrt(), 15.0, mode, &m, Scheme::Exact, &ProgramOptions::default(), 1, &mut seeded(seed)).unwrap();
                let yv = y(seed);
                let a = bank.detect(&yv, &mut seeded(1)).unwrap();
                let b = detect_digital(&hm, &yv, 15.0, mode).unwrap();
                assert!(rel_diff_vec(&a, &b) < 1e-9);
            }
        }
    }

    #[test]
    fn ideal_decodes_agree_noisy_ones_differ() {
        let hm = h(7);
        let ideal = preset("ta_taox_pt").unwrap().noiseless();
        let (bank, rep) = build_detector_bank(&hm, 0.5f64.sqrt(), 20.0, DetectMode::Lmmse, &ideal, Scheme::Exact, &ProgramOptions::default(), 1, &mut seeded(1)).unwrap();
        assert_eq!(bank.left().decoded(), &bank.right().decoded().transpose());
        assert_eq!(rep.reset_pulses, 4 * 64);
        let noisy = preset("ta_taox_pt").unwrap();
        let (bank, _) = build_detector_bank(&hm, 0.5f64.sqrt(), 20.0, DetectMode::Lmmse, &noisy, Scheme::WithVerification, &ProgramOptions::default(), 1, &mut seeded(1)).unwrap();
        assert!(bank.left().decoded().rel_diff(&bank.right().decoded().transpose()) > 0.0);
    }

    #[test]
    fn gain_scaling_invariance() {
        let r = real_map_matrix(&h(8));
        let i: Vec<f64> = real_map_vector(&y(9));
        let snr = 100.0;
        let base = solve_feedback(&r, &r.transpose(), 1.0 / snr, &i).unwrap();
        let c = 3.7e-5;
        let scaled = solve_feedback(&r.scale(c), &r.transpose().scale(c), c * c / snr, &i.iter().map(|v| v * c).collect::<Vec<_>>()).unwrap();
        assert!(rel_diff_vec(&base, &scaled) < 1e-9);
    }

    #[test]
    fn zf_gain_is_open() {
        let m = preset("ta_taox_pt").unwrap().noiseless();
        let (bank, _) = build_detector_bank(&h(1), 0.5f64.sqrt(), 10.0, DetectMode::Zf, &m, Scheme::Exact, &ProgramOptions::default(), 1, &mut seeded(1)).unwrap();
        assert_eq!(bank.g2, 0.0);
        assert!(bank.g1 > 0.0);
    }
}
