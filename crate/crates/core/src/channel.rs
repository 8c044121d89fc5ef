//! Rayleigh MIMO channels, AWGN and pilot-based estimation.
//!
//! SNR is per-stream symbol SNR: unit symbol energy over the noise variance,
//! with unit-power channel entries.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linmap::{ComplexMatrix, C64};

/// Linear power ratio of `snr_db`.
pub fn db_to_linear(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

/// Noise variance for `snr_db` (zero at `+inf`).
pub fn noise_variance(snr_db: f64) -> f64 {
    1.0 / db_to_linear(snr_db)
}

/// Circularly-symmetric complex Gaussian with total variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(var: f64, rng: &mut R) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// Adds `CN(0, var)` noise in place.
pub fn add_awgn<R: Rng + ?Sized>(x: &mut [C64], var: f64, rng: &mut R) {
    if var == 0.0 {
        return;
    }
    for v in x {
        *v += complex_gaussian(var, rng);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    n_t: usize,
    n_r: usize,
    n_c: usize,
    flat: bool,
    /// Per-component standard deviation.
    pub sigma_h: f64,
    /// One matrix when flat, otherwise one per sub-carrier.
    matrices: Vec<ComplexMatrix>,
}

impl ChannelRealization {
    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    /// Channel seen by sub-carrier `k`.
    pub fn at(&self, k: usize) -> &ComplexMatrix {
        if self.flat {
            &self.matrices[0]
        } else {
            &self.matrices[k]
        }
    }

    pub fn from_matrices(matrices: Vec<ComplexMatrix>, n_c: usize) -> Result<Self> {
        let first = matrices.first().ok_or_else(|| Error::InvalidInput("no channel matrices".into()))?;
        let (n_r, n_t) = (first.rows(), first.cols());
        if matrices.iter().any(|m| m.rows() != n_r || m.cols() != n_t) {
            return Err(Error::InvalidInput("channel matrices differ in shape".into()));
        }
        let flat = matrices.len() == 1;
        if !flat && matrices.len() != n_c {
            return Err(Error::dim("ChannelRealization::from_matrices", n_c, matrices.len()));
        }
        Ok(Self {
            n_t,
            n_r,
            n_c,
            flat,
            sigma_h: std::f64::consts::FRAC_1_SQRT_2,
            matrices,
        })
    }

    /// CSV with columns `subcarrier,row,col,re,im`. Flat channels store
    /// sub-carrier 0 only.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "subcarrier,row,col,re,im")?;
        for (k, m) in self.matrices.iter().enumerate() {
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    writeln!(w, "{},{},{},{},{}", k, r, c, m[(r, c)].re, m[(r, c)].im)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, n_t: usize, n_r: usize, n_c: usize) -> Result<Self> {
        let mut mats: Vec<ComplexMatrix> = Vec::new();
        for (i, line) in input.lines().enumerate().skip(1) {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |m: String| Error::Parse { line: i + 1, message: m };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(parse_err(format!("expected 5 fields, found {}", f.len())));
            }
            let idx = |s: &str| s.trim().parse::<usize>().map_err(|e| parse_err(e.to_string()));
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| parse_err(e.to_string()));
            let (k, r, c) = (idx(f[0])?, idx(f[1])?, idx(f[2])?);
            if k >= n_c || r >= n_r || c >= n_t {
                return Err(parse_err("index out of range".into()));
            }
            while mats.len() <= k {
                mats.push(ComplexMatrix::zeros(n_r, n_t));
            }
            mats[k][(r, c)] = C64::new(num(f[3])?, num(f[4])?);
        }
        Self::from_matrices(mats, n_c)
    }
}

/// I.i.d. `CN(0, 1)` entries; flat mode shares one draw across sub-carriers.
pub fn sample_channel<R: Rng + ?Sized>(n_t: usize, n_r: usize, n_c: usize, flat: bool, rng: &mut R) -> Result<ChannelRealization> {
    if n_t == 0 || n_r == 0 || n_c == 0 {
        return Err(Error::InvalidInput("channel dimensions must be positive".into()));
    }
    let count = if flat { 1 } else { n_c };
    let matrices = (0..count)
        .map(|_| ComplexMatrix::from_fn(n_r, n_t, |_, _| complex_gaussian(1.0, rng)))
        .collect();
    Ok(ChannelRealization {
        n_t,
        n_r,
        n_c,
        flat,
        sigma_h: std::f64::consts::FRAC_1_SQRT_2,
        matrices,
    })
}

/// `y = H x + z` with `z ~ CN(0, 10^(-snr_db/10) I)`.
pub fn apply_channel<R: Rng + ?Sized>(h: &ComplexMatrix, x: &[C64], snr_db: f64, rng: &mut R) -> Result<Vec<C64>> {
    let mut y = h.matvec(x)?;
    add_awgn(&mut y, noise_variance(snr_db), rng);
    Ok(y)
}

/// Normalized DFT matrix, `P P^H = I`.
pub fn unitary_pilot(n_t: usize) -> Result<ComplexMatrix> {
    if n_t == 0 {
        return Err(Error::InvalidInput("pilot size must be positive".into()));
    }
    let s = 1.0 / (n_t as f64).sqrt();
    Ok(ComplexMatrix::from_fn(n_t, n_t, |r, c| {
        let ph = -2.0 * std::f64::consts::PI * ((r * c) % n_t) as f64 / n_t as f64;
        C64::from_polar(s, ph)
    }))
}

/// Least-squares estimate `S P^H`.
pub fn estimate_channel(s: &ComplexMatrix, p: &ComplexMatrix) -> Result<ComplexMatrix> {
    if p.rows() != p.cols() {
        return Err(Error::dim("estimate_channel (pilot must be square)", p.rows(), p.cols()));
    }
    if s.cols() != p.cols() {
        return Err(Error::dim("estimate_channel", p.cols(), s.cols()));
    }
    s.matmul(&p.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn flat_shares_matrix() {
        let ch = sample_channel(2, 3, 8, true, &mut seeded(1)).unwrap();
        assert!((0..8).all(|k| ch.at(k) == ch.at(0)));
        let fs = sample_channel(2, 3, 8, false, &mut seeded(1)).unwrap();
        assert_ne!(fs.at(0), fs.at(1));
    }

    #[test]
    fn channel_power() {
        let ch = sample_channel(4, 4, 7000, false, &mut seeded(2)).unwrap();
        let mut p = 0.0;
        let mut re = 0.0;
        let mut n = 0.0;
        for k in 0..7000 {
            for v in ch.at(k).as_slice() {
                p += v.norm_sqr();
                re += v.re * v.re;
                n += 1.0;
            }
        }
        assert!((p / n - 1.0).abs() < 0.02);
        assert!((re / n - 0.5).abs() < 0.01);
    }

    #[test]
    fn noiseless_identity_channel() {
        let x = vec![C64::new(1.0, -1.0), C64::new(0.3, 0.2)];
        let y = apply_channel(&ComplexMatrix::identity(2), &x, f64::INFINITY, &mut seeded(3)).unwrap();
        assert_eq!(y, x);
        assert!(apply_channel(&ComplexMatrix::identity(3), &x, 10.0, &mut seeded(3)).is_err());
    }

    #[test]
    fn noise_variance_matches_snr() {
        let h = ComplexMatrix::identity(4);
        let x = [C64::new(0.0, 0.0); 4];
        let mut rng = seeded(4);
        let mut v = 0.0;
        for _ in 0..25_000 {
            v += apply_channel(&h, &x, 10.0, &mut rng).unwrap().iter().map(|c| c.norm_sqr()).sum::<f64>();
        }
        v /= 100_000.0;
        assert!((v / 0.1 - 1.0).abs() < 0.05);
    }

    #[test]
    fn pilots_are_unitary() {
        assert_eq!(unitary_pilot(1).unwrap().as_slice(), &[C64::new(1.0, 0.0)]);
        for n in [4, 8] {
            let p = unitary_pilot(n).unwrap();
            let g = p.matmul(&p.adjoint()).unwrap();
            assert!(g.rel_diff(&ComplexMatrix::identity(n)) < 1e-12);
        }
    }

    #[test]
    fn estimation_is_exact_without_noise() {
        let h = sample_channel(4, 3, 1, true, &mut seeded(5)).unwrap().at(0).clone();
        let p = unitary_pilot(4).unwrap();
        let s = h.matmul(&p).unwrap();
        assert!(estimate_channel(&s, &p).unwrap().rel_diff(&h) < 1e-12);
        assert!(estimate_channel(&h, &ComplexMatrix::identity(4)).unwrap() == h);
    }

    #[test]
    fn csv_round_trip() {
        let ch = sample_channel(2, 2, 3, false, &mut seeded(6)).unwrap();
        let mut buf = Vec::new();
        ch.write_csv(&mut buf).unwrap();
        let back = ChannelRealization::read_csv(&buf[..], 2, 2, 3).unwrap();
        assert_eq!(back, ch);
    }
}
