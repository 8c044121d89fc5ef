//! Gray coding, 16-QAM mapping and link metrics.
//!
//! Bits of one symbol are ordered `[i1 i0 q1 q0]`. Each axis maps its two
//! bits through a Gray code onto the levels `{-3, -1, +1, +3} / sqrt(10)`:
//! `00 -> -3`, `01 -> -1`, `11 -> +1`, `10 -> +3`.

use std::fmt;

use crate::error::{Error, Result};
use crate::linmap::C64;

fn check_bits(bits: &[u8]) -> Result<()> {
    match bits.iter().find(|&&b| b > 1) {
        Some(b) => Err(Error::InvalidInput(format!("bit values must be 0 or 1, found {b}"))),
        None => Ok(()),
    }
}

/// MSB-first binary word to Gray code.
pub fn bin_to_gray(bits: &[u8]) -> Result<Vec<u8>> {
    check_bits(bits)?;
    Ok((0..bits.len()).map(|i| if i == 0 { bits[0] } else { bits[i - 1] ^ bits[i] }).collect())
}

/// Inverse of [`bin_to_gray`].
pub fn gray_to_bin(gray: &[u8]) -> Result<Vec<u8>> {
    check_bits(gray)?;
    let mut out = Vec::with_capacity(gray.len());
    let mut acc = 0;
    for &g in gray {
        acc ^= g;
        out.push(acc);
    }
    Ok(out)
}

pub fn gray_encode(n: u64) -> u64 {
    n ^ (n >> 1)
}

pub fn gray_decode(mut g: u64) -> u64 {
    let mut shift = 1;
    while shift < 64 {
        g ^= g >> shift;
        shift <<= 1;
    }
    g
}

const SCALE: f64 = 0.316_227_766_016_837_94; // 1/sqrt(10)

/// Axis level in units of `1/sqrt(10)` for the Gray pair `(b1, b0)`.
fn axis_level(b1: u8, b0: u8) -> f64 {
    let idx = gray_decode(((b1 << 1) | b0) as u64);
    2.0 * idx as f64 - 3.0
}

/// Hard decision on one axis; ties go to the smaller Gray pair.
fn axis_decide(x: f64) -> (u8, u8) {
    let v = x / SCALE;
    // Level index 0..3; boundaries at -2, 0, 2.
    let idx = if v <= -2.0 {
        0
    } else if v <= 0.0 {
        1
    } else if v < 2.0 {
        2
    } else {
        3
    };
    // At v == 2 the candidates are 11 (+1) and 10 (+3); 10 is smaller.
    let g = gray_encode(idx);
    ((g >> 1) as u8, (g & 1) as u8)
}

pub fn qam16_modulate(bits: &[u8]) -> Result<Vec<C64>> {
    if !bits.len().is_multiple_of(4) {
        return Err(Error::InvalidInput(format!("16-QAM needs a multiple of 4 bits, got {}", bits.len())));
    }
    check_bits(bits)?;
    Ok(bits
        .chunks_exact(4)
        .map(|b| C64::new(axis_level(b[0], b[1]), axis_level(b[2], b[3])) * SCALE)
        .collect())
}

pub fn qam16_demodulate(symbols: &[C64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(symbols.len() * 4);
    for s in symbols {
        let (i1, i0) = axis_decide(s.re);
        let (q1, q0) = axis_decide(s.im);
        out.extend_from_slice(&[i1, i0, q1, q0]);
    }
    out
}

/// Modulation error ratio and bit error ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// `+inf` when the error energy is exactly zero.
    pub mer_db: f64,
    pub ber: f64,
    pub bit_errors: u64,
    pub bits: u64,
}

/// Formats an MER value, writing infinity as `inf`.
pub fn format_mer(mer_db: f64) -> String {
    if mer_db == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{mer_db}")
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mer_db={} ber={}", format_mer(self.mer_db), self.ber)
    }
}

/// Accumulates error energy and bit errors over several blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricsAccumulator {
    pub signal_energy: f64,
    pub error_energy: f64,
    pub bit_errors: u64,
    pub bits: u64,
}

impl MetricsAccumulator {
    pub fn add_symbols(&mut self, tx: &[C64], rx: &[C64]) -> Result<()> {
        if tx.len() != rx.len() {
            return Err(Error::dim("symbol blocks", tx.len(), rx.len()));
        }
        for (t, r) in tx.iter().zip(rx) {
            self.signal_energy += t.norm_sqr();
            self.error_energy += (r - t).norm_sqr();
        }
        Ok(())
    }

    pub fn add_bits(&mut self, tx: &[u8], rx: &[u8]) -> Result<()> {
        if tx.len() != rx.len() {
            return Err(Error::dim("bit streams", tx.len(), rx.len()));
        }
        self.bit_errors += tx.iter().zip(rx).filter(|(a, b)| a != b).count() as u64;
        self.bits += tx.len() as u64;
        Ok(())
    }

    pub fn merge(&mut self, other: &MetricsAccumulator) {
        self.signal_energy += other.signal_energy;
        self.error_energy += other.error_energy;
        self.bit_errors += other.bit_errors;
        self.bits += other.bits;
    }

    pub fn finish(&self) -> Metrics {
        let mer_db = if self.error_energy == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (self.signal_energy / self.error_energy).log10()
        };
        let ber = if self.bits == 0 { 0.0 } else { self.bit_errors as f64 / self.bits as f64 };
        Metrics {
            mer_db,
            ber,
            bit_errors: self.bit_errors,
            bits: self.bits,
        }
    }
}

pub fn compute_metrics(tx_symbols: &[C64], rx_symbols: &[C64], tx_bits: &[u8], rx_bits: &[u8]) -> Result<Metrics> {
    if tx_symbols.is_empty() {
        return Err(Error::InvalidInput("metrics need at least one symbol".into()));
    }
    let mut acc = MetricsAccumulator::default();
    acc.add_symbols(tx_symbols, rx_symbols)?;
    acc.add_bits(tx_bits, rx_bits)?;
    Ok(acc.finish())
}
