//! Integer cumulative frequency tables for the range coder.

use crate::error::{invalid, Result};

/// Bits of probability precision; every table sums to `1 << PRECISION`.
pub const PRECISION: u32 = 16;
pub const TOTAL: u32 = 1 << PRECISION;
/// Largest number of in-support symbols per table.
pub const MAX_SUPPORT: usize = 4095;
/// Raw bits spent on an escaped value after the escape symbol.
pub const ESCAPE_RAW_BITS: u32 = 32;

/// Quantized CDF over the integers `offset .. offset + support`, followed by
/// one escape symbol covering everything outside that range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfTable {
    offset: i32,
    /// `support + 2` entries, `cdf[0] == 0`, last entry `== TOTAL`.
    cdf: Vec<u32>,
}

impl CdfTable {
    /// Quantizes `pmf` (masses of `offset, offset + 1, ...`) into a table.
    /// Whatever mass `pmf` does not cover is assigned to the escape symbol.
    /// Every symbol, including the escape, receives a frequency of at least 1.
    pub fn from_pmf(pmf: &[f64], offset: i32) -> Result<Self> {
        if pmf.is_empty() || pmf.len() > MAX_SUPPORT {
            return Err(invalid!(
                "table support must hold 1..={MAX_SUPPORT} symbols, got {}",
                pmf.len()
            ));
        }
        if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid!("pmf entries must be finite and non-negative"));
        }
        let covered: f64 = pmf.iter().sum();
        let mut masses: Vec<f64> = pmf.to_vec();
        masses.push((1.0 - covered).max(0.0));
        let norm: f64 = masses.iter().sum();
        let scale = TOTAL as f64 / norm;

        let mut freqs: Vec<u32> = Vec::with_capacity(masses.len());
        let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(masses.len());
        for (i, &m) in masses.iter().enumerate() {
            let exact = m * scale;
            let f = exact.floor() as u32;
            freqs.push(f.max(1));
            remainders.push((exact - f as f64, i));
        }
        let assigned: i64 = freqs.iter().map(|&f| f as i64).sum();
        let mut deficit = TOTAL as i64 - assigned;
        if deficit > 0 {
            // largest remainders first; ties broken by index for determinism
            remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(_, i) in remainders.iter().cycle() {
                if deficit == 0 {
                    break;
                }
                freqs[i] += 1;
                deficit -= 1;
            }
        } else if deficit < 0 {
            remainders.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            while deficit < 0 {
                let mut progressed = false;
                for &(_, i) in &remainders {
                    if deficit == 0 {
                        break;
                    }
                    if freqs[i] > 1 {
                        freqs[i] -= 1;
                        deficit += 1;
                        progressed = true;
                    }
                }
                if !progressed {
                    return Err(invalid!("table of {} symbols cannot fit precision", freqs.len()));
                }
            }
        }
        let mut cdf = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u32;
        cdf.push(0);
        for f in freqs {
            acc += f;
            cdf.push(acc);
        }
        debug_assert_eq!(acc, TOTAL);
        Ok(Self { offset, cdf })
    }

    /// Table with equal frequency on `offset .. offset + n` and a minimal escape.
    pub fn uniform(n: usize, offset: i32) -> Result<Self> {
        Self::from_pmf(&vec![1.0 / n as f64; n], offset)
    }

    pub fn offset(&self) -> i32 {
        self.offset
    }

    /// Number of in-support symbols (the escape is not counted).
    pub fn support(&self) -> usize {
        self.cdf.len() - 2
    }

    pub fn min_value(&self) -> i32 {
        self.offset
    }

    pub fn max_value(&self) -> i32 {
        self.offset + self.support() as i32 - 1
    }

    pub fn escape_index(&self) -> usize {
        self.support()
    }

    pub fn cdf(&self) -> &[u32] {
        &self.cdf
    }

    pub fn cum(&self, index: usize) -> u32 {
        self.cdf[index]
    }

    pub fn freq(&self, index: usize) -> u32 {
        self.cdf[index + 1] - self.cdf[index]
    }

    /// In-support index of `value`, or `None` if it must be escaped.
    pub fn index_of(&self, value: i32) -> Option<usize> {
        let rel = value as i64 - self.offset as i64;
        (rel >= 0 && (rel as usize) < self.support()).then_some(rel as usize)
    }

    /// Symbol index whose cumulative range contains `target`.
    pub fn lookup(&self, target: u32) -> usize {
        // last cdf entry <= target
        self.cdf.partition_point(|&c| c <= target) - 1
    }

    /// Quantized probabilities, escape last.
    pub fn pmf(&self) -> Vec<f64> {
        (0..=self.support())
            .map(|i| self.freq(i) as f64 / TOTAL as f64)
            .collect()
    }

    /// Ideal code length of `value` under this table, in bits.
    pub fn cost_bits(&self, value: i32) -> f64 {
        match self.index_of(value) {
            Some(i) => -(self.freq(i) as f64 / TOTAL as f64).log2(),
            None => {
                -(self.freq(self.escape_index()) as f64 / TOTAL as f64).log2()
                    + ESCAPE_RAW_BITS as f64
            }
        }
    }
}
