//! 32-bit renormalizing range coder with 16-bit probabilities.
//!
//! The encoder keeps a 33-bit `low` with a pending-byte cache so carries
//! propagate into bytes already produced. The always-zero leading byte of the
//! classic construction is dropped, the final flush emits only as many bytes
//! as needed to pin a value inside the last interval, and trailing zero bytes
//! are trimmed as far as the decoder's bounded read-ahead allows. A non-empty
//! stream ends with a 16-bit digest of the coded values, which the decoder
//! checks along with byte consumption so corrupted or truncated payloads fail
//! loudly.

use super::cdf::{CdfTable, ESCAPE_RAW_BITS, PRECISION};
use crate::error::{invalid, Error, Result};

const TOP: u32 = 1 << 24;
const FNV_OFFSET: u32 = 0x811c_9dc5;
const FNV_PRIME: u32 = 0x0100_0193;

fn digest_step(h: u32, value: i32) -> u32 {
    value
        .to_le_bytes()
        .iter()
        .fold(h, |h, &b| (h ^ b as u32).wrapping_mul(FNV_PRIME))
}

fn fold16(h: u32) -> u32 {
    (h ^ (h >> 16)) & 0xFFFF
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Decode(msg.into())
}

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    skipped_lead: bool,
    out: Vec<u8>,
    digest: u32,
    count: usize,
    /// Renormalization shifts so far; the decoder reads `4 + shifts` bytes.
    shifts: usize,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            skipped_lead: false,
            out: Vec::new(),
            digest: FNV_OFFSET,
            count: 0,
            shifts: 0,
        }
    }

    fn emit(&mut self, byte: u8) {
        if self.skipped_lead {
            self.out.push(byte);
        } else {
            debug_assert_eq!(byte, 0, "leading byte of a range-coded stream is always zero");
            self.skipped_lead = true;
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.emit(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    fn encode_range(&mut self, cum: u32, freq: u32) {
        debug_assert!(freq > 0 && cum + freq <= 1 << PRECISION);
        let r = self.range >> PRECISION;
        self.low += r as u64 * cum as u64;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
            self.shifts += 1;
        }
    }

    /// Codes a raw 16-bit value with uniform probability.
    fn encode_raw16(&mut self, value: u32) {
        self.encode_range(value & 0xFFFF, 1);
    }

    /// Codes `value` under `table`, escaping it if it lies outside the support.
    pub fn encode(&mut self, value: i32, table: &CdfTable) {
        match table.index_of(value) {
            Some(i) => self.encode_range(table.cum(i), table.freq(i)),
            None => {
                let esc = table.escape_index();
                self.encode_range(table.cum(esc), table.freq(esc));
                let raw = value as u32;
                debug_assert_eq!(ESCAPE_RAW_BITS, 32);
                self.encode_raw16(raw >> 16);
                self.encode_raw16(raw & 0xFFFF);
            }
        }
        self.digest = digest_step(self.digest, value);
        self.count += 1;
    }

    pub fn symbols_written(&self) -> usize {
        self.count
    }

    /// Flushes the coder and returns the payload. An encoder that coded no
    /// symbols produces an empty payload.
    pub fn finish(mut self) -> Vec<u8> {
        if self.count == 0 {
            return Vec::new();
        }
        self.encode_raw16(fold16(self.digest));
        // shortest byte-aligned value inside [low, low + range)
        let end = self.low + self.range as u64;
        let mut kept = 4;
        for k in 0..=4u32 {
            let mask = (1u64 << (32 - 8 * k)) - 1;
            let v = (self.low + mask) & !mask;
            if v < end {
                self.low = v;
                kept = k;
                break;
            }
        }
        for _ in 0..=kept {
            self.shift_low();
        }
        // zeros the decoder would read past the end can be dropped
        let min_len = (4 + self.shifts).saturating_sub(MAX_IMPLICIT);
        while self.out.len() > min_len && self.out.last() == Some(&0) {
            self.out.pop();
        }
        self.out
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
    digest: u32,
    count: usize,
}

/// Implicit zero bytes the decoder may read past the payload end.
const MAX_IMPLICIT: usize = 4;

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        let mut d = Self {
            data,
            pos: 0,
            range: u32::MAX,
            code: 0,
            digest: FNV_OFFSET,
            count: 0,
        };
        if !data.is_empty() {
            for _ in 0..4 {
                d.code = (d.code << 8) | d.next_byte()? as u32;
            }
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = match self.data.get(self.pos) {
            Some(&b) => b,
            None if self.pos < self.data.len() + MAX_IMPLICIT => 0,
            None => {
                return Err(corrupt(format!(
                    "range-coded payload truncated at byte {}",
                    self.data.len()
                )))
            }
        };
        self.pos += 1;
        Ok(b)
    }

    fn target(&self) -> Result<u32> {
        let r = self.range >> PRECISION;
        let v = self.code / r;
        if v >= 1 << PRECISION {
            return Err(corrupt("range-coded payload is corrupt (code out of range)"));
        }
        Ok(v)
    }

    fn consume(&mut self, cum: u32, freq: u32) -> Result<()> {
        let r = self.range >> PRECISION;
        self.code -= r * cum;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.next_byte()? as u32;
        }
        Ok(())
    }

    fn decode_raw16(&mut self) -> Result<u32> {
        let v = self.target()?;
        self.consume(v, 1)?;
        Ok(v)
    }

    pub fn decode(&mut self, table: &CdfTable) -> Result<i32> {
        if self.data.is_empty() {
            return Err(corrupt("empty payload cannot hold symbols"));
        }
        let target = self.target()?;
        let idx = table.lookup(target);
        self.consume(table.cum(idx), table.freq(idx))?;
        let value = if idx == table.escape_index() {
            let hi = self.decode_raw16()?;
            let lo = self.decode_raw16()?;
            let v = ((hi << 16) | lo) as i32;
            if table.index_of(v).is_some() {
                return Err(corrupt("escaped value lies inside the table support"));
            }
            v
        } else {
            table.offset() + idx as i32
        };
        self.digest = digest_step(self.digest, value);
        self.count += 1;
        Ok(value)
    }

    /// Verifies the trailing digest and that the payload was consumed exactly.
    pub fn finish(mut self) -> Result<()> {
        if self.count == 0 {
            return if self.data.is_empty() {
                Ok(())
            } else {
                Err(corrupt("payload present but no symbols were expected"))
            };
        }
        let stored = self.decode_raw16()?;
        if stored != fold16(self.digest) {
            return Err(corrupt("range-coded payload digest mismatch"));
        }
        if self.pos < self.data.len() {
            return Err(corrupt(format!(
                "range-coded payload has {} trailing bytes",
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Prefixes `payload` with its little-endian `u32` length.
pub fn frame_chunk(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 4);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Reads one length-prefixed chunk at `*pos`, advancing past it.
pub fn read_chunk<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    let header = bytes
        .get(*pos..*pos + 4)
        .ok_or_else(|| corrupt(format!("chunk length prefix truncated at byte {}", *pos)))?;
    let len = u32::from_le_bytes(header.try_into().unwrap()) as usize;
    let start = *pos + 4;
    let payload = bytes
        .get(start..start + len)
        .ok_or_else(|| corrupt(format!("chunk at byte {} claims {len} bytes past end of stream", *pos)))?;
    *pos = start + len;
    Ok(payload)
}

fn table_for<'t>(tables: &[&'t CdfTable], i: usize) -> &'t CdfTable {
    if tables.len() == 1 {
        tables[0]
    } else {
        tables[i]
    }
}

/// Codes `symbols` into one length-prefixed chunk. `tables` holds either one
/// table per symbol or a single shared table.
pub fn range_encode(symbols: &[i32], tables: &[&CdfTable]) -> Result<Vec<u8>> {
    if tables.len() != 1 && tables.len() != symbols.len() {
        return Err(invalid!(
            "{} tables supplied for {} symbols",
            tables.len(),
            symbols.len()
        ));
    }
    let mut enc = RangeEncoder::new();
    for (i, &s) in symbols.iter().enumerate() {
        enc.encode(s, table_for(tables, i));
    }
    Ok(frame_chunk(&enc.finish()))
}

/// Decodes `count` symbols from a chunk produced by [`range_encode`].
pub fn range_decode(bytes: &[u8], tables: &[&CdfTable], count: usize) -> Result<Vec<i32>> {
    if tables.len() != 1 && tables.len() != count {
        return Err(invalid!("{} tables supplied for {count} symbols", tables.len()));
    }
    let mut pos = 0;
    let payload = read_chunk(bytes, &mut pos)?;
    if pos != bytes.len() {
        return Err(corrupt("bytes after the chunk payload"));
    }
    let mut dec = RangeDecoder::new(payload)?;
    let out = (0..count)
        .map(|i| dec.decode(table_for(tables, i)))
        .collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    Ok(out)
}

/// Sum of ideal code lengths under the coder's quantized tables.
pub fn estimate_bits(symbols: &[i32], tables: &[&CdfTable]) -> f64 {
    symbols
        .iter()
        .enumerate()
        .map(|(i, &s)| table_for(tables, i).cost_bits(s))
        .sum()
}
