//! Fixed-width unsigned integer streams, packed least-significant bit first.

use crate::error::{Error, Result};

/// Bytes needed for `count` values of `bits` bits each.
pub fn packed_len(count: usize, bits: u8) -> usize {
    (count * bits as usize).div_ceil(8)
}

/// Packs each value into `bits` bits (1..=32). Values must fit.
pub fn pack(values: &[u32], bits: u8) -> Result<Vec<u8>> {
    check_width(bits)?;
    let mut out = vec![0u8; packed_len(values.len(), bits)];
    let mut bit = 0usize;
    for &v in values {
        if bits < 32 && v >> bits != 0 {
            return Err(Error::invalid(format!(
                "value {v} does not fit in {bits} bits"
            )));
        }
        let mut v = v as u64;
        let mut left = bits as usize;
        while left > 0 {
            let byte = bit / 8;
            let off = bit % 8;
            let take = left.min(8 - off);
            out[byte] |= ((v & ((1 << take) - 1)) as u8) << off;
            v >>= take;
            bit += take;
            left -= take;
        }
    }
    Ok(out)
}

/// Inverse of [`pack`]. Fails if `bytes` holds fewer than `count` values.
pub fn unpack(bytes: &[u8], bits: u8, count: usize) -> Result<Vec<u32>> {
    check_width(bits)?;
    let needed = packed_len(count, bits);
    if bytes.len() < needed {
        return Err(Error::Truncated {
            what: "index stream",
            needed,
            available: bytes.len(),
        });
    }
    let mut out = Vec::with_capacity(count);
    let mut bit = 0usize;
    for _ in 0..count {
        let mut v = 0u64;
        let mut got = 0usize;
        while got < bits as usize {
            let byte = bit / 8;
            let off = bit % 8;
            let take = (bits as usize - got).min(8 - off);
            let chunk = (bytes[byte] >> off) as u64 & ((1 << take) - 1);
            v |= chunk << got;
            got += take;
            bit += take;
        }
        out.push(v as u32);
    }
    Ok(out)
}

fn check_width(bits: u8) -> Result<()> {
    if (1..=32).contains(&bits) {
        Ok(())
    } else {
        Err(Error::invalid(format!("bit width {bits} outside 1..=32")))
    }
}
