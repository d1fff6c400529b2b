//! Operand precisions and the width rules used by the assembler and mapper.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const MAX_BITS: u8 = 64;

/// Bit width plus signedness of one operand. Any width in 1..=64 is legal,
/// powers of two get no special treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Precision {
    pub bits: u8,
    pub signed: bool,
}

impl Precision {
    pub fn new(bits: u8, signed: bool) -> Self {
        assert!((1..=MAX_BITS).contains(&bits), "precision bits {bits} out of 1..=64");
        Precision { bits, signed }
    }

    pub fn signed(bits: u8) -> Self {
        Self::new(bits, true)
    }

    pub fn unsigned(bits: u8) -> Self {
        Self::new(bits, false)
    }

    /// Number of bits after zero-padding up to the next power of two, at
    /// least one byte. This is how elements are laid out in DRAM.
    pub fn container_bits(&self) -> u32 {
        (self.bits as u32).next_power_of_two().max(8)
    }

    pub fn container_bytes(&self) -> u32 {
        self.container_bits() / 8
    }

    /// Reduce a value to this precision's range (two's complement wrap).
    pub fn wrap(&self, v: i64) -> i64 {
        if self.bits == 64 {
            return v;
        }
        let m = (1i64 << self.bits) - 1;
        let u = v & m;
        if self.signed && (u >> (self.bits - 1)) & 1 == 1 {
            u - (1i64 << self.bits)
        } else {
            u
        }
    }

    pub fn min_value(&self) -> i64 {
        if self.signed {
            -(1i64 << (self.bits - 1))
        } else {
            0
        }
    }

    pub fn max_value(&self) -> i64 {
        if self.signed {
            (1i64 << (self.bits - 1)) - 1
        } else if self.bits == 64 {
            i64::MAX // unsigned 64 capped to the i64 test domain
        } else {
            (1i64 << self.bits) - 1
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", if self.signed { 'i' } else { 'u' }, self.bits)
    }
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (sign, rest) = match s.as_bytes().first() {
            Some(b'i') => (true, &s[1..]),
            Some(b'u') => (false, &s[1..]),
            _ => return Err(format!("bad precision token `{s}`")),
        };
        let bits: u8 = rest
            .parse()
            .map_err(|_| format!("bad precision token `{s}`"))?;
        if !(1..=MAX_BITS).contains(&bits) {
            return Err(format!("precision `{s}` outside 1..=64"));
        }
        Ok(Precision { bits, signed: sign })
    }
}

/// Which width rule to apply in [`result_precision`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WidthRule {
    Add,
    Mult,
    Logic,
    /// Accumulating `accum_count` values of width `a`.
    Accumulate,
}

/// Minimum result precision that can never overflow.
///
/// * multiply: `a.bits + b.bits`
/// * add: `max(a.bits, b.bits) + 1`
/// * accumulate k values: `a.bits + ceil(log2(k))`
/// * logic: `max(a.bits, b.bits)`
///
/// Widths saturate at 64. The result is signed if either input is.
pub fn result_precision(op: WidthRule, a: Precision, b: Precision, accum_count: u64) -> Precision {
    assert!(accum_count >= 1, "accumulation count must be >= 1");
    let signed = a.signed || b.signed;
    let bits: u32 = match op {
        WidthRule::Mult => a.bits as u32 + b.bits as u32,
        WidthRule::Add => a.bits.max(b.bits) as u32 + 1,
        WidthRule::Logic => a.bits.max(b.bits) as u32,
        WidthRule::Accumulate => a.bits as u32 + ceil_log2(accum_count),
    };
    Precision::new(bits.min(MAX_BITS as u32) as u8, match op {
        WidthRule::Accumulate => a.signed,
        _ => signed,
    })
}

pub fn ceil_log2(n: u64) -> u32 {
    assert!(n >= 1);
    if n == 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}
