//! Fixed-width bit strings and exact binary expansions of rationals.
//!
//! Positions are 1-based and MSB-first everywhere: bit 1 of a width-`t`
//! string is the coefficient of `2^(t-1)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Widest string we carry. Desk-scale orders keep every estimate well below this.
pub const MAX_WIDTH: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BitsError {
    #[error("bit string width {0} outside 1..={MAX_WIDTH}")]
    BadWidth(u32),
    #[error("value {value} does not fit in {width} bits")]
    Overflow { value: u64, width: u32 },
    #[error("slice [{start}, {end}] out of range for width {width}")]
    SliceOutOfRange { start: u32, end: u32, width: u32 },
    #[error("width mismatch: {0} vs {1}")]
    WidthMismatch(u32, u32),
    #[error("invalid character {0:?} in bit string")]
    BadChar(char),
    #[error("fraction {numerator}/{denominator} is not in [0, 1)")]
    BadFraction { numerator: u64, denominator: u64 },
}

fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// A binary word of explicit width, identified with its integer value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitString {
    width: u32,
    value: u64,
}

impl BitString {
    pub fn new(width: u32, value: u64) -> Result<Self, BitsError> {
        if width == 0 || width > MAX_WIDTH {
            return Err(BitsError::BadWidth(width));
        }
        if value & !mask(width) != 0 {
            return Err(BitsError::Overflow { value, width });
        }
        Ok(Self { width, value })
    }

    /// Builds a string from the low `width` bits of `value`.
    pub fn from_low_bits(width: u32, value: u64) -> Result<Self, BitsError> {
        Self::new(width, value & mask(width.min(64)))
    }

    pub fn zeros(width: u32) -> Result<Self, BitsError> {
        Self::new(width, 0)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    /// `2^width`, as a wide integer so width 64 does not overflow.
    pub fn modulus(&self) -> u128 {
        1u128 << self.width
    }

    /// Bit `i` (1-based, MSB-first).
    pub fn bit(&self, i: u32) -> Result<bool, BitsError> {
        if i == 0 || i > self.width {
            return Err(BitsError::SliceOutOfRange { start: i, end: i, width: self.width });
        }
        Ok((self.value >> (self.width - i)) & 1 == 1)
    }

    /// `x_[i,j]`: bits `i..=j`.
    pub fn slice(&self, i: u32, j: u32) -> Result<Self, BitsError> {
        if i == 0 || i > j || j > self.width {
            return Err(BitsError::SliceOutOfRange { start: i, end: j, width: self.width });
        }
        let w = j - i + 1;
        Ok(Self { width: w, value: (self.value >> (self.width - j)) & mask(w) })
    }

    /// The first `n` bits.
    pub fn prefix(&self, n: u32) -> Result<Self, BitsError> {
        self.slice(1, n)
    }

    /// The last `n` bits.
    pub fn suffix(&self, n: u32) -> Result<Self, BitsError> {
        if n == 0 || n > self.width {
            return Err(BitsError::SliceOutOfRange { start: 0, end: n, width: self.width });
        }
        self.slice(self.width - n + 1, self.width)
    }

    /// `self ∘ tail`.
    pub fn concat(&self, tail: &BitString) -> Result<Self, BitsError> {
        let w = self.width + tail.width;
        if w > MAX_WIDTH {
            return Err(BitsError::BadWidth(w));
        }
        Ok(Self { width: w, value: (self.value << tail.width) | tail.value })
    }

    /// `Sum(x, b)`: the string of the same width holding `(x + b) mod 2^width`.
    pub fn wrap_add(&self, b: i64) -> Self {
        let m = self.modulus() as i128;
        let v = (self.value as i128 + b as i128).rem_euclid(m);
        Self { width: self.width, value: v as u64 }
    }

    /// Circular distance `d_t(x, y) = min(|x - y|, 2^t - |x - y|)`.
    pub fn circ_dist(&self, other: &BitString) -> Result<u64, BitsError> {
        if self.width != other.width {
            return Err(BitsError::WidthMismatch(self.width, other.width));
        }
        Ok(circ_dist_raw(self.value, other.value, self.width))
    }

    /// The signed shift `b` with `|b| = d_t(x, y)` and `Sum(x, b) = y`.
    /// Ties at exactly `2^(t-1)` resolve to the positive shift.
    pub fn signed_offset_to(&self, other: &BitString) -> Result<i64, BitsError> {
        if self.width != other.width {
            return Err(BitsError::WidthMismatch(self.width, other.width));
        }
        let m = self.modulus() as i128;
        let fwd = (other.value as i128 - self.value as i128).rem_euclid(m);
        let v = if 2 * fwd <= m { fwd } else { fwd - m };
        Ok(v as i64)
    }
}

/// Circular distance on raw values of a common width.
pub fn circ_dist_raw(x: u64, y: u64, width: u32) -> u64 {
    let diff = x.abs_diff(y) as u128;
    let m = 1u128 << width;
    diff.min(m - diff) as u64
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in (0..self.width).rev() {
            f.write_str(if (self.value >> i) & 1 == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = BitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let width = s.chars().count() as u32;
        if width == 0 || width > MAX_WIDTH {
            return Err(BitsError::BadWidth(width));
        }
        let mut value = 0u64;
        for c in s.chars() {
            let bit = match c {
                '0' => 0,
                '1' => 1,
                other => return Err(BitsError::BadChar(other)),
            };
            value = (value << 1) | bit;
        }
        Self::new(width, value)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An exact rational phase in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fraction {
    numerator: u64,
    denominator: u64,
}

impl Fraction {
    pub fn new(numerator: u64, denominator: u64) -> Result<Self, BitsError> {
        if denominator == 0 || numerator >= denominator {
            return Err(BitsError::BadFraction { numerator, denominator });
        }
        Ok(Self { numerator, denominator })
    }

    /// `numerator / denominator` reduced mod 1.
    pub fn reduced(numerator: u64, denominator: u64) -> Result<Self, BitsError> {
        if denominator == 0 {
            return Err(BitsError::BadFraction { numerator, denominator });
        }
        Self::new(numerator % denominator, denominator)
    }

    pub fn zero(denominator: u64) -> Result<Self, BitsError> {
        Self::new(0, denominator)
    }

    pub fn numerator(&self) -> u64 {
        self.numerator
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn is_zero(&self) -> bool {
        self.numerator == 0
    }

    /// `ω_{i,+∞} = 0.b_i b_{i+1}…`, i.e. `2^(i-1)·ω mod 1`.
    pub fn tail_from(&self, i: u32) -> Self {
        assert!(i >= 1, "fraction positions are 1-based");
        let d = self.denominator as u128;
        let shift = pow2_mod(i - 1, d);
        let n = (self.numerator as u128 * shift) % d;
        Self { numerator: n as u64, denominator: self.denominator }
    }

    /// `ω_{i,j}` as a bit string.
    pub fn window(&self, i: u32, j: u32) -> Result<BitString, BitsError> {
        fraction_bits(self.numerator, self.denominator, i, j)
    }

    /// The nearest `t`-bit window; see [`nearest_window`].
    pub fn nearest(&self, t: u32) -> Result<BitString, BitsError> {
        nearest_window(self.numerator, self.denominator, t)
    }

    pub fn to_f64(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// `2^e mod m` for a wide modulus.
fn pow2_mod(e: u32, m: u128) -> u128 {
    let mut result = 1 % m;
    let mut base = 2 % m;
    let mut e = e;
    while e > 0 {
        if e & 1 == 1 {
            result = result * base % m;
        }
        base = base * base % m;
        e >>= 1;
    }
    result
}

/// A window `ω_{start,end}` of the binary expansion of a rational phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FractionWindow {
    pub phase: Fraction,
    pub start: u32,
    pub end: u32,
}

impl FractionWindow {
    pub fn new(phase: Fraction, start: u32, end: u32) -> Result<Self, BitsError> {
        if start == 0 || end < start || end - start + 1 > MAX_WIDTH {
            return Err(BitsError::SliceOutOfRange { start, end, width: MAX_WIDTH });
        }
        Ok(Self { phase, start, end })
    }

    pub fn width(&self) -> u32 {
        self.end - self.start + 1
    }

    pub fn bits(&self) -> BitString {
        // Range validated at construction.
        self.phase.window(self.start, self.end).expect("validated window")
    }
}

/// Bits `i..=j` of the binary expansion of `numerator/denominator`, by exact
/// repeated doubling: `bit_m = ⌊2^m·numerator/denominator⌋ mod 2`.
pub fn fraction_bits(numerator: u64, denominator: u64, i: u32, j: u32) -> Result<BitString, BitsError> {
    if denominator == 0 || numerator >= denominator {
        return Err(BitsError::BadFraction { numerator, denominator });
    }
    if i == 0 || j < i || j - i + 1 > MAX_WIDTH {
        return Err(BitsError::SliceOutOfRange { start: i, end: j, width: MAX_WIDTH });
    }
    let d = denominator as u128;
    // Remainder after the first i-1 doublings.
    let mut rem = (numerator as u128 * pow2_mod(i - 1, d)) % d;
    let mut value = 0u64;
    for _ in i..=j {
        rem <<= 1;
        let bit = rem >= d;
        if bit {
            rem -= d;
        }
        value = (value << 1) | bit as u64;
    }
    BitString::new(j - i + 1, value)
}

/// The `t`-bit string nearest to `2^t·ω` on the circle of size `2^t`.
/// An exact half-way tie resolves to the truncation `fraction_bits(·,·,1,t)`.
pub fn nearest_window(numerator: u64, denominator: u64, t: u32) -> Result<BitString, BitsError> {
    if denominator == 0 || numerator >= denominator {
        return Err(BitsError::BadFraction { numerator, denominator });
    }
    if t == 0 || t > MAX_WIDTH {
        return Err(BitsError::BadWidth(t));
    }
    let d = denominator as u128;
    let scaled = (numerator as u128) << t;
    let q = scaled / d;
    let rem = scaled % d;
    let m = if 2 * rem > d { q + 1 } else { q };
    BitString::from_low_bits(t, (m % (1u128 << t)) as u64)
}
