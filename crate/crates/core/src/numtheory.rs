//! Modular arithmetic and discrete-logarithm instance validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumberError {
    #[error("modulus {0} must be at least 3")]
    ModulusTooSmall(u64),
    #[error("not a unit mod N: gcd({value}, {modulus}) = {gcd}")]
    NotUnit { value: u64, modulus: u64, gcd: u64 },
    #[error("unsupported: order r = {0} must be prime and > 2")]
    UnsupportedOrder(u64),
    #[error("promise violated: {b} is not a power of {a} mod {n}")]
    PromiseViolated { n: u64, a: u64, b: u64 },
    #[error("modulus {0} too large for desk-scale simulation")]
    ModulusTooLarge(u64),
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

/// Square-and-multiply `base^exp mod modulus`.
pub fn mod_pow(base: u64, exp: u64, modulus: u64) -> u64 {
    assert!(modulus >= 1, "modulus must be positive");
    let mut result = 1 % modulus;
    let mut b = base % modulus;
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            result = mul_mod(result, b, modulus);
        }
        b = mul_mod(b, b, modulus);
        e >>= 1;
    }
    result
}

/// `base^(2^k) mod modulus` by `k` squarings.
pub fn mod_pow2k(base: u64, k: u32, modulus: u64) -> u64 {
    let mut c = base % modulus;
    for _ in 0..k {
        c = mul_mod(c, c, modulus);
    }
    c
}

/// The inverse of `x` mod `modulus`, in `1..modulus` (`0` when modulus is 1).
pub fn mod_inverse(x: u64, modulus: u64) -> Result<u64, NumberError> {
    let (mut old_r, mut r) = (x as i128 % modulus as i128, modulus as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 && modulus != 1 {
        return Err(NumberError::NotUnit { value: x, modulus, gcd: old_r as u64 });
    }
    Ok(old_s.rem_euclid(modulus as i128) as u64)
}

/// Least `r ≥ 1` with `a^r ≡ 1 (mod n)`, by iteration.
pub fn multiplicative_order(a: u64, n: u64) -> Result<u64, NumberError> {
    let g = gcd(a % n, n);
    if g != 1 {
        return Err(NumberError::NotUnit { value: a, modulus: n, gcd: g });
    }
    let a = a % n;
    let mut x = a;
    let mut r = 1;
    while x != 1 % n {
        x = mul_mod(x, a, n);
        r += 1;
    }
    Ok(r)
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// Bit length of `n`, i.e. `⌊log₂ n⌋ + 1` for `n ≥ 1`.
pub fn bit_length(n: u64) -> u32 {
    64 - n.leading_zeros()
}

/// `⌈log₂ n⌉` for `n ≥ 1`.
pub fn ceil_log2(n: u64) -> u32 {
    assert!(n >= 1);
    if n == 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

/// Largest modulus whose work register stays within the simulator budget.
pub const MAX_MODULUS: u64 = 1 << 16;

/// A validated discrete-logarithm instance `b ≡ a^g (mod N)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub n: u64,
    pub a: u64,
    pub b: u64,
    /// Multiplicative order of `a`, always computed.
    pub r: u64,
    /// Work-register width `⌊log₂ N⌋ + 1`.
    pub l: u32,
    /// Known exponent, for test assertions only.
    pub hidden_g: Option<u64>,
}

impl ProblemInstance {
    /// Checks every instance invariant and brute-forces `g`.
    pub fn validate(n: u64, a: u64, b: u64) -> Result<Self, NumberError> {
        if n < 3 {
            return Err(NumberError::ModulusTooSmall(n));
        }
        if n > MAX_MODULUS {
            return Err(NumberError::ModulusTooLarge(n));
        }
        for v in [a, b] {
            let g = gcd(v % n, n);
            if g != 1 {
                return Err(NumberError::NotUnit { value: v, modulus: n, gcd: g });
            }
        }
        let (a, b) = (a % n, b % n);
        let r = multiplicative_order(a, n)?;
        if r <= 2 || !is_prime(r) {
            return Err(NumberError::UnsupportedOrder(r));
        }
        let g = brute_force_log(a, b, n, r).ok_or(NumberError::PromiseViolated { n, a, b })?;
        Ok(Self { n, a, b, r, l: bit_length(n), hidden_g: Some(g) })
    }

    /// `⌈log₂ r + 1⌉`, the precision that separates neighbouring multiples of `1/r`.
    pub fn precision_bits(&self) -> u32 {
        ceil_log2(self.r) + 1
    }

    /// Whether `a^g ≡ b`.
    pub fn verifies(&self, g: u64) -> bool {
        mod_pow(self.a, g, self.n) == self.b
    }

    /// The cyclic group `{a^k mod N : 0 ≤ k < r}` in exponent order.
    pub fn orbit(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.r as usize);
        let mut x = 1 % self.n;
        for _ in 0..self.r {
            out.push(x);
            x = mul_mod(x, self.a, self.n);
        }
        out
    }
}

/// Exponent search `a^g ≡ b` over `g < bound`.
pub fn brute_force_log(a: u64, b: u64, n: u64, bound: u64) -> Option<u64> {
    let mut x = 1 % n;
    for g in 0..bound {
        if x == b % n {
            return Some(g);
        }
        x = mul_mod(x, a, n);
    }
    None
}

pub fn validate_instance(n: u64, a: u64, b: u64) -> Result<ProblemInstance, NumberError> {
    ProblemInstance::validate(n, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mod_pow_examples() {
        assert_eq!(mod_pow(3, 5, 11), 1);
        assert_eq!(mod_pow(7, 0, 11), 1);
        assert_eq!(mod_pow(3, 2, 11), 9);
        assert_eq!(mod_pow2k(3, 3, 11), mod_pow(3, 8, 11));
    }

    #[test]
    fn mod_inverse_examples() {
        assert_eq!(mod_inverse(2, 5).unwrap(), 3);
        assert_eq!(mod_inverse(1, 7).unwrap(), 1);
        assert_eq!(mod_inverse(4, 5).unwrap(), 4);
        assert_eq!(
            mod_inverse(6, 9),
            Err(NumberError::NotUnit { value: 6, modulus: 9, gcd: 3 })
        );
    }

    #[test]
    fn order_examples() {
        assert_eq!(multiplicative_order(3, 11).unwrap(), 5);
        assert_eq!(multiplicative_order(1, 11).unwrap(), 1);
        assert_eq!(multiplicative_order(10, 11).unwrap(), 2);
        assert!(multiplicative_order(2, 4).is_err());
    }

    #[test]
    fn validate_examples() {
        let inst = validate_instance(11, 3, 9).unwrap();
        assert_eq!((inst.r, inst.l, inst.hidden_g), (5, 4, Some(2)));
        assert_eq!(validate_instance(11, 3, 1).unwrap().hidden_g, Some(0));
        assert_eq!(
            validate_instance(11, 3, 7),
            Err(NumberError::PromiseViolated { n: 11, a: 3, b: 7 })
        );
    }

    #[test]
    fn validate_rejections() {
        // 2 has order 10 mod 11.
        assert_eq!(validate_instance(11, 2, 4), Err(NumberError::UnsupportedOrder(10)));
        // 10 has order 2.
        assert_eq!(validate_instance(11, 10, 1), Err(NumberError::UnsupportedOrder(2)));
        assert!(matches!(validate_instance(12, 5, 1), Err(NumberError::UnsupportedOrder(2))));
        assert!(matches!(validate_instance(15, 3, 1), Err(NumberError::NotUnit { gcd: 3, .. })));
        assert!(matches!(validate_instance(15, 2, 5), Err(NumberError::NotUnit { gcd: 5, .. })));
        assert_eq!(validate_instance(2, 1, 1), Err(NumberError::ModulusTooSmall(2)));
    }

    #[test]
    fn widths() {
        assert_eq!(bit_length(11), 4);
        assert_eq!(bit_length(16), 5);
        assert_eq!(ceil_log2(5), 3);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(1), 0);
        let inst = validate_instance(11, 3, 9).unwrap();
        assert_eq!(inst.precision_bits(), 4);
        assert_eq!(inst.orbit(), vec![1, 3, 9, 5, 4]);
    }

    #[test]
    fn primes() {
        let small: Vec<u64> = (0..32).filter(|&n| is_prime(n)).collect();
        assert_eq!(small, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31]);
    }
}
