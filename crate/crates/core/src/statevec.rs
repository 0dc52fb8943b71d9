//! Dense state-vector simulation over named registers.
//!
//! A basis index concatenates the registers in declaration order, the first
//! register occupying the most significant bits, and each register is read
//! MSB-first. Modular multiplication is applied as a basis permutation.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::bits::{BitString, BitsError};
use crate::numtheory::{gcd, mod_pow2k, mul_mod};

/// Largest simulated state, in qubits.
pub const MAX_QUBITS: u32 = 24;

/// Marginal mass below which a measurement branch is treated as unreachable.
const EMPTY_SUPPORT: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("unknown register {0:?}")]
    UnknownRegister(String),
    #[error("duplicate register {0:?}")]
    DuplicateRegister(String),
    #[error("register {0:?} must have positive width")]
    EmptyRegister(String),
    #[error("layout needs {0} qubits; the simulator holds at most {MAX_QUBITS}")]
    TooManyQubits(u32),
    #[error("value {value} does not fit register {register:?} of width {width}")]
    ValueOverflow { register: String, value: u64, width: u32 },
    #[error("vector for register {register:?} has length {got}, expected {expected}")]
    VectorLength { register: String, got: usize, expected: usize },
    #[error("multiplier {base} is not a unit mod {modulus}; the map would not be a permutation")]
    NonUnitMultiplier { base: u64, modulus: u64 },
    #[error("work register {register:?} of width {width} cannot hold residues mod {modulus}")]
    WorkTooNarrow { register: String, width: u32, modulus: u64 },
    #[error("prefix width {prefix} invalid for register of width {width}")]
    BadPrefix { prefix: u32, width: u32 },
    #[error("control and target must be distinct registers")]
    SameRegister,
    #[error("measurement branch has vanishing mass {0:e}")]
    EmptySupport(f64),
    #[error(transparent)]
    Bits(#[from] BitsError),
}

/// Position of one register inside the basis index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterSpan {
    /// Bit offset of the register's least significant qubit.
    pub shift: u32,
    pub width: u32,
}

impl RegisterSpan {
    pub fn mask(&self) -> usize {
        ((1usize << self.width) - 1) << self.shift
    }

    pub fn read(&self, index: usize) -> usize {
        (index >> self.shift) & ((1usize << self.width) - 1)
    }

    pub fn write(&self, index: usize, value: usize) -> usize {
        (index & !self.mask()) | (value << self.shift)
    }

    /// Basis-index bit of qubit `q` (1-based, MSB-first).
    pub fn qubit_bit(&self, q: u32) -> u32 {
        self.shift + self.width - q
    }
}

/// Ordered, uniquely named registers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterLayout {
    registers: Vec<(String, u32)>,
}

impl RegisterLayout {
    pub fn new<S: Into<String>>(registers: impl IntoIterator<Item = (S, u32)>) -> Result<Self, SimError> {
        let registers: Vec<(String, u32)> = registers.into_iter().map(|(n, w)| (n.into(), w)).collect();
        let mut seen = HashSet::new();
        for (name, width) in &registers {
            if *width == 0 {
                return Err(SimError::EmptyRegister(name.clone()));
            }
            if !seen.insert(name.as_str()) {
                return Err(SimError::DuplicateRegister(name.clone()));
            }
        }
        let total: u32 = registers.iter().map(|(_, w)| *w).sum();
        if total > MAX_QUBITS {
            return Err(SimError::TooManyQubits(total));
        }
        Ok(Self { registers })
    }

    pub fn total_qubits(&self) -> u32 {
        self.registers.iter().map(|(_, w)| *w).sum()
    }

    pub fn dimension(&self) -> usize {
        1usize << self.total_qubits()
    }

    pub fn registers(&self) -> &[(String, u32)] {
        &self.registers
    }

    pub fn span(&self, name: &str) -> Result<RegisterSpan, SimError> {
        let mut shift = self.total_qubits();
        for (n, w) in &self.registers {
            shift -= w;
            if n == name {
                return Ok(RegisterSpan { shift, width: *w });
            }
        }
        Err(SimError::UnknownRegister(name.to_string()))
    }
}

/// Result of a (partial) computational-basis measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementOutcome {
    pub bits: BitString,
    /// Pre-measurement marginal probability of `bits`.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    layout: RegisterLayout,
    amps: Vec<Complex64>,
}

impl QuantumState {
    /// A computational basis state; unassigned registers hold 0.
    pub fn init_basis(layout: RegisterLayout, assignments: &[(&str, u64)]) -> Result<Self, SimError> {
        let mut index = 0usize;
        for &(name, value) in assignments {
            let span = layout.span(name)?;
            if value >> span.width != 0 {
                return Err(SimError::ValueOverflow { register: name.to_string(), value, width: span.width });
            }
            index = span.write(index, value as usize);
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); layout.dimension()];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { layout, amps })
    }

    /// A product state with the given register vectors; unassigned registers hold |0⟩.
    pub fn from_register_vectors(
        layout: RegisterLayout,
        vectors: &[(&str, &[Complex64])],
    ) -> Result<Self, SimError> {
        let mut factors: Vec<(RegisterSpan, &[Complex64])> = Vec::new();
        for &(name, v) in vectors {
            let span = layout.span(name)?;
            if v.len() != 1usize << span.width {
                return Err(SimError::VectorLength {
                    register: name.to_string(),
                    got: v.len(),
                    expected: 1usize << span.width,
                });
            }
            factors.push((span, v));
        }
        let assigned: usize = factors.iter().map(|(s, _)| s.mask()).fold(0, |a, m| a | m);
        let amps = (0..layout.dimension())
            .map(|i| {
                if i & !assigned != 0 {
                    return Complex64::new(0.0, 0.0);
                }
                factors.iter().fold(Complex64::new(1.0, 0.0), |acc, (span, v)| acc * v[span.read(i)])
            })
            .collect();
        Ok(Self { layout, amps })
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies `H` to every qubit of `register`.
    pub fn hadamard_layer(&mut self, register: &str) -> Result<(), SimError> {
        let span = self.layout.span(register)?;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for q in 1..=span.width {
            let bit = 1usize << span.qubit_bit(q);
            for i in 0..self.amps.len() {
                if i & bit == 0 {
                    let (a, b) = (self.amps[i], self.amps[i | bit]);
                    self.amps[i] = (a + b) * s;
                    self.amps[i | bit] = (a - b) * s;
                }
            }
        }
        Ok(())
    }

    fn check_modmul(&self, control: &str, work: &str, base: u64, modulus: u64) -> Result<(RegisterSpan, RegisterSpan), SimError> {
        if control == work {
            return Err(SimError::SameRegister);
        }
        let c = self.layout.span(control)?;
        let w = self.layout.span(work)?;
        if gcd(base % modulus, modulus) != 1 {
            return Err(SimError::NonUnitMultiplier { base, modulus });
        }
        if (modulus as u128) > (1u128 << w.width) {
            return Err(SimError::WorkTooNarrow { register: work.to_string(), width: w.width, modulus });
        }
        Ok((c, w))
    }

    /// `|j⟩|x⟩ ↦ |j⟩|c^j·x mod N⟩` with `c = base^(2^power_exponent)`, for
    /// `x < N`; work values `x ≥ N` are fixed points.
    pub fn controlled_modmul_power(
        &mut self,
        control: &str,
        work: &str,
        base: u64,
        power_exponent: u32,
        modulus: u64,
    ) -> Result<(), SimError> {
        let (cspan, wspan) = self.check_modmul(control, work, base, modulus)?;
        let c = mod_pow2k(base, power_exponent, modulus);
        let mut powers = Vec::with_capacity(1 << cspan.width);
        let mut p = 1 % modulus;
        for _ in 0..1usize << cspan.width {
            powers.push(p);
            p = mul_mod(p, c, modulus);
        }
        self.permute(|i| {
            let x = wspan.read(i) as u64;
            if x >= modulus {
                return i;
            }
            let y = mul_mod(powers[cspan.read(i)], x, modulus);
            wspan.write(i, y as usize)
        });
        Ok(())
    }

    /// Multiplies the work register by `multiplier` when qubit `q` (1-based,
    /// MSB-first) of `control` is set.
    pub fn controlled_modmul_qubit(
        &mut self,
        control: &str,
        q: u32,
        work: &str,
        multiplier: u64,
        modulus: u64,
    ) -> Result<(), SimError> {
        let (cspan, wspan) = self.check_modmul(control, work, multiplier, modulus)?;
        if q == 0 || q > cspan.width {
            return Err(SimError::BadPrefix { prefix: q, width: cspan.width });
        }
        let bit = 1usize << cspan.qubit_bit(q);
        let m = multiplier % modulus;
        self.permute(|i| {
            let x = wspan.read(i) as u64;
            if i & bit == 0 || x >= modulus {
                return i;
            }
            wspan.write(i, mul_mod(m, x, modulus) as usize)
        });
        Ok(())
    }

    /// Sends the amplitude at index `i` to `f(i)`; `f` must be a bijection.
    fn permute(&mut self, f: impl Fn(usize) -> usize) {
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (i, a) in self.amps.iter().enumerate() {
            out[f(i)] = *a;
        }
        self.amps = out;
    }

    /// Exact inverse Fourier transform on one register:
    /// `|k⟩ ↦ 2^{-t/2} Σ_j e^{-2πijk/2^t} |j⟩`.
    pub fn inverse_qft(&mut self, register: &str) -> Result<(), SimError> {
        self.fourier(register, -1.0)
    }

    /// Forward transform `|j⟩ ↦ 2^{-t/2} Σ_k e^{2πijk/2^t} |k⟩`.
    pub fn qft(&mut self, register: &str) -> Result<(), SimError> {
        self.fourier(register, 1.0)
    }

    fn fourier(&mut self, register: &str, sign: f64) -> Result<(), SimError> {
        let span = self.layout.span(register)?;
        let size = 1usize << span.width;
        let twiddles: Vec<Complex64> = (0..size / 2)
            .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / size as f64))
            .collect();
        let scale = 1.0 / (size as f64).sqrt();
        let mut slice = vec![Complex64::new(0.0, 0.0); size];
        let outer = self.amps.len() / size;
        let low = 1usize << span.shift;
        for o in 0..outer {
            // Split o into the bits above and below the register.
            let base = ((o / low) << (span.shift + span.width)) | (o % low);
            for (v, s) in slice.iter_mut().enumerate() {
                *s = self.amps[base | (v << span.shift)];
            }
            fft_in_place(&mut slice, &twiddles);
            for (v, s) in slice.iter().enumerate() {
                self.amps[base | (v << span.shift)] = *s * scale;
            }
        }
        Ok(())
    }

    /// Exact marginal of the first `prefix_width` qubits of `register`.
    pub fn marginal_distribution(&self, register: &str, prefix_width: u32) -> Result<Vec<f64>, SimError> {
        self.joint_marginal(&[(register, prefix_width)])
    }

    /// Exact joint marginal of several register prefixes. The outcome index
    /// concatenates the prefixes in the order given, first one most significant.
    pub fn joint_marginal(&self, prefixes: &[(&str, u32)]) -> Result<Vec<f64>, SimError> {
        let parts = self.prefix_parts(prefixes)?;
        let total: u32 = parts.iter().map(|(_, p)| p).sum();
        let mut out = vec![0.0; 1usize << total];
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p != 0.0 {
                out[joint_index(&parts, i)] += p;
            }
        }
        Ok(out)
    }

    fn prefix_parts(&self, prefixes: &[(&str, u32)]) -> Result<Vec<(RegisterSpan, u32)>, SimError> {
        prefixes
            .iter()
            .map(|&(name, p)| {
                let span = self.layout.span(name)?;
                if p == 0 || p > span.width {
                    return Err(SimError::BadPrefix { prefix: p, width: span.width });
                }
                Ok((span, p))
            })
            .collect()
    }

    /// Measures the first `prefix_width` qubits of `register` and collapses.
    pub fn measure_prefix<R: Rng + ?Sized>(
        &mut self,
        register: &str,
        prefix_width: u32,
        rng: &mut R,
    ) -> Result<MeasurementOutcome, SimError> {
        let marginal = self.marginal_distribution(register, prefix_width)?;
        let u: f64 = rng.gen();
        let chosen = sample_from(&marginal, u);
        let probability = marginal[chosen];
        if probability < EMPTY_SUPPORT {
            return Err(SimError::EmptySupport(probability));
        }
        let span = self.layout.span(register)?;
        let drop = span.width - prefix_width;
        let scale = 1.0 / probability.sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if span.read(i) >> drop == chosen {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        Ok(MeasurementOutcome { bits: BitString::new(prefix_width, chosen as u64)?, probability })
    }

    /// Debug dump of nonzero amplitudes as `index,re,im` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,re,im")?;
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm_sqr() > 0.0 {
                writeln!(out, "{i},{:e},{:e}", a.re, a.im)?;
            }
        }
        Ok(())
    }
}

fn joint_index(parts: &[(RegisterSpan, u32)], i: usize) -> usize {
    parts
        .iter()
        .fold(0usize, |acc, (span, p)| (acc << p) | (span.read(i) >> (span.width - p)))
}

/// Inverse-CDF draw from a probability vector with `u ∈ [0, 1)`.
pub fn sample_from(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last_nonzero = i;
        }
        acc += p;
        if target < acc {
            return i;
        }
    }
    last_nonzero
}

/// Radix-2 decimation-in-time FFT with caller-supplied twiddles `e^{±2πik/n}`.
fn fft_in_place(data: &mut [Complex64], twiddles: &[Complex64]) {
    let n = data.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let w = twiddles[k * stride];
                let u = data[start + k];
                let v = data[start + k + len / 2] * w;
                data[start + k] = u + v;
                data[start + k + len / 2] = u - v;
            }
        }
        len <<= 1;
    }
}

/// Total variation distance `½ Σ |p − q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions over different supports");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
