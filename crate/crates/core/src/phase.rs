//! Phase estimation: the circuit run on the simulator, the closed-form
//! outcome distribution it must reproduce, and the eigenstates `u_s` of
//! modular multiplication.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::bits::{circ_dist_raw, BitString, BitsError, Fraction};
use crate::numtheory::{mod_pow2k, ProblemInstance};
use crate::statevec::{QuantumState, RegisterLayout, SimError};

/// `⌈log₂(2 + ratio/ε)⌉`, computed as the least `c` with `(2^c − 2)·ε ≥ ratio`
/// so that exact powers of two are not lost to `log2` rounding.
pub fn ceil_log2_two_plus(ratio: f64, epsilon: f64) -> u32 {
    assert!(epsilon > 0.0 && ratio > 0.0, "budgets must be positive");
    let mut c = 1u32;
    while (((1u64 << c) - 2) as f64) * epsilon < ratio {
        c += 1;
    }
    c
}

/// Inputs of one phase-estimation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTask {
    pub omega: Fraction,
    pub t: u32,
    pub n: u32,
    pub epsilon: f64,
}

impl PhaseTask {
    /// Sizes the counting register as `t = n + ⌈log₂(2 + 1/(2ε))⌉`.
    pub fn from_accuracy(omega: Fraction, n: u32, epsilon: f64) -> Self {
        Self { omega, t: n + ceil_log2_two_plus(0.5, epsilon), n, epsilon }
    }
}

/// Eigenvector `u_s` of multiplication by `a` on the orbit of 1.
#[derive(Debug, Clone, Copy)]
pub struct EigenstateSpec<'a> {
    pub instance: &'a ProblemInstance,
    pub s: u64,
}

/// Exact integer numerator of `2^t·ω − m` over `denominator`.
fn offset_numerator(omega: &Fraction, t: u32, m: u64) -> i128 {
    ((omega.numerator() as i128) << t) - m as i128 * omega.denominator() as i128
}

/// Half-angles `π(2^t ω − m)` and `π(ω − m/2^t)`, both reduced exactly
/// before conversion to floating point. `None` marks the removable
/// singularity where the two coincide modulo `π`.
fn half_angles(omega: &Fraction, t: u32, m: u64) -> Option<(f64, f64)> {
    let den = omega.denominator() as i128;
    let full = den << t;
    let d = offset_numerator(omega, t, m);
    let outer = d.rem_euclid(full);
    if outer == 0 {
        return None;
    }
    let inner = d.rem_euclid(den);
    Some((PI * inner as f64 / den as f64, PI * outer as f64 / full as f64))
}

/// Amplitudes `ψ_{t,ω}(v) = 2^{-t} Σ_u e^{2πiu(ω − v/2^t)}` in closed form.
pub fn psi_amplitudes(omega: Fraction, t: u32) -> Vec<Complex64> {
    let scale = 1.0 / (1u64 << t) as f64;
    (0..1u64 << t)
        .map(|m| match half_angles(&omega, t, m) {
            None => Complex64::new(1.0, 0.0),
            Some((a, b)) => Complex64::from_polar(scale * a.sin() / b.sin(), a - b),
        })
        .collect()
}

/// `Pr[m] = sin²(π(2^t ω − m)) / (2^{2t} sin²(π(ω − m/2^t)))`, with the
/// singular outcome detected by exact integer arithmetic.
pub fn phase_outcome_distribution(omega: Fraction, t: u32) -> Vec<f64> {
    let scale = 1.0 / (1u64 << t) as f64;
    (0..1u64 << t)
        .map(|m| match half_angles(&omega, t, m) {
            None => 1.0,
            Some((a, b)) => {
                let r = scale * a.sin() / b.sin();
                r * r
            }
        })
        .collect()
}

/// Single outcome probability `Pr[m]` of `ψ_{t,ω}`.
pub fn phase_outcome_probability(omega: Fraction, t: u32, m: u64) -> f64 {
    match half_angles(&omega, t, m) {
        None => 1.0,
        Some((a, b)) => {
            let r = a.sin() / (b.sin() * (1u64 << t) as f64);
            r * r
        }
    }
}

/// Draws one outcome of `ψ_{t,ω}` without materialising the `2^t` vector:
/// inverse-CDF walk outward from `⌊2^t ω⌋` (0, +1, −1, +2, …). The mass is
/// concentrated there, so the expected walk length is `O(t)`.
pub fn sample_phase_outcome<R: Rng + ?Sized>(omega: Fraction, t: u32, rng: &mut R) -> u64 {
    let size = 1u64 << t;
    let base = ((omega.numerator() as u128) << t) / omega.denominator() as u128;
    let base = base as u64;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for i in 0..size {
        let j = if i % 2 == 1 { i.div_ceil(2) } else { size - i / 2 };
        let m = (base + j) % size;
        acc += phase_outcome_probability(omega, t, m);
        if u < acc {
            return m;
        }
    }
    // Only reachable when rounding leaves the accumulated mass below u.
    base
}

/// Distribution of the first `prefix` bits of a `t`-bit outcome.
pub fn prefix_marginal(dist: &[f64], t: u32, prefix: u32) -> Vec<f64> {
    assert!(prefix >= 1 && prefix <= t && dist.len() == 1 << t);
    let mut out = vec![0.0; 1 << prefix];
    for (m, p) in dist.iter().enumerate() {
        out[m >> (t - prefix)] += p;
    }
    out
}

/// `|u_s⟩ = r^{-1/2} Σ_k e^{−2πisk/r} |a^k mod N⟩` as a `2^L` vector.
pub fn build_eigenstate(spec: EigenstateSpec<'_>) -> Vec<Complex64> {
    let inst = spec.instance;
    let mut v = vec![Complex64::new(0.0, 0.0); 1 << inst.l];
    let norm = 1.0 / (inst.r as f64).sqrt();
    for (k, x) in inst.orbit().into_iter().enumerate() {
        let e = (spec.s as u128 * k as u128 % inst.r as u128) as f64;
        v[x as usize] = Complex64::from_polar(norm, -2.0 * PI * e / inst.r as f64);
    }
    v
}

/// Applies `U^j` for `U = M_base^{2^offset}` via the controlled power ladder:
/// qubit `q` of `control` (weight `2^{t−q}`) controls `M_base^{2^{offset+t−q}}`.
pub fn apply_power_ladder(
    state: &mut QuantumState,
    control: &str,
    work: &str,
    base: u64,
    offset: u32,
    modulus: u64,
) -> Result<(), SimError> {
    let t = state.layout().span(control)?.width;
    for q in 1..=t {
        let multiplier = mod_pow2k(base, offset + t - q, modulus);
        state.controlled_modmul_qubit(control, q, work, multiplier, modulus)?;
    }
    Ok(())
}

/// Runs the circuit up to (not including) measurement: Hadamards on the
/// counting register, the controlled power ladder of `M_base^{2^offset}`,
/// and the inverse transform.
pub fn phase_estimation_state(
    t: u32,
    base: u64,
    modulus: u64,
    offset: u32,
    work: &[Complex64],
) -> Result<QuantumState, SimError> {
    let l = work.len().trailing_zeros();
    let layout = RegisterLayout::new([("count", t), ("work", l)])?;
    let mut state = QuantumState::from_register_vectors(layout, &[("work", work)])?;
    state.hadamard_layer("count")?;
    apply_power_ladder(&mut state, "count", "work", base, offset, modulus)?;
    state.inverse_qft("count")?;
    Ok(state)
}

/// Executes phase estimation on the simulator and returns the measured `t`-bit string.
pub fn run_phase_estimation<R: Rng + ?Sized>(
    task: &PhaseTask,
    base: u64,
    offset: u32,
    eigenstate: EigenstateSpec<'_>,
    rng: &mut R,
) -> Result<BitString, SimError> {
    let work = build_eigenstate(eigenstate);
    let mut state = phase_estimation_state(task.t, base, eigenstate.instance.n, offset, &work)?;
    Ok(state.measure_prefix("count", task.t, rng)?.bits)
}

/// Numerator `z` of the eigenphase `z/r` of `M_base` on `u_s`, read off the
/// simulator as `arg⟨u_s|M_base|u_s⟩`.
pub fn eigenphase_numerator(instance: &ProblemInstance, base: u64, s: u64) -> Result<u64, SimError> {
    let u = build_eigenstate(EigenstateSpec { instance, s });
    let layout = RegisterLayout::new([("flag", 1), ("work", instance.l)])?;
    let flag_on = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
    let prepared = QuantumState::from_register_vectors(layout, &[("flag", &flag_on), ("work", &u)])?;
    let mut state = prepared.clone();
    state.controlled_modmul_power("flag", "work", base, 0, instance.n)?;
    let half = 1usize << instance.l;
    let overlap: Complex64 = prepared.amplitudes()[half..]
        .iter()
        .zip(&state.amplitudes()[half..])
        .map(|(a, b)| a.conj() * b)
        .sum();
    let turns = overlap.arg() / (2.0 * PI) * instance.r as f64;
    Ok((turns.round() as i64).rem_euclid(instance.r as i64) as u64)
}

#[derive(Debug, Clone, Serialize)]
pub struct AccuracyReport {
    pub omega: String,
    pub t: u32,
    pub n: u32,
    pub epsilon: f64,
    /// Mass of `d_t(m, ω_{1,t}) < 2^{t−n}`.
    pub full_mass: f64,
    /// `(m, mass of d_m(x_{[1,m]}, ω_{1,m}) ≤ 2^{m−n})` for `n ≤ m ≤ t`.
    pub prefix_masses: Vec<(u32, f64)>,
    pub holds: bool,
}

impl AccuracyReport {
    pub fn min_mass(&self) -> f64 {
        self.prefix_masses.iter().map(|(_, m)| *m).fold(self.full_mass, f64::min)
    }
}

/// Exhaustive mass of the accuracy events over all `2^t` outcomes.
pub fn check_accuracy_bound(omega: Fraction, t: u32, n: u32, epsilon: f64) -> Result<AccuracyReport, BitsError> {
    let dist = phase_outcome_distribution(omega, t);
    let target = omega.window(1, t)?.value();
    let full_mass: f64 = dist
        .iter()
        .enumerate()
        .filter(|(m, _)| circ_dist_raw(*m as u64, target, t) < 1u64 << (t - n))
        .map(|(_, p)| p)
        .sum();
    let mut prefix_masses = Vec::new();
    for m in n..=t {
        let marginal = prefix_marginal(&dist, t, m);
        let tgt = omega.window(1, m)?.value();
        let mass: f64 = marginal
            .iter()
            .enumerate()
            .filter(|(x, _)| circ_dist_raw(*x as u64, tgt, m) <= 1u64 << (m - n))
            .map(|(_, p)| p)
            .sum();
        prefix_masses.push((m, mass));
    }
    let floor = 1.0 - epsilon;
    let holds = full_mass >= floor && prefix_masses.iter().all(|(_, mass)| *mass >= floor);
    Ok(AccuracyReport { omega: omega.to_string(), t, n, epsilon, full_mass, prefix_masses, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numtheory::validate_instance;
    use crate::statevec::total_variation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct double-sum oracle for ψ, with exactly reduced phases.
    fn brute_psi(omega: Fraction, t: u32) -> Vec<Complex64> {
        let size = 1u64 << t;
        let full = omega.denominator() as i128 * size as i128;
        (0..size)
            .map(|v| {
                let d = offset_numerator(&omega, t, v);
                (0..size).fold(Complex64::new(0.0, 0.0), |acc, u| {
                    let turns = (u as i128 * d).rem_euclid(full);
                    acc + Complex64::from_polar(1.0, 2.0 * PI * turns as f64 / full as f64)
                }) / size as f64
            })
            .collect()
    }

    fn frac(n: u64, d: u64) -> Fraction {
        Fraction::new(n, d).unwrap()
    }

    #[test]
    fn budget_bits() {
        // 2 + 1/(2·0.25) = 4 exactly.
        assert_eq!(ceil_log2_two_plus(0.5, 0.25), 2);
        // 2 + 1/0.25 = 6.
        assert_eq!(ceil_log2_two_plus(1.0, 0.25), 3);
        // 2 + 2/0.2 = 12.
        assert_eq!(ceil_log2_two_plus(2.0, 0.2), 4);
        // 2 + 1/0.5 = 4.
        assert_eq!(ceil_log2_two_plus(1.0, 0.5), 2);
        assert_eq!(ceil_log2_two_plus(1.0, 0.1), 4);
        assert_eq!(PhaseTask::from_accuracy(frac(1, 5), 3, 0.25).t, 5);
    }

    #[test]
    fn distribution_examples() {
        let d = phase_outcome_distribution(frac(1, 4), 2);
        assert_eq!(d, vec![0.0, 1.0, 0.0, 0.0]);
        let d = phase_outcome_distribution(frac(0, 5), 3);
        assert_eq!(d[0], 1.0);
        assert!(d[1..].iter().all(|p| p.abs() < 1e-30));
        let d = phase_outcome_distribution(frac(1, 5), 4);
        let oracle: Vec<f64> = brute_psi(frac(1, 5), 4).iter().map(|a| a.norm_sqr()).collect();
        for (a, b) in d.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_match_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..60 {
            let den = rng.gen_range(1..200u64);
            let omega = frac(rng.gen_range(0..den), den);
            let t = rng.gen_range(1..=8);
            let oracle = brute_psi(omega, t);
            let amps = psi_amplitudes(omega, t);
            let probs = phase_outcome_distribution(omega, t);
            for ((a, o), p) in amps.iter().zip(&oracle).zip(&probs) {
                assert!((a - o).norm() < 1e-12, "{omega} t={t}");
                assert!((p - o.norm_sqr()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shifting_omega_rotates_distribution() {
        for &(n, d) in &[(1u64, 5u64), (3, 7), (10, 13)] {
            let t = 5;
            let omega = frac(n, d);
            // ω + 2^{-t} = (n·2^t + d) / (d·2^t)
            let shifted = Fraction::reduced((n << t) + d, d << t).unwrap();
            let base = phase_outcome_distribution(Fraction::new(n << t, d << t).unwrap(), t);
            let rot = phase_outcome_distribution(shifted, t);
            let plain = phase_outcome_distribution(omega, t);
            for m in 0..1usize << t {
                assert!((rot[(m + 1) % (1 << t)] - base[m]).abs() < 1e-12);
                assert!((plain[m] - base[m]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn walk_sampler_matches_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (n, d, t) in [(2u64, 5u64, 6u32), (7, 13, 4), (0, 3, 3), (3, 4, 5)] {
            let omega = frac(n, d);
            let runs = 40_000;
            let mut counts = vec![0.0; 1 << t];
            for _ in 0..runs {
                counts[sample_phase_outcome(omega, t, &mut rng) as usize] += 1.0 / runs as f64;
            }
            assert!(total_variation(&counts, &phase_outcome_distribution(omega, t)) < 0.03);
        }
        // Deep registers stay cheap.
        let m = sample_phase_outcome(frac(1, 3), 40, &mut rng);
        assert!(circ_dist_raw(m, nearest_fraction(1, 3, 40), 40) < 1 << 20);
    }

    fn nearest_fraction(n: u64, d: u64, t: u32) -> u64 {
        crate::bits::nearest_window(n, d, t).unwrap().value()
    }

    #[test]
    fn eigenstate_examples() {
        let inst = validate_instance(11, 3, 9).unwrap();
        let u0 = build_eigenstate(EigenstateSpec { instance: &inst, s: 0 });
        let amp = 1.0 / 5f64.sqrt();
        for x in [1usize, 3, 9, 5, 4] {
            assert!((u0[x] - Complex64::new(amp, 0.0)).norm() < 1e-15);
        }
        assert_eq!(u0.iter().filter(|a| a.norm() > 0.0).count(), 5);

        let us: Vec<Vec<Complex64>> =
            (0..5).map(|s| build_eigenstate(EigenstateSpec { instance: &inst, s })).collect();
        for (s, a) in us.iter().enumerate() {
            for (s2, b) in us.iter().enumerate() {
                let ip: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
                let expected = if s == s2 { 1.0 } else { 0.0 };
                assert!((ip - Complex64::new(expected, 0.0)).norm() < 1e-12);
            }
        }
        // r^{-1/2} Σ_s u_s = |1⟩
        let sum: Vec<Complex64> =
            (0..16).map(|x| us.iter().map(|u| u[x]).sum::<Complex64>() * amp).collect();
        for (x, a) in sum.iter().enumerate() {
            let expected = if x == 1 { 1.0 } else { 0.0 };
            assert!((a - Complex64::new(expected, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn eigenphases_read_from_simulator() {
        let inst = validate_instance(11, 3, 9).unwrap();
        for s in 0..5 {
            assert_eq!(eigenphase_numerator(&inst, inst.a, s).unwrap(), s);
            assert_eq!(eigenphase_numerator(&inst, inst.b, s).unwrap(), s * 2 % 5);
        }
    }

    #[test]
    fn zero_phase_measures_zero() {
        let inst = validate_instance(11, 3, 9).unwrap();
        let task = PhaseTask::from_accuracy(frac(0, 5), 3, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let m = run_phase_estimation(&task, inst.a, 0, EigenstateSpec { instance: &inst, s: 0 }, &mut rng).unwrap();
            assert_eq!(m.value(), 0);
            assert_eq!(m.width(), task.t);
        }
    }

    #[test]
    fn circuit_marginal_matches_closed_form() {
        let inst = validate_instance(11, 3, 9).unwrap();
        for s in 0..5u64 {
            for t in [3u32, 5, 7] {
                let u = build_eigenstate(EigenstateSpec { instance: &inst, s });
                for (base, num) in [(inst.a, s), (inst.b, s * 2 % 5)] {
                    let state = phase_estimation_state(t, base, inst.n, 0, &u).unwrap();
                    let marginal = state.marginal_distribution("count", t).unwrap();
                    let analytic = phase_outcome_distribution(frac(num, 5), t);
                    assert!(total_variation(&marginal, &analytic) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn raised_power_estimates_the_shifted_phase() {
        let inst = validate_instance(11, 3, 9).unwrap();
        let t = 5;
        for s in 1..5u64 {
            let u = build_eigenstate(EigenstateSpec { instance: &inst, s });
            for n in 1..=4u32 {
                let state = phase_estimation_state(t, inst.a, inst.n, n - 1, &u).unwrap();
                let marginal = state.marginal_distribution("count", t).unwrap();
                let shifted = Fraction::reduced(s << (n - 1), 5).unwrap();
                assert_eq!(shifted, frac(s, 5).tail_from(n));
                let analytic = phase_outcome_distribution(shifted, t);
                assert!(total_variation(&marginal, &analytic) < 1e-9);
            }
        }
    }

    #[test]
    fn empirical_runs_match_distribution() {
        let inst = validate_instance(11, 3, 9).unwrap();
        let task = PhaseTask::from_accuracy(frac(2, 5), 2, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let runs = 10_000;
        let mut counts = vec![0.0; 1 << task.t];
        for _ in 0..runs {
            let m = run_phase_estimation(&task, inst.a, 0, EigenstateSpec { instance: &inst, s: 2 }, &mut rng).unwrap();
            counts[m.value() as usize] += 1.0 / runs as f64;
        }
        let analytic = phase_outcome_distribution(frac(2, 5), task.t);
        assert!(total_variation(&counts, &analytic) <= 0.05);
    }

    #[test]
    fn accuracy_examples() {
        let rep = check_accuracy_bound(frac(1, 5), 5, 3, 0.25).unwrap();
        assert!(rep.holds);
        assert_eq!(rep.prefix_masses.len(), 3);
        let exact = check_accuracy_bound(frac(3, 8), 5, 3, 0.25).unwrap();
        assert!((exact.full_mass - 1.0).abs() < 1e-12);
        assert!(exact.prefix_masses.iter().all(|(_, m)| (m - 1.0).abs() < 1e-12));
    }
}
