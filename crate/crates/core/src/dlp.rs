//! Single-register discrete-logarithm solver: quantum stage (state vector
//! or analytic sampling), exact rounding, inversion and the retry loop.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::{BitString, BitsError, Fraction};
use crate::numtheory::{ceil_log2, mod_inverse, NumberError, ProblemInstance};
use crate::phase::{
    apply_power_ladder, ceil_log2_two_plus, eigenphase_numerator, phase_outcome_distribution,
    sample_phase_outcome,
};
use crate::statevec::{sample_from, QuantumState, RegisterLayout, SimError, MAX_QUBITS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DlpError {
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("max_retries must be at least 1")]
    NoAttempts,
    #[error("{needed} qubits exceed the state-vector budget of {max}; use --mode analytic")]
    QubitBudget { needed: u32, max: u32 },
    #[error(transparent)]
    Number(#[from] NumberError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Bits(#[from] BitsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Statevector,
    Analytic,
}

/// Counting-register width `⌈log₂ r⌉ + 1 + ⌈log₂(2 + 1/ε)⌉`.
pub fn register_width(r: u64, epsilon: f64) -> u32 {
    ceil_log2(r) + 1 + ceil_log2_two_plus(1.0, epsilon)
}

pub fn check_epsilon(epsilon: f64) -> Result<(), DlpError> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(DlpError::BadEpsilon(epsilon))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShorConfig {
    pub epsilon: f64,
    pub t: u32,
    /// Attempt budget; 1 means a single shot with no retry.
    pub max_retries: u32,
    pub mode: Mode,
}

impl ShorConfig {
    pub fn new(instance: &ProblemInstance, epsilon: f64, max_retries: u32, mode: Mode) -> Result<Self, DlpError> {
        check_epsilon(epsilon)?;
        if max_retries == 0 {
            return Err(DlpError::NoAttempts);
        }
        let config = Self { epsilon, t: register_width(instance.r, epsilon), max_retries, mode };
        if mode == Mode::Statevector {
            let needed = config.total_qubits(instance);
            if needed > MAX_QUBITS {
                return Err(DlpError::QubitBudget { needed, max: MAX_QUBITS });
            }
        }
        Ok(config)
    }

    pub fn total_qubits(&self, instance: &ProblemInstance) -> u32 {
        2 * self.t + instance.l
    }
}

/// Per-node strings of a distributed run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub m_a: BitString,
    pub m_b: BitString,
}

/// One end-to-end execution. Measurement fields describe the last attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub m_a: BitString,
    pub m_b: BitString,
    pub mhat_a: u64,
    pub mhat_b: u64,
    pub g_hat: Option<u64>,
    /// Attempts beyond the first.
    pub retries: u32,
    pub success: bool,
    pub mode: Mode,
    pub seed: u64,
    pub trial: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<NodeRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm_qubits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_s: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_fallback: Option<bool>,
}

/// `round(m·r / 2^w)` with exact half-up rounding.
pub fn round_scaled(m: &BitString, r: u64) -> u64 {
    let w = m.width();
    let num = 2 * m.value() as u128 * r as u128 + (1u128 << w);
    (num >> (w + 1)) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Postprocessed {
    pub mhat_a: u64,
    pub mhat_b: u64,
    /// Set only when `a^ĝ ≡ b` holds.
    pub g_hat: Option<u64>,
    /// `m̂_a ≡ 0 (mod r)`: the attempt carries no information.
    pub retry: bool,
}

/// Rounds both estimates to multiples of `1/r`, inverts and verifies.
pub fn postprocess(m_a: &BitString, m_b: &BitString, instance: &ProblemInstance) -> Postprocessed {
    let r = instance.r;
    let (mhat_a, mhat_b) = (round_scaled(m_a, r), round_scaled(m_b, r));
    if mhat_a % r == 0 {
        return Postprocessed { mhat_a, mhat_b, g_hat: None, retry: true };
    }
    // r is prime, so every non-zero residue is invertible.
    let inv = mod_inverse(mhat_a % r, r).expect("prime order");
    let g = (inv as u128 * (mhat_b % r) as u128 % r as u128) as u64;
    let g_hat = instance.verifies(g).then_some(g);
    Postprocessed { mhat_a, mhat_b, g_hat, retry: false }
}

/// The state just before measurement: `|0⟩^t|0⟩^t|1⟩`, Hadamards on both
/// counting registers, `C_t(M_a)` and `C_t(M_b)` ladders, inverse transforms.
pub fn premeasurement_state(instance: &ProblemInstance, t: u32) -> Result<QuantumState, DlpError> {
    let layout = RegisterLayout::new([("ra", t), ("rb", t), ("c", instance.l)])?;
    let mut state = QuantumState::init_basis(layout, &[("c", 1)])?;
    state.hadamard_layer("ra")?;
    state.hadamard_layer("rb")?;
    apply_power_ladder(&mut state, "ra", "c", instance.a, 0, instance.n)?;
    apply_power_ladder(&mut state, "rb", "c", instance.b, 0, instance.n)?;
    state.inverse_qft("ra")?;
    state.inverse_qft("rb")?;
    Ok(state)
}

/// Quantum stage with the pre-measurement state computed once; each draw
/// is a fresh measurement of both counting registers.
#[derive(Debug, Clone)]
pub struct StatevectorStage {
    t: u32,
    joint: Vec<f64>,
}

impl StatevectorStage {
    pub fn prepare(instance: &ProblemInstance, t: u32) -> Result<Self, DlpError> {
        let needed = 2 * t + instance.l;
        if needed > MAX_QUBITS {
            return Err(DlpError::QubitBudget { needed, max: MAX_QUBITS });
        }
        let state = premeasurement_state(instance, t)?;
        let joint = state.joint_marginal(&[("ra", t), ("rb", t)])?;
        Ok(Self { t, joint })
    }

    /// Exact law of `(m_a, m_b)`, indexed `m_a·2^t + m_b`.
    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (BitString, BitString) {
        let idx = sample_from(&self.joint, rng.gen()) as u64;
        let t = self.t;
        let mask = (1u64 << t) - 1;
        (
            BitString::new(t, idx >> t).expect("in range"),
            BitString::new(t, idx & mask).expect("in range"),
        )
    }
}

/// Draws `(m_a, m_b)` from a freshly simulated 2t+L qubit register file.
pub fn quantum_stage_statevector<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    config: &ShorConfig,
    rng: &mut R,
) -> Result<(BitString, BitString), DlpError> {
    let layout_t = config.t;
    let mut state = premeasurement_state(instance, layout_t)?;
    let m_a = state.measure_prefix("ra", layout_t, rng)?.bits;
    let m_b = state.measure_prefix("rb", layout_t, rng)?.bits;
    Ok((m_a, m_b))
}

/// Numerators `z_s` with `M_b u_s = e^{2πi z_s/r} u_s`, read off the simulator.
pub fn b_phase_numerators(instance: &ProblemInstance) -> Result<Vec<u64>, DlpError> {
    (0..instance.r)
        .map(|s| eigenphase_numerator(instance, instance.b, s).map_err(DlpError::from))
        .collect()
}

/// Samples `s` uniformly, then both counting registers independently from
/// their closed-form laws with phases `s/r` and `z_s/r`.
pub fn quantum_stage_analytic<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    config: &ShorConfig,
    b_numerators: &[u64],
    rng: &mut R,
) -> Result<(BitString, BitString, u64), DlpError> {
    let r = instance.r;
    let s = rng.gen_range(0..r);
    let ma = sample_phase_outcome(Fraction::new(s, r)?, config.t, rng);
    let mb = sample_phase_outcome(Fraction::new(b_numerators[s as usize], r)?, config.t, rng);
    Ok((BitString::new(config.t, ma)?, BitString::new(config.t, mb)?, s))
}

/// `(1/r) Σ_s ψ(s/r) ⊗ ψ(z_s/r)` as a joint law indexed `m_a·2^t + m_b`.
pub fn analytic_joint(r: u64, b_numerators: &[u64], t: u32) -> Result<Vec<f64>, DlpError> {
    let size = 1usize << t;
    let mut joint = vec![0.0; size * size];
    for s in 0..r {
        let pa = phase_outcome_distribution(Fraction::new(s, r)?, t);
        let pb = phase_outcome_distribution(Fraction::new(b_numerators[s as usize], r)?, t);
        for (ma, x) in pa.iter().enumerate() {
            if *x == 0.0 {
                continue;
            }
            let row = &mut joint[ma * size..(ma + 1) * size];
            for (cell, y) in row.iter_mut().zip(&pb) {
                *cell += x * y / r as f64;
            }
        }
    }
    Ok(joint)
}

/// Total probability that one attempt returns a verified `ĝ`, given the
/// exact joint law of `(m_a, m_b)`.
pub fn exact_success_mass(instance: &ProblemInstance, t: u32, joint: &[f64]) -> f64 {
    let size = 1u64 << t;
    let mut mass = 0.0;
    for ma in 0..size {
        let a = BitString::new(t, ma).expect("in range");
        let mhat_a = round_scaled(&a, instance.r);
        if mhat_a.is_multiple_of(instance.r) {
            continue;
        }
        for mb in 0..size {
            let p = joint[(ma * size + mb) as usize];
            if p == 0.0 {
                continue;
            }
            let b = BitString::new(t, mb).expect("in range");
            if postprocess(&a, &b, instance).g_hat.is_some() {
                mass += p;
            }
        }
    }
    mass
}

/// A solver with the expensive per-instance work (state preparation or
/// eigenphase extraction) done once and shared by all trials.
#[derive(Debug, Clone)]
pub struct ShorSolver {
    instance: ProblemInstance,
    config: ShorConfig,
    stage: Option<StatevectorStage>,
    b_numerators: Vec<u64>,
}

impl ShorSolver {
    pub fn new(instance: ProblemInstance, config: ShorConfig) -> Result<Self, DlpError> {
        let (stage, b_numerators) = match config.mode {
            Mode::Statevector => (Some(StatevectorStage::prepare(&instance, config.t)?), Vec::new()),
            Mode::Analytic => (None, b_phase_numerators(&instance)?),
        };
        Ok(Self { instance, config, stage, b_numerators })
    }

    pub fn config(&self) -> &ShorConfig {
        &self.config
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    pub fn solve<R: Rng + ?Sized>(&self, seed: u64, trial: u64, rng: &mut R) -> Result<RunRecord, DlpError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let (m_a, m_b, latent_s) = match &self.stage {
                Some(stage) => {
                    let (a, b) = stage.sample(rng);
                    (a, b, None)
                }
                None => {
                    let (a, b, s) = quantum_stage_analytic(&self.instance, &self.config, &self.b_numerators, rng)?;
                    (a, b, Some(s))
                }
            };
            let post = postprocess(&m_a, &m_b, &self.instance);
            if post.g_hat.is_some() || attempt >= self.config.max_retries {
                return Ok(RunRecord {
                    m_a,
                    m_b,
                    mhat_a: post.mhat_a,
                    mhat_b: post.mhat_b,
                    g_hat: post.g_hat,
                    retries: attempt - 1,
                    success: post.g_hat.is_some(),
                    mode: self.config.mode,
                    seed,
                    trial,
                    nodes: None,
                    comm_qubits: None,
                    latent_s,
                    correct_fallback: None,
                });
            }
        }
    }
}

/// One-off convenience wrapper around [`ShorSolver`].
pub fn solve<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    config: &ShorConfig,
    rng: &mut R,
) -> Result<RunRecord, DlpError> {
    ShorSolver::new(instance.clone(), *config)?.solve(0, 0, rng)
}
