//! Qubit and communication accounting for both algorithms.

use serde::{Deserialize, Serialize};

use crate::dist::DistPlan;
use crate::phase::ceil_log2_two_plus;

pub const GATE_CLASS: &str = "O(L^3)";
pub const DEPTH_CLASS: &str = "O(L^3)";
pub const ANCILLA_NOTE: &str =
    "excludes the c = L + O(1) ancilla qubits of a gate-level modular multiplier; the simulator applies multiplication as a permutation and uses none";

/// Everything the resource formulas depend on. `r` enters only through
/// `⌈log₂ r⌉`, so astronomically large orders are representable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceInputs {
    pub ceil_log2_r: u32,
    pub l: u32,
    pub k: u32,
    pub epsilon: f64,
    pub epsilon_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub ceil_log2_r: u32,
    pub l: u32,
    pub k: u32,
    pub epsilon: f64,
    pub epsilon_prime: f64,
    /// `2(⌈log₂ r⌉ + 1 + ⌈log₂(2 + 1/ε)⌉) + L`
    pub qubits_single_node: u64,
    /// `2((⌈log₂ r⌉ + 2)/k + ⌈log₂(2 + k/ε′)⌉) + L`, the closed form (not an integer in general).
    pub qubits_per_node_formula: f64,
    /// `max_j (2 t_j + L)` over the concrete split plan; absent if the plan is infeasible.
    pub qubits_per_node_plan: Option<u64>,
    pub per_node_formula_smaller: bool,
    pub per_node_plan_smaller: Option<bool>,
    /// `(k − 1)·L`
    pub comm_qubits: u64,
    pub gate_complexity_class: String,
    pub depth_class: String,
    pub ancilla_note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulated_qubits_actual: Option<u32>,
}

impl ResourceReport {
    pub fn compute(inputs: ResourceInputs) -> Self {
        let ResourceInputs { ceil_log2_r, l, k, epsilon, epsilon_prime } = inputs;
        let p = ceil_log2_r as u64 + 1;
        let single = 2 * (p + ceil_log2_two_plus(1.0, epsilon) as u64) + l as u64;
        let formula = 2.0 * ((p + 1) as f64 / k as f64 + ceil_log2_two_plus(k as f64, epsilon_prime) as f64)
            + l as f64;
        let plan = DistPlan::from_width(ceil_log2_r + 2, k, None, epsilon, Some(epsilon_prime)).ok();
        let per_plan = plan.map(|p| p.t.iter().map(|t| 2 * *t as u64 + l as u64).max().unwrap_or(0));
        Self {
            ceil_log2_r,
            l,
            k,
            epsilon,
            epsilon_prime,
            qubits_single_node: single,
            qubits_per_node_formula: formula,
            qubits_per_node_plan: per_plan,
            per_node_formula_smaller: formula < single as f64,
            per_node_plan_smaller: per_plan.map(|q| q < single),
            comm_qubits: (k as u64).saturating_sub(1) * l as u64,
            gate_complexity_class: GATE_CLASS.to_string(),
            depth_class: DEPTH_CLASS.to_string(),
            ancilla_note: ANCILLA_NOTE.to_string(),
            simulated_qubits_actual: None,
        }
    }

    pub fn inputs(&self) -> ResourceInputs {
        ResourceInputs {
            ceil_log2_r: self.ceil_log2_r,
            l: self.l,
            k: self.k,
            epsilon: self.epsilon,
            epsilon_prime: self.epsilon_prime,
        }
    }
}

/// Cartesian grid over `k × ε × ε′`, skipping pairs with `ε′ ≥ ε`.
pub fn resource_grid(ceil_log2_r: u32, l: u32, ks: &[u32], epsilons: &[f64], primes: &[f64]) -> Vec<ResourceReport> {
    let mut out = Vec::new();
    for &k in ks {
        for &epsilon in epsilons {
            for &epsilon_prime in primes {
                if epsilon_prime < epsilon {
                    out.push(ResourceReport::compute(ResourceInputs { ceil_log2_r, l, k, epsilon, epsilon_prime }));
                }
            }
        }
    }
    out
}
