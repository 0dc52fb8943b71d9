//! Exhaustive and randomized property suites, runnable from the CLI.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bits::{circ_dist_raw, BitString, Fraction};
use crate::dist::{
    analytic_global_state, analytic_prefix_joint, brute_force_correct_oracle, factorisation_check,
    global_state, node_accuracy, ChainedEngine, DistPlan, DistributedSolver, NodeSpec,
};
use crate::dlp::{b_phase_numerators, exact_success_mass, register_width, Mode, StatevectorStage};
use crate::numtheory::{ceil_log2, is_prime, validate_instance, ProblemInstance};
use crate::phase::{build_eigenstate, ceil_log2_two_plus, check_accuracy_bound, EigenstateSpec};
use crate::statevec::{total_variation, QuantumState, RegisterLayout};

use super::runner::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Metric,
    Prefix,
    Accuracy,
    Correct,
    Overlap,
    LowBits,
    Eigen,
    Factorisation,
    NodeAccuracy,
    Mass,
    All,
}

impl Suite {
    pub const EACH: [Suite; 10] = [
        Suite::Metric,
        Suite::Prefix,
        Suite::Accuracy,
        Suite::Correct,
        Suite::Overlap,
        Suite::LowBits,
        Suite::Eigen,
        Suite::Factorisation,
        Suite::NodeAccuracy,
        Suite::Mass,
    ];
}

/// A measured quantity compared against its bound.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `"<="` or `">="`.
    pub relation: &'static str,
    pub ok: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, relation: "<=", ok: value <= bound }
    }

    fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, relation: ">=", ok: value >= bound }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub cases: u64,
    pub failures: u64,
    pub checks: Vec<Check>,
    pub examples: Vec<String>,
}

impl SuiteReport {
    fn new(suite: Suite) -> Self {
        Self { suite, cases: 0, failures: 0, checks: Vec::new(), examples: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checks.iter().all(|c| c.ok)
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
            if self.examples.len() < 10 {
                self.examples.push(what());
            }
        }
    }

    fn check(&mut self, c: Check) {
        self.cases += 1;
        if !c.ok {
            self.failures += 1;
        }
        self.checks.push(c);
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub cases: u64,
    pub seed: u64,
    /// Restricts the accuracy sweep to one order.
    pub r: Option<u64>,
    /// Restricts the accuracy sweep to one budget.
    pub epsilon: Option<f64>,
    pub instance: (u64, u64, u64),
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { cases: 10_000, seed: 1, r: None, epsilon: None, instance: (11, 3, 9) }
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<Vec<SuiteReport>, HarnessError> {
    if suite == Suite::All {
        return Suite::EACH.iter().map(|s| run_one(*s, opts)).collect();
    }
    Ok(vec![run_one(suite, opts)?])
}

fn run_one(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport, HarnessError> {
    Ok(match suite {
        Suite::Metric => metric_suite(6, 8, opts.cases, opts.seed),
        Suite::Prefix => prefix_suite(8),
        Suite::Accuracy => accuracy_suite(opts.r, opts.epsilon)?,
        Suite::Correct => correct_suite(opts.cases, opts.seed)?,
        Suite::Overlap => overlap_shift_suite(7),
        Suite::LowBits => low_bits_suite(8),
        Suite::Eigen => eigen_suite(&instance(opts)?)?,
        Suite::Factorisation => factorisation_suite(&instance(opts)?)?,
        Suite::NodeAccuracy => node_accuracy_suite(&instance(opts)?)?,
        Suite::Mass => mass_suite()?,
        Suite::All => unreachable!("expanded by run_suite"),
    })
}

fn instance(opts: &VerifyOptions) -> Result<ProblemInstance, HarnessError> {
    let (n, a, b) = opts.instance;
    Ok(validate_instance(n, a, b)?)
}

fn bits(t: u32, v: u64) -> BitString {
    BitString::new(t, v).expect("in range")
}

/// Metric axioms and the shift/prefix claims of the circular distance.
pub fn metric_suite(exhaustive_t: u32, shift_t: u32, random_cases: u64, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new(Suite::Metric);
    for t in 1..=exhaustive_t {
        let size = 1u64 << t;
        for x in 0..size {
            for y in 0..size {
                let dxy = circ_dist_raw(x, y, t);
                rep.record((dxy == 0) == (x == y), || format!("identity t={t} x={x} y={y}"));
                rep.record(dxy == circ_dist_raw(y, x, t), || format!("symmetry t={t} x={x} y={y}"));
                for z in 0..size {
                    let ok = circ_dist_raw(x, z, t) <= dxy + circ_dist_raw(y, z, t);
                    rep.record(ok, || format!("triangle t={t} x={x} y={y} z={z}"));
                }
                // d_t(x,y) < 2^{t−t0} ⟹ d_{t0}(x_{[1,t0]}, y_{[1,t0]}) ≤ 1
                for t0 in 1..=t {
                    if dxy < 1 << (t - t0) {
                        let ok = circ_dist_raw(x >> (t - t0), y >> (t - t0), t0) <= 1;
                        rep.record(ok, || format!("prefix t={t} t0={t0} x={x} y={y}"));
                    }
                }
            }
            let bound = size as i64;
            for b1 in -bound..=bound {
                for b2 in [-bound, -1, 0, 1, 3, bound] {
                    let x_bs = bits(t, x);
                    let ok = x_bs.wrap_add(b1).wrap_add(b2) == x_bs.wrap_add(b1 + b2);
                    rep.record(ok, || format!("group law t={t} x={x} b1={b1} b2={b2}"));
                }
            }
        }
    }
    // d_t(x,y) is the least |b| with Sum(x, b) = y.
    for t in 1..=shift_t {
        let size = 1u64 << t;
        for x in 0..size {
            let xb = bits(t, x);
            for y in 0..size {
                let yb = bits(t, y);
                let least = (0..size as i64)
                    .find(|&b| xb.wrap_add(b) == yb || xb.wrap_add(-b) == yb)
                    .expect("some shift reaches y");
                rep.record(least as u64 == circ_dist_raw(x, y, t), || format!("least shift t={t} x={x} y={y}"));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_cases {
        let t = rng.gen_range(1..=16u32);
        let size = 1u64 << t;
        let (x, y, z) = (rng.gen_range(0..size), rng.gen_range(0..size), rng.gen_range(0..size));
        let dxy = circ_dist_raw(x, y, t);
        let ok = (dxy == 0) == (x == y)
            && dxy == circ_dist_raw(y, x, t)
            && circ_dist_raw(x, z, t) <= dxy + circ_dist_raw(y, z, t);
        rep.record(ok, || format!("random axioms t={t} x={x} y={y} z={z}"));
    }
    rep
}

/// Closeness at full width carries to every prefix, scaled.
pub fn prefix_suite(max_t: u32) -> SuiteReport {
    let mut rep = SuiteReport::new(Suite::Prefix);
    for t in 1..=max_t {
        let size = 1u64 << t;
        for x in 0..size {
            for y in 0..size {
                let d = circ_dist_raw(x, y, t);
                for t0 in 1..=t {
                    if d >= 1 << (t - t0) {
                        continue;
                    }
                    for t1 in t0..=t {
                        let ok = circ_dist_raw(x >> (t - t1), y >> (t - t1), t1) <= 1 << (t1 - t0);
                        rep.record(ok, || format!("t={t} t0={t0} t1={t1} x={x} y={y}"));
                    }
                }
            }
        }
    }
    rep
}

/// Outcome mass near the true phase, over `s/r` for every prime `r ≤ 31`.
pub fn accuracy_suite(only_r: Option<u64>, only_eps: Option<f64>) -> Result<SuiteReport, HarnessError> {
    let rs: Vec<u64> = (2..=31).filter(|&r| is_prime(r) && only_r.is_none_or(|o| o == r)).collect();
    let epsilons: Vec<f64> = match only_eps {
        Some(e) => vec![e],
        None => vec![0.5, 0.25, 0.1],
    };
    let mut jobs = Vec::new();
    for &r in &rs {
        for s in 0..r {
            for n in 1..=6u32 {
                for &eps in &epsilons {
                    jobs.push((r, s, n, eps));
                }
            }
        }
    }
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(r, s, n, eps)| {
            let t = n + ceil_log2_two_plus(0.5, eps);
            check_accuracy_bound(Fraction::new(s, r).expect("s < r"), t, n, eps).map(|rep| (r, s, n, eps, rep))
        })
        .collect::<Result<_, _>>()?;
    let mut rep = SuiteReport::new(Suite::Accuracy);
    let mut worst: Vec<(f64, f64)> = epsilons.iter().map(|e| (*e, f64::INFINITY)).collect();
    for (r, s, n, eps, acc) in results {
        rep.record(acc.holds, || format!("ω={s}/{r} n={n} ε={eps}: min mass {}", acc.min_mass()));
        if let Some(w) = worst.iter_mut().find(|w| w.0 == eps) {
            w.1 = w.1.min(acc.min_mass());
        }
    }
    for (eps, mass) in worst {
        rep.checks.push(Check::at_least(format!("min achieved mass, ε={eps}"), mass, 1.0 - eps));
    }
    Ok(rep)
}

/// Orders and node counts exercised by [`correct_suite`]; infeasible pairs are skipped.
pub const CORRECT_GRID: ([u64; 4], [u32; 2], [u32; 2]) = ([5, 7, 11, 13], [2, 3], [2, 3]);

pub fn feasible_correct_plans() -> Vec<(u64, DistPlan)> {
    let (rs, ks, hs) = CORRECT_GRID;
    let mut out = Vec::new();
    for r in rs {
        for k in ks {
            for h in hs {
                if let Ok(plan) = DistPlan::from_width(ceil_log2(r) + 2, k, Some(h), 0.25, Some(0.2)) {
                    out.push((r, plan));
                }
            }
        }
    }
    out
}

fn perturbation_bounds(plan: &DistPlan) -> Vec<i64> {
    let k = plan.k as usize;
    (0..k).map(|j| if j + 1 < k { 1i64 << (plan.h - 2) } else { 1 }).collect()
}

/// Alignment oracle: randomized per plan, plus exhaustive for `W ≤ 8`.
pub fn correct_suite(cases: u64, seed: u64) -> Result<SuiteReport, HarnessError> {
    let mut rep = SuiteReport::new(Suite::Correct);
    for (r, plan) in feasible_correct_plans() {
        let bounds = perturbation_bounds(&plan);
        let w_bits = plan.total_width;
        let label = format!("r={r} k={} h={}", plan.k, plan.h);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((r << 16) | ((plan.k as u64) << 8) | plan.h as u64));
        for _ in 0..cases {
            let w = bits(w_bits, rng.gen_range(0..1u64 << w_bits));
            let p: Vec<i64> = bounds.iter().map(|&b| rng.gen_range(-b..=b)).collect();
            let res = brute_force_correct_oracle(&w, &p, &plan);
            rep.record(res.is_ok(), || format!("{label} w={w} p={p:?}: {res:?}"));
        }
        if w_bits <= 8 {
            let mut tuples: Vec<Vec<i64>> = vec![Vec::new()];
            for &b in &bounds {
                tuples = tuples
                    .into_iter()
                    .flat_map(|prefix| {
                        (-b..=b).map(move |q| {
                            let mut v = prefix.clone();
                            v.push(q);
                            v
                        })
                    })
                    .collect();
            }
            for wv in 0..1u64 << w_bits {
                let w = bits(w_bits, wv);
                for p in &tuples {
                    let res = brute_force_correct_oracle(&w, p, &plan);
                    rep.record(res.is_ok(), || format!("{label} exhaustive w={w} p={p:?}: {res:?}"));
                }
            }
        }
    }
    Ok(rep)
}

/// The overlap shift is unique and equals the sum of the two component shifts,
/// with either input playing the ±1 role.
pub fn overlap_shift_suite(max_t: u32) -> SuiteReport {
    let mut rep = SuiteReport::new(Suite::Overlap);
    for t in 3..=max_t {
        let size = 1u64 << t;
        for h in 2..t {
            let loose = 1u64 << (h - 2);
            let reach = 1i64 << (h - 1);
            for w in 0..size {
                let wb = bits(t, w);
                let w_tail = wb.suffix(h + 1).expect("h < t");
                for x in 0..size {
                    let dx = circ_dist_raw(x, w, t);
                    if dx > loose.max(1) {
                        continue;
                    }
                    let xb = bits(t, x);
                    let x_tail = xb.suffix(h + 1).expect("h < t");
                    for z in 0..1u64 << (h + 1) {
                        let dz = circ_dist_raw(z, w_tail.value(), h + 1);
                        let roles = (dx <= 1 && dz <= loose) || (dx <= loose && dz <= 1);
                        if !roles {
                            continue;
                        }
                        let zb = bits(h + 1, z);
                        let hits: Vec<i64> = (-reach..=reach).filter(|&b| x_tail.wrap_add(b) == zb).collect();
                        let b1 = xb.signed_offset_to(&wb).expect("same width");
                        let b2 = w_tail.signed_offset_to(&zb).expect("same width");
                        let ok = hits == [b1 + b2];
                        rep.record(ok, || format!("t={t} h={h} ω={w} x={x} z={z}: hits {hits:?}, b1+b2={}", b1 + b2));
                    }
                }
            }
        }
    }
    rep
}

/// For nearby strings, a small shift matches in full iff it matches on the low `h` bits.
pub fn low_bits_suite(max_t: u32) -> SuiteReport {
    let mut rep = SuiteReport::new(Suite::LowBits);
    for t in 3..=max_t {
        let size = 1u64 << t;
        for h in 2..=t {
            let bound = 1u64 << (h - 2);
            for x in 0..size {
                let xb = bits(t, x);
                let x_low = xb.suffix(h).expect("h ≤ t");
                for y in 0..size {
                    if circ_dist_raw(x, y, t) > bound {
                        continue;
                    }
                    let yb = bits(t, y);
                    let y_low = yb.suffix(h).expect("h ≤ t");
                    for b in -(bound as i64)..=bound as i64 {
                        let ok = (xb.wrap_add(b) == yb) == (x_low.wrap_add(b) == y_low);
                        rep.record(ok, || format!("t={t} h={h} x={x} y={y} b={b}"));
                    }
                }
            }
        }
    }
    rep
}

/// `M_a u_s = e^{2πis/r} u_s` and `M_b u_s = e^{2πisg/r} u_s`, amplitude-wise.
pub fn eigen_suite(instance: &ProblemInstance) -> Result<SuiteReport, HarnessError> {
    let mut rep = SuiteReport::new(Suite::Eigen);
    let g = instance.hidden_g.expect("validated instances carry g");
    let r = instance.r;
    let layout = RegisterLayout::new([("flag", 1), ("work", instance.l)])?;
    let on = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
    let mut worst = 0.0f64;
    for s in 0..r {
        let u = build_eigenstate(EigenstateSpec { instance, s });
        for (base, num) in [(instance.a, s), (instance.b, s * g % r)] {
            let start = QuantumState::from_register_vectors(layout.clone(), &[("flag", &on), ("work", &u)])?;
            let mut state = start.clone();
            state.controlled_modmul_power("flag", "work", base, 0, instance.n)?;
            let phase = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * num as f64 / r as f64);
            let dev = state
                .amplitudes()
                .iter()
                .zip(start.amplitudes())
                .map(|(a, b)| (a - phase * b).norm())
                .fold(0.0, f64::max);
            worst = worst.max(dev);
        }
    }
    rep.check(Check::at_most("max eigen-relation deviation", worst, 1e-10));
    Ok(rep)
}

/// The k = 2 plan's global state against its factorised form.
pub fn factorisation_suite(instance: &ProblemInstance) -> Result<SuiteReport, HarnessError> {
    let mut rep = SuiteReport::new(Suite::Factorisation);
    let nums = b_phase_numerators(instance)?;
    let plan = DistPlan::new(instance, 2, Some(2), 0.25, Some(0.2))?;
    let engine = ChainedEngine::new(instance, &plan.node_specs())?;
    let fact = factorisation_check(instance, &engine, &nums)?;
    rep.check(Check::at_most("plan: global amplitude deviation bound", fact.global_bound, 1e-9));
    let tv = total_variation(&engine.exact_joint(), &analytic_prefix_joint(instance.r, &nums, &plan.node_specs())?);
    rep.check(Check::at_most("plan: joint prefix law TV", tv, 1e-9));

    let specs = [NodeSpec { width: 3, offset: 0, measured: 3 }, NodeSpec { width: 3, offset: 1, measured: 3 }];
    let dense = global_state(instance, &specs, None)?;
    let analytic = analytic_global_state(instance, &specs, &nums)?;
    let dev = dense.amplitudes().iter().zip(&analytic).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    rep.check(Check::at_most("dense 3+3 nodes: max amplitude deviation", dev, 1e-9));
    Ok(rep)
}

/// Per-`s` node accuracy mass against `1 − ε′`.
pub fn node_accuracy_suite(instance: &ProblemInstance) -> Result<SuiteReport, HarnessError> {
    let mut rep = SuiteReport::new(Suite::NodeAccuracy);
    let nums = b_phase_numerators(instance)?;
    for h in [2u32, 3] {
        let Ok(plan) = DistPlan::new(instance, 2, Some(h), 0.25, Some(0.2)) else { continue };
        for acc in node_accuracy(instance, &plan, &nums)? {
            rep.check(Check::at_least(
                format!("h={h} s={}: node accuracy mass", acc.s),
                acc.event_mass,
                1.0 - plan.epsilon_prime,
            ));
        }
    }
    Ok(rep)
}

/// Exact (unsampled) single-attempt success probabilities.
pub fn mass_suite() -> Result<SuiteReport, HarnessError> {
    let mut rep = SuiteReport::new(Suite::Mass);
    for (n, a, b) in [(7u64, 2u64, 4u64), (11, 3, 9)] {
        let inst = validate_instance(n, a, b)?;
        let r = inst.r;
        for eps in [0.5, 0.25] {
            let t = register_width(r, eps);
            let stage = StatevectorStage::prepare(&inst, t)?;
            let mass = exact_success_mass(&inst, t, stage.joint());
            let bound = (r - 1) as f64 / r as f64 * (1.0 - eps);
            rep.check(Check::at_least(format!("single node r={r} ε={eps}"), mass, bound.max(0.6)));
        }
    }
    let inst = validate_instance(11, 3, 9)?;
    let plan = DistPlan::new(&inst, 2, Some(2), 0.25, Some(0.2))?;
    let solver = DistributedSolver::new(inst.clone(), plan.clone(), Mode::Statevector, 1)?;
    let joint = solver.engine().expect("statevector mode").exact_joint();
    let mass = crate::dist::exact_success_mass(&inst, &plan, &joint);
    let bound = (inst.r - 1) as f64 / inst.r as f64 * (1.0 - plan.epsilon_prime);
    rep.check(Check::at_least("distributed r=5 k=2 ε′=0.2", mass, bound));
    Ok(rep)
}
