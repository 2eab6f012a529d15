//! Randomized property suites.
//!
//! Trial `t` of property `p` under seed `s` draws its instance from its own
//! counter-based stream, so results do not depend on thread count or order.
//! A failing trial is written out as a [`Falsifier`] that [`replay`] checks
//! again.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use relu_lab_core::activation::{self, SmoothIndex};
use relu_lab_core::input::{self, EmpiricalBatch, InputDistribution};
use relu_lab_core::lyapunov::{self, IDENTITY_TOL};
use relu_lab_core::net::{self, InputPoint, NetworkShape, ParamVector};
use relu_lab_core::risk::{self, IntegrationOptions, TargetSpec};
use relu_lab_core::Registry;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

/// One randomly drawn test case. Fields unused by a property stay `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub phi: ParamVector,
    pub lower: f64,
    pub upper: f64,
    pub xi: f64,
    #[serde(default)]
    pub batch: Option<EmpiricalBatch>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub r: Option<SmoothIndex>,
    #[serde(default)]
    pub x: Option<f64>,
    #[serde(default)]
    pub sample_seed: Option<u64>,
}

impl Instance {
    pub fn a_param(&self) -> f64 {
        self.lower.abs().max(self.upper.abs()).max(1.0)
    }

    fn batch(&self) -> Result<&EmpiricalBatch, String> {
        self.batch.as_ref().ok_or_else(|| "instance has no batch".into())
    }

    fn uniform(&self) -> Result<InputDistribution, String> {
        InputDistribution::uniform(self.lower, self.upper, self.phi.shape().input_dim()).map_err(|e| e.to_string())
    }
}

/// Ranges for random instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceSpec {
    pub max_d: usize,
    pub max_hidden: usize,
    /// Parameters are drawn with `‖φ‖` uniform in `[0, max_norm]`.
    pub max_norm: f64,
    pub max_batch: usize,
    pub lower: f64,
    pub upper: f64,
    pub max_xi: f64,
}

impl InstanceSpec {
    /// `d ≤ 3`, `H ≤ 16`, `‖φ‖ ≤ 10`, `M ≤ 64` on `[−1, 1]^d`.
    pub const GENERIC: InstanceSpec = InstanceSpec {
        max_d: 3,
        max_hidden: 16,
        max_norm: 10.0,
        max_batch: 64,
        lower: -1.0,
        upper: 1.0,
        max_xi: 5.0,
    };
}

fn direction(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|x| x * radius / norm).collect();
        }
    }
}

pub fn random_batch(rng: &mut ChaCha8Rng, d: usize, m: usize, lower: f64, upper: f64) -> EmpiricalBatch {
    let samples = (0..m)
        .map(|_| InputPoint::new((0..d).map(|_| rng.gen_range(lower..=upper)).collect()))
        .collect();
    EmpiricalBatch::new(0, samples).expect("m >= 1")
}

pub fn random_params(rng: &mut ChaCha8Rng, shape: NetworkShape, max_norm: f64) -> ParamVector {
    let radius = rng.gen_range(0.0..=max_norm);
    ParamVector::new(shape, direction(rng, shape.param_count(), radius)).expect("finite")
}

/// Parameters, batch and target drawn according to `spec`.
pub fn random_instance(rng: &mut ChaCha8Rng, spec: &InstanceSpec) -> Instance {
    let d = rng.gen_range(1..=spec.max_d);
    let h = rng.gen_range(1..=spec.max_hidden);
    let shape = NetworkShape::new(d, h).expect("positive sizes");
    let phi = random_params(rng, shape, spec.max_norm);
    let m = rng.gen_range(1..=spec.max_batch);
    let batch = random_batch(rng, d, m, spec.lower, spec.upper);
    Instance {
        phi,
        lower: spec.lower,
        upper: spec.upper,
        xi: rng.gen_range(-spec.max_xi..=spec.max_xi),
        batch: Some(batch),
        gamma: None,
        r: None,
        x: None,
        sample_seed: None,
    }
}

/// d = 1 instance on a random box for the exact true-risk backend.
pub fn random_line_instance(rng: &mut ChaCha8Rng, max_hidden: usize, max_norm: f64) -> Instance {
    let lower = rng.gen_range(-2.0..1.0);
    let upper = lower + rng.gen_range(0.1..2.0);
    let shape = NetworkShape::new(1, rng.gen_range(1..=max_hidden)).expect("positive sizes");
    Instance {
        phi: random_params(rng, shape, max_norm),
        lower,
        upper,
        xi: rng.gen_range(-3.0..3.0),
        batch: None,
        gamma: None,
        r: None,
        x: None,
        sample_seed: None,
    }
}

/// A d = 1 parameter whose network equals `xi` on `[lower, upper]`.
///
/// Each unit is either switched off on the box, carries `v = 0`, or is
/// paired with a copy of opposite outer weight.
pub fn exact_fit_line(rng: &mut ChaCha8Rng, lower: f64, upper: f64, xi: f64, hidden: usize) -> ParamVector {
    let shape = NetworkShape::new(1, hidden).expect("positive sizes");
    let (mut w, mut b, mut v) = (vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden]);
    let mut i = 0;
    while i < hidden {
        match rng.gen_range(0..3) {
            0 => {
                // w·x + b ≤ 0 on the box: pick w, then b ≤ −max(w·lower, w·upper).
                w[i] = rng.gen_range(-2.0..2.0);
                b[i] = -(w[i] * lower).max(w[i] * upper) - rng.gen_range(0.0..1.0);
                v[i] = rng.gen_range(-2.0..2.0);
                i += 1;
            }
            1 => {
                w[i] = rng.gen_range(-2.0..2.0);
                b[i] = rng.gen_range(-2.0..2.0);
                i += 1;
            }
            _ if i + 1 < hidden => {
                w[i] = rng.gen_range(-2.0..2.0);
                b[i] = rng.gen_range(-2.0..2.0);
                v[i] = rng.gen_range(-2.0..2.0);
                w[i + 1] = w[i];
                b[i + 1] = b[i];
                v[i + 1] = -v[i];
                i += 2;
            }
            _ => {}
        }
    }
    ParamVector::from_parts(shape, &w, &b, &v, xi).expect("finite")
}

/// Smallest `|pre-activation|` over the batch.
pub fn min_abs_pre_activation(phi: &ParamVector, batch: &EmpiricalBatch) -> f64 {
    batch
        .samples()
        .iter()
        .flat_map(|x| net::pre_activations(phi, x.coords()).expect("matching dimension"))
        .map(f64::abs)
        .fold(f64::INFINITY, f64::min)
}

/// Entries uniform in `[−1, 1]`, `d ≤ 3`, `H ≤ 16`, `M ≤ 8`, `r ≤ 100`.
pub fn random_smooth_instance(rng: &mut ChaCha8Rng) -> Instance {
    let d = rng.gen_range(1..=3);
    let h = rng.gen_range(1..=16);
    let shape = NetworkShape::new(d, h).expect("positive sizes");
    let phi = ParamVector::new(shape, (0..shape.param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("finite");
    let m = rng.gen_range(1..=8);
    Instance {
        batch: Some(random_batch(rng, d, m, -1.0, 1.0)),
        phi,
        lower: -1.0,
        upper: 1.0,
        xi: rng.gen_range(-2.0..2.0),
        gamma: None,
        r: Some(SmoothIndex::new(rng.gen_range(1..=100)).expect("r >= 1")),
        x: None,
        sample_seed: None,
    }
}

/// As [`random_smooth_instance`], redrawn until no pre-activation lies within `margin` of 0.
pub fn random_kink_free_instance(rng: &mut ChaCha8Rng, margin: f64) -> Instance {
    loop {
        let inst = random_smooth_instance(rng);
        if min_abs_pre_activation(&inst.phi, inst.batch.as_ref().expect("has batch")) >= margin {
            return inst;
        }
    }
}

type CheckResult = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> CheckResult {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lab<T>(r: relu_lab_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// One checkable statement about random instances.
pub trait Property: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, rng: &mut ChaCha8Rng) -> Instance;
    fn check(&self, inst: &Instance) -> CheckResult;
}

struct FnProperty {
    name: &'static str,
    generate: fn(&mut ChaCha8Rng) -> Instance,
    check: fn(&Instance) -> CheckResult,
}

impl Property for FnProperty {
    fn name(&self) -> &str {
        self.name
    }

    fn generate(&self, rng: &mut ChaCha8Rng) -> Instance {
        (self.generate)(rng)
    }

    fn check(&self, inst: &Instance) -> CheckResult {
        (self.check)(inst)
    }
}

/// A named group of properties.
pub trait PropertySuite: Send + Sync {
    fn name(&self) -> &str;
    fn properties(&self) -> &[Box<dyn Property>];
}

struct Suite {
    name: &'static str,
    properties: Vec<Box<dyn Property>>,
}

impl PropertySuite for Suite {
    fn name(&self) -> &str {
        self.name
    }

    fn properties(&self) -> &[Box<dyn Property>] {
        &self.properties
    }
}

fn prop(
    name: &'static str,
    generate: fn(&mut ChaCha8Rng) -> Instance,
    check: fn(&Instance) -> CheckResult,
) -> Box<dyn Property> {
    Box::new(FnProperty { name, generate, check })
}

fn generic(rng: &mut ChaCha8Rng) -> Instance {
    random_instance(rng, &InstanceSpec::GENERIC)
}

fn generic_with_step(rng: &mut ChaCha8Rng) -> Instance {
    let mut inst = generic(rng);
    inst.gamma = Some(rng.gen_range(0.0..=0.1));
    inst
}

fn generic_under_bound(rng: &mut ChaCha8Rng) -> Instance {
    let mut inst = generic(rng);
    let bound = lyapunov::step_bound_v(&inst.phi, inst.a_param(), inst.xi);
    inst.gamma = Some(bound * rng.gen_range(0.0..=1.0));
    inst
}

fn line(rng: &mut ChaCha8Rng) -> Instance {
    random_line_instance(rng, 16, 10.0)
}

fn line_fit_or_not(rng: &mut ChaCha8Rng) -> Instance {
    let mut inst = random_line_instance(rng, 8, 5.0);
    if rng.gen_bool(0.5) {
        let h = inst.phi.shape().hidden();
        inst.phi = exact_fit_line(rng, inst.lower, inst.upper, inst.xi, h);
    }
    inst
}

fn unit_ball(rng: &mut ChaCha8Rng) -> Instance {
    let mut spec = InstanceSpec::GENERIC;
    spec.max_norm = 1.0;
    random_instance(rng, &spec)
}

fn unbiased_instance(rng: &mut ChaCha8Rng) -> Instance {
    let mut inst = random_line_instance(rng, 8, 3.0);
    inst.sample_seed = Some(rng.gen());
    inst
}

fn pointwise(rng: &mut ChaCha8Rng) -> Instance {
    let x = if rng.gen_bool(0.5) {
        rng.gen_range(1e-3..20.0)
    } else {
        -rng.gen_range(1e-3..20.0)
    };
    Instance {
        phi: ParamVector::zeros(NetworkShape::new(1, 1).expect("valid")),
        lower: -20.0,
        upper: 20.0,
        xi: 0.0,
        batch: None,
        gamma: None,
        r: None,
        x: Some(x),
        sample_seed: None,
    }
}

fn kink_free(rng: &mut ChaCha8Rng) -> Instance {
    random_kink_free_instance(rng, 1e-3)
}

fn check_pairing(inst: &Instance) -> CheckResult {
    let rep = lab(lyapunov::pairing_identity(&inst.phi, inst.batch()?, inst.xi))?;
    ensure(rep.pairing_holds(IDENTITY_TOL), || {
        format!("pairing {} vs 8·risk {}", rep.pairing, rep.eight_risk)
    })
}

fn check_descent(inst: &Instance) -> CheckResult {
    let gamma = inst.gamma.ok_or("instance has no step")?;
    let rep = lab(lyapunov::descent_identity(&inst.phi, gamma, inst.batch()?, inst.xi))?;
    let t = rep.descent.expect("descent terms present");
    ensure(rep.descent_holds(IDENTITY_TOL), || format!("lhs {} vs rhs {}", t.lhs, t.rhs))
}

fn check_pairing_true(inst: &Instance) -> CheckResult {
    let (rep, method) = lab(lyapunov::pairing_identity_true(
        &inst.phi,
        &inst.uniform()?,
        inst.xi,
        IntegrationOptions::default(),
    ))?;
    ensure(method.is_exact(), || format!("backend {method:?} is not exact"))?;
    ensure(rep.pairing_holds(IDENTITY_TOL), || {
        format!("pairing {} vs 8·risk {}", rep.pairing, rep.eight_risk)
    })
}

fn check_sandwich(inst: &Instance) -> CheckResult {
    let v = lyapunov::lyapunov_value(&inst.phi, inst.xi);
    let n2 = inst.phi.norm_sq();
    let upper = 3.0 * n2 + 8.0 * inst.xi * inst.xi;
    ensure(n2 <= v && v <= upper, || format!("‖φ‖² = {n2}, V = {v}, upper = {upper}"))
}

fn check_one_step(inst: &Instance) -> CheckResult {
    let gamma = inst.gamma.ok_or("instance has no step")?;
    let batch = inst.batch()?;
    let rep = lab(lyapunov::descent_identity(&inst.phi, gamma, batch, inst.xi))?;
    let lhs = rep.descent.expect("descent terms present").lhs;
    let d = inst.phi.shape().input_dim() as f64;
    let factor = inst.a_param().powi(2) * (d + 1.0) * rep.v_value + 1.0;
    let risk = rep.eight_risk / 8.0;
    let bound = -8.0 * gamma * (1.0 - gamma * factor) * risk + IDENTITY_TOL;
    ensure(lhs <= bound && lhs <= IDENTITY_TOL, || format!("ΔV = {lhs} exceeds {bound}"))
}

fn check_zero_set(inst: &Instance) -> CheckResult {
    let (r, g) = lab(risk::true_risk_and_gradient(
        &inst.phi,
        &inst.uniform()?,
        &TargetSpec::Constant(inst.xi),
        IntegrationOptions::default(),
    ))?;
    let (zero_g, zero_r) = (g.gradient.norm() < 1e-12, r.value < 1e-12);
    ensure(zero_g == zero_r, || {
        format!("‖𝒢‖ = {}, risk = {}", g.gradient.norm(), r.value)
    })
}

fn check_unbiased(inst: &Instance) -> CheckResult {
    const DRAWS: u64 = 1000;
    let dist = inst.uniform()?;
    let exact = lab(risk::true_risk(&inst.phi, &dist, &TargetSpec::Constant(inst.xi)))?.value;
    let se = (lab(risk::squared_error_variance_1d(&inst.phi, &dist, inst.xi))? / DRAWS as f64).sqrt();
    let seed = inst.sample_seed.ok_or("instance has no sampling seed")?;
    let mut sum = 0.0;
    for n in 0..DRAWS {
        let b = lab(input::sample_batch(&dist, n, 1, seed))?;
        sum += lab(risk::empirical_risk(&inst.phi, &b, inst.xi))?;
    }
    let mean = sum / DRAWS as f64;
    ensure((mean - exact).abs() <= 5.0 * se + 1e-12 * (1.0 + exact), || {
        format!("mean {mean} vs exact {exact}, standard error {se}")
    })
}

fn check_empirical_norm(inst: &Instance) -> CheckResult {
    let (risk, g) = lab(risk::empirical_risk_and_gradient(&inst.phi, inst.batch()?, inst.xi))?;
    let bound = risk::gradient_norm_sq_bound(&inst.phi, inst.a_param(), risk);
    ensure(g.norm_sq() <= bound * (1.0 + 1e-12), || format!("‖𝔊‖² = {} > {bound}", g.norm_sq()))
}

fn check_true_norm(inst: &Instance) -> CheckResult {
    let (r, g) = lab(risk::true_risk_and_gradient(
        &inst.phi,
        &inst.uniform()?,
        &TargetSpec::Constant(inst.xi),
        IntegrationOptions::default(),
    ))?;
    let bound = risk::gradient_norm_sq_bound(&inst.phi, inst.a_param(), r.value);
    let n2 = g.gradient.norm_sq();
    ensure(n2 <= bound * (1.0 + 1e-12), || format!("‖𝒢‖² = {n2} > {bound}"))
}

fn check_compact(inst: &Instance) -> CheckResult {
    let (risk, g) = lab(risk::empirical_risk_and_gradient(&inst.phi, inst.batch()?, inst.xi))?;
    let d = inst.phi.shape().input_dim() as f64;
    let bound = 2.0 * ((inst.a_param().powi(2) * (d + 1.0) + 1.0) * risk).sqrt();
    ensure(g.norm().is_finite() && g.norm() <= bound * (1.0 + 1e-12), || {
        format!("‖𝔊‖ = {} > {bound} on the unit ball", g.norm())
    })
}

fn check_bounds_ordered(inst: &Instance) -> CheckResult {
    let a = lyapunov::step_bound_a(&inst.phi, inst.a_param(), inst.xi);
    let v = lyapunov::step_bound_v(&inst.phi, inst.a_param(), inst.xi);
    ensure(a <= v, || format!("a-form {a} > v-form {v}"))
}

fn check_fd_oracle(inst: &Instance) -> CheckResult {
    let r = inst.r.ok_or("instance has no smoothing index")?;
    let batch = inst.batch()?;
    let analytic = lab(risk::smoothed_empirical_gradient(&inst.phi, batch, inst.xi, r))?;
    let fd = lab(risk::finite_difference_gradient(&inst.phi, batch, inst.xi, r, 1e-6))?;
    let err = analytic.distance(&fd);
    ensure(err <= 1e-5 * analytic.norm().max(1.0), || {
        format!("‖analytic − fd‖ = {err}, ‖analytic‖ = {}", analytic.norm())
    })
}

/// Doubling indices from the first `2^k ≥ max(2^10, 64/min|z|)` up to `2^44`.
pub fn limit_tail(min_abs_pre: f64) -> Vec<SmoothIndex> {
    let start = (1024.0f64).max(64.0 / min_abs_pre);
    let k0 = start.log2().ceil().min(44.0) as u32;
    (k0..=44).map(SmoothIndex::pow2).collect()
}

fn check_limit_tail(inst: &Instance) -> CheckResult {
    let batch = inst.batch()?;
    let rs = limit_tail(min_abs_pre_activation(&inst.phi, batch));
    let gaps: Vec<f64> = rs
        .iter()
        .map(|&r| lab(risk::gradient_limit_gap(&inst.phi, batch, inst.xi, r)))
        .collect::<Result<_, _>>()?;
    if let Some(i) = (1..gaps.len()).find(|&i| gaps[i] > gaps[i - 1]) {
        return Err(format!("gap rises from {} to {} at r = {}", gaps[i - 1], gaps[i], rs[i].get()));
    }
    let last = *gaps.last().expect("nonempty tail");
    ensure(last < 1e-6, || format!("final gap {last} at r = {}", rs.last().unwrap().get()))
}

fn check_pointwise(inst: &Instance) -> CheckResult {
    let x = inst.x.ok_or("instance has no point")?;
    let start = (4.0f64).max(4.0 / x.abs());
    let k0 = start.log2().ceil() as u32;
    let rs: Vec<_> = (k0..k0 + 30).map(SmoothIndex::pow2).collect();
    let p = lab(activation::limit_profile(x, &rs))?;
    for w in p.windows(2) {
        ensure(w[1].value_gap <= w[0].value_gap && w[1].derivative_gap <= w[0].derivative_gap, || {
            format!("gap rises between r = {} and r = {}", w[0].r.get(), w[1].r.get())
        })?;
    }
    let last = p.last().expect("nonempty profile");
    ensure(last.value_gap < 1e-6, || format!("final value gap {}", last.value_gap))
}

pub fn suite_registry() -> Registry<dyn PropertySuite> {
    let mut reg: Registry<dyn PropertySuite> = Registry::new("verification suite");
    reg.register(
        "identities",
        Box::new(Suite {
            name: "identities",
            properties: vec![
                prop("pairing", generic, check_pairing),
                prop("descent", generic_with_step, check_descent),
                prop("pairing_true", line, check_pairing_true),
                prop("sandwich", generic, check_sandwich),
                prop("one_step_monotone", generic_under_bound, check_one_step),
                prop("zero_set", line_fit_or_not, check_zero_set),
                prop("unbiased", unbiased_instance, check_unbiased),
            ],
        }),
    );
    reg.register(
        "bounds",
        Box::new(Suite {
            name: "bounds",
            properties: vec![
                prop("empirical_gradient_norm", generic, check_empirical_norm),
                prop("true_gradient_norm", line, check_true_norm),
                prop("unit_ball_gradient", unit_ball, check_compact),
                prop("step_bounds_ordered", generic, check_bounds_ordered),
            ],
        }),
    );
    reg.register(
        "limits",
        Box::new(Suite {
            name: "limits",
            properties: vec![
                prop("finite_difference_oracle", random_smooth_instance, check_fd_oracle),
                prop("gradient_limit_tail", kink_free, check_limit_tail),
                prop("pointwise_activation_limit", pointwise, check_pointwise),
            ],
        }),
    );
    reg
}

/// One failing trial, serialized for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Falsifier {
    pub suite: String,
    pub property: String,
    pub seed: u64,
    pub trial: u64,
    pub message: String,
    pub instance: Instance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub suite: String,
    pub property: String,
    pub passed: u64,
    pub trials: u64,
    pub failure: Option<Falsifier>,
}

impl PropertyReport {
    pub fn ok(&self) -> bool {
        self.passed == self.trials
    }
}

fn stream_seed(seed: u64, suite: &str, property: &str) -> u64 {
    let digest = Sha256::digest(format!("{suite}/{property}").as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(bytes)
}

/// Generator for trial `trial` of `suite/property`.
pub fn trial_rng(seed: u64, suite: &str, property: &str, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, suite, property));
    rng.set_stream(trial);
    rng
}

pub fn run_property(suite: &str, property: &dyn Property, seed: u64, trials: u64) -> PropertyReport {
    let failures: Vec<Falsifier> = (0..trials)
        .into_par_iter()
        .filter_map(|t| {
            let mut rng = trial_rng(seed, suite, property.name(), t);
            let instance = property.generate(&mut rng);
            property.check(&instance).err().map(|message| Falsifier {
                suite: suite.into(),
                property: property.name().into(),
                seed,
                trial: t,
                message,
                instance,
            })
        })
        .collect();
    PropertyReport {
        suite: suite.into(),
        property: property.name().into(),
        passed: trials - failures.len() as u64,
        trials,
        failure: failures.into_iter().min_by_key(|f| f.trial),
    }
}

/// Names of the suites selected by `name`; `all` selects every suite.
pub fn select(name: &str) -> CliResult<Vec<String>> {
    let reg = suite_registry();
    if name == "all" {
        return Ok(reg.names().map(String::from).collect());
    }
    reg.get(name).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(vec![name.into()])
}

pub fn run_suites(name: &str, seed: u64, trials: u64) -> CliResult<Vec<PropertyReport>> {
    let reg = suite_registry();
    let mut reports = Vec::new();
    for suite_name in select(name)? {
        let suite = reg.get(&suite_name).map_err(|e| CliError::Config(e.to_string()))?;
        for p in suite.properties() {
            reports.push(run_property(suite.name(), p.as_ref(), seed, trials));
        }
    }
    Ok(reports)
}

pub fn falsifier_path(dir: &Path, f: &Falsifier) -> PathBuf {
    dir.join(format!("falsifying-{}-{}.json", f.suite, f.property))
}

pub fn write_falsifier(dir: &Path, f: &Falsifier) -> CliResult<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = falsifier_path(dir, f);
    let text = serde_json::to_string_pretty(f).map_err(std::io::Error::from)?;
    fs::write(&path, text + "\n")?;
    Ok(path)
}

/// Re-checks a stored instance; `Err` carries the reproduced failure.
pub fn replay(f: &Falsifier) -> CliResult<CheckResult> {
    let reg = suite_registry();
    let suite = reg.get(&f.suite).map_err(|e| CliError::Config(e.to_string()))?;
    let p = suite
        .properties()
        .iter()
        .find(|p| p.name() == f.property)
        .ok_or_else(|| CliError::Config(format!("suite `{}` has no property `{}`", f.suite, f.property)))?;
    Ok(p.check(&f.instance))
}

pub fn load_falsifier(path: &Path) -> CliResult<Falsifier> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid falsifier file: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes_a_few_trials() {
        for rep in run_suites("all", 1, 20).unwrap() {
            assert!(rep.ok(), "{rep:?}");
        }
    }

    #[test]
    fn zero_trials_is_vacuous() {
        let reps = run_suites("all", 1, 0).unwrap();
        assert!(!reps.is_empty());
        assert!(reps.iter().all(|r| r.ok() && r.trials == 0));
    }

    #[test]
    fn unknown_suite_is_config_error() {
        assert!(matches!(select("everything"), Err(CliError::Config(_))));
    }

    #[test]
    fn trials_are_reproducible() {
        let a = trial_rng(5, "identities", "pairing", 17).gen::<u64>();
        let b = trial_rng(5, "identities", "pairing", 17).gen::<u64>();
        let c = trial_rng(5, "identities", "pairing", 18).gen::<u64>();
        let d = trial_rng(5, "identities", "descent", 17).gen::<u64>();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn tampered_instance_replays_as_failure() {
        let mut rng = trial_rng(1, "identities", "sandwich", 0);
        let mut inst = generic(&mut rng);
        assert!(check_sandwich(&inst).is_ok());
        inst.phi = ParamVector::zeros(inst.phi.shape());
        inst.xi = 0.0;
        let f = Falsifier {
            suite: "identities".into(),
            property: "one_step_monotone".into(),
            seed: 1,
            trial: 0,
            message: String::new(),
            instance: Instance {
                gamma: Some(-1.0),
                phi: random_params(&mut rng, inst.phi.shape(), 5.0),
                batch: inst.batch.clone(),
                ..inst
            },
        };
        // A negative step increases V and is caught.
        let text = serde_json::to_string(&f).unwrap();
        let back: Falsifier = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        assert!(replay(&back).unwrap().is_err());
    }

    #[test]
    fn exact_fit_lines_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let phi = exact_fit_line(&mut rng, -1.0, 2.0, 0.7, 6);
            for k in 0..=30 {
                let x = -1.0 + 3.0 * k as f64 / 30.0;
                assert!((net::realize_exact(&phi, &[x]).unwrap() - 0.7).abs() < 1e-14);
            }
        }
    }
}
