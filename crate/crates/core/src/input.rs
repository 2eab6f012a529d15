//! Input distributions on the box `[a,b]^d`, reproducible batch sampling
//! and the integration backends used for true-risk quantities.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::net::InputPoint;

/// Tolerance on `Σ weights = 1` for discrete distributions.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// 3-point Gauss–Legendre rule on `[-1, 1]`; exact for polynomials of degree ≤ 5.
const GAUSS3_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS3_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionKind {
    UniformBox,
    Discrete {
        points: Vec<InputPoint>,
        weights: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionRepr", into = "DistributionRepr")]
pub struct InputDistribution {
    a: f64,
    b: f64,
    d: usize,
    kind: DistributionKind,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum DistributionRepr {
    UniformBox {
        a: f64,
        b: f64,
        d: usize,
    },
    Discrete {
        a: f64,
        b: f64,
        points: Vec<InputPoint>,
        weights: Vec<f64>,
    },
}

impl TryFrom<DistributionRepr> for InputDistribution {
    type Error = LabError;
    fn try_from(r: DistributionRepr) -> Result<Self> {
        match r {
            DistributionRepr::UniformBox { a, b, d } => Self::uniform(a, b, d),
            DistributionRepr::Discrete { a, b, points, weights } => Self::discrete(a, b, points, weights),
        }
    }
}

impl From<InputDistribution> for DistributionRepr {
    fn from(dist: InputDistribution) -> Self {
        let InputDistribution { a, b, d, kind } = dist;
        match kind {
            DistributionKind::UniformBox => DistributionRepr::UniformBox { a, b, d },
            DistributionKind::Discrete { points, weights } => DistributionRepr::Discrete { a, b, points, weights },
        }
    }
}

impl InputDistribution {
    pub fn uniform(a: f64, b: f64, d: usize) -> Result<Self> {
        check_box(a, b, d)?;
        Ok(Self {
            a,
            b,
            d,
            kind: DistributionKind::UniformBox,
        })
    }

    pub fn discrete(a: f64, b: f64, points: Vec<InputPoint>, weights: Vec<f64>) -> Result<Self> {
        let d = points.first().map(InputPoint::dim).ok_or_else(|| {
            LabError::InvalidDistribution("discrete distribution needs at least one point".into())
        })?;
        check_box(a, b, d)?;
        if points.len() != weights.len() {
            return Err(LabError::InvalidDistribution(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(LabError::InvalidDistribution(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(LabError::InvalidDistribution(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        for p in &points {
            if p.dim() != d {
                return Err(LabError::InvalidDistribution(
                    "points have inconsistent dimension".into(),
                ));
            }
            if p.coords().iter().any(|&x| !(a..=b).contains(&x)) {
                return Err(LabError::InvalidDistribution(format!(
                    "point {:?} lies outside [{a}, {b}]^{d}",
                    p.coords()
                )));
            }
        }
        Ok(Self {
            a,
            b,
            d,
            kind: DistributionKind::Discrete { points, weights },
        })
    }

    /// Point mass at `x ∈ [a,b]^d`.
    pub fn point_mass(x: InputPoint, a: f64, b: f64) -> Result<Self> {
        Self::discrete(a, b, vec![x], vec![1.0])
    }

    pub fn lower(&self) -> f64 {
        self.a
    }

    pub fn upper(&self) -> f64 {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> &DistributionKind {
        &self.kind
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, DistributionKind::UniformBox)
    }

    /// `max{|a|, |b|, 1}`.
    pub fn a_param(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(1.0)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.d && x.iter().all(|&c| (self.a..=self.b).contains(&c))
    }
}

fn check_box(a: f64, b: f64, d: usize) -> Result<()> {
    if !(a.is_finite() && b.is_finite()) || b <= a {
        return Err(LabError::InvalidDistribution(format!(
            "need finite a < b (got a={a}, b={b})"
        )));
    }
    if d == 0 {
        return Err(LabError::InvalidDistribution("dimension must be positive".into()));
    }
    Ok(())
}

/// One mini-batch `X^{n,1}, …, X^{n,M}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BatchRepr", into = "BatchRepr")]
pub struct EmpiricalBatch {
    step: u64,
    samples: Vec<InputPoint>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchRepr {
    step: u64,
    samples: Vec<InputPoint>,
}

impl TryFrom<BatchRepr> for EmpiricalBatch {
    type Error = LabError;
    fn try_from(r: BatchRepr) -> Result<Self> {
        EmpiricalBatch::new(r.step, r.samples)
    }
}

impl From<EmpiricalBatch> for BatchRepr {
    fn from(b: EmpiricalBatch) -> Self {
        BatchRepr {
            step: b.step,
            samples: b.samples,
        }
    }
}

impl EmpiricalBatch {
    pub fn new(step: u64, samples: Vec<InputPoint>) -> Result<Self> {
        if samples.is_empty() {
            return Err(LabError::EmptyBatch);
        }
        Ok(Self { step, samples })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn samples(&self) -> &[InputPoint] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Words reserved per sample within a ChaCha stream. A sample consumes at
/// most `2·d` 32-bit words, so `d` up to 2^31 never spills into the next slot.
const WORDS_PER_SAMPLE_LOG2: u32 = 32;

/// Generator positioned at the substream of sample `(n, m)` under `seed`.
///
/// Stream id is `n`, the word counter starts at `m · 2^32`; the draw for any
/// `(seed, n, m)` is independent of every other draw and of call order.
pub fn substream(seed: u64, n: u64, m: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n);
    rng.set_word_pos((m as u128) << WORDS_PER_SAMPLE_LOG2);
    rng
}

fn draw(dist: &InputDistribution, rng: &mut ChaCha8Rng, index: Option<&WeightedIndex<f64>>) -> InputPoint {
    match (&dist.kind, index) {
        (DistributionKind::Discrete { points, .. }, Some(idx)) => points[idx.sample(rng)].clone(),
        _ => {
            let width = dist.b - dist.a;
            InputPoint::new(
                (0..dist.d)
                    .map(|_| {
                        let u: f64 = rng.gen();
                        (dist.a + width * u).min(dist.b)
                    })
                    .collect(),
            )
        }
    }
}

/// Draws `M` i.i.d. points for step `n`.
pub fn sample_batch(dist: &InputDistribution, n: u64, batch_size: usize, seed: u64) -> Result<EmpiricalBatch> {
    if batch_size == 0 {
        return Err(LabError::EmptyBatch);
    }
    let index = match &dist.kind {
        DistributionKind::Discrete { weights, .. } => Some(
            WeightedIndex::new(weights)
                .map_err(|e| LabError::InvalidDistribution(e.to_string()))?,
        ),
        DistributionKind::UniformBox => None,
    };
    let samples = (0..batch_size as u64)
        .map(|m| {
            let mut rng = substream(seed, n, m);
            draw(dist, &mut rng, index.as_ref())
        })
        .collect();
    EmpiricalBatch::new(n, samples)
}

fn check_breakpoints(dist: &InputDistribution, breakpoints: &[f64]) -> Result<()> {
    if !dist.is_uniform() || dist.d != 1 {
        return Err(LabError::InvalidDistribution(
            "piecewise integration requires a 1-dimensional uniform distribution".into(),
        ));
    }
    if breakpoints.windows(2).any(|w| w[0].is_nan() || w[1].is_nan() || w[0] > w[1]) {
        return Err(LabError::InvalidBreakpoints("breakpoints must be sorted".into()));
    }
    if let Some(&x) = breakpoints.iter().find(|&&x| !(dist.a..=dist.b).contains(&x)) {
        return Err(LabError::InvalidBreakpoints(format!(
            "breakpoint {x} outside [{}, {}]",
            dist.a, dist.b
        )));
    }
    Ok(())
}

/// Gauss nodes and probability weights for `[a,b]` split at `breakpoints`.
///
/// All nodes are interior to their piece, so an integrand that is polynomial
/// of degree ≤ 5 on each piece (and arbitrary at the breakpoints) is integrated
/// exactly against the uniform density.
pub fn piecewise_gauss_nodes(dist: &InputDistribution, breakpoints: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_breakpoints(dist, breakpoints)?;
    let density = 1.0 / (dist.b - dist.a);
    let mut edges = Vec::with_capacity(breakpoints.len() + 2);
    edges.push(dist.a);
    edges.extend_from_slice(breakpoints);
    edges.push(dist.b);
    let mut nodes = Vec::with_capacity(3 * (edges.len() - 1));
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (t, wt) in GAUSS3_NODES.iter().zip(GAUSS3_WEIGHTS) {
            nodes.push((mid + half * t, half * wt * density));
        }
    }
    Ok(nodes)
}

/// `∫ g dμ` for uniform μ on `[a,b]` (d = 1) where `g` is a polynomial of
/// degree ≤ 2 between consecutive breakpoints.
pub fn expectation_1d_piecewise(
    dist: &InputDistribution,
    breakpoints: &[f64],
    mut integrand: impl FnMut(f64) -> f64,
) -> Result<f64> {
    Ok(piecewise_gauss_nodes(dist, breakpoints)?
        .into_iter()
        .map(|(x, w)| w * integrand(x))
        .sum())
}

/// Tensor-product midpoint rule with `resolution` points per axis.
pub fn quadrature_grid(dist: &InputDistribution, resolution: usize) -> Result<Vec<(InputPoint, f64)>> {
    if resolution < 2 {
        return Err(LabError::InvalidResolution(resolution));
    }
    let d = dist.d as u32;
    let total = resolution
        .checked_pow(d)
        .filter(|&t| t <= 50_000_000)
        .ok_or_else(|| LabError::InvalidDistribution(format!("grid {resolution}^{d} is too large")))?;
    let h = (dist.b - dist.a) / resolution as f64;
    let axis: Vec<f64> = (0..resolution).map(|k| dist.a + (k as f64 + 0.5) * h).collect();
    let weight = 1.0 / total as f64;
    Ok((0..total)
        .map(|mut k| {
            let coords = (0..dist.d)
                .map(|_| {
                    let c = axis[k % resolution];
                    k /= resolution;
                    c
                })
                .collect();
            (InputPoint::new(coords), weight)
        })
        .collect())
}
