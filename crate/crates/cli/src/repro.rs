//! The reference gradient listing: d = 1, H = 3, one sample.

use relu_lab_core::net::{self, NetworkShape, ParamVector};
use relu_lab_core::risk;
use relu_lab_core::{EmpiricalBatch, InputPoint};
use serde::Serialize;

use crate::CliResult;

pub const LISTING_X: f64 = 2.0;
pub const LISTING_XI: f64 = 3.0;

pub const GOLDEN_W: [f64; 3] = [0.0, 0.0, 64.0];
pub const GOLDEN_B: [f64; 3] = [0.0, 0.0, 32.0];
pub const GOLDEN_V: [f64; 3] = [0.0, 0.0, 64.0];
pub const GOLDEN_C: f64 = 16.0;

/// `W = (−1, 1, 2)ᵀ`, `b = (2, −2, 0)`, `v = (1, −1, 2)`, `c = 3`.
pub fn listing_params() -> ParamVector {
    let shape = NetworkShape::new(1, 3).expect("valid shape");
    ParamVector::from_parts(shape, &[-1.0, 1.0, 2.0], &[2.0, -2.0, 0.0], &[1.0, -1.0, 2.0], 3.0)
        .expect("valid parameters")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ListingReport {
    pub x: f64,
    pub xi: f64,
    /// The defaults were used, so the result is compared to the reference.
    pub golden_input: bool,
    pub pre_activations: Vec<f64>,
    pub output: f64,
    pub risk: f64,
    pub grad_w: Vec<f64>,
    pub grad_b: Vec<f64>,
    pub grad_v: Vec<f64>,
    pub grad_c: f64,
    /// Coordinates differing from the reference values.
    pub diffs: Vec<String>,
}

impl ListingReport {
    pub fn matches_golden(&self) -> bool {
        self.diffs.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = format!("listing at x = {}, xi = {}\n", self.x, self.xi);
        s += &format!("pre-activations: {:?}\n", self.pre_activations);
        s += &format!("output: {}  risk: {}\n", self.output, self.risk);
        s += &format!("gradient with respect to w: {:?}\n", self.grad_w);
        s += &format!("gradient with respect to b: {:?}\n", self.grad_b);
        s += &format!("gradient with respect to v: {:?}\n", self.grad_v);
        s += &format!("gradient with respect to c: [{:?}]\n", self.grad_c);
        if self.matches_golden() {
            s += "matches reference listing\n";
        } else {
            if !self.golden_input {
                s += "non-golden input; differences from reference listing:\n";
            } else {
                s += "MISMATCH against reference listing:\n";
            }
            for d in &self.diffs {
                s += &format!("  {d}\n");
            }
        }
        s
    }
}

fn compare(name: &str, got: &[f64], want: &[f64], diffs: &mut Vec<String>) {
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        if g.to_bits() != w.to_bits() {
            diffs.push(format!("{name}[{i}]: got {g}, expected {w}, diff {}", g - w));
        }
    }
}

pub fn reproduce(x: f64, xi: f64) -> CliResult<ListingReport> {
    let phi = listing_params();
    let batch = EmpiricalBatch::new(0, vec![InputPoint::new(vec![x])])?;
    let grad = risk::empirical_gradient(&phi, &batch, xi)?;
    let view = grad.view();
    let mut diffs = Vec::new();
    compare("w", view.weights(), &GOLDEN_W, &mut diffs);
    compare("b", view.biases(), &GOLDEN_B, &mut diffs);
    compare("v", view.outer(), &GOLDEN_V, &mut diffs);
    compare("c", &[view.offset()], &[GOLDEN_C], &mut diffs);
    Ok(ListingReport {
        x,
        xi,
        golden_input: x.to_bits() == LISTING_X.to_bits() && xi.to_bits() == LISTING_XI.to_bits(),
        pre_activations: net::pre_activations(&phi, &[x])?,
        output: net::realize_exact(&phi, &[x])?,
        risk: risk::empirical_risk(&phi, &batch, xi)?,
        grad_w: view.weights().to_vec(),
        grad_b: view.biases().to_vec(),
        grad_v: view.outer().to_vec(),
        grad_c: view.offset(),
        diffs,
    })
}
