#![allow(dead_code)]

use std::f64::consts::PI;

use hfwave::solvers::{Problem, SimConfig, Variant};
use hfwave::system::{find_dispersion, klein_gordon_default, BranchSelector, EnvelopeProfile, Trilinear};

/// Torus length of the small test problems.
pub const SMALL_L: f64 = 16.0 * PI;

pub fn kg_problem(amplitude: f64, nonlinear: bool) -> Problem {
    let mut spec = klein_gordon_default();
    if !nonlinear {
        spec.t = Trilinear::Zero;
    }
    let disp = find_dispersion(&spec, &[1.0], BranchSelector::SmallestPositive).unwrap();
    let profile = EnvelopeProfile::gaussian(amplitude, 0.0, 2.0, disp.kernel_vec.clone());
    Problem { spec, disp, profile }
}

/// Carrier mode 32 on the small torus, 128 envelope modes.
pub fn small_config(eps: f64, t_end_slow: f64, variant: Variant) -> SimConfig {
    let mut cfg = SimConfig::new(eps, t_end_slow, variant, 1.0, SMALL_L, 128);
    cfg.n_snap = 4;
    cfg
}
