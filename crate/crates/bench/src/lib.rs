//! Shared inputs for the benchmarks.

use std::f64::consts::PI;

use wake_core::duhamel::QuadratureSpec;
use wake_core::forcing::{Bump, ForcingTerm, Spatial, SyntheticForcing, Temporal};
use wake_core::{RigidMotionSpec, Vector3};

/// Points spread over `|x| ∈ [0.01, 100]` on a fixed spiral.
pub fn sample_points(n: usize) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|i| {
            let s = i as f64 / n.max(1) as f64;
            let r = 10f64.powf(-2.0 + 4.0 * s);
            let (th, ph) = (PI * (0.1 + 0.8 * s), 2.0 * PI * 7.0 * s);
            Vector3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()) * r
        })
        .collect()
}

/// Translation along e3 with a spin about the same axis.
pub fn spinning_translation() -> RigidMotionSpec {
    RigidMotionSpec::steady(Vector3::z(), Vector3::z() * (2.0 * PI), 1.0).unwrap()
}

pub fn monopole_forcing() -> SyntheticForcing {
    let term = ForcingTerm { amplitude: 1.0, spatial: Spatial::Monopole { direction: [0.0, 0.0, 1.0] }, temporal: Temporal::raised_cosine() };
    SyntheticForcing::new(1.0, Bump::default(), vec![term]).unwrap()
}

pub fn quadrature() -> QuadratureSpec {
    QuadratureSpec::default()
}
