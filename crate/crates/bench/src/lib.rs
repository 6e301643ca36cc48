//! Shared fixtures for the criterion benches.

use roomwave_core::{
    init_glorot, sample, Activation, HelmholtzProblem, NetworkSpec, ParameterVector, SampleSet,
    Sharpness,
};

pub struct Fixture {
    pub spec: NetworkSpec,
    pub params: ParameterVector,
    pub problem: HelmholtzProblem,
    pub samples: SampleSet,
}

/// `depth x width` sin network on the unit box at `nu = 1`.
pub fn fixture(dim: usize, depth: usize, width: usize, ppw: f64) -> Fixture {
    let spec = NetworkSpec::uniform(dim, depth, width, Activation::SIN, 1).expect("valid spec");
    let params = init_glorot(&spec);
    let problem = HelmholtzProblem::unit_box(dim, 1.0, -0.04, Sharpness::INFINITE);
    let samples = sample(&problem, ppw, 1).expect("sampling");
    Fixture {
        spec,
        params,
        problem,
        samples,
    }
}
