//! Fixtures shared by the benchmarks.

use sps_core::experiments::{InputModel, InputSpec, NoiseModel, Scenario};
use sps_core::{Dataset, ParamVector, SpsSetup};

/// Reference system with Laplacian noise and an AR(1) input.
pub fn scenario(n: usize) -> Scenario {
    Scenario {
        theta_star: ParamVector::new(vec![-0.7], vec![1.0]).expect("valid parameter"),
        input: InputSpec {
            model: InputModel::Ar1 {
                coeff: 0.75,
                drive_variance: 1.0,
            },
            seed: 1,
        },
        noise: NoiseModel::laplacian(0.1),
        n,
        master_seed: 7,
        regenerate_input: false,
    }
}

/// Simulated dataset of trial 0 and a matching setup.
pub fn fixture(n: usize, m: usize, q: usize) -> (Scenario, Dataset, SpsSetup) {
    let sc = scenario(n);
    let input = sps_core::experiments::generate_input(&sc.input, n, 1).expect("valid input");
    let ds = sc.trial_dataset(0, &input).expect("simulation");
    let setup = SpsSetup::generate(m, q, n, sc.trial_seeds(0).setup).expect("valid setup");
    (sc, ds, setup)
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_shapes() {
        let (_, ds, setup) = super::fixture(50, 20, 1);
        assert_eq!(ds.len(), 50);
        assert_eq!(setup.m(), 20);
    }
}
