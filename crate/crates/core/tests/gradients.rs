//! Backpropagation against a central finite-difference oracle.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtl_core::linalg::Matrix;
use rtl_core::repnet::{init_params, loss, loss_and_gradients, DomainBatch, NetworkConfig, NetworkParams};

const STEP: f64 = 1e-5;

struct Problem {
    params: NetworkParams,
    z: Vec<Matrix>,
    t: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
}

impl Problem {
    fn random(cfg: NetworkConfig, k: usize, n: usize, seed: u64) -> Problem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = init_params(&cfg).unwrap();
        let flat: Vec<f64> = base.flatten().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = base.with_flat(&flat).unwrap();
        let mut u = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let z = (0..k).map(|_| Matrix::from_vec(n, cfg.input_dim, u(n * cfg.input_dim)).unwrap()).collect();
        let t = (0..k).map(|_| u(n)).collect();
        let g = (0..k).map(|_| u(cfg.output_dim)).collect();
        Problem { params, z, t, g }
    }

    fn batches(&self) -> Vec<DomainBatch<'_>> {
        (0..self.z.len())
            .map(|k| DomainBatch {
                z: &self.z[k],
                target: &self.t[k],
                gamma: &self.g[k],
            })
            .collect()
    }

    fn loss_at(&self, flat: &[f64]) -> f64 {
        loss(&self.params.with_flat(flat).unwrap(), &self.batches()).unwrap()
    }

    /// Largest `|bp − fd| / max(|bp|, |fd|)` over entries where either side
    /// exceeds `floor`, and the largest absolute gap elsewhere.
    fn max_errors(&self, floor: f64) -> (f64, f64) {
        let bp = loss_and_gradients(&self.params, &self.batches()).unwrap().flatten();
        let theta = self.params.flatten();
        let (mut rel, mut abs) = (0.0f64, 0.0f64);
        for (j, &g) in bp.iter().enumerate() {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[j] += STEP;
            minus[j] -= STEP;
            let fd = (self.loss_at(&plus) - self.loss_at(&minus)) / (2.0 * STEP);
            let scale = g.abs().max(fd.abs());
            if scale > floor {
                rel = rel.max((g - fd).abs() / scale);
            } else {
                abs = abs.max((g - fd).abs());
            }
        }
        (rel, abs)
    }
}

#[test]
fn two_layer_two_domain_matches_finite_differences() {
    let p = Problem::random(NetworkConfig::new(3, 2, 2, 5, 1), 2, 4, 11);
    let (rel, abs) = p.max_errors(1e-6);
    assert!(rel <= 1e-5, "relative error {rel:e}");
    assert!(abs <= 1e-9, "absolute error on tiny entries {abs:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_small_nets_match_finite_differences(
        q in 1usize..=6,
        p in 1usize..=4,
        depth in 1usize..=3,
        width in 1usize..=8,
        k in 1usize..=3,
        n in 1usize..=6,
        seed in any::<u64>(),
    ) {
        let prob = Problem::random(NetworkConfig::new(q, p, depth, width, seed), k, n, seed ^ 0xABCD);
        let (rel, abs) = prob.max_errors(1e-6);
        prop_assert!(rel <= 1e-5, "relative error {rel:e}");
        prop_assert!(abs <= 1e-9, "absolute error on tiny entries {abs:e}");
    }
}
