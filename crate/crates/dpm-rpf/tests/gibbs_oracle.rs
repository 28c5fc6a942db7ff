//! Stationarity check for the Gibbs sweep: with cluster parameters pinned,
//! one sweep started from the exact assignment posterior must leave the
//! assignment marginals unchanged.

mod common;

use dpm_rpf::kernels::sample_categorical;
use dpm_rpf::SeedStream;

#[test]
fn one_sweep_preserves_the_exact_posterior() {
    let outliers = [-0.4, 1.4, 3.1];
    let thetas = [(0.0, 1.0), (3.0, 1.0)];
    let alpha = 1.0;

    let distribution = common::enumerate_assignments(&outliers, &thetas, alpha);
    let exact = common::exact_marginals(&distribution, outliers.len(), thetas.len());
    let state_weights: Vec<f64> = distribution.iter().map(|(_, p)| *p).collect();

    let replications = 50_000;
    let mut rng = SeedStream::new(2718);
    let mut hits = vec![vec![0u64; thetas.len()]; outliers.len()];
    for _ in 0..replications {
        // Draw the starting assignments from the exact posterior, then apply
        // a single sweep with parameters pinned by rebuilding the model.
        let start = &distribution[sample_categorical(&state_weights, &mut rng).unwrap()].0;
        let mut model = common::fixed_theta_model(&outliers, start, &thetas, alpha);
        model.gibbs_refine(1, &mut rng).unwrap();
        for (i, &zi) in model.assignments().iter().enumerate() {
            hits[i][zi - 1] += 1;
        }
    }

    for i in 0..outliers.len() {
        let tv: f64 = (0..thetas.len())
            .map(|k| (hits[i][k] as f64 / replications as f64 - exact[i][k]).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv <= 0.02, "item {i} drifted by total variation {tv:.4}");
    }
}

#[test]
fn long_chain_forgets_its_starting_assignment() {
    // Same target as above, but a single long chain from a deliberately bad
    // start; marginals must still converge to the enumeration.
    let outliers = [-0.4, 1.4, 3.1];
    let thetas = [(0.0, 1.0), (3.0, 1.0)];
    let alpha = 1.0;
    let exact = common::exact_marginals(
        &common::enumerate_assignments(&outliers, &thetas, alpha),
        outliers.len(),
        thetas.len(),
    );

    let mut rng = SeedStream::new(3141);
    let mut z = vec![2usize, 2, 1];
    let sweeps = 30_000;
    let mut hits = vec![vec![0u64; thetas.len()]; outliers.len()];
    for sweep in 0..(sweeps + 100) {
        let mut model = common::fixed_theta_model(&outliers, &z, &thetas, alpha);
        model.gibbs_refine(1, &mut rng).unwrap();
        z = model.assignments().to_vec();
        if sweep >= 100 {
            for (i, &zi) in z.iter().enumerate() {
                hits[i][zi - 1] += 1;
            }
        }
    }
    for i in 0..outliers.len() {
        let tv: f64 = (0..thetas.len())
            .map(|k| (hits[i][k] as f64 / sweeps as f64 - exact[i][k]).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv <= 0.02, "item {i} off by total variation {tv:.4}");
    }
}
