use noisy_billiards::limit::{
    build_chain, rate_gamma, solve_distribution, EnergyConfig, StateSpace,
};
use noisy_billiards::microsim;
use noisy_billiards::stats::{empirical_distribution, tv_distance};
use noisy_billiards::SystemConfig;

fn swapped_fraction(energies: [f64; 2], seed: u64) -> (f64, f64, f64) {
    let config = SystemConfig::new(0.01, 1.0, &energies)
        .unwrap()
        .with_seed(seed);
    let paths: Vec<_> = microsim::run_replicas(&config, 0.5, 100_000)
        .unwrap()
        .into_iter()
        .map(|(path, _)| path)
        .collect();
    let space = StateSpace::orbit(&EnergyConfig::new(energies.to_vec()).unwrap());
    let d = empirical_distribution(&paths, 0.5, &space).unwrap();
    let swapped = d.probabilities()[space.index_of(&[energies[1], energies[0]]).unwrap()];
    let gamma = rate_gamma(energies[0], energies[1]).unwrap();
    let expected = (1.0 - (-2.0 * gamma * 0.5).exp()) / 2.0;
    let sigma = (expected * (1.0 - expected) / d.total as f64).sqrt();
    (swapped, expected, sigma)
}

#[test]
fn two_particle_swap_probability() {
    let (swapped, expected, sigma) = swapped_fraction([0.5, 2.0], 21);
    assert!(
        (swapped - expected).abs() < 3.0 * sigma,
        "{swapped} vs {expected} ± {sigma}"
    );
}

#[test]
fn two_particle_swap_probability_irrational_ratio() {
    let (swapped, expected, sigma) = swapped_fraction([0.5, 1.0], 26);
    assert!(
        (swapped - expected).abs() < 3.0 * sigma,
        "{swapped} vs {expected} ± {sigma}"
    );
}

#[test]
fn degenerate_laws_are_point_masses() {
    let config = SystemConfig::new(0.04, 1.0, &[1.0, 1.0, 1.0])
        .unwrap()
        .with_seed(22);
    let paths: Vec<_> = microsim::run_replicas(&config, 1.0, 500)
        .unwrap()
        .into_iter()
        .map(|(path, _)| path)
        .collect();
    let chain = build_chain(&EnergyConfig::new(vec![1.0; 3]).unwrap(), 10).unwrap();
    assert_eq!(chain.len(), 1);
    for t in [0.0, 0.5, 1.0] {
        let d = empirical_distribution(&paths, t, &chain.space).unwrap();
        assert_eq!(
            tv_distance(&d.probabilities(), &solve_distribution(&chain, t).unwrap()).unwrap(),
            0.0
        );
    }

    let config = SystemConfig::new(0.04, 1.0, &[0.5, 1.0, 2.0])
        .unwrap()
        .with_seed(23);
    let paths: Vec<_> = microsim::run_replicas(&config, 0.2, 500)
        .unwrap()
        .into_iter()
        .map(|(path, _)| path)
        .collect();
    let chain = build_chain(&EnergyConfig::new(vec![0.5, 1.0, 2.0]).unwrap(), 10).unwrap();
    let d = empirical_distribution(&paths, 0.0, &chain.space).unwrap();
    assert_eq!(
        tv_distance(
            &d.probabilities(),
            &solve_distribution(&chain, 0.0).unwrap()
        )
        .unwrap(),
        0.0
    );
}

#[test]
fn replicas_are_reproducible() {
    let config = SystemConfig::new(0.05, 1.0, &[0.5, 1.0, 2.0])
        .unwrap()
        .with_seed(24);
    let a = microsim::run_replicas(&config, 1.0, 64).unwrap();
    let b = microsim::run_replicas(&config, 1.0, 64).unwrap();
    assert_eq!(a, b);
    let other = microsim::run_replicas(&config.clone().with_seed(25), 1.0, 64).unwrap();
    assert_ne!(a, other);
}
