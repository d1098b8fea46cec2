//! Free-line flip-count densities against direct sampling: given `n` flips on
//! `[0, t]` the flip times are uniform order statistics.

use noisy_billiards::telegraph::{rho_n, KernelQuery};
use noisy_billiards::RngStream;

fn displacement(n: usize, p: f64, t: f64, rng: &mut RngStream) -> (f64, f64) {
    let mut times: Vec<f64> = (0..n).map(|_| rng.uniform() * t).collect();
    times.sort_by(f64::total_cmp);
    times.push(t);
    let (mut x, mut v, mut last) = (0.0, p, 0.0);
    for s in times {
        x += v * (s - last);
        v = -v;
        last = s;
    }
    (x, -v)
}

/// Midpoint rule over a bin, fine enough for the square-root endpoint
/// behaviour at `|u| = 1`.
fn bin_mass(n: usize, p: f64, p_prime: f64, t: f64, lo: f64, hi: f64) -> f64 {
    let steps = 400;
    let h = (hi - lo) / steps as f64;
    (0..steps)
        .map(|i| {
            let q_prime = lo + (i as f64 + 0.5) * h;
            let query = KernelQuery {
                q: 0.0,
                p,
                q_prime,
                p_prime,
                t,
                lambda: 1.0,
            };
            rho_n(n, &query).unwrap() * h
        })
        .sum()
}

#[test]
fn flip_count_densities_match_sampling() {
    let (p, t) = (1.5, 0.8);
    let samples = 400_000;
    let bins = 24;
    let reach = p * t;
    for n in [1usize, 2, 3, 4, 7] {
        let mut rng = RngStream::new(41, n as u64);
        let mut counts = vec![0u64; 2 * bins];
        for _ in 0..samples {
            let (x, v) = displacement(n, p, t, &mut rng);
            let b = (((x + reach) / (2.0 * reach) * bins as f64) as usize).min(bins - 1);
            counts[2 * b + usize::from(v < 0.0)] += 1;
        }
        let mut total = 0.0;
        for b in 0..bins {
            let lo = -reach + 2.0 * reach * b as f64 / bins as f64;
            let hi = lo + 2.0 * reach / bins as f64;
            for (slot, p_prime) in [(0, p), (1, -p)] {
                let mass = bin_mass(n, p, p_prime, t, lo, hi);
                total += mass;
                let expected = samples as f64 * mass;
                let got = counts[2 * b + slot] as f64;
                let se = expected.sqrt().max(1.0);
                assert!(
                    (got - expected).abs() < 5.0 * se,
                    "n={n} bin {b} slot {slot}: {got} vs {expected}"
                );
            }
        }
        assert!((total - 1.0).abs() < 2e-3, "n={n}: mass {total}");
    }
}
