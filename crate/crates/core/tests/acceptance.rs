//! End-to-end checks of the simulator against the limiting objects.
//!
//! Every test prints one `PASS` or `FAIL` line with the measured numbers
//! before asserting, so `cargo test --test acceptance -- --nocapture` gives
//! a readable report.

use std::sync::OnceLock;

use noisy_billiards::limit::{
    build_chain, gillespie_run, solve_distribution, ssep_generator_check, EnergyConfig,
};
use noisy_billiards::microsim::{self, Simulator};
use noisy_billiards::stats::{
    empirical_distribution, jump_count_tail, nonincreasing_within, recollision_stats,
    swap_rate_estimate, tv_distance, RateEstimate,
};
use noisy_billiards::telegraph::{doeblin_scan, mixing_decay, TelegraphKernel, DEFAULT_TRUNCATION};
use noisy_billiards::{
    sample_gibbs_conditioned, validate_state, CollisionLog, RngStream, SystemConfig,
};
use rayon::prelude::*;

const LADDER: [f64; 4] = [0.08, 0.04, 0.02, 0.01];

fn report(name: &str, ok: bool, detail: String) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

#[test]
fn energy_multiset_and_ordering_hold_along_runs() {
    let config = SystemConfig::new(0.02, 1.0, &[0.5, 0.5, 1.0, 2.0])
        .unwrap()
        .with_seed(101);
    let horizon_micro = 1.0 / config.epsilon;
    let mut initial = config.energies.clone();
    initial.sort_by(f64::total_cmp);
    let failures: Vec<String> = (0..1000u64)
        .into_par_iter()
        .filter_map(|r| {
            let mut rng = RngStream::new(config.seed, r);
            let state = sample_gibbs_conditioned(&config, &mut rng).unwrap();
            let mut sim = Simulator::new(&config, state).unwrap();
            while let Some(outcome) = sim.step_until(horizon_micro, &mut rng).unwrap() {
                let mut e = sim.energies();
                e.sort_by(f64::total_cmp);
                if e.iter()
                    .zip(&initial)
                    .any(|(a, b)| a.to_bits() != b.to_bits())
                {
                    return Some(format!(
                        "replica {r}: multiset changed at {:?}",
                        outcome.event
                    ));
                }
                let violations = validate_state(&sim.snapshot(), &config);
                if !violations.is_empty() {
                    return Some(format!("replica {r}: {violations:?}"));
                }
            }
            None
        })
        .collect();
    let ok = failures.is_empty();
    report(
        "invariants",
        ok,
        format!("{} failing replicas of 1000", failures.len()),
    );
    assert!(ok, "{:?}", &failures[..failures.len().min(5)]);
}

#[test]
fn kernel_rows_are_normalized() {
    let mut worst: f64 = 0.0;
    for speed in [1.0, 2.0] {
        for t in [0.1, 1.0, 10.0] {
            let kernel = TelegraphKernel::new(1.0, speed, t, DEFAULT_TRUNCATION).unwrap();
            for q in [0.0, 0.13, 0.5, 0.77, 1.0] {
                for sign in [1.0, -1.0] {
                    worst = worst.max((kernel.total_mass(q, sign) - 1.0).abs());
                }
            }
        }
    }
    let ok = worst < 1e-8;
    report(
        "kernel normalization",
        ok,
        format!("max |mass - 1| = {worst:.3e}"),
    );
    assert!(ok);
}

/// Reflected telegraph particle simulated directly on the line, then folded.
/// Returns `(position, sign, flips)`.
fn free_particle(q: f64, p: f64, lambda: f64, t: f64, rng: &mut RngStream) -> (f64, f64, usize) {
    let mut x = q;
    let mut v = p;
    let mut left = t;
    let mut flips = 0;
    loop {
        let dt = rng.exponential(lambda);
        if dt >= left {
            x += v * left;
            break;
        }
        x += v * dt;
        left -= dt;
        v = -v;
        flips += 1;
    }
    let y = x.rem_euclid(2.0);
    if y <= 1.0 {
        (y, v.signum(), flips)
    } else {
        (2.0 - y, -v.signum(), flips)
    }
}

#[test]
fn kernel_matches_single_particle_histogram() {
    let (q0, lambda, t) = (0.3, 1.0, 1.0);
    let samples = 1_000_000u64;
    let bins = 100;
    let counts = (0..64u64)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = RngStream::new(202, chunk);
            let mut c = vec![0u64; 2 * bins];
            for _ in 0..samples / 64 {
                let (y, sign, flips) = free_particle(q0, 1.0, lambda, t, &mut rng);
                if flips == 0 {
                    continue;
                }
                let b = ((y * bins as f64) as usize).min(bins - 1);
                c[2 * b + usize::from(sign < 0.0)] += 1;
            }
            c
        })
        .reduce(
            || vec![0u64; 2 * bins],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let n = (samples / 64 * 64) as f64;
    let kernel = TelegraphKernel::new(lambda, 1.0, t, DEFAULT_TRUNCATION).unwrap();
    let mut within = 0;
    for b in 0..bins {
        let (a, z) = (b as f64 / bins as f64, (b + 1) as f64 / bins as f64);
        for (slot, sign_prime) in [(0, 1.0), (1, -1.0)] {
            let p = kernel.smooth_mass_between(q0, 1.0, sign_prime, a, z);
            let expected = n * p;
            let se = (n * p * (1.0 - p)).sqrt().max(1.0);
            if (counts[2 * b + slot] as f64 - expected).abs() <= 3.0 * se {
                within += 1;
            }
        }
    }
    let fraction = within as f64 / (2 * bins) as f64;
    let ok = fraction >= 0.97;
    report(
        "kernel vs Monte Carlo",
        ok,
        format!("{within}/{} bins within 3 SE", 2 * bins),
    );
    assert!(ok);
}

#[test]
fn doeblin_minorization_and_mixing() {
    let mut ok = true;
    let mut detail = Vec::new();
    for speed in [1.0, 2.0] {
        let cert = doeblin_scan(1.0, speed, 2.0, 100).unwrap();
        let decay = mixing_decay(1.0, speed, 0.3, 1.0, &[1.0, 2.0, 4.0, 8.0]).unwrap();
        let last = decay.rows.last().unwrap().l1_distance;
        ok &= cert.alpha > 0.0 && last < 1e-2 && decay.rate > 0.0;
        detail.push(format!(
            "|p|={speed}: alpha={:.4} L1(t=8)={last:.2e} c={:.3}",
            cert.alpha, decay.rate
        ));
    }
    report("doeblin / mixing", ok, detail.join("; "));
    assert!(ok);
}

/// Full-horizon logs for N = 2, energies (1/2, 2), λ = 1 along the ladder.
fn pair_logs() -> &'static Vec<(f64, Vec<CollisionLog>)> {
    static LOGS: OnceLock<Vec<(f64, Vec<CollisionLog>)>> = OnceLock::new();
    LOGS.get_or_init(|| {
        LADDER
            .iter()
            .map(|&eps| {
                let config = SystemConfig::new(eps, 1.0, &[0.5, 2.0])
                    .unwrap()
                    .with_seed(303);
                let logs = microsim::run_replicas(&config, 1.0, 10_000)
                    .unwrap()
                    .into_iter()
                    .map(|(_, log)| log)
                    .collect();
                (eps, logs)
            })
            .collect()
    })
}

#[test]
fn first_collision_rate_approaches_gamma() {
    let estimates: Vec<RateEstimate> = pair_logs()
        .iter()
        .map(|(_, logs)| swap_rate_estimate(logs, 1).unwrap())
        .collect();
    let errors: Vec<f64> = estimates.iter().map(|e| (e.rate - 1.0).abs()).collect();
    let widths: Vec<f64> = estimates.iter().map(RateEstimate::half_width).collect();
    let last = estimates.last().unwrap();
    let ok = (last.rate - 1.0).abs() <= 0.1 && nonincreasing_within(&errors, &widths);
    let rows: Vec<String> = LADDER
        .iter()
        .zip(&estimates)
        .map(|(eps, e)| format!("eps={eps}: {:.4} ± {:.4}", e.rate, e.half_width()))
        .collect();
    report("first-collision rate", ok, rows.join("; "));
    assert!(ok);
}

#[test]
fn limit_rate_does_not_depend_on_lambda() {
    let estimates: Vec<(f64, RateEstimate)> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&lambda| {
            let config = SystemConfig::new(0.01, lambda, &[0.5, 2.0])
                .unwrap()
                .with_seed(404);
            let logs = microsim::first_collision_replicas(&config, 5.0 / 0.01, 10_000).unwrap();
            (lambda, swap_rate_estimate(&logs, 1).unwrap())
        })
        .collect();
    let ok = estimates
        .iter()
        .all(|(_, a)| estimates.iter().all(|(_, b)| a.overlaps(b)));
    let rows: Vec<String> = estimates
        .iter()
        .map(|(l, e)| format!("lambda={l}: [{:.4}, {:.4}]", e.ci_lo, e.ci_hi))
        .collect();
    report("lambda independence", ok, rows.join("; "));
    assert!(ok);
}

#[test]
fn three_particle_law_converges_to_limit_chain() {
    let energies = [0.5, 1.0, 2.0];
    let chain = build_chain(&EnergyConfig::new(energies.to_vec()).unwrap(), 10_000).unwrap();
    let times = [0.25, 0.5];
    let exact: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| solve_distribution(&chain, t).unwrap())
        .collect();
    let mut tv = vec![Vec::new(); times.len()];
    let mut ci = vec![Vec::new(); times.len()];
    for &eps in &LADDER {
        let config = SystemConfig::new(eps, 1.0, &energies)
            .unwrap()
            .with_seed(505);
        let paths: Vec<_> = microsim::run_replicas(&config, 0.5, 100_000)
            .unwrap()
            .into_iter()
            .map(|(path, _)| path)
            .collect();
        for (i, &t) in times.iter().enumerate() {
            let d = empirical_distribution(&paths, t, &chain.space).unwrap();
            tv[i].push(tv_distance(&d.probabilities(), &exact[i]).unwrap());
            ci[i].push(d.tv_ci());
        }
    }
    let ok = (0..times.len())
        .all(|i| *tv[i].last().unwrap() < 0.05 && nonincreasing_within(&tv[i], &ci[i]));
    let rows: Vec<String> = times
        .iter()
        .zip(&tv)
        .map(|(t, row)| format!("t={t}: {row:.4?}"))
        .collect();
    report("distributional convergence", ok, rows.join("; "));
    assert!(ok);
}

#[test]
fn two_level_generator_is_ssep() {
    let mut ok = true;
    let mut detail = Vec::new();
    for e in [vec![0.5, 2.0, 2.0, 0.5], vec![0.5, 2.0]] {
        let chain = build_chain(&EnergyConfig::new(e.clone()).unwrap(), 10_000).unwrap();
        let r = ssep_generator_check(&chain).unwrap();
        ok &= r.passes && r.mismatches == 0;
        detail.push(format!(
            "{e:?}: rate {} mismatches {}",
            r.rate, r.mismatches
        ));
    }
    report("SSEP identification", ok, detail.join("; "));
    assert!(ok);
}

#[test]
fn limit_solvers_agree() {
    let pair = build_chain(&EnergyConfig::new(vec![0.5, 2.0]).unwrap(), 10).unwrap();
    let mut closed_form_err: f64 = 0.0;
    for t in [0.0, 0.1, 0.5, 1.0, 3.0] {
        let d = solve_distribution(&pair, t).unwrap();
        let swapped = (1.0 - (-2.0 * t).exp()) / 2.0;
        closed_form_err =
            closed_form_err.max((d[pair.space.index_of(&[2.0, 0.5]).unwrap()] - swapped).abs());
    }
    let init = EnergyConfig::new(vec![0.5, 1.0, 2.0]).unwrap();
    let chain = build_chain(&init, 10_000).unwrap();
    let paths: Vec<_> = (0..100_000u64)
        .into_par_iter()
        .map(|r| gillespie_run(&init, 1.0, &mut RngStream::new(606, r)).unwrap())
        .collect();
    let mut worst_tv: f64 = 0.0;
    for t in [0.25, 0.5, 1.0] {
        let d = empirical_distribution(&paths, t, &chain.space).unwrap();
        worst_tv = worst_tv
            .max(tv_distance(&d.probabilities(), &solve_distribution(&chain, t).unwrap()).unwrap());
    }
    let ok = closed_form_err <= 1e-10 && worst_tv < 0.01;
    report(
        "limit self-consistency",
        ok,
        format!("closed form err {closed_form_err:.2e}, Gillespie TV {worst_tv:.4}"),
    );
    assert!(ok);
}

#[test]
fn rational_velocity_ratio_recollides_more() {
    let fractions = |energies: [f64; 2], eps: f64| {
        let config = SystemConfig::new(eps, 1.0, &energies)
            .unwrap()
            .with_seed(707);
        let logs: Vec<CollisionLog> = microsim::run_replicas(&config, 1.0, 10_000)
            .unwrap()
            .into_iter()
            .map(|(_, log)| log)
            .collect();
        recollision_stats(&logs, 4.0, "")
    };
    let rational = fractions([0.5, 2.0], 0.01);
    let irrational: Vec<_> = LADDER
        .iter()
        .map(|&eps| fractions([0.5, 1.0], eps))
        .collect();
    let last = irrational.last().unwrap();
    let separated = rational.fraction() - rational.ci() > last.fraction() + last.ci();
    let decreasing = irrational
        .windows(2)
        .all(|w| w[1].fraction() < w[0].fraction());
    let ok = separated && decreasing;
    let ladder: Vec<String> = irrational
        .iter()
        .map(|r| format!("{:.4}", r.fraction()))
        .collect();
    report(
        "recollision clustering",
        ok,
        format!(
            "ratio 2: {:.4} ± {:.4}, ratio sqrt2: {:.4} ± {:.4}; sqrt2 ladder {}",
            rational.fraction(),
            rational.ci(),
            last.fraction(),
            last.ci(),
            ladder.join(" > ")
        ),
    );
    assert!(ok);
}

#[test]
fn collision_counts_have_tight_tails() {
    const BOUND: f64 = 2.0;
    let thresholds: Vec<usize> = (1..=10).collect();
    let mut worst: f64 = 0.0;
    for (_, logs) in pair_logs() {
        let tail = jump_count_tail(logs, 1, &thresholds);
        for (p, n) in tail.iter().zip(&thresholds) {
            worst = worst.max(p * *n as f64);
        }
    }
    let ok = worst <= BOUND;
    report(
        "tightness tail",
        ok,
        format!("max n P(count >= n) = {worst:.3} (bound {BOUND})"),
    );
    assert!(ok);
}
