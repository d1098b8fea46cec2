use noisy_billiards::limit::{build_chain, gillespie_run, solve_distribution, EnergyConfig};
use noisy_billiards::stats::{
    empirical_distribution, ratio_label, recollision_stats, sample_tv, swap_rate_estimate,
    tv_distance,
};
use noisy_billiards::telegraph::{
    deterministic_flow, doeblin_scan, mixing_decay, TelegraphKernel, DEFAULT_TRUNCATION,
};
use noisy_billiards::{microsim, Error, RngStream, RunConfig, SystemConfig};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::output::{energy_columns, Outputs};
use crate::{CliError, Command};

/// Micro-clock cap for first-collision runs, in macro time units.
const RATE_CAP_MACRO: f64 = 5.0;

/// Offsets the seed of the reference Gillespie sample in `compare
/// --gillespie` so it never shares a stream with the simulated replicas.
const GILLESPIE_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

fn with_epsilon(system: &SystemConfig, epsilon: f64) -> Result<SystemConfig, CliError> {
    let mut s = system.clone();
    s.epsilon = epsilon;
    s.validate()?;
    Ok(s)
}

pub fn run(command: Command, config: &RunConfig, out: &mut Outputs) -> Result<Value, CliError> {
    match command {
        Command::Simulate => simulate(config, out),
        Command::Limit => limit(config, out),
        Command::Compare { gillespie } => compare(config, gillespie, out),
        Command::Kernel => kernel(config, out),
        Command::Doeblin => doeblin(config, out),
        Command::Rates => rates(config, out),
        Command::Recollisions => recollisions(config, out),
    }
}

fn simulate(config: &RunConfig, out: &mut Outputs) -> Result<Value, CliError> {
    let system = &config.system;
    let runs = microsim::run_replicas(system, config.horizon_macro, system.replicas)?;

    let mut cols = header(&["replica", "time"]);
    cols.extend(energy_columns(system.n_particles));
    let mut paths = out.csv("paths.csv", &cols)?;
    let mut collisions = out.csv(
        "collisions.csv",
        &header(&["replica", "clock", "time", "k", "e_before_k", "e_before_k1"]),
    )?;
    let mut total_collisions = 0;
    for (r, (path, log)) in runs.iter().enumerate() {
        for (t, value) in path.times.iter().zip(&path.values) {
            let mut row = vec![r.to_string(), t.to_string()];
            row.extend(value.iter().map(f64::to_string));
            paths.write_record(&row)?;
        }
        for rec in &log.records {
            collisions.write_record([
                r.to_string(),
                "micro".to_string(),
                rec.time.to_string(),
                rec.k.to_string(),
                rec.e_before_k.to_string(),
                rec.e_before_k1.to_string(),
            ])?;
        }
        total_collisions += log.len();
    }
    paths.flush()?;
    collisions.flush()?;
    Ok(json!({ "collisions": total_collisions }))
}

fn limit(config: &RunConfig, out: &mut Outputs) -> Result<Value, CliError> {
    let initial = EnergyConfig::new(config.system.energies.clone())?;
    let chain = build_chain(&initial, config.state_cap)?;
    let mut cols = header(&["state_index"]);
    cols.extend(energy_columns(initial.len()));
    cols.push("probability".into());
    let mut files = Vec::new();
    for &t in &config.times {
        let dist = solve_distribution(&chain, t)?;
        let name = format!("limit_t{t}.csv");
        let mut w = out.csv(&name, &cols)?;
        for (i, p) in dist.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(chain.space.state(i).iter().map(f64::to_string));
            row.push(p.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        files.push(json!({ "t": t, "file": name }));
    }
    Ok(json!({ "states": chain.len(), "tables": files }))
}

fn compare(config: &RunConfig, gillespie: bool, out: &mut Outputs) -> Result<Value, CliError> {
    let system = &config.system;
    let initial = EnergyConfig::new(system.energies.clone())?;
    let horizon = config.times.iter().copied().fold(0.0, f64::max);
    let reference = if gillespie {
        Reference::Samples(
            (0..system.replicas)
                .into_par_iter()
                .map(|r| {
                    let mut rng =
                        RngStream::new(system.seed.wrapping_add(GILLESPIE_SEED_OFFSET), r);
                    gillespie_run(&initial, horizon, &mut rng)
                })
                .collect::<Result<Vec<_>, _>>()?,
        )
    } else {
        let chain = build_chain(&initial, config.state_cap).map_err(|e| match e {
            Error::StateSpaceCap { .. } => Error::Contract(format!(
                "{e}; rerun with `compare --gillespie` to compare against Gillespie samples"
            )),
            other => other,
        })?;
        Reference::Chain(chain)
    };

    let mut w = out.csv("compare.csv", &header(&["epsilon", "t", "tv", "ci"]))?;
    for &eps in &config.epsilon_ladder {
        let sys = with_epsilon(system, eps)?;
        let paths: Vec<_> = microsim::run_replicas(&sys, horizon, sys.replicas)?
            .into_iter()
            .map(|(path, _)| path)
            .collect();
        for &t in &config.times {
            let (tv, ci) = match &reference {
                Reference::Chain(chain) => {
                    let d = empirical_distribution(&paths, t, &chain.space)?;
                    let exact = solve_distribution(chain, t)?;
                    (tv_distance(&d.probabilities(), &exact)?, d.tv_ci())
                }
                Reference::Samples(samples) => {
                    let a = paths
                        .iter()
                        .map(|p| p.value_at(t))
                        .collect::<Result<Vec<_>, _>>()?;
                    let b = samples
                        .iter()
                        .map(|p| p.value_at(t))
                        .collect::<Result<Vec<_>, _>>()?;
                    sample_tv(&a, &b)
                }
            };
            w.write_record([
                eps.to_string(),
                t.to_string(),
                tv.to_string(),
                ci.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(json!({ "reference": if gillespie { "gillespie" } else { "uniformization" } }))
}

enum Reference {
    Chain(noisy_billiards::limit::LimitChain),
    Samples(Vec<noisy_billiards::EnergyPath>),
}

fn kernel(config: &RunConfig, out: &mut Outputs) -> Result<Value, CliError> {
    let lambda = config.system.lambda;
    let speed = (2.0 * config.kernel_energy).sqrt();
    let sign = f64::from(config.kernel_sign);
    let q = config.kernel_q;
    let grid = config.grid;
    let mut w = out.csv(
        "kernel.csv",
        &header(&[
            "q",
            "p_sign",
            "q_prime",
            "p_prime_sign",
            "t",
            "atom_weight",
            "smooth_density",
        ]),
    )?;
    for &t in &config.kernel_times {
        let kernel = TelegraphKernel::new(lambda, speed, t, DEFAULT_TRUNCATION)?;
        let (atom_q, atom_p) = deterministic_flow(q, sign * speed, t);
        let atom_cell = ((atom_q * grid as f64) as usize).min(grid - 1);
        for i in 0..grid {
            let q_prime = (i as f64 + 0.5) / grid as f64;
            for sign_prime in [1.0, -1.0] {
                let atom = if i == atom_cell && atom_p.signum() == sign_prime {
                    kernel.atom_weight()
                } else {
                    0.0
                };
                w.write_record([
                    q.to_string(),
                    sign.to_string(),
                    q_prime.to_string(),
                    sign_prime.to_string(),
                    t.to_string(),
                    atom.to_string(),
                    kernel.smooth(q, sign, q_prime, sign_prime).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(json!({ "speed": speed, "grid": grid }))
}

fn doeblin(config: &RunConfig, out: &mut Outputs) -> Result<Value, CliError> {
    let lambda = config.system.lambda;
    let sign = f64::from(config.kernel_sign);
    let mut minorization = out.csv(
        "doeblin.csv",
        &header(&["speed", "t0", "alpha", "rate_bound"]),
    )?;
    let mut decay = out.csv(
        "mixing.csv",
        &header(&["speed", "t", "l1_distance", "atom_weight", "decay_rate"]),
    )?;
    let mut best = Vec::new();
    for speed in config.system.speeds() {
        let mut alpha_max: f64 = 0.0;
        for &t0 in &config.doeblin_t0 {
            let cert = doeblin_scan(lambda, speed, t0, config.grid)?;
            alpha_max = alpha_max.max(cert.alpha);
            minorization.write_record([
                speed.to_string(),
                t0.to_string(),
                cert.alpha.to_string(),
                cert.decay_rate.unwrap_or(0.0).to_string(),
            ])?;
        }
        let table = mixing_decay(lambda, speed, config.kernel_q, sign, &config.mixing_times)?;
        for row in &table.rows {
            decay.write_record([
                speed.to_string(),
                row.t.to_string(),
                row.l1_distance.to_string(),
                row.atom_weight.to_string(),
                table.rate.to_string(),
            ])?;
        }
        best.push(json!({ "speed": speed, "alpha_max": alpha_max, "decay_rate": table.rate }));
    }
    minorization.flush()?;
    decay.flush()?;
    Ok(Value::Array(best))
}

fn two_particles(config: &RunConfig, command: &str) -> Result<(), CliError> {
    if config.system.n_particles != 2 {
        return Err(Error::config(
            "n_particles",
            format!(
                "`{command}` needs exactly 2 particles, got {}",
                config.system.n_particles
            ),
        )
        .into());
    }
    Ok(())
}

fn rates(config: &RunConfig, out: &mut Outputs) -> Result<Value, CliError> {
    two_particles(config, "rates")?;
    let e = &config.system.energies;
    let gamma = noisy_billiards::limit::rate_gamma(e[0], e[1])?;
    let mut w = out.csv(
        "rates.csv",
        &header(&["epsilon", "lambda", "rate", "ci_lo", "ci_hi"]),
    )?;
    for &eps in &config.epsilon_ladder {
        for &lambda in &config.lambdas {
            let mut sys = with_epsilon(&config.system, eps)?;
            sys.lambda = lambda;
            let logs =
                microsim::first_collision_replicas(&sys, RATE_CAP_MACRO / eps, sys.replicas)?;
            let fit = swap_rate_estimate(&logs, 1)?;
            w.write_record([
                eps.to_string(),
                lambda.to_string(),
                fit.rate.to_string(),
                fit.ci_lo.to_string(),
                fit.ci_hi.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(json!({ "gamma": gamma, "cap_macro": RATE_CAP_MACRO }))
}

fn recollisions(config: &RunConfig, out: &mut Outputs) -> Result<Value, CliError> {
    let mut w = out.csv(
        "recollisions.csv",
        &header(&["epsilon", "ratio_label", "fraction", "ci"]),
    )?;
    for &eps in &config.epsilon_ladder {
        for pair in &config.recollision_energies {
            let mut sys = SystemConfig::new(eps, config.system.lambda, pair)?;
            sys.seed = config.system.seed;
            sys.replicas = config.system.replicas;
            let logs: Vec<_> = microsim::run_replicas(&sys, config.horizon_macro, sys.replicas)?
                .into_iter()
                .map(|(_, log)| log)
                .collect();
            let report =
                recollision_stats(&logs, config.window_micro, &ratio_label(pair[0], pair[1]));
            w.write_record([
                eps.to_string(),
                report.label.clone(),
                report.fraction().to_string(),
                report.ci().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(json!({ "window_micro": config.window_micro }))
}
