//! Transition kernel of a single noisy particle in its cell (no neighbours).
//!
//! On the whole line a particle with speed `|p|` whose velocity flips at the
//! times of a rate-λ Poisson process has transition law
//!
//! ```text
//! ρ(q, p, q', p', t) = e^{-λt} Σ_{n≥0} (λt)^n / n! · ρ_n(q, p, q', p', t)
//! ```
//!
//! where `ρ_0` is a point mass on the free-flight image and, writing
//! `u = (q' - q) / (p t)` (so `(1 + u) / 2` is the fraction of time spent
//! moving in the initial direction),
//!
//! ```text
//! ρ_n = n! (1+u)^{n/2} (1-u)^{n/2-1} / (|p|t 2^n (n/2)! (n/2-1)!)              n ≥ 2 even, p' = p
//! ρ_n = n! (1+u)^{(n-1)/2} (1-u)^{(n-1)/2} / (|p|t 2^n ((n-1)/2)!^2)           n odd,      p' = -p
//! ```
//!
//! both supported on `|q' - q| <= |p| t`. Reflecting walls at 0 and 1 are
//! handled by the method of images: `q'` has preimages `q' + 2m` with the same
//! velocity and `2m + 2 - q'` with the opposite velocity.
//!
//! The cell kernel `f` thus splits into an atom of weight `e^{-λt}` at the
//! deterministic image and a bounded density `g` (the sum over `n ≥ 1`).

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Default tail mass of the flip-count series that may be dropped.
pub const DEFAULT_TRUNCATION: f64 = 1e-10;

/// Arguments of `f(q, p, q', p', t)` plus the flip rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelQuery {
    pub q: f64,
    pub p: f64,
    pub q_prime: f64,
    pub p_prime: f64,
    pub t: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    /// Mass `e^{-λt}` of the no-flip trajectory.
    pub atom_weight: f64,
    /// Where that mass sits: `(position, velocity)`.
    pub atom_point: (f64, f64),
    /// Density of the smooth part at `(q', p')`, per unit `q'`.
    pub smooth_density: f64,
}

/// Reduces `x` into `[0, 1]` by the period-2 triangle map. The flag is true
/// when an odd number of reflections occurred.
pub fn fold(x: f64) -> (f64, bool) {
    let r = x.rem_euclid(2.0);
    if r <= 1.0 {
        (r, false)
    } else {
        (2.0 - r, true)
    }
}

/// Free flight with elastic reflection at 0 and 1.
pub fn deterministic_flow(q: f64, p: f64, t: f64) -> (f64, f64) {
    let (x, reflected) = fold(q + p * t);
    (x, if reflected { -p } else { p })
}

/// Exponents of `(1+u)` and `(1-u)` in `ρ_n`, and whether the branch keeps
/// the initial velocity.
fn branch(n: usize) -> (f64, f64, bool) {
    if n.is_multiple_of(2) {
        ((n / 2) as f64, (n / 2) as f64 - 1.0, true)
    } else {
        (((n - 1) / 2) as f64, ((n - 1) / 2) as f64, false)
    }
}

/// `exponent * ln(base)` with `0 * ln(0) = 0`.
fn log_pow(base: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        0.0
    } else {
        exponent * base.ln()
    }
}

/// `ln(n! / (|p| t 2^n a! b!))` for the branch of `n`.
fn log_rho_coefficient(n: usize, speed: f64, t: f64) -> f64 {
    let (a, b, _) = branch(n);
    ln_gamma(n as f64 + 1.0)
        - (speed * t).ln()
        - n as f64 * std::f64::consts::LN_2
        - ln_gamma(a + 1.0)
        - ln_gamma(b + 1.0)
}

fn check_query(query: &KernelQuery) -> Result<()> {
    if !(query.t > 0.0 && query.t.is_finite()) {
        return Err(Error::Contract(format!(
            "kernel needs t > 0, got {}",
            query.t
        )));
    }
    if query.p == 0.0 {
        return Err(Error::Contract("kernel needs a nonzero velocity".into()));
    }
    let (s, s2) = (query.p.abs(), query.p_prime.abs());
    if (s - s2).abs() > 1e-12 * s {
        return Err(Error::Contract(format!(
            "|p'| = {s2} differs from |p| = {s}; energy is conserved"
        )));
    }
    Ok(())
}

/// The `n`-th term `ρ_n` of the free-line series, `n >= 1`. `q_prime` may be
/// any real number.
pub fn rho_n(n: usize, query: &KernelQuery) -> Result<f64> {
    if n == 0 {
        return Err(Error::Contract(
            "ρ_0 is a point mass; use the atom of kernel_f".into(),
        ));
    }
    check_query(query)?;
    let speed = query.p.abs();
    let dx = query.q_prime - query.q;
    if dx.abs() > speed * query.t {
        return Ok(0.0);
    }
    let (a, b, same) = branch(n);
    let keeps_sign = query.p_prime.signum() == query.p.signum();
    if same != keeps_sign {
        return Ok(0.0);
    }
    let u = (dx / (query.p * query.t)).clamp(-1.0, 1.0);
    Ok((log_rho_coefficient(n, speed, query.t) + log_pow(1.0 + u, a) + log_pow(1.0 - u, b)).exp())
}

/// Smallest `n` with `P(Poisson(mean) > n) < target`, by the Chernoff bound
/// `P(N >= m) <= e^{-mean} (e mean / m)^m` for `m > mean`.
pub fn poisson_cutoff(mean: f64, target: f64) -> usize {
    let mut n = mean.ceil().max(1.0) as usize;
    loop {
        let m = (n + 1) as f64;
        let log_bound = -mean + m * (1.0 + mean.ln() - m.ln());
        if mean == 0.0 || log_bound < target.ln() {
            return n;
        }
        n += 1;
    }
}

/// Kernel for fixed `(λ, |p|, t)` with the series weights precomputed.
#[derive(Debug, Clone)]
pub struct TelegraphKernel {
    lambda: f64,
    speed: f64,
    t: f64,
    /// `(log weight, exponent of 1+u, exponent of 1-u)` per kept term,
    /// split by branch.
    same_terms: Vec<(f64, f64, f64)>,
    flip_terms: Vec<(f64, f64, f64)>,
    n_max: usize,
}

impl TelegraphKernel {
    pub fn new(lambda: f64, speed: f64, t: f64, truncation: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Contract(format!("kernel needs t > 0, got {t}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Contract(format!("kernel needs λ > 0, got {lambda}")));
        }
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::Contract(format!(
                "kernel needs |p| > 0, got {speed}"
            )));
        }
        if !(truncation > 0.0 && truncation < 1.0) {
            return Err(Error::Contract(format!(
                "truncation must lie in (0, 1), got {truncation}"
            )));
        }
        let mean = lambda * t;
        let n_max = poisson_cutoff(mean, truncation);
        let mut same_terms = Vec::new();
        let mut flip_terms = Vec::new();
        for n in 1..=n_max {
            let log_poisson = -mean + n as f64 * mean.ln() - ln_gamma(n as f64 + 1.0);
            let (a, b, same) = branch(n);
            let term = (log_poisson + log_rho_coefficient(n, speed, t), a, b);
            if same {
                same_terms.push(term);
            } else {
                flip_terms.push(term);
            }
        }
        Ok(TelegraphKernel {
            lambda,
            speed,
            t,
            same_terms,
            flip_terms,
            n_max,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Largest flip count kept in the series.
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn atom_weight(&self) -> f64 {
        (-self.lambda * self.t).exp()
    }

    /// Smooth part of the free-line law at reduced displacement `u`.
    fn line_density(&self, u: f64, keeps_sign: bool) -> f64 {
        let terms = if keeps_sign {
            &self.same_terms
        } else {
            &self.flip_terms
        };
        let (lp, lm) = ((1.0 + u).ln(), (1.0 - u).ln());
        terms
            .iter()
            .map(|&(w, a, b)| {
                let x =
                    w + if a == 0.0 { 0.0 } else { a * lp } + if b == 0.0 { 0.0 } else { b * lm };
                x.exp()
            })
            .sum()
    }

    /// `g(q, σ|p|, q', σ'|p|, t)` for signs `σ, σ' = ±1`, `q, q'` in `[0, 1]`.
    pub fn smooth(&self, q: f64, sign: f64, q_prime: f64, sign_prime: f64) -> f64 {
        let p = sign * self.speed;
        let reach = self.speed * self.t;
        let mut total = 0.0;
        // preimages x = base + 2m of q' on the line, with the velocity sign
        // the free particle must carry there
        for (base, sign_at_x) in [(q_prime, sign_prime), (2.0 - q_prime, -sign_prime)] {
            let m_lo = ((q - reach - base) / 2.0).ceil() as i64;
            let m_hi = ((q + reach - base) / 2.0).floor() as i64;
            for m in m_lo..=m_hi {
                let x = base + 2.0 * m as f64;
                let u = ((x - q) / (p * self.t)).clamp(-1.0, 1.0);
                total += self.line_density(u, sign_at_x == sign);
            }
        }
        total
    }

    pub fn value(&self, q: f64, p: f64, q_prime: f64, p_prime: f64) -> KernelValue {
        KernelValue {
            atom_weight: self.atom_weight(),
            atom_point: deterministic_flow(q, p, self.t),
            smooth_density: self.smooth(q, p.signum(), q_prime, p_prime.signum()),
        }
    }

    /// Points in `[0, 1]` where `q' ↦ g(q, ·, q', ·)` is not smooth.
    pub fn breakpoints(&self, q: f64) -> [f64; 2] {
        let reach = self.speed * self.t;
        [fold(q + reach).0, fold(q - reach).0]
    }

    /// `∫_a^b g(q, σ, q', σ') dq'`.
    pub fn smooth_mass_between(&self, q: f64, sign: f64, sign_prime: f64, a: f64, b: f64) -> f64 {
        let gl = GaussLegendre::new(24);
        gl.integrate_split(a, b, &self.breakpoints(q), 2, |x| {
            self.smooth(q, sign, x, sign_prime)
        })
    }

    /// Total mass of the smooth part landing on velocity sign `σ'`.
    pub fn smooth_mass(&self, q: f64, sign: f64, sign_prime: f64) -> f64 {
        self.smooth_mass_between(q, sign, sign_prime, 0.0, 1.0)
    }

    /// Atom plus smooth mass over both final signs; 1 up to truncation.
    pub fn total_mass(&self, q: f64, sign: f64) -> f64 {
        self.atom_weight() + self.smooth_mass(q, sign, 1.0) + self.smooth_mass(q, sign, -1.0)
    }
}

/// Evaluates the cell kernel at one query.
pub fn kernel_f(query: &KernelQuery, truncation: f64) -> Result<KernelValue> {
    check_query(query)?;
    let kernel = TelegraphKernel::new(query.lambda, query.p.abs(), query.t, truncation)?;
    Ok(kernel.value(query.q, query.p, query.q_prime, query.p_prime))
}

/// Lower bound of the smooth kernel found on a grid, with the mixing rate it
/// implies.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingCertificate {
    pub t0: f64,
    pub alpha: f64,
    pub grid: usize,
    /// `-ln(1 - 2α) / t0`: the density is at least `α` on a shell of total
    /// measure 2, so total variation contracts by `1 - 2α` per `t0`. `None`
    /// when `α = 0`.
    pub decay_rate: Option<f64>,
}

/// Minimum of `g(x, x', t0)` over the grid of cell midpoints
/// `(i + 1/2) / grid` in both positions and both signs.
pub fn doeblin_scan(lambda: f64, speed: f64, t0: f64, grid: usize) -> Result<MixingCertificate> {
    if grid == 0 {
        return Err(Error::Contract("grid must be positive".into()));
    }
    let kernel = TelegraphKernel::new(lambda, speed, t0, DEFAULT_TRUNCATION)?;
    let points: Vec<f64> = (0..grid).map(|i| (i as f64 + 0.5) / grid as f64).collect();
    let mut alpha = f64::INFINITY;
    for &q in &points {
        for sign in [1.0, -1.0] {
            for &qp in &points {
                for sign_prime in [1.0, -1.0] {
                    alpha = alpha.min(kernel.smooth(q, sign, qp, sign_prime));
                }
            }
        }
    }
    let decay_rate = (alpha > 0.0).then(|| -(1.0 - (2.0 * alpha).min(1.0)).ln() / t0);
    Ok(MixingCertificate {
        t0,
        alpha,
        grid,
        decay_rate,
    })
}

/// Mass per `(position bin, velocity sign)` cell for one particle.
/// `mass[2 * bin]` is the `+` sign, `mass[2 * bin + 1]` the `-` sign.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDistribution {
    pub bins: usize,
    pub mass: Vec<f64>,
}

impl PhaseDistribution {
    pub fn point_mass(bins: usize, q: f64, sign: f64) -> Self {
        let mut mass = vec![0.0; 2 * bins];
        let bin = ((q * bins as f64) as usize).min(bins - 1);
        mass[2 * bin + usize::from(sign < 0.0)] = 1.0;
        PhaseDistribution { bins, mass }
    }

    /// Bin masses of the kernel row `f(x, ·, t)`, atom included.
    pub fn from_kernel_row(kernel: &TelegraphKernel, q: f64, sign: f64, bins: usize) -> Self {
        let mut mass = vec![0.0; 2 * bins];
        for i in 0..bins {
            let (a, b) = (i as f64 / bins as f64, (i + 1) as f64 / bins as f64);
            mass[2 * i] = kernel.smooth_mass_between(q, sign, 1.0, a, b);
            mass[2 * i + 1] = kernel.smooth_mass_between(q, sign, -1.0, a, b);
        }
        let (qa, pa) = deterministic_flow(q, sign * kernel.speed(), kernel.t());
        let bin = ((qa * bins as f64) as usize).min(bins - 1);
        mass[2 * bin + usize::from(pa < 0.0)] += kernel.atom_weight();
        PhaseDistribution { bins, mass }
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn l1_distance(&self, other: &PhaseDistribution) -> Result<f64> {
        if self.bins != other.bins {
            return Err(Error::Contract(
                "distributions use different binnings".into(),
            ));
        }
        Ok(self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (a - b).abs())
            .sum())
    }
}

/// Projection onto functions of the energy alone: for a single particle
/// with fixed energy, the position-uniform, sign-symmetric law.
pub fn project_energy_marginal(dist: &PhaseDistribution) -> Result<PhaseDistribution> {
    if dist.bins == 0 || dist.mass.len() != 2 * dist.bins {
        return Err(Error::Contract("malformed phase distribution".into()));
    }
    if dist.mass.iter().any(|m| *m < 0.0) || (dist.total() - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "distribution must be normalized, total mass {}",
            dist.total()
        )));
    }
    let cell = 1.0 / (2 * dist.bins) as f64;
    Ok(PhaseDistribution {
        bins: dist.bins,
        mass: vec![cell; 2 * dist.bins],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayRow {
    pub t: f64,
    pub l1_distance: f64,
    pub atom_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayTable {
    pub rows: Vec<DecayRow>,
    /// `c` from the least-squares fit `ln d(t) ≈ ln C - c t`.
    pub rate: f64,
}

/// L¹ distance between the law at time `t` started from `(q0, sign0 |p|)`
/// and its energy projection, for each `t` in `times`.
pub fn mixing_decay(
    lambda: f64,
    speed: f64,
    q0: f64,
    sign0: f64,
    times: &[f64],
) -> Result<DecayTable> {
    if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Contract(
            "times must be positive and increasing".into(),
        ));
    }
    // the projected law has density 1/2 per sign
    let reference = project_energy_marginal(&PhaseDistribution::point_mass(1, q0, sign0))?.mass[0];
    let gl = GaussLegendre::new(16);
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        let kernel = TelegraphKernel::new(lambda, speed, t, DEFAULT_TRUNCATION)?;
        let mut smooth_part = 0.0;
        for sign_prime in [1.0, -1.0] {
            smooth_part += gl.integrate_split(0.0, 1.0, &kernel.breakpoints(q0), 32, |x| {
                (kernel.smooth(q0, sign0, x, sign_prime) - reference).abs()
            });
        }
        let atom_weight = kernel.atom_weight();
        rows.push(DecayRow {
            t,
            l1_distance: atom_weight + smooth_part,
            atom_weight,
        });
    }
    let rate = if rows.len() >= 2 {
        let xs: Vec<f64> = rows.iter().map(|r| r.t).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.l1_distance.ln()).collect();
        -least_squares_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    Ok(DecayTable { rows, rate })
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
