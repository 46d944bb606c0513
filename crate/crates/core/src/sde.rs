//! Euler-Maruyama ensembles for `dX = sqrt(sigma(t)) dB - (1/2) grad V(X) dt`.
//!
//! Each trajectory owns a ChaCha8 stream selected by its index, so results do
//! not depend on how trajectories are scheduled across threads. Positions are
//! kept at every record time and all statistics are reduced from them in
//! trajectory order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::potential::Potential;
use crate::schedule::Schedule;

/// Reflecting wall for every coordinate.
pub const WALL: f64 = 1e3;

#[derive(Debug, Error, PartialEq)]
pub enum SdeError {
    #[error("invalid run: {0}")]
    Invalid(String),
    #[error("state became non-finite at t = {t} in trajectory {trajectory}")]
    NonFinite { t: f64, trajectory: usize },
    #[error("time {0} was not recorded")]
    NotRecorded(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSampler {
    Point(Vec<f64>),
    UniformBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// 1D cell density: pick a cell by weight, then a uniform point inside it.
    Cells {
        lo: f64,
        h: f64,
        weights: Vec<f64>,
    },
}

impl InitSampler {
    fn dimension(&self) -> usize {
        match self {
            InitSampler::Point(x) => x.len(),
            InitSampler::UniformBox { lo, .. } => lo.len(),
            InitSampler::Cells { .. } => 1,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, cumulative: &[f64]) -> Vec<f64> {
        match self {
            InitSampler::Point(x) => x.clone(),
            InitSampler::UniformBox { lo, hi } => lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..=*b)).collect(),
            InitSampler::Cells { lo, h, .. } => {
                let u: f64 = rng.gen::<f64>() * cumulative.last().copied().unwrap_or(1.0);
                let k = cumulative.partition_point(|c| *c <= u).min(cumulative.len() - 1);
                vec![lo + (k as f64 + rng.gen::<f64>()) * h]
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub potential: Potential,
    pub schedule: Schedule,
    pub n_traj: usize,
    pub t0: f64,
    pub t_end: f64,
    /// Base step; the step at time `t` is `dt * max(1, t)^dt_exponent`.
    pub dt: f64,
    pub dt_exponent: f64,
    pub seed: u64,
    pub init: InitSampler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    /// Probability per bin (first coordinate, out-of-range samples in the edge bins).
    pub mass: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub dimension: usize,
    pub n_traj: usize,
    pub argmin: Vec<f64>,
    /// `positions[k][i * dimension + j]`: coordinate `j` of trajectory `i` at record `k`.
    pub positions: Vec<Vec<f64>>,
    pub mean_v: Vec<f64>,
    pub mean_v2: Vec<f64>,
    /// Standard errors of `mean_v` and `mean_v2`.
    pub se_v: Vec<f64>,
    pub se_v2: Vec<f64>,
    pub radii: Vec<f64>,
    /// `success[k][r]`: fraction within `radii[r]` of the argmin at record `k`.
    pub success: Vec<Vec<f64>>,
    pub histograms: Vec<Histogram>,
    /// Number of reflections at the wall over all trajectories.
    pub wall_incidents: u64,
    /// `dt * max|grad V|/2` over visited states, a stability diagnostic.
    pub max_drift_step: f64,
    pub steps_per_trajectory: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observables {
    pub radii: Vec<f64>,
    /// `(lo, hi, bins)` for the first-coordinate histogram.
    pub histogram: (f64, f64, usize),
}

impl Default for Observables {
    fn default() -> Self {
        Observables { radii: vec![0.2, 0.5], histogram: (-3.0, 3.0, 60) }
    }
}

/// Step sizes from `t0` to `t_end` landing exactly on every record time.
fn time_grid(run: &EnsembleRun, record_times: &[f64]) -> Vec<f64> {
    let mut ts = vec![run.t0];
    let mut t = run.t0;
    let mut next = 0;
    while t < run.t_end {
        while next < record_times.len() && record_times[next] <= t {
            next += 1;
        }
        let target = if next < record_times.len() { record_times[next].min(run.t_end) } else { run.t_end };
        let dt = run.dt * t.max(1.0).powf(run.dt_exponent);
        t = if t + 1.5 * dt >= target { target } else { t + dt };
        ts.push(t);
    }
    ts
}

/// Runs the ensemble and records observables at `record_times`.
pub fn simulate_ensemble(
    run: &EnsembleRun,
    record_times: &[f64],
    obs: &Observables,
) -> Result<ObservableSeries, SdeError> {
    let d = run.potential.dimension;
    if run.n_traj == 0 {
        return Err(SdeError::Invalid("n_traj must be at least 1".into()));
    }
    if !(run.dt > 0.0) || !(run.dt_exponent >= 0.0 && run.dt_exponent <= 1.0) || !(run.t_end >= run.t0) {
        return Err(SdeError::Invalid("need dt > 0, dt_exponent in [0, 1], t_end >= t0".into()));
    }
    if run.init.dimension() != d {
        return Err(SdeError::Invalid("initial sampler dimension differs from the potential".into()));
    }
    if record_times.windows(2).any(|w| w[1] < w[0]) || record_times.iter().any(|t| *t < run.t0 || *t > run.t_end) {
        return Err(SdeError::Invalid("record times must be sorted inside [t0, t_end]".into()));
    }
    if obs.histogram.2 == 0 || !(obs.histogram.1 > obs.histogram.0) {
        return Err(SdeError::Invalid("histogram needs bins > 0 and hi > lo".into()));
    }
    let cumulative: Vec<f64> = match &run.init {
        InitSampler::Cells { weights, .. } => {
            if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) {
                return Err(SdeError::Invalid("cell weights must be non-negative".into()));
            }
            weights
                .iter()
                .scan(0.0, |acc, w| {
                    *acc += w;
                    Some(*acc)
                })
                .collect()
        }
        _ => Vec::new(),
    };
    let grid = time_grid(run, record_times);
    let sigmas: Vec<f64> = grid.iter().map(|t| run.schedule.sigma(*t)).collect();
    let n_rec = record_times.len();

    struct Path {
        at_records: Vec<f64>,
        incidents: u64,
        drift: f64,
    }

    let paths: Vec<Result<Path, SdeError>> = (0..run.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
            rng.set_stream(i as u64);
            let mut x = run.init.sample(&mut rng, &cumulative);
            let mut out = Vec::with_capacity(n_rec * d);
            let mut incidents = 0u64;
            let mut drift: f64 = 0.0;
            let mut rec = 0;
            let push = |t: f64, x: &[f64], out: &mut Vec<f64>, rec: &mut usize| {
                while *rec < n_rec && record_times[*rec] <= t {
                    out.extend_from_slice(x);
                    *rec += 1;
                }
            };
            push(grid[0], &x, &mut out, &mut rec);
            for k in 0..grid.len() - 1 {
                let dt = grid[k + 1] - grid[k];
                let g = run.potential.gradient(&x);
                let amp = (sigmas[k] * dt).sqrt();
                let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                drift = drift.max(0.5 * dt * gnorm);
                for j in 0..d {
                    let xi: f64 = if amp > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
                    let mut y = x[j] - 0.5 * g[j] * dt + amp * xi;
                    if !y.is_finite() {
                        return Err(SdeError::NonFinite { t: grid[k + 1], trajectory: i });
                    }
                    if y.abs() > WALL {
                        incidents += 1;
                        y = (2.0 * WALL - y.abs()).clamp(-WALL, WALL) * y.signum();
                    }
                    x[j] = y;
                }
                push(grid[k + 1], &x, &mut out, &mut rec);
            }
            Ok(Path { at_records: out, incidents, drift })
        })
        .collect();

    let mut positions = vec![Vec::with_capacity(run.n_traj * d); n_rec];
    let mut wall_incidents = 0;
    let mut max_drift_step: f64 = 0.0;
    for p in paths {
        let p = p?;
        for (pos, x) in positions.iter_mut().zip(p.at_records.chunks_exact(d)) {
            pos.extend_from_slice(x);
        }
        wall_incidents += p.incidents;
        max_drift_step = max_drift_step.max(p.drift);
    }

    let n = run.n_traj as f64;
    let argmin = run.potential.argmin.clone();
    let (hlo, hhi, bins) = obs.histogram;
    let mut series = ObservableSeries {
        times: record_times.to_vec(),
        dimension: d,
        n_traj: run.n_traj,
        argmin: argmin.clone(),
        positions: Vec::new(),
        mean_v: Vec::with_capacity(n_rec),
        mean_v2: Vec::with_capacity(n_rec),
        se_v: Vec::with_capacity(n_rec),
        se_v2: Vec::with_capacity(n_rec),
        radii: obs.radii.clone(),
        success: Vec::with_capacity(n_rec),
        histograms: Vec::with_capacity(n_rec),
        wall_incidents,
        max_drift_step,
        steps_per_trajectory: grid.len() - 1,
    };
    for pos in &positions {
        let vals: Vec<f64> = pos.chunks(d).map(|x| run.potential.value(x)).collect();
        let (m1, s1) = mean_se(vals.iter().copied(), n);
        let (m2, s2) = mean_se(vals.iter().map(|v| v * v), n);
        series.mean_v.push(m1);
        series.se_v.push(s1);
        series.mean_v2.push(m2);
        series.se_v2.push(s2);
        series.success.push(obs.radii.iter().map(|&r| within(pos, d, &argmin, r)).collect());
        let mut mass = vec![0.0; bins];
        for x in pos.chunks(d) {
            let b = ((x[0] - hlo) / (hhi - hlo) * bins as f64).floor();
            let b = if b.is_nan() { 0 } else { (b.max(0.0) as usize).min(bins - 1) };
            mass[b] += 1.0 / n;
        }
        series.histograms.push(Histogram { lo: hlo, hi: hhi, mass });
    }
    series.positions = positions;
    Ok(series)
}

fn mean_se(it: impl Iterator<Item = f64> + Clone, n: f64) -> (f64, f64) {
    let mean = it.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    let var = it.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn within(pos: &[f64], d: usize, centre: &[f64], r: f64) -> f64 {
    let n = pos.len() / d;
    let hits =
        pos.chunks(d).filter(|x| x.iter().zip(centre).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= r).count();
    hits as f64 / n as f64
}

fn record_index(series: &ObservableSeries, t: f64) -> Result<usize, SdeError> {
    series.times.iter().position(|s| (s - t).abs() <= 1e-12 * (1.0 + t.abs())).ok_or(SdeError::NotRecorded(t))
}

/// Fraction of trajectories with `|X_t - argmin| <= radius`.
pub fn success_fraction(series: &ObservableSeries, radius: f64, t: f64) -> Result<f64, SdeError> {
    let k = record_index(series, t)?;
    Ok(within(&series.positions[k], series.dimension, &series.argmin, radius))
}

/// Ensemble mean and standard error of `g(X_t)`.
pub fn mean_of(series: &ObservableSeries, t: f64, g: impl Fn(&[f64]) -> f64) -> Result<(f64, f64), SdeError> {
    let k = record_index(series, t)?;
    let vals: Vec<f64> = series.positions[k].chunks(series.dimension).map(g).collect();
    Ok(mean_se(vals.iter().copied(), series.n_traj as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::EquilibriumMeasure;
    use crate::potential::make_builtin;

    fn run(p: Potential, s: Schedule, n: usize, t_end: f64, dt: f64, init: InitSampler) -> EnsembleRun {
        EnsembleRun { potential: p, schedule: s, n_traj: n, t0: 0.0, t_end, dt, dt_exponent: 0.0, seed: 7, init }
    }

    #[test]
    fn noiseless_run_follows_gradient_flow() {
        let p = make_builtin("quadratic", &[]).unwrap();
        let r = run(p, Schedule::constant(0.0).unwrap(), 3, 2.0, 1e-3, InitSampler::Point(vec![1.5]));
        let rec = [0.5, 1.0, 2.0];
        let s = simulate_ensemble(&r, &rec, &Observables::default()).unwrap();
        for (k, t) in rec.iter().enumerate() {
            let exact = 1.5 * (-t / 2.0f64).exp();
            for x in &s.positions[k] {
                assert!((x - exact).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn stationary_histogram_matches_gaussian() {
        let sigma = 0.5;
        let p = make_builtin("quadratic", &[]).unwrap();
        let r = run(p.clone(), Schedule::constant(sigma).unwrap(), 10_000, 12.0, 0.01, InitSampler::Point(vec![0.0]));
        let obs = Observables { radii: vec![], histogram: (-2.5, 2.5, 20) };
        let s = simulate_ensemble(&r, &[12.0], &obs).unwrap();
        let mu = EquilibriumMeasure::new(&p, sigma).unwrap();
        let mut chi2 = 0.0;
        for b in 0..20 {
            let a = -2.5 + 0.25 * b as f64;
            let (lo, hi) = (if b == 0 { -50.0 } else { a }, if b == 19 { 50.0 } else { a + 0.25 });
            let expected = 10_000.0 * (mu.cdf(hi) - mu.cdf(lo));
            let observed = 10_000.0 * s.histograms[0].mass[b];
            chi2 += (observed - expected).powi(2) / expected;
        }
        // 99.9% quantile of chi^2 with 19 degrees of freedom
        assert!(chi2 < 43.82, "chi2 = {chi2}");
        assert_eq!(s.wall_incidents, 0);
        let total: f64 = s.histograms[0].mass.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn seed_determinism_across_thread_counts() {
        let p = make_builtin("tilted_double_well_1d", &[0.3, 1.0]).unwrap();
        let r = run(
            p,
            Schedule::logarithmic(1.0, std::f64::consts::E).unwrap(),
            300,
            2.0,
            1e-2,
            InitSampler::Point(vec![-1.0]),
        );
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate_ensemble(&r, &[1.0, 2.0], &Observables::default()).unwrap());
        let b = four.install(|| simulate_ensemble(&r, &[1.0, 2.0], &Observables::default()).unwrap());
        assert_eq!(a, b);
        let mut r2 = r.clone();
        r2.seed = 8;
        let c = simulate_ensemble(&r2, &[1.0, 2.0], &Observables::default()).unwrap();
        assert_ne!(a.positions, c.positions);
    }

    #[test]
    fn success_fraction_examples() {
        let p = make_builtin("quadratic", &[2.0]).unwrap();
        let r = run(p, Schedule::constant(1.0).unwrap(), 50, 1.0, 0.01, InitSampler::Point(vec![0.0, 0.0]));
        let s = simulate_ensemble(&r, &[0.0, 1.0], &Observables::default()).unwrap();
        assert_eq!(success_fraction(&s, 1e-12, 0.0).unwrap(), 1.0);
        assert_eq!(success_fraction(&s, f64::INFINITY, 1.0).unwrap(), 1.0);
        assert_eq!(success_fraction(&s, 0.1, 0.5), Err(SdeError::NotRecorded(0.5)));
    }

    #[test]
    fn euler_maruyama_is_first_order_on_a_deterministic_flow() {
        let p = make_builtin("tilted_double_well_1d", &[0.3, 1.0]).unwrap();
        let at = |dt: f64| {
            let r = run(p.clone(), Schedule::constant(0.0).unwrap(), 1, 1.0, dt, InitSampler::Point(vec![0.3]));
            simulate_ensemble(&r, &[1.0], &Observables::default()).unwrap().mean_v[0]
        };
        let (a, b, c) = (at(0.02), at(0.01), at(0.005));
        let ratio = (a - b) / (b - c);
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn geometric_steps_hit_record_times() {
        let p = make_builtin("quadratic", &[]).unwrap();
        let mut r = run(
            p,
            Schedule::logarithmic(1.0, std::f64::consts::E).unwrap(),
            4,
            1000.0,
            1e-2,
            InitSampler::Point(vec![0.0]),
        );
        r.dt_exponent = 1.0;
        let grid = time_grid(&r, &[3.0, 100.0]);
        assert!(grid.contains(&3.0) && grid.contains(&100.0));
        assert_eq!(*grid.last().unwrap(), 1000.0);
        assert!(grid.len() < 2000);
    }

    #[test]
    fn cell_sampler_respects_weights() {
        let p = make_builtin("quadratic", &[]).unwrap();
        let init = InitSampler::Cells { lo: 0.0, h: 1.0, weights: vec![0.0, 1.0, 0.0] };
        let r = run(p, Schedule::constant(0.0).unwrap(), 100, 0.0, 0.1, init);
        let s = simulate_ensemble(&r, &[0.0], &Observables::default()).unwrap();
        assert!(s.positions[0].iter().all(|x| (1.0..=2.0).contains(x)));
    }
}
