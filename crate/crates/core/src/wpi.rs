//! Weak Poincare inequalities for `mu_sigma`.
//!
//! In one dimension the Hardy-type quantities
//!
//! ```text
//! B(x) = int_m^x e^{Phi} * int_x^inf e^{-Phi} / beta(int_x^inf e^{-Phi}),   x >= m
//! ```
//!
//! (and `b` mirrored below the median `m`) bound the L-infinity compensating
//! function by `12 max(B, b) beta(s)`. The Orlicz compensating function follows
//! from `alpha(r) = (c/4) beta((1/4) psi_hat^{-1}(r/2))`. On graphs, a
//! measure-capacity constant gives a one-point inequality directly, and
//! [`one_point_verify`] checks such inequalities on a random corpus.
//!
//! Everything involving `e^{V/sigma}` runs in log space.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::capacity::{Layout, WeightedGraph};
use crate::numerics::{integrate, log_add};
use crate::orlicz::{ln_psi_hat_inv, luxembourg_norm, psi_hat, DiscreteMeasure, NormKind, ORLICZ_ENTROPY_CONSTANT};
use crate::potential::Potential;
use crate::schedule::{tuning_from_log, ScheduleError};

/// Universal constant of the capacity route (`rho = 4` in the one-point proof).
pub const C_UNIV: f64 = 12.0;

#[derive(Debug, Error, PartialEq)]
pub enum WpiError {
    #[error("tail exponent alpha = {0} must lie in (0, 1]")]
    Alpha(f64),
    #[error("sigma = {0} must be positive")]
    Sigma(f64),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("potential must be one-dimensional, got dimension {0}")]
    Dimension(usize),
    #[error("Hardy profile overflowed even in log space")]
    Overflow,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// `beta(s) = scale * ln(1/s)^exponent`, frozen at its value at `s = 1/2`
/// for larger arguments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beta {
    pub exponent: f64,
    pub scale: f64,
}

impl Beta {
    pub fn constant(scale: f64) -> Self {
        Beta { exponent: 0.0, scale }
    }

    pub fn ln_value(&self, ln_s: f64) -> f64 {
        let ln_s = ln_s.min(-LN_2);
        if self.exponent == 0.0 {
            self.scale.ln()
        } else {
            self.scale.ln() + self.exponent * (-ln_s).ln()
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        self.ln_value(s.ln()).exp()
    }
}

/// The `beta` matched to tails `|x|^alpha`: exponent `4/alpha - 4`, scale 1.
pub fn beta_for_power_tail(alpha: f64) -> Result<Beta, WpiError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(WpiError::Alpha(alpha));
    }
    Ok(Beta { exponent: 4.0 / alpha - 4.0, scale: 1.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WpiReport {
    pub sigma: f64,
    /// Median node of the discretized measure.
    pub median: f64,
    pub median_index: usize,
    pub x: Vec<f64>,
    /// `ln B(x)` for `x >= m` (`-inf` elsewhere).
    pub ln_profile_upper: Vec<f64>,
    /// `ln b(x)` for `x <= m` (`-inf` elsewhere).
    pub ln_profile_lower: Vec<f64>,
    pub ln_b_sup_upper: f64,
    pub ln_b_sup_lower: f64,
    pub beta: Beta,
    pub c_univ: f64,
    /// Set by [`compensating_functions`].
    pub d_star: Option<f64>,
    pub one_point: Vec<(f64, f64)>,
}

impl WpiReport {
    pub fn b_profile_upper(&self) -> Vec<f64> {
        self.ln_profile_upper.iter().map(|v| v.exp()).collect()
    }

    pub fn b_profile_lower(&self) -> Vec<f64> {
        self.ln_profile_lower.iter().map(|v| v.exp()).collect()
    }

    pub fn b_sup_upper(&self) -> f64 {
        self.ln_b_sup_upper.exp()
    }

    pub fn b_sup_lower(&self) -> f64 {
        self.ln_b_sup_lower.exp()
    }

    pub fn ln_b_sup(&self) -> f64 {
        self.ln_b_sup_upper.max(self.ln_b_sup_lower)
    }

    /// `ln beta_sigma` as a function of `ln s`.
    pub fn ln_beta_fn_at_ln(&self, ln_s: f64) -> f64 {
        C_UNIV.ln() + self.ln_b_sup() + self.beta.ln_value(ln_s)
    }

    pub fn ln_beta_fn(&self, s: f64) -> f64 {
        self.ln_beta_fn_at_ln(s.ln())
    }

    /// L-infinity compensating function `12 max(B, b) beta(s)`.
    pub fn beta_fn(&self, s: f64) -> f64 {
        self.ln_beta_fn(s).exp()
    }

    pub fn ln_alpha_fn(&self, r: f64) -> f64 {
        let ln_s = ln_psi_hat_inv(0.5 * r) - 4f64.ln();
        (self.c_univ / 4.0).ln() + self.ln_beta_fn_at_ln(ln_s)
    }

    /// Orlicz compensating function `(c/4) beta_sigma((1/4) psi_hat^{-1}(r/2))`.
    pub fn alpha_fn(&self, r: f64) -> f64 {
        self.ln_alpha_fn(r).exp()
    }

    /// `ln C` in `beta_sigma = C exp(d*/sigma) beta`, once `d*` is attached.
    pub fn ln_prefactor(&self) -> Option<f64> {
        self.d_star.map(|d| C_UNIV.ln() + self.ln_b_sup() - d / self.sigma)
    }
}

/// Hardy profiles of `mu_sigma` on `n` equispaced nodes of `[lo, hi]`, by
/// trapezoidal prefix sums of `e^{-Phi}` and `e^{Phi}` in log space.
pub fn hardy_profile(
    p: &Potential,
    sigma: f64,
    beta: &Beta,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<WpiReport, WpiError> {
    if p.dimension != 1 {
        return Err(WpiError::Dimension(p.dimension));
    }
    if !(sigma > 0.0) {
        return Err(WpiError::Sigma(sigma));
    }
    if n < 3 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(WpiError::Grid(format!("[{lo}, {hi}] with {n} nodes")));
    }
    if !(beta.scale > 0.0 && beta.exponent >= 0.0) {
        return Err(WpiError::Parameter("beta must be positive and non-increasing".into()));
    }
    let h = (hi - lo) / (n - 1) as f64;
    let ln_half_h = (0.5 * h).ln();
    let x: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
    let phi: Vec<f64> = x.iter().map(|&xi| p.v1(xi) / sigma).collect();
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(WpiError::Overflow);
    }

    // left[i] = ln int_lo^{x_i} e^{-phi}, unnormalized
    let mut left = vec![f64::NEG_INFINITY; n];
    for i in 1..n {
        left[i] = log_add(left[i - 1], ln_half_h + log_add(-phi[i - 1], -phi[i]));
    }
    let ln_z = left[n - 1];
    let ln_rho: Vec<f64> = phi.iter().map(|v| -v - ln_z).collect();
    let mut cdf = vec![f64::NEG_INFINITY; n];
    let mut tail = vec![f64::NEG_INFINITY; n];
    for i in 1..n {
        cdf[i] = log_add(cdf[i - 1], ln_half_h + log_add(ln_rho[i - 1], ln_rho[i]));
    }
    for i in (0..n - 1).rev() {
        tail[i] = log_add(tail[i + 1], ln_half_h + log_add(ln_rho[i], ln_rho[i + 1]));
    }
    let km = (0..n).find(|&i| cdf[i] >= -LN_2).unwrap_or(n - 1);

    let ln_b = |ln_inner: f64, ln_mass: f64| -> f64 {
        if ln_inner == f64::NEG_INFINITY || ln_mass == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            ln_inner + ln_mass - beta.ln_value(ln_mass)
        }
    };

    let mut upper = vec![f64::NEG_INFINITY; n];
    let mut inner = f64::NEG_INFINITY;
    for i in km..n {
        if i > km {
            inner = log_add(inner, ln_half_h + log_add(-ln_rho[i - 1], -ln_rho[i]));
        }
        upper[i] = ln_b(inner, tail[i]);
    }
    let mut lower = vec![f64::NEG_INFINITY; n];
    let mut inner = f64::NEG_INFINITY;
    for i in (0..=km).rev() {
        if i < km {
            inner = log_add(inner, ln_half_h + log_add(-ln_rho[i + 1], -ln_rho[i]));
        }
        lower[i] = ln_b(inner, cdf[i]);
    }
    let sup = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (su, sl) = (sup(&upper), sup(&lower));
    if su.is_nan() || sl.is_nan() || su == f64::INFINITY || sl == f64::INFINITY {
        return Err(WpiError::Overflow);
    }
    Ok(WpiReport {
        sigma,
        median: x[km],
        median_index: km,
        x,
        ln_profile_upper: upper,
        ln_profile_lower: lower,
        ln_b_sup_upper: su,
        ln_b_sup_lower: sl,
        beta: *beta,
        c_univ: C_UNIV,
        d_star: None,
        one_point: Vec::new(),
    })
}

/// Attaches `d*` and the one-point pairs `(r, alpha(r))` on a fixed log grid
/// of `r` in `[1e-4, 1/2]`.
pub fn compensating_functions(mut report: WpiReport, d_star: f64) -> WpiReport {
    report.d_star = Some(d_star);
    report.one_point = (0..=12)
        .map(|k| {
            let r = 1e-4 * (5e3f64).powf(k as f64 / 12.0);
            (r, report.alpha_fn(r))
        })
        .collect();
    report
}

/// Least-squares line `ln alpha(r) = ln_c - exponent ln r` over a log grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    pub exponent: f64,
    pub ln_c: f64,
    /// Largest `|residual|` in log units.
    pub max_residual: f64,
}

pub fn alpha_power_fit(report: &WpiReport, r_lo: f64, r_hi: f64, points: usize) -> PowerFit {
    let pts: Vec<(f64, f64)> = (0..points)
        .map(|k| {
            let lr = r_lo.ln() + (r_hi / r_lo).ln() * k as f64 / (points - 1) as f64;
            (lr, report.ln_alpha_fn(lr.exp()))
        })
        .collect();
    let m = points as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let ln_c = my - slope * mx;
    let max_residual = pts.iter().map(|p| (p.1 - ln_c - slope * p.0).abs()).fold(0.0, f64::max);
    PowerFit { exponent: -slope, ln_c, max_residual }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnePoint {
    /// `(r, c_r)` for `Var <= c_r E + r osc^2`.
    pub linf: (f64, f64),
    /// `(r, c_r)` for `Var <= c_r E + r ||f - m_f||_phi^2`.
    pub orlicz: (f64, f64),
}

/// One-point inequalities implied by `Cap(A) >= C_kappa mu(A)` for
/// `mu(A) >= kappa`. The Orlicz `r` carries the factor `2 psi_hat(kappa)`.
pub fn one_point_from_capacity(kappa: f64, c_kappa: f64) -> Result<OnePoint, WpiError> {
    if !(kappa > 0.0 && kappa < 0.5) {
        return Err(WpiError::Parameter(format!("kappa = {kappa} must lie in (0, 1/2)")));
    }
    if !(c_kappa > 0.0) {
        return Err(WpiError::Parameter(format!("C_kappa = {c_kappa} must be positive")));
    }
    let c = C_UNIV / c_kappa;
    Ok(OnePoint { linf: (kappa, c), orlicz: (2.0 * psi_hat(kappa), c) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnePointNorm {
    /// `r osc(f)^2`.
    Linf,
    /// `r ||f - m_f||_phi^2` with `m_f` the lower median.
    Orlicz,
}

/// Slack of `Var(f) <= c_r E(f) + r N(f)^2` relative to the larger side, and
/// whether it counts as a violation (beyond round-off).
pub fn inequality_margin(
    g: &WeightedGraph,
    mu: &DiscreteMeasure,
    f: &[f64],
    r: f64,
    c_r: f64,
    norm: OnePointNorm,
) -> (f64, bool) {
    let var = mu.var(f);
    let energy = g.dirichlet(f);
    let n2 = match norm {
        OnePointNorm::Linf => {
            let (lo, hi) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            (hi - lo).powi(2)
        }
        OnePointNorm::Orlicz => {
            let m = mu.lower_median(f);
            let centred: Vec<f64> = f.iter().map(|v| v - m).collect();
            luxembourg_norm(&centred, mu, NormKind::Phi).powi(2)
        }
    };
    let rhs = c_r * energy + r * n2;
    let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs())).powi(2);
    let violated = var > rhs * (1.0 + 1e-9) + 1e-13 * scale;
    let margin = (rhs - var) / var.max(rhs).max(f64::MIN_POSITIVE);
    (margin, violated)
}

fn node_coordinates(g: &WeightedGraph) -> Vec<Vec<f64>> {
    let n = g.len();
    match g.layout {
        Layout::Path => (0..n).map(|i| vec![i as f64 / (n - 1).max(1) as f64]).collect(),
        Layout::Grid2d { nx, ny } => (0..n)
            .map(|i| vec![(i % nx) as f64 / (nx - 1).max(1) as f64, (i / nx) as f64 / (ny - 1).max(1) as f64])
            .collect(),
        Layout::General => {
            // rank of the node value stands in for a coordinate
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| g.values[a].total_cmp(&g.values[b]));
            let mut u = vec![vec![0.0]; n];
            for (rank, &i) in idx.iter().enumerate() {
                u[i][0] = rank as f64 / (n - 1).max(1) as f64;
            }
            u
        }
    }
}

/// Member `k` of the verification corpus: random Fourier fields, smooth and
/// sharp steps along random directions, and sublevel indicators of the node
/// values, each under a random affine map.
pub fn corpus_function(g: &WeightedGraph, coords: &[Vec<f64>], k: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    let d = coords.first().map_or(1, |c| c.len());
    let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let proj = |u: &[f64]| u.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>();
    let (pmin, pmax) =
        coords.iter().map(|u| proj(u)).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let mut f: Vec<f64> = match k % 4 {
        0 => {
            let modes: Vec<(f64, f64, usize)> = (1..=6)
                .map(|j| (rng.gen_range(-1.0..1.0) / j as f64, rng.gen_range(0.0..std::f64::consts::TAU), j))
                .collect();
            let axis = rng.gen_range(0..d);
            coords
                .iter()
                .map(|u| {
                    modes.iter().map(|&(a, ph, j)| a * (std::f64::consts::PI * j as f64 * u[axis] + ph).cos()).sum()
                })
                .collect()
        }
        1 => {
            let c = rng.gen_range(pmin..=pmax);
            let w = 10f64.powf(rng.gen_range(-3.0..-0.5)) * (pmax - pmin).max(1e-12);
            coords.iter().map(|u| ((proj(u) - c) / w).tanh()).collect()
        }
        2 => {
            let c = rng.gen_range(pmin..=pmax);
            coords.iter().map(|u| if proj(u) > c { 1.0 } else { 0.0 }).collect()
        }
        _ => {
            let (vmin, vmax) =
                g.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            // bias levels toward the low-lying wells
            let level = vmin + (vmax - vmin) * rng.gen::<f64>().powi(3);
            g.values.iter().map(|&v| if v <= level { 1.0 } else { 0.0 }).collect()
        }
    };
    let a: f64 = rng.gen_range(0.5..2.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let b: f64 = rng.gen_range(-1.0..1.0);
    for v in &mut f {
        *v = a * *v + b;
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyReport {
    pub trials: usize,
    pub violations: usize,
    /// Smallest relative slack seen (negative on violation).
    pub worst_margin: f64,
    pub worst_index: usize,
}

fn reduce(results: &[(f64, bool)]) -> VerifyReport {
    let mut rep = VerifyReport { trials: results.len(), violations: 0, worst_margin: f64::INFINITY, worst_index: 0 };
    for (i, &(m, v)) in results.iter().enumerate() {
        if v {
            rep.violations += 1;
        }
        if m < rep.worst_margin {
            rep.worst_margin = m;
            rep.worst_index = i;
        }
    }
    rep
}

/// Checks one `(r, c_r)` pair against `corpus_size` corpus functions on the
/// graph's measure. Deterministic for a given seed.
pub fn one_point_verify(
    g: &WeightedGraph,
    r: f64,
    c_r: f64,
    norm: OnePointNorm,
    corpus_size: usize,
    seed: u64,
) -> VerifyReport {
    let mu = graph_measure(g);
    let coords = node_coordinates(g);
    let results: Vec<(f64, bool)> = (0..corpus_size)
        .into_par_iter()
        .map(|k| {
            let f = corpus_function(g, &coords, k, seed);
            inequality_margin(g, &mu, &f, r, c_r, norm)
        })
        .collect();
    reduce(&results)
}

/// Checks explicitly supplied functions.
pub fn one_point_verify_functions(
    g: &WeightedGraph,
    r: f64,
    c_r: f64,
    norm: OnePointNorm,
    fs: &[Vec<f64>],
) -> VerifyReport {
    let mu = graph_measure(g);
    let results: Vec<(f64, bool)> = fs.iter().map(|f| inequality_margin(g, &mu, f, r, c_r, norm)).collect();
    reduce(&results)
}

fn graph_measure(g: &WeightedGraph) -> DiscreteMeasure {
    DiscreteMeasure::from_masses(&g.masses).expect("graph masses are positive")
}

/// Full weak inequality on the discretized measure: for each `r` in
/// `r_grid`, `Var <= alpha(r) E + r ||f - m_f||_phi^2` (Orlicz) and
/// `Var <= beta_sigma(r) E + r osc^2` (L-infinity) over the corpus.
pub fn full_wpi_check(
    report: &WpiReport,
    g: &WeightedGraph,
    r_grid: &[f64],
    corpus_size: usize,
    seed: u64,
) -> (VerifyReport, VerifyReport) {
    let mu = graph_measure(g);
    let coords = node_coordinates(g);
    let fs: Vec<Vec<f64>> = (0..corpus_size).into_par_iter().map(|k| corpus_function(g, &coords, k, seed)).collect();
    let run = |norm: OnePointNorm| -> VerifyReport {
        let results: Vec<(f64, bool)> = r_grid
            .par_iter()
            .flat_map_iter(|&r| {
                let c = match norm {
                    OnePointNorm::Orlicz => report.alpha_fn(r),
                    OnePointNorm::Linf => report.beta_fn(r),
                };
                let mu = &mu;
                fs.iter().map(move |f| inequality_margin(g, mu, f, r, c, norm))
            })
            .collect();
        reduce(&results)
    };
    (run(OnePointNorm::Orlicz), run(OnePointNorm::Linf))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub sigma: f64,
    pub ln_t: f64,
    pub r_t: f64,
    pub ln_alpha: f64,
    /// `sigma ln alpha_sigma(r_t)`.
    pub scaled: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    pub d_upper: f64,
    /// Last row satisfies `sigma ln alpha <= D*`.
    pub eventually_below: bool,
}

/// Along `sigma = c / ln t`, evaluates `alpha_sigma(r_t)` with `r_t` from the
/// tuning pair at `ln t = c / sigma`. Hardy profiles use `n` nodes of
/// `[lo, hi]`.
#[allow(clippy::too_many_arguments)]
pub fn critical_rate_check(
    p: &Potential,
    c: f64,
    sigmas: &[f64],
    d_upper: f64,
    beta: &Beta,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<RateTable, WpiError> {
    if sigmas.len() < 3 || sigmas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(WpiError::Parameter("need at least 3 strictly decreasing sigmas".into()));
    }
    if !(c > 0.0) {
        return Err(WpiError::Parameter(format!("rate c = {c} must be positive")));
    }
    let mut rows = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let ln_t = c / sigma;
        let tuning = tuning_from_log(ln_t, ORLICZ_ENTROPY_CONSTANT)?;
        let report = hardy_profile(p, sigma, beta, lo, hi, n)?;
        let ln_alpha = report.ln_alpha_fn(tuning.r);
        rows.push(RateRow { sigma, ln_t, r_t: tuning.r, ln_alpha, scaled: sigma * ln_alpha });
    }
    let eventually_below = rows.last().is_some_and(|r| r.scaled <= d_upper);
    Ok(RateTable { rows, d_upper, eventually_below })
}

/// `mu_sigma([x, inf)) / (e^{-Phi(x)} / Phi'(x))`, the quantity bounded by
/// the Gaussian-type tail estimates. Needs `V'(x) > 0`.
pub fn tail_ratio(p: &Potential, sigma: f64, x: f64) -> Result<f64, WpiError> {
    if p.dimension != 1 {
        return Err(WpiError::Dimension(p.dimension));
    }
    if !(sigma > 0.0) {
        return Err(WpiError::Sigma(sigma));
    }
    let dv = p.dv1(x);
    if !(dv > 0.0) {
        return Err(WpiError::Parameter(format!("V'({x}) = {dv} is not positive")));
    }
    let v0 = p.v1(x);
    let mut len = sigma / dv;
    while (p.v1(x + len) - v0) / sigma < 60.0 {
        len *= 2.0;
        if len > 1e12 {
            return Err(WpiError::Parameter("tail does not decay".into()));
        }
    }
    let f = |y: f64| (-(p.v1(y) - v0) / sigma).exp();
    // split so the adaptive rule sees the initial boundary layer
    let mut total = 0.0;
    let mut a = x;
    let mut w = sigma / dv;
    while a < x + len {
        let b = (a + w).min(x + len);
        total += integrate(&f, a, b, 1e-10, 0.0).0;
        a = b;
        w *= 2.0;
    }
    Ok(total * dv / sigma)
}
