//! One-dimensional Fokker-Planck evolution `dm/dt = (1/2) d/dx (sigma(t) dm/dx + V' m)`
//! with exponentially fitted (Scharfetter-Gummel) face fluxes and implicit
//! Euler steps. At constant `sigma` the discretized `mu_sigma` is an exact
//! stationary vector of the scheme.
//!
//! Along the way it records the free energy `I_t`, the pseudo-entropy `J_t`,
//! total variation to `mu_t`, and the moments of `V`.

use thiserror::Error;

use crate::numerics::{log_sum_exp, solve_tridiagonal};
use crate::potential::Potential;
use crate::schedule::Schedule;

#[derive(Debug, Error, PartialEq)]
pub enum FpeError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid initial density: {0}")]
    Initial(String),
    #[error("record times must be sorted inside [t0, t_end]")]
    RecordTimes,
    #[error("negative density {value:e} in cell {cell} at t = {t}")]
    Negative { t: f64, cell: usize, value: f64 },
    #[error("boundary cell holds mass {mass:e} at t = {t}: box too small")]
    BoxTooSmall { t: f64, mass: f64 },
    #[error("potential must be one-dimensional")]
    Dimension,
    #[error("index {0} has no recorded neighbours on both sides")]
    NotInterior(usize),
    #[error("invalid step options: {0}")]
    Options(String),
}

/// `n` equal cells on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FpeGrid {
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
    /// Cell centres.
    pub x: Vec<f64>,
}

impl FpeGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self, FpeError> {
        if n < 3 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(FpeError::Grid(format!("need n >= 3 and lo < hi, got n = {n}, [{lo}, {hi}]")));
        }
        let h = (hi - lo) / n as f64;
        Ok(FpeGrid { lo, hi, h, x: (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect() })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Discretized `mu_sigma` as a density per cell (`sum m h = 1`).
    pub fn equilibrium(&self, p: &Potential, sigma: f64) -> Vec<f64> {
        let lr = ln_equilibrium(self, &values(p, self), sigma);
        lr.iter().map(|l| l.exp()).collect()
    }

    /// Gaussian cell density, renormalized on the grid.
    pub fn gaussian(&self, mean: f64, var: f64) -> Vec<f64> {
        let lw: Vec<f64> = self.x.iter().map(|x| -(x - mean).powi(2) / (2.0 * var)).collect();
        let lz = log_sum_exp(&lw) + self.h.ln();
        lw.iter().map(|l| (l - lz).exp()).collect()
    }
}

fn values(p: &Potential, g: &FpeGrid) -> Vec<f64> {
    g.x.iter().map(|&x| p.v1(x)).collect()
}

/// `ln` of the discretized `mu_sigma` density.
fn ln_equilibrium(g: &FpeGrid, v: &[f64], sigma: f64) -> Vec<f64> {
    let lw: Vec<f64> = v.iter().map(|v| -v / sigma).collect();
    let lz = log_sum_exp(&lw) + g.h.ln();
    lw.iter().map(|l| l - lz).collect()
}

/// `z / (e^z - 1)`.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-10 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    /// Initial time step.
    pub dt0: f64,
    /// Steps grow like `growth * t` once that exceeds `dt0`; 0 keeps `dt0`.
    pub growth: f64,
    /// Hard cap on the step.
    pub dt_max: f64,
    /// Cap `cfl * h^2 / sigma(t)`; `None` disables it.
    pub cfl: Option<f64>,
    /// Abort when a boundary cell holds more than this mass.
    pub boundary_tol: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { dt0: 1e-3, growth: 0.0, dt_max: f64::INFINITY, cfl: Some(5.0), boundary_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityTrajectory {
    pub grid: FpeGrid,
    pub values: Vec<f64>,
    pub times: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `d(1/sigma)/dt` at each record time.
    pub d_inv_sigma: Vec<f64>,
    /// `t + t_offset`, the argument of the logarithms in the schedule.
    pub clock: Vec<f64>,
    /// Density per cell at each record time.
    pub m: Vec<Vec<f64>>,
    /// `ln` of the discretized `mu_t` density at each record time.
    pub ln_mu: Vec<Vec<f64>>,
    pub free_energy: Vec<f64>,
    pub pseudo_entropy: Vec<f64>,
    pub tv: Vec<f64>,
    /// Largest `|sum m h - 1|` change over one step.
    pub max_mass_drift: f64,
    pub steps: usize,
}

impl DensityTrajectory {
    /// `f = m / mu` at record `k` (may overflow to `inf` where `mu` underflows).
    pub fn f(&self, k: usize) -> Vec<f64> {
        self.m[k].iter().zip(&self.ln_mu[k]).map(|(m, l)| m / l.exp()).collect()
    }

    /// Mass of `{x : lo <= x <= hi}` at record `k`, by cell centres.
    pub fn mass_in(&self, k: usize, lo: f64, hi: f64) -> f64 {
        self.grid.x.iter().zip(&self.m[k]).filter(|(x, _)| **x >= lo && **x <= hi).map(|(_, m)| m * self.grid.h).sum()
    }

    pub fn mean_of(&self, k: usize, g: impl Fn(f64) -> f64) -> f64 {
        self.grid.x.iter().zip(&self.m[k]).map(|(x, m)| g(*x) * m * self.grid.h).sum()
    }
}

/// Evolves `m0` from `t0` to `t_end`, stepping exactly onto every record time.
#[allow(clippy::too_many_arguments)]
pub fn evolve(
    p: &Potential,
    s: &Schedule,
    grid: &FpeGrid,
    m0: &[f64],
    t0: f64,
    t_end: f64,
    record_times: &[f64],
    opts: &StepOptions,
) -> Result<DensityTrajectory, FpeError> {
    if p.dimension != 1 {
        return Err(FpeError::Dimension);
    }
    let n = grid.len();
    let h = grid.h;
    if m0.len() != n || m0.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
        return Err(FpeError::Initial("density must be finite, non-negative, one value per cell".into()));
    }
    let mass0: f64 = m0.iter().sum::<f64>() * h;
    if (mass0 - 1.0).abs() > 1e-8 {
        return Err(FpeError::Initial(format!("mass {mass0} is not 1")));
    }
    if record_times.windows(2).any(|w| w[1] < w[0])
        || record_times.iter().any(|t| *t < t0 || *t > t_end)
        || !(t_end >= t0)
    {
        return Err(FpeError::RecordTimes);
    }
    if !(opts.dt0 > 0.0 && opts.dt_max > 0.0 && opts.growth >= 0.0) {
        return Err(FpeError::Options("dt0, dt_max must be positive and growth >= 0".into()));
    }
    let v = values(p, grid);
    let dv: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    let mut traj = DensityTrajectory {
        grid: grid.clone(),
        values: v.clone(),
        times: Vec::new(),
        sigma: Vec::new(),
        d_inv_sigma: Vec::new(),
        clock: Vec::new(),
        m: Vec::new(),
        ln_mu: Vec::new(),
        free_energy: Vec::new(),
        pseudo_entropy: Vec::new(),
        tv: Vec::new(),
        max_mass_drift: 0.0,
        steps: 0,
    };
    let mut m = m0.to_vec();
    let mut t = t0;
    let mut next_rec = 0;
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut mass = mass0;
    loop {
        while next_rec < record_times.len() && record_times[next_rec] <= t {
            record(&mut traj, s, grid, &v, &m, record_times[next_rec]);
            next_rec += 1;
        }
        if t >= t_end {
            break;
        }
        let (sig_now, _) = s.sigma_at(t);
        let mut dt = opts.dt0.max(opts.growth * t).min(opts.dt_max);
        if let Some(cfl) = opts.cfl {
            if sig_now > 0.0 {
                dt = dt.min(cfl * h * h / sig_now);
            }
        }
        let mut target = t_end;
        if next_rec < record_times.len() {
            target = target.min(record_times[next_rec]);
        }
        if t + dt >= target || t + 1.5 * dt > target {
            dt = target - t;
        }
        let t_next = if t + dt >= target { target } else { t + dt };
        let dt = t_next - t;
        let sig = s.sigma(0.5 * (t + t_next));
        // F_{i+1/2} = a (B(dV/sig) m_i - B(-dV/sig) m_{i+1}), a = sig / (2h)
        let a = dt / h * sig / (2.0 * h);
        for i in 0..n {
            diag[i] = 1.0;
            sub[i] = 0.0;
            sup[i] = 0.0;
        }
        for i in 0..n - 1 {
            let z = dv[i] / sig;
            let bp = bernoulli(z);
            let bm = bernoulli(-z);
            diag[i] += a * bp;
            sup[i] = -a * bm;
            diag[i + 1] += a * bm;
            sub[i + 1] = -a * bp;
        }
        let next = solve_tridiagonal(&sub, &diag, &sup, &m);
        let top = next.iter().fold(0.0f64, |x, y| x.max(*y));
        for (i, val) in next.into_iter().enumerate() {
            if val < 0.0 {
                if val < -1e-13 * top {
                    return Err(FpeError::Negative { t: t_next, cell: i, value: val });
                }
                m[i] = 0.0;
            } else {
                m[i] = val;
            }
        }
        let new_mass = m.iter().sum::<f64>() * h;
        traj.max_mass_drift = traj.max_mass_drift.max((new_mass - mass).abs());
        mass = new_mass;
        let edge = m[0].max(m[n - 1]) * h;
        if edge > opts.boundary_tol {
            return Err(FpeError::BoxTooSmall { t: t_next, mass: edge });
        }
        t = t_next;
        traj.steps += 1;
    }
    Ok(traj)
}

fn record(traj: &mut DensityTrajectory, s: &Schedule, g: &FpeGrid, v: &[f64], m: &[f64], t: f64) {
    let (sig, dinv) = s.sigma_at(t);
    let h = g.h;
    let (ln_mu, i_t, j_t, tv) = if sig > 0.0 {
        let ln_mu = ln_equilibrium(g, v, sig);
        let mut i_t = 0.0;
        let mut j_t = 0.0;
        let mut tv = 0.0;
        for (mi, lr) in m.iter().zip(&ln_mu) {
            tv += (mi - lr.exp()).abs() * h;
            if *mi < 1e-300 {
                continue;
            }
            let lf = mi.ln() - lr;
            i_t += h * mi * lf;
            // ln(e + f) with f = e^lf, ||f||_1 = 1
            let l = if lf > 1.0 {
                lf + (std::f64::consts::E * (-lf).exp()).ln_1p()
            } else {
                (std::f64::consts::E + lf.exp()).ln()
            };
            j_t += h * mi * l * l;
        }
        (ln_mu, i_t.max(0.0), j_t, 0.5 * tv)
    } else {
        (vec![f64::NEG_INFINITY; m.len()], f64::INFINITY, f64::INFINITY, f64::NAN)
    };
    traj.times.push(t);
    traj.sigma.push(sig);
    traj.d_inv_sigma.push(dinv);
    traj.clock.push(t + s.t_offset);
    traj.m.push(m.to_vec());
    traj.ln_mu.push(ln_mu);
    traj.free_energy.push(i_t);
    traj.pseudo_entropy.push(j_t);
    traj.tv.push(tv);
}

pub fn free_energy_series(traj: &DensityTrajectory) -> Vec<f64> {
    traj.free_energy.clone()
}

pub fn pseudo_entropy_series(traj: &DensityTrajectory) -> Vec<f64> {
    traj.pseudo_entropy.clone()
}

/// Both sides of the free-energy derivative identity at record `k`: a
/// three-point difference of the recorded `I` and
/// `sigma'/sigma^2 int V (1 - f) dmu - 2 sigma int |grad sqrt f|^2 dmu`.
pub fn entropy_derivative_terms(traj: &DensityTrajectory, k: usize) -> Result<(f64, f64), FpeError> {
    if k == 0 || k + 1 >= traj.times.len() {
        return Err(FpeError::NotInterior(k));
    }
    let (t0, t1, t2) = (traj.times[k - 1], traj.times[k], traj.times[k + 1]);
    let (i0, i1, i2) = (traj.free_energy[k - 1], traj.free_energy[k], traj.free_energy[k + 1]);
    let (ha, hb) = (t1 - t0, t2 - t1);
    let fd = -hb / (ha * (ha + hb)) * i0 + (hb - ha) / (ha * hb) * i1 + ha / (hb * (ha + hb)) * i2;

    let h = traj.grid.h;
    let sig = traj.sigma[k];
    let m = &traj.m[k];
    let lr = &traj.ln_mu[k];
    let v = &traj.values;
    // int V (1 - f) dmu = int V (mu - m)
    let drift: f64 = v.iter().zip(m).zip(lr).map(|((v, m), l)| h * v * (l.exp() - m)).sum();
    // sigma'/sigma^2 = -d(1/sigma)/dt
    let mut dissipation = 0.0;
    for i in 0..m.len() - 1 {
        // logarithmic mean of the neighbouring mu densities, the scheme's face weight
        let (a, b) = (lr[i], lr[i + 1]);
        let ln_w = if (a - b).abs() < 1e-12 {
            a
        } else {
            let (hi, lo) = if a > b { (a, b) } else { (b, a) };
            hi + (-(lo - hi).exp_m1()).ln() - (hi - lo).ln()
        };
        // (sqrt f_{i+1} - sqrt f_i)^2 w = (sqrt(m_{i+1} w/mu_{i+1}) - sqrt(m_i w/mu_i))^2
        let s1 = (m[i + 1] * (ln_w - b).exp()).sqrt();
        let s0 = (m[i] * (ln_w - a).exp()).sqrt();
        dissipation += (s1 - s0).powi(2) / h;
    }
    let rhs = -traj.d_inv_sigma[k] * drift - 2.0 * sig * dissipation;
    Ok((fd, rhs))
}

/// `|dI/dt - RHS| / (1 + |RHS|)` at record `k`.
pub fn entropy_derivative_residual(traj: &DensityTrajectory, k: usize) -> Result<f64, FpeError> {
    let (fd, rhs) = entropy_derivative_terms(traj, k)?;
    Ok((fd - rhs).abs() / (1.0 + rhs.abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentCurve {
    /// `int V^p dm_t` per record time.
    pub moment: Vec<f64>,
    /// `moment / (sigma^p ln(s)^p (ln ln s)^{3p})`, `s = t + t_offset`;
    /// `NaN` where `ln ln s <= 0`.
    pub envelope_ratio: Vec<f64>,
}

pub fn moment_curve(traj: &DensityTrajectory, p: i32) -> MomentCurve {
    let h = traj.grid.h;
    let moment: Vec<f64> =
        traj.m.iter().map(|m| m.iter().zip(&traj.values).map(|(m, v)| h * m * v.powi(p)).sum()).collect();
    let envelope_ratio = moment
        .iter()
        .zip(&traj.sigma)
        .zip(&traj.clock)
        .map(|((mo, sig), s)| {
            let l = s.ln();
            let ll = l.ln();
            if ll > 0.0 {
                mo / (sig * l * ll.powi(3)).powi(p)
            } else {
                f64::NAN
            }
        })
        .collect();
    MomentCurve { moment, envelope_ratio }
}
