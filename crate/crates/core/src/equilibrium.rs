//! The equilibrium measure `mu_sigma = exp(-V/sigma) / Z_sigma`: partition
//! function, its Laplace asymptote, medians, moments and tail masses.

use thiserror::Error;

use crate::numerics::{bisect, composite_rule, integrate};
use crate::potential::Potential;

#[derive(Debug, Error, PartialEq)]
pub enum EquilibriumError {
    #[error("sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("integrand exp(-V/sigma) = {0:e} at the domain boundary; domain too small")]
    DomainTooSmall(f64),
    #[error("quadrature supports dimension 1 or 2, got {0}")]
    Dimension(usize),
    #[error("hessian at the minimum is singular or indefinite (det = {0})")]
    SingularHessian(f64),
    #[error("probe is not integrable: {0}")]
    NotIntegrable(String),
    #[error("median is only defined in dimension 1")]
    MedianDimension,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Adaptive Gauss-Kronrod (1D).
    Adaptive,
    /// Composite Gauss-Legendre tensor rule (2D).
    Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Panels per axis for the tensor rule; ignored by the adaptive rule.
    pub nodes: usize,
    pub scheme: Scheme,
}

/// exp(-V/sigma) below this fraction of its peak counts as negligible.
const DECAY: f64 = 1e-16;

impl QuadratureSpec {
    /// Smallest box (per side, by doubling) on which `exp(-V/sigma) < 1e-16`
    /// at the boundary.
    pub fn auto(p: &Potential, sigma: f64) -> Result<Self, EquilibriumError> {
        if !(sigma > 0.0) {
            return Err(EquilibriumError::BadSigma(sigma));
        }
        let d = p.dimension;
        if d > 2 {
            return Err(EquilibriumError::Dimension(d));
        }
        let cut = -DECAY.ln() * sigma;
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for k in 0..d {
            for (dir, slot) in [(-1.0, &mut lo), (1.0, &mut hi)] {
                let mut w = 0.25 * sigma.sqrt().max(1e-3);
                let probe = |w: f64| {
                    let mut x = p.argmin.clone();
                    x[k] += dir * w;
                    if d == 1 {
                        p.value(&x)
                    } else {
                        // worst value over the face line through the argmin axis
                        let other = 1 - k;
                        let mut vmin = f64::INFINITY;
                        for j in -20..=20 {
                            let mut y = x.clone();
                            y[other] += w * j as f64 / 20.0;
                            vmin = vmin.min(p.value(&y));
                        }
                        vmin
                    }
                };
                let mut guard = 0;
                while probe(w) < cut && guard < 200 {
                    w *= 2.0;
                    guard += 1;
                }
                slot[k] = p.argmin[k] + dir * w;
            }
        }
        if d == 2 {
            // square up so both axes share the outer extent
            for k in 0..2 {
                let w = (p.argmin[k] - lo[k]).max(hi[k] - p.argmin[k]);
                lo[k] = p.argmin[k] - w;
                hi[k] = p.argmin[k] + w;
            }
        }
        Ok(QuadratureSpec { lo, hi, nodes: 96, scheme: if d == 1 { Scheme::Adaptive } else { Scheme::Tensor } })
    }
}

fn boundary_integrand(p: &Potential, sigma: f64, spec: &QuadratureSpec) -> f64 {
    match p.dimension {
        1 => (-p.v1(spec.lo[0]) / sigma).exp().max((-p.v1(spec.hi[0]) / sigma).exp()),
        _ => {
            let mut worst: f64 = 0.0;
            let n = 64;
            for i in 0..=n {
                let s = i as f64 / n as f64;
                let xs = spec.lo[0] + s * (spec.hi[0] - spec.lo[0]);
                let ys = spec.lo[1] + s * (spec.hi[1] - spec.lo[1]);
                for pt in [[xs, spec.lo[1]], [xs, spec.hi[1]], [spec.lo[0], ys], [spec.hi[0], ys]] {
                    worst = worst.max((-p.value(&pt) / sigma).exp());
                }
            }
            worst
        }
    }
}

/// Integrates `g(x) exp(-V(x)/sigma)` over the quadrature box.
fn weighted_integral(p: &Potential, sigma: f64, spec: &QuadratureSpec, g: &dyn Fn(&[f64]) -> f64) -> f64 {
    match p.dimension {
        1 => {
            let f = |x: f64| {
                let w = (-p.v1(x) / sigma).exp();
                if w == 0.0 {
                    0.0
                } else {
                    g(&[x]) * w
                }
            };
            integrate_split(&f, spec.lo[0], spec.hi[0], p.argmin[0])
        }
        _ => {
            let (xs, wx) = composite_rule(spec.lo[0], spec.hi[0], spec.nodes, 8);
            let (ys, wy) = composite_rule(spec.lo[1], spec.hi[1], spec.nodes, 8);
            let mut total = 0.0;
            for (x, a) in xs.iter().zip(&wx) {
                let mut row = 0.0;
                for (y, b) in ys.iter().zip(&wy) {
                    let pt = [*x, *y];
                    let w = (-p.value(&pt) / sigma).exp();
                    if w != 0.0 {
                        row += b * g(&pt) * w;
                    }
                }
                total += a * row;
            }
            total
        }
    }
}

/// Adaptive quadrature with a breakpoint at `mid` when it lies inside.
fn integrate_split(f: &dyn Fn(f64) -> f64, a: f64, b: f64, mid: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if mid > a && mid < b {
        integrate(f, a, mid, 1e-13, 1e-300).0 + integrate(f, mid, b, 1e-13, 1e-300).0
    } else {
        integrate(f, a, b, 1e-13, 1e-300).0
    }
}

/// `Z_sigma = integral of exp(-V/sigma)` over the quadrature box.
pub fn partition_function(p: &Potential, sigma: f64, spec: &QuadratureSpec) -> Result<f64, EquilibriumError> {
    if !(sigma > 0.0) {
        return Err(EquilibriumError::BadSigma(sigma));
    }
    if p.dimension > 2 {
        return Err(EquilibriumError::Dimension(p.dimension));
    }
    let edge = boundary_integrand(p, sigma, spec);
    if edge > 1e-14 {
        return Err(EquilibriumError::DomainTooSmall(edge));
    }
    Ok(weighted_integral(p, sigma, spec, &|_| 1.0))
}

/// `(2 pi sigma)^(d/2) / sqrt(det Hess V(argmin))`. The `(sigma / 2 pi)^(d/2)`
/// normalisation sometimes quoted for this asymptote disagrees with direct
/// quadrature by orders of magnitude; this one matches it.
pub fn laplace_asymptote(p: &Potential, sigma: f64) -> Result<f64, EquilibriumError> {
    if !(sigma > 0.0) {
        return Err(EquilibriumError::BadSigma(sigma));
    }
    let det = determinant(&p.hessian_at_min, p.dimension);
    if !(det > 0.0) {
        return Err(EquilibriumError::SingularHessian(det));
    }
    let d = p.dimension as f64;
    Ok((2.0 * std::f64::consts::PI * sigma).powf(d / 2.0) / det.sqrt())
}

fn determinant(a: &[f64], n: usize) -> f64 {
    let mut m = a.to_vec();
    let mut det = 1.0;
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs())).unwrap();
        if m[piv * n + c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            for k in 0..n {
                m.swap(piv * n + k, c * n + k);
            }
            det = -det;
        }
        det *= m[c * n + c];
        for r in c + 1..n {
            let f = m[r * n + c] / m[c * n + c];
            for k in c..n {
                m[r * n + k] -= f * m[c * n + k];
            }
        }
    }
    det
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumMeasure {
    pub potential: Potential,
    pub sigma: f64,
    pub z: f64,
    pub quadrature_spec: QuadratureSpec,
}

impl EquilibriumMeasure {
    /// Builds `mu_sigma` on the automatically sized domain.
    pub fn new(p: &Potential, sigma: f64) -> Result<Self, EquilibriumError> {
        let spec = QuadratureSpec::auto(p, sigma)?;
        Self::with_spec(p, sigma, spec)
    }

    pub fn with_spec(p: &Potential, sigma: f64, spec: QuadratureSpec) -> Result<Self, EquilibriumError> {
        let z = partition_function(p, sigma, &spec)?;
        Ok(EquilibriumMeasure { potential: p.clone(), sigma, z, quadrature_spec: spec })
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        (-self.potential.value(x) / self.sigma).exp() / self.z
    }

    /// `mu_sigma((-inf, x])` in 1D.
    pub fn cdf(&self, x: f64) -> f64 {
        let p = &self.potential;
        let s = self.sigma;
        let f = |y: f64| (-p.v1(y) / s).exp();
        let lo = self.quadrature_spec.lo[0];
        let hi = self.quadrature_spec.hi[0];
        let x = x.clamp(lo, hi);
        integrate_split(&f, lo, x, p.argmin[0]) / self.z
    }

    /// Integral of `g` against `mu_sigma`.
    pub fn expectation(&self, g: &dyn Fn(&[f64]) -> f64) -> Result<f64, EquilibriumError> {
        let v = weighted_integral(&self.potential, self.sigma, &self.quadrature_spec, g) / self.z;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EquilibriumError::NotIntegrable(format!("integral evaluated to {v}")))
        }
    }
}

pub enum Probe<'a> {
    Median,
    Moment(&'a dyn Fn(&[f64]) -> f64),
    /// `mu_sigma(|x - argmin| > r)`.
    TailMass(f64),
}

pub fn measure_statistics(m: &EquilibriumMeasure, probe: Probe<'_>) -> Result<f64, EquilibriumError> {
    match probe {
        Probe::Median => {
            if m.potential.dimension != 1 {
                return Err(EquilibriumError::MedianDimension);
            }
            let lo = m.quadrature_spec.lo[0];
            let hi = m.quadrature_spec.hi[0];
            Ok(bisect(|x| m.cdf(x) - 0.5, lo, hi, 1e-13))
        }
        Probe::Moment(g) => m.expectation(g),
        Probe::TailMass(r) => {
            let c = m.potential.argmin.clone();
            if m.potential.dimension == 1 {
                let p = &m.potential;
                let s = m.sigma;
                let f = |y: f64| (-p.v1(y) / s).exp();
                let lo = m.quadrature_spec.lo[0];
                let hi = m.quadrature_spec.hi[0];
                let left = integrate_split(&f, lo, (c[0] - r).min(hi), f64::NAN);
                let right = integrate_split(&f, (c[0] + r).max(lo), hi, f64::NAN);
                Ok(((left + right) / m.z).clamp(0.0, 1.0))
            } else {
                let out = |x: &[f64]| {
                    let d2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
                    if d2 > r * r {
                        1.0
                    } else {
                        0.0
                    }
                };
                Ok(m.expectation(&out)?.clamp(0.0, 1.0))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::make_builtin;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_partition_functions() {
        let p = make_builtin("quadratic", &[]).unwrap();
        let spec = QuadratureSpec::auto(&p, 0.01).unwrap();
        let z = partition_function(&p, 0.01, &spec).unwrap();
        assert!((z - (2.0 * PI * 0.01).sqrt()).abs() < 1e-12);
        let p2 = make_builtin("quadratic", &[2.0]).unwrap();
        let spec = QuadratureSpec::auto(&p2, 0.01).unwrap();
        let z = partition_function(&p2, 0.01, &spec).unwrap();
        assert!((z / (2.0 * PI * 0.01) - 1.0).abs() < 1e-10, "{z}");
    }

    #[test]
    fn small_domain_is_rejected() {
        let p = make_builtin("quadratic", &[]).unwrap();
        let spec = QuadratureSpec { lo: vec![-0.1], hi: vec![0.1], nodes: 0, scheme: Scheme::Adaptive };
        assert!(matches!(partition_function(&p, 0.01, &spec), Err(EquilibriumError::DomainTooSmall(_))));
    }

    #[test]
    fn alpha_tail_partition_is_stable_under_domain_doubling() {
        let p = make_builtin("alpha_tail_1d", &[0.5]).unwrap();
        let spec = QuadratureSpec::auto(&p, 0.1).unwrap();
        let z1 = partition_function(&p, 0.1, &spec).unwrap();
        let wide = QuadratureSpec { lo: vec![2.0 * spec.lo[0]], hi: vec![2.0 * spec.hi[0]], ..spec };
        let z2 = partition_function(&p, 0.1, &wide).unwrap();
        assert!(z1.is_finite() && z1 > 0.0);
        assert!((z1 - z2).abs() < 1e-6);
    }

    #[test]
    fn laplace_asymptote_examples() {
        let p = make_builtin("quadratic", &[]).unwrap();
        assert!((laplace_asymptote(&p, 0.01).unwrap() - 0.2506628274631).abs() < 1e-12);
        let q = make_builtin("quadratic", &[2.0, 1.0, 4.0]).unwrap();
        assert!((laplace_asymptote(&q, 0.3).unwrap() - PI * 0.3).abs() < 1e-14);
        let a = make_builtin("anharmonic_1d", &[1.0]).unwrap();
        let m = EquilibriumMeasure::new(&a, 1e-3).unwrap();
        let ratio = m.z / laplace_asymptote(&a, 1e-3).unwrap();
        assert!((0.98..=1.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn statistics_examples() {
        let p = make_builtin("quadratic", &[]).unwrap();
        let m = EquilibriumMeasure::new(&p, 0.1).unwrap();
        assert!(measure_statistics(&m, Probe::Median).unwrap().abs() < 1e-10);
        let e = measure_statistics(&m, Probe::Moment(&|x| 0.5 * x[0] * x[0])).unwrap();
        assert!((e - 0.05).abs() < 1e-12);
        let mut prev = 1.0;
        for s in [0.5, 0.2, 0.1, 0.05, 0.02] {
            let m = EquilibriumMeasure::new(&p, s).unwrap();
            let t = measure_statistics(&m, Probe::TailMass(0.5)).unwrap();
            assert!(t < prev);
            prev = t;
        }
        // exact Gaussian tail: erfc(r / sqrt(2 sigma))
        let m = EquilibriumMeasure::new(&p, 0.25).unwrap();
        let t = measure_statistics(&m, Probe::TailMass(0.5)).unwrap();
        assert!((t - 0.3173105078629141).abs() < 1e-10);
    }

    #[test]
    fn partition_ratio_tends_to_power_of_two() {
        for (name, params) in [("tilted_double_well_1d", vec![0.3]), ("quadratic", vec![2.0])] {
            let p = make_builtin(name, &params).unwrap();
            let d = p.dimension as f64;
            for s in [1e-2, 1e-3, 1e-4] {
                let z1 = EquilibriumMeasure::new(&p, s).unwrap().z;
                let z2 = EquilibriumMeasure::new(&p, 2.0 * s).unwrap().z;
                assert!((z2 / z1 / 2f64.powf(d / 2.0) - 1.0).abs() < 0.02, "{name} {s}");
            }
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let p = make_builtin("multiwell_2d", &[]).unwrap();
        let m = EquilibriumMeasure::new(&p, 0.2).unwrap();
        let one = m.expectation(&|_| 1.0).unwrap();
        assert!((one - 1.0).abs() < 1e-6);
    }
}
