//! Potentials `V` with gradient, Laplacian and Hessian, plus grid checks of the
//! standing hypotheses (unique non-degenerate minimum, growth, bounded gradient,
//! eventually non-positive Laplacian).
//!
//! Every built-in is shifted so that `V(argmin) = 0`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PotentialError {
    #[error("unknown potential: {0}")]
    UnknownName(String),
    #[error("invalid parameters for {name}: {reason}")]
    InvalidParams { name: String, reason: String },
    #[error("global minimum is degenerate or not unique: {0}")]
    DegenerateMinimum(String),
    #[error("point has dimension {got}, potential has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite potential output at {0:?}")]
    NonFinite(Vec<f64>),
}

/// A Gaussian dip `depth * exp(-|x - center|^2 / (2 width^2))` subtracted from
/// the background of `multiwell_2d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dip {
    pub center: [f64; 2],
    pub depth: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Quadratic { lambdas: Vec<f64> },
    Anharmonic { quartic: f64 },
    TiltedDoubleWell { height: f64, tilt: f64, shift: f64 },
    AlphaTail { alpha: f64, a: f64, b: f64, k: f64 },
    Multiwell2d { slope: f64, dips: Vec<Dip>, shift: f64 },
}

/// Value, gradient and Laplacian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Eval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub laplacian: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    name: String,
    kind: Kind,
    pub dimension: usize,
    pub argmin: Vec<f64>,
    /// Row-major `dimension x dimension`.
    pub hessian_at_min: Vec<f64>,
    pub tail_exponent: Option<f64>,
    /// Exponent `m_V` used by the growth check `V(x) >= ln(|x|)^m_V - C`.
    pub growth_exponent: f64,
}

/// Builds a registered potential.
///
/// * `quadratic`: `[]`, `[d]` or `[d, l_1, .., l_d]`; `V = sum l_i x_i^2 / 2`.
/// * `anharmonic_1d`: `[q]`, `V = x^2/2 + q x^4`, `q >= 0`.
/// * `tilted_double_well_1d`: `[tilt]` or `[tilt, height]`;
///   `V = height (x^2 - 1)^2 - tilt x`, shifted. Needs `tilt != 0`, `height > 0`.
/// * `alpha_tail_1d`: `[alpha]`, `alpha` in `(0, 1]`; `|x|^alpha` for `|x| >= 1`
///   joined C^2 to an even polynomial core.
/// * `multiwell_2d`: `[slope, (cx, cy, depth, width)*]`; background
///   `slope * sqrt(1 + |x|^2)` minus Gaussian dips. Empty params give a
///   two-dip default.
pub fn make_builtin(name: &str, params: &[f64]) -> Result<Potential, PotentialError> {
    let bad = |reason: &str| PotentialError::InvalidParams { name: name.to_string(), reason: reason.to_string() };
    if params.iter().any(|p| !p.is_finite()) {
        return Err(bad("parameters must be finite"));
    }
    match name {
        "quadratic" => {
            let (dim, lambdas) = match params.len() {
                0 => (1, vec![1.0]),
                1 => {
                    let d = params[0];
                    if d < 1.0 || d.fract() != 0.0 {
                        return Err(bad("dimension must be a positive integer"));
                    }
                    (d as usize, vec![1.0; d as usize])
                }
                n => {
                    let d = params[0];
                    if d < 1.0 || d.fract() != 0.0 || n != d as usize + 1 {
                        return Err(bad("expected [d, l_1, .., l_d]"));
                    }
                    (d as usize, params[1..].to_vec())
                }
            };
            if lambdas.iter().any(|&l| l <= 0.0) {
                return Err(PotentialError::DegenerateMinimum("quadratic curvatures must be positive".into()));
            }
            let mut hess = vec![0.0; dim * dim];
            for i in 0..dim {
                hess[i * dim + i] = lambdas[i];
            }
            Ok(Potential {
                name: name.into(),
                kind: Kind::Quadratic { lambdas },
                dimension: dim,
                argmin: vec![0.0; dim],
                hessian_at_min: hess,
                tail_exponent: None,
                growth_exponent: 2.0,
            })
        }
        "anharmonic_1d" => {
            let q = params.first().copied().unwrap_or(1.0);
            if params.len() > 1 || q < 0.0 {
                return Err(bad("expected [q] with q >= 0"));
            }
            Ok(Potential {
                name: name.into(),
                kind: Kind::Anharmonic { quartic: q },
                dimension: 1,
                argmin: vec![0.0],
                hessian_at_min: vec![1.0],
                tail_exponent: None,
                growth_exponent: 2.0,
            })
        }
        "tilted_double_well_1d" => {
            if params.is_empty() || params.len() > 2 {
                return Err(bad("expected [tilt] or [tilt, height]"));
            }
            let tilt = params[0];
            let height = params.get(1).copied().unwrap_or(1.0);
            if height <= 0.0 {
                return Err(bad("height must be positive"));
            }
            if tilt == 0.0 {
                return Err(PotentialError::DegenerateMinimum("zero tilt gives two global minima".into()));
            }
            let raw = |x: f64| height * (x * x - 1.0).powi(2) - tilt * x;
            // Critical points solve 4h x^3 - 4h x - tilt = 0.
            let roots = cubic_real_roots(4.0 * height, 0.0, -4.0 * height, -tilt);
            let xmin =
                roots.iter().copied().min_by(|a, b| raw(*a).total_cmp(&raw(*b))).expect("a cubic has a real root");
            let shift = raw(xmin);
            let curv = 12.0 * height * xmin * xmin - 4.0 * height;
            if curv <= 0.0 {
                return Err(PotentialError::DegenerateMinimum(format!("curvature {curv} at x = {xmin}")));
            }
            Ok(Potential {
                name: name.into(),
                kind: Kind::TiltedDoubleWell { height, tilt, shift },
                dimension: 1,
                argmin: vec![xmin],
                hessian_at_min: vec![curv],
                tail_exponent: None,
                growth_exponent: 2.0,
            })
        }
        "alpha_tail_1d" => {
            if params.len() != 1 {
                return Err(bad("expected [alpha]"));
            }
            let alpha = params[0];
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(bad("alpha must lie in (0, 1]"));
            }
            // Core a x^2 + b x^4 matches value, slope and curvature of x^alpha - k at 1.
            let b = alpha * (alpha - 2.0) / 8.0;
            let a = alpha * (4.0 - alpha) / 4.0;
            let k = 1.0 - a - b;
            Ok(Potential {
                name: name.into(),
                kind: Kind::AlphaTail { alpha, a, b, k },
                dimension: 1,
                argmin: vec![0.0],
                hessian_at_min: vec![2.0 * a],
                tail_exponent: Some(alpha),
                growth_exponent: 1.0 + alpha,
            })
        }
        "multiwell_2d" => {
            let (slope, dips) = if params.is_empty() {
                (
                    0.5,
                    vec![
                        Dip { center: [0.0, 0.0], depth: 2.0, width: 0.6 },
                        Dip { center: [2.0, 0.0], depth: 1.5, width: 0.5 },
                    ],
                )
            } else {
                if !(params.len() - 1).is_multiple_of(4) || params.len() < 5 {
                    return Err(bad("expected [slope, (cx, cy, depth, width)+]"));
                }
                let dips: Vec<Dip> =
                    params[1..].chunks(4).map(|c| Dip { center: [c[0], c[1]], depth: c[2], width: c[3] }).collect();
                (params[0], dips)
            };
            if slope <= 0.0 {
                return Err(bad("background slope must be positive"));
            }
            if dips.iter().any(|d| d.width <= 0.0 || d.depth < 0.0) {
                return Err(bad("dip widths must be positive and depths non-negative"));
            }
            let mut p = Potential {
                name: name.into(),
                kind: Kind::Multiwell2d { slope, dips, shift: 0.0 },
                dimension: 2,
                argmin: vec![0.0, 0.0],
                hessian_at_min: vec![0.0; 4],
                tail_exponent: Some(1.0),
                growth_exponent: 2.0,
            };
            let xmin = p.locate_minimum_2d()?;
            let shift = p.value(&xmin);
            if let Kind::Multiwell2d { shift: s, .. } = &mut p.kind {
                *s = shift;
            }
            p.hessian_at_min = p.hessian(&xmin);
            p.argmin = xmin;
            let h = &p.hessian_at_min;
            if !(h[0] > 0.0 && h[0] * h[3] - h[1] * h[2] > 0.0) {
                return Err(PotentialError::DegenerateMinimum(format!("hessian {h:?} at the minimum")));
            }
            Ok(p)
        }
        other => Err(PotentialError::UnknownName(other.to_string())),
    }
}

/// Real roots of `a x^3 + b x^2 + c x + d` (trigonometric form when three
/// roots are real).
fn cubic_real_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let (b, c, d) = (b / a, c / a, d / a);
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let disc = q * q / 4.0 + p * p * p / 27.0;
    let mut roots = if disc > 0.0 {
        let s = disc.sqrt();
        vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt() + shift]
    } else {
        let r = (-p / 3.0).sqrt();
        let phi = (3.0 * q / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0).acos();
        (0..3).map(|k| 2.0 * r * (phi / 3.0 - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift).collect()
    };
    // One Newton polish per root.
    for x in roots.iter_mut() {
        let f = ((*x + b) * *x + c) * *x + d;
        let df = (3.0 * *x + 2.0 * b) * *x + c;
        if df != 0.0 {
            *x -= f / df;
        }
    }
    roots
}

impl Potential {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// `V(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Quadratic { lambdas } => 0.5 * lambdas.iter().zip(x).map(|(l, xi)| l * xi * xi).sum::<f64>(),
            Kind::Multiwell2d { slope, dips, shift } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let mut v = slope * (1.0 + r2).sqrt();
                for dip in dips {
                    let dx = x[0] - dip.center[0];
                    let dy = x[1] - dip.center[1];
                    v -= dip.depth * (-(dx * dx + dy * dy) / (2.0 * dip.width * dip.width)).exp();
                }
                v - shift
            }
            _ => self.v1(x[0]),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Quadratic { lambdas } => lambdas.iter().zip(x).map(|(l, xi)| l * xi).collect(),
            Kind::Multiwell2d { slope, dips, .. } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let s = (1.0 + r2).sqrt();
                let mut g = vec![slope * x[0] / s, slope * x[1] / s];
                for dip in dips {
                    let dx = x[0] - dip.center[0];
                    let dy = x[1] - dip.center[1];
                    let w2 = dip.width * dip.width;
                    let e = dip.depth * (-(dx * dx + dy * dy) / (2.0 * w2)).exp();
                    g[0] += e * dx / w2;
                    g[1] += e * dy / w2;
                }
                g
            }
            _ => vec![self.dv1(x[0])],
        }
    }

    /// Row-major Hessian.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Quadratic { lambdas } => {
                let d = lambdas.len();
                let mut h = vec![0.0; d * d];
                for i in 0..d {
                    h[i * d + i] = lambdas[i];
                }
                h
            }
            Kind::Multiwell2d { slope, dips, .. } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let s = (1.0 + r2).sqrt();
                let s3 = s * s * s;
                let mut h = [
                    slope * (1.0 + x[1] * x[1]) / s3,
                    -slope * x[0] * x[1] / s3,
                    -slope * x[0] * x[1] / s3,
                    slope * (1.0 + x[0] * x[0]) / s3,
                ];
                for dip in dips {
                    let d = [x[0] - dip.center[0], x[1] - dip.center[1]];
                    let w2 = dip.width * dip.width;
                    let e = dip.depth * (-(d[0] * d[0] + d[1] * d[1]) / (2.0 * w2)).exp();
                    for i in 0..2 {
                        for j in 0..2 {
                            let delta = if i == j { 1.0 } else { 0.0 };
                            h[i * 2 + j] += e * (delta / w2 - d[i] * d[j] / (w2 * w2));
                        }
                    }
                }
                h.to_vec()
            }
            _ => vec![self.d2v1(x[0])],
        }
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        let h = self.hessian(x);
        (0..self.dimension).map(|i| h[i * self.dimension + i]).sum()
    }

    /// Value, gradient and Laplacian, rejecting wrong dimensions and non-finite output.
    pub fn evaluate(&self, x: &[f64]) -> Result<Eval, PotentialError> {
        if x.len() != self.dimension {
            return Err(PotentialError::DimensionMismatch { expected: self.dimension, got: x.len() });
        }
        let e = Eval { value: self.value(x), gradient: self.gradient(x), laplacian: self.laplacian(x) };
        if !e.value.is_finite() || !e.laplacian.is_finite() || e.gradient.iter().any(|g| !g.is_finite()) {
            return Err(PotentialError::NonFinite(x.to_vec()));
        }
        Ok(e)
    }

    /// One-dimensional value; for `d > 1` potentials evaluates along the first axis.
    pub fn v1(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Quadratic { lambdas } => 0.5 * lambdas[0] * x * x,
            Kind::Anharmonic { quartic } => 0.5 * x * x + quartic * x.powi(4),
            Kind::TiltedDoubleWell { height, tilt, shift } => height * (x * x - 1.0).powi(2) - tilt * x - shift,
            Kind::AlphaTail { alpha, a, b, k } => {
                let ax = x.abs();
                if ax >= 1.0 {
                    ax.powf(*alpha) - k
                } else {
                    let x2 = x * x;
                    a * x2 + b * x2 * x2
                }
            }
            Kind::Multiwell2d { .. } => self.value(&[x, 0.0]),
        }
    }

    pub fn dv1(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Quadratic { lambdas } => lambdas[0] * x,
            Kind::Anharmonic { quartic } => x + 4.0 * quartic * x.powi(3),
            Kind::TiltedDoubleWell { height, tilt, .. } => 4.0 * height * x * (x * x - 1.0) - tilt,
            Kind::AlphaTail { alpha, a, b, .. } => {
                let ax = x.abs();
                if ax >= 1.0 {
                    x.signum() * alpha * ax.powf(alpha - 1.0)
                } else {
                    2.0 * a * x + 4.0 * b * x * x * x
                }
            }
            Kind::Multiwell2d { .. } => self.gradient(&[x, 0.0])[0],
        }
    }

    pub fn d2v1(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Quadratic { lambdas } => lambdas[0],
            Kind::Anharmonic { quartic } => 1.0 + 12.0 * quartic * x * x,
            Kind::TiltedDoubleWell { height, .. } => height * (12.0 * x * x - 4.0),
            Kind::AlphaTail { alpha, a, b, .. } => {
                let ax = x.abs();
                if ax >= 1.0 {
                    alpha * (alpha - 1.0) * ax.powf(alpha - 2.0)
                } else {
                    2.0 * a + 12.0 * b * x * x
                }
            }
            Kind::Multiwell2d { .. } => self.hessian(&[x, 0.0])[0],
        }
    }

    /// Grid scan over the dip region followed by Newton polishing.
    fn locate_minimum_2d(&self) -> Result<Vec<f64>, PotentialError> {
        let Kind::Multiwell2d { dips, .. } = &self.kind else { unreachable!() };
        let mut lo = [-1.0f64, -1.0];
        let mut hi = [1.0f64, 1.0];
        for d in dips {
            for k in 0..2 {
                lo[k] = lo[k].min(d.center[k] - 4.0 * d.width);
                hi[k] = hi[k].max(d.center[k] + 4.0 * d.width);
            }
        }
        let n = 201;
        let mut cands: Vec<(f64, [f64; 2])> = Vec::new();
        let at = |i: usize, k: usize| lo[k] + (hi[k] - lo[k]) * i as f64 / (n - 1) as f64;
        let grid_v = |i: usize, j: usize| self.value(&[at(i, 0), at(j, 1)]);
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let v = grid_v(i, j);
                let is_local = [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)].iter().all(|&(a, b)| grid_v(a, b) >= v);
                if is_local {
                    cands.push((v, [at(i, 0), at(j, 1)]));
                }
            }
        }
        let mut polished: Vec<(f64, Vec<f64>)> = cands
            .into_iter()
            .map(|(_, x0)| {
                let mut x = x0.to_vec();
                for _ in 0..50 {
                    let g = self.gradient(&x);
                    let h = self.hessian(&x);
                    let det = h[0] * h[3] - h[1] * h[2];
                    if det.abs() < 1e-300 {
                        break;
                    }
                    let dx = (h[3] * g[0] - h[1] * g[1]) / det;
                    let dy = (-h[2] * g[0] + h[0] * g[1]) / det;
                    x[0] -= dx;
                    x[1] -= dy;
                    if dx.abs() + dy.abs() < 1e-15 {
                        break;
                    }
                }
                (self.value(&x), x)
            })
            .filter(|(v, _)| v.is_finite())
            .collect();
        polished.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (best_v, best_x) = polished
            .first()
            .cloned()
            .ok_or_else(|| PotentialError::DegenerateMinimum("no local minimum found".into()))?;
        for (v, x) in polished.iter().skip(1) {
            let dist = ((x[0] - best_x[0]).powi(2) + (x[1] - best_x[1]).powi(2)).sqrt();
            if dist > 1e-6 && v - best_v < 1e-9 {
                return Err(PotentialError::DegenerateMinimum(format!("minima at {best_x:?} and {x:?} tie")));
            }
        }
        Ok(best_x)
    }

    /// Largest componentwise error `|fd - grad| / (1 + |grad|)` of a central
    /// difference against the analytic gradient at `x`.
    pub fn gradient_fd_error(&self, x: &[f64]) -> f64 {
        let g = self.gradient(x);
        let mut worst: f64 = 0.0;
        for i in 0..self.dimension {
            let h = 1e-6 * (1.0 + x[i].abs());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (self.value(&xp) - self.value(&xm)) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / (1.0 + g[i].abs()));
        }
        worst
    }
}

/// Which of the four standing hypotheses survive on the sampled grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisPasses {
    pub unique_minimum: bool,
    pub growth: bool,
    pub bounded_gradient: bool,
    pub concavity: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub grad_sup: f64,
    /// Smallest radius beyond which the sampled Laplacian is `<= 0`;
    /// `+inf` when positive values reach the outermost shell.
    pub laplacian_sign_radius: f64,
    /// `min (V(x) - ln(max(|x|, 1))^m_V)` over the grid.
    pub growth_margin: f64,
    pub min_value: f64,
    pub passes: HypothesisPasses,
}

/// Grid check of the hypotheses on the box `[lo, hi]` with `resolution` nodes
/// per axis. Radii are measured from `argmin`.
pub fn check_hypotheses(p: &Potential, lo: &[f64], hi: &[f64], resolution: usize) -> HypothesisReport {
    let d = p.dimension;
    let res = resolution.max(16);
    let total = res.pow(d as u32);
    let mut grad_sup: f64 = 0.0;
    let mut min_value = f64::INFINITY;
    let mut growth_margin = f64::INFINITY;
    let mut outer_growth = f64::INFINITY;
    let mut pos_lap_radius: f64 = 0.0;
    let mut max_radius: f64 = 0.0;
    let mut x = vec![0.0; d];
    let mut samples = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        for k in 0..d {
            let i = rem % res;
            rem /= res;
            x[k] = lo[k] + (hi[k] - lo[k]) * i as f64 / (res - 1) as f64;
        }
        let v = p.value(&x);
        let g = p.gradient(&x);
        let lap = p.laplacian(&x);
        let gn = g.iter().map(|c| c * c).sum::<f64>().sqrt();
        let r = x.iter().zip(&p.argmin).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        grad_sup = grad_sup.max(gn);
        min_value = min_value.min(v);
        max_radius = max_radius.max(r);
        if lap > 0.0 {
            pos_lap_radius = pos_lap_radius.max(r);
        }
        let margin = v - norm.max(1.0).ln().powf(p.growth_exponent);
        growth_margin = growth_margin.min(margin);
        samples.push((r, margin));
    }
    // The outermost tenth of radii: growth is "not falsified" when the slack
    // there is no smaller than anywhere inside.
    for (r, m) in &samples {
        if *r >= 0.9 * max_radius {
            outer_growth = outer_growth.min(*m);
        }
    }
    let cell = (0..d).map(|k| ((hi[k] - lo[k]) / (res - 1) as f64).powi(2)).sum::<f64>().sqrt();
    let laplacian_sign_radius = if pos_lap_radius >= max_radius - cell { f64::INFINITY } else { pos_lap_radius };
    let eigen_ok = match d {
        1 => p.hessian_at_min[0] > 0.0,
        _ => {
            let h = &p.hessian_at_min;
            h[0] > 0.0 && h[0] * h[3] - h[1] * h[2] > 0.0
        }
    };
    let passes = HypothesisPasses {
        unique_minimum: eigen_ok && min_value >= -1e-12 && p.value(&p.argmin).abs() < 1e-12,
        growth: growth_margin.is_finite() && outer_growth >= growth_margin,
        bounded_gradient: grad_sup.is_finite(),
        concavity: laplacian_sign_radius.is_finite(),
    };
    HypothesisReport { grad_sup, laplacian_sign_radius, growth_margin, min_value, passes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn quadratic_evaluations() {
        let p = make_builtin("quadratic", &[]).unwrap();
        assert_eq!(p.argmin, vec![0.0]);
        assert_eq!(p.hessian_at_min, vec![1.0]);
        let e = p.evaluate(&[2.0]).unwrap();
        assert_eq!(e, Eval { value: 2.0, gradient: vec![2.0], laplacian: 1.0 });
        let e = p.evaluate(&[0.0]).unwrap();
        assert_eq!(e, Eval { value: 0.0, gradient: vec![0.0], laplacian: 1.0 });
        assert!(p.evaluate(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn tilted_double_well_argmin_matches_golden_section() {
        let p = make_builtin("tilted_double_well_1d", &[0.3]).unwrap();
        let raw = |x: f64| (x * x - 1.0).powi(2) - 0.3 * x;
        let oracle = golden_min(raw, 0.0, 2.0);
        assert!((p.argmin[0] - oracle).abs() < 1e-7, "{} vs {oracle}", p.argmin[0]);
        assert!((p.argmin[0] - 1.0).abs() < 0.1);
        assert!(p.v1(p.argmin[0]).abs() < 1e-14);
    }

    #[test]
    fn double_well_barrier_has_zero_gradient() {
        let p = make_builtin("tilted_double_well_1d", &[0.3]).unwrap();
        // bisection on V' between the wells
        let (mut a, mut b) = (-0.5, 0.5);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if p.dv1(a) * p.dv1(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        let e = p.evaluate(&[0.5 * (a + b)]).unwrap();
        assert!(e.gradient[0].abs() < 1e-12);
        assert!(e.laplacian < 0.0);
    }

    #[test]
    fn degenerate_parameters_are_rejected() {
        assert!(matches!(make_builtin("tilted_double_well_1d", &[0.0]), Err(PotentialError::DegenerateMinimum(_))));
        assert!(make_builtin("alpha_tail_1d", &[1.5]).is_err());
        assert!(make_builtin("alpha_tail_1d", &[0.0]).is_err());
        assert!(matches!(make_builtin("banana", &[]), Err(PotentialError::UnknownName(_))));
        assert!(make_builtin("multiwell_2d", &[0.5, 1.0, 0.0, 1.0, 0.5, -1.0, 0.0, 1.0, 0.5]).is_err());
    }

    #[test]
    fn alpha_tail_gradient_is_bounded_and_c2() {
        let p = make_builtin("alpha_tail_1d", &[0.5]).unwrap();
        let mut sup: f64 = 0.0;
        let n = 200_001;
        for i in 0..n {
            let x = -1e3 + 2e3 * i as f64 / (n - 1) as f64;
            sup = sup.max(p.dv1(x).abs());
        }
        assert!(sup.is_finite() && sup < 1.0);
        for f in [|p: &Potential, x| p.v1(x), |p: &Potential, x| p.dv1(x), |p: &Potential, x| p.d2v1(x)] {
            assert!((f(&p, 1.0 - 1e-12) - f(&p, 1.0 + 1e-12)).abs() < 1e-9);
        }
        assert!(p.v1(0.0) == 0.0);
    }

    #[test]
    fn multiwell_minimum_is_normalized() {
        let p = make_builtin("multiwell_2d", &[]).unwrap();
        assert!(p.value(&p.argmin).abs() < 1e-14);
        let g = p.gradient(&p.argmin);
        assert!(g[0].abs() < 1e-10 && g[1].abs() < 1e-10);
    }

    #[test]
    fn check_hypotheses_examples() {
        let q = make_builtin("quadratic", &[]).unwrap();
        let r = check_hypotheses(&q, &[-10.0], &[10.0], 256);
        assert_eq!(r.grad_sup, 10.0);
        assert!(r.laplacian_sign_radius.is_infinite());
        assert!(!r.passes.concavity);

        let a = make_builtin("alpha_tail_1d", &[0.5]).unwrap();
        let r = check_hypotheses(&a, &[-100.0], &[100.0], 4001);
        assert!(r.passes.concavity, "{r:?}");
        assert!(r.laplacian_sign_radius <= 1.0);
        assert!(r.passes.growth && r.passes.bounded_gradient && r.passes.unique_minimum);

        let w = make_builtin("tilted_double_well_1d", &[0.3]).unwrap();
        let r = check_hypotheses(&w, &[-5.0], &[5.0], 1001);
        assert!(r.grad_sup.is_finite());
        assert_eq!(w.growth_exponent, 2.0);
        assert!(r.passes.growth);
    }

    #[test]
    fn gradients_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pots = [
            make_builtin("quadratic", &[2.0, 1.0, 4.0]).unwrap(),
            make_builtin("anharmonic_1d", &[1.0]).unwrap(),
            make_builtin("tilted_double_well_1d", &[2.0, 8.0]).unwrap(),
            make_builtin("alpha_tail_1d", &[0.5]).unwrap(),
            make_builtin("multiwell_2d", &[]).unwrap(),
        ];
        for p in &pots {
            for _ in 0..100 {
                let x: Vec<f64> = (0..p.dimension).map(|_| rng.gen_range(-3.0..3.0)).collect();
                assert!(p.gradient_fd_error(&x) < 1e-5, "{} at {x:?}", p.name());
            }
        }
    }
}
