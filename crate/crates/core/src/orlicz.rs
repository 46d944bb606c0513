//! Young functions `psi(x) = x log(1+x)`, `phi(x) = psi(x^2)`, the Legendre
//! conjugate `psi*`, `psi_hat(x) = 1/(psi*)^{-1}(1/x)`, Luxembourg norms and
//! the entropy inequalities used to compare Orlicz norms with entropies, all on
//! finite discrete measures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::numerics::golden_max;

/// `(1 - sqrt(5/8))^{-1}`: median-to-mean factor for the `phi` norm.
pub const MEDIAN_MEAN_CONSTANT: f64 = 4.7748517734455875;
/// `(3/2) (1 - sqrt(5/8))^{-2}`: the assembled constant bounding
/// `||f - m_f||_phi^2` by `Ent(f^2) + 3 E(f^2)`.
pub const ORLICZ_ENTROPY_CONSTANT: f64 = 34.19881418756471;

#[derive(Debug, Error, PartialEq)]
pub enum OrliczError {
    #[error("{which} is undefined at x = {x}")]
    Domain { which: &'static str, x: f64 },
    #[error("weights must be non-negative and sum to 1 (sum = {0})")]
    BadMeasure(f64),
    #[error("function has {got} values, measure has {expected} atoms")]
    Length { expected: usize, got: usize },
    #[error("function must be non-negative")]
    Negative,
    #[error("normalization violated: mu(f^2) = {0}")]
    Normalization(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self, OrliczError> {
        let s: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (s - 1.0).abs() > 1e-9 || atoms.len() != weights.len() {
            return Err(OrliczError::BadMeasure(s));
        }
        Ok(DiscreteMeasure { atoms, weights })
    }

    /// Normalizes positive masses; atoms default to `0, 1, 2, ...`.
    pub fn from_masses(masses: &[f64]) -> Result<Self, OrliczError> {
        let s: f64 = masses.iter().sum();
        let weights: Vec<f64> = masses.iter().map(|m| m / s).collect();
        Self::new((0..masses.len()).map(|i| i as f64).collect(), weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mean(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, x)| w * x).sum()
    }

    pub fn var(&self, f: &[f64]) -> f64 {
        let m = self.mean(f);
        self.weights.iter().zip(f).map(|(w, x)| w * (x - m) * (x - m)).sum()
    }

    /// Smallest value `m` of `f` with `mu(f <= m) >= 1/2`.
    pub fn lower_median(&self, f: &[f64]) -> f64 {
        let mut idx: Vec<usize> = (0..f.len()).collect();
        idx.sort_by(|&a, &b| f[a].total_cmp(&f[b]));
        let mut acc = 0.0;
        for &i in &idx {
            acc += self.weights[i];
            if acc >= 0.5 - 1e-15 {
                return f[i];
            }
        }
        f[*idx.last().unwrap()]
    }

    fn check(&self, f: &[f64]) -> Result<(), OrliczError> {
        if f.len() != self.len() {
            return Err(OrliczError::Length { expected: self.len(), got: f.len() });
        }
        Ok(())
    }
}

pub fn psi(x: f64) -> f64 {
    x * x.ln_1p()
}

pub fn phi(x: f64) -> f64 {
    psi(x * x)
}

/// Maximizer `x` of `x y - psi(x)`, i.e. the root of `log(1+x) + x/(1+x) = y`.
fn psi_star_argmax(y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let g = |x: f64| x.ln_1p() + x / (1.0 + x) - y;
    // log(1+x) <= g + y <= log(1+x) + 1 brackets the root
    let mut lo = ((y - 1.0).exp() - 1.0).max(0.0);
    let mut hi = y.exp() - 1.0;
    if !hi.is_finite() {
        return f64::INFINITY;
    }
    for _ in 0..200 {
        let mid = if lo > 0.0 && hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Legendre conjugate `sup_x (x y - psi(x))`, computed by locating the
/// stationary point of the concave objective.
pub fn psi_star(y: f64) -> f64 {
    let x = psi_star_argmax(y);
    if x.is_infinite() {
        return f64::INFINITY;
    }
    // x y - x log(1+x) simplifies to x^2/(1+x) at the stationary point
    x * (x / (1.0 + x))
}

/// `ln psi*(y)`, accurate when `psi*(y)` overflows.
pub fn ln_psi_star(y: f64) -> f64 {
    if y <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if y < 600.0 {
        return psi_star(y).ln();
    }
    // u = ln(1+x) solves u + 1 - e^{-u} = y
    let mut u = y - 1.0;
    for _ in 0..50 {
        let next = y - 1.0 + (-u).exp();
        if (next - u).abs() < 1e-15 * u {
            u = next;
            break;
        }
        u = next;
    }
    let ln_x = u + (-(-u).exp()).ln_1p();
    2.0 * ln_x - u
}

/// Inverse of `psi*` on `[0, inf)` by monotone bisection.
pub fn psi_star_inv(v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while psi_star(hi) < v {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if psi_star(mid) < v {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4e-16 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `psi_hat(x) = 1 / (psi*)^{-1}(1/x)`, which equals `||1_A||_{psi*}` for `mu(A) = x`.
pub fn psi_hat(x: f64) -> f64 {
    1.0 / psi_star_inv(1.0 / x)
}

/// Inverse of `psi_hat`: `1 / psi*(1/y)`.
pub fn psi_hat_inv(y: f64) -> f64 {
    1.0 / psi_star(1.0 / y)
}

/// `ln psi_hat^{-1}(y)`, finite for tiny `y`.
pub fn ln_psi_hat_inv(y: f64) -> f64 {
    -ln_psi_star(1.0 / y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Young {
    Psi,
    Phi,
    PsiStar,
    PsiHat,
    PsiHatInv,
}

/// Pointwise evaluation with domain checks.
pub fn young_eval(which: Young, x: f64) -> Result<f64, OrliczError> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(OrliczError::Domain { which: "young function", x });
    }
    Ok(match which {
        Young::Psi => psi(x),
        Young::Phi => phi(x),
        Young::PsiStar => psi_star(x),
        Young::PsiHat => {
            if !(x > 0.0 && x < 1.0) {
                return Err(OrliczError::Domain { which: "psi_hat", x });
            }
            psi_hat(x)
        }
        Young::PsiHatInv => {
            if x == 0.0 {
                return Err(OrliczError::Domain { which: "psi_hat_inv", x });
            }
            psi_hat_inv(x)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Phi,
    Psi,
    PsiStar,
}

/// `inf { lambda : sum w_i Y(|f_i| / lambda) <= 1 }` by bisection on `lambda`.
pub fn luxembourg_norm(f: &[f64], mu: &DiscreteMeasure, which: NormKind) -> f64 {
    let young: fn(f64) -> f64 = match which {
        NormKind::Phi => phi,
        NormKind::Psi => psi,
        NormKind::PsiStar => psi_star,
    };
    let top = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if top == 0.0 {
        return 0.0;
    }
    let load = |lam: f64| -> f64 {
        mu.weights
            .iter()
            .zip(f)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, x)| if *x == 0.0 { 0.0 } else { w * young(x.abs() / lam) })
            .sum()
    };
    let mut lo = top;
    let mut hi = top;
    while load(hi) > 1.0 {
        hi *= 2.0;
    }
    while load(lo) <= 1.0 {
        lo *= 0.5;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if load(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    hi
}

/// `Ent(g) = int g log g - (int g) log(int g)` with `0 log 0 = 0`.
pub fn ent(mu: &DiscreteMeasure, g: &[f64]) -> f64 {
    let m = mu.mean(g);
    let s: f64 = mu.weights.iter().zip(g).map(|(w, x)| if *x > 0.0 { w * x * x.ln() } else { 0.0 }).sum();
    let e = if m > 0.0 { s - m * m.ln() } else { 0.0 };
    e.max(0.0)
}

/// `int g log^2(e + g / ||g||_1)`.
pub fn ps_ent(mu: &DiscreteMeasure, g: &[f64]) -> f64 {
    let l1: f64 = mu.weights.iter().zip(g).map(|(w, x)| w * x.abs()).sum();
    if l1 == 0.0 {
        return 0.0;
    }
    mu.weights
        .iter()
        .zip(g)
        .map(|(w, x)| {
            let l = (std::f64::consts::E + x / l1).ln();
            w * x * l * l
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entropies {
    /// `Ent(f^2)`.
    pub ent: f64,
    /// `Var(f)`.
    pub var: f64,
    /// `Ps-Ent(f^2)`.
    pub psent: f64,
}

pub fn entropy_functionals(mu: &DiscreteMeasure, f: &[f64]) -> Result<Entropies, OrliczError> {
    mu.check(f)?;
    if f.iter().any(|x| *x < 0.0) {
        return Err(OrliczError::Negative);
    }
    let f2: Vec<f64> = f.iter().map(|x| x * x).collect();
    Ok(Entropies { ent: ent(mu, &f2), var: mu.var(f), psent: ps_ent(mu, &f2) })
}

fn squares(f: &[f64]) -> Vec<f64> {
    f.iter().map(|x| x * x).collect()
}

/// `(||f - m_f||_phi^2, C (Ent(f^2) + 3 E(f^2)))` with the lower median.
pub fn orlicz_entropy_bound(mu: &DiscreteMeasure, f: &[f64]) -> Result<(f64, f64), OrliczError> {
    mu.check(f)?;
    if f.iter().any(|x| *x < 0.0) {
        return Err(OrliczError::Negative);
    }
    let m = mu.lower_median(f);
    let centered: Vec<f64> = f.iter().map(|x| x - m).collect();
    let lhs = luxembourg_norm(&centered, mu, NormKind::Phi).powi(2);
    let f2 = squares(f);
    let rhs = ORLICZ_ENTROPY_CONSTANT * (ent(mu, &f2) + 3.0 * mu.mean(&f2));
    Ok((lhs, rhs))
}

/// `(Ent((f - mu f)^2), Ent(f^2) + int f^2)`.
pub fn centered_entropy_check(mu: &DiscreteMeasure, f: &[f64]) -> Result<(f64, f64), OrliczError> {
    mu.check(f)?;
    if f.iter().any(|x| *x < 0.0) {
        return Err(OrliczError::Negative);
    }
    let m = mu.mean(f);
    let tilde = squares(&f.iter().map(|x| x - m).collect::<Vec<_>>());
    let f2 = squares(f);
    Ok((ent(mu, &tilde), ent(mu, &f2) + mu.mean(&f2)))
}

/// `(1/delta) Var(f) + 4 delta Ps-Ent(f^2) - Ent(f^2)` for `mu(f^2) = 1`.
pub fn variance_entropy_gap(mu: &DiscreteMeasure, f: &[f64], delta: f64) -> Result<f64, OrliczError> {
    mu.check(f)?;
    let f2 = squares(f);
    let norm = mu.mean(&f2);
    if (norm - 1.0).abs() > 1e-9 {
        return Err(OrliczError::Normalization(norm));
    }
    Ok(mu.var(f) / delta + 4.0 * delta * ps_ent(mu, &f2) - ent(mu, &f2))
}

/// `(|int f g|, 2 ||f||_psi ||g||_psi*)`.
pub fn holder_orlicz(mu: &DiscreteMeasure, f: &[f64], g: &[f64]) -> (f64, f64) {
    let lhs = mu.weights.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum::<f64>().abs();
    let rhs = 2.0 * luxembourg_norm(f, mu, NormKind::Psi) * luxembourg_norm(g, mu, NormKind::PsiStar);
    (lhs, rhs)
}

/// `sup_a Ent((f + a)^2)` over `a` in `[-10 max|f|, 10 max|f|]`: a grid scan
/// followed by golden-section refinement of the best bracket.
pub fn sup_translated_entropy(mu: &DiscreteMeasure, f: &[f64]) -> f64 {
    let top = f.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    let val = |a: f64| ent(mu, &f.iter().map(|x| (x + a) * (x + a)).collect::<Vec<_>>());
    let n = 400;
    let step = 20.0 * top / n as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..=n {
        let v = val(-10.0 * top + step * k as f64);
        if v > best.1 {
            best = (k, v);
        }
    }
    let centre = -10.0 * top + step * best.0 as f64;
    let (_, refined) = golden_max(val, centre - step, centre + step, 80);
    refined.max(best.1)
}

/// `(||f - mu f||_phi^2, (3/2) sup_a Ent((f+a)^2))`.
pub fn bobkov_gotze(mu: &DiscreteMeasure, f: &[f64]) -> (f64, f64) {
    let m = mu.mean(f);
    let c: Vec<f64> = f.iter().map(|x| x - m).collect();
    (luxembourg_norm(&c, mu, NormKind::Phi).powi(2), 1.5 * sup_translated_entropy(mu, f))
}

/// `(Ent((f+a)^2), Ent(f_tilde^2) + 2 Var f)`.
pub fn rothaus(mu: &DiscreteMeasure, f: &[f64], a: f64) -> (f64, f64) {
    let m = mu.mean(f);
    let shifted = squares(&f.iter().map(|x| x + a).collect::<Vec<_>>());
    let tilde = squares(&f.iter().map(|x| x - m).collect::<Vec<_>>());
    (ent(mu, &shifted), ent(mu, &tilde) + 2.0 * mu.var(f))
}

/// `(||f - m_f||_phi, (1 - sqrt(5/8))^{-1} ||f - mu f||_phi)`.
pub fn median_vs_mean(mu: &DiscreteMeasure, f: &[f64]) -> (f64, f64) {
    let med = mu.lower_median(f);
    let m = mu.mean(f);
    let a: Vec<f64> = f.iter().map(|x| x - med).collect();
    let b: Vec<f64> = f.iter().map(|x| x - m).collect();
    (luxembourg_norm(&a, mu, NormKind::Phi), MEDIAN_MEAN_CONSTANT * luxembourg_norm(&b, mu, NormKind::Phi))
}

/// Outcome of one inequality over a random corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub trials: usize,
    pub violations: usize,
    /// Smallest `(rhs - lhs) / max(|lhs|, |rhs|)`; for the indicator identity,
    /// minus the largest absolute error.
    pub worst_margin: f64,
}

/// Default `delta` for the variance/entropy gap.
pub const GAP_DELTA: f64 = 0.01;

pub const SUITE_NAMES: [&str; 8] = [
    "indicator_norm",
    "holder",
    "variance_entropy",
    "orlicz_entropy",
    "centered_entropy",
    "bobkov_gotze",
    "rothaus",
    "median_vs_mean",
];

fn random_case(rng: &mut ChaCha8Rng) -> (DiscreteMeasure, Vec<f64>, Vec<f64>) {
    let n = rng.gen_range(2..=40);
    let masses: Vec<f64> = (0..n).map(|_| (rng.gen_range(-6.0..0.0f64)).exp()).collect();
    let mu = DiscreteMeasure::from_masses(&masses).expect("positive masses");
    let kind = rng.gen_range(0..3);
    let f: Vec<f64> = (0..n)
        .map(|_| match kind {
            0 => rng.gen_range(0.0..3.0),
            1 => (2.0 * rng.gen_range(-2.0..2.0f64)).exp(),
            _ => {
                if rng.gen_bool(0.15) {
                    rng.gen_range(5.0..50.0)
                } else {
                    rng.gen_range(0.0..0.1)
                }
            }
        })
        .collect();
    let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    (mu, f, g)
}

fn margin(lhs: f64, rhs: f64) -> (f64, bool) {
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    ((rhs - lhs) / scale, lhs > rhs + 1e-10 * scale + 1e-14)
}

/// Runs every inequality of [`SUITE_NAMES`] on `trials` random
/// `(measure, function)` pairs. Trial `k` draws from stream `k` of `seed`.
pub fn run_suites(trials: usize, seed: u64) -> Vec<SuiteOutcome> {
    let per_trial: Vec<[(f64, bool); 8]> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let (mu, f, g) = random_case(&mut rng);
            let signed: Vec<f64> = f.iter().zip(&g).map(|(a, b)| if *b < 0.0 { -a } else { *a }).collect();

            let set: Vec<f64> = (0..mu.len()).map(|_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 }).collect();
            let mass = mu.mean(&set);
            let indicator = if mass > 0.0 {
                let err = (luxembourg_norm(&set, &mu, NormKind::PsiStar) - psi_hat(mass)).abs();
                (-err, err > 1e-8)
            } else {
                (0.0, false)
            };

            let holder = {
                let (l, r) = holder_orlicz(&mu, &signed, &g);
                margin(l, r)
            };
            let var_ent = {
                let norm = mu.mean(&squares(&f)).sqrt();
                let fn_: Vec<f64> = f.iter().map(|x| x / norm).collect();
                let gap = variance_entropy_gap(&mu, &fn_, GAP_DELTA).expect("normalized");
                let e2 = ent(&mu, &squares(&fn_));
                margin(e2, e2 + gap)
            };
            let l30 = orlicz_entropy_bound(&mu, &f).map(|(l, r)| margin(l, r)).expect("nonnegative f");
            let l31 = centered_entropy_check(&mu, &f).map(|(l, r)| margin(l, r)).expect("nonnegative f");
            let bg = {
                let (l, r) = bobkov_gotze(&mu, &signed);
                margin(l, r)
            };
            let rot = {
                let top = signed.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let a = rng.gen_range(-5.0..5.0) * top;
                let (l, r) = rothaus(&mu, &signed, a);
                margin(l, r)
            };
            let mvm = {
                let (l, r) = median_vs_mean(&mu, &signed);
                margin(l, r)
            };
            [indicator, holder, var_ent, l30, l31, bg, rot, mvm]
        })
        .collect();
    SUITE_NAMES
        .iter()
        .enumerate()
        .map(|(j, &name)| {
            let mut out = SuiteOutcome { name, trials, violations: 0, worst_margin: f64::INFINITY };
            for row in &per_trial {
                let (m, v) = row[j];
                out.violations += v as usize;
                out.worst_margin = out.worst_margin.min(m);
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constants_match_their_formulas() {
        let c = 1.0 / (1.0 - (5.0f64 / 8.0).sqrt());
        assert!((MEDIAN_MEAN_CONSTANT - c).abs() < 1e-13);
        assert!((ORLICZ_ENTROPY_CONSTANT - 1.5 * c * c).abs() < 1e-11);
    }

    #[test]
    fn young_examples() {
        assert!((psi(1.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(phi(1.0), psi(1.0));
        assert!(psi_hat(1e-3) <= 2.0 / 1000f64.ln());
        assert!(young_eval(Young::PsiHat, 1.5).is_err());
        assert!(young_eval(Young::Psi, -1.0).is_err());
    }

    #[test]
    fn psi_star_matches_brute_force_legendre() {
        for y in [0.1f64, 0.5, 1.0, 2.0, 5.0] {
            let mut best = 0.0f64;
            let n = 200_000;
            let xmax = 5.0 * y.exp();
            for i in 0..=n {
                let x = xmax * i as f64 / n as f64;
                best = best.max(x * y - psi(x));
            }
            assert!((psi_star(y) - best).abs() < 1e-6 * (1.0 + best), "{y}");
            assert!(psi_star(y) <= y * y.exp());
        }
        assert_eq!(psi_star(-1.0), 0.0);
    }

    #[test]
    fn psi_hat_agrees_with_parametric_oracle() {
        // x = (v + sqrt(v^2 + 4v))/2 solves x^2/(1+x) = v, then y = log(1+x) + x/(1+x)
        for a in [1e-6, 1e-3, 0.1, 0.4, 0.9] {
            let v: f64 = 1.0 / a;
            let x = (v + (v * v + 4.0 * v).sqrt()) / 2.0;
            let y = x.ln_1p() + x / (1.0 + x);
            assert!((psi_hat(a) - 1.0 / y).abs() < 1e-13, "{a}");
            assert!((psi_hat_inv(psi_hat(a)) / a - 1.0).abs() < 1e-10);
        }
        let (a, b) = (ln_psi_star(700.0), psi_star(700.0).ln());
        assert!((a - b).abs() < 1e-9, "{a} {b}");
    }

    #[test]
    fn psi_hat_log_bound_for_small_arguments() {
        for k in 2..300 {
            let x = 10f64.powf(-(k as f64) / 10.0);
            assert!(psi_hat(x) <= 2.0 / (1.0 / x).ln(), "{x}");
        }
    }

    #[test]
    fn norm_examples() {
        let mu = DiscreteMeasure::from_masses(&[1.0; 10]).unwrap();
        assert_eq!(luxembourg_norm(&[0.0; 10], &mu, NormKind::Phi), 0.0);
        let mut ind = [0.0; 10];
        ind[3] = 1.0;
        let n = luxembourg_norm(&ind, &mu, NormKind::PsiStar);
        assert!((n - psi_hat(0.1)).abs() < 1e-12);
        // ||1||_phi = 1/x where phi(x) = 1
        let root = crate::numerics::bisect(|x| phi(x) - 1.0, 0.5, 2.0, 1e-15);
        let one = luxembourg_norm(&[1.0; 10], &mu, NormKind::Phi);
        assert!((one - 1.0 / root).abs() < 1e-12);
        assert!((one - 1.0).abs() > 0.1);
    }

    #[test]
    fn entropy_examples() {
        let mu = DiscreteMeasure::from_masses(&[1.0, 1.0]).unwrap();
        let e = entropy_functionals(&mu, &[0.0, 2f64.sqrt()]).unwrap();
        assert!((e.ent - 2f64.ln()).abs() < 1e-15);
        let c = entropy_functionals(&mu, &[1.0, 1.0]).unwrap();
        assert_eq!((c.ent, c.var), (0.0, 0.0));
        let l = (std::f64::consts::E + 1.0).ln();
        assert!((c.psent - l * l).abs() < 1e-15);
    }

    #[test]
    fn entropy_bound_examples() {
        let mu = DiscreteMeasure::from_masses(&[1.0, 1.0]).unwrap();
        let (lhs, rhs) = orlicz_entropy_bound(&mu, &[0.7, 0.7]).unwrap();
        assert_eq!(lhs, 0.0);
        assert!((rhs - 3.0 * ORLICZ_ENTROPY_CONSTANT * 0.49).abs() < 1e-12);
        // two atoms, f = (0, sqrt 2): lower median 0, ||f||_phi solves phi(sqrt2/l)/2 = 1
        let f = [0.0, 2f64.sqrt()];
        let (lhs, rhs) = orlicz_entropy_bound(&mu, &f).unwrap();
        let lam = crate::numerics::bisect(|l| 0.5 * phi(2f64.sqrt() / l) - 1.0, 0.5, 5.0, 1e-15);
        assert!((lhs - lam * lam).abs() < 1e-10);
        assert!((rhs - ORLICZ_ENTROPY_CONSTANT * (2f64.ln() + 3.0)).abs() < 1e-10);
        assert!(lhs <= rhs);

        let (a, b) = centered_entropy_check(&mu, &[0.3, 0.3]).unwrap();
        assert_eq!(a, 0.0);
        assert!((b - 0.09).abs() < 1e-15);

        let delta = 0.01;
        let g = variance_entropy_gap(&mu, &[1.0, 1.0], delta).unwrap();
        let l = (std::f64::consts::E + 1.0).ln();
        assert!((g - 4.0 * delta * l * l).abs() < 1e-14);
        assert!(variance_entropy_gap(&mu, &[2.0, 2.0], delta).is_err());
        let f = [0.5, (2.0f64 - 0.25).sqrt()];
        assert!(variance_entropy_gap(&mu, &f, 1e-8).unwrap() > 1e6);
    }

    #[test]
    fn suites_hold_on_small_corpus() {
        let out = run_suites(300, 5);
        assert_eq!(out.len(), SUITE_NAMES.len());
        for s in &out {
            assert_eq!(s.violations, 0, "{s:?}");
        }
        assert_eq!(out, run_suites(300, 5));
    }

    fn measure_and_function() -> impl Strategy<Value = (DiscreteMeasure, Vec<f64>, Vec<f64>)> {
        (2usize..12).prop_flat_map(|n| {
            (
                prop::collection::vec(0.01f64..1.0, n),
                prop::collection::vec(0.0f64..3.0, n),
                prop::collection::vec(-3.0f64..3.0, n),
            )
                .prop_map(|(m, f, g)| (DiscreteMeasure::from_masses(&m).unwrap(), f, g))
        })
    }

    proptest! {
        #[test]
        fn norm_is_homogeneous_and_subadditive((mu, f, g) in measure_and_function(), c in -4.0f64..4.0) {
            for kind in [NormKind::Phi, NormKind::Psi, NormKind::PsiStar] {
                let nf = luxembourg_norm(&f, &mu, kind);
                let scaled: Vec<f64> = f.iter().map(|x| c * x).collect();
                prop_assert!((luxembourg_norm(&scaled, &mu, kind) - c.abs() * nf).abs() <= 1e-8 * (1.0 + nf));
                let sum: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
                let ng = luxembourg_norm(&g, &mu, kind);
                prop_assert!(luxembourg_norm(&sum, &mu, kind) <= nf + ng + 1e-8);
            }
        }

        #[test]
        fn holder_orlicz_holds((mu, f, g) in measure_and_function()) {
            let (lhs, rhs) = holder_orlicz(&mu, &f, &g);
            prop_assert!(lhs <= rhs * (1.0 + 1e-10) + 1e-14);
        }

        #[test]
        fn entropy_chain_holds((mu, f, _g) in measure_and_function(), a in -5.0f64..5.0) {
            let (l, r) = centered_entropy_check(&mu, &f).unwrap();
            prop_assert!(l <= r + 1e-12);
            let (l, r) = rothaus(&mu, &f, a);
            prop_assert!(l <= r + 1e-12);
            let (l, r) = median_vs_mean(&mu, &f);
            prop_assert!(l <= r + 1e-12);
            let (l, r) = orlicz_entropy_bound(&mu, &f).unwrap();
            prop_assert!(l <= r + 1e-12);
        }

        #[test]
        fn psi_star_is_convex_and_nonnegative(y in 0.0f64..20.0, z in 0.0f64..20.0) {
            let m = psi_star(0.5 * (y + z));
            prop_assert!(m >= 0.0);
            prop_assert!(m <= 0.5 * (psi_star(y) + psi_star(z)) * (1.0 + 1e-12) + 1e-15);
        }
    }
}
