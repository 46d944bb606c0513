//! Discrete capacities on weighted graphs: grounded harmonic extensions solved
//! by conjugate gradients, the measure-capacity constant `C_kappa`, and the
//! Neumann spectral constant of convex boxes.
//!
//! Masses and conductances are carried in log space as well, since the
//! equilibrium densities span hundreds of orders of magnitude at small `sigma`.

use thiserror::Error;

use crate::landscape::minimax_sweep;
use crate::numerics::{dot, log_add, log_sum_exp, pcg, solve_tridiagonal};
use crate::potential::Potential;

#[derive(Debug, Error, PartialEq)]
pub enum CapacityError {
    #[error("set A and ground set G overlap at node {0}")]
    Overlap(usize),
    #[error("ground set has mass {0} < 1/2")]
    GroundTooLight(f64),
    #[error("constraint sets must be nonempty")]
    EmptySet,
    #[error("node index {0} out of range")]
    NodeOutOfRange(usize),
    #[error("kappa = {0} must lie in (0, 1/2)")]
    BadKappa(f64),
    #[error("no set of the family has mass in [{0}, 1/2]")]
    EmptyFamily(f64),
    #[error("interval family needs a path graph")]
    NotAPath,
    #[error("conjugate gradients stalled at relative residual {0:e}")]
    Solver(f64),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("resolution {0} is below 32")]
    Resolution(usize),
    #[error("only 1D and 2D boxes are supported, got dimension {0}")]
    Dimension(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Path,
    Grid2d { nx: usize, ny: usize },
    General,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub conductance: f64,
    pub ln_conductance: f64,
}

/// Nodes carry probability masses and a value used to build sublevel sets;
/// edges carry conductances. The Dirichlet energy of `f` is
/// `sum_edges c (f_a - f_b)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    pub masses: Vec<f64>,
    pub ln_masses: Vec<f64>,
    pub values: Vec<f64>,
    pub edges: Vec<Edge>,
    pub layout: Layout,
    adjacency: Vec<Vec<(usize, f64)>>,
}

fn ln_harmonic_mean(a: f64, b: f64) -> f64 {
    std::f64::consts::LN_2 + a + b - log_add(a, b)
}

impl WeightedGraph {
    /// General constructor from log-masses (normalized here) and log-conductances.
    pub fn from_logs(
        ln_masses: Vec<f64>,
        values: Vec<f64>,
        edges: Vec<(usize, usize, f64)>,
        layout: Layout,
    ) -> Result<Self, CapacityError> {
        let n = ln_masses.len();
        if n == 0 || values.len() != n {
            return Err(CapacityError::InvalidGraph("node arrays are empty or mismatched".into()));
        }
        if ln_masses.iter().any(|m| !m.is_finite()) {
            return Err(CapacityError::InvalidGraph("masses must be positive and finite".into()));
        }
        let lz = log_sum_exp(&ln_masses);
        let ln_masses: Vec<f64> = ln_masses.iter().map(|m| m - lz).collect();
        let masses = ln_masses.iter().map(|m| m.exp()).collect();
        let mut adjacency = vec![Vec::new(); n];
        let mut out = Vec::with_capacity(edges.len());
        for (a, b, lc) in edges {
            if a >= n || b >= n || a == b || !lc.is_finite() {
                return Err(CapacityError::InvalidGraph(format!("bad edge ({a}, {b})")));
            }
            let c = lc.exp();
            adjacency[a].push((b, c));
            adjacency[b].push((a, c));
            out.push(Edge { a, b, conductance: c, ln_conductance: lc });
        }
        let g = WeightedGraph { masses, ln_masses, values, edges: out, layout, adjacency };
        if !g.connected() {
            return Err(CapacityError::InvalidGraph("graph is not connected".into()));
        }
        Ok(g)
    }

    /// Path graph with explicit masses (normalized) and the `n - 1` conductances
    /// between consecutive nodes. Node values default to `-ln mass`.
    pub fn path(masses: &[f64], conductances: &[f64]) -> Result<Self, CapacityError> {
        if conductances.len() + 1 != masses.len() || conductances.iter().any(|c| !(*c > 0.0)) {
            return Err(CapacityError::InvalidGraph("path needs n - 1 positive conductances".into()));
        }
        let lm: Vec<f64> = masses.iter().map(|m| m.ln()).collect();
        let values = lm.iter().map(|m| -m).collect();
        let edges = conductances.iter().enumerate().map(|(i, c)| (i, i + 1, c.ln())).collect();
        Self::from_logs(lm, values, edges, Layout::Path)
    }

    /// Discretized `mu_sigma` on `n` equal cells of `[lo, hi]`; conductance =
    /// harmonic mean of neighbouring densities over the cell width.
    pub fn equilibrium_1d(p: &Potential, sigma: f64, lo: f64, hi: f64, n: usize) -> Result<Self, CapacityError> {
        if p.dimension != 1 {
            return Err(CapacityError::Dimension(p.dimension));
        }
        if n < 2 || !(hi > lo) || !(sigma > 0.0) {
            return Err(CapacityError::InvalidGraph("need n >= 2, hi > lo, sigma > 0".into()));
        }
        let h = (hi - lo) / n as f64;
        let values: Vec<f64> = (0..n).map(|i| p.v1(lo + (i as f64 + 0.5) * h)).collect();
        let ln_rho: Vec<f64> = values.iter().map(|v| -v / sigma).collect();
        let lz = log_sum_exp(&ln_rho) + h.ln();
        let ln_rho: Vec<f64> = ln_rho.iter().map(|r| r - lz).collect();
        let ln_m = ln_rho.iter().map(|r| r + h.ln()).collect();
        let edges = (0..n - 1).map(|i| (i, i + 1, ln_harmonic_mean(ln_rho[i], ln_rho[i + 1]) - h.ln())).collect();
        Self::from_logs(ln_m, values, edges, Layout::Path)
    }

    /// Discretized `mu_sigma` on an `nx x ny` cell lattice (x fastest).
    pub fn equilibrium_2d(
        p: &Potential,
        sigma: f64,
        lo: [f64; 2],
        hi: [f64; 2],
        nx: usize,
        ny: usize,
    ) -> Result<Self, CapacityError> {
        if p.dimension != 2 {
            return Err(CapacityError::Dimension(p.dimension));
        }
        let hx = (hi[0] - lo[0]) / nx as f64;
        let hy = (hi[1] - lo[1]) / ny as f64;
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let x = [lo[0] + (i as f64 + 0.5) * hx, lo[1] + (j as f64 + 0.5) * hy];
                values.push(p.value(&x));
            }
        }
        let ln_rho: Vec<f64> = values.iter().map(|v| -v / sigma).collect();
        let lz = log_sum_exp(&ln_rho) + (hx * hy).ln();
        let ln_rho: Vec<f64> = ln_rho.iter().map(|r| r - lz).collect();
        let ln_m = ln_rho.iter().map(|r| r + (hx * hy).ln()).collect();
        let mut edges = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if i + 1 < nx {
                    edges.push((k, k + 1, ln_harmonic_mean(ln_rho[k], ln_rho[k + 1]) + (hy / hx).ln()));
                }
                if j + 1 < ny {
                    edges.push((k, k + nx, ln_harmonic_mean(ln_rho[k], ln_rho[k + nx]) + (hx / hy).ln()));
                }
            }
        }
        Self::from_logs(ln_m, values, edges, Layout::Grid2d { nx, ny })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn neighbours(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency[i].iter().copied()
    }

    pub fn mass_of(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.masses[i]).sum()
    }

    pub fn dirichlet(&self, f: &[f64]) -> f64 {
        self.edges.iter().map(|e| e.conductance * (f[e.a] - f[e.b]).powi(2)).sum()
    }

    fn connected(&self) -> bool {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.len()
    }

    pub fn argmin_node(&self) -> usize {
        (0..self.len()).min_by(|&a, &b| self.values[a].total_cmp(&self.values[b])).unwrap()
    }

    /// Smallest connected sublevel set of `values` containing the argmin node
    /// whose mass reaches 1/2, grown in best-first order (ties by sweep order).
    /// Sorted by node index.
    pub fn default_ground(&self) -> Vec<usize> {
        let a = self.argmin_node();
        let (_, _, order) = minimax_sweep(&self.values, a, |i| self.adjacency[i].iter().map(|e| e.0));
        let mut acc = 0.0;
        let mut ground = Vec::new();
        for &i in &order {
            ground.push(i);
            acc += self.masses[i];
            if acc >= 0.5 {
                break;
            }
        }
        ground.sort_unstable();
        ground
    }
}

/// Grounded equilibrium potential: `f = 1` on `a`, `f = 0` on `ground`,
/// harmonic elsewhere. Returns `(energy, f)`.
pub fn capacity_potential(g: &WeightedGraph, a: &[usize], ground: &[usize]) -> Result<(f64, Vec<f64>), CapacityError> {
    ln_capacity_potential(g, a, ground).map(|(e, f)| (e.exp(), f))
}

/// As [`capacity_potential`] with the energy returned as a logarithm.
/// Conductances are rescaled by their largest value before the solve; edges
/// that underflow after rescaling are dropped.
pub fn ln_capacity_potential(
    g: &WeightedGraph,
    a: &[usize],
    ground: &[usize],
) -> Result<(f64, Vec<f64>), CapacityError> {
    if a.is_empty() || ground.is_empty() {
        return Err(CapacityError::EmptySet);
    }
    let n = g.len();
    // 0 free, 1 in A, 2 in G
    let mut role = vec![0u8; n];
    for &i in a {
        if i >= n {
            return Err(CapacityError::NodeOutOfRange(i));
        }
        role[i] = 1;
    }
    for &i in ground {
        if i >= n {
            return Err(CapacityError::NodeOutOfRange(i));
        }
        if role[i] == 1 {
            return Err(CapacityError::Overlap(i));
        }
        role[i] = 2;
    }
    let mg: f64 = (0..n).filter(|&i| role[i] == 2).map(|i| g.masses[i]).sum();
    if mg < 0.5 - 1e-12 {
        return Err(CapacityError::GroundTooLight(mg));
    }
    let free: Vec<usize> = (0..n).filter(|&i| role[i] == 0).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        slot[i] = k;
    }
    let mut f: Vec<f64> = role.iter().map(|&r| if r == 1 { 1.0 } else { 0.0 }).collect();
    let ln_top = g.edges.iter().map(|e| e.ln_conductance).fold(f64::NEG_INFINITY, f64::max);
    let mut scaled: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in &g.edges {
        let c = (e.ln_conductance - ln_top).exp();
        scaled[e.a].push((e.b, c));
        scaled[e.b].push((e.a, c));
    }
    if !free.is_empty() {
        let m = free.len();
        let mut diag = vec![0.0; m];
        let mut b = vec![0.0; m];
        for (k, &i) in free.iter().enumerate() {
            for &(j, c) in &scaled[i] {
                diag[k] += c;
                if role[j] == 1 {
                    b[k] += c;
                }
            }
        }
        // Jacobi scaling turns the system into one with unit diagonal, which keeps
        // CG well behaved when conductances span many decades.
        let s: Vec<f64> = diag.iter().map(|d| if *d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
        let bs: Vec<f64> = b.iter().zip(&s).map(|(x, y)| x * y).collect();
        let apply = |x: &[f64], out: &mut [f64]| {
            for (k, &i) in free.iter().enumerate() {
                let mut acc = diag[k] * s[k] * x[k];
                for &(j, c) in &scaled[i] {
                    if slot[j] != usize::MAX {
                        acc -= c * s[slot[j]] * x[slot[j]];
                    }
                }
                out[k] = s[k] * acc;
            }
        };
        let ones = vec![1.0; m];
        let (y, res, _) = if bs.iter().all(|v| *v == 0.0) {
            (vec![0.0; m], 0.0, 0)
        } else {
            pcg(&apply, &ones, &bs, None, 1e-13, 50 * m + 100)
        };
        if !(res < 1e-10) {
            return Err(CapacityError::Solver(res));
        }
        for (k, &i) in free.iter().enumerate() {
            f[i] = (y[k] * s[k]).clamp(0.0, 1.0);
        }
    }
    let energy: f64 = g.edges.iter().map(|e| (e.ln_conductance - ln_top).exp() * (f[e.a] - f[e.b]).powi(2)).sum();
    Ok((ln_top + energy.ln(), f))
}

/// Discrete capacity of `a` relative to the ground set.
pub fn two_set_capacity(g: &WeightedGraph, a: &[usize], ground: &[usize]) -> Result<f64, CapacityError> {
    capacity_potential(g, a, ground).map(|r| r.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Intervals of a path graph.
    Intervals,
    /// Connected components of sublevel sets of the node values, off the ground set.
    Sublevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityConstant {
    pub kappa: f64,
    pub c_kappa: f64,
    pub ln_c_kappa: f64,
    /// The minimizing set.
    pub set: Vec<usize>,
    pub set_mass: f64,
    pub ground: Vec<usize>,
}

/// `min Cap(A, G) / mu(A)` over sets `A` of the family with `kappa <= mu(A) <= 1/2`.
/// This is the family-restricted constant; the infimum over all sets can only
/// be smaller.
pub fn measure_capacity_constant(
    g: &WeightedGraph,
    kappa: f64,
    family: Family,
    ground: Option<&[usize]>,
) -> Result<CapacityConstant, CapacityError> {
    if !(kappa > 0.0 && kappa < 0.5) {
        return Err(CapacityError::BadKappa(kappa));
    }
    let ground = ground.map(|s| s.to_vec()).unwrap_or_else(|| g.default_ground());
    let mg = g.mass_of(&ground);
    if mg < 0.5 - 1e-12 {
        return Err(CapacityError::GroundTooLight(mg));
    }
    match family {
        Family::Intervals => intervals(g, kappa, ground),
        Family::Sublevel => sublevel(g, kappa, ground),
    }
}

/// On a path with a contiguous ground interval `[g0, g1]`, the capacity of an
/// interval on the left depends only on its right end `j`: `1 / R(j, g0)` with
/// `R` the series resistance. So for each `j` the widest admissible interval
/// ending at `j` is optimal.
fn intervals(g: &WeightedGraph, kappa: f64, ground: Vec<usize>) -> Result<CapacityConstant, CapacityError> {
    if g.layout != Layout::Path {
        return Err(CapacityError::NotAPath);
    }
    let n = g.len();
    let g0 = ground[0];
    let g1 = *ground.last().unwrap();
    if g1 - g0 + 1 != ground.len() {
        return Err(CapacityError::InvalidGraph("ground set is not an interval".into()));
    }
    let ln_c = |i: usize| g.edges[i].ln_conductance; // edge i joins i and i+1
    let mut best: Option<(f64, usize, usize, f64)> = None;
    let mut consider = |ln_cap: f64, lo: usize, hi: usize, mass: f64| {
        if mass >= kappa && mass <= 0.5 {
            let r = ln_cap - mass.ln();
            if best.is_none_or(|b| r < b.0) {
                best = Some((r, lo, hi, mass));
            }
        }
    };
    // left of the ground set
    let mut ln_r = f64::NEG_INFINITY;
    for j in (0..g0).rev() {
        ln_r = log_add(ln_r, -ln_c(j));
        // widest [i, j] with mass <= 1/2
        let mut mass = 0.0;
        let mut i = j + 1;
        while i > 0 && mass + g.masses[i - 1] <= 0.5 {
            i -= 1;
            mass += g.masses[i];
        }
        if i <= j {
            consider(-ln_r, i, j, mass);
        }
    }
    let mut ln_r = f64::NEG_INFINITY;
    for j in g1 + 1..n {
        ln_r = log_add(ln_r, -ln_c(j - 1));
        let mut mass = 0.0;
        let mut i = j;
        while i < n && mass + g.masses[i] <= 0.5 {
            mass += g.masses[i];
            i += 1;
        }
        if i > j {
            consider(-ln_r, j, i - 1, mass);
        }
    }
    let (r, lo, hi, mass) = best.ok_or(CapacityError::EmptyFamily(kappa))?;
    Ok(CapacityConstant { kappa, c_kappa: r.exp(), ln_c_kappa: r, set: (lo..=hi).collect(), set_mass: mass, ground })
}

fn sublevel(g: &WeightedGraph, kappa: f64, ground: Vec<usize>) -> Result<CapacityConstant, CapacityError> {
    let n = g.len();
    let mut in_ground = vec![false; n];
    for &i in &ground {
        in_ground[i] = true;
    }
    let mut levels: Vec<f64> = (0..n).filter(|&i| !in_ground[i]).map(|i| g.values[i]).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let max_levels = 64;
    if levels.len() > max_levels {
        let step = levels.len() as f64 / max_levels as f64;
        levels = (1..=max_levels).map(|k| levels[((k as f64 * step) as usize).min(levels.len()) - 1]).collect();
    }
    let mut best: Option<(f64, Vec<usize>, f64)> = None;
    let mut seen_sets: Vec<Vec<usize>> = Vec::new();
    for &level in &levels {
        let mut comp = vec![usize::MAX; n];
        for s in 0..n {
            if in_ground[s] || comp[s] != usize::MAX || g.values[s] > level {
                continue;
            }
            let mut members = vec![s];
            comp[s] = s;
            let mut k = 0;
            while k < members.len() {
                let u = members[k];
                k += 1;
                for (v, _) in g.neighbours(u) {
                    if !in_ground[v] && comp[v] == usize::MAX && g.values[v] <= level {
                        comp[v] = s;
                        members.push(v);
                    }
                }
            }
            members.sort_unstable();
            let mass = g.mass_of(&members);
            if mass < kappa || mass > 0.5 || seen_sets.contains(&members) {
                continue;
            }
            let (ln_cap, _) = ln_capacity_potential(g, &members, &ground)?;
            let r = ln_cap - mass.ln();
            if best.as_ref().is_none_or(|b| r < b.0) {
                best = Some((r, members.clone(), mass));
            }
            seen_sets.push(members);
        }
    }
    let (r, set, mass) = best.ok_or(CapacityError::EmptyFamily(kappa))?;
    Ok(CapacityConstant { kappa, c_kappa: r.exp(), ln_c_kappa: r, set, set_mass: mass, ground })
}

/// Discrete `C_kappa` on a path with the support of the test function
/// optimized as well: for each interval `A`, the capacity is minimized over
/// all supports `S` containing `A` with `mu(S) <= 1/2`. On a path every set
/// has the capacity of its hull, so intervals give the exact constant. The
/// returned `ground` is the complement of the optimal support. Cost is
/// `O(n^3 log n)`.
pub fn exact_interval_constant(g: &WeightedGraph, kappa: f64) -> Result<CapacityConstant, CapacityError> {
    if g.layout != Layout::Path {
        return Err(CapacityError::NotAPath);
    }
    if !(kappa > 0.0 && kappa < 0.5) {
        return Err(CapacityError::BadKappa(kappa));
    }
    let n = g.len();
    let mut pm = vec![0.0; n + 1];
    for i in 0..n {
        pm[i + 1] = pm[i] + g.masses[i];
    }
    let res: Vec<f64> = g.edges.iter().map(|e| 1.0 / e.conductance).collect();
    // mass of nodes lo..hi (exclusive hi)
    let mass = |lo: usize, hi: usize| pm[hi] - pm[lo];
    let mut best: Option<(f64, usize, usize, usize, usize)> = None;
    // right[e] = resistance from node j to node e, summed outward from j so
    // that huge edge resistances elsewhere cannot cancel it
    let mut right = vec![0.0; n + 1];
    for i in 0..n {
        for j in i..n {
            let ma = mass(i, j + 1);
            if ma > 0.5 {
                break;
            }
            if ma < kappa {
                continue;
            }
            right[j] = 0.0;
            for e in j + 1..n {
                right[e] = right[e - 1] + res[e - 1];
            }
            // left_start = first supported node; the zero node sits just below it
            let mut r_left = 0.0;
            for left_start in (0..=i).rev() {
                if left_start < i {
                    r_left += res[left_start];
                }
                let cap_left = if left_start == 0 { 0.0 } else { 1.0 / (r_left + res[left_start - 1]) };
                // furthest right end e (exclusive) with mass(left_start, e) <= 1/2
                let budget = pm[left_start] + 0.5;
                let e = (pm.partition_point(|v| *v <= budget + 1e-15) - 1).min(n);
                if e <= j {
                    continue;
                }
                if mass(left_start, e) > 0.5 + 1e-12 {
                    continue;
                }
                let cap_right = if e == n { 0.0 } else { 1.0 / right[e] };
                let r = (cap_left + cap_right) / ma;
                if best.is_none_or(|b| r < b.0) {
                    best = Some((r, i, j, left_start, e));
                }
            }
        }
    }
    let (r, i, j, lo, e) = best.ok_or(CapacityError::EmptyFamily(kappa))?;
    let ground: Vec<usize> = (0..lo).chain(e..n).collect();
    Ok(CapacityConstant {
        kappa,
        c_kappa: r,
        ln_c_kappa: r.ln(),
        set: (i..=j).collect(),
        set_mass: mass(i, j + 1),
        ground,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareCheck {
    /// `d_L^2 / pi^2` with `d_L` the box diameter.
    pub constant_bound: f64,
    /// Inverse of the smallest nonzero Neumann eigenvalue of the P1/Q1 finite
    /// element Laplacian on the box.
    pub discrete_optimal: f64,
    pub iterations: usize,
}

/// 1D P1 stiffness and consistent mass on `n` elements: (sub/diag/sup) triples.
fn fem_1d(len: f64, n: usize) -> ([Vec<f64>; 3], [Vec<f64>; 3]) {
    let h = len / n as f64;
    let m = n + 1;
    let mut kd = vec![2.0 / h; m];
    let mut md = vec![4.0 * h / 6.0; m];
    kd[0] = 1.0 / h;
    kd[m - 1] = 1.0 / h;
    md[0] = 2.0 * h / 6.0;
    md[m - 1] = 2.0 * h / 6.0;
    let ko = vec![-1.0 / h; m];
    let mo = vec![h / 6.0; m];
    ([ko.clone(), kd, ko], [mo.clone(), md, mo])
}

fn tri_apply(t: &[Vec<f64>; 3], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let mut acc = t[1][i] * x[i];
        if i > 0 {
            acc += t[0][i] * x[i - 1];
        }
        if i + 1 < n {
            acc += t[2][i] * x[i + 1];
        }
        out[i] = acc;
    }
}

/// Neumann spectral constant of a 1D interval or 2D rectangle against the
/// convex-domain bound `diam^2 / pi^2`. Finite elements make the discrete
/// eigenvalue an upper bound on the continuum one, so `discrete_optimal` never
/// exceeds the true constant.
pub fn convex_poincare_check(lo: &[f64], hi: &[f64], resolution: usize) -> Result<PoincareCheck, CapacityError> {
    if resolution < 32 {
        return Err(CapacityError::Resolution(resolution));
    }
    let d = lo.len();
    if !(d == 1 || d == 2) || hi.len() != d {
        return Err(CapacityError::Dimension(d));
    }
    let lens: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
    let diam2: f64 = lens.iter().map(|l| l * l).sum();
    let constant_bound = diam2 / std::f64::consts::PI.powi(2);

    let (kx, mx) = fem_1d(lens[0], resolution);
    let nx = resolution + 1;
    type Op = Box<dyn Fn(&[f64], &mut [f64])>;
    let (apply_k, apply_m, n): (Op, Op, usize) = if d == 1 {
        let (k2, m2) = (kx.clone(), mx.clone());
        (Box::new(move |x, o| tri_apply(&k2, x, o)), Box::new(move |x, o| tri_apply(&m2, x, o)), nx)
    } else {
        let (ky, my) = fem_1d(lens[1], resolution);
        let ny = nx;
        let kron = move |a: [Vec<f64>; 3], b: [Vec<f64>; 3]| {
            // (A (x) B) v with v indexed [j * nx + i], A acting on i, B on j
            move |v: &[f64], out: &mut [f64]| {
                let mut tmp = vec![0.0; nx * ny];
                let mut row = vec![0.0; nx];
                for j in 0..ny {
                    tri_apply(&a, &v[j * nx..(j + 1) * nx], &mut row);
                    tmp[j * nx..(j + 1) * nx].copy_from_slice(&row);
                }
                let mut col = vec![0.0; ny];
                let mut colout = vec![0.0; ny];
                for i in 0..nx {
                    for j in 0..ny {
                        col[j] = tmp[j * nx + i];
                    }
                    tri_apply(&b, &col, &mut colout);
                    for j in 0..ny {
                        out[j * nx + i] = colout[j];
                    }
                }
            }
        };
        let kxmy = kron(kx.clone(), my.clone());
        let mxky = kron(mx.clone(), ky.clone());
        let mxmy = kron(mx.clone(), my);
        (
            Box::new(move |v: &[f64], o: &mut [f64]| {
                let mut t = vec![0.0; v.len()];
                kxmy(v, o);
                mxky(v, &mut t);
                for (a, b) in o.iter_mut().zip(&t) {
                    *a += b;
                }
            }),
            Box::new(move |v: &[f64], o: &mut [f64]| mxmy(v, o)),
            nx * ny,
        )
    };

    // inverse iteration on (K + M)^{-1} M restricted to the M-complement of constants
    let ones = vec![1.0; n];
    let mut m_ones = vec![0.0; n];
    apply_m(&ones, &mut m_ones);
    let total: f64 = m_ones.iter().sum();
    let deflate = |v: &mut Vec<f64>| {
        let c = dot(v, &m_ones) / total;
        v.iter_mut().for_each(|x| *x -= c);
    };
    let coords: Vec<f64> = (0..n)
        .map(|k| {
            let i = k % nx;
            let j = k / nx;
            let s = i as f64 / resolution as f64;
            let t = j as f64 / resolution as f64;
            s + 0.37 * s * s + 0.5 * t - 0.21 * t * t * t
        })
        .collect();
    let mut v = coords;
    deflate(&mut v);
    let mut lambda = f64::NAN;
    let mut iterations = 0;
    let mut mv = vec![0.0; n];
    let mut kv = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut diag_km = vec![0.0; n];
    if d == 2 {
        // diagonal of Kx(x)My + Mx(x)Ky + Mx(x)My for the preconditioner
        let (ky, my) = fem_1d(lens[1], resolution);
        for (k, dk) in diag_km.iter_mut().enumerate() {
            let (i, j) = (k % nx, k / nx);
            *dk = kx[1][i] * my[1][j] + mx[1][i] * ky[1][j] + mx[1][i] * my[1][j];
        }
    }
    for it in 0..500 {
        iterations = it + 1;
        apply_m(&v, &mut rhs);
        let mut u = if d == 1 {
            let sub: Vec<f64> = kx[0].iter().zip(&mx[0]).map(|(a, b)| a + b).collect();
            let dg: Vec<f64> = kx[1].iter().zip(&mx[1]).map(|(a, b)| a + b).collect();
            solve_tridiagonal(&sub, &dg, &sub, &rhs)
        } else {
            let op = |x: &[f64], o: &mut [f64]| {
                let mut t = vec![0.0; x.len()];
                apply_k(x, o);
                apply_m(x, &mut t);
                for (a, b) in o.iter_mut().zip(&t) {
                    *a += b;
                }
            };
            pcg(&op, &diag_km, &rhs, Some(&v), 1e-13, 10 * n).0
        };
        deflate(&mut u);
        apply_m(&u, &mut mv);
        let mnorm = dot(&u, &mv).sqrt();
        u.iter_mut().for_each(|x| *x /= mnorm);
        apply_k(&u, &mut kv);
        apply_m(&u, &mut mv);
        let next = dot(&u, &kv) / dot(&u, &mv);
        v = u;
        if (next - lambda).abs() <= 1e-13 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Ok(PoincareCheck { constant_bound, discrete_optimal: 1.0 / lambda, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::make_builtin;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Projected gradient descent on `f` in `[0,1]^n` with the constraints pinned.
    fn brute_energy(g: &WeightedGraph, a: &[usize], ground: &[usize]) -> f64 {
        let n = g.len();
        let mut f = vec![0.5; n];
        let cmax: f64 = (0..n).map(|i| g.neighbours(i).map(|e| e.1).sum::<f64>()).fold(0.0, f64::max);
        let step = 0.25 / cmax;
        for _ in 0..200_000 {
            for &i in a {
                f[i] = 1.0;
            }
            for &i in ground {
                f[i] = 0.0;
            }
            let mut grad = vec![0.0; n];
            for e in &g.edges {
                let d = 2.0 * e.conductance * (f[e.a] - f[e.b]);
                grad[e.a] += d;
                grad[e.b] -= d;
            }
            for i in 0..n {
                f[i] = (f[i] - step * grad[i]).clamp(0.0, 1.0);
            }
        }
        for &i in a {
            f[i] = 1.0;
        }
        for &i in ground {
            f[i] = 0.0;
        }
        g.dirichlet(&f)
    }

    #[test]
    fn series_resistance_on_three_nodes() {
        let (c01, c12) = (0.7, 2.5);
        let g = WeightedGraph::path(&[0.6, 0.2, 0.2], &[c01, c12]).unwrap();
        let cap = two_set_capacity(&g, &[2], &[0]).unwrap();
        assert!((cap - 1.0 / (1.0 / c01 + 1.0 / c12)).abs() < 1e-12);
        let g = WeightedGraph::path(&[0.6, 0.4], &[3.25]).unwrap();
        assert!((two_set_capacity(&g, &[1], &[0]).unwrap() - 3.25).abs() < 1e-12);
    }

    #[test]
    fn capacity_errors() {
        let g = WeightedGraph::path(&[0.3, 0.3, 0.4], &[1.0, 1.0]).unwrap();
        assert_eq!(two_set_capacity(&g, &[1], &[1, 2]), Err(CapacityError::Overlap(1)));
        assert!(matches!(two_set_capacity(&g, &[0], &[2]), Err(CapacityError::GroundTooLight(_))));
        assert!(matches!(measure_capacity_constant(&g, 0.6, Family::Intervals, None), Err(CapacityError::BadKappa(_))));
    }

    #[test]
    fn eight_node_path_matches_projected_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let masses: Vec<f64> = (0..8).map(|i| if i == 0 { 5.0 } else { rng.gen_range(0.1..1.0) }).collect();
        let conds: Vec<f64> = (0..7).map(|_| rng.gen_range(0.2..3.0)).collect();
        let g = WeightedGraph::path(&masses, &conds).unwrap();
        let (a, ground) = (vec![5, 6], vec![0]);
        let cap = two_set_capacity(&g, &a, &ground).unwrap();
        let brute = brute_energy(&g, &a, &ground);
        assert!((cap - brute).abs() < 1e-9 * (1.0 + brute), "{cap} {brute}");
    }

    #[test]
    fn grid_capacity_matches_projected_gradient() {
        let p = make_builtin("multiwell_2d", &[]).unwrap();
        let g = WeightedGraph::equilibrium_2d(&p, 1.0, [-2.0, -2.0], [4.0, 2.0], 6, 4).unwrap();
        let ground = g.default_ground();
        let a: Vec<usize> = (0..g.len()).filter(|i| !ground.contains(i) && g.values[*i] > 2.0).collect();
        let cap = two_set_capacity(&g, &a, &ground).unwrap();
        let brute = brute_energy(&g, &a, &ground);
        assert!((cap - brute).abs() < 1e-8 * (1.0 + brute), "{cap} {brute}");
    }

    #[test]
    fn interval_reduction_equals_enumeration_of_all_intervals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let masses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let conds: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.01..5.0)).collect();
        let g = WeightedGraph::path(&masses, &conds).unwrap();
        let ground = g.default_ground();
        for kappa in [0.01, 0.05, 0.1, 0.2] {
            let fast = measure_capacity_constant(&g, kappa, Family::Intervals, Some(&ground));
            let mut best = f64::INFINITY;
            for i in 0..n {
                for j in i..n {
                    let set: Vec<usize> = (i..=j).collect();
                    if set.iter().any(|k| ground.contains(k)) {
                        continue;
                    }
                    let m = g.mass_of(&set);
                    if m < kappa || m > 0.5 {
                        continue;
                    }
                    best = best.min(two_set_capacity(&g, &set, &ground).unwrap() / m);
                }
            }
            match fast {
                Ok(c) => assert!((c.c_kappa / best - 1.0).abs() < 1e-9, "kappa {kappa}: {} vs {best}", c.c_kappa),
                Err(e) => assert!(best.is_infinite(), "{e}"),
            }
        }
    }

    #[test]
    fn sublevel_family_on_a_path_is_bounded_by_intervals() {
        let p = make_builtin("tilted_double_well_1d", &[0.3, 1.0]).unwrap();
        let g = WeightedGraph::equilibrium_1d(&p, 0.3, -2.5, 2.5, 120).unwrap();
        let iv = measure_capacity_constant(&g, 0.01, Family::Intervals, None).unwrap();
        let sl = measure_capacity_constant(&g, 0.01, Family::Sublevel, None).unwrap();
        assert!(iv.c_kappa <= sl.c_kappa * (1.0 + 1e-8));
    }

    #[test]
    fn bottleneck_dominated_measure() {
        let cb = 1e-6;
        let masses = [0.45, 1e-4, 1e-4, 1e-4, 0.5497];
        let g = WeightedGraph::path(&masses, &[10.0, cb, 10.0, 10.0]).unwrap();
        let c = measure_capacity_constant(&g, 0.4, Family::Intervals, None).unwrap();
        assert_eq!(c.ground, vec![4]);
        let series = 1.0 / (1.0 / 10.0 + 1.0 / cb + 1.0 / 10.0 + 1.0 / 10.0);
        let expect = series / c.set_mass;
        assert!((c.c_kappa / expect - 1.0).abs() < 1e-3);
        assert!((c.c_kappa * 0.45 / cb - 1.0).abs() < 1e-2);
    }

    #[test]
    fn uniform_path_constant_converges_to_the_continuum_value() {
        // Lebesgue on [0, 1], ground [0, 1/2]: A = [j, 1] gives 1/((j - 1/2)(1 - j)),
        // minimized at j = 3/4 (value 16) when kappa <= 1/4, else at j = 1 - kappa.
        let continuum = |k: f64| if k <= 0.25 { 16.0 } else { 1.0 / ((0.5 - k) * k) };
        for n in [256usize, 1024] {
            let g = WeightedGraph::path(&vec![1.0; n], &vec![n as f64; n - 1]).unwrap();
            let mut prev = f64::INFINITY;
            for kappa in [0.4, 0.2, 0.1, 0.05] {
                let c = measure_capacity_constant(&g, kappa, Family::Intervals, None).unwrap().c_kappa;
                assert!(c > 0.0 && c <= prev + 1e-12);
                assert!((c / continuum(kappa) - 1.0).abs() < 8.0 / n as f64, "{n} {kappa} {c}");
                prev = c;
            }
        }
    }

    #[test]
    fn exact_interval_constant_matches_support_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 12;
        let masses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let conds: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.01..5.0)).collect();
        let g = WeightedGraph::path(&masses, &conds).unwrap();
        for kappa in [0.02, 0.1, 0.3] {
            let mut best = f64::INFINITY;
            for i in 0..n {
                for j in i..n {
                    let a: Vec<usize> = (i..=j).collect();
                    let ma = g.mass_of(&a);
                    if ma < kappa || ma > 0.5 {
                        continue;
                    }
                    for lo in 0..=i {
                        for hi in j..n {
                            let ground: Vec<usize> = (0..lo).chain(hi + 1..n).collect();
                            if ground.is_empty() || g.mass_of(&ground) < 0.5 {
                                continue;
                            }
                            best = best.min(two_set_capacity(&g, &a, &ground).unwrap() / ma);
                        }
                    }
                }
            }
            let fast = exact_interval_constant(&g, kappa);
            match fast {
                Ok(c) => assert!((c.c_kappa / best - 1.0).abs() < 1e-9, "{kappa}: {} {best}", c.c_kappa),
                Err(_) => assert!(best.is_infinite()),
            }
            if let (Ok(c), Ok(fixed)) =
                (exact_interval_constant(&g, kappa), measure_capacity_constant(&g, kappa, Family::Intervals, None))
            {
                assert!(c.c_kappa <= fixed.c_kappa * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn poincare_examples() {
        let pi2 = std::f64::consts::PI.powi(2);
        let r = convex_poincare_check(&[0.0], &[1.0], 512).unwrap();
        assert!((r.constant_bound - 1.0 / pi2).abs() < 1e-15);
        assert!((r.discrete_optimal * pi2 - 1.0).abs() < 5e-3);
        assert!(r.discrete_optimal <= r.constant_bound + 1e-6);
        let r = convex_poincare_check(&[0.0], &[2.0], 128).unwrap();
        assert!((r.constant_bound - 4.0 / pi2).abs() < 1e-15);
        assert!(r.discrete_optimal <= r.constant_bound + 1e-6);
        let r = convex_poincare_check(&[0.0, 0.0], &[1.0, 1.0], 32).unwrap();
        assert!((r.constant_bound - 2.0 / pi2).abs() < 1e-15);
        assert!((r.discrete_optimal * pi2 - 1.0).abs() < 5e-3);
        assert!(convex_poincare_check(&[0.0], &[1.0], 16).is_err());
    }

    #[test]
    fn poincare_eigenvalue_matches_closed_form_fem_value() {
        // P1 elements: lambda_h = (6/h^2)(1 - cos(pi h))/(2 + cos(pi h)) on [0, 1]
        for n in [32usize, 100] {
            let h = 1.0 / n as f64;
            let c = (std::f64::consts::PI * h).cos();
            let exact = 6.0 / (h * h) * (1.0 - c) / (2.0 + c);
            let r = convex_poincare_check(&[0.0], &[1.0], n).unwrap();
            assert!((1.0 / r.discrete_optimal / exact - 1.0).abs() < 1e-10);
        }
        // Q1 on a rectangle separates: smallest nonzero is the 1D value of the longer side
        let n = 40;
        let r2 = convex_poincare_check(&[0.0, 0.0], &[2.0, 1.0], n).unwrap();
        let r1 = convex_poincare_check(&[0.0], &[2.0], n).unwrap();
        assert!((r2.discrete_optimal / r1.discrete_optimal - 1.0).abs() < 1e-8);
    }

    fn random_path() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (4usize..14)
            .prop_flat_map(|n| (prop::collection::vec(0.05f64..1.0, n), prop::collection::vec(0.05f64..5.0, n - 1)))
    }

    proptest! {
        #[test]
        fn capacity_is_monotone((mut masses, conds) in random_path(), split in 0.0f64..1.0) {
            let n = masses.len();
            masses[0] = masses.iter().sum::<f64>() * 1.2;
            let g = WeightedGraph::path(&masses, &conds).unwrap();
            let ground = vec![0];
            let k = 1 + ((n - 2) as f64 * split) as usize;
            let small: Vec<usize> = (k..n).filter(|i| i % 2 == 0 || *i == k).collect();
            let big: Vec<usize> = (k..n).collect();
            let cs = two_set_capacity(&g, &small, &ground).unwrap();
            let cb = two_set_capacity(&g, &big, &ground).unwrap();
            prop_assert!(cs <= cb * (1.0 + 1e-9));
            if k > 1 {
                let wider: Vec<usize> = vec![0, 1];
                prop_assert!(two_set_capacity(&g, &big, &wider).unwrap() >= cb * (1.0 - 1e-9));
            }
        }

        #[test]
        fn returned_energy_beats_random_feasible_functions((mut masses, conds) in random_path(), seed in 0u64..1000) {
            let n = masses.len();
            masses[n - 1] = masses.iter().sum::<f64>() * 1.2;
            let g = WeightedGraph::path(&masses, &conds).unwrap();
            let a = vec![0];
            let ground = vec![n - 1];
            let cap = two_set_capacity(&g, &a, &ground).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..100 {
                let mut f: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
                f[0] = 1.0;
                f[n - 1] = 0.0;
                prop_assert!(cap <= g.dirichlet(&f) * (1.0 + 1e-10));
            }
        }
    }
}
