//! Barrier heights `h(x)`, depths `h(x) - V(x)` and the critical depth `d*`.
//!
//! In 1D the only path from `x` to the minimum is the monotone sweep, so `h`
//! is a running maximum. On n-D lattices `h` is the minimax (bottleneck) path
//! value, found by one best-first sweep from the argmin node.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::potential::Potential;

#[derive(Debug, Error, PartialEq)]
pub enum LandscapeError {
    #[error("grid is not sorted")]
    Unsorted,
    #[error("argmin {0:?} is not within one cell of the grid")]
    ArgminOutside(Vec<f64>),
    #[error("resolution {0} is below the minimum of 4")]
    Resolution(usize),
    #[error("potential is not finite at node {0}")]
    NonFinite(usize),
    #[error("expected a {expected}-dimensional potential, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeSummary {
    /// Node coordinates, one `Vec` per node.
    pub grid: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub h: Vec<f64>,
    pub depth: Vec<f64>,
    pub d_star: f64,
    pub witness_node: usize,
    pub argmin_node: usize,
    /// Largest distance from the argmin node along the recovered path.
    pub good_path_radius: Vec<f64>,
    /// Largest change of `V` across one lattice edge: the grid uncertainty of `d_star`.
    pub band: f64,
}

fn finish(
    grid: Vec<Vec<f64>>,
    values: Vec<f64>,
    h: Vec<f64>,
    radius: Vec<f64>,
    argmin_node: usize,
    band: f64,
) -> LandscapeSummary {
    let depth: Vec<f64> = h.iter().zip(&values).map(|(a, b)| a - b).collect();
    let mut witness_node = argmin_node;
    let mut d_star = 0.0;
    for (i, &d) in depth.iter().enumerate() {
        if d > d_star {
            d_star = d;
            witness_node = i;
        }
    }
    LandscapeSummary { grid, values, h, depth, d_star, witness_node, argmin_node, good_path_radius: radius, band }
}

/// Running maximum of `V` outward from the node closest to the argmin.
pub fn barrier_profile_1d(p: &Potential, grid: &[f64]) -> Result<LandscapeSummary, LandscapeError> {
    if p.dimension != 1 {
        return Err(LandscapeError::Dimension { expected: 1, got: p.dimension });
    }
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(LandscapeError::Unsorted);
    }
    let x0 = p.argmin[0];
    let a =
        grid.iter().enumerate().min_by(|x, y| (x.1 - x0).abs().total_cmp(&(y.1 - x0).abs())).map(|(i, _)| i).unwrap();
    let cell = if grid.len() > 1 { grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max) } else { 0.0 };
    if (grid[a] - x0).abs() > cell {
        return Err(LandscapeError::ArgminOutside(p.argmin.clone()));
    }
    let values: Vec<f64> = grid.iter().map(|&x| p.v1(x)).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(LandscapeError::NonFinite(i));
    }
    let n = grid.len();
    let mut h = vec![0.0; n];
    let mut radius = vec![0.0; n];
    h[a] = values[a];
    for i in a + 1..n {
        h[i] = h[i - 1].max(values[i]);
        radius[i] = grid[i] - grid[a];
    }
    for i in (0..a).rev() {
        h[i] = h[i + 1].max(values[i]);
        radius[i] = grid[a] - grid[i];
    }
    let band = values.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    Ok(finish(grid.iter().map(|&x| vec![x]).collect(), values, h, radius, a, band))
}

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    height: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on height, ties by node index
        other.height.total_cmp(&self.height).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Regular lattice with `resolution` nodes per axis on the box `[lo, hi]`.
pub fn lattice(lo: &[f64], hi: &[f64], resolution: usize) -> Vec<Vec<f64>> {
    let d = lo.len();
    let total = resolution.pow(d as u32);
    (0..total)
        .map(|idx| {
            let mut rem = idx;
            (0..d)
                .map(|k| {
                    let i = rem % resolution;
                    rem /= resolution;
                    lo[k] + (hi[k] - lo[k]) * i as f64 / (resolution - 1) as f64
                })
                .collect()
        })
        .collect()
}

/// Axis neighbours of node `idx` on a lattice of `res` nodes per axis in `d` dimensions.
pub fn lattice_neighbours(idx: usize, res: usize, d: usize) -> impl Iterator<Item = usize> {
    let mut out = Vec::with_capacity(2 * d);
    let mut stride = 1;
    for _ in 0..d {
        let coord = (idx / stride) % res;
        if coord > 0 {
            out.push(idx - stride);
        }
        if coord + 1 < res {
            out.push(idx + stride);
        }
        stride *= res;
    }
    out.into_iter()
}

/// Minimax path heights on the lattice, node weights `V`.
pub fn critical_depth_grid(
    p: &Potential,
    lo: &[f64],
    hi: &[f64],
    resolution: usize,
) -> Result<LandscapeSummary, LandscapeError> {
    if resolution < 4 {
        return Err(LandscapeError::Resolution(resolution));
    }
    let d = p.dimension;
    if lo.len() != d || hi.len() != d {
        return Err(LandscapeError::Dimension { expected: d, got: lo.len() });
    }
    let grid = lattice(lo, hi, resolution);
    let values: Vec<f64> = grid.iter().map(|x| p.value(x)).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(LandscapeError::NonFinite(i));
    }
    let dist = |i: usize, j: usize| grid[i].iter().zip(&grid[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let a = (0..grid.len())
        .min_by(|&i, &j| {
            let di: f64 = grid[i].iter().zip(&p.argmin).map(|(x, y)| (x - y).powi(2)).sum();
            let dj: f64 = grid[j].iter().zip(&p.argmin).map(|(x, y)| (x - y).powi(2)).sum();
            di.total_cmp(&dj)
        })
        .unwrap();
    let cell: f64 = (0..d).map(|k| ((hi[k] - lo[k]) / (resolution - 1) as f64).powi(2)).sum::<f64>().sqrt();
    let off: f64 = grid[a].iter().zip(&p.argmin).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    if off > cell {
        return Err(LandscapeError::ArgminOutside(p.argmin.clone()));
    }
    let n = grid.len();
    let (h, parent) = minimax_heights(&values, a, |i| lattice_neighbours(i, resolution, d));
    // bounding radius of each recovered path
    let mut radius = vec![f64::NAN; n];
    radius[a] = 0.0;
    fn resolve(i: usize, parent: &[usize], radius: &mut [f64], di: &dyn Fn(usize) -> f64) -> f64 {
        if !radius[i].is_nan() {
            return radius[i];
        }
        // walk up iteratively to avoid deep recursion
        let mut chain = vec![i];
        let mut cur = parent[i];
        while radius[cur].is_nan() {
            chain.push(cur);
            cur = parent[cur];
        }
        let mut r = radius[cur];
        for &c in chain.iter().rev() {
            r = r.max(di(c));
            radius[c] = r;
        }
        radius[i]
    }
    let from_argmin = |i: usize| dist(i, a);
    for i in 0..n {
        resolve(i, &parent, &mut radius, &from_argmin);
    }
    let mut band: f64 = 0.0;
    for i in 0..n {
        for j in lattice_neighbours(i, resolution, d) {
            band = band.max((values[i] - values[j]).abs());
        }
    }
    Ok(finish(grid, values, h, radius, a, band))
}

/// Best-first sweep: `h[i]` = min over paths from `source` of the max node value.
/// Returns heights and the parent of each node in the path tree.
pub fn minimax_heights<I: Iterator<Item = usize>>(
    values: &[f64],
    source: usize,
    neighbours: impl Fn(usize) -> I,
) -> (Vec<f64>, Vec<usize>) {
    let (h, parent, _) = minimax_sweep(values, source, neighbours);
    (h, parent)
}

/// [`minimax_heights`] plus the order in which nodes were settled. Every
/// prefix of that order is connected and has non-decreasing heights.
pub fn minimax_sweep<I: Iterator<Item = usize>>(
    values: &[f64],
    source: usize,
    neighbours: impl Fn(usize) -> I,
) -> (Vec<f64>, Vec<usize>, Vec<usize>) {
    let n = values.len();
    let mut h = vec![f64::INFINITY; n];
    let mut parent: Vec<usize> = (0..n).collect();
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut order = Vec::with_capacity(n);
    h[source] = values[source];
    heap.push(Entry { height: h[source], node: source });
    while let Some(Entry { height, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        order.push(node);
        for nb in neighbours(node) {
            if done[nb] {
                continue;
            }
            let cand = height.max(values[nb]);
            if cand < h[nb] {
                h[nb] = cand;
                parent[nb] = node;
                heap.push(Entry { height: cand, node: nb });
            }
        }
    }
    (h, parent, order)
}

/// Steepest-descent basins: `label[i]` is the local-minimum node reached from
/// `i` by repeatedly moving to the lowest strictly lower neighbour.
pub fn descent_basins<I: Iterator<Item = usize>>(values: &[f64], neighbours: impl Fn(usize) -> I) -> Vec<usize> {
    let n = values.len();
    let down: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = i;
            for j in neighbours(i) {
                if values[j] < values[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    let mut label = vec![usize::MAX; n];
    for i in 0..n {
        let mut path = vec![i];
        let mut u = i;
        while label[u] == usize::MAX && down[u] != u {
            u = down[u];
            path.push(u);
        }
        let root = if label[u] != usize::MAX { label[u] } else { u };
        for v in path {
            label[v] = root;
        }
    }
    label
}

/// Neighbours on a 1D chain of `n` nodes.
pub fn chain_neighbours(i: usize, n: usize) -> impl Iterator<Item = usize> {
    let left = (i > 0).then(|| i - 1);
    let right = (i + 1 < n).then_some(i + 1);
    left.into_iter().chain(right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::make_builtin;

    #[test]
    fn descent_basins_split_double_well() {
        let p = make_builtin("tilted_double_well_1d", &[0.3]).unwrap();
        let xs: Vec<f64> = (0..201).map(|i| -2.0 + 0.02 * i as f64).collect();
        let v: Vec<f64> = xs.iter().map(|x| p.v1(*x)).collect();
        let lab = descent_basins(&v, |i| chain_neighbours(i, xs.len()));
        let mut roots: Vec<usize> = lab.clone();
        roots.sort_unstable();
        roots.dedup();
        assert_eq!(roots.len(), 2);
        // the split sits at the barrier top
        let cut = (1..xs.len()).find(|&i| lab[i] != lab[i - 1]).unwrap();
        assert!(xs[cut].abs() < 0.1, "{}", xs[cut]);
    }

    /// Exhaustive minimum over all simple paths of the path maximum.
    fn brute_force(values: &[f64], adj: &[Vec<usize>], source: usize) -> Vec<f64> {
        let n = values.len();
        let mut best = vec![f64::INFINITY; n];
        let mut visited = vec![false; n];
        fn dfs(u: usize, cur: f64, values: &[f64], adj: &[Vec<usize>], visited: &mut [bool], best: &mut [f64]) {
            best[u] = best[u].min(cur);
            for &v in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    dfs(v, cur.max(values[v]), values, adj, visited, best);
                    visited[v] = false;
                }
            }
        }
        visited[source] = true;
        dfs(source, values[source], values, adj, &mut visited, &mut best);
        best
    }

    /// Threshold connectivity: the smallest level at which `i` joins the source.
    fn threshold_oracle(values: &[f64], adj: &[Vec<usize>], source: usize) -> Vec<f64> {
        let mut levels: Vec<f64> = values.to_vec();
        levels.sort_by(|a, b| a.total_cmp(b));
        levels.dedup();
        let n = values.len();
        let mut out = vec![f64::INFINITY; n];
        for &lev in &levels {
            if values[source] > lev {
                continue;
            }
            let mut seen = vec![false; n];
            let mut stack = vec![source];
            seen[source] = true;
            while let Some(u) = stack.pop() {
                if out[u].is_infinite() {
                    out[u] = lev;
                }
                for &v in &adj[u] {
                    if !seen[v] && values[v] <= lev {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn quadratic_has_zero_depth() {
        let p = make_builtin("quadratic", &[]).unwrap();
        let grid: Vec<f64> = (0..1001).map(|i| -5.0 + 0.01 * i as f64).collect();
        let s = barrier_profile_1d(&p, &grid).unwrap();
        assert_eq!(s.d_star, 0.0);
        let q = make_builtin("quadratic", &[2.0]).unwrap();
        let s = critical_depth_grid(&q, &[-3.0, -3.0], &[3.0, 3.0], 64).unwrap();
        assert_eq!(s.d_star, 0.0);
    }

    #[test]
    fn double_well_depth_is_barrier_minus_false_well() {
        let p = make_builtin("tilted_double_well_1d", &[0.3]).unwrap();
        let grid: Vec<f64> = (0..2001).map(|i| -2.0 + 0.002 * i as f64).collect();
        let s = barrier_profile_1d(&p, &grid).unwrap();
        // exhaustive scan: h(x) for x left of the argmin is the max of V on [x, argmin]
        let a = s.argmin_node;
        let mut d_star: f64 = 0.0;
        let mut witness = a;
        for i in 0..grid.len() {
            let (l, r) = if i < a { (i, a) } else { (a, i) };
            let hmax = s.values[l..=r].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hmax - s.values[i] > d_star {
                d_star = hmax - s.values[i];
                witness = i;
            }
        }
        assert_eq!(s.d_star, d_star);
        assert_eq!(s.witness_node, witness);
        assert!(grid[witness] < -0.8 && grid[witness] > -1.1);
    }

    #[test]
    fn two_node_grid() {
        let p = make_builtin("quadratic", &[]).unwrap();
        let s = barrier_profile_1d(&p, &[0.0, 0.7]).unwrap();
        assert_eq!(s.h[1], p.v1(0.7));
        assert!(barrier_profile_1d(&p, &[1.0, 0.0]).is_err());
        assert!(barrier_profile_1d(&p, &[3.0, 4.0]).is_err());
    }

    #[test]
    fn lattice_sweep_matches_running_max_in_1d() {
        let p = make_builtin("tilted_double_well_1d", &[0.3]).unwrap();
        let s = critical_depth_grid(&p, &[-2.0], &[2.0], 401).unwrap();
        let nodes: Vec<f64> = s.grid.iter().map(|x| x[0]).collect();
        let r = barrier_profile_1d(&p, &nodes).unwrap();
        assert_eq!(s.h, r.h);
        assert_eq!(s.d_star, r.d_star);
        assert_eq!(s.good_path_radius, r.good_path_radius);
    }

    #[test]
    fn small_lattices_match_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let res = 4;
            let values: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..1.0)).collect();
            let adj: Vec<Vec<usize>> = (0..16).map(|i| lattice_neighbours(i, res, 2).collect()).collect();
            let src = rng.gen_range(0..16);
            let (h, _) = minimax_heights(&values, src, |i| adj[i].clone().into_iter());
            assert_eq!(h, brute_force(&values, &adj, src));
        }
    }

    #[test]
    fn multiwell_depth_matches_threshold_oracle() {
        // secondary dip 0.7 deep below its saddle
        let p = make_builtin("multiwell_2d", &[0.3, 0.0, 0.0, 2.0, 0.6, 2.5, 0.0, 1.2, 0.5]).unwrap();
        let lo = [-2.0, -2.5];
        let hi = [4.5, 2.5];
        let coarse = critical_depth_grid(&p, &lo, &hi, 12).unwrap();
        let adj: Vec<Vec<usize>> = (0..144).map(|i| lattice_neighbours(i, 12, 2).collect()).collect();
        let oracle = threshold_oracle(&coarse.values, &adj, coarse.argmin_node);
        assert_eq!(coarse.h, oracle);
        let fine = critical_depth_grid(&p, &lo, &hi, 301).unwrap();
        assert!((coarse.d_star - fine.d_star).abs() <= coarse.band + 1e-12);
        assert!(fine.grid[fine.witness_node][0] > 1.5);
    }

    #[test]
    fn refinement_does_not_raise_heights_beyond_band() {
        let p = make_builtin("multiwell_2d", &[]).unwrap();
        let lo = [-3.0, -3.0];
        let hi = [5.0, 3.0];
        let coarse = critical_depth_grid(&p, &lo, &hi, 41).unwrap();
        let fine = critical_depth_grid(&p, &lo, &hi, 81).unwrap();
        for i in 0..41 {
            for j in 0..41 {
                let c = coarse.h[j * 41 + i];
                let f = fine.h[2 * j * 81 + 2 * i];
                assert!(f <= c + coarse.band);
            }
        }
    }
}
