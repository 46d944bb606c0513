//! Subcommand bodies. Each returns its artifacts or a numerical abort naming
//! the module that failed.

use std::fmt::Display;

use anneal_core::capacity::{exact_interval_constant, measure_capacity_constant, Family, WeightedGraph};
use anneal_core::equilibrium::{laplace_asymptote, measure_statistics, EquilibriumMeasure, Probe};
use anneal_core::fpe1d::{entropy_derivative_residual, evolve, moment_curve, DensityTrajectory, FpeGrid, StepOptions};
use anneal_core::landscape::{
    barrier_profile_1d, chain_neighbours, critical_depth_grid, descent_basins, LandscapeSummary,
};
use anneal_core::orlicz::run_suites;
use anneal_core::potential::Potential;
use anneal_core::schedule::Schedule;
use anneal_core::sde::{simulate_ensemble, EnsembleRun, InitSampler, Observables};
use anneal_core::wpi::{
    beta_for_power_tail, compensating_functions, full_wpi_check, hardy_profile, one_point_from_capacity,
    one_point_verify, one_point_verify_functions, Beta, OnePointNorm, VerifyReport,
};
use serde::Serialize;
use serde_json::json;

use crate::artifacts::{Artifact, Csv};
use crate::config::{Command, FamilyCfg, FpeInit, InitCfg, Validated};

#[derive(Debug)]
pub struct Abort {
    pub module: &'static str,
    pub message: String,
}

fn abort<E: Display>(module: &'static str) -> impl Fn(E) -> Abort {
    move |e| Abort { module, message: e.to_string() }
}

pub fn execute(v: &Validated) -> Result<Vec<Artifact>, Abort> {
    match v.command {
        Command::Landscape => landscape(v),
        Command::Equilibrium => equilibrium(v),
        Command::Simulate => simulate(v),
        Command::Fpe => fpe(v),
        Command::Hardy => hardy(v),
        Command::Capacity => capacity(v),
        Command::Verify => verify(v),
        Command::Dichotomy => dichotomy(v),
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn profile_1d(p: &Potential, lo: f64, hi: f64, n: usize) -> Result<LandscapeSummary, Abort> {
    barrier_profile_1d(p, &linspace(lo, hi, n)).map_err(abort("landscape"))
}

/// Mass of the cells labelled `root`.
fn basin_mass(labels: &[usize], m: &[f64], h: f64, root: usize) -> f64 {
    labels.iter().zip(m).filter(|(l, _)| **l == root).map(|(_, m)| m * h).sum()
}

fn landscape(v: &Validated) -> Result<Vec<Artifact>, Abort> {
    let c = v.config.landscape.as_ref().expect("validated");
    let p = &v.potential;
    let s = if p.dimension == 1 {
        profile_1d(p, c.lo[0], c.hi[0], c.resolution)?
    } else {
        critical_depth_grid(p, &c.lo, &c.hi, c.resolution).map_err(abort("landscape"))?
    };
    let mut header = vec!["node_index".to_string()];
    if p.dimension == 1 {
        header.push("x".into());
    } else {
        header.extend((0..p.dimension).map(|k| format!("x{k}")));
    }
    header.extend(["V", "h", "depth"].map(String::from));
    let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut csv = Csv::new(&refs);
    for i in 0..s.values.len() {
        let mut row = vec![i as f64];
        row.extend(&s.grid[i]);
        row.extend([s.values[i], s.h[i], s.depth[i]]);
        csv.row(&row);
    }
    let summary = json!({
        "d_star": s.d_star,
        "band": s.band,
        "witness": s.grid[s.witness_node],
        "argmin": s.grid[s.argmin_node],
        "nodes": s.values.len(),
    });
    Ok(vec![csv.finish("landscape.csv"), Artifact::json("landscape.json", &summary)])
}

fn equilibrium(v: &Validated) -> Result<Vec<Artifact>, Abort> {
    let c = v.config.equilibrium.as_ref().expect("validated");
    let p = &v.potential;
    let tail_col = format!("tail_mass_r{}", c.tail_radius);
    let mut csv = Csv::new(&["sigma", "Z", "asymptote", "ratio", "median", &tail_col, "mean_V"]);
    let mut rows = Vec::new();
    for &sigma in &c.sigmas {
        let m = EquilibriumMeasure::new(p, sigma).map_err(abort("equilibrium"))?;
        let lap = laplace_asymptote(p, sigma).unwrap_or(f64::NAN);
        let mean_v = m.expectation(&|x| p.value(x)).map_err(abort("equilibrium"))?;
        let median = if p.dimension == 1 {
            measure_statistics(&m, Probe::Median).map_err(abort("equilibrium"))?
        } else {
            f64::NAN
        };
        let tail = measure_statistics(&m, Probe::TailMass(c.tail_radius)).map_err(abort("equilibrium"))?;
        csv.row(&[sigma, m.z, lap, m.z / lap, median, tail, mean_v]);
        rows.push(json!({
            "sigma": sigma, "Z": m.z, "asymptote": finite(lap), "ratio": finite(m.z / lap),
            "median": finite(median), "tail_radius": c.tail_radius, "tail_mass": tail, "mean_V": mean_v,
        }));
    }
    Ok(vec![csv.finish("equilibrium.csv"), Artifact::json("equilibrium.json", &rows)])
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn simulate(v: &Validated) -> Result<Vec<Artifact>, Abort> {
    let c = v.config.simulate.as_ref().expect("validated");
    let p = &v.potential;
    let schedule = v.schedule.expect("validated");
    let init = match &c.init {
        None => InitSampler::Point(p.argmin.clone()),
        Some(InitCfg::Point { x }) => InitSampler::Point(x.clone()),
        Some(InitCfg::Box { lo, hi }) => InitSampler::UniformBox { lo: lo.clone(), hi: hi.clone() },
    };
    let run = EnsembleRun {
        potential: p.clone(),
        schedule,
        n_traj: c.n_traj,
        t0: c.t0,
        t_end: c.t_end,
        dt: c.dt,
        dt_exponent: c.dt_exponent,
        seed: v.seed.expect("validated"),
        init,
    };
    let obs = Observables { radii: c.radii.clone(), histogram: (c.histogram_lo, c.histogram_hi, c.histogram_bins) };
    let s = simulate_ensemble(&run, &c.record_times, &obs).map_err(abort("sde"))?;

    let mut header: Vec<String> = ["t", "sigma", "mean_V", "se_V", "mean_V2", "se_V2"].map(String::from).to_vec();
    header.extend(s.radii.iter().map(|r| format!("success_r{r}")));
    let refs: Vec<&str> = header.iter().map(|h| h.as_str()).collect();
    let mut csv = Csv::new(&refs);
    let mut hists = Vec::new();
    for k in 0..s.times.len() {
        let mut row = vec![s.times[k], schedule.sigma(s.times[k]), s.mean_v[k], s.se_v[k], s.mean_v2[k], s.se_v2[k]];
        row.extend(&s.success[k]);
        csv.row(&row);
        let hg = &s.histograms[k];
        let w = (hg.hi - hg.lo) / hg.mass.len() as f64;
        let mut hist = Csv::new(&["bin_lo", "bin_hi", "mass"]);
        for (b, m) in hg.mass.iter().enumerate() {
            hist.row(&[hg.lo + b as f64 * w, hg.lo + (b + 1) as f64 * w, *m]);
        }
        hists.push(hist.finish(&format!("histogram_{k}.csv")));
    }
    let last = s.times.len() - 1;
    let summary = json!({
        "n_traj": s.n_traj,
        "steps_per_trajectory": s.steps_per_trajectory,
        "wall_incidents": s.wall_incidents,
        "max_drift_step": s.max_drift_step,
        "t_final": s.times[last],
        "mean_v_final": s.mean_v[last],
        "se_v_final": s.se_v[last],
        "radii": s.radii,
        "success_final": s.success[last],
        "histogram_times": s.times,
    });
    let mut out = vec![csv.finish("simulate.csv")];
    out.extend(hists);
    out.push(Artifact::json("simulate.json", &summary));
    Ok(out)
}

fn fpe_series(traj: &DensityTrajectory, name: &str) -> Artifact {
    let m1 = moment_curve(traj, 1);
    let m2 = moment_curve(traj, 2);
    let mut csv =
        Csv::new(&["t", "sigma", "I", "J", "tv", "meanV", "meanV2", "envelope_ratio_p2", "identity_residual", "clock"]);
    for k in 0..traj.times.len() {
        // the residual needs a record on each side
        let residual = entropy_derivative_residual(traj, k).unwrap_or(f64::NAN);
        csv.row(&[
            traj.times[k],
            traj.sigma[k],
            traj.free_energy[k],
            traj.pseudo_entropy[k],
            traj.tv[k],
            m1.moment[k],
            m2.moment[k],
            m2.envelope_ratio[k],
            residual,
            traj.clock[k],
        ]);
    }
    csv.finish(name)
}

fn fpe(v: &Validated) -> Result<Vec<Artifact>, Abort> {
    let c = v.config.fpe.as_ref().expect("validated");
    let p = &v.potential;
    let grid = FpeGrid::new(c.lo, c.hi, c.cells).map_err(abort("fpe1d"))?;
    let m0 = match c.init {
        None => grid.gaussian(p.argmin[0], 0.01),
        Some(FpeInit::Gaussian { mean, var }) => grid.gaussian(mean, var),
        Some(FpeInit::Equilibrium { sigma }) => grid.equilibrium(p, sigma),
    };
    let opts = StepOptions {
        dt0: c.dt0,
        growth: c.growth,
        dt_max: c.dt_max.unwrap_or(f64::INFINITY),
        cfl: c.cfl,
        boundary_tol: 1e-10,
    };
    let schedule = v.schedule.expect("validated");
    let traj = evolve(p, &schedule, &grid, &m0, c.t0, c.t_end, &c.record_times, &opts).map_err(abort("fpe1d"))?;
    let mut out = vec![fpe_series(&traj, "fpe.csv")];
    if c.write_density {
        let mut d = Csv::new(&["t", "x", "m"]);
        for (k, m) in traj.m.iter().enumerate() {
            for (x, mi) in grid.x.iter().zip(m) {
                d.row(&[traj.times[k], *x, *mi]);
            }
        }
        out.push(d.finish("density.csv"));
    }
    let last = traj.times.len() - 1;
    out.push(Artifact::json(
        "fpe.json",
        &json!({
            "steps": traj.steps,
            "max_mass_drift": traj.max_mass_drift,
            "free_energy_initial": traj.free_energy[0],
            "free_energy_final": traj.free_energy[last],
            "tv_final": traj.tv[last],
            "t_final": traj.times[last],
        }),
    ));
    Ok(out)
}

fn beta_of(alpha: Option<f64>) -> Result<Beta, Abort> {
    alpha.map_or(Ok(Beta::constant(1.0)), |a| beta_for_power_tail(a).map_err(abort("wpi")))
}

fn hardy(v: &Validated) -> Result<Vec<Artifact>, Abort> {
    let c = v.config.hardy.as_ref().expect("validated");
    let beta = beta_of(c.tail_alpha)?;
    let mut out = Vec::new();
    let mut rows = Vec::new();
    for (k, &sigma) in c.sigmas.iter().enumerate() {
        let rep = hardy_profile(&v.potential, sigma, &beta, c.lo, c.hi, c.nodes).map_err(abort("wpi"))?;
        let mut csv = Csv::new(&["x", "B", "b"]);
        for i in 0..rep.x.len() {
            csv.row(&[rep.x[i], rep.ln_profile_upper[i].exp(), rep.ln_profile_lower[i].exp()]);
        }
        out.push(csv.finish(&format!("hardy_{k}.csv")));
        rows.push(json!({
            "sigma": sigma,
            "median": rep.median,
            "B_sup": finite(rep.b_sup_upper()),
            "b_sup": finite(rep.b_sup_lower()),
            "ln_B_sup": rep.ln_b_sup_upper,
            "ln_b_sup": rep.ln_b_sup_lower,
            "d_star_estimate": sigma * rep.ln_b_sup(),
        }));
    }
    out.push(Artifact::json("hardy.json", &rows));
    Ok(out)
}

/// Labels of the steepest-descent basins of the node values and the label of
/// the basin holding the lowest node.
fn graph_basins(g: &WeightedGraph) -> (Vec<usize>, usize) {
    let n = g.len();
    let labels = descent_basins(&g.values, |i| chain_neighbours(i, n));
    let root = labels[g.argmin_node()];
    (labels, root)
}

#[derive(Serialize)]
struct CapacityRow {
    sigma: f64,
    kappa: f64,
    #[serde(rename = "C_kappa")]
    c_kappa: f64,
    #[serde(rename = "ln_C_kappa")]
    ln_c_kappa: f64,
    #[serde(rename = "sigma_log_inv_C")]
    sigma_ln_inv_c: f64,
    set_lo: f64,
    set_hi: f64,
    set_mass: f64,
    linf: (f64, f64),
    orlicz: (f64, f64),
}

fn capacity(v: &Validated) -> Result<Vec<Artifact>, Abort> {
    let c = v.config.capacity.as_ref().expect("validated");
    let p = &v.potential;
    let h = (c.hi - c.lo) / c.cells as f64;
    let mut csv =
        Csv::new(&["sigma", "kappa", "C_kappa", "ln_C_kappa", "sigma_log_inv_C", "set_lo", "set_hi", "set_mass"]);
    let mut rows = Vec::new();
    for &sigma in &c.sigmas {
        let g = WeightedGraph::equilibrium_1d(p, sigma, c.lo, c.hi, c.cells).map_err(abort("capacity"))?;
        let kappa = match c.kappa {
            Some(k) => k,
            None => {
                let (labels, root) = graph_basins(&g);
                let off: f64 = (0..g.len()).filter(|&i| labels[i] != root).map(|i| g.masses[i]).sum();
                if !(off > 0.0) {
                    return Err(Abort {
                        module: "capacity",
                        message: "no mass outside the main basin; set kappa".into(),
                    });
                }
                (c.kappa_fraction * off).min(0.49)
            }
        };
        let ck = match c.family {
            FamilyCfg::Intervals => measure_capacity_constant(&g, kappa, Family::Intervals, None),
            FamilyCfg::Sublevel => measure_capacity_constant(&g, kappa, Family::Sublevel, None),
            FamilyCfg::Exact => exact_interval_constant(&g, kappa),
        }
        .map_err(abort("capacity"))?;
        let x = |i: usize| c.lo + (i as f64 + 0.5) * h;
        let (a, b) = (x(ck.set[0]), x(*ck.set.last().expect("nonempty set")));
        let scaled = -sigma * ck.ln_c_kappa;
        csv.row(&[sigma, kappa, ck.c_kappa, ck.ln_c_kappa, scaled, a, b, ck.set_mass]);
        let op = one_point_from_capacity(kappa, ck.c_kappa).ok();
        rows.push(CapacityRow {
            sigma,
            kappa,
            c_kappa: ck.c_kappa,
            ln_c_kappa: ck.ln_c_kappa,
            sigma_ln_inv_c: scaled,
            set_lo: a,
            set_hi: b,
            set_mass: ck.set_mass,
            linf: op.map_or((kappa, f64::NAN), |o| o.linf),
            orlicz: op.map_or((f64::NAN, f64::NAN), |o| o.orlicz),
        });
    }
    // serde_json writes NaN as null
    Ok(vec![csv.finish("capacity.csv"), Artifact::json("capacity.json", &rows)])
}

fn report_json(r: &VerifyReport, pass: bool) -> serde_json::Value {
    json!({
        "trials": r.trials,
        "violations": r.violations,
        "worst_margin": finite(r.worst_margin),
        "pass": pass,
    })
}

fn verify(v: &Validated) -> Result<Vec<Artifact>, Abort> {
    let c = v.config.verify.as_ref().expect("validated");
    let p = &v.potential;
    let seed = v.seed.expect("validated");
    let mut all_pass = true;

    let suites: Vec<serde_json::Value> = run_suites(c.trials, seed)
        .iter()
        .map(|s| {
            let pass = s.violations == 0;
            all_pass &= pass;
            json!({
                "name": s.name,
                "trials": s.trials,
                "violations": s.violations,
                "worst_margin": finite(s.worst_margin),
                "pass": pass,
            })
        })
        .collect();

    let g = WeightedGraph::equilibrium_1d(p, c.sigma, c.lo, c.hi, c.cells).map_err(abort("capacity"))?;
    let ck = exact_interval_constant(&g, c.kappa).map_err(abort("capacity"))?;
    let op = one_point_from_capacity(c.kappa, ck.c_kappa).map_err(abort("wpi"))?;
    let lin = one_point_verify(&g, op.linf.0, op.linf.1, OnePointNorm::Linf, c.corpus_size, seed);
    let orl = one_point_verify(&g, op.orlicz.0, op.orlicz.1, OnePointNorm::Orlicz, c.corpus_size, seed);
    all_pass &= lin.violations == 0 && orl.violations == 0;

    // r = 0 and half the constant must fail on the indicator of a minor basin
    let (labels, root) = graph_basins(&g);
    let minor: Vec<f64> = labels.iter().map(|l| if *l != root { 1.0 } else { 0.0 }).collect();
    let target = if minor.iter().any(|x| *x > 0.0) {
        minor
    } else {
        (0..g.len()).map(|i| if ck.set.contains(&i) { 1.0 } else { 0.0 }).collect()
    };
    let neg = one_point_verify_functions(&g, 0.0, 0.5 * op.orlicz.1, OnePointNorm::Orlicz, &[target]);
    let neg_pass = neg.violations >= 1;
    all_pass &= neg_pass;

    let d_star = profile_1d(p, c.lo, c.hi, 4001)?.d_star;
    let rep = hardy_profile(p, c.sigma, &Beta::constant(1.0), c.lo, c.hi, 20_001).map_err(abort("wpi"))?;
    let rep = compensating_functions(rep, d_star);
    let r_grid: Vec<f64> = (0..8).map(|k| 1e-4 * 10f64.powf(0.5 * k as f64)).collect();
    let (full_orl, full_lin) = full_wpi_check(&rep, &g, &r_grid, c.corpus_size.min(500), seed);
    all_pass &= full_orl.violations == 0 && full_lin.violations == 0;

    let summary = json!({
        "all_pass": all_pass,
        "suites": suites,
        "one_point": {
            "kappa": c.kappa,
            "c_kappa": ck.c_kappa,
            "linf": { "r": op.linf.0, "c_r": op.linf.1, "result": report_json(&lin, lin.violations == 0) },
            "orlicz": { "r": op.orlicz.0, "c_r": op.orlicz.1, "result": report_json(&orl, orl.violations == 0) },
        },
        "negative_control": report_json(&neg, neg_pass),
        "full_wpi": {
            "orlicz": report_json(&full_orl, full_orl.violations == 0),
            "linf": report_json(&full_lin, full_lin.violations == 0),
        },
    });
    Ok(vec![Artifact::json("verify.json", &summary)])
}

fn dichotomy(v: &Validated) -> Result<Vec<Artifact>, Abort> {
    let c = v.config.dichotomy.as_ref().expect("validated");
    let p = &v.potential;
    let ls = profile_1d(p, c.landscape_lo, c.landscape_hi, c.landscape_resolution)?;
    let d = ls.d_star;
    if !(d > 0.0) {
        return Err(Abort { module: "landscape", message: "potential has no barrier (d* = 0)".into() });
    }
    let grid = FpeGrid::new(c.lo, c.hi, c.cells).map_err(abort("fpe1d"))?;
    let values: Vec<f64> = grid.x.iter().map(|&x| p.v1(x)).collect();
    let n = grid.len();
    let labels = descent_basins(&values, |i| chain_neighbours(i, n));
    let true_cell = (0..n).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("nonempty grid");
    let true_root = labels[true_cell];
    let false_root = (0..n)
        .filter(|&i| labels[i] == i && i != true_root)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .ok_or(Abort { module: "landscape", message: "no secondary well on the grid".into() })?;
    let x_false = grid.x[false_root];
    let m0 = grid.gaussian(x_false, c.init_var);
    let opts = StepOptions { dt0: c.dt0, growth: c.growth, dt_max: c.dt_max, cfl: None, boundary_tol: 1e-10 };
    let a = c.t_end * 1e-4;
    let records: Vec<f64> = (0..c.records).map(|k| a * (c.t_end / a).powf(k as f64 / (c.records - 1) as f64)).collect();
    let run = |factor: f64| -> Result<DensityTrajectory, Abort> {
        let s = Schedule::logarithmic(factor * d, c.t_offset).map_err(abort("schedule"))?;
        evolve(p, &s, &grid, &m0, 0.0, c.t_end, &records, &opts).map_err(abort("fpe1d"))
    };
    let (sup, sub) = rayon::join(|| run(c.factor_super), || run(c.factor_sub));
    let (sup, sub) = (sup?, sub?);
    let series = |traj: &DensityTrajectory, name: &str| -> Artifact {
        let mut csv = Csv::new(&["t", "sigma", "free_energy", "mass_true", "mass_false"]);
        for k in 0..traj.times.len() {
            csv.row(&[
                traj.times[k],
                traj.sigma[k],
                traj.free_energy[k],
                basin_mass(&labels, &traj.m[k], grid.h, true_root),
                basin_mass(&labels, &traj.m[k], grid.h, false_root),
            ]);
        }
        csv.finish(name)
    };
    let ls_ = sup.times.len() - 1;
    let lb = sub.times.len() - 1;
    let summary = json!({
        "d_star": d,
        "band": ls.band,
        "x_true": grid.x[true_root],
        "x_false": x_false,
        "t_end": c.t_end,
        "c_super": c.factor_super * d,
        "c_sub": c.factor_sub * d,
        "mass_true_well_super": basin_mass(&labels, &sup.m[ls_], grid.h, true_root),
        "mass_true_well_sub": basin_mass(&labels, &sub.m[lb], grid.h, true_root),
        "mass_false_well_sub": basin_mass(&labels, &sub.m[lb], grid.h, false_root),
        "I_initial_super": sup.free_energy[0],
        "I_final_super": sup.free_energy[ls_],
    });
    Ok(vec![
        series(&sup, "dichotomy_super.csv"),
        series(&sub, "dichotomy_sub.csv"),
        Artifact::json("dichotomy.json", &summary),
    ])
}
