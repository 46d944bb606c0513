//! Numerical toolkit for annealing diffusions `dX = sqrt(sigma(t)) dB - grad V(X)/2 dt`:
//! energy landscapes, equilibrium measures, Fokker-Planck evolution, Monte
//! Carlo ensembles, Orlicz norms, capacities and weak Poincare inequalities.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod equilibrium;
pub mod fpe1d;
pub mod landscape;
pub mod numerics;
pub mod orlicz;
pub mod potential;
pub mod schedule;
pub mod sde;
pub mod wpi;
