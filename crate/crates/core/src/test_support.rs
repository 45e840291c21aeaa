//! Shared fixtures for unit tests.

use alloc::vec::Vec;
use rand::Rng;

use crate::basis::{build_basis, BasisFamily, BasisLayout, BasisSystem};
use crate::geometry::{build_quadrature, Region};
use crate::model::{random_feasible_coeffs, ModelParams, ScoreParams};

pub fn unit_bspline(spans: usize) -> BasisSystem {
    let r = Region::interval(0.0, 1.0).unwrap();
    let quad = build_quadrature(&r, 60).unwrap();
    build_basis(BasisFamily::CubicBSpline, &r, &BasisLayout::EquispacedKnots { spans }, &quad).unwrap()
}

pub fn random_feasible_model<R: Rng>(basis: &BasisSystem, p: usize, rng: &mut R) -> ModelParams {
    let coeffs: Vec<Vec<f64>> = (0..p).map(|_| random_feasible_coeffs(basis.integrals(), rng)).collect();
    let alphas: Vec<f64> = (0..p).map(|_| 0.5 + 4.0 * rng.random::<f64>()).collect();
    let beta = 0.3 + 2.0 * rng.random::<f64>();
    ModelParams::new(coeffs, ScoreParams::new(alphas, beta).unwrap(), basis).unwrap()
}
