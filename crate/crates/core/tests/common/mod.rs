#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use amalgam::algebra::{Algebra, ConditionalExpectation, UnitalInclusion};
use amalgam::cli::config::Model;
use amalgam::cli::{parse_config, SuiteConfig};
use amalgam::fock::{FockModule, ReducedWord};
use amalgam::freespace::Letter;
use amalgam::hilbmod::gns_module;
use amalgam::numerics::{diag, r, CMat, Tolerance, C64};
use rand::Rng;

pub fn tol() -> Tolerance {
    Tolerance::default()
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.json"))
}

pub fn fixture(name: &str) -> SuiteConfig {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture exists");
    parse_config(&text).expect("fixture parses")
}

pub fn model(cfg: &SuiteConfig) -> Model {
    Model::new(cfg).expect("fixture model builds")
}

pub fn scalar_inclusion(a: &Arc<Algebra>) -> UnitalInclusion {
    let unit = a.one();
    UnitalInclusion::new(Algebra::scalars(1), a.clone(), move |x| &unit * x[(0, 0)], &tol()).unwrap()
}

/// State `x ↦ tr(h x) / n` on `a`, as an expectation onto the scalars.
pub fn density_state(a: &Arc<Algebra>, h: &CMat) -> ConditionalExpectation {
    let n = a.ambient() as f64;
    let h = h.clone();
    ConditionalExpectation::new(scalar_inclusion(a), move |x| CMat::from_element(1, 1, (&h * x).trace() / r(n)), &tol())
        .unwrap()
}

pub fn trace_state(a: &Arc<Algebra>) -> ConditionalExpectation {
    density_state(a, &CMat::identity(a.ambient(), a.ambient()))
}

/// Compression of `M_n` onto its diagonal.
pub fn diagonal_compression(n: usize) -> ConditionalExpectation {
    let t = tol();
    let inc = UnitalInclusion::subalgebra(Algebra::diagonal(n, &t), Algebra::full(n, &t), &t).unwrap();
    ConditionalExpectation::new(inc, move |x| diag(&(0..n).map(|i| x[(i, i)]).collect::<Vec<_>>()), &t).unwrap()
}

/// Positive definite density with normalized trace one.
pub fn random_density<R: Rng>(rng: &mut R, n: usize) -> CMat {
    let x = CMat::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let h = &x * x.adjoint() + CMat::identity(n, n) * r(0.2);
    let scale = h.trace().re / n as f64;
    h / r(scale)
}

pub fn fock(ces: &[ConditionalExpectation], truncation: usize) -> FockModule {
    let factors = ces.iter().map(|ce| gns_module(ce, &tol()).unwrap()).collect();
    FockModule::build(factors, truncation, &tol()).unwrap()
}

/// Alternating word of centered random letters.
pub fn centered_word<R: Rng>(rng: &mut R, ces: &[ConditionalExpectation], len: usize) -> ReducedWord {
    let mut w = ReducedWord::empty();
    let mut last = None;
    for _ in 0..len {
        let mut i = rng.random_range(0..ces.len());
        if Some(i) == last {
            i = (i + 1) % ces.len();
        }
        last = Some(i);
        let a = amalgam::sampling::random_element(rng, ces[i].source());
        w.push(Letter::new(i, ces[i].center(&a)), true);
    }
    w
}

pub fn dist(a: &CMat, b: &CMat) -> f64 {
    amalgam::numerics::frobenius(&(a - b))
}
