//! Suite orchestration. Each suite builds what it needs from the
//! configuration and records module errors as failed checks.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Model, SuiteConfig, SuiteName};
use super::report::{Check, Report, SuiteReport};
use crate::algebra::{gns_faithful, validate_cexp, Algebra, ConditionalExpectation};
use crate::embedding::build_nested;
use crate::error::{Error, Result};
use crate::fock::{FockModule, ReducedWord};
use crate::freestruct::{factor_cexp, gns_seed_intertwiner, induce_rep, verify_freeness, FamilyMember, SeedRep};
use crate::hilbmod::gns_module;
use crate::numerics::{frobenius, identity, Tolerance, C64};
use crate::oracle::{nc_moment, recursion_moment, MomentQuery, MAX_NC_LEN};
use crate::sampling::{alternating_words, centered_basis, random_combination, random_word, thin};
use crate::ucp::{free_ucp, GradedCase};

/// Words sampled by the oracle cross-check.
pub const ORACLE_WORDS: usize = 500;
/// Random combinations per norm-dominance check.
pub const DOMINANCE_SAMPLES: usize = 20;
/// Truncation of the Fock module used for the dense intertwiner check.
pub const INTERTWINER_TRUNCATION: usize = 4;
const SEED: u64 = 0x00a1_6a11;

struct Bounds {
    direct: f64,
    composite: f64,
    dilation: f64,
}

impl Bounds {
    fn new(tol: &Tolerance) -> Self {
        Bounds { direct: 10.0 * tol.abs_eps, composite: 100.0 * tol.abs_eps, dilation: tol.abs_eps }
    }
}

struct Context<'a> {
    cfg: &'a SuiteConfig,
    model: Model,
    bounds: Bounds,
}

impl Context<'_> {
    fn tol(&self) -> &Tolerance {
        &self.model.tolerance
    }

    fn l(&self) -> usize {
        self.model.truncation
    }

    fn factors(&self) -> Result<Vec<ConditionalExpectation>> {
        self.model.factors(self.cfg)
    }

    fn fock(&self, truncation: usize) -> Result<FockModule> {
        let pms = self.factors()?.iter().map(|ce| gns_module(ce, self.tol())).collect::<Result<Vec<_>>>()?;
        FockModule::build(pms, truncation, self.tol())
    }

    fn algebras(&self) -> Result<Vec<Arc<Algebra>>> {
        Ok(self.factors()?.iter().map(|ce| ce.source().clone()).collect())
    }
}

/// Run every enabled suite. Suites run in canonical order, so repeated runs
/// produce identical reports apart from timings.
pub fn run_suite(cfg: &SuiteConfig) -> Report {
    let abs = cfg.tolerance().map(|t| t.abs_eps).unwrap_or(f64::NAN);
    let mut report = Report::new(cfg.display_name(), cfg.truncation(), abs);
    let model = match Model::new(cfg) {
        Ok(m) => m,
        Err(e) => {
            for s in cfg.suites() {
                let mut sr = SuiteReport::new(s.as_str());
                sr.push(Check::failure("algebras", &e));
                report.push(sr, 0.0);
            }
            return report;
        }
    };
    let bounds = Bounds::new(&model.tolerance);
    let ctx = Context { cfg, model, bounds };
    for suite in cfg.suites() {
        let start = Instant::now();
        let mut sr = SuiteReport::new(suite.as_str());
        let outcome = match suite {
            SuiteName::Validate => validate(&ctx, &mut sr),
            SuiteName::Freeness => freeness(&ctx, &mut sr),
            SuiteName::Condexp => condexp(&ctx, &mut sr),
            SuiteName::Induced => induced(&ctx, &mut sr),
            SuiteName::Embed => embed(&ctx, &mut sr),
            SuiteName::Ucp => ucp(&ctx, &mut sr),
            SuiteName::OracleCross => oracle_cross(&ctx, &mut sr),
        };
        if let Err(e) = outcome {
            sr.push(Check::failure(suite.as_str(), &e));
        }
        report.push(sr, start.elapsed().as_secs_f64());
    }
    report
}

fn validate(ctx: &Context, sr: &mut SuiteReport) -> Result<()> {
    let b = &ctx.bounds;
    let mut all_ok = true;
    for (i, f) in ctx.cfg.factors.iter().enumerate() {
        let path = format!("factors[{i}]");
        match ctx.model.expectation(f, &path) {
            Ok(ce) => {
                sr.dimension(format!("{path}.algebra"), ce.source().dim());
                for e in validate_cexp(&ce, ctx.tol()).entries {
                    let mut c = Check::bounded(format!("{path}.expectation.{}", e.name), e.residual, b.direct);
                    c.passed = e.passed;
                    all_ok &= e.passed;
                    sr.push(c);
                }
                // the upper row of a nested configuration may be non-faithful
                if ctx.cfg.nested.is_none() && all_ok {
                    let faithful = gns_faithful(&ce, ctx.tol())?;
                    all_ok &= faithful;
                    sr.push(Check::flag(
                        format!("{path}.gns_faithful"),
                        faithful,
                        if faithful { "faithful" } else { "GNS representation has a kernel" },
                    ));
                }
            }
            Err(e) => {
                all_ok = false;
                sr.push(Check::failure(path, &e));
            }
        }
    }
    if ctx.cfg.nested.is_none() && all_ok {
        match ctx.fock(ctx.l()) {
            Ok(fock) => {
                sr.dimension("fock", fock.dim());
                sr.push(Check::flag("fock", true, format!("dimension {}", fock.dim())));
            }
            Err(e) => sr.push(Check::failure("fock", &e)),
        }
    }
    if let Some(spec) = ctx.model.nested(ctx.cfg)? {
        match build_nested(&spec, ctx.l(), ctx.tol()) {
            Ok(n) => {
                sr.dimension("nested.lower", n.lower().dim());
                sr.dimension("nested.upper", n.upper().dim());
                sr.push(Check::flag("nested", true, "restrictions are faithful"));
            }
            Err(e) => sr.push(Check::failure("nested", &e)),
        }
    }
    if !ctx.cfg.ucp_maps.is_empty() {
        match ctx.model.ucp_maps(ctx.cfg) {
            Ok(maps) => {
                for (i, m) in maps.iter().enumerate() {
                    let c = m.checks();
                    sr.push(Check::bounded(format!("ucp_maps[{i}].unital"), c.unital_defect, b.direct));
                    sr.push(Check::bounded(
                        format!("ucp_maps[{i}].completely_positive"),
                        (-c.choi_min_eigenvalue).max(0.0),
                        b.direct,
                    ));
                    sr.push(Check::bounded(format!("ucp_maps[{i}].bimodule"), c.bimodule_defect, b.direct));
                    sr.push(Check::bounded(format!("ucp_maps[{i}].expectation"), c.expectation_defect, b.direct));
                }
            }
            Err(e) => sr.push(Check::failure("ucp_maps", &e)),
        }
    }
    Ok(())
}

fn freeness(ctx: &Context, sr: &mut SuiteReport) -> Result<()> {
    let fock = ctx.fock(ctx.l())?;
    sr.dimension("fock", fock.dim());
    let family: Vec<FamilyMember> = (0..fock.factor_count())
        .map(|i| Ok(FamilyMember { factor: i, basis: fock.factor(i)?.algebra().basis().to_vec() }))
        .collect::<Result<_>>()?;
    let depth = ctx.l().min(5);
    let rep = verify_freeness(&fock, &family, depth)?;
    sr.dimension("words_checked", rep.words_checked);
    sr.push(
        Check::bounded(format!("freeness.length_le_{depth}"), rep.max_residual, ctx.bounds.direct)
            .with_detail(format!("{} words, worst {:?}", rep.words_checked, rep.worst_word)),
    );
    Ok(())
}

fn condexp(ctx: &Context, sr: &mut SuiteReport) -> Result<()> {
    let fock = ctx.fock(ctx.l())?;
    let ces = ctx.factors()?;
    let bases: Vec<Vec<_>> = ces.iter().map(|ce| centered_basis(ce, ctx.tol())).collect();
    let one = C64::new(1.0, 0.0);
    for pivot in 0..ces.len() {
        let mut on_factor = 0.0f64;
        let mut off_factor = 0.0f64;
        for (j, ce) in ces.iter().enumerate() {
            for a in ce.source().basis() {
                let got = factor_cexp(&fock, pivot, &[(one, ReducedWord::from_pairs(vec![(j, a.clone())]))])?;
                if j == pivot {
                    on_factor = on_factor.max(frobenius(&(got - a)));
                } else {
                    let want = ces[pivot].inclusion().map(&ce.apply(a));
                    off_factor = off_factor.max(frobenius(&(got - want)));
                }
            }
        }
        sr.push(Check::bounded(format!("condexp[{pivot}].identity_on_factor"), on_factor, ctx.bounds.direct));
        if ces.len() > 1 {
            sr.push(Check::bounded(format!("condexp[{pivot}].expectation_elsewhere"), off_factor, ctx.bounds.direct));
        }
        let mut vanishing = 0.0f64;
        let mut count = 0;
        for len in 2..=4.min(ctx.l().saturating_sub(1)) {
            for w in thin(&alternating_words(&bases, len), 96) {
                let got = factor_cexp(&fock, pivot, &[(one, w)])?;
                vanishing = vanishing.max(frobenius(&got));
                count += 1;
            }
        }
        if count > 0 {
            sr.push(
                Check::bounded(format!("condexp[{pivot}].vanishing_on_reduced"), vanishing, ctx.bounds.direct)
                    .with_detail(format!("{count} words")),
            );
        }
    }
    Ok(())
}

fn induced(ctx: &Context, sr: &mut SuiteReport) -> Result<()> {
    let l = ctx.l();
    if l < 2 {
        return Err(Error::TruncationOverflow { needed: 2, truncation: l });
    }
    let fock = ctx.fock(l)?;
    let algs = ctx.algebras()?;
    let letters: Vec<ReducedWord> = algs
        .iter()
        .enumerate()
        .flat_map(|(i, a)| a.basis().iter().map(move |x| ReducedWord::from_pairs(vec![(i, x.clone())])))
        .collect();
    let pairs: Vec<ReducedWord> = letters
        .iter()
        .flat_map(|u| letters.iter().filter(|w| w.indices() != u.indices()).map(move |w| u.concat(w)))
        .collect();
    let pairs = thin(&pairs, 64);
    for pivot in 0..algs.len() {
        let pm = fock.factor(pivot)?;
        let seeds = [
            ("gns", SeedRep::new(pm.algebra().clone(), pm.left().matrices().to_vec(), ctx.tol())?),
            ("defining", SeedRep::from_fn(pm.algebra().clone(), |x| x.clone(), ctx.tol())?),
        ];
        for (name, seed) in &seeds {
            let ind = induce_rep(&fock, pivot, seed, l - 1)?;
            let path = format!("induced[{pivot}].{name}");
            sr.dimension(path.clone(), ind.dim());
            let mut mult = 0.0f64;
            for u in &letters {
                for w in &letters {
                    mult = mult.max(ind.multiplicativity_defect(u, w)?);
                }
            }
            let mut adj = 0.0f64;
            for w in letters.iter().chain(&pairs) {
                adj = adj.max(ind.adjoint_defect(w)?);
            }
            sr.push(Check::bounded(format!("{path}.multiplicativity"), mult, ctx.bounds.composite));
            sr.push(Check::bounded(format!("{path}.adjoint"), adj, ctx.bounds.composite));
            if *name == "gns" {
                // the dense intertwiner is checked on a smaller truncation
                let (fock, ind) = if l > INTERTWINER_TRUNCATION {
                    let small = ctx.fock(INTERTWINER_TRUNCATION)?;
                    let ind = induce_rep(&small, pivot, seed, INTERTWINER_TRUNCATION - 1)?;
                    (small, ind)
                } else {
                    (ctx.fock(l)?, induce_rep(&fock, pivot, seed, l - 1)?)
                };
                let u = gns_seed_intertwiner(&fock, &ind)?;
                let iso = frobenius(&(u.adjoint() * &u - identity(ind.dim())));
                let mut inter = 0.0f64;
                for w in letters.iter().chain(&pairs) {
                    let x = ind.space().prefix_columns(ind.truncation() - w.len());
                    let lhs = &u * ind.apply_word(w, &x)?.0;
                    let rhs = fock.apply_word(w, &(&u * &x))?.0;
                    inter = inter.max(frobenius(&(lhs - rhs)));
                }
                sr.push(Check::bounded(format!("{path}.intertwiner_isometry"), iso, ctx.bounds.composite));
                sr.push(Check::bounded(format!("{path}.intertwiner"), inter, ctx.bounds.composite));
            }
        }
    }
    Ok(())
}

fn embed(ctx: &Context, sr: &mut SuiteReport) -> Result<()> {
    let spec = ctx.model.nested(ctx.cfg)?.ok_or_else(|| Error::Schema {
        path: "nested".into(),
        message: "the embed suite needs a nested section".into(),
    })?;
    let l = ctx.l();
    let n = build_nested(&spec, l, ctx.tol())?;
    let b = &ctx.bounds;
    sr.dimension("lower", n.lower().dim());
    sr.dimension("upper", n.upper().dim());

    let lower_bases: Vec<Vec<_>> = spec.lower.iter().map(|a| a.basis().to_vec()).collect();
    let mut words = vec![ReducedWord::empty()];
    for len in 1..=l.min(3) {
        words.extend(thin(&alternating_words(&lower_bases, len), 48));
    }
    for (i, ce) in spec.upper.iter().enumerate() {
        words.extend(ce.source().basis().iter().map(|x| ReducedWord::from_pairs(vec![(i, x.clone())])));
    }
    let rep = n.verify_restriction(&words)?;
    let inner_leak =
        rep.entries.iter().filter(|e| e.defect.is_some()).map(|e| e.leakage).fold(0.0, f64::max);
    sr.push(Check::bounded("embed.isometry", rep.isometry_defect, b.direct));
    sr.push(Check::bounded("embed.invariance", inner_leak, b.direct));
    sr.push(Check::bounded("embed.restriction", rep.max_defect(), b.direct));

    let dec = n.complement_decomposition()?;
    let total = dec.lower_dim + dec.blocks.iter().map(|x| x.basis.ncols()).sum::<usize>();
    sr.dimension("blocks", dec.blocks.len());
    sr.push(Check::exact("embed.dimension_completeness", total, dec.upper_dim));
    sr.push(Check::bounded("embed.orthogonality", dec.completeness_defect, b.direct));
    sr.push(Check::bounded("embed.block_invariance", dec.max_invariance_defect(), b.direct));
    sr.push(Check::bounded("embed.block_equivalence", dec.max_equivalence_defect(), b.composite));

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let margin = 2.min(l);
    let mut worst = 0.0f64;
    for _ in 0..DOMINANCE_SAMPLES {
        let x = random_combination(&mut rng, &spec.lower, 3, margin);
        let (lo, up) = n.norm_dominance(&x, margin)?;
        worst = worst.max(lo - up);
    }
    sr.push(
        Check::bounded("embed.norm_dominance", worst.max(0.0), ctx.tol().abs_eps)
            .with_detail(format!("{DOMINANCE_SAMPLES} combinations")),
    );
    Ok(())
}

fn ucp(ctx: &Context, sr: &mut SuiteReport) -> Result<()> {
    if ctx.cfg.ucp_maps.is_empty() {
        return Err(Error::Schema { path: "ucp_maps".into(), message: "the ucp suite needs maps".into() });
    }
    let l = ctx.l();
    let maps = ctx.model.ucp_maps(ctx.cfg)?;
    let bases: Vec<Vec<_>> = maps.iter().map(|m| centered_basis(m.source_expectation(), ctx.tol())).collect();
    let f = free_ucp(maps, l, ctx.tol())?;
    let b = &ctx.bounds;
    sr.dimension("target_fock", f.target_fock().dim());
    sr.dimension("dilated_fock", f.dilated_fock().dim());
    for (i, d) in f.dilations().iter().enumerate() {
        let x = d.defects();
        sr.push(Check::bounded(format!("dilation[{i}].isometry"), x.isometry, b.dilation));
        sr.push(Check::bounded(format!("dilation[{i}].compression"), x.compression, b.dilation));
        sr.push(Check::bounded(format!("dilation[{i}].state"), x.state, b.dilation));
        sr.push(Check::bounded(format!("dilation[{i}].grading"), x.grading, b.dilation));
    }

    let (mut product, mut expectation) = (0.0f64, 0.0f64);
    let mut count = 0;
    for len in 1..=l.min(4) {
        for w in thin(&alternating_words(&bases, len), 12) {
            let d = f.word_defects(&w)?;
            product = product.max(d.product);
            expectation = expectation.max(d.expectation);
            count += 1;
        }
    }
    sr.push(Check::bounded("ucp.multiplicativity", product, b.composite).with_detail(format!("{count} words")));
    sr.push(Check::bounded("ucp.expectation_on_words", expectation, b.direct).with_detail(format!("{count} words")));

    let mut cases = std::collections::BTreeMap::<GradedCase, (f64, f64)>::new();
    for n in 1..=3.min(l) {
        for w in thin(&alternating_words(&bases, n), 4) {
            for p in 0..=3.min(l - n) {
                for e in f.graded_identities(&w, p)? {
                    let s = cases.entry(e.case).or_insert((0.0, 0.0));
                    s.0 = s.0.max(e.residual);
                    s.1 = s.1.max(e.magnitude);
                }
            }
        }
    }
    for (case, (res, mag)) in &cases {
        sr.push(Check::bounded(format!("ucp.graded.{}", case.name()), *res, b.composite));
        if matches!(case, GradedCase::Above | GradedCase::Mismatch) {
            sr.push(Check::bounded(format!("ucp.graded.{}.vanishes", case.name()), *mag, b.composite));
        }
    }

    if l >= 2 {
        let mut words = vec![ReducedWord::empty()];
        words.extend(alternating_words(&bases, 1));
        let out = f.verify_ucp_output(&words)?;
        sr.push(Check::bounded("ucp.unital", out.unital_defect, b.direct));
        sr.push(Check::bounded("ucp.completely_positive", (-out.cp_min_eigenvalue).max(0.0), b.direct));
        sr.push(Check::bounded("ucp.expectation", out.expectation_defect, b.direct));
    }
    Ok(())
}

fn oracle_cross(ctx: &Context, sr: &mut SuiteReport) -> Result<()> {
    let max_len = ctx.l().min(5);
    let fock = ctx.fock(max_len)?;
    let ces = ctx.factors()?;
    let algs = ctx.algebras()?;
    let scalar = ctx.model.coefficient.is_scalar();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut rec, mut nc) = (0.0f64, 0.0f64);
    for k in 0..ORACLE_WORDS {
        let w = random_word(&mut rng, &algs, k % (max_len + 1));
        let fe = fock.free_expectation(&w)?;
        let r = recursion_moment(&MomentQuery::new(&ces, &w))?;
        rec = rec.max(frobenius(&(&fe - &r)));
        if scalar && w.len() <= MAX_NC_LEN {
            let m = nc_moment(&MomentQuery::new(&ces, &w))?;
            nc = nc.max((m - r[(0, 0)]).norm());
        }
    }
    sr.dimension("words", ORACLE_WORDS);
    sr.push(Check::bounded("oracle.recursion", rec, ctx.bounds.direct));
    if scalar {
        sr.push(Check::bounded("oracle.noncrossing", nc, ctx.bounds.direct));
    }
    Ok(())
}
