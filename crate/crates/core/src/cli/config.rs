//! JSON suite configuration: algebras, factor expectations, optional nested
//! and completely positive data, and the suites to run.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{Algebra, ConditionalExpectation, UnitalInclusion};
use crate::embedding::NestedSpec;
use crate::error::{Error, Result};
use crate::numerics::{identity, kron, CMat, CVec, Tolerance, C64};
use crate::ucp::UcpMap;

pub const SCHEMA_VERSION: u32 = 1;
/// Default truncation when the configuration does not set one.
pub const DEFAULT_TRUNCATION: usize = 6;

/// A complex number as `[re, im]`.
pub type Entry = [f64; 2];
/// A matrix as rows of entries.
pub type MatrixSpec = Vec<Vec<Entry>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgebraSpec {
    Full { n: usize },
    Diagonal { n: usize },
    Scalars { n: usize },
    Generated { n: usize, generators: Vec<MatrixSpec> },
}

impl AlgebraSpec {
    pub fn ambient(&self) -> usize {
        match self {
            AlgebraSpec::Full { n }
            | AlgebraSpec::Diagonal { n }
            | AlgebraSpec::Scalars { n }
            | AlgebraSpec::Generated { n, .. } => *n,
        }
    }
}

/// A linear map between matrix algebras.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSpec {
    /// `x ↦ x`.
    Identity,
    /// `x ↦ tr(x)/n · 1`.
    NormalizedTrace,
    /// Keep the diagonal.
    Diagonal,
    /// `[[z]] ↦ z · 1`.
    ScalarUnit,
    /// `x ↦ ⟨v, x v⟩ · 1`.
    VectorState { vector: Vec<Entry> },
    /// `x ↦ tr(ρ x) · 1`.
    Density { matrix: MatrixSpec },
    /// `x ↦ Σ Kᵢ* x Kᵢ`.
    Kraus { operators: Vec<MatrixSpec> },
    /// `x ↦ 1_k ⊗ x`.
    Amplify { copies: usize },
    /// `x ↦ Σ wᵢ fᵢ(x)`.
    Mix { terms: Vec<MixTerm> },
    /// Apply the maps left to right.
    Compose { maps: Vec<MapSpec> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixTerm {
    pub weight: f64,
    pub map: MapSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub algebra: String,
    pub expectation: MapSpec,
    /// Embedding of the coefficients; inferred when omitted.
    #[serde(default)]
    pub inclusion: Option<MapSpec>,
}

/// Subalgebras of the factors and of the coefficients; the factors form the
/// upper row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NestedConfig {
    pub lower: Vec<String>,
    pub coefficient: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UcpSpec {
    pub map: MapSpec,
    /// Target algebra with its expectation; the source factor when omitted.
    #[serde(default)]
    pub target: Option<FactorSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default)]
    pub abs_eps: Option<f64>,
    #[serde(default)]
    pub rel_eps: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    Validate,
    Freeness,
    Condexp,
    Induced,
    Embed,
    Ucp,
    OracleCross,
}

impl SuiteName {
    pub const ALL: [SuiteName; 7] = [
        SuiteName::Validate,
        SuiteName::Freeness,
        SuiteName::Condexp,
        SuiteName::Induced,
        SuiteName::Embed,
        SuiteName::Ucp,
        SuiteName::OracleCross,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::Validate => "validate",
            SuiteName::Freeness => "freeness",
            SuiteName::Condexp => "condexp",
            SuiteName::Induced => "induced",
            SuiteName::Embed => "embed",
            SuiteName::Ucp => "ucp",
            SuiteName::OracleCross => "oracle-cross",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        SuiteName::ALL.into_iter().find(|s| s.as_str() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub algebras: BTreeMap<String, AlgebraSpec>,
    pub coefficient: String,
    pub factors: Vec<FactorSpec>,
    #[serde(default)]
    pub nested: Option<NestedConfig>,
    #[serde(default)]
    pub ucp_maps: Vec<UcpSpec>,
    #[serde(default)]
    pub truncation: Option<usize>,
    #[serde(default)]
    pub tolerance: Option<ToleranceSpec>,
    #[serde(default)]
    pub suites: Option<Vec<SuiteName>>,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema { path: path.into(), message: message.into() }
}

/// Parse and shape-check a configuration document.
pub fn parse_config(text: &str) -> Result<SuiteConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: SuiteConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_data() {
            schema(if path == "." { String::new() } else { path }, inner.to_string())
        } else {
            Error::Parse { line: inner.line(), column: inner.column(), message: inner.to_string() }
        }
    })?;
    cfg.check()?;
    Ok(cfg)
}

impl SuiteConfig {
    pub fn truncation(&self) -> usize {
        self.truncation.unwrap_or(DEFAULT_TRUNCATION)
    }

    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or("unnamed")
    }

    /// Enabled suites in canonical order.
    pub fn suites(&self) -> Vec<SuiteName> {
        let mut s = self.suites.clone().unwrap_or_else(|| vec![SuiteName::Validate, SuiteName::Freeness]);
        s.sort();
        s.dedup();
        s
    }

    pub fn tolerance(&self) -> Result<Tolerance> {
        let d = Tolerance::default();
        let t = self.tolerance.clone().unwrap_or_default();
        Tolerance::new(t.abs_eps.unwrap_or(d.abs_eps), t.rel_eps.unwrap_or(d.rel_eps))
    }

    fn algebra_spec(&self, path: &str, name: &str) -> Result<&AlgebraSpec> {
        self.algebras.get(name).ok_or_else(|| schema(path, format!("unknown algebra `{name}`")))
    }

    fn check(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(schema(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        for (name, spec) in &self.algebras {
            let path = format!("algebras.{name}");
            let n = spec.ambient();
            if n == 0 {
                return Err(schema(path, "ambient dimension must be positive"));
            }
            if let AlgebraSpec::Generated { generators, .. } = spec {
                for (i, g) in generators.iter().enumerate() {
                    matrix(&format!("{path}.generators[{i}]"), g, n, n)?;
                }
            }
        }
        let b = self.algebra_spec("coefficient", &self.coefficient)?.ambient();
        if self.factors.is_empty() {
            return Err(schema("factors", "at least one factor is required"));
        }
        for (i, f) in self.factors.iter().enumerate() {
            self.check_factor(&format!("factors[{i}]"), f, b)?;
        }
        if let Some(nested) = &self.nested {
            if nested.lower.len() != self.factors.len() {
                return Err(schema("nested.lower", "one lower algebra per factor"));
            }
            let nb = self.algebra_spec("nested.coefficient", &nested.coefficient)?.ambient();
            if nb != b {
                return Err(schema("nested.coefficient", "must share the ambient size of the coefficient"));
            }
            for (i, (name, f)) in nested.lower.iter().zip(&self.factors).enumerate() {
                let path = format!("nested.lower[{i}]");
                if self.algebra_spec(&path, name)?.ambient() != self.algebra_spec("", &f.algebra)?.ambient() {
                    return Err(schema(path, "must share the ambient size of its factor"));
                }
            }
        }
        if !self.ucp_maps.is_empty() && self.ucp_maps.len() != self.factors.len() {
            return Err(schema("ucp_maps", "one map per factor"));
        }
        for (i, u) in self.ucp_maps.iter().enumerate() {
            let path = format!("ucp_maps[{i}]");
            let src = self.algebra_spec("", &self.factors[i].algebra)?.ambient();
            let dst = match &u.target {
                Some(t) => {
                    self.check_factor(&format!("{path}.target"), t, b)?;
                    self.algebra_spec("", &t.algebra)?.ambient()
                }
                None => src,
            };
            realize(&format!("{path}.map"), &u.map, src, dst)?;
        }
        if self.truncation() > 12 {
            return Err(schema("truncation", "must be at most 12"));
        }
        self.tolerance().map_err(|e| schema("tolerance", e.to_string()))?;
        Ok(())
    }

    fn check_factor(&self, path: &str, f: &FactorSpec, b: usize) -> Result<()> {
        let n = self.algebra_spec(&format!("{path}.algebra"), &f.algebra)?.ambient();
        realize(&format!("{path}.expectation"), &f.expectation, n, b)?;
        match &f.inclusion {
            Some(m) => {
                realize(&format!("{path}.inclusion"), m, b, n)?;
            }
            None if b == n || b == 1 => {}
            None => return Err(schema(format!("{path}.inclusion"), "required when ambient sizes differ")),
        }
        Ok(())
    }
}

fn entry(e: &Entry) -> C64 {
    C64::new(e[0], e[1])
}

fn matrix(path: &str, m: &MatrixSpec, rows: usize, cols: usize) -> Result<CMat> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(schema(path, format!("expected a {rows}×{cols} matrix")));
    }
    let out = CMat::from_fn(rows, cols, |i, j| entry(&m[i][j]));
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(schema(path, "non-finite entry"));
    }
    Ok(out)
}

/// A realized linear map on ambient matrices.
pub type LinearMap = Arc<dyn Fn(&CMat) -> CMat + Send + Sync>;

/// Output size forced by the map itself, if any.
fn natural_output(spec: &MapSpec, n: usize) -> Option<usize> {
    match spec {
        MapSpec::Identity | MapSpec::Diagonal => Some(n),
        MapSpec::Amplify { copies } => Some(copies * n),
        MapSpec::Kraus { operators } => operators.first().and_then(|k| k.first()).map(|r| r.len()),
        MapSpec::Compose { maps } => maps.iter().try_fold(n, |d, m| natural_output(m, d)),
        MapSpec::Mix { terms } => terms.iter().find_map(|t| natural_output(&t.map, n)),
        _ => None,
    }
}

/// Realize `spec` as a map from `n × n` to `m × m` matrices.
pub fn realize(path: &str, spec: &MapSpec, n: usize, m: usize) -> Result<LinearMap> {
    if let Some(out) = natural_output(spec, n) {
        if out != m {
            return Err(schema(path, format!("map produces {out}×{out} matrices, expected {m}×{m}")));
        }
    }
    let unit = identity(m);
    Ok(match spec {
        MapSpec::Identity => Arc::new(|x: &CMat| x.clone()),
        MapSpec::NormalizedTrace => {
            let s = 1.0 / n as f64;
            Arc::new(move |x: &CMat| &unit * (x.trace() * s))
        }
        MapSpec::Diagonal => Arc::new(|x: &CMat| CMat::from_diagonal(&x.diagonal())),
        MapSpec::ScalarUnit => {
            if n != 1 {
                return Err(schema(path, "scalar_unit needs 1×1 input"));
            }
            Arc::new(move |x: &CMat| &unit * x[(0, 0)])
        }
        MapSpec::VectorState { vector } => {
            if vector.len() != n {
                return Err(schema(format!("{path}.vector"), format!("expected {n} entries")));
            }
            let v = CVec::from_iterator(n, vector.iter().map(entry));
            Arc::new(move |x: &CMat| &unit * (v.adjoint() * x * &v)[(0, 0)])
        }
        MapSpec::Density { matrix: rho } => {
            let rho = matrix(&format!("{path}.matrix"), rho, n, n)?;
            Arc::new(move |x: &CMat| &unit * (&rho * x).trace())
        }
        MapSpec::Kraus { operators } => {
            if operators.is_empty() {
                return Err(schema(format!("{path}.operators"), "at least one operator"));
            }
            let ks = operators
                .iter()
                .enumerate()
                .map(|(i, k)| matrix(&format!("{path}.operators[{i}]"), k, n, m))
                .collect::<Result<Vec<_>>>()?;
            Arc::new(move |x: &CMat| ks.iter().fold(CMat::zeros(m, m), |acc, k| acc + k.adjoint() * x * k))
        }
        MapSpec::Amplify { copies } => {
            let k = identity(*copies);
            Arc::new(move |x: &CMat| kron(&k, x))
        }
        MapSpec::Mix { terms } => {
            if terms.is_empty() {
                return Err(schema(format!("{path}.terms"), "at least one term"));
            }
            let parts = terms
                .iter()
                .enumerate()
                .map(|(i, t)| Ok((t.weight, realize(&format!("{path}.terms[{i}].map"), &t.map, n, m)?)))
                .collect::<Result<Vec<_>>>()?;
            Arc::new(move |x: &CMat| parts.iter().fold(CMat::zeros(m, m), |acc, (w, f)| acc + f(x) * C64::new(*w, 0.0)))
        }
        MapSpec::Compose { maps } => {
            if maps.is_empty() {
                return Err(schema(format!("{path}.maps"), "at least one map"));
            }
            let mut dim = n;
            let mut parts = Vec::new();
            for (i, s) in maps.iter().enumerate() {
                let out = if i + 1 == maps.len() {
                    m
                } else {
                    natural_output(s, dim).ok_or_else(|| {
                        schema(format!("{path}.maps[{i}]"), "intermediate maps must fix their output size")
                    })?
                };
                parts.push(realize(&format!("{path}.maps[{i}]"), s, dim, out)?);
                dim = out;
            }
            Arc::new(move |x: &CMat| parts.iter().fold(x.clone(), |acc, f| f(&acc)))
        }
    })
}

/// The mathematical objects described by a configuration.
pub struct Model {
    pub coefficient: Arc<Algebra>,
    pub algebras: BTreeMap<String, Arc<Algebra>>,
    pub tolerance: Tolerance,
    pub truncation: usize,
}

impl Model {
    pub fn new(cfg: &SuiteConfig) -> Result<Self> {
        let tolerance = cfg.tolerance()?;
        let mut algebras = BTreeMap::new();
        for (name, spec) in &cfg.algebras {
            algebras.insert(name.clone(), build_algebra(&format!("algebras.{name}"), spec, &tolerance)?);
        }
        let coefficient = algebras[&cfg.coefficient].clone();
        Ok(Model { coefficient, algebras, tolerance, truncation: cfg.truncation() })
    }

    /// The conditional expectation of a factor spec.
    pub fn expectation(&self, f: &FactorSpec, path: &str) -> Result<ConditionalExpectation> {
        self.expectation_onto(f, &self.coefficient, path)
    }

    fn expectation_onto(&self, f: &FactorSpec, b: &Arc<Algebra>, path: &str) -> Result<ConditionalExpectation> {
        let a = self.algebras[&f.algebra].clone();
        let (n, m) = (a.ambient(), b.ambient());
        let inc = match &f.inclusion {
            Some(spec) => {
                let map = realize(&format!("{path}.inclusion"), spec, m, n)?;
                UnitalInclusion::new(b.clone(), a.clone(), |x| map(x), &self.tolerance)?
            }
            None if n == m => UnitalInclusion::subalgebra(b.clone(), a.clone(), &self.tolerance)?,
            None => {
                let map = realize(&format!("{path}.inclusion"), &MapSpec::ScalarUnit, m, n)?;
                UnitalInclusion::new(b.clone(), a.clone(), |x| map(x), &self.tolerance)?
            }
        };
        let phi = realize(&format!("{path}.expectation"), &f.expectation, n, m)?;
        ConditionalExpectation::new(inc, |x| phi(x), &self.tolerance)
    }

    pub fn factors(&self, cfg: &SuiteConfig) -> Result<Vec<ConditionalExpectation>> {
        cfg.factors.iter().enumerate().map(|(i, f)| self.expectation(f, &format!("factors[{i}]"))).collect()
    }

    pub fn nested(&self, cfg: &SuiteConfig) -> Result<Option<NestedSpec>> {
        let Some(n) = &cfg.nested else { return Ok(None) };
        Ok(Some(NestedSpec {
            upper: self.factors(cfg)?,
            lower: n.lower.iter().map(|name| self.algebras[name].clone()).collect(),
            coefficient: self.algebras[&n.coefficient].clone(),
        }))
    }

    pub fn ucp_maps(&self, cfg: &SuiteConfig) -> Result<Vec<UcpMap>> {
        let factors = self.factors(cfg)?;
        cfg.ucp_maps
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let path = format!("ucp_maps[{i}]");
                let phi = factors[i].clone();
                let psi = match &u.target {
                    Some(t) => self.expectation(t, &format!("{path}.target"))?,
                    None => phi.clone(),
                };
                let f = realize(&format!("{path}.map"), &u.map, phi.source().ambient(), psi.source().ambient())?;
                UcpMap::new(phi, psi, |x| f(x), &self.tolerance)
            })
            .collect()
    }
}

fn build_algebra(path: &str, spec: &AlgebraSpec, tol: &Tolerance) -> Result<Arc<Algebra>> {
    Ok(match spec {
        AlgebraSpec::Full { n } => Algebra::full(*n, tol),
        AlgebraSpec::Diagonal { n } => Algebra::diagonal(*n, tol),
        AlgebraSpec::Scalars { n } => Algebra::scalars(*n),
        AlgebraSpec::Generated { n, generators } => {
            let gens = generators
                .iter()
                .enumerate()
                .map(|(i, g)| matrix(&format!("{path}.generators[{i}]"), g, *n, *n))
                .collect::<Result<Vec<_>>>()?;
            Algebra::build(*n, &gens, tol)?
        }
    })
}
