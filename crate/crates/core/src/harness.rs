//! Seeded verification suites and versioned JSON reports.
//!
//! Case `i` of suite `s` draws from ChaCha20 keyed by the run seed on stream
//! `(id(s) << 32) | i`, so every case is reproducible on its own and cases
//! run in parallel. Reports list cases in index order and carry everything
//! needed to replay a case.
//!
//! Verdicts of the fundamental-lemma suites compare exact integers and
//! `(sign, q-exponent)` pairs. Property suites compare p-adic matrices to a
//! pinned depth.

use crate::dynamics::{
    cab_factor, cayley, cayley_charpoly_transform, cayley_inv, cayley_matrix, conjugate_tjd, descent_data, lie_contraction, lie_embed,
    lie_lift_from_herm, scalar_point, tjd, Component, DescentData,
};
use crate::endoscopy::{factor_data, herm_transfer_factor, relative_discriminant, stable_orbit_reps, stable_orbit_reps_lie, EndoDatum, TransferFactor};
use crate::error::{Error, Result};
use crate::lattice::{brute_force_self_dual, enumerate_self_dual_cached, hnf, is_self_dual, FormLabel, HermForm, Lattice};
use crate::matalg::{char_poly, EMatrix, EPoly};
use crate::orbital::{
    exact_eq, kappa_orbital, kappa_orbital_lie, oracle_auto, orbit_integral_auto, orbit_integral_lie_auto, orbit_integral_unit_with,
    stable_orbital_lie_one, stable_orbital_one, OrbitalConfig,
};
use crate::padic::{FScalar, PrecisionContext};
use crate::symspace::{
    contraction, is_member_with, is_rss, lift_from_herm, poly_agree, poly_depth, random_integral_unitary, residual_vanishes, symmetrize, tol_for, total_gram, SymPoint,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Instant;

pub const SCHEMA: &str = "v1";
/// Draws per case before a sampling failure is reported.
pub const RESAMPLE_BUDGET: u32 = 100;
/// Oracle levels tried beyond the engine window.
const ORACLE_EXTRA_LEVELS: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Suite {
    Fl,
    FlLie,
    Cayley,
    Tjd,
    Descent,
    Lattice,
    Oracle,
}

impl Suite {
    pub const PROPERTIES: [Suite; 4] = [Suite::Cayley, Suite::Tjd, Suite::Lattice, Suite::Oracle];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Fl => "fl",
            Suite::FlLie => "fl_lie",
            Suite::Cayley => "cayley",
            Suite::Tjd => "tjd",
            Suite::Descent => "descent",
            Suite::Lattice => "lattice",
            Suite::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Suite> {
        Ok(match s {
            "fl" => Suite::Fl,
            "fl_lie" => Suite::FlLie,
            "cayley" => Suite::Cayley,
            "tjd" => Suite::Tjd,
            "descent" => Suite::Descent,
            "lattice" => Suite::Lattice,
            "oracle" => Suite::Oracle,
            _ => return Err(Error::Invalid(format!("unknown suite {s}"))),
        })
    }

    fn id(&self) -> u64 {
        *self as u64
    }

    fn uses_datum(&self) -> bool {
        matches!(self, Suite::Fl | Suite::FlLie | Suite::Descent)
    }
}

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    pub p: u32,
    /// Relative precision `N` of every scalar.
    pub precision: u32,
    pub n: usize,
    pub datum: EndoDatum,
    pub trials: usize,
    pub seed: u64,
    pub window: Option<u32>,
    pub suites: Vec<Suite>,
    pub cache_dir: Option<PathBuf>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            p: 3,
            precision: 12,
            n: 2,
            datum: EndoDatum::new(1, 1, FormLabel::Split, FormLabel::Split),
            trials: 50,
            seed: 0,
            window: None,
            suites: vec![Suite::Fl],
            cache_dir: None,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        PrecisionContext::new(self.p, self.precision)?;
        if self.datum.n() != self.n {
            return Err(Error::Invalid(format!("datum rank {} differs from n = {}", self.datum.n(), self.n)));
        }
        if self.n == 0 || self.n > 3 {
            return Err(Error::Invalid("n must be 1, 2 or 3".into()));
        }
        if self.n > 2 && self.suites.iter().any(Suite::uses_datum) {
            return Err(Error::Invalid("the fundamental-lemma suites need n ≤ 2".into()));
        }
        Ok(())
    }

    pub fn ctx(&self) -> PrecisionContext {
        PrecisionContext::new(self.p, self.precision).expect("validated config")
    }

    pub fn orbital(&self) -> OrbitalConfig {
        OrbitalConfig { window: self.window, cache_dir: self.cache_dir.clone(), ..OrbitalConfig::default() }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "p": self.p,
            "precision": self.precision,
            "n": self.n,
            "datum": self.datum.to_json(),
            "trials": self.trials,
            "seed": self.seed,
            "window": self.window,
            "suites": self.suites.iter().map(Suite::as_str).collect::<Vec<_>>(),
            "cache_dir": self.cache_dir.as_ref().map(|d| d.display().to_string()),
        })
    }

    pub fn from_json(v: &Value) -> Result<VerifyConfig> {
        let bad = |k: &str| Error::Invalid(format!("config field {k}"));
        let u = |k: &str| v.get(k).and_then(Value::as_u64).ok_or_else(|| bad(k));
        let suites = v
            .get("suites")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("suites"))?
            .iter()
            .map(|s| s.as_str().ok_or_else(|| bad("suites")).and_then(Suite::parse))
            .collect::<Result<Vec<_>>>()?;
        let cfg = VerifyConfig {
            p: u("p")? as u32,
            precision: u("precision")? as u32,
            n: u("n")? as usize,
            datum: EndoDatum::from_json(v.get("datum").ok_or_else(|| bad("datum"))?)?,
            trials: u("trials")? as usize,
            seed: u("seed")?,
            window: v.get("window").and_then(Value::as_u64).map(|w| w as u32),
            suites,
            cache_dir: v.get("cache_dir").and_then(Value::as_str).map(PathBuf::from),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Error,
    /// No input of the requested shape exists; recorded with the reason.
    Vacuous,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Error => "error",
            Verdict::Vacuous => "vacuous",
        }
    }

    fn from_bool(ok: bool) -> Verdict {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Debug)]
pub struct CaseRecord {
    pub suite: Suite,
    pub index: usize,
    pub kind: String,
    pub attempts: u32,
    pub input: Value,
    pub result: Value,
    pub verdict: Verdict,
    pub error: Option<String>,
}

impl CaseRecord {
    fn to_json(&self, cfg: &VerifyConfig) -> Value {
        json!({
            "index": self.index,
            "stream": stream_id(self.suite, self.index),
            "kind": self.kind,
            "attempts": self.attempts,
            "input": self.input,
            "result": self.result,
            "verdict": self.verdict.as_str(),
            "error": self.error,
            "replay": {"suite": self.suite.as_str(), "config": cfg.to_json(), "index": self.index},
        })
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: Suite,
    pub cases: Vec<CaseRecord>,
    pub runtime_ms: u128,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub cases: usize,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
    pub vacuous: usize,
}

impl Tally {
    fn of(cases: &[CaseRecord]) -> Tally {
        let mut t = Tally { cases: cases.len(), ..Tally::default() };
        for c in cases {
            match c.verdict {
                Verdict::Pass => t.passed += 1,
                Verdict::Fail => t.failed += 1,
                Verdict::Error => t.errors += 1,
                Verdict::Vacuous => t.vacuous += 1,
            }
        }
        t
    }

    fn add(&self, o: &Tally) -> Tally {
        Tally {
            cases: self.cases + o.cases,
            passed: self.passed + o.passed,
            failed: self.failed + o.failed,
            errors: self.errors + o.errors,
            vacuous: self.vacuous + o.vacuous,
        }
    }

    pub fn ok(&self) -> bool {
        self.failed == 0 && self.errors == 0
    }

    fn to_json(self, runtime_ms: u128) -> Value {
        json!({
            "cases": self.cases,
            "passed": self.passed,
            "failed": self.failed,
            "errors": self.errors,
            "vacuous": self.vacuous,
            "runtime_ms": runtime_ms as u64,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub config: VerifyConfig,
    pub suites: Vec<SuiteReport>,
}

impl Report {
    pub fn tally(&self) -> Tally {
        self.suites.iter().fold(Tally::default(), |t, s| t.add(&Tally::of(&s.cases)))
    }

    pub fn suite_tally(&self, s: Suite) -> Tally {
        self.suites.iter().filter(|r| r.suite == s).fold(Tally::default(), |t, r| t.add(&Tally::of(&r.cases)))
    }

    /// No failing or erroring case.
    pub fn passed(&self) -> bool {
        self.tally().ok()
    }

    pub fn cases(&self, s: Suite) -> impl Iterator<Item = &CaseRecord> {
        self.suites.iter().filter(move |r| r.suite == s).flat_map(|r| r.cases.iter())
    }

    pub fn merge(mut self, other: Report) -> Report {
        self.config.suites.extend(other.config.suites.iter().copied());
        self.suites.extend(other.suites);
        self
    }

    pub fn to_json(&self) -> Value {
        let runtime: u128 = self.suites.iter().map(|s| s.runtime_ms).sum();
        let t = self.tally();
        let mut summary = t.to_json(runtime);
        summary["ok"] = json!(t.ok());
        json!({
            "schema": SCHEMA,
            "config": self.config.to_json(),
            "suites": self.suites.iter().map(|s| {
                // each suite echoes the config it ran under
                let mut cfg = self.config.clone();
                cfg.suites = vec![s.suite];
                json!({
                    "suite": s.suite.as_str(),
                    "cases": s.cases.iter().map(|c| c.to_json(&cfg)).collect::<Vec<_>>(),
                    "summary": Tally::of(&s.cases).to_json(s.runtime_ms),
                })
            }).collect::<Vec<_>>(),
            "summary": summary,
        })
    }
}

/// Structural check of a `v1` report.
pub fn validate_report(v: &Value) -> std::result::Result<(), String> {
    let obj = |v: &Value, what: &str| v.as_object().cloned().ok_or(format!("{what} is not an object"));
    let top = obj(v, "report")?;
    if top.get("schema").and_then(Value::as_str) != Some(SCHEMA) {
        return Err("schema tag missing or not v1".into());
    }
    VerifyConfig::from_json(top.get("config").ok_or("config missing")?).map_err(|e| e.to_string())?;
    let suites = top.get("suites").and_then(Value::as_array).ok_or("suites missing")?;
    let mut total = 0u64;
    for s in suites {
        let name = s.get("suite").and_then(Value::as_str).ok_or("suite name missing")?;
        Suite::parse(name).map_err(|e| e.to_string())?;
        let cases = s.get("cases").and_then(Value::as_array).ok_or("cases missing")?;
        for (i, c) in cases.iter().enumerate() {
            if c.get("index").and_then(Value::as_u64) != Some(i as u64) {
                return Err(format!("{name}: case {i} out of order"));
            }
            let verdict = c.get("verdict").and_then(Value::as_str).ok_or("verdict missing")?;
            if !["pass", "fail", "error", "vacuous"].contains(&verdict) {
                return Err(format!("{name}: bad verdict {verdict}"));
            }
            for k in ["kind", "input", "result", "replay", "stream"] {
                if c.get(k).is_none() {
                    return Err(format!("{name}: case {i} lacks {k}"));
                }
            }
            let rp = c.get("replay").unwrap();
            if rp.get("suite").and_then(Value::as_str) != Some(name) || rp.get("config").is_none() {
                return Err(format!("{name}: case {i} has no replay payload"));
            }
        }
        let sum = s.get("summary").ok_or("suite summary missing")?;
        let n = sum.get("cases").and_then(Value::as_u64).ok_or("summary.cases missing")?;
        if n != cases.len() as u64 {
            return Err(format!("{name}: summary count mismatch"));
        }
        total += n;
    }
    let sum = obj(top.get("summary").ok_or("summary missing")?, "summary")?;
    let parts: u64 = ["passed", "failed", "errors", "vacuous"].iter().filter_map(|k| sum.get(*k).and_then(Value::as_u64)).sum();
    if sum.get("cases").and_then(Value::as_u64) != Some(total) || parts != total {
        return Err("summary totals inconsistent".into());
    }
    if sum.get("ok").and_then(Value::as_bool).is_none() {
        return Err("summary.ok missing".into());
    }
    Ok(())
}

fn stream_id(s: Suite, index: usize) -> u64 {
    (s.id() << 32) | index as u64
}

pub fn case_rng(seed: u64, s: Suite, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(s, index));
    rng
}

/// Retry on sampling failures that a fresh draw can avoid.
fn resamplable(e: &Error) -> bool {
    matches!(
        e,
        Error::Degenerate | Error::NoLift | Error::NoFactorization | Error::PrecisionExhausted(_) | Error::NotSquarefree | Error::Singular | Error::NotIntegral
    )
}

// ---------------------------------------------------------------- sampling

fn diag_f(ctx: &PrecisionContext, r: &[FScalar]) -> EMatrix {
    EMatrix::diag(ctx, &r.iter().map(|a| ctx.e_from_f(*a)).collect::<Vec<_>>())
}

fn poly_from_roots(ctx: &PrecisionContext, r: &[FScalar]) -> EPoly {
    r.iter().fold(EPoly::constant(ctx, ctx.e_one()), |f, a| f.mul(&EPoly::linear(ctx, ctx.e_from_f(*a))))
}

/// `s (1 − p^e u)` with `u` a unit: `val(1 − a²) = e` for `e ≥ 1`.
fn near_sign(ctx: &PrecisionContext, rng: &mut ChaCha20Rng, s: i64, e: i32) -> FScalar {
    let u = ctx.random_unit_f(rng);
    let a = ctx.one().sub(&ctx.pk(e).mul(&u));
    if s < 0 {
        a.neg()
    } else {
        a
    }
}

/// Integral with `1 ∓ a` both units.
fn generic_root(ctx: &PrecisionContext, rng: &mut ChaCha20Rng) -> FScalar {
    loop {
        let a = ctx.random_f(rng, 0);
        if a.sub(&ctx.one()).is_unit() && a.add(&ctx.one()).is_unit() {
            return a;
        }
    }
}

fn random_sign(rng: &mut ChaCha20Rng) -> i64 {
    if rng.gen_bool(0.5) {
        1
    } else {
        -1
    }
}

/// Contraction root whose `val(1 − a²)` has the parity of `label`.
fn group_root(ctx: &PrecisionContext, rng: &mut ChaCha20Rng, label: FormLabel, nonintegral: bool) -> FScalar {
    let s = random_sign(rng);
    match label {
        FormLabel::Split if nonintegral => ctx.random_unit_f(rng).shift(-1),
        FormLabel::Split => match rng.gen_range(0..3) {
            0 | 1 => generic_root(ctx, rng),
            _ => {
                let e = 2 * rng.gen_range(1..=2);
                near_sign(ctx, rng, s, e)
            }
        },
        FormLabel::NonSplit => {
            let e = 2 * rng.gen_range(0..=1) + 1;
            near_sign(ctx, rng, s, e)
        }
    }
}

/// Root of `r(δ)` whose valuation has the parity of `label`.
fn lie_root(ctx: &PrecisionContext, rng: &mut ChaCha20Rng, label: FormLabel, nonintegral: bool) -> FScalar {
    let odd = !label.is_split();
    let v = match (odd, nonintegral) {
        (false, true) => -2,
        (true, true) => -1,
        (false, false) => 2 * rng.gen_range(0..=1),
        (true, false) => 2 * rng.gen_range(0..=1) + 1,
    };
    ctx.random_unit_f(rng).shift(v)
}

fn labels(datum: &EndoDatum) -> Vec<FormLabel> {
    std::iter::repeat_n(datum.alpha, datum.a).chain(std::iter::repeat_n(datum.beta, datum.b)).collect()
}

/// Lifts over `(V, V_α) ⊕ (V, V_β)` and the split `(V_n, V_n)` need
/// `d(α) + d(β)` even: `val det(1 − A²)` is counted on both sides.
pub fn datum_is_obstructed(datum: &EndoDatum) -> bool {
    let odd = |l: FormLabel, k: usize| k > 0 && !l.is_split() && k % 2 == 1;
    odd(datum.alpha, datum.a) ^ odd(datum.beta, datum.b)
}

fn group_kind(index: usize) -> &'static str {
    ["vdiff0", "vdiff1", "vdiff2", "descent", "random"][index % 5]
}

fn lie_kind(index: usize) -> &'static str {
    ["vdiff0", "vdiff1", "vdiff2", "nonintegral", "random"][index % 5]
}

fn descent_kind(datum: &EndoDatum, index: usize) -> &'static str {
    if !datum.is_unramified() {
        // an odd number of odd-distance roots at ±1 would leave a component
        // with no integral point, so ramified roots all go to one sign
        return ["plus_plus", "minus_minus"][index % 2];
    }
    if datum.n() == 1 {
        return ["plus_minus", "minus_plus"][index % 2];
    }
    ["plus_minus", "minus_generic", "generic_plus", "minus_plus"][index % 4]
}

fn draw_group_roots(ctx: &PrecisionContext, datum: &EndoDatum, kind: &str, rng: &mut ChaCha20Rng) -> Vec<FScalar> {
    let ls = labels(datum);
    let sign_pair = |rng: &mut ChaCha20Rng, s: i64, l: FormLabel| {
        let e = if l.is_split() { 2 * rng.gen_range(1..=2) } else { 2 * rng.gen_range(0..=1) + 1 };
        near_sign(ctx, rng, s, e)
    };
    let mut r = Vec::with_capacity(ls.len());
    match kind {
        "vdiff0" | "vdiff1" | "vdiff2" => {
            let k: i32 = kind[5..].parse().unwrap();
            r.push(group_root(ctx, rng, ls[0], false));
            if ls.len() > 1 {
                let u = ctx.random_unit_f(rng);
                r.push(r[0].add(&ctx.pk(k).mul(&u)));
            }
        }
        "plus_minus" | "descent" | "minus_plus" => {
            let s = if kind == "minus_plus" { -1 } else { 1 };
            for (i, l) in ls.iter().enumerate() {
                r.push(sign_pair(rng, if i % 2 == 0 { s } else { -s }, *l));
            }
        }
        "plus_plus" | "minus_minus" => {
            let s = if kind == "plus_plus" { 1 } else { -1 };
            r.extend(ls.iter().map(|l| sign_pair(rng, s, *l)));
        }
        "minus_generic" => {
            r.push(sign_pair(rng, -1, ls[0]));
            r.extend(ls[1..].iter().map(|_| generic_root(ctx, rng)));
        }
        "generic_plus" => {
            r.push(generic_root(ctx, rng));
            r.extend(ls[1..].iter().map(|l| sign_pair(rng, 1, *l)));
        }
        _ => {
            for l in &ls {
                let nonint = l.is_split() && rng.gen_range(0..4) == 0;
                r.push(group_root(ctx, rng, *l, nonint));
            }
        }
    }
    r
}

fn draw_lie_roots(ctx: &PrecisionContext, datum: &EndoDatum, kind: &str, rng: &mut ChaCha20Rng) -> Vec<FScalar> {
    let ls = labels(datum);
    let mut r = Vec::with_capacity(ls.len());
    match kind {
        "vdiff0" | "vdiff1" | "vdiff2" => {
            let k: i32 = kind[5..].parse().unwrap();
            r.push(lie_root(ctx, rng, ls[0], false));
            if ls.len() > 1 {
                let u = ctx.random_unit_f(rng);
                let v = r[0].val().unwrap();
                r.push(r[0].add(&ctx.pk(v + k).mul(&u)));
            }
        }
        "nonintegral" => {
            // partners stay at the lowest valuation of their parity: a spread
            // of 4 in valuations exhausts N = 12 through the lift
            for (i, l) in ls.iter().enumerate() {
                if i == 0 {
                    r.push(lie_root(ctx, rng, *l, true));
                } else {
                    let v = if l.is_split() { 0 } else { 1 };
                    r.push(ctx.random_unit_f(rng).shift(v));
                }
            }
        }
        _ => {
            for l in &ls {
                r.push(lie_root(ctx, rng, *l, false));
            }
        }
    }
    r
}

/// Matched triple on the group side.
#[derive(Clone, Debug)]
pub struct GroupInput {
    pub roots: Vec<FScalar>,
    /// `None` for a rank-zero factor.
    pub xa: Option<SymPoint>,
    pub xb: Option<SymPoint>,
    pub x: SymPoint,
    pub chi_a: EPoly,
    pub chi_b: EPoly,
}

fn opt_point_json(x: &Option<SymPoint>) -> Value {
    x.as_ref().map_or(Value::Null, SymPoint::to_json)
}

fn opt_point_from(ctx: &PrecisionContext, v: Option<&Value>) -> Result<Option<SymPoint>> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(v) => SymPoint::from_json(ctx, v).map(Some),
    }
}

fn roots_json(r: &[FScalar]) -> Value {
    Value::Array(r.iter().map(FScalar::to_json).collect())
}

fn roots_from(ctx: &PrecisionContext, v: Option<&Value>) -> Result<Vec<FScalar>> {
    v.and_then(Value::as_array)
        .ok_or_else(|| Error::Invalid("roots missing".into()))?
        .iter()
        .map(|z| FScalar::from_json(ctx, z))
        .collect()
}

fn field<'a>(v: &'a Value, k: &str) -> Result<&'a Value> {
    v.get(k).ok_or_else(|| Error::Invalid(format!("input field {k} missing")))
}

impl GroupInput {
    pub fn to_json(&self) -> Value {
        json!({
            "roots": roots_json(&self.roots),
            "x": self.x.to_json(),
            "xa": opt_point_json(&self.xa),
            "xb": opt_point_json(&self.xb),
            "chi_a": self.chi_a.to_json(),
            "chi_b": self.chi_b.to_json(),
        })
    }

    pub fn from_json(ctx: &PrecisionContext, v: &Value) -> Result<GroupInput> {
        Ok(GroupInput {
            roots: roots_from(ctx, v.get("roots"))?,
            xa: opt_point_from(ctx, v.get("xa"))?,
            xb: opt_point_from(ctx, v.get("xb"))?,
            x: SymPoint::from_json(ctx, field(v, "x")?)?,
            chi_a: EPoly::from_json(ctx, field(v, "chi_a")?)?,
            chi_b: EPoly::from_json(ctx, field(v, "chi_b")?)?,
        })
    }

    fn ha(&self) -> EMatrix {
        self.xa.as_ref().map_or_else(|| EMatrix::zeros(&self.x.ctx(), 0, 0), |p| p.a.clone())
    }

    fn hb(&self) -> EMatrix {
        self.xb.as_ref().map_or_else(|| EMatrix::zeros(&self.x.ctx(), 0, 0), |p| p.a.clone())
    }
}

fn lift_factor(ctx: &PrecisionContext, r: &[FScalar], forms: &(HermForm, HermForm)) -> Result<Option<SymPoint>> {
    if r.is_empty() {
        return Ok(None);
    }
    lift_from_herm(&diag_f(ctx, r), forms).map(Some)
}

fn random_h(ctx: &PrecisionContext, n: usize, rng: &mut ChaCha20Rng) -> (EMatrix, EMatrix) {
    let id = EMatrix::identity(ctx, n);
    (random_integral_unitary(ctx, &id, rng), random_integral_unitary(ctx, &id, rng))
}

/// Draw roots, lift the endoscopic factors and pick `x` in a random rational
/// class of the stable class of `lift(diag(roots))`, conjugated by a random
/// element of `H(O)`. With `integral`, only the base class is used and `x`,
/// `x_a`, `x_b` must be integral. Returns the number of draws used.
pub fn sample_matched_pair(
    ctx: &PrecisionContext,
    datum: &EndoDatum,
    kind: &str,
    integral: bool,
    rng: &mut ChaCha20Rng,
) -> std::result::Result<(GroupInput, u32), String> {
    let (fa, fb) = datum.forms(ctx);
    let n = datum.n();
    let mut last = String::new();
    for attempt in 1..=RESAMPLE_BUDGET {
        let roots = draw_group_roots(ctx, datum, kind, rng);
        let try_build = |rng: &mut ChaCha20Rng| -> Result<GroupInput> {
            let xa = lift_factor(ctx, &roots[..datum.a], &fa)?;
            let xb = lift_factor(ctx, &roots[datum.a..], &fb)?;
            let nice = lift_from_herm(&diag_f(ctx, &roots), &SymPoint::split_forms(ctx, n))?;
            if !is_rss(&nice)? {
                return Err(Error::NotSquarefree);
            }
            let reps = stable_orbit_reps(&nice)?;
            let pick = if integral {
                // ramified factors never descend, so only x needs to be integral there
                let factors_ok = !datum.is_unramified() || [&xa, &xb].iter().all(|p| p.as_ref().is_none_or(|p| p.mat.is_integral()));
                let found = reps.iter().position(|r| r.1.mat.is_integral());
                match found {
                    Some(i) if factors_ok => i,
                    _ => return Err(Error::NotIntegral),
                }
            } else {
                rng.gen_range(0..reps.len())
            };
            let (h1, h2) = random_h(ctx, n, rng);
            let x = reps[pick].1.conjugate(&h1, &h2)?;
            if integral && !x.mat.is_integral() {
                return Err(Error::NotIntegral);
            }
            let g = GroupInput {
                chi_a: poly_from_roots(ctx, &roots[..datum.a]),
                chi_b: poly_from_roots(ctx, &roots[datum.a..]),
                roots: roots.clone(),
                xa,
                xb,
                x,
            };
            let chi = char_poly(&g.x.a);
            if !poly_agree(&chi, &g.chi_a.mul(&g.chi_b), poly_depth(&chi)) {
                return Err(Error::Invalid("sampled point does not match".into()));
            }
            Ok(g)
        };
        match try_build(rng) {
            Ok(g) => return Ok((g, attempt)),
            Err(e) if resamplable(&e) => last = e.to_string(),
            Err(e) => return Err(e.to_string()),
        }
    }
    Err(format!("resample budget of {RESAMPLE_BUDGET} exhausted (last: {last})"))
}

/// Matched triple on the Lie side: `δ: W₂ → W₁`.
#[derive(Clone, Debug)]
pub struct LieInput {
    pub roots: Vec<FScalar>,
    pub xa: Option<EMatrix>,
    pub xb: Option<EMatrix>,
    pub x: EMatrix,
}

fn opt_mat_json(m: &Option<EMatrix>) -> Value {
    m.as_ref().map_or(Value::Null, EMatrix::to_json)
}

fn opt_mat_from(ctx: &PrecisionContext, v: Option<&Value>) -> Result<Option<EMatrix>> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(v) => EMatrix::from_json(ctx, v).map(Some),
    }
}

impl LieInput {
    pub fn to_json(&self) -> Value {
        json!({"roots": roots_json(&self.roots), "x": self.x.to_json(), "xa": opt_mat_json(&self.xa), "xb": opt_mat_json(&self.xb)})
    }

    pub fn from_json(ctx: &PrecisionContext, v: &Value) -> Result<LieInput> {
        Ok(LieInput {
            roots: roots_from(ctx, v.get("roots"))?,
            xa: opt_mat_from(ctx, v.get("xa"))?,
            xb: opt_mat_from(ctx, v.get("xb"))?,
            x: EMatrix::from_json(ctx, field(v, "x")?)?,
        })
    }
}

pub fn sample_matched_lie(ctx: &PrecisionContext, datum: &EndoDatum, kind: &str, rng: &mut ChaCha20Rng) -> std::result::Result<(LieInput, u32), String> {
    let (fa, fb) = datum.forms(ctx);
    let n = datum.n();
    let fx = SymPoint::split_forms(ctx, n);
    let mut last = String::new();
    for attempt in 1..=RESAMPLE_BUDGET {
        let roots = draw_lie_roots(ctx, datum, kind, rng);
        let try_build = |rng: &mut ChaCha20Rng| -> Result<LieInput> {
            if roots.iter().any(|r| r.is_zero()) || (roots.len() == 2 && roots[0].sub(&roots[1]).is_zero()) {
                return Err(Error::NotSquarefree);
            }
            let lift = |r: &[FScalar], f: &(HermForm, HermForm)| -> Result<Option<EMatrix>> {
                if r.is_empty() {
                    Ok(None)
                } else {
                    lie_lift_from_herm(&diag_f(ctx, r), f).map(Some)
                }
            };
            let xa = lift(&roots[..datum.a], &fa)?;
            let xb = lift(&roots[datum.a..], &fb)?;
            let nice = lie_lift_from_herm(&diag_f(ctx, &roots), &fx)?;
            let reps = stable_orbit_reps_lie(&nice, &fx)?;
            let pick = rng.gen_range(0..reps.len());
            let (h1, h2) = random_h(ctx, n, rng);
            let x = h1.mul(&reps[pick].1).mul(&h2.inverse()?);
            // too few digits left to certify the match
            let chi = char_poly(&lie_contraction(&x, &fx)?);
            if !poly_agree(&chi, &poly_from_roots(ctx, &roots), poly_depth(&chi)) {
                return Err(Error::PrecisionExhausted("lie sample"));
            }
            Ok(LieInput { roots: roots.clone(), xa, xb, x })
        };
        match try_build(rng) {
            Ok(g) => return Ok((g, attempt)),
            Err(e) if resamplable(&e) => last = e.to_string(),
            Err(e) => return Err(e.to_string()),
        }
    }
    Err(format!("resample budget of {RESAMPLE_BUDGET} exhausted (last: {last})"))
}

// ---------------------------------------------------------------- evaluation

type Eval = Result<(Value, bool)>;

/// `Δ_rel · Orb^κ = SO` for unramified data, `Orb^κ = 0` otherwise.
pub fn eval_fl(datum: &EndoDatum, ocfg: &OrbitalConfig, g: &GroupInput) -> Eval {
    let ctx = g.x.ctx();
    let ko = kappa_orbital(&g.x, datum, (&g.chi_a, &g.chi_b), ocfg)?;
    let t = herm_transfer_factor(&g.ha(), &g.hb(), &g.x.a, &g.x.forms.0, datum)?;
    let so_a = g.xa.as_ref().map_or(Ok(1), |p| stable_orbital_one(p, ocfg))?;
    let so_b = g.xb.as_ref().map_or(Ok(1), |p| stable_orbital_one(p, ocfg))?;
    let so = so_a * so_b;
    let saturated = ko.breakdown.iter().all(|b| b.2.saturated);
    let (identity, holds) = if datum.is_unramified() {
        ("delta * orb_kappa == so", exact_eq(ctx.p, t.sign, t.qexp, ko.value, so as i64))
    } else {
        ("orb_kappa == 0", ko.value == 0)
    };
    let res = json!({
        "identity": identity,
        "delta": t.to_json(),
        "orb_kappa": ko.to_json(),
        "so": so,
        "x_integral": g.x.mat.is_integral(),
        "saturated": saturated,
    });
    Ok((res, holds && saturated))
}

pub fn eval_fl_lie(ctx: &PrecisionContext, datum: &EndoDatum, ocfg: &OrbitalConfig, g: &LieInput) -> Eval {
    let (fa, fb) = datum.forms(ctx);
    let fx = SymPoint::split_forms(ctx, datum.n());
    let contr = |m: &Option<EMatrix>, f: &(HermForm, HermForm)| -> Result<EMatrix> {
        m.as_ref().map_or_else(|| Ok(EMatrix::zeros(ctx, 0, 0)), |m| lie_contraction(m, f))
    };
    let (ya, yb) = (contr(&g.xa, &fa)?, contr(&g.xb, &fb)?);
    let chi_a = char_poly(&ya);
    let chi_b = char_poly(&yb);
    let ko = kappa_orbital_lie(&g.x, &fx, datum, (&chi_a, &chi_b), ocfg)?;
    let t = herm_transfer_factor(&ya, &yb, &lie_contraction(&g.x, &fx)?, &fx.0, datum)?;
    let so_a = g.xa.as_ref().map_or(Ok(1), |m| stable_orbital_lie_one(m, &fa, ocfg))?;
    let so_b = g.xb.as_ref().map_or(Ok(1), |m| stable_orbital_lie_one(m, &fb, ocfg))?;
    let so = so_a * so_b;
    let saturated = ko.breakdown.iter().all(|b| b.2.saturated);
    let (identity, holds) = if datum.is_unramified() {
        ("delta * orb_kappa == so", exact_eq(ctx.p, t.sign, t.qexp, ko.value, so as i64))
    } else {
        ("orb_kappa == 0", ko.value == 0)
    };
    let res = json!({
        "identity": identity,
        "delta": t.to_json(),
        "orb_kappa": ko.to_json(),
        "so": so,
        "x_integral": g.x.is_integral(),
        "saturated": saturated,
    });
    Ok((res, holds && saturated))
}

/// Endoscopic datum and partition seen by a descent component: its roots
/// keep the side they had in `(χ_a, χ_b)`.
fn component_partition(c: &Component, chi_a: &EPoly, chi_b: &EPoly) -> Result<(EndoDatum, EPoly, EPoly)> {
    let ctx = c.point.ctx();
    let fd = factor_data(&c.point.a)?;
    let roots = fd.linear_roots();
    if roots.len() != c.point.n {
        return Err(Error::UnsupportedDegree(2));
    }
    let (mut pa, mut pb) = (EPoly::constant(&ctx, ctx.e_one()), EPoly::constant(&ctx, ctx.e_one()));
    let (mut a, mut b) = (0, 0);
    for r in roots {
        let va = chi_a.eval(&r).val_or_abs();
        let vb = chi_b.eval(&r).val_or_abs();
        if va == vb {
            return Err(Error::PartitionMismatch);
        }
        if vb > va {
            pb = pb.mul(&EPoly::linear(&ctx, r));
            b += 1;
        } else {
            pa = pa.mul(&EPoly::linear(&ctx, r));
            a += 1;
        }
    }
    Ok((EndoDatum::new(a, b, FormLabel::Split, FormLabel::Split), pa, pb))
}

fn component_kappa_orbital(c: &Option<Component>, chi_a: &EPoly, chi_b: &EPoly, ocfg: &OrbitalConfig) -> Result<(i64, Value)> {
    let Some(c) = c else {
        return Ok((1, Value::Null));
    };
    let (d, pa, pb) = component_partition(c, chi_a, chi_b)?;
    let ko = kappa_orbital(&c.point, &d, (&pa, &pb), ocfg)?;
    Ok((ko.value, json!({"datum": d.to_json(), "orb_kappa": ko.to_json()})))
}

fn comp_herm(c: &Option<Component>, ctx: &PrecisionContext) -> EMatrix {
    c.as_ref().map_or_else(|| EMatrix::zeros(ctx, 0, 0), |c| contraction(&c.point))
}

/// `Δ` on the two descent pieces, each with the datum its roots induce.
fn descended_transfer_factor(
    ctx: &PrecisionContext,
    pieces: [(&Option<Component>, &Option<Component>, &Option<Component>); 2],
    chi_a: &EPoly,
    chi_b: &EPoly,
) -> Result<(TransferFactor, Value)> {
    let mut total = TransferFactor::ONE;
    let mut parts = Vec::new();
    for (ca, cb, cx) in pieces {
        let Some(x) = cx else {
            parts.push(Value::Null);
            continue;
        };
        let (d, _, _) = component_partition(x, chi_a, chi_b)?;
        let t = herm_transfer_factor(&comp_herm(ca, ctx), &comp_herm(cb, ctx), &x.point.a, &x.point.forms.0, &d)?;
        parts.push(t.to_json());
        total = total.mul(&t);
    }
    Ok((total, Value::Array(parts)))
}

/// Descent identities on one integral point of the descent locus.
pub fn eval_descent(datum: &EndoDatum, ocfg: &OrbitalConfig, g: &GroupInput) -> Eval {
    let ctx = g.x.ctx();
    let ko = kappa_orbital(&g.x, datum, (&g.chi_a, &g.chi_b), ocfg)?;
    let dd = descent_data(&g.x)?;
    let eigen_ok = dd.eigen_restriction;
    let touches = dd.y_plus.is_some() as u8 + dd.y_minus.is_some() as u8;
    if !datum.is_unramified() {
        // vanishing clause
        let res = json!({"identity": "orb_kappa == 0", "orb_kappa": ko.to_json(), "eigen_restriction": eigen_ok, "pieces": touches});
        return Ok((res, ko.value == 0 && eigen_ok));
    }
    let (k1, j1) = component_kappa_orbital(&dd.y_plus, &g.chi_a, &g.chi_b, ocfg)?;
    let (k2, j2) = component_kappa_orbital(&dd.y_minus, &g.chi_a, &g.chi_b, ocfg)?;
    let product_ok = ko.value == k1 * k2;
    let t = herm_transfer_factor(&g.ha(), &g.hb(), &g.x.a, &g.x.forms.0, datum)?;
    let da = g.xa.as_ref().map(descent_data).transpose()?;
    let db = g.xb.as_ref().map(descent_data).transpose()?;
    let none = None;
    fn plus<'a>(d: &'a Option<DescentData>, none: &'a Option<Component>) -> &'a Option<Component> {
        d.as_ref().map_or(none, |d| &d.y_plus)
    }
    fn minus<'a>(d: &'a Option<DescentData>, none: &'a Option<Component>) -> &'a Option<Component> {
        d.as_ref().map_or(none, |d| &d.y_minus)
    }
    let (td, tparts) =
        descended_transfer_factor(&ctx, [(plus(&da, &none), plus(&db, &none), &dd.y_plus), (minus(&da, &none), minus(&db, &none), &dd.y_minus)], &g.chi_a, &g.chi_b)?;
    let tf_ok = td == t;
    let eigen_all = eigen_ok && [&da, &db].iter().all(|d| d.as_ref().is_none_or(|d| d.eigen_restriction));
    let res = json!({
        "orb_kappa": ko.to_json(),
        "plus": j1,
        "minus": j2,
        "product": k1 * k2,
        "product_identity": product_ok,
        "delta": t.to_json(),
        "delta_pieces": tparts,
        "transfer_factorization": tf_ok,
        "eigen_restriction": eigen_all,
        "pieces": touches,
        "descent": dd.to_json(),
    });
    Ok((res, product_ok && tf_ok && eigen_all))
}

// ---------------------------------------------------------------- property suites

/// Depth for identities among matrices with entries of valuation `≥ v`,
/// capped at `N − 2`.
fn depth(ctx: &PrecisionContext, v: Option<i32>) -> i32 {
    tol_for(ctx, v).min(ctx.n as i32 - 2 + 2 * v.unwrap_or(0).min(0))
}

fn close(m1: &EMatrix, m2: &EMatrix) -> bool {
    let ctx = m1.ctx;
    let v = m1.min_val().into_iter().chain(m2.min_val()).min();
    residual_vanishes(&m1.sub(m2), depth(&ctx, v))
}

fn cayley_case(ctx: &PrecisionContext, ocfg: &OrbitalConfig, index: usize, rng: &mut ChaCha20Rng) -> Result<(String, u32, Value, Value, bool)> {
    let n = 1 + index % 3;
    let nu = random_sign(rng);
    let fx = SymPoint::split_forms(ctx, n);
    for attempt in 1..=RESAMPLE_BUDGET {
        let roots: Vec<FScalar> = (0..n).map(|_| ctx.random_unit_f(rng).shift(2 * rng.gen_range(0..=1))).collect();
        let distinct = (0..n).all(|i| (i + 1..n).all(|j| !roots[i].sub(&roots[j]).is_zero()));
        // det(1 − Y) = Π(1 − r_i); deeper zeros eat the precision budget
        let sing: i32 = roots.iter().map(|r| ctx.one().sub(r).val_or_abs()).sum();
        if !distinct || sing > 1 {
            continue;
        }
        let attempt_case = |rng: &mut ChaCha20Rng| -> Result<(Value, Value, bool)> {
        let x0 = lie_lift_from_herm(&diag_f(ctx, &roots), &fx)?;
        let (h1, h2) = random_h(ctx, n, rng);
        let xm = h1.mul(&x0).mul(&h2.inverse()?);
        let cx = cayley(&xm, nu, &fx)?;
        let roundtrip = close(&cayley_inv(&cx, nu)?, &xm);
        let (g1, g2) = random_h(ctx, n, rng);
        let moved = cayley(&g1.mul(&xm).mul(&g2.inverse()?), nu, &fx)?;
        let equivariant = close(&moved.mat, &cx.conjugate(&g1, &g2)?.mat);
        let r = lie_contraction(&xm, &fx)?;
        let contraction_ok = close(&contraction(&cx), &cayley_matrix(&r, nu)?);
        let chi_y = char_poly(&lie_embed(&xm, &fx)?);
        let transformed = cayley_charpoly_transform(&chi_y, nu, 2 * n)?;
        let chi_cx = char_poly(&cx.mat);
        let charpoly_ok = poly_agree(&transformed, &chi_cx, depth(ctx, chi_cx.coeffs.iter().filter_map(|c| c.val()).min()));
        // discriminant relation on a random split a + b = n
        let a = rng.gen_range(0..=n);
        let zs: Vec<FScalar> = roots
            .iter()
            .map(|r| ctx.one().add(r).div(&ctx.one().sub(r)).map(|q| if nu > 0 { q.neg() } else { q }))
            .collect::<Result<_>>()?;
        let chi_a = poly_from_roots(ctx, &zs[..a]);
        let chi_b = poly_from_roots(ctx, &zs[a..]);
        let spectrum_ok = poly_agree(&char_poly(&cx.a), &chi_a.mul(&chi_b), depth(ctx, Some(0)));
        let d_tilde = relative_discriminant(&poly_from_roots(ctx, &roots[..a]), &poly_from_roots(ctx, &roots[a..]));
        let d = relative_discriminant(&chi_a, &chi_b);
        let c = cab_factor(&cx, &chi_a, &chi_b, nu)?;
        let lhs = c.mul(&d);
        let disc_ok = lhs.sub(&d_tilde).val_or_abs() >= ctx.n as i32 - 2 + d_tilde.val().unwrap_or(0).min(0);
        // very regular at ν: Orb(c_ν(δ)) = Orb(δ)
        let heart = sing == 0 && roots.iter().all(FScalar::is_integral);
        let orbit = if heart && n <= 2 {
            let og = orbit_integral_auto(&cx, ocfg)?.count;
            let ol = orbit_integral_lie_auto(&xm, &fx, ocfg)?.count;
            Some((og, ol))
        } else {
            None
        };
        let orbit_ok = orbit.is_none_or(|(a, b)| a == b);
        let input = json!({"n": n, "nu": nu, "roots": roots_json(&roots), "delta": xm.to_json(), "split_a": a});
        let res = json!({
            "roundtrip": roundtrip,
            "equivariance": equivariant,
            "contraction": contraction_ok,
            "charpoly": charpoly_ok,
            "spectrum": spectrum_ok,
            "discriminant": disc_ok,
            "c_factor": c.to_json(),
            "orbit_consistency": orbit.map(|(a, b)| json!([a, b])),
        });
        let ok = roundtrip && equivariant && contraction_ok && charpoly_ok && spectrum_ok && disc_ok && orbit_ok;
        Ok((input, res, ok))
        };
        match attempt_case(rng) {
            Ok((input, res, ok)) => return Ok((format!("rank{n}"), attempt, input, res, ok)),
            Err(e) if resamplable(&e) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Invalid(format!("resample budget of {RESAMPLE_BUDGET} exhausted")))
}

fn tjd_case(ctx: &PrecisionContext, index: usize, rng: &mut ChaCha20Rng) -> Result<(String, u32, Value, Value, bool)> {
    let n = 1 + index % 2;
    let fx = SymPoint::split_forms(ctx, n);
    let (kind, x) = match index {
        0 => ("identity".to_string(), scalar_point(ctx, n, 1)),
        1 => ("minus_identity".to_string(), scalar_point(ctx, n, -1)),
        _ => {
            let g = random_integral_unitary(ctx, &total_gram(&fx), rng);
            ("symmetrized".to_string(), SymPoint::from_matrix(symmetrize(&g)?, fx.clone()))
        }
    };
    let t = tjd(&x)?;
    let id = EMatrix::identity(ctx, 2 * n);
    let commute = close(&t.x_as.mat.mul(&t.x_tu.mat), &t.x_tu.mat.mul(&t.x_as.mat));
    let reassemble = t.reassembles(&x);
    let fixed = t.as_is_fixed();
    let unipotent = t.tu_is_unipotent();
    let member = is_member_with(&t.x_as.mat, &fx) && is_member_with(&t.x_tu.mat, &fx);
    let t_as = tjd(&t.x_as)?;
    let t_tu = tjd(&t.x_tu)?;
    let idempotent = close(&t_as.x_as.mat, &t.x_as.mat) && close(&t_as.x_tu.mat, &id) && close(&t_tu.x_as.mat, &id);
    let (h1, h2) = random_h(ctx, n, rng);
    let moved = tjd(&x.conjugate(&h1, &h2)?)?;
    let expect = conjugate_tjd(&t, &h1, &h2)?;
    let unique = close(&moved.x_as.mat, &expect.x_as.mat) && close(&moved.x_tu.mat, &expect.x_tu.mat);
    let input = json!({"x": x.to_json()});
    let res = json!({
        "iterations": t.iters,
        "exponent": t.l,
        "commute": commute,
        "reassemble": reassemble,
        "as_fixed": fixed,
        "tu_unipotent": unipotent,
        "membership": member,
        "idempotence": idempotent,
        "conjugation_uniqueness": unique,
    });
    Ok((kind, 1, input, res, commute && reassemble && fixed && unipotent && member && idempotent && unique))
}

fn lattice_case(ctx: &PrecisionContext, ocfg: &OrbitalConfig, index: usize, rng: &mut ChaCha20Rng) -> Result<(String, u32, Value, Value, bool)> {
    let shapes = [(FormLabel::Split, 1, 2u32), (FormLabel::NonSplit, 1, 2), (FormLabel::Split, 2, 1), (FormLabel::NonSplit, 2, 1), (FormLabel::Split, 2, 2)];
    let (label, n, w) = shapes[index % shapes.len()];
    let form = HermForm::canonical(ctx, n, label);
    let set = enumerate_self_dual_cached(&form, w, ocfg.budget, ocfg.cache_dir.as_deref())?;
    let keys: HashSet<&Lattice> = set.iter().collect();
    let distinct = keys.len() == set.len();
    let self_dual = set.iter().all(|l| is_self_dual(l, &form) && l.in_window(w as i32));
    // U(Φ)(O) fixes Λ and preserves the window, so it permutes the set
    let g = random_integral_unitary(ctx, &form.gram, rng);
    let mut invariant = true;
    for l in set.iter() {
        let img = hnf(&g.mul(&l.basis))?;
        invariant &= keys.contains(&img);
    }
    let brute = if index < shapes.len() && n * w as usize <= 2 {
        let b = brute_force_self_dual(&form, w);
        Some(b.len() == set.len() && b.iter().all(|l| keys.contains(l)))
    } else {
        None
    };
    let input = json!({"form": label.as_str(), "n": n, "window": w, "g": g.to_json()});
    let res = json!({"count": set.len(), "distinct": distinct, "self_dual": self_dual, "unitary_invariance": invariant, "brute_force": brute});
    let ok = distinct && self_dual && invariant && brute.unwrap_or(true);
    Ok((format!("{}{n}_w{w}", label.as_str()), 1, input, res, ok))
}

/// Engine, oracle, saturation at `W + 1` and conjugation invariance.
pub fn eval_oracle(ocfg: &OrbitalConfig, x: &SymPoint, base: &SymPoint) -> Eval {
    let r = orbit_integral_auto(x, ocfg)?;
    let next = orbit_integral_unit_with(x, r.window + 1, ocfg)?;
    let (o, level) = oracle_auto(x, r.window, r.window + ORACLE_EXTRA_LEVELS)?;
    let rb = orbit_integral_auto(base, ocfg)?;
    let res = json!({
        "engine": r.to_json(),
        "engine_next_window": next.count,
        "oracle": o,
        "oracle_level": level,
        "unconjugated": rb.count,
    });
    Ok((res, r.saturated && next.count == r.count && o == r.count && rb.count == r.count))
}

fn oracle_case(ctx: &PrecisionContext, ocfg: &OrbitalConfig, index: usize, rng: &mut ChaCha20Rng) -> Result<(String, u32, Value, Value, bool)> {
    let n = if index % 5 == 4 { 2 } else { 1 };
    let datum = if n == 1 {
        EndoDatum::new(1, 0, FormLabel::Split, FormLabel::Split)
    } else {
        EndoDatum::new(1, 1, FormLabel::Split, FormLabel::Split)
    };
    let kind = if n == 1 { ["random", "vdiff0"][index % 2] } else { group_kind(index / 5) };
    let fx = SymPoint::split_forms(ctx, n);
    for attempt in 1..=RESAMPLE_BUDGET {
        let roots = draw_group_roots(ctx, &datum, kind, rng);
        let base = match lift_from_herm(&diag_f(ctx, &roots), &fx) {
            Ok(b) => b,
            Err(e) if resamplable(&e) => continue,
            Err(e) => return Err(e),
        };
        if !is_rss(&base)? {
            continue;
        }
        let (h1, h2) = random_h(ctx, n, rng);
        let x = base.conjugate(&h1, &h2)?;
        let (res, ok) = eval_oracle(ocfg, &x, &base)?;
        let input = json!({"roots": roots_json(&roots), "x": x.to_json(), "base": base.to_json()});
        return Ok((format!("rank{n}_{kind}"), attempt, input, res, ok));
    }
    Err(Error::Invalid(format!("resample budget of {RESAMPLE_BUDGET} exhausted")))
}

// ---------------------------------------------------------------- runners

fn record(suite: Suite, index: usize, kind: &str, attempts: u32, input: Value, out: Result<(Value, bool)>) -> CaseRecord {
    match out {
        Ok((result, ok)) => CaseRecord { suite, index, kind: kind.into(), attempts, input, result, verdict: Verdict::from_bool(ok), error: None },
        Err(e) => CaseRecord { suite, index, kind: kind.into(), attempts, input, result: Value::Null, verdict: Verdict::Error, error: Some(e.to_string()) },
    }
}

fn sampling_error(suite: Suite, index: usize, kind: &str, msg: String) -> CaseRecord {
    CaseRecord { suite, index, kind: kind.into(), attempts: RESAMPLE_BUDGET, input: Value::Null, result: Value::Null, verdict: Verdict::Error, error: Some(msg) }
}

fn vacuous(suite: Suite, index: usize, datum: &EndoDatum) -> CaseRecord {
    CaseRecord {
        suite,
        index,
        kind: "obstructed".into(),
        attempts: 0,
        input: json!({"datum": datum.to_json()}),
        result: json!({"reason": "val det(1 - A^2) parity differs between the endoscopic factors and Q_n; no matched pair exists"}),
        verdict: Verdict::Vacuous,
        error: None,
    }
}

/// Sample and evaluate, drawing again when evaluation runs out of
/// precision. Draws from the sampler and from here share one budget.
fn retry_eval(
    suite: Suite,
    index: usize,
    kind: &str,
    mut attempt: impl FnMut(&mut ChaCha20Rng) -> std::result::Result<(Value, u32, Eval), String>,
    rng: &mut ChaCha20Rng,
) -> CaseRecord {
    let mut used = 0u32;
    let mut last = String::new();
    while used < RESAMPLE_BUDGET {
        match attempt(rng) {
            Err(m) => return sampling_error(suite, index, kind, m),
            Ok((input, a, out)) => {
                used += a;
                match out {
                    Err(e) if resamplable(&e) => last = e.to_string(),
                    out => return record(suite, index, kind, used, input, out),
                }
            }
        }
    }
    sampling_error(suite, index, kind, format!("resample budget of {RESAMPLE_BUDGET} exhausted during evaluation (last: {last})"))
}

/// One case of `suite`, drawn from its own stream.
pub fn run_case(cfg: &VerifyConfig, suite: Suite, index: usize) -> CaseRecord {
    let ctx = cfg.ctx();
    let ocfg = cfg.orbital();
    let datum = cfg.datum;
    let mut rng = case_rng(cfg.seed, suite, index);
    match suite {
        Suite::Fl | Suite::Descent if datum_is_obstructed(&datum) => vacuous(suite, index, &datum),
        Suite::FlLie if datum_is_obstructed(&datum) => vacuous(suite, index, &datum),
        Suite::Fl => {
            let kind = group_kind(index);
            retry_eval(suite, index, kind, |rng| {
                let (g, a) = sample_matched_pair(&ctx, &datum, kind, false, rng)?;
                Ok((g.to_json(), a, eval_fl(&datum, &ocfg, &g)))
            }, &mut rng)
        }
        Suite::Descent => {
            let kind = descent_kind(&datum, index);
            retry_eval(suite, index, kind, |rng| {
                let (g, a) = sample_matched_pair(&ctx, &datum, kind, true, rng)?;
                Ok((g.to_json(), a, eval_descent(&datum, &ocfg, &g)))
            }, &mut rng)
        }
        Suite::FlLie => {
            let kind = lie_kind(index);
            retry_eval(suite, index, kind, |rng| {
                let (g, a) = sample_matched_lie(&ctx, &datum, kind, rng)?;
                Ok((g.to_json(), a, eval_fl_lie(&ctx, &datum, &ocfg, &g)))
            }, &mut rng)
        }
        Suite::Cayley | Suite::Tjd | Suite::Lattice | Suite::Oracle => {
            let out = match suite {
                Suite::Cayley => cayley_case(&ctx, &ocfg, index, &mut rng),
                Suite::Tjd => tjd_case(&ctx, index, &mut rng),
                Suite::Lattice => lattice_case(&ctx, &ocfg, index, &mut rng),
                _ => oracle_case(&ctx, &ocfg, index, &mut rng),
            };
            match out {
                Ok((kind, attempts, input, result, ok)) => record(suite, index, &kind, attempts, input, Ok((result, ok))),
                Err(e) => record(suite, index, "unsampled", 0, Value::Null, Err(e)),
            }
        }
    }
}

pub fn run_suite(cfg: &VerifyConfig, suite: Suite) -> SuiteReport {
    let start = Instant::now();
    let cases: Vec<CaseRecord> = (0..cfg.trials).into_par_iter().map(|i| run_case(cfg, suite, i)).collect();
    SuiteReport { suite, cases, runtime_ms: start.elapsed().as_millis() }
}

/// Every suite named in `cfg`, in order.
pub fn run(cfg: &VerifyConfig) -> Result<Report> {
    cfg.validate()?;
    let suites = cfg.suites.iter().map(|s| run_suite(cfg, *s)).collect();
    Ok(Report { config: cfg.clone(), suites })
}

fn with_suites(cfg: &VerifyConfig, suites: &[Suite]) -> VerifyConfig {
    VerifyConfig { suites: suites.to_vec(), ..cfg.clone() }
}

pub fn verify_fl(cfg: &VerifyConfig) -> Result<Report> {
    run(&with_suites(cfg, &[Suite::Fl]))
}

pub fn verify_fl_lie(cfg: &VerifyConfig) -> Result<Report> {
    run(&with_suites(cfg, &[Suite::FlLie]))
}

pub fn verify_descent(cfg: &VerifyConfig) -> Result<Report> {
    run(&with_suites(cfg, &[Suite::Descent]))
}

/// Property suites named in `cfg`, or all four when none is named.
pub fn property_suite(cfg: &VerifyConfig) -> Result<Report> {
    let named: Vec<Suite> = cfg.suites.iter().copied().filter(|s| Suite::PROPERTIES.contains(s)).collect();
    run(&with_suites(cfg, if named.is_empty() { &Suite::PROPERTIES } else { &named }))
}

/// Outcome of re-running one reported case.
#[derive(Clone, Debug)]
pub struct Replayed {
    pub suite: Suite,
    pub index: usize,
    pub record: CaseRecord,
    /// Verdict and result agree with the report.
    pub reproduced: bool,
}

/// Re-run a case from its report entry. Suites with a matched-pair input
/// evaluate the embedded input; the others regenerate from the seed stream.
pub fn replay_case(case: &Value) -> Result<Replayed> {
    let bad = |k: &str| Error::Invalid(format!("case lacks {k}"));
    let rp = case.get("replay").ok_or_else(|| bad("replay"))?;
    let suite = Suite::parse(rp.get("suite").and_then(Value::as_str).ok_or_else(|| bad("replay.suite"))?)?;
    let cfg = VerifyConfig::from_json(rp.get("config").ok_or_else(|| bad("replay.config"))?)?;
    let index = rp.get("index").and_then(Value::as_u64).ok_or_else(|| bad("replay.index"))? as usize;
    let input = case.get("input").cloned().unwrap_or(Value::Null);
    let kind = case.get("kind").and_then(Value::as_str).unwrap_or("").to_string();
    let attempts = case.get("attempts").and_then(Value::as_u64).unwrap_or(0) as u32;
    let ctx = cfg.ctx();
    let ocfg = cfg.orbital();
    let has_pair = !input.is_null() && kind != "obstructed";
    let record = match suite {
        Suite::Fl if has_pair => record(suite, index, &kind, attempts, input.clone(), GroupInput::from_json(&ctx, &input).and_then(|g| eval_fl(&cfg.datum, &ocfg, &g))),
        Suite::Descent if has_pair => {
            record(suite, index, &kind, attempts, input.clone(), GroupInput::from_json(&ctx, &input).and_then(|g| eval_descent(&cfg.datum, &ocfg, &g)))
        }
        Suite::FlLie if has_pair => {
            record(suite, index, &kind, attempts, input.clone(), LieInput::from_json(&ctx, &input).and_then(|g| eval_fl_lie(&ctx, &cfg.datum, &ocfg, &g)))
        }
        _ => run_case(&cfg, suite, index),
    };
    let same_verdict = case.get("verdict").and_then(Value::as_str) == Some(record.verdict.as_str());
    let same_result = case.get("result") == Some(&record.result);
    Ok(Replayed { suite, index, record, reproduced: same_verdict && same_result })
}

/// Replay every case of a report, or only `(suite, index)`.
pub fn replay_report(report: &Value, only: Option<(Suite, usize)>) -> Result<Vec<Replayed>> {
    validate_report(report).map_err(Error::Invalid)?;
    let mut cases = Vec::new();
    for s in report["suites"].as_array().unwrap() {
        let suite = Suite::parse(s["suite"].as_str().unwrap())?;
        for c in s["cases"].as_array().unwrap() {
            let idx = c["index"].as_u64().unwrap() as usize;
            if only.is_none_or(|o| o == (suite, idx)) {
                cases.push(c.clone());
            }
        }
    }
    cases.par_iter().map(replay_case).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(trials: usize, suites: &[Suite]) -> VerifyConfig {
        VerifyConfig { trials, suites: suites.to_vec(), seed: 7, ..VerifyConfig::default() }
    }

    #[test]
    fn sampling_is_deterministic() {
        let ctx = PrecisionContext::new(3, 12).unwrap();
        let datum = EndoDatum::new(1, 1, FormLabel::Split, FormLabel::Split);
        for kind in ["vdiff0", "vdiff2", "descent", "random"] {
            let (g1, _) = sample_matched_pair(&ctx, &datum, kind, false, &mut case_rng(1, Suite::Fl, 3)).unwrap();
            let (g2, _) = sample_matched_pair(&ctx, &datum, kind, false, &mut case_rng(1, Suite::Fl, 3)).unwrap();
            assert_eq!(g1.to_json().to_string(), g2.to_json().to_string());
        }
    }

    #[test]
    fn forced_kinds_hit_their_targets() {
        let ctx = PrecisionContext::new(3, 12).unwrap();
        let datum = EndoDatum::new(1, 1, FormLabel::Split, FormLabel::Split);
        for (i, k) in [0, 1, 2].into_iter().enumerate() {
            let (g, _) = sample_matched_pair(&ctx, &datum, &format!("vdiff{k}"), false, &mut case_rng(5, Suite::Fl, i)).unwrap();
            assert_eq!(g.roots[0].sub(&g.roots[1]).val(), Some(k));
        }
        let (g, _) = sample_matched_pair(&ctx, &datum, "descent", true, &mut case_rng(5, Suite::Fl, 9)).unwrap();
        assert!(g.roots[0].sub(&ctx.one()).val_or_abs() >= 1);
        assert!(g.roots[1].add(&ctx.one()).val_or_abs() >= 1);
        assert!(g.x.mat.is_integral());
        // residues of χ_x at ±1 both vanish
        let chi = char_poly(&g.x.mat);
        assert!(chi.eval(&ctx.e_one()).val_or_abs() >= 1);
        assert!(chi.eval(&ctx.e_int(-1)).val_or_abs() >= 1);
    }

    #[test]
    fn obstructed_datum_is_vacuous() {
        assert!(datum_is_obstructed(&EndoDatum::new(1, 1, FormLabel::Split, FormLabel::NonSplit)));
        assert!(!datum_is_obstructed(&EndoDatum::new(1, 1, FormLabel::NonSplit, FormLabel::NonSplit)));
        let mut c = cfg(2, &[Suite::Fl]);
        c.datum = EndoDatum::new(1, 1, FormLabel::Split, FormLabel::NonSplit);
        let r = run(&c).unwrap();
        assert!(r.cases(Suite::Fl).all(|c| c.verdict == Verdict::Vacuous));
        assert!(r.passed());
    }

    #[test]
    fn report_round_trip_and_replay() {
        let r = run(&cfg(3, &[Suite::Fl, Suite::Tjd])).unwrap();
        assert!(r.passed(), "{}", r.to_json());
        let v = r.to_json();
        validate_report(&v).unwrap();
        let again = run(&cfg(3, &[Suite::Fl, Suite::Tjd])).unwrap().to_json();
        // identical up to timing
        let strip = |mut v: Value| {
            v["summary"]["runtime_ms"] = Value::Null;
            for s in v["suites"].as_array_mut().unwrap() {
                s["summary"]["runtime_ms"] = Value::Null;
            }
            v
        };
        assert_eq!(strip(v.clone()), strip(again));
        for rep in replay_report(&v, None).unwrap() {
            assert!(rep.reproduced, "{:?} {}", rep.suite, rep.index);
        }
    }

    #[test]
    fn validator_rejects_tampering() {
        let v = run(&cfg(1, &[Suite::Tjd])).unwrap().to_json();
        let mut bad = v.clone();
        bad["schema"] = json!("v0");
        assert!(validate_report(&bad).is_err());
        let mut bad = v.clone();
        bad["summary"]["cases"] = json!(5);
        assert!(validate_report(&bad).is_err());
        let mut bad = v;
        bad["suites"][0]["cases"][0]["verdict"] = json!("maybe");
        assert!(validate_report(&bad).is_err());
    }
}
