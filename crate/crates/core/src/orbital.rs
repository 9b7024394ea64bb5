//! Orbital integrals of the unit element by counting lattices.
//!
//! With `H = U(W₁) × U(W₂)`, every compact open normalized to volume 1 and
//! `H_x` compact, `Orb(x, 1_{Q(O)})` is the number of pairs `(L₁, L₂)` of
//! self-dual lattices with `x(L₁ ⊕ L₂) = L₁ ⊕ L₂`. `H` acts transitively on
//! such pairs with stabilizer `K = H(O)`, so `H/K` is the set of pairs and
//! `h⁻¹xh ∈ Q(O)` iff `x` stabilizes `hΛ`.
//!
//! Pairs are enumerated inside a window `p^W Λ ⊆ L ⊆ p^{−W} Λ`. A count is
//! saturated when no counted pair leaves window `W − 1`; since the fixed set
//! of a compact group is bounded, saturated counts do not change with `W`.

use crate::dynamics::{lie_contraction, lie_star};
use crate::endoscopy::{factor_data, kappa, orbit_invariant, stable_orbit_reps, stable_orbit_reps_lie, EndoDatum, OrbitInvariant};
use crate::error::{Error, Result};
use crate::lattice::{enumerate_self_dual_cached, HermForm, Lattice, DEFAULT_BUDGET};
use crate::matalg::{norm_solve, EMatrix, EPoly};
use crate::symspace::{is_rss, SymPoint};
use rayon::prelude::*;
use serde_json::{json, Value};
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrbitalResult {
    pub count: u64,
    pub window: u32,
    pub saturated: bool,
}

impl OrbitalResult {
    pub fn to_json(&self) -> Value {
        json!({"count": self.count, "window": self.window, "saturated": self.saturated})
    }
}

#[derive(Clone, Debug)]
pub struct KappaOrbitalResult {
    pub value: i64,
    pub breakdown: Vec<(OrbitInvariant, i32, OrbitalResult)>,
}

impl KappaOrbitalResult {
    pub fn to_json(&self) -> Value {
        json!({
            "value": self.value,
            "breakdown": self.breakdown.iter().map(|(inv, s, r)| json!({"inv": inv.to_json(), "kappa": s, "orbit": r.to_json()})).collect::<Vec<_>>(),
        })
    }
}

/// Window policy shared by the engines.
#[derive(Clone, Debug)]
pub struct OrbitalConfig {
    /// Starting window; `None` picks one from the entries of the point.
    pub window: Option<u32>,
    pub max_window: u32,
    pub budget: u64,
    pub cache_dir: Option<PathBuf>,
}

impl Default for OrbitalConfig {
    fn default() -> Self {
        OrbitalConfig { window: None, max_window: 8, budget: DEFAULT_BUDGET, cache_dir: None }
    }
}

impl OrbitalConfig {
    fn start(&self, m: &EMatrix) -> u32 {
        self.window.unwrap_or_else(|| 1 + (-m.min_val().unwrap_or(0)).max(0) as u32)
    }

    fn lattices(&self, form: &HermForm, w: u32) -> Result<std::sync::Arc<Vec<Lattice>>> {
        enumerate_self_dual_cached(form, w, self.budget, self.cache_dir.as_deref())
    }
}

/// All roots of `χ_{R(x)}` generate fields `E ⊗ F_i`, so `H_x` is compact.
pub fn check_elliptic(a: &EMatrix) -> Result<()> {
    if a.rows == 0 {
        return Ok(());
    }
    let fd = factor_data(a)?;
    if fd.factors.iter().all(|f| f.in_s1) {
        Ok(())
    } else {
        Err(Error::NotElliptic)
    }
}

/// Count pairs `(L₁, L₂)` with `L₁ ∈ s1`, `L₂ ∈ s2` and `f(L₁, L₂)`; report
/// whether a counted pair touches the boundary of window `w`.
fn count_pairs(s1: &[&Lattice], s2: &[&Lattice], w: u32, f: impl Fn(&Lattice, &Lattice) -> bool + Sync) -> (u64, bool) {
    s1.par_iter()
        .map(|l1| {
            let mut c = 0u64;
            let mut edge = false;
            for l2 in s2 {
                if f(l1, l2) {
                    c += 1;
                    if w > 0 && (!l1.in_window(w as i32 - 1) || !l2.in_window(w as i32 - 1)) {
                        edge = true;
                    }
                }
            }
            (c, edge)
        })
        .reduce(|| (0, false), |a, b| (a.0 + b.0, a.1 || b.1))
}

/// Stabilized pairs at a fixed window. Errors with `WindowTooSmall` when a
/// counted pair touches the boundary.
pub fn orbit_integral_unit(x: &SymPoint, w: u32) -> Result<OrbitalResult> {
    orbit_integral_unit_with(x, w, &OrbitalConfig::default())
}

pub fn orbit_integral_unit_with(x: &SymPoint, w: u32, cfg: &OrbitalConfig) -> Result<OrbitalResult> {
    if x.n == 0 {
        return Ok(OrbitalResult { count: 1, window: w, saturated: true });
    }
    check_elliptic(&x.a)?;
    if !is_rss(x)? {
        return Err(Error::Invalid("point is not regular semisimple".into()));
    }
    let s1 = cfg.lattices(&x.forms.0, w)?;
    let s2 = cfg.lattices(&x.forms.1, w)?;
    let bstar = x.mat.block(x.n, 0, x.n, x.n);
    let sa: Vec<&Lattice> = s1.par_iter().filter(|l| l.stabilized_by(&x.a)).collect();
    let sd: Vec<&Lattice> = s2.par_iter().filter(|l| l.stabilized_by(&x.d)).collect();
    let (count, edge) = count_pairs(&sa, &sd, w, |l1, l2| l2.maps_into(&x.b, l1) && l1.maps_into(&bstar, l2));
    if edge {
        return Err(Error::WindowTooSmall(w));
    }
    Ok(OrbitalResult { count, window: w, saturated: true })
}

/// Grow the window until the count saturates.
pub fn orbit_integral_auto(x: &SymPoint, cfg: &OrbitalConfig) -> Result<OrbitalResult> {
    let mut w = cfg.start(&x.mat);
    loop {
        match orbit_integral_unit_with(x, w, cfg) {
            Err(Error::WindowTooSmall(_)) if w < cfg.max_window => w += 1,
            r => return r,
        }
    }
}

/// Lie-algebra analogue: pairs with `X L₂ ⊆ L₁` and `X* L₁ ⊆ L₂`.
pub fn orbit_integral_unit_lie(xm: &EMatrix, forms: &(HermForm, HermForm), w: u32, cfg: &OrbitalConfig) -> Result<OrbitalResult> {
    let n = xm.rows;
    if n == 0 {
        return Ok(OrbitalResult { count: 1, window: w, saturated: true });
    }
    let r = lie_contraction(xm, forms)?;
    check_elliptic(&r)?;
    let xs = lie_star(xm, forms)?;
    if xm.det().val_or_abs() >= xm.ctx.tol() {
        return Err(Error::Invalid("δ is not regular semisimple".into()));
    }
    let rs = xs.mul(xm);
    let s1 = cfg.lattices(&forms.0, w)?;
    let s2 = cfg.lattices(&forms.1, w)?;
    let sa: Vec<&Lattice> = s1.par_iter().filter(|l| l.stabilized_by(&r)).collect();
    let sd: Vec<&Lattice> = s2.par_iter().filter(|l| l.stabilized_by(&rs)).collect();
    let (count, edge) = count_pairs(&sa, &sd, w, |l1, l2| l2.maps_into(xm, l1) && l1.maps_into(&xs, l2));
    if edge {
        return Err(Error::WindowTooSmall(w));
    }
    Ok(OrbitalResult { count, window: w, saturated: true })
}

pub fn orbit_integral_lie_auto(xm: &EMatrix, forms: &(HermForm, HermForm), cfg: &OrbitalConfig) -> Result<OrbitalResult> {
    let mut w = cfg.start(xm);
    loop {
        match orbit_integral_unit_lie(xm, forms, w, cfg) {
            Err(Error::WindowTooSmall(_)) if w < cfg.max_window => w += 1,
            r => return r,
        }
    }
}

/// `Σ_{[x′]} κ(inv(x, x′)) Orb(x′)` over the rational classes in the stable
/// class of `x`, with roots assigned to `χ_a`, `χ_b`.
pub fn kappa_orbital(x: &SymPoint, datum: &EndoDatum, chi_ab: (&EPoly, &EPoly), cfg: &OrbitalConfig) -> Result<KappaOrbitalResult> {
    if x.n == 0 {
        let r = OrbitalResult { count: 1, window: 0, saturated: true };
        return Ok(KappaOrbitalResult { value: 1, breakdown: vec![(OrbitInvariant::zero(0), 1, r)] });
    }
    let mut fd = factor_data(&x.a)?;
    fd.partition(chi_ab.0, chi_ab.1)?;
    let mut breakdown = Vec::new();
    let mut value = 0i64;
    for (inv, rep) in stable_orbit_reps(x)? {
        debug_assert_eq!(orbit_invariant(x, &rep)?, inv);
        let k = kappa(datum, &fd, &inv)?;
        let r = orbit_integral_auto(&rep, cfg)?;
        value += k as i64 * r.count as i64;
        breakdown.push((inv, k, r));
    }
    Ok(KappaOrbitalResult { value, breakdown })
}

pub fn kappa_orbital_lie(
    xm: &EMatrix,
    forms: &(HermForm, HermForm),
    datum: &EndoDatum,
    chi_ab: (&EPoly, &EPoly),
    cfg: &OrbitalConfig,
) -> Result<KappaOrbitalResult> {
    if xm.rows == 0 {
        let r = OrbitalResult { count: 1, window: 0, saturated: true };
        return Ok(KappaOrbitalResult { value: 1, breakdown: vec![(OrbitInvariant::zero(0), 1, r)] });
    }
    let mut fd = factor_data(&lie_contraction(xm, forms)?)?;
    fd.partition(chi_ab.0, chi_ab.1)?;
    let mut breakdown = Vec::new();
    let mut value = 0i64;
    for (inv, rep) in stable_orbit_reps_lie(xm, forms)? {
        let k = kappa(datum, &fd, &inv)?;
        let r = orbit_integral_lie_auto(&rep, forms, cfg)?;
        value += k as i64 * r.count as i64;
        breakdown.push((inv, k, r));
    }
    Ok(KappaOrbitalResult { value, breakdown })
}

pub fn stable_orbital_lie_one(xm: &EMatrix, forms: &(HermForm, HermForm), cfg: &OrbitalConfig) -> Result<u64> {
    if xm.rows == 0 {
        return Ok(1);
    }
    let mut s = 0;
    for (_, rep) in stable_orbit_reps_lie(xm, forms)? {
        s += orbit_integral_lie_auto(&rep, forms, cfg)?.count;
    }
    Ok(s)
}

/// Stable orbital integral of one point: the sum over its rational classes.
pub fn stable_orbital_one(x: &SymPoint, cfg: &OrbitalConfig) -> Result<u64> {
    if x.n == 0 {
        return Ok(1);
    }
    let mut s = 0;
    for (_, rep) in stable_orbit_reps(x)? {
        s += orbit_integral_auto(&rep, cfg)?.count;
    }
    Ok(s)
}

pub fn stable_orbital(xa: &SymPoint, xb: &SymPoint, cfg: &OrbitalConfig) -> Result<u64> {
    Ok(stable_orbital_one(xa, cfg)? * stable_orbital_one(xb, cfg)?)
}

/// Hyperbolic basis `M = [u w]` of `(E², I)`: `M†M = antidiag(1, 1)`, `M ∈ GL₂(O_E)`.
pub fn hyperbolic_basis(ctx: &crate::padic::PrecisionContext) -> Result<EMatrix> {
    let z = norm_solve(ctx, &ctx.int(-1))?;
    let half = ctx.e_from_f(ctx.ratio(1, 2));
    let u = vec![ctx.e_one(), z];
    let w = vec![half, z.mul(&half).neg()];
    Ok(EMatrix::from_cols(ctx, &[u, w]))
}

/// Iwasawa representatives `[[p^k, tω p^{−k}], [0, p^{−k}]]` of `U(1,1)/K`
/// in hyperbolic coordinates, truncated to `|k| ≤ L`, `val t ≥ k − L`.
fn iwasawa_cosets(ctx: &crate::padic::PrecisionContext, level: i32) -> Vec<(EMatrix, bool)> {
    let p = ctx.p as u64;
    let omega = ctx.omega();
    let mut out = Vec::new();
    for k in -level..=level {
        // t ∈ p^{k−L} O_F / p^{2k} O_F
        let len = (k + level) as u32;
        let count = p.pow(len);
        for code in 0..count {
            let t = ctx.from_residue(code, k - level);
            let g = EMatrix::from_rows(
                ctx,
                vec![
                    vec![ctx.e_from_f(ctx.pk(k)), omega.scale(&t.shift(-k))],
                    vec![ctx.e_zero(), ctx.e_from_f(ctx.pk(-k))],
                ],
            );
            let edge = k.abs() == level || (len > 0 && t.val_or_abs() == k - level);
            out.push((g, edge));
        }
    }
    out
}

/// `m` integral to working precision.
fn integral(m: &EMatrix) -> bool {
    m.entries().iter().all(|z| z.a.val_or_abs() >= 0 && z.b.val_or_abs() >= 0)
}

/// Independent oracle: count `hK ∈ H/K` with `h⁻¹xh` integral, `h` running
/// over Iwasawa representatives for each unitary factor. Split forms only.
pub fn oracle_double_coset(x: &SymPoint, level: u32) -> Result<u64> {
    let ctx = x.ctx();
    if !x.forms.0.is_standard() || !x.forms.1.is_standard() {
        return Err(Error::Invalid("oracle needs the standard split forms".into()));
    }
    match x.n {
        // U(1) is compact and equals its maximal compact subgroup
        1 => Ok(integral(&x.mat) as u64),
        2 => {
            let m = hyperbolic_basis(&ctx)?;
            let mi = m.inverse()?;
            let hs: Vec<(EMatrix, EMatrix, bool)> = iwasawa_cosets(&ctx, level as i32)
                .into_iter()
                .map(|(g, e)| {
                    let h = m.mul(&g).mul(&mi);
                    let hi = h.inverse().expect("unitary");
                    (h, hi, e)
                })
                .collect();
            let bstar = x.mat.block(2, 0, 2, 2);
            let h1s: Vec<&(EMatrix, EMatrix, bool)> = hs.par_iter().filter(|(h, hi, _)| integral(&hi.mul(&x.a).mul(h))).collect();
            let h2s: Vec<&(EMatrix, EMatrix, bool)> = hs.par_iter().filter(|(h, hi, _)| integral(&hi.mul(&x.d).mul(h))).collect();
            let (count, edge) = h1s
                .par_iter()
                .map(|(h1, h1i, e1)| {
                    let mut c = 0u64;
                    let mut edge = false;
                    for (h2, h2i, e2) in &h2s {
                        if integral(&h1i.mul(&x.b).mul(h2)) && integral(&h2i.mul(&bstar).mul(h1)) {
                            c += 1;
                            edge |= *e1 || *e2;
                        }
                    }
                    (c, edge)
                })
                .reduce(|| (0, false), |a, b| (a.0 + b.0, a.1 || b.1));
            if edge {
                return Err(Error::LevelTooSmall(level));
            }
            Ok(count)
        }
        n => Err(Error::UnsupportedDegree(n)),
    }
}

/// Grow the oracle level until no hit touches the boundary.
pub fn oracle_auto(x: &SymPoint, start: u32, max: u32) -> Result<(u64, u32)> {
    let mut l = start;
    loop {
        match oracle_double_coset(x, l) {
            Ok(c) => return Ok((c, l)),
            Err(Error::LevelTooSmall(_)) if l < max => l += 1,
            Err(e) => return Err(e),
        }
    }
}

/// Exact `sign · p^{qexp} · count`, compared without rounding.
pub fn exact_eq(p: u32, sign: i32, qexp: i32, count: i64, rhs: i64) -> bool {
    let p = p as i128;
    let lhs = sign as i128 * count as i128;
    if qexp >= 0 {
        lhs * p.pow(qexp as u32) == rhs as i128
    } else {
        lhs == rhs as i128 * p.pow((-qexp) as u32)
    }
}
