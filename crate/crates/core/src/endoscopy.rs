//! Elliptic endoscopic data `(a, b, α, β)`, orbit invariants, κ and
//! transfer factors.
//!
//! Invariants are read off the Hermitian side. For a Hermitian `A` with
//! simple roots in `F`, the rational class of `A` inside its stable class is
//! the vector of valuation parities of `⟨v, v⟩_Φ` over eigenvectors `v`
//! (`F^×/Nm E^×` is detected by valuation parity). The group and Lie
//! versions go through `R(x)` and `r(δ)` respectively.

use crate::dynamics::{lie_contraction, lie_lift_from_herm};
use crate::error::{Error, Result};
use crate::lattice::{FormLabel, HermForm};
use crate::matalg::{char_poly, herm_factor_rel, quadratic_roots, resultant, EMatrix, EPoly, HermMatrix};
use crate::padic::{EScalar, FScalar, PrecisionContext};
use crate::symspace::{contraction, lift_from_herm, poly_agree, poly_depth, SymPoint};
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EndoDatum {
    pub a: usize,
    pub b: usize,
    pub alpha: FormLabel,
    pub beta: FormLabel,
}

impl EndoDatum {
    pub fn new(a: usize, b: usize, alpha: FormLabel, beta: FormLabel) -> EndoDatum {
        EndoDatum { a, b, alpha, beta }
    }

    pub fn n(&self) -> usize {
        self.a + self.b
    }

    /// Both second forms split.
    pub fn is_unramified(&self) -> bool {
        self.alpha.is_split() && self.beta.is_split()
    }

    /// Forms `(V_a, V_α)` and `(V_b, V_β)` of the two endoscopic spaces.
    pub fn forms(&self, ctx: &PrecisionContext) -> ((HermForm, HermForm), (HermForm, HermForm)) {
        (
            (HermForm::split(ctx, self.a), HermForm::canonical(ctx, self.a, self.alpha)),
            (HermForm::split(ctx, self.b), HermForm::canonical(ctx, self.b, self.beta)),
        )
    }

    pub fn to_json(&self) -> Value {
        json!({"a": self.a, "b": self.b, "alpha": self.alpha.as_str(), "beta": self.beta.as_str()})
    }

    pub fn from_json(v: &Value) -> Result<EndoDatum> {
        let bad = || Error::Invalid("malformed EndoDatum".into());
        let a = v.get("a").and_then(Value::as_u64).ok_or_else(bad)? as usize;
        let b = v.get("b").and_then(Value::as_u64).ok_or_else(bad)? as usize;
        let alpha = FormLabel::parse(v.get("alpha").and_then(Value::as_str).ok_or_else(bad)?)?;
        let beta = FormLabel::parse(v.get("beta").and_then(Value::as_str).ok_or_else(bad)?)?;
        Ok(EndoDatum { a, b, alpha, beta })
    }
}

#[derive(Clone, Debug)]
pub struct FactorInfo {
    pub poly: EPoly,
    /// Roots in `F` (linear factor) or in `E` when the quadratic factor
    /// splits there; empty for a ramified quadratic.
    pub roots: Vec<EScalar>,
    /// `E ⊗ F_i` is a field.
    pub in_s1: bool,
    /// Set by [`FactorData::partition`]: the factor divides `χ_b`.
    pub in_b: Option<bool>,
}

impl FactorInfo {
    pub fn degree(&self) -> usize {
        self.poly.degree()
    }
}

#[derive(Clone, Debug)]
pub struct FactorData {
    pub factors: Vec<FactorInfo>,
}

impl FactorData {
    /// Roots of the linear factors, in factor order.
    pub fn linear_roots(&self) -> Vec<EScalar> {
        self.factors.iter().filter(|f| f.degree() == 1).map(|f| f.roots[0]).collect()
    }

    pub fn all_linear(&self) -> bool {
        self.factors.iter().all(|f| f.degree() == 1)
    }

    /// Assign each factor to `χ_a` or `χ_b` by which one it annihilates more
    /// closely at its roots.
    pub fn partition(&mut self, chi_a: &EPoly, chi_b: &EPoly) -> Result<()> {
        for f in &mut self.factors {
            if f.degree() != 1 {
                // quadratic factors are assigned by division
                let ka = residual_len(chi_a, &f.poly);
                let kb = residual_len(chi_b, &f.poly);
                f.in_b = Some(kb > ka);
                continue;
            }
            let r = f.roots[0];
            let va = chi_a.eval(&r).val_or_abs();
            let vb = chi_b.eval(&r).val_or_abs();
            if va == vb {
                return Err(Error::PartitionMismatch);
            }
            f.in_b = Some(vb > va);
        }
        let nb: usize = self.factors.iter().filter(|f| f.in_b == Some(true)).map(FactorInfo::degree).sum();
        if nb != chi_b.degree() {
            return Err(Error::PartitionMismatch);
        }
        Ok(())
    }
}

/// Valuation of the remainder of `f` modulo a monic quadratic `g`.
fn residual_len(f: &EPoly, g: &EPoly) -> i32 {
    let ctx = f.ctx;
    if f.degree() < g.degree() {
        return if f.degree() == 0 { 0 } else { -1 };
    }
    let mut r = f.coeffs.clone();
    for top in (g.degree()..r.len()).rev() {
        let c = r[top];
        for k in 0..=g.degree() {
            let idx = top - g.degree() + k;
            r[idx] = r[idx].sub(&c.mul(&g.coeff(k)));
        }
    }
    r[..g.degree()].iter().map(EScalar::val_or_abs).min().unwrap_or(ctx.tol())
}

fn root_key(z: &EScalar, hi: i32) -> Vec<u64> {
    let lo = z.a.val().unwrap_or(0).min(0);
    (lo..hi).map(|k| z.a.digit(k).unwrap_or(0)).collect()
}

/// Factorization of `χ_A` over `F` for `deg χ_A ≤ 2`.
pub fn factor_data(a: &HermMatrix) -> Result<FactorData> {
    factor_poly(&char_poly(a))
}

pub fn factor_poly(chi: &EPoly) -> Result<FactorData> {
    let ctx = chi.ctx;
    let linear = |r: EScalar| FactorInfo { poly: EPoly::linear(&ctx, r), roots: vec![r], in_s1: true, in_b: None };
    match chi.degree() {
        0 => Ok(FactorData { factors: vec![] }),
        1 => Ok(FactorData { factors: vec![linear(chi.coeff(0).neg())] }),
        2 => {
            let mut roots = quadratic_roots(chi, false)?;
            if !roots.is_empty() {
                let hi = ctx.tol() - 2;
                roots.sort_by_key(|z| root_key(z, hi));
                return Ok(FactorData { factors: roots.into_iter().map(linear).collect() });
            }
            let c1 = chi.coeff(1).a;
            let disc = c1.mul(&c1).sub(&ctx.int(4).mul(&chi.coeff(0).a));
            let v = disc.val().ok_or(Error::NotSquarefree)?;
            // F(√disc) ≅ E iff disc ∈ ε·(F^×)²
            let is_e = v % 2 == 0 && disc.shift(-v).div(&ctx.eps_f())?.sqrt()?.is_some();
            let in_e_roots = if is_e { quadratic_roots(chi, true)? } else { vec![] };
            Ok(FactorData { factors: vec![FactorInfo { poly: chi.clone(), roots: in_e_roots, in_s1: !is_e, in_b: None }] })
        }
        d => Err(Error::UnsupportedDegree(d)),
    }
}

/// Parity of `val ⟨v, v⟩_Φ` for an eigenvector `v` of `A` at a simple root.
pub fn eigenline_norm_class(a: &HermMatrix, root: &EScalar, phi: &HermForm) -> Result<u8> {
    let ctx = a.ctx;
    let m = a.sub(&EMatrix::scalar(&ctx, a.rows, *root));
    let v = m.kernel_vector()?;
    let q = phi.pair(&v, &v);
    let val = q.val().ok_or(Error::PrecisionExhausted("isotropic eigenline"))?;
    Ok(val.rem_euclid(2) as u8)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OrbitInvariant {
    pub bits: Vec<u8>,
}

impl OrbitInvariant {
    pub fn zero(k: usize) -> OrbitInvariant {
        OrbitInvariant { bits: vec![0; k] }
    }

    pub fn add(&self, o: &OrbitInvariant) -> OrbitInvariant {
        OrbitInvariant { bits: self.bits.iter().zip(&o.bits).map(|(x, y)| x ^ y).collect() }
    }

    pub fn weight(&self) -> u32 {
        self.bits.iter().map(|&b| b as u32).sum()
    }

    pub fn to_json(&self) -> Value {
        json!(self.bits)
    }
}

/// Eigenline classes of `A` at the roots of its (split) characteristic
/// polynomial, in canonical root order.
pub fn eigenline_classes(a: &HermMatrix, phi: &HermForm, fd: &FactorData) -> Result<Vec<u8>> {
    if !fd.all_linear() {
        return Err(Error::UnsupportedDegree(2));
    }
    fd.linear_roots().iter().map(|r| eigenline_norm_class(a, r, phi)).collect()
}

/// `inv(A₁, A₂)` for stably conjugate Hermitian matrices with split `χ`.
pub fn herm_orbit_invariant(a1: &HermMatrix, phi1: &HermForm, a2: &HermMatrix, phi2: &HermForm) -> Result<OrbitInvariant> {
    let c1 = char_poly(a1);
    if c1.degree() != a2.rows || !poly_agree(&c1, &char_poly(a2), poly_depth(&c1)) {
        return Err(Error::NotStablyConjugate);
    }
    let fd = factor_poly(&c1)?;
    let b1 = eigenline_classes(a1, phi1, &fd)?;
    let b2 = eigenline_classes(a2, phi2, &fd)?;
    Ok(OrbitInvariant { bits: b1.iter().zip(&b2).map(|(x, y)| x ^ y).collect() })
}

pub fn orbit_invariant(x: &SymPoint, x2: &SymPoint) -> Result<OrbitInvariant> {
    herm_orbit_invariant(&contraction(x), &x.forms.0, &contraction(x2), &x2.forms.0)
}

/// Frame for the class of `A` shifted by `flip`: roots `λ` and `V` with
/// `V† Φ V = diag(p^t)`, so that `V diag(λ) V⁻¹` is `Φ`-Hermitian with
/// eigenline classes `t`.
pub struct ClassFrame {
    pub roots: Vec<EScalar>,
    pub v: EMatrix,
    /// `diag(p^t)` as a form.
    pub form: HermForm,
}

pub fn class_frame(a: &HermMatrix, phi: &HermForm, flip: &OrbitInvariant) -> Result<ClassFrame> {
    let ctx = a.ctx;
    let fd = factor_data(a)?;
    let roots = fd.linear_roots();
    let cur = eigenline_classes(a, phi, &fd)?;
    let target: Vec<EScalar> = cur
        .iter()
        .zip(&flip.bits)
        .map(|(c, f)| ctx.e_from_f(ctx.pk((c ^ f) as i32)))
        .collect();
    let d = EMatrix::diag(&ctx, &target);
    let v = herm_factor_rel(&d, &phi.gram)?.dagger();
    Ok(ClassFrame { roots, v, form: HermForm::from_gram(d)? })
}

/// A Hermitian matrix for `Φ` with the spectrum of `A` and eigenline classes
/// shifted by `flip`.
pub fn herm_with_classes(a: &HermMatrix, phi: &HermForm, flip: &OrbitInvariant) -> Result<HermMatrix> {
    let f = class_frame(a, phi, flip)?;
    Ok(f.v.mul(&EMatrix::diag(&a.ctx, &f.roots)).mul(&f.v.inverse()?))
}

/// Hermitian representatives of the rational classes in the stable class of
/// `A`, one per even-weight flip of the eigenline classes.
pub fn herm_class_reps(a: &HermMatrix, phi: &HermForm) -> Result<Vec<(OrbitInvariant, HermMatrix)>> {
    let fd = factor_data(a)?;
    if !fd.all_linear() {
        return Err(Error::UnsupportedDegree(2));
    }
    let k = fd.factors.len();
    let mut out = vec![(OrbitInvariant::zero(k), a.clone())];
    for mask in 1u32..(1 << k) {
        if mask.count_ones() % 2 == 1 {
            continue;
        }
        let flip = OrbitInvariant { bits: (0..k).map(|i| ((mask >> i) & 1) as u8).collect() };
        let a2 = herm_with_classes(a, phi, &flip)?;
        out.push((flip, a2));
    }
    Ok(out)
}

/// Even-weight flips of `k` eigenline classes, the trivial one first.
fn even_flips(k: usize) -> Vec<OrbitInvariant> {
    (0u32..(1 << k))
        .filter(|m| m.count_ones() % 2 == 0)
        .map(|m| OrbitInvariant { bits: (0..k).map(|i| ((m >> i) & 1) as u8).collect() })
        .collect()
}

/// One point per rational orbit in the stable orbit of `x`, paired with its
/// invariant relative to `x`.
///
/// Non-trivial classes are lifted in the eigenframe, where the contraction is
/// the exact diagonal of roots, then moved by `diag(V, I)`; lifting the dense
/// `V diag(λ) V⁻¹` instead costs most of the precision when root valuations
/// are spread out.
pub fn stable_orbit_reps(x: &SymPoint) -> Result<Vec<(OrbitInvariant, SymPoint)>> {
    let a = contraction(x);
    let fd = factor_data(&a)?;
    if !fd.all_linear() {
        return Err(Error::UnsupportedDegree(2));
    }
    let mut out = Vec::new();
    for flip in even_flips(fd.factors.len()) {
        if flip.weight() == 0 {
            out.push((flip, x.clone()));
            continue;
        }
        let f = class_frame(&a, &x.forms.0, &flip)?;
        let xc = lift_from_herm(&EMatrix::diag(&a.ctx, &f.roots), &(f.form.clone(), x.forms.1.clone()))?;
        let id = EMatrix::identity(&a.ctx, x.n);
        let x2 = SymPoint::from_matrix(xc.conjugate(&f.v, &id)?.mat, x.forms.clone());
        debug_assert_eq!(orbit_invariant(x, &x2).map_err(|e| e.to_string()), Ok(flip.clone()));
        out.push((flip, x2));
    }
    Ok(out)
}

/// Lie-algebra analogue of [`stable_orbit_reps`] through `r(X) = −XX*`;
/// in the eigenframe `X = V X_c`.
pub fn stable_orbit_reps_lie(xm: &EMatrix, forms: &(HermForm, HermForm)) -> Result<Vec<(OrbitInvariant, EMatrix)>> {
    let y = lie_contraction(xm, forms)?;
    let fd = factor_data(&y)?;
    if !fd.all_linear() {
        return Err(Error::UnsupportedDegree(2));
    }
    let mut out = Vec::new();
    for flip in even_flips(fd.factors.len()) {
        if flip.weight() == 0 {
            out.push((flip, xm.clone()));
            continue;
        }
        let f = class_frame(&y, &forms.0, &flip)?;
        let xc = lie_lift_from_herm(&EMatrix::diag(&y.ctx, &f.roots), &(f.form.clone(), forms.1.clone()))?;
        out.push((flip, f.v.mul(&xc)));
    }
    Ok(out)
}

/// `κ(inv) = (−1)^{Σ bits over χ_b-roots}`.
pub fn kappa(datum: &EndoDatum, fd: &FactorData, inv: &OrbitInvariant) -> Result<i32> {
    let roots: Vec<&FactorInfo> = fd.factors.iter().filter(|f| f.degree() == 1).collect();
    if roots.len() != inv.bits.len() {
        return Err(Error::PartitionMismatch);
    }
    let mut nb = 0;
    let mut s = 0;
    for (f, &bit) in roots.iter().zip(&inv.bits) {
        match f.in_b {
            Some(true) => {
                nb += 1;
                s += bit as u32;
            }
            Some(false) => {}
            None => return Err(Error::PartitionMismatch),
        }
    }
    if nb != datum.b {
        return Err(Error::PartitionMismatch);
    }
    Ok(if s % 2 == 0 { 1 } else { -1 })
}

/// `D_{a,b} = ∏ (x_a − x_b) = Res(χ_a, χ_b)`.
pub fn relative_discriminant(chi_a: &EPoly, chi_b: &EPoly) -> FScalar {
    resultant(chi_a, chi_b).a
}

/// `sign · q^{qexp}`; `sign = 0` encodes a non-matching triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransferFactor {
    pub sign: i32,
    pub qexp: i32,
}

impl TransferFactor {
    pub const ZERO: TransferFactor = TransferFactor { sign: 0, qexp: 0 };
    pub const ONE: TransferFactor = TransferFactor { sign: 1, qexp: 0 };

    pub fn mul(&self, o: &TransferFactor) -> TransferFactor {
        if self.sign == 0 || o.sign == 0 {
            return TransferFactor::ZERO;
        }
        TransferFactor { sign: self.sign * o.sign, qexp: self.qexp + o.qexp }
    }

    pub fn to_json(&self) -> Value {
        json!({"sign": self.sign, "qexp": self.qexp})
    }

    pub fn from_json(v: &Value) -> Result<TransferFactor> {
        let bad = || Error::Invalid("malformed TransferFactor".into());
        Ok(TransferFactor {
            sign: v.get("sign").and_then(Value::as_i64).ok_or_else(bad)? as i32,
            qexp: v.get("qexp").and_then(Value::as_i64).ok_or_else(bad)? as i32,
        })
    }
}

/// `η(D)|D|` for `D ≠ 0`.
pub fn eta_abs(d: &FScalar) -> Result<TransferFactor> {
    let v = d.val().ok_or(Error::ZeroArgument)?;
    Ok(TransferFactor { sign: d.eta()?, qexp: -v })
}

/// Transfer factor on the Hermitian side: `κ(inv(y, y_nice)) η(D)|D|` with
/// `y_nice = diag(y_a, y_b)`.
pub fn herm_transfer_factor(ya: &HermMatrix, yb: &HermMatrix, y: &HermMatrix, phi: &HermForm, datum: &EndoDatum) -> Result<TransferFactor> {
    let ctx = y.ctx;
    let chi_a = char_poly(ya);
    let chi_b = char_poly(yb);
    let chi = char_poly(y);
    if !poly_agree(&chi, &chi_a.mul(&chi_b), poly_depth(&chi)) {
        return Ok(TransferFactor::ZERO);
    }
    if ya.rows == 0 || yb.rows == 0 {
        // D = 1 and κ is trivial on even-weight invariants
        return Ok(TransferFactor::ONE);
    }
    let d = relative_discriminant(&chi_a, &chi_b);
    let base = eta_abs(&d)?;
    let nice = EMatrix::block_diag(ya, yb);
    let split = HermForm::split(&ctx, datum.n());
    let inv = herm_orbit_invariant(y, phi, &nice, &split)?;
    let mut fd = factor_poly(&chi)?;
    fd.partition(&chi_a, &chi_b)?;
    let k = kappa(datum, &fd, &inv)?;
    Ok(TransferFactor { sign: base.sign * k, qexp: base.qexp })
}

/// `χ_x = χ_{x_a} χ_{x_b}` on contractions.
pub fn matches(x: &SymPoint, xa: &SymPoint, xb: &SymPoint) -> bool {
    let chi = char_poly(&x.a);
    poly_agree(&chi, &char_poly(&xa.a).mul(&char_poly(&xb.a)), poly_depth(&chi))
}

/// `lift_from_herm(diag(R(x_a), R(x_b)))` on the split forms of rank `a + b`.
pub fn nice_point(xa: &SymPoint, xb: &SymPoint) -> Result<SymPoint> {
    let ctx = xa.ctx();
    let n = xa.n + xb.n;
    lift_from_herm(&EMatrix::block_diag(&xa.a, &xb.a), &SymPoint::split_forms(&ctx, n))
}

/// `Δ̃_rel((δ_a, δ_b), δ) = Δ(r(δ_a), r(δ_b); r(δ))`.
pub fn transfer_factor_lie(
    (xa, fa): (&EMatrix, &(HermForm, HermForm)),
    (xb, fb): (&EMatrix, &(HermForm, HermForm)),
    (x, f): (&EMatrix, &(HermForm, HermForm)),
    datum: &EndoDatum,
) -> Result<TransferFactor> {
    let ya = lie_contraction(xa, fa)?;
    let yb = lie_contraction(xb, fb)?;
    herm_transfer_factor(&ya, &yb, &lie_contraction(x, f)?, &f.0, datum)
}

pub fn transfer_factor(xa: &SymPoint, xb: &SymPoint, x: &SymPoint, datum: &EndoDatum) -> Result<TransferFactor> {
    if !matches(x, xa, xb) {
        return Ok(TransferFactor::ZERO);
    }
    herm_transfer_factor(&xa.a, &xb.a, &x.a, &x.forms.0, datum)
}
