//! Points of Q_n(F) ⊂ U(W), W = W₁ ⊕ W₂, with the block model
//! `x = [[A, B], [−B*, D]]` and the contraction `R(x) = A`.
//!
//! Convention: the base point is `s(1) = ε·ε = I_{2n}` where
//! `s(g) = g ε g⁻¹ ε` and `ε = diag(I, −I)`.

use crate::error::{Error, Result};
use crate::lattice::{FormLabel, HermForm};
use crate::matalg::{char_poly, herm_factor_rel, resultant, EMatrix, EPoly, HermMatrix};
use crate::padic::{EScalar, PrecisionContext};
use rand::Rng;
use serde_json::{json, Value};

#[derive(Clone, Debug)]
pub struct SymPoint {
    pub n: usize,
    pub forms: (HermForm, HermForm),
    pub mat: EMatrix,
    pub a: EMatrix,
    pub b: EMatrix,
    pub d: EMatrix,
}

/// Monic degree-n invariant polynomial `χ = det(tI − A)`.
#[derive(Clone, Debug)]
pub struct InvariantPoint {
    pub chi: EPoly,
}

pub fn epsilon(ctx: &PrecisionContext, n: usize) -> EMatrix {
    EMatrix::block_diag(&EMatrix::identity(ctx, n), &EMatrix::identity(ctx, n).neg())
}

/// Gram matrix of `W₁ ⊕ W₂`.
pub fn total_gram(forms: &(HermForm, HermForm)) -> EMatrix {
    EMatrix::block_diag(&forms.0.gram, &forms.1.gram)
}

/// Comparison depth for identities among matrices with entries of valuation
/// at least `v`.
pub fn tol_for(ctx: &PrecisionContext, v: Option<i32>) -> i32 {
    ctx.tol() + 2 * v.unwrap_or(0).min(0)
}

/// Adjoint `Φ_dom⁻¹ M† Φ_cod` of `M: (E^k, Φ_dom) → (E^m, Φ_cod)`.
pub fn adjoint(m: &EMatrix, dom: &EMatrix, cod: &EMatrix) -> Result<EMatrix> {
    Ok(dom.inverse()?.mul(&m.dagger()).mul(cod))
}

impl SymPoint {
    pub fn from_matrix(mat: EMatrix, forms: (HermForm, HermForm)) -> SymPoint {
        let n = forms.0.n;
        assert_eq!(mat.rows, 2 * n);
        SymPoint {
            n,
            a: mat.block(0, 0, n, n),
            b: mat.block(0, n, n, n),
            d: mat.block(n, n, n, n),
            mat,
            forms,
        }
    }

    pub fn ctx(&self) -> PrecisionContext {
        self.mat.ctx
    }

    pub fn split_forms(ctx: &PrecisionContext, n: usize) -> (HermForm, HermForm) {
        (HermForm::split(ctx, n), HermForm::split(ctx, n))
    }

    pub fn base_point(ctx: &PrecisionContext, n: usize) -> SymPoint {
        SymPoint::from_matrix(EMatrix::identity(ctx, 2 * n), SymPoint::split_forms(ctx, n))
    }

    /// `B* = Φ₂⁻¹ B† Φ₁`.
    pub fn b_star(&self) -> Result<EMatrix> {
        adjoint(&self.b, &self.forms.1.gram, &self.forms.0.gram)
    }

    /// `h x h⁻¹` for `h = diag(h1, h2)`.
    pub fn conjugate(&self, h1: &EMatrix, h2: &EMatrix) -> Result<SymPoint> {
        let h = EMatrix::block_diag(h1, h2);
        let hi = EMatrix::block_diag(&h1.inverse()?, &h2.inverse()?);
        Ok(SymPoint::from_matrix(h.mul(&self.mat).mul(&hi), self.forms.clone()))
    }

    pub fn neg(&self) -> SymPoint {
        SymPoint::from_matrix(self.mat.neg(), self.forms.clone())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n": self.n,
            "forms": [self.forms.0.label.as_str(), self.forms.1.label.as_str()],
            "mat": self.mat.to_json(),
        })
    }

    pub fn from_json(ctx: &PrecisionContext, v: &Value) -> Result<SymPoint> {
        let bad = || Error::Invalid("malformed SymPoint".into());
        let n = v.get("n").and_then(Value::as_u64).ok_or_else(bad)? as usize;
        let f = v.get("forms").and_then(Value::as_array).ok_or_else(bad)?;
        if f.len() != 2 {
            return Err(bad());
        }
        let l0 = FormLabel::parse(f[0].as_str().ok_or_else(bad)?)?;
        let l1 = FormLabel::parse(f[1].as_str().ok_or_else(bad)?)?;
        let mat = EMatrix::from_json(ctx, v.get("mat").ok_or_else(bad)?)?;
        Ok(SymPoint::from_matrix(mat, (HermForm::canonical(ctx, n, l0), HermForm::canonical(ctx, n, l1))))
    }
}

/// `x₁ ⊕ x₂` on `(W₁ ⊕ W₁′) ⊕ (W₂ ⊕ W₂′)`.
pub fn direct_sum(x1: &SymPoint, x2: &SymPoint) -> SymPoint {
    let bd = EMatrix::block_diag;
    let f0 = HermForm { n: x1.n + x2.n, gram: bd(&x1.forms.0.gram, &x2.forms.0.gram), label: sum_label(x1.forms.0.label, x2.forms.0.label) };
    let f1 = HermForm { n: x1.n + x2.n, gram: bd(&x1.forms.1.gram, &x2.forms.1.gram), label: sum_label(x1.forms.1.label, x2.forms.1.label) };
    let b1 = x1.mat.block(x1.n, 0, x1.n, x1.n);
    let b2 = x2.mat.block(x2.n, 0, x2.n, x2.n);
    let mat = EMatrix::from_blocks(&bd(&x1.a, &x2.a), &bd(&x1.b, &x2.b), &bd(&b1, &b2), &bd(&x1.d, &x2.d));
    SymPoint::from_matrix(mat, (f0, f1))
}

fn sum_label(a: FormLabel, b: FormLabel) -> FormLabel {
    if a == b {
        FormLabel::Split
    } else {
        FormLabel::NonSplit
    }
}

/// Unitary for `diag(Φ₁, Φ₂)`, `(εM)² = I` and `tr(εM) = 0`.
pub fn is_member_with(m: &EMatrix, forms: &(HermForm, HermForm)) -> bool {
    let ctx = m.ctx;
    let n = forms.0.n;
    if m.rows != 2 * n || m.cols != 2 * n {
        return false;
    }
    let k = tol_for(&ctx, m.min_val());
    let phi = total_gram(forms);
    if !residual_vanishes(&m.dagger().mul(&phi).mul(m).sub(&phi), k) {
        return false;
    }
    let em = epsilon(&ctx, n).mul(m);
    residual_vanishes(&em.mul(&em).sub(&EMatrix::identity(&ctx, 2 * n)), k)
        && residual_vanishes(&EMatrix::scalar(&ctx, 1, em.trace()), k)
}

/// Every entry has valuation `≥ k` or is zero to its own precision.
/// Lifts divide by `B` and so lose up to `val det B` digits; the zero branch
/// still demands `N/3` known digits.
pub fn residual_vanishes(r: &EMatrix, k: i32) -> bool {
    let floor = (r.ctx.n as i32 / 3).max(1);
    r.entries().iter().all(|z| z.val_or_abs() >= k || (z.val().is_none() && z.abs_prec() >= floor))
}

/// Depth at which two polynomials with these coefficients can be compared:
/// [`tol_for`] of the least coefficient valuation.
pub fn poly_depth(f: &EPoly) -> i32 {
    tol_for(&f.ctx, f.coeffs.iter().filter_map(|c| c.val()).min())
}

/// Coefficientwise [`residual_vanishes`] on `f − g`.
pub fn poly_agree(f: &EPoly, g: &EPoly, k: i32) -> bool {
    let d = f.sub(g);
    let row = EMatrix::from_rows(&f.ctx, vec![d.coeffs.clone()]);
    residual_vanishes(&row, k)
}

pub fn is_member(m: &EMatrix) -> bool {
    let n = m.rows / 2;
    m.rows.is_multiple_of(2) && is_member_with(m, &SymPoint::split_forms(&m.ctx, n))
}

pub fn contraction(x: &SymPoint) -> HermMatrix {
    x.a.clone()
}

pub fn invariant(x: &SymPoint) -> InvariantPoint {
    InvariantPoint { chi: char_poly(&x.a) }
}

/// `det(t²I − 2tA + I) = Σ_k χ_k (t²+1)^k (2t)^{n−k}`.
pub fn car_from_chi(chi: &InvariantPoint) -> EPoly {
    let f = &chi.chi;
    let ctx = f.ctx;
    let n = f.degree();
    let t2p1 = EPoly::new(&ctx, vec![ctx.e_one(), ctx.e_zero(), ctx.e_one()]);
    let two_t = EPoly::new(&ctx, vec![ctx.e_zero(), ctx.e_int(2)]);
    let mut acc = EPoly::constant(&ctx, ctx.e_zero());
    for k in 0..=n {
        acc = acc.add(&t2p1.pow(k).mul(&two_t.pow(n - k)).scale(&f.coeff(k)));
    }
    acc
}

pub fn discriminant(chi: &EPoly) -> EScalar {
    resultant(chi, &chi.derivative())
}

/// `disc χ ≠ 0`, `χ(±1) ≠ 0` and `det B ≠ 0`.
pub fn is_rss(x: &SymPoint) -> Result<bool> {
    let ctx = x.ctx();
    let k = ctx.tol();
    let chi = invariant(x).chi;
    for nu in [1, -1] {
        if chi.eval(&ctx.e_int(nu)).val_or_abs() >= k {
            return Ok(false);
        }
    }
    if x.b.det().val_or_abs() >= k {
        return Ok(false);
    }
    if discriminant(&chi).val_or_abs() >= k {
        return Err(Error::PrecisionExhausted("discriminant indeterminate"));
    }
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Locus {
    VeryRegular,
    NotVeryRegular,
}

/// Very regular at `ν` iff `χ(ν)` is a unit.
pub fn locus(x: &SymPoint, nu: i64) -> Result<Locus> {
    if !is_integral(x) {
        return Err(Error::NotIntegral);
    }
    let ctx = x.ctx();
    let c = invariant(x).chi.eval(&ctx.e_int(nu));
    Ok(if c.val() == Some(0) { Locus::VeryRegular } else { Locus::NotVeryRegular })
}

pub fn is_integral(x: &SymPoint) -> bool {
    x.mat.is_integral()
}

/// Some `x` with `R(x) = A` for the given pair of forms.
pub fn lift_from_herm(a: &HermMatrix, forms: &(HermForm, HermForm)) -> Result<SymPoint> {
    let ctx = a.ctx;
    let n = a.rows;
    let id = EMatrix::identity(&ctx, n);
    let one_minus = id.sub(&a.mul(a));
    let dv = one_minus.det().val_or_abs();
    if dv >= ctx.tol() + 2 * a.min_val().unwrap_or(0).min(0) {
        return Err(Error::Degenerate);
    }
    let v1 = forms.0.gram.det().val().ok_or(Error::Singular)?;
    let v2 = forms.1.gram.det().val().ok_or(Error::Singular)?;
    if (dv - v1 - v2).rem_euclid(2) != 0 {
        return Err(Error::NoLift);
    }
    // B Φ₂⁻¹ B† = (I − A²) Φ₁⁻¹
    let h = one_minus.mul(&forms.0.gram.inverse()?);
    let g = forms.1.gram.inverse()?;
    let b = herm_factor_rel(&h, &g).map_err(|e| if e == Error::NoFactorization { Error::NoLift } else { e })?;
    let binv = b.inverse()?;
    let d = binv.mul(a).mul(&b);
    let bstar = adjoint(&b, &forms.1.gram, &forms.0.gram)?;
    let mat = EMatrix::from_blocks(a, &b, &bstar.neg(), &d);
    Ok(SymPoint::from_matrix(mat, forms.clone()))
}

/// `s(g) = g ε g⁻¹ ε`.
pub fn symmetrize(g: &EMatrix) -> Result<EMatrix> {
    let e = epsilon(&g.ctx, g.rows / 2);
    Ok(g.mul(&e).mul(&g.inverse()?).mul(&e))
}

/// Random element of `U(Λ, Φ)` for integral unimodular `Φ`: a Cayley transform
/// `(I + S)(I − S)⁻¹` of an integral `Φ`-skew `S`, times a diagonal of norm-one units.
pub fn random_integral_unitary<R: Rng + ?Sized>(ctx: &PrecisionContext, phi: &EMatrix, rng: &mut R) -> EMatrix {
    let n = phi.rows;
    let id = EMatrix::identity(ctx, n);
    let phi_inv = phi.inverse().expect("nondegenerate form");
    loop {
        // S = Φ⁻¹ K with K skew-Hermitian
        let mut k = EMatrix::zeros(ctx, n, n);
        for i in 0..n {
            k[(i, i)] = ctx.e(ctx.zero(), ctx.random_f(rng, 0));
            for j in i + 1..n {
                let z = ctx.random_e(rng, 0);
                k[(i, j)] = z;
                k[(j, i)] = z.conj().neg();
            }
        }
        let s = phi_inv.mul(&k);
        if s.min_val().is_some_and(|v| v < 0) {
            continue;
        }
        let den = id.sub(&s);
        if den.det().val() != Some(0) {
            continue;
        }
        let c = id.add(&s).mul(&den.inverse().unwrap());
        let mut dg = Vec::with_capacity(n);
        for _ in 0..n {
            let u = ctx.random_unit_e(rng);
            dg.push(u.div(&u.conj()).unwrap());
        }
        return c.mul(&EMatrix::diag(ctx, &dg));
    }
}
