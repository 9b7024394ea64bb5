//! Cayley transforms, the topological Jordan decomposition and descent to
//! the `±1` eigenspaces of the absolutely semisimple part.
//!
//! A Lie-side element is stored as its off-diagonal block `X: W₂ → W₁`; the
//! full element of `u(W)₁` is `[[0, X], [−X*, 0]]` and its contraction is
//! `r(X) = −X X*`.

use crate::error::{Error, Result};
use crate::lattice::HermForm;
use crate::matalg::{char_poly, herm_factor_rel, herm_normalize, EMatrix, EPoly, HermMatrix};
use crate::padic::{EScalar, FScalar, PrecisionContext};
use crate::symspace::{adjoint, residual_vanishes, tol_for, SymPoint};
use serde_json::{json, Value};

fn check_nu(nu: i64) {
    assert!(nu == 1 || nu == -1, "ν must be ±1");
}

/// `−ν(1 + M)(1 − M)⁻¹` on any square matrix.
pub fn cayley_matrix(m: &EMatrix, nu: i64) -> Result<EMatrix> {
    check_nu(nu);
    let ctx = m.ctx;
    let id = EMatrix::identity(&ctx, m.rows);
    let den = id.sub(m);
    if den.det().val_or_abs() >= tol_for(&ctx, m.min_val()) {
        return Err(Error::Singular);
    }
    Ok(id.add(m).mul(&den.inverse()?).scale(&ctx.e_int(-nu)))
}

/// `−(ν + M)(ν − M)⁻¹`, inverse of [`cayley_matrix`].
pub fn cayley_inv_matrix(x: &EMatrix, nu: i64) -> Result<EMatrix> {
    check_nu(nu);
    let ctx = x.ctx;
    let nu_i = EMatrix::scalar(&ctx, x.rows, ctx.e_int(nu));
    let den = nu_i.sub(x);
    if den.det().val_or_abs() >= tol_for(&ctx, x.min_val()) {
        return Err(Error::Singular);
    }
    Ok(nu_i.add(x).mul(&den.inverse()?).neg())
}

/// `X* = Φ₂⁻¹ X† Φ₁`.
pub fn lie_star(xm: &EMatrix, forms: &(HermForm, HermForm)) -> Result<EMatrix> {
    adjoint(xm, &forms.1.gram, &forms.0.gram)
}

/// `[[0, X], [−X*, 0]] ∈ u(W)₁`.
pub fn lie_embed(xm: &EMatrix, forms: &(HermForm, HermForm)) -> Result<EMatrix> {
    let ctx = xm.ctx;
    let n = xm.rows;
    let z = EMatrix::zeros(&ctx, n, n);
    Ok(EMatrix::from_blocks(&z, xm, &lie_star(xm, forms)?.neg(), &z))
}

/// `r(X) = −X X*`, Hermitian for `Φ₁`.
pub fn lie_contraction(xm: &EMatrix, forms: &(HermForm, HermForm)) -> Result<HermMatrix> {
    Ok(xm.mul(&lie_star(xm, forms)?).neg())
}

/// Some `X` with `r(X) = Y` for the given forms: `X Φ₂⁻¹ X† = −Y Φ₁⁻¹`.
pub fn lie_lift_from_herm(y: &HermMatrix, forms: &(HermForm, HermForm)) -> Result<EMatrix> {
    let h = y.neg().mul(&forms.0.gram.inverse()?);
    if h.det().val_or_abs() >= tol_for(&y.ctx, y.min_val()) {
        return Err(Error::Degenerate);
    }
    let g = forms.1.gram.inverse()?;
    herm_factor_rel(&h, &g).map_err(|e| if e == Error::NoFactorization { Error::NoLift } else { e })
}

pub fn cayley(xm: &EMatrix, nu: i64, forms: &(HermForm, HermForm)) -> Result<SymPoint> {
    let y = lie_embed(xm, forms)?;
    Ok(SymPoint::from_matrix(cayley_matrix(&y, nu)?, forms.clone()))
}

/// The block `X` of `β_ν(x)`.
pub fn cayley_inv(x: &SymPoint, nu: i64) -> Result<EMatrix> {
    let y = cayley_inv_matrix(&x.mat, nu)?;
    Ok(y.block(0, x.n, x.n, x.n))
}

/// `f(1)⁻¹ Σ_k f_k (t + ν)^k (t − ν)^{dim − k}`.
pub fn cayley_charpoly_transform(f: &EPoly, nu: i64, dim: usize) -> Result<EPoly> {
    check_nu(nu);
    let ctx = f.ctx;
    let f1 = f.eval(&ctx.e_one());
    if f1.val_or_abs() >= ctx.tol() {
        return Err(Error::Singular);
    }
    let plus = EPoly::new(&ctx, vec![ctx.e_int(nu), ctx.e_one()]);
    let minus = EPoly::new(&ctx, vec![ctx.e_int(-nu), ctx.e_one()]);
    let mut acc = EPoly::constant(&ctx, ctx.e_zero());
    for k in 0..=f.degree() {
        acc = acc.add(&plus.pow(k).mul(&minus.pow(dim - k)).scale(&f.coeff(k)));
    }
    Ok(acc.scale(&f1.inv()?))
}

/// `C_{a,b,ν} = (−2ν)^{ab} / (((−1)^a χ_a(ν))^b ((−1)^b χ_b(ν))^a)`, the
/// ratio between Lie and group discriminants along the split `χ = χ_a χ_b`.
pub fn cab_factor(x: &SymPoint, chi_a: &EPoly, chi_b: &EPoly, nu: i64) -> Result<FScalar> {
    check_nu(nu);
    let ctx = x.ctx();
    let chi = char_poly(&x.a);
    if !crate::symspace::poly_agree(&chi, &chi_a.mul(chi_b), crate::symspace::poly_depth(&chi)) {
        return Err(Error::PartitionMismatch);
    }
    let (a, b) = (chi_a.degree() as i64, chi_b.degree() as i64);
    let sgn = |k: i64| if k % 2 == 0 { 1 } else { -1 };
    let va = chi_a.eval(&ctx.e_int(nu)).scale(&ctx.int(sgn(a)));
    let vb = chi_b.eval(&ctx.e_int(nu)).scale(&ctx.int(sgn(b)));
    if va.val_or_abs() >= ctx.tol() || vb.val_or_abs() >= ctx.tol() {
        return Err(Error::Singular);
    }
    let num = ctx.e_int(-2 * nu).pow(a * b)?;
    let den = va.pow(b)?.mul(&vb.pow(a)?);
    let c = num.div(&den)?;
    if !c.in_f(ctx.tol() + 2 * c.val().unwrap_or(0).min(0)) {
        return Err(Error::Invalid("C_{a,b,ν} outside F".into()));
    }
    Ok(c.a)
}

#[derive(Clone, Debug)]
pub struct TJDecomposition {
    pub x_as: SymPoint,
    pub x_tu: SymPoint,
    pub l: u32,
    pub iters: u32,
}

/// `lcm(1, …, 4n)`: residue degrees of eigenvalues are at most `4n`.
pub fn tjd_exponent(n: usize) -> u32 {
    fn gcd(a: u32, b: u32) -> u32 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    (1..=(4 * n.max(1)) as u32).fold(1, |l, k| l / gcd(l, k) * k)
}

/// Integral characteristic polynomial with unit constant term.
pub fn is_strongly_compact(x: &SymPoint) -> bool {
    let f = char_poly(&x.mat);
    (0..=f.degree()).all(|k| f.coeff(k).is_integral()) && f.coeff(0).is_unit()
}

/// `z ↦ z^{p^l}`.
fn frob_power(z: &EMatrix, p: u64, l: u32) -> EMatrix {
    let mut w = z.clone();
    for _ in 0..l {
        w = w.pow(p);
    }
    w
}

/// `x_as = lim x^{p^{lm}}` and `x_tu = x_as⁻¹ x`.
pub fn tjd(x: &SymPoint) -> Result<TJDecomposition> {
    if !is_strongly_compact(x) {
        return Err(Error::NotStronglyCompact);
    }
    let ctx = x.ctx();
    let l = tjd_exponent(x.n);
    let k = tol_for(&ctx, x.mat.min_val());
    let mut z = x.mat.clone();
    for it in 1..=ctx.n {
        let w = frob_power(&z, ctx.p as u64, l);
        let done = residual_vanishes(&w.sub(&z), k);
        z = w;
        if done {
            let x_tu = z.inverse()?.mul(&x.mat);
            return Ok(TJDecomposition {
                x_as: SymPoint::from_matrix(z, x.forms.clone()),
                x_tu: SymPoint::from_matrix(x_tu, x.forms.clone()),
                l,
                iters: it,
            });
        }
    }
    Err(Error::NonConvergence(ctx.n))
}

impl TJDecomposition {
    /// `x_as` is fixed by `p^l`-powering.
    pub fn as_is_fixed(&self) -> bool {
        let ctx = self.x_as.ctx();
        let z = &self.x_as.mat;
        residual_vanishes(&frob_power(z, ctx.p as u64, self.l).sub(z), tol_for(&ctx, z.min_val()))
    }

    /// Characteristic polynomial of `x_tu` is `(t − 1)^{2n}` mod `p`.
    pub fn tu_is_unipotent(&self) -> bool {
        let ctx = self.x_tu.ctx();
        let f = char_poly(&self.x_tu.mat);
        let g = EPoly::new(&ctx, vec![ctx.e_int(-1), ctx.e_one()]).pow(f.degree());
        f.sub(&g).coeffs.iter().all(|c| c.val_or_abs() >= 1)
    }

    pub fn reassembles(&self, x: &SymPoint) -> bool {
        let k = tol_for(&x.ctx(), x.mat.min_val());
        let (s, u) = (&self.x_as.mat, &self.x_tu.mat);
        residual_vanishes(&s.mul(u).sub(&x.mat), k) && residual_vanishes(&u.mul(s).sub(&x.mat), k)
    }
}

/// Number of times `t − ν` divides `f` modulo `p`.
pub fn residue_multiplicity(f: &EPoly, nu: i64) -> usize {
    let ctx = f.ctx;
    let mut g = f.clone();
    let mut m = 0;
    while g.degree() > 0 {
        let (q, r) = g.div_linear(&ctx.e_int(nu));
        if r.val_or_abs() < 1 {
            break;
        }
        g = q;
        m += 1;
    }
    m
}

/// `f = (t − ν)^m g` with `m` exact to working precision: a remainder
/// counts as zero at depth `k` or when it is zero to its own precision (see
/// [`residual_vanishes`]).
pub fn split_root(f: &EPoly, nu: i64, k: i32) -> (usize, EPoly) {
    let ctx = f.ctx;
    let mut g = f.clone();
    let mut m = 0;
    while g.degree() > 0 {
        let (q, r) = g.div_linear(&ctx.e_int(nu));
        if !residual_vanishes(&EMatrix::from_rows(&ctx, vec![vec![r]]), k) {
            break;
        }
        g = q;
        m += 1;
    }
    (m, g)
}

/// Restriction of a point to an `x`-stable orthogonal summand.
#[derive(Clone, Debug)]
pub struct Component {
    pub point: SymPoint,
    /// Columns: orthonormal basis of the summand of `W₁`, then of `W₂`.
    pub basis: EMatrix,
}

#[derive(Clone, Debug)]
pub struct DescentData {
    pub gamma: SymPoint,
    pub y: SymPoint,
    pub proj_plus: EMatrix,
    pub proj_minus: EMatrix,
    /// `y₁` on `W_1`.
    pub y_plus: Option<Component>,
    /// `−y_{−1}` on `W_{−1}`.
    pub y_minus: Option<Component>,
    pub tjd: TJDecomposition,
    /// Multiplicities of `±1` in `χ_{x_as}` agree with those of the residue.
    pub eigen_restriction: bool,
}

/// Integral basis of `P(O^n)` for an integral idempotent `P`: columns of `P`
/// whose reductions are independent.
fn idempotent_image(p: &EMatrix) -> Result<EMatrix> {
    let ctx = p.ctx;
    let n = p.rows;
    if !p.is_integral() {
        return Err(Error::NotIntegral);
    }
    // Gaussian elimination over the residue field via unit pivots.
    let mut red = p.clone();
    let mut picked = Vec::new();
    let mut row_used = vec![false; n];
    for j in 0..n {
        let Some(i) = (0..n).find(|&i| !row_used[i] && red[(i, j)].val() == Some(0)) else {
            continue;
        };
        row_used[i] = true;
        picked.push(j);
        let inv = red[(i, j)].inv()?;
        for c in j + 1..n {
            let f = red[(i, c)].mul(&inv);
            for r in 0..n {
                let t = red[(r, c)].sub(&f.mul(&red[(r, j)]));
                red[(r, c)] = t;
            }
        }
    }
    let cols: Vec<Vec<EScalar>> = picked.iter().map(|&j| p.col(j)).collect();
    Ok(if cols.is_empty() { EMatrix::zeros(&ctx, n, 0) } else { EMatrix::from_cols(&ctx, &cols) })
}

/// `Q` with `Q† Φ Q = I` spanning the same lattice as `q`.
fn orthonormalize(q: &EMatrix, phi: &EMatrix) -> Result<EMatrix> {
    let g = q.dagger().mul(phi).mul(q);
    let hn = herm_normalize(&g)?;
    if hn.nonsplit {
        return Err(Error::Invalid("descendant space is not split".into()));
    }
    Ok(q.mul(&hn.m.dagger().inverse()?))
}

fn restrict(x: &EMatrix, forms: &(HermForm, HermForm), proj: &EMatrix, n: usize) -> Result<Option<Component>> {
    let ctx = x.ctx;
    let q1 = idempotent_image(&proj.block(0, 0, n, n))?;
    let q2 = idempotent_image(&proj.block(n, n, n, n))?;
    if q1.cols != q2.cols {
        return Err(Error::NotInDescentLocus);
    }
    let m = q1.cols;
    if m == 0 {
        return Ok(None);
    }
    let q1 = orthonormalize(&q1, &forms.0.gram)?;
    let q2 = orthonormalize(&q2, &forms.1.gram)?;
    let q = EMatrix::block_diag(&q1, &q2);
    let phi = EMatrix::block_diag(&forms.0.gram, &forms.1.gram);
    let mat = q.dagger().mul(&phi).mul(x).mul(&q);
    Ok(Some(Component { point: SymPoint::from_matrix(mat, SymPoint::split_forms(&ctx, m)), basis: q }))
}

/// `x_as = γ·y_as` with `γ = ±1` on `W_{±1}`, and the restrictions `y₁`,
/// `−y_{−1}` to the two eigenspaces.
pub fn descent_data(x: &SymPoint) -> Result<DescentData> {
    if !x.mat.is_integral() {
        return Err(Error::NotIntegral);
    }
    let ctx = x.ctx();
    let n = x.n;
    let t = tjd(x)?;
    let k = ctx.tol();
    let chi_x = char_poly(&x.mat);
    let chi_as = char_poly(&t.x_as.mat);
    let (m_minus, g) = split_root(&chi_as, -1, k);
    let (m_plus, _) = split_root(&chi_as, 1, k);
    let eigen_restriction = m_minus == residue_multiplicity(&chi_x, -1) && m_plus == residue_multiplicity(&chi_x, 1);
    let id = EMatrix::identity(&ctx, 2 * n);
    let proj_minus = if m_minus == 0 {
        EMatrix::zeros(&ctx, 2 * n, 2 * n)
    } else {
        let g1 = g.eval(&ctx.e_int(-1));
        if !g1.is_unit() {
            return Err(Error::NotInDescentLocus);
        }
        g.eval_matrix(&t.x_as.mat).scale(&g1.inv()?)
    };
    let proj_plus = id.sub(&proj_minus);
    let gamma = SymPoint::from_matrix(proj_plus.sub(&proj_minus), x.forms.clone());
    let y = SymPoint::from_matrix(gamma.mat.mul(&x.mat), x.forms.clone());
    let y_plus = restrict(&y.mat, &x.forms, &proj_plus, n)?;
    let y_minus = restrict(&y.mat.neg(), &x.forms, &proj_minus, n)?;
    Ok(DescentData { gamma, y, proj_plus, proj_minus, y_plus, y_minus, tjd: t, eigen_restriction })
}

impl DescentData {
    pub fn to_json(&self) -> Value {
        let comp = |c: &Option<Component>| c.as_ref().map(|c| json!({"point": c.point.to_json(), "basis": c.basis.to_json()}));
        json!({
            "gamma": self.gamma.mat.to_json(),
            "y": self.y.mat.to_json(),
            "proj_plus": self.proj_plus.to_json(),
            "proj_minus": self.proj_minus.to_json(),
            "y_plus": comp(&self.y_plus),
            "y_minus": comp(&self.y_minus),
            "x_as": self.tjd.x_as.mat.to_json(),
            "eigen_restriction": self.eigen_restriction,
        })
    }
}

/// Slopes of the Newton polygon of `f` (valuations of its roots), for
/// cross-checking [`is_strongly_compact`].
pub fn newton_slopes(f: &EPoly) -> Vec<i32> {
    let pts: Vec<(i32, i32)> = (0..=f.degree())
        .filter_map(|k| f.coeff(k).val().map(|v| (k as i32, v)))
        .collect();
    let mut hull: Vec<(i32, i32)> = Vec::new();
    for &pt in &pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // drop b if it lies on or above segment a–pt
            if (b.1 - a.1) as i64 * (pt.0 - a.0) as i64 >= (pt.1 - a.1) as i64 * (b.0 - a.0) as i64 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(pt);
    }
    let mut out = Vec::new();
    if pts.first().map(|p| p.0) != Some(0) {
        // zero roots
        out.extend(std::iter::repeat_n(f.ctx.tol(), pts.first().map_or(0, |p| p.0) as usize));
    }
    for w in hull.windows(2) {
        let (dx, dy) = (w[1].0 - w[0].0, w[0].1 - w[1].1);
        for _ in 0..dx {
            // integral slopes only matter for the compactness test
            out.push(dy.div_euclid(dx));
        }
    }
    out
}

/// A point of `Q_n` conjugated by `diag(h1, h2)` whose TJD parts are
/// expected to conjugate the same way.
pub fn conjugate_tjd(t: &TJDecomposition, h1: &EMatrix, h2: &EMatrix) -> Result<TJDecomposition> {
    Ok(TJDecomposition { x_as: t.x_as.conjugate(h1, h2)?, x_tu: t.x_tu.conjugate(h1, h2)?, l: t.l, iters: t.iters })
}

pub fn scalar_point(ctx: &PrecisionContext, n: usize, s: i64) -> SymPoint {
    SymPoint::from_matrix(EMatrix::scalar(ctx, 2 * n, ctx.e_int(s)), SymPoint::split_forms(ctx, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symspace::{contraction, direct_sum, is_member_with, lift_from_herm, random_integral_unitary, symmetrize};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn ctx() -> PrecisionContext {
        PrecisionContext::new(3, 12).unwrap()
    }

    fn random_x(c: &PrecisionContext, n: usize, rng: &mut ChaCha20Rng) -> EMatrix {
        EMatrix::from_fn(c, n, n, |_, _| c.e_zero()).add(&{
            let v: Vec<EScalar> = (0..n * n).map(|_| c.random_e(rng, 0)).collect();
            EMatrix::from_fn(c, n, n, |i, j| v[i * n + j])
        })
    }

    #[test]
    fn cayley_examples() {
        let c = ctx();
        let f = SymPoint::split_forms(&c, 2);
        for nu in [1, -1] {
            let x = cayley(&EMatrix::zeros(&c, 2, 2), nu, &f).unwrap();
            assert!(x.mat.eq_mod(&EMatrix::scalar(&c, 4, c.e_int(-nu)), 12));
            let b = cayley_inv_matrix(&EMatrix::scalar(&c, 4, c.e_int(-nu)), nu).unwrap();
            assert!(b.vanishes_mod(12));
            assert_eq!(cayley_inv_matrix(&EMatrix::scalar(&c, 4, c.e_int(nu)), nu).unwrap_err(), Error::Singular);
        }
    }

    #[test]
    fn cayley_roundtrip_and_contraction() {
        let c = ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for n in 1..=3 {
            let f = SymPoint::split_forms(&c, n);
            for _ in 0..10 {
                let xm = random_x(&c, n, &mut rng);
                for nu in [1, -1] {
                    let Ok(x) = cayley(&xm, nu, &f) else { continue };
                    // near D_ν the inverse eats the working precision
                    if EMatrix::identity(&c, 2 * n).sub(&lie_embed(&xm, &f).unwrap()).det().val() > Some(1) {
                        continue;
                    }
                    assert!(is_member_with(&x.mat, &f));
                    assert!(residual_vanishes(&cayley_inv(&x, nu).unwrap().sub(&xm), 10));
                    let r = lie_contraction(&xm, &f).unwrap();
                    assert!(residual_vanishes(&contraction(&x).sub(&cayley_matrix(&r, nu).unwrap()), 10));
                }
            }
        }
    }

    #[test]
    fn charpoly_transform() {
        let c = ctx();
        for nu in [1, -1] {
            let t = EPoly::new(&c, vec![c.e_zero(), c.e_one()]);
            let g = cayley_charpoly_transform(&t, nu, 1).unwrap();
            assert!(g.eq_mod(&EPoly::new(&c, vec![c.e_int(nu), c.e_one()]), 12));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..20 {
            let m = random_x(&c, 3, &mut rng);
            for nu in [1, -1] {
                let Ok(cm) = cayley_matrix(&m, nu) else { continue };
                let g = cayley_charpoly_transform(&char_poly(&m), nu, 3).unwrap();
                assert_eq!(g.degree(), 3);
                assert!(residual_vanishes(&EMatrix::from_rows(&c, vec![g.sub(&char_poly(&cm)).coeffs]), 10));
            }
        }
    }

    #[test]
    fn cab_factor_valuation() {
        let c = ctx();
        let ff = SymPoint::split_forms(&c, 2);
        // z_a − 1 = 9, z_b − 1 = 2
        let z = lift_from_herm(&EMatrix::diag(&c, &[c.e_int(10), c.e_int(3)]), &ff).unwrap();
        let ca = EPoly::linear(&c, c.e_int(10));
        let cb = EPoly::linear(&c, c.e_int(3));
        assert_eq!(cab_factor(&z, &ca, &cb, 1).unwrap().val(), Some(-2));
        assert_eq!(cab_factor(&z, &ca, &cb, -1).unwrap().val(), Some(0));
        assert_eq!(cab_factor(&z, &ca, &ca, 1).unwrap_err(), Error::PartitionMismatch);
        let y = lift_from_herm(&EMatrix::diag(&c, &[c.e_int(3), c.e_int(6)]), &ff).unwrap();
        let c1 = cab_factor(&y, &EPoly::linear(&c, c.e_int(3)), &EPoly::linear(&c, c.e_int(6)), 1).unwrap();
        assert_eq!(c1.val(), Some(0));
    }

    #[test]
    fn tjd_scalars() {
        let c = ctx();
        for s in [1, -1] {
            let x = scalar_point(&c, 2, s);
            let t = tjd(&x).unwrap();
            assert!(t.x_as.mat.eq_mod(&x.mat, 12));
            assert!(t.x_tu.mat.eq_mod(&EMatrix::identity(&c, 4), 12));
        }
    }

    #[test]
    fn tjd_random_integral() {
        let c = ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for n in 1..=2 {
            for _ in 0..5 {
                let g = random_integral_unitary(&c, &EMatrix::identity(&c, 2 * n), &mut rng);
                let x = SymPoint::from_matrix(symmetrize(&g).unwrap(), SymPoint::split_forms(&c, n));
                assert!(is_strongly_compact(&x));
                let t = tjd(&x).unwrap();
                assert!(t.reassembles(&x));
                assert!(t.as_is_fixed());
                assert!(t.tu_is_unipotent());
                assert!(is_member_with(&t.x_as.mat, &x.forms));
                assert!(is_member_with(&t.x_tu.mat, &x.forms));
                let t2 = tjd(&t.x_as).unwrap();
                assert!(t2.x_tu.mat.eq_mod(&EMatrix::identity(&c, 2 * n), 10));
            }
        }
    }

    #[test]
    fn descent_roundtrip() {
        let c = ctx();
        let f1 = SymPoint::split_forms(&c, 1);
        // a ≡ 1 and a ≡ −1 with val(1 − a²) even
        let y1 = lift_from_herm(&EMatrix::diag(&c, &[c.e_int(1 + 9)]), &f1).unwrap();
        let y2 = lift_from_herm(&EMatrix::diag(&c, &[c.e_int(-1 - 9)]), &f1).unwrap();
        let x = direct_sum(&y1, &y2);
        let d = descent_data(&x).unwrap();
        assert!(d.eigen_restriction);
        let p = d.y_plus.as_ref().unwrap();
        let m = d.y_minus.as_ref().unwrap();
        assert!(char_poly(&p.point.mat).eq_mod(&char_poly(&y1.mat), 10));
        assert!(char_poly(&m.point.mat).eq_mod(&char_poly(&y2.mat), 10));
        let very = lift_from_herm(&EMatrix::diag(&c, &[c.e_int(3), c.e_int(6)]), &SymPoint::split_forms(&c, 2)).unwrap();
        let d = descent_data(&very).unwrap();
        assert!(d.y_minus.is_none());
        assert!(d.gamma.mat.eq_mod(&EMatrix::identity(&c, 4), 12));
    }

    #[test]
    fn newton_agrees_with_compactness() {
        let c = ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for _ in 0..30 {
            let g = random_integral_unitary(&c, &EMatrix::identity(&c, 4), &mut rng);
            let h = EMatrix::diag(&c, &[c.e_from_f(c.pk(-1)), c.e_one(), c.e_from_f(c.pk(1)), c.e_one()]);
            let m = h.mul(&g).mul(&h.inverse().unwrap());
            let x = SymPoint::from_matrix(m, SymPoint::split_forms(&c, 2));
            let slopes = newton_slopes(&char_poly(&x.mat));
            assert_eq!(is_strongly_compact(&x), slopes.iter().all(|&s| s == 0));
        }
        assert_eq!(tjd_exponent(2), 840);
    }
}
