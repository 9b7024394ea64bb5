//! Dense matrices and polynomials over E, Hermitian diagonalization and
//! factorization `H = M C M†`.

use crate::error::{Error, Result};
use crate::padic::{EScalar, FScalar, PrecisionContext};
use serde_json::{json, Value};
use std::fmt;

#[derive(Clone)]
pub struct EMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<EScalar>,
    pub ctx: PrecisionContext,
}

/// A matrix with `M† = M` (relative to the standard form).
pub type HermMatrix = EMatrix;

impl EMatrix {
    pub fn zeros(ctx: &PrecisionContext, rows: usize, cols: usize) -> EMatrix {
        EMatrix { rows, cols, data: vec![ctx.e_zero(); rows * cols], ctx: *ctx }
    }

    pub fn identity(ctx: &PrecisionContext, n: usize) -> EMatrix {
        let mut m = EMatrix::zeros(ctx, n, n);
        for i in 0..n {
            m[(i, i)] = ctx.e_one();
        }
        m
    }

    pub fn scalar(ctx: &PrecisionContext, n: usize, z: EScalar) -> EMatrix {
        let mut m = EMatrix::zeros(ctx, n, n);
        for i in 0..n {
            m[(i, i)] = z;
        }
        m
    }

    pub fn diag(ctx: &PrecisionContext, d: &[EScalar]) -> EMatrix {
        let mut m = EMatrix::zeros(ctx, d.len(), d.len());
        for (i, z) in d.iter().enumerate() {
            m[(i, i)] = *z;
        }
        m
    }

    pub fn from_rows(ctx: &PrecisionContext, rows: Vec<Vec<EScalar>>) -> EMatrix {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let data: Vec<EScalar> = rows.into_iter().flatten().collect();
        assert_eq!(data.len(), r * c);
        EMatrix { rows: r, cols: c, data, ctx: *ctx }
    }

    pub fn from_fn(ctx: &PrecisionContext, rows: usize, cols: usize, f: impl Fn(usize, usize) -> EScalar) -> EMatrix {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        EMatrix { rows, cols, data, ctx: *ctx }
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[EScalar] {
        &self.data
    }

    pub fn col(&self, j: usize) -> Vec<EScalar> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn from_cols(ctx: &PrecisionContext, cols: &[Vec<EScalar>]) -> EMatrix {
        let r = cols.first().map_or(0, Vec::len);
        EMatrix::from_fn(ctx, r, cols.len(), |i, j| cols[j][i])
    }

    pub fn add(&self, o: &EMatrix) -> EMatrix {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        let data = self.data.iter().zip(&o.data).map(|(a, b)| a.add(b)).collect();
        EMatrix { data, ..*self }
    }

    pub fn sub(&self, o: &EMatrix) -> EMatrix {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        let data = self.data.iter().zip(&o.data).map(|(a, b)| a.sub(b)).collect();
        EMatrix { data, ..*self }
    }

    pub fn neg(&self) -> EMatrix {
        EMatrix { data: self.data.iter().map(EScalar::neg).collect(), ..*self }
    }

    pub fn scale(&self, z: &EScalar) -> EMatrix {
        EMatrix { data: self.data.iter().map(|a| a.mul(z)).collect(), ..*self }
    }

    pub fn shift(&self, k: i32) -> EMatrix {
        EMatrix { data: self.data.iter().map(|a| a.shift(k)).collect(), ..*self }
    }

    pub fn mul(&self, o: &EMatrix) -> EMatrix {
        assert_eq!(self.cols, o.rows, "dimension mismatch in product");
        let mut out = EMatrix::zeros(&self.ctx, self.rows, o.cols);
        for i in 0..self.rows {
            for j in 0..o.cols {
                let mut acc = self[(i, 0)].mul(&o[(0, j)]);
                for k in 1..self.cols {
                    acc = acc.add(&self[(i, k)].mul(&o[(k, j)]));
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[EScalar]) -> Vec<EScalar> {
        (0..self.rows)
            .map(|i| {
                let mut acc = self[(i, 0)].mul(&v[0]);
                for k in 1..self.cols {
                    acc = acc.add(&self[(i, k)].mul(&v[k]));
                }
                acc
            })
            .collect()
    }

    pub fn transpose(&self) -> EMatrix {
        EMatrix::from_fn(&self.ctx, self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> EMatrix {
        EMatrix { data: self.data.iter().map(EScalar::conj).collect(), ..*self }
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> EMatrix {
        EMatrix::from_fn(&self.ctx, self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> EScalar {
        let mut acc = self.ctx.e_zero();
        for i in 0..self.rows.min(self.cols) {
            acc = acc.add(&self[(i, i)]);
        }
        acc
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> EMatrix {
        EMatrix::from_fn(&self.ctx, rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, m: &EMatrix) {
        for i in 0..m.rows {
            for j in 0..m.cols {
                self[(r0 + i, c0 + j)] = m[(i, j)];
            }
        }
    }

    /// `[[a, b], [c, d]]`.
    pub fn from_blocks(a: &EMatrix, b: &EMatrix, c: &EMatrix, d: &EMatrix) -> EMatrix {
        let mut m = EMatrix::zeros(&a.ctx, a.rows + c.rows, a.cols + b.cols);
        m.set_block(0, 0, a);
        m.set_block(0, a.cols, b);
        m.set_block(a.rows, 0, c);
        m.set_block(a.rows, a.cols, d);
        m
    }

    pub fn block_diag(a: &EMatrix, d: &EMatrix) -> EMatrix {
        let b = EMatrix::zeros(&a.ctx, a.rows, d.cols);
        let c = EMatrix::zeros(&a.ctx, d.rows, a.cols);
        EMatrix::from_blocks(a, &b, &c, d)
    }

    /// Minimum valuation over nonzero entries, `None` if all vanish.
    pub fn min_val(&self) -> Option<i32> {
        self.data.iter().filter_map(EScalar::val).min()
    }

    pub fn is_integral(&self) -> bool {
        self.data.iter().all(EScalar::is_integral)
    }

    pub fn eq_mod(&self, o: &EMatrix, k: i32) -> bool {
        (self.rows, self.cols) == (o.rows, o.cols) && self.data.iter().zip(&o.data).all(|(a, b)| a.eq_mod(b, k))
    }

    /// All entries have valuation at least `k` (zeros counted by their known precision).
    pub fn vanishes_mod(&self, k: i32) -> bool {
        self.data.iter().all(|z| z.val_or_abs() >= k)
    }

    pub fn is_hermitian(&self, k: i32) -> bool {
        self.is_square() && self.eq_mod(&self.dagger(), k)
    }

    pub fn pow(&self, mut e: u64) -> EMatrix {
        let mut acc = EMatrix::identity(&self.ctx, self.rows);
        let mut b = self.clone();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&b);
            }
            e >>= 1;
            if e > 0 {
                b = b.mul(&b);
            }
        }
        acc
    }

    /// Inverse by Gauss–Jordan elimination with minimal-valuation pivots.
    pub fn inverse(&self) -> Result<EMatrix> {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = EMatrix::identity(&self.ctx, n);
        for k in 0..n {
            let piv = (k..n)
                .filter_map(|i| a[(i, k)].val().map(|v| (v, i)))
                .min()
                .ok_or(Error::Singular)?
                .1;
            a.swap_rows(k, piv);
            inv.swap_rows(k, piv);
            let pinv = a[(k, k)].inv()?;
            for j in 0..n {
                a[(k, j)] = a[(k, j)].mul(&pinv);
                inv[(k, j)] = inv[(k, j)].mul(&pinv);
            }
            for i in 0..n {
                if i == k {
                    continue;
                }
                let f = a[(i, k)];
                if f.is_zero() {
                    continue;
                }
                for j in 0..n {
                    a[(i, j)] = a[(i, j)].sub(&f.mul(&a[(k, j)]));
                    inv[(i, j)] = inv[(i, j)].sub(&f.mul(&inv[(k, j)]));
                }
            }
        }
        Ok(inv)
    }

    pub fn swap_rows(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(i * self.cols + c, j * self.cols + c);
        }
    }

    pub fn swap_cols(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        for r in 0..self.rows {
            self.data.swap(r * self.cols + i, r * self.cols + j);
        }
    }

    /// Determinant by elimination with minimal-valuation pivots.
    pub fn det(&self) -> EScalar {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.clone();
        let mut det = self.ctx.e_one();
        for k in 0..n {
            let Some((_, piv)) = (k..n).filter_map(|i| a[(i, k)].val().map(|v| (v, i))).min() else {
                // column is zero to known precision
                let mut z = a[(k, k)];
                for i in k..n {
                    if a[(i, k)].val_or_abs() < z.val_or_abs() {
                        z = a[(i, k)];
                    }
                }
                return det.mul(&z);
            };
            if piv != k {
                a.swap_rows(k, piv);
                det = det.neg();
            }
            let d = a[(k, k)];
            det = det.mul(&d);
            let dinv = d.inv().expect("nonzero pivot");
            for i in k + 1..n {
                let f = a[(i, k)].mul(&dinv);
                if f.is_zero() {
                    continue;
                }
                for j in k..n {
                    a[(i, j)] = a[(i, j)].sub(&f.mul(&a[(k, j)]));
                }
            }
        }
        det
    }

    /// A generator of the kernel of a corank-one square matrix: the adjugate
    /// column of least valuation.
    pub fn kernel_vector(&self) -> Result<Vec<EScalar>> {
        assert!(self.is_square());
        let n = self.rows;
        if n == 1 {
            return Ok(vec![self.ctx.e_one()]);
        }
        let mut best: Option<(i32, Vec<EScalar>)> = None;
        for j in 0..n {
            // column j of adj(M): entries (−1)^{i+j} det(minor(j, i))
            let col: Vec<EScalar> = (0..n)
                .map(|i| {
                    let m = self.minor(j, i).det();
                    if (i + j) % 2 == 0 {
                        m
                    } else {
                        m.neg()
                    }
                })
                .collect();
            if let Some(v) = col.iter().filter_map(EScalar::val).min() {
                if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                    best = Some((v, col));
                }
            }
        }
        best.map(|(_, c)| c).ok_or(Error::PrecisionExhausted("kernel of corank > 1"))
    }

    /// Matrix with row `r` and column `c` deleted.
    pub fn minor(&self, r: usize, c: usize) -> EMatrix {
        EMatrix::from_fn(&self.ctx, self.rows - 1, self.cols - 1, |i, j| {
            self[(if i < r { i } else { i + 1 }, if j < c { j } else { j + 1 })]
        })
    }

    pub fn to_json(&self) -> Value {
        json!({
            "rows": self.rows,
            "cols": self.cols,
            "entries": self.data.iter().map(EScalar::to_json).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(ctx: &PrecisionContext, v: &Value) -> Result<EMatrix> {
        let bad = || Error::Invalid("malformed EMatrix".into());
        let rows = v.get("rows").and_then(Value::as_u64).ok_or_else(bad)? as usize;
        let cols = v.get("cols").and_then(Value::as_u64).ok_or_else(bad)? as usize;
        let ents = v.get("entries").and_then(Value::as_array).ok_or_else(bad)?;
        if ents.len() != rows * cols {
            return Err(bad());
        }
        let data = ents.iter().map(|e| EScalar::from_json(ctx, e)).collect::<Result<Vec<_>>>()?;
        Ok(EMatrix { rows, cols, data, ctx: *ctx })
    }
}

impl std::ops::Index<(usize, usize)> for EMatrix {
    type Output = EScalar;
    fn index(&self, (i, j): (usize, usize)) -> &EScalar {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for EMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut EScalar {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for EMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[")?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| format!("{:?}", self[(i, j)])).collect();
            writeln!(f, "  {}", row.join(", "))?;
        }
        write!(f, "]")
    }
}

/// Dense polynomial, coefficients indexed by degree.
#[derive(Clone)]
pub struct EPoly {
    pub coeffs: Vec<EScalar>,
    pub ctx: PrecisionContext,
}

impl EPoly {
    pub fn new(ctx: &PrecisionContext, coeffs: Vec<EScalar>) -> EPoly {
        EPoly { coeffs, ctx: *ctx }
    }

    pub fn constant(ctx: &PrecisionContext, c: EScalar) -> EPoly {
        EPoly::new(ctx, vec![c])
    }

    /// `t − r`.
    pub fn linear(ctx: &PrecisionContext, r: EScalar) -> EPoly {
        EPoly::new(ctx, vec![r.neg(), ctx.e_one()])
    }

    pub fn from_f(ctx: &PrecisionContext, coeffs: &[FScalar]) -> EPoly {
        EPoly::new(ctx, coeffs.iter().map(|c| ctx.e_from_f(*c)).collect())
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn coeff(&self, k: usize) -> EScalar {
        self.coeffs.get(k).copied().unwrap_or_else(|| self.ctx.e_zero())
    }

    pub fn is_monic(&self) -> bool {
        self.coeffs.last().is_some_and(|c| c.eq_mod(&self.ctx.e_one(), self.ctx.n as i32))
    }

    pub fn eval(&self, z: &EScalar) -> EScalar {
        let mut acc = self.ctx.e_zero();
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(z).add(c);
        }
        acc
    }

    pub fn eval_matrix(&self, m: &EMatrix) -> EMatrix {
        let n = m.rows;
        let mut acc = EMatrix::zeros(&self.ctx, n, n);
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(m).add(&EMatrix::scalar(&self.ctx, n, *c));
        }
        acc
    }

    pub fn add(&self, o: &EPoly) -> EPoly {
        let d = self.coeffs.len().max(o.coeffs.len());
        EPoly::new(&self.ctx, (0..d).map(|k| self.coeff(k).add(&o.coeff(k))).collect())
    }

    pub fn sub(&self, o: &EPoly) -> EPoly {
        let d = self.coeffs.len().max(o.coeffs.len());
        EPoly::new(&self.ctx, (0..d).map(|k| self.coeff(k).sub(&o.coeff(k))).collect())
    }

    pub fn scale(&self, z: &EScalar) -> EPoly {
        EPoly::new(&self.ctx, self.coeffs.iter().map(|c| c.mul(z)).collect())
    }

    pub fn mul(&self, o: &EPoly) -> EPoly {
        let mut out = vec![self.ctx.e_zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].add(&a.mul(b));
            }
        }
        EPoly::new(&self.ctx, out)
    }

    pub fn pow(&self, k: usize) -> EPoly {
        let mut acc = EPoly::constant(&self.ctx, self.ctx.e_one());
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn derivative(&self) -> EPoly {
        if self.coeffs.len() <= 1 {
            return EPoly::constant(&self.ctx, self.ctx.e_zero());
        }
        EPoly::new(
            &self.ctx,
            (1..self.coeffs.len()).map(|k| self.coeffs[k].mul(&self.ctx.e_int(k as i64))).collect(),
        )
    }

    /// Quotient and remainder by `t − r`.
    pub fn div_linear(&self, r: &EScalar) -> (EPoly, EScalar) {
        let d = self.degree();
        if d == 0 {
            return (EPoly::constant(&self.ctx, self.ctx.e_zero()), self.coeff(0));
        }
        let mut q = vec![self.ctx.e_zero(); d];
        let mut acc = self.coeffs[d];
        for k in (0..d).rev() {
            q[k] = acc;
            acc = self.coeffs[k].add(&acc.mul(r));
        }
        (EPoly::new(&self.ctx, q), acc)
    }

    pub fn eq_mod(&self, o: &EPoly, k: i32) -> bool {
        let d = self.coeffs.len().max(o.coeffs.len());
        (0..d).all(|i| self.coeff(i).eq_mod(&o.coeff(i), k))
    }

    /// Every coefficient has vanishing ω-part to `k` digits.
    pub fn has_f_coeffs(&self, k: i32) -> bool {
        self.coeffs.iter().all(|c| c.in_f(k))
    }

    pub fn to_json(&self) -> Value {
        Value::Array(self.coeffs.iter().map(EScalar::to_json).collect())
    }

    pub fn from_json(ctx: &PrecisionContext, v: &Value) -> Result<EPoly> {
        let arr = v.as_array().ok_or_else(|| Error::Invalid("malformed EPoly".into()))?;
        Ok(EPoly::new(ctx, arr.iter().map(|c| EScalar::from_json(ctx, c)).collect::<Result<_>>()?))
    }
}

impl fmt::Debug for EPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EPoly{:?}", self.coeffs)
    }
}

/// `det(tI − M)` by the division-free Berkowitz recursion.
pub fn char_poly(m: &EMatrix) -> EPoly {
    assert!(m.is_square());
    let ctx = m.ctx;
    let n = m.rows;
    // high-to-low coefficients of the characteristic polynomial of the leading r×r block
    let mut poly = vec![ctx.e_one()];
    for r in 0..n {
        let a = m[(r, r)];
        let mut t = vec![ctx.e_one(), a.neg()];
        if r > 0 {
            let sub = m.block(0, 0, r, r);
            let mut c: Vec<EScalar> = (0..r).map(|i| m[(i, r)]).collect();
            let row: Vec<EScalar> = (0..r).map(|j| m[(r, j)]).collect();
            for _ in 0..r {
                let mut dot = ctx.e_zero();
                for k in 0..r {
                    dot = dot.add(&row[k].mul(&c[k]));
                }
                t.push(dot.neg());
                c = sub.mul_vec(&c);
            }
        }
        let mut next = vec![ctx.e_zero(); r + 2];
        for (i, ti) in t.iter().enumerate() {
            for (j, pj) in poly.iter().enumerate() {
                if i + j < r + 2 {
                    next[i + j] = next[i + j].add(&ti.mul(pj));
                }
            }
        }
        poly = next;
    }
    poly.reverse();
    EPoly::new(&ctx, poly)
}

pub fn companion(f: &EPoly) -> EMatrix {
    let d = f.degree();
    let ctx = f.ctx;
    let mut c = EMatrix::zeros(&ctx, d, d);
    for i in 1..d {
        c[(i, i - 1)] = ctx.e_one();
    }
    for i in 0..d {
        c[(i, d - 1)] = f.coeffs[i].neg();
    }
    c
}

/// `Res(f, g) = ∏_{f(α)=0} g(α)` for monic `f`, computed as `det g(C_f)`.
pub fn resultant(f: &EPoly, g: &EPoly) -> EScalar {
    debug_assert!(f.is_monic());
    if f.degree() == 0 {
        return f.ctx.e_one();
    }
    g.eval_matrix(&companion(f)).det()
}

/// Roots of a monic squarefree quadratic with F-coefficients, in F or in E.
pub fn quadratic_roots(f: &EPoly, in_e: bool) -> Result<Vec<EScalar>> {
    assert_eq!(f.degree(), 2);
    let ctx = f.ctx;
    let c1 = f.coeff(1).a;
    let c0 = f.coeff(0).a;
    let disc = c1.mul(&c1).sub(&ctx.int(4).mul(&c0));
    if disc.is_zero() || disc.val_or_abs() >= ctx.tol() {
        return Err(Error::NotSquarefree);
    }
    let half = ctx.ratio(1, 2);
    let s = match disc.sqrt()? {
        Some(r) => ctx.e_from_f(r),
        None if in_e => match ctx.e_from_f(disc).sqrt()? {
            Some(r) => r,
            None => return Ok(vec![]),
        },
        None => return Ok(vec![]),
    };
    let mc1 = ctx.e_from_f(c1.neg());
    let h = ctx.e_from_f(half);
    Ok(vec![mc1.add(&s).mul(&h), mc1.sub(&s).mul(&h)])
}

/// Some `b ∈ O_E^×` with `Nm(b) = u` for a unit `u ∈ O_F`.
pub fn norm_solve(ctx: &PrecisionContext, u: &FScalar) -> Result<EScalar> {
    if !u.is_unit() {
        return Err(Error::Invalid("norm_solve needs a unit".into()));
    }
    let p = ctx.p as u64;
    let e = ctx.eps as u64;
    let target = u.residue();
    for x in 0..p {
        for y in 0..p {
            if (x * x + (p - e % p) * (y * y % p)) % p == target {
                let b0 = ctx.e(ctx.int(x as i64), ctx.int(y as i64));
                let r = u.div(&b0.norm())?;
                let s = r.sqrt()?.ok_or(Error::PrecisionExhausted("norm ratio is not a square"))?;
                return Ok(b0.scale(&s));
            }
        }
    }
    unreachable!("the norm map is surjective on residue fields")
}

/// `H = M C M†` with `C = diag(1, …, 1, c)`, `c ∈ {1, p}`.
#[derive(Clone, Debug)]
pub struct HermNormal {
    pub m: EMatrix,
    /// `true` when `c = p` (odd determinant valuation).
    pub nonsplit: bool,
}

impl HermNormal {
    pub fn c_matrix(&self) -> EMatrix {
        canonical_form(&self.m.ctx, self.m.rows, self.nonsplit)
    }
}

/// `I_n` or `diag(1, …, 1, p)`.
pub fn canonical_form(ctx: &PrecisionContext, n: usize, nonsplit: bool) -> EMatrix {
    let mut c = EMatrix::identity(ctx, n);
    if nonsplit && n > 0 {
        c[(n - 1, n - 1)] = ctx.e_from_f(ctx.pk(1));
    }
    c
}

/// Congruence diagonalization `P H P† = Δ` with `P ∈ GL_n(O_E)`.
pub fn herm_diagonalize(h: &HermMatrix) -> Result<(EMatrix, Vec<FScalar>)> {
    let ctx = h.ctx;
    let n = h.rows;
    let mut w = h.clone();
    let mut pm = EMatrix::identity(&ctx, n);
    let candidates = [ctx.e_one(), ctx.omega()];
    for k in 0..n {
        let mut best: Option<(i32, usize, usize)> = None;
        for i in k..n {
            for j in k..n {
                if let Some(v) = w[(i, j)].val() {
                    let better = match best {
                        None => true,
                        Some((bv, bi, bj)) => v < bv || (v == bv && i == j && bi != bj),
                    };
                    if better {
                        best = Some((v, i, j));
                    }
                }
            }
        }
        let (v, mut i, j) = best.ok_or(Error::Singular)?;
        if i != j {
            // e_i ← e_i + λ e_j makes the diagonal reach valuation v
            let mut done = false;
            for lam in candidates {
                let new_ii = w[(i, i)]
                    .add(&lam.mul(&w[(j, i)]))
                    .add(&lam.conj().mul(&w[(i, j)]))
                    .add(&w[(j, j)].scale(&lam.norm()));
                if new_ii.val() == Some(v) {
                    for c in 0..n {
                        let t = w[(i, c)].add(&lam.mul(&w[(j, c)]));
                        w[(i, c)] = t;
                        let t = pm[(i, c)].add(&lam.mul(&pm[(j, c)]));
                        pm[(i, c)] = t;
                    }
                    let lc = lam.conj();
                    for r in 0..n {
                        let t = w[(r, i)].add(&lc.mul(&w[(r, j)]));
                        w[(r, i)] = t;
                    }
                    done = true;
                    break;
                }
            }
            if !done {
                return Err(Error::PrecisionExhausted("no pivot adjustment"));
            }
        } else {
            i = j;
        }
        w.swap_rows(k, i);
        w.swap_cols(k, i);
        pm.swap_rows(k, i);
        let dinv = w[(k, k)].inv()?;
        for r in k + 1..n {
            let f = w[(r, k)].mul(&dinv);
            if f.is_zero() {
                continue;
            }
            for c in 0..n {
                let t = w[(r, c)].sub(&f.mul(&w[(k, c)]));
                w[(r, c)] = t;
                let t = pm[(r, c)].sub(&f.mul(&pm[(k, c)]));
                pm[(r, c)] = t;
            }
            let fc = f.conj();
            for rr in 0..n {
                let t = w[(rr, r)].sub(&fc.mul(&w[(rr, k)]));
                w[(rr, r)] = t;
            }
        }
        for r in k + 1..n {
            w[(r, k)] = ctx.e_zero();
            w[(k, r)] = ctx.e_zero();
        }
    }
    let diag = (0..n).map(|i| w[(i, i)].a).collect();
    Ok((pm, diag))
}

/// Write `H = M C M†` with `C` canonical.
pub fn herm_normalize(h: &HermMatrix) -> Result<HermNormal> {
    let ctx = h.ctx;
    let n = h.rows;
    let (pm, d) = herm_diagonalize(h)?;
    let mut q = EMatrix::zeros(&ctx, n, n);
    let mut odd: Vec<usize> = Vec::new();
    for (i, di) in d.iter().enumerate() {
        let v = di.val().ok_or(Error::Singular)?;
        if v.rem_euclid(2) == 0 {
            let b = norm_solve(&ctx, &di.shift(-v))?;
            q[(i, i)] = b.shift(v / 2);
        } else {
            odd.push(i);
        }
    }
    let mut leftover = None;
    let mut it = odd.chunks(2);
    for pair in &mut it {
        if pair.len() == 1 {
            leftover = Some(pair[0]);
            break;
        }
        let (i, j) = (pair[0], pair[1]);
        let t = merge_odd_pair(&ctx, &d[i], &d[j])?;
        q[(i, i)] = t[(0, 0)];
        q[(i, j)] = t[(0, 1)];
        q[(j, i)] = t[(1, 0)];
        q[(j, j)] = t[(1, 1)];
    }
    let mut perm: Vec<usize> = (0..n).collect();
    if let Some(i) = leftover {
        let v = d[i].val().unwrap();
        let b = norm_solve(&ctx, &d[i].shift(-v))?;
        q[(i, i)] = b.shift((v - 1) / 2);
        perm.retain(|&k| k != i);
        perm.push(i);
    }
    // M = P⁻¹ Q Π
    let qp = EMatrix::from_fn(&ctx, n, n, |r, c| q[(r, perm[c])]);
    let m = pm.inverse()?.mul(&qp);
    Ok(HermNormal { m, nonsplit: leftover.is_some() })
}

/// `T` with `diag(d1, d2) = T T†` for odd-valuation `d1, d2 ∈ F`.
fn merge_odd_pair(ctx: &PrecisionContext, d1: &FScalar, d2: &FScalar) -> Result<EMatrix> {
    let v1 = d1.val().unwrap();
    let v2 = d2.val().unwrap();
    let u1 = d1.shift(-v1);
    let u2 = d2.shift(-v2);
    let h1 = u1.shift(1);
    let h2 = u2.shift(1);
    // u1 Nm(x) + u2 must have valuation exactly 1
    let target = u2.neg().div(&u1)?;
    let mut x = norm_solve(ctx, &target)?;
    let f = |x: &EScalar| u1.mul(&x.norm()).add(&u2);
    if f(&x).val_or_abs() != 1 {
        x = x.add(&x.shift(1));
    }
    let fx = f(&x);
    if fx.val() != Some(1) {
        return Err(Error::PrecisionExhausted("odd pair merge"));
    }
    let e = |a: FScalar| ctx.e_from_f(a);
    // columns v1 = (x, 1), v2 = (h2, −x̄ h1)
    let vm = EMatrix::from_rows(
        ctx,
        vec![vec![x, e(h2)], vec![ctx.e_one(), x.conj().scale(&h1).neg()]],
    );
    let g1 = h1.mul(&x.norm()).add(&h2);
    let g2 = h1.mul(&h2).mul(&g1);
    let n1 = norm_solve(ctx, &g1.shift(-2))?.shift(1);
    let n2 = norm_solve(ctx, &g2.shift(-4))?.shift(2);
    let t = vm.dagger().inverse()?.mul(&EMatrix::diag(ctx, &[n1, n2]));
    let s1 = ctx.e_from_f(ctx.pk((v1 - 1) / 2));
    let s2 = ctx.e_from_f(ctx.pk((v2 - 1) / 2));
    Ok(EMatrix::diag(ctx, &[s1, s2]).mul(&t))
}

/// `B` with `B B† = H`; fails iff `val det H` is odd.
pub fn herm_factor(h: &HermMatrix) -> Result<EMatrix> {
    let hn = herm_normalize(h)?;
    if hn.nonsplit {
        return Err(Error::NoFactorization);
    }
    Ok(hn.m)
}

/// `B` with `B G B† = H`, for nondegenerate Hermitian `G`, `H` of equal class.
pub fn herm_factor_rel(h: &HermMatrix, g: &HermMatrix) -> Result<EMatrix> {
    let hn = herm_normalize(h)?;
    let gn = herm_normalize(g)?;
    if hn.nonsplit != gn.nonsplit {
        return Err(Error::NoFactorization);
    }
    Ok(hn.m.mul(&gn.m.inverse()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn ctx() -> PrecisionContext {
        PrecisionContext::new(3, 12).unwrap()
    }

    fn laplace_det(m: &EMatrix) -> EScalar {
        if m.rows == 1 {
            return m[(0, 0)];
        }
        let mut acc = m.ctx.e_zero();
        for j in 0..m.cols {
            let t = m[(0, j)].mul(&laplace_det(&m.minor(0, j)));
            acc = if j % 2 == 0 { acc.add(&t) } else { acc.sub(&t) };
        }
        acc
    }

    fn random_matrix(c: &PrecisionContext, rng: &mut ChaCha20Rng, n: usize) -> EMatrix {
        let d: Vec<EScalar> = (0..n * n).map(|_| c.random_e(rng, 0)).collect();
        EMatrix::from_fn(c, n, n, |i, j| d[i * n + j])
    }

    #[test]
    fn dagger_of_omega_identity() {
        let c = ctx();
        let m = EMatrix::scalar(&c, 2, c.omega());
        assert!(m.dagger().eq_mod(&m.neg(), 12));
        assert!(EMatrix::identity(&c, 3).dagger().eq_mod(&EMatrix::identity(&c, 3), 12));
    }

    #[test]
    fn char_poly_matches_laplace_expansion() {
        let c = ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for n in 1..=4 {
            let m = random_matrix(&c, &mut rng, n);
            let f = char_poly(&m);
            // det(zI − M) at several integer points z
            for z in 0..(n as i64 + 2) {
                let zi = EMatrix::scalar(&c, n, c.e_int(z)).sub(&m);
                assert!(f.eval(&c.e_int(z)).eq_mod(&laplace_det(&zi), 12));
            }
            assert!(m.det().eq_mod(&laplace_det(&m), 10));
        }
    }

    #[test]
    fn char_poly_of_diagonal() {
        let c = ctx();
        let a = c.e_int(4);
        let b = c.e_int(7);
        let f = char_poly(&EMatrix::diag(&c, &[a, b]));
        let g = EPoly::linear(&c, a).mul(&EPoly::linear(&c, b));
        assert!(f.eq_mod(&g, 12));
    }

    #[test]
    fn resultant_examples() {
        let c = ctx();
        let f = EPoly::linear(&c, c.e_int(2));
        let g = EPoly::linear(&c, c.e_zero());
        assert!(resultant(&f, &g).eq_mod(&c.e_int(2), 12));
        let a = c.e_int(5);
        let b = c.e_int(11);
        let r = resultant(&EPoly::linear(&c, a), &EPoly::linear(&c, b));
        assert!(r.eq_mod(&a.sub(&b), 12));
    }

    #[test]
    fn quadratic_root_examples() {
        let c = ctx();
        let t2m1 = EPoly::new(&c, vec![c.e_int(-1), c.e_zero(), c.e_one()]);
        let r = quadratic_roots(&t2m1, false).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.iter().any(|z| z.eq_mod(&c.e_one(), 12)));
        let t2me = EPoly::new(&c, vec![c.e_from_f(c.eps_f()).neg(), c.e_zero(), c.e_one()]);
        assert!(quadratic_roots(&t2me, false).unwrap().is_empty());
        let r = quadratic_roots(&t2me, true).unwrap();
        assert!(r.iter().any(|z| z.eq_mod(&c.omega(), 10)));
        let sq = EPoly::linear(&c, c.e_one()).pow(2);
        assert_eq!(quadratic_roots(&sq, false).unwrap_err(), Error::NotSquarefree);
    }

    #[test]
    fn herm_factor_examples() {
        let c = ctx();
        let b = herm_factor(&EMatrix::identity(&c, 3)).unwrap();
        assert!(b.mul(&b.dagger()).eq_mod(&EMatrix::identity(&c, 3), 10));
        let p1 = EMatrix::diag(&c, &[c.e_from_f(c.pk(1))]);
        assert_eq!(herm_factor(&p1).unwrap_err(), Error::NoFactorization);
        let pp = EMatrix::diag(&c, &[c.e_from_f(c.pk(1)), c.e_from_f(c.pk(1))]);
        let b = herm_factor(&pp).unwrap();
        assert!(b.mul(&b.dagger()).eq_mod(&pp, 10));
    }

    #[test]
    fn inverse_roundtrip() {
        let c = ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for n in 1..=4 {
            let m = random_matrix(&c, &mut rng, n);
            if let Ok(mi) = m.inverse() {
                let k = c.tol() - m.det().val().unwrap_or(0).max(0) - 2;
                assert!(m.mul(&mi).eq_mod(&EMatrix::identity(&c, n), k));
            }
        }
    }
}
