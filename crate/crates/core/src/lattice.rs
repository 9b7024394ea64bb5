//! O_E-lattices in (E^n, Φ): column Hermite normal form, duals and bounded
//! enumeration of self-dual lattices.
//!
//! HNF convention: upper-triangular basis, column `j` has pivot `p^{e_j}` in
//! row `j`, and every entry above a pivot of row `i` is the canonical digit
//! truncation modulo `p^{e_i} O_E`.

use crate::error::{Error, Result};
use crate::matalg::{canonical_form, EMatrix, HermMatrix};
use crate::padic::{EScalar, PrecisionContext};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FormLabel {
    Split,
    NonSplit,
}

impl FormLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            FormLabel::Split => "split",
            FormLabel::NonSplit => "nonsplit",
        }
    }

    pub fn parse(s: &str) -> Result<FormLabel> {
        match s {
            "split" => Ok(FormLabel::Split),
            "nonsplit" => Ok(FormLabel::NonSplit),
            _ => Err(Error::Invalid(format!("unknown form label {s}"))),
        }
    }

    pub fn is_split(&self) -> bool {
        *self == FormLabel::Split
    }
}

/// Nondegenerate Hermitian form on `E^n`.
#[derive(Clone, Debug)]
pub struct HermForm {
    pub n: usize,
    pub gram: HermMatrix,
    pub label: FormLabel,
}

impl HermForm {
    pub fn split(ctx: &PrecisionContext, n: usize) -> HermForm {
        HermForm { n, gram: canonical_form(ctx, n, false), label: FormLabel::Split }
    }

    pub fn nonsplit(ctx: &PrecisionContext, n: usize) -> HermForm {
        HermForm { n, gram: canonical_form(ctx, n, true), label: FormLabel::NonSplit }
    }

    pub fn canonical(ctx: &PrecisionContext, n: usize, label: FormLabel) -> HermForm {
        match label {
            FormLabel::Split => HermForm::split(ctx, n),
            FormLabel::NonSplit => HermForm::nonsplit(ctx, n),
        }
    }

    pub fn from_gram(gram: HermMatrix) -> Result<HermForm> {
        let n = gram.rows;
        if n == 0 {
            return Ok(HermForm { n, gram, label: FormLabel::Split });
        }
        let d = gram.det().val().ok_or(Error::Singular)?;
        let label = if d.rem_euclid(2) == 0 { FormLabel::Split } else { FormLabel::NonSplit };
        Ok(HermForm { n, gram, label })
    }

    /// `⟨u, w⟩ = u† Φ w`.
    pub fn pair(&self, u: &[EScalar], w: &[EScalar]) -> EScalar {
        let fw = self.gram.mul_vec(w);
        let mut acc = self.gram.ctx.e_zero();
        for (a, b) in u.iter().zip(&fw) {
            acc = acc.add(&a.conj().mul(b));
        }
        acc
    }

    pub fn is_standard(&self) -> bool {
        let ctx = self.gram.ctx;
        self.gram.eq_mod(&canonical_form(&ctx, self.n, self.label == FormLabel::NonSplit), ctx.n as i32)
    }
}

/// Full-rank O_E-lattice in canonical HNF.
#[derive(Clone, Debug)]
pub struct Lattice {
    pub n: usize,
    pub basis: EMatrix,
    /// Least `k ≥ 0` with `p^k · basis` integral.
    pub denom: i32,
}

impl PartialEq for Lattice {
    fn eq(&self, o: &Lattice) -> bool {
        self.key() == o.key()
    }
}

impl Eq for Lattice {}

impl std::hash::Hash for Lattice {
    fn hash<H: std::hash::Hasher>(&self, h: &mut H) {
        self.key().hash(h)
    }
}

fn entry_key(z: &EScalar) -> (Option<i32>, u64, Option<i32>, u64) {
    (z.a.val(), if z.a.is_zero() { 0 } else { z.a.unit_residue() }, z.b.val(), if z.b.is_zero() { 0 } else { z.b.unit_residue() })
}

impl Lattice {
    pub fn standard(ctx: &PrecisionContext, n: usize) -> Lattice {
        Lattice { n, basis: EMatrix::identity(ctx, n), denom: 0 }
    }

    /// Canonical key: exact entries of the stored basis.
    pub fn key(&self) -> Vec<(Option<i32>, u64, Option<i32>, u64)> {
        self.basis.entries().iter().map(entry_key).collect()
    }

    /// Pivot exponents `e_j`.
    pub fn exponents(&self) -> Vec<i32> {
        (0..self.n).map(|j| self.basis[(j, j)].val().unwrap()).collect()
    }

    /// Membership by back-substitution. Indeterminate digits count as failure.
    pub fn contains(&self, v: &[EScalar]) -> bool {
        self.try_contains(v).unwrap_or(false)
    }

    pub fn try_contains(&self, v: &[EScalar]) -> Result<bool> {
        let mut w = v.to_vec();
        for r in (0..self.n).rev() {
            let e = self.basis[(r, r)].a.val().unwrap();
            let x = w[r];
            if x.abs_prec() < e {
                return Err(Error::PrecisionExhausted("membership digit unknown"));
            }
            if x.val_or_abs() >= x.abs_prec() {
                continue;
            }
            let c = x.shift(-e);
            if !c.is_integral() {
                return Ok(false);
            }
            for (i, wi) in w.iter_mut().enumerate().take(r) {
                *wi = wi.sub(&c.mul(&self.basis[(i, r)]));
            }
        }
        Ok(true)
    }

    /// `M(L) ⊆ L`.
    pub fn stabilized_by(&self, m: &EMatrix) -> bool {
        let img = m.mul(&self.basis);
        (0..self.n).all(|j| self.contains(&img.col(j)))
    }

    /// `M(self) ⊆ other` for `M: E^n → E^{n'}`.
    pub fn maps_into(&self, m: &EMatrix, other: &Lattice) -> bool {
        let img = m.mul(&self.basis);
        (0..img.cols).all(|j| other.contains(&img.col(j)))
    }

    /// `L ⊆ p^{−w} Λ` and `p^w Λ ⊆ L`.
    pub fn in_window(&self, w: i32) -> bool {
        if self.basis.min_val().is_some_and(|v| v < -w) {
            return false;
        }
        let ctx = self.basis.ctx;
        (0..self.n).all(|k| {
            let mut v = vec![ctx.e_zero(); self.n];
            v[k] = ctx.e_from_f(ctx.pk(w));
            self.contains(&v)
        })
    }

    pub fn to_json(&self) -> Value {
        json!({"n": self.n, "denom": self.denom, "basis": self.basis.to_json()})
    }

    pub fn from_json(ctx: &PrecisionContext, v: &Value) -> Result<Lattice> {
        let basis = EMatrix::from_json(ctx, v.get("basis").ok_or_else(|| Error::Invalid("lattice basis".into()))?)?;
        hnf(&basis)
    }
}

/// Canonical HNF of the O_E-span of the columns of `gens` (`n × m`, `m ≥ n`).
pub fn hnf(gens: &EMatrix) -> Result<Lattice> {
    let ctx = gens.ctx;
    let n = gens.rows;
    let mut w = gens.clone();
    let mut active: Vec<usize> = (0..gens.cols).collect();
    let mut pivots = vec![0usize; n];
    for r in (0..n).rev() {
        let (v, pc) = active
            .iter()
            .filter_map(|&c| w[(r, c)].val().map(|v| (v, c)))
            .min()
            .ok_or(Error::RankDeficient)?;
        let unit = w[(r, pc)].shift(-v).inv()?;
        for i in 0..n {
            w[(i, pc)] = w[(i, pc)].mul(&unit);
        }
        w[(r, pc)] = ctx.e_from_f(ctx.pk(v));
        for &c in &active {
            if c == pc {
                continue;
            }
            let f = w[(r, c)].shift(-v);
            if !f.is_zero() {
                for i in 0..r {
                    w[(i, c)] = w[(i, c)].sub(&f.mul(&w[(i, pc)]));
                }
            }
            w[(r, c)] = ctx.e_zero();
        }
        active.retain(|&c| c != pc);
        pivots[r] = pc;
    }
    let mut b = EMatrix::from_fn(&ctx, n, n, |i, j| w[(i, pivots[j])]);
    for j in 0..n {
        for i in (0..j).rev() {
            let e = b[(i, i)].a.val().unwrap();
            let x = b[(i, j)];
            let t = x.trunc_below(e)?;
            let q = x.sub(&t).shift(-e);
            if !q.is_zero() {
                for k in 0..i {
                    b[(k, j)] = b[(k, j)].sub(&q.mul(&b[(k, i)]));
                }
            }
            b[(i, j)] = t;
        }
        for i in j + 1..n {
            b[(i, j)] = ctx.e_zero();
        }
    }
    let denom = (-b.min_val().unwrap_or(0)).max(0);
    Ok(Lattice { n, basis: b, denom })
}

/// `L^∨ = {v : ⟨v, L⟩ ⊆ O_E}`, basis `Φ⁻¹ B^{−†}`.
pub fn dual(l: &Lattice, form: &HermForm) -> Result<Lattice> {
    let g = form.gram.inverse()?.mul(&l.basis.dagger().inverse()?);
    hnf(&g)
}

pub fn is_self_dual(l: &Lattice, form: &HermForm) -> bool {
    dual(l, form).map(|d| d == *l).unwrap_or(false)
}

pub fn stabilizes(m: &EMatrix, l: &Lattice) -> bool {
    l.stabilized_by(m)
}

pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Fractional digits of `z` below position `t ≤ 0` all vanish.
fn integral_above(z: &EScalar, t: i32) -> bool {
    z.a.val_or_abs() >= t && z.b.val_or_abs() >= t
}

struct Search<'a> {
    ctx: PrecisionContext,
    n: usize,
    w: i32,
    gram: &'a EMatrix,
    e: Vec<i32>,
    digits: Vec<EScalar>,
    nodes: u64,
    budget: u64,
    out: Vec<Lattice>,
}

impl Search<'_> {
    fn gram_ok(&self, b: &EMatrix, t: i32) -> bool {
        let g = b.dagger().mul(self.gram).mul(b);
        for i in 0..self.n {
            for j in i..self.n {
                if !integral_above(&g[(i, j)], t) {
                    return false;
                }
            }
        }
        true
    }

    fn run(&mut self, b: &mut EMatrix, k: i32, det_target: i32) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::WindowTooLarge(self.budget));
        }
        let maxe = *self.e.iter().max().unwrap();
        let slots: Vec<(usize, usize)> = (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .filter(|&(i, _)| self.e[i] > k)
            .collect();
        if k >= maxe || slots.is_empty() {
            if self.gram_ok(b, 0) {
                let g = b.dagger().mul(self.gram).mul(b);
                if g.det().val() == Some(det_target) {
                    let l = Lattice { n: self.n, basis: b.clone(), denom: (-b.min_val().unwrap_or(0)).max(0) };
                    if l.in_window(self.w) {
                        self.out.push(l);
                    }
                }
            }
            return Ok(());
        }
        let q = self.digits.len();
        let total = q.pow(slots.len() as u32);
        let saved: Vec<EScalar> = slots.iter().map(|&(i, j)| b[(i, j)]).collect();
        let pk = self.ctx.e_from_f(self.ctx.pk(k));
        for code in 0..total {
            let mut c = code;
            for (s, &(i, j)) in slots.iter().enumerate() {
                let d = self.digits[c % q];
                c /= q;
                b[(i, j)] = saved[s].add(&d.mul(&pk));
            }
            let t = (k + 1 - self.w).min(0);
            if self.gram_ok(b, t) {
                self.run(b, k + 1, det_target)?;
            }
        }
        for (s, &(i, j)) in slots.iter().enumerate() {
            b[(i, j)] = saved[s];
        }
        Ok(())
    }
}

fn exponent_vectors(n: usize, w: i32, sum: i32) -> Vec<Vec<i32>> {
    let mut out = Vec::new();
    let mut cur = vec![-w; n];
    loop {
        if cur.iter().sum::<i32>() == sum {
            out.push(cur.clone());
        }
        let mut i = 0;
        loop {
            if i == n {
                return out;
            }
            if cur[i] < w {
                cur[i] += 1;
                break;
            }
            cur[i] = -w;
            i += 1;
        }
    }
}

/// Self-dual lattices `L` with `p^W Λ ⊆ L ⊆ p^{−W} Λ`, by a digit-by-digit
/// search over HNF entries pruned by integrality of the truncated Gram matrix.
pub fn enumerate_self_dual_uncached(form: &HermForm, w: u32, budget: u64) -> Result<Vec<Lattice>> {
    let ctx = form.gram.ctx;
    let n = form.n;
    if form.gram.min_val().is_some_and(|v| v < 0) {
        return Err(Error::Invalid("enumeration needs an integral Gram matrix".into()));
    }
    let d = form.gram.det().val().ok_or(Error::Singular)?;
    if d.rem_euclid(2) != 0 {
        return Ok(vec![]);
    }
    let w = w as i32;
    let mut s = Search {
        ctx,
        n,
        w,
        gram: &form.gram,
        e: vec![],
        digits: ctx.residue_field_e(),
        nodes: 0,
        budget,
        out: vec![],
    };
    // det(B†ΦB) = p^{2Σe} det Φ must be a unit
    for e in exponent_vectors(n, w, -d / 2) {
        let mut b = EMatrix::zeros(&ctx, n, n);
        for (i, ei) in e.iter().enumerate() {
            b[(i, i)] = ctx.e_from_f(ctx.pk(*ei));
        }
        s.e = e;
        let k0 = -w;
        s.run(&mut b, k0, 0)?;
    }
    Ok(s.out)
}

type CacheKey = (u32, u32, String, u32);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<Vec<Lattice>>>> {
    static C: OnceLock<Mutex<HashMap<CacheKey, Arc<Vec<Lattice>>>>> = OnceLock::new();
    C.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached [`enumerate_self_dual_uncached`], optionally persisted as
/// content-addressed JSON under `dir`.
pub fn enumerate_self_dual_cached(form: &HermForm, w: u32, budget: u64, dir: Option<&Path>) -> Result<Arc<Vec<Lattice>>> {
    let ctx = form.gram.ctx;
    let key: CacheKey = (ctx.p, ctx.n, form.gram.to_json().to_string(), w);
    if let Some(v) = cache().lock().unwrap().get(&key) {
        return Ok(v.clone());
    }
    let file = dir.map(|d| {
        let mut h = Sha256::new();
        h.update(format!("{}|{}|{}|{}", key.0, key.1, key.2, key.3));
        let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        d.join(format!("selfdual-{hex}.json"))
    });
    if let Some(f) = &file {
        if let Ok(text) = std::fs::read_to_string(f) {
            if let Ok(Value::Array(items)) = serde_json::from_str::<Value>(&text) {
                if let Ok(ls) = items.iter().map(|v| Lattice::from_json(&ctx, v)).collect::<Result<Vec<_>>>() {
                    let arc = Arc::new(ls);
                    cache().lock().unwrap().insert(key, arc.clone());
                    return Ok(arc);
                }
            }
        }
    }
    let ls = enumerate_self_dual_uncached(form, w, budget)?;
    if let Some(f) = &file {
        let _ = std::fs::create_dir_all(f.parent().unwrap());
        let blob = Value::Array(ls.iter().map(Lattice::to_json).collect());
        let _ = std::fs::write(f, blob.to_string());
    }
    let arc = Arc::new(ls);
    cache().lock().unwrap().insert(key, arc.clone());
    Ok(arc)
}

pub fn enumerate_self_dual(form: &HermForm, w: u32) -> Result<Arc<Vec<Lattice>>> {
    enumerate_self_dual_cached(form, w, DEFAULT_BUDGET, None)
}

/// Exhaustive scan of all HNF bases with pivots in `[−W, W]` and entries in
/// `p^{−W} O_E`, filtered by [`is_self_dual`] and the window. Test oracle.
pub fn brute_force_self_dual(form: &HermForm, w: u32) -> Vec<Lattice> {
    let ctx = form.gram.ctx;
    let n = form.n;
    let w = w as i32;
    let digits = ctx.residue_field_e();
    let mut out = Vec::new();
    for e in all_exponents(n, w) {
        let slots: Vec<(usize, usize, i32)> =
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| (i, j, (e[i] + w).max(0))).collect();
        let sizes: Vec<u64> = slots.iter().map(|s| (digits.len() as u64).pow(s.2 as u32)).collect();
        let total: u64 = sizes.iter().product();
        for code in 0..total {
            let mut b = EMatrix::zeros(&ctx, n, n);
            for (i, ei) in e.iter().enumerate() {
                b[(i, i)] = ctx.e_from_f(ctx.pk(*ei));
            }
            let mut c = code;
            for (s, &(i, j, len)) in slots.iter().enumerate() {
                let mut idx = c % sizes[s];
                c /= sizes[s];
                let mut z = ctx.e_zero();
                for pos in 0..len {
                    let d = digits[(idx % digits.len() as u64) as usize];
                    idx /= digits.len() as u64;
                    z = z.add(&d.mul(&ctx.e_from_f(ctx.pk(-w + pos))));
                }
                b[(i, j)] = z;
            }
            let l = Lattice { n, basis: b.clone(), denom: (-b.min_val().unwrap_or(0)).max(0) };
            if l.in_window(w) && is_self_dual(&l, form) {
                out.push(l);
            }
        }
    }
    out
}

fn all_exponents(n: usize, w: i32) -> Vec<Vec<i32>> {
    let mut out = Vec::new();
    let mut cur = vec![-w; n];
    loop {
        out.push(cur.clone());
        let mut i = 0;
        loop {
            if i == n {
                return out;
            }
            if cur[i] < w {
                cur[i] += 1;
                break;
            }
            cur[i] = -w;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashSet;

    fn ctx(p: u32) -> PrecisionContext {
        PrecisionContext::new(p, 12).unwrap()
    }

    #[test]
    fn hnf_examples() {
        let c = ctx(3);
        let l = hnf(&EMatrix::identity(&c, 2)).unwrap();
        assert_eq!(l, Lattice::standard(&c, 2));
        let pl = hnf(&EMatrix::identity(&c, 2).shift(1)).unwrap();
        assert_eq!(pl.exponents(), vec![1, 1]);
        let z = EMatrix::zeros(&c, 2, 2);
        assert_eq!(hnf(&z).unwrap_err(), Error::RankDeficient);
    }

    #[test]
    fn hnf_unimodular_invariance() {
        let c = ctx(3);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let base = hnf(&EMatrix::from_rows(
            &c,
            vec![vec![c.e_from_f(c.pk(-1)), c.e_int(2)], vec![c.e_zero(), c.e_from_f(c.pk(1))]],
        ))
        .unwrap();
        for _ in 0..50 {
            // random element of GL_2(O_E): upper × lower unipotent × diagonal units
            let u = EMatrix::from_rows(&c, vec![vec![c.random_unit_e(&mut rng), c.random_e(&mut rng, 0)], vec![c.e_zero(), c.random_unit_e(&mut rng)]]);
            let lo = EMatrix::from_rows(&c, vec![vec![c.e_one(), c.e_zero()], vec![c.random_e(&mut rng, 0), c.e_one()]]);
            let g = base.basis.mul(&u).mul(&lo);
            assert_eq!(hnf(&g).unwrap(), base);
        }
    }

    #[test]
    fn dual_examples() {
        let c = ctx(3);
        let f = HermForm::split(&c, 2);
        let lam = Lattice::standard(&c, 2);
        assert_eq!(dual(&lam, &f).unwrap(), lam);
        let pl = hnf(&EMatrix::identity(&c, 2).shift(1)).unwrap();
        assert_eq!(dual(&pl, &f).unwrap().exponents(), vec![-1, -1]);
        assert!(is_self_dual(&lam, &f));
        assert!(!is_self_dual(&pl, &f));
    }

    #[test]
    fn rank_one_window() {
        let c = ctx(3);
        let f = HermForm::split(&c, 1);
        for w in 0..3 {
            let ls = enumerate_self_dual_uncached(&f, w, DEFAULT_BUDGET).unwrap();
            assert_eq!(ls, vec![Lattice::standard(&c, 1)]);
        }
    }

    #[test]
    fn rank_two_matches_brute_force() {
        for p in [3u32, 5] {
            let c = ctx(p);
            let f = HermForm::split(&c, 2);
            let fast: HashSet<Lattice> = enumerate_self_dual_uncached(&f, 1, DEFAULT_BUDGET).unwrap().into_iter().collect();
            let slow: HashSet<Lattice> = brute_force_self_dual(&f, 1).into_iter().collect();
            assert_eq!(fast, slow);
            let q = p as usize;
            assert_eq!(fast.len(), 1 + (q + 1) * q);
        }
    }

    #[test]
    fn nonsplit_has_no_self_dual_lattice() {
        let c = ctx(3);
        let f = HermForm::nonsplit(&c, 2);
        assert!(enumerate_self_dual_uncached(&f, 1, DEFAULT_BUDGET).unwrap().is_empty());
        assert!(brute_force_self_dual(&f, 1).is_empty());
    }

    #[test]
    fn stabilizes_examples() {
        let c = ctx(3);
        let lam = Lattice::standard(&c, 2);
        assert!(stabilizes(&EMatrix::identity(&c, 2), &lam));
        assert!(!stabilizes(&EMatrix::identity(&c, 2).shift(-1), &lam));
    }
}
