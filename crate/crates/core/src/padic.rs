//! Capped-relative-precision arithmetic in F = Q_p and E = F(ω), ω² = ε.
//!
//! A nonzero [`FScalar`] is `p^v · u` where `u` is a unit known modulo
//! `p^prec`, `1 ≤ prec ≤ N`. Zero carries the absolute precision it is known
//! to (`O(p^k)`); constructor zeros are exact.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fmt;

/// Absolute precision marker for an exact zero.
pub const EXACT: i32 = i32::MAX / 4;

const MAX_P: usize = 1024;

fn least_nonresidue(p: u64) -> u64 {
    if p < 3 {
        return 0;
    }
    let mut e = 2;
    while e < p {
        // Euler criterion e^((p-1)/2) ≡ -1
        let mut acc = 1u64;
        let mut b = e % p;
        let mut k = (p - 1) / 2;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * b % p;
            }
            b = b * b % p;
            k >>= 1;
        }
        if acc == p - 1 {
            return e;
        }
        e += 1;
    }
    0
}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

#[inline]
fn pw(p: u32, k: u32) -> u64 {
    (p as u64).pow(k)
}

#[inline]
fn mulmod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn inv_mod(a: u64, m: u64) -> u64 {
    let (mut r0, mut r1) = (m as i128, (a % m) as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    debug_assert_eq!(r0, 1);
    t0.rem_euclid(m as i128) as u64
}

/// Working prime, precision cap and the non-residue ε defining E.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecisionContext {
    pub p: u32,
    #[serde(rename = "N")]
    pub n: u32,
    pub eps: u32,
    #[serde(skip, default = "default_slack")]
    pub slack: u32,
}

fn default_slack() -> u32 {
    2
}

impl PrecisionContext {
    pub fn new(p: u32, n: u32) -> Result<Self> {
        if p < 3 || p as usize >= MAX_P || !is_prime(p as u64) {
            return Err(Error::Invalid(format!("p = {p} must be an odd prime below {MAX_P}")));
        }
        if n < 8 {
            return Err(Error::Invalid(format!("precision N = {n} must be at least 8")));
        }
        if (n as f64) * (p as f64).log2() > 62.0 {
            return Err(Error::Invalid(format!("p^N does not fit in 62 bits for p = {p}, N = {n}")));
        }
        Ok(PrecisionContext { p, n, eps: least_nonresidue(p as u64) as u32, slack: 2 })
    }

    /// Digits compared by equality assertions: `N − s`.
    pub fn tol(&self) -> i32 {
        (self.n - self.slack) as i32
    }

    pub fn zero(&self) -> FScalar {
        FScalar::zero_with(self.p, self.n, EXACT)
    }

    pub fn one(&self) -> FScalar {
        self.int(1)
    }

    pub fn int(&self, x: i64) -> FScalar {
        FScalar::from_int(self.p, self.n, x as i128)
    }

    /// `x / y` for small integers, `y ≠ 0`.
    pub fn ratio(&self, x: i64, y: i64) -> FScalar {
        self.int(x).div(&self.int(y)).expect("nonzero denominator")
    }

    /// `p^k`.
    pub fn pk(&self, k: i32) -> FScalar {
        FScalar { p: self.p, cap: self.n, v: k, prec: self.n, u: 1 }
    }

    pub fn eps_f(&self) -> FScalar {
        self.int(self.eps as i64)
    }

    pub fn modulus(&self) -> u64 {
        pw(self.p, self.n)
    }

    /// Uniform element of `p^v O_F` to full precision.
    pub fn random_f<R: Rng + ?Sized>(&self, rng: &mut R, v: i32) -> FScalar {
        let m = self.modulus();
        let u = rng.gen_range(0..m);
        self.from_residue(u, v)
    }

    /// Uniform unit of `O_F`.
    pub fn random_unit_f<R: Rng + ?Sized>(&self, rng: &mut R) -> FScalar {
        loop {
            let u = rng.gen_range(0..self.modulus());
            if u % self.p as u64 != 0 {
                return FScalar { p: self.p, cap: self.n, v: 0, prec: self.n, u };
            }
        }
    }

    pub fn random_e<R: Rng + ?Sized>(&self, rng: &mut R, v: i32) -> EScalar {
        EScalar::new(self.random_f(rng, v), self.random_f(rng, v), self.eps)
    }

    pub fn random_unit_e<R: Rng + ?Sized>(&self, rng: &mut R) -> EScalar {
        loop {
            let z = self.random_e(rng, 0);
            if z.val() == Some(0) {
                return z;
            }
        }
    }

    /// `p^v · r` where `r` is an integer residue mod `p^N` (not necessarily a unit).
    pub fn from_residue(&self, r: u64, v: i32) -> FScalar {
        let m = self.modulus();
        let r = r % m;
        if r == 0 {
            return FScalar::zero_with(self.p, self.n, v + self.n as i32);
        }
        let mut k = 0u32;
        let mut s = r;
        while s.is_multiple_of(self.p as u64) {
            s /= self.p as u64;
            k += 1;
        }
        FScalar { p: self.p, cap: self.n, v: v + k as i32, prec: self.n - k, u: s }
    }

    pub fn e(&self, a: FScalar, b: FScalar) -> EScalar {
        EScalar::new(a, b, self.eps)
    }

    pub fn e_zero(&self) -> EScalar {
        self.e(self.zero(), self.zero())
    }

    pub fn e_one(&self) -> EScalar {
        self.e(self.one(), self.zero())
    }

    pub fn e_int(&self, x: i64) -> EScalar {
        self.e(self.int(x), self.zero())
    }

    pub fn omega(&self) -> EScalar {
        self.e(self.zero(), self.one())
    }

    pub fn e_from_f(&self, a: FScalar) -> EScalar {
        self.e(a, self.zero())
    }

    /// Elements of the residue field `k_E = F_{p²}` as Teichmüller-free digit pairs.
    pub fn residue_field_e(&self) -> Vec<EScalar> {
        let mut out = Vec::with_capacity((self.p * self.p) as usize);
        for a in 0..self.p as i64 {
            for b in 0..self.p as i64 {
                out.push(self.e(self.int(a), self.int(b)));
            }
        }
        out
    }
}

/// Element of F = Q_p with capped relative precision.
#[derive(Clone, Copy)]
pub struct FScalar {
    p: u32,
    cap: u32,
    /// Valuation; for zero, the absolute precision.
    v: i32,
    /// Relative precision; zero iff the value is zero.
    prec: u32,
    u: u64,
}

impl FScalar {
    fn zero_with(p: u32, cap: u32, abs: i32) -> FScalar {
        FScalar { p, cap, v: abs.min(EXACT), prec: 0, u: 0 }
    }

    fn from_int(p: u32, cap: u32, x: i128) -> FScalar {
        if x == 0 {
            return FScalar::zero_with(p, cap, EXACT);
        }
        let mut k = 0;
        let mut s = x;
        while s % p as i128 == 0 {
            s /= p as i128;
            k += 1;
        }
        let m = pw(p, cap) as i128;
        FScalar { p, cap, v: k, prec: cap, u: s.rem_euclid(m) as u64 }
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn is_zero(&self) -> bool {
        self.prec == 0
    }

    /// Valuation, `None` for zero.
    pub fn val(&self) -> Option<i32> {
        if self.is_zero() {
            None
        } else {
            Some(self.v)
        }
    }

    /// Valuation with zero mapped to its absolute precision.
    pub fn val_or_abs(&self) -> i32 {
        self.v
    }

    pub fn rel_prec(&self) -> u32 {
        self.prec
    }

    pub fn abs_prec(&self) -> i32 {
        if self.is_zero() {
            self.v
        } else {
            self.v + self.prec as i32
        }
    }

    pub fn unit_residue(&self) -> u64 {
        self.u
    }

    fn m(&self) -> u64 {
        pw(self.p, self.prec)
    }

    fn zero_like(&self, abs: i32) -> FScalar {
        FScalar::zero_with(self.p, self.cap, abs)
    }

    pub fn is_integral(&self) -> bool {
        self.is_zero() || self.v >= 0
    }

    pub fn is_unit(&self) -> bool {
        !self.is_zero() && self.v == 0
    }

    /// Residue mod p of an integral element.
    pub fn residue(&self) -> u64 {
        if self.is_zero() || self.v > 0 {
            0
        } else {
            debug_assert!(self.v == 0);
            self.u % self.p as u64
        }
    }

    /// `η(x) = (−1)^{val x}`.
    pub fn eta(&self) -> Result<i32> {
        match self.val() {
            None => Err(Error::ZeroArgument),
            Some(v) => Ok(if v.rem_euclid(2) == 0 { 1 } else { -1 }),
        }
    }

    /// Multiply by `p^k`.
    pub fn shift(&self, k: i32) -> FScalar {
        let mut r = *self;
        if !(self.is_zero() && self.v >= EXACT) {
            r.v = (r.v + k).min(EXACT);
        }
        r
    }

    fn with_prec(&self, prec: u32) -> FScalar {
        debug_assert!(prec >= 1 && prec <= self.prec);
        FScalar { prec, u: self.u % pw(self.p, prec), ..*self }
    }

    pub fn neg(&self) -> FScalar {
        if self.is_zero() {
            return *self;
        }
        let m = self.m();
        FScalar { u: (m - self.u) % m, ..*self }
    }

    pub fn add(&self, o: &FScalar) -> FScalar {
        debug_assert_eq!(self.p, o.p);
        if self.is_zero() {
            if o.is_zero() {
                return self.zero_like(self.v.min(o.v));
            }
            return if self.v <= o.v {
                self.zero_like(self.v)
            } else if self.v >= o.abs_prec() {
                *o
            } else {
                o.with_prec((self.v - o.v) as u32)
            };
        }
        if o.is_zero() {
            return o.add(self);
        }
        let (lo, hi) = if self.v <= o.v { (self, o) } else { (o, self) };
        let a = lo.abs_prec().min(hi.abs_prec());
        let r = (a - lo.v) as u32;
        let d = (hi.v - lo.v) as u32;
        if d >= r {
            return lo.with_prec(r);
        }
        let m = pw(lo.p, r);
        let hu = hi.u % pw(lo.p, r - d);
        let s = ((lo.u % m) as u128 + pw(lo.p, d) as u128 * hu as u128) % m as u128;
        let mut s = s as u64;
        if s == 0 {
            return lo.zero_like(a);
        }
        let mut k = 0u32;
        while s.is_multiple_of(lo.p as u64) {
            s /= lo.p as u64;
            k += 1;
        }
        FScalar { p: lo.p, cap: lo.cap, v: lo.v + k as i32, prec: r - k, u: s }
    }

    pub fn sub(&self, o: &FScalar) -> FScalar {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &FScalar) -> FScalar {
        if self.is_zero() || o.is_zero() {
            let a = match (self.is_zero(), o.is_zero()) {
                (true, true) => self.v.saturating_add(o.v),
                (true, false) => self.v.saturating_add(o.v),
                (false, true) => o.v.saturating_add(self.v),
                _ => unreachable!(),
            };
            return self.zero_like(a.min(EXACT));
        }
        let prec = self.prec.min(o.prec);
        let m = pw(self.p, prec);
        FScalar { p: self.p, cap: self.cap, v: self.v + o.v, prec, u: mulmod(self.u % m, o.u % m, m) }
    }

    pub fn inv(&self) -> Result<FScalar> {
        if self.is_zero() {
            return Err(Error::ZeroArgument);
        }
        Ok(FScalar { v: -self.v, u: inv_mod(self.u, self.m()), ..*self })
    }

    pub fn div(&self, o: &FScalar) -> Result<FScalar> {
        Ok(self.mul(&o.inv()?))
    }

    pub fn pow(&self, k: i64) -> Result<FScalar> {
        let base = if k < 0 { self.inv()? } else { *self };
        let mut e = k.unsigned_abs();
        let mut acc = FScalar::from_int(self.p, self.cap, 1);
        let mut b = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&b);
            }
            b = b.mul(&b);
            e >>= 1;
        }
        Ok(acc)
    }

    /// `val(self − o) ≥ k`, and both operands are known to absolute precision ≥ k.
    pub fn eq_mod(&self, o: &FScalar, k: i32) -> bool {
        if self.abs_prec() < k || o.abs_prec() < k {
            return false;
        }
        self.sub(o).val_or_abs() >= k
    }

    /// Digit of `p^k` in the expansion; `None` past the known precision.
    pub fn digit(&self, k: i32) -> Option<u64> {
        if k >= self.abs_prec() {
            return None;
        }
        if self.is_zero() || k < self.v {
            return Some(0);
        }
        Some((self.u / pw(self.p, (k - self.v) as u32)) % self.p as u64)
    }

    /// Canonical representative of `self mod p^e`: the expansion with digits at
    /// positions `≥ e` dropped. The result is exact.
    pub fn trunc_below(&self, e: i32) -> Result<FScalar> {
        if self.abs_prec() < e {
            return Err(Error::PrecisionExhausted("truncation past known digits"));
        }
        if self.is_zero() || self.v >= e {
            return Ok(self.zero_like(EXACT));
        }
        let keep = (e - self.v) as u32;
        Ok(FScalar { prec: self.cap, u: self.u % pw(self.p, keep), ..*self })
    }

    /// Part of the expansion at positions `≥ e`.
    pub fn trunc_above(&self, e: i32) -> Result<FScalar> {
        Ok(self.sub(&self.trunc_below(e)?))
    }

    /// Integer representative of an integral value mod `p^k`.
    pub fn residue_mod(&self, k: u32) -> Result<u64> {
        if self.abs_prec() < k as i32 {
            return Err(Error::PrecisionExhausted("residue past known digits"));
        }
        if self.is_zero() || self.v >= k as i32 {
            return Ok(0);
        }
        if self.v < 0 {
            return Err(Error::NotIntegral);
        }
        let m = pw(self.p, k);
        Ok(mulmod(pw(self.p, self.v as u32), self.u, m))
    }

    /// Square root in F, `None` for non-squares.
    pub fn sqrt(&self) -> Result<Option<FScalar>> {
        if self.is_zero() {
            return Err(Error::ZeroArgument);
        }
        if self.prec < 2 {
            return Err(Error::PrecisionExhausted("square root needs two digits"));
        }
        if self.v.rem_euclid(2) != 0 {
            return Ok(None);
        }
        let p = self.p as u64;
        let u0 = self.u % p;
        let Some(r0) = (1..p).find(|r| r * r % p == u0) else {
            return Ok(None);
        };
        let m = self.m();
        let mut r = r0;
        let mut k = 1u32;
        while k < self.prec {
            // r ← r − (r² − u)/(2r)
            let f = (mulmod(r, r, m) + m - self.u) % m;
            let step = mulmod(f, inv_mod(mulmod(2, r, m), m), m);
            r = (r + m - step) % m;
            k *= 2;
        }
        Ok(Some(FScalar { v: self.v / 2, u: r, ..*self }))
    }

    /// Little-endian base-p digits of the unit part.
    pub fn digits(&self) -> String {
        let mut s = String::new();
        let mut u = self.u;
        for _ in 0..self.prec {
            s.push(std::char::from_digit((u % self.p as u64) as u32, 36).unwrap());
            u /= self.p as u64;
        }
        s
    }

    pub fn to_json(&self) -> Value {
        if self.is_zero() {
            json!({"v": Value::Null, "u": ""})
        } else {
            json!({"v": self.v, "u": self.digits()})
        }
    }

    pub fn from_json(ctx: &PrecisionContext, v: &Value) -> Result<FScalar> {
        let bad = || Error::Invalid(format!("malformed FScalar {v}"));
        let digits = v.get("u").and_then(Value::as_str).ok_or_else(bad)?;
        match v.get("v") {
            Some(Value::Null) => Ok(ctx.zero()),
            Some(val) => {
                let val = val.as_i64().ok_or_else(bad)? as i32;
                let mut u = 0u64;
                for c in digits.chars().rev() {
                    let d = c.to_digit(36).ok_or_else(bad)? as u64;
                    if d >= ctx.p as u64 {
                        return Err(bad());
                    }
                    u = u * ctx.p as u64 + d;
                }
                let prec = digits.len() as u32;
                if prec == 0 || prec > ctx.n || u.is_multiple_of(ctx.p as u64) {
                    return Err(bad());
                }
                Ok(FScalar { p: ctx.p, cap: ctx.n, v: val, prec, u })
            }
            None => Err(bad()),
        }
    }
}

impl fmt::Debug for FScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            if self.v >= EXACT {
                write!(f, "0")
            } else {
                write!(f, "O({}^{})", self.p, self.v)
            }
        } else {
            write!(f, "{}^{}*[{}]", self.p, self.v, self.digits())
        }
    }
}

impl fmt::Display for FScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Element `a + bω` of E.
#[derive(Clone, Copy)]
pub struct EScalar {
    pub a: FScalar,
    pub b: FScalar,
    eps: u32,
}

impl EScalar {
    pub fn new(a: FScalar, b: FScalar, eps: u32) -> EScalar {
        EScalar { a, b, eps }
    }

    pub fn eps(&self) -> u32 {
        self.eps
    }

    fn epsf(&self) -> FScalar {
        FScalar::from_int(self.a.p, self.a.cap, self.eps as i128)
    }

    pub fn from_f(a: FScalar, eps: u32) -> EScalar {
        let z = a.zero_like(EXACT);
        EScalar { a, b: z, eps }
    }

    pub fn p(&self) -> u32 {
        self.a.p
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn val(&self) -> Option<i32> {
        match (self.a.val(), self.b.val()) {
            (None, None) => None,
            (Some(x), None) => Some(x.min(self.b.v)),
            (None, Some(y)) => Some(y.min(self.a.v)),
            (Some(x), Some(y)) => Some(x.min(y)),
        }
    }

    pub fn val_or_abs(&self) -> i32 {
        self.a.val_or_abs().min(self.b.val_or_abs())
    }

    pub fn abs_prec(&self) -> i32 {
        self.a.abs_prec().min(self.b.abs_prec())
    }

    pub fn is_integral(&self) -> bool {
        self.a.is_integral() && self.b.is_integral()
    }

    pub fn is_unit(&self) -> bool {
        self.val() == Some(0)
    }

    pub fn in_f(&self, k: i32) -> bool {
        self.b.val_or_abs() >= k
    }

    pub fn conj(&self) -> EScalar {
        EScalar { a: self.a, b: self.b.neg(), eps: self.eps }
    }

    pub fn norm(&self) -> FScalar {
        self.a.mul(&self.a).sub(&self.epsf().mul(&self.b.mul(&self.b)))
    }

    pub fn trace(&self) -> FScalar {
        self.a.add(&self.a)
    }

    pub fn neg(&self) -> EScalar {
        EScalar { a: self.a.neg(), b: self.b.neg(), eps: self.eps }
    }

    pub fn add(&self, o: &EScalar) -> EScalar {
        EScalar { a: self.a.add(&o.a), b: self.b.add(&o.b), eps: self.eps }
    }

    pub fn sub(&self, o: &EScalar) -> EScalar {
        EScalar { a: self.a.sub(&o.a), b: self.b.sub(&o.b), eps: self.eps }
    }

    pub fn mul(&self, o: &EScalar) -> EScalar {
        let a = self.a.mul(&o.a).add(&self.epsf().mul(&self.b.mul(&o.b)));
        let b = self.a.mul(&o.b).add(&self.b.mul(&o.a));
        EScalar { a, b, eps: self.eps }
    }

    pub fn scale(&self, f: &FScalar) -> EScalar {
        EScalar { a: self.a.mul(f), b: self.b.mul(f), eps: self.eps }
    }

    pub fn shift(&self, k: i32) -> EScalar {
        EScalar { a: self.a.shift(k), b: self.b.shift(k), eps: self.eps }
    }

    pub fn inv(&self) -> Result<EScalar> {
        if self.is_zero() {
            return Err(Error::ZeroArgument);
        }
        let n = self.norm().inv()?;
        Ok(self.conj().scale(&n))
    }

    pub fn div(&self, o: &EScalar) -> Result<EScalar> {
        Ok(self.mul(&o.inv()?))
    }

    pub fn pow(&self, k: i64) -> Result<EScalar> {
        let base = if k < 0 { self.inv()? } else { *self };
        let one = FScalar::from_int(self.a.p, self.a.cap, 1);
        let mut acc = EScalar::from_f(one, self.eps);
        let mut b = base;
        let mut e = k.unsigned_abs();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&b);
            }
            b = b.mul(&b);
            e >>= 1;
        }
        Ok(acc)
    }

    pub fn eq_mod(&self, o: &EScalar, k: i32) -> bool {
        self.a.eq_mod(&o.a, k) && self.b.eq_mod(&o.b, k)
    }

    /// Canonical representative mod `p^e O_E`, componentwise.
    pub fn trunc_below(&self, e: i32) -> Result<EScalar> {
        Ok(EScalar { a: self.a.trunc_below(e)?, b: self.b.trunc_below(e)?, eps: self.eps })
    }

    /// Residue in `F_{p²}` of an integral element, as `(a mod p, b mod p)`.
    pub fn residue(&self) -> (u64, u64) {
        (self.a.residue(), self.b.residue())
    }

    /// Square root in E, `None` for non-squares.
    pub fn sqrt(&self) -> Result<Option<EScalar>> {
        let v = self.val().ok_or(Error::ZeroArgument)?;
        if v.rem_euclid(2) != 0 {
            return Ok(None);
        }
        if self.b.is_zero() {
            if let Some(r) = self.a.sqrt()? {
                return Ok(Some(EScalar::from_f(r, self.eps)));
            }
            let q = self.a.div(&self.epsf())?;
            let r = q.sqrt()?.ok_or(Error::PrecisionExhausted("sqrt of a/ε"))?;
            return Ok(Some(EScalar { a: r.zero_like(EXACT), b: r, eps: self.eps }));
        }
        let ctx_p = self.a.p;
        let unit = self.shift(-v);
        if unit.abs_prec() < 2 {
            return Err(Error::PrecisionExhausted("square root needs two digits"));
        }
        let (ua, ub) = unit.residue();
        let p = ctx_p as u64;
        let e = self.eps as u64;
        let mut root = None;
        'outer: for x in 0..p {
            for y in 0..p {
                // (x + yω)² = x² + εy² + 2xy ω
                if (x * x + e * y * y) % p == ua && (2 * x * y) % p == ub {
                    root = Some((x, y));
                    break 'outer;
                }
            }
        }
        let Some((x, y)) = root else { return Ok(None) };
        let mk = |t: u64| FScalar::from_int(ctx_p, self.a.cap, t as i128);
        let mut r = EScalar { a: mk(x), b: mk(y), eps: self.eps };
        let two = EScalar::from_f(mk(2), self.eps);
        let mut k = 1;
        while k < 2 * self.a.cap {
            let f = r.mul(&r).sub(&unit);
            r = r.sub(&f.div(&two.mul(&r))?);
            k *= 2;
        }
        Ok(Some(r.shift(v / 2)))
    }

    pub fn to_json(&self) -> Value {
        json!({"a": self.a.to_json(), "b": self.b.to_json()})
    }

    pub fn from_json(ctx: &PrecisionContext, v: &Value) -> Result<EScalar> {
        let bad = || Error::Invalid(format!("malformed EScalar {v}"));
        let a = FScalar::from_json(ctx, v.get("a").ok_or_else(bad)?)?;
        let b = FScalar::from_json(ctx, v.get("b").ok_or_else(bad)?)?;
        Ok(ctx.e(a, b))
    }
}

impl fmt::Debug for EScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?} + {:?}w)", self.a, self.b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn ctx(p: u32) -> PrecisionContext {
        PrecisionContext::new(p, 12).unwrap()
    }

    #[test]
    fn eps_is_least_nonresidue() {
        for p in [3u32, 5, 7, 11, 13] {
            let c = ctx(p);
            let squares: Vec<u64> = (1..p as u64).map(|x| x * x % p as u64).collect();
            let least = (2..p as u64).find(|e| !squares.contains(e)).unwrap();
            assert_eq!(c.eps as u64, least);
        }
    }

    #[test]
    fn valuations() {
        let c = ctx(5);
        assert_eq!(c.one().val(), Some(0));
        assert_eq!(c.int(5).val(), Some(1));
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..50 {
            let u = c.random_unit_f(&mut rng);
            let x = u.shift(2);
            assert_eq!(x.val(), Some(2));
            assert_eq!(x.digit(0), Some(0));
            assert_eq!(x.digit(1), Some(0));
            assert_eq!(x.digit(2), Some(u.residue()));
        }
    }

    #[test]
    fn eta_values() {
        let c = ctx(3);
        assert_eq!(c.one().eta(), Ok(1));
        assert_eq!(c.int(3).eta(), Ok(-1));
        assert_eq!(c.zero().eta(), Err(Error::ZeroArgument));
    }

    #[test]
    fn conj_norm_trace() {
        let c = ctx(7);
        let w = c.omega();
        assert!(w.conj().eq_mod(&w.neg(), 12));
        assert!(w.norm().eq_mod(&c.eps_f().neg(), 12));
        let z = c.e(c.int(4), c.int(9));
        assert!(z.trace().eq_mod(&c.int(8), 12));
    }

    #[test]
    fn sqrt_examples() {
        let c = ctx(3);
        let r = c.one().sqrt().unwrap().unwrap();
        assert!(r.mul(&r).eq_mod(&c.one(), 12));
        assert!(c.eps_f().sqrt().unwrap().is_none());
        let x = c.int(4);
        let r = x.sqrt().unwrap().unwrap();
        assert!(r.mul(&r).eq_mod(&x, 12));
        let es = c.e_from_f(c.eps_f()).sqrt().unwrap().unwrap();
        assert!(es.mul(&es).eq_mod(&c.e_from_f(c.eps_f()), 12));
    }

    #[test]
    fn residue_brute_force_square_test() {
        for p in [3u32, 5] {
            let c = ctx(p);
            let pp = p as u64;
            for u in 1..pp {
                let is_sq = (1..pp).any(|r| r * r % pp == u);
                let x = c.int(u as i64 + p as i64 * 7);
                assert_eq!(x.sqrt().unwrap().is_some(), is_sq);
                assert!(x.shift(1).sqrt().unwrap().is_none());
            }
        }
    }

    #[test]
    fn cancellation_tracks_precision() {
        let c = ctx(3);
        let x = c.int(10);
        let y = c.int(1);
        let d = x.sub(&y).sub(&c.int(9));
        assert!(d.is_zero());
        assert!(d.abs_prec() >= 12);
        let a = c.pk(-3).add(&c.one());
        let b = a.sub(&c.pk(-3));
        assert_eq!(b.val(), Some(0));
        assert_eq!(b.abs_prec(), 9);
    }

    #[test]
    fn json_roundtrip() {
        let c = ctx(5);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..20 {
            let z = c.random_e(&mut rng, -2);
            let back = EScalar::from_json(&c, &z.to_json()).unwrap();
            assert!(back.eq_mod(&z, 10));
        }
        assert!(FScalar::from_json(&c, &c.zero().to_json()).unwrap().is_zero());
    }

    #[test]
    fn truncation_is_canonical() {
        let c = ctx(3);
        let x = c.int(1 + 2 * 3 + 9 * 2 + 27).shift(-2);
        let t = x.trunc_below(0).unwrap();
        assert!(t.eq_mod(&c.int(1 + 6).shift(-2), 10));
        assert!(x.trunc_below(-2).unwrap().is_zero());
    }
}
