//! Exact calculus on differential forms with polynomial coefficients.
//!
//! A [`PolyForm`] stores finitely many terms `c · x^α · e_S` with rational
//! `c`. The exterior derivative `d = Σ ∂_j e_j ∧`, the interior derivative
//! `δ = −Σ ∂_j e_j ⌟`, pullbacks along polynomial maps, and the ball
//! potential [`poincare_rb`] are all evaluated term-by-term in rational
//! arithmetic, so the homotopy identity
//!
//! ```text
//!     R_B d f + d R_B f = f − K_B f
//! ```
//!
//! holds *exactly*, not up to tolerance.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;

use crate::exterior::{
    blade_grade, interior_sign, star_sign, wedge_sign, Blade, ExactMultivector, Multivector,
    NumericMultivector,
};
use crate::{Error, Result};

/// Degree cap for the potential expansion; exceeding it is an explicit
/// error, never silent truncation.
pub const DEGREE_CAP: u32 = 8;

type Rat = BigRational;
/// Monomial exponent vector, one entry per axis.
pub type MultiIndex = Vec<u32>;

fn rat_i(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Differential form with polynomial component functions.
///
/// `terms` maps `(blade S, multi-index α) → coefficient`; equal keys are
/// merged and zero coefficients dropped, so the representation is canonical.
#[derive(Clone, PartialEq)]
pub struct PolyForm {
    dim: usize,
    terms: BTreeMap<(Blade, MultiIndex), Rat>,
}

impl PolyForm {
    pub fn zero(dim: usize) -> Self {
        PolyForm { dim, terms: BTreeMap::new() }
    }

    /// Single term `c · x^α · e_S`.
    pub fn term(dim: usize, blade: Blade, alpha: &[u32], c: Rat) -> Self {
        assert_eq!(alpha.len(), dim);
        assert!(blade < (1u32 << dim));
        let mut f = Self::zero(dim);
        f.add_term(blade, alpha.to_vec(), c);
        f
    }

    /// Constant form `c · e_S`.
    pub fn constant(dim: usize, blade: Blade, c: Rat) -> Self {
        let alpha = vec![0u32; dim];
        Self::term(dim, blade, &alpha, c)
    }

    /// The monomial `x_j` as a 0-form (1-based axis).
    pub fn coordinate(dim: usize, j: usize) -> Self {
        assert!(j >= 1 && j <= dim);
        let mut alpha = vec![0u32; dim];
        alpha[j - 1] = 1;
        Self::term(dim, 0, &alpha, Rat::one())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, blade: Blade, alpha: MultiIndex, c: Rat) {
        if c.is_zero() {
            return;
        }
        debug_assert_eq!(alpha.len(), self.dim);
        let key = (blade, alpha);
        match self.terms.get_mut(&key) {
            Some(v) => {
                *v += c;
                if v.is_zero() {
                    self.terms.remove(&key);
                }
            }
            None => {
                self.terms.insert(key, c);
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (Blade, &MultiIndex, &Rat)> {
        self.terms.iter().map(|((b, a), c)| (*b, a, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Maximum total monomial degree over all terms.
    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|(_, a)| a.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Grades carried by the form.
    pub fn grades(&self) -> Vec<usize> {
        let mut g: Vec<usize> = self.terms.keys().map(|(b, _)| blade_grade(*b)).collect();
        g.sort_unstable();
        g.dedup();
        g
    }

    pub fn grade_part(&self, k: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|((b, _), _)| blade_grade(*b) == k)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        PolyForm { dim: self.dim, terms }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for ((b, a), c) in &other.terms {
            out.add_term(*b, a.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for ((b, a), c) in &other.terms {
            out.add_term(*b, a.clone(), -c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        let mut out = Self::zero(self.dim);
        for ((b, a), c) in &self.terms {
            out.add_term(*b, a.clone(), -c.clone());
        }
        out
    }

    pub fn scale(&self, c: &Rat) -> Self {
        let mut out = Self::zero(self.dim);
        for ((b, a), v) in &self.terms {
            out.add_term(*b, a.clone(), v.clone() * c.clone());
        }
        out
    }

    /// Exterior derivative `d = Σ_j ∂_j e_j ∧`; raises the grade by one and
    /// satisfies `d∘d = 0` exactly.
    pub fn ext_d(&self) -> Self {
        let mut out = Self::zero(self.dim);
        for ((blade, alpha), c) in &self.terms {
            for j in 0..self.dim {
                if alpha[j] == 0 {
                    continue;
                }
                let Some(sign) = wedge_sign(1 << j, *blade) else {
                    continue;
                };
                let mut a = alpha.clone();
                a[j] -= 1;
                let coeff = c.clone() * rat_i(alpha[j] as i64) * rat_i(sign as i64);
                out.add_term(blade | (1 << j), a, coeff);
            }
        }
        out
    }

    /// Interior derivative `δ = −Σ_j ∂_j e_j ⌟`; lowers the grade by one and
    /// satisfies `δ∘δ = 0` exactly.
    pub fn int_delta(&self) -> Self {
        let mut out = Self::zero(self.dim);
        for ((blade, alpha), c) in &self.terms {
            for j in 0..self.dim {
                if alpha[j] == 0 {
                    continue;
                }
                let Some(sign) = interior_sign(j as u32, *blade) else {
                    continue;
                };
                let mut a = alpha.clone();
                a[j] -= 1;
                let coeff = -c.clone() * rat_i(alpha[j] as i64) * rat_i(sign as i64);
                out.add_term(blade & !(1 << j), a, coeff);
            }
        }
        out
    }

    /// Hodge star applied coefficient-wise.
    pub fn hodge_star(&self) -> Self {
        let full: Blade = (1u32 << self.dim) - 1;
        let mut out = Self::zero(self.dim);
        for ((blade, alpha), c) in &self.terms {
            let sign = star_sign(*blade, self.dim);
            out.add_term(full & !blade, alpha.clone(), c.clone() * rat_i(sign as i64));
        }
        out
    }

    /// Pointwise exterior product of polynomial forms.
    pub fn wedge(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = Self::zero(self.dim);
        for ((bu, au), cu) in &self.terms {
            for ((bv, av), cv) in &other.terms {
                if let Some(sign) = wedge_sign(*bu, *bv) {
                    let alpha: MultiIndex = au.iter().zip(av).map(|(x, y)| x + y).collect();
                    out.add_term(bu | bv, alpha, cu.clone() * cv.clone() * rat_i(sign as i64));
                }
            }
        }
        out
    }

    /// Pointwise interior product `self ⌟ other`.
    pub fn interior(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = Self::zero(self.dim);
        for ((bt, at), ct) in &self.terms {
            for ((bs, as_), cs) in &other.terms {
                if let Some((blade, sign)) = crate::exterior::blade_interior(*bt, *bs) {
                    let alpha: MultiIndex = at.iter().zip(as_).map(|(x, y)| x + y).collect();
                    out.add_term(blade, alpha, ct.clone() * cs.clone() * rat_i(sign as i64));
                }
            }
        }
        out
    }

    /// Evaluate at an exact rational point.
    pub fn eval(&self, x: &[Rat]) -> ExactMultivector {
        assert_eq!(x.len(), self.dim);
        let mut mv = Multivector::zero(self.dim);
        for ((blade, alpha), c) in &self.terms {
            let mut v = c.clone();
            for (xi, ai) in x.iter().zip(alpha) {
                for _ in 0..*ai {
                    v *= xi.clone();
                }
            }
            mv.add_term(*blade, v);
        }
        mv
    }

    /// Evaluate at a floating-point point (derived view).
    pub fn eval_f64(&self, x: &[f64]) -> NumericMultivector {
        assert_eq!(x.len(), self.dim);
        let mut mv = Multivector::zero(self.dim);
        for ((blade, alpha), c) in &self.terms {
            let mut v = crate::exterior::rational_to_f64(c);
            for (xi, ai) in x.iter().zip(alpha) {
                v *= xi.powi(*ai as i32);
            }
            mv.add_term(*blade, v);
        }
        mv
    }

    /// JSON representation: `{"n":2,"terms":[{"blade":[1],"alpha":[0,1],"coeff":"3/2"}]}`.
    pub fn to_json(&self) -> serde_json::Value {
        let terms: Vec<serde_json::Value> = self
            .terms
            .iter()
            .map(|((blade, alpha), c)| {
                let idx: Vec<u32> =
                    (0..self.dim as u32).filter(|i| blade & (1 << i) != 0).map(|i| i + 1).collect();
                serde_json::json!({
                    "blade": idx,
                    "alpha": alpha,
                    "coeff": c.to_string(),
                })
            })
            .collect();
        serde_json::json!({ "n": self.dim, "terms": terms })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let n = v["n"]
            .as_u64()
            .ok_or_else(|| Error::InvalidArgument("missing n".into()))? as usize;
        let mut f = PolyForm::zero(n);
        let terms = v["terms"]
            .as_array()
            .ok_or_else(|| Error::InvalidArgument("missing terms".into()))?;
        for t in terms {
            let mut blade: Blade = 0;
            for idx in t["blade"].as_array().unwrap_or(&vec![]) {
                let j = idx.as_u64().ok_or_else(|| Error::InvalidArgument("bad blade".into()))?;
                if j < 1 || j as usize > n {
                    return Err(Error::InvalidArgument(format!("blade index {j} out of range")));
                }
                blade |= 1 << (j - 1);
            }
            let alpha: MultiIndex = t["alpha"]
                .as_array()
                .ok_or_else(|| Error::InvalidArgument("bad alpha".into()))?
                .iter()
                .map(|a| a.as_u64().unwrap_or(0) as u32)
                .collect();
            if alpha.len() != n {
                return Err(Error::InvalidArgument("alpha length".into()));
            }
            let coeff_s = t["coeff"]
                .as_str()
                .ok_or_else(|| Error::InvalidArgument("bad coeff".into()))?;
            let c: Rat = coeff_s
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad rational `{coeff_s}`")))?;
            f.add_term(blade, alpha, c);
        }
        Ok(f)
    }
}

impl fmt::Debug for PolyForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for ((blade, alpha), c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{}", c)?;
            for (i, a) in alpha.iter().enumerate() {
                if *a > 0 {
                    write!(f, "·x{}^{}", i + 1, a)?;
                }
            }
            if *blade != 0 {
                let idx: Vec<String> = (0..self.dim)
                    .filter(|i| blade & (1 << i) != 0)
                    .map(|i| (i + 1).to_string())
                    .collect();
                write!(f, "·e{{{}}}", idx.join(","))?;
            }
        }
        Ok(())
    }
}

/// The smoothing bump `θ(a) = c_k (1/4 − |a|²)^k` supported in `½B`,
/// normalised so `∫θ = 1`.
///
/// Finite smoothness `k ≥ 2` replaces the usual `C_c^∞` mollifier: every
/// identity exercised here is insensitive to smoothness beyond `C¹`, and a
/// polynomial bump admits exact moment integrals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BumpSpec {
    pub k: u32,
}

impl BumpSpec {
    pub fn new(k: u32) -> Self {
        assert!(k >= 2, "bump smoothness must be at least 2");
        BumpSpec { k }
    }

    /// Pointwise value of θ (floating-point view).
    pub fn eval(&self, a: &[f64], dim: usize) -> f64 {
        debug_assert_eq!(a.len(), dim);
        let r2: f64 = a.iter().map(|v| v * v).sum();
        if r2 >= 0.25 {
            return 0.0;
        }
        self.normalization(dim) * (0.25 - r2).powi(self.k as i32)
    }

    /// `c_k` such that `∫_{½B} c_k (1/4 − |a|²)^k da = 1`.
    ///
    /// `∫_{½B}(1/4−|a|²)^k da = 4^{-k} 2^{-n} π^{n/2} k! / Π_{j=0}^{k}(n/2+j)`,
    /// with the Gamma ratio collapsing to the integer product.
    pub fn normalization(&self, dim: usize) -> f64 {
        let n = dim as f64;
        let mut val = 0.25f64.powi(self.k as i32) * 0.5f64.powi(dim as i32)
            * std::f64::consts::PI.powf(n / 2.0);
        for j in 0..=self.k {
            val *= (j.max(1)) as f64 / (n / 2.0 + j as f64);
        }
        1.0 / val
    }
}

impl Default for BumpSpec {
    fn default() -> Self {
        BumpSpec::new(2)
    }
}

/// Exact moment `∫_{½B} θ(a) a^α da` of the normalised bump.
///
/// Vanishes whenever some `α_i` is odd; otherwise it is the ratio of two
/// classical ball monomial integrals, so all π factors cancel and the value
/// is an exact rational:
///
/// ```text
/// ∫θ a^α = 2^{-|α|} · Π_i (α_i−1)!! / Π_{j=0}^{|α|/2−1} (n + 2k + 2 + 2j)
/// ```
pub fn ball_moment(alpha: &[u32], k: u32, dim: usize) -> Rat {
    assert_eq!(alpha.len(), dim);
    if alpha.iter().any(|a| a % 2 == 1) {
        return Rat::zero();
    }
    let total: u32 = alpha.iter().sum();
    let half = total / 2;
    let mut num = BigInt::one();
    for &a in alpha {
        // (a−1)!! with (−1)!! = 1
        let mut j = a as i64 - 1;
        while j >= 2 {
            num *= BigInt::from(j);
            j -= 2;
        }
    }
    let mut den = BigInt::one();
    for j in 0..half {
        den *= BigInt::from(dim as i64 + 2 * k as i64 + 2 + 2 * j as i64);
    }
    den *= BigInt::from(2).pow(total);
    Rat::new(num, den)
}

/// The Poincaré-type potential on the ball,
/// `R_B f_ℓ(y) = ∫_{½B} θ(a) (y−a) ⌟ (∫₀¹ t^{ℓ−1} f_ℓ(a + t(y−a)) dt) da`
/// for homogeneous grade-ℓ parts with `ℓ ≥ 1`, and `R_B f₀ = 0`.
///
/// Both integrals are evaluated exactly: the inner one by monomial
/// substitution and `∫₀¹ t^m dt = 1/(m+1)`, the outer one through
/// [`ball_moment`]. The output grade is one lower than the input.
pub fn poincare_rb(f: &PolyForm, theta: &BumpSpec) -> Result<PolyForm> {
    let n = f.dim;
    if f.degree() + 1 > DEGREE_CAP {
        return Err(Error::DegreeCap { cap: DEGREE_CAP, got: f.degree() + 1 });
    }
    // terms over (blade, a-exponents, y-exponents) → coefficient, t-power
    // handled eagerly per input term.
    let mut out = PolyForm::zero(n);
    for ((blade, alpha), c) in &f.terms {
        let ell = blade_grade(*blade);
        if ell == 0 {
            continue;
        }
        // expand Π_i (a_i + t(y_i − a_i))^{α_i} into (a^p y^q t^r) terms
        let mut expanded: BTreeMap<(MultiIndex, MultiIndex, u32), Rat> = BTreeMap::new();
        expanded.insert((vec![0; n], vec![0; n], 0), c.clone());
        for i in 0..n {
            let ai = alpha[i];
            if ai == 0 {
                continue;
            }
            // (a + t(y−a))^{ai} = Σ_{p+q+r=ai} C(ai;p,q,r) a^{p+r} y^q t^{q+r} (−1)^r
            let mut axis_terms: Vec<(u32, u32, u32, Rat)> = Vec::new(); // (a_exp, y_exp, t_exp, coeff)
            for p in 0..=ai {
                for q in 0..=(ai - p) {
                    let r = ai - p - q;
                    let c3 = trinomial(ai, p, q);
                    let sign = if r % 2 == 0 { 1 } else { -1 };
                    axis_terms.push((p + r, q, q + r, c3 * rat_i(sign)));
                }
            }
            let mut next: BTreeMap<(MultiIndex, MultiIndex, u32), Rat> = BTreeMap::new();
            for ((pa, py, pt), cv) in &expanded {
                for (ae, ye, te, ac) in &axis_terms {
                    let mut na = pa.clone();
                    let mut ny = py.clone();
                    na[i] += ae;
                    ny[i] += ye;
                    let key = (na, ny, pt + te);
                    let entry = next.entry(key).or_insert_with(Rat::zero);
                    *entry += cv.clone() * ac.clone();
                }
            }
            expanded = next;
        }
        // t-integration with the grade weight, then (y−a)⌟, then a-moments
        for ((a_exp, y_exp, t_pow), cv) in expanded {
            let t_int = Rat::new(BigInt::one(), BigInt::from(t_pow as i64 + ell as i64));
            let base = cv * t_int;
            for j in 0..n {
                let Some(sign) = interior_sign(j as u32, *blade) else {
                    continue;
                };
                let new_blade = blade & !(1 << j);
                let signed = base.clone() * rat_i(sign as i64);
                // +y_j branch
                let mut ye = y_exp.clone();
                ye[j] += 1;
                let m = ball_moment(&a_exp, theta.k, n);
                if !m.is_zero() {
                    out.add_term(new_blade, ye, signed.clone() * m);
                }
                // −a_j branch
                let mut ae = a_exp.clone();
                ae[j] += 1;
                let m = ball_moment(&ae, theta.k, n);
                if !m.is_zero() {
                    out.add_term(new_blade, y_exp.clone(), -signed * m);
                }
            }
        }
    }
    Ok(out)
}

/// The smoothing defect `K_B f = ⟨θ, f₀⟩ e_∅`: a constant 0-form, zero on
/// forms without a 0-component, and zero on exact forms `f = dg`.
pub fn poincare_kb(f: &PolyForm, theta: &BumpSpec) -> PolyForm {
    let n = f.dim;
    let mut total = Rat::zero();
    for ((blade, alpha), c) in &f.terms {
        if *blade != 0 {
            continue;
        }
        total += c.clone() * ball_moment(alpha, theta.k, n);
    }
    let mut out = PolyForm::zero(n);
    out.add_term(0, vec![0; n], total);
    out
}

fn trinomial(n: u32, p: u32, q: u32) -> Rat {
    // n! / (p! q! (n−p−q)!)
    let r = n - p - q;
    let mut num = BigInt::one();
    for j in 1..=n as i64 {
        num *= BigInt::from(j);
    }
    let mut den = BigInt::one();
    for j in 1..=p as i64 {
        den *= BigInt::from(j);
    }
    for j in 1..=q as i64 {
        den *= BigInt::from(j);
    }
    for j in 1..=r as i64 {
        den *= BigInt::from(j);
    }
    Rat::new(num, den)
}

/// A polynomial map ρ: ℝⁿ → ℝⁿ given by its scalar components.
#[derive(Clone, Debug)]
pub struct PolyMap {
    dim: usize,
    components: Vec<PolyForm>,
}

impl PolyMap {
    pub fn new(components: Vec<PolyForm>) -> Result<Self> {
        let dim = components.len();
        for c in &components {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch(c.dim(), dim));
            }
            if c.grades().iter().any(|g| *g != 0) {
                return Err(Error::InvalidArgument(
                    "map components must be scalar polynomials".into(),
                ));
            }
        }
        Ok(PolyMap { dim, components })
    }

    pub fn identity(dim: usize) -> Self {
        let components = (1..=dim).map(|j| PolyForm::coordinate(dim, j)).collect();
        PolyMap { dim, components }
    }

    /// Affine map `y ↦ A y + b` from rational matrix rows and shift.
    pub fn affine(a: &[Vec<Rat>], b: &[Rat]) -> Result<Self> {
        let dim = b.len();
        if a.len() != dim || a.iter().any(|row| row.len() != dim) {
            return Err(Error::InvalidArgument("affine matrix shape".into()));
        }
        let mut components = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut comp = PolyForm::constant(dim, 0, b[i].clone());
            for j in 0..dim {
                comp = comp.add(&PolyForm::coordinate(dim, j + 1).scale(&a[i][j]));
            }
            components.push(comp);
        }
        Ok(PolyMap { dim, components })
    }

    pub fn scaling(dim: usize, s: Rat) -> Self {
        let rows: Vec<Vec<Rat>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { s.clone() } else { Rat::zero() }).collect())
            .collect();
        let b = vec![Rat::zero(); dim];
        Self::affine(&rows, &b).expect("square by construction")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `∂ρ_i/∂y_j` as scalar polynomials.
    fn jacobian_entry(&self, i: usize, j: usize) -> PolyForm {
        let mut out = PolyForm::zero(self.dim);
        for ((_, alpha), c) in &self.components[i].terms {
            if alpha[j] == 0 {
                continue;
            }
            let mut a = alpha.clone();
            a[j] -= 1;
            out.add_term(0, a, c.clone() * rat_i(alpha[j] as i64));
        }
        out
    }

    /// Substitute the map into a scalar monomial `x^α`.
    fn substitute_monomial(&self, alpha: &[u32]) -> PolyForm {
        let mut acc = PolyForm::constant(self.dim, 0, Rat::one());
        for (i, &a) in alpha.iter().enumerate() {
            for _ in 0..a {
                acc = acc.mul_scalar(&self.components[i]);
            }
        }
        acc
    }

    /// Constant Jacobian matrix if the map is affine, else `None`.
    fn constant_jacobian(&self) -> Option<Vec<Vec<Rat>>> {
        let mut rows = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let mut row = Vec::with_capacity(self.dim);
            for j in 0..self.dim {
                let e = self.jacobian_entry(i, j);
                if e.degree() > 0 {
                    return None;
                }
                row.push(e.terms.values().next().cloned().unwrap_or_else(Rat::zero));
            }
            rows.push(row);
        }
        Some(rows)
    }
}

impl PolyForm {
    /// Multiply by a scalar (grade-0) polynomial.
    pub fn mul_scalar(&self, eta: &PolyForm) -> Self {
        assert_eq!(self.dim, eta.dim);
        let mut out = Self::zero(self.dim);
        for ((b, a), c) in &self.terms {
            for ((be, ae), ce) in &eta.terms {
                assert_eq!(*be, 0, "mul_scalar expects a 0-form");
                let alpha: MultiIndex = a.iter().zip(ae).map(|(x, y)| x + y).collect();
                out.add_term(*b, alpha, c.clone() * ce.clone());
            }
        }
        out
    }
}

/// Pullback `ρ*u (y) = Λ(J_ρ(y)ᵀ) u(ρ(y))`, exact for polynomial maps.
///
/// Satisfies `d(ρ*u) = ρ*(du)` and `ρ*(u∧v) = ρ*u ∧ ρ*v`.
pub fn pullback(rho: &PolyMap, f: &PolyForm) -> Result<PolyForm> {
    if rho.dim() != f.dim() {
        return Err(Error::DimensionMismatch(rho.dim(), f.dim()));
    }
    let n = f.dim();
    let mut out = PolyForm::zero(n);
    // cache minor determinants per (S,T) pair
    let mut minor_cache: BTreeMap<(Blade, Blade), PolyForm> = BTreeMap::new();
    for ((blade, alpha), c) in &f.terms {
        let comp = rho.substitute_monomial(alpha).scale(c);
        let ell = blade_grade(*blade);
        for t in 0u32..(1u32 << n) {
            if blade_grade(t) != ell {
                continue;
            }
            let det = minor_cache
                .entry((*blade, t))
                .or_insert_with(|| jacobian_minor(rho, *blade, t))
                .clone();
            if det.is_zero() {
                continue;
            }
            let contrib = comp.mul_scalar(&det);
            for ((_, a), v) in &contrib.terms {
                out.add_term(t, a.clone(), v.clone());
            }
        }
    }
    if out.degree() > DEGREE_CAP * 2 {
        return Err(Error::DegreeCap { cap: DEGREE_CAP * 2, got: out.degree() });
    }
    Ok(out)
}

/// `det J[S, T]` (rows S, columns T of the Jacobian) as a polynomial; this is
/// the `e_T`-coefficient of `Λ(Jᵀ) e_S`.
fn jacobian_minor(rho: &PolyMap, s: Blade, t: Blade) -> PolyForm {
    let n = rho.dim();
    let rows: Vec<usize> = (0..n).filter(|i| s & (1 << i) != 0).collect();
    let cols: Vec<usize> = (0..n).filter(|j| t & (1 << j) != 0).collect();
    let k = rows.len();
    if k == 0 {
        return PolyForm::constant(n, 0, Rat::one());
    }
    // permutation expansion
    let mut acc = PolyForm::zero(n);
    let mut perm: Vec<usize> = (0..k).collect();
    loop {
        let sign = permutation_sign(&perm);
        let mut prod = PolyForm::constant(n, 0, rat_i(sign as i64));
        for (r, &pi) in perm.iter().enumerate() {
            prod = prod.mul_scalar(&rho.jacobian_entry(rows[r], cols[pi]));
        }
        acc = acc.add(&prod);
        if !next_permutation(&mut perm) {
            break;
        }
    }
    acc
}

fn permutation_sign(p: &[usize]) -> i32 {
    let mut inv = 0;
    for i in 0..p.len() {
        for j in (i + 1)..p.len() {
            if p[i] > p[j] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 {
        1
    } else {
        -1
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// `ρ̃_*^{-1} u := Jac(ρ) ρ_*^{-1} u` with `(ρ_*^{-1}u)(y) = J_ρ(y)^{-1} u(ρ(y))`,
/// for affine invertible ρ. Satisfies `δ(ρ̃_*^{-1}u) = ρ̃_*^{-1}(δu)`.
pub fn pushforward_tilde(rho: &PolyMap, f: &PolyForm) -> Result<PolyForm> {
    if rho.dim() != f.dim() {
        return Err(Error::DimensionMismatch(rho.dim(), f.dim()));
    }
    let n = f.dim();
    let jac = rho.constant_jacobian().ok_or_else(|| {
        Error::InvalidArgument("pushforward_tilde requires an affine map".into())
    })?;
    let (inv, det) = invert_rational(&jac)
        .ok_or_else(|| Error::Singular("non-invertible linear part".into()))?;
    let mut out = PolyForm::zero(n);
    for ((blade, alpha), c) in &f.terms {
        let comp = rho.substitute_monomial(alpha).scale(c).scale(&det);
        let ell = blade_grade(*blade);
        for t in 0u32..(1u32 << n) {
            if blade_grade(t) != ell {
                continue;
            }
            // e_T coefficient of Λ(J^{-1}) e_S is det(J^{-1}[T, S])
            let m = rational_minor(&inv, t, *blade);
            if m.is_zero() {
                continue;
            }
            for ((_, a), v) in &comp.terms {
                out.add_term(t, a.clone(), v.clone() * m.clone());
            }
        }
    }
    Ok(out)
}

fn rational_minor(m: &[Vec<Rat>], rows: Blade, cols: Blade) -> Rat {
    let n = m.len();
    let ri: Vec<usize> = (0..n).filter(|i| rows & (1 << i) != 0).collect();
    let ci: Vec<usize> = (0..n).filter(|j| cols & (1 << j) != 0).collect();
    let k = ri.len();
    if k == 0 {
        return Rat::one();
    }
    let mut acc = Rat::zero();
    let mut perm: Vec<usize> = (0..k).collect();
    loop {
        let sign = permutation_sign(&perm);
        let mut prod = rat_i(sign as i64);
        for (r, &pi) in perm.iter().enumerate() {
            prod *= m[ri[r]][ci[pi]].clone();
        }
        acc += prod;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    acc
}

/// Gaussian elimination over ℚ; returns `(A⁻¹, det A)`.
fn invert_rational(a: &[Vec<Rat>]) -> Option<(Vec<Vec<Rat>>, Rat)> {
    let n = a.len();
    let mut m: Vec<Vec<Rat>> = a.to_vec();
    let mut inv: Vec<Vec<Rat>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { Rat::one() } else { Rat::zero() }).collect())
        .collect();
    let mut det = Rat::one();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        if pivot != col {
            m.swap(pivot, col);
            inv.swap(pivot, col);
            det = -det;
        }
        let p = m[col][col].clone();
        det *= p.clone();
        for j in 0..n {
            m[col][j] /= p.clone();
            inv[col][j] /= p.clone();
        }
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let factor = m[r][col].clone();
            for j in 0..n {
                let mj = m[col][j].clone();
                let ij = inv[col][j].clone();
                m[r][j] -= factor.clone() * mj;
                inv[r][j] -= factor.clone() * ij;
            }
        }
    }
    if det.is_zero() {
        None
    } else {
        Some((inv, det))
    }
}

/// Gradient of a scalar polynomial as a 1-form; coincides with `ext_d` on
/// 0-forms and is used by the product-rule identities.
pub fn gradient(eta: &PolyForm) -> PolyForm {
    assert!(eta.grades().iter().all(|g| *g == 0));
    eta.ext_d()
}

impl PolyForm {
    /// Check a value is a plain 0-form constant equal to `c`.
    pub fn is_constant_scalar(&self, c: &Rat) -> bool {
        if c.is_zero() {
            return self.is_zero();
        }
        self.terms.len() == 1
            && self
                .terms
                .iter()
                .all(|((b, a), v)| *b == 0 && a.iter().all(|x| *x == 0) && v == c)
    }

    /// Absolute value of the largest coefficient (diagnostics).
    pub fn max_coeff_abs(&self) -> Rat {
        self.terms
            .values()
            .map(|c| c.abs())
            .max()
            .unwrap_or_else(Rat::zero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gauss_legendre_on;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rat(n: i64, d: i64) -> Rat {
        Rat::new(BigInt::from(n), BigInt::from(d))
    }

    pub(crate) fn random_polyform(
        rng: &mut StdRng,
        dim: usize,
        max_degree: u32,
        grade: Option<usize>,
    ) -> PolyForm {
        let mut f = PolyForm::zero(dim);
        let terms = rng.gen_range(1..=6);
        for _ in 0..terms {
            let blade = loop {
                let b = rng.gen_range(0..(1u32 << dim));
                match grade {
                    Some(g) if blade_grade(b) != g => continue,
                    _ => break b,
                }
            };
            let mut alpha = vec![0u32; dim];
            let mut budget = max_degree;
            for a in alpha.iter_mut() {
                let v = rng.gen_range(0..=budget.min(3));
                *a = v;
                budget -= v;
            }
            f.add_term(blade, alpha, rat(rng.gen_range(-9..=9), rng.gen_range(1..=4)));
        }
        f
    }

    #[test]
    fn ext_d_examples() {
        let n = 2;
        // x₁x₂ → x₂ e₁ + x₁ e₂
        let f = PolyForm::term(n, 0, &[1, 1], Rat::one());
        let expect = PolyForm::term(n, 0b01, &[0, 1], Rat::one())
            .add(&PolyForm::term(n, 0b10, &[1, 0], Rat::one()));
        assert_eq!(f.ext_d(), expect);
        // x₂ e₁ → −e₁₂
        let f = PolyForm::term(n, 0b01, &[0, 1], Rat::one());
        assert_eq!(f.ext_d(), PolyForm::constant(n, 0b11, -Rat::one()));
        // top grade constant → 0
        let f = PolyForm::constant(n, 0b11, Rat::one());
        assert!(f.ext_d().is_zero());
    }

    #[test]
    fn int_delta_examples() {
        let n = 2;
        // x₁ e₁ → −1
        let f = PolyForm::term(n, 0b01, &[1, 0], Rat::one());
        assert_eq!(f.int_delta(), PolyForm::constant(n, 0, -Rat::one()));
        // x₁ e₁₂ → −e₂
        let f = PolyForm::term(n, 0b11, &[1, 0], Rat::one());
        assert_eq!(f.int_delta(), PolyForm::constant(n, 0b10, -Rat::one()));
        // constant e₁ → 0
        assert!(PolyForm::constant(n, 0b01, Rat::one()).int_delta().is_zero());
    }

    #[test]
    fn d_squared_and_delta_squared_vanish() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(2..=3);
            let f = random_polyform(&mut rng, n, 5, None);
            assert!(f.ext_d().ext_d().is_zero());
            assert!(f.int_delta().int_delta().is_zero());
        }
    }

    #[test]
    fn ball_moment_examples() {
        // α = 0 → 1 (normalisation)
        assert_eq!(ball_moment(&[0, 0], 2, 2), Rat::one());
        // odd symmetry
        assert!(ball_moment(&[1, 0], 2, 2).is_zero());
        // closed form vs the uniform-disc average
        assert_eq!(ball_moment(&[2, 0], 2, 2), rat(1, 32));
    }

    #[test]
    fn ball_moment_matches_polar_quadrature() {
        // independent oracle: polar-coordinate quadrature of
        // c_k(1/4−r²)^k r^{α₁+α₂+1} cos^{α₁}φ sin^{α₂}φ, n = 2
        let k = 2u32;
        let cases: [(Vec<u32>, ()); 4] =
            [(vec![2, 0], ()), (vec![0, 2], ()), (vec![2, 2], ()), (vec![4, 0], ())];
        let (rn, rw) = gauss_legendre_on(64, 0.0, 0.5);
        let n_phi = 256;
        for (alpha, _) in cases {
            let mut unnormalised = 0.0;
            let mut mass = 0.0;
            for (r, wr) in rn.iter().zip(&rw) {
                let bump = (0.25 - r * r).powi(k as i32);
                for iphi in 0..n_phi {
                    let phi = 2.0 * std::f64::consts::PI * (iphi as f64) / (n_phi as f64);
                    let wphi = 2.0 * std::f64::consts::PI / (n_phi as f64);
                    let monom = (r * phi.cos()).powi(alpha[0] as i32)
                        * (r * phi.sin()).powi(alpha[1] as i32);
                    unnormalised += wr * wphi * bump * monom * r;
                    mass += wr * wphi * bump * r;
                }
            }
            let oracle = unnormalised / mass;
            let exact = crate::exterior::rational_to_f64(&ball_moment(&alpha, k, 2));
            assert!(
                (oracle - exact).abs() < 1e-12,
                "moment {:?}: oracle {} vs exact {}",
                alpha,
                oracle,
                exact
            );
        }
    }

    #[test]
    fn bump_normalisation_integrates_to_one() {
        // float view of θ integrates to 1 over ½B (n = 2), polar quadrature
        let theta = BumpSpec::new(3);
        let (rn, rw) = gauss_legendre_on(64, 0.0, 0.5);
        let n_phi = 128;
        let mut total = 0.0;
        for (r, wr) in rn.iter().zip(&rw) {
            for iphi in 0..n_phi {
                let phi = 2.0 * std::f64::consts::PI * (iphi as f64) / (n_phi as f64);
                let wphi = 2.0 * std::f64::consts::PI / (n_phi as f64);
                let a = [r * phi.cos(), r * phi.sin()];
                total += wr * wphi * theta.eval(&a, 2) * r;
            }
        }
        assert!((total - 1.0).abs() < 1e-10, "∫θ = {total}");
    }

    #[test]
    fn rb_kills_zero_forms() {
        let theta = BumpSpec::default();
        let f = PolyForm::term(2, 0, &[3, 1], rat(7, 2));
        assert!(poincare_rb(&f, &theta).unwrap().is_zero());
    }

    #[test]
    fn rb_of_e1_is_y1() {
        let theta = BumpSpec::default();
        let f = PolyForm::constant(2, 0b01, Rat::one());
        let r = poincare_rb(&f, &theta).unwrap();
        assert_eq!(r, PolyForm::term(2, 0, &[1, 0], Rat::one()));
    }

    #[test]
    fn rb_of_volume_form() {
        // F = e₁₂ (n=2) → ½(y₁e₂ − y₂e₁) for a symmetric bump
        let theta = BumpSpec::default();
        let f = PolyForm::constant(2, 0b11, Rat::one());
        let r = poincare_rb(&f, &theta).unwrap();
        let expect = PolyForm::term(2, 0b10, &[1, 0], rat(1, 2))
            .add(&PolyForm::term(2, 0b01, &[0, 1], rat(-1, 2)));
        assert_eq!(r, expect);
    }

    #[test]
    fn kb_examples() {
        let theta = BumpSpec::default();
        // constant 0-form passes through
        let f = PolyForm::constant(2, 0, Rat::one());
        assert!(poincare_kb(&f, &theta).is_constant_scalar(&Rat::one()));
        // K_B kills forms without a 0-component
        let f = PolyForm::constant(2, 0b01, Rat::one());
        assert!(poincare_kb(&f, &theta).is_zero());
        // odd moment vanishes for symmetric θ
        let f = PolyForm::term(2, 0, &[1, 0], Rat::one());
        assert!(poincare_kb(&f, &theta).is_zero());
    }

    #[test]
    fn homotopy_identity_exact() {
        // R_B df + d R_B f = f − K_B f, term by term in ℚ
        let mut rng = StdRng::seed_from_u64(2024);
        let theta = BumpSpec::default();
        for _ in 0..120 {
            let n = rng.gen_range(2..=3);
            let f = random_polyform(&mut rng, n, 5, None);
            let lhs = poincare_rb(&f.ext_d(), &theta)
                .unwrap()
                .add(&poincare_rb(&f, &theta).unwrap().ext_d());
            let rhs = f.sub(&poincare_kb(&f, &theta));
            assert_eq!(lhs, rhs, "homotopy identity failed for {:?}", f);
        }
    }

    #[test]
    fn homotopy_identity_other_bumps() {
        // the identity is independent of the bump smoothness k ∈ {2,3,4}
        let mut rng = StdRng::seed_from_u64(55);
        for k in [2u32, 3, 4] {
            let theta = BumpSpec::new(k);
            for _ in 0..25 {
                let n = rng.gen_range(2..=3);
                let f = random_polyform(&mut rng, n, 4, None);
                let lhs = poincare_rb(&f.ext_d(), &theta)
                    .unwrap()
                    .add(&poincare_rb(&f, &theta).unwrap().ext_d());
                let rhs = f.sub(&poincare_kb(&f, &theta));
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn true_potential_on_exact_forms() {
        // f = dg ⟹ d R_B f = f
        let mut rng = StdRng::seed_from_u64(99);
        let theta = BumpSpec::default();
        for _ in 0..80 {
            let n = rng.gen_range(2..=3);
            let g = random_polyform(&mut rng, n, 5, None);
            let f = g.ext_d();
            let dr = poincare_rb(&f, &theta).unwrap().ext_d();
            assert_eq!(dr, f);
        }
    }

    #[test]
    fn star_relations() {
        // ⋆δu = (−1)^ℓ d(⋆u), ⋆du = (−1)^{ℓ−1} δ(⋆u) on homogeneous forms
        let mut rng = StdRng::seed_from_u64(123);
        for _ in 0..200 {
            let n = rng.gen_range(2..=4);
            let l = rng.gen_range(0..=n);
            let u = random_polyform(&mut rng, n, 4, Some(l));
            let sign = |e: i64| if e % 2 == 0 { Rat::one() } else { -Rat::one() };
            assert_eq!(
                u.int_delta().hodge_star(),
                u.hodge_star().ext_d().scale(&sign(l as i64))
            );
            assert_eq!(
                u.ext_d().hodge_star(),
                u.hodge_star().int_delta().scale(&sign(l as i64 - 1))
            );
        }
    }

    #[test]
    fn product_rules() {
        let mut rng = StdRng::seed_from_u64(77);
        for _ in 0..150 {
            let n = rng.gen_range(2..=3);
            let eta = random_polyform(&mut rng, n, 3, Some(0));
            let u = random_polyform(&mut rng, n, 3, None);
            let grad_eta = gradient(&eta);
            // d(ηu) = η du + ∇η ∧ u
            assert_eq!(
                u.mul_scalar(&eta).ext_d(),
                u.ext_d().mul_scalar(&eta).add(&grad_eta.wedge(&u))
            );
            // δ(ηv) = η δv − ∇η ⌟ v
            assert_eq!(
                u.mul_scalar(&eta).int_delta(),
                u.int_delta().mul_scalar(&eta).sub(&grad_eta.interior(&u))
            );
            // d(∇η∧u) = −∇η∧du
            assert_eq!(
                grad_eta.wedge(&u).ext_d(),
                grad_eta.wedge(&u.ext_d()).neg()
            );
            // graded Leibniz rule on homogeneous u
            let l = rng.gen_range(0..=n);
            let uh = random_polyform(&mut rng, n, 3, Some(l));
            let v = random_polyform(&mut rng, n, 3, None);
            let sign = if l % 2 == 0 { Rat::one() } else { -Rat::one() };
            assert_eq!(
                uh.wedge(&v).ext_d(),
                uh.ext_d().wedge(&v).add(&uh.wedge(&v.ext_d()).scale(&sign))
            );
        }
    }

    #[test]
    fn pullback_examples() {
        let n = 2;
        let f = PolyForm::term(n, 0b01, &[1, 1], rat(3, 2));
        // identity chart
        let id = PolyMap::identity(n);
        assert_eq!(pullback(&id, &f).unwrap(), f);
        // uniform scaling acts by 2 on Λ¹ and by 4 on Λ²
        let two = PolyMap::scaling(n, rat(2, 1));
        assert_eq!(
            pullback(&two, &PolyForm::constant(n, 0b01, Rat::one())).unwrap(),
            PolyForm::constant(n, 0b01, rat(2, 1))
        );
        assert_eq!(
            pullback(&two, &PolyForm::constant(n, 0b11, Rat::one())).unwrap(),
            PolyForm::constant(n, 0b11, rat(4, 1))
        );
    }

    #[test]
    fn pullback_commutes_with_d() {
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..60 {
            let n = rng.gen_range(2..=3);
            // random affine map plus an occasional quadratic component
            let mut comps = Vec::new();
            for i in 0..n {
                let mut c = PolyForm::coordinate(n, (i % n) + 1).scale(&rat(rng.gen_range(1..3), 1));
                c = c.add(&PolyForm::coordinate(n, ((i + 1) % n) + 1).scale(&rat(rng.gen_range(-2..3), 1)));
                if rng.gen_bool(0.3) {
                    let mut alpha = vec![0u32; n];
                    alpha[i] = 2;
                    c = c.add(&PolyForm::term(n, 0, &alpha, rat(1, 2)));
                }
                comps.push(c);
            }
            let rho = PolyMap::new(comps).unwrap();
            let u = random_polyform(&mut rng, n, 3, None);
            let lhs = pullback(&rho, &u).unwrap().ext_d();
            let rhs = pullback(&rho, &u.ext_d()).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn pullback_is_wedge_homomorphism() {
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..50 {
            let n = rng.gen_range(2..=3);
            let rho = PolyMap::affine(
                &(0..n)
                    .map(|i| (0..n).map(|j| rat(rng.gen_range(-2..=2) + if i == j { 3 } else { 0 }, 1)).collect())
                    .collect::<Vec<_>>(),
                &vec![rat(1, 3); n],
            )
            .unwrap();
            let u = random_polyform(&mut rng, n, 2, None);
            let v = random_polyform(&mut rng, n, 2, None);
            assert_eq!(
                pullback(&rho, &u.wedge(&v)).unwrap(),
                pullback(&rho, &u).unwrap().wedge(&pullback(&rho, &v).unwrap())
            );
        }
    }

    #[test]
    fn pushforward_examples() {
        let n = 2;
        let id = PolyMap::identity(n);
        let f = PolyForm::term(n, 0b01, &[2, 0], rat(5, 3));
        assert_eq!(pushforward_tilde(&id, &f).unwrap(), f);
        // ρ(y)=2y: Jac = 4, J⁻¹ halves Λ¹ → net factor 2
        let two = PolyMap::scaling(n, rat(2, 1));
        assert_eq!(
            pushforward_tilde(&two, &PolyForm::constant(n, 0b01, Rat::one())).unwrap(),
            PolyForm::constant(n, 0b01, rat(2, 1))
        );
    }

    #[test]
    fn pushforward_commutes_with_delta() {
        let mut rng = StdRng::seed_from_u64(61);
        for _ in 0..60 {
            let n = rng.gen_range(2..=3);
            // random invertible affine map (strictly diagonally dominant)
            let rows: Vec<Vec<Rat>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            if i == j {
                                rat(rng.gen_range(5..=8), 1)
                            } else {
                                rat(rng.gen_range(-2..=2), 1)
                            }
                        })
                        .collect()
                })
                .collect();
            let rho = PolyMap::affine(&rows, &vec![rat(-1, 2); n]).unwrap();
            let u = random_polyform(&mut rng, n, 3, None);
            let lhs = pushforward_tilde(&rho, &u).unwrap().int_delta();
            let rhs = pushforward_tilde(&rho, &u.int_delta()).unwrap();
            assert_eq!(lhs, rhs);
        }
        // rotation by 90°: det = 1, δ-commutation exact
        let rot = PolyMap::affine(
            &[vec![rat(0, 1), rat(-1, 1)], vec![rat(1, 1), rat(0, 1)]],
            &[rat(0, 1), rat(0, 1)],
        )
        .unwrap();
        let u = PolyForm::term(2, 0b01, &[1, 1], Rat::one());
        assert_eq!(
            pushforward_tilde(&rot, &u).unwrap().int_delta(),
            pushforward_tilde(&rot, &u.int_delta()).unwrap()
        );
    }

    #[test]
    fn pushforward_rejects_singular() {
        let sing = PolyMap::affine(
            &[vec![rat(1, 1), rat(1, 1)], vec![rat(1, 1), rat(1, 1)]],
            &[rat(0, 1), rat(0, 1)],
        )
        .unwrap();
        let f = PolyForm::constant(2, 0b01, Rat::one());
        assert!(matches!(pushforward_tilde(&sing, &f), Err(Error::Singular(_))));
        // non-affine maps are rejected too
        let quad = PolyMap::new(vec![
            PolyForm::term(2, 0, &[2, 0], Rat::one()),
            PolyForm::coordinate(2, 2),
        ])
        .unwrap();
        assert!(pushforward_tilde(&quad, &f).is_err());
    }

    #[test]
    fn degree_cap_is_enforced() {
        let theta = BumpSpec::default();
        let f = PolyForm::term(2, 0b01, &[8, 0], Rat::one());
        assert!(matches!(
            poincare_rb(&f, &theta),
            Err(Error::DegreeCap { .. })
        ));
    }

    #[test]
    fn json_roundtrip() {
        let f = PolyForm::term(2, 0b01, &[0, 1], rat(3, 2));
        let j = f.to_json();
        assert_eq!(j["n"], 2);
        let back = PolyForm::from_json(&j).unwrap();
        assert_eq!(back, f);
    }
}
