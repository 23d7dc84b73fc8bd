//! Exact exterior algebra Λ of ℝⁿ.
//!
//! A basis blade `e_S` is indexed by a subset `S ⊆ {1,…,n}` stored as a
//! bitmask (bit `i` set ⇔ index `i+1 ∈ S`). Blades are kept in strictly
//! increasing index order; all signs are computed by counting inversions, so
//! there is exactly one canonical form for every multivector.
//!
//! The scalar type is generic: [`ExactMultivector`] (rational coefficients)
//! is the canonical representation used by all algebraic identity tests,
//! while [`NumericMultivector`] is the floating-point view used by the
//! quadrature and mesh layers.

use num_rational::BigRational;
use num_traits::{One, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::{Error, Result};

/// Coefficient ring for multivectors.
pub trait Coeff:
    Clone
    + PartialEq
    + Zero
    + One
    + Neg<Output = Self>
    + Sub<Output = Self>
    + Add<Output = Self>
    + Mul<Output = Self>
{
}
impl<T> Coeff for T where
    T: Clone
        + PartialEq
        + Zero
        + One
        + Neg<Output = T>
        + Sub<Output = T>
        + Add<Output = T>
        + Mul<Output = T>
{
}

/// Blade index set as a bitmask over axes `0..n`.
pub type Blade = u32;

/// Number of indices in the blade (its grade).
#[inline]
pub fn blade_grade(s: Blade) -> usize {
    s.count_ones() as usize
}

/// Sign (+1/-1) picked up when merging `e_S ∧ e_T` into the canonical
/// increasing order; `None` when the sets intersect (the product is zero).
pub fn wedge_sign(s: Blade, t: Blade) -> Option<i32> {
    if s & t != 0 {
        return None;
    }
    let mut inversions = 0u32;
    let mut t_bits = t;
    while t_bits != 0 {
        let low = t_bits.trailing_zeros();
        // indices of S strictly greater than this index of T
        inversions += (s >> (low + 1)).count_ones();
        t_bits &= t_bits - 1;
    }
    Some(if inversions % 2 == 0 { 1 } else { -1 })
}

/// Sign of `e_j ⌟ e_S` (with `j` a single axis, 0-based); `None` if `j ∉ S`.
pub fn interior_sign(j: u32, s: Blade) -> Option<i32> {
    if s & (1 << j) == 0 {
        return None;
    }
    let below = (s & ((1u32 << j) - 1)).count_ones();
    Some(if below % 2 == 0 { 1 } else { -1 })
}

/// Sign `σ(S)` such that `e_S ∧ e_{Sᶜ} = σ(S) e_{1…n}`.
pub fn star_sign(s: Blade, n: usize) -> i32 {
    let full: Blade = (1u32 << n) - 1;
    let comp = full & !s;
    wedge_sign(s, comp).expect("disjoint by construction")
}

/// An element of the exterior algebra Λ of ℝⁿ with exact coefficient type.
///
/// Invariants: all blade keys are subsets of `{1,…,n}`; coefficients equal to
/// zero are never stored, so the zero multivector has an empty map.
#[derive(Clone, PartialEq)]
pub struct Multivector<T: Coeff> {
    dim: usize,
    coeffs: BTreeMap<Blade, T>,
}

/// Canonical exact representation (rational coefficients).
pub type ExactMultivector = Multivector<BigRational>;
/// Floating-point view, used by quadrature-level code. Derived, never
/// canonical for the algebraic identity tests.
pub type NumericMultivector = Multivector<f64>;

impl<T: Coeff> Multivector<T> {
    pub fn zero(dim: usize) -> Self {
        assert!(dim >= 1 && dim <= 31, "dimension out of supported range");
        Multivector { dim, coeffs: BTreeMap::new() }
    }

    pub fn basis(dim: usize, blade: Blade) -> Self {
        Self::term(dim, blade, T::one())
    }

    /// Single term `c · e_S`.
    pub fn term(dim: usize, blade: Blade, c: T) -> Self {
        let mut mv = Self::zero(dim);
        mv.add_term(blade, c);
        mv
    }

    /// `e_j` for a 1-based index `j`.
    pub fn basis_vector(dim: usize, j: usize) -> Self {
        assert!(j >= 1 && j <= dim);
        Self::basis(dim, 1 << (j - 1))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, blade: Blade) -> T {
        self.coeffs.get(&blade).cloned().unwrap_or_else(T::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (Blade, &T)> {
        self.coeffs.iter().map(|(b, c)| (*b, c))
    }

    pub fn add_term(&mut self, blade: Blade, c: T) {
        debug_assert!(blade < (1u32 << self.dim), "blade outside {{1,…,n}}");
        if c.is_zero() {
            return;
        }
        let entry = self.coeffs.entry(blade).or_insert_with(T::zero);
        *entry = entry.clone() + c;
        if entry.is_zero() {
            self.coeffs.remove(&blade);
        }
    }

    /// Homogeneous part of grade `k`.
    pub fn grade_part(&self, k: usize) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(b, _)| blade_grade(**b) == k)
            .map(|(b, c)| (*b, c.clone()))
            .collect();
        Multivector { dim: self.dim, coeffs }
    }

    /// Grades present with a nonzero coefficient.
    pub fn grades(&self) -> Vec<usize> {
        let mut g: Vec<usize> = self.coeffs.keys().map(|b| blade_grade(*b)).collect();
        g.sort_unstable();
        g.dedup();
        g
    }

    pub fn scale(&self, c: &T) -> Self {
        let mut out = Self::zero(self.dim);
        for (b, v) in &self.coeffs {
            out.add_term(*b, v.clone() * c.clone());
        }
        out
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(self.dim, other.dim));
        }
        Ok(())
    }

    /// Exterior product `self ∧ other`.
    pub fn wedge(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut out = Self::zero(self.dim);
        for (s, cs) in &self.coeffs {
            for (t, ct) in &other.coeffs {
                if let Some(sign) = wedge_sign(*s, *t) {
                    let c = cs.clone() * ct.clone();
                    out.add_term(*s | *t, if sign > 0 { c } else { -c });
                }
            }
        }
        Ok(out)
    }

    /// Interior product `self ⌟ other` (left contraction).
    ///
    /// For a 1-vector `a` this is the adjoint of `a ∧ ·` in the blade inner
    /// product. A k-vector `e_T` with `T = {t₁<…<t_k}` acts by iterated
    /// contraction `e_{t_k} ⌟ (… (e_{t₁} ⌟ u))`, extended bilinearly.
    pub fn interior(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut out = Self::zero(self.dim);
        for (t, ct) in &self.coeffs {
            for (s, cs) in &other.coeffs {
                if let Some((blade, sign)) = blade_interior(*t, *s) {
                    let c = ct.clone() * cs.clone();
                    out.add_term(blade, if sign > 0 { c } else { -c });
                }
            }
        }
        Ok(out)
    }

    /// Hodge star `⋆`, normalised so that `e_S ∧ ⋆e_S = e_{1…n}`.
    pub fn hodge_star(&self) -> Self {
        let full: Blade = (1u32 << self.dim) - 1;
        let mut out = Self::zero(self.dim);
        for (s, c) in &self.coeffs {
            let sign = star_sign(*s, self.dim);
            out.add_term(full & !s, if sign > 0 { c.clone() } else { -c.clone() });
        }
        out
    }

    /// Inner product with orthonormal blades.
    pub fn inner(&self, other: &Self) -> Result<T> {
        self.check_dim(other)?;
        let mut acc = T::zero();
        for (s, cs) in &self.coeffs {
            if let Some(ct) = other.coeffs.get(s) {
                acc = acc + cs.clone() * ct.clone();
            }
        }
        Ok(acc)
    }

    /// Map coefficients through `f` (e.g. rational → f64).
    pub fn map_coeffs<U: Coeff>(&self, f: impl Fn(&T) -> U) -> Multivector<U> {
        let mut out = Multivector::zero(self.dim);
        for (b, c) in &self.coeffs {
            out.add_term(*b, f(c));
        }
        out
    }
}

/// `e_T ⌟ e_S` for blade masks: returns the resulting blade and sign, or
/// `None` when the contraction vanishes (`T ⊄ S`).
pub fn blade_interior(t: Blade, s: Blade) -> Option<(Blade, i32)> {
    if t & !s != 0 {
        return None;
    }
    let mut blade = s;
    let mut sign = 1i32;
    // iterate indices of T in increasing order: t₁ first
    let mut bits = t;
    while bits != 0 {
        let j = bits.trailing_zeros();
        sign *= interior_sign(j, blade)?;
        blade &= !(1 << j);
        bits &= bits - 1;
    }
    Some((blade, sign))
}

impl Multivector<f64> {
    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.coeffs.values().map(|c| c * c).sum::<f64>().sqrt()
    }
}

impl ExactMultivector {
    pub fn to_f64(&self) -> NumericMultivector {
        self.map_coeffs(rational_to_f64)
    }
}

/// Exact-to-float conversion used for all derived floating-point views.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or_else(|| {
        let n = num_bigint::BigInt::from(1u64 << 52);
        let scaled = (r * BigRational::from_integer(n.clone())).round();
        scaled.to_integer().to_f64().unwrap_or(f64::NAN) / (1u64 << 52) as f64
    })
}

impl<T: Coeff> Add for &Multivector<T> {
    type Output = Multivector<T>;
    fn add(self, other: Self) -> Multivector<T> {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (b, c) in &other.coeffs {
            out.add_term(*b, c.clone());
        }
        out
    }
}

impl<T: Coeff> Sub for &Multivector<T> {
    type Output = Multivector<T>;
    fn sub(self, other: Self) -> Multivector<T> {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (b, c) in &other.coeffs {
            out.add_term(*b, -c.clone());
        }
        out
    }
}

impl<T: Coeff> Neg for &Multivector<T> {
    type Output = Multivector<T>;
    fn neg(self) -> Multivector<T> {
        let mut out = Multivector::zero(self.dim);
        for (b, c) in &self.coeffs {
            out.add_term(*b, -c.clone());
        }
        out
    }
}

impl<T: Coeff + fmt::Display> fmt::Display for Multivector<T> {
    /// Renders as `c·e{1,3} + …` for diagnostics.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (b, c) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if *b == 0 {
                write!(f, "{}", c)?;
            } else {
                let idx: Vec<String> =
                    (0..self.dim).filter(|i| b & (1 << i) != 0).map(|i| (i + 1).to_string()).collect();
                write!(f, "{}·e{{{}}}", c, idx.join(","))?;
            }
        }
        Ok(())
    }
}

impl<T: Coeff + fmt::Display> fmt::Debug for Multivector<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}
