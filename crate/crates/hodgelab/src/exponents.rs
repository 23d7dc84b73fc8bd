//! Exact exponent arithmetic: Hölder conjugate `p′`, lower Sobolev exponent
//! `p_S`, the trace exponent `p* = np/(n−1)`, and the Sobolev exponent `p^S`.

use num_rational::Rational64;

/// An exponent value, which may be infinite or multivalued (`p^S` at `p = n`
/// takes any value in `[p, ∞)`).
#[derive(Clone, Debug, PartialEq)]
pub enum Exponent {
    Finite(Rational64),
    Infinite,
    /// Multivalued on `[p, ∞)`, tagged with the lower endpoint.
    Multivalued(Rational64),
}

impl Exponent {
    pub fn as_f64(&self) -> f64 {
        match self {
            Exponent::Finite(r) => *r.numer() as f64 / *r.denom() as f64,
            Exponent::Infinite => f64::INFINITY,
            Exponent::Multivalued(r) => *r.numer() as f64 / *r.denom() as f64,
        }
    }
}

impl std::fmt::Display for Exponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exponent::Finite(r) => write!(f, "{r}"),
            Exponent::Infinite => write!(f, "inf"),
            Exponent::Multivalued(r) => write!(f, "[{r},inf)"),
        }
    }
}

/// The full exponent table for a given `p` and dimension `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentTable {
    pub p: Rational64,
    pub n: u32,
    /// Hölder conjugate: 1/p + 1/p′ = 1.
    pub conjugate: Exponent,
    /// Lower Sobolev exponent: 1/p_S = 1/p + 1/n.
    pub lower_sobolev: Rational64,
    /// Trace exponent p* = np/(n−1).
    pub trace: Rational64,
    /// Sobolev exponent: 1/p^S = 1/p − 1/n for p < n; ∞ for p > n;
    /// multivalued at p = n.
    pub sobolev: Exponent,
}

/// Compute `{p′, p_S, p*, p^S}` exactly.
pub fn exponents(p: Rational64, n: u32) -> crate::Result<ExponentTable> {
    let one = Rational64::new(1, 1);
    if p < one {
        return Err(crate::Error::InvalidArgument(format!("p = {p} < 1")));
    }
    if n < 2 {
        return Err(crate::Error::InvalidArgument(format!("n = {n} < 2")));
    }
    let nq = Rational64::new(n as i64, 1);
    let conjugate = if p == one {
        Exponent::Infinite
    } else {
        Exponent::Finite(p / (p - one))
    };
    let lower_sobolev = nq * p / (nq + p);
    let trace = nq * p / (nq - one);
    let sobolev = if p < nq {
        Exponent::Finite(nq * p / (nq - p))
    } else if p == nq {
        Exponent::Multivalued(p)
    } else {
        Exponent::Infinite
    };
    Ok(ExponentTable { p, n, conjugate, lower_sobolev, trace, sobolev })
}
