//! Shared numerical kernels: quadrature nodes, sparse matrices, iterative
//! solvers and norm estimators used by the mesh/operator layers.

use faer::Mat;
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::{Error, Result};

/// Force faer onto its sequential kernels. The parallel matmul path
/// miscomputes products on this class of container environments (observed
/// with 2 rayon threads: `Q·Qᵀ` off by O(1) at 480×352), so every faer-using
/// entry point routes through this guard. Our own rayon parallelism over
/// independent tasks is unaffected.
pub fn ensure_faer_sequential() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre polynomial; accurate to machine
/// precision for the node counts used here (≤ a few hundred).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n(x) and P'_n(x) by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|wi| wi * half).collect(),
    )
}

/// Compressed sparse row matrix over `f64`.
#[derive(Clone, Debug)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<_> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            debug_assert!(r < nrows && c < ncols);
            match merged.last_mut() {
                Some((lr, lc, lv)) if *lr == r && *lc == c => *lv += v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(merged.len());
        let mut values = Vec::with_capacity(merged.len());
        for (r, c, v) in merged {
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Csr { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        ensure_faer_sequential();
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] += self.values[k];
            }
        }
        m
    }

    pub fn transpose(&self) -> Csr {
        let triplets: Vec<(usize, usize, f64)> = self
            .iter_triplets()
            .map(|(r, c, v)| (c, r, v))
            .collect();
        Csr::from_triplets(self.ncols, self.nrows, &triplets)
    }

    pub fn iter_triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Conjugate gradient for symmetric positive definite `A = I + s·D²`, where
/// `D` is given as a sparse symmetric matrix and `s ≥ 0`.
///
/// Used for resolvent applications `(I + itD)⁻¹x = (I − itD)(I + t²D²)⁻¹x`
/// on meshes too large for a dense eigendecomposition.
pub fn cg_shifted_square(
    d: &Csr,
    s: f64,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let apply = |x: &[f64], y: &mut [f64], tmp: &mut [f64]| {
        d.matvec(x, tmp);
        d.matvec(tmp, y);
        for i in 0..n {
            y[i] = x[i] + s * y[i];
        }
    };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let b_norm = norm2(b).max(1e-300);
    let mut rs = dot(&r, &r);
    for _ in 0..max_iter {
        if rs.sqrt() <= tol * b_norm {
            return Ok(x);
        }
        apply(&p, &mut ap, &mut tmp);
        let alpha = rs / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rs.sqrt() <= tol * b_norm * 10.0 {
        Ok(x)
    } else {
        Err(Error::NoConvergence(format!(
            "cg residual {:.3e} after {max_iter} iterations",
            rs.sqrt() / b_norm
        )))
    }
}

/// Conjugate gradient for a symmetric positive semidefinite operator given
/// as a closure, with a rhs assumed consistent (in the operator's range);
/// the iterates then stay in the range and converge to the min-norm
/// solution.
pub fn cg_apply(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let b_norm = norm2(b).max(1e-300);
    let mut rs = dot(&r, &r);
    for _ in 0..max_iter {
        if rs.sqrt() <= tol * b_norm {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rs.sqrt() <= tol * b_norm * 100.0 {
        Ok(x)
    } else {
        Err(Error::NoConvergence(format!(
            "cg residual {:.3e} after {max_iter} iterations",
            rs.sqrt() / b_norm
        )))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm2_c(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ℓ² operator-norm estimate of a linear map given by `apply` and its
/// adjoint `apply_t`, via power iteration on `AᵀA` from a seeded start.
///
/// Returns √λ_max(AᵀA) to the accuracy the iteration count allows; a lower
/// bound by construction.
pub fn operator_norm2_est(
    n_in: usize,
    apply: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    apply_t: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    iters: usize,
    seed: u64,
) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nx = norm2(&x).max(1e-300);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut sigma = 0.0;
    for _ in 0..iters {
        let y = apply(&x);
        let ny = norm2(&y);
        if ny == 0.0 {
            return 0.0;
        }
        sigma = ny;
        let z = apply_t(&y);
        let nz = norm2(&z);
        if nz == 0.0 {
            return ny;
        }
        x = z;
        x.iter_mut().for_each(|v| *v /= nz);
    }
    sigma
}

/// Complex analogue of [`operator_norm2_est`]: power iteration on `AᴴA`.
pub fn operator_norm2_est_c(
    n_in: usize,
    apply: &dyn Fn(&[Complex64]) -> Vec<Complex64>,
    apply_h: &dyn Fn(&[Complex64]) -> Vec<Complex64>,
    iters: usize,
    seed: u64,
) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut x: Vec<Complex64> = (0..n_in)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let nx = norm2_c(&x).max(1e-300);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut sigma = 0.0;
    for _ in 0..iters {
        let y = apply(&x);
        let ny = norm2_c(&y);
        if ny == 0.0 {
            return 0.0;
        }
        sigma = ny;
        let z = apply_h(&y);
        let nz = norm2_c(&z);
        if nz == 0.0 {
            return ny;
        }
        x = z;
        x.iter_mut().for_each(|v| *v /= nz);
    }
    sigma
}

/// Lower-bound estimate of the ℓᵖ → ℓᵖ operator norm of a real matrix-like
/// map by Boyd's dual-exponent power iteration.
///
/// `apply`/`apply_t` may be backed by dense or matrix-free operators; complex
/// outputs are handled through their moduli and phases. The maximum over
/// `starts` random starting vectors is returned together with the iteration
/// count of the best run.
pub struct PNormEstimate {
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn boyd_pnorm_complex(
    n: usize,
    p: f64,
    apply: &dyn Fn(&[Complex64]) -> Vec<Complex64>,
    apply_adj: &dyn Fn(&[Complex64]) -> Vec<Complex64>,
    starts: usize,
    max_iter: usize,
    seed: u64,
) -> PNormEstimate {
    assert!(p > 1.0 && p.is_finite());
    let q = p / (p - 1.0);
    let mut best = PNormEstimate { norm: 0.0, iterations: 0, converged: false };
    for s in 0..starts {
        let mut rng = StdRng::seed_from_u64(seed.wrapping_add(s as u64));
        let mut x: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0))
            .collect();
        normalize_p(&mut x, p);
        let mut gamma_prev = 0.0;
        let mut iters = 0;
        let mut converged = false;
        for it in 0..max_iter {
            iters = it + 1;
            let y = apply(&x);
            let gamma = pnorm(&y, p);
            if gamma == 0.0 {
                converged = true;
                break;
            }
            // dual vector of y in ℓᵖ
            let psi = dual_vector(&y, p);
            let z = apply_adj(&psi);
            let zq = pnorm(&z, q);
            // convergence test: ‖z‖_q ≤ Re⟨z, x⟩ up to tolerance
            let zx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if zq <= zx * (1.0 + 1e-10) + 1e-14 || (gamma - gamma_prev).abs() <= 1e-10 * gamma {
                gamma_prev = gamma;
                converged = true;
                break;
            }
            gamma_prev = gamma;
            x = dual_vector(&z, q);
        }
        if gamma_prev > best.norm {
            best = PNormEstimate { norm: gamma_prev, iterations: iters, converged };
        }
    }
    best
}

/// ‖x‖_p with the counting measure (mass weights cancel in operator norms
/// for uniform mass).
pub fn pnorm(x: &[Complex64], p: f64) -> f64 {
    if p.is_infinite() {
        return x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    }
    x.iter().map(|v| v.norm().powf(p)).sum::<f64>().powf(1.0 / p)
}

fn normalize_p(x: &mut [Complex64], p: f64) {
    let n = pnorm(x, p).max(1e-300);
    x.iter_mut().for_each(|v| *v /= n);
}

/// The ℓᵖ duality map: `dual(y)` has unit ℓ^{p'} norm and ⟨dual(y), y⟩ = ‖y‖_p.
fn dual_vector(y: &[Complex64], p: f64) -> Vec<Complex64> {
    let ny = pnorm(y, p).max(1e-300);
    y.iter()
        .map(|v| {
            let m = v.norm();
            if m == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                (v / m) * (m / ny).powf(p - 1.0)
            }
        })
        .collect()
}

/// Least-squares straight-line fit `y ≈ a + b x`; returns `(a, b, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let denom = n * sxx - sx * sx;
    let b = (n * sxy - sx * sy) / denom;
    let a = (sy - b * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(xv, yv)| {
            let fit = a + b * xv;
            (yv - fit) * (yv - fit)
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (a, b, r2)
}
