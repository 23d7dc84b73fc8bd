//! Discrete Hodge decomposition `C = R(d) ⊕ R(δ̲) ⊕ N(D)` with
//! mass-orthogonal projections, harmonic spaces (whose dimensions are the
//! Betti numbers of the voxel domain), discrete potential operators and
//! p-dependent projection-norm estimates.

use faer::Mat;
use num_complex::Complex64;

use crate::discrete_ops::AssembledOperator;
use crate::linalg::{boyd_pnorm_complex, PNormEstimate};
use crate::{Error, Result};

/// Relative singular-value drop tolerance for rank decisions.
pub const RANK_DROP_TOL: f64 = 1e-10;

/// The three mass-orthogonal projections of the discrete Hodge
/// decomposition, with per-grade rank bookkeeping and a harmonic basis.
pub struct HodgeSplit {
    pub p_d: Mat<f64>,
    pub p_delta: Mat<f64>,
    pub p_n: Mat<f64>,
    /// rank of the grade-ℓ block of `d_h`, for ℓ = 0..dim
    pub ranks_d: Vec<usize>,
    /// harmonic dimension per grade 0..=dim (the Betti numbers)
    pub harmonic_dims: Vec<usize>,
    /// columns spanning `ker D = N(d) ∩ N(δ̲)`, grouped by grade
    pub harmonic_basis: Mat<f64>,
}

struct GradeBlockSvd {
    rank: usize,
    /// range basis of the block (grade ℓ+1 side)
    u_r: Mat<f64>,
    /// row-space basis (grade ℓ side)
    v_r: Mat<f64>,
    /// leading singular values
    sigma: Vec<f64>,
}

/// Dense grade block `d_ℓ` of the grade-raising part.
fn d_block(op: &AssembledOperator, ell: usize) -> Mat<f64> {
    let r0 = op.grading[ell + 1];
    let r1 = op.grading[ell + 2];
    let c0 = op.grading[ell];
    let c1 = op.grading[ell + 1];
    let mut m = Mat::zeros(r1 - r0, c1 - c0);
    for (r, c, v) in op.d_part.iter_triplets() {
        if r >= r0 && r < r1 && c >= c0 && c < c1 {
            m[(r - r0, c - c0)] += v;
        }
    }
    m
}

fn block_svd(b: &Mat<f64>) -> Result<GradeBlockSvd> {
    if b.nrows() == 0 || b.ncols() == 0 {
        return Ok(GradeBlockSvd { rank: 0, u_r: Mat::zeros(b.nrows(), 0), v_r: Mat::zeros(b.ncols(), 0), sigma: vec![] });
    }
    let svd = b
        .svd()
        .map_err(|e| Error::Singular(format!("svd failed: {e:?}")))?;
    let k = b.nrows().min(b.ncols());
    let sigma: Vec<f64> = (0..k).map(|i| svd.S()[i]).collect();
    let smax = sigma.first().copied().unwrap_or(0.0);
    let rank = sigma.iter().filter(|s| **s > RANK_DROP_TOL * smax && **s > 0.0).count();
    let u = svd.U();
    let v = svd.V();
    let mut u_r = Mat::zeros(b.nrows(), rank);
    let mut v_r = Mat::zeros(b.ncols(), rank);
    for j in 0..rank {
        for i in 0..b.nrows() {
            u_r[(i, j)] = u[(i, j)];
        }
        for i in 0..b.ncols() {
            v_r[(i, j)] = v[(i, j)];
        }
    }
    Ok(GradeBlockSvd { rank, u_r, v_r, sigma: sigma.into_iter().take(rank).collect() })
}

fn accumulate_outer(target: &mut Mat<f64>, basis: &Mat<f64>, offset: usize) {
    crate::linalg::ensure_faer_sequential();
    // target[off.., off..] += basis · basisᵀ
    let p = basis * basis.transpose();
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            target[(offset + i, offset + j)] += p[(i, j)];
        }
    }
}

/// Compute the Hodge projectors of an unperturbed operator via per-grade
/// rank-revealing SVDs of the `d_h` blocks.
pub fn hodge_projectors(op: &AssembledOperator) -> Result<HodgeSplit> {
        crate::linalg::ensure_faer_sequential();
    if !op.is_self_adjoint() {
        return Err(Error::InvalidArgument(
            "hodge projectors need the unperturbed self-adjoint operator".into(),
        ));
    }
    let n = op.n();
    let dim = op.complex.dim;
    let svds: Vec<GradeBlockSvd> =
        (0..dim).map(|l| block_svd(&d_block(op, l))).collect::<Result<_>>()?;
    let mut p_d = Mat::zeros(n, n);
    let mut p_delta = Mat::zeros(n, n);
    for l in 0..dim {
        // range(d_ℓ) sits in grade ℓ+1; range(δ̲ from grade ℓ+1) sits in grade ℓ
        accumulate_outer(&mut p_d, &svds[l].u_r, op.grading[l + 1]);
        accumulate_outer(&mut p_delta, &svds[l].v_r, op.grading[l]);
    }
    let mut p_n = Mat::zeros(n, n);
    for i in 0..n {
        p_n[(i, i)] = 1.0;
    }
    p_n -= &p_d;
    p_n -= &p_delta;

    // harmonic dimensions and basis per grade: ker(d_ℓ) ∩ ker(δ̲_ℓ)
    let mut harmonic_dims = Vec::with_capacity(dim + 1);
    let mut harmonic_cols: Vec<Vec<f64>> = Vec::new();
    for g in 0..=dim {
        let n_g = op.grading[g + 1] - op.grading[g];
        let rank_up = if g < dim { svds[g].rank } else { 0 };
        let rank_down = if g > 0 { svds[g - 1].rank } else { 0 };
        let hdim = n_g - rank_up - rank_down;
        harmonic_dims.push(hdim);
        if hdim == 0 || n_g == 0 {
            continue;
        }
        // eigenvectors of the grade block of P_N with eigenvalue ≈ 1
        let off = op.grading[g];
        let mut block = Mat::zeros(n_g, n_g);
        for i in 0..n_g {
            for j in 0..n_g {
                block[(i, j)] = p_n[(off + i, off + j)];
            }
        }
        let evd = block
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Singular(format!("harmonic basis eigen failed: {e:?}")))?;
        let mut found = 0;
        for k in (0..n_g).rev() {
            if evd.S()[k] > 0.5 {
                let mut col = vec![0.0; n];
                for i in 0..n_g {
                    col[off + i] = evd.U()[(i, k)];
                }
                harmonic_cols.push(col);
                found += 1;
            }
        }
        if found != hdim {
            return Err(Error::Singular(format!(
                "harmonic subspace of grade {g}: rank count {hdim} but projector found {found}"
            )));
        }
    }
    let mut harmonic_basis = Mat::zeros(n, harmonic_cols.len());
    for (j, col) in harmonic_cols.iter().enumerate() {
        for i in 0..n {
            harmonic_basis[(i, j)] = col[i];
        }
    }
    Ok(HodgeSplit {
        p_d,
        p_delta,
        p_n,
        ranks_d: svds.iter().map(|s| s.rank).collect(),
        harmonic_dims,
        harmonic_basis,
    })
}

impl HodgeSplit {
    /// Max-norm defect of `P_d + P_δ̲ + P_N = I`.
    pub fn completeness_defect(&self) -> f64 {
        let n = self.p_d.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let sum = self.p_d[(i, j)] + self.p_delta[(i, j)] + self.p_n[(i, j)];
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((sum - expect).abs());
            }
        }
        worst
    }

    /// Max-norm of pairwise products and idempotence defects.
    pub fn orthogonality_defect(&self) -> f64 {
        let prods = [
            &self.p_d * &self.p_delta,
            &self.p_d * &self.p_n,
            &self.p_delta * &self.p_n,
            &self.p_d * &self.p_d - &self.p_d,
            &self.p_delta * &self.p_delta - &self.p_delta,
            &self.p_n * &self.p_n - &self.p_n,
        ];
        let mut worst = 0.0f64;
        for m in &prods {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    worst = worst.max(m[(i, j)].abs());
                }
            }
        }
        worst
    }
}

/// Discrete potential operators: `R̲` (potential for `d_h`) and `S̲`
/// (potential for `δ̲_h`), built from the same per-grade SVDs as mass-scaled
/// pseudo-inverses.
///
/// `d_h R̲ u = u` on `R(d_h)`, `R̲ = 0` on `R(δ̲) ⊕ N(D)`, and
/// `I = d R̲ + R̲ d + P_N`.
pub struct DiscretePotentials {
    pub r_for_d: Mat<f64>,
    pub s_for_delta: Mat<f64>,
}

pub fn discrete_potential(op: &AssembledOperator) -> Result<DiscretePotentials> {
        crate::linalg::ensure_faer_sequential();
    if !op.is_self_adjoint() {
        return Err(Error::InvalidArgument("potentials need the unperturbed operator".into()));
    }
    let n = op.n();
    let dim = op.complex.dim;
    let mut r_for_d = Mat::zeros(n, n);
    let mut s_for_delta = Mat::zeros(n, n);
    for l in 0..dim {
        let svd = block_svd(&d_block(op, l))?;
        if svd.rank == 0 {
            continue;
        }
        // pinv(d_ℓ) = V Σ⁻¹ Uᵀ : grade ℓ+1 → grade ℓ
        let mut vs = svd.v_r.clone();
        for j in 0..svd.rank {
            for i in 0..vs.nrows() {
                vs[(i, j)] /= svd.sigma[j];
            }
        }
        let pinv_d = &vs * svd.u_r.transpose();
        let (ro, co) = (op.grading[l], op.grading[l + 1]);
        for i in 0..pinv_d.nrows() {
            for j in 0..pinv_d.ncols() {
                r_for_d[(ro + i, co + j)] += pinv_d[(i, j)];
            }
        }
        // pinv(δ̲ = d_ℓᵀ) = U Σ⁻¹ Vᵀ : grade ℓ → grade ℓ+1
        let mut us = svd.u_r.clone();
        for j in 0..svd.rank {
            for i in 0..us.nrows() {
                us[(i, j)] /= svd.sigma[j];
            }
        }
        let pinv_delta = &us * svd.v_r.transpose();
        let (ro, co) = (op.grading[l + 1], op.grading[l]);
        for i in 0..pinv_delta.nrows() {
            for j in 0..pinv_delta.ncols() {
                s_for_delta[(ro + i, co + j)] += pinv_delta[(i, j)];
            }
        }
    }
    Ok(DiscretePotentials { r_for_d, s_for_delta })
}

/// The potential map `Z = P_{R(d)} S̲ P_{R(δ̲)} + P_{R(δ̲)} R̲ P_{R(d)}`,
/// a right inverse of `D` on its range.
pub fn potential_map_z(
    potentials: &DiscretePotentials,
    split: &HodgeSplit,
) -> Mat<f64> {
    crate::linalg::ensure_faer_sequential();
    &(&split.p_d * &potentials.s_for_delta) * &split.p_delta
        + &(&split.p_delta * &potentials.r_for_d) * &split.p_d
}

/// Lower-bound estimate of the ℓᵖ operator norm of a real matrix via Boyd
/// iteration from several random starts (the uniform mass weight cancels in
/// the operator norm).
pub fn projector_pnorm(m: &Mat<f64>, p: f64, starts: usize, seed: u64) -> Result<PNormEstimate> {
    if !(1.0 < p && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("p = {p} out of (1, ∞)")));
    }
    let n = m.nrows();
    let apply = move |x: &[Complex64]| apply_real_mat(m, x, false);
    let apply_adj = move |x: &[Complex64]| apply_real_mat(m, x, true);
    Ok(boyd_pnorm_complex(n, p, &apply, &apply_adj, starts, 200, seed))
}

pub(crate) fn apply_real_mat(m: &Mat<f64>, x: &[Complex64], transpose: bool) -> Vec<Complex64> {
    let (rows, cols) = if transpose { (m.ncols(), m.nrows()) } else { (m.nrows(), m.ncols()) };
    assert_eq!(x.len(), cols);
    let mut y = vec![Complex64::new(0.0, 0.0); rows];
    for i in 0..rows {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..cols {
            let v = if transpose { m[(j, i)] } else { m[(i, j)] };
            if v != 0.0 {
                acc += x[j] * v;
            }
        }
        y[i] = acc;
    }
    y
}

/// Relative residual `‖d R̲ u − u‖/‖u‖` over random `u ∈ R(d_h)`.
pub fn potential_contract_residual(
    op: &AssembledOperator,
    potentials: &DiscretePotentials,
    trials: usize,
    seed: u64,
) -> f64 {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(seed);
    let n = op.n();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = op.apply_d(&w);
        let norm_u = crate::linalg::norm2(&u);
        if norm_u < 1e-12 {
            continue;
        }
        let mut ru = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += potentials.r_for_d[(i, j)] * u[j];
            }
            ru[i] = acc;
        }
        let dru = op.apply_d(&ru);
        let err: f64 = dru
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(err / norm_u);
    }
    worst
}
