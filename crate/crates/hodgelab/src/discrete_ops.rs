//! Discrete Hodge-Dirac operators `D = d_h + δ̲_h` on the graded cochain
//! space of a cubical complex.
//!
//! With the uniform mass `hⁿ` the codifferential is exactly `δ̲_h = (1/h)dᵀ`,
//! so the tangential operator is symmetric as a plain matrix. The boundary
//! condition decides which cells carry degrees of freedom: the tangential
//! (natural) condition keeps every cell, the normal condition keeps interior
//! cells only (zero extension across ∂Ω_h).

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use faer::Mat;
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::linalg::Csr;
use crate::mesh::CubicalComplex;
use crate::{Error, Result};

/// Dense spectral caches are built only up to this size; larger operators
/// fall back to iterative solves.
pub const EIGEN_CACHE_CAP: usize = 6000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryCondition {
    Tangential,
    Normal,
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCondition::Tangential => write!(f, "tangential"),
            BoundaryCondition::Normal => write!(f, "normal"),
        }
    }
}

enum OperatorKind {
    SelfAdjoint { eigen: OnceLock<(Vec<f64>, Mat<f64>)> },
    Perturbed { b_diag: Vec<Complex64>, kappa: f64 },
}

/// A matrix operator on the graded cochain space, with mass weights,
/// boundary-condition tag and (for the unperturbed case) a cached
/// eigendecomposition.
pub struct AssembledOperator {
    pub complex: Arc<CubicalComplex>,
    pub bc: BoundaryCondition,
    /// reduced dof → (grade, local cell id)
    pub dofs: Vec<(usize, usize)>,
    dof_lookup: HashMap<(usize, usize), usize>,
    /// offsets per grade in the reduced indexing (length dim+2)
    pub grading: Vec<usize>,
    /// the grade-raising part `d_h` (scaled by 1/h) on the reduced space
    pub d_part: Csr,
    /// its transpose `δ̲_h`
    pub delta_part: Csr,
    pub mass_weight: f64,
    kind: OperatorKind,
}

impl AssembledOperator {
    pub fn n(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_self_adjoint(&self) -> bool {
        matches!(self.kind, OperatorKind::SelfAdjoint { .. })
    }

    pub fn perturbation(&self) -> Option<(&[Complex64], f64)> {
        match &self.kind {
            OperatorKind::Perturbed { b_diag, kappa } => Some((b_diag, *kappa)),
            _ => None,
        }
    }

    pub fn dof_of_cell(&self, grade: usize, id: usize) -> Option<usize> {
        self.dof_lookup.get(&(grade, id)).copied()
    }

    /// `D x` for real input (unperturbed operators only).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert!(self.is_self_adjoint(), "use apply_c for perturbed operators");
        let n = self.n();
        let mut y = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        self.d_part.matvec(x, &mut y);
        self.delta_part.matvec(x, &mut tmp);
        for i in 0..n {
            y[i] += tmp[i];
        }
        y
    }

    /// `D x` on complex vectors; includes the `B⁻¹ δ̲ B` conjugation when
    /// perturbed.
    pub fn apply_c(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        match &self.kind {
            OperatorKind::SelfAdjoint { .. } => {
                let mut y = csr_matvec_c(&self.d_part, x);
                let t = csr_matvec_c(&self.delta_part, x);
                for i in 0..n {
                    y[i] += t[i];
                }
                y
            }
            OperatorKind::Perturbed { b_diag, .. } => {
                let bx: Vec<Complex64> = x.iter().zip(b_diag).map(|(v, b)| v * b).collect();
                let mut delta_bx = csr_matvec_c(&self.delta_part, &bx);
                for (v, b) in delta_bx.iter_mut().zip(b_diag) {
                    *v /= b;
                }
                let dx = csr_matvec_c(&self.d_part, x);
                dx.into_iter().zip(delta_bx).map(|(a, b)| a + b).collect()
            }
        }
    }

    /// `d_h x` alone (grade-raising part).
    pub fn apply_d(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.d_part.matvec(x, &mut y);
        y
    }

    /// `δ̲_h x` alone (grade-lowering part, unperturbed).
    pub fn apply_delta(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.delta_part.matvec(x, &mut y);
        y
    }

    /// Dense matrix of `D` (unperturbed).
    pub fn dense(&self) -> Mat<f64> {
        crate::linalg::ensure_faer_sequential();
        assert!(self.is_self_adjoint());
        let mut m = self.d_part.to_dense();
        for (r, c, v) in self.delta_part.iter_triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Dense complex matrix of `D` (any kind).
    pub fn dense_c(&self) -> Mat<Complex64> {
        crate::linalg::ensure_faer_sequential();
        let n = self.n();
        let mut m = Mat::<Complex64>::zeros(n, n);
        for (r, c, v) in self.d_part.iter_triplets() {
            m[(r, c)] += Complex64::new(v, 0.0);
        }
        match &self.kind {
            OperatorKind::SelfAdjoint { .. } => {
                for (r, c, v) in self.delta_part.iter_triplets() {
                    m[(r, c)] += Complex64::new(v, 0.0);
                }
            }
            OperatorKind::Perturbed { b_diag, .. } => {
                for (r, c, v) in self.delta_part.iter_triplets() {
                    m[(r, c)] += b_diag[c] / b_diag[r] * v;
                }
            }
        }
        m
    }

    /// Cached eigendecomposition `(Λ, V)` with `D = V Λ Vᵀ`; dense, only for
    /// `n ≤` [`EIGEN_CACHE_CAP`].
    pub fn eigen(&self) -> Result<&(Vec<f64>, Mat<f64>)> {
        crate::linalg::ensure_faer_sequential();
        let OperatorKind::SelfAdjoint { eigen } = &self.kind else {
            return Err(Error::InvalidArgument(
                "spectral cache only exists for unperturbed operators".into(),
            ));
        };
        if self.n() > EIGEN_CACHE_CAP {
            return Err(Error::InvalidArgument(format!(
                "n = {} exceeds the dense eigendecomposition cap {EIGEN_CACHE_CAP}",
                self.n()
            )));
        }
        if eigen.get().is_none() {
            let m = self.dense();
            let evd = m
                .self_adjoint_eigen(faer::Side::Lower)
                .map_err(|e| Error::Singular(format!("eigendecomposition failed: {e:?}")))?;
            let vals: Vec<f64> = (0..self.n()).map(|i| evd.S()[i]).collect();
            let _ = eigen.set((vals, evd.U().to_owned()));
        }
        Ok(eigen.get().expect("just set"))
    }

    /// Largest |eigenvalue| (via the cache when available, else power
    /// iteration).
    pub fn spectral_radius_est(&self) -> f64 {
        if self.is_self_adjoint() && self.n() <= EIGEN_CACHE_CAP {
            if let Ok((vals, _)) = self.eigen() {
                return vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            }
        }
        let mut apply = |x: &[f64]| self.apply(x);
        let mut apply_t = |x: &[f64]| self.apply(x);
        crate::linalg::operator_norm2_est(self.n(), &mut apply, &mut apply_t, 60, 17)
    }

    /// Matrix-market-style sparse export of `D` plus a JSON sidecar.
    pub fn export_matrix_market(&self) -> (String, serde_json::Value) {
        assert!(self.is_self_adjoint());
        let mut trip: Vec<(usize, usize, f64)> = self.d_part.iter_triplets().collect();
        trip.extend(self.delta_part.iter_triplets());
        trip.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut body = String::new();
        body.push_str("%%MatrixMarket matrix coordinate real general\n");
        body.push_str(&format!("{} {} {}\n", self.n(), self.n(), trip.len()));
        for (r, c, v) in trip {
            body.push_str(&format!("{} {} {:.17e}\n", r + 1, c + 1, v));
        }
        let sidecar = serde_json::json!({
            "bc": self.bc.to_string(),
            "h": self.complex.h,
            "n": self.n(),
            "grading_offsets": self.grading,
            "mass_weight": self.mass_weight,
        });
        (body, sidecar)
    }
}

fn csr_matvec_c(m: &Csr, x: &[Complex64]) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); m.nrows];
    for r in 0..m.nrows {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in m.row_ptr[r]..m.row_ptr[r + 1] {
            acc += x[m.col_idx[k]] * m.values[k];
        }
        y[r] = acc;
    }
    y
}

/// Assemble the Hodge-Dirac operator with the requested boundary condition.
pub fn assemble_dirac(complex: &Arc<CubicalComplex>, bc: BoundaryCondition) -> AssembledOperator {
    let dim = complex.dim;
    let keep = |grade: usize, id: usize| match bc {
        BoundaryCondition::Tangential => true,
        BoundaryCondition::Normal => !complex.is_boundary(grade, id),
    };
    let mut dofs = Vec::new();
    let mut dof_lookup = HashMap::new();
    let mut grading = vec![0usize];
    for g in 0..=dim {
        for id in 0..complex.num_cells(g) {
            if keep(g, id) {
                dof_lookup.insert((g, id), dofs.len());
                dofs.push((g, id));
            }
        }
        grading.push(dofs.len());
    }
    let n = dofs.len();
    let inv_h = 1.0 / complex.h;
    let mut triplets = Vec::new();
    for g in 0..dim {
        let inc = complex.coboundary(g).expect("grade in range");
        for (row, col, v) in inc.iter_triplets() {
            let (Some(ri), Some(ci)) = (dof_lookup.get(&(g + 1, row)), dof_lookup.get(&(g, col)))
            else {
                continue;
            };
            triplets.push((*ri, *ci, v * inv_h));
        }
    }
    let d_part = Csr::from_triplets(n, n, &triplets);
    let delta_part = d_part.transpose();
    AssembledOperator {
        complex: complex.clone(),
        bc,
        dofs,
        dof_lookup,
        grading,
        d_part,
        delta_part,
        mass_weight: complex.h.powi(dim as i32),
        kind: OperatorKind::SelfAdjoint { eigen: OnceLock::new() },
    }
}

/// The Hodge-Laplacian `−Δ = D²` as a dense matrix (block diagonal in the
/// grading, positive semidefinite).
pub fn hodge_laplacian(op: &AssembledOperator) -> Mat<f64> {
        crate::linalg::ensure_faer_sequential();
    let d = op.dense();
    &d * &d
}

/// A pointwise invertible coefficient field on Λ, realised blade-diagonally:
/// each cell's component is scaled by one complex number with `Re b ≥ κ`.
#[derive(Clone)]
pub struct CoefficientField {
    pub kappa: f64,
    pub diag: Vec<Complex64>,
}

impl CoefficientField {
    pub fn identity(op: &AssembledOperator) -> Self {
        CoefficientField { kappa: 1.0, diag: vec![Complex64::new(1.0, 0.0); op.n()] }
    }

    pub fn scalar(op: &AssembledOperator, c: f64) -> Self {
        CoefficientField { kappa: c, diag: vec![Complex64::new(c, 0.0); op.n()] }
    }

    /// Per-cell values from a closure of the barycenter and blade mask.
    pub fn from_fn(
        op: &AssembledOperator,
        kappa: f64,
        f: impl Fn(&[f64], u32) -> Complex64,
    ) -> Result<Self> {
        let mut diag = Vec::with_capacity(op.n());
        for &(g, id) in &op.dofs {
            let cell = op.complex.cell(g, id);
            let x = op.complex.barycenter(cell);
            let b = f(&x, cell.axes);
            if b.re < kappa - 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "coefficient {b} violates Re B ≥ κ = {kappa}"
                )));
            }
            if b.norm() < 1e-14 {
                return Err(Error::Singular("singular coefficient".into()));
            }
            diag.push(b);
        }
        Ok(CoefficientField { kappa, diag })
    }

    /// Random coercive field: `Re b ∈ [κ, κ+amp]`, `Im b ∈ [−amp/2, amp/2]`,
    /// deterministic in the seed.
    pub fn random_coercive(op: &AssembledOperator, kappa: f64, amp: f64, seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let diag = (0..op.n())
            .map(|_| {
                Complex64::new(
                    kappa + rng.gen_range(0.0..amp),
                    rng.gen_range(-amp / 2.0..amp / 2.0),
                )
            })
            .collect();
        CoefficientField { kappa, diag }
    }

    /// Spot-check of the coercivity invariant on random vectors.
    pub fn check_coercive(&self, samples: usize, seed: u64) -> bool {
        let mut rng = StdRng::seed_from_u64(seed);
        for _ in 0..samples {
            let i = rng.gen_range(0..self.diag.len());
            let v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let quad = (self.diag[i] * v * v.conj()).re;
            if quad < (self.kappa - 1e-10) * v.norm_sqr() {
                return false;
            }
        }
        true
    }

    pub fn sup_norm(&self) -> f64 {
        self.diag.iter().map(|b| b.norm()).fold(0.0, f64::max)
    }

    pub fn inv_sup_norm(&self) -> f64 {
        self.diag.iter().map(|b| 1.0 / b.norm()).fold(0.0, f64::max)
    }
}

/// Assemble the perturbed operator `D_B = d + B⁻¹ δ̲ B`.
pub fn assemble_perturbed(
    complex: &Arc<CubicalComplex>,
    field: &CoefficientField,
) -> Result<AssembledOperator> {
    let base = assemble_dirac(complex, BoundaryCondition::Tangential);
    if field.diag.len() != base.n() {
        return Err(Error::DimensionMismatch(field.diag.len(), base.n()));
    }
    if field.diag.iter().any(|b| b.norm() < 1e-14) {
        return Err(Error::Singular("singular B on some cell".into()));
    }
    Ok(AssembledOperator {
        kind: OperatorKind::Perturbed { b_diag: field.diag.clone(), kappa: field.kappa },
        ..base
    })
}

/// Eigenvalues of a (possibly non-self-adjoint) assembled operator.
pub fn eigenvalues_c(op: &AssembledOperator) -> Result<Vec<Complex64>> {
        crate::linalg::ensure_faer_sequential();
    let m = op.dense_c();
    m.eigenvalues()
        .map_err(|e| Error::Singular(format!("eigenvalue computation failed: {e:?}")))
}

/// Measured double-sector angle of a spectrum cloud: the largest
/// `|arg λ|` folded onto `[0, π/2]`, ignoring eigenvalues below `tol`.
pub fn measured_sector_angle(eigs: &[Complex64], tol: f64) -> f64 {
    eigs.iter()
        .filter(|z| z.norm() > tol)
        .map(|z| {
            let a = z.arg().abs();
            a.min(std::f64::consts::PI - a)
        })
        .fold(0.0, f64::max)
}
