//! Cubical complexes over voxelised domains.
//!
//! A domain is voxelised by keeping every grid cube whose center passes the
//! indicator test; the complex then contains all faces of kept voxels. An
//! `ℓ`-cell is an integer anchor plus a set of `ℓ` spanned axes, and a
//! [`Cochain`] assigns one scalar to every cell. Mass weights are `hⁿ`
//! uniformly across grades, which makes the discrete codifferential exactly
//! `(1/h)·dᵀ` (see `discrete_ops`).

use std::collections::HashMap;
use std::sync::Arc;

use crate::linalg::Csr;
use crate::polyform::PolyForm;
use crate::{Error, Result};

pub const DEFAULT_CELL_CAP: usize = 200_000;

/// Integer anchor of a cell; unused trailing entries stay zero.
pub type Anchor = [i32; 3];

/// One cell: anchor vertex plus the bitmask of spanned axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub axes: u32,
    pub anchor: Anchor,
}

impl Cell {
    pub fn grade(&self) -> usize {
        self.axes.count_ones() as usize
    }
}

/// A cubical complex on a voxelised domain.
pub struct CubicalComplex {
    pub dim: usize,
    pub h: f64,
    /// cells per grade, in frozen lexicographic order (axes mask, anchor)
    cells: Vec<Vec<Cell>>,
    /// map cell → (grade, local id)
    index: HashMap<Cell, (usize, usize)>,
    /// signed incidence d_ℓ : C^ℓ → C^{ℓ+1}, entries in {−1, 0, +1}
    coboundary: Vec<Csr>,
    /// per grade, whether the cell lies on ∂Ω_h
    boundary_flags: Vec<Vec<bool>>,
    voxels: std::collections::HashSet<Anchor>,
    pub domain_name: String,
}

impl CubicalComplex {
    /// Voxelise `indicator` over `bbox` with spacing `h` and build all faces.
    pub fn build(
        indicator: &dyn Fn(&[f64]) -> bool,
        bbox: (&[f64], &[f64]),
        h: f64,
        cap: usize,
        name: &str,
    ) -> Result<Self> {
        let dim = bbox.0.len();
        assert!(dim >= 1 && dim <= 3, "supported dimensions are 1..=3");
        if h <= 0.0 {
            return Err(Error::InvalidArgument("spacing must be positive".into()));
        }
        let lo: Vec<i32> = bbox.0.iter().map(|v| (v / h).floor() as i32 - 1).collect();
        let hi: Vec<i32> = bbox.1.iter().map(|v| (v / h).ceil() as i32 + 1).collect();
        let mut voxels = std::collections::HashSet::new();
        let mut stack = vec![0i32; dim];
        enumerate_grid(&lo, &hi, &mut stack, 0, &mut |idx| {
            let center: Vec<f64> = idx.iter().map(|i| h * (*i as f64 + 0.5)).collect();
            if indicator(&center) {
                let mut a: Anchor = [0; 3];
                a[..dim].copy_from_slice(idx);
                voxels.insert(a);
            }
        });
        if voxels.is_empty() {
            return Err(Error::EmptyVoxelSet);
        }

        // collect all faces of all voxels
        let mut per_grade: Vec<std::collections::BTreeSet<Cell>> =
            (0..=dim).map(|_| std::collections::BTreeSet::new()).collect();
        let full_axes: u32 = (1 << dim) - 1;
        for v in &voxels {
            for axes in 0..=full_axes {
                // anchors of faces with the given axes: anchor + offsets on
                // the non-spanned axes
                let free: Vec<usize> = (0..dim).filter(|i| axes & (1 << i) == 0).collect();
                let m = free.len();
                for bits in 0..(1u32 << m) {
                    let mut a = *v;
                    for (pos, &axis) in free.iter().enumerate() {
                        if bits & (1 << pos) != 0 {
                            a[axis] += 1;
                        }
                    }
                    per_grade[axes.count_ones() as usize].insert(Cell { axes, anchor: a });
                }
            }
        }
        let total: usize = per_grade.iter().map(|s| s.len()).sum();
        if total > cap {
            return Err(Error::CellCap { cap, got: total });
        }

        let cells: Vec<Vec<Cell>> = per_grade.into_iter().map(|s| s.into_iter().collect()).collect();
        let mut index = HashMap::new();
        for (g, list) in cells.iter().enumerate() {
            for (i, c) in list.iter().enumerate() {
                index.insert(*c, (g, i));
            }
        }

        // signed incidence
        let mut coboundary = Vec::new();
        for l in 0..dim {
            let mut triplets = Vec::new();
            for (row, tau) in cells[l + 1].iter().enumerate() {
                let axes: Vec<usize> = (0..dim).filter(|i| tau.axes & (1 << i) != 0).collect();
                for (k, &a) in axes.iter().enumerate() {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    let face_axes = tau.axes & !(1 << a);
                    let lower = Cell { axes: face_axes, anchor: tau.anchor };
                    let mut up = tau.anchor;
                    up[a] += 1;
                    let upper = Cell { axes: face_axes, anchor: up };
                    let (_, ui) = index[&upper];
                    let (_, li) = index[&lower];
                    triplets.push((row, ui, sign));
                    triplets.push((row, li, -sign));
                }
            }
            coboundary.push(Csr::from_triplets(cells[l + 1].len(), cells[l].len(), &triplets));
        }

        // boundary flags: a cell is on ∂Ω_h iff one of its containing voxels
        // is missing
        let mut boundary_flags = Vec::new();
        for list in &cells {
            let flags = list
                .iter()
                .map(|c| {
                    containing_voxels(c, dim)
                        .iter()
                        .any(|w| !voxels.contains(w))
                })
                .collect();
            boundary_flags.push(flags);
        }

        Ok(CubicalComplex {
            dim,
            h,
            cells,
            index,
            coboundary,
            boundary_flags,
            voxels,
            domain_name: name.to_string(),
        })
    }

    pub fn num_cells(&self, grade: usize) -> usize {
        self.cells.get(grade).map(|c| c.len()).unwrap_or(0)
    }

    pub fn total_cells(&self) -> usize {
        self.cells.iter().map(|c| c.len()).sum()
    }

    /// Grade offsets into the concatenated cochain vector.
    pub fn grading_offsets(&self) -> Vec<usize> {
        let mut off = vec![0usize];
        for g in 0..=self.dim {
            off.push(off[g] + self.cells[g].len());
        }
        off
    }

    pub fn cell(&self, grade: usize, id: usize) -> &Cell {
        &self.cells[grade][id]
    }

    pub fn cells_of_grade(&self, grade: usize) -> &[Cell] {
        &self.cells[grade]
    }

    pub fn cell_index(&self, cell: &Cell) -> Option<(usize, usize)> {
        self.index.get(cell).copied()
    }

    pub fn is_boundary(&self, grade: usize, id: usize) -> bool {
        self.boundary_flags[grade][id]
    }

    /// Raw incidence (unscaled by 1/h): `C^ℓ → C^{ℓ+1}`, entries in {−1,0,+1}.
    pub fn coboundary(&self, grade: usize) -> Result<&Csr> {
        self.coboundary
            .get(grade)
            .ok_or_else(|| Error::InvalidArgument(format!("grade {grade} out of range")))
    }

    pub fn barycenter(&self, cell: &Cell) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                let base = cell.anchor[i] as f64;
                let mid = if cell.axes & (1 << i) != 0 { 0.5 } else { 0.0 };
                self.h * (base + mid)
            })
            .collect()
    }

    pub fn has_voxel(&self, v: &Anchor) -> bool {
        self.voxels.contains(v)
    }

    pub fn voxels(&self) -> impl Iterator<Item = &Anchor> {
        self.voxels.iter()
    }

    pub fn num_voxels(&self) -> usize {
        self.voxels.len()
    }

    /// Containing voxels of a cell (those whose closure includes it),
    /// restricted to voxels present in the domain.
    pub fn cell_voxels(&self, cell: &Cell) -> Vec<Anchor> {
        containing_voxels(cell, self.dim)
            .into_iter()
            .filter(|w| self.voxels.contains(w))
            .collect()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.cells
            .iter()
            .enumerate()
            .map(|(g, c)| if g % 2 == 0 { c.len() as i64 } else { -(c.len() as i64) })
            .sum()
    }

    /// Index range of voxel anchors per axis (for dyadic constructions).
    pub fn voxel_bounds(&self) -> (Anchor, Anchor) {
        let mut lo = [i32::MAX; 3];
        let mut hi = [i32::MIN; 3];
        for v in &self.voxels {
            for i in 0..self.dim {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        for i in self.dim..3 {
            lo[i] = 0;
            hi[i] = 0;
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.voxel_bounds();
        let mut d2 = 0.0;
        for i in 0..self.dim {
            let span = (hi[i] - lo[i] + 1) as f64 * self.h;
            d2 += span * span;
        }
        d2.sqrt()
    }

    /// Collocation sampling: evaluate each blade component of a polynomial
    /// form at the barycenter of each cell with the matching axis set.
    pub fn sample_polyform(self: &Arc<Self>, f: &PolyForm) -> Cochain {
        assert_eq!(f.dim(), self.dim);
        let mut u = Cochain::zeros(self.clone());
        for g in 0..=self.dim {
            for (i, cell) in self.cells[g].iter().enumerate() {
                let x = self.barycenter(cell);
                let mv = f.eval_f64(&x);
                u.set(g, i, mv.coeff(cell.axes));
            }
        }
        u
    }

    /// Sample an arbitrary form field (same collocation rule).
    pub fn sample_field(
        self: &Arc<Self>,
        field: &dyn Fn(&[f64]) -> crate::exterior::NumericMultivector,
    ) -> Cochain {
        let mut u = Cochain::zeros(self.clone());
        for g in 0..=self.dim {
            for (i, cell) in self.cells[g].iter().enumerate() {
                let x = self.barycenter(cell);
                u.set(g, i, field(&x).coeff(cell.axes));
            }
        }
        u
    }

    /// Mesh summary for run reports.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "domain": self.domain_name,
            "dim": self.dim,
            "h": self.h,
            "cells_per_grade": self.cells.iter().map(|c| c.len()).collect::<Vec<_>>(),
            "total_cells": self.total_cells(),
            "euler_characteristic": self.euler_characteristic(),
        })
    }
}

fn containing_voxels(cell: &Cell, dim: usize) -> Vec<Anchor> {
    let free: Vec<usize> = (0..dim).filter(|i| cell.axes & (1 << i) == 0).collect();
    let m = free.len();
    let mut out = Vec::with_capacity(1 << m);
    for bits in 0..(1u32 << m) {
        let mut w = cell.anchor;
        for (pos, &axis) in free.iter().enumerate() {
            if bits & (1 << pos) != 0 {
                w[axis] -= 1;
            }
        }
        out.push(w);
    }
    out
}

fn enumerate_grid(
    lo: &[i32],
    hi: &[i32],
    idx: &mut Vec<i32>,
    axis: usize,
    f: &mut impl FnMut(&[i32]),
) {
    if axis == lo.len() {
        f(idx);
        return;
    }
    for i in lo[axis]..hi[axis] {
        idx[axis] = i;
        enumerate_grid(lo, hi, idx, axis + 1, f);
    }
}

/// A discrete form: one scalar per cell, concatenated over grades.
#[derive(Clone)]
pub struct Cochain {
    pub complex: Arc<CubicalComplex>,
    pub values: Vec<f64>,
}

impl Cochain {
    pub fn zeros(complex: Arc<CubicalComplex>) -> Self {
        let n = complex.total_cells();
        Cochain { complex, values: vec![0.0; n] }
    }

    pub fn from_values(complex: Arc<CubicalComplex>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), complex.total_cells());
        Cochain { complex, values }
    }

    pub fn get(&self, grade: usize, id: usize) -> f64 {
        let off = self.complex.grading_offsets();
        self.values[off[grade] + id]
    }

    pub fn set(&mut self, grade: usize, id: usize, v: f64) {
        let off = self.complex.grading_offsets();
        self.values[off[grade] + id] = v;
    }

    /// Grade slice view.
    pub fn grade_slice(&self, grade: usize) -> &[f64] {
        let off = self.complex.grading_offsets();
        &self.values[off[grade]..off[grade + 1]]
    }

    /// Discrete Lᵖ norm with the uniform mass weight `hⁿ` per cell;
    /// `p = ∞` gives the max norm.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if p < 1.0 {
            return Err(Error::InvalidArgument(format!("p = {p} < 1")));
        }
        Ok(lp_norm_vec(&self.values, self.complex.h, self.complex.dim, p))
    }

    /// CSV rows `(cell_id, grade, value)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell_id,grade,value\n");
        let off = self.complex.grading_offsets();
        for g in 0..=self.complex.dim {
            for i in 0..(off[g + 1] - off[g]) {
                out.push_str(&format!("{},{},{:.17e}\n", off[g] + i, g, self.values[off[g] + i]));
            }
        }
        out
    }
}

/// Discrete Lᵖ norm of a raw vector on the graded cell space.
pub fn lp_norm_vec(values: &[f64], h: f64, dim: usize, p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    let hn = h.powi(dim as i32);
    values.iter().map(|v| hn * v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}
