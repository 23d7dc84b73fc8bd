//! Domain atlases for very weakly Lipschitz domains.
//!
//! A domain is covered by bilipschitz chart images `Ω_j = ρ_j(B)` carrying a
//! Lipschitz partition of unity `Σ χ_j = 1` with `sppt χ_j ⊂ Ω_j`. For
//! quadrature purposes every chart also keeps a *smooth* factorisation from
//! a reference domain (unit ball or `[−1,1]ⁿ` cube, both starlike with
//! respect to the bump support `½B`), so the glued-potential integrands stay
//! smooth; the ball presentation `ρ_j = σ_j ∘ (ball→cube)` uses the max-norm
//! radial map and is what the atlas invariants are measured on.

mod potential;
mod smoothing;

pub use potential::{
    fd_exterior_derivative, glued_k_apply, glued_potential_apply, iterate_glued, k_power_field,
    FormField, QuadratureSpec,
};
pub use smoothing::{smooth_ball_domain, smoothing_map, CutoffSpec, ImplicitDomain, SmoothingMap};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::sync::Arc;

use crate::{Error, Result};

type VecFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type MatFn = Arc<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>;
type BoolFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// A smooth invertible map with an analytic Jacobian.
#[derive(Clone)]
pub struct SmoothMap {
    pub dim: usize,
    pub fwd: VecFn,
    pub inv: VecFn,
    /// Jacobian rows: `jac(y)[i][j] = ∂fwd_i/∂y_j`.
    pub jac: MatFn,
}

/// Reference domain of a chart; both choices contain the bump support `½B`
/// and are starlike with respect to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefDomain {
    Ball,
    Cube,
}

/// One chart of the atlas: a smooth map from the reference domain onto a
/// subset `Ω_j` of the physical domain.
#[derive(Clone)]
pub struct Chart {
    pub reference: RefDomain,
    pub map: SmoothMap,
    pub label: String,
}

/// A bilipschitz map `ρ: B → Ω_j` in the presentation the paper's atlas
/// definition uses, with measured (not proved) Lipschitz constants.
#[derive(Clone)]
pub struct BilipschitzMap {
    pub forward: VecFn,
    pub inverse: VecFn,
    pub jacobian: MatFn,
    pub lip_forward: f64,
    pub lip_inverse: f64,
}

impl BilipschitzMap {
    /// Max round-trip error `|ρ⁻¹(ρ(x)) − x|` over seeded samples in B.
    pub fn round_trip_error(&self, dim: usize, samples: usize, seed: u64) -> f64 {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let x = sample_in_ball(&mut rng, dim, 0.98);
            let y = (self.forward)(&x);
            let back = (self.inverse)(&y);
            let err = x
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(err);
        }
        worst
    }
}

fn sample_in_ball(rng: &mut StdRng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 < radius * radius && r2 > 1e-6 {
            return x;
        }
    }
}

/// Membership, bounding box and name of a domain; shared by the atlas and
/// the mesh builder.
#[derive(Clone)]
pub struct DomainShape {
    pub name: String,
    pub dim: usize,
    pub bbox_lo: Vec<f64>,
    pub bbox_hi: Vec<f64>,
    pub indicator: BoolFn,
}

impl DomainShape {
    pub fn contains(&self, x: &[f64]) -> bool {
        (self.indicator)(x)
    }

    pub fn diameter(&self) -> f64 {
        self.bbox_lo
            .iter()
            .zip(&self.bbox_hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }
}

/// Smoothstep profile used by all partition bumps: C¹, `s(q)=0` for `q ≤ 0`,
/// `s(q)=1` for `q ≥ 1`.
fn smoothstep(q: f64) -> f64 {
    if q <= 0.0 {
        0.0
    } else if q >= 1.0 {
        1.0
    } else {
        q * q * (3.0 - 2.0 * q)
    }
}

fn smoothstep_deriv(q: f64) -> f64 {
    if q <= 0.0 || q >= 1.0 {
        0.0
    } else {
        6.0 * q * (1.0 - q)
    }
}

/// Unnormalised partition bump attached to one chart.
#[derive(Clone)]
enum Bump {
    /// Identically one (single-chart atlases).
    One,
    /// Product of per-axis C¹ ramps supported in the open box.
    Box { center: Vec<f64>, half: Vec<f64>, margin: Vec<f64> },
    /// Function of the polar angle, supported in an angular window.
    Angular { phi_c: f64, half_width: f64, margin: f64 },
}

impl Bump {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Bump::One => 1.0,
            Bump::Box { center, half, margin } => {
                let mut v = 1.0;
                for i in 0..center.len() {
                    let q = (half[i] - (x[i] - center[i]).abs()) / margin[i];
                    v *= smoothstep(q);
                }
                v
            }
            Bump::Angular { phi_c, half_width, margin } => {
                let d = angle_dist(x[1].atan2(x[0]), *phi_c);
                smoothstep((half_width - d.abs()) / margin)
            }
        }
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Bump::One => vec![0.0; x.len()],
            Bump::Box { center, half, margin } => {
                let n = center.len();
                let s: Vec<f64> = (0..n)
                    .map(|i| smoothstep((half[i] - (x[i] - center[i]).abs()) / margin[i]))
                    .collect();
                (0..n)
                    .map(|i| {
                        let q = (half[i] - (x[i] - center[i]).abs()) / margin[i];
                        let dq = -(x[i] - center[i]).signum() / margin[i];
                        let mut g = smoothstep_deriv(q) * dq;
                        for (k, sk) in s.iter().enumerate() {
                            if k != i {
                                g *= sk;
                            }
                        }
                        g
                    })
                    .collect()
            }
            Bump::Angular { phi_c, half_width, margin } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let d = angle_dist(x[1].atan2(x[0]), *phi_c);
                let q = (half_width - d.abs()) / margin;
                let ds = smoothstep_deriv(q) * (-d.signum() / margin);
                vec![ds * (-x[1] / r2), ds * (x[0] / r2)]
            }
        }
    }
}

fn angle_dist(phi: f64, phi_c: f64) -> f64 {
    let mut d = phi - phi_c;
    while d > std::f64::consts::PI {
        d -= 2.0 * std::f64::consts::PI;
    }
    while d < -std::f64::consts::PI {
        d += 2.0 * std::f64::consts::PI;
    }
    d
}

/// A very weakly Lipschitz domain: charts, Lipschitz partition of unity and
/// a membership test.
pub struct DomainAtlas {
    pub name: String,
    pub dim: usize,
    charts: Vec<Chart>,
    bumps: Vec<Bump>,
    shape: DomainShape,
}

impl DomainAtlas {
    pub fn chart_count(&self) -> usize {
        self.charts.len()
    }

    pub fn chart(&self, j: usize) -> &Chart {
        &self.charts[j]
    }

    pub fn shape(&self) -> &DomainShape {
        &self.shape
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.shape.contains(x)
    }

    pub fn diameter(&self) -> f64 {
        self.shape.diameter()
    }

    /// Normalised partition values `χ_j(x)`, summing to one on Ω.
    pub fn partition_values(&self, x: &[f64]) -> Vec<f64> {
        let raw: Vec<f64> = self.bumps.iter().map(|b| b.value(x)).collect();
        let total: f64 = raw.iter().sum();
        debug_assert!(total > 0.0, "partition denominator vanished at {:?}", x);
        raw.iter().map(|v| v / total).collect()
    }

    /// Gradient of the normalised `χ_j` at `x` (quotient rule over the raw
    /// bump values).
    pub fn partition_grad(&self, j: usize, x: &[f64]) -> Vec<f64> {
        let raw: Vec<f64> = self.bumps.iter().map(|b| b.value(x)).collect();
        let grads: Vec<Vec<f64>> = self.bumps.iter().map(|b| b.grad(x)).collect();
        let total: f64 = raw.iter().sum();
        let total_grad: Vec<f64> = (0..self.dim)
            .map(|i| grads.iter().map(|g| g[i]).sum::<f64>())
            .collect();
        (0..self.dim)
            .map(|i| (grads[j][i] * total - raw[j] * total_grad[i]) / (total * total))
            .collect()
    }

    /// Ball-presentation charts `ρ_j: B → Ω_j` with measured Lipschitz
    /// constants (sampled, recorded in atlas metadata).
    pub fn ball_charts(&self) -> Vec<BilipschitzMap> {
        self.charts
            .iter()
            .enumerate()
            .map(|(j, chart)| self.ball_chart(j, chart))
            .collect()
    }

    fn ball_chart(&self, j: usize, chart: &Chart) -> BilipschitzMap {
        let dim = self.dim;
        let map = chart.map.clone();
        let (fwd, inv, jac): (VecFn, VecFn, MatFn) = match chart.reference {
            RefDomain::Ball => (map.fwd.clone(), map.inv.clone(), map.jac.clone()),
            RefDomain::Cube => {
                let m1 = map.clone();
                let m2 = map.clone();
                let m3 = map.clone();
                (
                    Arc::new(move |y: &[f64]| (m1.fwd)(&ball_to_cube(y))),
                    Arc::new(move |x: &[f64]| cube_to_ball(&(m2.inv)(x))),
                    Arc::new(move |y: &[f64]| {
                        let q = ball_to_cube(y);
                        mat_mul(&(m3.jac)(&q), &ball_to_cube_jac(y))
                    }),
                )
            }
        };
        let (lip_f, lip_i) = measure_lipschitz(dim, &fwd, &inv, 400, 1000 + j as u64);
        BilipschitzMap { forward: fwd, inverse: inv, jacobian: jac, lip_forward: lip_f, lip_inverse: lip_i }
    }

    /// Atlas metadata for run reports.
    pub fn metadata_json(&self) -> serde_json::Value {
        let charts: Vec<serde_json::Value> = self
            .ball_charts()
            .iter()
            .zip(&self.charts)
            .map(|(bc, c)| {
                serde_json::json!({
                    "label": c.label,
                    "lip_forward": bc.lip_forward,
                    "lip_inverse": bc.lip_inverse,
                })
            })
            .collect();
        serde_json::json!({
            "domain": self.name,
            "dim": self.dim,
            "chart_count": self.chart_count(),
            "charts": charts,
        })
    }
}

fn measure_lipschitz(dim: usize, fwd: &VecFn, inv: &VecFn, pairs: usize, seed: u64) -> (f64, f64) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut lf = 0.0f64;
    let mut li = 0.0f64;
    for _ in 0..pairs {
        let a = sample_in_ball(&mut rng, dim, 0.97);
        let mut b = a.clone();
        for v in b.iter_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
        let rb: f64 = b.iter().map(|v| v * v).sum::<f64>();
        if rb >= 0.97 * 0.97 {
            continue;
        }
        let fa = fwd(&a);
        let fb = fwd(&b);
        let num: f64 = fa.iter().zip(&fb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let den: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        if den > 1e-9 {
            lf = lf.max(num / den);
            if num > 1e-12 {
                // inverse ratio on the image pair
                let ia = inv(&fa);
                let ib = inv(&fb);
                let inum: f64 =
                    ia.iter().zip(&ib).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                li = li.max(inum / num);
            }
        }
    }
    (lf, li)
}

/// Max-norm radial map `B → [−1,1]ⁿ`, `y ↦ y·‖y‖₂/‖y‖_∞`.
pub fn ball_to_cube(y: &[f64]) -> Vec<f64> {
    let r2: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rinf = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if rinf == 0.0 {
        return vec![0.0; y.len()];
    }
    y.iter().map(|v| v * r2 / rinf).collect()
}

/// Inverse of [`ball_to_cube`]: `x ↦ x·‖x‖_∞/‖x‖₂`.
pub fn cube_to_ball(x: &[f64]) -> Vec<f64> {
    let r2: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rinf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r2 == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| v * rinf / r2).collect()
}

/// Jacobian of [`ball_to_cube`] away from axis ties and the origin.
pub fn ball_to_cube_jac(y: &[f64]) -> Vec<Vec<f64>> {
    let n = y.len();
    let r2: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let m = (0..n).fold(0, |best, i| if y[i].abs() > y[best].abs() { i } else { best });
    let rinf = y[m].abs();
    let sm = y[m].signum();
    let g = r2 / rinf;
    let mut jac = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let dg = (y[j] / r2) / rinf - if j == m { r2 * sm / (rinf * rinf) } else { 0.0 };
            jac[i][j] = if i == j { g } else { 0.0 } + y[i] * dg;
        }
    }
    jac
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for l in 0..k {
                acc += a[i][l] * b[l][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

/// Affine chart from the reference cube onto an axis-aligned open box.
fn box_chart(center: Vec<f64>, half: Vec<f64>, label: &str) -> Chart {
    let dim = center.len();
    let c1 = center.clone();
    let h1 = half.clone();
    let c2 = center.clone();
    let h2 = half.clone();
    let h3 = half.clone();
    Chart {
        reference: RefDomain::Cube,
        map: SmoothMap {
            dim,
            fwd: Arc::new(move |q| (0..dim).map(|i| c1[i] + h1[i] * q[i]).collect()),
            inv: Arc::new(move |x| (0..dim).map(|i| (x[i] - c2[i]) / h2[i]).collect()),
            jac: Arc::new(move |_q| {
                (0..dim)
                    .map(|i| (0..dim).map(|j| if i == j { h3[i] } else { 0.0 }).collect())
                    .collect()
            }),
        },
        label: label.to_string(),
    }
}

fn box_bump(center: Vec<f64>, half: Vec<f64>) -> Bump {
    let margin: Vec<f64> = half.iter().map(|h| 0.35 * h).collect();
    Bump::Box { center, half, margin }
}

/// Chart from the reference cube onto an annular sector via polar
/// coordinates.
fn sector_chart(r0: f64, r1: f64, phi_c: f64, w: f64, label: &str) -> Chart {
    let r_mid = 0.5 * (r0 + r1);
    let r_half = 0.5 * (r1 - r0);
    Chart {
        reference: RefDomain::Cube,
        map: SmoothMap {
            dim: 2,
            fwd: Arc::new(move |q| {
                let r = r_mid + r_half * q[0];
                let phi = phi_c + w * q[1];
                vec![r * phi.cos(), r * phi.sin()]
            }),
            inv: Arc::new(move |x| {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                let d = angle_dist(x[1].atan2(x[0]), phi_c);
                vec![(r - r_mid) / r_half, d / w]
            }),
            jac: Arc::new(move |q| {
                let r = r_mid + r_half * q[0];
                let phi = phi_c + w * q[1];
                vec![
                    vec![r_half * phi.cos(), -r * w * phi.sin()],
                    vec![r_half * phi.sin(), r * w * phi.cos()],
                ]
            }),
        },
        label: label.to_string(),
    }
}

/// Parameters of the built-in domains.
#[derive(Clone, Debug)]
pub struct AtlasParams {
    pub annulus_inner: f64,
    pub annulus_outer: f64,
}

impl Default for AtlasParams {
    fn default() -> Self {
        AtlasParams { annulus_inner: 0.3, annulus_outer: 0.95 }
    }
}

/// Build one of the named example atlases.
///
/// `disc` and `square`/`cube` need a single chart; `annulus` uses three
/// overlapping polar sectors; `lshape` two overlapping rectangles; and
/// `twobrick` the bricks from the standard weakly-but-not-strongly Lipschitz
/// example plus a connector box bridging the interface plane.
pub fn make_atlas(domain_name: &str, params: &AtlasParams) -> Result<DomainAtlas> {
    if params.annulus_inner <= 0.0 || params.annulus_outer <= params.annulus_inner {
        return Err(Error::InvalidArgument("degenerate annulus radii".into()));
    }
    match domain_name {
        "disc" => {
            let dim = 2;
            let identity = SmoothMap {
                dim,
                fwd: Arc::new(|y: &[f64]| y.to_vec()),
                inv: Arc::new(|x: &[f64]| x.to_vec()),
                jac: Arc::new(move |_| vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            };
            let charts =
                vec![Chart { reference: RefDomain::Ball, map: identity, label: "disc".into() }];
            let shape = DomainShape {
                name: "disc".into(),
                dim,
                bbox_lo: vec![-1.0, -1.0],
                bbox_hi: vec![1.0, 1.0],
                indicator: Arc::new(|x: &[f64]| x[0] * x[0] + x[1] * x[1] < 1.0),
            };
            Ok(DomainAtlas { name: "disc".into(), dim, charts, bumps: vec![Bump::One], shape })
        }
        "square" => {
            let charts = vec![box_chart(vec![0.5, 0.5], vec![0.5, 0.5], "square")];
            let shape = DomainShape {
                name: "square".into(),
                dim: 2,
                bbox_lo: vec![0.0, 0.0],
                bbox_hi: vec![1.0, 1.0],
                indicator: Arc::new(|x: &[f64]| x.iter().all(|v| *v > 0.0 && *v < 1.0)),
            };
            Ok(DomainAtlas { name: "square".into(), dim: 2, charts, bumps: vec![Bump::One], shape })
        }
        "cube" => {
            let charts = vec![box_chart(vec![0.5, 0.5, 0.5], vec![0.5, 0.5, 0.5], "cube")];
            let shape = DomainShape {
                name: "cube".into(),
                dim: 3,
                bbox_lo: vec![0.0, 0.0, 0.0],
                bbox_hi: vec![1.0, 1.0, 1.0],
                indicator: Arc::new(|x: &[f64]| x.iter().all(|v| *v > 0.0 && *v < 1.0)),
            };
            Ok(DomainAtlas { name: "cube".into(), dim: 3, charts, bumps: vec![Bump::One], shape })
        }
        "lshape" => {
            // two genuinely overlapping open rectangles whose union is the L
            let r1 = (vec![0.5, 0.25], vec![0.5, 0.25]);
            let r2 = (vec![0.25, 0.5], vec![0.25, 0.5]);
            let charts = vec![
                box_chart(r1.0.clone(), r1.1.clone(), "lshape-horizontal"),
                box_chart(r2.0.clone(), r2.1.clone(), "lshape-vertical"),
            ];
            let bumps = vec![box_bump(r1.0, r1.1), box_bump(r2.0, r2.1)];
            let shape = DomainShape {
                name: "lshape".into(),
                dim: 2,
                bbox_lo: vec![0.0, 0.0],
                bbox_hi: vec![1.0, 1.0],
                indicator: Arc::new(|x: &[f64]| {
                    let in_r1 = x[0] > 0.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 0.5;
                    let in_r2 = x[0] > 0.0 && x[0] < 0.5 && x[1] > 0.0 && x[1] < 1.0;
                    in_r1 || in_r2
                }),
            };
            Ok(DomainAtlas { name: "lshape".into(), dim: 2, charts, bumps, shape })
        }
        "annulus" => {
            let (r0, r1) = (params.annulus_inner, params.annulus_outer);
            let w = 0.45 * std::f64::consts::PI;
            let hw = 0.42 * std::f64::consts::PI;
            let margin = 0.12 * std::f64::consts::PI;
            let centers =
                [0.0, 2.0 * std::f64::consts::PI / 3.0, 4.0 * std::f64::consts::PI / 3.0];
            let charts = centers
                .iter()
                .enumerate()
                .map(|(i, &phi)| sector_chart(r0, r1, phi, w, &format!("sector-{i}")))
                .collect();
            let bumps = centers
                .iter()
                .map(|&phi| Bump::Angular { phi_c: phi, half_width: hw, margin })
                .collect();
            let shape = DomainShape {
                name: "annulus".into(),
                dim: 2,
                bbox_lo: vec![-r1, -r1],
                bbox_hi: vec![r1, r1],
                indicator: Arc::new(move |x: &[f64]| {
                    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                    r > r0 && r < r1
                }),
            };
            Ok(DomainAtlas { name: "annulus".into(), dim: 2, charts, bumps, shape })
        }
        "twobrick" => {
            // bricks [−1,1]×[−2,2]×[0,1] and [−2,2]×[−1,1]×[−1,0]; the open
            // bricks meet only along the z = 0 plane, so a connector box
            // bridges the interface
            let b1 = (vec![0.0, 0.0, 0.5], vec![1.0, 2.0, 0.5]);
            let b2 = (vec![0.0, 0.0, -0.5], vec![2.0, 1.0, 0.5]);
            let c = (vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 0.5]);
            let charts = vec![
                box_chart(b1.0.clone(), b1.1.clone(), "brick-upper"),
                box_chart(b2.0.clone(), b2.1.clone(), "brick-lower"),
                box_chart(c.0.clone(), c.1.clone(), "connector"),
            ];
            let bumps = vec![
                box_bump(b1.0, b1.1),
                box_bump(b2.0, b2.1),
                box_bump(c.0, c.1),
            ];
            let shape = DomainShape {
                name: "twobrick".into(),
                dim: 3,
                bbox_lo: vec![-2.0, -2.0, -1.0],
                bbox_hi: vec![2.0, 2.0, 1.0],
                indicator: Arc::new(|x: &[f64]| {
                    let in_b1 = x[0].abs() < 1.0 && x[1].abs() < 2.0 && x[2] > 0.0 && x[2] < 1.0;
                    let in_b2 = x[0].abs() < 2.0 && x[1].abs() < 1.0 && x[2] > -1.0 && x[2] < 0.0;
                    let in_c = x[0].abs() < 1.0 && x[1].abs() < 1.0 && x[2].abs() < 0.5;
                    in_b1 || in_b2 || in_c
                }),
            };
            Ok(DomainAtlas { name: "twobrick".into(), dim: 3, charts, bumps, shape })
        }
        other => Err(Error::UnknownDomain(other.to_string())),
    }
}

/// Shape-only accessor (used by the mesh builder for named domains).
pub fn domain_shape(domain_name: &str, params: &AtlasParams) -> Result<DomainShape> {
    Ok(make_atlas(domain_name, params)?.shape.clone())
}
