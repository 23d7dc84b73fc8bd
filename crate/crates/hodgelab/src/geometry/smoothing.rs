//! Boundary-smoothing constructions: the graph-mollification map
//! `α(x) = (x′, x_n − χ(x)(g(x′) − g_ε(x′)))` with `g_ε = η_ε∗g − εM`, and
//! the smooth intermediate domain `Q_r = G⁻¹(0, +∞)` squeezed between
//! `B(x₀,r)∩Ω′` and `B(x₀,2r)∩Ω′`.

use std::sync::Arc;

use crate::linalg::gauss_legendre_on;
use crate::{Error, Result};

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// C¹ cutoff in the vertical coordinate: 1 on `|x_n| ≤ plateau`, 0 on
/// `|x_n| ≥ outer`, smoothstep in between.
#[derive(Clone, Copy, Debug)]
pub struct CutoffSpec {
    pub plateau: f64,
    pub outer: f64,
}

impl CutoffSpec {
    pub fn new(plateau: f64, outer: f64) -> Result<Self> {
        if plateau <= 0.0 || outer <= plateau {
            return Err(Error::InvalidArgument("cutoff needs 0 < plateau < outer".into()));
        }
        Ok(CutoffSpec { plateau, outer })
    }

    pub fn value(&self, xn: f64) -> f64 {
        let a = xn.abs();
        if a <= self.plateau {
            1.0
        } else if a >= self.outer {
            0.0
        } else {
            let q = (self.outer - a) / (self.outer - self.plateau);
            q * q * (3.0 - 2.0 * q)
        }
    }

    /// Sup of |∂ₙχ| = 3/2 / (outer − plateau).
    pub fn derivative_bound(&self) -> f64 {
        1.5 / (self.outer - self.plateau)
    }
}

/// The smoothing map `α` with its mollified graph and per-point inverse.
pub struct SmoothingMap {
    pub dim: usize,
    pub eps: f64,
    /// measured `‖∇g‖_∞` over the sampling window
    pub grad_bound: f64,
    g: ScalarFn,
    g_eps: ScalarFn,
    cutoff: CutoffSpec,
}

impl SmoothingMap {
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let xp = &x[..n - 1];
        let delta = (self.g)(xp) - (self.g_eps)(xp);
        let mut y = x.to_vec();
        y[n - 1] = x[n - 1] - self.cutoff.value(x[n - 1]) * delta;
        y
    }

    /// `h_{x′}(t) = t − χ(t)(g(x′) − g_ε(x′))`, the vertical profile whose
    /// monotonicity (`½ ≤ h′ ≤ 3/2`) makes the inverse well defined.
    pub fn vertical_profile(&self, xp: &[f64], t: f64) -> f64 {
        let delta = (self.g)(xp) - (self.g_eps)(xp);
        t - self.cutoff.value(t) * delta
    }

    /// Invert by monotone root finding on the vertical profile.
    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim;
        let xp = &y[..n - 1];
        let delta = (self.g)(xp) - (self.g_eps)(xp);
        let target = y[n - 1];
        // h(t) − t ∈ [0, δ]; bracket target accordingly
        let mut lo = target - 1e-12;
        let mut hi = target + delta.abs() + 1e-12;
        if self.vertical_profile(xp, lo) > target {
            lo = target - delta.abs() - 1e-12;
        }
        let mut flo = self.vertical_profile(xp, lo) - target;
        let fhi = self.vertical_profile(xp, hi) - target;
        if flo > 0.0 || fhi < 0.0 {
            return Err(Error::NoConvergence(
                "root bracket failed; cutoff precondition violated".into(),
            ));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let fm = self.vertical_profile(xp, mid) - target;
            if fm.abs() < 1e-15 || hi - lo < 1e-15 {
                let mut x = y.to_vec();
                x[n - 1] = mid;
                return Ok(x);
            }
            if (fm > 0.0) == (flo > 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        let mut x = y.to_vec();
        x[n - 1] = 0.5 * (lo + hi);
        Ok(x)
    }

    /// Finite-difference derivative of the vertical profile at `(x′, t)`.
    pub fn profile_derivative(&self, xp: &[f64], t: f64) -> f64 {
        let h = 1e-6;
        (self.vertical_profile(xp, t + h) - self.vertical_profile(xp, t - h)) / (2.0 * h)
    }

    pub fn mollified_graph(&self, xp: &[f64]) -> f64 {
        (self.g_eps)(xp)
    }
}

/// Build the smoothing map for a Lipschitz graph function `g: ℝ^{n−1} → ℝ`.
///
/// `window` bounds the region where the gradient of `g` is sampled (the
/// measured `M`); the preconditions `ε < 1/M` and
/// `‖∂ₙχ‖_∞ ≤ 1/(4εM)` are checked here.
pub fn smoothing_map(
    g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    dim: usize,
    eps: f64,
    cutoff: CutoffSpec,
    window: f64,
) -> Result<SmoothingMap> {
    assert!(dim == 2 || dim == 3, "graph smoothing supports n ∈ {{2,3}}");
    if eps <= 0.0 {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let g: ScalarFn = Arc::new(g);
    let m = measure_gradient_bound(&g, dim - 1, window);
    if m > 0.0 {
        if eps >= 1.0 / m {
            return Err(Error::InvalidArgument(format!(
                "eps = {eps} violates eps < 1/M with measured M = {m}"
            )));
        }
        if cutoff.derivative_bound() > 1.0 / (4.0 * eps * m) {
            return Err(Error::InvalidArgument(format!(
                "cutoff derivative bound {} exceeds 1/(4εM) = {}",
                cutoff.derivative_bound(),
                1.0 / (4.0 * eps * m)
            )));
        }
    }
    let g_eps = mollify(&g, dim - 1, eps, m);
    Ok(SmoothingMap { dim, eps, grad_bound: m, g, g_eps, cutoff })
}

fn measure_gradient_bound(g: &ScalarFn, d: usize, window: f64) -> f64 {
    let steps = 80usize;
    let h = 1e-6;
    let mut m = 0.0f64;
    let mut point = vec![0.0; d];
    let mut idx = vec![0usize; d];
    loop {
        for (i, &k) in idx.iter().enumerate() {
            point[i] = -window + 2.0 * window * (k as f64 + 0.5) / steps as f64;
        }
        let mut grad2 = 0.0;
        for i in 0..d {
            let mut a = point.clone();
            let mut b = point.clone();
            a[i] += h;
            b[i] -= h;
            let gi = (g(&a) - g(&b)) / (2.0 * h);
            grad2 += gi * gi;
        }
        m = m.max(grad2.sqrt());
        // advance the grid counter
        let mut carry = 0;
        loop {
            if carry == d {
                return m * 1.02;
            }
            idx[carry] += 1;
            if idx[carry] < steps {
                break;
            }
            idx[carry] = 0;
            carry += 1;
        }
    }
}

/// `g_ε = η_ε ∗ g − εM` with a polynomial bump mollifier, evaluated by
/// Gauss-Legendre quadrature. By construction `g_ε ≤ g ≤ g_ε + 2εM`.
fn mollify(g: &ScalarFn, d: usize, eps: f64, m: f64) -> ScalarFn {
    let g = g.clone();
    match d {
        1 => {
            // composite rule: kinks of g contaminate only one panel
            let mut nodes = Vec::new();
            let mut weights = Vec::new();
            let panels = 16usize;
            for k in 0..panels {
                let a = -1.0 + 2.0 * k as f64 / panels as f64;
                let b = a + 2.0 / panels as f64;
                let (xs, ws) = gauss_legendre_on(8, a, b);
                nodes.extend(xs);
                weights.extend(ws);
            }
            // normalise the 1-D bump (1−s²)³ exactly: ∫ = 32/35
            let c = 35.0 / 32.0;
            Arc::new(move |xp: &[f64]| {
                let mut acc = 0.0;
                for (s, w) in nodes.iter().zip(&weights) {
                    let eta = c * (1.0 - s * s).powi(3);
                    acc += w * eta * g(&[xp[0] - eps * s]);
                }
                acc - eps * m
            })
        }
        2 => {
            // radial bump c(1−|s|²)³ on the unit disc; ∫ = c·π/4 ⇒ c = 4/π
            let (rn, rw) = gauss_legendre_on(24, 0.0, 1.0);
            let nphi = 48;
            Arc::new(move |xp: &[f64]| {
                let mut acc = 0.0;
                let c = 4.0 / std::f64::consts::PI;
                for (r, wr) in rn.iter().zip(&rw) {
                    let eta = c * (1.0 - r * r).powi(3);
                    for k in 0..nphi {
                        let phi = 2.0 * std::f64::consts::PI * k as f64 / nphi as f64;
                        let wphi = 2.0 * std::f64::consts::PI / nphi as f64;
                        let p = [xp[0] - eps * r * phi.cos(), xp[1] - eps * r * phi.sin()];
                        acc += wr * wphi * eta * r * g(&p);
                    }
                }
                acc - eps * m
            })
        }
        _ => unreachable!(),
    }
}

/// An implicit smooth domain with an evaluable distance to its complement.
#[derive(Clone)]
pub struct ImplicitDomain {
    pub dist_to_complement: ScalarFn,
    /// signed distance to the boundary, positive inside
    pub signed_dist: ScalarFn,
}

impl ImplicitDomain {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        let c1 = center.clone();
        let c2 = center;
        ImplicitDomain {
            dist_to_complement: Arc::new(move |x: &[f64]| {
                let r = dist(x, &c1);
                (radius - r).max(0.0)
            }),
            signed_dist: Arc::new(move |x: &[f64]| radius - dist(x, &c2)),
        }
    }

    pub fn halfspace(normal: Vec<f64>, offset: f64) -> Self {
        // {x : ⟨n, x⟩ < offset}, with unit normal
        let nn: f64 = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        let n1: Vec<f64> = normal.iter().map(|v| v / nn).collect();
        let n2 = n1.clone();
        let o = offset / nn;
        ImplicitDomain {
            dist_to_complement: Arc::new(move |x: &[f64]| {
                (o - x.iter().zip(&n1).map(|(a, b)| a * b).sum::<f64>()).max(0.0)
            }),
            signed_dist: Arc::new(move |x: &[f64]| {
                o - x.iter().zip(&n2).map(|(a, b)| a * b).sum::<f64>()
            }),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (self.signed_dist)(x) > 0.0
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The level-set membership oracle for
/// `Q_r := G⁻¹(0,+∞)`, `G(x) = 2r²·dist(x, ℝⁿ∖Ω′)² − max{0, |x−x₀|²−r²}²`,
/// which satisfies `B(x₀,r)∩Ω′ ⊆ Q_r ⊆ B(x₀,2r)∩Ω′`.
pub struct SmoothBallDomain {
    pub x0: Vec<f64>,
    pub r: f64,
    omega: ImplicitDomain,
}

impl SmoothBallDomain {
    pub fn g_value(&self, x: &[f64]) -> f64 {
        let d = (self.omega.dist_to_complement)(x);
        let excess = (dist(x, &self.x0).powi(2) - self.r * self.r).max(0.0);
        2.0 * self.r * self.r * d * d - excess * excess
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.g_value(x) > 0.0
    }
}

/// Build the intermediate domain oracle; `x0` must lie on `∂Ω′` to within
/// 1e-8.
pub fn smooth_ball_domain(
    x0: Vec<f64>,
    r: f64,
    omega_prime: ImplicitDomain,
) -> Result<SmoothBallDomain> {
    if r <= 0.0 {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    let sd = (omega_prime.signed_dist)(&x0);
    if sd.abs() > 1e-8 {
        return Err(Error::InvalidArgument(format!(
            "x0 is not on the boundary (signed distance {sd})"
        )));
    }
    Ok(SmoothBallDomain { x0, r, omega: omega_prime })
}
