//! Manufactured solution, its forcing, and the Gaussian initial peak.
//!
//! The limit profile is `p = (cos φ + 4) T_m e^{−t}` with phase
//! `φ = πy + α(y² − y)cos(πx)`; it is constant along the field lines of
//! [`MagneticField`]. The manufactured solution adds an `O(ε)` perturbation,
//! `u = p + ε p^{−3/2} sin(3πx) / (3π)`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

use crate::assembly::{assemble_boundary_load, try_assemble_load, DofVector};
use crate::error::{Error, Result};
use crate::field::{Anisotropy, MagneticField, Point};
use crate::grid::{BoundaryKind, Grid};
use crate::schemes::Sources;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsParams {
    pub alpha: f64,
    /// Temperature scale `T_m`.
    pub tm: f64,
    pub eps: f64,
    /// Robin coefficient on inflow/outflow edges.
    pub gamma: f64,
    pub exponent: f64,
    /// Constant parallel coefficient `A_∥`.
    pub a_par: f64,
    /// Constant perpendicular coefficient, `A_⊥ = a_perp · Id`.
    pub a_perp: f64,
}

impl Default for MmsParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            tm: 1.0,
            eps: 1.0,
            gamma: 1.0,
            exponent: 2.5,
            a_par: 1.0,
            a_perp: 1.0,
        }
    }
}

impl MmsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !(self.tm > 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::Config(format!(
                "manufactured solution needs eps > 0, T_m > 0, gamma >= 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Value, gradient, Hessian and time derivative of a scalar field.
#[derive(Debug, Clone, Copy)]
pub struct Jet {
    pub value: f64,
    pub grad: Vector2<f64>,
    pub hess: Matrix2<f64>,
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct ManufacturedSolution {
    pub params: MmsParams,
    pub field: MagneticField,
    /// Inject the boundary-condition residual as a weak boundary source.
    pub boundary_sources: bool,
}

impl ManufacturedSolution {
    pub fn new(params: MmsParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            field: MagneticField::new(params.alpha),
            params,
            boundary_sources: true,
        })
    }

    pub fn with_boundary_sources(mut self, on: bool) -> Self {
        self.boundary_sources = on;
        self
    }

    fn phase(&self, x: Point) -> (f64, Vector2<f64>, Matrix2<f64>) {
        let a = self.params.alpha;
        let (sx, cx) = (PI * x[0]).sin_cos();
        let y = x[1];
        let w = y * y - y;
        let phi = PI * y + a * w * cx;
        let grad = Vector2::new(-PI * a * w * sx, PI + a * (2.0 * y - 1.0) * cx);
        let cross = -PI * a * (2.0 * y - 1.0) * sx;
        let hess = Matrix2::new(-PI * PI * a * w * cx, cross, cross, 2.0 * a * cx);
        (phi, grad, hess)
    }

    /// Limit profile `p` with its derivatives.
    pub fn p_jet(&self, t: f64, x: Point) -> Jet {
        let c = self.params.tm * (-t).exp();
        let (phi, g, h) = self.phase(x);
        let (s, co) = phi.sin_cos();
        let value = c * (co + 4.0);
        Jet {
            value,
            grad: -c * s * g,
            hess: -c * (co * g * g.transpose() + s * h),
            dt: -value,
        }
    }

    pub fn p(&self, t: f64, x: Point) -> f64 {
        self.p_jet(t, x).value
    }

    /// Perturbation `p^{−3/2} sin(3πx) / (3π)` with its derivatives.
    pub fn q_jet(&self, t: f64, x: Point) -> Jet {
        let p = self.p_jet(t, x);
        let (s3, c3) = (3.0 * PI * x[0]).sin_cos();
        let g = s3 / (3.0 * PI);
        let dg = c3;
        let ddg = -3.0 * PI * s3;
        let a = p.value.powf(-1.5);
        let da = -1.5 * p.value.powf(-2.5) * p.grad;
        let hess_a = 3.75 * p.value.powf(-3.5) * p.grad * p.grad.transpose()
            - 1.5 * p.value.powf(-2.5) * p.hess;
        let ex = Vector2::new(1.0, 0.0);
        let value = a * g;
        Jet {
            value,
            grad: g * da + a * dg * ex,
            hess: g * hess_a
                + dg * (da * ex.transpose() + ex * da.transpose())
                + a * ddg * ex * ex.transpose(),
            dt: 1.5 * value,
        }
    }

    /// `u = p + ε q`.
    pub fn u_jet(&self, t: f64, x: Point) -> Jet {
        let eps = self.params.eps;
        let p = self.p_jet(t, x);
        let q = self.q_jet(t, x);
        Jet {
            value: p.value + eps * q.value,
            grad: p.grad + eps * q.grad,
            hess: p.hess + eps * q.hess,
            dt: p.dt + eps * q.dt,
        }
    }

    pub fn exact_u(&self, t: f64, x: Point) -> f64 {
        self.u_jet(t, x).value
    }

    /// `(1/ε) b·∇u`. Since `b·∇p ≡ 0` this equals `b·∇q` and is evaluated
    /// that way, free of cancellation for small `ε`.
    pub fn scaled_parallel_slope(&self, t: f64, x: Point) -> f64 {
        self.field.direction(x).dot(&self.q_jet(t, x).grad)
    }

    /// Flux `(1/ε) A_∥ u^m ∇_∥u + A_⊥ ∇_⊥u`.
    pub fn flux(&self, t: f64, x: Point) -> Result<Vector2<f64>> {
        let pr = &self.params;
        let u = self.u_jet(t, x);
        let um = self.power(u.value, x)?;
        let b = self.field.direction(x);
        let s = b.dot(&self.q_jet(t, x).grad);
        let perp = u.grad - pr.eps * s * b;
        Ok(pr.a_par * um * s * b + pr.a_perp * perp)
    }

    fn power(&self, u: f64, x: Point) -> Result<f64> {
        if !(u > 0.0) {
            return Err(Error::NegativeState {
                x: x[0],
                y: x[1],
                value: u,
            });
        }
        Ok(u.powf(self.params.exponent))
    }

    /// `f = ∂_t u − (1/ε)∇_∥·(A_∥ u^m ∇_∥u) − ∇_⊥·(A_⊥ ∇_⊥u)` in closed form.
    pub fn forcing(&self, t: f64, x: Point) -> Result<f64> {
        let pr = &self.params;
        let m = pr.exponent;
        let u = self.u_jet(t, x);
        let q = self.q_jet(t, x);
        let um = self.power(u.value, x)?;
        let (b, jb) = self.field.direction_jet(x);
        let div_b = jb.trace();
        let b_grad_b = jb * b;

        // s = (1/ε) b·∇u = b·∇q and its derivative along b
        let s = b.dot(&q.grad);
        let b_grad_s = q.grad.dot(&b_grad_b) + b.dot(&(q.hess * b));
        let b_grad_u = pr.eps * s;

        let par = um * s * div_b + m * um / u.value * b_grad_u * s + um * b_grad_s;
        let laplacian = u.hess.trace();
        let perp = laplacian - pr.eps * (s * div_b + b_grad_s);
        Ok(u.dt - pr.a_par * par - pr.a_perp * perp)
    }

    /// Residual of the boundary condition for the manufactured solution,
    /// `n·F + γu` on inflow/outflow edges and `n·F` on parallel edges. Adding
    /// it as a boundary source makes the weak problem exact for `u`.
    pub fn boundary_residual(
        &self,
        t: f64,
        x: Point,
        normal: [f64; 2],
        kind: BoundaryKind,
    ) -> Result<f64> {
        let n = Vector2::new(normal[0], normal[1]);
        let flux = self.flux(t, x)?;
        let robin = if kind.is_transverse() {
            self.params.gamma * self.exact_u(t, x)
        } else {
            0.0
        };
        Ok(n.dot(&flux) + robin)
    }

    /// Largest `|b·∇p| / |∇p|` over the given points.
    pub fn limit_constancy_check(&self, t: f64, points: &[Point]) -> f64 {
        points
            .iter()
            .map(|&x| {
                let g = self.p_jet(t, x).grad;
                let norm = g.norm();
                if norm == 0.0 {
                    0.0
                } else {
                    self.field.direction(x).dot(&g).abs() / norm
                }
            })
            .fold(0.0, f64::max)
    }
}

impl Sources for ManufacturedSolution {
    fn load(&self, grid: &Grid, t: f64) -> Result<DofVector> {
        let mut load = try_assemble_load(grid, |x| self.forcing(t, x))?;
        if self.boundary_sources {
            let g = assemble_boundary_load(grid, |edge, x| {
                let kind = edge.kind.ok_or(Error::Unclassified)?;
                self.boundary_residual(t, x, edge.normal(), kind)
            })?;
            load.iter_mut().zip(g).for_each(|(l, gi)| *l += gi);
        }
        Ok(load)
    }
}

/// `(T_m / 2)(1 + exp(−50(x − 0.5)² − 50(y − 0.5)²))`.
pub fn gaussian_initial(tm: f64, x: Point) -> f64 {
    let r2 = (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2);
    0.5 * tm * (1.0 + (-50.0 * r2).exp())
}
