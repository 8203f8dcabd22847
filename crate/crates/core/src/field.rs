//! Anisotropy direction fields `b = B / |B|`.

use nalgebra::{Matrix2, Vector2};
use std::f64::consts::PI;

pub type Point = [f64; 2];

/// A smooth, nowhere-vanishing vector field whose normalization gives the
/// direction of strong diffusion.
pub trait Anisotropy: Send + Sync {
    /// Unnormalized field `B(x)`.
    fn raw(&self, x: Point) -> Vector2<f64>;

    /// Unit direction `b(x)`.
    fn direction(&self, x: Point) -> Vector2<f64> {
        let b = self.raw(x);
        b / b.norm()
    }
}

/// Spatially constant direction.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField {
    pub dir: Vector2<f64>,
}

impl ConstantField {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            dir: Vector2::new(x, y),
        }
    }
}

impl Anisotropy for ConstantField {
    fn raw(&self, _x: Point) -> Vector2<f64> {
        self.dir
    }
}

/// Divergence-free field with curved field lines on the unit square,
///
/// `B = (α(2y − 1)cos(πx) + π, πα(y² − y)sin(πx))`.
///
/// `B = (∂_y φ, −∂_x φ)` for the phase `φ = πy + α(y² − y)cos(πx)`, so the
/// field lines are the level sets of `φ`.
#[derive(Debug, Clone, Copy)]
pub struct MagneticField {
    pub alpha: f64,
}

impl MagneticField {
    pub fn new(alpha: f64) -> Self {
        Self { alpha }
    }

    /// Jacobian `J[i][k] = ∂B_i / ∂x_k`.
    pub fn jacobian(&self, x: Point) -> Matrix2<f64> {
        let a = self.alpha;
        let (sx, cx) = (PI * x[0]).sin_cos();
        let y = x[1];
        Matrix2::new(
            -PI * a * (2.0 * y - 1.0) * sx,
            2.0 * a * cx,
            PI * PI * a * (y * y - y) * cx,
            PI * a * (2.0 * y - 1.0) * sx,
        )
    }

    /// `(b, ∂b/∂x_k)` with the derivative stored column-wise like `jacobian`.
    pub fn direction_jet(&self, x: Point) -> (Vector2<f64>, Matrix2<f64>) {
        let raw = self.raw(x);
        let norm = raw.norm();
        let b = raw / norm;
        let jb = self.jacobian(x);
        // ∂_k b = (∂_k B − b (b · ∂_k B)) / |B|
        let proj = Matrix2::identity() - b * b.transpose();
        (b, proj * jb / norm)
    }
}

impl Anisotropy for MagneticField {
    fn raw(&self, x: Point) -> Vector2<f64> {
        let a = self.alpha;
        let (sx, cx) = (PI * x[0]).sin_cos();
        let y = x[1];
        Vector2::new(a * (2.0 * y - 1.0) * cx + PI, PI * a * (y * y - y) * sx)
    }
}

/// Divergence of `B` from its closed-form derivatives.
pub fn divergence_check(field: &MagneticField, x: Point) -> f64 {
    let j = field.jacobian(x);
    j[(0, 0)] + j[(1, 1)]
}

/// Evaluates the unit direction of `field` at `x`.
pub fn bfield_eval(field: &dyn Anisotropy, x: Point) -> Vector2<f64> {
    field.direction(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn alpha_zero_is_aligned_with_x() {
        let f = MagneticField::new(0.0);
        let b = f.direction([0.37, 0.81]);
        assert!((b.x - 1.0).abs() < 1e-15 && b.y.abs() < 1e-15);
    }

    #[test]
    fn alpha_one_at_center() {
        let b = MagneticField::new(1.0).direction([0.5, 0.5]);
        let raw = Vector2::new(PI, -PI / 4.0);
        let want = raw / raw.norm();
        assert!((b - want).norm() < 1e-15);
    }

    #[test]
    fn alpha_one_at_origin() {
        let b = MagneticField::new(1.0).direction([0.0, 0.0]);
        assert!((b.x - 1.0).abs() < 1e-15 && b.y.abs() < 1e-15);
        let raw = MagneticField::new(1.0).raw([0.0, 0.0]);
        assert!((raw.x - (PI - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn unit_length_everywhere() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for alpha in [0.0, 0.5, 1.0] {
            let f = MagneticField::new(alpha);
            for _ in 0..10_000 {
                let x = [rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)];
                assert!((f.direction(x).norm() - 1.0).abs() < 1e-14);
                assert!(f.raw(x).norm() > 1.0);
            }
        }
    }

    #[test]
    fn divergence_free_analytically_and_by_differences() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let f = MagneticField::new(1.0);
        let h = 1e-5;
        for _ in 0..1000 {
            let x = [rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99)];
            assert!(divergence_check(&f, x).abs() < 1e-14);
            let dbx = (f.raw([x[0] + h, x[1]]).x - f.raw([x[0] - h, x[1]]).x) / (2.0 * h);
            let dby = (f.raw([x[0], x[1] + h]).y - f.raw([x[0], x[1] - h]).y) / (2.0 * h);
            assert!((dbx + dby).abs() <= 1e-8);
        }
        assert_eq!(divergence_check(&MagneticField::new(0.0), [0.3, 0.2]), 0.0);
    }

    #[test]
    fn direction_jet_matches_finite_differences() {
        let f = MagneticField::new(1.0);
        let x = [0.31, 0.62];
        let h = 1e-6;
        let (_, jb) = f.direction_jet(x);
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let d = (f.direction(xp) - f.direction(xm)) / (2.0 * h);
            assert!((d - jb.column(k)).norm() < 1e-8);
        }
    }
}
