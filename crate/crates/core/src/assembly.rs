//! Finite-element forms on a Q2 grid.
//!
//! Volume integrals use the 3×3 Gauss rule per element, edge integrals the
//! 3-point rule per boundary edge, error norms the 5×5 rule. Element maps are axis-aligned, so physical
//! gradients are reference gradients scaled by `(2/hx, 2/hy)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::field::{Anisotropy, Point};
use crate::grid::{BoundaryEdge, Grid};
use crate::quadrature::{gauss5x5, GAUSS3_POINTS, GAUSS3_WEIGHTS};
use crate::shape::{lagrange1d, ShapeTable};
use crate::sparse::{SparseMatrix, Triplets};

/// Largest accepted deviation of `|b|` from one at a quadrature point.
pub const UNIT_TOL: f64 = 1e-10;

pub type DofVector = Vec<f64>;

/// Scalar parallel coefficient `A_∥(x)` and tensor perpendicular coefficient
/// `A_⊥(x)`.
#[derive(Clone)]
pub struct Coefficients {
    pub par: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    pub perp: Arc<dyn Fn(Point) -> Matrix2<f64> + Send + Sync>,
}

impl Coefficients {
    /// `A_∥ = 1`, `A_⊥ = Id`.
    pub fn unit() -> Self {
        Self::constant(1.0, 1.0)
    }

    /// `A_∥ = par`, `A_⊥ = perp · Id`.
    pub fn constant(par: f64, perp: f64) -> Self {
        Self {
            par: Arc::new(move |_| par),
            perp: Arc::new(move |_| Matrix2::identity() * perp),
        }
    }
}

impl Default for Coefficients {
    fn default() -> Self {
        Self::unit()
    }
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficients").finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    Absolute,
    Relative,
}

fn unit_direction(field: &dyn Anisotropy, x: Point) -> Result<Vector2<f64>> {
    let b = field.direction(x);
    let norm = b.norm();
    if (norm - 1.0).abs() > UNIT_TOL || !norm.is_finite() {
        return Err(Error::NonUnitDirection {
            x: x[0],
            y: x[1],
            norm,
        });
    }
    Ok(b)
}

/// Assembles `∫ ∇θ_j · K(x) ∇θ_i` for a pointwise 2×2 tensor supplied per
/// element and quadrature point.
fn assemble_tensor<F>(grid: &Grid, mut tensor: F) -> Result<SparseMatrix>
where
    F: FnMut(usize, usize, Point) -> Result<Matrix2<f64>>,
{
    let table = ShapeTable::default();
    let [sx, sy] = grid.gradient_scale();
    let det = grid.jacobian_det();
    let n = grid.num_nodes();
    let mut t = Triplets::with_capacity(n, 81 * grid.num_elements());
    for (e, conn) in grid.elements().iter().enumerate() {
        let mut local = [[0.0; 9]; 9];
        for q in 0..9 {
            let x = grid.to_physical(e, table.rule.points[q]);
            let k = tensor(e, q, x)?;
            let w = table.rule.weights[q] * det;
            let grads: [Vector2<f64>; 9] = std::array::from_fn(|i| {
                let g = table.grads[q][i];
                Vector2::new(g[0] * sx, g[1] * sy)
            });
            for i in 0..9 {
                let kgi = k * grads[i];
                for j in 0..9 {
                    local[i][j] += w * grads[j].dot(&kgi);
                }
            }
        }
        for i in 0..9 {
            for j in 0..9 {
                t.push(conn[i], conn[j], local[i][j]);
            }
        }
    }
    t.finalize()
}

/// `(θ_i, θ_j)`.
pub fn assemble_mass(grid: &Grid) -> SparseMatrix {
    let table = ShapeTable::default();
    let det = grid.jacobian_det();
    let mut local = [[0.0; 9]; 9];
    for q in 0..9 {
        let w = table.rule.weights[q] * det;
        for i in 0..9 {
            for j in 0..9 {
                local[i][j] += w * table.values[q][i] * table.values[q][j];
            }
        }
    }
    let mut t = Triplets::with_capacity(grid.num_nodes(), 81 * grid.num_elements());
    for conn in grid.elements() {
        for i in 0..9 {
            for j in 0..9 {
                t.push(conn[i], conn[j], local[i][j]);
            }
        }
    }
    t.finalize().expect("connectivity indices are in range")
}

/// Isotropic stiffness `∫ ∇θ_i · ∇θ_j`.
pub fn assemble_stiffness(grid: &Grid) -> SparseMatrix {
    assemble_tensor(grid, |_, _, _| Ok(Matrix2::identity())).expect("infallible tensor")
}

/// `a_⊥(θ_j, θ_i) = ∫ A_⊥ ∇_⊥θ_j · ∇_⊥θ_i` with `∇_⊥ = (Id − b⊗b)∇`.
pub fn assemble_perp(
    grid: &Grid,
    field: &dyn Anisotropy,
    coeffs: &Coefficients,
) -> Result<SparseMatrix> {
    assemble_tensor(grid, |_, _, x| {
        let b = unit_direction(field, x)?;
        let p = Matrix2::identity() - b * b.transpose();
        Ok(p * (coeffs.perp)(x) * p)
    })
}

/// `a_∥(θ_j, θ_i) = ∫ A_∥ ∇_∥θ_j · ∇_∥θ_i` with `∇_∥ = (b·∇)b`.
pub fn assemble_par(
    grid: &Grid,
    field: &dyn Anisotropy,
    coeffs: &Coefficients,
) -> Result<SparseMatrix> {
    assemble_tensor(grid, |_, _, x| {
        let b = unit_direction(field, x)?;
        Ok(b * b.transpose() * (coeffs.par)(x))
    })
}

/// `a_∥nl(ψ, θ_j, θ_i) = ∫ A_∥ ψ^m ∇_∥θ_j · ∇_∥θ_i`.
///
/// `ψ` is interpolated to each quadrature point before the power is taken;
/// a nonpositive interpolated value is reported with its location.
pub fn assemble_par_nl(
    grid: &Grid,
    field: &dyn Anisotropy,
    coeffs: &Coefficients,
    state: &[f64],
    exponent: f64,
) -> Result<SparseMatrix> {
    check_len(grid, state)?;
    let table = ShapeTable::default();
    assemble_tensor(grid, |e, q, x| {
        let conn = &grid.elements()[e];
        let psi: f64 = (0..9).map(|i| state[conn[i]] * table.values[q][i]).sum();
        if !(psi > 0.0) {
            return Err(Error::NegativeState {
                x: x[0],
                y: x[1],
                value: psi,
            });
        }
        let b = unit_direction(field, x)?;
        Ok(b * b.transpose() * ((coeffs.par)(x) * psi.powf(exponent)))
    })
}

/// `γ ∫_{Γ_⊥} θ_i θ_j ds` over edges tagged inflow or outflow.
pub fn assemble_robin(grid: &Grid, gamma: f64) -> Result<SparseMatrix> {
    let mut t = Triplets::new(grid.num_nodes());
    for edge in grid.edges() {
        let kind = edge.kind.ok_or(Error::Unclassified)?;
        if !kind.is_transverse() {
            continue;
        }
        let ds = 0.5 * edge.length();
        for (s, w) in GAUSS3_POINTS.iter().zip(GAUSS3_WEIGHTS) {
            let phi: [f64; 3] = std::array::from_fn(|a| lagrange1d(a, *s).0);
            for a in 0..3 {
                for c in 0..3 {
                    t.push(edge.nodes[a], edge.nodes[c], gamma * w * ds * phi[a] * phi[c]);
                }
            }
        }
    }
    t.finalize()
}

/// `∫_Ω f(t, ·) θ_i`.
pub fn assemble_load(grid: &Grid, f: impl Fn(f64, Point) -> f64, t: f64) -> DofVector {
    try_assemble_load(grid, |x| Ok(f(t, x))).expect("infallible source")
}

/// Load vector for a fallible source.
pub fn try_assemble_load(grid: &Grid, f: impl Fn(Point) -> Result<f64>) -> Result<DofVector> {
    let table = ShapeTable::default();
    let det = grid.jacobian_det();
    let mut out = vec![0.0; grid.num_nodes()];
    for (e, conn) in grid.elements().iter().enumerate() {
        for q in 0..9 {
            let x = grid.to_physical(e, table.rule.points[q]);
            let fw = f(x)? * table.rule.weights[q] * det;
            for i in 0..9 {
                out[conn[i]] += fw * table.values[q][i];
            }
        }
    }
    Ok(out)
}

/// `∫_Γ g θ_i ds` summed over all boundary edges.
pub fn assemble_boundary_load(
    grid: &Grid,
    g: impl Fn(&BoundaryEdge, Point) -> Result<f64>,
) -> Result<DofVector> {
    let mut out = vec![0.0; grid.num_nodes()];
    for edge in grid.edges() {
        let ds = 0.5 * edge.length();
        for (s, w) in GAUSS3_POINTS.iter().zip(GAUSS3_WEIGHTS) {
            let gw = g(edge, edge.point(*s))? * w * ds;
            for a in 0..3 {
                out[edge.nodes[a]] += gw * lagrange1d(a, *s).0;
            }
        }
    }
    Ok(out)
}

/// `‖u_h − u(t, ·)‖_{L²}`, optionally divided by `‖u(t, ·)‖_{L²}`.
pub fn l2_norm_error(
    grid: &Grid,
    uh: &[f64],
    exact: impl Fn(f64, Point) -> f64,
    t: f64,
    mode: ErrorMode,
) -> Result<f64> {
    check_len(grid, uh)?;
    let rule = gauss5x5();
    let values: Vec<[f64; 9]> = rule
        .iter()
        .map(|&([xi, eta], _)| {
            std::array::from_fn(|i| lagrange1d(i % 3, xi).0 * lagrange1d(i / 3, eta).0)
        })
        .collect();
    let det = grid.jacobian_det();
    let (mut err, mut norm) = (0.0, 0.0);
    for (e, conn) in grid.elements().iter().enumerate() {
        for (&(xi, weight), basis) in rule.iter().zip(&values) {
            let x = grid.to_physical(e, xi);
            let v: f64 = (0..9).map(|i| uh[conn[i]] * basis[i]).sum();
            let u = exact(t, x);
            let w = weight * det;
            err += w * (v - u).powi(2);
            norm += w * u * u;
        }
    }
    match mode {
        ErrorMode::Absolute => Ok(err.sqrt()),
        ErrorMode::Relative if norm > 0.0 => Ok((err / norm).sqrt()),
        ErrorMode::Relative => Err(Error::ZeroNorm),
    }
}

/// `‖u_h‖_{L²}`.
pub fn l2_norm(grid: &Grid, uh: &[f64]) -> f64 {
    l2_norm_error(grid, uh, |_, _| 0.0, 0.0, ErrorMode::Absolute).expect("length checked by caller")
}

/// `∫_Ω u_h`.
pub fn integral(grid: &Grid, uh: &[f64]) -> f64 {
    let ones = assemble_load(grid, |_, _| 1.0, 0.0);
    ones.iter().zip(uh).map(|(a, b)| a * b).sum()
}

/// Smallest value of `u_h` over all quadrature points, with its location.
pub fn min_at_quadrature(grid: &Grid, uh: &[f64]) -> (f64, Point) {
    let table = ShapeTable::default();
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for (e, conn) in grid.elements().iter().enumerate() {
        for q in 0..9 {
            let v: f64 = (0..9).map(|i| uh[conn[i]] * table.values[q][i]).sum();
            if v < best.0 || v.is_nan() {
                best = (v, grid.to_physical(e, table.rule.points[q]));
            }
        }
    }
    best
}

fn check_len(grid: &Grid, v: &[f64]) -> Result<()> {
    if v.len() != grid.num_nodes() {
        return Err(Error::Dimension(format!(
            "vector of length {} on a grid with {} nodes",
            v.len(),
            grid.num_nodes()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ConstantField, MagneticField};
    use crate::quadrature::QuadRule;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn dense(m: &SparseMatrix) -> DMatrix<f64> {
        let n = m.dim();
        DMatrix::from_fn(n, n, |i, j| m.get(i, j))
    }

    fn classified(nx: usize, ny: usize, field: &dyn Anisotropy) -> Grid {
        Grid::new(nx, ny).unwrap().classify_boundary(field).unwrap()
    }

    #[test]
    fn mass_sums_to_area_and_is_symmetric() {
        let g = Grid::new(3, 5).unwrap();
        let m = assemble_mass(&g);
        assert!((m.values().iter().sum::<f64>() - 1.0).abs() < 1e-13);
        assert!(m.is_symmetric(1e-14));
    }

    #[test]
    fn corner_mass_entry_matches_quadrature_oracle() {
        // ∫_{-1}^{1} (ξ(ξ-1)/2)² dξ = 4/15, times the half-width 1/2 per axis
        let g = Grid::new(1, 1).unwrap();
        let m = assemble_mass(&g);
        let rule = QuadRule::gauss3x3();
        let oracle = rule.integrate(|x, y| {
            let l = |s: f64| 0.5 * s * (s - 1.0);
            (l(x) * l(y)).powi(2)
        }) * 0.25;
        assert!((m.get(0, 0) - oracle).abs() < 1e-15);
        assert!((m.get(0, 0) - (2.0f64 / 15.0).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn mass_is_positive_definite() {
        for (nx, ny) in [(1, 1), (2, 3), (4, 4)] {
            let g = Grid::new(nx, ny).unwrap();
            let eig = dense(&assemble_mass(&g)).symmetric_eigen();
            assert!(eig.eigenvalues.min() > 0.0);
        }
    }

    #[test]
    fn perp_kernel_and_aligned_forms() {
        let field = ConstantField::new(1.0, 0.0);
        let g = Grid::new(3, 3).unwrap();
        let coeffs = Coefficients::unit();
        let perp = assemble_perp(&g, &field, &coeffs).unwrap();
        let par = assemble_par(&g, &field, &coeffs).unwrap();
        let ones = vec![1.0; g.num_nodes()];
        assert!(perp.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
        assert!(par.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
        let ux = g.interpolate(|p| p[0]);
        let uy = g.interpolate(|p| p[1]);
        assert!(perp.bilinear(&ux, &ux).abs() < 1e-12);
        assert!((perp.bilinear(&uy, &uy) - 1.0).abs() < 1e-12);
        assert!(par.bilinear(&uy, &uy).abs() < 1e-12);
        assert!((par.bilinear(&ux, &ux) - 1.0).abs() < 1e-12);
        assert!(perp.is_symmetric(1e-12) && par.is_symmetric(1e-12));
    }

    #[test]
    fn parallel_plus_perpendicular_is_isotropic() {
        let field = MagneticField::new(1.0);
        let g = Grid::new(4, 3).unwrap();
        let c = Coefficients::unit();
        let sum = assemble_par(&g, &field, &c)
            .unwrap()
            .add_scaled(1.0, &assemble_perp(&g, &field, &c).unwrap(), 1.0)
            .unwrap();
        let diff = sum.add_scaled(1.0, &assemble_stiffness(&g), -1.0).unwrap();
        assert!(diff.max_abs() < 1e-12);
    }

    #[test]
    fn parallel_kernel_for_constant_field() {
        let g = Grid::new(3, 4).unwrap();
        let par = assemble_par(&g, &ConstantField::new(1.0, 0.0), &Coefficients::unit()).unwrap();
        // anything depending on y only is constant along b = (1, 0)
        let v = g.interpolate(|p| (3.0 * p[1]).sin() + p[1] * p[1]);
        assert!(par.mul_vec(&v).iter().all(|r| r.abs() < 1e-11));
    }

    #[test]
    fn non_unit_direction_rejected() {
        struct Long;
        impl Anisotropy for Long {
            fn raw(&self, _: Point) -> Vector2<f64> {
                Vector2::new(2.0, 0.0)
            }
            fn direction(&self, x: Point) -> Vector2<f64> {
                self.raw(x)
            }
        }
        let g = Grid::new(1, 1).unwrap();
        assert!(matches!(
            assemble_perp(&g, &Long, &Coefficients::unit()),
            Err(Error::NonUnitDirection { .. })
        ));
    }

    #[test]
    fn nonlinear_form_scaling() {
        let field = MagneticField::new(1.0);
        let g = Grid::new(3, 3).unwrap();
        let c = Coefficients::unit();
        let par = assemble_par(&g, &field, &c).unwrap();
        let ones = vec![1.0; g.num_nodes()];
        let nl1 = assemble_par_nl(&g, &field, &c, &ones, 2.5).unwrap();
        assert!(nl1.add_scaled(1.0, &par, -1.0).unwrap().max_abs() < 1e-14 * par.max_abs());
        let fours = vec![4.0; g.num_nodes()];
        let nl4 = assemble_par_nl(&g, &field, &c, &fours, 2.5).unwrap();
        assert!(nl4.add_scaled(1.0, &par, -32.0).unwrap().max_abs() < 1e-12 * nl4.max_abs());
        for cval in [0.3, 1.7, 11.0] {
            let s = vec![cval; g.num_nodes()];
            let nl = assemble_par_nl(&g, &field, &c, &s, 2.5).unwrap();
            let scale = f64::powf(cval, 2.5);
            for (a, b) in nl.values().iter().zip(par.values()) {
                assert!((a - scale * b).abs() <= 1e-12 * scale * par.max_abs());
            }
        }
    }

    #[test]
    fn nonlinear_form_interpolates_before_power() {
        // state is 1 at every node except one interior midpoint at 0; the
        // interpolated coefficient dips below one but stays positive
        let field = ConstantField::new(1.0, 0.0);
        let g = Grid::new(1, 1).unwrap();
        let mut s = vec![1.0; 9];
        s[4] = 0.0;
        let c = Coefficients::unit();
        assert!(assemble_par_nl(&g, &field, &c, &s, 2.5).is_err());
        s[4] = 0.5;
        let nl = assemble_par_nl(&g, &field, &c, &s, 2.5).unwrap();
        let par = assemble_par(&g, &field, &c).unwrap();
        let x = g.interpolate(|p| p[0]);
        assert!(nl.bilinear(&x, &x) < par.bilinear(&x, &x));
    }

    #[test]
    fn nonpositive_state_reports_location() {
        let field = ConstantField::new(1.0, 0.0);
        let g = Grid::new(2, 2).unwrap();
        let s = g.interpolate(|p| p[0] - 0.5);
        let err = assemble_par_nl(&g, &field, &Coefficients::unit(), &s, 2.5).unwrap_err();
        match err {
            Error::NegativeState { x, value, .. } => {
                assert!(x < 0.5 && value <= 0.0);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn robin_matrix() {
        let field = MagneticField::new(1.0);
        let g = classified(4, 4, &field);
        assert_eq!(assemble_robin(&g, 0.0).unwrap().max_abs(), 0.0);
        let gamma = 1.7;
        let b = assemble_robin(&g, gamma).unwrap();
        let ones = vec![1.0; g.num_nodes()];
        assert!((b.bilinear(&ones, &ones) - 2.0 * gamma).abs() < 1e-13);
        assert!(b.is_symmetric(0.0));
        let eig = dense(&b).symmetric_eigen();
        assert!(eig.eigenvalues.min() > -1e-14);
        assert!(assemble_robin(&Grid::new(2, 2).unwrap(), 1.0).is_err());
    }

    #[test]
    fn load_vectors() {
        let g = Grid::new(2, 2).unwrap();
        assert!(assemble_load(&g, |_, _| 0.0, 0.0).iter().all(|&v| v == 0.0));
        let one: f64 = assemble_load(&g, |_, _| 1.0, 0.0).iter().sum();
        assert!((one - 1.0).abs() < 1e-14);
        let x: f64 = assemble_load(&g, |_, p| p[0], 0.0).iter().sum();
        assert!((x - 0.5).abs() < 1e-14);
    }

    #[test]
    fn errors_of_interpolants() {
        let g = Grid::new(3, 2).unwrap();
        let bq = |_: f64, p: Point| 1.0 + p[0] * p[1] + p[0] * p[0] * p[1] * p[1] - 2.0 * p[1] * p[1];
        let uh = g.interpolate(|p| bq(0.0, p));
        assert!(l2_norm_error(&g, &uh, bq, 0.0, ErrorMode::Absolute).unwrap() < 1e-13);
        let zero = vec![0.0; g.num_nodes()];
        let e = l2_norm_error(&g, &zero, |_, _| 1.0, 0.0, ErrorMode::Absolute).unwrap();
        assert!((e - 1.0).abs() < 1e-14);
        assert!(matches!(
            l2_norm_error(&g, &zero, |_, _| 0.0, 0.0, ErrorMode::Relative),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn interpolation_error_is_third_order() {
        let exact = |_: f64, p: Point| (PI * p[0]).sin();
        let err = |n: usize| {
            let g = Grid::new(n, n).unwrap();
            let uh = g.interpolate(|p| exact(0.0, p));
            l2_norm_error(&g, &uh, exact, 0.0, ErrorMode::Absolute).unwrap()
        };
        let (e1, e2) = (err(10), err(20));
        let order = (e1 / e2).log2();
        assert!((2.9..3.1).contains(&order), "order {order}");
    }
}
