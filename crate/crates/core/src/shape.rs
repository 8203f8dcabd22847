//! Biquadratic (Q2) Lagrange basis on the reference square `[-1, 1]^2`.
//!
//! Local numbering is lexicographic with x fastest: index `3 * b + a` is the
//! node at reference coordinates `(a - 1, b - 1)`.

use crate::error::{Error, Result};
use crate::quadrature::QuadRule;

pub const NODES_PER_ELEMENT: usize = 9;

/// Reference coordinate of the 1D node `k` in `{0, 1, 2}`.
pub fn reference_coordinate(k: usize) -> f64 {
    k as f64 - 1.0
}

/// Quadratic Lagrange polynomial through `{-1, 0, 1}` and its derivative.
pub fn lagrange1d(k: usize, xi: f64) -> (f64, f64) {
    match k {
        0 => (0.5 * xi * (xi - 1.0), xi - 0.5),
        1 => (1.0 - xi * xi, -2.0 * xi),
        2 => (0.5 * xi * (xi + 1.0), xi + 0.5),
        _ => unreachable!("1D quadratic basis index {k}"),
    }
}

/// Value and reference gradient of local basis function `index` at `point`.
pub fn shape_eval(index: usize, point: [f64; 2]) -> Result<(f64, [f64; 2])> {
    if index >= NODES_PER_ELEMENT {
        return Err(Error::BasisIndex(index));
    }
    let (a, b) = (index % 3, index / 3);
    let (lx, dlx) = lagrange1d(a, point[0]);
    let (ly, dly) = lagrange1d(b, point[1]);
    Ok((lx * ly, [dlx * ly, lx * dly]))
}

/// Basis values and reference gradients tabulated at the points of a rule.
#[derive(Debug, Clone)]
pub struct ShapeTable {
    pub rule: QuadRule,
    /// `values[q][i]`: basis `i` at quadrature point `q`.
    pub values: [[f64; 9]; 9],
    /// `grads[q][i]`: reference gradient of basis `i` at point `q`.
    pub grads: [[[f64; 2]; 9]; 9],
}

impl ShapeTable {
    pub fn new(rule: QuadRule) -> Self {
        let mut values = [[0.0; 9]; 9];
        let mut grads = [[[0.0; 2]; 9]; 9];
        for (q, p) in rule.points.iter().enumerate() {
            for i in 0..NODES_PER_ELEMENT {
                let (v, g) = shape_eval(i, *p).expect("index in range");
                values[q][i] = v;
                grads[q][i] = g;
            }
        }
        Self {
            rule,
            values,
            grads,
        }
    }
}

impl Default for ShapeTable {
    fn default() -> Self {
        Self::new(QuadRule::gauss3x3())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn node(i: usize) -> [f64; 2] {
        [reference_coordinate(i % 3), reference_coordinate(i / 3)]
    }

    #[test]
    fn lagrange_property() {
        for i in 0..9 {
            for j in 0..9 {
                let (v, _) = shape_eval(i, node(j)).unwrap();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn partition_of_unity_and_zero_gradient_sum() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let p = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
            let (mut sum, mut gsum) = (0.0, [0.0, 0.0]);
            for i in 0..9 {
                let (v, g) = shape_eval(i, p).unwrap();
                sum += v;
                gsum[0] += g[0];
                gsum[1] += g[1];
            }
            assert!((sum - 1.0).abs() < 1e-13);
            assert!(gsum[0].abs() < 1e-13 && gsum[1].abs() < 1e-13);
        }
    }

    #[test]
    fn edge_midpoint_basis_is_flat_along_its_edge() {
        // bottom-edge midpoint node (0, -1): local index 1
        let (v, g) = shape_eval(1, [0.0, -1.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert_eq!(g[0], 0.0);
        // left-edge midpoint node (-1, 0): local index 3
        let (v, g) = shape_eval(3, [-1.0, 0.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = [0.3, -0.45];
        let h = 1e-6;
        for i in 0..9 {
            let (_, g) = shape_eval(i, p).unwrap();
            let fx = (shape_eval(i, [p[0] + h, p[1]]).unwrap().0
                - shape_eval(i, [p[0] - h, p[1]]).unwrap().0)
                / (2.0 * h);
            let fy = (shape_eval(i, [p[0], p[1] + h]).unwrap().0
                - shape_eval(i, [p[0], p[1] - h]).unwrap().0)
                / (2.0 * h);
            assert!((g[0] - fx).abs() < 1e-8 && (g[1] - fy).abs() < 1e-8);
        }
    }

    #[test]
    fn out_of_range_index_rejected() {
        assert!(matches!(shape_eval(9, [0.0, 0.0]), Err(Error::BasisIndex(9))));
    }
}
