//! Gauss–Legendre rules on [-1, 1] and tensor products on the reference
//! square. The 3-point rule drives assembly; the 5-point rule measures errors.

/// Abscissae of the 3-point Gauss rule, `±sqrt(3/5)` and 0.
pub const GAUSS3_POINTS: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
pub const GAUSS3_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

pub const GAUSS5_POINTS: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
pub const GAUSS5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// `(point, weight)` pairs of the 5×5 tensor rule, exact per axis up to
/// degree 9.
pub fn gauss5x5() -> Vec<([f64; 2], f64)> {
    let mut out = Vec::with_capacity(25);
    for j in 0..5 {
        for i in 0..5 {
            out.push((
                [GAUSS5_POINTS[i], GAUSS5_POINTS[j]],
                GAUSS5_WEIGHTS[i] * GAUSS5_WEIGHTS[j],
            ));
        }
    }
    out
}

/// Tensor-product rule on `[-1, 1]^2`. Exact for `ξ^a η^b` with `a, b <= 5`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub points: [[f64; 2]; 9],
    pub weights: [f64; 9],
}

impl QuadRule {
    pub fn gauss3x3() -> Self {
        let mut points = [[0.0; 2]; 9];
        let mut weights = [0.0; 9];
        for j in 0..3 {
            for i in 0..3 {
                let k = 3 * j + i;
                points[k] = [GAUSS3_POINTS[i], GAUSS3_POINTS[j]];
                weights[k] = GAUSS3_WEIGHTS[i] * GAUSS3_WEIGHTS[j];
            }
        }
        Self { points, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }
}

impl Default for QuadRule {
    fn default() -> Self {
        Self::gauss3x3()
    }
}
