//! Convex functions tabulated on a uniform grid with linear tails.

use std::io::{self, Write};

use crate::error::{Error, Result};

/// Default grid half-width, in units of σ.
pub const DEFAULT_HALF_WIDTH: f64 = 8.0;
pub const DEFAULT_POINTS: usize = 1601;

/// A function tabulated on a uniform grid over `[y_min, y_max]` that contains
/// `0` as an exact node, extended linearly outside the grid with
/// `left_slope` / `right_slope`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    y_min: f64,
    y_max: f64,
    values: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
}

impl GridFunction {
    pub fn new(y_min: f64, y_max: f64, values: Vec<f64>, left_slope: f64, right_slope: f64) -> Result<Self> {
        let n = values.len();
        if n < 3 {
            return Err(Error::invalid(format!("grid needs at least 3 points, got {n}")));
        }
        if !(y_min < 0.0 && 0.0 < y_max) {
            return Err(Error::invalid(format!("grid [{y_min}, {y_max}] must straddle 0")));
        }
        let h = (y_max - y_min) / (n - 1) as f64;
        let i0 = (-y_min / h).round();
        if (y_min + i0 * h).abs() > 1e-9 * h {
            return Err(Error::invalid("0 is not a grid node"));
        }
        if values.iter().any(|v| !v.is_finite()) || !left_slope.is_finite() || !right_slope.is_finite() {
            return Err(Error::invalid("grid values and slopes must be finite"));
        }
        Ok(Self { y_min, y_max, values, left_slope, right_slope })
    }

    /// Tabulates `f` on `n` nodes of `[−half_width, half_width]`; tail slopes
    /// are the one-sided boundary differences.
    pub fn tabulate(half_width: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::invalid("symmetric grid needs an odd number (≥ 3) of points"));
        }
        let h = 2.0 * half_width / (n - 1) as f64;
        let values: Vec<f64> = (0..n).map(|i| f(-half_width + i as f64 * h)).collect();
        let left = (values[1] - values[0]) / h;
        let right = (values[n - 1] - values[n - 2]) / h;
        Self::new(-half_width, half_width, values, left, right)
    }

    /// Same grid, new values and slopes.
    pub fn with_values(&self, values: Vec<f64>, left_slope: f64, right_slope: f64) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::invalid("value count does not match the grid"));
        }
        Self::new(self.y_min, self.y_max, values, left_slope, right_slope)
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn n_points(&self) -> usize {
        self.values.len()
    }

    pub fn step(&self) -> f64 {
        (self.y_max - self.y_min) / (self.values.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.values.len() - 1 {
            self.y_max
        } else {
            self.y_min + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|i| self.node(i))
    }

    pub fn zero_index(&self) -> usize {
        (-self.y_min / self.step()).round() as usize
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_slope(&self) -> f64 {
        self.left_slope
    }

    pub fn right_slope(&self) -> f64 {
        self.right_slope
    }

    /// Nodal first derivative: central differences inside, the tail slope at
    /// the two end nodes.
    fn nodal_d1(&self, i: usize) -> f64 {
        let n = self.values.len();
        let h = self.step();
        if i == 0 {
            self.left_slope
        } else if i == n - 1 {
            self.right_slope
        } else {
            (self.values[i + 1] - self.values[i - 1]) / (2.0 * h)
        }
    }

    fn nodal_d2(&self, i: usize) -> f64 {
        let n = self.values.len();
        let i = i.clamp(1, n - 2);
        let h = self.step();
        (self.values[i + 1] - 2.0 * self.values[i] + self.values[i - 1]) / (h * h)
    }

    /// Value (`order = 0`), first or second derivative at `y`.
    ///
    /// Inside the grid values are interpolated linearly and derivatives are
    /// nodal finite differences interpolated linearly. Outside, the function
    /// is affine with the tail slope and its second derivative is zero.
    pub fn eval(&self, y: f64, order: u8) -> f64 {
        let n = self.values.len();
        if y <= self.y_min {
            return match order {
                0 => self.values[0] + self.left_slope * (y - self.y_min),
                1 => self.left_slope,
                _ => 0.0,
            };
        }
        if y >= self.y_max {
            return match order {
                0 => self.values[n - 1] + self.right_slope * (y - self.y_max),
                1 => self.right_slope,
                _ => 0.0,
            };
        }
        let u = (y - self.y_min) / self.step();
        let i = (u.floor() as usize).min(n - 2);
        let frac = u - i as f64;
        let lerp = |a: f64, b: f64| a + frac * (b - a);
        match order {
            0 => lerp(self.values[i], self.values[i + 1]),
            1 => lerp(self.nodal_d1(i), self.nodal_d1(i + 1)),
            _ => lerp(self.nodal_d2(i), self.nodal_d2(i + 1)),
        }
    }

    pub fn value(&self, y: f64) -> f64 {
        self.eval(y, 0)
    }

    /// Discrete convexity: every second difference is `≥ −1e-9·scale`
    /// (scale = `max(1, max|value|)`) and the tails do not bend inwards.
    pub fn is_convex(&self) -> bool {
        let scale = self.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-9 * scale;
        let h = self.step();
        let n = self.values.len();
        let second_ok = self.values.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] >= -tol);
        let first = (self.values[1] - self.values[0]) / h;
        let last = (self.values[n - 1] - self.values[n - 2]) / h;
        second_ok && self.left_slope <= first + tol / h && self.right_slope >= last - tol / h
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// CSV with header `y,value`, one row per node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "y,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.node(i), v)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    /// Least-squares fit of `a·y²/2 + b·y + c` on nodes with `|y| ≤ half_width`;
    /// returns `(a, b, c)`.
    pub fn fit_quadratic(&self, half_width: f64) -> (f64, f64, f64) {
        // normal equations in the basis {y²/2, y, 1}
        let mut m = [[0.0f64; 3]; 3];
        let mut r = [0.0f64; 3];
        for (y, v) in self.nodes().zip(&self.values) {
            if y.abs() > half_width + 1e-12 {
                continue;
            }
            let basis = [0.5 * y * y, y, 1.0];
            for i in 0..3 {
                r[i] += basis[i] * v;
                for j in 0..3 {
                    m[i][j] += basis[i] * basis[j];
                }
            }
        }
        let sol = solve3(m, r);
        (sol[0], sol[1], sol[2])
    }
}

/// Gaussian elimination with partial pivoting for a 3×3 system.
fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv = (col..3).max_by(|a, b| m[*a][col].abs().total_cmp(&m[*b][col].abs())).unwrap();
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (dst, src) in m[row].iter_mut().zip(pivot_row).skip(col) {
                *dst -= f * src;
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (r[row] - s) / m[row][row];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quarter_square() -> GridFunction {
        GridFunction::tabulate(8.0, 1601, |y| 0.25 * y * y).unwrap()
    }

    #[test]
    fn quadratic_evaluation() {
        let g = quarter_square();
        let h = g.step();
        assert!((g.eval(2.0, 0) - 1.0).abs() <= h * h / 8.0 * 0.5 + 1e-14);
        assert!((g.eval(2.0, 1) - 1.0).abs() < 1e-10);
        assert!((g.eval(0.0, 2) - 0.5).abs() < 1e-8);
        // off-node
        assert!((g.eval(1.2345, 0) - 0.25 * 1.2345 * 1.2345).abs() <= h * h / 8.0 * 0.5 + 1e-14);
    }

    #[test]
    fn tails_are_linear() {
        let g = quarter_square();
        let s = g.right_slope();
        assert!((g.eval(10.0, 0) - (16.0 + 2.0 * s)).abs() < 1e-12);
        assert_eq!(g.eval(10.0, 1), s);
        assert_eq!(g.eval(-10.0, 2), 0.0);
    }

    #[test]
    fn validation() {
        assert!(GridFunction::new(-1.0, 1.0, vec![0.0, 0.0], 0.0, 0.0).is_err());
        assert!(GridFunction::new(0.0, 1.0, vec![0.0; 3], 0.0, 0.0).is_err());
        // 0 not a node: [-1, 2] with 3 points → nodes -1, 0.5, 2
        assert!(GridFunction::new(-1.0, 2.0, vec![0.0; 3], 0.0, 0.0).is_err());
        assert!(GridFunction::new(-1.0, 1.0, vec![0.0, f64::NAN, 0.0], 0.0, 0.0).is_err());
        let g = GridFunction::new(-1.0, 2.0, vec![0.0; 4], 0.0, 0.0).unwrap();
        assert_eq!(g.zero_index(), 1);
        assert_eq!(g.node(1), 0.0);
    }

    #[test]
    fn csv_header_and_rows() {
        let g = GridFunction::tabulate(1.0, 3, |y| y * y).unwrap();
        assert_eq!(g.to_csv_string(), "y,value\n-1,1\n0,0\n1,1\n");
    }

    #[test]
    fn quadratic_fit_recovers_coefficients() {
        let g = GridFunction::tabulate(8.0, 1601, |y| 0.3 * y * y + 0.7 * y).unwrap();
        let (a, b, c) = g.fit_quadratic(6.0);
        assert!((a - 0.6).abs() < 1e-10 && (b - 0.7).abs() < 1e-10 && c.abs() < 1e-10);
    }

    #[test]
    fn convexity_of_standard_shapes() {
        for f in [|y: f64| y * y, |y: f64| y.abs(), |y: f64| y.exp()] {
            assert!(GridFunction::tabulate(5.0, 101, f).unwrap().is_convex());
        }
        assert!(!GridFunction::tabulate(5.0, 101, |y| -y * y).unwrap().is_convex());
    }

    proptest! {
        #[test]
        fn convexity_property(a in 0.01f64..5.0, b in -3.0f64..3.0, hw in 1.0f64..10.0, n in 2usize..200) {
            let n = 2 * n + 1;
            prop_assert!(GridFunction::tabulate(hw, n, |y| a * y * y + b * y).unwrap().is_convex());
            prop_assert!(GridFunction::tabulate(hw, n, |y| a * y.abs()).unwrap().is_convex());
            prop_assert!(GridFunction::tabulate(hw, n, |y| (a * y).exp()).unwrap().is_convex());
            prop_assert!(!GridFunction::tabulate(hw, n, |y| -a * y * y).unwrap().is_convex());
        }

        #[test]
        fn derivative_matches_centered_differences(y in -7.5f64..7.5) {
            let g = GridFunction::tabulate(8.0, 801, |y| (0.5 * y).exp() + y * y).unwrap();
            let eps = 1e-7;
            let fd = (g.eval(y + eps, 0) - g.eval(y - eps, 0)) / (2.0 * eps);
            // both approximate f' to O(h·max f''), h = 0.02, max f'' < 13
            prop_assert!((g.eval(y, 1) - fd).abs() < g.step() * 13.0);
        }
    }
}
