use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::check_prime;

/// Least-degree interpolant through exact points, monomial coefficients lowest first.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactFit {
    pub points: Vec<(BigRational, BigRational)>,
    pub degree: usize,
    pub coefficients: Vec<BigRational>,
}

impl ExactFit {
    pub fn eval(&self, x: &BigRational) -> BigRational {
        self.coefficients.iter().rev().fold(BigRational::zero(), |acc, c| acc * x + c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FloatFit {
    pub points: Vec<(f64, f64)>,
    pub degree: usize,
    pub coefficients: Vec<f64>,
    pub max_residual: f64,
    /// Max residual of the best fit one degree lower; `None` at degree 0.
    pub lower_degree_residual: Option<f64>,
}

impl FloatFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

fn check_points<T: PartialEq>(xs: &[T]) -> Result<()> {
    if xs.len() < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 points, got {}", xs.len())));
    }
    for i in 0..xs.len() {
        if xs[..i].contains(&xs[i]) {
            return Err(Error::InvalidParameter("abscissae must be distinct".into()));
        }
    }
    Ok(())
}

/// Newton coefficients of the interpolant through all points.
fn newton(points: &[(BigRational, BigRational)]) -> Vec<BigRational> {
    let xs: Vec<&BigRational> = points.iter().map(|(x, _)| x).collect();
    let mut table: Vec<BigRational> = points.iter().map(|(_, y)| y.clone()).collect();
    let mut out = vec![table[0].clone()];
    for order in 1..points.len() {
        for i in (order..points.len()).rev() {
            table[i] = (&table[i] - &table[i - 1]) / (xs[i] - xs[i - order]);
        }
        out.push(table[order].clone());
    }
    out
}

pub fn fit_degree_exact(points: &[(BigRational, BigRational)]) -> Result<ExactFit> {
    check_points(&points.iter().map(|(x, _)| x.clone()).collect::<Vec<_>>())?;
    let c = newton(points);
    let degree = c.iter().rposition(|v| !v.is_zero()).unwrap_or(0);
    // expand prod_{j<i} (x - x_j) into monomials
    let mut coefficients = vec![BigRational::zero(); degree + 1];
    let mut basis = vec![BigRational::one()];
    for (i, ci) in c.iter().enumerate().take(degree + 1) {
        for (k, b) in basis.iter().enumerate() {
            coefficients[k] += ci * b;
        }
        let xi = &points[i].0;
        let mut next = vec![BigRational::zero(); basis.len() + 1];
        for (k, b) in basis.iter().enumerate() {
            next[k + 1] += b;
            next[k] -= xi * b;
        }
        basis = next;
    }
    Ok(ExactFit { points: points.to_vec(), degree, coefficients })
}

/// Value at `at` of the interpolant through all points.
pub fn interpolate_exact(points: &[(BigRational, BigRational)], at: &BigRational) -> Result<BigRational> {
    Ok(fit_degree_exact(points)?.eval(at))
}

/// Least-squares polynomial of the given degree; returns coefficients and max residual.
fn least_squares(points: &[(f64, f64)], degree: usize) -> (Vec<f64>, f64) {
    let scale = points.iter().map(|(x, _)| x.abs()).fold(0.0f64, f64::max).max(1.0);
    let m = points.len();
    let cols = degree + 1;
    let mut q: Vec<Vec<f64>> = (0..cols).map(|j| points.iter().map(|(x, _)| (x / scale).powi(j as i32)).collect()).collect();
    let mut r = vec![vec![0.0; cols]; cols];
    for j in 0..cols {
        for i in 0..j {
            let dot: f64 = (0..m).map(|t| q[i][t] * q[j][t]).sum();
            r[i][j] = dot;
            for t in 0..m {
                q[j][t] -= dot * q[i][t];
            }
        }
        let norm = (0..m).map(|t| q[j][t] * q[j][t]).sum::<f64>().sqrt();
        r[j][j] = norm;
        if norm > 0.0 {
            for t in 0..m {
                q[j][t] /= norm;
            }
        }
    }
    let qty: Vec<f64> = (0..cols).map(|j| (0..m).map(|t| q[j][t] * points[t].1).sum()).collect();
    let mut c = vec![0.0; cols];
    for j in (0..cols).rev() {
        let s: f64 = (j + 1..cols).map(|k| r[j][k] * c[k]).sum();
        c[j] = if r[j][j] == 0.0 { 0.0 } else { (qty[j] - s) / r[j][j] };
    }
    let coefficients: Vec<f64> = c.iter().enumerate().map(|(j, v)| v / scale.powi(j as i32)).collect();
    let residual = points
        .iter()
        .map(|(x, y)| (coefficients.iter().rev().fold(0.0, |acc, k| acc * x + k) - y).abs())
        .fold(0.0, f64::max);
    (coefficients, residual)
}

/// Smallest degree whose least-squares fit reproduces every point within `tolerance`.
pub fn fit_degree(points: &[(f64, f64)], tolerance: f64) -> Result<FloatFit> {
    check_points(&points.iter().map(|(x, _)| *x).collect::<Vec<_>>())?;
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tolerance} must be non-negative")));
    }
    let mut lower = None;
    for degree in 0..points.len() {
        let (coefficients, max_residual) = least_squares(points, degree);
        if max_residual <= tolerance || degree + 1 == points.len() {
            return Ok(FloatFit { points: points.to_vec(), degree, coefficients, max_residual, lower_degree_residual: lower });
        }
        lower = Some(max_residual);
    }
    unreachable!("the interpolating degree always terminates the loop")
}

/// `min{n/2, (log2(ξ^{n+3} c) - 1) / (log2(ξ^3/(ξ-1)) + 1)}`, clamped at 0.
pub fn koiran_degree_bound(xi: f64, n: usize, c: f64) -> Result<f64> {
    if !(xi > 1.0) || !(c >= 0.0) {
        return Err(Error::InvalidParameter(format!("need xi > 1 and c >= 0, got xi = {xi}, c = {c}")));
    }
    let num = (n as f64 + 3.0) * xi.log2() + c.log2() - 1.0;
    let den = (xi.powi(3) / (xi - 1.0)).log2() + 1.0;
    let second = if c == 0.0 { f64::NEG_INFINITY } else { num / den };
    Ok((n as f64 / 2.0).min(second).max(0.0))
}

/// The bound for a distinguisher with gap `epsilon`: `ξ = p`, `c = (2 - 4ε)/(p - 1)`.
pub fn koiran_bound(p: u32, n: usize, epsilon: f64) -> Result<f64> {
    check_prime(p)?;
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} must lie in (0, 1/2)")));
    }
    koiran_degree_bound(p as f64, n, (2.0 - 4.0 * epsilon) / (p as f64 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn pts(f: impl Fn(i64) -> BigRational) -> Vec<(BigRational, BigRational)> {
        [1, 2, 4, 8].iter().map(|&d| (q(d, 1), f(d))).collect()
    }

    #[test]
    fn constant_is_degree_zero() {
        let fit = fit_degree_exact(&pts(|_| q(3, 7))).unwrap();
        assert_eq!(fit.degree, 0);
        assert_eq!(fit.coefficients, vec![q(3, 7)]);
        assert_eq!(fit_degree(&[(1.0, 0.5), (2.0, 0.5), (4.0, 0.5)], 1e-12).unwrap().degree, 0);
    }

    #[test]
    fn linear_in_d() {
        let fit = fit_degree_exact(&pts(|d| q(d - 1, 7))).unwrap();
        assert_eq!(fit.degree, 1);
        assert_eq!(fit.coefficients, vec![q(-1, 7), q(1, 7)]);
        let f = fit_degree(&[(1.0, 0.0), (2.0, 1.0 / 7.0), (4.0, 3.0 / 7.0), (8.0, 1.0)], 1e-9).unwrap();
        assert_eq!(f.degree, 1);
        assert!(f.lower_degree_residual.unwrap() > 0.1);
    }

    #[test]
    fn quadratic_through_three_points_extrapolates() {
        // 1/4, 2/5, 337/784 at D = 1, 2, 4
        let three = vec![(q(1, 1), q(1, 4)), (q(2, 1), q(2, 5)), (q(4, 1), q(337, 784))];
        assert_eq!(interpolate_exact(&three, &q(8, 1)).unwrap(), q(-331, 560));
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(fit_degree(&[(1.0, 1.0)], 1e-6).is_err());
        assert!(fit_degree(&[(1.0, 1.0), (1.0, 2.0)], 1e-6).is_err());
        assert!(fit_degree_exact(&[(q(1, 1), q(1, 1))]).is_err());
    }

    #[test]
    fn koiran_spot_values() {
        // (log2(2^67 * 2/3) - 1) / 4
        let hand = (67.0 + (2.0f64 / 3.0).log2() - 1.0) / 4.0;
        let b64 = koiran_bound(2, 64, 1.0 / 3.0).unwrap();
        assert!((b64 - hand).abs() < 1e-12);
        assert!((b64 - 16.35).abs() < 1e-2);
        let ratio = koiran_bound(2, 128, 1.0 / 3.0).unwrap() / b64;
        assert!((1.9..=2.1).contains(&ratio));
        // only n = 1 sits on the n/2 branch at this gap
        assert_eq!(koiran_bound(2, 1, 1.0 / 3.0).unwrap(), 0.5);
        assert!(koiran_bound(2, 2, 1.0 / 3.0).unwrap() < 1.0);
    }

    #[test]
    fn koiran_degenerate_and_invalid() {
        // the log term diverges as the gap closes; at n = 8 it is already clamped
        let eps = 0.5 - f64::EPSILON / 4.0;
        assert_eq!(koiran_bound(2, 8, eps).unwrap(), 0.0);
        assert!(koiran_bound(2, 64, eps).unwrap() < koiran_bound(2, 64, 0.49).unwrap());
        assert!(koiran_bound(2, 64, 0.5).is_err());
        assert!(koiran_bound(2, 64, 0.0).is_err());
        assert!(koiran_bound(4, 64, 0.25).is_err());
    }

    proptest! {
        #[test]
        fn exact_fit_recovers_random_polynomials(coeffs in prop::collection::vec(-20i64..20, 1..5)) {
            let f = |d: i64| coeffs.iter().rev().fold(q(0, 1), |acc, &c| acc * q(d, 1) + q(c, 3));
            let points: Vec<_> = [1i64, 2, 4, 8, 16].iter().map(|&d| (q(d, 1), f(d))).collect();
            let fit = fit_degree_exact(&points).unwrap();
            let expected = coeffs.iter().rposition(|&c| c != 0).unwrap_or(0);
            prop_assert_eq!(fit.degree, expected);
            for (x, y) in &points {
                prop_assert_eq!(&fit.eval(x), y);
            }
        }

        #[test]
        fn koiran_is_monotone_in_n(p in prop::sample::select(vec![2u32, 3, 5]), n in 1usize..200, eps in 0.01f64..0.49) {
            prop_assert!(koiran_bound(p, n + 1, eps).unwrap() >= koiran_bound(p, n, eps).unwrap());
        }
    }
}
