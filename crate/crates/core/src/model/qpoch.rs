//! q-Pochhammer symbols `(a; q)_k = prod_{i<k} (1 - a q^i)`.

use num_complex::Complex64;

/// Scalars a q-Pochhammer argument may take.
pub trait QScalar: Copy {
    fn one() -> Self;
    fn one_minus_scaled(self, s: f64) -> Self;
    fn mul(self, other: Self) -> Self;
    fn recip(self) -> Self;
    fn modulus(self) -> f64;
}

impl QScalar for f64 {
    fn one() -> Self {
        1.0
    }
    fn one_minus_scaled(self, s: f64) -> Self {
        1.0 - self * s
    }
    fn mul(self, other: Self) -> Self {
        self * other
    }
    fn recip(self) -> Self {
        1.0 / self
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl QScalar for Complex64 {
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn one_minus_scaled(self, s: f64) -> Self {
        Complex64::new(1.0, 0.0) - self * s
    }
    fn mul(self, other: Self) -> Self {
        self * other
    }
    fn recip(self) -> Self {
        self.inv()
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Default truncation threshold for infinite products.
pub const DEFAULT_TOL: f64 = 1e-17;

/// `(a; q)_k`.
pub fn qpoch<T: QScalar>(a: T, q: f64, k: usize) -> T {
    let mut acc = T::one();
    let mut qi = 1.0;
    for _ in 0..k {
        acc = acc.mul(a.one_minus_scaled(qi));
        qi *= q;
    }
    acc
}

/// `(a; q)_infinity`, truncated once `|a| q^m <= tol`.
///
/// The neglected tail `prod_{i>=m}(1 - a q^i)` differs from 1 by at most
/// about `2 tol / (1 - q)` in relative terms.
pub fn qpoch_inf<T: QScalar>(a: T, q: f64, tol: f64) -> T {
    let mut acc = T::one();
    let mut qi = 1.0;
    let m = a.modulus();
    while m * qi > tol {
        acc = acc.mul(a.one_minus_scaled(qi));
        qi *= q;
    }
    acc
}

/// `1 / (a; q)_infinity` accumulated factor by factor, which stays finite
/// when the forward product would overflow.
pub fn qpoch_inf_recip<T: QScalar>(a: T, q: f64, tol: f64) -> T {
    let mut acc = T::one();
    let mut qi = 1.0;
    let m = a.modulus();
    while m * qi > tol {
        acc = acc.mul(a.one_minus_scaled(qi).recip());
        qi *= q;
    }
    acc
}

/// Sum of principal logarithms of the factors of `(a; q)_infinity`.
/// Only meaningful after exponentiation; used to raise the product to large powers.
pub fn qpoch_inf_log(a: Complex64, q: f64, tol: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut qi = 1.0;
    let m = a.norm();
    while m * qi > tol {
        acc += (Complex64::new(1.0, 0.0) - a * qi).ln();
        qi *= q;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn finite_products() {
        assert_eq!(qpoch(0.5, 0.5, 0), 1.0);
        assert_relative_eq!(qpoch(0.5, 0.5, 2), 0.5 * 0.75);
        assert_relative_eq!(qpoch(0.3, 0.3, 3), 0.7 * 0.91 * (1.0 - 0.027), epsilon = 1e-15);
        let z = Complex64::new(0.2, 0.4);
        let v = qpoch(z, 0.5, 2);
        let w = (Complex64::new(1.0, 0.0) - z) * (Complex64::new(1.0, 0.0) - z * 0.5);
        assert!((v - w).norm() < 1e-15);
    }

    #[test]
    fn euler_identity() {
        // 1/(z;q)_inf = sum_k z^k/(q;q)_k for |z| < 1
        let q = 0.6;
        let z = -0.7;
        let lhs = qpoch_inf_recip(z, q, DEFAULT_TOL);
        let mut rhs = 0.0;
        let mut zk = 1.0;
        for k in 0..200 {
            rhs += zk / qpoch(q, q, k);
            zk *= z;
        }
        assert_relative_eq!(lhs, rhs, max_relative = 1e-13);
        assert_relative_eq!(qpoch_inf(z, q, DEFAULT_TOL) * lhs, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn log_version_matches() {
        let a = Complex64::new(0.8, 0.3);
        let direct = qpoch_inf(a, 0.5, DEFAULT_TOL);
        let via_log = qpoch_inf_log(a, 0.5, DEFAULT_TOL).exp();
        assert!((direct - via_log).norm() < 1e-14);
    }
}
