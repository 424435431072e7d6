//! Special-function kernels shared across the crate: modified Bessel K of
//! real order, Gauss-Legendre rules, and C-infinity cutoff shapes.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Modified Bessel function of the second kind, K_nu(z), for real order
/// nu >= 0 and z > 0.
///
/// Uses the integral representation K_nu(z) = int_0^inf exp(-z cosh t) cosh(nu t) dt.
/// The integrand extends to an even entire function of t, so the trapezoidal
/// rule converges geometrically; the step is halved until the sum stabilises.
pub fn bessel_k(nu: f64, z: f64) -> f64 {
    assert!(z > 0.0, "bessel_k requires z > 0, got {z}");
    let nu = nu.abs(); // K_{-nu} = K_nu

    let integrand = |t: f64| -> f64 {
        let expo = -z * t.cosh() + if nu > 0.0 { (nu * t).cosh().ln() } else { 0.0 };
        if expo < -745.0 {
            0.0
        } else {
            expo.exp()
        }
    };

    // Generous cutoff: beyond t_max the integrand is below 1e-320.
    let t_max = {
        let mut t = 1.0_f64;
        while z * t.cosh() - nu * t < 760.0 && t < 60.0 {
            t += 0.5;
        }
        t
    };

    // The integrand is analytic in a strip of half-width ~pi/2, so the
    // trapezoidal error is ~exp(-2 pi (pi/2) / h): h = 0.25 already sits
    // near machine precision. One halving confirms it.
    let mut h = 0.25_f64;
    let n = (t_max / h).ceil() as usize;
    let mut s = 0.5 * integrand(0.0);
    for i in 1..=n {
        s += integrand(i as f64 * h);
    }
    let mut val = s * h;
    for _ in 0..3 {
        // refine by adding midpoints
        let n2 = (t_max / h).ceil() as usize;
        let mut odd = 0.0;
        for i in 0..n2 {
            odd += integrand((i as f64 + 0.5) * h);
        }
        let refined = 0.5 * val + 0.5 * h * odd;
        let stable = (refined - val).abs() <= 1e-15 * refined.abs().max(1e-300);
        val = refined;
        h *= 0.5;
        if stable {
            break;
        }
    }
    val
}

/// Gauss-Legendre nodes and weights on [-1, 1], cached per order.
pub fn gauss_legendre(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&n) {
        return rule.clone();
    }
    let rule = Arc::new(compute_gauss_legendre(n));
    cache.lock().unwrap().insert(n, rule.clone());
    rule
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_and_deriv(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// C-infinity monotone step: 0 for t <= 0, 1 for t >= 1.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let f = (-1.0 / t).exp();
        let g = (-1.0 / (1.0 - t)).exp();
        f / (f + g)
    }
}

/// C-infinity plateau bump: 1 on |y| <= 1/2, 0 on |y| >= 1, smooth between.
pub fn plateau_bump(y: f64) -> f64 {
    smoothstep(2.0 * (1.0 - y.abs()))
}

/// n! as f64 (exact through n = 22).
pub fn factorial(n: u32) -> f64 {
    (1..=n as u64).map(|k| k as f64).product()
}

/// Binomial coefficient as f64.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from an independent arbitrary-precision evaluation.
    #[test]
    fn bessel_k_integer_orders() {
        assert!((bessel_k(0.0, 1.0) - 0.42102443824070834).abs() < 1e-13);
        assert!((bessel_k(1.0, 1.0) - 0.6019072301972346).abs() < 1e-13);
        assert!((bessel_k(0.0, 0.1) - 2.427069024702017).abs() < 1e-12);
        assert!((bessel_k(2.0, 3.7) - 0.02515932754445005).abs() < 1e-15);
        assert!((bessel_k(0.0, 10.0) - 1.778006231616765e-05).abs() < 1e-18);
    }

    #[test]
    fn bessel_k_half_integer_orders_match_elementary_forms() {
        // K_{1/2}(z) = sqrt(pi/(2z)) e^{-z}
        for &z in &[0.3, 1.0, 2.0, 7.5] {
            let exact = (std::f64::consts::PI / (2.0 * z)).sqrt() * (-z).exp();
            assert!((bessel_k(0.5, z) - exact).abs() < 1e-13 * exact);
        }
        // K_{3/2}(z) = sqrt(pi/(2z)) e^{-z} (1 + 1/z)
        let z = 2.0;
        let exact = (std::f64::consts::PI / (2.0 * z)).sqrt() * (-z).exp() * (1.0 + 1.0 / z);
        assert!((bessel_k(1.5, z) - exact).abs() < 1e-13);
        assert!((bessel_k(2.5, 0.3) - 75.1521401643749).abs() < 1e-9);
    }

    #[test]
    fn bessel_k_negative_order_symmetry() {
        assert_eq!(bessel_k(-1.0, 2.3), bessel_k(1.0, 2.3));
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(8);
        let (xs, ws) = (&rule.0, &rule.1);
        // degree 15 monomial: int_{-1}^{1} x^14 dx = 2/15
        let s: f64 = xs.iter().zip(ws).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        let s_odd: f64 = xs.iter().zip(ws).map(|(x, w)| w * x.powi(13)).sum();
        assert!(s_odd.abs() < 1e-15);
    }

    #[test]
    fn smoothstep_clamps_and_is_monotone() {
        assert_eq!(smoothstep(-1.0), 0.0);
        assert_eq!(smoothstep(2.0), 1.0);
        let mut prev = 0.0;
        for i in 0..=50 {
            let v = smoothstep(i as f64 / 50.0);
            assert!(v >= prev);
            prev = v;
        }
        assert_eq!(plateau_bump(0.25), 1.0);
        assert_eq!(plateau_bump(1.1), 0.0);
    }

    #[test]
    fn factorial_and_binomial() {
        assert_eq!(factorial(0), 1.0);
        assert_eq!(factorial(5), 120.0);
        assert_eq!(binomial(6, 2), 15.0);
        assert_eq!(binomial(3, 5), 0.0);
    }
}
