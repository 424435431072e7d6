//! Euclidean position-space kernels (-Delta + m^2)^{-j} in d = 2, 3, the
//! convolution-type truncated correlation functions built from them, and
//! assembly of full moments from truncated ones over set partitions.
//!
//! Fourier conventions are symmetric, (2pi)^{-d/2} per transform, so the
//! j = 1 kernel is (2pi)^{-d/2} (m/|x|)^{d/2-1} K_{d/2-1}(m|x|).

use crate::error::GreenError;
use crate::quad::{adaptive_box, polar_ball, QuadBudget, QuadResult};
use crate::special::{bessel_k, factorial, smoothstep};
use crate::spectrum::MassSpectrum;
use serde::Serialize;

/// Point coincidence / singularity threshold.
pub const SINGULAR_TOL: f64 = 1e-8;

/// Kernel value of (-Delta + m^2)^{-j} at radius r > 0:
///
///   2^{1-j} / ((2pi)^{d/2} (j-1)!) * (r/m)^{j - d/2} * K_{d/2 - j}(m r).
///
/// The closed form is what the dm^2 recursion
/// (-Delta+m^2)^{-j} = -1/(j-1) d/dm^2 (-Delta+m^2)^{-(j-1)} produces
/// analytically from the j = 1 Bessel kernel.
pub fn green_radial(m: f64, j: u32, r: f64, d: usize) -> Result<f64, GreenError> {
    if d != 2 && d != 3 {
        return Err(GreenError::Unsupported(d));
    }
    if !(r > SINGULAR_TOL) {
        return Err(GreenError::SingularPoint);
    }
    assert!(m > 0.0 && j >= 1);
    let dh = d as f64 / 2.0;
    let jf = j as f64;
    let pref = 2.0_f64.powf(1.0 - jf)
        / ((std::f64::consts::TAU).powf(dh) * factorial(j - 1));
    Ok(pref * (r / m).powf(jf - dh) * bessel_k(dh - jf, m * r))
}

/// Kernel value at a Euclidean point; `d` must match `x.len()`.
pub fn green_function(m: f64, j: u32, x: &[f64], d: usize) -> Result<f64, GreenError> {
    if x.len() != d {
        return Err(GreenError::Unsupported(d));
    }
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    green_radial(m, j, r, d)
}

/// One (mass index, power) pair per argument slot of the convolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchwingerAssignment {
    pub slots: Vec<(usize, u32)>,
}

impl SchwingerAssignment {
    pub fn new(slots: Vec<(usize, u32)>) -> Self {
        SchwingerAssignment { slots }
    }

    pub fn uniform(mass_index: usize, power: u32, n: usize) -> Self {
        SchwingerAssignment {
            slots: vec![(mass_index, power); n],
        }
    }

    fn validate(&self, spec: &MassSpectrum) -> Result<(), GreenError> {
        if self.slots.len() < 2 {
            return Err(GreenError::InvalidAssignment(
                "need at least two argument slots".into(),
            ));
        }
        for &(l, j) in &self.slots {
            if l >= spec.len() {
                return Err(GreenError::InvalidAssignment(format!(
                    "mass index {l} out of range"
                )));
            }
            if j < 1 || j > spec.multiplicity(l) {
                return Err(GreenError::InvalidAssignment(format!(
                    "power {j} outside 1..=nu_l for mass index {l}"
                )));
            }
        }
        Ok(())
    }
}

/// The scalar convolution integral
///
///   S(x_1..x_n) = int_{R^d} prod_r (-Delta + m_{l_r}^2)^{-j_r}(x_r - x) dx,
///
/// evaluated by splitting off smooth-bump neighbourhoods of each source
/// point (integrated in polar coordinates, which absorbs the kernel
/// singularities) and handling the remaining globally smooth integrand with
/// adaptive box quadrature. Returns the value and an absolute error estimate.
pub fn schwinger_truncated(
    spec: &MassSpectrum,
    assign: &SchwingerAssignment,
    points: &[Vec<f64>],
    d: usize,
    budget: QuadBudget,
) -> Result<QuadResult, GreenError> {
    if d != 2 && d != 3 {
        return Err(GreenError::Unsupported(d));
    }
    assign.validate(spec)?;
    let n = assign.slots.len();
    if points.len() != n {
        return Err(GreenError::InvalidAssignment(format!(
            "{} points for {} slots",
            points.len(),
            n
        )));
    }
    if points.iter().any(|p| p.len() != d) {
        return Err(GreenError::Unsupported(d));
    }
    let mut min_dist = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            let dist = dist(&points[i], &points[j]);
            min_dist = min_dist.min(dist);
        }
    }
    if min_dist < SINGULAR_TOL {
        return Err(GreenError::SingularConfiguration);
    }

    let masses: Vec<f64> = assign.slots.iter().map(|&(l, _)| spec.mass(l)).collect();
    let powers: Vec<u32> = assign.slots.iter().map(|&(_, j)| j).collect();
    let rate: f64 = masses.iter().sum();

    // Ball radius around each source: stay away from the other sources and
    // from the kernel decay scale.
    let delta = (0.35 * min_dist).min(0.75 / masses.iter().cloned().fold(f64::MAX, f64::min));

    let kernel = |slot: usize, rho: f64| -> f64 {
        green_radial(masses[slot], powers[slot], rho.max(1e-13), d).unwrap_or(0.0)
    };

    // bump = 1 on rho <= delta/2, 0 on rho >= delta
    let bump = |rho: f64| smoothstep(2.0 * (1.0 - rho / delta));

    // 1) polar parts around each source point
    let mut total = 0.0;
    let mut err = 0.0;
    for r in 0..n {
        let center = &points[r];
        let radial = |rho: f64| kernel(r, rho) * bump(rho);
        let rest = |x: &[f64]| -> f64 {
            let mut acc = 1.0;
            for (s, p) in points.iter().enumerate() {
                if s == r {
                    continue;
                }
                acc *= kernel(s, dist(p, x));
            }
            acc
        };
        let coarse = polar_ball(center, delta, &radial, &rest, 24, 32);
        let fine = polar_ball(center, delta, &radial, &rest, 36, 48);
        total += fine;
        err += (fine - coarse).abs();
    }

    // 2) smooth remainder over a box padded so the discarded tail is
    // negligible relative to the kernel scale (combined decay rate = sum m).
    let margin = 26.0 / rate;
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points {
        for a in 0..d {
            lo[a] = lo[a].min(p[a] - margin);
            hi[a] = hi[a].max(p[a] + margin);
        }
    }
    let mut f = |x: &[f64]| -> f64 {
        let mut w = 1.0;
        for p in points {
            let rho = dist(p, x);
            if rho < delta {
                w -= bump(rho);
            }
        }
        if w <= 0.0 {
            return 0.0;
        }
        let mut acc = w;
        for (s, p) in points.iter().enumerate() {
            let rho = dist(p, x);
            if rho < 1e-10 {
                return 0.0; // inside a dead zone; bump already removed it
            }
            acc *= kernel(s, rho);
        }
        acc
    };
    let smooth = adaptive_box(&mut f, &lo, &hi, budget);
    total += smooth.value;
    err += smooth.abs_err_est;

    let rel = err / total.abs().max(1e-300);
    if rel > budget.rel_tol * 20.0 {
        return Err(GreenError::QuadratureFailure { estimate: rel });
    }
    Ok(QuadResult {
        value: total,
        abs_err_est: err,
        evals: smooth.evals,
        converged: rel <= budget.rel_tol,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Sums products of truncated values over all partitions of {0..n-1}.
/// The callback receives each block as a sorted index slice.
pub fn assemble_full_moment(n: usize, truncated: &mut dyn FnMut(&[usize]) -> f64) -> f64 {
    let mut total = 0.0;
    for partition in set_partitions(n) {
        let mut prod = 1.0;
        for block in &partition {
            prod *= truncated(block);
        }
        total += prod;
    }
    total
}

/// All partitions of {0..n-1} into disjoint nonempty blocks, each block
/// sorted, in a deterministic enumeration order.
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut current: Vec<Vec<usize>> = Vec::new();
    fn recurse(element: usize, n: usize, current: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if element == n {
            out.push(current.clone());
            return;
        }
        for b in 0..current.len() {
            current[b].push(element);
            recurse(element + 1, n, current, out);
            current[b].pop();
        }
        current.push(vec![element]);
        recurse(element + 1, n, current, out);
        current.pop();
    }
    recurse(0, n, &mut current, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_match_elementary_kernels() {
        // d=3, j=1: Yukawa e^{-mr}/(4 pi r)
        let g = green_radial(1.0, 1, 1.0, 3).unwrap();
        let yukawa = (-1.0_f64).exp() / (4.0 * std::f64::consts::PI);
        assert!((g - yukawa).abs() < 1e-13);
        // d=2, j=1: K_0(mr)/(2 pi)
        let g2 = green_radial(1.0, 1, 1.0, 2).unwrap();
        let exact = bessel_k(0.0, 1.0) / std::f64::consts::TAU;
        assert!((g2 - exact).abs() < 1e-14);
        // d=3, j=2: e^{-mr}/(8 pi m)
        let g3 = green_radial(1.0, 2, 1.0, 3).unwrap();
        assert!((g3 - (-1.0_f64).exp() / (8.0 * std::f64::consts::PI)).abs() < 1e-14);
        // d=2, j=2: (r/m) K_1(mr) / (4 pi)
        let g4 = green_radial(1.0, 2, 1.0, 2).unwrap();
        assert!((g4 - bessel_k(1.0, 1.0) / (4.0 * std::f64::consts::PI)).abs() < 1e-14);
    }

    #[test]
    fn error_paths() {
        assert_eq!(green_radial(1.0, 1, 1e-9, 3), Err(GreenError::SingularPoint));
        assert_eq!(green_radial(1.0, 1, 1.0, 4), Err(GreenError::Unsupported(4)));
        assert_eq!(
            green_function(1.0, 1, &[1.0, 0.0], 3),
            Err(GreenError::Unsupported(3))
        );
    }

    #[test]
    fn j2_matches_mass_squared_difference_quotient() {
        // central difference of the j=1 kernel in m^2, step 1e-4
        for d in [2usize, 3] {
            let r: f64 = 1.0;
            let h: f64 = 1e-4;
            let gp = green_radial((1.0 + h).sqrt(), 1, r, d).unwrap();
            let gm = green_radial((1.0 - h).sqrt(), 1, r, d).unwrap();
            let fd = -(gp - gm) / (2.0 * h);
            let g2 = green_radial(1.0, 2, r, d).unwrap();
            assert!(
                (fd - g2).abs() < 1e-5 * g2.abs(),
                "d={d}: fd {fd} vs closed {g2}"
            );
        }
    }

    #[test]
    fn radial_and_mass_monotonicity() {
        for d in [2usize, 3] {
            let mut prev = f64::INFINITY;
            for i in 1..=20 {
                let r = 0.2 * i as f64;
                let g = green_radial(1.0, 1, r, d).unwrap();
                assert!(g < prev, "radial monotonicity failed at r={r}, d={d}");
                prev = g;
            }
            let small_m = green_radial(0.6, 1, 1.3, d).unwrap();
            let large_m = green_radial(2.4, 1, 1.3, d).unwrap();
            assert!(large_m < small_m);
        }
    }

    fn spec1() -> MassSpectrum {
        MassSpectrum::new(vec![(1.0, 3)]).unwrap()
    }

    #[test]
    fn semigroup_identity_d2() {
        // conv of two j=1 kernels at separation is the j=2 kernel
        let spec = spec1();
        let assign = SchwingerAssignment::new(vec![(0, 1), (0, 1)]);
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let budget = QuadBudget {
            max_evals: 600_000,
            rel_tol: 1e-5,
        };
        let s = schwinger_truncated(&spec, &assign, &pts, 2, budget).unwrap();
        let exact = green_radial(1.0, 2, 1.0, 2).unwrap();
        assert!(
            (s.value - exact).abs() < 1e-3 * exact,
            "conv {} vs exact {exact}",
            s.value
        );
    }

    #[test]
    fn coincident_points_rejected() {
        let spec = spec1();
        let assign = SchwingerAssignment::new(vec![(0, 1), (0, 1)]);
        let pts = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        assert_eq!(
            schwinger_truncated(&spec, &assign, &pts, 2, QuadBudget::default()),
            Err(GreenError::SingularConfiguration)
        );
    }

    #[test]
    fn bad_assignments_rejected() {
        let spec = spec1();
        let assign = SchwingerAssignment::new(vec![(0, 4), (0, 1)]);
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        assert!(matches!(
            schwinger_truncated(&spec, &assign, &pts, 2, QuadBudget::default()),
            Err(GreenError::InvalidAssignment(_))
        ));
    }

    #[test]
    fn partition_counts_are_bell_numbers() {
        assert_eq!(set_partitions(1).len(), 1);
        assert_eq!(set_partitions(2).len(), 2);
        assert_eq!(set_partitions(3).len(), 5);
        assert_eq!(set_partitions(4).len(), 15);
    }

    #[test]
    fn full_moment_assembly() {
        // n=2 with vanishing singletons: S_2 = S^T_2
        let mut cb = |block: &[usize]| -> f64 {
            match block.len() {
                1 => 0.0,
                2 => 7.5,
                _ => unreachable!(),
            }
        };
        assert_eq!(assemble_full_moment(2, &mut cb), 7.5);

        // n=3 with all truncated values 1: Bell(3) = 5
        let mut ones = |_: &[usize]| 1.0;
        assert_eq!(assemble_full_moment(3, &mut ones), 5.0);

        // n=4, odd truncated functions zero: S4 = S^T_4 + three pair products
        let mut cb4 = |block: &[usize]| -> f64 {
            match block.len() {
                1 | 3 => 0.0,
                2 => 2.0,
                4 => 11.0,
                _ => unreachable!(),
            }
        };
        assert_eq!(assemble_full_moment(4, &mut cb4), 11.0 + 3.0 * 4.0);
    }
}
