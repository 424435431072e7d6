//! Deterministic adaptive quadrature over axis-aligned boxes, plus polar
//! integration over balls around integrable kernel singularities.
//!
//! Cells carry an embedded error estimate (high- vs low-order tensor
//! Gauss rules); the worst cell splits along its longest axis. The final
//! value is accumulated in cell-creation order, so a fixed subdivision
//! schedule reproduces bit-identical results.

use crate::special::gauss_legendre;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy)]
pub struct QuadBudget {
    pub max_evals: usize,
    pub rel_tol: f64,
}

impl Default for QuadBudget {
    fn default() -> Self {
        QuadBudget {
            max_evals: 4_000_000,
            rel_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_err_est: f64,
    pub evals: usize,
    pub converged: bool,
}

const HI_ORDER: usize = 7;
const LO_ORDER: usize = 5;

struct Cell {
    lo: Vec<f64>,
    hi: Vec<f64>,
    value: f64,
    err: f64,
    id: u64,
}

struct HeapEntry {
    err: f64,
    id: u64,
    index: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err && self.id == other.id
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err
            .partial_cmp(&other.err)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.id.cmp(&self.id)) // older cell wins ties
    }
}

fn tensor_rule(f: &mut dyn FnMut(&[f64]) -> f64, lo: &[f64], hi: &[f64], order: usize) -> f64 {
    let dim = lo.len();
    let rule = gauss_legendre(order);
    let (xs, ws) = (&rule.0, &rule.1);
    let mut idx = vec![0usize; dim];
    let mut point = vec![0.0; dim];
    let mut acc = 0.0;
    let volume_jac: f64 = lo
        .iter()
        .zip(hi)
        .map(|(a, b)| 0.5 * (b - a))
        .product();
    loop {
        let mut w = 1.0;
        for (k, &i) in idx.iter().enumerate() {
            let mid = 0.5 * (lo[k] + hi[k]);
            let half = 0.5 * (hi[k] - lo[k]);
            point[k] = mid + half * xs[i];
            w *= ws[i];
        }
        acc += w * f(&point);
        // odometer
        let mut k = 0;
        loop {
            if k == dim {
                return acc * volume_jac;
            }
            idx[k] += 1;
            if idx[k] < order {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn evals_per_cell(dim: usize) -> usize {
    HI_ORDER.pow(dim as u32) + LO_ORDER.pow(dim as u32)
}

/// Adaptive integration of `f` over the box [lo, hi].
pub fn adaptive_box(
    f: &mut dyn FnMut(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    budget: QuadBudget,
) -> QuadResult {
    let dim = lo.len();
    assert_eq!(dim, hi.len());
    let mut cells: Vec<Cell> = Vec::new();
    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::new();
    let mut evals = 0usize;
    let mut next_id = 0u64;

    let make_cell = |f: &mut dyn FnMut(&[f64]) -> f64,
                         lo: Vec<f64>,
                         hi: Vec<f64>,
                         evals: &mut usize,
                         next_id: &mut u64| {
        let v_hi = tensor_rule(f, &lo, &hi, HI_ORDER);
        let v_lo = tensor_rule(f, &lo, &hi, LO_ORDER);
        *evals += evals_per_cell(lo.len());
        let id = *next_id;
        *next_id += 1;
        Cell {
            lo,
            hi,
            value: v_hi,
            err: (v_hi - v_lo).abs(),
            id,
        }
    };

    let root = make_cell(f, lo.to_vec(), hi.to_vec(), &mut evals, &mut next_id);
    heap.push(HeapEntry {
        err: root.err,
        id: root.id,
        index: 0,
    });
    cells.push(root);

    let mut total = cells[0].value;
    let mut total_err = cells[0].err;

    while total_err > budget.rel_tol * total.abs().max(1e-300) && evals < budget.max_evals {
        let Some(worst) = heap.pop() else { break };
        let cell_index = worst.index;
        if cells[cell_index].err == 0.0 {
            break;
        }
        // split along the longest axis
        let (clo, chi) = (cells[cell_index].lo.clone(), cells[cell_index].hi.clone());
        let axis = (0..dim)
            .max_by(|&a, &b| {
                (chi[a] - clo[a])
                    .partial_cmp(&(chi[b] - clo[b]))
                    .unwrap_or(Ordering::Equal)
            })
            .unwrap();
        let mid = 0.5 * (clo[axis] + chi[axis]);

        total -= cells[cell_index].value;
        total_err -= cells[cell_index].err;

        let lo1 = clo.clone();
        let mut hi1 = chi.clone();
        hi1[axis] = mid;
        let mut lo2 = clo;
        let hi2 = chi;
        lo2[axis] = mid;

        let child1 = make_cell(f, lo1, hi1, &mut evals, &mut next_id);
        let child2 = make_cell(f, lo2, hi2, &mut evals, &mut next_id);

        total += child1.value + child2.value;
        total_err += child1.err + child2.err;

        // first child replaces the parent slot, second appends
        heap.push(HeapEntry {
            err: child1.err,
            id: child1.id,
            index: cell_index,
        });
        cells[cell_index] = child1;
        heap.push(HeapEntry {
            err: child2.err,
            id: child2.id,
            index: cells.len(),
        });
        cells.push(child2);
    }

    // deterministic reduction: sum leaves ordered by creation id
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by_key(|&i| cells[i].id);
    let mut value = 0.0;
    let mut err = 0.0;
    for i in order {
        value += cells[i].value;
        err += cells[i].err;
    }
    QuadResult {
        value,
        abs_err_est: err,
        evals,
        converged: err <= budget.rel_tol * value.abs().max(1e-300),
    }
}

/// Integral over the ball B_delta(center) of w(|x - center|) g(x), in polar
/// coordinates with the substitution rho = delta u^2 that regularises the
/// integrable kernel singularities of this crate (1/rho in d=3, log rho in
/// d=2). `radial` receives rho, `rest` the full point.
pub fn polar_ball(
    center: &[f64],
    delta: f64,
    radial: &dyn Fn(f64) -> f64,
    rest: &dyn Fn(&[f64]) -> f64,
    n_rad: usize,
    n_ang: usize,
) -> f64 {
    let d = center.len();
    let rule = gauss_legendre(n_rad);
    let (us, uw) = (&rule.0, &rule.1);
    let mut acc = 0.0;
    match d {
        2 => {
            // trapezoid in the angle (periodic smooth integrand)
            let n_theta = n_ang;
            let dtheta = std::f64::consts::TAU / n_theta as f64;
            for it in 0..n_theta {
                let th = it as f64 * dtheta;
                let (s, c) = th.sin_cos();
                for (iu, &u0) in us.iter().enumerate() {
                    let u = 0.5 * (u0 + 1.0); // [0,1]
                    let rho = delta * u * u;
                    let jac = 2.0 * delta * delta * u * u * u; // rho drho = 2 delta^2 u^3 du
                    let x = [center[0] + rho * c, center[1] + rho * s];
                    acc += uw[iu] * 0.5 * jac * dtheta * radial(rho) * rest(&x);
                }
            }
        }
        3 => {
            // Gauss in cos(theta), trapezoid in phi
            let crule = gauss_legendre(n_ang);
            let (cts, ctw) = (&crule.0, &crule.1);
            let n_phi = n_ang;
            let dphi = std::f64::consts::TAU / n_phi as f64;
            for (ic, &ct) in cts.iter().enumerate() {
                let st = (1.0 - ct * ct).sqrt();
                for ip in 0..n_phi {
                    let phi = ip as f64 * dphi;
                    let (sp, cp) = phi.sin_cos();
                    for (iu, &u0) in us.iter().enumerate() {
                        let u = 0.5 * (u0 + 1.0);
                        let rho = delta * u * u;
                        // rho^2 drho = 2 delta^3 u^5 du
                        let jac = 2.0 * delta * delta * delta * u.powi(5);
                        let x = [
                            center[0] + rho * st * cp,
                            center[1] + rho * st * sp,
                            center[2] + rho * ct,
                        ];
                        acc += uw[iu] * 0.5 * ctw[ic] * jac * dphi * radial(rho) * rest(&x);
                    }
                }
            }
        }
        other => panic!("polar_ball supports d in {{2,3}}, got {other}"),
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_gaussian_2d() {
        let mut f = |x: &[f64]| (-(x[0] * x[0] + x[1] * x[1])).exp();
        let r = adaptive_box(
            &mut f,
            &[-8.0, -8.0],
            &[8.0, 8.0],
            QuadBudget {
                max_evals: 400_000,
                rel_tol: 1e-8,
            },
        );
        assert!(r.converged);
        assert!((r.value - std::f64::consts::PI).abs() < 1e-7);
    }

    #[test]
    fn integrates_peaked_3d() {
        let mut f = |x: &[f64]| (-(x[0].abs() + x[1].abs() + x[2].abs()) * 3.0).exp();
        let r = adaptive_box(
            &mut f,
            &[-6.0, -6.0, -6.0],
            &[6.0, 6.0, 6.0],
            QuadBudget {
                max_evals: 3_000_000,
                rel_tol: 1e-6,
            },
        );
        // (2/3)^3
        assert!(
            (r.value - (2.0_f64 / 3.0).powi(3)).abs() < 1e-4,
            "value {}",
            r.value
        );
    }

    #[test]
    fn budget_exhaustion_reports_nonconvergence() {
        let mut f = |x: &[f64]| 1.0 / (x[0].abs() + 1e-4);
        let r = adaptive_box(
            &mut f,
            &[-1.0, -1.0],
            &[1.0, 1.0],
            QuadBudget {
                max_evals: 2_000,
                rel_tol: 1e-12,
            },
        );
        assert!(!r.converged);
        assert!(r.abs_err_est > 0.0);
    }

    #[test]
    fn deterministic_repeat() {
        let mut f1 = |x: &[f64]| (x[0] * 3.1).sin().exp() * (x[1] * 0.7).cos();
        let mut f2 = |x: &[f64]| (x[0] * 3.1).sin().exp() * (x[1] * 0.7).cos();
        let budget = QuadBudget {
            max_evals: 100_000,
            rel_tol: 1e-9,
        };
        let a = adaptive_box(&mut f1, &[-2.0, -1.0], &[1.5, 2.0], budget);
        let b = adaptive_box(&mut f2, &[-2.0, -1.0], &[1.5, 2.0], budget);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn polar_ball_handles_log_singularity_2d() {
        // int_{B_1(0)} -ln(rho) dx = 2pi int_0^1 -ln(rho) rho drho = pi/2
        let v = polar_ball(&[0.0, 0.0], 1.0, &|rho| -rho.ln(), &|_x| 1.0, 32, 48);
        assert!(
            (v - 0.5 * std::f64::consts::PI).abs() < 1e-10,
            "v={v}"
        );
    }

    #[test]
    fn polar_ball_handles_inverse_rho_3d() {
        // int_{B_1(0)} 1/rho dx = 4pi int_0^1 rho drho = 2pi
        let v = polar_ball(
            &[0.0, 0.0, 0.0],
            1.0,
            &|rho| 1.0 / rho,
            &|_x| 1.0,
            32,
            24,
        );
        assert!((v - std::f64::consts::TAU).abs() < 1e-9, "v={v}");
    }
}
