//! Square matrices of momentum polynomials, rotation covariance checks and
//! primality of the numerator matrix with respect to the shell factors.

use super::poly::Polynomial;
use crate::error::PolyError;
use crate::spectrum::MassSpectrum;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// L x L matrix of polynomials over d momentum variables, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix {
    pub dim: usize,
    pub d: usize,
    entries: Vec<Polynomial>,
}

impl PolyMatrix {
    pub fn new(dim: usize, d: usize, entries: Vec<Polynomial>) -> Result<Self, PolyError> {
        if entries.len() != dim * dim {
            return Err(PolyError::DimensionMismatch(format!(
                "expected {dim}x{dim} = {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        if let Some(p) = entries.iter().find(|p| p.nvars() != d) {
            return Err(PolyError::DimensionMismatch(format!(
                "entry over {} variables in a d={d} matrix",
                p.nvars()
            )));
        }
        Ok(PolyMatrix { dim, d, entries })
    }

    pub fn from_strings(dim: usize, d: usize, texts: &[String]) -> Result<Self, PolyError> {
        let entries = texts
            .iter()
            .map(|t| super::parser::parse_poly(t, d))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(dim, d, entries)
    }

    pub fn identity(dim: usize, d: usize) -> Self {
        let mut entries = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                entries.push(if r == c {
                    Polynomial::one(d)
                } else {
                    Polynomial::zero(d)
                });
            }
        }
        PolyMatrix { dim, d, entries }
    }

    pub fn entry(&self, row: usize, col: usize) -> &Polynomial {
        &self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[Polynomial] {
        &self.entries
    }

    pub fn max_degree(&self) -> u32 {
        self.entries.iter().map(|p| p.degree()).max().unwrap_or(0)
    }

    /// Entrywise substitution k0 -> i k0.
    pub fn wick_rotate(&self) -> PolyMatrix {
        PolyMatrix {
            dim: self.dim,
            d: self.d,
            entries: self.entries.iter().map(|p| p.wick_rotate()).collect(),
        }
    }

    /// Evaluates all entries at a momentum, row-major.
    pub fn eval(&self, point: &[Complex64]) -> Vec<Complex64> {
        self.entries.iter().map(|p| p.eval(point)).collect()
    }

    pub fn eval_real(&self, point: &[f64]) -> Vec<Complex64> {
        let cpt: Vec<Complex64> = point.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.eval(&cpt)
    }
}

/// The two supported spin representations of the rotation group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// L = 1, tau(R) = 1.
    Trivial,
    /// L = d, tau(R) = R.
    Vector,
}

impl Representation {
    pub fn dim(&self, d: usize) -> usize {
        match self {
            Representation::Trivial => 1,
            Representation::Vector => d,
        }
    }

    /// tau(R) as a dense L x L matrix for a d x d rotation R.
    pub fn tau(&self, rot: &[f64], d: usize) -> Vec<f64> {
        match self {
            Representation::Trivial => vec![1.0],
            Representation::Vector => {
                assert_eq!(rot.len(), d * d);
                rot.to_vec()
            }
        }
    }
}

/// Uniformly sampled rotation matrix, d x d row-major. d=2 draws an angle,
/// d=3 an axis and an angle (Rodrigues form).
pub fn sample_rotation<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    match d {
        2 => {
            let th = rng.gen::<f64>() * std::f64::consts::TAU;
            let (s, c) = th.sin_cos();
            vec![c, -s, s, c]
        }
        3 => {
            // uniform axis via normalised Gaussians (Box-Muller), uniform angle
            let mut gauss = || {
                let u1: f64 = rng.gen::<f64>().max(1e-12);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            };
            let mut axis = [gauss(), gauss(), gauss()];
            let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2])
                .sqrt()
                .max(1e-12);
            axis.iter_mut().for_each(|x| *x /= n);
            let th = rng.gen::<f64>() * std::f64::consts::TAU;
            rodrigues(&axis, th)
        }
        other => panic!("rotation sampling supports d in {{2,3}}, got {other}"),
    }
}

fn rodrigues(axis: &[f64; 3], th: f64) -> Vec<f64> {
    let (s, c) = th.sin_cos();
    let (x, y, z) = (axis[0], axis[1], axis[2]);
    let one_c = 1.0 - c;
    vec![
        c + x * x * one_c,
        x * y * one_c - z * s,
        x * z * one_c + y * s,
        y * x * one_c + z * s,
        c + y * y * one_c,
        y * z * one_c - x * s,
        z * x * one_c - y * s,
        z * y * one_c + x * s,
        c + z * z * one_c,
    ]
}

fn apply_rot(rot: &[f64], k: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for r in 0..d {
        for c in 0..d {
            out[r] += rot[r * d + c] * k[c];
        }
    }
    out
}

fn transpose(m: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            out[c * n + r] = m[r * n + c];
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceReport {
    pub pass: bool,
    pub max_residual: f64,
    pub samples: usize,
}

/// Checks tau(R) Q(k) tau(R^{-1}) = Q(R k) at sampled rotations and momenta.
/// Residuals are compared against 1e-9 times the sampled entry scale.
pub fn check_covariance(
    qe: &PolyMatrix,
    rep: Representation,
    samples: usize,
    seed: u64,
) -> Result<CovarianceReport, PolyError> {
    let d = qe.d;
    let l = rep.dim(d);
    if l != qe.dim {
        return Err(PolyError::DimensionMismatch(format!(
            "representation dimension {l} != matrix dimension {}",
            qe.dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_res = 0.0_f64;
    let mut scale = 1.0_f64;
    for _ in 0..samples {
        let rot = sample_rotation(d, &mut rng);
        let k: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let rk = apply_rot(&rot, &k, d);
        let q_k = qe.eval_real(&k);
        let q_rk = qe.eval_real(&rk);
        for v in &q_rk {
            scale = scale.max(v.norm());
        }
        // tau(R) is orthogonal for both supported representations, so
        // tau(R^{-1}) = tau(R)^T.
        let tau = rep.tau(&rot, d);
        let tau_inv = transpose(&tau, l);
        // residual = tau Q(k) tau^{-1} - Q(Rk)
        for r in 0..l {
            for c in 0..l {
                let mut lhs = Complex64::new(0.0, 0.0);
                for a in 0..l {
                    for b in 0..l {
                        lhs += Complex64::new(tau[r * l + a], 0.0)
                            * q_k[a * l + b]
                            * Complex64::new(tau_inv[b * l + c], 0.0);
                    }
                }
                let res = (lhs - q_rk[r * l + c]).norm();
                max_res = max_res.max(res);
            }
        }
    }
    Ok(CovarianceReport {
        pass: max_res < 1e-9 * scale,
        max_residual: max_res,
        samples,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PrimalityReport {
    /// Per mass index: true when (|k|^2 + m_l^2) does NOT divide every entry.
    pub prime: Vec<bool>,
}

/// Exact divisibility test of every matrix entry by (|k|^2 + m_l^2), via
/// polynomial remainder under the reduction k0^2 -> -(m^2 + |kvec|^2).
pub fn is_prime_wrt_factors(qe: &PolyMatrix, spec: &MassSpectrum) -> PrimalityReport {
    let mut prime = Vec::with_capacity(spec.len());
    for l in 0..spec.len() {
        let msq = spec.mass_sq(l);
        let divides_all = qe.entries().iter().all(|p| {
            let scale = p.coeff_scale().max(1.0);
            let rem = p.reduce_mod_shell(msq);
            rem.coeff_scale() < 1e-12 * scale
        });
        prime.push(!divides_all);
    }
    PrimalityReport { prime }
}

/// Sampling oracle on the complex variety |k|^2 = -m^2: draws real spatial
/// momenta, sets k0 = i sqrt(m^2 + |kvec|^2) and returns the largest entry
/// magnitude (normalised by the entry coefficient scale). Divisibility by
/// the shell factor forces this residual to vanish.
pub fn variety_residual(qe: &PolyMatrix, msq: f64, samples: usize, seed: u64) -> f64 {
    let d = qe.d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let kvec: Vec<f64> = (0..d - 1).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let ksp: f64 = kvec.iter().map(|x| x * x).sum();
        let k0 = Complex64::new(0.0, (msq + ksp).sqrt());
        let mut point = vec![k0];
        point.extend(kvec.iter().map(|&x| Complex64::new(x, 0.0)));
        for p in qe.entries() {
            let scale = p.coeff_scale().max(1e-30);
            let v = p.eval(&point).norm() / (scale * (1.0 + ksp).powi((p.degree() / 2) as i32 + 1));
            worst = worst.max(v);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::parser::parse_poly;

    fn matrix1(text: &str, d: usize) -> PolyMatrix {
        PolyMatrix::new(1, d, vec![parse_poly(text, d).unwrap()]).unwrap()
    }

    #[test]
    fn rotation_matrices_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [2usize, 3] {
            for _ in 0..50 {
                let r = sample_rotation(d, &mut rng);
                let rt = transpose(&r, d);
                for i in 0..d {
                    for j in 0..d {
                        let mut s = 0.0;
                        for k in 0..d {
                            s += r[i * d + k] * rt[k * d + j];
                        }
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!((s - expect).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn covariance_scalar_invariant_passes() {
        let qe = matrix1("k0^2 + k1^2", 2);
        let rep = check_covariance(&qe, Representation::Trivial, 100, 3).unwrap();
        assert!(rep.pass, "residual {}", rep.max_residual);
    }

    #[test]
    fn covariance_scalar_noninvariant_fails() {
        let qe = matrix1("k0", 2);
        let rep = check_covariance(&qe, Representation::Trivial, 100, 3).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn covariance_vector_isotropic_passes() {
        let p = parse_poly("k0^2 + k1^2", 2).unwrap();
        let zero = Polynomial::zero(2);
        let qe = PolyMatrix::new(2, 2, vec![p.clone(), zero.clone(), zero, p]).unwrap();
        let rep = check_covariance(&qe, Representation::Vector, 100, 11).unwrap();
        assert!(rep.pass, "residual {}", rep.max_residual);
    }

    #[test]
    fn covariance_vector_identity_kk_form_passes_d3() {
        // Q(k)_{ab} = k_a k_b is covariant for the vector representation.
        let d = 3;
        let mut entries = Vec::new();
        for a in 0..d {
            for b in 0..d {
                let p = Polynomial::var(d, a).mul(&Polynomial::var(d, b));
                entries.push(p);
            }
        }
        let qe = PolyMatrix::new(d, d, entries).unwrap();
        let rep = check_covariance(&qe, Representation::Vector, 60, 5).unwrap();
        assert!(rep.pass, "residual {}", rep.max_residual);
    }

    #[test]
    fn primality_spec_examples() {
        let spec1 = MassSpectrum::new(vec![(1.0, 1)]).unwrap();
        // entry equals the factor itself: not prime
        let qe = matrix1("k0^2 + k1^2 + 1", 2);
        assert_eq!(is_prime_wrt_factors(&qe, &spec1).prime, vec![false]);
        // constants are never divisible
        let qe1 = matrix1("1", 2);
        assert_eq!(is_prime_wrt_factors(&qe1, &spec1).prime, vec![true]);
        // (|k|^2+1) * k0 w.r.t. {(1,1),(2,1)}
        let spec2 = MassSpectrum::new(vec![(1.0, 1), (2.0, 1)]).unwrap();
        let qe2 = matrix1("(k0^2 + k1^2 + 1)*k0", 2);
        assert_eq!(is_prime_wrt_factors(&qe2, &spec2).prime, vec![false, true]);
    }

    #[test]
    fn variety_oracle_agrees_with_remainder() {
        let spec = MassSpectrum::new(vec![(1.0, 1), (2.0, 1)]).unwrap();
        let qe = matrix1("(k0^2 + k1^2 + 1)*(k0 + 2)", 2);
        let report = is_prime_wrt_factors(&qe, &spec);
        assert_eq!(report.prime, vec![false, true]);
        let r1 = variety_residual(&qe, spec.mass_sq(0), 50, 9);
        let r2 = variety_residual(&qe, spec.mass_sq(1), 50, 9);
        assert!(r1 < 1e-8, "divisible factor should vanish on variety, got {r1}");
        assert!(r2 > 1e-4, "non-divisible factor should not vanish, got {r2}");
    }
}
