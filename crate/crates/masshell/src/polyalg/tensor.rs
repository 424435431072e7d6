//! Rank-n tensor polynomials: the noise cumulant contracted with n copies
//! of the covariance numerator matrix, one per momentum slot. Index
//! contraction uses the Euclidean identity metric on spin space.

use super::matrix::PolyMatrix;
use crate::error::PolyError;
use num_complex::Complex64;

/// Dense symmetric rank-n tensor of cumulant constants, L^n entries.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCumulantTensor {
    pub order: usize,
    pub dim: usize,
    data: Vec<Complex64>,
}

impl NoiseCumulantTensor {
    /// Scalar cumulant of any order (L = 1).
    pub fn scalar(order: usize, value: f64) -> Self {
        NoiseCumulantTensor {
            order,
            dim: 1,
            data: vec![Complex64::new(value, 0.0)],
        }
    }

    /// Builds from sparse entries and symmetrises over simultaneous index
    /// permutations (cumulants of a single field carry that symmetry).
    pub fn from_sparse(
        order: usize,
        dim: usize,
        entries: &[(Vec<usize>, f64)],
    ) -> Result<Self, PolyError> {
        let size = dim.pow(order as u32);
        let mut data = vec![Complex64::new(0.0, 0.0); size];
        for (idx, value) in entries {
            if idx.len() != order {
                return Err(PolyError::DimensionMismatch(format!(
                    "cumulant index of length {} in an order-{order} tensor",
                    idx.len()
                )));
            }
            if idx.iter().any(|&i| i >= dim) {
                return Err(PolyError::DimensionMismatch(format!(
                    "cumulant index {idx:?} out of range for spin dimension {dim}"
                )));
            }
            data[flat_index(idx, dim)] = Complex64::new(*value, 0.0);
        }
        Ok(NoiseCumulantTensor {
            order,
            dim,
            data: symmetrize(&data, order, dim),
        })
    }

    /// Kronecker-delta pair cumulant, order 2.
    pub fn delta_pair(dim: usize) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        NoiseCumulantTensor {
            order: 2,
            dim,
            data,
        }
    }

    pub fn component(&self, idx: &[usize]) -> Complex64 {
        self.data[flat_index(idx, self.dim)]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
}

fn flat_index(idx: &[usize], dim: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

fn symmetrize(data: &[Complex64], order: usize, dim: usize) -> Vec<Complex64> {
    let size = data.len();
    let mut out = vec![Complex64::new(0.0, 0.0); size];
    let mut idx = vec![0usize; order];
    let perms = permutations(order);
    let weight = 1.0 / perms.len() as f64;
    for flat in 0..size {
        let mut rem = flat;
        for slot in (0..order).rev() {
            idx[slot] = rem % dim;
            rem /= dim;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for perm in &perms {
            let permuted: Vec<usize> = perm.iter().map(|&p| idx[p]).collect();
            acc += data[flat_index(&permuted, dim)];
        }
        out[flat] = acc * weight;
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    heap_permute(&mut cur, n, &mut out);
    out
}

fn heap_permute(arr: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(arr.clone());
        return;
    }
    for i in 0..k {
        heap_permute(arr, k - 1, out);
        if k % 2 == 0 {
            arr.swap(i, k - 1);
        } else {
            arr.swap(0, k - 1);
        }
    }
}

/// The evaluable tensor-valued polynomial
/// T_{a1..an}(k_1..k_n) = C^{b1..bn} prod_r Q(k_r)_{(b_r, a_r)}.
///
/// Built over either the Euclidean or the Wick-rotated matrix; evaluation is
/// oblivious to which.
#[derive(Debug, Clone)]
pub struct TensorPoly {
    pub q: PolyMatrix,
    pub cumulant: NoiseCumulantTensor,
}

impl TensorPoly {
    pub fn new(q: PolyMatrix, cumulant: NoiseCumulantTensor) -> Result<Self, PolyError> {
        if q.dim != cumulant.dim {
            return Err(PolyError::DimensionMismatch(format!(
                "matrix dimension {} != cumulant spin dimension {}",
                q.dim, cumulant.dim
            )));
        }
        Ok(TensorPoly { q, cumulant })
    }

    pub fn order(&self) -> usize {
        self.cumulant.order
    }

    pub fn dim(&self) -> usize {
        self.q.dim
    }

    /// All L^n components at the given momenta (one d-vector per slot).
    pub fn eval_components(&self, momenta: &[Vec<Complex64>]) -> Vec<Complex64> {
        let n = self.order();
        let l = self.dim();
        assert_eq!(momenta.len(), n);
        // start from C and contract slot by slot: T <- sum_b T[.., b, ..] Q(k_r)[b, a]
        let mut cur = self.cumulant.data().to_vec();
        for k in momenta.iter() {
            let q = self.q.eval(k); // L x L row-major
            let size = cur.len();
            let stride = size / l; // leading index is the slot being contracted
            let mut next = vec![Complex64::new(0.0, 0.0); size];
            for rest in 0..stride {
                for a in 0..l {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for b in 0..l {
                        acc += cur[b * stride + rest] * q[b * l + a];
                    }
                    // move the contracted index to the trailing position
                    next[rest * l + a] = acc;
                }
            }
            cur = next;
        }
        cur
    }

    /// Single component.
    pub fn eval_component(&self, momenta: &[Vec<Complex64>], idx: &[usize]) -> Complex64 {
        let comps = self.eval_components(momenta);
        comps[flat_index(idx, self.dim())]
    }

    /// Contraction with one spin vector per slot: sum_a T_{a1..an} prod u_r^{a_r}.
    pub fn contract(&self, momenta: &[Vec<Complex64>], spins: &[&[Complex64]]) -> Complex64 {
        let comps = self.eval_components(momenta);
        let l = self.dim();
        let n = self.order();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut idx = vec![0usize; n];
        for (flat, v) in comps.iter().enumerate() {
            let mut rem = flat;
            for slot in (0..n).rev() {
                idx[slot] = rem % l;
                rem /= l;
            }
            let mut w = *v;
            for (slot, &a) in idx.iter().enumerate() {
                w *= spins[slot][a];
            }
            acc += w;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::parser::parse_poly;
    use crate::polyalg::poly::Polynomial;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_rep_constant_tensor() {
        let q = PolyMatrix::identity(1, 2);
        let c = NoiseCumulantTensor::scalar(3, 1.0);
        let t = TensorPoly::new(q, c).unwrap();
        let k = vec![Complex64::new(0.3, 0.0), Complex64::new(-1.0, 0.0)];
        let comps = t.eval_components(&[k.clone(), k.clone(), k]);
        assert_eq!(comps.len(), 1);
        assert!((comps[0].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_contraction_gives_delta() {
        let q = PolyMatrix::identity(2, 2);
        let c = NoiseCumulantTensor::delta_pair(2);
        let t = TensorPoly::new(q, c).unwrap();
        let k = vec![Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)];
        let comps = t.eval_components(&[k.clone(), k]);
        // delta_{ab}
        assert!((comps[0].re - 1.0).abs() < 1e-15);
        assert!(comps[1].norm() < 1e-15);
        assert!(comps[2].norm() < 1e-15);
        assert!((comps[3].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_brute_force_contraction() {
        // vector rep d = 2 with one nonconstant entry
        let d = 2;
        let p = parse_poly("k0 + 2*k1", d).unwrap();
        let one = Polynomial::one(d);
        let zero = Polynomial::zero(d);
        let q = PolyMatrix::new(2, d, vec![p, zero, Polynomial::var(d, 1), one]).unwrap();
        let c = NoiseCumulantTensor::from_sparse(
            2,
            2,
            &[(vec![0, 0], 1.0), (vec![0, 1], 0.5), (vec![1, 1], -2.0)],
        )
        .unwrap();
        let t = TensorPoly::new(q.clone(), c.clone()).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let ks: Vec<Vec<Complex64>> = (0..2)
                .map(|_| {
                    (0..d)
                        .map(|_| Complex64::new(rng.gen::<f64>() * 2.0 - 1.0, 0.0))
                        .collect()
                })
                .collect();
            let fast = t.eval_components(&ks);
            // triple-loop oracle
            let l = 2usize;
            let q1 = q.eval(&ks[0]);
            let q2 = q.eval(&ks[1]);
            for a1 in 0..l {
                for a2 in 0..l {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for b1 in 0..l {
                        for b2 in 0..l {
                            acc += c.component(&[b1, b2]) * q1[b1 * l + a1] * q2[b2 * l + a2];
                        }
                    }
                    let got = fast[a1 * l + a2];
                    assert!(
                        (acc - got).norm() < 1e-12,
                        "mismatch at ({a1},{a2}): {acc} vs {got}"
                    );
                }
            }
        }
    }

    #[test]
    fn symmetrisation_is_enforced() {
        let c =
            NoiseCumulantTensor::from_sparse(2, 2, &[(vec![0, 1], 1.0)]).unwrap();
        assert_eq!(c.component(&[0, 1]), c.component(&[1, 0]));
        assert!((c.component(&[0, 1]).re - 0.5).abs() < 1e-15);
    }
}
