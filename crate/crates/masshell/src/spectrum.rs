//! Mass spectra of the covariance operator and the partial-fraction
//! expansion of the inverse denominator
//!
//!   1 / prod_l (x + m_l^2)^{nu_l}  =  sum_l sum_{j=1..nu_l}  b_{lj} / (x + m_l^2)^j .
//!
//! Coefficients come from Taylor expansion of the deflated denominator at
//! each pole (the residue/derivative route), not from a dense linear solve:
//! coalescing masses make Vandermonde-style systems hopeless long before
//! the expansion itself becomes singular.

use crate::dd::Dd;
use crate::error::SpectrumError;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

/// Minimum separation below which two masses count as duplicates.
pub const MASS_SEPARATION_TOL: f64 = 1e-9;

/// One pole of the inverse covariance: mass and multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub mass: f64,
    pub multiplicity: u32,
}

/// Validated list of poles (m_l, nu_l), all masses positive and pairwise
/// distinct.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassSpectrum {
    entries: Vec<SpectrumEntry>,
}

impl MassSpectrum {
    pub fn new(entries: Vec<(f64, u32)>) -> Result<Self, SpectrumError> {
        if entries.is_empty() {
            return Err(SpectrumError::Empty);
        }
        for (i, &(m, nu)) in entries.iter().enumerate() {
            if !(m > 0.0) || !m.is_finite() {
                return Err(SpectrumError::NonPositiveMass { index: i, mass: m });
            }
            if nu == 0 {
                return Err(SpectrumError::ZeroMultiplicity { index: i });
            }
        }
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                if (entries[i].0 - entries[j].0).abs() < MASS_SEPARATION_TOL {
                    return Err(SpectrumError::DuplicateMasses {
                        first: i,
                        second: j,
                        a: entries[i].0,
                        b: entries[j].0,
                    });
                }
            }
        }
        Ok(MassSpectrum {
            entries: entries
                .into_iter()
                .map(|(mass, multiplicity)| SpectrumEntry { mass, multiplicity })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees N >= 1
    }

    pub fn entries(&self) -> &[SpectrumEntry] {
        &self.entries
    }

    pub fn mass(&self, l: usize) -> f64 {
        self.entries[l].mass
    }

    pub fn mass_sq(&self, l: usize) -> f64 {
        let m = self.entries[l].mass;
        m * m
    }

    pub fn multiplicity(&self, l: usize) -> u32 {
        self.entries[l].multiplicity
    }

    /// Maximal polynomial order of the numerator matrix: 2 (sum nu_l - 1).
    pub fn kappa(&self) -> u32 {
        2 * (self.entries.iter().map(|e| e.multiplicity).sum::<u32>() - 1)
    }

    /// True when every pole is simple.
    pub fn all_simple(&self) -> bool {
        self.entries.iter().all(|e| e.multiplicity == 1)
    }

    /// Smallest gap between distinct squared masses, or None for N = 1.
    pub fn min_mass_sq_gap(&self) -> Option<f64> {
        let n = self.entries.len();
        if n < 2 {
            return None;
        }
        let mut gap = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                gap = gap.min((self.mass_sq(i) - self.mass_sq(j)).abs());
            }
        }
        Some(gap)
    }
}

/// Coefficients b_{lj}, indexed [l][j-1] for j = 1..nu_l.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialFractionTable {
    pub coeffs: Vec<Vec<f64>>,
}

impl PartialFractionTable {
    /// b_{lj} with j in 1..=nu_l.
    pub fn b(&self, l: usize, j: u32) -> f64 {
        self.coeffs[l][(j - 1) as usize]
    }

    /// Evaluates the partial-fraction sum at x >= 0 in plain f64.
    pub fn reconstruct(&self, spec: &MassSpectrum, x: f64) -> f64 {
        let mut acc = 0.0;
        for (l, row) in self.coeffs.iter().enumerate() {
            let base = x + spec.mass_sq(l);
            let mut pw = base;
            for &b in row {
                acc += b / pw;
                pw *= base;
            }
        }
        acc
    }

    /// Evaluates the product form 1 / prod (x + m^2)^nu at x >= 0.
    pub fn product_form(spec: &MassSpectrum, x: f64) -> f64 {
        let mut acc = 1.0;
        for e in spec.entries() {
            acc *= (x + e.mass * e.mass).powi(e.multiplicity as i32);
        }
        1.0 / acc
    }

    /// Maximal relative error of the reconstruction identity over the given
    /// sample points, with both coefficient synthesis and evaluation carried
    /// out in double-double precision. This measures the identity itself,
    /// free of f64 cancellation in the check.
    pub fn reconstruction_max_rel_err(spec: &MassSpectrum, xs: &[f64]) -> f64 {
        let table = partial_fractions_dd(spec);
        let mut worst = 0.0_f64;
        for &x in xs {
            let xdd = Dd::from_f64(x);
            let mut sum = Dd::ZERO;
            for (l, row) in table.iter().enumerate() {
                let base = xdd.add(Dd::from_f64(spec.mass_sq(l)));
                for (jm1, &b) in row.iter().enumerate() {
                    sum = sum.add(b.div(base.powi(jm1 as i32 + 1)));
                }
            }
            let mut prod = Dd::ONE;
            for e in spec.entries() {
                prod = prod.mul(
                    xdd.add(Dd::from_f64(e.mass * e.mass))
                        .powi(e.multiplicity as i32),
                );
            }
            let rhs = prod.recip();
            let rel = sum.sub(rhs).abs().div(rhs.abs()).to_f64();
            worst = worst.max(rel);
        }
        worst
    }
}

/// Partial-fraction expansion of 1 / prod_l (x + m_l^2)^{nu_l}.
///
/// b_{lj} is the Taylor coefficient of order (nu_l - j) of the deflated
/// denominator prod_{i != l} (x + m_i^2)^{-nu_i} about x = -m_l^2.
pub fn partial_fractions(spec: &MassSpectrum) -> PartialFractionTable {
    let coeffs = partial_fractions_dd(spec)
        .into_iter()
        .map(|row| row.into_iter().map(Dd::to_f64).collect())
        .collect();
    PartialFractionTable { coeffs }
}

fn partial_fractions_dd(spec: &MassSpectrum) -> Vec<Vec<Dd>> {
    let n = spec.len();
    let mut out = Vec::with_capacity(n);
    for l in 0..n {
        let nu_l = spec.multiplicity(l) as usize;
        // Taylor series of prod_{i != l} (u + c_i)^{-nu_i} in u = x + m_l^2,
        // truncated at order nu_l - 1, with c_i = m_i^2 - m_l^2.
        let mut series = vec![Dd::ZERO; nu_l];
        series[0] = Dd::ONE;
        for i in 0..n {
            if i == l {
                continue;
            }
            let c = Dd::from_f64(spec.mass_sq(i)).sub(Dd::from_f64(spec.mass_sq(l)));
            let nu_i = spec.multiplicity(i);
            let factor = taylor_neg_power(c, nu_i, nu_l);
            series = series_mul(&series, &factor, nu_l);
        }
        // b_{lj} = series coefficient of u^{nu_l - j}
        let row = (1..=nu_l).map(|j| series[nu_l - j]).collect();
        out.push(row);
    }
    out
}

/// Taylor coefficients of (u + c)^{-nu} about u = 0, orders 0..len-1:
/// coefficient p is binom(-nu, p) c^{-nu-p} = (-1)^p binom(nu+p-1, p) c^{-nu-p}.
fn taylor_neg_power(c: Dd, nu: u32, len: usize) -> Vec<Dd> {
    let mut coeffs = Vec::with_capacity(len);
    let inv_c = c.recip();
    let mut cur = inv_c.powi(nu as i32);
    let mut binom = Dd::ONE;
    for p in 0..len {
        coeffs.push(binom.mul(cur));
        // next: binom *= -(nu+p)/(p+1), cur *= 1/c
        binom = binom
            .mul(Dd::from_f64(-((nu as f64) + p as f64)))
            .div(Dd::from_f64(p as f64 + 1.0));
        cur = cur.mul(inv_c);
    }
    coeffs
}

fn series_mul(a: &[Dd], b: &[Dd], len: usize) -> Vec<Dd> {
    let mut out = vec![Dd::ZERO; len];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            if i + j < len {
                out[i + j] = out[i + j].add(ai.mul(bj));
            }
        }
    }
    out
}

/// Exact partial fractions for rational squared masses; regression anchor for
/// the float path.
pub fn partial_fractions_exact(
    masses_sq: &[BigRational],
    multiplicities: &[u32],
) -> Result<Vec<Vec<BigRational>>, SpectrumError> {
    assert_eq!(masses_sq.len(), multiplicities.len());
    if masses_sq.is_empty() {
        return Err(SpectrumError::Empty);
    }
    for (i, m) in masses_sq.iter().enumerate() {
        if !m.is_positive() {
            return Err(SpectrumError::NonPositiveMass {
                index: i,
                mass: 0.0,
            });
        }
        for j in 0..i {
            if masses_sq[j] == *m {
                return Err(SpectrumError::DuplicateMasses {
                    first: j,
                    second: i,
                    a: 0.0,
                    b: 0.0,
                });
            }
        }
    }
    let n = masses_sq.len();
    let mut out = Vec::with_capacity(n);
    for l in 0..n {
        let nu_l = multiplicities[l] as usize;
        let mut series: Vec<BigRational> = vec![BigRational::zero(); nu_l];
        series[0] = BigRational::one();
        for i in 0..n {
            if i == l {
                continue;
            }
            let c = &masses_sq[i] - &masses_sq[l];
            let inv_c = c.recip();
            let mut cur = pow_rat(&inv_c, multiplicities[i]);
            let mut binom = BigRational::one();
            let mut factor = Vec::with_capacity(nu_l);
            for p in 0..nu_l {
                factor.push(&binom * &cur);
                let num = BigRational::from(BigInt::from(multiplicities[i] as i64 + p as i64));
                let den = BigRational::from(BigInt::from(p as i64 + 1));
                binom = -(&binom * num / den);
                cur = &cur * &inv_c;
            }
            let mut next = vec![BigRational::zero(); nu_l];
            for (a, sa) in series.iter().enumerate() {
                for (b, fb) in factor.iter().enumerate() {
                    if a + b < nu_l {
                        next[a + b] = &next[a + b] + sa * fb;
                    }
                }
            }
            series = next;
        }
        let row = (1..=nu_l).map(|j| series[nu_l - j].clone()).collect();
        out.push(row);
    }
    Ok(out)
}

fn pow_rat(x: &BigRational, n: u32) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..n {
        acc = &acc * x;
    }
    acc
}

/// kappa = 2 (sum_l nu_l - 1), the numerator degree bound.
pub fn kappa(spec: &MassSpectrum) -> u32 {
    spec.kappa()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(entries: &[(f64, u32)]) -> MassSpectrum {
        MassSpectrum::new(entries.to_vec()).unwrap()
    }

    #[test]
    fn rejects_invalid_spectra() {
        assert_eq!(MassSpectrum::new(vec![]), Err(SpectrumError::Empty));
        assert!(matches!(
            MassSpectrum::new(vec![(0.0, 1)]),
            Err(SpectrumError::NonPositiveMass { .. })
        ));
        assert!(matches!(
            MassSpectrum::new(vec![(-1.0, 1)]),
            Err(SpectrumError::NonPositiveMass { .. })
        ));
        assert!(matches!(
            MassSpectrum::new(vec![(1.0, 1), (1.0 + 1e-12, 1)]),
            Err(SpectrumError::DuplicateMasses { .. })
        ));
        assert!(matches!(
            MassSpectrum::new(vec![(1.0, 0)]),
            Err(SpectrumError::ZeroMultiplicity { .. })
        ));
    }

    #[test]
    fn kappa_values() {
        assert_eq!(spec(&[(1.0, 1)]).kappa(), 0);
        assert_eq!(spec(&[(1.0, 1), (2.0, 1)]).kappa(), 2);
        assert_eq!(spec(&[(1.0, 2), (2.0, 1)]).kappa(), 4);
    }

    #[test]
    fn single_simple_pole() {
        let table = partial_fractions(&spec(&[(1.0, 1)]));
        assert_eq!(table.coeffs, vec![vec![1.0]]);
    }

    #[test]
    fn single_double_pole_is_identity_expansion() {
        let table = partial_fractions(&spec(&[(1.0, 2)]));
        assert!((table.b(0, 1) - 0.0).abs() < 1e-15);
        assert!((table.b(0, 2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_simple_poles() {
        // 1/((x+1)(x+4)) = (1/3)/(x+1) - (1/3)/(x+4)
        let s = spec(&[(1.0, 1), (2.0, 1)]);
        let table = partial_fractions(&s);
        assert!((table.b(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((table.b(1, 1) + 1.0 / 3.0).abs() < 1e-15);
        for &x in &[0.0, 1.0, 2.0, 5.0] {
            let lhs = table.reconstruct(&s, x);
            let rhs = PartialFractionTable::product_form(&s, x);
            assert!((lhs - rhs).abs() < 1e-14 * rhs.abs());
        }
    }

    #[test]
    fn double_plus_simple_pole() {
        // 1/((x+1)^2 (x+4)): b11 = -1/9, b12 = 1/3, b21 = 1/9
        let s = spec(&[(1.0, 2), (2.0, 1)]);
        let table = partial_fractions(&s);
        assert!((table.b(0, 1) + 1.0 / 9.0).abs() < 1e-15);
        assert!((table.b(0, 2) - 1.0 / 3.0).abs() < 1e-15);
        assert!((table.b(1, 1) - 1.0 / 9.0).abs() < 1e-15);
        for &x in &[0.0, 0.7, 3.0, 9.5] {
            let lhs = table.reconstruct(&s, x);
            let rhs = PartialFractionTable::product_form(&s, x);
            assert!((lhs - rhs).abs() < 1e-13 * rhs.abs());
        }
    }

    #[test]
    fn exact_mode_matches_float_mode() {
        let msq: Vec<BigRational> = [1, 4].iter().map(|&k| BigRational::from_integer(k.into())).collect();
        let exact = partial_fractions_exact(&msq, &[2, 1]).unwrap();
        // golden: [[-1/9, 1/3], [1/9]]
        assert_eq!(exact[0][0], BigRational::new((-1).into(), 9.into()));
        assert_eq!(exact[0][1], BigRational::new(1.into(), 3.into()));
        assert_eq!(exact[1][0], BigRational::new(1.into(), 9.into()));
    }

    #[test]
    fn leading_coefficients_do_not_vanish() {
        let s = spec(&[(0.9, 3), (1.1, 2), (2.5, 1)]);
        let table = partial_fractions(&s);
        let scale = table
            .coeffs
            .iter()
            .flatten()
            .fold(0.0_f64, |a, &b| a.max(b.abs()));
        for (l, row) in table.coeffs.iter().enumerate() {
            let lead = row.last().unwrap().abs();
            assert!(lead > 1e-12 * scale, "b_(l,nu_l) vanished at l={l}");
        }
    }

    #[test]
    fn deterministic_bitwise() {
        let s = spec(&[(0.77, 2), (1.31, 3), (4.9, 1)]);
        let a = partial_fractions(&s);
        let b = partial_fractions(&s);
        assert_eq!(a, b);
    }

    #[test]
    fn dd_reconstruction_is_tight_even_for_close_masses() {
        let s = spec(&[(0.5, 3), (0.6, 3), (4.8, 2)]);
        let xs: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let err = PartialFractionTable::reconstruction_max_rel_err(&s, &xs);
        assert!(err < 1e-12, "dd reconstruction err {err}");
    }
}
