//! Multivariate polynomials over the complex numbers in the momentum
//! variables k0..k{d-1}, stored as a canonical term map.

use num_complex::Complex64;
use std::collections::BTreeMap;
use std::fmt;

/// Coefficients smaller than this in absolute value are dropped after
/// arithmetic, keeping the canonical form stable.
pub const COEFF_PRUNE_TOL: f64 = 1e-14;

/// Exponent multi-index. Ordering is graded lexicographic: lower total
/// degree first, ties broken lexicographically; map iteration ascends, and
/// printing walks it in reverse so the highest-degree term leads.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mono(pub Vec<u16>);

impl Mono {
    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Mono {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

/// Polynomial in `nvars` variables with complex coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Mono, Complex64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: Complex64) -> Self {
        let mut p = Polynomial::zero(nvars);
        if c.norm() > 0.0 {
            p.terms.insert(Mono(vec![0; nvars]), c);
        }
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, Complex64::new(1.0, 0.0))
    }

    /// The variable k{index}.
    pub fn var(nvars: usize, index: usize) -> Self {
        assert!(index < nvars);
        let mut exps = vec![0u16; nvars];
        exps[index] = 1;
        let mut p = Polynomial::zero(nvars);
        p.terms.insert(Mono(exps), Complex64::new(1.0, 0.0));
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Mono::degree).max().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &Complex64)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, exps: &[u16]) -> Complex64 {
        self.terms
            .get(&Mono(exps.to_vec()))
            .copied()
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    pub fn add_term(&mut self, exps: Vec<u16>, c: Complex64) {
        assert_eq!(exps.len(), self.nvars);
        let key = Mono(exps);
        let entry = self
            .terms
            .entry(key.clone())
            .or_insert_with(|| Complex64::new(0.0, 0.0));
        *entry += c;
        if entry.norm() < COEFF_PRUNE_TOL {
            self.terms.remove(&key);
        }
    }

    fn prune(mut self) -> Self {
        self.terms.retain(|_, c| c.norm() >= COEFF_PRUNE_TOL);
        self
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (m, c) in &other.terms {
            *out.terms
                .entry(m.clone())
                .or_insert_with(|| Complex64::new(0.0, 0.0)) += c;
        }
        out.prune()
    }

    pub fn neg(&self) -> Polynomial {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -*c;
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: Complex64) -> Polynomial {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out.prune()
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Polynomial::zero(self.nvars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let exps: Vec<u16> = ma.0.iter().zip(&mb.0).map(|(a, b)| a + b).collect();
                *out.terms
                    .entry(Mono(exps))
                    .or_insert_with(|| Complex64::new(0.0, 0.0)) += ca * cb;
            }
        }
        out.prune()
    }

    pub fn pow(&self, n: u32) -> Polynomial {
        let mut acc = Polynomial::one(self.nvars);
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn eval(&self, point: &[Complex64]) -> Complex64 {
        assert_eq!(point.len(), self.nvars);
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, c) in &self.terms {
            let mut t = *c;
            for (v, &e) in point.iter().zip(&m.0) {
                for _ in 0..e {
                    t *= v;
                }
            }
            acc += t;
        }
        acc
    }

    pub fn eval_real(&self, point: &[f64]) -> Complex64 {
        let cpt: Vec<Complex64> = point.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.eval(&cpt)
    }

    /// Substitutes k0 -> i k0: the coefficient of (k0)^a picks up i^a.
    pub fn wick_rotate(&self) -> Polynomial {
        let i_pow = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ];
        let mut out = Polynomial::zero(self.nvars);
        for (m, c) in &self.terms {
            let a = m.0[0] as usize % 4;
            out.terms.insert(m.clone(), c * i_pow[a]);
        }
        out
    }

    /// Remainder modulo (k0^2 + |kvec|^2 + msq), reducing every k0 power
    /// below 2. Zero remainder means the shell factor divides the polynomial.
    pub fn reduce_mod_shell(&self, msq: f64) -> Polynomial {
        let mut cur = self.clone();
        loop {
            let reducible: Vec<(Mono, Complex64)> = cur
                .terms
                .iter()
                .filter(|(m, _)| m.0[0] >= 2)
                .map(|(m, c)| (m.clone(), *c))
                .collect();
            if reducible.is_empty() {
                return cur;
            }
            for (m, c) in reducible {
                cur.terms.remove(&m);
                // k0^2 = -(msq + sum_{i>=1} (k^i)^2) modulo the shell factor
                let mut base = m.0.clone();
                base[0] -= 2;
                let entry = cur
                    .terms
                    .entry(Mono(base.clone()))
                    .or_insert_with(|| Complex64::new(0.0, 0.0));
                *entry += c * Complex64::new(-msq, 0.0);
                for i in 1..self.nvars {
                    let mut e = base.clone();
                    e[i] += 2;
                    let entry = cur
                        .terms
                        .entry(Mono(e))
                        .or_insert_with(|| Complex64::new(0.0, 0.0));
                    *entry -= c;
                }
            }
            cur = cur.prune();
        }
    }

    /// Largest coefficient magnitude, for relative thresholds.
    pub fn coeff_scale(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.norm()))
    }
}

fn fmt_f64(x: f64) -> String {
    // 17 significant digits: round-trips exactly through parsing.
    let s = format!("{:.16e}", x);
    s
}

fn fmt_coeff(c: &Complex64) -> String {
    if c.im == 0.0 {
        fmt_f64(c.re)
    } else if c.re == 0.0 {
        format!("({}*i)", fmt_f64(c.im))
    } else {
        format!("({}+{}*i)", fmt_f64(c.re), fmt_f64(c.im))
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{}", fmt_coeff(c))?;
            for (i, &e) in m.0.iter().enumerate() {
                if e == 1 {
                    write!(f, "*k{i}")?;
                } else if e > 1 {
                    write!(f, "*k{i}^{e}")?;
                }
            }
        }
        Ok(())
    }
}
