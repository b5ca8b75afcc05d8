//! Dense homogeneous polynomials recovered by evaluation and interpolation.
//!
//! A degree-d form in k+1 variables is determined by its dehomogenization
//! at `x⁰ = 1`, so coefficients are fitted on the principal lattice
//! `{α ∈ ℕᵏ : |α| ≤ d}`, which is unisolvent for degree ≤ d.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::linalg::eigenvalues;
use crate::{CMat, CVec, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub exps: Vec<u32>,
    pub re: f64,
    pub im: f64,
}

impl Monomial {
    pub fn coeff(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

/// Homogeneous polynomial with every monomial of its degree stored, in
/// decreasing lexicographic order of exponents (`(x⁰)ᵈ` first).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousPoly {
    pub degree: u32,
    pub vars: Vec<String>,
    pub monomials: Vec<Monomial>,
}

/// All exponent vectors of total degree `d` in `k` variables, lexicographically decreasing.
pub fn exponents(k: usize, d: u32) -> Vec<Vec<u32>> {
    fn rec(k: usize, d: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == 1 {
            prefix.push(d);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=d).rev() {
            prefix.push(e);
            rec(k - 1, d - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if k == 0 {
        if d == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(k, d, &mut Vec::new(), &mut out);
    out
}

fn monomial_value(exps: &[u32], x: &[C64]) -> C64 {
    exps.iter()
        .zip(x)
        .fold(C64::new(1.0, 0.0), |acc, (&e, &xi)| acc * xi.powu(e))
}

impl HomogeneousPoly {
    pub fn from_coeffs(vars: Vec<String>, degree: u32, coeffs: &[C64]) -> Self {
        let exps = exponents(vars.len(), degree);
        assert_eq!(exps.len(), coeffs.len(), "coefficient count");
        let monomials = exps
            .into_iter()
            .zip(coeffs)
            .map(|(exps, c)| Monomial {
                exps,
                re: c.re,
                im: c.im,
            })
            .collect();
        HomogeneousPoly {
            degree,
            vars,
            monomials,
        }
    }

    /// Fit the degree-`degree` form `f` in `vars.len()` variables.
    pub fn interpolate(vars: Vec<String>, degree: u32, f: impl Fn(&[C64]) -> C64) -> Self {
        let nvars = vars.len();
        assert!(nvars >= 1);
        let exps = exponents(nvars, degree);
        // dehomogenized monomials double as the lattice points
        let lattice: Vec<Vec<u32>> = exps.iter().map(|e| e[1..].to_vec()).collect();
        let size = exps.len();
        let mut vander = CMat::zeros(size, size);
        let mut rhs = CVec::zeros(size);
        for (i, pt) in lattice.iter().enumerate() {
            let mut x = vec![C64::new(1.0, 0.0)];
            x.extend(pt.iter().map(|&a| C64::new(a as f64, 0.0)));
            rhs[i] = f(&x);
            for (j, beta) in lattice.iter().enumerate() {
                vander[(i, j)] = monomial_value(beta, &x[1..]);
            }
        }
        let coeffs = vander
            .lu()
            .solve(&rhs)
            .expect("principal lattice is unisolvent");
        Self::from_coeffs(vars, degree, coeffs.as_slice())
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    pub fn coeffs(&self) -> Vec<C64> {
        self.monomials.iter().map(Monomial::coeff).collect()
    }

    pub fn coefficient(&self, exps: &[u32]) -> C64 {
        self.monomials
            .iter()
            .find(|m| m.exps == exps)
            .map_or(C64::new(0.0, 0.0), Monomial::coeff)
    }

    pub fn eval(&self, x: &[C64]) -> C64 {
        self.monomials
            .iter()
            .map(|m| m.coeff() * monomial_value(&m.exps, x))
            .sum()
    }

    pub fn max_coeff(&self) -> f64 {
        self.monomials
            .iter()
            .map(|m| m.coeff().norm())
            .fold(0.0, f64::max)
    }

    /// Largest coefficient difference over the largest coefficient of `self`.
    pub fn relative_distance(&self, other: &HomogeneousPoly) -> f64 {
        let mut diff = 0.0f64;
        let mut all: BTreeMap<&[u32], C64> = BTreeMap::new();
        for m in &self.monomials {
            *all.entry(&m.exps).or_default() += m.coeff();
        }
        for m in &other.monomials {
            *all.entry(&m.exps).or_default() -= m.coeff();
        }
        for v in all.values() {
            diff = diff.max(v.norm());
        }
        diff / self.max_coeff().max(f64::MIN_POSITIVE)
    }

    pub fn mul(&self, other: &HomogeneousPoly) -> HomogeneousPoly {
        assert_eq!(self.nvars(), other.nvars());
        let degree = self.degree + other.degree;
        let mut acc: BTreeMap<Vec<u32>, C64> = BTreeMap::new();
        for a in &self.monomials {
            for b in &other.monomials {
                let e: Vec<u32> = a.exps.iter().zip(&b.exps).map(|(x, y)| x + y).collect();
                *acc.entry(e).or_default() += a.coeff() * b.coeff();
            }
        }
        let coeffs: Vec<C64> = exponents(self.nvars(), degree)
            .iter()
            .map(|e| acc.get(e).copied().unwrap_or_default())
            .collect();
        Self::from_coeffs(self.vars.clone(), degree, &coeffs)
    }

    /// The linear form `Σ cᵢ xⁱ`.
    pub fn linear(vars: Vec<String>, c: &[C64]) -> Self {
        let exps = exponents(vars.len(), 1);
        let coeffs: Vec<C64> = exps
            .iter()
            .map(|e| {
                let i = e.iter().position(|&x| x == 1).unwrap();
                c[i]
            })
            .collect();
        Self::from_coeffs(vars, 1, &coeffs)
    }

    pub fn product_of_linear(vars: Vec<String>, forms: &[Vec<C64>]) -> Self {
        let mut acc = Self::from_coeffs(vars.clone(), 0, &[C64::new(1.0, 0.0)]);
        for f in forms {
            acc = acc.mul(&Self::linear(vars.clone(), f));
        }
        acc
    }

    /// Coefficients (constant term first) of `s ↦ P(p + s q)`.
    pub fn restrict_to_line(&self, p: &[C64], q: &[C64]) -> Vec<C64> {
        let d = self.degree as usize;
        let mut vander = CMat::zeros(d + 1, d + 1);
        let mut rhs = CVec::zeros(d + 1);
        for i in 0..=d {
            let s = C64::new(i as f64, 0.0);
            let x: Vec<C64> = p.iter().zip(q).map(|(&a, &b)| a + s * b).collect();
            rhs[i] = self.eval(&x);
            for j in 0..=d {
                vander[(i, j)] = s.powu(j as u32);
            }
        }
        vander
            .lu()
            .solve(&rhs)
            .expect("distinct nodes")
            .iter()
            .copied()
            .collect()
    }
}

/// Roots of `Σ cₖ sᵏ` from the companion matrix. Leading coefficients below
/// `1e-12` of the largest are treated as zero (roots at infinity are dropped).
pub fn univariate_roots(coeffs: &[C64]) -> Vec<C64> {
    let big = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if big == 0.0 {
        return Vec::new();
    }
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg].norm() <= 1e-12 * big {
        deg -= 1;
    }
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let mut comp = CMat::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -coeffs[i] / lead;
    }
    eigenvalues(&comp)
}

/// Smallest pairwise distance among `xs` (infinite for fewer than two).
pub fn min_pairwise_gap(xs: &[C64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            gap = gap.min((xs[i] - xs[j]).norm());
        }
    }
    gap
}
