//! Focal polynomial, its hyperplane decomposition, and the focal hypercone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::frames::LeafData;
use crate::gauss::SecondForms;
use crate::pencil::{simultaneous_diagonalize, Diagonalization, PencilAnalysis};
use crate::poly::{min_pairwise_gap, univariate_roots, HomogeneousPoly};
use crate::{CMat, Error, Result, C64};

/// Relative root separation below which a line restriction of the hypercone
/// counts as having a repeated root. Double roots from a companion matrix
/// are only resolved to about the square root of machine precision.
pub const SQUAREFREE_GAP: f64 = 1e-5;

const PROBE_SEED: u64 = 0x5eed_f0ca;

/// `J(x⁰..x^l) = det(x⁰I + Σ x^a C_a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FocalPolynomial(pub HomogeneousPoly);

impl FocalPolynomial {
    pub fn degree(&self) -> u32 {
        self.0.degree
    }

    /// Roots of `J(1, s)` for a leaf with one generator (l = 1).
    pub fn affine_roots_l1(&self) -> Vec<C64> {
        assert_eq!(self.0.nvars(), 2, "affine roots need l = 1");
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        univariate_roots(&self.0.restrict_to_line(&[one, zero], &[zero, one]))
    }
}

fn leaf_vars(l: usize) -> Vec<String> {
    (0..=l).map(|i| format!("x{i}")).collect()
}

fn det(m: CMat) -> C64 {
    if m.nrows() == 0 {
        C64::new(1.0, 0.0)
    } else {
        m.lu().determinant()
    }
}

pub fn focal_polynomial(data: &LeafData) -> FocalPolynomial {
    let r = data.r();
    let poly = HomogeneousPoly::interpolate(leaf_vars(data.l()), r as u32, |x| {
        let m = data
            .c
            .iter()
            .zip(x)
            .fold(CMat::zeros(r, r), |acc, (ci, &xi)| acc + ci * xi);
        det(m)
    });
    FocalPolynomial(poly)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocalDecomposition {
    /// `hyperplanes[p] = (1, c^p_{p1}, …, c^p_{pl})`.
    pub hyperplanes: Vec<Vec<C64>>,
    /// Relative coefficient mismatch between the product of the hyperplanes and `J`.
    pub residual: f64,
    pub diagonalization: Diagonalization,
}

impl FocalDecomposition {
    pub fn count(&self) -> usize {
        self.hyperplanes.len()
    }
}

pub fn factor_focal(data: &LeafData, pa: &PencilAnalysis, tol: f64) -> Result<FocalDecomposition> {
    let diagonalization = simultaneous_diagonalize(pa, data, tol)?;
    if !diagonalization.within_tolerance {
        return Err(Error::HypothesisNotMet(format!(
            "off-diagonal residual {:.3e} exceeds {tol:.1e}",
            diagonalization.off_diag_residual
        )));
    }
    let r = data.r();
    let hyperplanes: Vec<Vec<C64>> = (0..r)
        .map(|p| {
            let mut cov = vec![C64::new(1.0, 0.0)];
            cov.extend(diagonalization.diagonals.iter().map(|d| d[p]));
            cov
        })
        .collect();
    let product = HomogeneousPoly::product_of_linear(leaf_vars(data.l()), &hyperplanes);
    let residual = focal_polynomial(data).0.relative_distance(&product);
    Ok(FocalDecomposition {
        hyperplanes,
        residual,
        diagonalization,
    })
}

/// Projective angular distance `sin∠(a, b)` between two covectors.
pub fn angular_distance(a: &[C64], b: &[C64]) -> f64 {
    let na: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    // component of b orthogonal to a, which keeps small angles accurate
    let dot: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>() / (na * na);
    let perp: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (y - x * dot).norm_sqr())
        .sum::<f64>()
        .sqrt();
    (perp / nb).min(1.0)
}

/// Whether the covector is the leaf's hyperplane at infinity `x⁰ = 0`.
pub fn at_infinity(cov: &[C64], tol: f64) -> bool {
    let mut e0 = vec![C64::new(0.0, 0.0); cov.len()];
    e0[0] = C64::new(1.0, 0.0);
    angular_distance(cov, &e0) <= tol
}

/// Largest pairwise angular distance.
pub fn spread(covs: &[Vec<C64>]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..covs.len() {
        for j in i + 1..covs.len() {
            worst = worst.max(angular_distance(&covs[i], &covs[j]));
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperconeProbe {
    pub roots: Vec<C64>,
    /// Degree lost to roots at infinity.
    pub dropped: usize,
    pub relative_gap: f64,
    pub squarefree: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocalHypercone {
    pub cone_poly: HomogeneousPoly,
    pub squarefree: bool,
    pub probes: Vec<HyperconeProbe>,
}

/// `det(Σ ξ_α B^α)` over the normal coordinates, with a squarefree vote on
/// three seeded line restrictions.
pub fn focal_hypercone(forms: &SecondForms) -> FocalHypercone {
    let bs = &forms.forms;
    let r = forms.dim();
    let vars: Vec<String> = (1..=bs.len()).map(|a| format!("xi{a}")).collect();
    let cone_poly = HomogeneousPoly::interpolate(vars, r as u32, |xi| {
        det(bs
            .iter()
            .zip(xi)
            .fold(CMat::zeros(r, r), |acc, (b, &x)| acc + b * x))
    });
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let big = cone_poly.max_coeff();
    let probes: Vec<HyperconeProbe> = (0..3)
        .map(|_| {
            let p: Vec<C64> = bs
                .iter()
                .map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0))
                .collect();
            let q: Vec<C64> = bs
                .iter()
                .map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0))
                .collect();
            probe(&cone_poly, &p, &q, big)
        })
        .collect();
    let votes = probes.iter().filter(|p| p.squarefree).count();
    FocalHypercone {
        cone_poly,
        squarefree: votes >= 2,
        probes,
    }
}

fn probe(poly: &HomogeneousPoly, p: &[C64], q: &[C64], big: f64) -> HyperconeProbe {
    let coeffs = poly.restrict_to_line(p, q);
    let line_big = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if big == 0.0 || line_big <= 1e-12 * big {
        return HyperconeProbe {
            roots: vec![],
            dropped: coeffs.len().saturating_sub(1),
            relative_gap: 0.0,
            squarefree: false,
        };
    }
    let roots = univariate_roots(&coeffs);
    let dropped = coeffs.len() - 1 - roots.len();
    let scale = 1.0 + roots.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let relative_gap = min_pairwise_gap(&roots) / scale;
    HyperconeProbe {
        squarefree: dropped <= 1 && relative_gap > SQUAREFREE_GAP,
        roots,
        dropped,
        relative_gap,
    }
}
