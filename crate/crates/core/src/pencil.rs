//! The pencil of second fundamental forms.
//!
//! A pair `(B′, B″)` with `det B′ ≠ 0` is a regular pencil; its
//! characteristic roots solve `det(B″ + λB′) = 0` and are the eigenvalues of
//! `−B′⁻¹B″`. When those roots are distinct, the eigenvectors diagonalize
//! both forms by congruence and, on a tangentially degenerate leaf, every
//! `C_a` by similarity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::frames::LeafData;
use crate::gauss::SecondForms;
use crate::linalg::{eigenvalues, max_abs, svd};
use crate::poly::min_pairwise_gap;
use crate::serde_mat;
use crate::{CMat, Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PencilTolerance {
    /// Relative eigenvalue separation required for distinctness.
    pub gap: f64,
    /// `σ_min(B′) / σ_max(B′)` at or below this counts as singular.
    pub leading: f64,
    /// Number of seeded random combinations tried after the index pairs.
    pub budget: usize,
}

impl Default for PencilTolerance {
    fn default() -> Self {
        PencilTolerance {
            gap: 1e-8,
            leading: 1e-8,
            budget: 64,
        }
    }
}

/// How `(B′, B″)` was chosen from the span of the forms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PencilSelection {
    IndexPair {
        prime: usize,
        double_prime: usize,
    },
    Combination {
        draw: usize,
        prime: Vec<C64>,
        double_prime: Vec<C64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PencilAnalysis {
    pub seed: u64,
    pub selection: PencilSelection,
    pub candidates_tried: usize,
    #[serde(with = "serde_mat::mat")]
    pub b_prime: CMat,
    #[serde(with = "serde_mat::mat")]
    pub b_double_prime: CMat,
    /// Sorted by (re, im).
    pub eigenvalues: Vec<C64>,
    /// Column p is the eigenvector of λ_p, scaled so its largest entry is 1.
    #[serde(with = "serde_mat::mat")]
    pub eigenbasis: CMat,
    pub regular: bool,
    pub distinct: bool,
    pub min_gap: f64,
}

/// Sort by real part, then imaginary part. Real parts closer than a relative
/// 1e-9 count as equal, so conjugate pairs keep a stable order under roundoff.
fn sort_lex(v: &mut [C64]) {
    use std::cmp::Ordering;
    v.sort_by(|a, b| {
        let tie = 1e-9 * (1.0 + a.norm().max(b.norm()));
        let by_re = if (a.re - b.re).abs() <= tie {
            Ordering::Equal
        } else {
            a.re.partial_cmp(&b.re).unwrap_or(Ordering::Equal)
        };
        by_re.then(a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal))
    });
}

/// Roots of `det(B″ + λB′) = 0`, sorted by (re, im).
pub fn characteristic_eigenvalues(
    bp: &CMat,
    bpp: &CMat,
    tol: &PencilTolerance,
) -> Result<Vec<C64>> {
    let s = svd(bp);
    let hi = s.sigma.first().copied().unwrap_or(0.0);
    let lo = s.sigma.last().copied().unwrap_or(0.0);
    let ratio = if hi == 0.0 { 0.0 } else { lo / hi };
    if ratio <= tol.leading {
        return Err(Error::SingularLeadingForm { ratio });
    }
    let inv = bp
        .clone()
        .try_inverse()
        .ok_or(Error::SingularLeadingForm { ratio })?;
    let m = -(inv * bpp);
    let mut ev = eigenvalues(&m);
    sort_lex(&mut ev);
    Ok(ev)
}

/// Distinct iff the smallest pairwise gap exceeds `tol_gap · (1 + max|λ|)`.
pub fn eigenvalue_distinctness(lambda: &[C64], tol_gap: f64) -> (bool, f64) {
    let gap = min_pairwise_gap(lambda);
    let big = lambda.iter().map(|z| z.norm()).fold(0.0, f64::max);
    (gap > tol_gap * (1.0 + big), gap)
}

fn gauge(mut v: nalgebra::DVector<C64>) -> nalgebra::DVector<C64> {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].norm() > v[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let pivot = v[best];
    v.iter_mut().for_each(|z| *z /= pivot);
    v
}

fn eigenbasis(bp: &CMat, bpp: &CMat, lambda: &[C64]) -> CMat {
    let r = bp.nrows();
    let mut basis = CMat::zeros(r, r);
    for (p, &l) in lambda.iter().enumerate() {
        let s = svd(&(bpp + bp * l));
        basis.set_column(p, &gauge(s.v.column(r - 1).into_owned()));
    }
    basis
}

/// Full analysis of one candidate pair.
pub fn analyze_pair(
    bp: &CMat,
    bpp: &CMat,
    seed: u64,
    selection: PencilSelection,
    tol: &PencilTolerance,
) -> Result<PencilAnalysis> {
    let eigenvalues = characteristic_eigenvalues(bp, bpp, tol)?;
    let (distinct, min_gap) = eigenvalue_distinctness(&eigenvalues, tol.gap);
    Ok(PencilAnalysis {
        seed,
        selection,
        candidates_tried: 1,
        b_prime: bp.clone(),
        b_double_prime: bpp.clone(),
        eigenbasis: eigenbasis(bp, bpp, &eigenvalues),
        eigenvalues,
        regular: true,
        distinct,
        min_gap,
    })
}

/// Deterministic search for a regular pair with distinct roots: ordered index
/// pairs first, then up to `tol.budget` seeded random combinations.
pub fn select_regular_pair(
    forms: &SecondForms,
    seed: u64,
    tol: &PencilTolerance,
) -> Result<PencilAnalysis> {
    if forms.m < 2 {
        return Err(Error::MTooSmall { m: forms.m });
    }
    let bs = &forms.forms;
    let mut tried = 0;
    for i in 0..bs.len() {
        for j in 0..bs.len() {
            if i == j {
                continue;
            }
            tried += 1;
            let sel = PencilSelection::IndexPair {
                prime: i,
                double_prime: j,
            };
            if let Ok(mut pa) = analyze_pair(&bs[i], &bs[j], seed, sel, tol) {
                if pa.distinct {
                    pa.candidates_tried = tried;
                    return Ok(pa);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = forms.dim();
    for draw in 0..tol.budget {
        tried += 1;
        let xi1: Vec<C64> = bs
            .iter()
            .map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0))
            .collect();
        let xi2: Vec<C64> = bs
            .iter()
            .map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0))
            .collect();
        let combine = |xi: &[C64]| {
            bs.iter()
                .zip(xi)
                .fold(CMat::zeros(r, r), |acc, (b, &x)| acc + b * x)
        };
        let sel = PencilSelection::Combination {
            draw,
            prime: xi1.clone(),
            double_prime: xi2.clone(),
        };
        if let Ok(mut pa) = analyze_pair(&combine(&xi1), &combine(&xi2), seed, sel, tol) {
            if pa.distinct {
                pa.candidates_tried = tried;
                return Ok(pa);
            }
        }
    }
    Err(Error::NoRegularPair { tried })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagonalization {
    /// `diagonals[a−1][p] = c^p_{pa}` in the pencil eigenbasis, a = 1..l.
    pub diagonals: Vec<Vec<C64>>,
    /// Largest off-diagonal magnitude over all transformed `C_a`.
    pub off_diag_residual: f64,
    pub per_matrix: Vec<f64>,
    /// Largest off-diagonal of `SᵀB′S`, `SᵀB″S` relative to their diagonals.
    pub form_off_diag: f64,
    pub tol: f64,
    pub within_tolerance: bool,
}

/// Transform every `C_a` into the pencil eigenbasis.
pub fn simultaneous_diagonalize(
    pa: &PencilAnalysis,
    data: &LeafData,
    tol: f64,
) -> Result<Diagonalization> {
    if !pa.distinct {
        return Err(Error::HypothesisNotMet(
            "pencil eigenvalues are not distinct".into(),
        ));
    }
    let s = &pa.eigenbasis;
    let s_inv = s
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::HypothesisNotMet("pencil eigenbasis is singular".into()))?;
    let r = s.nrows();
    let off = |m: &CMat| {
        let mut worst = 0.0f64;
        for i in 0..r {
            for j in 0..r {
                if i != j {
                    worst = worst.max(m[(i, j)].norm());
                }
            }
        }
        worst
    };
    let mut diagonals = Vec::with_capacity(data.l());
    let mut per_matrix = Vec::with_capacity(data.l());
    for ca in &data.c[1..] {
        let d = &s_inv * ca * s;
        per_matrix.push(off(&d));
        diagonals.push((0..r).map(|p| d[(p, p)]).collect());
    }
    let mut form_off_diag = 0.0f64;
    for b in [&pa.b_prime, &pa.b_double_prime] {
        let d = s.transpose() * b * s;
        let diag = (0..r).map(|p| d[(p, p)].norm()).fold(0.0, f64::max);
        form_off_diag = form_off_diag.max(off(&d) / diag.max(f64::MIN_POSITIVE));
    }
    let off_diag_residual = per_matrix.iter().copied().fold(0.0, f64::max);
    Ok(Diagonalization {
        diagonals,
        off_diag_residual,
        per_matrix,
        form_off_diag,
        tol,
        within_tolerance: off_diag_residual <= tol,
    })
}

/// Largest entry of a matrix, for reports.
pub fn magnitude(m: &CMat) -> f64 {
    max_abs(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::RankTolerance;
    use crate::linalg::from_real;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn tol() -> PencilTolerance {
        PencilTolerance::default()
    }

    fn forms(bs: Vec<CMat>) -> SecondForms {
        SecondForms::from_forms(bs, &RankTolerance::default())
    }

    #[test]
    fn diagonal_pencil() {
        let ev = characteristic_eigenvalues(
            &CMat::identity(2, 2),
            &from_real(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            &tol(),
        )
        .unwrap();
        assert!((ev[0] - c(-2.0)).norm() < 1e-14);
        assert!((ev[1] - c(-1.0)).norm() < 1e-14);
        let (distinct, gap) = eigenvalue_distinctness(&ev, 1e-8);
        assert!(distinct);
        assert!((gap - 1.0).abs() < 1e-14);
    }

    #[test]
    fn veronese_pencil_roots_are_plus_minus_half() {
        // det(B″ + λB′) = 4λ² − 1
        let bp = from_real(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let bpp = from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let ev = characteristic_eigenvalues(&bp, &bpp, &tol()).unwrap();
        assert!((ev[0] - c(-0.5)).norm() < 1e-14);
        assert!((ev[1] - c(0.5)).norm() < 1e-14);
        let pa = select_regular_pair(&forms(vec![bp.clone(), bpp]), 0, &tol()).unwrap();
        assert_eq!(
            pa.selection,
            PencilSelection::IndexPair {
                prime: 0,
                double_prime: 1
            }
        );
        assert!((pa.b_prime.determinant() - c(4.0)).norm() < 1e-12);
    }

    #[test]
    fn proportional_pencil_has_one_repeated_root() {
        let bp = from_real(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let bpp = &bp * c(2.5);
        let ev = characteristic_eigenvalues(&bp, &bpp, &tol()).unwrap();
        assert!(ev.iter().all(|z| (z - c(-2.5)).norm() < 1e-12));
        assert!(!eigenvalue_distinctness(&ev, 1e-8).0);
        // equal forms: m = 1
        let f = forms(vec![bp.clone(), bp.clone()]);
        assert_eq!(f.m, 1);
        assert!(matches!(
            select_regular_pair(&f, 0, &tol()),
            Err(Error::MTooSmall { m: 1 })
        ));
    }

    #[test]
    fn near_coincident_roots_are_not_distinct() {
        let ev = [c(0.5), c(0.5 + 1e-14)];
        assert!(!eigenvalue_distinctness(&ev, 1e-8).0);
    }

    #[test]
    fn singular_leading_form_is_rejected() {
        let bp = from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            characteristic_eigenvalues(&bp, &CMat::identity(2, 2), &tol()),
            Err(Error::SingularLeadingForm { .. })
        ));
    }

    #[test]
    fn square_hypercone_has_no_regular_distinct_pair() {
        // det(ξ₁ diag(1,0) + ξ₂ [[0,1],[1,0]]) = −ξ₂²
        let b1 = from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b2 = from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let f = forms(vec![b1, b2]);
        assert_eq!(f.m, 2);
        assert!(matches!(
            select_regular_pair(&f, 9, &tol()),
            Err(Error::NoRegularPair { tried: 66 })
        ));
    }

    #[test]
    fn random_combination_found_when_index_pairs_fail() {
        // Both basis forms singular, but their span contains regular pairs.
        let b1 = from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b2 = from_real(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let b3 = from_real(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        let pa = select_regular_pair(&forms(vec![b1, b2, b3]), 4, &tol()).unwrap();
        assert!(matches!(pa.selection, PencilSelection::Combination { .. }));
        assert!(pa.distinct);
        let again = select_regular_pair(&forms(pa_forms()), 4, &tol());
        assert!(again.is_ok());
    }

    fn pa_forms() -> Vec<CMat> {
        vec![
            from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            from_real(2, 2, &[0.0, 0.0, 0.0, 1.0]),
        ]
    }

    #[test]
    fn congruence_invariance_of_roots() {
        let bp = from_real(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.3, 0.0, 0.3, 3.0]);
        let bpp = from_real(3, 3, &[0.0, 1.0, 0.2, 1.0, -1.0, 0.0, 0.2, 0.0, 0.5]);
        let base = characteristic_eigenvalues(&bp, &bpp, &tol()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let s = CMat::from_fn(3, 3, |_, _| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let ev = characteristic_eigenvalues(
                &(s.transpose() * &bp * &s),
                &(s.transpose() * &bpp * &s),
                &tol(),
            )
            .unwrap();
            for (a, b) in ev.iter().zip(&base) {
                assert!((a - b).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn simultaneously_diagonal_forms_give_ratio_roots() {
        let bp = from_real(3, 3, &[2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 4.0]);
        let bpp = from_real(3, 3, &[1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.0]);
        let ev = characteristic_eigenvalues(&bp, &bpp, &tol()).unwrap();
        let mut expected = vec![c(-0.5), c(3.0), c(-0.25)];
        sort_lex(&mut expected);
        for (a, b) in ev.iter().zip(&expected) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    fn leaf_with(c_mats: Vec<CMat>, b: Vec<CMat>) -> LeafData {
        let r = c_mats[0].nrows();
        let mut d = LeafData {
            u: vec![0.0; r],
            base_point: nalgebra::DVector::zeros(r + 3),
            generator_vectors: vec![],
            c: c_mats,
            b,
            h: vec![],
            m: 2,
            normal_leak: 0.0,
            frame_condition: 1.0,
            scale: 1.0,
        };
        d.recompute_products();
        d
    }

    #[test]
    fn zero_c_diagonalizes_trivially() {
        let b1 = from_real(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let b2 = from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let data = leaf_with(
            vec![CMat::identity(2, 2), CMat::zeros(2, 2), CMat::zeros(2, 2)],
            vec![b1, b2],
        );
        let pa =
            select_regular_pair(&data.leaf_forms(&RankTolerance::default()), 0, &tol()).unwrap();
        let d = simultaneous_diagonalize(&pa, &data, 1e-8).unwrap();
        assert_eq!(d.off_diag_residual, 0.0);
        assert!(d.diagonals.iter().flatten().all(|z| z.norm() == 0.0));
        assert!(d.form_off_diag < 1e-14);
    }

    #[test]
    fn fault_injection_shows_in_residual() {
        let b1 = from_real(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let b2 = from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let data0 = leaf_with(
            vec![CMat::identity(2, 2), CMat::zeros(2, 2)],
            vec![b1.clone(), b2.clone()],
        );
        let pa =
            select_regular_pair(&data0.leaf_forms(&RankTolerance::default()), 0, &tol()).unwrap();
        let s = &pa.eigenbasis;
        let mut dmat = from_real(2, 2, &[0.7, 0.0, 0.0, -0.2]);
        dmat[(0, 1)] = c(0.1);
        let corrupted = s * dmat * s.clone().try_inverse().unwrap();
        let data = leaf_with(vec![CMat::identity(2, 2), corrupted], vec![b1, b2]);
        let d = simultaneous_diagonalize(&pa, &data, 1e-8).unwrap();
        assert!((d.off_diag_residual - 0.1).abs() < 1e-12);
        assert!(!d.within_tolerance);
    }

    #[test]
    fn repeated_roots_refuse_diagonalization() {
        let bp = CMat::identity(2, 2);
        let pa = analyze_pair(
            &bp,
            &(&bp * c(2.0)),
            0,
            PencilSelection::IndexPair {
                prime: 0,
                double_prime: 1,
            },
            &tol(),
        )
        .unwrap();
        let data = leaf_with(
            vec![CMat::identity(2, 2), CMat::zeros(2, 2)],
            vec![bp.clone(), bp],
        );
        assert!(matches!(
            simultaneous_diagonalize(&pa, &data, 1e-8),
            Err(Error::HypothesisNotMet(_))
        ));
    }
}
