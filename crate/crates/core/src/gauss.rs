//! Tangent spaces, second fundamental forms and the rank of the Gauss map.
//!
//! The second forms at a point are `B^α_{pq} = ⟨ν_α, ∂_p∂_q f⟩` for an
//! orthonormal basis `ν_α` of the Hermitian complement of the tangent space.
//! The Gauss rank is `n − dim ⋂_α ker B^α`, computed as the nullspace of the
//! vertically stacked forms.

use serde::{Deserialize, Serialize};

use crate::expr::ExprMap;
use crate::jet::{eval_jet2, Jet2};
use crate::linalg::{column_basis, decide_rank, nullspace, orthonormal_complement, svd, vstack};
use crate::par::{self, ExecMode};
use crate::serde_mat;
use crate::{CMat, CVec, Error, Result, C64};

/// Rank-decision policy shared by every singular-value test in the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTolerance {
    /// Retained σ must be at least `rel · σ_max`.
    pub rel: f64,
    /// Retained σ must also exceed `abs · scale`, where `scale` is the jet's magnitude.
    pub abs: f64,
    /// Gap ratios below this make a decision undetermined.
    pub min_gap: f64,
}

impl Default for RankTolerance {
    fn default() -> Self {
        RankTolerance {
            rel: 1e-8,
            abs: 1e-10,
            min_gap: 1e3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentFrame {
    #[serde(with = "serde_mat::vector")]
    pub point: CVec,
    /// N×n, the Jacobian columns.
    #[serde(with = "serde_mat::mat")]
    pub tangent_basis: CMat,
    /// N×(N−n), orthonormal and Hermitian-orthogonal to the tangent columns.
    #[serde(with = "serde_mat::mat")]
    pub normal_basis: CMat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondForms {
    /// One symmetric n×n matrix per normal direction.
    #[serde(with = "serde_mat::mats")]
    pub forms: Vec<CMat>,
    /// Number of linearly independent forms.
    pub m: usize,
    /// Magnitude of the jet the forms came from; scales the absolute rank floor.
    pub scale: f64,
}

impl SecondForms {
    /// Wrap an explicit list of symmetric forms.
    pub fn from_forms(forms: Vec<CMat>, tol: &RankTolerance) -> Self {
        let scale = forms
            .iter()
            .map(crate::linalg::max_abs)
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let m = independent_count(&forms, scale, tol);
        SecondForms { forms, m, scale }
    }

    pub fn dim(&self) -> usize {
        self.forms.first().map_or(0, |b| b.nrows())
    }

    /// Every form multiplied by `c` (the rank floor scales along).
    pub fn scaled(&self, c: f64) -> Self {
        SecondForms {
            forms: self.forms.iter().map(|b| b * C64::new(c, 0.0)).collect(),
            m: self.m,
            scale: self.scale * c.abs(),
        }
    }
}

fn independent_count(forms: &[CMat], scale: f64, tol: &RankTolerance) -> usize {
    if forms.is_empty() {
        return 0;
    }
    let n = forms[0].nrows();
    let mut stacked = CMat::zeros(forms.len(), n * n);
    for (a, b) in forms.iter().enumerate() {
        for (k, z) in b.iter().enumerate() {
            stacked[(a, k)] = *z;
        }
    }
    decide_rank(&svd(&stacked).sigma, tol.rel, tol.abs * scale).rank
}

pub fn tangent_frame(jet: &Jet2, tol: &RankTolerance) -> Result<TangentFrame> {
    let n = jet.n_params();
    let (q, dec) = column_basis(&jet.d1, tol.rel);
    if dec.rank < n || jet.n_out() <= n {
        return Err(Error::NotImmersed { rank: dec.rank, n });
    }
    Ok(TangentFrame {
        point: jet.value.clone(),
        tangent_basis: jet.d1.clone(),
        normal_basis: orthonormal_complement(&q),
    })
}

/// Normal projections of the Hessians, one form per normal basis vector.
pub fn second_forms(jet: &Jet2, frame: &TangentFrame, tol: &RankTolerance) -> SecondForms {
    let n = jet.n_params();
    let nu = &frame.normal_basis;
    let forms: Vec<CMat> = (0..nu.ncols())
        .map(|a| {
            let mut b = CMat::zeros(n, n);
            for p in 0..n {
                for q in p..n {
                    let mut acc = C64::new(0.0, 0.0);
                    for (k, h) in jet.d2.iter().enumerate() {
                        acc += nu[(k, a)].conj() * h[(p, q)];
                    }
                    b[(p, q)] = acc;
                    b[(q, p)] = acc;
                }
            }
            b
        })
        .collect();
    let scale = jet_scale(jet);
    let m = independent_count(&forms, scale, tol);
    SecondForms { forms, m, scale }
}

fn jet_scale(jet: &Jet2) -> f64 {
    let d1 = crate::linalg::max_abs(&jet.d1);
    let d2 = jet
        .d2
        .iter()
        .map(crate::linalg::max_abs)
        .fold(0.0, f64::max);
    d1.max(d2).max(f64::MIN_POSITIVE)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussRank {
    pub r: usize,
    /// n×(n−r), orthonormal; spans the common kernel of the forms (the leaf tangent).
    #[serde(with = "serde_mat::mat")]
    pub kernel_basis: CMat,
    pub sigmas: Vec<f64>,
    pub gap_ratio: f64,
    /// False when the singular-value gap is below `tol.min_gap`.
    pub determined: bool,
}

pub fn gauss_rank(forms: &SecondForms, tol: &RankTolerance) -> GaussRank {
    let n = forms.dim();
    let stacked = vstack(&forms.forms, n);
    let (kernel_basis, dec, sigmas) = nullspace(&stacked, tol.rel, tol.abs * forms.scale);
    GaussRank {
        r: dec.rank,
        kernel_basis,
        sigmas,
        gap_ratio: dec.gap_ratio,
        determined: dec.gap_ratio >= tol.min_gap,
    }
}

/// Everything the rank analysis produces at one parameter point.
#[derive(Clone, Debug)]
pub struct PointAnalysis {
    pub jet: Jet2,
    pub frame: TangentFrame,
    pub forms: SecondForms,
    pub rank: GaussRank,
}

pub fn analyze_point(map: &ExprMap, u: &[f64], tol: &RankTolerance) -> Result<PointAnalysis> {
    let jet = eval_jet2(map, u)?;
    let frame = tangent_frame(&jet, tol)?;
    let forms = second_forms(&jet, &frame, tol);
    let rank = gauss_rank(&forms, tol);
    Ok(PointAnalysis {
        jet,
        frame,
        forms,
        rank,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRank {
    pub u: Vec<f64>,
    pub r: Option<usize>,
    pub sigmas: Vec<f64>,
    pub gap_ratio: Option<f64>,
    pub determined: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankProfile {
    /// Rank at the first sample that could be analyzed.
    pub r: Option<usize>,
    pub constant: bool,
    /// Every sample had a singular-value gap of at least `min_gap`.
    pub determined: bool,
    pub per_sample: Vec<SampleRank>,
    /// Indices of samples that failed or disagree with `r`.
    pub violations: Vec<usize>,
}

/// Gauss rank at every sample; failures are recorded per sample.
pub fn rank_profile(
    map: &ExprMap,
    samples: &[Vec<f64>],
    tol: &RankTolerance,
    mode: ExecMode,
) -> RankProfile {
    let per_sample: Vec<SampleRank> =
        par::map(mode, samples, |u| match analyze_point(map, u, tol) {
            Ok(a) => SampleRank {
                u: u.clone(),
                r: Some(a.rank.r),
                sigmas: a.rank.sigmas,
                gap_ratio: Some(a.rank.gap_ratio),
                determined: a.rank.determined,
                error: None,
            },
            Err(e) => SampleRank {
                u: u.clone(),
                r: None,
                sigmas: Vec::new(),
                gap_ratio: None,
                determined: false,
                error: Some(e.to_string()),
            },
        });
    let r = per_sample.iter().find_map(|s| s.r);
    let violations: Vec<usize> = per_sample
        .iter()
        .enumerate()
        .filter(|(_, s)| s.r.is_none() || s.r != r)
        .map(|(i, _)| i)
        .collect();
    RankProfile {
        r,
        constant: violations.is_empty() && !per_sample.is_empty(),
        determined: per_sample.iter().all(|s| s.determined),
        per_sample,
        violations,
    }
}
