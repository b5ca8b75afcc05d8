//! Adapted frames along a plane generator and the matrices of the basic equations.
//!
//! At a base point `u` the frame is `{A₀; A_1..A_l; Ã_1..Ã_r; ν}` with
//! `Ã_q = ∂f/∂u^q` at `t = 0`, so `C₀ = I` holds by construction.
//! `C_a[p][q]` is the `Ã_p` coefficient of `∂_q A_a` and
//! `B^α[p][q] = ⟨ν_α, ∂_p∂_q A₀⟩`. The products `H^α_i = B^α C_i` are
//! symmetric for a genuine tangentially degenerate submanifold.

use serde::{Deserialize, Serialize};

use crate::gauss::{RankTolerance, SecondForms};
use crate::jet::eval_jet2;
use crate::linalg::{
    column_basis, condition_number, decide_rank, hstack, max_abs, orthonormal_complement, svd,
    vstack,
};
use crate::ruled::RuledSpec;
use crate::serde_mat;
use crate::{CMat, CVec, Error, Result, C64};

/// Frames with a larger condition number are rejected.
pub const MAX_FRAME_CONDITION: f64 = 1e10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafData {
    pub u: Vec<f64>,
    #[serde(with = "serde_mat::vector")]
    pub base_point: CVec,
    #[serde(with = "serde_mat::vectors")]
    pub generator_vectors: Vec<CVec>,
    /// `C_0 .. C_l`, each r×r, `C_0 = I`.
    #[serde(with = "serde_mat::mats")]
    pub c: Vec<CMat>,
    /// Symmetric r×r second forms at the base point.
    #[serde(with = "serde_mat::mats")]
    pub b: Vec<CMat>,
    /// `h[α][i] = B^α C_i`.
    #[serde(with = "serde_mat::nested_mats")]
    pub h: Vec<Vec<CMat>>,
    pub m: usize,
    /// Largest normal component of any `∂_q A_a`; zero when the tangent
    /// space is constant along the leaf.
    pub normal_leak: f64,
    pub frame_condition: f64,
    pub scale: f64,
}

impl LeafData {
    pub fn r(&self) -> usize {
        self.c[0].nrows()
    }

    pub fn l(&self) -> usize {
        self.c.len() - 1
    }

    /// Recompute `H` after editing `C` or `B`.
    pub fn recompute_products(&mut self) {
        self.h = products(&self.b, &self.c);
    }

    pub fn leaf_forms(&self, tol: &RankTolerance) -> SecondForms {
        let mut f = SecondForms::from_forms(self.b.clone(), tol);
        f.scale = self.scale;
        f.m = self.m;
        f
    }
}

fn products(b: &[CMat], c: &[CMat]) -> Vec<Vec<CMat>> {
    b.iter()
        .map(|ba| c.iter().map(|ci| ba * ci).collect())
        .collect()
}

pub fn extract_leaf_data(spec: &RuledSpec, u: &[f64], tol: &RankTolerance) -> Result<LeafData> {
    let (r, l, n, big_n) = (spec.r, spec.l, spec.n(), spec.ambient_dim);
    let base = eval_jet2(&spec.base, u)?;
    let gens = spec
        .generators
        .iter()
        .map(|g| eval_jet2(g, u))
        .collect::<Result<Vec<_>>>()?;

    let mut tangent_cols: Vec<CVec> = gens.iter().map(|g| g.value.clone()).collect();
    tangent_cols.extend((0..r).map(|q| base.d1.column(q).into_owned()));
    let tangent = hstack(&tangent_cols, big_n);
    let (q, dec) = column_basis(&tangent, tol.rel);
    if dec.rank < n {
        return Err(Error::SingularBasePoint { rank: dec.rank, n });
    }
    let normals = orthonormal_complement(&q);

    let mut frame = CMat::zeros(big_n, big_n);
    frame.view_mut((0, 0), (big_n, n)).copy_from(&tangent);
    frame
        .view_mut((0, n), (big_n, big_n - n))
        .copy_from(&normals);
    let frame_condition = condition_number(&frame);
    if frame_condition.is_nan() || frame_condition > MAX_FRAME_CONDITION {
        return Err(Error::FrameIllConditioned {
            cond: frame_condition,
        });
    }
    let lu = frame.clone().lu();

    let mut c = vec![CMat::identity(r, r)];
    let mut normal_leak = 0.0f64;
    for g in &gens {
        let coeffs = lu.solve(&g.d1).ok_or(Error::FrameIllConditioned {
            cond: f64::INFINITY,
        })?;
        c.push(coeffs.rows(l, r).into_owned());
        if big_n > n {
            normal_leak = normal_leak.max(max_abs(&coeffs.rows(n, big_n - n).into_owned()));
        }
    }

    let b: Vec<CMat> = (0..big_n - n)
        .map(|alpha| {
            let mut m = CMat::zeros(r, r);
            for p in 0..r {
                for q in p..r {
                    let mut acc = C64::new(0.0, 0.0);
                    for (k, hk) in base.d2.iter().enumerate() {
                        acc += normals[(k, alpha)].conj() * hk[(p, q)];
                    }
                    m[(p, q)] = acc;
                    m[(q, p)] = acc;
                }
            }
            m
        })
        .collect();

    let scale = [
        max_abs(&tangent),
        base.d2.iter().map(max_abs).fold(0.0, f64::max),
    ]
    .into_iter()
    .chain(gens.iter().map(|g| max_abs(&g.d1)))
    .fold(f64::MIN_POSITIVE, f64::max);
    let m = independent_forms(&b, scale, tol);

    Ok(LeafData {
        u: u.to_vec(),
        base_point: base.value.clone(),
        generator_vectors: gens.iter().map(|g| g.value.clone()).collect(),
        h: products(&b, &c),
        c,
        b,
        m,
        normal_leak,
        frame_condition,
        scale,
    })
}

fn independent_forms(b: &[CMat], scale: f64, tol: &RankTolerance) -> usize {
    if b.is_empty() {
        return 0;
    }
    let r = b[0].nrows();
    let mut stacked = CMat::zeros(b.len(), r * r);
    for (a, m) in b.iter().enumerate() {
        for (k, z) in m.iter().enumerate() {
            stacked[(a, k)] = *z;
        }
    }
    decide_rank(&svd(&stacked).sigma, tol.rel, tol.abs * scale).rank
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicEquationsReport {
    /// `max_{α,i} ‖H^α_i − (H^α_i)ᵀ‖_∞` (entrywise max).
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

pub fn check_basic_equations(data: &LeafData, tol: f64) -> BasicEquationsReport {
    let residual = data
        .h
        .iter()
        .flatten()
        .map(|h| max_abs(&(h - h.transpose())))
        .fold(0.0, f64::max);
    BasicEquationsReport {
        residual,
        tol,
        pass: residual <= tol,
    }
}

/// Number of independent second forms and the osculating dimension `n + m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OsculatingProfile {
    pub m: usize,
    pub osc_dim: usize,
}

pub fn second_order_profile(data: &LeafData) -> OsculatingProfile {
    let n = data.l() + data.r();
    OsculatingProfile {
        m: data.m,
        osc_dim: n + data.m,
    }
}

/// Ranks of the stacked `C_0..C_l` and of the stacked `B^α`; both equal r
/// on a rank-r leaf.
pub fn stack_ranks(data: &LeafData, tol: &RankTolerance) -> (usize, usize) {
    let r = data.r();
    let c_rank = decide_rank(&svd(&vstack(&data.c, r)).sigma, tol.rel, 0.0).rank;
    let b_rank = if data.b.is_empty() {
        0
    } else {
        decide_rank(
            &svd(&vstack(&data.b, r)).sigma,
            tol.rel,
            tol.abs * data.scale,
        )
        .rank
    };
    (c_rank, b_rank)
}
