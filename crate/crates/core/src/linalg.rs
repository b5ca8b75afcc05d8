//! Small dense complex linear-algebra helpers.
//!
//! Matrices are nalgebra `CMat`; SVD and eigenvalues are computed with faer.
//! Singular values come back sorted in decreasing order.

use crate::{CMat, CVec, C64};

/// Thin SVD `A = U diag(σ) Vᴴ` with σ sorted decreasingly and a full `V`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMat,
    pub sigma: Vec<f64>,
    pub v: CMat,
}

pub fn svd(a: &CMat) -> Svd {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Svd {
            u: CMat::zeros(rows, 0),
            sigma: vec![0.0; cols],
            v: CMat::identity(cols, cols),
        };
    }
    let m = faer::Mat::<C64>::from_fn(rows, cols, |i, j| a[(i, j)]);
    let dec = m.svd().expect("svd converges");
    let k = rows.min(cols);
    let (fu, fs, fv) = (dec.U(), dec.S(), dec.V());
    // wide matrices report trailing zeros so `sigma` always has one entry per column
    let mut sigma: Vec<f64> = (0..k).map(|i| fs[i].re).collect();
    sigma.resize(cols, 0.0);
    Svd {
        u: CMat::from_fn(rows, k, |i, j| fu[(i, j)]),
        sigma,
        v: CMat::from_fn(cols, cols, |i, j| fv[(i, j)]),
    }
}

/// Outcome of a singular-value rank test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankDecision {
    pub rank: usize,
    /// Smallest retained σ over largest discarded σ (`inf` when nothing is
    /// discarded or the discarded part is exactly zero). For rank 0 this is
    /// the absolute floor over σ_max.
    pub gap_ratio: f64,
}

/// Rank = number of σ exceeding both `rel · σ_max` and `abs`.
pub fn decide_rank(sigma: &[f64], rel: f64, abs: f64) -> RankDecision {
    let smax = sigma.first().copied().unwrap_or(0.0);
    let cut = (rel * smax).max(abs);
    let rank = sigma.iter().take_while(|&&s| s > cut).count();
    let gap_ratio = if rank == sigma.len() {
        f64::INFINITY
    } else if rank == 0 {
        if smax == 0.0 {
            f64::INFINITY
        } else {
            abs / smax
        }
    } else if sigma[rank] == 0.0 {
        f64::INFINITY
    } else {
        sigma[rank - 1] / sigma[rank]
    };
    RankDecision { rank, gap_ratio }
}

/// Orthonormal basis of the nullspace, as columns.
pub fn nullspace(a: &CMat, rel: f64, abs: f64) -> (CMat, RankDecision, Vec<f64>) {
    let s = svd(a);
    let dec = decide_rank(&s.sigma, rel, abs);
    let cols = a.ncols();
    let basis = s.v.columns(dec.rank, cols - dec.rank).into_owned();
    (basis, dec, s.sigma)
}

/// Orthonormal basis of the column space.
pub fn column_basis(a: &CMat, rel: f64) -> (CMat, RankDecision) {
    let s = svd(a);
    let dec = decide_rank(&s.sigma, rel, 0.0);
    (s.u.columns(0, dec.rank).into_owned(), dec)
}

/// Greedy Gram–Schmidt completion of an orthonormal `q` (N×k) to ℂᴺ.
///
/// At each step the coordinate vector with the largest residual is taken
/// (lowest index on ties), so the result depends only on span(q).
pub fn orthonormal_complement(q: &CMat) -> CMat {
    let n = q.nrows();
    let k = q.ncols();
    let mut basis: Vec<CVec> = (0..k).map(|j| q.column(j).into_owned()).collect();
    let mut out = CMat::zeros(n, n.saturating_sub(k));
    for slot in 0..n.saturating_sub(k) {
        let mut best: Option<(f64, CVec)> = None;
        for e in 0..n {
            let mut v = CVec::zeros(n);
            v[e] = C64::new(1.0, 0.0);
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dotc(&v);
                    v.axpy(-c, b, C64::new(1.0, 0.0));
                }
            }
            let norm = v.norm();
            if best
                .as_ref()
                .is_none_or(|(bn, _)| norm > *bn * (1.0 + 1e-12))
            {
                best = Some((norm, v));
            }
        }
        let (norm, v) = best.expect("ambient dimension exceeds basis size");
        let v = v.unscale(norm);
        out.set_column(slot, &v);
        basis.push(v);
    }
    out
}

pub fn condition_number(a: &CMat) -> f64 {
    let s = svd(a);
    match (s.sigma.first(), s.sigma.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Minimum-norm least-squares solution of `a x = b` (columns of `b` solved independently).
pub fn lstsq(a: &CMat, b: &CMat, rel: f64) -> CMat {
    let s = svd(a);
    let dec = decide_rank(&s.sigma, rel, 0.0);
    let mut x = CMat::zeros(a.ncols(), b.ncols());
    for i in 0..dec.rank {
        let ui = s.u.column(i);
        let vi = s.v.column(i);
        for c in 0..b.ncols() {
            let coeff = ui.dotc(&b.column(c)) / C64::new(s.sigma[i], 0.0);
            let mut col = x.column_mut(c);
            col.axpy(coeff, &vi, C64::new(1.0, 0.0));
        }
    }
    x
}

/// Eigenvalues of a general complex square matrix.
pub fn eigenvalues(m: &CMat) -> Vec<C64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    faer::Mat::<C64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
        .eigenvalues()
        .expect("eigenvalue iteration converges")
}

pub fn projector(q: &CMat) -> CMat {
    q * q.adjoint()
}

/// Spectral-norm distance between the orthogonal projectors onto two
/// subspaces given by orthonormal bases. Equals sin of the largest principal angle.
pub fn subspace_distance(qa: &CMat, qb: &CMat) -> f64 {
    if qa.ncols() != qb.ncols() {
        return 1.0;
    }
    let d = projector(qa) - projector(qb);
    svd(&d).sigma.first().copied().unwrap_or(0.0)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> CMat {
    CMat::from_row_iterator(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)))
}

pub fn cvec_real(data: &[f64]) -> CVec {
    CVec::from_iterator(data.len(), data.iter().map(|&x| C64::new(x, 0.0)))
}

/// Columns stacked into one matrix.
pub fn hstack(cols: &[CVec], rows: usize) -> CMat {
    let mut m = CMat::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Matrices stacked vertically.
pub fn vstack(blocks: &[CMat], cols: usize) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut m = CMat::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        m.view_mut((r0, 0), (b.nrows(), cols)).copy_from(b);
        r0 += b.nrows();
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_of_repeated_complex_columns() {
        let v = [0.448, 0.501, -0.559, 0.178, -0.117, 0.434];
        let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let a = CMat::from_fn(6, 20, |i, _| C64::new(v[i] / nv, 0.0));
        let s = svd(&a);
        assert!((s.sigma[0] - 20f64.sqrt()).abs() < 1e-12);
        assert!(s.sigma[1] < 1e-12);
        assert_eq!(s.sigma.len(), 20);
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn svd_sorted_and_reconstructs() {
        let a = from_real(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let s = svd(&a);
        assert!(s.sigma[0] >= s.sigma[1]);
        let mut sig = CMat::zeros(2, 2);
        sig[(0, 0)] = c(s.sigma[0]);
        sig[(1, 1)] = c(s.sigma[1]);
        let rec = &s.u * sig * s.v.adjoint();
        assert!(max_abs(&(rec - a)) < 1e-12);
    }

    #[test]
    fn nullspace_of_wide_matrix() {
        let a = from_real(1, 3, &[1.0, 1.0, 0.0]);
        let (ns, dec, _) = nullspace(&a, 1e-10, 0.0);
        assert_eq!(dec.rank, 1);
        assert_eq!(ns.ncols(), 2);
        assert!(max_abs(&(&a * &ns)) < 1e-12);
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let q = from_real(3, 1, &[1.0, 0.0, 0.0]);
        let comp = orthonormal_complement(&q);
        assert_eq!(comp.ncols(), 2);
        let g = comp.adjoint() * &comp;
        assert!(max_abs(&(g - CMat::identity(2, 2))) < 1e-14);
        assert!(max_abs(&(q.adjoint() * &comp)) < 1e-14);
    }

    #[test]
    fn complex_eigenvalues_of_rotation() {
        let m = from_real(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let mut ev = eigenvalues(&m);
        ev.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((ev[0] - C64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((ev[1] - C64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn rank_gap_reporting() {
        let d = decide_rank(&[1.0, 0.5, 1e-12], 1e-8, 0.0);
        assert_eq!(d.rank, 2);
        assert!((d.gap_ratio - 0.5e12).abs() < 1.0);
        let z = decide_rank(&[0.0, 0.0], 1e-8, 1e-10);
        assert_eq!(z.rank, 0);
        assert!(z.gap_ratio.is_infinite());
    }

    #[test]
    fn subspace_distance_detects_rotation() {
        let a = from_real(2, 1, &[1.0, 0.0]);
        let b = from_real(2, 1, &[0.0, 1.0]);
        assert!((subspace_distance(&a, &b) - 1.0).abs() < 1e-12);
        assert!(subspace_distance(&a, &a) < 1e-14);
    }
}
