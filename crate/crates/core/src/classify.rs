//! Cylinder / cone decision for a ruled tangentially degenerate submanifold.
//!
//! The pipeline checks the rank hypotheses, picks a regular pencil with
//! distinct roots on every sampled leaf, splits each focal polynomial into
//! hyperplanes and decides from their position: all at the leaf's infinity
//! gives a cylinder, all coincident at a finite hyperplane gives a cone.
//! Anything else is reported as undetermined.

use serde::{Deserialize, Serialize};

use crate::expr::{Expr, ExprMap};
use crate::focal::{
    at_infinity, factor_focal, focal_hypercone, focal_polynomial, spread, FocalPolynomial,
};
use crate::frames::{check_basic_equations, extract_leaf_data, LeafData};
use crate::gauss::{rank_profile, RankProfile, RankTolerance};
use crate::jet::eval_jet2;
use crate::linalg::{
    column_basis, hstack, lstsq, max_abs, nullspace, orthonormal_complement, subspace_distance, svd,
};
use crate::par::{self, ExecMode};
use crate::pencil::{select_regular_pair, PencilSelection, PencilTolerance};
use crate::ruled::RuledSpec;
use crate::serde_mat;
use crate::{CMat, CVec, Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub rank: RankTolerance,
    pub pencil: PencilTolerance,
    /// Angular distance below which focal covectors coincide.
    pub coincide: f64,
    /// Bound for basic-equation, diagonalization and factorization residuals.
    pub residual: f64,
    /// Bound for generator-span drift across samples.
    pub drift: f64,
    /// Bound for the vertex-flat fit, relative to `1 + |point|`.
    pub vertex: f64,
    pub seed: u64,
    pub mode: ExecMode,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            rank: RankTolerance::default(),
            pencil: PencilTolerance::default(),
            coincide: 1e-6,
            residual: 1e-8,
            drift: 1e-8,
            vertex: 1e-8,
            seed: 0,
            mode: ExecMode::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Cylinder,
    Cone,
    NonDegenerate,
    HypothesisFailure { reason: String },
    Undetermined { diagnostics: String },
}

impl Verdict {
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Cylinder | Verdict::Cone => 0,
            Verdict::HypothesisFailure { .. } => 2,
            Verdict::Undetermined { .. } => 3,
            Verdict::NonDegenerate => 4,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Cylinder => "cylinder",
            Verdict::Cone => "cone",
            Verdict::NonDegenerate => "non_degenerate",
            Verdict::HypothesisFailure { .. } => "hypothesis_failure",
            Verdict::Undetermined { .. } => "undetermined",
        }
    }

    fn failure(reason: impl Into<String>) -> Self {
        Verdict::HypothesisFailure {
            reason: reason.into(),
        }
    }
}

/// An affine flat `point + span(directions)`; directions are orthonormal columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flat {
    #[serde(with = "serde_mat::vector")]
    pub point: CVec,
    #[serde(with = "serde_mat::mat")]
    pub directions: CMat,
}

impl Flat {
    pub fn dim(&self) -> usize {
        self.directions.ncols()
    }

    fn normal_part(&self, v: &CVec) -> CVec {
        v - &self.directions * (self.directions.adjoint() * v)
    }

    pub fn distance_to_point(&self, x: &CVec) -> f64 {
        self.normal_part(&(x - &self.point)).norm()
    }

    /// Largest of the direction-space distance and the offset between the flats.
    pub fn distance(&self, other: &Flat) -> f64 {
        subspace_distance(&self.directions, &other.directions)
            .max(self.distance_to_point(&other.point))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorReport {
    #[serde(with = "serde_mat::vectors")]
    pub generators: Vec<CVec>,
    /// Orthonormal basis of the generator span.
    #[serde(with = "serde_mat::mat")]
    pub basis: CMat,
    pub drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectorReport {
    /// Director points in coordinates of the complement of the generator span.
    #[serde(with = "serde_mat::vectors")]
    pub points: Vec<CVec>,
    pub dim: usize,
    pub rank: usize,
    pub nondegenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexReport {
    pub flat: Flat,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PencilSummary {
    pub selection: PencilSelection,
    pub candidates_tried: usize,
    pub eigenvalues: Vec<C64>,
    pub min_gap: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LeafEvidence {
    pub u: Vec<f64>,
    pub m: Option<usize>,
    pub basic_residual: Option<f64>,
    pub normal_leak: Option<f64>,
    pub frame_condition: Option<f64>,
    /// Largest entry of `C_1..C_l`; zero exactly when the generator span is
    /// stationary to first order.
    pub c_norm: Option<f64>,
    pub focal_polynomial: Option<FocalPolynomial>,
    pub hypercone_squarefree: Option<bool>,
    pub pencil: Option<PencilSummary>,
    pub off_diag_residual: Option<f64>,
    pub focal_residual: Option<f64>,
    pub hyperplanes: Option<Vec<Vec<C64>>>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub rank_profile: RankProfile,
    pub leaves: Vec<LeafEvidence>,
    /// Informational `C_a = 0` test, filled for inputs outside the classification's range.
    pub cylinder_check: Option<bool>,
}

impl Evidence {
    fn max_of(&self, f: impl Fn(&LeafEvidence) -> Option<f64>) -> Option<f64> {
        self.leaves
            .iter()
            .filter_map(f)
            .fold(None, |acc, x| Some(acc.map_or(x, |a: f64| a.max(x))))
    }

    pub fn max_basic_residual(&self) -> Option<f64> {
        self.max_of(|l| l.basic_residual)
    }

    pub fn max_off_diag_residual(&self) -> Option<f64> {
        self.max_of(|l| l.off_diag_residual)
    }

    pub fn max_focal_residual(&self) -> Option<f64> {
        self.max_of(|l| l.focal_residual)
    }

    /// Largest residual of any kind that was computed.
    pub fn max_residual(&self) -> f64 {
        [
            self.max_basic_residual(),
            self.max_off_diag_residual(),
            self.max_focal_residual(),
        ]
        .into_iter()
        .flatten()
        .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub r: usize,
    pub l: usize,
    pub n: usize,
    pub ambient_dim: usize,
    pub m: Option<usize>,
    pub generators: Option<GeneratorReport>,
    pub vertex_flat: Option<VertexReport>,
    pub director: Option<DirectorReport>,
    pub evidence: Evidence,
    pub notes: Vec<String>,
}

/// Chart points used for the rank profile: each base sample at `t = 0` and
/// at a fixed off-base leaf point.
pub fn rank_sample_points(spec: &RuledSpec, samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let offset: Vec<f64> = (0..spec.l).map(|a| 0.2 + 0.1 * a as f64).collect();
    samples
        .iter()
        .flat_map(|u| {
            [
                spec.chart_point(u, &vec![0.0; spec.l]),
                spec.chart_point(u, &offset),
            ]
        })
        .collect()
}

fn leaf_stage(
    spec: &RuledSpec,
    u: &[f64],
    cfg: &ClassifyConfig,
) -> (Option<LeafData>, LeafEvidence) {
    let mut ev = LeafEvidence {
        u: u.to_vec(),
        ..Default::default()
    };
    match extract_leaf_data(spec, u, &cfg.rank) {
        Ok(data) => {
            ev.m = Some(data.m);
            ev.basic_residual = Some(check_basic_equations(&data, cfg.residual).residual);
            ev.normal_leak = Some(data.normal_leak);
            ev.frame_condition = Some(data.frame_condition);
            ev.c_norm = Some(data.c[1..].iter().map(max_abs).fold(0.0, f64::max));
            ev.focal_polynomial = Some(focal_polynomial(&data));
            ev.hypercone_squarefree = Some(focal_hypercone(&data.leaf_forms(&cfg.rank)).squarefree);
            (Some(data), ev)
        }
        Err(e) => {
            ev.error = Some(e.to_string());
            (None, ev)
        }
    }
}

fn pencil_stage(
    data: &LeafData,
    ev: &mut LeafEvidence,
    seed: u64,
    cfg: &ClassifyConfig,
) -> Result<()> {
    let pa = select_regular_pair(&data.leaf_forms(&cfg.rank), seed, &cfg.pencil)?;
    ev.pencil = Some(PencilSummary {
        selection: pa.selection.clone(),
        candidates_tried: pa.candidates_tried,
        eigenvalues: pa.eigenvalues.clone(),
        min_gap: pa.min_gap,
    });
    let f = factor_focal(data, &pa, cfg.residual);
    let f = match f {
        Ok(f) => f,
        Err(e) => {
            if let Ok(d) = crate::pencil::simultaneous_diagonalize(&pa, data, cfg.residual) {
                ev.off_diag_residual = Some(d.off_diag_residual);
            }
            return Err(e);
        }
    };
    ev.off_diag_residual = Some(f.diagonalization.off_diag_residual);
    ev.focal_residual = Some(f.residual);
    ev.hyperplanes = Some(f.hyperplanes);
    Ok(())
}

/// Run the full decision procedure on the leaves through `samples`.
pub fn classify(
    spec: &RuledSpec,
    samples: &[Vec<f64>],
    cfg: &ClassifyConfig,
) -> Result<Classification> {
    spec.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidSpec(
            "at least one base sample is required".into(),
        ));
    }
    if let Some(u) = samples.iter().find(|u| u.len() != spec.r) {
        return Err(Error::InvalidSpec(format!(
            "base sample has {} coordinates, expected {}",
            u.len(),
            spec.r
        )));
    }
    let (n, l, big_n) = (spec.n(), spec.l, spec.ambient_dim);
    let profile = rank_profile(
        &spec.chart(),
        &rank_sample_points(spec, samples),
        &cfg.rank,
        cfg.mode,
    );
    let staged = par::map(cfg.mode, samples, |u| leaf_stage(spec, u, cfg));
    let (datas, leaves): (Vec<Option<LeafData>>, Vec<LeafEvidence>) = staged.into_iter().unzip();
    let m = datas.iter().flatten().map(|d| d.m).min();

    let mut out = Classification {
        verdict: Verdict::Undetermined {
            diagnostics: String::new(),
        },
        r: profile.r.unwrap_or(0),
        l,
        n,
        ambient_dim: big_n,
        m,
        generators: None,
        vertex_flat: None,
        director: None,
        evidence: Evidence {
            rank_profile: profile,
            leaves,
            cylinder_check: None,
        },
        notes: Vec::new(),
    };
    if l < 2 {
        out.notes.push(format!(
            "l = {l}: l >= 2 is not enforced; the classification hypotheses only need l >= 1"
        ));
    }
    out.verdict = decide(spec, samples, cfg, &datas, &mut out);
    Ok(out)
}

fn decide(
    spec: &RuledSpec,
    samples: &[Vec<f64>],
    cfg: &ClassifyConfig,
    datas: &[Option<LeafData>],
    out: &mut Classification,
) -> Verdict {
    let profile = &out.evidence.rank_profile;
    let Some(r) = profile.r else {
        return Verdict::failure("rank could not be computed at any sample");
    };
    if !profile.constant {
        return Verdict::failure(format!(
            "Gauss rank not constant ({} of {} sample points disagree)",
            profile.violations.len(),
            profile.per_sample.len()
        ));
    }
    if !profile.determined {
        return Verdict::Undetermined {
            diagnostics: format!(
                "singular-value gap below {:.0e} at some sample",
                cfg.rank.min_gap
            ),
        };
    }
    let n = spec.n();
    if r == n {
        return Verdict::NonDegenerate;
    }
    if let Some(i) = datas.iter().position(Option::is_none) {
        let why = out.evidence.leaves[i].error.clone().unwrap_or_default();
        return Verdict::failure(format!("leaf analysis failed at sample {i}: {why}"));
    }
    let datas: Vec<&LeafData> = datas.iter().flatten().collect();
    let cylinder_check = datas
        .iter()
        .all(|d| d.c[1..].iter().all(|c| max_abs(c) <= cfg.residual));
    if r < 2 {
        out.evidence.cylinder_check = Some(cylinder_check);
        return Verdict::failure("r >= 2 required");
    }
    if spec.codim() < 2 {
        out.evidence.cylinder_check = Some(cylinder_check);
        return Verdict::failure(format!("N − n ≥ 2 violated (N − n = {})", spec.codim()));
    }
    if r != spec.r {
        return Verdict::failure(format!(
            "Gauss rank {r} differs from the declared base dimension {}",
            spec.r
        ));
    }
    for (i, d) in datas.iter().enumerate() {
        let hmax = d.h.iter().flatten().map(max_abs).fold(0.0, f64::max);
        let basic = out.evidence.leaves[i].basic_residual.unwrap_or(0.0);
        if basic > cfg.residual * (1.0 + hmax) || d.normal_leak > cfg.residual * (1.0 + d.scale) {
            return Verdict::failure(format!(
                "sample {i}: the declared leaves are not Gauss-map leaves (basic residual {basic:.2e}, normal leak {:.2e})",
                d.normal_leak
            ));
        }
    }
    if let Some(m) = out.m.filter(|&m| m < 2) {
        out.evidence.cylinder_check = Some(cylinder_check);
        return Verdict::failure(format!("m ≥ 2 violated (m = {m})"));
    }

    let seeds: Vec<(usize, &LeafData)> = datas.iter().copied().enumerate().collect();
    let staged = par::map(cfg.mode, &seeds, |&(i, d)| {
        let mut ev = out.evidence.leaves[i].clone();
        let res = pencil_stage(d, &mut ev, cfg.seed.wrapping_add(i as u64), cfg);
        (ev, res)
    });
    let mut first_err = None;
    for (i, (ev, res)) in staged.into_iter().enumerate() {
        out.evidence.leaves[i] = ev;
        if let (Err(e), None) = (res, &first_err) {
            first_err = Some((i, e));
        }
    }
    match first_err {
        Some((i, Error::NoRegularPair { tried })) => {
            return Verdict::failure(format!(
                "pencil eigenvalues not distinct at sample {i}: no regular pair with distinct roots among {tried} candidates"
            ))
        }
        Some((i, e)) => {
            return Verdict::Undetermined {
                diagnostics: format!("sample {i}: {e}"),
            }
        }
        None => {}
    }
    for (i, ev) in out.evidence.leaves.iter().enumerate() {
        let res = ev.focal_residual.unwrap_or(f64::INFINITY);
        if res > cfg.residual {
            return Verdict::Undetermined {
                diagnostics: format!("sample {i}: focal factorization residual {res:.2e}"),
            };
        }
    }

    let covs: Vec<&Vec<Vec<C64>>> = out
        .evidence
        .leaves
        .iter()
        .filter_map(|ev| ev.hyperplanes.as_ref())
        .collect();
    let all_infinite = covs
        .iter()
        .all(|hs| hs.iter().all(|h| at_infinity(h, cfg.coincide)));
    if all_infinite {
        match extract_generators(spec, samples, cfg.drift, cfg.rank.rel) {
            Ok(g) => {
                out.director = Some(director_variety(spec, samples, &g, &cfg.rank, cfg.mode));
                out.generators = Some(g);
            }
            Err(e) => out.notes.push(format!("generator recovery failed: {e}")),
        }
        return Verdict::Cylinder;
    }
    let coincident = covs
        .iter()
        .all(|hs| spread(hs) <= cfg.coincide && !at_infinity(&hs[0], cfg.coincide));
    if coincident {
        match recover_vertex(spec, samples, &covs, cfg.vertex) {
            Ok(v) => out.vertex_flat = Some(v),
            Err(e) => out.notes.push(format!("vertex recovery failed: {e}")),
        }
        return Verdict::Cone;
    }
    let worst = covs.iter().map(|hs| spread(hs)).fold(0.0, f64::max);
    Verdict::Undetermined {
        diagnostics: format!(
            "focal hyperplanes neither all at infinity nor coincident (largest spread {worst:.3e})"
        ),
    }
}

fn generator_matrix(spec: &RuledSpec, u: &[f64]) -> Result<CMat> {
    let cols = spec
        .generators
        .iter()
        .map(|g| g.eval(u))
        .collect::<Result<Vec<_>>>()?;
    Ok(hstack(&cols, spec.ambient_dim))
}

/// Constant generator vectors of a cylinder, aligned to the first sample.
pub fn extract_generators(
    spec: &RuledSpec,
    samples: &[Vec<f64>],
    tol: f64,
    rel: f64,
) -> Result<GeneratorReport> {
    if samples.is_empty() || spec.l == 0 {
        return Err(Error::InvalidSpec(
            "generator recovery needs samples and l >= 1".into(),
        ));
    }
    let mats = samples
        .iter()
        .map(|u| generator_matrix(spec, u))
        .collect::<Result<Vec<_>>>()?;
    let bases: Vec<CMat> = mats.iter().map(|a| column_basis(a, rel).0).collect();
    if bases.iter().any(|b| b.ncols() != spec.l) {
        return Err(Error::DependentGenerators);
    }
    let mut drift = 0.0f64;
    for i in 0..bases.len() {
        for j in i + 1..bases.len() {
            drift = drift.max(subspace_distance(&bases[i], &bases[j]));
        }
    }
    if drift > tol {
        return Err(Error::DriftTooLarge { drift });
    }
    let reference = &mats[0];
    let mut acc = CMat::zeros(spec.ambient_dim, spec.l);
    for a in &mats {
        // a = reference · g, so a · g⁻¹ is a copy of the reference vectors
        let g = lstsq(reference, a, rel);
        let inv = g.try_inverse().ok_or(Error::DependentGenerators)?;
        acc += a * inv;
    }
    acc /= C64::new(mats.len() as f64, 0.0);
    Ok(GeneratorReport {
        generators: (0..spec.l).map(|a| acc.column(a).into_owned()).collect(),
        basis: bases[0].clone(),
        drift,
    })
}

/// The base map projected along the generator span onto its orthogonal complement.
pub fn director_map(spec: &RuledSpec, generators: &GeneratorReport) -> ExprMap {
    let comp = orthonormal_complement(&generators.basis);
    let comps = (0..comp.ncols())
        .map(|k| {
            Expr::linear_combination(
                spec.base
                    .components()
                    .iter()
                    .enumerate()
                    .map(|(j, e)| (comp[(j, k)].conj(), e.clone())),
            )
        })
        .collect();
    ExprMap::new(spec.base.vars().to_vec(), comps).expect("same variables as the base")
}

pub fn director_variety(
    spec: &RuledSpec,
    samples: &[Vec<f64>],
    generators: &GeneratorReport,
    tol: &RankTolerance,
    mode: ExecMode,
) -> DirectorReport {
    let map = director_map(spec, generators);
    let points: Vec<CVec> = samples.iter().filter_map(|u| map.eval(u).ok()).collect();
    let dims: Vec<usize> = par::map(mode, samples, |u| {
        eval_jet2(&map, u).map_or(0, |j| column_basis(&j.d1, tol.rel).1.rank)
    });
    let profile = rank_profile(&map, samples, tol, mode);
    let dim = dims.iter().copied().min().unwrap_or(0);
    let rank = if profile.constant {
        profile.r.unwrap_or(0)
    } else {
        0
    };
    DirectorReport {
        points,
        dim,
        rank,
        nondegenerate: dim == spec.r && rank == spec.r,
    }
}

/// Rebuild a cylinder from recovered generators and the projected director.
pub fn resynthesize_cylinder(spec: &RuledSpec, generators: &GeneratorReport) -> Result<RuledSpec> {
    let comp = orthonormal_complement(&generators.basis);
    let director = director_map(spec, generators);
    let base = (0..spec.ambient_dim)
        .map(|k| {
            Expr::linear_combination(
                director
                    .components()
                    .iter()
                    .enumerate()
                    .map(|(j, e)| (comp[(k, j)], e.clone())),
            )
        })
        .collect();
    let gens = generators
        .generators
        .iter()
        .map(|g| {
            ExprMap::new(
                spec.base.vars().to_vec(),
                g.iter().map(|&z| Expr::constant(z)).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    RuledSpec::new(ExprMap::new(spec.base.vars().to_vec(), base)?, gens)
}

/// The (l−1)-flat `{1 + Σ c_a tᵃ = 0}` inside the leaf through `u`.
pub fn leaf_flat(spec: &RuledSpec, u: &[f64], cov: &[C64], rel: f64) -> Result<Flat> {
    let c: Vec<C64> = cov[1..].to_vec();
    let norm2: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    let base = spec.base.eval(u)?;
    let a = generator_matrix(spec, u)?;
    let t_star = CVec::from_iterator(c.len(), c.iter().map(|z| -z.conj() / norm2));
    let row = CMat::from_row_iterator(1, c.len(), c.iter().copied());
    let (dirs, _, _) = nullspace(&row, rel, 0.0);
    let point = base + &a * t_star;
    let directions = if dirs.ncols() == 0 {
        CMat::zeros(spec.ambient_dim, 0)
    } else {
        column_basis(&(&a * dirs), rel).0
    };
    Ok(Flat { point, directions })
}

/// Least-squares flat through the per-sample focal flats of a cone.
pub fn recover_vertex(
    spec: &RuledSpec,
    samples: &[Vec<f64>],
    hyperplanes: &[&Vec<Vec<C64>>],
    tol: f64,
) -> Result<VertexReport> {
    let flats = samples
        .iter()
        .zip(hyperplanes)
        .map(|(u, hs)| leaf_flat(spec, u, &hs[0], 1e-10))
        .collect::<Result<Vec<_>>>()?;
    fit_flats(&flats, tol)
}

pub fn fit_flats(flats: &[Flat], tol: f64) -> Result<VertexReport> {
    let big_n = flats[0].point.len();
    let k = flats[0].dim();
    let directions = if k == 0 {
        CMat::zeros(big_n, 0)
    } else {
        let all: Vec<CVec> = flats
            .iter()
            .flat_map(|f| {
                f.directions
                    .column_iter()
                    .map(|c| c.into_owned())
                    .collect::<Vec<_>>()
            })
            .collect();
        svd(&hstack(&all, big_n)).u.columns(0, k).into_owned()
    };
    let id = CMat::identity(big_n, big_n);
    let mut lhs = CMat::zeros(big_n, big_n);
    let mut rhs = CMat::zeros(big_n, 1);
    for f in flats {
        let q = id.clone() - &f.directions * f.directions.adjoint();
        rhs += &q * &f.point;
        lhs += q;
    }
    let mut point: CVec = lstsq(&lhs, &rhs, 1e-10).column(0).into_owned();
    // canonical representative: the point of the flat closest to the origin
    point -= &directions * (directions.adjoint() * &point);
    let flat = Flat { point, directions };
    let residual = flats.iter().map(|f| flat.distance(f)).fold(0.0, f64::max);
    if residual > tol * (1.0 + flat.point.norm()) {
        return Err(Error::InconsistentVertex { residual });
    }
    Ok(VertexReport { flat, residual })
}
