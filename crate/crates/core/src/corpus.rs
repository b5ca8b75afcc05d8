//! Seeded test geometries and an independent Gauss-rank oracle.
//!
//! Every random choice goes through one `ChaCha8Rng` seeded from the entry's
//! seed, so a corpus regenerates byte for byte.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{Flat, Verdict};
use crate::expr::{Expr, ExprMap};
use crate::frames::extract_leaf_data;
use crate::gauss::RankTolerance;
use crate::linalg::{column_basis, decide_rank, hstack, orthonormal_complement, svd};
use crate::pencil::{select_regular_pair, PencilTolerance};
use crate::ruled::RuledSpec;
use crate::serde_mat;
use crate::{CMat, CVec, Error, Result, C64};

/// Rejection budget for seeded constructions.
pub const REJECTION_BUDGET: usize = 256;
/// Relative pencil gap a seeded construction must reach at its probe point.
pub const PROBE_GAP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "map", rename_all = "snake_case")]
pub enum Geometry {
    Ruled(RuledSpec),
    Chart(ExprMap),
}

impl Geometry {
    /// A chart becomes a ruled spec without generators.
    pub fn to_ruled(&self) -> Result<RuledSpec> {
        match self {
            Geometry::Ruled(s) => Ok(s.clone()),
            Geometry::Chart(m) => RuledSpec::new(m.clone(), Vec::new()),
        }
    }

    /// Parametrization over all parameters (`(t, u)` for ruled specs).
    pub fn chart(&self) -> ExprMap {
        match self {
            Geometry::Ruled(s) => s.chart(),
            Geometry::Chart(m) => m.clone(),
        }
    }
}

/// Parameter box for base samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn cube(dim: usize, half: f64) -> Self {
        Domain {
            lo: vec![-half; dim],
            hi: vec![half; dim],
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn sample(&self, rng: &mut impl Rng, count: usize) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                self.lo
                    .iter()
                    .zip(&self.hi)
                    .map(|(&a, &b)| if a < b { rng.random_range(a..b) } else { a })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Cylinder,
    Cone,
    NonDegenerate,
    HypothesisFailure,
    Undetermined,
}

impl VerdictKind {
    pub fn of(v: &Verdict) -> Self {
        match v {
            Verdict::Cylinder => VerdictKind::Cylinder,
            Verdict::Cone => VerdictKind::Cone,
            Verdict::NonDegenerate => VerdictKind::NonDegenerate,
            Verdict::HypothesisFailure { .. } => VerdictKind::HypothesisFailure,
            Verdict::Undetermined { .. } => VerdictKind::Undetermined,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    /// Gauss rank.
    pub r: usize,
    pub l: usize,
    pub m: Option<usize>,
    pub verdict: VerdictKind,
    /// Substring the failure reason must contain.
    pub reason: Option<String>,
    #[serde(with = "serde_mat::opt_mat", default)]
    pub generator_span: Option<CMat>,
    pub vertex: Option<Flat>,
    /// Where each expected value comes from ("construction" or "oracle").
    pub derivation: BTreeMap<String, String>,
}

impl Expected {
    fn new(r: usize, l: usize, verdict: VerdictKind) -> Self {
        let mut derivation = BTreeMap::new();
        derivation.insert("r".into(), "construction".into());
        derivation.insert("verdict".into(), "construction".into());
        Expected {
            r,
            l,
            m: None,
            verdict,
            reason: None,
            generator_span: None,
            vertex: None,
            derivation,
        }
    }

    fn tag(mut self, field: &str, how: &str) -> Self {
        self.derivation.insert(field.into(), how.into());
        self
    }

    fn failing(mut self, reason: &str) -> Self {
        self.reason = Some(reason.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub name: String,
    pub seed: u64,
    pub geometry: Geometry,
    pub domain: Domain,
    pub expected: Expected,
}

impl CorpusEntry {
    /// Base samples drawn from the entry's own seed.
    pub fn samples(&self, count: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5a4d_91e7);
        self.domain.sample(&mut rng, count)
    }

    pub fn spec(&self) -> Result<RuledSpec> {
        self.geometry.to_ruled()
    }

    /// Chart sample points: each base sample at `t = 0` and off the base section.
    pub fn chart_samples(&self, count: usize) -> Result<Vec<Vec<f64>>> {
        match &self.geometry {
            Geometry::Ruled(s) => Ok(crate::classify::rank_sample_points(s, &self.samples(count))),
            Geometry::Chart(_) => Ok(self.samples(count)),
        }
    }
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn constant_map(vars: &[String], v: &CVec) -> Result<ExprMap> {
    ExprMap::new(
        vars.to_vec(),
        v.iter().map(|&z| Expr::constant(z)).collect(),
    )
}

fn unit(n: usize, i: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[i] = c(1.0);
    v
}

fn jacobian(map: &ExprMap, u: &[f64]) -> Result<CMat> {
    Ok(crate::jet::eval_jet2(map, u)?.d1)
}

fn orthonormal(cols: &[CVec], n: usize) -> CMat {
    if cols.is_empty() {
        return CMat::zeros(n, 0);
    }
    column_basis(&hstack(cols, n), 1e-12).0
}

/// Cylinder `A₀ = director`, `A_a = generator_dirs[a]`.
pub fn make_cylinder(
    name: &str,
    director: ExprMap,
    generator_dirs: Vec<CVec>,
    seed: u64,
    domain: Domain,
) -> Result<CorpusEntry> {
    let big_n = director.n_out();
    let (r, l) = (director.n_params(), generator_dirs.len());
    let mut cols = generator_dirs.clone();
    let jac = jacobian(&director, &domain.center())?;
    cols.extend(jac.column_iter().map(|c| c.into_owned()));
    if column_basis(&hstack(&cols, big_n), 1e-10).1.rank != r + l {
        return Err(Error::DependentGenerators);
    }
    let vars = director.vars().to_vec();
    let gens = generator_dirs
        .iter()
        .map(|g| constant_map(&vars, g))
        .collect::<Result<Vec<_>>>()?;
    let spec = RuledSpec::new(director, gens)?;
    let verdict = if r >= 2 {
        VerdictKind::Cylinder
    } else {
        VerdictKind::HypothesisFailure
    };
    let mut expected = Expected::new(r, l, verdict);
    if r < 2 {
        expected = expected.failing("r >= 2");
    }
    expected.generator_span = Some(orthonormal(&generator_dirs, big_n));
    let expected = expected.tag("generator_span", "construction");
    let mut entry = CorpusEntry {
        name: name.into(),
        seed,
        geometry: Geometry::Ruled(spec),
        domain,
        expected,
    };
    fill_m(&mut entry)?;
    Ok(entry)
}

/// Cone over `director` with vertex `vertex`: `A₀ = D`, `A₁ = D − p`, `A_b = w_b`.
pub fn make_cone(
    name: &str,
    vertex: Flat,
    director: ExprMap,
    seed: u64,
    domain: Domain,
) -> Result<CorpusEntry> {
    let big_n = director.n_out();
    let r = director.n_params();
    let l = vertex.dim() + 1;
    let vars = director.vars().to_vec();
    let center = domain.center();
    let d0 = director.eval(&center)?;
    let mut cols: Vec<CVec> = vec![&d0 - &vertex.point];
    cols.extend(vertex.directions.column_iter().map(|c| c.into_owned()));
    cols.extend(
        jacobian(&director, &center)?
            .column_iter()
            .map(|c| c.into_owned()),
    );
    if column_basis(&hstack(&cols, big_n), 1e-10).1.rank != r + l {
        return Err(Error::DegenerateJoin);
    }
    let a1 = ExprMap::new(
        vars.clone(),
        director
            .components()
            .iter()
            .zip(vertex.point.iter())
            .map(|(e, &p)| Expr::linear_combination([(c(1.0), e.clone()), (-p, Expr::real(1.0))]))
            .collect(),
    )?;
    let mut gens = vec![a1];
    for w in vertex.directions.column_iter() {
        gens.push(constant_map(&vars, &w.into_owned())?);
    }
    let spec = RuledSpec::new(director, gens)?;
    let mut expected = Expected::new(r, l, VerdictKind::Cone);
    expected.vertex = Some(vertex);
    let expected = expected.tag("vertex", "construction");
    let mut entry = CorpusEntry {
        name: name.into(),
        seed,
        geometry: Geometry::Ruled(spec),
        domain,
        expected,
    };
    fill_m(&mut entry)?;
    Ok(entry)
}

fn fill_m(entry: &mut CorpusEntry) -> Result<()> {
    let spec = entry.spec()?;
    let data = extract_leaf_data(&spec, &entry.domain.center(), &RankTolerance::default())?;
    entry.expected.m = Some(data.m);
    entry
        .expected
        .derivation
        .insert("m".into(), "oracle".into());
    Ok(())
}

/// `x₄ = x₁ cos x₃ + x₂ sin x₃` in ruled form over `(u, s)` with leaf
/// direction `(cos u, sin u, 0, 1)`.
pub fn sacksteder() -> CorpusEntry {
    let (u, s) = (Expr::var(0), Expr::var(1));
    let base = ExprMap::new(
        vec!["u".into(), "s".into()],
        vec![
            -(s.clone() * u.clone().sin()),
            s * u.clone().cos(),
            u.clone(),
            Expr::real(0.0),
        ],
    )
    .expect("fixed map");
    let dir = ExprMap::new(
        vec!["u".into(), "s".into()],
        vec![u.clone().cos(), u.sin(), Expr::real(0.0), Expr::real(1.0)],
    )
    .expect("fixed map");
    let spec = RuledSpec::new(base, vec![dir]).expect("fixed spec");
    let expected = Expected::new(2, 1, VerdictKind::HypothesisFailure)
        .failing("N − n ≥ 2")
        .tag("r", "oracle");
    let mut entry = CorpusEntry {
        name: "sacksteder".into(),
        seed: 0,
        geometry: Geometry::Ruled(spec),
        domain: Domain::cube(2, 1.0),
        expected,
    };
    fill_m(&mut entry).expect("regular base point");
    entry
}

fn poly_var_map(prefix: &str, comps: Vec<Expr>, k: usize) -> ExprMap {
    ExprMap::with_prefix(prefix, k, comps).expect("variables in range")
}

/// Director `(u, v, u²+v², uv)` padded with zeros to `big_n` coordinates.
pub fn veronese_director(big_n: usize, offset: &[f64]) -> ExprMap {
    let (u, v) = (Expr::var(0), Expr::var(1));
    let mut comps = vec![
        u.clone(),
        v.clone(),
        u.clone().pow(2) + v.clone().pow(2),
        u * v,
    ];
    for k in 4..big_n {
        comps.push(Expr::real(offset.get(k - 4).copied().unwrap_or(0.0)));
    }
    poly_var_map("u", comps, 2)
}

pub fn veronese_cylinder() -> CorpusEntry {
    make_cylinder(
        "veronese_cylinder",
        veronese_director(6, &[]),
        vec![unit(6, 4), unit(6, 5)],
        0,
        Domain::cube(2, 1.0),
    )
    .expect("independent generators")
}

pub fn veronese_cone() -> CorpusEntry {
    let vertex = Flat {
        point: CVec::zeros(6),
        directions: orthonormal(&[unit(6, 5)], 6),
    };
    make_cone(
        "veronese_cone",
        vertex,
        veronese_director(6, &[1.0]),
        0,
        Domain::cube(2, 1.0),
    )
    .expect("regular join")
}

/// Cylinder over the twisted cubic: r = 1, outside the classification's range.
pub fn curve_cylinder() -> CorpusEntry {
    let u = Expr::var(0);
    let director = poly_var_map(
        "u",
        vec![
            u.clone(),
            u.clone().pow(2),
            u.pow(3),
            Expr::real(0.0),
            Expr::real(0.0),
        ],
        1,
    );
    make_cylinder(
        "curve_cylinder",
        director,
        vec![unit(5, 3), unit(5, 4)],
        0,
        Domain::cube(1, 1.0),
    )
    .expect("independent generators")
}

/// Cylinder whose second forms `diag(1,0)` and `[[0,1],[1,0]]` give the
/// perfect-square hypercone `−ξ₂²`: no regular pair has distinct roots.
pub fn square_hypercone_cylinder() -> CorpusEntry {
    let (u, v) = (Expr::var(0), Expr::var(1));
    let director = poly_var_map(
        "u",
        vec![
            u.clone(),
            v.clone(),
            Expr::real(0.5) * u.clone().pow(2),
            u * v,
            Expr::real(0.0),
        ],
        2,
    );
    let mut e = make_cylinder(
        "square_hypercone",
        director,
        vec![unit(5, 4)],
        0,
        Domain::cube(2, 0.5),
    )
    .expect("independent generators");
    e.expected = Expected {
        verdict: VerdictKind::HypothesisFailure,
        ..e.expected
    }
    .failing("distinct")
    .tag("verdict", "oracle");
    e
}

/// Cylinder whose two normal forms satisfy `B″ = 2B′`, so only one is independent.
pub fn proportional_forms_cylinder() -> CorpusEntry {
    let (u, v) = (Expr::var(0), Expr::var(1));
    let q = u.clone().pow(2) + v.clone().pow(2);
    let director = poly_var_map(
        "u",
        vec![u, v, q.clone(), Expr::real(2.0) * q, Expr::real(0.0)],
        2,
    );
    let mut e = make_cylinder(
        "proportional_forms",
        director,
        vec![unit(5, 4)],
        0,
        Domain::cube(2, 1.0),
    )
    .expect("independent generators");
    e.expected = Expected {
        verdict: VerdictKind::HypothesisFailure,
        ..e.expected
    }
    .failing("m ≥ 2");
    e
}

/// Cylinder over a parabolic cylinder: declared r = 2 but Gauss rank 1.
pub fn degenerate_director_cylinder() -> CorpusEntry {
    let (u, v) = (Expr::var(0), Expr::var(1));
    let director = poly_var_map(
        "u",
        vec![u.clone(), v, u.pow(2), Expr::real(0.0), Expr::real(0.0)],
        2,
    );
    let mut e = make_cylinder(
        "degenerate_director",
        director,
        vec![unit(5, 3)],
        0,
        Domain::cube(2, 1.0),
    )
    .expect("independent generators");
    e.expected = Expected {
        r: 1,
        verdict: VerdictKind::HypothesisFailure,
        ..e.expected
    }
    .failing("r >= 2")
    .tag("r", "oracle");
    e
}

fn chart_entry(name: &str, comps: Vec<Expr>, r: usize, verdict: VerdictKind) -> CorpusEntry {
    let map = poly_var_map("u", comps, 2);
    let mut expected = Expected::new(r, 0, verdict);
    if verdict == VerdictKind::HypothesisFailure {
        expected = expected.failing("r >= 2");
    }
    CorpusEntry {
        name: name.into(),
        seed: 0,
        geometry: Geometry::Chart(map),
        domain: Domain::cube(2, 1.0),
        expected,
    }
}

pub fn plane() -> CorpusEntry {
    chart_entry(
        "plane",
        vec![Expr::var(0), Expr::var(1), Expr::real(0.0)],
        0,
        VerdictKind::HypothesisFailure,
    )
}

pub fn paraboloid() -> CorpusEntry {
    let (u, v) = (Expr::var(0), Expr::var(1));
    chart_entry(
        "paraboloid",
        vec![u.clone(), v.clone(), u.pow(2) + v.pow(2)],
        2,
        VerdictKind::NonDegenerate,
    )
}

fn rand_c(rng: &mut ChaCha8Rng) -> C64 {
    c(rng.random_range(-1.0..1.0))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> CVec {
    CVec::from_iterator(n, (0..n).map(|_| rand_c(rng)))
}

/// Random quadratic map of the variables `vars` (indices) into ℂᴺ.
fn random_quadratic(
    rng: &mut ChaCha8Rng,
    vars: &[usize],
    big_n: usize,
    offset: &CVec,
) -> Vec<Expr> {
    (0..big_n)
        .map(|k| {
            let mut terms = vec![(offset[k], Expr::real(1.0))];
            for &i in vars {
                terms.push((rand_c(rng), Expr::var(i)));
            }
            for (a, &i) in vars.iter().enumerate() {
                for &j in &vars[a..] {
                    terms.push((rand_c(rng), Expr::var(i) * Expr::var(j)));
                }
            }
            Expr::linear_combination(terms)
        })
        .collect()
}

fn random_director(rng: &mut ChaCha8Rng, r: usize, big_n: usize) -> ExprMap {
    let offset = random_vec(rng, big_n);
    let vars: Vec<usize> = (0..r).collect();
    poly_var_map("u", random_quadratic(rng, &vars, big_n, &offset), r)
}

/// Relative pencil gap at the probe point, if a regular pair exists.
fn probe_gap(spec: &RuledSpec, u: &[f64], seed: u64) -> Option<f64> {
    let tol = RankTolerance::default();
    let data = extract_leaf_data(spec, u, &tol).ok()?;
    if data.m < 2 {
        return None;
    }
    let pa = select_regular_pair(&data.leaf_forms(&tol), seed, &PencilTolerance::default()).ok()?;
    let big = pa.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Some(pa.min_gap / (1.0 + big))
}

fn rejection<T>(
    seed: u64,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> Result<Option<T>>,
) -> Result<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..REJECTION_BUDGET {
        if let Some(t) = draw(&mut rng)? {
            return Ok(t);
        }
    }
    Err(Error::BudgetExceeded(REJECTION_BUDGET))
}

pub fn random_cylinder(seed: u64, r: usize, l: usize, big_n: usize) -> Result<CorpusEntry> {
    let domain = Domain::cube(r, 0.5);
    rejection(seed, |rng| {
        let director = random_director(rng, r, big_n);
        let gens: Vec<CVec> = (0..l).map(|_| random_vec(rng, big_n)).collect();
        let name = format!("random_cylinder_s{seed}_r{r}_l{l}_n{big_n}");
        let entry = match make_cylinder(&name, director, gens, seed, domain.clone()) {
            Ok(e) => e,
            Err(Error::DependentGenerators) => return Ok(None),
            Err(e) => return Err(e),
        };
        let ok = probe_gap(&entry.spec()?, &domain.center(), seed).is_some_and(|g| g > PROBE_GAP);
        Ok(ok.then_some(entry))
    })
}

pub fn random_cone(seed: u64, r: usize, l: usize, big_n: usize) -> Result<CorpusEntry> {
    let domain = Domain::cube(r, 0.5);
    rejection(seed, |rng| {
        let dirs: Vec<CVec> = (1..l).map(|_| random_vec(rng, big_n)).collect();
        let vertex = Flat {
            point: random_vec(rng, big_n),
            directions: orthonormal(&dirs, big_n),
        };
        let mut director = random_director(rng, r, big_n);
        // keep the director well away from the vertex
        let shift = random_vec(rng, big_n) * c(2.0);
        director = ExprMap::new(
            director.vars().to_vec(),
            director
                .components()
                .iter()
                .zip(shift.iter())
                .map(|(e, &s)| {
                    Expr::linear_combination([(c(1.0), e.clone()), (s, Expr::real(1.0))])
                })
                .collect(),
        )?;
        let name = format!("random_cone_s{seed}_r{r}_l{l}_n{big_n}");
        let entry = match make_cone(&name, vertex, director, seed, domain.clone()) {
            Ok(e) => e,
            Err(Error::DegenerateJoin) => return Ok(None),
            Err(e) => return Err(e),
        };
        let ok = probe_gap(&entry.spec()?, &domain.center(), seed).is_some_and(|g| g > PROBE_GAP);
        Ok(ok.then_some(entry))
    })
}

/// Group sizes splitting r base parameters among `l + 1` join points.
pub fn join_groups(r: usize, l: usize) -> Vec<usize> {
    (0..=l)
        .map(|i| r / (l + 1) + usize::from(i < r % (l + 1)))
        .collect()
}

/// A join of `l + 1` moving points, each depending on its own group of base
/// parameters, followed by a random base reparametrization and ambient
/// affine map. Its focal hyperplanes are pairwise distinct and finite.
pub fn random_regular_example(seed: u64, r: usize, l: usize, big_n: usize) -> Result<CorpusEntry> {
    if big_n < r + l + 2 {
        return Err(Error::InvalidSpec(format!(
            "need N >= r + l + 2, got N = {big_n}"
        )));
    }
    let groups = join_groups(r, l);
    let domain = Domain::cube(r, 0.5);
    rejection(seed, |rng| {
        let mut next = 0;
        let points: Vec<Vec<Expr>> = groups
            .iter()
            .map(|&k| {
                let vars: Vec<usize> = (next..next + k).collect();
                next += k;
                let offset = random_vec(rng, big_n);
                random_quadratic(rng, &vars, big_n, &offset)
            })
            .collect();
        let weights: Vec<f64> = (0..=l).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let base: Vec<Expr> = (0..big_n)
            .map(|k| {
                Expr::linear_combination(
                    points
                        .iter()
                        .zip(&weights)
                        .map(|(p, w)| (c(w / total), p[k].clone())),
                )
            })
            .collect();
        let vars: Vec<String> = (1..=r).map(|i| format!("u{i}")).collect();
        let gens = (1..=l)
            .map(|a| {
                ExprMap::new(
                    vars.clone(),
                    (0..big_n)
                        .map(|k| {
                            Expr::linear_combination([
                                (c(1.0), points[a][k].clone()),
                                (c(-1.0), points[0][k].clone()),
                            ])
                        })
                        .collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = RuledSpec::new(ExprMap::new(vars.clone(), base)?, gens)?;
        let s: Vec<f64> = (0..r * r)
            .map(|i| f64::from(u8::from(i % (r + 1) == 0)) + 0.2 * rng.random_range(-1.0..1.0))
            .collect();
        let shift: Vec<f64> = (0..r).map(|_| 0.1 * rng.random_range(-1.0..1.0)).collect();
        let m =
            CMat::identity(big_n, big_n) + CMat::from_fn(big_n, big_n, |_, _| rand_c(rng) * c(0.3));
        let b = random_vec(rng, big_n);
        let spec = match spec
            .reparametrize_base(&s, &shift)
            .and_then(|s| s.affine_transform(&m, &b))
        {
            Ok(s) => s,
            Err(Error::InvalidSpec(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let Some(gap) = probe_gap(&spec, &domain.center(), seed) else {
            return Ok(None);
        };
        if gap <= PROBE_GAP {
            return Ok(None);
        }
        let mut entry = CorpusEntry {
            name: format!("random_regular_s{seed}_r{r}_l{l}_n{big_n}"),
            seed,
            geometry: Geometry::Ruled(spec),
            domain: domain.clone(),
            expected: Expected::new(r, l, VerdictKind::Undetermined),
        };
        fill_m(&mut entry)?;
        Ok(Some(entry))
    })
}

/// Homogeneous matrix sending a cone's vertex flat to the hyperplane at
/// infinity, and the generator span the image cylinder should have.
pub fn vertex_to_infinity(vertex: &Flat, toward: &CVec) -> (CMat, CMat) {
    let big_n = vertex.point.len();
    let w = &vertex.directions;
    let d = toward - &vertex.point;
    let mut phi = &d - w * (w.adjoint() * &d);
    phi.unscale_mut(phi.norm());
    // the covector (φ₀, φ̄ᵀ) vanishes on the vertex flat
    let phi_row: Vec<C64> = phi.iter().map(|z| z.conj()).collect();
    let phi0 = -phi_row
        .iter()
        .zip(vertex.point.iter())
        .map(|(a, b)| a * b)
        .sum::<C64>();
    let mut p = CMat::zeros(big_n + 1, big_n + 1);
    p[(0, 0)] = phi0;
    for j in 0..big_n {
        p[(0, j + 1)] = phi_row[j];
        p[(j + 1, j + 1)] = c(1.0);
        // shift chosen so that det P = 1
        p[(j + 1, 0)] = -vertex.point[j] - phi[j];
    }
    let mut dirs = vec![phi.clone()];
    dirs.extend(w.column_iter().map(|c| c.into_owned()));
    (p, orthonormal(&dirs, big_n))
}

/// Homogeneous matrix `x ↦ x / (1 + ψ·x)` with ψ in the generator span, and
/// the vertex flat of the image cone.
pub fn generators_to_finite(span: &CMat, psi_scale: f64, rng: &mut impl Rng) -> (CMat, Flat) {
    let big_n = span.nrows();
    let coeffs = CVec::from_iterator(
        span.ncols(),
        (0..span.ncols()).map(|_| c(rng.random_range(0.5..1.0))),
    );
    let psi_dir = span * coeffs;
    let psi = psi_dir.unscale(psi_dir.norm()) * c(psi_scale);
    let psi_row: Vec<C64> = psi.iter().map(|z| z.conj()).collect();
    let mut p = CMat::identity(big_n + 1, big_n + 1);
    for j in 0..big_n {
        p[(0, j + 1)] = psi_row[j];
    }
    // ψ̄ᵀ w* = 1 for w* = ψ / |ψ|²
    let w_star = psi.unscale(psi.norm_squared());
    let row = CMat::from_row_iterator(1, big_n, psi_row.iter().copied()) * span;
    let (null, _, _) = crate::linalg::nullspace(&row, 1e-12, 0.0);
    let dirs: Vec<CVec> = (0..null.ncols()).map(|j| span * null.column(j)).collect();
    (
        p,
        Flat {
            point: w_star,
            directions: orthonormal(&dirs, big_n),
        },
    )
}

/// Cone → cylinder under the vertex-to-infinity map.
pub fn cone_to_cylinder(cone: &CorpusEntry) -> Result<CorpusEntry> {
    let vertex = cone
        .expected
        .vertex
        .clone()
        .ok_or_else(|| Error::InvalidSpec("cone entry without a vertex".into()))?;
    let spec = cone.spec()?;
    let toward = spec.base.eval(&cone.domain.center())?;
    let (p, span) = vertex_to_infinity(&vertex, &toward);
    let image = spec.projective_transform(&p)?;
    let mut expected = Expected::new(image.r, image.l, VerdictKind::Cylinder);
    expected.generator_span = Some(span);
    let mut entry = CorpusEntry {
        name: format!("{}_dual", cone.name),
        seed: cone.seed,
        geometry: Geometry::Ruled(image),
        domain: cone.domain.clone(),
        expected: expected.tag("generator_span", "construction"),
    };
    fill_m(&mut entry)?;
    Ok(entry)
}

/// Cylinder → cone under a map that brings the generators' infinity to a finite flat.
pub fn cylinder_to_cone(cyl: &CorpusEntry) -> Result<CorpusEntry> {
    let span = cyl
        .expected
        .generator_span
        .clone()
        .ok_or_else(|| Error::InvalidSpec("cylinder entry without generators".into()))?;
    let spec = cyl.spec()?;
    let reach = cyl
        .samples(16)
        .iter()
        .chain(std::iter::once(&cyl.domain.center()))
        .map(|u| spec.base.eval(u).map(|x| x.norm()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(cyl.seed ^ 0xd0a1);
    let (p, vertex) = generators_to_finite(&span, 0.3 / (1.0 + reach), &mut rng);
    let image = spec.projective_transform(&p)?;
    let mut expected = Expected::new(image.r, image.l, VerdictKind::Cone);
    expected.vertex = Some(vertex);
    let mut entry = CorpusEntry {
        name: format!("{}_dual", cyl.name),
        seed: cyl.seed,
        geometry: Geometry::Ruled(image),
        domain: cyl.domain.clone(),
        expected: expected.tag("vertex", "construction"),
    };
    fill_m(&mut entry)?;
    Ok(entry)
}

/// Gauss rank from the finite-difference differential of the tangent projector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRank {
    pub rank: usize,
    pub sigmas: Vec<f64>,
    pub gap_ratio: f64,
}

/// Relative singular-value cut for the oracle.
pub const ORACLE_REL: f64 = 1e-5;
/// Absolute singular-value floor for the oracle.
pub const ORACLE_ABS: f64 = 1e-6;

fn fd_projector(map: &ExprMap, u: &[f64]) -> Result<CMat> {
    let h = 1e-6;
    let n = map.n_params();
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        let mut plus = u.to_vec();
        let mut minus = u.to_vec();
        plus[k] += h;
        minus[k] -= h;
        cols.push((map.eval(&plus)? - map.eval(&minus)?) / c(2.0 * h));
    }
    let (q, dec) = column_basis(&hstack(&cols, map.n_out()), 1e-7);
    if dec.rank < n {
        return Err(Error::NotImmersed { rank: dec.rank, n });
    }
    Ok(&q * q.adjoint())
}

/// Rank of `u ↦ P(u)` where `P` projects onto the tangent space, from
/// plain evaluations only. `h` is the projector step; the derivative is
/// Richardson-extrapolated from steps `h` and `h/2`.
pub fn brute_force_gauss_rank(map: &ExprMap, point: &[f64], h: f64) -> Result<OracleRank> {
    let n = map.n_params();
    let big_n = map.n_out();
    let central = |k: usize, step: f64| -> Result<CMat> {
        let mut plus = point.to_vec();
        let mut minus = point.to_vec();
        plus[k] += step;
        minus[k] -= step;
        Ok((fd_projector(map, &plus)? - fd_projector(map, &minus)?) / c(2.0 * step))
    };
    fd_projector(map, point)?;
    let mut stacked = CMat::zeros(big_n * big_n, n);
    for k in 0..n {
        let d = (central(k, 0.5 * h)? * c(4.0) - central(k, h)?) / c(3.0);
        for (i, z) in d.iter().enumerate() {
            stacked[(i, k)] = *z;
        }
    }
    let sigmas = svd(&stacked).sigma;
    let dec = decide_rank(&sigmas, ORACLE_REL, ORACLE_ABS);
    Ok(OracleRank {
        rank: dec.rank,
        sigmas,
        gap_ratio: dec.gap_ratio,
    })
}

/// Complement of a span, for tests and duality helpers.
pub fn complement(span: &CMat) -> CMat {
    orthonormal_complement(span)
}

/// The standard corpus for a master seed.
pub fn generate(seed: u64) -> Result<Vec<CorpusEntry>> {
    let sub = |k: u64| seed.wrapping_mul(1_000).wrapping_add(k);
    Ok(vec![
        veronese_cylinder(),
        veronese_cone(),
        sacksteder(),
        plane(),
        paraboloid(),
        curve_cylinder(),
        square_hypercone_cylinder(),
        proportional_forms_cylinder(),
        degenerate_director_cylinder(),
        random_cylinder(sub(1), 2, 2, 6)?,
        random_cylinder(sub(2), 3, 1, 6)?,
        random_cone(sub(3), 2, 2, 6)?,
        random_cone(sub(4), 3, 2, 7)?,
        random_regular_example(sub(5), 2, 2, 6)?,
        random_regular_example(sub(6), 3, 2, 7)?,
    ])
}
