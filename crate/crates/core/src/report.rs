//! Run configuration, report documents, corpus persistence and input loading.
//!
//! All documents are written with `serde_json` in a fixed field order, so
//! identical inputs and seeds give identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classify::{classify, Classification, ClassifyConfig};
use crate::corpus::{CorpusEntry, Domain, Expected, Geometry, VerdictKind};
use crate::focal::{
    factor_focal, focal_hypercone, focal_polynomial, FocalDecomposition, FocalHypercone,
    FocalPolynomial,
};
use crate::frames::{check_basic_equations, extract_leaf_data, BasicEquationsReport, LeafData};
use crate::gauss::{rank_profile, RankProfile};
use crate::par;
use crate::pencil::{select_regular_pair, PencilAnalysis};
use crate::ruled::RuledSpec;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Default number of base samples per run.
pub const DEFAULT_SAMPLES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub input: Option<String>,
    pub output: Option<String>,
    pub samples: usize,
    pub seed: u64,
    pub tolerances: ClassifyConfig,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        RunConfig {
            command: command.into(),
            input: None,
            output: None,
            samples: DEFAULT_SAMPLES,
            seed: 0,
            tolerances: ClassifyConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        let named = [
            ("tol-rank", t.rank.rel),
            ("rank abs", t.rank.abs),
            ("tol-gap", t.pencil.gap),
            ("tol-coincide", t.coincide),
            ("residual", t.residual),
            ("drift", t.drift),
            ("vertex", t.vertex),
        ];
        for (name, v) in named {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "tolerance {name} must be positive, got {v}"
                )));
            }
        }
        if self.samples == 0 {
            return Err(Error::InvalidSpec("sample count must be at least 1".into()));
        }
        Ok(())
    }

    /// Classification settings with the run seed.
    pub fn classify_config(&self) -> ClassifyConfig {
        ClassifyConfig {
            seed: self.seed,
            ..self.tolerances
        }
    }
}

/// A parsed input file.
#[derive(Clone, Debug, PartialEq)]
pub struct Input {
    pub name: Option<String>,
    pub geometry: Geometry,
    pub domain: Option<Domain>,
    pub entry: Option<CorpusEntry>,
}

impl Input {
    pub fn spec(&self) -> Result<RuledSpec> {
        self.geometry.to_ruled()
    }

    /// Base samples: a corpus entry's own samples, otherwise draws from the
    /// domain (default `[-0.5, 0.5]ʳ`) seeded by `seed`.
    pub fn samples(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if let Some(e) = &self.entry {
            return Ok(e.samples(count));
        }
        let r = self.spec()?.r;
        let domain = self.domain.clone().unwrap_or_else(|| Domain::cube(r, 0.5));
        if domain.lo.len() != r || domain.hi.len() != r {
            return Err(Error::InvalidSpec(format!(
                "domain must have {r} coordinates"
            )));
        }
        Ok(domain.sample(&mut ChaCha8Rng::seed_from_u64(seed), count))
    }
}

#[derive(Deserialize)]
struct GeometryFile {
    #[serde(flatten)]
    geometry: Geometry,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    domain: Option<Domain>,
}

/// Accepts a corpus entry, a tagged geometry (`{"kind": "ruled"|"chart", "map": …}`,
/// optionally with `name` and `domain`), or a bare ruled spec.
pub fn parse_input(text: &str) -> Result<Input> {
    let value: Value = serde_json::from_str(text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::InvalidSpec("input must be a JSON object".into()))?;
    // re-parse from text so structural errors keep their line and column
    let input = if obj.contains_key("geometry") {
        let e: CorpusEntry = serde_json::from_str(text)?;
        Input {
            name: Some(e.name.clone()),
            geometry: e.geometry.clone(),
            domain: Some(e.domain.clone()),
            entry: Some(e),
        }
    } else if obj.contains_key("kind") {
        let g: GeometryFile = serde_json::from_str(text)?;
        Input {
            name: g.name,
            geometry: g.geometry,
            domain: g.domain,
            entry: None,
        }
    } else {
        let s: RuledSpec = serde_json::from_str(text)?;
        Input {
            name: None,
            geometry: Geometry::Ruled(s),
            domain: None,
            entry: None,
        }
    };
    input.spec()?.validate()?;
    Ok(input)
}

pub fn read_input(path: &Path) -> Result<Input> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_input(&text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafReport {
    pub u: Vec<f64>,
    pub leaf: Option<LeafData>,
    pub basic_equations: Option<BasicEquationsReport>,
    pub focal_polynomial: Option<FocalPolynomial>,
    pub hypercone: Option<FocalHypercone>,
    pub pencil: Option<PencilAnalysis>,
    pub decomposition: Option<FocalDecomposition>,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub schema_version: u32,
    pub config: RunConfig,
    pub name: Option<String>,
    pub r: usize,
    pub l: usize,
    pub ambient_dim: usize,
    pub rank_profile: RankProfile,
    pub leaves: Vec<LeafReport>,
}

fn analyze_leaf(spec: &RuledSpec, u: &[f64], index: usize, cfg: &ClassifyConfig) -> LeafReport {
    let mut rep = LeafReport {
        u: u.to_vec(),
        leaf: None,
        basic_equations: None,
        focal_polynomial: None,
        hypercone: None,
        pencil: None,
        decomposition: None,
        errors: Vec::new(),
    };
    let data = match extract_leaf_data(spec, u, &cfg.rank) {
        Ok(d) => d,
        Err(e) => {
            rep.errors.push(e.to_string());
            return rep;
        }
    };
    rep.basic_equations = Some(check_basic_equations(&data, cfg.residual));
    rep.focal_polynomial = Some(focal_polynomial(&data));
    let forms = data.leaf_forms(&cfg.rank);
    rep.hypercone = Some(focal_hypercone(&forms));
    match select_regular_pair(&forms, cfg.seed.wrapping_add(index as u64), &cfg.pencil) {
        Ok(pa) => {
            match factor_focal(&data, &pa, cfg.residual) {
                Ok(f) => rep.decomposition = Some(f),
                Err(e) => rep.errors.push(e.to_string()),
            }
            rep.pencil = Some(pa);
        }
        Err(e) => rep.errors.push(e.to_string()),
    }
    rep.leaf = Some(data);
    rep
}

/// Rank profile plus per-leaf frames, pencils and focal objects.
pub fn analyze(input: &Input, cfg: &RunConfig) -> Result<AnalyzeReport> {
    cfg.validate()?;
    let spec = input.spec()?;
    let samples = input.samples(cfg.samples, cfg.seed)?;
    let ccfg = cfg.classify_config();
    let points = crate::classify::rank_sample_points(&spec, &samples);
    let profile = rank_profile(&spec.chart(), &points, &ccfg.rank, ccfg.mode);
    let indexed: Vec<(usize, &Vec<f64>)> = samples.iter().enumerate().collect();
    let leaves = par::map(ccfg.mode, &indexed, |&(i, u)| {
        analyze_leaf(&spec, u, i, &ccfg)
    });
    Ok(AnalyzeReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        name: input.name.clone(),
        r: spec.r,
        l: spec.l,
        ambient_dim: spec.ambient_dim,
        rank_profile: profile,
        leaves,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictDocument {
    pub schema_version: u32,
    pub config: RunConfig,
    pub name: Option<String>,
    pub exit_code: i32,
    pub classification: Classification,
}

pub fn classify_input(input: &Input, cfg: &RunConfig) -> Result<VerdictDocument> {
    cfg.validate()?;
    let spec = input.spec()?;
    let samples = input.samples(cfg.samples, cfg.seed)?;
    let classification = classify(&spec, &samples, &cfg.classify_config())?;
    Ok(VerdictDocument {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        name: input.name.clone(),
        exit_code: classification.verdict.exit_code(),
        classification,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub file: String,
    pub seed: u64,
    pub expected: Expected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn manifest(seed: u64, entries: &[CorpusEntry]) -> Manifest {
    Manifest {
        schema_version: SCHEMA_VERSION,
        seed,
        entries: entries
            .iter()
            .map(|e| ManifestEntry {
                name: e.name.clone(),
                file: format!("{}.json", e.name),
                seed: e.seed,
                expected: e.expected.clone(),
            })
            .collect(),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write the manifest and one JSON file per entry; returns the paths written.
pub fn write_corpus(
    dir: &Path,
    seed: u64,
    entries: &[CorpusEntry],
) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(entries.len() + 1);
    let m = manifest(seed, entries);
    for (e, me) in entries.iter().zip(&m.entries) {
        let path = dir.join(&me.file);
        write(&path, &to_json(e)?)?;
        written.push(path);
    }
    let path = dir.join(MANIFEST_FILE);
    write(&path, &to_json(&m)?)?;
    written.push(path);
    Ok(written)
}

pub fn read_corpus(dir: &Path) -> Result<(Manifest, Vec<CorpusEntry>)> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let m: Manifest = serde_json::from_str(&text)?;
    let entries = m
        .entries
        .iter()
        .map(|me| {
            let path = dir.join(&me.file);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Ok(serde_json::from_str(&text)?)
        })
        .collect::<Result<Vec<CorpusEntry>>>()?;
    Ok((m, entries))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryCheck {
    pub name: String,
    pub r: usize,
    pub l: usize,
    pub m: Option<usize>,
    pub verdict: VerdictKind,
    pub max_residual: f64,
    pub mismatches: Vec<String>,
}

impl EntryCheck {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Classify one entry and compare every expectation.
pub fn verify_entry(entry: &CorpusEntry, cfg: &RunConfig) -> Result<EntryCheck> {
    let input = Input {
        name: Some(entry.name.clone()),
        geometry: entry.geometry.clone(),
        domain: Some(entry.domain.clone()),
        entry: Some(entry.clone()),
    };
    let doc = classify_input(&input, cfg)?;
    let c = &doc.classification;
    let x = &entry.expected;
    let kind = VerdictKind::of(&c.verdict);
    let mut mismatches = Vec::new();
    if c.r != x.r {
        mismatches.push(format!("r: expected {}, got {}", x.r, c.r));
    }
    if c.l != x.l {
        mismatches.push(format!("l: expected {}, got {}", x.l, c.l));
    }
    if let (Some(em), Some(gm)) = (x.m, c.m) {
        if em != gm {
            mismatches.push(format!("m: expected {em}, got {gm}"));
        }
    }
    if kind != x.verdict {
        mismatches.push(format!(
            "verdict: expected {:?}, got {:?}",
            x.verdict, c.verdict
        ));
    }
    if let (Some(reason), crate::classify::Verdict::HypothesisFailure { reason: got }) =
        (&x.reason, &c.verdict)
    {
        if !got.contains(reason.as_str()) {
            mismatches.push(format!(
                "failure reason `{got}` does not mention `{reason}`"
            ));
        }
    }
    let tol = cfg.tolerances.drift.max(cfg.tolerances.vertex);
    if let Some(span) = &x.generator_span {
        match &c.generators {
            Some(g) => {
                let d = crate::linalg::subspace_distance(span, &g.basis);
                if d > tol {
                    mismatches.push(format!("generator span off by {d:.3e}"));
                }
            }
            None if kind == VerdictKind::Cylinder => {
                mismatches.push("generators not recovered".into())
            }
            None => {}
        }
    }
    if let Some(v) = &x.vertex {
        match &c.vertex_flat {
            Some(got) => {
                let d = v.distance(&got.flat);
                if d > tol * (1.0 + v.point.norm()) {
                    mismatches.push(format!("vertex flat off by {d:.3e}"));
                }
            }
            None => mismatches.push("vertex not recovered".into()),
        }
    }
    Ok(EntryCheck {
        name: entry.name.clone(),
        r: c.r,
        l: c.l,
        m: c.m,
        verdict: kind,
        max_residual: c.evidence.max_residual(),
        mismatches,
    })
}

pub fn verify_corpus(entries: &[CorpusEntry], cfg: &RunConfig) -> Result<Vec<EntryCheck>> {
    par::map(cfg.tolerances.mode, entries, |e| verify_entry(e, cfg))
        .into_iter()
        .collect()
}

fn verdict_label(v: VerdictKind) -> &'static str {
    match v {
        VerdictKind::Cylinder => "cylinder",
        VerdictKind::Cone => "cone",
        VerdictKind::NonDegenerate => "non_degenerate",
        VerdictKind::HypothesisFailure => "hypothesis_failure",
        VerdictKind::Undetermined => "undetermined",
    }
}

pub const CSV_HEADER: &str = "name,r,l,m,verdict,max_residual";

pub fn csv_row(
    name: &str,
    r: usize,
    l: usize,
    m: Option<usize>,
    verdict: VerdictKind,
    max_residual: f64,
) -> String {
    let m = m.map_or(String::new(), |m| m.to_string());
    format!(
        "{name},{r},{l},{m},{},{max_residual:e}",
        verdict_label(verdict)
    )
}

pub fn csv_summary(checks: &[EntryCheck]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in checks {
        let _ = writeln!(
            out,
            "{}",
            csv_row(&c.name, c.r, c.l, c.m, c.verdict, c.max_residual)
        );
    }
    out
}

pub fn verdict_csv(doc: &VerdictDocument) -> String {
    let c = &doc.classification;
    format!(
        "{CSV_HEADER}\n{}\n",
        csv_row(
            doc.name.as_deref().unwrap_or("input"),
            c.r,
            c.l,
            c.m,
            VerdictKind::of(&c.verdict),
            c.evidence.max_residual()
        )
    )
}
