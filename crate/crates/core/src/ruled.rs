//! Leaf-adapted parametrizations `f(u, t) = A₀(u) + Σ tᵃ A_a(u)`.
//!
//! The chart built by [`RuledSpec::chart`] orders its parameters as
//! `(t¹..tˡ, u¹..uʳ)`, generators first.

use serde::{Deserialize, Serialize};

use crate::expr::{Expr, ExprMap};
use crate::{CMat, CVec, Error, Result, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuledSpec {
    /// Base dimension.
    pub r: usize,
    /// Generator dimension.
    pub l: usize,
    /// Ambient dimension N.
    pub ambient_dim: usize,
    /// `A₀(u)`: r parameters to N coordinates.
    pub base: ExprMap,
    /// `A_a(u)`, a = 1..l, each r parameters to N coordinates.
    pub generators: Vec<ExprMap>,
}

impl RuledSpec {
    pub fn new(base: ExprMap, generators: Vec<ExprMap>) -> Result<Self> {
        let spec = RuledSpec {
            r: base.n_params(),
            l: generators.len(),
            ambient_dim: base.n_out(),
            base,
            generators,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.base.n_params() != self.r {
            return bad(format!(
                "base has {} parameters, r = {}",
                self.base.n_params(),
                self.r
            ));
        }
        if self.base.n_out() != self.ambient_dim {
            return bad(format!(
                "base has {} components, N = {}",
                self.base.n_out(),
                self.ambient_dim
            ));
        }
        if self.generators.len() != self.l {
            return bad(format!(
                "{} generator maps, l = {}",
                self.generators.len(),
                self.l
            ));
        }
        for (a, g) in self.generators.iter().enumerate() {
            if g.n_params() != self.r || g.n_out() != self.ambient_dim {
                return bad(format!(
                    "generator {} maps {} -> {}, expected {} -> {}",
                    a + 1,
                    g.n_params(),
                    g.n_out(),
                    self.r,
                    self.ambient_dim
                ));
            }
        }
        if self.r == 0 {
            return bad("base dimension r must be at least 1".into());
        }
        if self.n() + 1 > self.ambient_dim {
            return bad(format!(
                "n = l + r = {} must not exceed N - 1 = {}",
                self.n(),
                self.ambient_dim.saturating_sub(1)
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.l + self.r
    }

    pub fn codim(&self) -> usize {
        self.ambient_dim - self.n()
    }

    /// The full chart over `(t, u)`.
    pub fn chart(&self) -> ExprMap {
        let l = self.l;
        let mut vars: Vec<String> = (1..=l)
            .map(|a| {
                let name = format!("t{a}");
                if self.base.vars().contains(&name) {
                    format!("leaf_t{a}")
                } else {
                    name
                }
            })
            .collect();
        vars.extend(self.base.vars().iter().cloned());
        let shift = |e: &Expr| e.substitute(&|i| Expr::var(i + l));
        let comps = (0..self.ambient_dim)
            .map(|k| {
                let mut terms = vec![shift(&self.base.components()[k])];
                for (a, g) in self.generators.iter().enumerate() {
                    let gk = &g.components()[k];
                    if !gk.is_zero() {
                        terms.push(Expr::Mul(vec![Expr::var(a), shift(gk)]));
                    }
                }
                if terms.len() == 1 {
                    terms.pop().unwrap()
                } else {
                    Expr::Add(terms)
                }
            })
            .collect();
        ExprMap::new(vars, comps).expect("chart variables are declared")
    }

    /// Chart coordinates of the leaf point `A₀(u) + Σ tᵃ A_a(u)`.
    pub fn chart_point(&self, u: &[f64], t: &[f64]) -> Vec<f64> {
        let mut p = t.to_vec();
        p.extend_from_slice(u);
        p
    }

    /// Affine point of the leaf through `u` with leaf coordinates `t`.
    pub fn point(&self, u: &[f64], t: &[f64]) -> Result<CVec> {
        let mut x = self.base.eval(u)?;
        for (a, g) in self.generators.iter().enumerate() {
            x += g.eval(u)? * C64::new(t[a], 0.0);
        }
        Ok(x)
    }

    /// Image under the affine map `x ↦ M x + b`, M of size N'×N.
    pub fn affine_transform(&self, m: &CMat, b: &CVec) -> Result<RuledSpec> {
        if m.ncols() != self.ambient_dim || b.len() != m.nrows() {
            return Err(Error::InvalidSpec("affine map has the wrong shape".into()));
        }
        let apply = |comps: &[Expr], shift: Option<&CVec>| -> Vec<Expr> {
            (0..m.nrows())
                .map(|i| {
                    let mut terms: Vec<(C64, Expr)> = comps
                        .iter()
                        .enumerate()
                        .map(|(j, e)| (m[(i, j)], e.clone()))
                        .collect();
                    if let Some(b) = shift {
                        terms.push((C64::new(1.0, 0.0), Expr::constant(b[i])));
                    }
                    Expr::linear_combination(terms)
                })
                .collect()
        };
        let base = ExprMap::new(
            self.base.vars().to_vec(),
            apply(self.base.components(), Some(b)),
        )?;
        let generators = self
            .generators
            .iter()
            .map(|g| ExprMap::new(g.vars().to_vec(), apply(g.components(), None)))
            .collect::<Result<Vec<_>>>()?;
        RuledSpec::new(base, generators)
    }

    /// Image under the projective map with homogeneous matrix `p` ((N+1)×(N+1)),
    /// acting on `(x⁰, x)` with affine points at `x⁰ = 1`.
    ///
    /// The base point must stay finite; leaf directions are re-derived so the
    /// transformed leaves are the images of the original ones.
    pub fn projective_transform(&self, p: &CMat) -> Result<RuledSpec> {
        let big_n = self.ambient_dim;
        if p.nrows() != big_n + 1 || p.ncols() != big_n + 1 {
            return Err(Error::InvalidSpec(
                "projective map has the wrong shape".into(),
            ));
        }
        // Homogeneous row `row` applied to (w, comps).
        let hom = |row: usize, w: C64, comps: &[Expr]| -> Expr {
            let mut terms = vec![(p[(row, 0)] * w, Expr::real(1.0))];
            terms.extend(
                comps
                    .iter()
                    .enumerate()
                    .map(|(j, e)| (p[(row, j + 1)], e.clone())),
            );
            Expr::linear_combination(terms)
        };
        let zero = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let s0 = hom(0, one, self.base.components());
        let base_comps: Vec<Expr> = (0..big_n)
            .map(|k| hom(k + 1, one, self.base.components()) / s0.clone())
            .collect();
        let mut generators = Vec::with_capacity(self.l);
        for g in &self.generators {
            let sa = hom(0, zero, g.components());
            let comps = (0..big_n)
                .map(|k| {
                    let ya = hom(k + 1, zero, g.components());
                    if sa.is_zero() {
                        ya
                    } else {
                        ya - sa.clone() * base_comps[k].clone()
                    }
                })
                .collect();
            generators.push(ExprMap::new(g.vars().to_vec(), comps)?);
        }
        let base = ExprMap::new(self.base.vars().to_vec(), base_comps)?;
        RuledSpec::new(base, generators)
    }

    /// Substitute `u = S w + c` (S is r×r, row-major).
    pub fn reparametrize_base(&self, s: &[f64], c: &[f64]) -> Result<RuledSpec> {
        let r = self.r;
        if s.len() != r * r || c.len() != r {
            return Err(Error::InvalidSpec(
                "base reparametrization has the wrong shape".into(),
            ));
        }
        let sub = |i: usize| {
            let mut terms: Vec<(C64, Expr)> = (0..r)
                .map(|j| (C64::new(s[i * r + j], 0.0), Expr::var(j)))
                .collect();
            terms.push((C64::new(1.0, 0.0), Expr::real(c[i])));
            Expr::linear_combination(terms)
        };
        let map = |m: &ExprMap| {
            ExprMap::new(
                m.vars().to_vec(),
                m.components().iter().map(|e| e.substitute(&sub)).collect(),
            )
        };
        RuledSpec::new(
            map(&self.base)?,
            self.generators
                .iter()
                .map(map)
                .collect::<Result<Vec<_>>>()?,
        )
    }

    /// Affine change of leaf coordinates: `A₀' = A₀ + Σ λᵃ A_a`, `A_a' = Σ_b G_ab A_b`.
    pub fn change_leaf_coordinates(&self, lambda: &[C64], g: &CMat) -> Result<RuledSpec> {
        let l = self.l;
        if lambda.len() != l || g.nrows() != l || g.ncols() != l {
            return Err(Error::InvalidSpec(
                "leaf coordinate change has the wrong shape".into(),
            ));
        }
        let one = C64::new(1.0, 0.0);
        let comps_of = |k: usize| -> Vec<Expr> {
            self.generators
                .iter()
                .map(|m| m.components()[k].clone())
                .collect()
        };
        let base_comps = (0..self.ambient_dim)
            .map(|k| {
                let mut terms = vec![(one, self.base.components()[k].clone())];
                terms.extend(lambda.iter().copied().zip(comps_of(k)));
                Expr::linear_combination(terms)
            })
            .collect();
        let generators = (0..l)
            .map(|a| {
                let comps = (0..self.ambient_dim)
                    .map(|k| {
                        Expr::linear_combination(
                            (0..l).map(|b| (g[(a, b)], comps_of(k)[b].clone())),
                        )
                    })
                    .collect();
                ExprMap::new(self.base.vars().to_vec(), comps)
            })
            .collect::<Result<Vec<_>>>()?;
        RuledSpec::new(
            ExprMap::new(self.base.vars().to_vec(), base_comps)?,
            generators,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cvec_real, from_real};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn veronese_cylinder() -> RuledSpec {
        let (u, v) = (Expr::var(0), Expr::var(1));
        let base = ExprMap::with_prefix(
            "u",
            2,
            vec![
                u.clone(),
                v.clone(),
                u.clone().pow(2) + v.clone().pow(2),
                u * v,
                Expr::real(0.0),
                Expr::real(0.0),
            ],
        )
        .unwrap();
        let e = |i: usize| {
            ExprMap::with_prefix(
                "u",
                2,
                (0..6)
                    .map(|k| Expr::real(if k == i { 1.0 } else { 0.0 }))
                    .collect(),
            )
            .unwrap()
        };
        RuledSpec::new(base, vec![e(4), e(5)]).unwrap()
    }

    #[test]
    fn dimensions_and_chart() {
        let s = veronese_cylinder();
        assert_eq!((s.r, s.l, s.n(), s.ambient_dim, s.codim()), (2, 2, 4, 6, 2));
        let chart = s.chart();
        assert_eq!(chart.vars(), &["t1", "t2", "u1", "u2"]);
        let x = chart.eval(&[0.5, -1.0, 1.0, 2.0]).unwrap();
        let expected = cvec_real(&[1.0, 2.0, 5.0, 2.0, 0.5, -1.0]);
        assert!((x - expected).camax() < 1e-15);
    }

    #[test]
    fn rejects_codimension_zero() {
        let base = ExprMap::with_prefix("u", 1, vec![Expr::var(0), Expr::real(0.0)]).unwrap();
        let g = ExprMap::with_prefix("u", 1, vec![Expr::real(0.0), Expr::real(1.0)]).unwrap();
        assert!(matches!(
            RuledSpec::new(base, vec![g]),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn affine_transform_moves_points() {
        let s = veronese_cylinder();
        let m = CMat::from_fn(6, 6, |i, j| {
            c(if i == j {
                2.0
            } else if j == i + 1 {
                1.0
            } else {
                0.0
            })
        });
        let b = cvec_real(&[1.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        let t = s.affine_transform(&m, &b).unwrap();
        let (u, tt) = ([0.3, -0.2], [0.7, 0.1]);
        let expected = &m * s.point(&u, &tt).unwrap() + &b;
        assert!((t.point(&u, &tt).unwrap() - expected).camax() < 1e-14);
    }

    #[test]
    fn projective_transform_maps_leaves_onto_image_leaves() {
        let s = veronese_cylinder();
        let mut p = CMat::identity(7, 7);
        p[(0, 1)] = c(0.2);
        p[(0, 5)] = c(0.3);
        p[(3, 6)] = c(-0.5);
        let t = s.projective_transform(&p).unwrap();
        let u = [0.4, 0.1];
        // Each transformed leaf point is the image of some point on the original leaf.
        for tt in [[0.0, 0.0], [0.2, -0.1], [-0.3, 0.25]] {
            let y = t.point(&u, &tt).unwrap();
            // invert: homogeneous preimage via p⁻¹
            let mut yh = CVec::zeros(7);
            yh[0] = c(1.0);
            yh.rows_mut(1, 6).copy_from(&y);
            let xh = p.clone().try_inverse().unwrap() * yh;
            let x = xh.rows(1, 6) / xh[0];
            // x must lie on the original leaf: x - A0(u) ∈ span{e5, e6}
            let a0 = s.base.eval(&u).unwrap();
            let d = x - a0;
            assert!(d.rows(0, 4).camax() < 1e-12, "{d}");
        }
    }

    #[test]
    fn base_reparametrization_commutes_with_evaluation() {
        let s = veronese_cylinder();
        let sm = [2.0, 1.0, -1.0, 1.0];
        let cc = [0.5, -0.5];
        let t = s.reparametrize_base(&sm, &cc).unwrap();
        let w = [0.1, 0.3];
        let u = [2.0 * 0.1 + 0.3 + 0.5, -0.1 + 0.3 - 0.5];
        let tt = [0.2, 0.9];
        assert!((t.point(&w, &tt).unwrap() - s.point(&u, &tt).unwrap()).camax() < 1e-14);
    }

    #[test]
    fn leaf_coordinate_change_reparametrizes_the_leaf() {
        let s = veronese_cylinder();
        let lambda = [c(0.5), c(-1.0)];
        let g = from_real(2, 2, &[1.0, 1.0, 0.0, 2.0]);
        let t = s.change_leaf_coordinates(&lambda, &g).unwrap();
        let u = [0.2, 0.7];
        let tp = [0.3, -0.4];
        // t = λ + Gᵀ t'
        let old = [0.5 + 0.3, -1.0 + 0.3 + 2.0 * -0.4];
        assert!((t.point(&u, &tp).unwrap() - s.point(&u, &old).unwrap()).camax() < 1e-14);
    }
}
