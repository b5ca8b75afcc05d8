//! Second-order jets of expression maps.
//!
//! [`eval_jet2`] propagates (value, gradient, Hessian) through the tree with
//! the chain rule. Hessians are held as packed upper triangles and mirrored on
//! output, so `d2[k][(p, q)] == d2[k][(q, p)]` holds bit-for-bit.
//! [`finite_diff_jet2`] is the independent central-difference oracle.

use crate::expr::{check_denominator, Expr, ExprMap};
use crate::{CMat, CVec, Error, Result, C64};

/// Value, first and second partial derivatives of a map at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2 {
    /// N values.
    pub value: CVec,
    /// N×n matrix of first partials.
    pub d1: CMat,
    /// For each of the N components, its symmetric n×n Hessian.
    pub d2: Vec<CMat>,
}

impl Jet2 {
    pub fn n_out(&self) -> usize {
        self.value.len()
    }

    pub fn n_params(&self) -> usize {
        self.d1.ncols()
    }

    /// The N-vector ∂²f/∂u^p∂u^q.
    pub fn d2_column(&self, p: usize, q: usize) -> CVec {
        CVec::from_iterator(self.d2.len(), self.d2.iter().map(|h| h[(p, q)]))
    }

    /// Apply a linear map `m` (M×N) to every order of the jet.
    pub fn map_linear(&self, m: &CMat) -> Jet2 {
        let n = self.n_params();
        let value = m * &self.value;
        let d1 = m * &self.d1;
        let d2 = (0..m.nrows())
            .map(|i| {
                let mut h = CMat::zeros(n, n);
                for (k, hk) in self.d2.iter().enumerate() {
                    let c = m[(i, k)];
                    if c != C64::new(0.0, 0.0) {
                        h += hk * c;
                    }
                }
                h
            })
            .collect();
        Jet2 { value, d1, d2 }
    }

    pub fn max_abs_diff(&self, other: &Jet2) -> f64 {
        let mut m = crate::linalg::max_abs(&(&self.d1 - &other.d1));
        m = m.max((&self.value - &other.value).camax());
        for (a, b) in self.d2.iter().zip(&other.d2) {
            m = m.max(crate::linalg::max_abs(&(a - b)));
        }
        m
    }
}

/// Scalar second-order Taylor number in n variables.
#[derive(Clone, Debug)]
struct Taylor2 {
    v: C64,
    g: Vec<C64>,
    /// Upper triangle, row-major over p <= q.
    h: Vec<C64>,
}

#[inline]
fn tri(n: usize, p: usize, q: usize) -> usize {
    // index of (p, q), p <= q, in a row-major packed upper triangle
    p * n - p * (p + 1) / 2 + q
}

impl Taylor2 {
    fn constant(n: usize, v: C64) -> Self {
        Taylor2 {
            v,
            g: vec![C64::new(0.0, 0.0); n],
            h: vec![C64::new(0.0, 0.0); n * (n + 1) / 2],
        }
    }

    fn variable(n: usize, i: usize, v: f64) -> Self {
        let mut t = Self::constant(n, C64::new(v, 0.0));
        t.g[i] = C64::new(1.0, 0.0);
        t
    }

    fn n(&self) -> usize {
        self.g.len()
    }

    fn add_assign(&mut self, o: &Taylor2) {
        self.v += o.v;
        for (a, b) in self.g.iter_mut().zip(&o.g) {
            *a += b;
        }
        for (a, b) in self.h.iter_mut().zip(&o.h) {
            *a += b;
        }
    }

    fn scale(mut self, s: C64) -> Self {
        self.v *= s;
        self.g.iter_mut().for_each(|x| *x *= s);
        self.h.iter_mut().for_each(|x| *x *= s);
        self
    }

    fn mul(&self, o: &Taylor2) -> Taylor2 {
        let n = self.n();
        let mut out = Self::constant(n, self.v * o.v);
        for p in 0..n {
            out.g[p] = self.g[p] * o.v + o.g[p] * self.v;
        }
        for p in 0..n {
            for q in p..n {
                let k = tri(n, p, q);
                out.h[k] =
                    self.h[k] * o.v + o.h[k] * self.v + self.g[p] * o.g[q] + self.g[q] * o.g[p];
            }
        }
        out
    }

    /// Compose with a scalar function given its value and first two derivatives.
    fn chain(&self, f0: C64, f1: C64, f2: C64) -> Taylor2 {
        let n = self.n();
        let mut out = Self::constant(n, f0);
        for p in 0..n {
            out.g[p] = f1 * self.g[p];
        }
        for p in 0..n {
            for q in p..n {
                let k = tri(n, p, q);
                out.h[k] = f1 * self.h[k] + f2 * self.g[p] * self.g[q];
            }
        }
        out
    }
}

fn eval_taylor(e: &Expr, u: &[f64]) -> Result<Taylor2> {
    let n = u.len();
    let one = C64::new(1.0, 0.0);
    Ok(match e {
        Expr::Var(i) => {
            if *i >= n {
                return Err(Error::UnknownVariable(format!("#{i}")));
            }
            Taylor2::variable(n, *i, u[*i])
        }
        Expr::Const(z) => Taylor2::constant(n, *z),
        Expr::Add(xs) => {
            let mut acc = Taylor2::constant(n, C64::new(0.0, 0.0));
            for x in xs {
                acc.add_assign(&eval_taylor(x, u)?);
            }
            acc
        }
        Expr::Mul(xs) => {
            let mut acc = Taylor2::constant(n, one);
            for x in xs {
                acc = acc.mul(&eval_taylor(x, u)?);
            }
            acc
        }
        Expr::Sub(a, b) => {
            let mut acc = eval_taylor(a, u)?;
            acc.add_assign(&eval_taylor(b, u)?.scale(-one));
            acc
        }
        Expr::Neg(a) => eval_taylor(a, u)?.scale(-one),
        Expr::Div(a, b) => {
            let num = eval_taylor(a, u)?;
            let den = eval_taylor(b, u)?;
            check_denominator(den.v)?;
            let r = one / den.v;
            let recip = den.chain(r, -r * r, 2.0 * r * r * r);
            num.mul(&recip)
        }
        Expr::Pow(a, k) => {
            let base = eval_taylor(a, u)?;
            let k = *k;
            if k == 0 {
                Taylor2::constant(n, one)
            } else {
                if k < 0 {
                    check_denominator(base.v)?;
                }
                let x = base.v;
                let kf = C64::new(k as f64, 0.0);
                let f1 = kf * x.powi(k - 1);
                let f2 = if k == 1 {
                    C64::new(0.0, 0.0)
                } else {
                    kf * C64::new((k - 1) as f64, 0.0) * x.powi(k - 2)
                };
                base.chain(x.powi(k), f1, f2)
            }
        }
        Expr::Sin(a) => {
            let t = eval_taylor(a, u)?;
            let (s, c) = (t.v.sin(), t.v.cos());
            t.chain(s, c, -s)
        }
        Expr::Cos(a) => {
            let t = eval_taylor(a, u)?;
            let (s, c) = (t.v.sin(), t.v.cos());
            t.chain(c, -s, -c)
        }
        Expr::Exp(a) => {
            let t = eval_taylor(a, u)?;
            let e = t.v.exp();
            t.chain(e, e, e)
        }
    })
}

/// Exact (to roundoff) value, Jacobian and Hessians of `map` at `u`.
pub fn eval_jet2(map: &ExprMap, u: &[f64]) -> Result<Jet2> {
    map.check_point(u)?;
    let n = u.len();
    let big_n = map.n_out();
    let mut value = CVec::zeros(big_n);
    let mut d1 = CMat::zeros(big_n, n);
    let mut d2 = Vec::with_capacity(big_n);
    for (k, comp) in map.components().iter().enumerate() {
        let t = eval_taylor(comp, u)?;
        value[k] = t.v;
        for p in 0..n {
            d1[(k, p)] = t.g[p];
        }
        let mut h = CMat::zeros(n, n);
        for p in 0..n {
            for q in p..n {
                let x = t.h[tri(n, p, q)];
                h[(p, q)] = x;
                h[(q, p)] = x;
            }
        }
        d2.push(h);
    }
    Ok(Jet2 { value, d1, d2 })
}

/// Central-difference step sizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdSteps {
    pub first: f64,
    pub second: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        FdSteps {
            first: 1e-5,
            second: 1e-4,
        }
    }
}

impl FdSteps {
    pub fn uniform(h: f64) -> Self {
        FdSteps {
            first: h,
            second: h,
        }
    }
}

/// Central-difference estimate of the jet; truncation error is O(h²).
///
/// Only plain evaluation of the tree is used, never the Taylor path.
pub fn finite_diff_jet2(map: &ExprMap, u: &[f64], steps: FdSteps) -> Result<Jet2> {
    if !(steps.first > 0.0 && steps.second > 0.0) {
        return Err(Error::InvalidSpec(
            "finite-difference steps must be positive".into(),
        ));
    }
    map.check_point(u)?;
    let n = u.len();
    let big_n = map.n_out();
    let f = |du: &[(usize, f64)]| -> Result<CVec> {
        let mut x = u.to_vec();
        for &(i, d) in du {
            x[i] += d;
        }
        map.eval(&x)
    };
    let value = f(&[])?;
    let mut d1 = CMat::zeros(big_n, n);
    let h1 = steps.first;
    for p in 0..n {
        let diff = (f(&[(p, h1)])? - f(&[(p, -h1)])?) / C64::new(2.0 * h1, 0.0);
        d1.set_column(p, &diff);
    }
    let h = steps.second;
    let mut d2 = vec![CMat::zeros(n, n); big_n];
    for p in 0..n {
        let plus = f(&[(p, h)])?;
        let minus = f(&[(p, -h)])?;
        let diag = (plus + minus - &value * C64::new(2.0, 0.0)) / C64::new(h * h, 0.0);
        for k in 0..big_n {
            d2[k][(p, p)] = diag[k];
        }
        for q in p + 1..n {
            let pp = f(&[(p, h), (q, h)])?;
            let pm = f(&[(p, h), (q, -h)])?;
            let mp = f(&[(p, -h), (q, h)])?;
            let mm = f(&[(p, -h), (q, -h)])?;
            let mixed = (pp - pm - mp + mm) / C64::new(4.0 * h * h, 0.0);
            for k in 0..big_n {
                d2[k][(p, q)] = mixed[k];
                d2[k][(q, p)] = mixed[k];
            }
        }
    }
    Ok(Jet2 { value, d1, d2 })
}
