//! Numerical bookkeeping for Mumford models: component degrees, nef test, Euler characteristic, measure lift.

use num::{BigInt, One, Zero};
use serde::{Deserialize, Serialize};

use crate::abelian::{periodic_vertices, PeriodicPL};
use crate::convex::MaxAffine;
use crate::dd::{Cut, Dd};
use crate::error::{invalid, Result};
use crate::linalg;
use crate::monge_ampere::DiscreteMeasure;
use crate::polytope::Polytope;
use crate::rational::{self, binomial, factorial, Rational, QVec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MumfordContext {
    /// Dimension of the abelian variety.
    pub g: usize,
    /// Torus rank.
    pub n: usize,
    #[serde(rename = "deg_H_B")]
    pub deg_h_b: u64,
    /// Square root of the degree of the tropical polarization.
    pub d: u64,
}

impl MumfordContext {
    pub fn new(g: usize, n: usize, deg_h_b: u64, d: u64) -> Result<Self> {
        let ctx = MumfordContext { g, n, deg_h_b, d };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n > self.g {
            return invalid(format!("torus rank {} exceeds dimension {}", self.n, self.g));
        }
        if self.deg_h_b == 0 || self.d == 0 {
            return invalid("degrees must be positive");
        }
        Ok(())
    }

    /// `g!/(g-n)!·deg_H(B)`.
    pub fn degree_factor(&self) -> Rational {
        Rational::new(factorial(self.g) * BigInt::from(self.deg_h_b), factorial(self.g - self.n))
    }
}

/// `plus - minus`, a difference of convex PL functions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DcFunction {
    pub plus: MaxAffine,
    pub minus: MaxAffine,
}

impl DcFunction {
    pub fn new(plus: MaxAffine, minus: MaxAffine) -> Result<Self> {
        if plus.dim() != minus.dim() {
            return invalid("dimension mismatch between the two convex parts");
        }
        Ok(DcFunction { plus, minus })
    }

    pub fn convex(f: MaxAffine) -> Self {
        let n = f.dim();
        DcFunction { plus: f, minus: MaxAffine::constant(n, Rational::zero()) }
    }

    pub fn dim(&self) -> usize {
        self.plus.dim()
    }

    pub fn eval(&self, u: &[Rational]) -> Rational {
        self.plus.eval(u) - self.minus.eval(u)
    }
}

/// PL inputs accepted by the degree operations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlFunction {
    Periodic(PeriodicPL),
    Dc(DcFunction),
    Max(MaxAffine),
}

impl PlFunction {
    pub fn dim(&self) -> usize {
        match self {
            PlFunction::Periodic(f) => f.ptav().n(),
            PlFunction::Dc(f) => f.dim(),
            PlFunction::Max(f) => f.dim(),
        }
    }
}

/// Linear pieces of the germ `v ↦ f(ω+v) - f(ω)` with the cones (cut by `[-1,1]^n`) where they apply.
fn germ_regions(f: &DcFunction, omega: &[Rational]) -> Vec<(QVec, Dd<Rational>)> {
    let n = f.dim();
    let slopes = |g: &MaxAffine| -> Vec<QVec> {
        let mut s: Vec<QVec> = g.active(omega).into_iter().map(|i| g.pieces()[i].slope.clone()).collect();
        s.sort();
        s.dedup();
        s
    };
    let (a, b) = (slopes(&f.plus), slopes(&f.minus));
    let mut out = Vec::new();
    for ai in &a {
        for bj in &b {
            let mut dd = Dd::cube(&vec![-Rational::one(); n], &vec![Rational::one(); n]);
            for ak in a.iter().filter(|x| *x != ai) {
                dd.clip(Cut::new(rational::sub(ak, ai), Rational::zero()));
            }
            for bl in b.iter().filter(|x| *x != bj) {
                dd.clip(Cut::new(rational::sub(bl, bj), Rational::zero()));
            }
            let all: Vec<usize> = (0..dd.vertices.len()).collect();
            if !dd.is_empty() && dd.affine_dim_of(&all) == Some(n) {
                out.push((rational::sub(ai, bj), dd));
            }
        }
    }
    out
}

/// Whether `f` is convex near `ω`, i.e. its recession function there is convex.
pub fn nef_at_vertex(f: &PlFunction, omega: &[Rational]) -> bool {
    match f {
        PlFunction::Periodic(_) | PlFunction::Max(_) => true,
        PlFunction::Dc(f) => {
            if f.dim() == 0 {
                return true;
            }
            // a PL function is convex iff it dominates each of its realized linear pieces
            let regions = germ_regions(f, omega);
            regions.iter().all(|(own, dd)| {
                dd.vertices.iter().all(|v| {
                    let here = rational::dot(own, &v.point);
                    regions.iter().all(|(other, _)| rational::dot(other, &v.point) <= here)
                })
            })
        }
    }
}

/// Slopes spanning the dual cell `{ω}^f` (for `f` convex near `ω`).
fn dual_slopes(f: &PlFunction, omega: &[Rational]) -> Result<Vec<QVec>> {
    Ok(match f {
        PlFunction::Max(g) => g.active(omega).into_iter().map(|i| g.pieces()[i].slope.clone()).collect(),
        PlFunction::Periodic(g) => {
            let (w0, k) = g.ptav().reduce(omega);
            let shift = g.ptav().polarize(&k);
            let local = g.local_function();
            local.active(&w0).into_iter().map(|i| rational::add(&local.pieces()[i].slope, &shift)).collect()
        }
        PlFunction::Dc(g) => {
            if !nef_at_vertex(f, omega) {
                return invalid("f is not convex at the vertex");
            }
            germ_regions(g, omega).into_iter().map(|(s, _)| s).collect()
        }
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexDegree {
    pub degree: Rational,
    /// Dual cell is full-dimensional.
    pub genuine: bool,
}

/// `g!/(g-n)!·deg_H(B)·vol({ω}^f)`.
pub fn vertex_degree(ctx: &MumfordContext, f: &PlFunction, omega: &[Rational]) -> Result<VertexDegree> {
    ctx.validate()?;
    if f.dim() != ctx.n || omega.len() != ctx.n {
        return invalid("dimension of f or ω differs from the torus rank");
    }
    let slopes = dual_slopes(f, omega)?;
    let refs: Vec<&[Rational]> = slopes.iter().map(|s| s.as_slice()).collect();
    if linalg::affine_dim(&refs) != Some(ctx.n) {
        return Ok(VertexDegree { degree: Rational::zero(), genuine: false });
    }
    let vol = Polytope::from_vertices(ctx.n, slopes)?.volume();
    Ok(VertexDegree { degree: ctx.degree_factor() * vol, genuine: true })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegreeCheck {
    pub sum: Rational,
    pub expected: Rational,
    pub equal: bool,
}

/// Sum of component degrees over vertices mod `Λ` against `g!/(g-n)!·deg_H(B)·d`.
pub fn total_degree_check(ctx: &MumfordContext, f: &PeriodicPL) -> Result<DegreeCheck> {
    ctx.validate()?;
    if f.ptav().n() != ctx.n || f.ptav().d() != ctx.d {
        return invalid("context does not match the polarized tropical abelian variety of f");
    }
    let pf = PlFunction::Periodic(f.clone());
    let mut sum = Rational::zero();
    for v in periodic_vertices(f) {
        sum += vertex_degree(ctx, &pf, &v.point)?.degree;
    }
    let expected = ctx.degree_factor() * Rational::from_integer(ctx.d.into());
    let equal = sum == expected;
    Ok(DegreeCheck { sum, expected, equal })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChiReport {
    #[serde(serialize_with = "ser_q")]
    pub chi: Rational,
    /// `deg_L(A) = g!·χ`.
    #[serde(serialize_with = "ser_q")]
    pub deg_l: Rational,
    /// `deg(A, φ) = χ²`.
    #[serde(serialize_with = "ser_q")]
    pub deg_phi: Rational,
    pub integral: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

fn ser_q<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&rational::format(r))
}

/// `χ = d·deg_H(B)/(g-n)!`.
pub fn chi_consistency(ctx: &MumfordContext) -> Result<ChiReport> {
    ctx.validate()?;
    let chi = Rational::new(BigInt::from(ctx.d) * BigInt::from(ctx.deg_h_b), factorial(ctx.g - ctx.n));
    let deg_l = &chi * Rational::from_integer(factorial(ctx.g));
    let deg_phi = &chi * &chi;
    let integral = chi.is_integer();
    let warning = (!integral).then(|| format!("χ = {} is not an integer", rational::format(&chi)));
    Ok(ChiReport { chi, deg_l, deg_phi, integral, warning })
}

/// `binom(g, g-n)·deg_H(B)` times `μ`.
pub fn skeleton_measure_lift(ctx: &MumfordContext, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    ctx.validate()?;
    if mu.dim() != ctx.n {
        return invalid("measure dimension differs from the torus rank");
    }
    let factor = Rational::from_integer(binomial(ctx.g, ctx.g - ctx.n) * BigInt::from(ctx.deg_h_b));
    Ok(mu.scale_mass(&factor))
}
