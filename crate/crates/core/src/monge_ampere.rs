//! Atomic real Monge–Ampère measures of PL convex functions.

use std::collections::BTreeMap;

use num::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex::MaxAffine;
use crate::error::{invalid, Result};
use crate::linalg;
use crate::polytope::Polytope;
use crate::rational::{self, factorial_q, Rational, QVec, Q};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atom {
    pub point: QVec,
    pub mass: Rational,
}

/// Finite nonnegative combination of Dirac masses; atoms sorted by point, merged, no zero masses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MeasureJson", into = "MeasureJson")]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<Atom>,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, atoms: impl IntoIterator<Item = (QVec, Rational)>) -> Result<Self> {
        let mut acc: BTreeMap<QVec, Rational> = BTreeMap::new();
        for (p, m) in atoms {
            if p.len() != dim {
                return invalid(format!("atom of length {} in dimension {dim}", p.len()));
            }
            if m.is_negative() {
                return invalid(format!("negative mass {}", rational::format(&m)));
            }
            *acc.entry(p).or_insert_with(Rational::zero) += m;
        }
        Ok(Self::from_map(dim, acc))
    }

    fn from_map(dim: usize, acc: BTreeMap<QVec, Rational>) -> Self {
        let atoms = acc.into_iter().filter(|(_, m)| !m.is_zero()).map(|(point, mass)| Atom { point, mass }).collect();
        DiscreteMeasure { dim, atoms }
    }

    pub fn zero(dim: usize) -> Self {
        DiscreteMeasure { dim, atoms: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> Rational {
        self.atoms.iter().map(|a| &a.mass).sum()
    }

    pub fn mass_where(&self, pred: impl Fn(&[Rational]) -> bool) -> Rational {
        self.atoms.iter().filter(|a| pred(&a.point)).map(|a| &a.mass).sum()
    }

    /// Mass of the closed box `[lo, hi]`.
    pub fn mass_in_box(&self, lo: &[Rational], hi: &[Rational]) -> Rational {
        self.mass_where(|p| p.iter().zip(lo).zip(hi).all(|((x, l), h)| l <= x && x <= h))
    }

    pub fn translate(&self, t: &[Rational]) -> Self {
        let atoms = self.atoms.iter().map(|a| Atom { point: rational::add(&a.point, t), mass: a.mass.clone() }).collect();
        DiscreteMeasure { dim: self.dim, atoms }
    }

    pub fn scale_mass(&self, s: &Rational) -> Self {
        let acc = self.atoms.iter().map(|a| (a.point.clone(), &a.mass * s)).collect();
        Self::from_map(self.dim, acc)
    }

    pub fn points_f64(&self) -> Vec<Vec<f64>> {
        self.atoms.iter().map(|a| rational::vec_to_f64(&a.point)).collect()
    }

    pub fn masses_f64(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| rational::to_f64(&a.mass)).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct AtomJson {
    point: Vec<Q>,
    mass: Q,
}

#[derive(Serialize, Deserialize)]
struct MeasureJson {
    dim: usize,
    atoms: Vec<AtomJson>,
}

impl TryFrom<MeasureJson> for DiscreteMeasure {
    type Error = crate::Error;
    fn try_from(j: MeasureJson) -> Result<Self> {
        DiscreteMeasure::new(j.dim, j.atoms.into_iter().map(|a| (rational::unwrap(a.point), a.mass.0)))
    }
}

impl From<DiscreteMeasure> for MeasureJson {
    fn from(m: DiscreteMeasure) -> Self {
        MeasureJson {
            dim: m.dim,
            atoms: m.atoms.into_iter().map(|a| AtomJson { point: rational::wrap(&a.point), mass: Q(a.mass) }).collect(),
        }
    }
}

/// `∂f(ω)` at a vertex `ω` of the induced decomposition.
pub fn dual_cell(f: &MaxAffine, omega: &[Rational]) -> Result<Polytope> {
    if omega.len() != f.dim() {
        return invalid("point has the wrong dimension");
    }
    let active = f.active(omega);
    let slopes: Vec<&[Rational]> = active.iter().map(|&i| f.pieces()[i].slope.as_slice()).collect();
    if linalg::affine_dim(&slopes) != Some(f.dim()) {
        return invalid(format!("{:?} is not a vertex", omega.iter().map(rational::format).collect::<Vec<_>>()));
    }
    Ok(f.subdifferential(omega))
}

/// One atom of mass `n!·vol(∂f(ω))` per vertex `ω`.
pub fn ma_measure(f: &MaxAffine) -> DiscreteMeasure {
    let atoms = f.vertices().into_iter().map(|v| {
        let mass = f.subdifferential(&v.point).normalized_volume();
        (v.point, mass)
    });
    DiscreteMeasure::new(f.dim(), atoms).expect("dual cell volumes are nonnegative")
}

/// Mixed measure `MA(f₁,…,f_n)` by polarization over nonempty subsets.
pub fn mixed_ma(fs: &[MaxAffine]) -> Result<DiscreteMeasure> {
    let Some(first) = fs.first() else { return invalid("mixed_ma needs at least one function") };
    let n = first.dim();
    if fs.len() != n || fs.iter().any(|f| f.dim() != n) {
        return invalid(format!("mixed_ma in dimension {n} needs exactly {n} functions of that dimension"));
    }
    let mut acc: BTreeMap<QVec, Rational> = BTreeMap::new();
    for mask in 1u32..(1 << n) {
        let mut sum: Option<MaxAffine> = None;
        for (j, f) in fs.iter().enumerate() {
            if mask & (1 << j) != 0 {
                sum = Some(match sum {
                    None => f.clone(),
                    Some(s) => s.sum(f),
                });
            }
        }
        let sign = if (n as u32 - mask.count_ones()) % 2 == 0 { Rational::from_integer(1.into()) } else { Rational::from_integer((-1).into()) };
        for a in ma_measure(&sum.expect("nonempty subset").canonical_form()).atoms {
            *acc.entry(a.point).or_insert_with(Rational::zero) += &sign * a.mass;
        }
    }
    let nf = factorial_q(n);
    if let Some((p, m)) = acc.iter().find(|(_, m)| m.is_negative()) {
        return invalid(format!("negative mixed mass {} at {:?}", rational::format(m), p));
    }
    Ok(DiscreteMeasure::from_map(n, acc.into_iter().map(|(p, m)| (p, m / &nf)).collect()))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MassIdentity {
    pub total: Rational,
    pub expected: Rational,
    pub equal: bool,
}

/// Total MA mass against `n!·vol(Δ(f))`.
pub fn mass_identity_check(f: &MaxAffine) -> MassIdentity {
    let total = ma_measure(f).total_mass();
    let expected = f.stability_set().normalized_volume();
    let expected = if f.pieces().len() == 1 && f.dim() > 0 { Rational::zero() } else { expected };
    let equal = total == expected;
    MassIdentity { total, expected, equal }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ComparisonStatus {
    /// No sample landed in `{f < g}`.
    Vacuous,
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComparisonReport {
    pub status: ComparisonStatus,
    pub hits: usize,
    pub checked: usize,
    /// `(y, H)` with `H ∈ ∂g(y) ∩ Δ°` but `H ∉ ∂f({f<g})`.
    pub counterexample: Option<(QVec, QVec)>,
}

/// Sampled check of `∂g(Ω) ∩ Δ° ⊆ ∂f(Ω)` for `Ω = {f < g}`.
pub fn comparison_check(f: &MaxAffine, g: &MaxAffine, body: &Polytope, samples: usize, seed: u64) -> Result<ComparisonReport> {
    let n = f.dim();
    if g.dim() != n || body.dim() != n {
        return invalid("dimension mismatch");
    }
    if !body.is_full_dimensional() {
        return invalid("Δ must be full-dimensional");
    }
    let stab = f.stability_set();
    if !(stab.is_subset_of(body) && body.is_subset_of(&stab)) {
        return invalid("Δ(f) must equal Δ");
    }
    let fv = f.vertices();
    let mut pts: Vec<QVec> = fv.iter().map(|v| v.point.clone()).collect();
    pts.extend(g.minimal_face_points());
    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|j| {
            let xs = pts.iter().map(|p| rational::to_f64(&p[j]));
            let lo = xs.clone().fold(f64::INFINITY, f64::min);
            let hi = xs.fold(f64::NEG_INFINITY, f64::max);
            if lo.is_finite() { (lo - 1.0, hi + 1.0) } else { (-1.0, 1.0) }
        })
        .unzip();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ComparisonReport { status: ComparisonStatus::Vacuous, hits: 0, checked: 0, counterexample: None };
    for _ in 0..samples {
        let y: QVec = (0..n)
            .map(|j| rational::approximate(rng.random_range(lo[j]..=hi[j]), 1 << 20).expect("finite sample"))
            .collect();
        if f.eval(&y) >= g.eval(&y) {
            continue;
        }
        report.hits += 1;
        let h = g.pieces()[g.active(&y)[0]].slope.clone();
        if !body.interior_contains(&h) {
            continue;
        }
        report.checked += 1;
        // argmin of f - H is the face spanned by the minimizing vertices; f - g is concave there
        let shifted: Vec<Rational> = fv.iter().map(|v| &v.value - rational::dot(&h, &v.point)).collect();
        let best = shifted.iter().min().expect("f has vertices when Δ is full-dimensional");
        let inside = fv
            .iter()
            .zip(&shifted)
            .any(|(v, s)| s == best && f.eval(&v.point) < g.eval(&v.point));
        if !inside && report.counterexample.is_none() {
            report.counterexample = Some((y, h));
        }
    }
    report.status = if report.counterexample.is_some() {
        ComparisonStatus::Fail
    } else if report.hits == 0 {
        ComparisonStatus::Vacuous
    } else {
        ComparisonStatus::Pass
    };
    Ok(report)
}
