//! Rational fans, strata of the partial compactification, and psh tests for PL functions.

use num::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::convex::{AffinePiece, MaxAffine};
use crate::error::{invalid, Result};
use crate::linalg;
use crate::polytope::{Halfspace, Polytope};
use crate::rational::{self, dot, Rational, QVec};

fn to_q(v: &[i64]) -> QVec {
    v.iter().map(|&x| rational::int(x)).collect()
}

fn primitive_i64(v: &[Rational]) -> Result<Vec<i64>> {
    rational::primitive(v)
        .into_iter()
        .map(|x| x.to_i64().ok_or_else(|| crate::Error::InvalidInput("ray coordinate overflows i64".into())))
        .collect()
}

/// A strictly convex rational cone given by primitive extreme ray generators (sorted).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cone {
    pub rays: Vec<Vec<i64>>,
}

/// `conv(0, rays)`; the tangent cone at the origin is the cone itself.
fn cone_polytope(dim: usize, rays: &[Vec<i64>]) -> Polytope {
    let mut pts: Vec<QVec> = rays.iter().map(|r| to_q(r)).collect();
    pts.push(vec![Rational::zero(); dim]);
    Polytope::from_vertices(dim, pts).expect("origin is present")
}

impl Cone {
    /// Normalizes generators to primitive extreme rays; rejects cones that are not strictly convex.
    pub fn new(dim: usize, generators: Vec<Vec<i64>>) -> Result<Cone> {
        if generators.iter().any(|r| r.len() != dim) {
            return invalid(format!("ray of wrong length in dimension {dim}"));
        }
        if generators.iter().any(|r| r.iter().all(|&x| x == 0)) {
            return invalid("zero ray generator");
        }
        let p = cone_polytope(dim, &generators);
        let origin = vec![Rational::zero(); dim];
        if !p.vertices().contains(&origin) {
            return invalid(format!("cone generated by {generators:?} is not strictly convex"));
        }
        let mut rays = p
            .vertices()
            .iter()
            .filter(|v| **v != origin)
            .map(|v| primitive_i64(v))
            .collect::<Result<Vec<_>>>()?;
        // non-extreme generators of the same ray are already absorbed; the polytope may still
        // list two points on one ray when both are vertices, which cannot happen
        rays.sort();
        rays.dedup();
        Ok(Cone { rays })
    }

    pub fn zero() -> Cone {
        Cone { rays: Vec::new() }
    }

    pub fn ambient(&self, dim: usize) -> Polytope {
        cone_polytope(dim, &self.rays)
    }

    pub fn dim(&self, n: usize) -> usize {
        let rows: Vec<QVec> = self.rays.iter().map(|r| to_q(r)).collect();
        linalg::rank(&rows, n)
    }

    /// Inequalities `h·x ≤ 0` (equalities appear as opposite pairs) cutting out the cone.
    pub fn inequalities(&self, n: usize) -> Vec<QVec> {
        self.ambient(n)
            .halfspaces()
            .iter()
            .filter(|h| h.offset.is_zero())
            .map(|h| h.normal.clone())
            .collect()
    }

    pub fn contains(&self, n: usize, v: &[Rational]) -> bool {
        self.inequalities(n).iter().all(|h| !dot(h, v).is_positive())
    }

    pub fn relative_interior_point(&self, n: usize) -> QVec {
        let mut p = vec![Rational::zero(); n];
        for r in &self.rays {
            p = rational::add(&p, &to_q(r));
        }
        p
    }

    /// All faces, including the cone itself and `{0}`.
    pub fn faces(&self, n: usize) -> Vec<Cone> {
        let mut sets: Vec<Vec<usize>> = vec![(0..self.rays.len()).collect()];
        let facets: Vec<Vec<usize>> = self
            .inequalities(n)
            .iter()
            .map(|h| (0..self.rays.len()).filter(|&i| dot(h, &to_q(&self.rays[i])).is_zero()).collect())
            .collect();
        let mut k = 0;
        while k < sets.len() {
            for f in &facets {
                let s: Vec<usize> = sets[k].iter().copied().filter(|i| f.contains(i)).collect();
                if !sets.contains(&s) {
                    sets.push(s);
                }
            }
            k += 1;
        }
        let mut out: Vec<Cone> =
            sets.into_iter().map(|s| Cone { rays: s.into_iter().map(|i| self.rays[i].clone()).collect() }).collect();
        out.sort();
        out
    }

    /// `self ∩ other` as a cone.
    pub fn intersection(&self, n: usize, other: &Cone) -> Cone {
        let hs = self.inequalities(n);
        let ell: QVec = hs.iter().fold(vec![Rational::zero(); n], |acc, h| rational::sub(&acc, h));
        if ell.iter().all(Zero::is_zero) {
            return Cone::zero();
        }
        let mut cuts: Vec<Halfspace> = hs
            .into_iter()
            .chain(other.inequalities(n))
            .map(|h| Halfspace::new(h, Rational::zero()))
            .collect();
        cuts.push(Halfspace::new(ell.clone(), Rational::one()));
        cuts.push(Halfspace::new(ell.iter().map(|x| -x).collect(), -Rational::one()));
        match Polytope::from_halfspaces(n, cuts) {
            Ok(section) => {
                let mut rays: Vec<Vec<i64>> =
                    section.vertices().iter().map(|v| primitive_i64(v).expect("small rays")).collect();
                rays.sort();
                Cone { rays }
            }
            Err(_) => Cone::zero(),
        }
    }

    /// Integer basis of `σ^⊥ ∩ M` in Hermite normal form: the quotient coordinates of `N(σ)`.
    pub fn quotient_basis(&self, n: usize) -> Vec<Vec<i64>> {
        hermite_rows(integer_kernel(&self.rays, n))
    }

    /// Generators extend to a basis of the lattice.
    pub fn is_smooth(&self, n: usize) -> bool {
        let k = self.rays.len();
        if self.dim(n) != k {
            return false;
        }
        if k == 0 {
            return true;
        }
        let mut g: i128 = 0;
        for cols in combinations(n, k) {
            let m: Vec<QVec> = self.rays.iter().map(|r| cols.iter().map(|&c| rational::int(r[c])).collect()).collect();
            let d = linalg::det(&m).to_integer().to_i128().expect("small minor");
            g = gcd(g, d);
        }
        g == 1
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if k > n {
        return vec![];
    }
    let mut out = Vec::new();
    for rest in combinations(n - 1, k - 1) {
        let mut v = rest;
        v.push(n - 1);
        out.push(v);
    }
    out.extend(combinations(n - 1, k));
    out
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `Z`-basis of `{x ∈ Z^n : r·x = 0 for all rows r}` by unimodular column reduction.
fn integer_kernel(rows: &[Vec<i64>], n: usize) -> Vec<Vec<i64>> {
    let mut a: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let mut u: Vec<Vec<i128>> = (0..n).map(|i| (0..n).map(|j| i128::from(i == j)).collect()).collect();
    let col_op = |a: &mut Vec<Vec<i128>>, u: &mut Vec<Vec<i128>>, dst: usize, src: usize, q: i128| {
        for row in a.iter_mut() {
            row[dst] -= q * row[src];
        }
        for row in u.iter_mut() {
            row[dst] -= q * row[src];
        }
    };
    let swap = |a: &mut Vec<Vec<i128>>, u: &mut Vec<Vec<i128>>, x: usize, y: usize| {
        for row in a.iter_mut() {
            row.swap(x, y);
        }
        for row in u.iter_mut() {
            row.swap(x, y);
        }
    };
    let mut col = 0;
    for r in 0..a.len() {
        if col == n {
            break;
        }
        loop {
            // smallest nonzero entry among columns col.. becomes the pivot
            let Some(p) = (col..n).filter(|&c| a[r][c] != 0).min_by_key(|&c| a[r][c].abs()) else { break };
            swap(&mut a, &mut u, col, p);
            let mut done = true;
            for c in col + 1..n {
                if a[r][c] != 0 {
                    let q = a[r][c].div_euclid(a[r][col]);
                    col_op(&mut a, &mut u, c, col, q);
                    if a[r][c] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        if a[r][col] != 0 {
            col += 1;
        }
    }
    (col..n).map(|c| u.iter().map(|row| row[c] as i64).collect()).collect()
}

/// Row Hermite normal form (positive pivots, reduced entries above them).
fn hermite_rows(rows: Vec<Vec<i64>>) -> Vec<Vec<i64>> {
    let mut m: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let ncols = m.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..ncols {
        if r == m.len() {
            break;
        }
        loop {
            let Some(p) = (r..m.len()).filter(|&i| m[i][c] != 0).min_by_key(|&i| m[i][c].abs()) else { break };
            m.swap(r, p);
            let mut done = true;
            for i in r + 1..m.len() {
                if m[i][c] != 0 {
                    let q = m[i][c].div_euclid(m[r][c]);
                    for j in 0..ncols {
                        m[i][j] -= q * m[r][j];
                    }
                    if m[i][c] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        if m[r][c] == 0 {
            continue;
        }
        if m[r][c] < 0 {
            m[r].iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..r {
            let q = m[i][c].div_euclid(m[r][c]);
            for j in 0..ncols {
                m[i][j] -= q * m[r][j];
            }
        }
        r += 1;
    }
    m.into_iter().map(|r| r.into_iter().map(|x| x as i64).collect()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FanJson", into = "FanJson")]
pub struct Fan {
    dim: usize,
    cones: Vec<Cone>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FanReport {
    pub valid: bool,
    pub complete: bool,
    pub smooth: bool,
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<String>>,
}

impl Fan {
    pub fn new(dim: usize, cones: Vec<Vec<Vec<i64>>>) -> Result<Fan> {
        let cones = cones.into_iter().map(|c| Cone::new(dim, c)).collect::<Result<Vec<_>>>()?;
        Ok(Fan { dim, cones })
    }

    pub fn from_cones(dim: usize, cones: Vec<Cone>) -> Fan {
        Fan { dim, cones }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cones as given.
    pub fn cones(&self) -> &[Cone] {
        &self.cones
    }

    /// Closure of the given cones under taking faces, sorted.
    pub fn all_cones(&self) -> Vec<Cone> {
        let mut out: Vec<Cone> = self.cones.iter().flat_map(|c| c.faces(self.dim)).collect();
        out.push(Cone::zero());
        out.sort();
        out.dedup();
        out
    }

    pub fn maximal_cones(&self) -> Vec<Cone> {
        let all = self.all_cones();
        all.iter()
            .filter(|c| {
                !all.iter().any(|d| d != *c && c.rays.iter().all(|r| d.rays.contains(r)) && d.faces(self.dim).contains(c))
            })
            .cloned()
            .collect()
    }

    pub fn validate(&self) -> FanReport {
        let n = self.dim;
        let maximal = self.maximal_cones();
        for (i, s) in maximal.iter().enumerate() {
            for t in &maximal[i + 1..] {
                let meet = s.intersection(n, t);
                if !s.faces(n).contains(&meet) || !t.faces(n).contains(&meet) {
                    let w = meet.relative_interior_point(n);
                    return FanReport {
                        valid: false,
                        complete: false,
                        smooth: false,
                        reason: Some(format!("cones {:?} and {:?} overlap improperly", s.rays, t.rays)),
                        witness: Some(w.iter().map(rational::format).collect()),
                    };
                }
            }
        }
        let smooth = maximal.iter().all(|c| c.is_smooth(n));
        FanReport { valid: true, complete: self.is_complete(&maximal), smooth, reason: None, witness: None }
    }

    fn is_complete(&self, maximal: &[Cone]) -> bool {
        let n = self.dim;
        if n == 0 {
            return true;
        }
        if maximal.iter().any(|c| c.dim(n) != n) {
            return false;
        }
        // every facet of a maximal cone borders exactly one other maximal cone
        let faces: Vec<Vec<Cone>> = maximal.iter().map(|c| c.faces(n)).collect();
        for fs in &faces {
            for facet in fs.iter().filter(|f| f.dim(n) + 1 == n) {
                let count = faces.iter().filter(|g| g.contains(facet)).count();
                if count != 2 {
                    return false;
                }
            }
        }
        // sanity: generic directions are covered
        let mut state: i64 = 0x2545F491;
        (0..32).all(|_| {
            let dir: QVec = (0..n)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    rational::int((state >> 33) % 1999 - 999)
                })
                .collect();
            maximal.iter().any(|c| c.contains(n, &dir))
        })
    }

    /// Index of the smallest cone (in `all_cones` order) containing `v`.
    pub fn cone_containing(&self, v: &[Rational]) -> Option<Cone> {
        self.all_cones().into_iter().filter(|c| c.contains(self.dim, v)).min_by_key(|c| c.rays.len())
    }
}

#[derive(Serialize, Deserialize)]
struct ConeJson {
    rays: Vec<Vec<i64>>,
}

#[derive(Serialize, Deserialize)]
struct FanJson {
    dim: usize,
    cones: Vec<ConeJson>,
}

impl TryFrom<FanJson> for Fan {
    type Error = crate::Error;
    fn try_from(j: FanJson) -> Result<Self> {
        Fan::new(j.dim, j.cones.into_iter().map(|c| c.rays).collect())
    }
}

impl From<Fan> for FanJson {
    fn from(f: Fan) -> Self {
        FanJson { dim: f.dim, cones: f.cones.into_iter().map(|c| ConeJson { rays: c.rays }).collect() }
    }
}

/// Outward normal-cone rays at vertex `m` of a full-dimensional polytope with neighbors `others`.
fn normal_cone(n: usize, m: &[Rational], others: &[QVec]) -> Result<Cone> {
    let hs: Vec<QVec> = others.iter().filter(|o| o.as_slice() != m).map(|o| rational::sub(o, m)).collect();
    let ell: QVec = hs.iter().fold(vec![Rational::zero(); n], |acc, h| rational::sub(&acc, h));
    let mut cuts: Vec<Halfspace> = hs.into_iter().map(|h| Halfspace::new(h, Rational::zero())).collect();
    cuts.push(Halfspace::new(ell.clone(), Rational::one()));
    cuts.push(Halfspace::new(ell.iter().map(|x| -x).collect(), -Rational::one()));
    let section = Polytope::from_halfspaces(n, cuts)?;
    let rays = section.vertices().iter().map(|v| primitive_i64(v)).collect::<Result<Vec<_>>>()?;
    Cone::new(n, rays)
}

fn require_vertex(f: &MaxAffine, omega: &[Rational]) -> Result<Vec<usize>> {
    let active = f.active(omega);
    let slopes: Vec<&[Rational]> = active.iter().map(|&i| f.pieces()[i].slope.as_slice()).collect();
    if linalg::affine_dim(&slopes) != Some(f.dim()) {
        return invalid(format!("{:?} is not a vertex", omega.iter().map(rational::format).collect::<Vec<_>>()));
    }
    Ok(active)
}

/// Fan of cones spanned by the cells through the vertex `omega`.
pub fn star_fan(f: &MaxAffine, omega: &[Rational]) -> Result<Fan> {
    let g = f.canonical_form();
    let active = require_vertex(&g, omega)?;
    let dual = g.subdifferential(omega);
    let slopes: Vec<QVec> = active.iter().map(|&i| g.pieces()[i].slope.clone()).collect();
    let cones = dual
        .vertices()
        .iter()
        .map(|m| normal_cone(g.dim(), m, &slopes))
        .collect::<Result<Vec<_>>>()?;
    Ok(Fan::from_cones(g.dim(), cones))
}

/// Linearization of `f` at a vertex: one slope per maximal cone of its star fan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecessionFunction {
    pub fan: Fan,
    pub slopes: Vec<QVec>,
}

impl RecessionFunction {
    pub fn eval(&self, v: &[Rational]) -> Rational {
        self.slopes.iter().map(|m| dot(m, v)).max().expect("nonempty")
    }
}

pub fn recession_function(f: &MaxAffine, omega: &[Rational]) -> Result<RecessionFunction> {
    let g = f.canonical_form();
    require_vertex(&g, omega)?;
    let dual = g.subdifferential(omega);
    let slopes: Vec<QVec> = dual.vertices().to_vec();
    let cones = slopes.iter().map(|m| normal_cone(g.dim(), m, &slopes)).collect::<Result<Vec<_>>>()?;
    Ok(RecessionFunction { fan: Fan::from_cones(g.dim(), cones), slopes })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Extension {
    /// Finite limit, as a function of the quotient coordinates.
    Finite(MaxAffine),
    MinusInfinity,
    /// Some slope is positive on the cone: the limit is `+∞`.
    Fails,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConeExtension {
    pub cone: Cone,
    /// Rows: an integer basis of `σ^⊥ ∩ M`; quotient coordinates are `basis · u`.
    pub quotient_basis: Vec<Vec<i64>>,
    pub extension: Extension,
}

/// Value of `f` at a point of `N_Σ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExtendedValue {
    Finite(Rational),
    MinusInfinity,
    PlusInfinity,
}

/// A point of the stratum `N(σ)` given in the quotient coordinates of `σ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtendedPoint {
    pub cone: Cone,
    pub coords: QVec,
}

impl ExtendedPoint {
    pub fn new(fan: &Fan, cone: Cone, coords: QVec) -> Result<Self> {
        if !fan.all_cones().contains(&cone) {
            return invalid("cone is not in the fan");
        }
        if coords.len() + cone.dim(fan.dim()) != fan.dim() {
            return invalid("quotient coordinates have the wrong length");
        }
        Ok(ExtendedPoint { cone, coords })
    }

    /// Limit of `u + t v` as `t → ∞` for `v` in the relative interior of `cone`.
    pub fn limit_of(fan: &Fan, cone: Cone, u: &[Rational]) -> Result<Self> {
        let w = cone.quotient_basis(fan.dim());
        let coords = w.iter().map(|row| dot(&to_q(row), u)).collect();
        ExtendedPoint::new(fan, cone, coords)
    }
}

fn extend_on(f: &MaxAffine, n: usize, cone: &Cone) -> ConeExtension {
    let quotient_basis = cone.quotient_basis(n);
    let rays: Vec<QVec> = cone.rays.iter().map(|r| to_q(r)).collect();
    let fails = f.pieces().iter().any(|p| rays.iter().any(|r| dot(&p.slope, r).is_positive()));
    let extension = if fails {
        Extension::Fails
    } else {
        let survivors: Vec<&AffinePiece> =
            f.pieces().iter().filter(|p| rays.iter().all(|r| dot(&p.slope, r).is_zero())).collect();
        if survivors.is_empty() {
            Extension::MinusInfinity
        } else {
            // slopes vanish on σ, so they lie in the span of the quotient basis
            let wt: Vec<QVec> = (0..n).map(|j| quotient_basis.iter().map(|row| rational::int(row[j])).collect()).collect();
            let k = quotient_basis.len();
            let pieces = survivors
                .into_iter()
                .map(|p| {
                    let mut m = wt.clone();
                    let mut ech: Vec<QVec> =
                        m.iter_mut().zip(&p.slope).map(|(row, s)| {
                            let mut r = row.clone();
                            r.push(s.clone());
                            r
                        }).collect();
                    let pivots = linalg::rref(&mut ech, k);
                    let mut a = vec![Rational::zero(); k];
                    for (r, &c) in pivots.iter().enumerate() {
                        a[c] = ech[r][k].clone();
                    }
                    AffinePiece::new(a, p.offset.clone())
                })
                .collect();
            Extension::Finite(MaxAffine::new(k, pieces).expect("nonempty").canonical_form())
        }
    };
    ConeExtension { cone: cone.clone(), quotient_basis, extension }
}

/// Limits of `f` toward every stratum of the fan.
pub fn boundary_extension(f: &MaxAffine, fan: &Fan) -> Vec<ConeExtension> {
    let g = f.canonical_form();
    fan.all_cones().iter().map(|c| extend_on(&g, fan.dim(), c)).collect()
}

pub fn evaluate_extended(f: &MaxAffine, fan: &Fan, p: &ExtendedPoint) -> ExtendedValue {
    match extend_on(&f.canonical_form(), fan.dim(), &p.cone).extension {
        Extension::Finite(h) => ExtendedValue::Finite(h.eval(&p.coords)),
        Extension::MinusInfinity => ExtendedValue::MinusInfinity,
        Extension::Fails => ExtendedValue::PlusInfinity,
    }
}

pub fn is_psh(f: &MaxAffine, fan: &Fan) -> bool {
    boundary_extension(f, fan).iter().all(|e| e.extension != Extension::Fails)
}

/// Piecewise-linear `Ψ` (one integral slope per cone) and a convex Green function for it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GreenJson", into = "GreenJson")]
pub struct GreenData {
    /// `(index into the fan's given cones, slope)`.
    pub psi: Vec<(usize, Vec<i64>)>,
    pub green: MaxAffine,
}

impl GreenData {
    /// `g₀ = -Ψ`; requires `Ψ` concave, i.e. `Ψ = min_σ m_σ`.
    pub fn canonical(fan: &Fan, psi: Vec<(usize, Vec<i64>)>) -> Result<GreenData> {
        let n = fan.dim();
        for (c, m) in &psi {
            let Some(cone) = fan.cones().get(*c) else { return invalid(format!("cone index {c} out of range")) };
            for (_, m2) in &psi {
                for r in &cone.rays {
                    let r = to_q(r);
                    if dot(&to_q(m2), &r) < dot(&to_q(m), &r) {
                        return invalid("Ψ is not concave");
                    }
                }
            }
        }
        let pieces = psi
            .iter()
            .map(|(_, m)| AffinePiece::new(m.iter().map(|&x| rational::int(-x)).collect(), Rational::zero()))
            .collect();
        let green = MaxAffine::new(n, pieces)?.canonical_form();
        let g = GreenData { psi, green };
        g.validate(fan)?;
        Ok(g)
    }

    pub fn slope_on(&self, fan: &Fan, cone: &Cone) -> Option<QVec> {
        self.psi.iter().find(|(c, _)| fan.cones().get(*c) == Some(cone)).map(|(_, m)| to_q(m))
    }

    /// `Ψ` well-defined on overlaps, defined on every maximal cone, and `g` a Green function for it.
    pub fn validate(&self, fan: &Fan) -> Result<()> {
        let n = fan.dim();
        if self.green.dim() != n {
            return invalid("Green function lives in the wrong dimension");
        }
        for (c, m) in &self.psi {
            if fan.cones().get(*c).is_none() || m.len() != n {
                return invalid(format!("bad Ψ entry for cone {c}"));
            }
        }
        for (i, (c1, m1)) in self.psi.iter().enumerate() {
            for (c2, m2) in &self.psi[i + 1..] {
                let meet = fan.cones()[*c1].intersection(n, &fan.cones()[*c2]);
                for r in &meet.rays {
                    if dot(&to_q(m1), &to_q(r)) != dot(&to_q(m2), &to_q(r)) {
                        return invalid("Ψ slopes disagree on a common face");
                    }
                }
            }
        }
        for sigma in fan.maximal_cones() {
            let Some(m) = self.psi.iter().find(|(c, _)| {
                let given = &fan.cones()[*c];
                sigma.rays.iter().all(|r| given.rays.contains(r)) && given.rays.len() == sigma.rays.len()
            }) else {
                return invalid(format!("Ψ has no slope on maximal cone {:?}", sigma.rays));
            };
            let shifted = self.green.add_affine(&to_q(&m.1), &Rational::zero());
            if matches!(extend_on(&shifted.canonical_form(), n, &sigma).extension, Extension::Fails | Extension::MinusInfinity) {
                return invalid(format!("green + m_σ has no finite limit toward {:?}", sigma.rays));
            }
        }
        Ok(())
    }
}

/// `φ = h - g₀` is θ-psh iff `h + m_σ` extends (finite or `-∞`) over every face of every `σ`.
pub fn is_theta_psh(h: &MaxAffine, green: &GreenData, fan: &Fan) -> bool {
    let n = fan.dim();
    let h = h.canonical_form();
    fan.maximal_cones().iter().all(|sigma| {
        let Some(m) = green.psi.iter().find(|(c, _)| fan.cones()[*c].rays == sigma.rays).map(|(_, m)| to_q(m)) else {
            return false;
        };
        let shifted = h.add_affine(&m, &Rational::zero());
        sigma.faces(n).iter().all(|tau| extend_on(&shifted, n, tau).extension != Extension::Fails)
    })
}

#[derive(Serialize, Deserialize)]
struct PsiJson {
    cone: usize,
    slope: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
struct GreenJson {
    psi: Vec<PsiJson>,
    green: MaxAffine,
}

impl TryFrom<GreenJson> for GreenData {
    type Error = crate::Error;
    fn try_from(j: GreenJson) -> Result<Self> {
        Ok(GreenData { psi: j.psi.into_iter().map(|p| (p.cone, p.slope)).collect(), green: j.green })
    }
}

impl From<GreenData> for GreenJson {
    fn from(g: GreenData) -> Self {
        GreenJson { psi: g.psi.into_iter().map(|(cone, slope)| PsiJson { cone, slope }).collect(), green: g.green }
    }
}
