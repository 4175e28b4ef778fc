//! Exact rational convex polytopes with synchronized vertex and half-space form.

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::dd::{Cut, Dd};
use crate::error::{invalid, Result};
use crate::linalg::{self, Field};
use crate::rational::{self, dot, factorial_q, Rational, QVec, Q};

/// `normal·x ≤ offset`, stored with a primitive integer normal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Halfspace {
    pub normal: QVec,
    pub offset: Rational,
}

impl Halfspace {
    pub fn new(normal: QVec, offset: Rational) -> Self {
        Halfspace { normal, offset }
    }

    fn normalized(self) -> Self {
        if self.normal.iter().all(Zero::is_zero) {
            return self;
        }
        let first = rational::primitive(&self.normal);
        // scale factor taking `normal` to its primitive form
        let idx = self.normal.iter().position(|x| !x.is_zero()).unwrap();
        let s = Rational::from_integer(first[idx].clone()) / &self.normal[idx];
        Halfspace {
            normal: first.into_iter().map(Rational::from_integer).collect(),
            offset: s * self.offset,
        }
    }

    pub fn slack(&self, x: &[Rational]) -> Rational {
        &self.offset - dot(&self.normal, x)
    }

    pub fn contains(&self, x: &[Rational]) -> bool {
        !self.slack(x).is_negative()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeJson", into = "PolytopeJson")]
pub struct Polytope {
    dim: usize,
    vertices: Vec<QVec>,
    halfspaces: Vec<Halfspace>,
}

impl Polytope {
    pub fn from_vertices(dim: usize, points: Vec<QVec>) -> Result<Self> {
        if points.is_empty() {
            return invalid("empty polytope");
        }
        if points.iter().any(|p| p.len() != dim) {
            return invalid(format!("point dimension differs from {dim}"));
        }
        let mut pts = points;
        pts.sort();
        pts.dedup();
        if dim == 0 {
            return Ok(Polytope { dim, vertices: pts, halfspaces: Vec::new() });
        }
        let v0 = pts[0].clone();
        let diffs: Vec<QVec> = pts[1..].iter().map(|p| rational::sub(p, &v0)).collect();
        let mut echelon = diffs.clone();
        let pivots = linalg::rref(&mut echelon, dim);
        let k = pivots.len();
        let mut halfspaces = Vec::new();
        for w in linalg::nullspace(&diffs, dim) {
            let b = dot(&w, &v0);
            halfspaces.push(Halfspace::new(w.iter().map(|x| -x).collect(), -b.clone()).normalized());
            halfspaces.push(Halfspace::new(w, b).normalized());
        }
        let vertices = if k == 0 {
            vec![v0]
        } else {
            let ys: Vec<QVec> = pts.iter().map(|p| pivots.iter().map(|&j| p[j].clone()).collect()).collect();
            let (facets, extreme) = hull_full_dim(k, &ys);
            for (z, beta) in facets {
                let mut normal = vec![Rational::zero(); dim];
                for (j, &p) in pivots.iter().enumerate() {
                    normal[p] = z[j].clone();
                }
                halfspaces.push(Halfspace::new(normal, beta).normalized());
            }
            extreme.into_iter().map(|i| pts[i].clone()).collect()
        };
        halfspaces.sort();
        halfspaces.dedup();
        Ok(Polytope { dim, vertices, halfspaces })
    }

    pub fn from_halfspaces(dim: usize, halfspaces: Vec<Halfspace>) -> Result<Self> {
        if halfspaces.iter().any(|h| h.normal.len() != dim) {
            return invalid(format!("halfspace dimension differs from {dim}"));
        }
        if dim == 0 {
            if halfspaces.iter().any(|h| h.offset.is_negative()) {
                return invalid("empty polytope");
            }
            return Polytope::from_vertices(0, vec![vec![]]);
        }
        // Cramer bound on vertex coordinates after scaling each row to integers
        let mut m = Rational::one();
        for h in &halfspaces {
            let mut row = h.normal.clone();
            row.push(h.offset.clone());
            let ints = rational::primitive(&row);
            let norm: Rational = ints.iter().map(|x| Rational::from_integer(x.abs())).sum();
            if norm > m {
                m = norm;
            }
        }
        let w = num::pow(m, dim) + Rational::one();
        let mut dd = Dd::cube(&vec![-w.clone(); dim], &vec![w; dim]);
        for h in halfspaces {
            dd.clip(Cut::new(h.normal, h.offset));
            if dd.is_empty() {
                return invalid("empty polytope");
            }
        }
        if dd.vertices.iter().any(|v| v.tight.first().is_some_and(|&k| k < 2 * dim)) {
            return invalid("unbounded polyhedron");
        }
        Polytope::from_vertices(dim, dd.vertices.into_iter().map(|v| v.point).collect())
    }

    pub fn point(p: QVec) -> Self {
        let dim = p.len();
        Polytope::from_vertices(dim, vec![p]).expect("single point")
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: Rational, hi: Rational) -> Result<Self> {
        let mut hs = Vec::new();
        for j in 0..dim {
            let mut e = vec![Rational::zero(); dim];
            e[j] = Rational::one();
            hs.push(Halfspace::new(e.clone(), hi.clone()));
            hs.push(Halfspace::new(e.iter().map(|x| -x).collect(), -lo.clone()));
        }
        Polytope::from_halfspaces(dim, hs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[QVec] {
        &self.vertices
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn affine_dim(&self) -> usize {
        let pts: Vec<&[Rational]> = self.vertices.iter().map(|v| v.as_slice()).collect();
        linalg::affine_dim(&pts).unwrap_or(0)
    }

    pub fn is_full_dimensional(&self) -> bool {
        self.affine_dim() == self.dim
    }

    pub fn contains(&self, x: &[Rational]) -> bool {
        self.halfspaces.iter().all(|h| h.contains(x))
    }

    /// Strict interior membership (false for lower-dimensional polytopes).
    pub fn interior_contains(&self, x: &[Rational]) -> bool {
        self.is_full_dimensional() && self.halfspaces.iter().all(|h| h.slack(x).is_positive())
    }

    pub fn vertex_centroid(&self) -> QVec {
        let n = Rational::from_integer(self.vertices.len().into());
        (0..self.dim)
            .map(|j| self.vertices.iter().map(|v| v[j].clone()).sum::<Rational>() / &n)
            .collect()
    }

    /// `dim!` times the Lebesgue volume; lattice covolume one.
    pub fn normalized_volume(&self) -> Rational {
        if self.dim == 0 {
            return Rational::one();
        }
        if !self.is_full_dimensional() {
            return Rational::zero();
        }
        if self.vertices.len() == self.dim + 1 {
            let rows: Vec<QVec> = self.vertices[1..].iter().map(|v| rational::sub(v, &self.vertices[0])).collect();
            return linalg::det(&rows).abs();
        }
        self.to_dd::<Rational>().normalized_volume()
    }

    pub fn volume(&self) -> Rational {
        self.normalized_volume() / factorial_q(self.dim)
    }

    pub fn translate(&self, t: &[Rational]) -> Polytope {
        Polytope {
            dim: self.dim,
            vertices: self.vertices.iter().map(|v| rational::add(v, t)).collect(),
            halfspaces: self
                .halfspaces
                .iter()
                .map(|h| Halfspace::new(h.normal.clone(), &h.offset + dot(&h.normal, t)))
                .collect(),
        }
    }

    /// Vertices ⊆ other (hence self ⊆ other).
    pub fn is_subset_of(&self, other: &Polytope) -> bool {
        self.vertices.iter().all(|v| other.contains(v))
    }

    pub(crate) fn cuts<F: Field>(&self) -> Vec<Cut<F>> {
        self.halfspaces
            .iter()
            .map(|h| Cut::new(h.normal.iter().map(F::from_rational).collect(), F::from_rational(&h.offset)))
            .collect()
    }

    /// Vertex-form clipping state; tight sets are decided exactly.
    pub(crate) fn to_dd<F: Field>(&self) -> Dd<F> {
        let exact: Dd<Rational> = Dd::from_parts(self.dim, self.cuts(), self.vertices.clone());
        Dd {
            dim: self.dim,
            cuts: self.cuts(),
            vertices: exact
                .vertices
                .into_iter()
                .map(|v| crate::dd::Vertex {
                    point: v.point.iter().map(F::from_rational).collect(),
                    tight: v.tight,
                })
                .collect(),
        }
    }
}

/// Facets `z·y ≤ beta` and extreme-point indices of a full-dimensional point set in `ℚ^k`,
/// via the polar body about an interior point.
fn hull_full_dim(k: usize, ys: &[QVec]) -> (Vec<(QVec, Rational)>, Vec<usize>) {
    let mut basis = vec![0usize];
    let mut rows: Vec<QVec> = Vec::new();
    for (i, y) in ys.iter().enumerate().skip(1) {
        if basis.len() == k + 1 {
            break;
        }
        let mut trial = rows.clone();
        trial.push(rational::sub(y, &ys[0]));
        if linalg::rank(&trial, k) == trial.len() {
            rows = trial;
            basis.push(i);
        }
    }
    let kq = Rational::from_integer((k + 1).into());
    let c: QVec = (0..k).map(|j| basis.iter().map(|&i| ys[i][j].clone()).sum::<Rational>() / &kq).collect();
    let r: Vec<QVec> = ys.iter().map(|y| rational::sub(y, &c)).collect();

    let mut cut_point: Vec<usize> = basis.clone();
    let cuts: Vec<Cut<Rational>> = basis.iter().map(|&i| Cut::new(r[i].clone(), Rational::one())).collect();
    let mut start = Vec::new();
    for skip in 0..basis.len() {
        let a: Vec<QVec> = basis.iter().enumerate().filter(|&(j, _)| j != skip).map(|(_, &i)| r[i].clone()).collect();
        let z = linalg::solve(&a, &vec![Rational::one(); k]).expect("simplex facets are independent");
        start.push(z);
    }
    let mut dd = Dd::from_parts(k, cuts, start);
    for (i, ri) in r.iter().enumerate() {
        if !basis.contains(&i) {
            dd.clip(Cut::new(ri.clone(), Rational::one()));
            cut_point.push(i);
        }
    }
    let facets = dd
        .vertices
        .iter()
        .map(|v| {
            let beta = Rational::one() + dot(&v.point, &c);
            (v.point.clone(), beta)
        })
        .collect();
    let mut extreme = Vec::new();
    for (cut, &i) in cut_point.iter().enumerate() {
        let normals: Vec<QVec> = dd.tight_on(cut).into_iter().map(|v| dd.vertices[v].point.clone()).collect();
        if linalg::rank(&normals, k) == k {
            extreme.push(i);
        }
    }
    (facets, extreme)
}

#[derive(Serialize, Deserialize)]
struct HalfspaceJson {
    normal: Vec<Q>,
    offset: Q,
}

#[derive(Serialize, Deserialize)]
struct PolytopeJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vertices: Option<Vec<Vec<Q>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    halfspaces: Option<Vec<HalfspaceJson>>,
}

impl TryFrom<PolytopeJson> for Polytope {
    type Error = crate::Error;

    fn try_from(j: PolytopeJson) -> Result<Self> {
        let from_v = match &j.vertices {
            Some(vs) => {
                let pts: Vec<QVec> = vs.iter().map(|v| rational::unwrap(v.clone())).collect();
                let dim = j.dim.or_else(|| pts.first().map(Vec::len)).unwrap_or(0);
                Some(Polytope::from_vertices(dim, pts)?)
            }
            None => None,
        };
        let from_h = match j.halfspaces {
            Some(hs) => {
                let hs: Vec<Halfspace> =
                    hs.into_iter().map(|h| Halfspace::new(rational::unwrap(h.normal), h.offset.0)).collect();
                let dim = j.dim.or_else(|| hs.first().map(|h| h.normal.len())).unwrap_or(0);
                Some(Polytope::from_halfspaces(dim, hs)?)
            }
            None => None,
        };
        match (from_v, from_h) {
            (Some(a), Some(b)) if a != b => invalid("vertex and halfspace descriptions disagree"),
            (Some(a), _) | (None, Some(a)) => Ok(a),
            (None, None) => invalid("polytope needs vertices or halfspaces"),
        }
    }
}

impl From<Polytope> for PolytopeJson {
    fn from(p: Polytope) -> Self {
        PolytopeJson {
            dim: Some(p.dim),
            vertices: Some(p.vertices.iter().map(|v| rational::wrap(v)).collect()),
            halfspaces: Some(
                p.halfspaces
                    .iter()
                    .map(|h| HalfspaceJson { normal: rational::wrap(&h.normal), offset: Q(h.offset.clone()) })
                    .collect(),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{frac, int, qvec};

    fn square() -> Polytope {
        Polytope::from_vertices(2, vec![qvec(&[0, 0]), qvec(&[1, 0]), qvec(&[0, 1]), qvec(&[1, 1])]).unwrap()
    }

    #[test]
    fn square_representations_agree() {
        let p = square();
        assert_eq!(p.vertices().len(), 4);
        assert_eq!(p.halfspaces().len(), 4);
        let q = Polytope::from_halfspaces(2, p.halfspaces().to_vec()).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.volume(), int(1));
        assert_eq!(p.normalized_volume(), int(2));
    }

    #[test]
    fn interior_points_are_not_vertices() {
        let p = Polytope::from_vertices(
            2,
            vec![qvec(&[0, 0]), qvec(&[2, 0]), qvec(&[0, 2]), qvec(&[1, 0]), qvec(&[1, 1]), qvec(&[0, 1]), vec![frac(1, 3), frac(1, 3)]],
        )
        .unwrap();
        assert_eq!(p.vertices().len(), 3);
        assert_eq!(p.volume(), int(2));
    }

    #[test]
    fn segment_in_the_plane() {
        let p = Polytope::from_vertices(2, vec![qvec(&[0, 0]), qvec(&[1, 1]), qvec(&[2, 2])]).unwrap();
        assert_eq!(p.vertices(), &[qvec(&[0, 0]), qvec(&[2, 2])]);
        assert_eq!(p.affine_dim(), 1);
        assert!(p.contains(&qvec(&[1, 1])));
        assert!(!p.contains(&qvec(&[1, 0])));
        assert!(!p.contains(&qvec(&[3, 3])));
        assert_eq!(p.volume(), int(0));
        let q = Polytope::from_halfspaces(2, p.halfspaces().to_vec()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn unbounded_and_empty_rejected() {
        let h = vec![Halfspace::new(qvec(&[1, 0]), int(1))];
        assert!(Polytope::from_halfspaces(2, h).is_err());
        let h = vec![Halfspace::new(qvec(&[1]), int(0)), Halfspace::new(qvec(&[-1]), int(-1))];
        assert!(Polytope::from_halfspaces(1, h).is_err());
        assert!(Polytope::from_vertices(1, vec![]).is_err());
    }

    #[test]
    fn octahedron_volume() {
        let mut pts = Vec::new();
        for j in 0..3 {
            for s in [-1, 1] {
                let mut v = qvec(&[0, 0, 0]);
                v[j] = int(s);
                pts.push(v);
            }
        }
        pts.push(qvec(&[0, 0, 0]));
        let p = Polytope::from_vertices(3, pts).unwrap();
        assert_eq!(p.vertices().len(), 6);
        assert_eq!(p.halfspaces().len(), 8);
        assert_eq!(p.volume(), frac(4, 3));
    }

    #[test]
    fn json_round_trip() {
        let p = square();
        let s = serde_json::to_string(&p).unwrap();
        let q: Polytope = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        let q: Polytope = serde_json::from_str(r#"{"vertices":[["0"],["1/2"]]}"#).unwrap();
        assert_eq!(q.volume(), frac(1, 2));
    }
}
