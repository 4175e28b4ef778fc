//! Convex piecewise-affine functions `f(u) = max_i ⟨m_i, u⟩ + c_i` with rational data.

use num::{Integer, One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::dd::{Cut, Dd, Vertex};
use crate::error::{invalid, Result};
use crate::linalg;
use crate::polytope::{Halfspace, Polytope};
use crate::rational::{self, dot, Rational, QVec, Q};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AffinePiece {
    pub slope: QVec,
    pub offset: Rational,
}

impl AffinePiece {
    pub fn new(slope: QVec, offset: Rational) -> Self {
        AffinePiece { slope, offset }
    }

    pub fn eval(&self, u: &[Rational]) -> Rational {
        dot(&self.slope, u) + &self.offset
    }

    pub fn eval_f64(&self, u: &[f64]) -> f64 {
        rational::to_f64(&self.offset)
            + self.slope.iter().zip(u).map(|(m, x)| rational::to_f64(m) * x).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MaxAffineJson", into = "MaxAffineJson")]
pub struct MaxAffine {
    dim: usize,
    pieces: Vec<AffinePiece>,
}

/// A vertex of the domains-of-linearity decomposition, with the pieces active there.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecompositionVertex {
    pub point: QVec,
    pub value: Rational,
    pub active: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cell {
    pub piece: usize,
    /// Irredundant inequalities cutting out the closed cell.
    pub halfspaces: Vec<Halfspace>,
    pub neighbors: Vec<usize>,
    pub vertices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    pub function: MaxAffine,
    pub vertices: Vec<DecompositionVertex>,
    pub cells: Vec<Cell>,
}

/// Capped epigraph of a max of affine pieces over a polytopal region, in vertex form.
pub(crate) struct Epigraph {
    pub dd: Dd<Rational>,
    pub region_cuts: usize,
    pub hi_cut: usize,
    /// Cut index of each piece.
    pub piece_cut: Vec<usize>,
}

impl Epigraph {
    pub fn new(region: &Dd<Rational>, pieces: &[AffinePiece]) -> Self {
        let n = region.dim;
        let eval_max = |p: &[Rational]| pieces.iter().map(|h| h.eval(p)).max().expect("nonempty");
        let mut t_hi = None::<Rational>;
        let mut t_lo = None::<Rational>;
        for v in &region.vertices {
            let hi = eval_max(&v.point);
            let lo = pieces[0].eval(&v.point);
            if t_hi.as_ref().is_none_or(|t| &hi > t) {
                t_hi = Some(hi);
            }
            if t_lo.as_ref().is_none_or(|t| &lo < t) {
                t_lo = Some(lo);
            }
        }
        let t_hi = t_hi.expect("nonempty region") + Rational::one();
        let t_lo = t_lo.expect("nonempty region") - Rational::one();
        let lift = |normal: &[Rational], last: Rational| {
            let mut a = normal.to_vec();
            a.push(last);
            a
        };
        let mut cuts: Vec<Cut<Rational>> =
            region.cuts.iter().map(|c| Cut::new(lift(&c.normal, Rational::zero()), c.offset.clone())).collect();
        let region_cuts = cuts.len();
        let mut e = vec![Rational::zero(); n];
        cuts.push(Cut::new(lift(&e, -Rational::one()), -t_lo.clone()));
        e.push(Rational::one());
        cuts.push(Cut::new(e, t_hi.clone()));
        let hi_cut = region_cuts + 1;
        let mut vertices = Vec::new();
        for v in &region.vertices {
            for (t, k) in [(&t_lo, region_cuts), (&t_hi, hi_cut)] {
                let mut point = v.point.clone();
                point.push(t.clone());
                let mut tight = v.tight.clone();
                tight.push(k);
                vertices.push(Vertex { point, tight });
            }
        }
        let mut dd = Dd { dim: n + 1, cuts, vertices };
        let center: QVec = {
            let k = Rational::from_integer(region.vertices.len().into());
            (0..n).map(|j| region.vertices.iter().map(|v| v.point[j].clone()).sum::<Rational>() / &k).collect()
        };
        let mut order: Vec<usize> = (0..pieces.len()).collect();
        let at_center: Vec<Rational> = pieces.iter().map(|h| h.eval(&center)).collect();
        order.sort_by(|&a, &b| at_center[b].cmp(&at_center[a]));
        let mut piece_cut = vec![0; pieces.len()];
        for i in order {
            let mut normal = pieces[i].slope.clone();
            normal.push(-Rational::one());
            piece_cut[i] = dd.clip(Cut::new(normal, -pieces[i].offset.clone()));
        }
        Epigraph { dd, region_cuts, hi_cut, piece_cut }
    }

    fn cut_piece(&self) -> Vec<Option<usize>> {
        let mut back = vec![None; self.dd.cuts.len()];
        for (i, &k) in self.piece_cut.iter().enumerate() {
            back[k] = Some(i);
        }
        back
    }

    /// Lower vertices `(u, f(u), active pieces, touches region boundary)`.
    pub fn lower_vertices(&self) -> Vec<(QVec, Rational, Vec<usize>, bool)> {
        let back = self.cut_piece();
        let n = self.dd.dim - 1;
        self.dd
            .vertices
            .iter()
            .filter(|v| v.tight.binary_search(&self.hi_cut).is_err())
            .map(|v| {
                let mut active: Vec<usize> = v.tight.iter().filter_map(|&k| back[k]).collect();
                active.sort_unstable();
                let boundary = v.tight.iter().any(|&k| k < self.region_cuts);
                (v.point[..n].to_vec(), v.point[n].clone(), active, boundary)
            })
            .collect()
    }

    pub fn piece_face_dim(&self, piece: usize) -> Option<usize> {
        self.dd.affine_dim_of(&self.dd.tight_on(self.piece_cut[piece]))
    }

    pub fn ridge_dim(&self, a: usize, b: usize) -> Option<usize> {
        let ta = self.dd.tight_on(self.piece_cut[a]);
        let tb = self.dd.tight_on(self.piece_cut[b]);
        let common: Vec<usize> = ta.into_iter().filter(|v| tb.contains(v)).collect();
        self.dd.affine_dim_of(&common)
    }
}

/// Box strictly containing a point of every minimal face of every cell of `pieces`.
fn bounding_box(dim: usize, pieces: &[AffinePiece]) -> Dd<Rational> {
    let den = pieces.iter().fold(num::BigInt::one(), |acc, p| {
        p.slope.iter().fold(acc.lcm(p.offset.denom()), |a, x| a.lcm(x.denom()))
    });
    let d = Rational::from_integer(den);
    let mut a = Rational::zero();
    let mut e = Rational::zero();
    for p in pieces {
        let s: Rational = p.slope.iter().map(|x| (x * &d).abs()).sum();
        a = a.max(s);
        e = e.max((&p.offset * &d).abs());
    }
    let m = (a + e) * Rational::from_integer(2.into()) + Rational::one();
    let w = num::pow(m, dim.max(1)) + Rational::one();
    Dd::cube(&vec![-w.clone(); dim], &vec![w; dim])
}

impl MaxAffine {
    pub fn new(dim: usize, pieces: Vec<AffinePiece>) -> Result<Self> {
        if pieces.is_empty() {
            return invalid("MaxAffine needs at least one piece");
        }
        if let Some(p) = pieces.iter().find(|p| p.slope.len() != dim) {
            return invalid(format!("slope of length {} in dimension {dim}", p.slope.len()));
        }
        Ok(MaxAffine { dim, pieces })
    }

    pub fn from_slopes(dim: usize, pieces: Vec<(QVec, Rational)>) -> Result<Self> {
        MaxAffine::new(dim, pieces.into_iter().map(|(m, c)| AffinePiece::new(m, c)).collect())
    }

    pub fn constant(dim: usize, c: Rational) -> Self {
        MaxAffine { dim, pieces: vec![AffinePiece::new(vec![Rational::zero(); dim], c)] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn eval(&self, u: &[Rational]) -> Rational {
        self.pieces.iter().map(|p| p.eval(u)).max().expect("nonempty")
    }

    pub fn eval_f64(&self, u: &[f64]) -> f64 {
        self.pieces.iter().map(|p| p.eval_f64(u)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices of pieces attaining the maximum at `u`.
    pub fn active(&self, u: &[Rational]) -> Vec<usize> {
        let vals: Vec<Rational> = self.pieces.iter().map(|p| p.eval(u)).collect();
        let best = vals.iter().max().expect("nonempty");
        (0..vals.len()).filter(|&i| &vals[i] == best).collect()
    }

    fn deduped(&self) -> Vec<AffinePiece> {
        let mut ps = self.pieces.clone();
        ps.sort();
        ps.dedup();
        // same slope: keep the largest offset
        let mut out: Vec<AffinePiece> = Vec::with_capacity(ps.len());
        for p in ps {
            match out.last_mut() {
                Some(last) if last.slope == p.slope => *last = p,
                _ => out.push(p),
            }
        }
        out
    }

    pub(crate) fn epigraph(&self) -> Epigraph {
        Epigraph::new(&bounding_box(self.dim, &self.pieces), &self.pieces)
    }

    /// Same function with only pieces that are maximal on a full-dimensional set,
    /// ordered lexicographically by slope then offset.
    pub fn canonical_form(&self) -> MaxAffine {
        let pieces = self.deduped();
        if pieces.len() == 1 {
            return MaxAffine { dim: self.dim, pieces };
        }
        let epi = Epigraph::new(&bounding_box(self.dim, &pieces), &pieces);
        let keep: Vec<AffinePiece> = (0..pieces.len())
            .filter(|&i| epi.piece_face_dim(i) == Some(self.dim))
            .map(|i| pieces[i].clone())
            .collect();
        MaxAffine { dim: self.dim, pieces: keep }
    }

    pub fn is_canonical(&self) -> bool {
        *self == self.canonical_form()
    }

    /// Vertices (0-dimensional cells) of the decomposition; empty when `f` has lineality.
    pub fn vertices(&self) -> Vec<DecompositionVertex> {
        if self.pieces.len() == 1 {
            return if self.dim == 0 {
                vec![DecompositionVertex { point: vec![], value: self.pieces[0].offset.clone(), active: vec![0] }]
            } else {
                Vec::new()
            };
        }
        let mut out: Vec<DecompositionVertex> = self
            .epigraph()
            .lower_vertices()
            .into_iter()
            .filter(|(_, _, _, boundary)| !boundary)
            .map(|(point, value, _, _)| {
                let active = self.active(&point);
                DecompositionVertex { point, value, active }
            })
            .collect();
        out.sort_by(|a, b| a.point.cmp(&b.point));
        out.dedup_by(|a, b| a.point == b.point);
        out
    }

    /// One point on each minimal face of the decomposition (vertices when there is no lineality).
    pub fn minimal_face_points(&self) -> Vec<QVec> {
        let s0 = &self.pieces[0].slope;
        let diffs: Vec<QVec> = self.pieces[1..].iter().map(|p| rational::sub(&p.slope, s0)).collect();
        let mut ech = diffs.clone();
        let pivots = linalg::rref(&mut ech, self.dim);
        if pivots.len() == self.dim {
            return self.vertices().into_iter().map(|v| v.point).collect();
        }
        let restricted = MaxAffine {
            dim: pivots.len(),
            pieces: self
                .pieces
                .iter()
                .map(|p| AffinePiece::new(pivots.iter().map(|&j| p.slope[j].clone()).collect(), p.offset.clone()))
                .collect(),
        };
        restricted
            .vertices()
            .into_iter()
            .map(|v| {
                let mut u = vec![Rational::zero(); self.dim];
                for (k, &j) in pivots.iter().enumerate() {
                    u[j] = v.point[k].clone();
                }
                u
            })
            .collect()
    }

    pub fn stability_set(&self) -> Polytope {
        Polytope::from_vertices(self.dim, self.pieces.iter().map(|p| p.slope.clone()).collect())
            .expect("nonempty slope set")
    }

    pub fn support_function(body: &Polytope) -> MaxAffine {
        MaxAffine {
            dim: body.dim(),
            pieces: body.vertices().iter().map(|v| AffinePiece::new(v.clone(), Rational::zero())).collect(),
        }
    }

    pub fn subdifferential(&self, u: &[Rational]) -> Polytope {
        let slopes = self.active(u).into_iter().map(|i| self.pieces[i].slope.clone()).collect();
        Polytope::from_vertices(self.dim, slopes).expect("some piece is active")
    }

    pub fn legendre_transform(&self) -> LegendreDual {
        let pieces = self
            .minimal_face_points()
            .into_iter()
            .map(|p| {
                let v = self.eval(&p);
                AffinePiece::new(p, -v)
            })
            .collect();
        LegendreDual { domain: self.stability_set(), function: MaxAffine { dim: self.dim, pieces } }
    }

    pub fn induced_decomposition(&self) -> Decomposition {
        let f = self.canonical_form();
        let n = f.dim;
        let vertices = f.vertices();
        let k = f.pieces.len();
        let mut cells: Vec<Cell> = (0..k)
            .map(|i| Cell {
                piece: i,
                halfspaces: Vec::new(),
                neighbors: Vec::new(),
                vertices: (0..vertices.len()).filter(|&v| vertices[v].active.contains(&i)).collect(),
            })
            .collect();
        if k > 1 {
            let epi = f.epigraph();
            for i in 0..k {
                for j in i + 1..k {
                    if n >= 1 && epi.ridge_dim(i, j) == Some(n - 1) {
                        cells[i].neighbors.push(j);
                        cells[j].neighbors.push(i);
                    }
                }
            }
            for cell in cells.iter_mut() {
                let pi = &f.pieces[cell.piece];
                cell.halfspaces = cell
                    .neighbors
                    .iter()
                    .map(|&j| {
                        let pj = &f.pieces[j];
                        Halfspace::new(rational::sub(&pj.slope, &pi.slope), &pi.offset - &pj.offset)
                    })
                    .collect();
            }
        }
        Decomposition { function: f, vertices, cells }
    }

    /// Pointwise maximum with another function.
    pub fn max_with(&self, other: &MaxAffine) -> MaxAffine {
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().cloned());
        MaxAffine { dim: self.dim, pieces }.canonical_form()
    }

    /// Pointwise sum; the dual cells add as Minkowski sums.
    pub fn sum(&self, other: &MaxAffine) -> MaxAffine {
        let mut pieces = Vec::with_capacity(self.pieces.len() * other.pieces.len());
        for a in &self.pieces {
            for b in &other.pieces {
                pieces.push(AffinePiece::new(rational::add(&a.slope, &b.slope), &a.offset + &b.offset));
            }
        }
        MaxAffine { dim: self.dim, pieces }.canonical_form()
    }

    pub fn scale(&self, s: &Rational) -> MaxAffine {
        assert!(!s.is_negative(), "scaling must preserve convexity");
        MaxAffine {
            dim: self.dim,
            pieces: self
                .pieces
                .iter()
                .map(|p| AffinePiece::new(rational::scale(s, &p.slope), s * &p.offset))
                .collect(),
        }
    }

    pub fn add_affine(&self, slope: &[Rational], c: &Rational) -> MaxAffine {
        MaxAffine {
            dim: self.dim,
            pieces: self
                .pieces
                .iter()
                .map(|p| AffinePiece::new(rational::add(&p.slope, slope), &p.offset + c))
                .collect(),
        }
    }

    /// `u ↦ f(u - t)`.
    pub fn translate(&self, t: &[Rational]) -> MaxAffine {
        MaxAffine {
            dim: self.dim,
            pieces: self
                .pieces
                .iter()
                .map(|p| AffinePiece::new(p.slope.clone(), &p.offset - dot(&p.slope, t)))
                .collect(),
        }
    }

    /// `f ∘ E` for `E(u) = A u + t`.
    pub fn pullback(&self, e: &AffineMap) -> Result<MaxAffine> {
        if e.target_dim != self.dim {
            return invalid(format!("map lands in dimension {}, function lives in {}", e.target_dim, self.dim));
        }
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                let slope = (0..e.source_dim)
                    .map(|j| (0..e.target_dim).map(|i| &e.matrix[i][j] * &p.slope[i]).sum())
                    .collect();
                AffinePiece::new(slope, dot(&p.slope, &e.translation) + &p.offset)
            })
            .collect();
        MaxAffine::new(e.source_dim, pieces)
    }
}

/// The conjugate `g(x) = sup_u ⟨x,u⟩ - f(u)` on its domain `Δ(f)`, stored as a max of
/// affine pieces whose restriction to `domain` is the conjugate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegendreDual {
    pub domain: Polytope,
    pub function: MaxAffine,
}

impl LegendreDual {
    /// Value at `x`, or `None` outside the domain (where the conjugate is `+∞`).
    pub fn eval(&self, x: &[Rational]) -> Option<Rational> {
        self.domain.contains(x).then(|| self.function.eval(x))
    }

    /// The conjugate of the conjugate, computed from the vertices of the subdivision of the domain.
    pub fn transform(&self) -> MaxAffine {
        let region = self.domain.to_dd::<Rational>();
        let epi = Epigraph::new(&region, &self.function.pieces);
        let pieces = epi
            .lower_vertices()
            .into_iter()
            .map(|(x, t, _, _)| AffinePiece::new(x, -t))
            .collect();
        MaxAffine { dim: self.domain.dim(), pieces }.canonical_form()
    }
}

/// `E(u) = A u + t` from `ℚ^source_dim` to `ℚ^target_dim`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineMap {
    pub source_dim: usize,
    pub target_dim: usize,
    /// `target_dim` rows of length `source_dim`.
    pub matrix: Vec<QVec>,
    pub translation: QVec,
}

impl AffineMap {
    pub fn new(matrix: Vec<QVec>, translation: QVec) -> Result<Self> {
        let target_dim = matrix.len();
        let source_dim = matrix.first().map_or(0, Vec::len);
        if matrix.iter().any(|r| r.len() != source_dim) || translation.len() != target_dim {
            return invalid("inconsistent affine map dimensions");
        }
        Ok(AffineMap { source_dim, target_dim, matrix, translation })
    }

    pub fn identity(n: usize) -> Self {
        let matrix = (0..n)
            .map(|i| (0..n).map(|j| if i == j { Rational::one() } else { Rational::zero() }).collect())
            .collect();
        AffineMap { source_dim: n, target_dim: n, matrix, translation: vec![Rational::zero(); n] }
    }

    pub fn linear(matrix: Vec<QVec>) -> Result<Self> {
        let t = vec![Rational::zero(); matrix.len()];
        AffineMap::new(matrix, t)
    }

    pub fn apply(&self, u: &[Rational]) -> QVec {
        rational::add(&rational::mat_vec(&self.matrix, u), &self.translation)
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap) -> Result<AffineMap> {
        if inner.target_dim != self.source_dim {
            return invalid("affine maps are not composable");
        }
        let matrix = linalg::mat_mul(&self.matrix, &inner.matrix, self.source_dim, inner.source_dim);
        let translation = self.apply(&inner.translation);
        Ok(AffineMap { source_dim: inner.source_dim, target_dim: self.target_dim, matrix, translation })
    }
}

/// A convex function available through evaluation (and optionally exact supporting data).
pub trait ConvexOracle {
    fn dim(&self) -> usize;

    fn value(&self, u: &[f64]) -> f64;

    fn subgradient(&self, u: &[f64]) -> Vec<f64> {
        (0..u.len())
            .map(|j| {
                let h = 1e-6 * u[j].abs().max(1.0);
                let mut a = u.to_vec();
                let mut b = u.to_vec();
                a[j] += h;
                b[j] -= h;
                (self.value(&a) - self.value(&b)) / (2.0 * h)
            })
            .collect()
    }

    /// Exact value and a subgradient at a rational point, when the oracle can provide them.
    fn exact_support(&self, _u: &[Rational]) -> Option<(Rational, QVec)> {
        None
    }
}

impl ConvexOracle for MaxAffine {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, u: &[f64]) -> f64 {
        self.eval_f64(u)
    }
    fn exact_support(&self, u: &[Rational]) -> Option<(Rational, QVec)> {
        let i = self.active(u)[0];
        Some((self.eval(u), self.pieces[i].slope.clone()))
    }
}

/// `u ↦ ½ uᵀAu + ⟨b,u⟩ + c` with `A` symmetric positive semidefinite.
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub matrix: Vec<QVec>,
    pub linear: QVec,
    pub constant: Rational,
}

impl Quadratic {
    pub fn new(matrix: Vec<QVec>) -> Self {
        let n = matrix.len();
        Quadratic { matrix, linear: vec![Rational::zero(); n], constant: Rational::zero() }
    }

    pub fn eval(&self, u: &[Rational]) -> Rational {
        let au = rational::mat_vec(&self.matrix, u);
        dot(&au, u) / Rational::from_integer(2.into()) + dot(&self.linear, u) + &self.constant
    }

    pub fn gradient(&self, u: &[Rational]) -> QVec {
        rational::add(&rational::mat_vec(&self.matrix, u), &self.linear)
    }
}

impl ConvexOracle for Quadratic {
    fn dim(&self) -> usize {
        self.matrix.len()
    }
    fn value(&self, u: &[f64]) -> f64 {
        let q: Vec<Vec<f64>> = self.matrix.iter().map(|r| rational::vec_to_f64(r)).collect();
        let quad: f64 = q.iter().zip(u).map(|(row, ui)| ui * row.iter().zip(u).map(|(a, b)| a * b).sum::<f64>()).sum();
        0.5 * quad + rational::vec_to_f64(&self.linear).iter().zip(u).map(|(a, b)| a * b).sum::<f64>()
            + rational::to_f64(&self.constant)
    }
    fn subgradient(&self, u: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.linear)
            .map(|(row, b)| row.iter().zip(u).map(|(a, x)| rational::to_f64(a) * x).sum::<f64>() + rational::to_f64(b))
            .collect()
    }
    fn exact_support(&self, u: &[Rational]) -> Option<(Rational, QVec)> {
        Some((self.eval(u), self.gradient(u)))
    }
}

/// Closure-backed oracle.
pub struct FnOracle<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64> ConvexOracle for FnOracle<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, u: &[f64]) -> f64 {
        (self.f)(u)
    }
}

/// Largest denominator used when rounding floating-point slopes.
pub const SLOPE_DENOMINATOR: u64 = 1 << 20;

/// A rational affine minorant of `oracle` touching it at `p` up to `eps`.
pub(crate) fn supporting_piece(oracle: &dyn ConvexOracle, p: &[Rational], eps: &Rational) -> Result<AffinePiece> {
    let two_thirds = eps * Rational::new(2.into(), 3.into());
    if let Some((v, m)) = oracle.exact_support(p) {
        let top = v - dot(&m, p);
        let offset = rational::simplest_between(&(&top - &two_thirds), &top);
        return Ok(AffinePiece::new(m, offset));
    }
    let pf = rational::vec_to_f64(p);
    let v = oracle.value(&pf);
    let g = oracle.subgradient(&pf);
    if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return invalid(format!("oracle is not finite at {pf:?}"));
    }
    let m = g.iter().map(|&x| rational::approximate(x, SLOPE_DENOMINATOR)).collect::<Result<QVec>>()?;
    let top = rational::from_f64(v)? - dot(&m, p);
    let offset = if eps.is_zero() {
        top
    } else {
        let third = eps / Rational::from_integer(3.into());
        rational::simplest_between(&(&top - &two_thirds), &(top - third))
    };
    Ok(AffinePiece::new(m, offset))
}

/// Max of rational supporting affine functions of `oracle` at the grid points.
pub fn rational_pl_approximate(oracle: &dyn ConvexOracle, grid: &[QVec], eps: &Rational) -> Result<MaxAffine> {
    if grid.is_empty() {
        return invalid("empty grid");
    }
    if eps.is_negative() {
        return invalid("negative tolerance");
    }
    let pieces = grid.iter().map(|p| supporting_piece(oracle, p, eps)).collect::<Result<Vec<_>>>()?;
    Ok(MaxAffine::new(oracle.dim(), pieces)?.canonical_form())
}

#[derive(Serialize, Deserialize)]
pub(crate) struct PieceJson {
    pub slope: Vec<Q>,
    pub offset: Q,
}

impl From<&AffinePiece> for PieceJson {
    fn from(p: &AffinePiece) -> Self {
        PieceJson { slope: rational::wrap(&p.slope), offset: Q(p.offset.clone()) }
    }
}

impl From<PieceJson> for AffinePiece {
    fn from(p: PieceJson) -> Self {
        AffinePiece::new(rational::unwrap(p.slope), p.offset.0)
    }
}

#[derive(Serialize, Deserialize)]
struct MaxAffineJson {
    dim: usize,
    pieces: Vec<PieceJson>,
}

impl TryFrom<MaxAffineJson> for MaxAffine {
    type Error = crate::Error;
    fn try_from(j: MaxAffineJson) -> Result<Self> {
        MaxAffine::new(j.dim, j.pieces.into_iter().map(AffinePiece::from).collect())
    }
}

impl From<MaxAffine> for MaxAffineJson {
    fn from(f: MaxAffine) -> Self {
        MaxAffineJson { dim: f.dim, pieces: f.pieces.iter().map(PieceJson::from).collect() }
    }
}
