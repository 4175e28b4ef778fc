//! Incremental half-space clipping of a bounded polyhedron in vertex form.
//!
//! Every vertex carries the full set of constraints tight at it. Two vertices
//! span an edge iff their common tight constraints have rank `dim - 1`
//! (exact scalars) or no third vertex is tight on all of them (doubles).

use crate::linalg::{self, Field};

#[derive(Clone, Debug)]
pub struct Cut<F> {
    pub normal: Vec<F>,
    pub offset: F,
}

impl<F: Field> Cut<F> {
    pub fn new(normal: Vec<F>, offset: F) -> Self {
        Cut { normal, offset }
    }

    /// `(normal·x - offset, magnitude)`; the magnitude scales the float tolerance.
    fn slack(&self, x: &[F]) -> (F, F) {
        let mut s = -self.offset.clone();
        let mut mag = self.offset.abs_val();
        for (a, b) in self.normal.iter().zip(x) {
            let t = a.clone() * b.clone();
            if !F::EXACT {
                mag = mag + t.abs_val();
            }
            s = s + t;
        }
        (s, mag)
    }
}

#[derive(Clone, Debug)]
pub struct Vertex<F> {
    pub point: Vec<F>,
    pub tight: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Dd<F> {
    pub dim: usize,
    pub cuts: Vec<Cut<F>>,
    pub vertices: Vec<Vertex<F>>,
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    intersect(a, b).len() == a.len()
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    In,
    On,
    Out,
}

impl<F: Field> Dd<F> {
    /// Builds the state from a known vertex list; tight sets are found by evaluation.
    pub fn from_parts(dim: usize, cuts: Vec<Cut<F>>, points: Vec<Vec<F>>) -> Self {
        let vertices = points
            .into_iter()
            .map(|point| {
                let tight = cuts
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| {
                        let (s, m) = c.slack(&point);
                        s.negligible(&m)
                    })
                    .map(|(k, _)| k)
                    .collect();
                Vertex { point, tight }
            })
            .collect();
        Dd { dim, cuts, vertices }
    }

    /// Axis-aligned box `lo ≤ x ≤ hi`; cut `2j` is `x_j ≤ hi_j`, cut `2j+1` is `-x_j ≤ -lo_j`.
    pub fn cube(lo: &[F], hi: &[F]) -> Self {
        let dim = lo.len();
        let mut cuts = Vec::with_capacity(2 * dim);
        for j in 0..dim {
            let mut e = vec![F::zero(); dim];
            e[j] = F::one();
            cuts.push(Cut::new(e.clone(), hi[j].clone()));
            cuts.push(Cut::new(e.into_iter().map(|x| -x).collect(), -lo[j].clone()));
        }
        let mut vertices = Vec::with_capacity(1 << dim);
        for mask in 0..(1usize << dim) {
            let mut point = Vec::with_capacity(dim);
            let mut tight = Vec::with_capacity(dim);
            for j in 0..dim {
                if mask >> j & 1 == 1 {
                    point.push(hi[j].clone());
                    tight.push(2 * j);
                } else {
                    point.push(lo[j].clone());
                    tight.push(2 * j + 1);
                }
            }
            vertices.push(Vertex { point, tight });
        }
        Dd { dim, cuts, vertices }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn adjacent(&self, common: &[usize], a: usize, b: usize) -> bool {
        if self.dim == 0 || common.len() + 1 < self.dim {
            return false;
        }
        if F::EXACT {
            let rows: Vec<Vec<F>> = common.iter().map(|&k| self.cuts[k].normal.clone()).collect();
            linalg::rank(&rows, self.dim) + 1 == self.dim
        } else {
            !self
                .vertices
                .iter()
                .enumerate()
                .any(|(w, v)| w != a && w != b && is_subset(common, &v.tight))
        }
    }

    /// Intersects with `cut`; returns the index assigned to the cut.
    pub fn clip(&mut self, cut: Cut<F>) -> usize {
        let idx = self.cuts.len();
        let mut sides = Vec::with_capacity(self.vertices.len());
        let mut slacks = Vec::with_capacity(self.vertices.len());
        let mut any_out = false;
        for v in &self.vertices {
            let (s, m) = cut.slack(&v.point);
            let side = if s.negligible(&m) {
                Side::On
            } else if s > F::zero() {
                any_out = true;
                Side::Out
            } else {
                Side::In
            };
            sides.push(side);
            slacks.push(s);
        }
        self.cuts.push(cut);
        if !any_out {
            for (v, side) in self.vertices.iter_mut().zip(&sides) {
                if *side == Side::On {
                    v.tight.push(idx);
                }
            }
            return idx;
        }
        let mut fresh = Vec::new();
        for a in 0..self.vertices.len() {
            if sides[a] != Side::In {
                continue;
            }
            for b in 0..self.vertices.len() {
                if sides[b] != Side::Out {
                    continue;
                }
                let common = intersect(&self.vertices[a].tight, &self.vertices[b].tight);
                if !self.adjacent(&common, a, b) {
                    continue;
                }
                let t = slacks[a].clone() / (slacks[a].clone() - slacks[b].clone());
                let pa = &self.vertices[a].point;
                let pb = &self.vertices[b].point;
                let point = pa
                    .iter()
                    .zip(pb)
                    .map(|(x, y)| x.clone() + t.clone() * (y.clone() - x.clone()))
                    .collect();
                let mut tight = common;
                tight.push(idx);
                fresh.push(Vertex { point, tight });
            }
        }
        let old = std::mem::take(&mut self.vertices);
        for (mut v, side) in old.into_iter().zip(sides) {
            match side {
                Side::In => self.vertices.push(v),
                Side::On => {
                    v.tight.push(idx);
                    self.vertices.push(v);
                }
                Side::Out => {}
            }
        }
        self.vertices.extend(fresh);
        idx
    }

    pub fn tight_on(&self, cut: usize) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&i| self.vertices[i].tight.binary_search(&cut).is_ok())
            .collect()
    }

    pub fn affine_dim_of(&self, verts: &[usize]) -> Option<usize> {
        let pts: Vec<&[F]> = verts.iter().map(|&i| self.vertices[i].point.as_slice()).collect();
        linalg::affine_dim(&pts)
    }

    /// Pulling triangulation of the face spanned by `verts` (of affine dimension `d`).
    pub fn triangulate(&self, verts: &[usize], d: usize) -> Vec<Vec<usize>> {
        if d == 0 {
            return vec![vec![verts[0]]];
        }
        let apex = verts[0];
        let apex_tight = &self.vertices[apex].tight;
        let mut candidates: Vec<usize> = verts
            .iter()
            .flat_map(|&v| self.vertices[v].tight.iter().copied())
            .filter(|k| apex_tight.binary_search(k).is_err())
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        let mut seen: Vec<Vec<usize>> = Vec::new();
        let mut out = Vec::new();
        for k in candidates {
            let facet: Vec<usize> = verts.iter().copied().filter(|&v| self.vertices[v].tight.contains(&k)).collect();
            if facet.len() < d || seen.contains(&facet) {
                continue;
            }
            if self.affine_dim_of(&facet) != Some(d - 1) {
                continue;
            }
            for mut s in self.triangulate(&facet, d - 1) {
                s.push(apex);
                out.push(s);
            }
            seen.push(facet);
        }
        out
    }

    /// `|det|` of a full-dimensional simplex, i.e. `dim!` times its volume.
    pub fn simplex_det(&self, simplex: &[usize]) -> F {
        let p0 = &self.vertices[simplex[0]].point;
        let rows: Vec<Vec<F>> = simplex[1..]
            .iter()
            .map(|&i| {
                self.vertices[i].point.iter().zip(p0).map(|(a, b)| a.clone() - b.clone()).collect()
            })
            .collect();
        linalg::det(&rows).abs_val()
    }

    /// `dim!` times the volume (zero unless full-dimensional).
    pub fn normalized_volume(&self) -> F {
        let all: Vec<usize> = (0..self.vertices.len()).collect();
        if self.affine_dim_of(&all) != Some(self.dim) {
            return F::zero();
        }
        self.triangulate(&all, self.dim)
            .iter()
            .fold(F::zero(), |acc, s| acc + self.simplex_det(s))
    }
}

impl Dd<f64> {
    /// Volume and centroid of a full-dimensional polytope.
    pub fn volume_centroid(&self) -> (f64, Vec<f64>) {
        let all: Vec<usize> = (0..self.vertices.len()).collect();
        let mut centroid = vec![0.0; self.dim];
        if self.affine_dim_of(&all) != Some(self.dim) {
            return (0.0, centroid);
        }
        let fact: f64 = (1..=self.dim).map(|k| k as f64).product();
        let mut vol = 0.0;
        for s in self.triangulate(&all, self.dim) {
            let v = self.simplex_det(&s) / fact;
            for &i in &s {
                for (c, x) in centroid.iter_mut().zip(&self.vertices[i].point) {
                    *c += v * x / (self.dim + 1) as f64;
                }
            }
            vol += v;
        }
        if vol > 0.0 {
            centroid.iter_mut().for_each(|c| *c /= vol);
        }
        (vol, centroid)
    }

    /// `(dim-1)`-dimensional area of the facet on `cut` (zero when it is not a facet).
    pub fn facet_area(&self, cut: usize) -> f64 {
        let verts = self.tight_on(cut);
        if verts.len() < self.dim || self.dim == 0 {
            return 0.0;
        }
        let d = self.dim - 1;
        if self.affine_dim_of(&verts) != Some(d) {
            return 0.0;
        }
        if d == 0 {
            return 1.0;
        }
        let fact: f64 = (1..=d).map(|k| k as f64).product();
        self.triangulate(&verts, d)
            .iter()
            .map(|s| {
                let p0 = &self.vertices[s[0]].point;
                let e: Vec<Vec<f64>> = s[1..]
                    .iter()
                    .map(|&i| self.vertices[i].point.iter().zip(p0).map(|(a, b)| a - b).collect())
                    .collect();
                let gram: Vec<Vec<f64>> = e
                    .iter()
                    .map(|a| e.iter().map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect())
                    .collect();
                linalg::det(&gram).max(0.0).sqrt() / fact
            })
            .sum()
    }
}
