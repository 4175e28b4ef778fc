//! Second boundary problem for atomic measures: semi-discrete dual with Laguerre cells and damped Newton.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::convex::{AffinePiece, MaxAffine};
use crate::dd::{Cut, Dd};
use crate::error::{invalid, Error, Result};
use crate::linalg::Field;
use crate::monge_ampere::{ma_measure, DiscreteMeasure};
use crate::polytope::Polytope;
use crate::rational::{self, Rational, QVec};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Relative mass mismatch accepted without rescaling.
pub const MASS_RELATIVE_TOLERANCE: f64 = 1e-12;
/// Denominator bound used to rationalize dual offsets.
pub const OFFSET_DENOMINATOR: u64 = 1_000_000_000;

pub(crate) fn factorial_f64(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A Laguerre cell in floating point.
#[derive(Clone, Debug, Serialize)]
pub struct LaguerreCell {
    pub vertices: Vec<Vec<f64>>,
    pub volume: f64,
}

/// Cells of `x ↦ max_i(⟨x,p_i⟩ - c_i)` restricted to a polytope, clipped site by site.
pub(crate) struct PowerCells {
    pub cells: Vec<Dd<f64>>,
    pub volumes: Vec<f64>,
    /// `∫ ψ_c` over the region.
    pub integral: f64,
    /// `(i, j, facet area / |p_i - p_j|)` for `i < j`.
    pub weights: Vec<(usize, usize, f64)>,
    /// For each cell, the sites whose cuts touch its final boundary.
    pub touching: Vec<Vec<usize>>,
}

/// Other sites ordered by distance, so that far sites are usually no-op clips.
pub(crate) fn clip_order(sites: &[Vec<f64>]) -> Vec<Vec<usize>> {
    (0..sites.len())
        .map(|i| {
            let mut js: Vec<(f64, usize)> = (0..sites.len())
                .filter(|&j| j != i)
                .map(|j| (sites[i].iter().zip(&sites[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), j))
                .collect();
            js.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            js.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Whether `normal·x ≤ offset` removes some vertex, with the clipping tolerance.
fn cuts_off(dd: &Dd<f64>, normal: &[f64], offset: f64) -> bool {
    dd.vertices.iter().any(|v| {
        let mut s = -offset;
        let mut mag = offset.abs();
        for (a, x) in normal.iter().zip(&v.point) {
            s += a * x;
            mag += (a * x).abs();
        }
        s > 0.0 && !s.negligible(&mag)
    })
}

pub(crate) fn power_cells(base: &Dd<f64>, sites: &[Vec<f64>], order: &[Vec<usize>], c: &[f64]) -> PowerCells {
    let n = base.dim;
    let k = sites.len();
    let mut out = PowerCells {
        cells: Vec::with_capacity(k),
        volumes: Vec::with_capacity(k),
        integral: 0.0,
        weights: Vec::new(),
        touching: Vec::with_capacity(k),
    };
    let mut normal = vec![0.0; n];
    for i in 0..k {
        let mut dd = base.clone();
        let mut cut_site: Vec<(usize, usize)> = Vec::new();
        for &j in &order[i] {
            if dd.is_empty() {
                break;
            }
            for t in 0..n {
                normal[t] = sites[j][t] - sites[i][t];
            }
            let offset = c[j] - c[i];
            if cuts_off(&dd, &normal, offset) {
                let idx = dd.clip(Cut::new(normal.clone(), offset));
                cut_site.push((idx, j));
            }
        }
        let (vol, centroid) = if dd.is_empty() { (0.0, vec![0.0; n]) } else { dd.volume_centroid() };
        out.integral += vol * (dot(&centroid, &sites[i]) - c[i]);
        let mut touching = Vec::new();
        for &(idx, j) in &cut_site {
            if dd.vertices.iter().any(|v| v.tight.binary_search(&idx).is_ok()) {
                touching.push(j);
                if j > i && vol > 0.0 {
                    let area = dd.facet_area(idx);
                    if area > 0.0 {
                        let dist = dot(&normal_of(&sites[i], &sites[j]), &normal_of(&sites[i], &sites[j])).sqrt();
                        out.weights.push((i, j, area / dist));
                    }
                }
            }
        }
        touching.sort_unstable();
        out.volumes.push(vol);
        out.cells.push(dd);
        out.touching.push(touching);
    }
    out
}

fn normal_of(a: &[f64], b: &[f64]) -> Vec<f64> {
    b.iter().zip(a).map(|(x, y)| x - y).collect()
}

/// Floating-point Laguerre cells `C_i = {x ∈ Δ : ⟨x,p_i⟩ - c_i ≥ ⟨x,p_j⟩ - c_j}`.
pub fn laguerre_cells(body: &Polytope, sites: &[Vec<f64>], offsets: &[f64]) -> Result<Vec<LaguerreCell>> {
    if !body.is_full_dimensional() {
        return invalid("Δ must be full-dimensional");
    }
    if sites.len() != offsets.len() || sites.iter().any(|s| s.len() != body.dim()) {
        return invalid("sites and offsets do not match");
    }
    let cells = power_cells(&body.to_dd::<f64>(), sites, &clip_order(sites), offsets);
    Ok(cells
        .cells
        .iter()
        .zip(&cells.volumes)
        .map(|(dd, &volume)| LaguerreCell { vertices: dd.vertices.iter().map(|v| v.point.clone()).collect(), volume })
        .collect())
}

/// Exact Laguerre cells for rational data; empty cells come back as `None`.
pub fn laguerre_cells_exact(body: &Polytope, sites: &[QVec], offsets: &[Rational]) -> Result<Vec<Option<Polytope>>> {
    let candidates: Vec<Vec<usize>> = (0..sites.len()).map(|i| (0..sites.len()).filter(|&j| j != i).collect()).collect();
    Ok(exact_cells(body, sites, offsets, &candidates).into_iter().map(|dd| dd_to_polytope(body.dim(), &dd)).collect())
}

fn dd_to_polytope(n: usize, dd: &Dd<Rational>) -> Option<Polytope> {
    if dd.is_empty() {
        return None;
    }
    Polytope::from_vertices(n, dd.vertices.iter().map(|v| v.point.clone()).collect()).ok()
}

fn exact_cells(body: &Polytope, sites: &[QVec], offsets: &[Rational], candidates: &[Vec<usize>]) -> Vec<Dd<Rational>> {
    (0..sites.len())
        .map(|i| {
            let mut dd = body.to_dd::<Rational>();
            for &j in &candidates[i] {
                if dd.is_empty() {
                    break;
                }
                dd.clip(Cut::new(rational::sub(&sites[j], &sites[i]), &offsets[j] - &offsets[i]));
            }
            dd
        })
        .collect()
}

/// Result of the shared damped Newton iteration.
pub(crate) struct NewtonOutcome {
    pub offsets: Vec<f64>,
    pub volumes: Vec<f64>,
    pub iterations: usize,
}

/// Maximizes `Φ(c) = -Σ ν_i c_i - n!·∫ψ_c` with `c_anchor` fixed, given an evaluator of the power cells.
pub(crate) fn damped_newton(
    masses: &[f64],
    mut c: Vec<f64>,
    anchor: usize,
    tol: f64,
    max_iter: usize,
    fact: f64,
    eval: impl Fn(&[f64]) -> (Vec<f64>, f64, Vec<(usize, usize, f64)>),
) -> Result<NewtonOutcome> {
    let k = masses.len();
    let nu_min = masses.iter().copied().fold(f64::INFINITY, f64::min);
    let phi = |c: &[f64], integral: f64| -dot(masses, c) - fact * integral;
    let residual = |vols: &[f64]| -> Vec<f64> { masses.iter().zip(vols).map(|(m, v)| m - fact * v).collect() };
    let norm = |g: &[f64]| dot(g, g).sqrt();

    let (mut vols, mut integral, mut weights) = eval(&c);
    let mut g = residual(&vols);
    let min_vol = vols.iter().copied().fold(f64::INFINITY, f64::min);
    if min_vol <= 0.0 {
        return invalid("initial Laguerre cells must all be nonempty");
    }
    let eps0 = 0.5 * min_vol.min(nu_min / fact);
    let free: Vec<usize> = (0..k).filter(|&i| i != anchor).collect();
    let mut pos = vec![usize::MAX; k];
    for (r, &i) in free.iter().enumerate() {
        pos[i] = r;
    }
    let mut iterations = 0;
    loop {
        let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if gmax <= tol * nu_min {
            return Ok(NewtonOutcome { offsets: c, volumes: vols, iterations });
        }
        if iterations >= max_iter {
            return Err(Error::NoConvergence {
                iterations,
                max_residual: gmax,
                best_offsets: c,
                residuals: g.iter().map(|x| x.abs()).collect(),
            });
        }
        iterations += 1;
        // -Hessian restricted to the free offsets: n!·(D - W)
        let m = free.len();
        let mut a = DMatrix::<f64>::zeros(m, m);
        for &(i, j, w) in &weights {
            for (x, y) in [(i, j), (j, i)] {
                if pos[x] != usize::MAX {
                    a[(pos[x], pos[x])] += fact * w;
                    if pos[y] != usize::MAX {
                        a[(pos[x], pos[y])] -= fact * w;
                    }
                }
            }
        }
        let rhs = DVector::from_iterator(m, free.iter().map(|&i| -g[i]));
        let step = match a.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => match a.lu().solve(&rhs) {
                Some(s) => s,
                None => {
                    return Err(Error::NoConvergence {
                        iterations,
                        max_residual: gmax,
                        best_offsets: c,
                        residuals: g.iter().map(|x| x.abs()).collect(),
                    })
                }
            },
        };
        let phi0 = phi(&c, integral);
        let g0 = norm(&g);
        let mut alpha = 1.0;
        loop {
            let mut trial = c.clone();
            for (r, &i) in free.iter().enumerate() {
                trial[i] += alpha * step[r];
            }
            let (tv, ti, tw) = eval(&trial);
            let tg = residual(&tv);
            let tmin = tv.iter().copied().fold(f64::INFINITY, f64::min);
            let tphi = phi(&trial, ti);
            let slack = 1e-12 * (1.0 + phi0.abs());
            if tmin >= eps0 && norm(&tg) <= (1.0 - alpha / 2.0) * g0 && tphi >= phi0 - slack {
                c = trial;
                vols = tv;
                integral = ti;
                weights = tw;
                g = tg;
                break;
            }
            alpha /= 2.0;
            if alpha < 1e-14 {
                return Err(Error::NoConvergence {
                    iterations,
                    max_residual: gmax,
                    best_offsets: c,
                    residuals: g.iter().map(|x| x.abs()).collect(),
                });
            }
        }
    }
}

/// Input of the second boundary problem.
#[derive(Clone, Debug)]
pub struct SbpProblem {
    pub body: Polytope,
    pub measure: DiscreteMeasure,
    /// Stop when every residual is at most `tolerance · ν_min`.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Index of the atom where `φ` vanishes; `None` picks the heaviest atom.
    pub anchor: Option<usize>,
    pub seed: u64,
    /// Rescale `μ` to total mass `n!·vol(Δ)` instead of rejecting a mismatch.
    pub rescale: bool,
}

impl SbpProblem {
    pub fn new(body: Polytope, measure: DiscreteMeasure) -> Self {
        SbpProblem {
            body,
            measure,
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
            anchor: None,
            seed: 0,
            rescale: false,
        }
    }

    /// Checks dimensions and the mass balance; returns the (possibly rescaled) measure.
    pub fn validated_measure(&self) -> Result<DiscreteMeasure> {
        let n = self.body.dim();
        if self.measure.dim() != n {
            return invalid("measure and body live in different dimensions");
        }
        if !self.body.is_full_dimensional() {
            return invalid("Δ must be full-dimensional");
        }
        if self.measure.atoms().is_empty() {
            return invalid("measure has no atoms");
        }
        if !(self.tolerance > 0.0) || self.max_iter == 0 {
            return invalid("tolerance and max_iter must be positive");
        }
        let expected = self.body.normalized_volume();
        let total = self.measure.total_mass();
        if total == expected {
            return Ok(self.measure.clone());
        }
        if self.rescale {
            return Ok(self.measure.scale_mass(&(expected / total)));
        }
        let rel = rational::to_f64(&((&total - &expected) / &expected)).abs();
        if rel <= MASS_RELATIVE_TOLERANCE {
            Ok(self.measure.clone())
        } else {
            invalid(format!(
                "total mass {} differs from n!·vol(Δ) = {}",
                rational::format(&total),
                rational::format(&expected)
            ))
        }
    }

    pub fn anchor_index(&self, measure: &DiscreteMeasure) -> usize {
        match self.anchor {
            Some(a) => a,
            // atoms are sorted by point, so the first maximum is the lexicographically smallest
            None => {
                let atoms = measure.atoms();
                let mut best = 0;
                for i in 1..atoms.len() {
                    if atoms[i].mass > atoms[best].mass {
                        best = i;
                    }
                }
                best
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SbpSolution {
    /// `c_i = φ(p_i)`, with `c_anchor = 0`.
    pub dual_offsets: Vec<f64>,
    /// Rationalized offsets used for the exact reconstruction.
    #[serde(serialize_with = "ser_qvec")]
    pub exact_offsets: QVec,
    pub phi: MaxAffine,
    pub cells: Vec<LaguerreCell>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub anchor: usize,
}

fn ser_qvec<S: serde::Serializer>(v: &QVec, s: S) -> std::result::Result<S::Ok, S::Error> {
    rational::wrap(v).serialize(s)
}

/// Initial offsets making the cells the Voronoi cells of points `y_i ∈ Δ` spread like the sites.
fn initial_offsets(body: &Polytope, sites: &[Vec<f64>], seed: u64) -> Vec<f64> {
    let n = body.dim();
    let k = sites.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let verts: Vec<Vec<f64>> = body.vertices().iter().map(|v| rational::vec_to_f64(v)).collect();
    let centroid: Vec<f64> = (0..n).map(|t| verts.iter().map(|v| v[t]).sum::<f64>() / verts.len() as f64).collect();
    let corner = &verts[rng.random_range(0..verts.len())];
    let s = rng.random_range(0.0..0.2);
    let xbar: Vec<f64> = (0..n).map(|t| (1.0 - s) * centroid[t] + s * corner[t]).collect();
    let pbar: Vec<f64> = (0..n).map(|t| sites.iter().map(|p| p[t]).sum::<f64>() / k as f64).collect();
    let mut kappa_max = f64::INFINITY;
    for h in body.halfspaces() {
        let a = rational::vec_to_f64(&h.normal);
        let room = rational::to_f64(&h.offset) - dot(&a, &xbar);
        for p in sites {
            let d: Vec<f64> = p.iter().zip(&pbar).map(|(x, y)| x - y).collect();
            let push = dot(&a, &d);
            if push > 0.0 {
                kappa_max = kappa_max.min(room / push);
            }
        }
    }
    if !kappa_max.is_finite() {
        kappa_max = 1.0;
    }
    let kappa = rng.random_range(0.3..0.7) * kappa_max;
    sites
        .iter()
        .map(|p| {
            let y: Vec<f64> = (0..n).map(|t| xbar[t] + kappa * (p[t] - pbar[t])).collect();
            dot(&y, &y) / (2.0 * kappa)
        })
        .collect()
}

pub fn solve_sbp(problem: &SbpProblem) -> Result<SbpSolution> {
    let measure = problem.validated_measure()?;
    let n = problem.body.dim();
    let anchor = problem.anchor_index(&measure);
    if anchor >= measure.atoms().len() {
        return invalid("anchor index out of range");
    }
    let sites: Vec<Vec<f64>> = measure.points_f64();
    let masses = measure.masses_f64();
    let fact = factorial_f64(n);
    let base = problem.body.to_dd::<f64>();
    let order = clip_order(&sites);
    let eval = |c: &[f64]| {
        let pc = power_cells(&base, &sites, &order, c);
        (pc.volumes, pc.integral, pc.weights)
    };
    let mut c0 = initial_offsets(&problem.body, &sites, problem.seed);
    let shift = c0[anchor];
    c0.iter_mut().for_each(|x| *x -= shift);
    let outcome = damped_newton(&masses, c0, anchor, problem.tolerance, problem.max_iter, fact, eval)?;
    let final_cells = power_cells(&base, &sites, &order, &outcome.offsets);
    let exact_sites: Vec<QVec> = measure.atoms().iter().map(|a| a.point.clone()).collect();
    let (phi, exact_offsets) = reconstruct(&problem.body, &exact_sites, &outcome.offsets, &final_cells.touching)?;
    let residuals = masses.iter().zip(&outcome.volumes).map(|(m, v)| (m - fact * v).abs()).collect();
    let cells = final_cells
        .cells
        .iter()
        .zip(&final_cells.volumes)
        .map(|(dd, &volume)| LaguerreCell { vertices: dd.vertices.iter().map(|v| v.point.clone()).collect(), volume })
        .collect();
    Ok(SbpSolution { dual_offsets: outcome.offsets, exact_offsets, phi, cells, residuals, iterations: outcome.iterations, anchor })
}

/// `φ(u) = max_x (⟨x,u⟩ - ψ(x))` over the vertices of the exact Laguerre subdivision.
fn reconstruct(body: &Polytope, sites: &[QVec], offsets: &[f64], touching: &[Vec<usize>]) -> Result<(MaxAffine, QVec)> {
    let n = body.dim();
    let c: QVec = offsets.iter().map(|&x| rational::approximate(x, OFFSET_DENOMINATOR)).collect::<Result<_>>()?;
    let target = body.normalized_volume();
    let mut cells = exact_cells(body, sites, &c, touching);
    let total: Rational = cells.iter().map(|d| if d.is_empty() { Rational::zero() } else { d.normalized_volume() }).sum();
    if total != target {
        let all: Vec<Vec<usize>> = (0..sites.len()).map(|i| (0..sites.len()).filter(|&j| j != i).collect()).collect();
        cells = exact_cells(body, sites, &c, &all);
    }
    let mut pieces: BTreeSet<AffinePiece> = BTreeSet::new();
    for (i, dd) in cells.iter().enumerate() {
        for v in &dd.vertices {
            let psi = rational::dot(&v.point, &sites[i]) - &c[i];
            pieces.insert(AffinePiece::new(v.point.clone(), -psi));
        }
    }
    let phi = MaxAffine::new(n, pieces.into_iter().collect())?;
    Ok((phi, c))
}

#[derive(Clone, Debug, Serialize)]
pub struct SbpReport {
    pub slopes_in_body: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_witness: Option<Vec<String>>,
    pub volume_ok: bool,
    /// `vol(Δ(φ)) / vol(Δ)`.
    pub volume_ratio: f64,
    pub measure_ok: bool,
    pub max_mass_error: f64,
    pub max_location_error: f64,
    pub passed: bool,
}

/// Tolerances for `verify_sbp_with`: mass error relative to `ν_min`, location snap distance.
#[derive(Clone, Copy, Debug)]
pub struct VerifyTolerance {
    pub mass: f64,
    pub snap: f64,
    pub volume: f64,
}

impl Default for VerifyTolerance {
    fn default() -> Self {
        VerifyTolerance { mass: 1e-6, snap: 1e-6, volume: 1e-9 }
    }
}

pub fn verify_sbp(sol: &SbpSolution, problem: &SbpProblem) -> SbpReport {
    verify_sbp_with(&sol.phi, problem, VerifyTolerance::default())
}

pub fn verify_sbp_with(phi: &MaxAffine, problem: &SbpProblem, tol: VerifyTolerance) -> SbpReport {
    let body = &problem.body;
    let witness = phi.pieces().iter().find(|p| !body.contains(&p.slope));
    let slopes_in_body = witness.is_none();
    let slope_witness = witness.map(|p| p.slope.iter().map(rational::format).collect());
    let stab = phi.stability_set();
    let target = body.normalized_volume();
    let got = if stab.is_full_dimensional() { stab.normalized_volume() } else { Rational::zero() };
    let volume_ratio = rational::to_f64(&(got / &target));
    let volume_ok = (volume_ratio - 1.0).abs() <= tol.volume;
    let measure = problem.validated_measure().unwrap_or_else(|_| problem.measure.clone());
    let nu_min = measure.masses_f64().into_iter().fold(f64::INFINITY, f64::min);
    let ma = ma_measure(phi);
    let ma_pts = ma.points_f64();
    let ma_mass = ma.masses_f64();
    let mut used = vec![false; ma_pts.len()];
    let mut max_mass_error: f64 = 0.0;
    let mut max_location_error: f64 = 0.0;
    let mut matched = true;
    for (p, m) in measure.points_f64().iter().zip(measure.masses_f64()) {
        let best = (0..ma_pts.len())
            .map(|j| (dot(&normal_of(p, &ma_pts[j]), &normal_of(p, &ma_pts[j])).sqrt(), j))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match best {
            Some((d, j)) if d <= tol.snap => {
                used[j] = true;
                max_location_error = max_location_error.max(d);
                max_mass_error = max_mass_error.max((ma_mass[j] - m).abs());
            }
            _ => {
                matched = false;
                max_mass_error = max_mass_error.max(m);
            }
        }
    }
    for (j, u) in used.iter().enumerate() {
        if !u {
            max_mass_error = max_mass_error.max(ma_mass[j]);
        }
    }
    let measure_ok = matched && max_mass_error <= tol.mass * nu_min;
    SbpReport {
        slopes_in_body,
        slope_witness,
        volume_ok,
        volume_ratio,
        measure_ok,
        max_mass_error,
        max_location_error,
        passed: slopes_in_body && volume_ok && measure_ok,
    }
}

/// Exact `Φ(c)` and its gradient, for oracle comparisons.
pub fn dual_functional(body: &Polytope, measure: &DiscreteMeasure, c: &[f64]) -> (f64, Vec<f64>) {
    let n = body.dim();
    let fact = factorial_f64(n);
    let sites = measure.points_f64();
    let masses = measure.masses_f64();
    let pc = power_cells(&body.to_dd::<f64>(), &sites, &clip_order(&sites), c);
    let value = -dot(&masses, c) - fact * pc.integral;
    let grad = pc.volumes.iter().zip(&masses).map(|(v, m)| fact * v - m).collect();
    (value, grad)
}



#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::tests::arb_max_affine;
    use crate::rational::{frac, int, qvec};
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, prop_assume, proptest, ProptestConfig};

    fn unit(n: usize) -> Polytope {
        Polytope::cube(n, int(0), int(1)).unwrap()
    }

    fn measure(n: usize, atoms: &[(&[i64], Rational)]) -> DiscreteMeasure {
        DiscreteMeasure::new(n, atoms.iter().map(|(p, m)| (qvec(p), m.clone()))).unwrap()
    }

    fn pl(n: usize, pieces: &[(&[Rational], Rational)]) -> MaxAffine {
        MaxAffine::new(n, pieces.iter().map(|(m, c)| AffinePiece::new(m.to_vec(), c.clone())).collect()).unwrap()
    }

    #[test]
    fn laguerre_examples() {
        let one = laguerre_cells(&unit(2), &[vec![0.3, 0.1]], &[5.0]).unwrap();
        assert!((one[0].volume - 1.0).abs() < 1e-15);
        let cells = laguerre_cells(&unit(1), &[vec![-1.0], vec![1.0]], &[-1.0, 0.0]).unwrap();
        assert!((cells[0].volume - 0.5).abs() < 1e-15 && (cells[1].volume - 0.5).abs() < 1e-15);
        let cells = laguerre_cells(&unit(1), &[vec![-1.0], vec![1.0]], &[0.0, 0.0]).unwrap();
        assert!(cells[0].volume == 0.0 && (cells[1].volume - 1.0).abs() < 1e-15);
        let strips = laguerre_cells(&unit(2), &[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]], &[0.0, 1.0 / 3.0, 1.0]).unwrap();
        for c in &strips {
            assert!((c.volume - 1.0 / 3.0).abs() < 1e-14);
        }
        let exact = laguerre_cells_exact(&unit(1), &[qvec(&[-1]), qvec(&[1])], &[int(-1), int(0)]).unwrap();
        assert_eq!(exact[0].as_ref().unwrap().vertices(), &[qvec(&[0]), vec![frac(1, 2)]]);
        assert!(laguerre_cells(&Polytope::from_vertices(2, vec![qvec(&[0, 0]), qvec(&[1, 1])]).unwrap(), &[vec![0.0, 0.0]], &[0.0]).is_err());
    }

    #[test]
    fn one_dimensional_solutions() {
        let p = SbpProblem::new(unit(1), measure(1, &[(&[0], int(1))]));
        let sol = solve_sbp(&p).unwrap();
        assert_eq!(sol.phi.canonical_form(), pl(1, &[(&[int(0)], int(0)), (&[int(1)], int(0))]));
        assert!(verify_sbp(&sol, &p).passed);

        let p = SbpProblem::new(unit(1), measure(1, &[(&[-1], frac(1, 2)), (&[1], frac(1, 2))]));
        let sol = solve_sbp(&p).unwrap();
        let expected = pl(1, &[(&[int(0)], int(0)), (&[frac(1, 2)], frac(1, 2)), (&[int(1)], int(0))]);
        assert_eq!(sol.phi.canonical_form(), expected);
        let report = verify_sbp(&sol, &p);
        assert!(report.passed && report.max_mass_error == 0.0, "{report:?}");
    }

    #[test]
    fn square_with_one_atom() {
        let p = SbpProblem::new(unit(2), measure(2, &[(&[0, 0], int(2))]));
        let sol = solve_sbp(&p).unwrap();
        let expected = pl(2, &[(&[int(0), int(0)], int(0)), (&[int(0), int(1)], int(0)), (&[int(1), int(0)], int(0)), (&[int(1), int(1)], int(0))]);
        assert_eq!(sol.phi.canonical_form(), expected.canonical_form());
    }

    #[test]
    fn mass_mismatch() {
        let p = SbpProblem::new(unit(1), measure(1, &[(&[0], int(2))]));
        assert!(matches!(solve_sbp(&p), Err(Error::InvalidInput(_))));
        let mut p = p;
        p.rescale = true;
        assert!(solve_sbp(&p).is_ok());
    }

    #[test]
    fn no_convergence_carries_iterate() {
        let mut p = SbpProblem::new(unit(2), measure(2, &[(&[0, 0], frac(1, 2)), (&[1, 0], frac(1, 2)), (&[0, 1], int(1))]));
        p.max_iter = 1;
        p.tolerance = 1e-15;
        match solve_sbp(&p) {
            Err(Error::NoConvergence { best_offsets, residuals, .. }) => {
                assert_eq!(best_offsets.len(), 3);
                assert_eq!(residuals.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn verification_failures() {
        let p = SbpProblem::new(unit(1), measure(1, &[(&[0], int(1))]));
        let outside = pl(1, &[(&[int(0)], int(0)), (&[int(2)], int(0))]);
        let r = verify_sbp_with(&outside, &p, VerifyTolerance::default());
        assert!(!r.slopes_in_body && r.slope_witness == Some(vec!["2".to_string()]));
        let narrow = pl(1, &[(&[int(0)], int(0)), (&[frac(1, 2)], int(0))]);
        let r = verify_sbp_with(&narrow, &p, VerifyTolerance::default());
        assert!(r.slopes_in_body && !r.volume_ok && !r.passed);
    }

    fn random_problem(seed: u64, n: usize, k: usize) -> SbpProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let body = unit(n);
        let mut pts: Vec<QVec> = Vec::new();
        while pts.len() < k {
            let p: QVec = (0..n).map(|_| frac(rng.random_range(-8..=8), 4)).collect();
            if !pts.contains(&p) {
                pts.push(p);
            }
        }
        let w: Vec<i64> = (0..k).map(|_| rng.random_range(1..=4)).collect();
        let total: i64 = w.iter().sum();
        let vol = body.normalized_volume();
        let atoms = pts.into_iter().zip(&w).map(|(p, &wi)| (p, &vol * frac(wi, total)));
        SbpProblem::new(body, DiscreteMeasure::new(n, atoms).unwrap())
    }

    #[test]
    fn seeds_agree_up_to_constant() {
        for s in 0..4 {
            let mut p = random_problem(s, 2, 6);
            let a = solve_sbp(&p).unwrap();
            p.seed = 99;
            let b = solve_sbp(&p).unwrap();
            for (x, y) in a.dual_offsets.iter().zip(&b.dual_offsets) {
                assert!((x - y).abs() < 1e-8);
            }
            assert!(verify_sbp(&a, &p).passed);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = random_problem(3, 2, 5);
        let c: Vec<f64> = vec![0.0, 0.1, -0.05, 0.2, 0.03];
        let (_, grad) = dual_functional(&p.body, &p.measure, &c);
        let h = 1e-6;
        for i in 0..c.len() {
            let mut up = c.clone();
            up[i] += h;
            let mut dn = c.clone();
            dn[i] -= h;
            let fd = (dual_functional(&p.body, &p.measure, &up).0 - dual_functional(&p.body, &p.measure, &dn).0) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-6 * grad[i].abs().max(1e-2), "{i}: {fd} vs {}", grad[i]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn dual_is_concave(seed in 0u64..1000, a in prop::collection::vec(-1.0f64..1.0, 4), b in prop::collection::vec(-1.0f64..1.0, 4)) {
            let p = random_problem(seed, 2, 4);
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
            let fa = dual_functional(&p.body, &p.measure, &a).0;
            let fb = dual_functional(&p.body, &p.measure, &b).0;
            let fm = dual_functional(&p.body, &p.measure, &mid).0;
            prop_assert!(fm >= (fa + fb) / 2.0 - 1e-10);
        }

        #[test]
        fn cells_conserve_volume(seed in 0u64..1000, c in prop::collection::vec(-0.5f64..0.5, 5)) {
            let p = random_problem(seed, 2, 5);
            let cells = laguerre_cells(&p.body, &p.measure.points_f64(), &c).unwrap();
            let total: f64 = cells.iter().map(|c| c.volume).sum();
            prop_assert!((total - 1.0).abs() <= 1e-10);
        }

        #[test]
        fn round_trip(g in arb_max_affine(2, 5)) {
            let f = g.canonical_form();
            let body = f.stability_set();
            prop_assume!(body.is_full_dimensional());
            let mu = ma_measure(&f);
            let sol = solve_sbp(&SbpProblem::new(body, mu.clone())).unwrap();
            let diffs: Vec<f64> = mu.atoms().iter().map(|a| rational::to_f64(&(sol.phi.eval(&a.point) - f.eval(&a.point)))).collect();
            for d in &diffs {
                prop_assert!((d - diffs[0]).abs() <= 1e-6);
            }
        }

        #[test]
        fn translation_equivariance(seed in 0u64..1000, t in prop::collection::vec(-3i64..=3, 2)) {
            let p = random_problem(seed, 2, 4);
            let t: QVec = t.into_iter().map(|x| frac(x, 2)).collect();
            let q = SbpProblem::new(p.body.clone(), p.measure.translate(&t));
            let a = solve_sbp(&p).unwrap();
            let b = solve_sbp(&q).unwrap();
            let va: Vec<QVec> = ma_measure(&a.phi).atoms().iter().map(|x| rational::add(&x.point, &t)).collect();
            let vb: Vec<QVec> = ma_measure(&b.phi).atoms().iter().map(|x| x.point.clone()).collect();
            prop_assert_eq!(va, vb);
            for (x, y) in a.residuals.iter().zip(&b.residuals) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}
