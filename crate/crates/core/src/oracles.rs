//! Brute-force cross-checks, the projective-line example and measure discretization.

use num::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::convex::{ConvexOracle, MaxAffine};
use crate::error::{invalid, Result};
use crate::monge_ampere::DiscreteMeasure;
use crate::polytope::Polytope;
use crate::rational::{self, Rational};
use crate::sbp::{factorial_f64, solve_sbp, SbpProblem, SbpSolution};

/// Denominator bound for atom positions produced by the discretizer.
pub const POINT_DENOMINATOR: u64 = 1 << 24;
/// Denominator bound for the total mass produced by the discretizer.
pub const MASS_DENOMINATOR: u64 = 1 << 50;

/// `φ_α` on the tropical line: `1` for `u ≤ 0`, `1-u` on `[0,1]`, `(1-u^α)/α` (or `-log u` for `α = 0`) beyond.
pub fn p1_solution(alpha: f64, u: f64) -> f64 {
    if u <= 0.0 {
        1.0
    } else if u <= 1.0 {
        1.0 - u
    } else if u == f64::INFINITY {
        f64::NEG_INFINITY
    } else if alpha == 0.0 {
        -u.ln()
    } else {
        (1.0 - u.powf(alpha)) / alpha
    }
}

/// Density `(1-α)u^{α-2}` of `μ_α` on `[1,∞)`.
pub fn p1_density(alpha: f64, u: f64) -> f64 {
    if u < 1.0 {
        0.0
    } else {
        (1.0 - alpha) * u.powf(alpha - 2.0)
    }
}

/// `μ_α([a,b]) = a^{α-1} - b^{α-1}`, with `a` clamped to 1.
pub fn p1_measure_mass(alpha: f64, a: f64, b: f64) -> f64 {
    let a = a.max(1.0);
    if b <= a {
        return 0.0;
    }
    let tail = |x: f64| if x == f64::INFINITY { 0.0 } else { x.powf(alpha - 1.0) };
    tail(a) - tail(b)
}

/// Symbolic total mass `(1-α)·∫₁^∞ u^{α-2} du = (1-α)·1/(1-α)`.
pub fn p1_total_mass(alpha: &Rational) -> Result<Rational> {
    if alpha.is_negative() || *alpha >= Rational::one() {
        return invalid("α must lie in [0,1)");
    }
    let one_minus = Rational::one() - alpha;
    let antiderivative_gap = one_minus.recip();
    Ok(one_minus * antiderivative_gap)
}

/// `∫₁^U |φ_α| dμ_α`, integrated in `t = log u` on unit subintervals.
pub fn p1_energy_probe(alpha: f64, cutoff: f64) -> Result<f64> {
    if !(cutoff > 1.0) || !cutoff.is_finite() {
        return invalid("cutoff must be a finite number above 1");
    }
    let integrand = |t: f64| {
        let u = t.exp();
        p1_solution(alpha, u).abs() * p1_density(alpha, u) * u
    };
    let end = cutoff.ln();
    let mut total = 0.0;
    let mut a = 0.0;
    while a < end {
        let b = (a + 1.0).min(end);
        total += quadrature::integrate(integrand, a, b, 1e-14).integral;
        a = b;
    }
    Ok(total)
}

/// The projective-line example with a rational exponent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct P1Example {
    alpha: Rational,
}

impl P1Example {
    pub fn new(alpha: Rational) -> Result<Self> {
        p1_total_mass(&alpha)?;
        Ok(P1Example { alpha })
    }

    pub fn alpha(&self) -> f64 {
        rational::to_f64(&self.alpha)
    }

    pub fn solution(&self, u: f64) -> f64 {
        p1_solution(self.alpha(), u)
    }

    pub fn density(&self, u: f64) -> f64 {
        p1_density(self.alpha(), u)
    }

    pub fn mass(&self, a: f64, b: f64) -> f64 {
        p1_measure_mass(self.alpha(), a, b)
    }

    pub fn total_mass(&self) -> Rational {
        p1_total_mass(&self.alpha).expect("checked on construction")
    }

    pub fn energy_probe(&self, cutoff: f64) -> Result<f64> {
        p1_energy_probe(self.alpha(), cutoff)
    }
}

/// Cumulative integrals of a density and its first moment over a fixed grid.
struct Cumulative<'a> {
    density: &'a dyn Fn(f64) -> f64,
    nodes: Vec<f64>,
    mass: Vec<f64>,
    moment: Vec<f64>,
}

fn integrate(g: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let out = quadrature::integrate(g, a, b, 1e-15);
    if !out.integral.is_finite() || !out.error_estimate.is_finite() || out.error_estimate > 1e-6 * out.integral.abs().max(1e-9) {
        return invalid(format!("density is not integrable on [{a}, {b}]"));
    }
    Ok(out.integral)
}

impl<'a> Cumulative<'a> {
    fn new(density: &'a dyn Fn(f64) -> f64, a: f64, b: f64, cells: usize) -> Result<Self> {
        let geometric = a > 0.0 && b / a > 100.0;
        let nodes: Vec<f64> = (0..=cells)
            .map(|j| {
                let t = j as f64 / cells as f64;
                if j == cells {
                    b
                } else if geometric {
                    a * (b / a).powf(t)
                } else {
                    a + (b - a) * t
                }
            })
            .collect();
        let (mut mass, mut moment) = (vec![0.0], vec![0.0]);
        for w in nodes.windows(2) {
            let dm = integrate(|x| density(x), w[0], w[1])?;
            let dmom = integrate(|x| x * density(x), w[0], w[1])?;
            if dm < 0.0 {
                return invalid("density takes negative values");
            }
            mass.push(mass.last().unwrap() + dm);
            moment.push(moment.last().unwrap() + dmom);
        }
        Ok(Cumulative { density, nodes, mass, moment })
    }

    fn total(&self) -> f64 {
        *self.mass.last().unwrap()
    }

    fn cell_of(&self, x: f64) -> usize {
        self.nodes.partition_point(|&t| t <= x).saturating_sub(1).min(self.nodes.len() - 2)
    }

    fn mass_to(&self, x: f64) -> Result<f64> {
        let j = self.cell_of(x);
        Ok(self.mass[j] + integrate(|t| (self.density)(t), self.nodes[j], x)?)
    }

    fn moment_to(&self, x: f64) -> Result<f64> {
        let j = self.cell_of(x);
        Ok(self.moment[j] + integrate(|t| t * (self.density)(t), self.nodes[j], x)?)
    }

    /// Smallest `x` with cumulative mass `target`.
    fn quantile(&self, target: f64) -> Result<f64> {
        let j = self.mass.partition_point(|&m| m < target).clamp(1, self.nodes.len() - 1) - 1;
        let (mut lo, mut hi) = (self.nodes[j], self.nodes[j + 1]);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.mass_to(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Positions (conditional means of equal-mass quantile bins) and the total mass.
pub fn quantile_points(density: &dyn Fn(f64) -> f64, a: f64, b: f64, m: usize) -> Result<(Vec<f64>, f64)> {
    if m == 0 {
        return invalid("atom count must be positive");
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return invalid("need a finite interval a < b");
    }
    let cum = Cumulative::new(density, a, b, (64 * m).max(1024))?;
    let total = cum.total();
    if !(total > 0.0) {
        return invalid("density has no mass on the interval");
    }
    let mut edges = vec![a];
    for k in 1..m {
        edges.push(cum.quantile(total * k as f64 / m as f64)?);
    }
    edges.push(b);
    let mut points = Vec::with_capacity(m);
    let mut prev_moment = 0.0;
    for k in 0..m {
        let moment = if k + 1 == m { *cum.moment.last().unwrap() } else { cum.moment_to(edges[k + 1])? };
        let x = (moment - prev_moment) / (total / m as f64);
        points.push(x.clamp(edges[k], edges[k + 1]));
        prev_moment = moment;
    }
    Ok((points, total))
}

/// `m` equal-mass atoms at the conditional means of the quantile bins of a density on `[a,b]`.
pub fn quantile_discretize(density: &dyn Fn(f64) -> f64, a: f64, b: f64, m: usize) -> Result<DiscreteMeasure> {
    let (points, total) = quantile_points(density, a, b, m)?;
    let total_q = rational::approximate(total, MASS_DENOMINATOR)?;
    atoms_with_total(&points, &total_q)
}

fn atoms_with_total(points: &[f64], total: &Rational) -> Result<DiscreteMeasure> {
    let each = total / Rational::from_integer(points.len().into());
    let atoms = points
        .iter()
        .map(|&x| Ok((vec![rational::approximate(x, POINT_DENOMINATOR)?], each.clone())))
        .collect::<Result<Vec<_>>>()?;
    DiscreteMeasure::new(1, atoms)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub hits: usize,
    pub samples: usize,
}

impl McEstimate {
    /// `|estimate - value| ≤ k·stderr`, with a floor for zero-variance estimates.
    pub fn agrees(&self, value: f64, k: f64) -> bool {
        (self.estimate - value).abs() <= k * self.stderr + 1e-12 * value.abs().max(1.0)
    }
}

/// Function whose subgradient image is sampled.
pub enum McFunction<'a> {
    /// Maximizers found among the decomposition vertices.
    Pl(&'a MaxAffine),
    /// Maximizers found by gradient ascent; `Δ` must be given.
    Smooth(&'a dyn ConvexOracle, &'a Polytope),
}

fn sample_in(body: &Polytope, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = body.dim();
    let verts: Vec<Vec<f64>> = body.vertices().iter().map(|v| rational::vec_to_f64(v)).collect();
    let lo: Vec<f64> = (0..n).map(|j| verts.iter().map(|v| v[j]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..n).map(|j| verts.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let hs: Vec<(Vec<f64>, f64)> = body.halfspaces().iter().map(|h| (rational::vec_to_f64(&h.normal), rational::to_f64(&h.offset))).collect();
    loop {
        let x: Vec<f64> = (0..n).map(|j| lo[j] + (hi[j] - lo[j]) * rng.random::<f64>()).collect();
        if hs.iter().all(|(a, b)| a.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= *b) {
            return x;
        }
    }
}

fn conjugate_argmax(oracle: &dyn ConvexOracle, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut u = vec![0.0; n];
    let objective = |u: &[f64]| u.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - oracle.value(u);
    let mut step = 1.0;
    for _ in 0..5000 {
        let g: Vec<f64> = oracle.subgradient(&u).iter().zip(x).map(|(s, xi)| xi - s).collect();
        if g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-12 {
            break;
        }
        let here = objective(&u);
        loop {
            let cand: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a + step * b).collect();
            if objective(&cand) >= here || step < 1e-16 {
                u = cand;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
    }
    u
}

/// Estimates `n!·vol(∂f(E))` for the box `E = [lo, hi]` by sampling slopes uniformly in `Δ(f)`.
pub fn mc_subgradient_volume(f: McFunction<'_>, lo: &[f64], hi: &[f64], samples: usize, seed: u64) -> Result<McEstimate> {
    let (n, body) = match &f {
        McFunction::Pl(g) => (g.dim(), g.stability_set()),
        McFunction::Smooth(o, body) => (o.dim(), (*body).clone()),
    };
    if lo.len() != n || hi.len() != n || body.dim() != n {
        return invalid("dimension mismatch");
    }
    if !body.is_full_dimensional() {
        return invalid("Δ(f) must be full-dimensional");
    }
    if samples == 0 {
        return invalid("need at least one sample");
    }
    let vertices: Vec<(Vec<f64>, f64)> = match &f {
        McFunction::Pl(g) => g.vertices().iter().map(|v| (rational::vec_to_f64(&v.point), rational::to_f64(&v.value))).collect(),
        McFunction::Smooth(..) => Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0;
    for _ in 0..samples {
        let x = sample_in(&body, &mut rng);
        let u = match &f {
            McFunction::Pl(_) => {
                let score = |(w, fw): &(Vec<f64>, f64)| w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() - fw;
                vertices.iter().max_by(|a, b| score(a).total_cmp(&score(b))).map(|(w, _)| w.clone()).unwrap_or_default()
            }
            McFunction::Smooth(o, _) => conjugate_argmax(*o, &x),
        };
        if u.iter().enumerate().all(|(j, &v)| lo[j] <= v && v <= hi[j]) {
            hits += 1;
        }
    }
    let scale = factorial_f64(n) * rational::to_f64(&body.volume());
    let p = hits as f64 / samples as f64;
    Ok(McEstimate {
        estimate: scale * p,
        stderr: scale * (p * (1.0 - p) / samples as f64).sqrt(),
        hits,
        samples,
    })
}

/// `n!·det` of the central-difference Hessian; NaN when a stencil value is not finite.
pub fn fd_hessian_ma(f: &dyn ConvexOracle, point: &[f64], h: f64) -> f64 {
    let n = point.len();
    let at = |di: &[(usize, f64)]| {
        let mut u = point.to_vec();
        for &(j, s) in di {
            u[j] += s * h;
        }
        f.value(&u)
    };
    let mut hess = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = if i == j {
                (at(&[(i, 1.0)]) - 2.0 * at(&[]) + at(&[(i, -1.0)])) / (h * h)
            } else {
                (at(&[(i, 1.0), (j, 1.0)]) - at(&[(i, 1.0), (j, -1.0)]) - at(&[(i, -1.0), (j, 1.0)]) + at(&[(i, -1.0), (j, -1.0)])) / (4.0 * h * h)
            };
            if !v.is_finite() {
                return f64::NAN;
            }
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    factorial_f64(n) * hess.determinant()
}

/// Evaluation points of the projective-line comparison.
pub const P1_PROBES: [f64; 5] = [0.0, 1.0, 2.0, 5.0, 10.0];

#[derive(Clone, Debug, Serialize)]
pub struct P1Run {
    pub alpha: f64,
    pub atoms: usize,
    pub cutoff: f64,
    pub probes: Vec<f64>,
    /// Recovered `φ = f - max(0,-u)`, normalized by `φ(0) = 1`.
    pub recovered: Vec<f64>,
    pub exact: Vec<f64>,
    pub sup_error: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub solution: SbpSolution,
}

/// Discretizes `μ_α` on `[1,U]` into `m` atoms plus one atom at `U` carrying the tail mass, solves on `Δ = [-1,0]`.
pub fn p1_pipeline(alpha: f64, m: usize, cutoff: f64, tolerance: f64, max_iter: usize, seed: u64) -> Result<P1Run> {
    if !(0.0..1.0).contains(&alpha) {
        return invalid("α must lie in [0,1)");
    }
    if !(cutoff > 1.0) {
        return invalid("cutoff must exceed 1");
    }
    let density = move |u: f64| p1_density(alpha, u);
    let (points, _) = quantile_points(&density, 1.0, cutoff, m)?;
    let tail = rational::approximate(p1_measure_mass(alpha, cutoff, f64::INFINITY), MASS_DENOMINATOR)?;
    let body_part = atoms_with_total(&points, &(Rational::one() - &tail))?;
    let mut atoms: Vec<(Vec<Rational>, Rational)> = body_part.atoms().iter().map(|a| (a.point.clone(), a.mass.clone())).collect();
    atoms.push((vec![rational::approximate(cutoff, POINT_DENOMINATOR)?], tail));
    let measure = DiscreteMeasure::new(1, atoms)?;
    let body = Polytope::from_vertices(1, vec![vec![-Rational::one()], vec![Rational::zero()]])?;
    let mut problem = SbpProblem::new(body, measure);
    problem.tolerance = tolerance;
    problem.max_iter = max_iter;
    problem.seed = seed;
    let solution = solve_sbp(&problem)?;
    let f = &solution.phi;
    let f0 = f.eval_f64(&[0.0]);
    let recovered: Vec<f64> = P1_PROBES.iter().map(|&u| f.eval_f64(&[u]) - (-u).max(0.0) - f0 + 1.0).collect();
    let exact: Vec<f64> = P1_PROBES.iter().map(|&u| p1_solution(alpha, u)).collect();
    let sup_error = recovered.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(P1Run {
        alpha,
        atoms: m,
        cutoff,
        probes: P1_PROBES.to_vec(),
        recovered,
        exact,
        sup_error,
        iterations: solution.iterations,
        solution,
    })
}
