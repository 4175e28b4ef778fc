//! Polarized tropical abelian varieties, automorphic PL functions and the torus Monge–Ampère solver.

use std::collections::{BTreeMap, BTreeSet};

use num::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex::{AffinePiece, ConvexOracle, Epigraph, MaxAffine};
use crate::dd::{Cut, Dd};
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::monge_ampere::DiscreteMeasure;
use crate::polytope::Polytope;
use crate::rational::{self, dot, factorial_q, Rational, QVec, Q};
use crate::sbp::{self, clip_order, damped_newton, power_cells};

fn int(x: i64) -> Rational {
    rational::int(x)
}

fn half() -> Rational {
    rational::frac(1, 2)
}

/// `(Λ, M, λ)`: lattice generators are the columns of `lambda_basis`; `polarization` maps them into `M = Z^n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PtavJson", into = "PtavJson")]
pub struct PolarizedTropAV {
    n: usize,
    lambda_basis: Vec<QVec>,
    polarization: Vec<Vec<i64>>,
    // derived
    lambda_inv: Vec<QVec>,
    gram: Vec<QVec>,
    gram_inv: Vec<QVec>,
    b: Vec<QVec>,
    d: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PtavReport {
    pub valid: bool,
    /// `|det λ| = #coker(λ)`.
    pub d: u64,
    pub degree: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_axiom: Option<String>,
}

/// Checks the lattice, cokernel and positivity axioms.
pub fn validate_ptav(n: usize, lambda_basis: &[QVec], polarization: &[Vec<i64>]) -> PtavReport {
    let fail = |axiom: &str| PtavReport { valid: false, d: 0, degree: 0, failed_axiom: Some(axiom.to_string()) };
    if lambda_basis.len() != n || lambda_basis.iter().any(|r| r.len() != n) || polarization.len() != n || polarization.iter().any(|r| r.len() != n) {
        return fail("shape: lambda_basis and polarization must be n×n");
    }
    if linalg::det(lambda_basis).is_zero() {
        return fail("lattice: lambda_basis is singular");
    }
    let p: Vec<QVec> = polarization.iter().map(|r| r.iter().map(|&x| int(x)).collect()).collect();
    let det = linalg::det(&p).abs();
    if det.is_zero() {
        return fail("finite cokernel: polarization is singular");
    }
    let gram = linalg::mat_mul(&rational::transpose(lambda_basis, n), &p, n, n);
    for i in 0..n {
        for j in 0..i {
            if gram[i][j] != gram[j][i] {
                return fail("symmetry: [λ_k, λ(λ_l)] is not symmetric");
            }
        }
    }
    if !linalg::is_positive_definite(&gram) {
        return fail("positivity: [λ_k, λ(λ_l)] is not positive definite");
    }
    let d = det.to_integer().to_u64().expect("moderate determinant");
    PtavReport { valid: true, d, degree: d * d, failed_axiom: None }
}

impl PolarizedTropAV {
    pub fn new(n: usize, lambda_basis: Vec<QVec>, polarization: Vec<Vec<i64>>) -> Result<Self> {
        let report = validate_ptav(n, &lambda_basis, &polarization);
        if let Some(axiom) = report.failed_axiom {
            return invalid(format!("invalid polarized tropical abelian variety: {axiom}"));
        }
        let p: Vec<QVec> = polarization.iter().map(|r| r.iter().map(|&x| int(x)).collect()).collect();
        let lambda_inv = if n == 0 { Vec::new() } else { linalg::inverse(&lambda_basis).expect("checked invertible") };
        let gram = linalg::mat_mul(&rational::transpose(&lambda_basis, n), &p, n, n);
        let gram_inv = if n == 0 { Vec::new() } else { linalg::inverse(&gram).expect("positive definite") };
        let b = linalg::mat_mul(&p, &lambda_inv, n, n);
        Ok(PolarizedTropAV { n, lambda_basis, polarization, lambda_inv, gram, gram_inv, b, d: report.d })
    }

    /// `Λ = Z^n ⊂ N_ℝ` with `λ = diag(…)`.
    pub fn diagonal(entries: &[i64]) -> Result<Self> {
        let n = entries.len();
        let id: Vec<QVec> = (0..n).map(|i| (0..n).map(|j| int(i64::from(i == j))).collect()).collect();
        let p = (0..n).map(|i| (0..n).map(|j| if i == j { entries[i] } else { 0 }).collect()).collect();
        PolarizedTropAV::new(n, id, p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambda_basis(&self) -> &[QVec] {
        &self.lambda_basis
    }

    pub fn polarization(&self) -> &[Vec<i64>] {
        &self.polarization
    }

    pub fn d(&self) -> u64 {
        self.d
    }

    pub fn report(&self) -> PtavReport {
        PtavReport { valid: true, d: self.d, degree: self.d * self.d, failed_axiom: None }
    }

    /// Gram matrix `G = LᵀP` of `b` in the lattice basis.
    pub fn gram(&self) -> &[QVec] {
        &self.gram
    }

    /// Matrix of `b(x, y) = xᵀ B y` on `N_ℝ`.
    pub fn b_matrix(&self) -> &[QVec] {
        &self.b
    }

    /// `n!·d`.
    pub fn canonical_volume(&self) -> Rational {
        factorial_q(self.n) * Rational::from_integer(self.d.into())
    }

    /// Lattice vector `Lk`.
    pub fn lattice_point(&self, k: &[i64]) -> QVec {
        let kq: QVec = k.iter().map(|&x| int(x)).collect();
        rational::mat_vec(&self.lambda_basis, &kq)
    }

    /// `λ(Lk) = Pk ∈ M`.
    pub fn polarize(&self, k: &[i64]) -> QVec {
        self.polarization.iter().map(|row| int(row.iter().zip(k).map(|(a, b)| a * b).sum())).collect()
    }

    /// Lattice coordinates `L⁻¹ω`.
    pub fn coordinates(&self, omega: &[Rational]) -> QVec {
        rational::mat_vec(&self.lambda_inv, omega)
    }

    /// `(ω₀, k)` with `ω = ω₀ + Lk` and `ω₀` in the half-open fundamental domain.
    pub fn reduce(&self, omega: &[Rational]) -> (QVec, Vec<i64>) {
        let t = self.coordinates(omega);
        let k: Vec<i64> = t.iter().map(|x| x.floor().to_integer().to_i64().expect("moderate coordinate")).collect();
        (rational::sub(omega, &self.lattice_point(&k)), k)
    }

    /// Closed fundamental domain `L[0,1]^n`.
    pub fn fundamental_domain(&self) -> Polytope {
        if self.n == 0 {
            return Polytope::point(Vec::new());
        }
        let corners = cube_corners(self.n).into_iter().map(|c| self.lattice_point(&c)).collect();
        Polytope::from_vertices(self.n, corners).expect("nonsingular basis")
    }

    /// `P[0,1]^n`, a fundamental domain of `λ(Λ)` in `M_ℝ`.
    pub fn dual_domain(&self) -> Polytope {
        if self.n == 0 {
            return Polytope::point(Vec::new());
        }
        let corners = cube_corners(self.n).into_iter().map(|c| self.polarize(&c)).collect();
        Polytope::from_vertices(self.n, corners).expect("nonsingular polarization")
    }

    pub fn cocycle(&self) -> Cocycle {
        Cocycle { ptav: self.clone() }
    }
}

fn cube_corners(n: usize) -> Vec<Vec<i64>> {
    (0..1u32 << n).map(|mask| (0..n).map(|j| i64::from((mask >> j) & 1)).collect()).collect()
}

#[derive(Serialize, Deserialize)]
struct PtavJson {
    n: usize,
    lambda_basis: Vec<Vec<Q>>,
    polarization: Vec<Vec<i64>>,
}

impl TryFrom<PtavJson> for PolarizedTropAV {
    type Error = Error;
    fn try_from(j: PtavJson) -> Result<Self> {
        PolarizedTropAV::new(j.n, j.lambda_basis.into_iter().map(rational::unwrap).collect(), j.polarization)
    }
}

impl From<PolarizedTropAV> for PtavJson {
    fn from(p: PolarizedTropAV) -> Self {
        PtavJson { n: p.n, lambda_basis: p.lambda_basis.iter().map(|r| rational::wrap(r)).collect(), polarization: p.polarization }
    }
}

/// `Q(x) = ½ b(x,x)` and `z_λ(ω) = Q(ω+λ) - Q(ω) = ½ b(λ,λ) + b(ω,λ)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cocycle {
    pub ptav: PolarizedTropAV,
}

impl Cocycle {
    pub fn q(&self, x: &[Rational]) -> Rational {
        dot(x, &rational::mat_vec(&self.ptav.b, x)) * half()
    }

    /// `z_{Lk}(ω)`.
    pub fn z(&self, k: &[i64], omega: &[Rational]) -> Rational {
        let kq: QVec = k.iter().map(|&x| int(x)).collect();
        dot(&kq, &rational::mat_vec(&self.ptav.gram, &kq)) * half() + dot(omega, &self.ptav.polarize(k))
    }

    /// `z_λ(ω) - z_λ(0) - b(ω,λ)`; zero for a genuine cocycle.
    pub fn identity_defect(&self, k: &[i64], omega: &[Rational]) -> Rational {
        let lam = self.ptav.lattice_point(k);
        let b_omega_lambda = dot(omega, &rational::mat_vec(&self.ptav.b, &lam));
        let zero = vec![Rational::zero(); self.ptav.n];
        self.z(k, omega) - self.z(k, &zero) - b_omega_lambda
    }

    /// `h_{p+λ}(ω) = h_p(ω-λ) + z_λ(ω-λ)` for `λ = Lk`.
    pub fn translate_piece(&self, p: &AffinePiece, k: &[i64]) -> AffinePiece {
        let kq: QVec = k.iter().map(|&x| int(x)).collect();
        let slope = rational::add(&p.slope, &self.ptav.polarize(k));
        let offset = &p.offset - dot(&p.slope, &self.ptav.lattice_point(k)) - dot(&kq, &rational::mat_vec(&self.ptav.gram, &kq)) * half();
        AffinePiece::new(slope, offset)
    }
}

/// A translate `h_{p + Lk}` that is maximal somewhere on the closed fundamental domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalPiece {
    pub base: usize,
    pub shift: Vec<i64>,
    pub piece: AffinePiece,
}

/// `f = sup_{p, λ} h_{p+λ}`: convex, automorphic for the cocycle of `ptav`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PeriodicJson", into = "PeriodicJson")]
pub struct PeriodicPL {
    cocycle: Cocycle,
    base: Vec<AffinePiece>,
    local: Vec<LocalPiece>,
    local_fn: MaxAffine,
    radius: usize,
    certified: bool,
}

impl PeriodicPL {
    pub fn new(ptav: PolarizedTropAV, base: Vec<AffinePiece>) -> Result<Self> {
        let n = ptav.n;
        if base.is_empty() {
            return invalid("PeriodicPL needs at least one base piece");
        }
        if base.iter().any(|p| p.slope.len() != n) {
            return invalid("base piece of wrong dimension");
        }
        let cocycle = ptav.cocycle();
        if n == 0 {
            let best = base.iter().max_by(|a, b| a.offset.cmp(&b.offset)).expect("nonempty").clone();
            let local = vec![LocalPiece { base: 0, shift: vec![], piece: best.clone() }];
            let local_fn = MaxAffine::new(0, vec![best])?;
            return Ok(PeriodicPL { cocycle, base, local, local_fn, radius: 0, certified: true });
        }
        let candidates = candidate_translates(&ptav, &cocycle, &base);
        let corners: Vec<QVec> = cube_corners(n).into_iter().map(|c| ptav.lattice_point(&c)).collect();
        let local = dominance_filter(candidates, &corners);
        let radius = local.iter().flat_map(|l| l.shift.iter().map(|x| x.unsigned_abs() as usize)).max().unwrap_or(0);
        let local_fn = MaxAffine::new(n, local.iter().map(|l| l.piece.clone()).collect())?;
        let mut f = PeriodicPL { cocycle, base, local, local_fn, radius, certified: false };
        f.certified = f.check_ring(radius + 1);
        Ok(f)
    }

    pub fn ptav(&self) -> &PolarizedTropAV {
        &self.cocycle.ptav
    }

    pub fn cocycle(&self) -> &Cocycle {
        &self.cocycle
    }

    pub fn base_pieces(&self) -> &[AffinePiece] {
        &self.base
    }

    pub fn local_pieces(&self) -> &[LocalPiece] {
        &self.local
    }

    /// `f` on the closed fundamental domain.
    pub fn local_function(&self) -> &MaxAffine {
        &self.local_fn
    }

    /// Largest `‖k‖∞` among retained translates.
    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Whether all translates at radius `R+1` are strictly below `f` on the closed fundamental domain.
    pub fn is_certified(&self) -> bool {
        self.certified
    }

    pub fn eval(&self, omega: &[Rational]) -> Rational {
        let (w0, k) = self.ptav().reduce(omega);
        self.local_fn.eval(&w0) + self.cocycle.z(&k, &w0)
    }

    pub fn eval_f64(&self, omega: &[f64]) -> f64 {
        match omega.iter().map(|&x| rational::from_f64(x)).collect::<Result<QVec>>() {
            Ok(w) => rational::to_f64(&self.eval(&w)),
            Err(_) => f64::NAN,
        }
    }

    /// `f - Q`, the periodic part.
    pub fn periodic_part(&self, omega: &[Rational]) -> Rational {
        self.eval(omega) - self.cocycle.q(omega)
    }

    /// A slope of `f` at `ω`.
    pub fn subgradient(&self, omega: &[Rational]) -> QVec {
        let (w0, k) = self.ptav().reduce(omega);
        let i = self.local_fn.active(&w0)[0];
        rational::add(&self.local_fn.pieces()[i].slope, &self.ptav().polarize(&k))
    }

    /// `f(ω + Lk) - f(ω) - z_{Lk}(ω)`.
    pub fn automorphy_defect(&self, k: &[i64], omega: &[Rational]) -> Rational {
        let moved = rational::add(omega, &self.ptav().lattice_point(k));
        self.eval(&moved) - self.eval(omega) - self.cocycle.z(k, omega)
    }

    /// Brute-force `sup` over all translates with `‖k‖∞ ≤ radius`.
    pub fn eval_truncated(&self, omega: &[Rational], radius: i64) -> Rational {
        let n = self.ptav().n;
        lattice_box(n, radius)
            .into_iter()
            .flat_map(|k| self.base.iter().map(move |p| (p, k.clone())))
            .map(|(p, k)| self.cocycle.translate_piece(p, &k).eval(omega))
            .max()
            .expect("nonempty")
    }

    fn check_ring(&self, r: usize) -> bool {
        let n = self.ptav().n;
        let region = self.ptav().fundamental_domain().to_dd::<Rational>();
        let epi = Epigraph::new(&region, self.local_fn.pieces());
        let lows: Vec<(QVec, Rational)> = epi.lower_vertices().into_iter().map(|(u, t, _, _)| (u, t)).collect();
        let r = r as i64;
        lattice_box(n, r).into_iter().filter(|k| k.iter().any(|x| x.abs() == r)).all(|k| {
            self.base.iter().all(|p| {
                let h = self.cocycle.translate_piece(p, &k);
                lows.iter().all(|(u, t)| h.eval(u) < *t)
            })
        })
    }
}

impl ConvexOracle for PeriodicPL {
    fn dim(&self) -> usize {
        self.ptav().n
    }
    fn value(&self, u: &[f64]) -> f64 {
        self.eval_f64(u)
    }
    fn exact_support(&self, u: &[Rational]) -> Option<(Rational, QVec)> {
        Some((self.eval(u), self.subgradient(u)))
    }
}

#[derive(Serialize, Deserialize)]
struct PeriodicJson {
    ptav: PolarizedTropAV,
    pieces: Vec<crate::convex::PieceJson>,
}

impl TryFrom<PeriodicJson> for PeriodicPL {
    type Error = Error;
    fn try_from(j: PeriodicJson) -> Result<Self> {
        PeriodicPL::new(j.ptav, j.pieces.into_iter().map(AffinePiece::from).collect())
    }
}

impl From<PeriodicPL> for PeriodicJson {
    fn from(f: PeriodicPL) -> Self {
        PeriodicJson { ptav: f.cocycle.ptav, pieces: f.base.iter().map(crate::convex::PieceJson::from).collect() }
    }
}

fn lattice_box(n: usize, r: i64) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out.into_iter().flat_map(|k| (-r..=r).map(move |x| { let mut k = k.clone(); k.push(x); k })).collect();
    }
    out
}

/// Translates that can be maximal somewhere on `L[0,1]^n`.
///
/// With `ω = Lt`, `h_{p+Lk}(ω) - Q(ω) = c_p + ½aᵀG⁻¹a - ½‖k - t - s_p‖²_G` where `a = Lᵀm_p`, `s_p = -G⁻¹a`.
/// Rounding `t + s_p` for the best piece bounds `f - Q` below by `M - ½ρ`, `ρ = max_{r∈[-½,½]^n} rᵀGr`.
fn candidate_translates(ptav: &PolarizedTropAV, cocycle: &Cocycle, base: &[AffinePiece]) -> Vec<LocalPiece> {
    let n = ptav.n;
    let lt = rational::transpose(&ptav.lambda_basis, n);
    let peaks: Vec<(QVec, Rational)> = base
        .iter()
        .map(|p| {
            let a = rational::mat_vec(&lt, &p.slope);
            let ginv_a = rational::mat_vec(&ptav.gram_inv, &a);
            let top = &p.offset + dot(&a, &ginv_a) * half();
            (ginv_a.iter().map(|x| -x).collect(), top)
        })
        .collect();
    let best = peaks.iter().map(|(_, t)| t.clone()).max().expect("nonempty");
    let rho = cube_corners(n)
        .into_iter()
        .map(|c| {
            let r: QVec = c.iter().map(|&x| int(x) - half()).collect();
            dot(&r, &rational::mat_vec(&ptav.gram, &r))
        })
        .max()
        .expect("nonempty");
    let mut out = Vec::new();
    for (idx, (p, (center, top))) in base.iter().zip(&peaks).enumerate() {
        let r2 = &rho + (top - &best) * int(2);
        if r2.is_negative() {
            continue;
        }
        let r2f = rational::to_f64(&r2);
        let ranges: Vec<(i64, i64)> = (0..n)
            .map(|j| {
                let w = (r2f * rational::to_f64(&ptav.gram_inv[j][j])).max(0.0).sqrt() * (1.0 + 1e-9) + 1e-9;
                let c = rational::to_f64(&center[j]);
                ((c - w).floor() as i64 - 1, (c + 1.0 + w).ceil() as i64 + 1)
            })
            .collect();
        let mut ks = vec![Vec::new()];
        for &(lo, hi) in &ranges {
            ks = ks.into_iter().flat_map(|k: Vec<i64>| (lo..=hi).map(move |x| { let mut k = k.clone(); k.push(x); k })).collect();
        }
        for k in ks {
            // necessary condition for ‖k - t - s‖²_G ≤ r² with t in the unit box
            let kq: QVec = k.iter().map(|&x| int(x)).collect();
            let diff = rational::sub(&kq, center);
            let clamped: QVec = diff.iter().map(|x| x.clone() - x.clone().max(int(0)).min(int(1))).collect();
            let lower_ok = coordinate_lower_bound(&ptav.gram_inv, &clamped) <= r2;
            if lower_ok {
                out.push(LocalPiece { base: idx, piece: cocycle.translate_piece(p, &k), shift: k });
            }
        }
    }
    out
}

/// Lower bound of `min_{t ∈ [0,1]^n} ‖x - t‖²_G` from `residual = x - clamp(x)`, using `v_j² ≤ (G⁻¹)_jj·vᵀGv`.
fn coordinate_lower_bound(ginv: &[QVec], residual: &[Rational]) -> Rational {
    (0..residual.len()).map(|j| &residual[j] * &residual[j] / &ginv[j][j]).max().unwrap_or_else(Rational::zero)
}

/// Drops exact duplicates and pieces strictly below a single other piece at every corner.
fn dominance_filter(mut cands: Vec<LocalPiece>, corners: &[QVec]) -> Vec<LocalPiece> {
    cands.sort_by(|a, b| a.piece.cmp(&b.piece).then(a.shift.cmp(&b.shift)));
    cands.dedup_by(|a, b| a.piece == b.piece);
    let vals: Vec<Vec<Rational>> = cands.iter().map(|c| corners.iter().map(|w| c.piece.eval(w)).collect()).collect();
    let keep: Vec<bool> = (0..cands.len())
        .map(|i| !(0..cands.len()).any(|j| j != i && vals[j].iter().zip(&vals[i]).all(|(a, b)| a > b)))
        .collect();
    cands.into_iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c).collect()
}

/// Periodic rational approximation from supporting pieces at `grid`, closed under lattice translates.
pub fn periodic_approximation(oracle: &dyn ConvexOracle, ptav: &PolarizedTropAV, grid: &[QVec], eps: &Rational) -> Result<PeriodicPL> {
    if grid.is_empty() {
        return invalid("empty grid");
    }
    if eps.is_negative() {
        return invalid("negative tolerance");
    }
    let n = ptav.n;
    if oracle.dim() != n {
        return invalid("oracle dimension differs from the rank");
    }
    let cocycle = ptav.cocycle();
    for p in grid {
        let pf = rational::vec_to_f64(p);
        let fp = oracle.value(&pf);
        for j in 0..n {
            let mut k = vec![0; n];
            k[j] = 1;
            let moved = rational::vec_to_f64(&rational::add(p, &ptav.lattice_point(&k)));
            let z = rational::to_f64(&cocycle.z(&k, p));
            let defect = oracle.value(&moved) - fp - z;
            if defect.abs() > 1e-12 * (1.0 + fp.abs() + z.abs()) {
                return invalid(format!("oracle violates automorphy by {defect:e} at {pf:?}"));
            }
        }
    }
    let base = grid
        .iter()
        .map(|p| crate::convex::supporting_piece(oracle, p, eps))
        .collect::<Result<Vec<_>>>()?;
    PeriodicPL::new(ptav.clone(), base)
}

/// A vertex of the periodic decomposition, reduced into the half-open fundamental domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodicVertex {
    pub point: QVec,
    pub active_slopes: Vec<QVec>,
}

/// Vertices mod `Λ` with the slopes of the pieces active there.
pub fn periodic_vertices(f: &PeriodicPL) -> Vec<PeriodicVertex> {
    let ptav = f.ptav();
    let n = ptav.n;
    if n == 0 {
        return vec![PeriodicVertex { point: vec![], active_slopes: vec![vec![]] }];
    }
    let region = ptav.fundamental_domain().to_dd::<Rational>();
    let g = &f.local_fn;
    let epi = Epigraph::new(&region, g.pieces());
    let mut seen: BTreeMap<QVec, PeriodicVertex> = BTreeMap::new();
    for (u, _, _, _) in epi.lower_vertices() {
        let active = g.active(&u);
        let slopes: Vec<&[Rational]> = active.iter().map(|&i| g.pieces()[i].slope.as_slice()).collect();
        if linalg::affine_dim(&slopes) != Some(n) {
            continue;
        }
        let (w0, _) = ptav.reduce(&u);
        seen.entry(w0.clone()).or_insert_with(|| {
            let (_, k) = ptav.reduce(&u);
            // slopes at the representative: shift by -Pk
            let shift = ptav.polarize(&k);
            let mut active_slopes: Vec<QVec> = slopes.iter().map(|s| rational::sub(s, &shift)).collect();
            active_slopes.sort();
            active_slopes.dedup();
            PeriodicVertex { point: w0, active_slopes }
        });
    }
    seen.into_values().collect()
}

/// `n!·vol(∂f(ω))` at each vertex mod `Λ`.
pub fn periodic_ma_measure(f: &PeriodicPL) -> DiscreteMeasure {
    let n = f.ptav().n;
    let atoms = periodic_vertices(f).into_iter().map(|v| {
        let mass = if n == 0 { Rational::one() } else { Polytope::from_vertices(n, v.active_slopes).expect("nonempty").normalized_volume() };
        (v.point, mass)
    });
    DiscreteMeasure::new(n, atoms).expect("nonnegative masses")
}

#[derive(Clone, Debug)]
pub struct TorusOptions {
    pub tolerance: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub anchor: Option<usize>,
    pub rescale: bool,
}

impl Default for TorusOptions {
    fn default() -> Self {
        TorusOptions { tolerance: sbp::DEFAULT_TOLERANCE, max_iter: sbp::DEFAULT_MAX_ITER, seed: 0, anchor: None, rescale: false }
    }
}

#[derive(Clone, Debug)]
pub struct TorusSolution {
    /// `f = φ + Q`, exactly automorphic.
    pub f: PeriodicPL,
    /// Atoms reduced into the fundamental domain; offsets and residuals follow this order.
    pub measure: DiscreteMeasure,
    /// `c_i = f(p_i)`.
    pub offsets: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub anchor: usize,
    /// Replication radius used for the periodic cells.
    pub replicas: usize,
}

impl TorusSolution {
    /// `φ = f - Q`, normalized to vanish at the anchor atom.
    pub fn phi(&self, omega: &[Rational]) -> Rational {
        self.f.periodic_part(omega)
    }

    pub fn phi_f64(&self, omega: &[f64]) -> f64 {
        match omega.iter().map(|&x| rational::from_f64(x)).collect::<Result<QVec>>() {
            Ok(w) => rational::to_f64(&self.phi(&w)),
            Err(_) => f64::NAN,
        }
    }
}

struct Replicas {
    /// `(atom, shift)` for each replicated site.
    index: Vec<(usize, Vec<i64>)>,
    sites: Vec<Vec<f64>>,
    exact_sites: Vec<QVec>,
    /// `c_{i,k} - c_i = ½kᵀGk + ⟨p_i, Pk⟩`.
    extra: Vec<Rational>,
    extra_f64: Vec<f64>,
    order: Vec<Vec<usize>>,
    radius: i64,
}

fn replicate(ptav: &PolarizedTropAV, points: &[QVec], radius: i64) -> Replicas {
    let cocycle = ptav.cocycle();
    let mut index = Vec::new();
    let mut exact_sites = Vec::new();
    let mut extra = Vec::new();
    for k in lattice_box(ptav.n, radius) {
        for (i, p) in points.iter().enumerate() {
            exact_sites.push(rational::add(p, &ptav.lattice_point(&k)));
            extra.push(cocycle.z(&k, p));
            index.push((i, k.clone()));
        }
    }
    let sites: Vec<Vec<f64>> = exact_sites.iter().map(|s| rational::vec_to_f64(s)).collect();
    let extra_f64 = extra.iter().map(rational::to_f64).collect();
    let order = clip_order(&sites);
    Replicas { index, sites, exact_sites, extra, extra_f64, order, radius }
}

struct TorusEval {
    volumes: Vec<f64>,
    integral: f64,
    weights: Vec<(usize, usize, f64)>,
    ring_mass: f64,
    touching: Vec<Vec<usize>>,
    replica_volumes: Vec<f64>,
}

fn torus_eval(base: &Dd<f64>, reps: &Replicas, atoms: usize, c: &[f64]) -> TorusEval {
    let full: Vec<f64> = reps.index.iter().zip(&reps.extra_f64).map(|((i, _), e)| c[*i] + e).collect();
    let pc = power_cells(base, &reps.sites, &reps.order, &full);
    let mut volumes = vec![0.0; atoms];
    let mut ring_mass = 0.0;
    for ((i, k), v) in reps.index.iter().zip(&pc.volumes) {
        volumes[*i] += v;
        if k.iter().any(|x| x.abs() >= reps.radius - 1) {
            ring_mass += v;
        }
    }
    let mut agg: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(a, b, w) in &pc.weights {
        let (i, j) = (reps.index[a].0, reps.index[b].0);
        if i != j {
            *agg.entry((i.min(j), i.max(j))).or_insert(0.0) += w;
        }
    }
    TorusEval {
        volumes,
        integral: pc.integral,
        weights: agg.into_iter().map(|((i, j), w)| (i, j, w)).collect(),
        ring_mass,
        touching: pc.touching,
        replica_volumes: pc.volumes,
    }
}

/// Solves `MA(φ + Q) = μ` on `N_ℝ/Λ` for atomic `μ` of total mass `n!·d`.
pub fn solve_torus_ma(ptav: &PolarizedTropAV, mu: &DiscreteMeasure, opts: &TorusOptions) -> Result<TorusSolution> {
    let n = ptav.n;
    if mu.dim() != n {
        return invalid("measure and torus have different dimensions");
    }
    if mu.atoms().is_empty() {
        return invalid("measure has no atoms");
    }
    let reduced = DiscreteMeasure::new(n, mu.atoms().iter().map(|a| (ptav.reduce(&a.point).0, a.mass.clone())))?;
    let expected = ptav.canonical_volume();
    let total = reduced.total_mass();
    let measure = if total == expected {
        reduced
    } else if opts.rescale {
        reduced.scale_mass(&(&expected / &total))
    } else if rational::to_f64(&((&total - &expected) / &expected)).abs() <= sbp::MASS_RELATIVE_TOLERANCE {
        reduced
    } else {
        return invalid(format!(
            "total mass {} differs from n!·d = {}",
            rational::format(&total),
            rational::format(&expected)
        ));
    };
    let cocycle = ptav.cocycle();
    let atoms = measure.atoms();
    let anchor = opts.anchor.unwrap_or_else(|| {
        let mut best = 0;
        for i in 1..atoms.len() {
            if atoms[i].mass > atoms[best].mass {
                best = i;
            }
        }
        best
    });
    if anchor >= atoms.len() {
        return invalid("anchor index out of range");
    }
    let points: Vec<QVec> = atoms.iter().map(|a| a.point.clone()).collect();
    if n == 0 {
        let f = PeriodicPL::new(ptav.clone(), vec![AffinePiece::new(vec![], Rational::zero())])?;
        return Ok(TorusSolution { f, measure, offsets: vec![0.0], residuals: vec![0.0], iterations: 0, anchor, replicas: 0 });
    }
    let masses = measure.masses_f64();
    let fact = sbp::factorial_f64(n);
    let domain = ptav.dual_domain();
    let base = domain.to_dd::<f64>();
    let q: Vec<f64> = points.iter().map(|p| rational::to_f64(&cocycle.q(p))).collect();

    let mut radius = 2;
    let mut reps = replicate(ptav, &points, radius);
    // seeded perturbation of c = Q(p), shrunk until every cell is nonempty
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let noise: Vec<f64> = (0..points.len()).map(|i| if i == anchor { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
    let mut eta = 1e-2;
    let mut c = loop {
        let c: Vec<f64> = q.iter().zip(&noise).map(|(a, z)| a + eta * z).collect();
        let ev = torus_eval(&base, &reps, points.len(), &c);
        if ev.volumes.iter().all(|&v| v > 0.0) || eta == 0.0 {
            break c;
        }
        eta = if eta < 1e-8 { 0.0 } else { eta / 4.0 };
    };
    let mut total_iterations = 0;
    let outcome = loop {
        let eval = |c: &[f64]| {
            let ev = torus_eval(&base, &reps, points.len(), c);
            (ev.volumes, ev.integral, ev.weights)
        };
        let outcome = match damped_newton(&masses, c.clone(), anchor, opts.tolerance, opts.max_iter.saturating_sub(total_iterations).max(1), fact, eval) {
            Ok(o) => o,
            Err(Error::NoConvergence { iterations, max_residual, best_offsets, residuals }) => {
                return Err(Error::NoConvergence { iterations: iterations + total_iterations, max_residual, best_offsets, residuals })
            }
            Err(e) => return Err(e),
        };
        total_iterations += outcome.iterations;
        let ev = torus_eval(&base, &reps, points.len(), &outcome.offsets);
        if ev.ring_mass == 0.0 || radius >= 12 {
            break outcome;
        }
        radius += 2;
        reps = replicate(ptav, &points, radius);
        c = outcome.offsets;
    };
    let ev = torus_eval(&base, &reps, points.len(), &outcome.offsets);
    let f = reconstruct_periodic(ptav, &domain, &reps, &outcome.offsets, anchor, &cocycle.q(&points[anchor]), &ev)?;
    let residuals = masses.iter().zip(&outcome.volumes).map(|(m, v)| (m - fact * v).abs()).collect();
    Ok(TorusSolution {
        f,
        measure,
        offsets: outcome.offsets,
        residuals,
        iterations: total_iterations,
        anchor,
        replicas: radius as usize,
    })
}

/// Exact Laguerre cells of the replicated sites in `P[0,1]^n`; their vertices give the base pieces of `f`.
fn reconstruct_periodic(
    ptav: &PolarizedTropAV,
    domain: &Polytope,
    reps: &Replicas,
    offsets: &[f64],
    anchor: usize,
    anchor_value: &Rational,
    ev: &TorusEval,
) -> Result<PeriodicPL> {
    let mut c: QVec = offsets.iter().map(|&x| rational::approximate(x, sbp::OFFSET_DENOMINATOR)).collect::<Result<_>>()?;
    c[anchor] = anchor_value.clone();
    let full: QVec = reps.index.iter().zip(&reps.extra).map(|((i, _), e)| &c[*i] + e).collect();
    let target = domain.normalized_volume();
    let live: Vec<usize> = (0..reps.sites.len()).filter(|&r| ev.replica_volumes[r] > 0.0).collect();
    let clip = |r: usize, cands: &mut dyn Iterator<Item = usize>| {
        let mut dd = domain.to_dd::<Rational>();
        for j in cands {
            if dd.is_empty() {
                break;
            }
            if j != r {
                dd.clip(Cut::new(rational::sub(&reps.exact_sites[j], &reps.exact_sites[r]), &full[j] - &full[r]));
            }
        }
        dd
    };
    let mut cells: Vec<(usize, Dd<Rational>)> = live.iter().map(|&r| (r, clip(r, &mut ev.touching[r].iter().copied()))).collect();
    let total: Rational = cells.iter().map(|(_, d)| if d.is_empty() { Rational::zero() } else { d.normalized_volume() }).sum();
    if total != target {
        cells = (0..reps.sites.len()).map(|r| (r, clip(r, &mut (0..reps.sites.len())))).collect();
    }
    let mut pieces: BTreeSet<AffinePiece> = BTreeSet::new();
    for (r, dd) in &cells {
        for v in &dd.vertices {
            let psi = dot(&v.point, &reps.exact_sites[*r]) - &full[*r];
            pieces.insert(AffinePiece::new(v.point.clone(), -psi));
        }
    }
    PeriodicPL::new(ptav.clone(), pieces.into_iter().collect())
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::Quadratic;
    use crate::rational::{frac, qvec};
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest, ProptestConfig, Strategy};

    fn theta_ptav() -> PolarizedTropAV {
        PolarizedTropAV::diagonal(&[1]).unwrap()
    }

    /// `P` integer, `S` symmetric positive definite, `L = P⁻ᵀS` so that `LᵀP = S`.
    pub(crate) fn ptav_from(p: Vec<Vec<i64>>, s: Vec<QVec>) -> PolarizedTropAV {
        let n = p.len();
        let pq: Vec<QVec> = p.iter().map(|r| r.iter().map(|&x| int(x)).collect()).collect();
        let pinv_t = rational::transpose(&linalg::inverse(&pq).unwrap(), n);
        let l = linalg::mat_mul(&pinv_t, &s, n, n);
        PolarizedTropAV::new(n, l, p).unwrap()
    }

    fn arb_ptav() -> impl Strategy<Value = PolarizedTropAV> {
        (1usize..=2).prop_flat_map(|n| {
            (prop::collection::vec(-2i64..=2, n * n), prop::collection::vec(-2i64..=2, n * n), 1i64..=3).prop_filter_map(
                "singular",
                move |(p, a, diag)| {
                    let p: Vec<Vec<i64>> = (0..n).map(|i| p[i * n..(i + 1) * n].to_vec()).collect();
                    let pq: Vec<QVec> = p.iter().map(|r| r.iter().map(|&x| int(x)).collect()).collect();
                    if linalg::det(&pq).is_zero() || linalg::det(&pq).abs() > int(3) {
                        return None;
                    }
                    // S = AᵀA + diag·I
                    let s: Vec<QVec> = (0..n)
                        .map(|i| {
                            (0..n)
                                .map(|j| {
                                    let v: i64 = (0..n).map(|k| a[k * n + i] * a[k * n + j]).sum();
                                    frac(v + if i == j { diag } else { 0 }, 2)
                                })
                                .collect()
                        })
                        .collect();
                    Some(ptav_from(p, s))
                },
            )
        })
    }

    fn arb_periodic() -> impl Strategy<Value = PeriodicPL> {
        arb_ptav().prop_flat_map(|ptav| {
            let n = ptav.n();
            prop::collection::vec((prop::collection::vec(-4i64..=4, n), -4i64..=4), 1..=3).prop_map(move |ps| {
                let base = ps.into_iter().map(|(m, c)| AffinePiece::new(m.iter().map(|&x| frac(x, 2)).collect(), frac(c, 3))).collect();
                PeriodicPL::new(ptav.clone(), base).unwrap()
            })
        })
    }

    #[test]
    fn validation_examples() {
        let r = theta_ptav().report();
        assert_eq!((r.valid, r.d, r.degree), (true, 1, 1));
        let r = PolarizedTropAV::diagonal(&[3]).unwrap().report();
        assert_eq!((r.d, r.degree), (3, 9));
        let id = vec![qvec(&[1, 0]), qvec(&[0, 1])];
        let r = validate_ptav(2, &id, &[vec![1, 1], vec![0, 1]]);
        assert!(!r.valid && r.failed_axiom.unwrap().starts_with("symmetry"));
        let r = validate_ptav(2, &id, &[vec![-1, 0], vec![0, 1]]);
        assert!(!r.valid && r.failed_axiom.unwrap().contains("positive definite"));
        let r = validate_ptav(1, &[qvec(&[0])], &[vec![1]]);
        assert!(r.failed_axiom.unwrap().starts_with("lattice"));
        assert_eq!(theta_ptav().canonical_volume(), int(1));
        assert_eq!(PolarizedTropAV::diagonal(&[3]).unwrap().canonical_volume(), int(3));
        assert_eq!(PolarizedTropAV::diagonal(&[1, 2]).unwrap().canonical_volume(), int(4));
        let json = serde_json::to_string(&theta_ptav()).unwrap();
        assert_eq!(json, r#"{"n":1,"lambda_basis":[["1"]],"polarization":[[1]]}"#);
        assert_eq!(serde_json::from_str::<PolarizedTropAV>(&json).unwrap(), theta_ptav());
    }

    #[test]
    fn theta_from_quadratic() {
        let q = Quadratic::new(vec![qvec(&[1])]);
        let h = periodic_approximation(&q, &theta_ptav(), &[qvec(&[0])], &frac(1, 10)).unwrap();
        assert_eq!(h.base_pieces(), &[AffinePiece::new(qvec(&[0]), int(0))]);
        assert!(h.is_certified());
        for k in -40..=40 {
            let x = frac(k, 8);
            let brute = (-10..=10).map(|j| int(j) * &x - frac(j * j, 2)).max().unwrap();
            assert_eq!(h.eval(&[x.clone()]), brute);
            let gap = q.eval(&[x.clone()]) - h.eval(&[x]);
            assert!(gap >= int(0) && gap <= frac(1, 8));
        }
        assert_eq!(q.eval(&[half()]) - h.eval(&[half()]), frac(1, 8));
        let mu = periodic_ma_measure(&h);
        assert_eq!(mu, DiscreteMeasure::new(1, [(vec![half()], int(1))]).unwrap());
    }

    #[test]
    fn doubled_polarization() {
        let ptav = PolarizedTropAV::diagonal(&[2]).unwrap();
        assert_eq!(ptav.cocycle().q(&qvec(&[3])), int(9));
        let q = Quadratic::new(vec![qvec(&[2])]);
        let h = periodic_approximation(&q, &ptav, &[qvec(&[0]), vec![half()]], &int(0)).unwrap();
        let mu = periodic_ma_measure(&h);
        assert_eq!(mu, DiscreteMeasure::new(1, [(vec![frac(1, 4)], int(1)), (vec![frac(3, 4)], int(1))]).unwrap());
        let single = PeriodicPL::new(ptav, vec![AffinePiece::new(qvec(&[0]), int(0))]).unwrap();
        assert_eq!(periodic_ma_measure(&single).total_mass(), int(2));
    }

    #[test]
    fn periodic_input_is_reproduced() {
        let ptav = theta_ptav();
        let f = PeriodicPL::new(ptav.clone(), vec![AffinePiece::new(qvec(&[0]), int(0))]).unwrap();
        let h = periodic_approximation(&f, &ptav, &[vec![frac(1, 4)], vec![frac(3, 4)]], &int(0)).unwrap();
        for k in -20..=20 {
            let x = vec![frac(k, 7)];
            assert_eq!(h.eval(&x), f.eval(&x));
        }
    }

    #[test]
    fn automorphy_violation_is_rejected() {
        let q = Quadratic::new(vec![qvec(&[2])]);
        assert!(periodic_approximation(&q, &theta_ptav(), &[qvec(&[0])], &int(0)).is_err());
    }

    #[test]
    fn torus_theta() {
        let ptav = theta_ptav();
        let mu = DiscreteMeasure::new(1, [(vec![half()], int(1))]).unwrap();
        let sol = solve_torus_ma(&ptav, &mu, &TorusOptions::default()).unwrap();
        assert_eq!(sol.phi(&[half()]) - sol.phi(&qvec(&[0])), frac(-1, 8));
        assert_eq!(sol.phi(&[half()]), int(0));
        assert_eq!(periodic_ma_measure(&sol.f), mu);

        let mu0 = DiscreteMeasure::new(1, [(qvec(&[0]), int(1))]).unwrap();
        let sol0 = solve_torus_ma(&ptav, &mu0, &TorusOptions::default()).unwrap();
        assert_eq!(periodic_ma_measure(&sol0.f), mu0);
        for k in 0..8 {
            let x = vec![frac(k, 8)];
            assert_eq!(sol0.phi(&x) - sol0.phi(&qvec(&[0])), sol.phi(&rational::add(&x, &[half()])) - sol.phi(&[half()]));
        }
    }

    #[test]
    fn torus_product() {
        let ptav = PolarizedTropAV::diagonal(&[1, 1]).unwrap();
        let mu = DiscreteMeasure::new(2, [(vec![half(), half()], int(2))]).unwrap();
        let sol = solve_torus_ma(&ptav, &mu, &TorusOptions::default()).unwrap();
        assert!(sol.residuals.iter().all(|&r| r <= 1e-9 * 2.0));
        assert_eq!(sol.phi(&[half(), half()]) - sol.phi(&qvec(&[0, 0])), frac(-1, 4));
        assert_eq!(periodic_ma_measure(&sol.f), mu);
    }

    #[test]
    fn torus_seeds_agree() {
        let ptav = ptav_from(vec![vec![1, 0], vec![1, 2]], vec![vec![int(2), frac(1, 2)], vec![frac(1, 2), int(1)]]);
        let total = ptav.canonical_volume();
        let pts = [vec![frac(1, 5), frac(1, 3)], vec![frac(2, 3), frac(1, 7)], vec![frac(1, 2), frac(4, 5)]];
        let pts: Vec<QVec> = pts.iter().map(|p| rational::mat_vec(ptav.lambda_basis(), p)).collect();
        let w = [int(1), int(2), int(1)];
        let mu = DiscreteMeasure::new(2, pts.into_iter().zip(w).map(|(p, m)| (p, m * &total / int(4)))).unwrap();
        let a = solve_torus_ma(&ptav, &mu, &TorusOptions::default()).unwrap();
        let b = solve_torus_ma(&ptav, &mu, &TorusOptions { seed: 17, ..TorusOptions::default() }).unwrap();
        for k in 0..6 {
            let x = vec![frac(k, 6), frac(5 - k, 7)];
            assert!((a.phi_f64(&rational::vec_to_f64(&x)) - b.phi_f64(&rational::vec_to_f64(&x))).abs() < 1e-8);
        }
        let got = periodic_ma_measure(&a.f);
        assert_eq!(got.atoms().len(), 3);
        assert_eq!(got.total_mass(), total);
        for (x, y) in got.masses_f64().iter().zip(a.measure.masses_f64()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn cocycle_identity(ptav in arb_ptav(), k in prop::collection::vec(-3i64..=3, 2), w in prop::collection::vec(-9i64..=9, 2)) {
            let n = ptav.n();
            let omega: QVec = w[..n].iter().map(|&x| frac(x, 4)).collect();
            prop_assert!(ptav.cocycle().identity_defect(&k[..n], &omega).is_zero());
            let lam = ptav.lattice_point(&k[..n]);
            let c = ptav.cocycle();
            prop_assert_eq!(c.z(&k[..n], &omega), c.q(&rational::add(&omega, &lam)) - c.q(&omega));
        }

        #[test]
        fn periodic_mass_and_automorphy(f in arb_periodic(), w in prop::collection::vec(-9i64..=9, 2)) {
            let n = f.ptav().n();
            prop_assert_eq!(periodic_ma_measure(&f).total_mass(), f.ptav().canonical_volume());
            prop_assert!(f.is_certified());
            let omega: QVec = w[..n].iter().map(|&x| frac(x, 5)).collect();
            for j in 0..n {
                let mut k = vec![0; n];
                k[j] = 1;
                prop_assert!(f.automorphy_defect(&k, &omega).is_zero());
            }
            let r = f.radius() as i64 + 6;
            prop_assert_eq!(f.eval(&omega), f.eval_truncated(&omega, r));
        }
    }
}
