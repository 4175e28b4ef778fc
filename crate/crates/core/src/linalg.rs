//! Gaussian elimination over exact rationals and tolerance-aware doubles.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num::{One, Signed, Zero};

use crate::rational::{self, Rational};

pub trait Field:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    const EXACT: bool;

    fn abs_val(&self) -> Self;
    fn from_rational(r: &Rational) -> Self;
    fn from_usize(n: usize) -> Self;
    fn as_f64(&self) -> f64;
    /// Zero test relative to the magnitude `scale` of the quantities that produced `self`.
    fn negligible(&self, scale: &Self) -> bool;
}

impl Field for Rational {
    const EXACT: bool = true;

    fn abs_val(&self) -> Self {
        self.abs()
    }
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn from_usize(n: usize) -> Self {
        Rational::from_integer(n.into())
    }
    fn as_f64(&self) -> f64 {
        rational::to_f64(self)
    }
    fn negligible(&self, _scale: &Self) -> bool {
        self.is_zero()
    }
}

pub const F64_REL_TOL: f64 = 1e-11;

impl Field for f64 {
    const EXACT: bool = false;

    fn abs_val(&self) -> Self {
        self.abs()
    }
    fn from_rational(r: &Rational) -> Self {
        rational::to_f64(r)
    }
    fn from_usize(n: usize) -> Self {
        n as f64
    }
    fn as_f64(&self) -> f64 {
        *self
    }
    fn negligible(&self, scale: &Self) -> bool {
        self.abs() <= F64_REL_TOL * scale.abs().max(1e-300)
    }
}

fn max_abs<F: Field>(rows: &[Vec<F>]) -> F {
    let mut m = F::zero();
    for row in rows {
        for x in row {
            let a = x.abs_val();
            if a > m {
                m = a;
            }
        }
    }
    m
}

/// Reduced row echelon form in place; returns pivot columns.
pub fn rref<F: Field>(m: &mut [Vec<F>], ncols: usize) -> Vec<usize> {
    let scale = max_abs(m);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == m.len() {
            break;
        }
        let mut best = None;
        let mut best_abs = F::zero();
        for (i, row) in m.iter().enumerate().skip(r) {
            let a = row[c].abs_val();
            if a.negligible(&scale) {
                continue;
            }
            if F::EXACT {
                best = Some(i);
                break;
            }
            if best.is_none() || a > best_abs {
                best = Some(i);
                best_abs = a;
            }
        }
        let Some(p) = best else { continue };
        m.swap(r, p);
        let inv = F::one() / m[r][c].clone();
        for x in m[r].iter_mut() {
            *x = x.clone() * inv.clone();
        }
        for i in 0..m.len() {
            if i == r || m[i][c].is_zero() {
                continue;
            }
            let f = m[i][c].clone();
            for j in 0..m[r].len() {
                let v = m[r][j].clone() * f.clone();
                m[i][j] = m[i][j].clone() - v;
            }
            m[i][c] = F::zero();
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank<F: Field>(rows: &[Vec<F>], ncols: usize) -> usize {
    let mut m = rows.to_vec();
    rref(&mut m, ncols).len()
}

/// Affine dimension of a point set (`-1` encoded as `None` for the empty set).
pub fn affine_dim<F: Field>(points: &[&[F]]) -> Option<usize> {
    let (first, rest) = points.split_first()?;
    let diffs: Vec<Vec<F>> = rest
        .iter()
        .map(|p| p.iter().zip(first.iter()).map(|(a, b)| a.clone() - b.clone()).collect())
        .collect();
    Some(rank(&diffs, first.len()))
}

/// Basis of `{x : rows·x = 0}`.
pub fn nullspace<F: Field>(rows: &[Vec<F>], ncols: usize) -> Vec<Vec<F>> {
    let mut m = rows.to_vec();
    let pivots = rref(&mut m, ncols);
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut x = vec![F::zero(); ncols];
            x[f] = F::one();
            for (r, &p) in pivots.iter().enumerate() {
                x[p] = -m[r][f].clone();
            }
            x
        })
        .collect()
}

pub fn det<F: Field>(a: &[Vec<F>]) -> F {
    let n = a.len();
    let mut m = a.to_vec();
    let mut d = F::one();
    for c in 0..n {
        let mut p = None;
        let mut best = F::zero();
        for (i, row) in m.iter().enumerate().skip(c) {
            let v = row[c].abs_val();
            if F::EXACT && !v.is_zero() {
                p = Some(i);
                break;
            }
            if !F::EXACT && v > best {
                best = v;
                p = Some(i);
            }
        }
        let Some(p) = p else { return F::zero() };
        if p != c {
            m.swap(p, c);
            d = -d;
        }
        let piv = m[c][c].clone();
        d = d * piv.clone();
        for i in c + 1..n {
            if m[i][c].is_zero() {
                continue;
            }
            let f = m[i][c].clone() / piv.clone();
            for j in c..n {
                let v = m[c][j].clone() * f.clone();
                m[i][j] = m[i][j].clone() - v;
            }
        }
    }
    d
}

/// Unique solution of a square system, if it exists.
pub fn solve<F: Field>(a: &[Vec<F>], b: &[F]) -> Option<Vec<F>> {
    let n = a.len();
    let mut m: Vec<Vec<F>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| row.iter().cloned().chain(std::iter::once(bi.clone())).collect())
        .collect();
    let pivots = rref(&mut m, n);
    if pivots.len() < n {
        return None;
    }
    Some(m.iter().map(|row| row[n].clone()).collect())
}

pub fn inverse<F: Field>(a: &[Vec<F>]) -> Option<Vec<Vec<F>>> {
    let n = a.len();
    let mut m: Vec<Vec<F>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { F::one() } else { F::zero() }));
            r
        })
        .collect();
    let pivots = rref(&mut m, n);
    if pivots.len() < n {
        return None;
    }
    Some(m.into_iter().map(|row| row[n..].to_vec()).collect())
}

pub fn mat_mul<F: Field>(a: &[Vec<F>], b: &[Vec<F>], inner: usize, cols: usize) -> Vec<Vec<F>> {
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).fold(F::zero(), |acc, k| acc + row[k].clone() * b[k][j].clone()))
                .collect()
        })
        .collect()
}

/// Positive definiteness of a symmetric matrix via leading principal minors.
pub fn is_positive_definite(a: &[Vec<Rational>]) -> bool {
    (1..=a.len()).all(|k| {
        let minor: Vec<Vec<Rational>> = a[..k].iter().map(|row| row[..k].to_vec()).collect();
        det(&minor).is_positive()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{frac, int, qvec};

    #[test]
    fn exact_det_and_inverse() {
        let a = vec![qvec(&[2, 1]), qvec(&[1, 3])];
        assert_eq!(det(&a), int(5));
        let inv = inverse(&a).unwrap();
        assert_eq!(inv[0], vec![frac(3, 5), frac(-1, 5)]);
        assert_eq!(solve(&a, &qvec(&[3, 4])).unwrap(), qvec(&[1, 1]));
    }

    #[test]
    fn nullspace_and_rank() {
        let rows = vec![qvec(&[1, 1, 0])];
        let ns = nullspace(&rows, 3);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            assert_eq!(crate::rational::dot(&rows[0], v), int(0));
        }
        assert_eq!(rank(&[qvec(&[1, 2]), qvec(&[2, 4])], 2), 1);
    }

    #[test]
    fn float_rank_tolerates_noise() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 4.0 + 1e-14]];
        assert_eq!(rank(&rows, 2), 1);
        assert!((det(&[vec![0.0, 1.0], vec![1.0, 0.0]]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn leading_minors() {
        assert!(is_positive_definite(&[qvec(&[2, 1]), qvec(&[1, 2])]));
        assert!(!is_positive_definite(&[qvec(&[1, 2]), qvec(&[2, 1])]));
    }
}
