//! Banded matrices and LU factorization with partial pivoting.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{Result, SppError};

pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    fn zero() -> Self;
    fn one() -> Self;
    fn modulus(self) -> f64;
    fn conjugate(self) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn conjugate(self) -> Self {
        self
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn conjugate(self) -> Self {
        self.conj()
    }
}

/// Square matrix with `kl` sub- and `ku` super-diagonals, stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandedMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandedMatrix { n, kl, ku, data: vec![T::zero(); n * (kl + ku + 1)] }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), 0, 0);
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn ku(&self) -> usize {
        self.ku
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    fn index(&self, i: usize, j: usize) -> usize {
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if self.in_band(i, j) {
            self.data[self.index(i, j)]
        } else {
            T::zero()
        }
    }

    /// Panics when `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let idx = self.index(i, j);
        self.data[idx] = value;
    }

    pub fn add_to(&mut self, i: usize, j: usize, value: T) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let idx = self.index(i, j);
        self.data[idx] += value;
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let mut acc = T::zero();
                for j in self.row_range(i) {
                    acc += self.data[self.index(i, j)] * x[j];
                }
                acc
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            for j in self.row_range(i) {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn conj_transpose(&self) -> Self {
        let mut t = self.transpose();
        for v in &mut t.data {
            *v = v.conjugate();
        }
        t
    }

    /// Same matrix with widened storage.
    pub fn widened(&self, kl: usize, ku: usize) -> Self {
        assert!(kl >= self.kl && ku >= self.ku);
        let mut m = Self::zeros(self.n, kl, ku);
        for i in 0..self.n {
            for j in self.row_range(i) {
                m.set(i, j, self.get(i, j));
            }
        }
        m
    }

    /// `self + alpha * other`; bands are merged.
    pub fn add_scaled(&self, alpha: T, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut m = self.widened(self.kl.max(other.kl), self.ku.max(other.ku));
        for i in 0..other.n {
            for j in other.row_range(i) {
                m.add_to(i, j, alpha * other.get(i, j));
            }
        }
        m
    }

    pub fn scaled(&self, alpha: T) -> Self {
        let mut m = self.clone();
        for v in &mut m.data {
            *v = alpha * *v;
        }
        m
    }

    pub fn add_diagonal(&mut self, shift: T) {
        for i in 0..self.n {
            self.add_to(i, i, shift);
        }
    }

    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in self.row_range(i) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).modulus());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.modulus()))
    }
}

/// LU factors of a banded matrix; row interchanges are replayed during solves.
#[derive(Clone, Debug)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    pub fn factor(a: &BandedMatrix<T>) -> Result<Self> {
        let n = a.n;
        let kl = a.kl;
        let ku = a.kl + a.ku;
        let width = 2 * kl + ku + 1;
        let mut data = vec![T::zero(); n * width];
        let idx = |i: usize, j: usize| i * width + (j + kl - i);
        for i in 0..n {
            for j in a.row_range(i) {
                data[idx(i, j)] = a.get(i, j);
            }
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let mut pivots = vec![0; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku).min(n - 1);
            let mut p = k;
            let mut best = data[idx(k, k)].modulus();
            for i in k + 1..=last_row {
                let v = data[idx(i, k)].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() || best < scale * 1e-300 {
                return Err(SppError::SingularMatrix { row: k });
            }
            pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    data.swap(idx(k, j), idx(p, j));
                }
            }
            let pivot = data[idx(k, k)];
            for i in k + 1..=last_row {
                let l = data[idx(i, k)] / pivot;
                data[idx(i, k)] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let u = data[idx(k, j)];
                    data[idx(i, j)] -= l * u;
                }
            }
        }
        Ok(BandedLu { n, kl, ku, data, pivots })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let width = 2 * self.kl + self.ku + 1;
        let idx = |i: usize, j: usize| i * width + (j + self.kl - i);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..=(k + self.kl).min(n - 1) {
                b[i] -= self.data[idx(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..=(k + self.ku).min(n - 1) {
                acc -= self.data[idx(k, j)] * b[j];
            }
            b[k] = acc / self.data[idx(k, k)];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Solver for the bordered system `[[A, b], [c^T, 0]] [x; s] = [f; g]`
/// where `A` may be close to singular along `b`.
///
/// Block elimination followed by iterative refinement on the full system.
pub struct BorderedSolver<'a, T> {
    a: &'a BandedMatrix<T>,
    lu: &'a BandedLu<T>,
    b: Vec<T>,
    c: Vec<T>,
    a_inv_b: Vec<T>,
    c_a_inv_b: T,
}

impl<'a, T: Scalar> BorderedSolver<'a, T> {
    pub fn new(a: &'a BandedMatrix<T>, lu: &'a BandedLu<T>, b: Vec<T>, c: Vec<T>) -> Result<Self> {
        let a_inv_b = lu.solve(&b);
        let c_a_inv_b = dot(&c, &a_inv_b);
        if c_a_inv_b.modulus() == 0.0 || !c_a_inv_b.modulus().is_finite() {
            return Err(SppError::SingularMatrix { row: a.n() });
        }
        Ok(BorderedSolver { a, lu, b, c, a_inv_b, c_a_inv_b })
    }

    fn eliminate(&self, f: &[T], g: T) -> (Vec<T>, T) {
        let x1 = self.lu.solve(f);
        let s = (dot(&self.c, &x1) - g) / self.c_a_inv_b;
        let x = x1.iter().zip(&self.a_inv_b).map(|(&u, &v)| u - s * v).collect();
        (x, s)
    }

    pub fn solve(&self, f: &[T], g: T) -> (Vec<T>, T) {
        let (mut x, mut s) = self.eliminate(f, g);
        for _ in 0..3 {
            let ax = self.a.apply(&x);
            let r: Vec<T> = f.iter().zip(&ax).zip(&self.b).map(|((&fi, &ai), &bi)| fi - ai - s * bi).collect();
            let rg = g - dot(&self.c, &x);
            let (dx, ds) = self.eliminate(&r, rg);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += *di;
            }
            s += ds;
        }
        (x, s)
    }
}

/// Bilinear product `sum a_i b_i` (no conjugation).
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
