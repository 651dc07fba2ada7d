//! Small dense complex linear algebra.
//!
//! Array sizes in this crate stay modest (transmit apertures up to a few
//! hundred elements, user counts in the tens), so a self-contained row-major
//! matrix type with Gauss-Jordan inversion is both sufficient and easy to
//! audit. Nothing here is tuned for large systems.

use crate::scalar::{Cx, Scalar};
use num_complex::Complex;
use num_traits::{One, Zero};

/// Hermitian inner product `⟨u, v⟩ = Σ conj(u_i)·v_i`.
pub fn dot_h<S: Scalar>(u: &[Cx<S>], v: &[Cx<S>]) -> Cx<S> {
    debug_assert_eq!(u.len(), v.len());
    u.iter()
        .zip(v)
        .fold(Cx::zero(), |acc, (a, b)| acc + a.conj() * b)
}

/// Squared Euclidean norm of a complex vector.
pub fn norm_sqr<S: Scalar>(v: &[Cx<S>]) -> S {
    v.iter().map(|z| z.norm_sqr()).fold(S::zero(), |a, b| a + b)
}

/// Euclidean norm of a complex vector.
pub fn norm<S: Scalar>(v: &[Cx<S>]) -> S {
    norm_sqr(v).sqrt()
}

/// Scale a vector by a complex factor.
pub fn scale<S: Scalar>(v: &[Cx<S>], c: Cx<S>) -> Vec<Cx<S>> {
    v.iter().map(|z| z * c).collect()
}

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat<S> {
    rows: usize,
    cols: usize,
    data: Vec<Cx<S>>,
}

impl<S: Scalar> CMat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Cx::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Cx::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Cx<S>) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Build from column vectors; all columns must share one length.
    pub fn from_cols(cols: &[Vec<Cx<S>>]) -> Self {
        let ncols = cols.len();
        let nrows = cols.first().map_or(0, Vec::len);
        Self::from_fn(nrows, ncols, |i, j| cols[j][i])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> Vec<Cx<S>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Outer product `a · bᵀ` (no conjugation; matches steering-matrix use).
    pub fn outer_t(a: &[Cx<S>], b: &[Cx<S>]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] = out[(i, j)] + a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[Cx<S>]) -> Vec<Cx<S>> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| {
                (0..self.cols).fold(Cx::zero(), |acc, j| acc + self[(i, j)] * x[j])
            })
            .collect()
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] + rhs[(i, j)])
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] - rhs[(i, j)])
    }

    pub fn scale_re(&self, c: S) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)].scale(c))
    }

    pub fn scale_cx(&self, c: Cx<S>) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * c)
    }

    pub fn frobenius(&self) -> S {
        self.data
            .iter()
            .map(|z| z.norm_sqr())
            .fold(S::zero(), |a, b| a + b)
            .sqrt()
    }

    /// Max column sum of entry moduli (induced 1-norm).
    pub fn norm_one(&self) -> S {
        (0..self.cols)
            .map(|j| {
                (0..self.rows)
                    .map(|i| self[(i, j)].norm())
                    .fold(S::zero(), |a, b| a + b)
            })
            .fold(S::zero(), S::max)
    }

    /// `Tr(self · rhsᴴ) = Σ self[m,n]·conj(rhs[m,n])`.
    pub fn trace_product_h(&self, rhs: &Self) -> Cx<S> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(&rhs.data)
            .fold(Cx::zero(), |acc, (a, b)| acc + a * b.conj())
    }

    pub fn trace(&self) -> Cx<S> {
        assert_eq!(self.rows, self.cols);
        (0..self.rows).fold(Cx::zero(), |acc, i| acc + self[(i, i)])
    }

    /// Gauss-Jordan inverse with partial pivoting. `None` when a pivot
    /// modulus underflows the singularity floor.
    pub fn inverse(&self) -> Option<Self> {
        assert_eq!(self.rows, self.cols, "inverse requires a square matrix");
        let n = self.rows;
        let mut aug = Self::zeros(n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                aug[(i, j)] = self[(i, j)];
            }
            aug[(i, n + i)] = Cx::one();
        }
        // Scale-aware floor: treat pivots below eps^2 · max|entry| as zero.
        let floor = {
            let maxmod = self
                .data
                .iter()
                .map(|z| z.norm())
                .fold(S::zero(), S::max);
            (S::epsilon() * S::epsilon()) * maxmod.max(S::one())
        };
        for col in 0..n {
            let mut piv = col;
            let mut best = aug[(col, col)].norm();
            for r in (col + 1)..n {
                let m = aug[(r, col)].norm();
                if m > best {
                    best = m;
                    piv = r;
                }
            }
            if best <= floor {
                return None;
            }
            if piv != col {
                for j in 0..2 * n {
                    let tmp = aug[(col, j)];
                    aug[(col, j)] = aug[(piv, j)];
                    aug[(piv, j)] = tmp;
                }
            }
            let inv_piv = Cx::<S>::one() / aug[(col, col)];
            for j in 0..2 * n {
                aug[(col, j)] = aug[(col, j)] * inv_piv;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = aug[(r, col)];
                if f.is_zero() {
                    continue;
                }
                for j in 0..2 * n {
                    let s = f * aug[(col, j)];
                    aug[(r, j)] = aug[(r, j)] - s;
                }
            }
        }
        Some(Self::from_fn(n, n, |i, j| aug[(i, n + j)]))
    }

    /// Two largest singular values via power iteration on `AᴴA` with one
    /// deflation step. Used by rank diagnostics; accuracy ~1e-10 relative.
    pub fn top2_singular_values(&self) -> (S, S) {
        let s1 = self.dominant_singular(None);
        if s1 <= S::zero() {
            return (S::zero(), S::zero());
        }
        let v1 = self.dominant_right_vector(None);
        let s2 = self.dominant_singular(Some(&v1));
        (s1, s2)
    }

    fn dominant_right_vector(&self, deflate: Option<&[Cx<S>]>) -> Vec<Cx<S>> {
        let n = self.cols;
        // Deterministic non-degenerate start.
        let mut v: Vec<Cx<S>> = (0..n)
            .map(|i| {
                Cx::new(
                    S::one() + conv_s::<S>(i as f64) * conv_s::<S>(1e-3),
                    conv_s::<S>(0.5) + conv_s::<S>((i % 7) as f64) * conv_s::<S>(1e-3),
                )
            })
            .collect();
        // Projection applied twice: a single pass leaves cancellation noise
        // that re-aligns with the deflated direction after normalization.
        orthogonalize(&mut v, deflate);
        orthogonalize(&mut v, deflate);
        normalize(&mut v);
        for _ in 0..200 {
            let av = self.matvec(&v);
            let mut w = self.hermitian().matvec(&av);
            let before = norm(&w);
            orthogonalize(&mut w, deflate);
            orthogonalize(&mut w, deflate);
            let nw = norm(&w);
            // Deflated component is numerically null: keep the previous
            // in-subspace iterate rather than normalized rounding noise.
            if nw <= before * S::epsilon() * conv_s::<S>(64.0) {
                return v;
            }
            for z in &mut w {
                *z = z.scale(S::one() / nw);
            }
            let drift = dot_h(&w, &v).norm();
            v = w;
            if (drift - S::one()).abs() < S::epsilon() * conv_s::<S>(16.0) {
                break;
            }
        }
        v
    }

    fn dominant_singular(&self, deflate: Option<&[Cx<S>]>) -> S {
        let v = self.dominant_right_vector(deflate);
        let nv = norm(&v);
        if nv <= S::zero() {
            return S::zero();
        }
        norm(&self.matvec(&v)) / nv
    }
}

fn conv_s<S: Scalar>(x: f64) -> S {
    crate::scalar::conv(x)
}

fn orthogonalize<S: Scalar>(v: &mut [Cx<S>], against: Option<&[Cx<S>]>) {
    if let Some(u) = against {
        let proj = dot_h(u, v);
        for (z, uz) in v.iter_mut().zip(u) {
            *z = *z - proj * uz;
        }
    }
}

fn normalize<S: Scalar>(v: &mut [Cx<S>]) {
    let n = norm(v);
    if n > S::zero() {
        for z in v.iter_mut() {
            *z = z.scale(S::one() / n);
        }
    }
}

impl<S> std::ops::Index<(usize, usize)> for CMat<S> {
    type Output = Complex<S>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Self::Output {
        &self.data[i * self.cols + j]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for CMat<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Self::Output {
        &mut self.data[i * self.cols + j]
    }
}

/// Real 2×2 matrix in row-major layout; the working size for the
/// two-parameter estimation blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2<S> {
    pub m: [[S; 2]; 2],
}

impl<S: Scalar> Mat2<S> {
    pub fn new(a: S, b: S, c: S, d: S) -> Self {
        Self { m: [[a, b], [c, d]] }
    }

    pub fn zeros() -> Self {
        Self::new(S::zero(), S::zero(), S::zero(), S::zero())
    }

    pub fn identity() -> Self {
        Self::new(S::one(), S::zero(), S::zero(), S::one())
    }

    pub fn diag(a: S, d: S) -> Self {
        Self::new(a, S::zero(), S::zero(), d)
    }

    pub fn trace(&self) -> S {
        self.m[0][0] + self.m[1][1]
    }

    pub fn det(&self) -> S {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    pub fn mul(&self, r: &Self) -> Self {
        Self::new(
            self.m[0][0] * r.m[0][0] + self.m[0][1] * r.m[1][0],
            self.m[0][0] * r.m[0][1] + self.m[0][1] * r.m[1][1],
            self.m[1][0] * r.m[0][0] + self.m[1][1] * r.m[1][0],
            self.m[1][0] * r.m[0][1] + self.m[1][1] * r.m[1][1],
        )
    }

    pub fn sub(&self, r: &Self) -> Self {
        Self::new(
            self.m[0][0] - r.m[0][0],
            self.m[0][1] - r.m[0][1],
            self.m[1][0] - r.m[1][0],
            self.m[1][1] - r.m[1][1],
        )
    }

    pub fn scale(&self, c: S) -> Self {
        Self::new(
            self.m[0][0] * c,
            self.m[0][1] * c,
            self.m[1][0] * c,
            self.m[1][1] * c,
        )
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == S::zero() {
            return None;
        }
        Some(Self::new(
            self.m[1][1] / d,
            -self.m[0][1] / d,
            -self.m[1][0] / d,
            self.m[0][0] / d,
        ))
    }

    /// Eigenvalues assuming symmetry (uses the mean off-diagonal).
    pub fn sym_eigenvalues(&self) -> (S, S) {
        let half = conv_s::<S>(0.5);
        let mean = (self.m[0][0] + self.m[1][1]) * half;
        let b = (self.m[0][1] + self.m[1][0]) * half;
        let delta = (self.m[0][0] - self.m[1][1]) * half;
        let r = (delta * delta + b * b).sqrt();
        (mean - r, mean + r)
    }

    pub fn symmetry_gap(&self) -> S {
        (self.m[0][1] - self.m[1][0]).abs()
    }
}

/// 1-norm condition estimate `‖A‖₁ · ‖A⁻¹‖₁`.
pub fn cond_one<S: Scalar>(a: &CMat<S>, a_inv: &CMat<S>) -> S {
    a.norm_one() * a_inv.norm_one()
}
