//! Fixed-size complex linear algebra for one- and two-qubit operators.
//!
//! Matrices are stored row-major as `[[Complex64; N]; N]`. Two-qubit
//! operators use the Kronecker convention `index = 2 * a + b`, where `a`
//! indexes subsystem A and `b` indexes subsystem B.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tolerances;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// A dense `N x N` complex matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMat<const N: usize>(pub [[C64; N]; N]);

pub type Mat2 = CMat<2>;
pub type Mat4 = CMat<4>;

/// A single-qubit ket.
pub type Ket2 = [C64; 2];

impl<const N: usize> Default for CMat<N> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<const N: usize> CMat<N> {
    pub const fn zeros() -> Self {
        CMat([[ZERO; N]; N])
    }

    pub fn identity() -> Self {
        Self::from_fn(|i, j| if i == j { ONE } else { ZERO })
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = f(i, j);
            }
        }
        m
    }

    pub fn from_real(rows: [[f64; N]; N]) -> Self {
        Self::from_fn(|i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn diagonal(d: [f64; N]) -> Self {
        Self::from_fn(|i, j| if i == j { C64::new(d[i], 0.0) } else { ZERO })
    }

    /// Hermitian part `(M + M^dagger) / 2`, built so the result is exactly Hermitian.
    pub fn hermitian_part(&self) -> Self {
        let mut h = Self::zeros();
        for i in 0..N {
            h.0[i][i] = C64::new(self.0[i][i].re, 0.0);
            for j in (i + 1)..N {
                let v = (self.0[i][j] + self.0[j][i].conj()) * 0.5;
                h.0[i][j] = v;
                h.0[j][i] = v.conj();
            }
        }
        h
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(|i, j| self.0[j][i].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(|i, j| self.0[j][i])
    }

    pub fn conj(&self) -> Self {
        Self::from_fn(|i, j| self.0[i][j].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..N).map(|i| self.0[i][i]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_fn(|i, j| self.0[i][j] * s)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        Self::from_fn(|i, j| self.0[i][j] * s)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Entrywise comparison with an explicit absolute tolerance.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    /// `max |M_ij - conj(M_ji)|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        self.max_abs_diff(&self.dagger())
    }

    /// Elementwise product-sum `sum_ij A_ij B_ij`, the convolution contraction.
    pub fn contract(&self, other: &Self) -> C64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }
}

impl<const N: usize> Index<(usize, usize)> for CMat<N> {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.0[i][j]
    }
}

impl<const N: usize> IndexMut<(usize, usize)> for CMat<N> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.0[i][j]
    }
}

impl<const N: usize> Add for CMat<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.0[i][j] + rhs.0[i][j])
    }
}

impl<const N: usize> Sub for CMat<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.0[i][j] - rhs.0[i][j])
    }
}

impl<const N: usize> Neg for CMat<N> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::from_fn(|i, j| -self.0[i][j])
    }
}

impl<const N: usize> Mul for CMat<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.0[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..N {
                    out.0[i][j] += a * rhs.0[k][j];
                }
            }
        }
        out
    }
}

impl<const N: usize> Mul<f64> for CMat<N> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.scale_re(rhs)
    }
}

/// The Pauli basis `sigma_0 = I, sigma_x, sigma_y, sigma_z`.
pub const PAULI: [Mat2; 4] = [
    CMat([[ONE, ZERO], [ZERO, ONE]]),
    CMat([[ZERO, ONE], [ONE, ZERO]]),
    CMat([[ZERO, C64::new(0.0, -1.0)], [I, ZERO]]),
    CMat([[ONE, ZERO], [ZERO, C64::new(-1.0, 0.0)]]),
];

pub fn pauli(i: usize) -> Mat2 {
    PAULI[i]
}

/// `sigma . r` for a real 3-vector.
pub fn pauli_dot(r: [f64; 3]) -> Mat2 {
    PAULI[1] * r[0] + PAULI[2] * r[1] + PAULI[3] * r[2]
}

/// Kronecker product; block `(i, j)` of the result equals `a_ij * b`.
pub fn tensor(a: &Mat2, b: &Mat2) -> Mat4 {
    Mat4::from_fn(|r, c| a.0[r / 2][c / 2] * b.0[r % 2][c % 2])
}

/// Reduced operator on B: `Tr_A(rho)`.
pub fn partial_trace_a(rho: &Mat4) -> Mat2 {
    Mat2::from_fn(|p, q| rho.0[p][q] + rho.0[2 + p][2 + q])
}

/// Reduced operator on A: `Tr_B(rho)`.
pub fn partial_trace_b(rho: &Mat4) -> Mat2 {
    Mat2::from_fn(|a, b| rho.0[2 * a][2 * b] + rho.0[2 * a + 1][2 * b + 1])
}

/// `|v><w|`.
pub fn outer(v: &Ket2, w: &Ket2) -> Mat2 {
    Mat2::from_fn(|i, j| v[i] * w[j].conj())
}

pub fn inner(v: &Ket2, w: &Ket2) -> C64 {
    v[0].conj() * w[0] + v[1].conj() * w[1]
}

pub fn ket_norm(v: &Ket2) -> f64 {
    (v[0].norm_sqr() + v[1].norm_sqr()).sqrt()
}

/// Eigendecomposition of a Hermitian matrix. Eigenvalues are sorted in
/// descending order and `vectors` holds the matching orthonormal columns.
#[derive(Clone, Copy, Debug)]
pub struct HermitianEigen<const N: usize> {
    pub values: [f64; N],
    pub vectors: CMat<N>,
}

impl<const N: usize> HermitianEigen<N> {
    pub fn column(&self, k: usize) -> [C64; N] {
        std::array::from_fn(|i| self.vectors.0[i][k])
    }

    /// `V diag(lambda) V^dagger`.
    pub fn reconstruct(&self) -> CMat<N> {
        let lambda = CMat::<N>::diagonal(self.values);
        self.vectors * lambda * self.vectors.dagger()
    }
}

fn off_diagonal_norm<const N: usize>(m: &CMat<N>) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        for j in 0..N {
            if i != j {
                s += m.0[i][j].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigensolver for a Hermitian matrix.
///
/// The input is symmetrized first, so small asymmetries from upstream
/// arithmetic are tolerated. Each rotation first removes the phase of the
/// pivot `a_pq` with a diagonal unitary, then applies a real Givens rotation.
pub fn eig_hermitian<const N: usize>(m: &CMat<N>) -> Result<HermitianEigen<N>> {
    let mut a = m.hermitian_part();
    let mut v = CMat::<N>::identity();
    let scale = a.frobenius_norm();
    let threshold = tolerances::JACOBI_CONVERGENCE * scale.max(f64::MIN_POSITIVE);

    let mut converged = off_diagonal_norm(&a) <= threshold;
    let mut sweeps = 0;
    while !converged && sweeps < tolerances::JACOBI_MAX_SWEEPS {
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = a.0[p][q];
                let r = apq.norm();
                if r <= f64::MIN_POSITIVE {
                    continue;
                }
                let phase = apq / r;
                let app = a.0[p][p].re;
                let aqq = a.0[q][q].re;
                let theta = 0.5 * (-2.0 * r).atan2(aqq - app);
                let (s, c) = theta.sin_cos();
                let dq = phase.conj();
                // Rotation restricted to the (p, q) plane.
                let g_pp = C64::new(c, 0.0);
                let g_pq = C64::new(-s, 0.0);
                let g_qp = dq * s;
                let g_qq = dq * c;

                for k in 0..N {
                    let hkp = a.0[k][p];
                    let hkq = a.0[k][q];
                    a.0[k][p] = hkp * g_pp + hkq * g_qp;
                    a.0[k][q] = hkp * g_pq + hkq * g_qq;
                    let vkp = v.0[k][p];
                    let vkq = v.0[k][q];
                    v.0[k][p] = vkp * g_pp + vkq * g_qp;
                    v.0[k][q] = vkp * g_pq + vkq * g_qq;
                }
                for k in 0..N {
                    let hpk = a.0[p][k];
                    let hqk = a.0[q][k];
                    a.0[p][k] = g_pp.conj() * hpk + g_qp.conj() * hqk;
                    a.0[q][k] = g_pq.conj() * hpk + g_qq.conj() * hqk;
                }
                a.0[p][q] = ZERO;
                a.0[q][p] = ZERO;
                a.0[p][p] = C64::new(a.0[p][p].re, 0.0);
                a.0[q][q] = C64::new(a.0[q][q].re, 0.0);
            }
        }
        sweeps += 1;
        converged = off_diagonal_norm(&a) <= threshold;
    }
    if !converged {
        return Err(Error::NoConvergence {
            sweeps,
            residual: off_diagonal_norm(&a),
        });
    }

    let mut order: [usize; N] = std::array::from_fn(|i| i);
    order.sort_by(|&i, &j| a.0[j][j].re.total_cmp(&a.0[i][i].re));
    let values = std::array::from_fn(|k| a.0[order[k]][order[k]].re);
    let vectors = CMat::from_fn(|i, k| v.0[i][order[k]]);
    Ok(HermitianEigen { values, vectors })
}

/// Von Neumann entropy in bits, `-sum lambda log2 lambda`.
pub fn von_neumann_entropy<const N: usize>(rho: &CMat<N>) -> Result<f64> {
    let trace = rho.trace().re;
    if (trace - 1.0).abs() > tolerances::ENTROPY_TRACE {
        return Err(Error::TraceNotUnit { trace });
    }
    let eig = eig_hermitian(rho)?;
    entropy_of_spectrum(&eig.values)
}

/// Shannon entropy (bits) of an eigenvalue list, with clamping of tiny negatives.
pub fn entropy_of_spectrum(values: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for &lambda in values {
        if lambda < -tolerances::POSITIVITY_VIOLATION {
            return Err(Error::NotPositive { eigenvalue: lambda });
        }
        if lambda > tolerances::ENTROPY_CLAMP {
            s -= lambda * lambda.log2();
        }
    }
    Ok(s.max(0.0))
}
