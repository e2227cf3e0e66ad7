//! Two-qubit states: sampling, the block-commutator zero-discord test, and a
//! brute-force discord oracle over projective measurements on subsystem B.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmath::{
    self, eig_hermitian, inner, ket_norm, outer, tensor, CMat, Ket2, Mat2, Mat4, C64, PAULI,
};
use crate::tolerances;

/// Default number of grid points per angle for [`discord_oracle`].
pub const DEFAULT_GRID: usize = 64;
/// Default number of refinement rounds for [`discord_oracle`].
pub const DEFAULT_REFINE: usize = 5;
/// Draws attempted per discordant sample before generation fails.
pub const MAX_RESAMPLES: usize = 100;

/// Deterministic generator for item `index` under `seed`.
///
/// Each item gets its own ChaCha stream, so parallel generation yields the
/// same output as serial generation.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn gaussian(rng: &mut impl Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn ginibre<const N: usize>(rng: &mut impl Rng) -> CMat<N> {
    let g = CMat::<N>::from_fn(|_, _| gaussian(rng));
    let w = (g * g.dagger()).hermitian_part();
    let tr = w.trace().re;
    w.scale_re(1.0 / tr).hermitian_part()
}

fn tensor_basis() -> &'static [[Mat4; 4]; 4] {
    static BASIS: OnceLock<[[Mat4; 4]; 4]> = OnceLock::new();
    BASIS.get_or_init(|| std::array::from_fn(|i| std::array::from_fn(|j| tensor(&PAULI[i], &PAULI[j]))))
}

/// A validated two-qubit density matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix(Mat4);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace, and positivity.
    pub fn new(mat: Mat4) -> Result<Self> {
        let deviation = mat.hermiticity_deviation();
        if deviation > tolerances::HERMITIAN {
            return Err(Error::NotHermitian { deviation });
        }
        let trace = mat.trace().re;
        if (trace - 1.0).abs() > tolerances::TRACE {
            return Err(Error::TraceNotUnit { trace });
        }
        let eig = eig_hermitian(&mat)?;
        let min = eig.values[3];
        if min < tolerances::MIN_EIGENVALUE {
            return Err(Error::NotPositive { eigenvalue: min });
        }
        Ok(DensityMatrix(mat.hermitian_part()))
    }

    /// Wraps a matrix already known to be a state (constructed, not parsed).
    pub(crate) fn from_trusted(mat: Mat4) -> Self {
        DensityMatrix(mat.hermitian_part())
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Mat4::identity() * 0.25)
    }

    /// `|Phi+><Phi+|` with `|Phi+> = (|00> + |11>) / sqrt 2`.
    pub fn bell_phi_plus() -> Self {
        let mut m = Mat4::zeros();
        for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
            m.0[i][j] = C64::new(0.5, 0.0);
        }
        DensityMatrix(m)
    }

    pub fn product(a: &Mat2, b: &Mat2) -> Result<Self> {
        Self::new(tensor(a, b))
    }

    pub fn from_pauli(c: &PauliCoefficients) -> Result<Self> {
        Self::new(c.to_matrix())
    }

    /// `C_ij = Tr[rho (sigma_i x sigma_j)]`.
    pub fn to_pauli(&self) -> PauliCoefficients {
        let basis = tensor_basis();
        let mut c = [[0.0; 4]; 4];
        for (i, row) in c.iter_mut().enumerate() {
            for (j, cij) in row.iter_mut().enumerate() {
                // Tr(rho P) = sum_ab rho_ab P_ba
                *cij = self.0.contract(&basis[i][j].transpose()).re;
            }
        }
        PauliCoefficients(c)
    }

    pub fn reduced_a(&self) -> Mat2 {
        qmath::partial_trace_b(&self.0)
    }

    pub fn reduced_b(&self) -> Mat2 {
        qmath::partial_trace_a(&self.0)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(eig_hermitian(&self.0)?.values[3])
    }

    /// `(u x v) rho (u x v)^dagger`.
    pub fn conjugate_local(&self, u: &Mat2, v: &Mat2) -> Self {
        let w = tensor(u, v);
        DensityMatrix::from_trusted(w * self.0 * w.dagger())
    }
}

/// Pauli-basis image `C_ij = Tr[rho (sigma_i x sigma_j)]`, with `C_00 = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliCoefficients(pub [[f64; 4]; 4]);

impl PauliCoefficients {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    /// `(1/4) sum_ij C_ij sigma_i x sigma_j`.
    pub fn to_matrix(&self) -> Mat4 {
        let basis = tensor_basis();
        let mut m = Mat4::zeros();
        for (i, row) in self.0.iter().enumerate() {
            for (j, &cij) in row.iter().enumerate() {
                if cij != 0.0 {
                    m = m + basis[i][j] * (0.25 * cij);
                }
            }
        }
        m.hermitian_part()
    }

    pub fn flat(&self) -> [f64; 16] {
        std::array::from_fn(|k| self.0[k / 4][k % 4])
    }

    pub fn from_flat(v: [f64; 16]) -> Self {
        PauliCoefficients(std::array::from_fn(|i| std::array::from_fn(|j| v[4 * i + j])))
    }
}

/// Parameters of a classical-quantum state
/// `p+ rho+ x |n+><n+| + (1 - p+) rho- x |n-><n-|`.
#[derive(Clone, Copy, Debug)]
pub struct NonDiscordantParams {
    pub p_plus: f64,
    pub rho_plus: Mat2,
    pub rho_minus: Mat2,
    pub basis: [Ket2; 2],
}

impl NonDiscordantParams {
    pub fn new(p_plus: f64, rho_plus: Mat2, rho_minus: Mat2, basis: [Ket2; 2]) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_plus) {
            return Err(Error::InvalidArgument(format!("p_plus {p_plus} outside [0, 1]")));
        }
        for v in &basis {
            if (ket_norm(v) - 1.0).abs() > tolerances::UNIT_NORM {
                return Err(Error::InvalidBasis(format!("vector norm {}", ket_norm(v))));
            }
        }
        let overlap = inner(&basis[0], &basis[1]).norm();
        if overlap > tolerances::UNIT_NORM {
            return Err(Error::InvalidBasis(format!("overlap {overlap:e}")));
        }
        Ok(NonDiscordantParams {
            p_plus,
            rho_plus,
            rho_minus,
            basis,
        })
    }

    pub fn assemble(&self) -> Mat4 {
        let plus = tensor(&self.rho_plus, &outer(&self.basis[0], &self.basis[0]));
        let minus = tensor(&self.rho_minus, &outer(&self.basis[1], &self.basis[1]));
        (plus * self.p_plus + minus * (1.0 - self.p_plus)).hermitian_part()
    }
}

/// Ginibre (Hilbert-Schmidt) random state `G G^dagger / Tr(G G^dagger)`.
pub fn sample_random_state(rng: &mut impl Rng) -> DensityMatrix {
    DensityMatrix::from_trusted(ginibre::<4>(rng))
}

/// Haar-random single-qubit unitary from Gram-Schmidt on a Ginibre matrix.
pub fn haar_unitary2(rng: &mut impl Rng) -> Mat2 {
    loop {
        let a: Ket2 = [gaussian(rng), gaussian(rng)];
        let b: Ket2 = [gaussian(rng), gaussian(rng)];
        let na = ket_norm(&a);
        if na < 1e-12 {
            continue;
        }
        let e0 = [a[0] / na, a[1] / na];
        let proj = inner(&e0, &b);
        let r = [b[0] - e0[0] * proj, b[1] - e0[1] * proj];
        let nr = ket_norm(&r);
        if nr < 1e-12 {
            continue;
        }
        let e1 = [r[0] / nr, r[1] / nr];
        return Mat2::from_fn(|i, j| if j == 0 { e0[i] } else { e1[i] });
    }
}

/// Random zero-discord state: `p+` uniform, `rho+-` Ginibre, basis from a Haar unitary.
pub fn sample_non_discordant(rng: &mut impl Rng) -> (DensityMatrix, NonDiscordantParams) {
    let p_plus: f64 = rng.random_range(0.0..=1.0);
    let rho_plus = ginibre::<2>(rng);
    let rho_minus = ginibre::<2>(rng);
    let u = haar_unitary2(rng);
    let basis = [[u.0[0][0], u.0[1][0]], [u.0[0][1], u.0[1][1]]];
    let params = NonDiscordantParams {
        p_plus,
        rho_plus,
        rho_minus,
        basis,
    };
    (DensityMatrix::from_trusted(params.assemble()), params)
}

/// Block `B_ij` of the 2x2 block partition (A indices `i, j`; operator on B).
pub fn block(rho: &DensityMatrix, i: usize, j: usize) -> Mat2 {
    let m = rho.matrix();
    Mat2::from_fn(|p, q| m.0[2 * i + p][2 * j + q])
}

/// Zero-discord test: every block is normal and all blocks pairwise commute.
///
/// Returns the verdict at tolerance `tol` and the largest commutator norm.
pub fn is_zero_discord(rho: &DensityMatrix, tol: f64) -> (bool, f64) {
    let blocks = [block(rho, 0, 0), block(rho, 0, 1), block(rho, 1, 0), block(rho, 1, 1)];
    let mut max_norm: f64 = 0.0;
    for (a, ba) in blocks.iter().enumerate() {
        max_norm = max_norm.max(ba.commutator(&ba.dagger()).frobenius_norm());
        for bb in &blocks[a + 1..] {
            max_norm = max_norm.max(ba.commutator(bb).frobenius_norm());
        }
    }
    (max_norm < tol, max_norm)
}

/// Measurement basis `|n+> = cos t|0> + e^{i p} sin t|1>`, `|n-> = sin t|0> - e^{i p} cos t|1>`.
pub fn measurement_basis(theta: f64, phi: f64) -> [Ket2; 2] {
    let (s, c) = theta.sin_cos();
    let e = C64::from_polar(1.0, phi);
    [[C64::new(c, 0.0), e * s], [C64::new(s, 0.0), -e * c]]
}

/// Unnormalized post-measurement state of A, `(I x <n|) rho (I x |n>)`.
fn conditional_block(rho: &Mat4, n: &Ket2) -> Mat2 {
    Mat2::from_fn(|a, b| {
        let mut acc = C64::new(0.0, 0.0);
        for p in 0..2 {
            for q in 0..2 {
                acc += n[p].conj() * rho.0[2 * a + p][2 * b + q] * n[q];
            }
        }
        acc
    })
}

fn spectrum2(m: &Mat2) -> [f64; 2] {
    // Closed form for a 2x2 Hermitian matrix.
    let a = m.0[0][0].re;
    let d = m.0[1][1].re;
    let b = m.0[0][1].norm();
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    [mean + radius, mean - radius]
}

/// Average entropy of A after the projective measurement `{|n+->}` on B, in bits.
pub fn conditional_entropy_after_measurement(rho: &DensityMatrix, theta: f64, phi: f64) -> Result<f64> {
    let mut total = 0.0;
    for n in &measurement_basis(theta, phi) {
        let m = conditional_block(rho.matrix(), n);
        let p = m.trace().re;
        if p < tolerances::MIN_OUTCOME_PROBABILITY {
            continue;
        }
        let [l0, l1] = spectrum2(&m);
        total += p * qmath::entropy_of_spectrum(&[l0 / p, l1 / p])?;
    }
    Ok(total)
}

/// Output of [`discord_oracle`]; all entropic quantities in bits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscordResult {
    pub qd: f64,
    pub argmin_theta: f64,
    pub argmin_phi: f64,
    pub mutual_info: f64,
    pub classical_corr: f64,
}

/// Discord `S(rho_B) - S(rho_AB) + min S(A|B)` by grid search plus local refinement.
pub fn discord_oracle(rho: &DensityMatrix, grid_n: usize, refine_iters: usize) -> Result<DiscordResult> {
    if grid_n < 16 {
        return Err(Error::InvalidArgument(format!("grid_n {grid_n} < 16")));
    }
    let s_ab = qmath::von_neumann_entropy(rho.matrix())?;
    let s_a = qmath::von_neumann_entropy(&rho.reduced_a())?;
    let s_b = qmath::von_neumann_entropy(&rho.reduced_b())?;

    let d_theta = PI / grid_n as f64;
    let d_phi = 2.0 * PI / grid_n as f64;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..grid_n {
        let theta = i as f64 * d_theta;
        for j in 0..grid_n {
            let phi = j as f64 * d_phi;
            let s = conditional_entropy_after_measurement(rho, theta, phi)?;
            if s < best.0 {
                best = (s, theta, phi);
            }
        }
    }

    // Each round scans a 9x9 patch spanning one half-width around the incumbent,
    // then halves the half-width.
    let (mut w_theta, mut w_phi) = (d_theta, d_phi);
    for _ in 0..refine_iters {
        let (_, t0, p0) = best;
        for i in -4i32..=4 {
            for j in -4i32..=4 {
                if i == 0 && j == 0 {
                    continue;
                }
                let theta = t0 + w_theta * f64::from(i) / 4.0;
                let phi = p0 + w_phi * f64::from(j) / 4.0;
                let s = conditional_entropy_after_measurement(rho, theta, phi)?;
                if s < best.0 {
                    best = (s, theta, phi);
                }
            }
        }
        w_theta *= 0.5;
        w_phi *= 0.5;
    }

    let (min_cond, argmin_theta, argmin_phi) = best;
    let mutual_info = s_a + s_b - s_ab;
    let mut classical_corr = s_a - min_cond;
    let mut qd = mutual_info - classical_corr;
    if qd < 0.0 && qd > -tolerances::POSITIVITY_VIOLATION {
        qd = 0.0;
        classical_corr = mutual_info;
    }
    Ok(DiscordResult {
        qd,
        argmin_theta,
        argmin_phi,
        mutual_info,
        classical_corr,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    NonDiscordant = 0,
    Discordant = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::NonDiscordant),
            1 => Some(Label::Discordant),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::NonDiscordant => Label::Discordant,
            Label::Discordant => Label::NonDiscordant,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledSample {
    pub coeffs: PauliCoefficients,
    pub label: Label,
    /// Oracle discord in bits, if it was computed.
    pub discord: Option<f64>,
}

impl LabeledSample {
    pub fn target(&self) -> f64 {
        f64::from(self.label.as_u8())
    }
}

fn draw_discordant(seed: u64, index: usize) -> Result<DensityMatrix> {
    let mut rng = item_rng(seed, index as u64);
    for _ in 0..MAX_RESAMPLES {
        let rho = sample_random_state(&mut rng);
        if !is_zero_discord(&rho, tolerances::COMMUTATOR).0 {
            return Ok(rho);
        }
    }
    Err(Error::ResampleLimit {
        index,
        retries: MAX_RESAMPLES,
    })
}

/// Labeled dataset: `round(n * fraction)` constructed zero-discord states, the
/// rest Ginibre states that fail the commutator test, shuffled under `seed`.
pub fn generate_dataset(
    n: usize,
    fraction_non_discordant: f64,
    seed: u64,
    compute_discord: bool,
) -> Result<Vec<LabeledSample>> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&fraction_non_discordant) {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction_non_discordant} outside [0, 1]"
        )));
    }
    let n_nd = (n as f64 * fraction_non_discordant).round() as usize;
    let mut samples = (0..n)
        .into_par_iter()
        .map(|index| {
            let (rho, label) = if index < n_nd {
                let mut rng = item_rng(seed, index as u64);
                (sample_non_discordant(&mut rng).0, Label::NonDiscordant)
            } else {
                (draw_discordant(seed, index)?, Label::Discordant)
            };
            let discord = if compute_discord {
                Some(discord_oracle(&rho, DEFAULT_GRID, DEFAULT_REFINE)?.qd)
            } else {
                None
            };
            Ok(LabeledSample {
                coeffs: rho.to_pauli(),
                label,
                discord,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut shuffle_rng = item_rng(seed, u64::MAX);
    samples.shuffle(&mut shuffle_rng);
    Ok(samples)
}
