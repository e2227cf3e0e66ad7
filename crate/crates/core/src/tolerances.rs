//! Numerical tolerances shared by every module and by the test suites.

/// Trace deviation accepted for a density matrix.
pub const TRACE: f64 = 1e-10;
/// Hermiticity deviation accepted for a density matrix.
pub const HERMITIAN: f64 = 1e-10;
/// Most negative eigenvalue accepted for a density matrix.
pub const MIN_EIGENVALUE: f64 = -1e-9;

/// Eigenvalues below this are treated as exact zeros in entropies.
pub const ENTROPY_CLAMP: f64 = 1e-9;
/// Eigenvalues below minus this abort an entropy evaluation.
pub const POSITIVITY_VIOLATION: f64 = 1e-6;
/// Trace deviation accepted by the entropy routine.
pub const ENTROPY_TRACE: f64 = 1e-8;

/// Relative off-diagonal Frobenius mass below which Jacobi sweeps stop.
pub const JACOBI_CONVERGENCE: f64 = 1e-15;
/// Sweep cap for the cyclic Jacobi eigensolver.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Default threshold on the largest block commutator (Frobenius norm).
pub const COMMUTATOR: f64 = 1e-8;
/// Measurement outcomes with smaller probability contribute nothing.
pub const MIN_OUTCOME_PROBABILITY: f64 = 1e-12;

/// Imaginary residue silently dropped from a contraction.
pub const IMAG_DISCARD: f64 = 1e-10;
/// Imaginary residue treated as an internal consistency failure.
pub const IMAG_ERROR: f64 = 1e-8;

/// Unit-norm tolerance for Bloch vectors and measurement basis vectors.
pub const UNIT_NORM: f64 = 1e-12;

/// Probability clamp used by the binary cross-entropy loss.
pub const BCE_EPSILON: f64 = 1e-12;
