//! Measurement reduction for trained kernels.
//!
//! Each kernel is reduced to a unit Bloch vector `r` (identity weight dropped,
//! `sigma_y` coefficient sign-flipped because `conj(sigma_y) = -sigma_y`). A
//! path feature `Tr[rho (sigma.r1 x sigma.r2)]` is then read out by rotating
//! each qubit with `u = |0><r+| + |1><r-|` and measuring `sigma_z x sigma_z`.

use std::io::{Read, Write};

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_features, HermitianKernel, KernelBank, PathSet, KERNELS_PER_LAYER};
use crate::network::{Model, ModelConfig};
use crate::qmath::{pauli_dot, Ket2, Mat2, C64};
use crate::states::{generate_dataset, item_rng, DensityMatrix};
use crate::tolerances;

/// Entries below this magnitude do not fix the eigenvector phase.
const PHASE_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    r: [f64; 3],
}

impl BlochVector {
    pub fn new(r: [f64; 3]) -> Result<Self> {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > tolerances::UNIT_NORM {
            return Err(Error::InvalidArgument(format!("Bloch vector norm {norm} is not 1")));
        }
        Ok(BlochVector { r })
    }

    pub fn components(&self) -> [f64; 3] {
        self.r
    }

    /// `sigma . r`.
    pub fn observable(&self) -> Mat2 {
        pauli_dot(self.r)
    }

    /// Convolution kernel whose observable is `sigma . r`.
    pub fn kernel(&self) -> HermitianKernel {
        HermitianKernel::from_bloch(self.r)
    }
}

/// `(k_x, -k_y, k_z) / norm`; the identity weight is discarded.
pub fn renormalize_kernel(k: &HermitianKernel) -> Result<BlochVector> {
    let v = [k.k[1], -k.k[2], k.k[3]];
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateKernel);
    }
    Ok(BlochVector {
        r: v.map(|x| x / norm),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationUnitary(pub Mat2);

impl RotationUnitary {
    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn unitarity_deviation(&self) -> f64 {
        (self.0 * self.0.dagger()).max_abs_diff(&Mat2::identity())
    }
}

/// Multiplies by a phase so the first entry above the threshold is real positive.
fn fix_phase(mut v: Ket2) -> Ket2 {
    if let Some(lead) = v.iter().find(|z| z.norm() > PHASE_THRESHOLD).copied() {
        let phase = lead.conj() / lead.norm();
        v.iter_mut().for_each(|z| *z *= phase);
    }
    v
}

/// Eigenvectors of `sigma . r` for `+1` and `-1`, phase-fixed.
pub fn eigenkets(r: &BlochVector) -> (Ket2, Ket2) {
    let [x, y, z] = r.r;
    let theta = z.clamp(-1.0, 1.0).acos();
    let phi = y.atan2(x);
    let (s, c) = (0.5 * theta).sin_cos();
    let e = C64::from_polar(1.0, phi);
    let plus = [C64::new(c, 0.0), e * s];
    let minus = [C64::new(s, 0.0), -e * c];
    (fix_phase(plus), fix_phase(minus))
}

/// `u` with rows `<r+|` and `<r-|`, so that `u (sigma . r) u^dagger = sigma_z`.
pub fn rotation_for(r: &BlochVector) -> RotationUnitary {
    let (plus, minus) = eigenkets(r);
    RotationUnitary(Mat2::from_fn(|row, col| {
        if row == 0 {
            plus[col].conj()
        } else {
            minus[col].conj()
        }
    }))
}

const ZZ_SIGNS: [f64; 4] = [1.0, -1.0, -1.0, 1.0];

/// Computational-basis outcome probabilities after the local rotations.
pub fn outcome_probabilities(rho: &DensityMatrix, u: &RotationUnitary, v: &RotationUnitary) -> [f64; 4] {
    let rotated = rho.conjugate_local(&u.0, &v.0);
    let m = rotated.matrix();
    let mut p: [f64; 4] = std::array::from_fn(|k| m.0[k][k].re.max(0.0));
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

/// `Tr[(u x v) rho (u x v)^dagger (sigma_z x sigma_z)]`.
pub fn measure_zz(rho: &DensityMatrix, u: &RotationUnitary, v: &RotationUnitary) -> f64 {
    let rotated = rho.conjugate_local(&u.0, &v.0);
    let m = rotated.matrix();
    (0..4).map(|k| ZZ_SIGNS[k] * m.0[k][k].re).sum()
}

/// Finite-shot estimate of [`measure_zz`] with its standard error `sqrt((1 - mean^2) / shots)`.
pub fn sampled_measure_zz(
    rho: &DensityMatrix,
    u: &RotationUnitary,
    v: &RotationUnitary,
    shots: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be at least 1".into()));
    }
    let p = outcome_probabilities(rho, u, v);
    let mut rng = item_rng(seed, 0);
    // Multinomial draw as a chain of conditional binomials.
    let mut remaining = shots;
    let mut mass = 1.0;
    let mut sum = 0.0;
    for k in 0..4 {
        let count = if k == 3 || remaining == 0 {
            remaining
        } else {
            let q = (p[k] / mass).clamp(0.0, 1.0);
            let c = Binomial::new(remaining, q)
                .map_err(|e| Error::InvalidArgument(format!("outcome distribution: {e}")))?
                .sample(&mut rng);
            mass -= p[k];
            c
        };
        remaining -= count;
        sum += ZZ_SIGNS[k] * count as f64;
    }
    let mean = sum / shots as f64;
    let stderr = ((1.0 - mean * mean).max(0.0) / shots as f64).sqrt();
    Ok((mean, stderr))
}

/// Renormalized kernels of the kernels an active path set actually uses.
/// Used kernels always form a prefix of each layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenormalizedBank {
    pub layer1: Vec<BlochVector>,
    pub layer2: Vec<BlochVector>,
}

fn used_counts(paths: &PathSet) -> (usize, usize) {
    let m = paths.iter().map(|(m, _)| m + 1).max().unwrap_or(0);
    let n = paths.iter().map(|(_, n)| n + 1).max().unwrap_or(0);
    (m, n)
}

impl RenormalizedBank {
    pub fn from_kernels(bank: &KernelBank, paths: &PathSet) -> Result<Self> {
        let (m, n) = used_counts(paths);
        Ok(RenormalizedBank {
            layer1: bank.layer1[..m].iter().map(renormalize_kernel).collect::<Result<_>>()?,
            layer2: bank.layer2[..n].iter().map(renormalize_kernel).collect::<Result<_>>()?,
        })
    }

    /// Kernel bank measuring the renormalized observables; unused slots are zero.
    pub fn to_kernel_bank(&self) -> KernelBank {
        let zero = HermitianKernel::new([0.0; 4]);
        let fill = |v: &[BlochVector]| std::array::from_fn(|i| v.get(i).map_or(zero, BlochVector::kernel));
        KernelBank {
            layer1: fill(&self.layer1),
            layer2: fill(&self.layer2),
        }
    }

    /// Training configuration with these observables frozen as kernels.
    pub fn fixed_kernel_config(&self, path_count: usize) -> ModelConfig {
        ModelConfig::with_fixed_kernels(path_count, self.to_kernel_bank())
    }
}

/// Rotations for every active path, `pairs[p] = (m, n)` zero-based.
#[derive(Clone, Debug)]
pub struct CircuitPlan {
    pub pairs: Vec<(usize, usize)>,
    pub u: Vec<RotationUnitary>,
    pub v: Vec<RotationUnitary>,
}

impl CircuitPlan {
    pub fn new(bank: &RenormalizedBank, paths: &PathSet) -> Result<Self> {
        let pairs: Vec<(usize, usize)> = paths.iter().collect();
        if pairs.iter().any(|&(m, n)| m >= bank.layer1.len() || n >= bank.layer2.len()) {
            return Err(Error::InvalidArgument("path uses a kernel missing from the bank".into()));
        }
        Ok(CircuitPlan {
            pairs,
            u: bank.layer1.iter().map(rotation_for).collect(),
            v: bank.layer2.iter().map(rotation_for).collect(),
        })
    }

    /// Distinct `u_m x v_n` products the circuit must implement, one-based.
    pub fn unitary_pairs(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self.pairs.iter().map(|&(m, n)| (m + 1, n + 1)).collect();
        out.dedup();
        out
    }

    pub fn exact_features(&self, rho: &DensityMatrix) -> Vec<f64> {
        self.pairs.iter().map(|&(m, n)| measure_zz(rho, &self.u[m], &self.v[n])).collect()
    }

    /// Shot-sampled features; path `p` draws from stream `p` of `seed`.
    pub fn sampled_features(&self, rho: &DensityMatrix, shots: u64, seed: u64) -> Result<Vec<(f64, f64)>> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(p, &(m, n))| {
                let s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(p as u64);
                sampled_measure_zz(rho, &self.u[m], &self.v[n], shots, s)
            })
            .collect()
    }
}

/// Comparison of convolution-fed and circuit-fed classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub path_count: usize,
    /// One-based `(m, n)` for each `u_m x v_n` the circuit needs.
    pub unitary_pairs: Vec<(usize, usize)>,
    pub states: usize,
    /// Zero means exact expectation values only.
    pub shots: u64,
    /// Max `|convolution - exact circuit|` over all states and paths.
    pub max_exact_deviation: f64,
    pub exact_agreement: f64,
    pub max_shot_deviation: Option<f64>,
    pub mean_shot_stderr: Option<f64>,
    pub shot_agreement: Option<f64>,
    /// 95% Wilson interval of the shot agreement rate.
    pub shot_agreement_ci: Option<(f64, f64)>,
}

/// 95% Wilson score interval for `successes / n`.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let (n, p) = (n as f64, successes as f64 / n as f64);
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Replaces the model's kernels by their renormalized observables and checks
/// that circuit expectation values drive its head to the same decisions as
/// the explicit convolution, on a balanced set of `states` generated from `seed`.
pub fn verify_model(model: &Model, states: usize, shots: u64, seed: u64) -> Result<VerifyReport> {
    let renorm = RenormalizedBank::from_kernels(&model.kernels(), &model.paths)?;
    let plan = CircuitPlan::new(&renorm, &model.paths)?;
    let conv_bank = renorm.to_kernel_bank();
    let samples = generate_dataset(states, 0.5, seed, false)?;
    let l = model.path_count();
    let mut conv = Vec::with_capacity(states * l);
    let mut exact = Vec::with_capacity(states * l);
    let mut sampled = Vec::new();
    let mut stderr_sum = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let rho = DensityMatrix::from_pauli(&s.coeffs)?;
        conv.extend(extract_features(&rho, &conv_bank, &model.paths)?.0);
        exact.extend(plan.exact_features(&rho));
        if shots > 0 {
            for (est, se) in plan.sampled_features(&rho, shots, seed.wrapping_add(i as u64))? {
                sampled.push(est);
                stderr_sum += se;
            }
        }
    }
    let max_dev = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let agree = |a: &[f64], b: &[f64]| a.iter().zip(b).filter(|(x, y)| (**x >= 0.5) == (**y >= 0.5)).count();
    let p_conv = model.head_probabilities(&conv, states);
    let p_exact = model.head_probabilities(&exact, states);
    let rate = |k: usize| if states == 0 { 1.0 } else { k as f64 / states as f64 };
    let mut report = VerifyReport {
        path_count: l,
        unitary_pairs: plan.unitary_pairs(),
        states,
        shots,
        max_exact_deviation: max_dev(&conv, &exact),
        exact_agreement: rate(agree(&p_conv, &p_exact)),
        max_shot_deviation: None,
        mean_shot_stderr: None,
        shot_agreement: None,
        shot_agreement_ci: None,
    };
    if shots > 0 {
        let p_shot = model.head_probabilities(&sampled, states);
        let k = agree(&p_conv, &p_shot);
        report.max_shot_deviation = Some(max_dev(&exact, &sampled));
        report.mean_shot_stderr = Some(stderr_sum / sampled.len().max(1) as f64);
        report.shot_agreement = Some(rate(k));
        report.shot_agreement_ci = Some(wilson_interval(k, states));
    }
    Ok(report)
}

/// Writes rows `layer,index,x,y,z`, one-based.
pub fn write_renormalized_csv<W: Write>(writer: W, bank: &RenormalizedBank) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["layer", "index", "x", "y", "z"])?;
    for (layer, vs) in [(1, &bank.layer1), (2, &bank.layer2)] {
        for (i, r) in vs.iter().enumerate() {
            let mut row = vec![layer.to_string(), (i + 1).to_string()];
            row.extend(r.r.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses [`write_renormalized_csv`] output; indices must form a contiguous prefix per layer.
pub fn read_renormalized_csv<R: Read>(reader: R) -> Result<RenormalizedBank> {
    let bad = |reason: String| Error::format("renormalized kernel csv", reason);
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().collect::<Vec<_>>() != ["layer", "index", "x", "y", "z"] {
        return Err(bad("unexpected header".into()));
    }
    let mut layers: [Vec<Option<BlochVector>>; 2] = [vec![None; KERNELS_PER_LAYER], vec![None; KERNELS_PER_LAYER]];
    for record in r.records() {
        let record = record?;
        if record.len() != 5 {
            return Err(bad(format!("row has {} fields", record.len())));
        }
        let num = |i: usize| -> Result<f64> {
            record[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("cannot parse field {:?}", &record[i])))
        };
        let (layer, index) = (num(0)?, num(1)?);
        if !matches!(layer, 1.0 | 2.0) || !(1.0..=KERNELS_PER_LAYER as f64).contains(&index) || index.fract() != 0.0 {
            return Err(bad(format!("bad kernel position {layer},{index}")));
        }
        let v = BlochVector::new([num(2)?, num(3)?, num(4)?]).map_err(|e| bad(e.to_string()))?;
        let slot = &mut layers[layer as usize - 1][index as usize - 1];
        if slot.replace(v).is_some() {
            return Err(bad(format!("duplicate kernel {layer},{index}")));
        }
    }
    let collect = |slots: &[Option<BlochVector>]| -> Result<Vec<BlochVector>> {
        let n = slots.iter().take_while(|s| s.is_some()).count();
        if slots[n..].iter().any(Option::is_some) || n == 0 {
            return Err(bad("kernel indices must be a non-empty prefix".into()));
        }
        Ok(slots[..n].iter().map(|s| s.unwrap()).collect())
    };
    Ok(RenormalizedBank {
        layer1: collect(&layers[0])?,
        layer2: collect(&layers[1])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{tensor, PAULI};
    use crate::states::sample_random_state;
    use rand::Rng;

    fn random_unit(rng: &mut impl Rng) -> BlochVector {
        loop {
            let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.1 {
                return BlochVector::new(v.map(|x| x / n)).unwrap();
            }
        }
    }

    fn direct(rho: &DensityMatrix, a: &BlochVector, b: &BlochVector) -> f64 {
        (*rho.matrix() * tensor(&a.observable(), &b.observable())).trace().re
    }

    #[test]
    fn renormalization_examples() {
        let r = renormalize_kernel(&HermitianKernel::new([0.002, -0.008, 0.0, 1.401])).unwrap();
        let c = r.components();
        assert!((c[0] - -0.008 / 1.401).abs() < 1e-4 && c[1] == 0.0 && (c[2] - 1.0).abs() < 1e-4);
        let z = renormalize_kernel(&HermitianKernel::pauli(3).scaled(5.0)).unwrap();
        assert_eq!(z.components(), [0.0, 0.0, 1.0]);
        let y = renormalize_kernel(&HermitianKernel::pauli(2)).unwrap();
        assert_eq!(y.components(), [0.0, -1.0, 0.0]);
        assert!(matches!(
            renormalize_kernel(&HermitianKernel::pauli(0)),
            Err(Error::DegenerateKernel)
        ));
    }

    #[test]
    fn renormalized_observable_is_kernel_matrix_direction() {
        let mut rng = item_rng(1, 0);
        for _ in 0..100 {
            let mut k = KernelBank::random(&mut rng).layer1[0];
            k.k[0] = 0.0;
            let r = renormalize_kernel(&k).unwrap();
            let norm = k.k[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(r.observable().approx_eq(&k.matrix().scale_re(1.0 / norm), 1e-14));
        }
    }

    #[test]
    fn rotation_examples() {
        let u = rotation_for(&BlochVector::new([0.0, 0.0, 1.0]).unwrap());
        assert!(u.0.approx_eq(&Mat2::identity(), 1e-15));
        let h = rotation_for(&BlochVector::new([1.0, 0.0, 0.0]).unwrap());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!(h.0.approx_eq(&Mat2::from_real([[s, s], [s, -s]]), 1e-15));
        let down = rotation_for(&BlochVector::new([0.0, 0.0, -1.0]).unwrap());
        assert!(down.0.approx_eq(&Mat2::from_real([[0.0, 1.0], [1.0, 0.0]]), 1e-15));
    }

    #[test]
    fn rotation_diagonalizes_and_fixes_phase() {
        let mut rng = item_rng(2, 0);
        for _ in 0..1_000 {
            let r = random_unit(&mut rng);
            let u = rotation_for(&r);
            assert!(u.unitarity_deviation() < 1e-12);
            assert!((u.0 * r.observable() * u.0.dagger()).approx_eq(&PAULI[3], 1e-10));
            for row in 0..2 {
                let lead = u.0 .0[row].iter().find(|z| z.norm() > PHASE_THRESHOLD).unwrap();
                assert!(lead.im.abs() < 1e-15 && lead.re > 0.0);
            }
        }
    }

    #[test]
    fn measure_zz_examples() {
        let mut rng = item_rng(3, 0);
        let mixed = DensityMatrix::maximally_mixed();
        for _ in 0..10 {
            let (u, v) = (rotation_for(&random_unit(&mut rng)), rotation_for(&random_unit(&mut rng)));
            assert!(measure_zz(&mixed, &u, &v).abs() < 1e-15);
        }
        let zero = Mat2::from_real([[1.0, 0.0], [0.0, 0.0]]);
        let ket00 = DensityMatrix::product(&zero, &zero).unwrap();
        let id = RotationUnitary(Mat2::identity());
        assert_eq!(measure_zz(&ket00, &id, &id), 1.0);
    }

    #[test]
    fn measure_zz_matches_direct_expectation() {
        let mut rng = item_rng(4, 0);
        for _ in 0..1_000 {
            let rho = sample_random_state(&mut rng);
            let (a, b) = (random_unit(&mut rng), random_unit(&mut rng));
            let got = measure_zz(&rho, &rotation_for(&a), &rotation_for(&b));
            assert!((got - direct(&rho, &a, &b)).abs() < 1e-10);
            assert!(got.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn sampled_measurement() {
        let zero = Mat2::from_real([[1.0, 0.0], [0.0, 0.0]]);
        let ket00 = DensityMatrix::product(&zero, &zero).unwrap();
        let id = RotationUnitary(Mat2::identity());
        assert_eq!(sampled_measure_zz(&ket00, &id, &id, 1_000_000, 1).unwrap(), (1.0, 0.0));

        let mixed = DensityMatrix::maximally_mixed();
        let (est, se) = sampled_measure_zz(&mixed, &id, &id, 1_000_000, 2).unwrap();
        assert!(est.abs() < 5.0 * se, "{est} +- {se}");
        assert_eq!(
            sampled_measure_zz(&mixed, &id, &id, 1000, 3).unwrap(),
            sampled_measure_zz(&mixed, &id, &id, 1000, 3).unwrap()
        );
        assert!(sampled_measure_zz(&mixed, &id, &id, 0, 3).is_err());
    }

    #[test]
    fn sampled_estimate_converges_to_exact() {
        let mut rng = item_rng(5, 0);
        let mut within = 0;
        for i in 0..100 {
            let rho = sample_random_state(&mut rng);
            let (u, v) = (rotation_for(&random_unit(&mut rng)), rotation_for(&random_unit(&mut rng)));
            let exact = measure_zz(&rho, &u, &v);
            let (est, se) = sampled_measure_zz(&rho, &u, &v, 100_000, i).unwrap();
            assert!((est - exact).abs() < 6.0 * se + 1e-9);
            if (est - exact).abs() < 2.0 * se {
                within += 1;
            }
        }
        assert!(within >= 85, "{within}/100 within two standard errors");
    }

    #[test]
    fn plan_for_five_paths_uses_five_pairs() {
        let bank = KernelBank::random(&mut item_rng(6, 0));
        let paths = PathSet::first(5).unwrap();
        let renorm = RenormalizedBank::from_kernels(&bank, &paths).unwrap();
        assert_eq!((renorm.layer1.len(), renorm.layer2.len()), (2, 4));
        let plan = CircuitPlan::new(&renorm, &paths).unwrap();
        assert_eq!(plan.unitary_pairs(), vec![(1, 1), (1, 2), (1, 3), (1, 4), (2, 1)]);
        assert_eq!(CircuitPlan::new(&renorm, &PathSet::first(8).unwrap()).unwrap().pairs.len(), 8);
        assert!(CircuitPlan::new(&renorm, &PathSet::first(9).unwrap()).is_err());
    }

    #[test]
    fn circuit_features_match_convolution_with_renormalized_kernels() {
        let paths = PathSet::first(8).unwrap();
        let renorm = RenormalizedBank::from_kernels(&KernelBank::random(&mut item_rng(7, 0)), &paths).unwrap();
        let plan = CircuitPlan::new(&renorm, &paths).unwrap();
        let conv_bank = renorm.to_kernel_bank();
        let mut rng = item_rng(7, 1);
        for _ in 0..200 {
            let rho = sample_random_state(&mut rng);
            let conv = crate::features::extract_features(&rho, &conv_bank, &paths).unwrap();
            for (c, m) in conv.0.iter().zip(plan.exact_features(&rho)) {
                assert!((c - m).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn unused_degenerate_kernels_are_ignored() {
        let mut bank = KernelBank::random(&mut item_rng(8, 0));
        bank.layer1[3] = HermitianKernel::pauli(0);
        assert!(RenormalizedBank::from_kernels(&bank, &PathSet::first(8).unwrap()).is_ok());
        assert!(matches!(
            RenormalizedBank::from_kernels(&bank, &PathSet::first(16).unwrap()),
            Err(Error::DegenerateKernel)
        ));
    }

    #[test]
    fn renormalized_csv_round_trip() {
        let paths = PathSet::first(5).unwrap();
        let renorm = RenormalizedBank::from_kernels(&KernelBank::random(&mut item_rng(9, 0)), &paths).unwrap();
        let mut buf = Vec::new();
        write_renormalized_csv(&mut buf, &renorm).unwrap();
        assert!(buf.starts_with(b"layer,index,x,y,z\n1,1,"));
        assert_eq!(read_renormalized_csv(buf.as_slice()).unwrap(), renorm);
        assert!(read_renormalized_csv("layer,index,x,y,z\n1,1,0,0,2\n2,1,0,0,1\n".as_bytes()).is_err());
        assert!(read_renormalized_csv("layer,index,x,y,z\n1,2,0,0,1\n2,1,0,0,1\n".as_bytes()).is_err());
        assert!(read_renormalized_csv("layer,index,x,y,z\n1,1,0,0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let (lo, hi) = wilson_interval(95, 100);
        assert!(lo < 0.95 && 0.95 < hi && hi < 1.0);
        assert!(wilson_interval(10, 10).1 > 1.0 - 1e-12);
        assert!(wilson_interval(10, 10).0 > 0.65);
    }

    #[test]
    fn verify_model_exact_and_sampled() {
        let model = Model::new(ModelConfig {
            hidden: vec![6],
            ..ModelConfig::new(5)
        })
        .unwrap();
        let report = verify_model(&model, 50, 0, 1).unwrap();
        assert_eq!(report.unitary_pairs.len(), 5);
        assert!(report.max_exact_deviation < 1e-10);
        assert_eq!(report.exact_agreement, 1.0);
        assert!(report.shot_agreement.is_none());
        let sampled = verify_model(&model, 50, 10_000, 1).unwrap();
        let (lo, hi) = sampled.shot_agreement_ci.unwrap();
        assert!(lo <= sampled.shot_agreement.unwrap() && sampled.shot_agreement.unwrap() <= hi);
        assert!(sampled.max_shot_deviation.unwrap() < 0.1);
    }
}
