//! Convolutional feature extraction with observable kernels.
//!
//! A kernel is stored as four real coefficients `k` and materializes as
//! `K = sum_n k_n conj(sigma_n)`. Contracting a 2x2 block elementwise with `K`
//! equals `Tr[block K^T]`, so the observable a kernel measures is
//! `K^T = sum_n k_n sigma_n`.
//!
//! The convolution image of a state lists subsystem B as the outer (block)
//! index, `image[2p + a][2q + b] = rho[2a + p][2b + q]`. A stride-2 window over
//! the image therefore contracts subsystem A in the first layer, leaving an
//! operator on B for the second layer, and path `(m, n)` yields
//! `O_mn = Tr[rho (K1_m^T x K2_n^T)] = sum_ij C_ij k1_m[i] k2_n[j]`.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmath::{Mat2, Mat4, PAULI};
use crate::states::{DensityMatrix, PauliCoefficients};
use crate::tolerances;

/// Kernels per convolutional layer.
pub const KERNELS_PER_LAYER: usize = 4;
/// Total trainable kernel coefficients (two layers of four kernels).
pub const KERNEL_PARAMS: usize = 2 * KERNELS_PER_LAYER * 4;
/// Number of convolutional paths in the full network.
pub const MAX_PATHS: usize = KERNELS_PER_LAYER * KERNELS_PER_LAYER;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermitianKernel {
    /// Coefficients on `(I, conj(sigma_x), conj(sigma_y), conj(sigma_z))`.
    pub k: [f64; 4],
}

impl HermitianKernel {
    pub fn new(k: [f64; 4]) -> Self {
        HermitianKernel { k }
    }

    /// The kernel `conj(sigma_n)`.
    pub fn pauli(n: usize) -> Self {
        let mut k = [0.0; 4];
        k[n] = 1.0;
        HermitianKernel { k }
    }

    /// Kernel with no identity part measuring `sigma . r`.
    pub fn from_bloch(r: [f64; 3]) -> Self {
        HermitianKernel {
            k: [0.0, r[0], r[1], r[2]],
        }
    }

    /// `sum_n k_n conj(sigma_n)`.
    pub fn matrix(&self) -> Mat2 {
        let mut m = Mat2::zeros();
        for (n, &kn) in self.k.iter().enumerate() {
            m = m + PAULI[n].conj() * kn;
        }
        m
    }

    /// `K^T = sum_n k_n sigma_n`.
    pub fn observable(&self) -> Mat2 {
        let mut m = Mat2::zeros();
        for (n, &kn) in self.k.iter().enumerate() {
            m = m + PAULI[n] * kn;
        }
        m
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        HermitianKernel {
            k: self.k.map(|v| v * alpha),
        }
    }
}

/// Both convolutional layers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBank {
    pub layer1: [HermitianKernel; KERNELS_PER_LAYER],
    pub layer2: [HermitianKernel; KERNELS_PER_LAYER],
}

impl KernelBank {
    /// `K1_m = conj(sigma_{m-1})`, `K2_n = conj(sigma_{n-1})`; path `(m, n)` reads `C_{m-1, n-1}`.
    pub fn pauli() -> Self {
        let layer = std::array::from_fn(HermitianKernel::pauli);
        KernelBank {
            layer1: layer,
            layer2: layer,
        }
    }

    /// Coefficients uniform in `[-1, 1]`.
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut draw = || HermitianKernel::new(std::array::from_fn(|_| rng.random_range(-1.0..=1.0)));
        let layer1 = std::array::from_fn(|_| draw());
        let layer2 = std::array::from_fn(|_| draw());
        KernelBank { layer1, layer2 }
    }

    /// Layout: layer-1 kernels then layer-2 kernels, 4 coefficients each.
    pub fn to_flat(&self) -> [f64; KERNEL_PARAMS] {
        std::array::from_fn(|p| {
            let (layer, kernel, coef) = (p / 16, (p % 16) / 4, p % 4);
            if layer == 0 {
                self.layer1[kernel].k[coef]
            } else {
                self.layer2[kernel].k[coef]
            }
        })
    }

    pub fn from_flat(v: &[f64]) -> Result<Self> {
        if v.len() != KERNEL_PARAMS {
            return Err(Error::DimensionMismatch {
                expected: KERNEL_PARAMS,
                got: v.len(),
            });
        }
        let kernel = |base: usize| HermitianKernel::new(std::array::from_fn(|c| v[base + c]));
        Ok(KernelBank {
            layer1: std::array::from_fn(|m| kernel(4 * m)),
            layer2: std::array::from_fn(|n| kernel(16 + 4 * n)),
        })
    }

    /// Index of coefficient `coef` of layer-1 kernel `m` (zero-based) in [`to_flat`](Self::to_flat).
    pub fn layer1_index(m: usize, coef: usize) -> usize {
        4 * m + coef
    }

    pub fn layer2_index(n: usize, coef: usize) -> usize {
        16 + 4 * n + coef
    }
}

/// Active convolutional paths, zero-based `(m, n)` pairs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSet {
    paths: Vec<(usize, usize)>,
}

impl PathSet {
    /// First `l` paths in row-major order `(1,1), (1,2), .., (1,4), (2,1), ..`.
    pub fn first(l: usize) -> Result<Self> {
        if !(1..=MAX_PATHS).contains(&l) {
            return Err(Error::InvalidPathCount(l));
        }
        Ok(PathSet {
            paths: (0..l).map(|p| (p / KERNELS_PER_LAYER, p % KERNELS_PER_LAYER)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.paths.iter().copied()
    }

    /// Paths labeled from 1 as in `(m, n)`, `m, n` in `1..=4`.
    pub fn one_based(&self) -> Vec<(usize, usize)> {
        self.paths.iter().map(|&(m, n)| (m + 1, n + 1)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

/// The convolution image: the state with subsystem B as the block index.
pub fn conv_image(rho: &DensityMatrix) -> Mat4 {
    let m = rho.matrix();
    Mat4::from_fn(|r, c| m.0[2 * (r % 2) + r / 2][2 * (c % 2) + c / 2])
}

/// Stride-2 2x2 convolution: `out[a][b] = sum_pq image[2a + p][2b + q] K[p][q]`.
pub fn stride2_conv(image: &Mat4, kernel: &Mat2) -> Mat2 {
    Mat2::from_fn(|a, b| {
        let mut acc = num_complex::Complex64::new(0.0, 0.0);
        for p in 0..2 {
            for q in 0..2 {
                acc += image.0[2 * a + p][2 * b + q] * kernel.0[p][q];
            }
        }
        acc
    })
}

/// First layer: `Tr_A[rho (K^T x I)] = (1/2) sum_ij k_i C_ij sigma_j`.
pub fn conv_layer1(rho: &DensityMatrix, k: &HermitianKernel) -> Mat2 {
    stride2_conv(&conv_image(rho), &k.matrix())
}

/// Second layer: a single stride-2 placement over the 2x2 input.
pub fn conv_layer2(m2: &Mat2, k: &HermitianKernel) -> Result<f64> {
    let z = m2.contract(&k.matrix());
    let residue = z.im.abs();
    if residue >= tolerances::IMAG_ERROR {
        return Err(Error::ImaginaryResidue {
            what: "second-layer contraction",
            residue,
        });
    }
    Ok(z.re)
}

/// Path outputs by explicit two-layer convolution of the density matrix.
pub fn extract_features(rho: &DensityMatrix, kernels: &KernelBank, paths: &PathSet) -> Result<FeatureVector> {
    let mut layer1: [Option<Mat2>; KERNELS_PER_LAYER] = [None; KERNELS_PER_LAYER];
    let mut values = Vec::with_capacity(paths.len());
    for (m, n) in paths.iter() {
        let intermediate = *layer1[m].get_or_insert_with(|| conv_layer1(rho, &kernels.layer1[m]));
        values.push(conv_layer2(&intermediate, &kernels.layer2[n])?);
    }
    Ok(FeatureVector(values))
}

/// `sum_j C_ij k2[j]` for each `i`.
fn contract_right(c: &PauliCoefficients, k2: &[f64; 4]) -> [f64; 4] {
    std::array::from_fn(|i| (0..4).map(|j| c.0[i][j] * k2[j]).sum())
}

/// `sum_i C_ij k1[i]` for each `j`.
fn contract_left(c: &PauliCoefficients, k1: &[f64; 4]) -> [f64; 4] {
    std::array::from_fn(|j| (0..4).map(|i| c.0[i][j] * k1[i]).sum())
}

/// Path outputs from the Pauli image, `O_mn = sum_ij C_ij k1_m[i] k2_n[j]`.
/// This is the batch path used during training.
pub fn features_from_pauli(c: &PauliCoefficients, kernels: &KernelBank, paths: &PathSet, out: &mut [f64]) {
    for (slot, (m, n)) in out.iter_mut().zip(paths.iter()) {
        let right = contract_right(c, &kernels.layer2[n].k);
        *slot = (0..4).map(|i| kernels.layer1[m].k[i] * right[i]).sum();
    }
}

/// `d O_p / d theta` for every path `p` and every kernel coefficient, in
/// [`KernelBank::to_flat`] order.
pub fn feature_jacobian(c: &PauliCoefficients, kernels: &KernelBank, paths: &PathSet) -> Vec<[f64; KERNEL_PARAMS]> {
    paths
        .iter()
        .map(|(m, n)| {
            let mut row = [0.0; KERNEL_PARAMS];
            let d_k1 = contract_right(c, &kernels.layer2[n].k);
            let d_k2 = contract_left(c, &kernels.layer1[m].k);
            for coef in 0..4 {
                row[KernelBank::layer1_index(m, coef)] = d_k1[coef];
                row[KernelBank::layer2_index(n, coef)] = d_k2[coef];
            }
            row
        })
        .collect()
}

/// Writes rows `layer,index,k0,k1,k2,k3` with one-based layer and index.
pub fn write_kernels_csv<W: Write>(writer: W, kernels: &KernelBank) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["layer", "index", "k0", "k1", "k2", "k3"])?;
    for (layer, ks) in [(1, &kernels.layer1), (2, &kernels.layer2)] {
        for (index, kern) in ks.iter().enumerate() {
            let mut row = vec![layer.to_string(), (index + 1).to_string()];
            row.extend(kern.k.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses the format produced by [`write_kernels_csv`]. All eight kernels must be present exactly once.
pub fn read_kernels_csv<R: Read>(reader: R) -> Result<KernelBank> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["layer", "index", "k0", "k1", "k2", "k3"] {
        return Err(Error::format("kernel csv", "unexpected header"));
    }
    let mut slots: [Option<HermitianKernel>; 8] = [None; 8];
    for record in r.records() {
        let record = record?;
        if record.len() != 6 {
            return Err(Error::format("kernel csv", format!("row has {} fields", record.len())));
        }
        let layer: usize = parse_field(&record[0])?;
        let index: usize = parse_field(&record[1])?;
        if !(1..=2).contains(&layer) || !(1..=KERNELS_PER_LAYER).contains(&index) {
            return Err(Error::format("kernel csv", format!("bad kernel position {layer},{index}")));
        }
        let mut k = [0.0f64; 4];
        for (c, slot) in k.iter_mut().enumerate() {
            *slot = parse_field(&record[2 + c])?;
            if !slot.is_finite() {
                return Err(Error::format("kernel csv", "non-finite coefficient"));
            }
        }
        let pos = (layer - 1) * KERNELS_PER_LAYER + index - 1;
        if slots[pos].replace(HermitianKernel::new(k)).is_some() {
            return Err(Error::format("kernel csv", format!("duplicate kernel {layer},{index}")));
        }
    }
    let mut get = |p: usize| slots[p].take().ok_or_else(|| Error::format("kernel csv", "missing kernel"));
    let layer1 = [get(0)?, get(1)?, get(2)?, get(3)?];
    let layer2 = [get(4)?, get(5)?, get(6)?, get(7)?];
    Ok(KernelBank { layer1, layer2 })
}

fn parse_field<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::format("kernel csv", format!("cannot parse field {s:?}")))
}
