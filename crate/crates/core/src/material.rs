//! Elastic tensors, densities, and the hypotheses they must satisfy.
//!
//! The stiffness tensor is stored in symmetric 6x6 Voigt form with the pair
//! ordering (11, 22, 33, 23, 13, 12). Strains are kept with *tensor* shear
//! components internally; the engineering factor 2 is applied only inside
//! [`ElasticTensor::apply`], so the ambiguity never leaks past this module.
//! Positive definiteness is measured on the Mandel-scaled matrix, whose
//! spectrum equals the quadratic form S:C:S over unit-Frobenius-norm
//! symmetric S.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, Matrix6, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Voigt index pairs in the order used throughout this crate.
pub const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// Default relative tolerance for the symmetry checks in
/// [`ElasticTensor::from_full_tensor`].
pub const DEFAULT_SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error(
        "isotropic moduli rejected: lambda={lambda}, mu={mu} (need mu > 0 and 3*lambda + 2*mu > 0)"
    )]
    InvalidIsotropic { lambda: f64, mu: f64 },
    #[error("non-finite entry in {context}")]
    NonFinite { context: String },
    #[error(
        "Voigt matrix asymmetric at ({i},{j}): |C[i][j] - C[j][i]| = {defect:e} exceeds tolerance"
    )]
    AsymmetricVoigt { i: usize, j: usize, defect: f64 },
    #[error("{kind} symmetry violated at c[{i}][{j}][{k}][{l}]: |difference| = {defect:e} > tol = {tol:e}")]
    FullTensorAsymmetric {
        kind: &'static str,
        i: usize,
        j: usize,
        k: usize,
        l: usize,
        defect: f64,
        tol: f64,
    },
    #[error("material field has {got} elements, mesh has {expected}")]
    ElementCountMismatch { got: usize, expected: usize },
    #[error("declared floors must be positive: alpha={alpha}, beta={beta}")]
    InvalidFloors { alpha: f64, beta: f64 },
    #[error("no material region defined for mesh region tag {region}")]
    RegionMissing { region: usize },
    #[error("region {region}: specify exactly one of \"isotropic\" or \"voigt\"")]
    RegionAmbiguous { region: String },
    #[error("failed to read material file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse material file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Symmetric 3x3 strain (or stress) in Voigt order with tensor shear
/// components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymStrain<T: Real> {
    comps: [T; 6],
}

impl<T: Real> SymStrain<T> {
    /// Builds a strain from its six tensor components
    /// `(s11, s22, s33, s23, s13, s12)`.
    pub fn new(comps: [T; 6]) -> Result<Self, MaterialError> {
        if comps.iter().any(|c| !c.is_finite()) {
            return Err(MaterialError::NonFinite {
                context: "SymStrain components".into(),
            });
        }
        Ok(Self { comps })
    }

    pub fn zero() -> Self {
        Self {
            comps: [T::zero(); 6],
        }
    }

    pub fn identity() -> Self {
        let mut comps = [T::zero(); 6];
        comps[0] = T::one();
        comps[1] = T::one();
        comps[2] = T::one();
        Self { comps }
    }

    pub fn from_matrix(m: &Matrix3<T>) -> Self {
        Self {
            comps: [
                m[(0, 0)],
                m[(1, 1)],
                m[(2, 2)],
                (m[(1, 2)] + m[(2, 1)]) / T::cast(2.0),
                (m[(0, 2)] + m[(2, 0)]) / T::cast(2.0),
                (m[(0, 1)] + m[(1, 0)]) / T::cast(2.0),
            ],
        }
    }

    pub fn to_matrix(&self) -> Matrix3<T> {
        let c = &self.comps;
        Matrix3::new(
            c[0], c[5], c[4], //
            c[5], c[1], c[3], //
            c[4], c[3], c[2],
        )
    }

    pub fn components(&self) -> &[T; 6] {
        &self.comps
    }

    /// Twice-contracted product `S:T = sum_ij S_ij T_ij`.
    pub fn double_dot(&self, other: &Self) -> T {
        let a = &self.comps;
        let b = &other.comps;
        let two = T::cast(2.0);
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + two * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5])
    }

    /// Frobenius norm of the underlying 3x3 matrix.
    pub fn norm(&self) -> T {
        self.double_dot(self).sqrt()
    }

    pub fn scaled(&self, factor: T) -> Self {
        let mut comps = self.comps;
        for c in &mut comps {
            *c *= factor;
        }
        Self { comps }
    }

    pub fn add_scaled(&self, factor: T, other: &Self) -> Self {
        let mut comps = self.comps;
        for (c, o) in comps.iter_mut().zip(other.comps.iter()) {
            *c += factor * *o;
        }
        Self { comps }
    }
}

/// Fourth-order stiffness tensor in symmetric 6x6 Voigt storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticTensor<T: Real> {
    voigt: Matrix6<T>,
}

impl<T: Real> ElasticTensor<T> {
    /// Builds the isotropic tensor `C_ijkl = lambda d_ij d_kl + mu (d_ik d_jl + d_il d_jk)`.
    pub fn isotropic(lambda: T, mu: T) -> Result<Self, MaterialError> {
        let three = T::cast(3.0);
        let two = T::cast(2.0);
        if !(mu > T::zero() && three * lambda + two * mu > T::zero())
            || !lambda.is_finite()
            || !mu.is_finite()
        {
            return Err(MaterialError::InvalidIsotropic {
                lambda: lambda.as_f64(),
                mu: mu.as_f64(),
            });
        }
        let mut voigt = Matrix6::zeros();
        for i in 0..3 {
            for j in 0..3 {
                voigt[(i, j)] = lambda;
            }
            voigt[(i, i)] = lambda + two * mu;
            voigt[(i + 3, i + 3)] = mu;
        }
        Ok(Self { voigt })
    }

    /// Accepts a 6x6 Voigt matrix, enforcing finiteness and symmetry.
    ///
    /// Entries asymmetric by more than `1e-12` relative to the largest
    /// magnitude are rejected; smaller defects are symmetrized away.
    pub fn from_voigt(voigt: Matrix6<T>) -> Result<Self, MaterialError> {
        if voigt.iter().any(|v| !v.is_finite()) {
            return Err(MaterialError::NonFinite {
                context: "Voigt matrix".into(),
            });
        }
        let scale = voigt.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        let tol = T::cast(DEFAULT_SYMMETRY_TOL) * scale;
        for i in 0..6 {
            for j in (i + 1)..6 {
                let defect = (voigt[(i, j)] - voigt[(j, i)]).abs();
                if defect > tol {
                    return Err(MaterialError::AsymmetricVoigt {
                        i,
                        j,
                        defect: defect.as_f64(),
                    });
                }
            }
        }
        let half = T::cast(0.5);
        let sym = (voigt + voigt.transpose()) * half;
        Ok(Self { voigt: sym })
    }

    /// Collapses a full 3x3x3x3 tensor to Voigt form after verifying the
    /// minor symmetries `c_ijkl = c_jikl = c_ijlk` and the major symmetry
    /// `c_ijkl = c_klij` within `tol` relative to the largest entry.
    pub fn from_full_tensor(c: &[[[[T; 3]; 3]; 3]; 3], tol: T) -> Result<Self, MaterialError> {
        let mut scale = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let v = c[i][j][k][l];
                        if !v.is_finite() {
                            return Err(MaterialError::NonFinite {
                                context: "full tensor".into(),
                            });
                        }
                        scale = scale.max(v.abs());
                    }
                }
            }
        }
        let abs_tol = tol * scale;
        let mut worst: Option<(&'static str, [usize; 4], T)> = None;
        let mut record = |kind, idx: [usize; 4], defect: T| {
            if defect > abs_tol {
                let beat = worst.is_none_or(|(_, _, w)| defect > w);
                if beat {
                    worst = Some((kind, idx, defect));
                }
            }
        };
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let v = c[i][j][k][l];
                        record("minor (ij)", [i, j, k, l], (v - c[j][i][k][l]).abs());
                        record("minor (kl)", [i, j, k, l], (v - c[i][j][l][k]).abs());
                        record("major", [i, j, k, l], (v - c[k][l][i][j]).abs());
                    }
                }
            }
        }
        if let Some((kind, [i, j, k, l], defect)) = worst {
            return Err(MaterialError::FullTensorAsymmetric {
                kind,
                i,
                j,
                k,
                l,
                defect: defect.as_f64(),
                tol: abs_tol.as_f64(),
            });
        }
        let mut voigt = Matrix6::zeros();
        for (row, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
            for (col, &(k, l)) in VOIGT_PAIRS.iter().enumerate() {
                voigt[(row, col)] = c[i][j][k][l];
            }
        }
        // Exact symmetrization; the major-symmetry check already passed.
        let half = T::cast(0.5);
        let voigt = (voigt + voigt.transpose()) * half;
        Ok(Self { voigt })
    }

    /// Expands back to all 81 components.
    pub fn to_full_tensor(&self) -> [[[[T; 3]; 3]; 3]; 3] {
        const PAIR_INDEX: [[usize; 3]; 3] = [[0, 5, 4], [5, 1, 3], [4, 3, 2]];
        let mut c = [[[[T::zero(); 3]; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        c[i][j][k][l] = self.voigt[(PAIR_INDEX[i][j], PAIR_INDEX[k][l])];
                    }
                }
            }
        }
        c
    }

    pub fn voigt(&self) -> &Matrix6<T> {
        &self.voigt
    }

    /// Applies the tensor to a strain: `(C:S)_ij = sum_kl C_ijkl S_kl`.
    pub fn apply(&self, strain: &SymStrain<T>) -> SymStrain<T> {
        let s = strain.components();
        let two = T::cast(2.0);
        // Engineering strain vector carries the doubled shears.
        let eng = [s[0], s[1], s[2], two * s[3], two * s[4], two * s[5]];
        let mut stress = [T::zero(); 6];
        for (row, out) in stress.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (col, e) in eng.iter().enumerate() {
                acc += self.voigt[(row, col)] * *e;
            }
            *out = acc;
        }
        SymStrain { comps: stress }
    }

    /// Mandel-scaled matrix: shear rows/columns scaled by sqrt(2), so the
    /// shear-shear block picks up a factor 2.
    pub fn mandel_matrix(&self) -> Matrix6<T> {
        let sqrt2 = T::cast(2.0).sqrt();
        let scale = [T::one(), T::one(), T::one(), sqrt2, sqrt2, sqrt2];
        let mut m = self.voigt;
        for i in 0..6 {
            for j in 0..6 {
                m[(i, j)] *= scale[i] * scale[j];
            }
        }
        m
    }

    /// Tight coercivity constant: the smallest eigenvalue of the Mandel
    /// matrix, i.e. the minimum of `S:C:S` over unit-Frobenius-norm
    /// symmetric `S`. A non-positive value is returned rather than raised so
    /// callers can reject the material themselves.
    pub fn coercivity_constant(&self) -> T {
        let eig = SymmetricEigen::new(self.mandel_matrix());
        eig.eigenvalues
            .iter()
            .fold(T::cast(f64::INFINITY), |acc, &v| acc.min(v))
    }
}

/// Per-element stiffness and density together with the declared floors of
/// the coercivity and density hypotheses.
#[derive(Debug, Clone)]
pub struct MaterialField<T: Real> {
    tensors: Vec<ElasticTensor<T>>,
    densities: Vec<T>,
    alpha_floor: T,
    beta_floor: T,
}

/// Default declared floors when a material file does not state them.
pub const DEFAULT_FLOOR: f64 = 1e-12;

impl<T: Real> MaterialField<T> {
    pub fn new(
        tensors: Vec<ElasticTensor<T>>,
        densities: Vec<T>,
        alpha_floor: T,
        beta_floor: T,
    ) -> Result<Self, MaterialError> {
        if tensors.len() != densities.len() {
            return Err(MaterialError::ElementCountMismatch {
                got: densities.len(),
                expected: tensors.len(),
            });
        }
        if !(alpha_floor > T::zero() && beta_floor > T::zero()) {
            return Err(MaterialError::InvalidFloors {
                alpha: alpha_floor.as_f64(),
                beta: beta_floor.as_f64(),
            });
        }
        if densities.iter().any(|d| !d.is_finite()) {
            return Err(MaterialError::NonFinite {
                context: "densities".into(),
            });
        }
        Ok(Self {
            tensors,
            densities,
            alpha_floor,
            beta_floor,
        })
    }

    /// Homogeneous field: one tensor and density repeated over `count`
    /// elements, with floors matching the material itself.
    pub fn uniform(
        tensor: ElasticTensor<T>,
        density: T,
        count: usize,
    ) -> Result<Self, MaterialError> {
        let floor = T::cast(DEFAULT_FLOOR);
        Self::new(vec![tensor; count], vec![density; count], floor, floor)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensor(&self, element: usize) -> &ElasticTensor<T> {
        &self.tensors[element]
    }

    pub fn density(&self, element: usize) -> T {
        self.densities[element]
    }

    pub fn alpha_floor(&self) -> T {
        self.alpha_floor
    }

    pub fn beta_floor(&self) -> T {
        self.beta_floor
    }

    /// Returns a copy with every density multiplied by `factor`.
    pub fn with_density_scaled(&self, factor: T) -> Self {
        let mut out = self.clone();
        for d in &mut out.densities {
            *d *= factor;
        }
        out
    }

    /// Checks the hypotheses element by element: density above the declared
    /// beta floor and Mandel spectrum above the declared alpha floor.
    /// Failures are collected in the report rather than raised.
    pub fn validate(&self) -> ValidationReport<T> {
        let mut per_element_min_eig = Vec::with_capacity(self.tensors.len());
        let mut failures = Vec::new();
        let mut alpha = T::cast(f64::INFINITY);
        let mut beta = T::cast(f64::INFINITY);
        for (e, tensor) in self.tensors.iter().enumerate() {
            let min_eig = tensor.coercivity_constant();
            per_element_min_eig.push(min_eig);
            alpha = alpha.min(min_eig);
            if min_eig < self.alpha_floor {
                failures.push(MaterialFailure::NotCoercive {
                    element: e,
                    min_eig: min_eig.as_f64(),
                });
            }
            let rho = self.densities[e];
            beta = beta.min(rho);
            if rho < self.beta_floor {
                failures.push(MaterialFailure::DensityBelowFloor {
                    element: e,
                    density: rho.as_f64(),
                });
            }
        }
        ValidationReport {
            per_element_min_eig,
            alpha,
            beta,
            declared_alpha: self.alpha_floor,
            declared_beta: self.beta_floor,
            pass: failures.is_empty(),
            failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MaterialFailure {
    NotCoercive { element: usize, min_eig: f64 },
    DensityBelowFloor { element: usize, density: f64 },
}

/// Outcome of [`MaterialField::validate`].
#[derive(Debug, Clone)]
pub struct ValidationReport<T: Real> {
    pub per_element_min_eig: Vec<T>,
    /// Global coercivity constant: minimum Mandel eigenvalue over elements.
    pub alpha: T,
    /// Global density lower bound over elements.
    pub beta: T,
    pub declared_alpha: T,
    pub declared_beta: T,
    pub pass: bool,
    pub failures: Vec<MaterialFailure>,
}

// ---------------------------------------------------------------------------
// Material file (JSON) support
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct IsotropicJson {
    lambda: f64,
    mu: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegionJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    isotropic: Option<IsotropicJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    voigt: Option<[[f64; 6]; 6]>,
    density: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FloorsJson {
    alpha: f64,
    beta: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct MaterialFileJson {
    regions: BTreeMap<String, RegionJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    floors: Option<FloorsJson>,
}

/// Region-tagged material description parsed from a JSON file.
///
/// Schema (SI units, see `docs/formats.md`):
/// `{"regions": {"<tag>": {"isotropic": {"lambda": .., "mu": ..} | "voigt":
/// [[..6x6..]], "density": ..}}, "floors": {"alpha": .., "beta": ..}}`.
#[derive(Debug, Clone)]
pub struct MaterialSpec<T: Real> {
    regions: BTreeMap<usize, (ElasticTensor<T>, T)>,
    alpha_floor: T,
    beta_floor: T,
}

impl<T: Real> MaterialSpec<T> {
    pub fn from_json_str(text: &str) -> Result<Self, MaterialError> {
        let parsed: MaterialFileJson = serde_json::from_str(text)?;
        let mut regions = BTreeMap::new();
        for (tag, region) in parsed.regions {
            let tensor = match (&region.isotropic, &region.voigt) {
                (Some(iso), None) => {
                    ElasticTensor::isotropic(T::cast(iso.lambda), T::cast(iso.mu))?
                }
                (None, Some(v)) => {
                    let mut m = Matrix6::zeros();
                    for i in 0..6 {
                        for j in 0..6 {
                            m[(i, j)] = T::cast(v[i][j]);
                        }
                    }
                    ElasticTensor::from_voigt(m)?
                }
                _ => return Err(MaterialError::RegionAmbiguous { region: tag }),
            };
            let tag_num: usize = tag.parse().map_err(|_| MaterialError::RegionAmbiguous {
                region: tag.clone(),
            })?;
            regions.insert(tag_num, (tensor, T::cast(region.density)));
        }
        let (alpha, beta) = parsed
            .floors
            .map(|f| (f.alpha, f.beta))
            .unwrap_or((DEFAULT_FLOOR, DEFAULT_FLOOR));
        Ok(Self {
            regions,
            alpha_floor: T::cast(alpha),
            beta_floor: T::cast(beta),
        })
    }

    pub fn load(path: &Path) -> Result<Self, MaterialError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Instantiates the per-element field for a mesh by region tag.
    pub fn field_for_regions(
        &self,
        element_regions: &[usize],
    ) -> Result<MaterialField<T>, MaterialError> {
        let mut tensors = Vec::with_capacity(element_regions.len());
        let mut densities = Vec::with_capacity(element_regions.len());
        for &region in element_regions {
            let (tensor, rho) = self
                .regions
                .get(&region)
                .ok_or(MaterialError::RegionMissing { region })?;
            tensors.push(tensor.clone());
            densities.push(*rho);
        }
        MaterialField::new(tensors, densities, self.alpha_floor, self.beta_floor)
    }
}
