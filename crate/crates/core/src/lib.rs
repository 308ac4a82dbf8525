//! Orthonormal elastic eigenmodes of clamped anisotropic bodies, and modal
//! synthesis of static, time-harmonic, and transient responses.
//!
//! The crate is organized along the pipeline:
//!
//! * [`material`] — stiffness tensors, densities, and hypothesis checks;
//! * [`mesh`] — tetrahedral domains with Dirichlet/Neumann boundary facets;
//! * [`assembly`] — stiffness/mass matrices and load vectors on free dofs;
//! * [`solver`] — conjugate-gradient statics and the shift-invert Lanczos
//!   generalized eigensolver, plus a dense verification oracle;
//! * [`modal`] — source projections, modal coefficients, and synthesis in
//!   the static, harmonic, and time domains;
//! * [`vtk`] — legacy VTK output of nodal vector fields.
//!
//! All numerical types are generic over the [`scalar::Real`] scalar
//! (`f32` or `f64`); the aliases below fix the default `f64` instantiation.

// Indexed loops and NaN-rejecting `!(x > 0)` guards are deliberate in the
// numerical kernels.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod material;
pub mod mesh;
pub mod modal;
pub mod scalar;
pub mod solver;
pub mod vtk;

pub use scalar::Real;

/// Default `f64` instantiations of the core types.
pub type ElasticTensor64 = material::ElasticTensor<f64>;
pub type SymStrain64 = material::SymStrain<f64>;
pub type MaterialField64 = material::MaterialField<f64>;
pub type Mesh64 = mesh::Mesh<f64>;
pub type SymSparse64 = assembly::SymSparse<f64>;
pub type LoadVector64 = assembly::LoadVector<f64>;
pub type ModeSet64 = solver::ModeSet<f64>;
pub type SolveOptions64 = solver::SolveOptions<f64>;
pub type ModalCoefficients64 = modal::ModalCoefficients<f64>;
pub type FrequencySpectrum64 = modal::FrequencySpectrum<f64>;
