//! Modal projection and synthesis.
//!
//! With M-orthonormal modes `u_n` and eigenvalues `lambda_n`, the source
//! projections are the discrete pairings `f_n = u_n . F_body` and
//! `g_n = u_n . F_trac` (these equal the continuous integrals for P1 fields
//! and piecewise-constant sources). Static responses use
//! `alpha_n = (f_n + g_n) / lambda_n`, harmonic ones
//! `alpha_n(omega) = (f_n + g_n) / (lambda_n - omega^2)` with a hard
//! resonance guard, and time-domain responses recombine a finite frequency
//! spectrum with the `e^{+i omega t}` convention.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex;
use serde::Deserialize;
use thiserror::Error;

use crate::assembly::{
    assemble_body_load, assemble_traction_load, AssemblyError, BodyForce, DofMap, LoadVector,
    SymSparse, Traction,
};
use crate::mesh::{Mesh, MeshError};
use crate::scalar::Real;
use crate::solver::ModeSet;
use nalgebra::Vector3;

/// Default relative resonance guard: `|lambda_n - omega^2|` must exceed this
/// fraction of `lambda_n` for every retained mode.
pub const DEFAULT_RESONANCE_GUARD: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModalError {
    #[error("dimension mismatch: got {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("omega^2 = {omega_sq} resonates with mode {mode} (lambda = {lambda}): gap {gap:e} <= guard threshold {threshold:e}")]
    Resonance {
        mode: usize,
        lambda: f64,
        omega_sq: f64,
        gap: f64,
        threshold: f64,
    },
    #[error("frequencies must be distinct: entries {first} and {second} share omega")]
    DuplicateFrequency { first: usize, second: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("failed to read spectrum file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse spectrum file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Per-mode coefficients of one synthesis problem.
///
/// Static coefficients are real (zero imaginary part); harmonic ones carry
/// the frequency they were computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalCoefficients<T: Real> {
    pub omega: Option<T>,
    pub f_proj: Vec<Complex<T>>,
    pub g_proj: Vec<Complex<T>>,
    pub alphas: Vec<Complex<T>>,
}

impl<T: Real> ModalCoefficients<T> {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

fn cmod<T: Real>(z: Complex<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}

/// Projects one load vector onto every mode: `u_n . F`.
pub fn project_load<T: Real>(
    modeset: &ModeSet<T>,
    load: &LoadVector<T>,
) -> Result<Vec<T>, ModalError> {
    if load.len() != modeset.free_dofs() {
        return Err(ModalError::DimensionMismatch {
            got: load.len(),
            expected: modeset.free_dofs(),
        });
    }
    let values = load.as_slice();
    Ok((0..modeset.num_modes())
        .map(|n| {
            let mut acc = T::zero();
            for (row, v) in values.iter().enumerate() {
                acc += modeset.modes()[(row, n)] * *v;
            }
            acc
        })
        .collect())
}

/// Projects body and traction loads: `(f_n, g_n)`.
pub fn project_sources<T: Real>(
    modeset: &ModeSet<T>,
    body: &LoadVector<T>,
    traction: &LoadVector<T>,
) -> Result<(Vec<T>, Vec<T>), ModalError> {
    Ok((
        project_load(modeset, body)?,
        project_load(modeset, traction)?,
    ))
}

fn check_projection_len<T: Real>(modeset: &ModeSet<T>, len: usize) -> Result<(), ModalError> {
    if len != modeset.num_modes() {
        return Err(ModalError::DimensionMismatch {
            got: len,
            expected: modeset.num_modes(),
        });
    }
    Ok(())
}

/// Static formula `alpha_n = (f_n + g_n) / lambda_n`.
pub fn static_coefficients<T: Real>(
    modeset: &ModeSet<T>,
    f_n: &[T],
    g_n: &[T],
) -> Result<ModalCoefficients<T>, ModalError> {
    check_projection_len(modeset, f_n.len())?;
    check_projection_len(modeset, g_n.len())?;
    let alphas = f_n
        .iter()
        .zip(g_n)
        .zip(modeset.lambdas())
        .map(|((&f, &g), &lambda)| Complex::new((f + g) / lambda, T::zero()))
        .collect();
    Ok(ModalCoefficients {
        omega: None,
        f_proj: f_n.iter().map(|&f| Complex::new(f, T::zero())).collect(),
        g_proj: g_n.iter().map(|&g| Complex::new(g, T::zero())).collect(),
        alphas,
    })
}

fn resonance_check<T: Real>(modeset: &ModeSet<T>, omega_sq: T, guard: T) -> Result<(), ModalError> {
    for (n, &lambda) in modeset.lambdas().iter().enumerate() {
        let gap = (lambda - omega_sq).abs();
        let threshold = guard * lambda;
        if gap <= threshold {
            return Err(ModalError::Resonance {
                mode: n,
                lambda: lambda.as_f64(),
                omega_sq: omega_sq.as_f64(),
                gap: gap.as_f64(),
                threshold: threshold.as_f64(),
            });
        }
    }
    Ok(())
}

/// Harmonic formula `alpha_n(omega) = (f_n + g_n) / (lambda_n - omega^2)`
/// for real source projections. At `omega = 0` this reproduces
/// [`static_coefficients`] bit for bit.
pub fn harmonic_coefficients<T: Real>(
    modeset: &ModeSet<T>,
    f_n: &[T],
    g_n: &[T],
    omega: T,
    guard: T,
) -> Result<ModalCoefficients<T>, ModalError> {
    check_projection_len(modeset, f_n.len())?;
    check_projection_len(modeset, g_n.len())?;
    let omega_sq = omega * omega;
    resonance_check(modeset, omega_sq, guard)?;
    let alphas = f_n
        .iter()
        .zip(g_n)
        .zip(modeset.lambdas())
        .map(|((&f, &g), &lambda)| Complex::new((f + g) / (lambda - omega_sq), T::zero()))
        .collect();
    Ok(ModalCoefficients {
        omega: Some(omega),
        f_proj: f_n.iter().map(|&f| Complex::new(f, T::zero())).collect(),
        g_proj: g_n.iter().map(|&g| Complex::new(g, T::zero())).collect(),
        alphas,
    })
}

/// Harmonic coefficients for complex source projections (spectrum
/// amplitudes). The denominator stays real, so the division is
/// componentwise.
pub fn harmonic_coefficients_complex<T: Real>(
    modeset: &ModeSet<T>,
    f_n: &[Complex<T>],
    g_n: &[Complex<T>],
    omega: T,
    guard: T,
) -> Result<ModalCoefficients<T>, ModalError> {
    check_projection_len(modeset, f_n.len())?;
    check_projection_len(modeset, g_n.len())?;
    let omega_sq = omega * omega;
    resonance_check(modeset, omega_sq, guard)?;
    let alphas = f_n
        .iter()
        .zip(g_n)
        .zip(modeset.lambdas())
        .map(|((&f, &g), &lambda)| {
            let den = lambda - omega_sq;
            Complex::new((f.re + g.re) / den, (f.im + g.im) / den)
        })
        .collect();
    Ok(ModalCoefficients {
        omega: Some(omega),
        f_proj: f_n.to_vec(),
        g_proj: g_n.to_vec(),
        alphas,
    })
}

/// Linear combination of mode columns over the free dofs.
/// The coefficient count may be below the mode count (truncated synthesis).
pub fn synthesize_free<T: Real>(
    modeset: &ModeSet<T>,
    coeffs: &ModalCoefficients<T>,
) -> Result<Vec<Complex<T>>, ModalError> {
    if coeffs.len() > modeset.num_modes() {
        return Err(ModalError::DimensionMismatch {
            got: coeffs.len(),
            expected: modeset.num_modes(),
        });
    }
    let n = modeset.free_dofs();
    let mut out = vec![Complex::new(T::zero(), T::zero()); n];
    for (col, alpha) in coeffs.alphas.iter().enumerate() {
        for (row, value) in out.iter_mut().enumerate() {
            let u = modeset.modes()[(row, col)];
            value.re += alpha.re * u;
            value.im += alpha.im * u;
        }
    }
    Ok(out)
}

/// Nodal displacement field; constrained dofs are zero.
pub fn synthesize<T: Real>(
    modeset: &ModeSet<T>,
    coeffs: &ModalCoefficients<T>,
    dofmap: &DofMap,
) -> Result<Vec<[Complex<T>; 3]>, ModalError> {
    if dofmap.free_count() != modeset.free_dofs() {
        return Err(ModalError::DimensionMismatch {
            got: dofmap.free_count(),
            expected: modeset.free_dofs(),
        });
    }
    let free = synthesize_free(modeset, coeffs)?;
    Ok(dofmap.scatter(&free))
}

// ---------------------------------------------------------------------------
// Frequency spectra and time-domain recombination
// ---------------------------------------------------------------------------

/// One frequency line: angular frequency with complex body-force and
/// traction amplitudes (tractions keyed by facet selector).
#[derive(Debug, Clone)]
pub struct SpectrumEntry<T: Real> {
    pub omega: T,
    pub body: [Complex<T>; 3],
    pub traction: BTreeMap<String, [Complex<T>; 3]>,
}

/// Finite replacement for the continuous frequency integral: the time
/// signal is `Re( sum_j e^{+i omega_j t} sum_n alpha_n(omega_j) u_n )`.
#[derive(Debug, Clone)]
pub struct FrequencySpectrum<T: Real> {
    entries: Vec<SpectrumEntry<T>>,
}

impl<T: Real> FrequencySpectrum<T> {
    pub fn new(entries: Vec<SpectrumEntry<T>>) -> Result<Self, ModalError> {
        for (i, a) in entries.iter().enumerate() {
            if !a.omega.is_finite() {
                return Err(ModalError::NonFinite {
                    context: format!("omega of spectrum entry {i}"),
                });
            }
            for (j, b) in entries.iter().enumerate().skip(i + 1) {
                if a.omega == b.omega {
                    return Err(ModalError::DuplicateFrequency {
                        first: i,
                        second: j,
                    });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[SpectrumEntry<T>] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses the spectrum JSON schema: a list of
    /// `{"omega": w, "body": [[re,im],[re,im],[re,im]],
    ///   "traction": {"<selector>": [[re,im],[re,im],[re,im]]}}`.
    pub fn from_json_str(text: &str) -> Result<Self, ModalError> {
        #[derive(Deserialize)]
        struct EntryJson {
            omega: f64,
            #[serde(default)]
            body: Option<[[f64; 2]; 3]>,
            #[serde(default)]
            traction: Option<BTreeMap<String, [[f64; 2]; 3]>>,
        }
        let parsed: Vec<EntryJson> = serde_json::from_str(text)?;
        let to_complex3 = |v: &[[f64; 2]; 3]| {
            [
                Complex::new(T::cast(v[0][0]), T::cast(v[0][1])),
                Complex::new(T::cast(v[1][0]), T::cast(v[1][1])),
                Complex::new(T::cast(v[2][0]), T::cast(v[2][1])),
            ]
        };
        let zero = Complex::new(T::zero(), T::zero());
        let entries = parsed
            .iter()
            .map(|e| SpectrumEntry {
                omega: T::cast(e.omega),
                body: e.body.as_ref().map_or([zero; 3], to_complex3),
                traction: e
                    .traction
                    .as_ref()
                    .map(|t| {
                        t.iter()
                            .map(|(sel, v)| (sel.clone(), to_complex3(v)))
                            .collect()
                    })
                    .unwrap_or_default(),
            })
            .collect();
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, ModalError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

/// Assembles the complex load pair of one spectrum entry (real and
/// imaginary parts separately).
pub fn assemble_spectrum_entry<T: Real>(
    entry: &SpectrumEntry<T>,
    mesh: &Mesh<T>,
    dofmap: &DofMap,
) -> Result<(LoadVector<T>, LoadVector<T>, LoadVector<T>, LoadVector<T>), ModalError> {
    let body_re = Vector3::new(entry.body[0].re, entry.body[1].re, entry.body[2].re);
    let body_im = Vector3::new(entry.body[0].im, entry.body[1].im, entry.body[2].im);
    let f_re = assemble_body_load(mesh, dofmap, &BodyForce::Constant(body_re))?;
    let f_im = assemble_body_load(mesh, dofmap, &BodyForce::Constant(body_im))?;

    let mut per_facet_re: BTreeMap<usize, Vector3<T>> = BTreeMap::new();
    let mut per_facet_im: BTreeMap<usize, Vector3<T>> = BTreeMap::new();
    for (selector, g) in &entry.traction {
        let re = Vector3::new(g[0].re, g[1].re, g[2].re);
        let im = Vector3::new(g[0].im, g[1].im, g[2].im);
        for facet in mesh.select_facets(selector)? {
            *per_facet_re.entry(facet).or_insert_with(Vector3::zeros) += re;
            *per_facet_im.entry(facet).or_insert_with(Vector3::zeros) += im;
        }
    }
    let g_re = assemble_traction_load(
        mesh,
        dofmap,
        &Traction::PerFacet(per_facet_re.into_iter().collect()),
    )?;
    let g_im = assemble_traction_load(
        mesh,
        dofmap,
        &Traction::PerFacet(per_facet_im.into_iter().collect()),
    )?;
    Ok((f_re, f_im, g_re, g_im))
}

/// Time series of real nodal fields, one per sample.
#[derive(Debug, Clone)]
pub struct DynamicResponse<T: Real> {
    pub times: Vec<T>,
    /// `fields[t][node]` is the displacement vector at that time sample.
    pub fields: Vec<Vec<[T; 3]>>,
    /// Coefficients per spectrum entry, in entry order.
    pub coefficients: Vec<ModalCoefficients<T>>,
}

/// Fourier recombination over a finite spectrum: coefficients are computed
/// once per frequency and reused across the time grid. An empty spectrum
/// yields zero fields.
pub fn dynamic_synthesize<T: Real>(
    modeset: &ModeSet<T>,
    spectrum: &FrequencySpectrum<T>,
    times: &[T],
    mesh: &Mesh<T>,
    dofmap: &DofMap,
    guard: T,
) -> Result<DynamicResponse<T>, ModalError> {
    if dofmap.free_count() != modeset.free_dofs() {
        return Err(ModalError::DimensionMismatch {
            got: dofmap.free_count(),
            expected: modeset.free_dofs(),
        });
    }
    let n = modeset.free_dofs();
    let mut coefficients = Vec::with_capacity(spectrum.entries().len());
    let mut frequency_fields: Vec<(T, Vec<Complex<T>>)> =
        Vec::with_capacity(spectrum.entries().len());
    for entry in spectrum.entries() {
        let (f_re, f_im, g_re, g_im) = assemble_spectrum_entry(entry, mesh, dofmap)?;
        let f_n: Vec<Complex<T>> = project_load(modeset, &f_re)?
            .into_iter()
            .zip(project_load(modeset, &f_im)?)
            .map(|(re, im)| Complex::new(re, im))
            .collect();
        let g_n: Vec<Complex<T>> = project_load(modeset, &g_re)?
            .into_iter()
            .zip(project_load(modeset, &g_im)?)
            .map(|(re, im)| Complex::new(re, im))
            .collect();
        let coeffs = harmonic_coefficients_complex(modeset, &f_n, &g_n, entry.omega, guard)?;
        let field = synthesize_free(modeset, &coeffs)?;
        coefficients.push(coeffs);
        frequency_fields.push((entry.omega, field));
    }

    let mut fields = Vec::with_capacity(times.len());
    for &t in times {
        let mut acc = vec![T::zero(); n];
        for (omega, field) in &frequency_fields {
            let phase = *omega * t;
            let (c, s) = (phase.cos(), phase.sin());
            for (i, z) in field.iter().enumerate() {
                // Re( z * e^{+i omega t} )
                acc[i] += z.re * c - z.im * s;
            }
        }
        let nodal = dofmap.scatter(&acc);
        fields.push(nodal);
    }
    Ok(DynamicResponse {
        times: times.to_vec(),
        fields,
        coefficients,
    })
}

// ---------------------------------------------------------------------------
// Truncation reporting
// ---------------------------------------------------------------------------

/// Tail magnitudes and cumulative energy fractions of a coefficient set;
/// with a direct solution supplied, also the relative M-norm error of the
/// truncated synthesis.
#[derive(Debug, Clone)]
pub struct TruncationReport<T: Real> {
    pub moduli: Vec<T>,
    /// `cumulative_energy_fraction[N]` is `sum_{n<=N} |alpha_n|^2` over the
    /// total. All-zero coefficients report fraction 1 by convention.
    pub cumulative_energy_fraction: Vec<T>,
    pub total_energy: T,
    pub relative_error: Option<T>,
}

pub fn truncation_report<T: Real>(
    modeset: &ModeSet<T>,
    coeffs: &ModalCoefficients<T>,
    direct: Option<(&[T], &SymSparse<T>)>,
) -> Result<TruncationReport<T>, ModalError> {
    let moduli: Vec<T> = coeffs.alphas.iter().map(|&a| cmod(a)).collect();
    let energies: Vec<T> = moduli.iter().map(|&m| m * m).collect();
    let total_energy: T = energies.iter().fold(T::zero(), |a, &b| a + b);
    let mut cumulative_energy_fraction = Vec::with_capacity(energies.len());
    let mut running = T::zero();
    for &e in &energies {
        running += e;
        // Degenerate convention: with no modal energy at all, every prefix
        // already captures "everything".
        let fraction = if total_energy > T::zero() {
            running / total_energy
        } else {
            T::one()
        };
        cumulative_energy_fraction.push(fraction);
    }

    let relative_error = match direct {
        None => None,
        Some((reference, m_mat)) => {
            if reference.len() != modeset.free_dofs() {
                return Err(ModalError::DimensionMismatch {
                    got: reference.len(),
                    expected: modeset.free_dofs(),
                });
            }
            let synth = synthesize_free(modeset, coeffs)?;
            let diff: Vec<T> = synth
                .iter()
                .zip(reference)
                .map(|(z, &r)| z.re - r)
                .collect();
            let m_diff = m_mat.matvec(&diff);
            let err_sq: T = diff
                .iter()
                .zip(&m_diff)
                .fold(T::zero(), |a, (x, y)| a + *x * *y);
            let m_ref = m_mat.matvec(reference);
            let ref_sq: T = reference
                .iter()
                .zip(&m_ref)
                .fold(T::zero(), |a, (x, y)| a + *x * *y);
            Some((err_sq / ref_sq).sqrt())
        }
    };

    Ok(TruncationReport {
        moduli,
        cumulative_energy_fraction,
        total_energy,
        relative_error,
    })
}
