//! The five subcommands.

use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::Serialize;

use elastomode::assembly::{
    assemble_mass, assemble_stiffness, DofMap, LoadVector, SourceSpec, SymSparse,
};
use elastomode::mesh::{BoundaryKind, Mesh};
use elastomode::modal::{
    dynamic_synthesize, harmonic_coefficients, project_sources, static_coefficients, synthesize,
    truncation_report, FrequencySpectrum, ModalCoefficients,
};
use elastomode::solver::{
    eigs_smallest, read_modeset, residual_report, solve_shifted_dense, solve_static, write_modeset,
    write_modeset_json, ModeSet, SolveOptions, DENSE_DIM_CAP,
};
use elastomode::vtk::write_vector_fields;

use crate::io_util::{ensure_out_dir, load_material, load_mesh, write_json, Provenance};
use crate::{
    CliError, DynamicArgs, HarmonicArgs, InputArgs, ModesArgs, StaticArgs, TolArgs, ValidateArgs,
};

fn solve_options(tols: &TolArgs) -> Result<SolveOptions<f64>, CliError> {
    let opts = SolveOptions {
        cg_tol: tols.tol_cg,
        eig_tol: tols.tol_eig,
        ..SolveOptions::default()
    };
    opts.validate()?;
    Ok(opts)
}

#[derive(Serialize)]
struct MeshStats {
    /// Meshes only exist after passing validation, so this is always true
    /// in a written report; mesh failures abort with exit code 3 instead.
    invariants_hold: bool,
    nodes: usize,
    tets: usize,
    facets: usize,
    dirichlet_facets: usize,
    neumann_facets: usize,
    free_dofs: usize,
    fingerprint: String,
}

fn mesh_stats(mesh: &Mesh<f64>, dofmap: &DofMap) -> MeshStats {
    let dirichlet = mesh
        .facets()
        .iter()
        .filter(|f| f.kind == BoundaryKind::Dirichlet)
        .count();
    MeshStats {
        invariants_hold: true,
        nodes: mesh.num_nodes(),
        tets: mesh.num_tets(),
        facets: mesh.num_facets(),
        dirichlet_facets: dirichlet,
        neumann_facets: mesh.num_facets() - dirichlet,
        free_dofs: dofmap.free_count(),
        fingerprint: mesh.fingerprint(),
    }
}

#[derive(Serialize)]
struct MaterialReportJson {
    alpha: f64,
    beta: f64,
    declared_alpha: f64,
    declared_beta: f64,
    pass: bool,
    failures: Vec<String>,
}

#[derive(Serialize)]
struct ValidationJson {
    provenance: Provenance,
    mesh: MeshStats,
    material: MaterialReportJson,
}

pub fn run_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let mesh = load_mesh(&args.input)?;
    let material = load_material(&args.input, &mesh)?;
    let dofmap = DofMap::build(&mesh);
    let report = material.validate();

    ensure_out_dir(&args.input.out_dir)?;
    let json = ValidationJson {
        provenance: Provenance::new(
            &[
                ("mesh", &args.input.mesh),
                ("material", &args.input.material),
            ],
            &[
                ("declared_alpha", report.declared_alpha),
                ("declared_beta", report.declared_beta),
            ],
        )?,
        mesh: mesh_stats(&mesh, &dofmap),
        material: MaterialReportJson {
            alpha: report.alpha,
            beta: report.beta,
            declared_alpha: report.declared_alpha,
            declared_beta: report.declared_beta,
            pass: report.pass,
            failures: report.failures.iter().map(|f| format!("{f:?}")).collect(),
        },
    };
    write_json(&args.input.out_dir.join("validation.json"), &json)?;
    if !report.pass {
        return Err(CliError::MaterialValidation(format!(
            "material hypotheses violated on {} element(s); see validation.json",
            json.material.failures.len()
        )));
    }
    Ok(())
}

/// Loads mesh and material and enforces the hypothesis checks, returning the
/// assembled system.
struct System {
    mesh: Mesh<f64>,
    dofmap: DofMap,
    stiffness: SymSparse<f64>,
    mass: SymSparse<f64>,
}

fn build_system(input: &InputArgs) -> Result<System, CliError> {
    let mesh = load_mesh(input)?;
    let material = load_material(input, &mesh)?;
    let report = material.validate();
    if !report.pass {
        return Err(CliError::MaterialValidation(
            "material hypotheses violated; run `validate` for the report".into(),
        ));
    }
    let dofmap = DofMap::build(&mesh);
    let stiffness = assemble_stiffness(&mesh, &material, &dofmap)?;
    let mass = assemble_mass(&mesh, &material, &dofmap)?;
    Ok(System {
        mesh,
        dofmap,
        stiffness,
        mass,
    })
}

fn nodal_real(field: &[[Complex<f64>; 3]]) -> Vec<[f64; 3]> {
    field.iter().map(|v| [v[0].re, v[1].re, v[2].re]).collect()
}

fn nodal_imag(field: &[[Complex<f64>; 3]]) -> Vec<[f64; 3]> {
    field.iter().map(|v| [v[0].im, v[1].im, v[2].im]).collect()
}

#[derive(Serialize)]
struct ModesSummaryJson {
    provenance: Provenance,
    mesh_fingerprint: String,
    free_dofs: usize,
    num_modes: usize,
    lambdas: Vec<f64>,
    residuals: Vec<f64>,
    max_ortho_deviation: f64,
}

pub fn run_modes(args: &ModesArgs) -> Result<(), CliError> {
    let system = build_system(&args.input)?;
    if args.num_modes == 0 || args.num_modes > system.dofmap.free_count() {
        return Err(CliError::Usage(format!(
            "num-modes must lie in 1..={} (free dofs), got {}",
            system.dofmap.free_count(),
            args.num_modes
        )));
    }
    let opts = solve_options(&args.tols)?;
    let modes = eigs_smallest(&system.stiffness, &system.mass, args.num_modes, &opts)?
        .with_fingerprint(system.mesh.fingerprint());
    let residuals = residual_report(&system.stiffness, &system.mass, &modes)?;
    let ortho = modes.max_ortho_deviation(&system.mass);

    ensure_out_dir(&args.input.out_dir)?;
    write_modeset(&args.input.out_dir.join("modes.bin"), &modes, opts.cg_tol)?;
    if modes.free_dofs() <= DENSE_DIM_CAP {
        write_modeset_json(&args.input.out_dir.join("modes.json"), &modes, opts.cg_tol)?;
    }
    for n in 0..modes.num_modes() {
        let field = system.dofmap.scatter(&modes.mode(n));
        write_vector_fields(
            &args.input.out_dir.join(format!("mode_{n:03}.vtk")),
            &format!("eigenmode {n}"),
            &system.mesh,
            &[("displacement", &field)],
        )?;
    }
    let summary = ModesSummaryJson {
        provenance: Provenance::new(
            &[
                ("mesh", &args.input.mesh),
                ("material", &args.input.material),
            ],
            &[("cg_tol", args.tols.tol_cg), ("eig_tol", args.tols.tol_eig)],
        )?,
        mesh_fingerprint: system.mesh.fingerprint(),
        free_dofs: modes.free_dofs(),
        num_modes: modes.num_modes(),
        lambdas: modes.lambdas().to_vec(),
        residuals,
        max_ortho_deviation: ortho,
    };
    write_json(&args.input.out_dir.join("modes_summary.json"), &summary)?;
    Ok(())
}

fn read_modes_for_mesh(
    path: &Path,
    mesh: &Mesh<f64>,
    num_modes: Option<usize>,
) -> Result<ModeSet<f64>, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "modes file {} does not exist",
            path.display()
        )));
    }
    let (modes, header) = read_modeset::<f64>(path)?;
    let fingerprint = mesh.fingerprint();
    match &header.mesh_fingerprint {
        Some(fp) if *fp == fingerprint => {}
        Some(fp) => {
            return Err(CliError::Usage(format!(
                "mesh fingerprint mismatch: mode container was computed for {fp}, current mesh is {fingerprint}"
            )))
        }
        None => {
            return Err(CliError::Usage(
                "mode container carries no mesh fingerprint".into(),
            ))
        }
    }
    match num_modes {
        None => Ok(modes),
        Some(n) if n >= 1 && n <= modes.num_modes() => Ok(modes.truncated(n)),
        Some(n) => Err(CliError::Usage(format!(
            "num-modes {n} outside 1..={} modes in the container",
            modes.num_modes()
        ))),
    }
}

#[derive(Serialize)]
struct CoefficientRow {
    n: usize,
    lambda: f64,
    f_re: f64,
    f_im: f64,
    g_re: f64,
    g_im: f64,
    alpha_re: f64,
    alpha_im: f64,
}

fn coefficient_rows(modes: &ModeSet<f64>, coeffs: &ModalCoefficients<f64>) -> Vec<CoefficientRow> {
    (0..coeffs.len())
        .map(|n| CoefficientRow {
            n,
            lambda: modes.lambda(n),
            f_re: coeffs.f_proj[n].re,
            f_im: coeffs.f_proj[n].im,
            g_re: coeffs.g_proj[n].re,
            g_im: coeffs.g_proj[n].im,
            alpha_re: coeffs.alphas[n].re,
            alpha_im: coeffs.alphas[n].im,
        })
        .collect()
}

#[derive(Serialize)]
struct TruncationJson {
    moduli: Vec<f64>,
    cumulative_energy_fraction: Vec<f64>,
    total_energy: f64,
    relative_error: Option<f64>,
}

#[derive(Serialize)]
struct SynthesisJson {
    provenance: Provenance,
    omega: Option<f64>,
    num_modes_retained: Option<usize>,
    rows: Vec<CoefficientRow>,
    truncation: Option<TruncationJson>,
    relative_m_norm_error_vs_direct: Option<f64>,
}

fn assemble_sources(
    path: &PathBuf,
    system: &System,
) -> Result<(LoadVector<f64>, LoadVector<f64>), CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "sources file {} does not exist",
            path.display()
        )));
    }
    let sources = SourceSpec::load(path, &system.mesh)?;
    Ok(sources.assemble(&system.mesh, &system.dofmap)?)
}

pub fn run_static(args: &StaticArgs) -> Result<(), CliError> {
    let system = build_system(&args.input)?;
    let (body, trac) = assemble_sources(&args.sources, &system)?;
    let total = body.add(&trac);
    let opts = solve_options(&args.tols)?;
    ensure_out_dir(&args.input.out_dir)?;
    let provenance = Provenance::new(
        &[
            ("mesh", &args.input.mesh),
            ("material", &args.input.material),
            ("sources", &args.sources),
        ],
        &[("cg_tol", args.tols.tol_cg)],
    )?;

    if args.direct {
        let u = solve_static(&system.stiffness, &total, &opts)?;
        let field = system.dofmap.scatter(&u);
        write_vector_fields(
            &args.input.out_dir.join("static_direct.vtk"),
            "static displacement (direct)",
            &system.mesh,
            &[("displacement", &field)],
        )?;
        let json = SynthesisJson {
            provenance,
            omega: None,
            num_modes_retained: None,
            rows: Vec::new(),
            truncation: None,
            relative_m_norm_error_vs_direct: None,
        };
        write_json(&args.input.out_dir.join("static_coefficients.json"), &json)?;
        return Ok(());
    }

    let modes_path = args
        .modes_file
        .as_ref()
        .ok_or_else(|| CliError::Usage("either --modes-file or --direct is required".into()))?;
    let modes = read_modes_for_mesh(modes_path, &system.mesh, args.num_modes)?;
    let (f_n, g_n) = project_sources(&modes, &body, &trac)?;
    let coeffs = static_coefficients(&modes, &f_n, &g_n)?;
    let field = synthesize(&modes, &coeffs, &system.dofmap)?;
    write_vector_fields(
        &args.input.out_dir.join("static.vtk"),
        "static displacement (modal)",
        &system.mesh,
        &[("displacement", &nodal_real(&field))],
    )?;

    let direct = if args.compare_direct {
        let u = solve_static(&system.stiffness, &total, &opts)?;
        let nodal = system.dofmap.scatter(&u);
        write_vector_fields(
            &args.input.out_dir.join("static_direct.vtk"),
            "static displacement (direct)",
            &system.mesh,
            &[("displacement", &nodal)],
        )?;
        Some(u)
    } else {
        None
    };
    let report = truncation_report(
        &modes,
        &coeffs,
        direct.as_ref().map(|u| (u.as_slice(), &system.mass)),
    )?;
    let json = SynthesisJson {
        provenance,
        omega: None,
        num_modes_retained: Some(modes.num_modes()),
        rows: coefficient_rows(&modes, &coeffs),
        relative_m_norm_error_vs_direct: report.relative_error,
        truncation: Some(TruncationJson {
            moduli: report.moduli.clone(),
            cumulative_energy_fraction: report.cumulative_energy_fraction.clone(),
            total_energy: report.total_energy,
            relative_error: report.relative_error,
        }),
    };
    write_json(&args.input.out_dir.join("static_coefficients.json"), &json)?;
    Ok(())
}

pub fn run_harmonic(args: &HarmonicArgs) -> Result<(), CliError> {
    let system = build_system(&args.input)?;
    let (body, trac) = assemble_sources(&args.sources, &system)?;
    ensure_out_dir(&args.input.out_dir)?;
    let modes = read_modes_for_mesh(&args.modes_file, &system.mesh, args.num_modes)?;
    let (f_n, g_n) = project_sources(&modes, &body, &trac)?;
    let coeffs = harmonic_coefficients(&modes, &f_n, &g_n, args.omega, args.guard)?;
    let field = synthesize(&modes, &coeffs, &system.dofmap)?;
    write_vector_fields(
        &args.input.out_dir.join("harmonic.vtk"),
        &format!("harmonic displacement at omega = {:e}", args.omega),
        &system.mesh,
        &[
            ("displacement_re", &nodal_real(&field)),
            ("displacement_im", &nodal_imag(&field)),
        ],
    )?;

    let relative_error = if args.compare_direct {
        let total = body.add(&trac);
        let direct = solve_shifted_dense(
            &system.stiffness,
            &system.mass,
            args.omega * args.omega,
            total.as_slice(),
        )?;
        let nodal = system.dofmap.scatter(&direct);
        write_vector_fields(
            &args.input.out_dir.join("harmonic_direct.vtk"),
            "harmonic displacement (direct)",
            &system.mesh,
            &[("displacement", &nodal)],
        )?;
        let report = truncation_report(&modes, &coeffs, Some((direct.as_slice(), &system.mass)))?;
        report.relative_error
    } else {
        None
    };

    let json = SynthesisJson {
        provenance: Provenance::new(
            &[
                ("mesh", &args.input.mesh),
                ("material", &args.input.material),
                ("sources", &args.sources),
            ],
            &[("guard", args.guard), ("omega", args.omega)],
        )?,
        omega: Some(args.omega),
        num_modes_retained: Some(modes.num_modes()),
        rows: coefficient_rows(&modes, &coeffs),
        truncation: None,
        relative_m_norm_error_vs_direct: relative_error,
    };
    write_json(
        &args.input.out_dir.join("harmonic_coefficients.json"),
        &json,
    )?;
    Ok(())
}

#[derive(Serialize)]
struct DynamicSummaryJson {
    provenance: Provenance,
    times: Vec<f64>,
    frequencies: Vec<f64>,
    coefficient_tables: Vec<Vec<CoefficientRow>>,
}

pub fn run_dynamic(args: &DynamicArgs) -> Result<(), CliError> {
    let system = build_system(&args.input)?;
    if !args.spectrum.exists() {
        return Err(CliError::Usage(format!(
            "spectrum file {} does not exist",
            args.spectrum.display()
        )));
    }
    let spectrum = FrequencySpectrum::<f64>::load(&args.spectrum)?;
    let times: Vec<f64> = args
        .times
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad time sample {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    if times.is_empty() {
        return Err(CliError::Usage(
            "at least one time sample is required".into(),
        ));
    }
    let modes = read_modes_for_mesh(&args.modes_file, &system.mesh, args.num_modes)?;
    ensure_out_dir(&args.input.out_dir)?;

    let response = dynamic_synthesize(
        &modes,
        &spectrum,
        &times,
        &system.mesh,
        &system.dofmap,
        args.guard,
    )?;
    for (i, field) in response.fields.iter().enumerate() {
        write_vector_fields(
            &args.input.out_dir.join(format!("dynamic_t{i:03}.vtk")),
            &format!("dynamic displacement at t = {:e}", response.times[i]),
            &system.mesh,
            &[("displacement", field)],
        )?;
    }
    let summary = DynamicSummaryJson {
        provenance: Provenance::new(
            &[
                ("mesh", &args.input.mesh),
                ("material", &args.input.material),
                ("spectrum", &args.spectrum),
            ],
            &[("guard", args.guard)],
        )?,
        times: response.times.clone(),
        frequencies: spectrum.entries().iter().map(|e| e.omega).collect(),
        coefficient_tables: response
            .coefficients
            .iter()
            .map(|c| coefficient_rows(&modes, c))
            .collect(),
    };
    write_json(&args.input.out_dir.join("dynamic_summary.json"), &summary)?;
    Ok(())
}
