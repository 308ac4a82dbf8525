//! Input loading and provenance helpers shared by the commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, InputArgs};
use elastomode::material::{MaterialField, MaterialSpec};
use elastomode::mesh::{load_gmsh_msh2, load_mesh_json, Mesh};

pub fn sha256_hex(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    Ok(out)
}

fn parse_tag_list(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad tag {s:?} in tag list")))
        })
        .collect()
}

pub fn load_mesh(args: &InputArgs) -> Result<Mesh<f64>, CliError> {
    if !args.mesh.exists() {
        return Err(CliError::Usage(format!(
            "mesh file {} does not exist",
            args.mesh.display()
        )));
    }
    let is_msh = args
        .mesh
        .extension()
        .map(|e| e.eq_ignore_ascii_case("msh"))
        .unwrap_or(false);
    let mesh = if is_msh {
        let dir = parse_tag_list(args.dirichlet_tags.as_deref().unwrap_or(""))?;
        let neu = parse_tag_list(args.neumann_tags.as_deref().unwrap_or(""))?;
        load_gmsh_msh2(&args.mesh, &dir, &neu)?
    } else {
        load_mesh_json(&args.mesh)?
    };
    Ok(mesh)
}

pub fn load_material(args: &InputArgs, mesh: &Mesh<f64>) -> Result<MaterialField<f64>, CliError> {
    if !args.material.exists() {
        return Err(CliError::Usage(format!(
            "material file {} does not exist",
            args.material.display()
        )));
    }
    let spec = MaterialSpec::<f64>::load(&args.material)?;
    Ok(spec.field_for_regions(&mesh.element_regions())?)
}

pub fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

/// Input hashes, tolerances and tool version attached to every JSON report.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool_version: String,
    pub input_hashes: BTreeMap<String, String>,
    pub tolerances: BTreeMap<String, f64>,
}

impl Provenance {
    pub fn new(inputs: &[(&str, &PathBuf)], tolerances: &[(&str, f64)]) -> Result<Self, CliError> {
        let mut input_hashes = BTreeMap::new();
        for (name, path) in inputs {
            input_hashes.insert(name.to_string(), sha256_hex(path)?);
        }
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            input_hashes,
            tolerances: tolerances
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Solver(format!("serialization failed: {e}")))?;
    std::fs::write(path, text)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}
