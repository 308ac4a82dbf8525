//! Shared fixtures for the integration tests.

#![allow(dead_code)]

use elastomode::assembly::{assemble_mass, assemble_stiffness, DofMap, SymSparse};
use elastomode::material::{ElasticTensor, MaterialField};
use elastomode::mesh::{generate_box, BoxPlane, Mesh};
use elastomode::solver::ModeSet;
use nalgebra::{DMatrix, Point3};

pub struct Setup {
    pub mesh: Mesh<f64>,
    pub dofmap: DofMap,
    pub material: MaterialField<f64>,
    pub stiffness: SymSparse<f64>,
    pub mass: SymSparse<f64>,
}

/// Box clamped on the x = 0 face with homogeneous isotropic material.
pub fn clamped_box(
    cells: (usize, usize, usize),
    lengths: (f64, f64, f64),
    lambda: f64,
    mu: f64,
    rho: f64,
) -> Setup {
    let mesh = generate_box(
        cells.0,
        cells.1,
        cells.2,
        lengths.0,
        lengths.1,
        lengths.2,
        &[BoxPlane::XMin],
    )
    .unwrap();
    let dofmap = DofMap::build(&mesh);
    let tensor = ElasticTensor::isotropic(lambda, mu).unwrap();
    let material = MaterialField::uniform(tensor, rho, mesh.num_tets()).unwrap();
    let stiffness = assemble_stiffness(&mesh, &material, &dofmap).unwrap();
    let mass = assemble_mass(&mesh, &material, &dofmap).unwrap();
    Setup {
        mesh,
        dofmap,
        material,
        stiffness,
        mass,
    }
}

/// Deterministically perturbs interior nodes of a mesh (revalidated).
pub fn jitter_interior(mesh: &Mesh<f64>, amplitude: f64) -> Mesh<f64> {
    let mut boundary = vec![false; mesh.num_nodes()];
    for facet in mesh.facets() {
        for &n in &facet.nodes {
            boundary[n] = true;
        }
    }
    let mut state = 0x1234_5678_9ABC_DEF0u64;
    let mut rand_unit = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    let nodes: Vec<Point3<f64>> = mesh
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if boundary[i] {
                *p
            } else {
                Point3::new(
                    p.x + amplitude * rand_unit(),
                    p.y + amplitude * rand_unit(),
                    p.z + amplitude * rand_unit(),
                )
            }
        })
        .collect();
    Mesh::new(nodes, mesh.tets().to_vec(), mesh.facets().to_vec()).unwrap()
}

/// 1D fixed-free rod discretization: P1 elements, consistent mass.
/// For a zero-Poisson material the 3D rod's axial dynamics reduce exactly
/// to this problem, whose eigenvalues are ((2k+1) pi / (2 L))^2 E / rho.
pub fn rod_1d(n: usize, e_mod: f64, rho: f64, length: f64) -> (SymSparse<f64>, SymSparse<f64>) {
    let h = length / n as f64;
    let mut k_trip = Vec::new();
    let mut m_trip = Vec::new();
    // Node 0 clamped; free nodes 1..=n map to dofs 0..n.
    for elem in 0..n {
        let nodes = [elem as isize - 1, elem as isize];
        let ke = e_mod / h;
        let me = rho * h / 6.0;
        for (a, &ia) in nodes.iter().enumerate() {
            for (b, &ib) in nodes.iter().enumerate() {
                if ia < 0 || ib < 0 {
                    continue;
                }
                let k_val = if a == b { ke } else { -ke };
                let m_val = if a == b { 2.0 * me } else { me };
                k_trip.push((ia as usize, ib as usize, k_val));
                m_trip.push((ia as usize, ib as usize, m_val));
            }
        }
    }
    (
        SymSparse::from_triplets(n, k_trip),
        SymSparse::from_triplets(n, m_trip),
    )
}

/// Largest principal angle (radians) between the column spans of two
/// M-orthonormal bases.
pub fn max_principal_angle(u1: &DMatrix<f64>, u2: &DMatrix<f64>, m: &SymSparse<f64>) -> f64 {
    assert_eq!(u1.ncols(), u2.ncols());
    let p = u1.ncols();
    let mut cross = DMatrix::zeros(p, p);
    for j in 0..p {
        let col: Vec<f64> = u2.column(j).iter().copied().collect();
        let m_col = m.matvec(&col);
        for i in 0..p {
            let mut acc = 0.0;
            for (a, b) in u1.column(i).iter().zip(m_col.iter()) {
                acc += a * b;
            }
            cross[(i, j)] = acc;
        }
    }
    let svd = cross.svd(false, false);
    let min_singular = svd
        .singular_values
        .iter()
        .fold(f64::INFINITY, |acc, &s| acc.min(s));
    min_singular.clamp(-1.0, 1.0).acos()
}

/// Groups eigenvalues into clusters by relative gap.
pub fn eigenvalue_clusters(lambdas: &[f64], rel_gap: f64) -> Vec<(usize, usize)> {
    let mut clusters = Vec::new();
    let mut start = 0;
    for i in 1..=lambdas.len() {
        let split = i == lambdas.len()
            || (lambdas[i] - lambdas[i - 1]).abs() > rel_gap * lambdas[i - 1].abs().max(1e-300);
        if split {
            clusters.push((start, i));
            start = i;
        }
    }
    clusters
}

/// M-norm of a free-dof vector.
pub fn m_norm(m: &SymSparse<f64>, v: &[f64]) -> f64 {
    let mv = m.matvec(v);
    v.iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>().sqrt()
}

/// Columns of a mode set as a dense matrix.
pub fn modes_matrix(modes: &ModeSet<f64>) -> DMatrix<f64> {
    modes.modes().clone()
}
