//! Discrete counterparts of the elastic bilinear form, the density-weighted
//! inner product, and the load functionals, on the free degrees of freedom.
//!
//! Dirichlet conditions are handled by elimination: constrained dofs are
//! dropped from the system so that stiffness and mass stay symmetric
//! positive definite. Element loops accumulate in index order, giving
//! bit-reproducible matrices.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, Matrix3, SMatrix, Vector3};
use serde::Deserialize;
use thiserror::Error;

use crate::material::MaterialField;
use crate::mesh::{BoundaryKind, Mesh, MeshError};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("material field covers {material} elements, mesh has {mesh}")]
    ElementCountMismatch { material: usize, mesh: usize },
    #[error("element {element} has degenerate Jacobian")]
    DegenerateElement { element: usize },
    #[error("per-element data has length {got}, expected {expected}")]
    PerElementLength { got: usize, expected: usize },
    #[error("traction prescribed on Dirichlet facet {facet}")]
    TractionOnDirichlet { facet: usize },
    #[error("non-finite source data in {context}")]
    NonFinite { context: String },
    #[error("vector length {got} does not match free dof count {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("failed to read sources file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse sources file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Per-node dof assignment: either all three components constrained (node on
/// a Dirichlet facet) or three contiguous free dof ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeDofs {
    Constrained,
    Free([usize; 3]),
}

#[derive(Debug, Clone)]
pub struct DofMap {
    node_dofs: Vec<NodeDofs>,
    free_count: usize,
}

impl DofMap {
    /// Builds the map for the space `{u in H1 | u = 0 on Gamma_Dir}`:
    /// every node lying on at least one Dirichlet facet is fully constrained
    /// (closure convention), free dof ids are contiguous from 0 in node
    /// order.
    pub fn build<T: Real>(mesh: &Mesh<T>) -> Self {
        let mut constrained = vec![false; mesh.num_nodes()];
        for facet in mesh.facets() {
            if facet.kind == BoundaryKind::Dirichlet {
                for &n in &facet.nodes {
                    constrained[n] = true;
                }
            }
        }
        Self::from_constrained(&constrained)
    }

    /// All dofs free; used for operator-level analysis (rigid-body kernels).
    pub fn all_free(num_nodes: usize) -> Self {
        Self::from_constrained(&vec![false; num_nodes])
    }

    fn from_constrained(constrained: &[bool]) -> Self {
        let mut node_dofs = Vec::with_capacity(constrained.len());
        let mut next = 0usize;
        for &is_constrained in constrained {
            if is_constrained {
                node_dofs.push(NodeDofs::Constrained);
            } else {
                node_dofs.push(NodeDofs::Free([next, next + 1, next + 2]));
                next += 3;
            }
        }
        Self {
            node_dofs,
            free_count: next,
        }
    }

    pub fn free_count(&self) -> usize {
        self.free_count
    }

    pub fn num_nodes(&self) -> usize {
        self.node_dofs.len()
    }

    pub fn node(&self, node: usize) -> NodeDofs {
        self.node_dofs[node]
    }

    pub fn is_constrained(&self, node: usize) -> bool {
        matches!(self.node_dofs[node], NodeDofs::Constrained)
    }

    pub fn constrained_count(&self) -> usize {
        self.node_dofs
            .iter()
            .filter(|d| matches!(d, NodeDofs::Constrained))
            .count()
    }

    /// Expands a free-dof vector to a per-node field, zero on constrained
    /// nodes.
    pub fn scatter<U: Copy + num_traits::Zero>(&self, free: &[U]) -> Vec<[U; 3]> {
        assert_eq!(free.len(), self.free_count);
        self.node_dofs
            .iter()
            .map(|d| match d {
                NodeDofs::Constrained => [U::zero(), U::zero(), U::zero()],
                NodeDofs::Free([a, b, c]) => [free[*a], free[*b], free[*c]],
            })
            .collect()
    }
}

/// Symmetric sparse matrix in CSR form with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SymSparse<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SymSparse<T> {
    /// Accumulates triplets into CSR. Duplicates are summed in insertion
    /// order (stable sort), so assembly stays deterministic.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut counts = vec![0usize; dim];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last = None;
        for (r, c, v) in triplets {
            debug_assert!(r < dim && c < dim);
            if last == Some((r, c)) {
                let i = values.len() - 1;
                values[i] += v;
            } else {
                col_idx.push(c);
                values.push(v);
                counts[r] += 1;
                last = Some((r, c));
            }
        }
        let mut row_ptr = vec![0usize; dim + 1];
        for r in 0..dim {
            row_ptr[r + 1] = row_ptr[r] + counts[r];
        }
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![T::one(); dim])
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let triplets = diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(diag.len(), triplets)
    }

    pub fn from_dense(dense: &DMatrix<T>) -> Self {
        assert_eq!(dense.nrows(), dense.ncols());
        let mut triplets = Vec::new();
        for r in 0..dense.nrows() {
            for c in 0..dense.ncols() {
                let v = dense[(r, c)];
                if v != T::zero() || r == c {
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_triplets(dense.nrows(), triplets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[range.clone()].binary_search(&col) {
            Ok(offset) => self.values[range.start + offset],
            Err(_) => T::zero(),
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for r in 0..self.dim {
            let mut acc = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// Largest absolute difference between the matrix and its transpose.
    pub fn symmetry_defect(&self) -> T {
        let mut defect = T::zero();
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                if c >= r {
                    defect = defect.max((self.values[k] - self.get(c, r)).abs());
                }
            }
        }
        defect
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    /// `a * self + b * other` on the merged sparsity pattern.
    pub fn linear_comb(&self, a: T, other: &Self, b: T) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                triplets.push((r, self.col_idx[k], a * self.values[k]));
            }
            for k in other.row_ptr[r]..other.row_ptr[r + 1] {
                triplets.push((r, other.col_idx[k], b * other.values[k]));
            }
        }
        Self::from_triplets(self.dim, triplets)
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut dense = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                dense[(r, self.col_idx[k])] += self.values[k];
            }
        }
        dense
    }
}

/// Dense load vector over free dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadVector<T> {
    values: Vec<T>,
}

impl<T: Real> LoadVector<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![T::zero(); n],
        }
    }

    pub fn from_vec(values: Vec<T>) -> Result<Self, AssemblyError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AssemblyError::NonFinite {
                context: "load vector".into(),
            });
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn norm(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc + *v * *v)
            .sqrt()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len());
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| *a + *b)
                .collect(),
        }
    }
}

/// Geometry of a P1 tet: constant basis gradients and volume.
fn tet_gradients<T: Real>(
    mesh: &Mesh<T>,
    element: usize,
) -> Result<([Vector3<T>; 4], T), AssemblyError> {
    let tet = mesh.tet(element);
    let a = mesh.node(tet.nodes[0]);
    let jac = Matrix3::from_columns(&[
        mesh.node(tet.nodes[1]) - a,
        mesh.node(tet.nodes[2]) - a,
        mesh.node(tet.nodes[3]) - a,
    ]);
    let det = jac.determinant();
    let volume = det / T::cast(6.0);
    let inv = jac
        .try_inverse()
        .filter(|_| det > T::zero())
        .ok_or(AssemblyError::DegenerateElement { element })?;
    // grad phi_i = J^{-T} e_i for i = 1..3; the rows of J^{-1}.
    let g1 = Vector3::new(inv[(0, 0)], inv[(0, 1)], inv[(0, 2)]);
    let g2 = Vector3::new(inv[(1, 0)], inv[(1, 1)], inv[(1, 2)]);
    let g3 = Vector3::new(inv[(2, 0)], inv[(2, 1)], inv[(2, 2)]);
    let g0 = -(g1 + g2 + g3);
    Ok(([g0, g1, g2, g3], volume))
}

/// Strain-displacement matrix of a P1 tet in Voigt order
/// (11, 22, 33, 23, 13, 12) with engineering shears.
fn strain_displacement<T: Real>(grads: &[Vector3<T>; 4]) -> SMatrix<T, 6, 12> {
    let mut b = SMatrix::<T, 6, 12>::zeros();
    for (a, g) in grads.iter().enumerate() {
        let col = 3 * a;
        b[(0, col)] = g.x;
        b[(1, col + 1)] = g.y;
        b[(2, col + 2)] = g.z;
        b[(3, col + 1)] = g.z;
        b[(3, col + 2)] = g.y;
        b[(4, col)] = g.z;
        b[(4, col + 2)] = g.x;
        b[(5, col)] = g.y;
        b[(5, col + 1)] = g.x;
    }
    b
}

fn element_dofs<T: Real>(mesh: &Mesh<T>, dofmap: &DofMap, element: usize) -> [Option<usize>; 12] {
    let tet = mesh.tet(element);
    let mut dofs = [None; 12];
    for (a, &node) in tet.nodes.iter().enumerate() {
        if let NodeDofs::Free(ids) = dofmap.node(node) {
            for c in 0..3 {
                dofs[3 * a + c] = Some(ids[c]);
            }
        }
    }
    dofs
}

/// Assembles the stiffness matrix `sum_e V_e B_e^T C_e B_e` on free dofs.
pub fn assemble_stiffness<T: Real>(
    mesh: &Mesh<T>,
    material: &MaterialField<T>,
    dofmap: &DofMap,
) -> Result<SymSparse<T>, AssemblyError> {
    if material.len() != mesh.num_tets() {
        return Err(AssemblyError::ElementCountMismatch {
            material: material.len(),
            mesh: mesh.num_tets(),
        });
    }
    let half = T::cast(0.5);
    let mut triplets = Vec::with_capacity(mesh.num_tets() * 144);
    for e in 0..mesh.num_tets() {
        let (grads, volume) = tet_gradients(mesh, e)?;
        let b = strain_displacement(&grads);
        let ke = (b.transpose() * material.tensor(e).voigt() * b) * volume;
        // Exact local symmetrization so the global matrix is symmetric to
        // the bit.
        let ke = (ke + ke.transpose()) * half;
        let dofs = element_dofs(mesh, dofmap, e);
        for (i, row_dof) in dofs.iter().enumerate() {
            let Some(r) = row_dof else { continue };
            for (j, col_dof) in dofs.iter().enumerate() {
                let Some(c) = col_dof else { continue };
                triplets.push((*r, *c, ke[(i, j)]));
            }
        }
    }
    Ok(SymSparse::from_triplets(dofmap.free_count(), triplets))
}

/// Assembles the consistent mass matrix: per element the node-pair weight is
/// `rho_e V_e (1 + delta_ab) / 20` on each displacement component, which is
/// the exact P1 integral of `rho u . v`.
pub fn assemble_mass<T: Real>(
    mesh: &Mesh<T>,
    material: &MaterialField<T>,
    dofmap: &DofMap,
) -> Result<SymSparse<T>, AssemblyError> {
    if material.len() != mesh.num_tets() {
        return Err(AssemblyError::ElementCountMismatch {
            material: material.len(),
            mesh: mesh.num_tets(),
        });
    }
    let twentieth = T::cast(1.0 / 20.0);
    let mut triplets = Vec::with_capacity(mesh.num_tets() * 48);
    for e in 0..mesh.num_tets() {
        let (_, volume) = tet_gradients(mesh, e)?;
        let rho = material.density(e);
        let dofs = element_dofs(mesh, dofmap, e);
        for a in 0..4 {
            for b in 0..4 {
                let factor = if a == b { T::cast(2.0) } else { T::one() };
                let w = rho * volume * factor * twentieth;
                for c in 0..3 {
                    if let (Some(r), Some(col)) = (dofs[3 * a + c], dofs[3 * b + c]) {
                        triplets.push((r, col, w));
                    }
                }
            }
        }
    }
    Ok(SymSparse::from_triplets(dofmap.free_count(), triplets))
}

/// Piecewise-constant body force.
#[derive(Debug, Clone)]
pub enum BodyForce<T: Real> {
    Constant(Vector3<T>),
    PerElement(Vec<Vector3<T>>),
}

/// Assembles `int_Omega f . v`: each node of an element receives
/// `f_e V_e / 4` per component, exact for P1 test functions and
/// piecewise-constant `f`.
pub fn assemble_body_load<T: Real>(
    mesh: &Mesh<T>,
    dofmap: &DofMap,
    force: &BodyForce<T>,
) -> Result<LoadVector<T>, AssemblyError> {
    if let BodyForce::PerElement(values) = force {
        if values.len() != mesh.num_tets() {
            return Err(AssemblyError::PerElementLength {
                got: values.len(),
                expected: mesh.num_tets(),
            });
        }
    }
    let quarter = T::cast(0.25);
    let mut values = vec![T::zero(); dofmap.free_count()];
    for e in 0..mesh.num_tets() {
        let f = match force {
            BodyForce::Constant(f) => *f,
            BodyForce::PerElement(list) => list[e],
        };
        if !(f.x.is_finite() && f.y.is_finite() && f.z.is_finite()) {
            return Err(AssemblyError::NonFinite {
                context: format!("body force on element {e}"),
            });
        }
        let (_, volume) = tet_gradients(mesh, e)?;
        let w = volume * quarter;
        let dofs = element_dofs(mesh, dofmap, e);
        for a in 0..4 {
            for c in 0..3 {
                if let Some(dof) = dofs[3 * a + c] {
                    values[dof] += w * f[c];
                }
            }
        }
    }
    LoadVector::from_vec(values)
}

/// Piecewise-constant boundary traction on Neumann facets.
#[derive(Debug, Clone)]
pub enum Traction<T: Real> {
    /// Same traction on every Neumann facet.
    Constant(Vector3<T>),
    /// Explicit facet-id/traction pairs; listing a Dirichlet facet is an
    /// error.
    PerFacet(Vec<(usize, Vector3<T>)>),
}

/// Assembles `int_Gamma_Neu g . v`: each facet node receives
/// `g * area / 3` per component.
pub fn assemble_traction_load<T: Real>(
    mesh: &Mesh<T>,
    dofmap: &DofMap,
    traction: &Traction<T>,
) -> Result<LoadVector<T>, AssemblyError> {
    let third = T::cast(1.0 / 3.0);
    let mut values = vec![T::zero(); dofmap.free_count()];
    let apply =
        |facet_id: usize, g: Vector3<T>, values: &mut Vec<T>| -> Result<(), AssemblyError> {
            let facet = mesh.facet(facet_id);
            if facet.kind == BoundaryKind::Dirichlet {
                return Err(AssemblyError::TractionOnDirichlet { facet: facet_id });
            }
            if !(g.x.is_finite() && g.y.is_finite() && g.z.is_finite()) {
                return Err(AssemblyError::NonFinite {
                    context: format!("traction on facet {facet_id}"),
                });
            }
            let geo = mesh.facet_geometry(facet_id)?;
            let w = geo.area * third;
            for &node in &facet.nodes {
                if let NodeDofs::Free(ids) = dofmap.node(node) {
                    for c in 0..3 {
                        values[ids[c]] += w * g[c];
                    }
                }
            }
            Ok(())
        };
    match traction {
        Traction::Constant(g) => {
            for facet_id in 0..mesh.num_facets() {
                if mesh.facet(facet_id).kind == BoundaryKind::Neumann {
                    apply(facet_id, *g, &mut values)?;
                }
            }
        }
        Traction::PerFacet(list) => {
            for &(facet_id, g) in list {
                if facet_id >= mesh.num_facets() {
                    return Err(AssemblyError::Mesh(MeshError::FacetOutOfRange {
                        index: facet_id,
                        count: mesh.num_facets(),
                    }));
                }
                apply(facet_id, g, &mut values)?;
            }
        }
    }
    LoadVector::from_vec(values)
}

// ---------------------------------------------------------------------------
// Sources file (JSON)
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BodyForceJson {
    Constant([f64; 3]),
    PerElement(Vec<[f64; 3]>),
}

#[derive(Debug, Deserialize)]
struct SourcesJson {
    #[serde(default)]
    body_force: Option<BodyForceJson>,
    #[serde(default)]
    traction: Option<BTreeMap<String, [f64; 3]>>,
}

/// Body force and traction resolved against a mesh, ready to assemble.
///
/// File schema (`docs/formats.md`): `{"body_force": [fx,fy,fz]}` or a
/// per-element array, and `{"traction": {"<facet-selector>": [gx,gy,gz]}}`
/// with selectors `"all"` or `"<axis>=<value>"`.
#[derive(Debug, Clone)]
pub struct SourceSpec<T: Real> {
    pub body: BodyForce<T>,
    pub traction: Traction<T>,
}

impl<T: Real> SourceSpec<T> {
    pub fn from_json_str(text: &str, mesh: &Mesh<T>) -> Result<Self, AssemblyError> {
        let parsed: SourcesJson = serde_json::from_str(text)?;
        let body = match parsed.body_force {
            None => BodyForce::Constant(Vector3::zeros()),
            Some(BodyForceJson::Constant(f)) => {
                BodyForce::Constant(Vector3::new(T::cast(f[0]), T::cast(f[1]), T::cast(f[2])))
            }
            Some(BodyForceJson::PerElement(list)) => BodyForce::PerElement(
                list.iter()
                    .map(|f| Vector3::new(T::cast(f[0]), T::cast(f[1]), T::cast(f[2])))
                    .collect(),
            ),
        };
        let mut per_facet: BTreeMap<usize, Vector3<T>> = BTreeMap::new();
        if let Some(traction) = parsed.traction {
            for (selector, g) in traction {
                let g = Vector3::new(T::cast(g[0]), T::cast(g[1]), T::cast(g[2]));
                for facet in mesh.select_facets(&selector)? {
                    let entry = per_facet.entry(facet).or_insert_with(Vector3::zeros);
                    *entry += g;
                }
            }
        }
        Ok(Self {
            body,
            traction: Traction::PerFacet(per_facet.into_iter().collect()),
        })
    }

    pub fn load(path: &Path, mesh: &Mesh<T>) -> Result<Self, AssemblyError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text, mesh)
    }

    /// Assembles the body and traction load vectors on the given dof map.
    pub fn assemble(
        &self,
        mesh: &Mesh<T>,
        dofmap: &DofMap,
    ) -> Result<(LoadVector<T>, LoadVector<T>), AssemblyError> {
        let body = assemble_body_load(mesh, dofmap, &self.body)?;
        let trac = assemble_traction_load(mesh, dofmap, &self.traction)?;
        Ok((body, trac))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::ElasticTensor;
    use crate::mesh::{generate_box, BoxPlane};
    use nalgebra::Point3;

    fn single_tet_mesh() -> Mesh<f64> {
        let nodes = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let tets = vec![crate::mesh::Tet {
            nodes: [0, 1, 2, 3],
            region: 0,
        }];
        let facets = vec![
            crate::mesh::Facet {
                nodes: [0, 2, 3],
                kind: BoundaryKind::Dirichlet,
            },
            crate::mesh::Facet {
                nodes: [0, 1, 2],
                kind: BoundaryKind::Neumann,
            },
            crate::mesh::Facet {
                nodes: [0, 1, 3],
                kind: BoundaryKind::Neumann,
            },
            crate::mesh::Facet {
                nodes: [1, 2, 3],
                kind: BoundaryKind::Neumann,
            },
        ];
        Mesh::new(nodes, tets, facets).unwrap()
    }

    #[test]
    fn dofmap_unit_cube() {
        let mesh = generate_box::<f64>(1, 1, 1, 1.0, 1.0, 1.0, &[BoxPlane::XMin]).unwrap();
        let dofmap = DofMap::build(&mesh);
        assert_eq!(dofmap.constrained_count(), 4);
        assert_eq!(dofmap.free_count(), 12);
        // Constrained nodes are exactly the Dirichlet-facet nodes.
        for node in 0..mesh.num_nodes() {
            let on_dirichlet = mesh
                .facets()
                .iter()
                .any(|f| f.kind == BoundaryKind::Dirichlet && f.nodes.contains(&node));
            assert_eq!(dofmap.is_constrained(node), on_dirichlet);
        }
    }

    #[test]
    fn dofmap_all_boundary_dirichlet() {
        let planes = [
            BoxPlane::XMin,
            BoxPlane::XMax,
            BoxPlane::YMin,
            BoxPlane::YMax,
            BoxPlane::ZMin,
            BoxPlane::ZMax,
        ];
        let mesh = generate_box::<f64>(2, 2, 2, 1.0, 1.0, 1.0, &planes).unwrap();
        let dofmap = DofMap::build(&mesh);
        // 27 nodes, 26 on the boundary, one interior node.
        assert_eq!(dofmap.free_count(), 3);
    }

    #[test]
    fn dofmap_single_tet() {
        let mesh = single_tet_mesh();
        let dofmap = DofMap::build(&mesh);
        assert_eq!(dofmap.constrained_count(), 3);
        assert_eq!(dofmap.free_count(), 3);
    }

    #[test]
    fn stiffness_kernel_contains_rigid_motions() {
        let mesh = single_tet_mesh();
        let dofmap = DofMap::all_free(mesh.num_nodes());
        let c = ElasticTensor::isotropic(1.0, 1.0).unwrap();
        let material = MaterialField::uniform(c, 1.0, 1).unwrap();
        let k = assemble_stiffness(&mesh, &material, &dofmap).unwrap();

        // Translations.
        for comp in 0..3 {
            let mut u = vec![0.0; dofmap.free_count()];
            for node in 0..mesh.num_nodes() {
                if let NodeDofs::Free(ids) = dofmap.node(node) {
                    u[ids[comp]] = 1.0;
                }
            }
            let r = k.matvec(&u);
            let max = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(max <= 1e-12, "translation residual {max}");
        }

        // Infinitesimal rotation u = w x x.
        let w = Vector3::new(0.3, -1.0, 0.7);
        let mut u = vec![0.0; dofmap.free_count()];
        for node in 0..mesh.num_nodes() {
            if let NodeDofs::Free(ids) = dofmap.node(node) {
                let x = mesh.node(node).coords;
                let v = w.cross(&x);
                for c in 0..3 {
                    u[ids[c]] = v[c];
                }
            }
        }
        let r = k.matvec(&u);
        let max = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(max <= 1e-12, "rotation residual {max}");
    }

    #[test]
    fn stiffness_is_exactly_symmetric() {
        let mesh = generate_box::<f64>(2, 2, 2, 1.0, 1.0, 1.0, &[BoxPlane::XMin]).unwrap();
        let dofmap = DofMap::build(&mesh);
        let c = ElasticTensor::isotropic(2.0, 0.7).unwrap();
        let material = MaterialField::uniform(c, 1.3, mesh.num_tets()).unwrap();
        let k = assemble_stiffness(&mesh, &material, &dofmap).unwrap();
        let m = assemble_mass(&mesh, &material, &dofmap).unwrap();
        assert!(k.symmetry_defect() <= 1e-12 * k.max_abs());
        assert!(m.symmetry_defect() == 0.0);
    }

    #[test]
    fn mass_single_tet_weights() {
        let mesh = single_tet_mesh();
        let dofmap = DofMap::all_free(4);
        let c = ElasticTensor::isotropic(1.0, 1.0).unwrap();
        let material = MaterialField::uniform(c, 1.0, 1).unwrap();
        let m = assemble_mass(&mesh, &material, &dofmap).unwrap();
        let volume = 1.0 / 6.0;
        assert!((m.get(0, 0) - 2.0 / 20.0 * volume).abs() <= 1e-16);
        assert!((m.get(0, 3) - 1.0 / 20.0 * volume).abs() <= 1e-16);
        assert!((m.get(0, 1) - 0.0).abs() <= 1e-16); // different components uncoupled
    }

    #[test]
    fn mass_partition_of_unity() {
        let mesh = generate_box::<f64>(2, 2, 3, 1.0, 2.0, 1.0, &[BoxPlane::XMin]).unwrap();
        let dofmap = DofMap::all_free(mesh.num_nodes());
        let rho = 1.7;
        let c = ElasticTensor::isotropic(1.0, 1.0).unwrap();
        let material = MaterialField::uniform(c, rho, mesh.num_tets()).unwrap();
        let m = assemble_mass(&mesh, &material, &dofmap).unwrap();
        // 1^T M 1 over the x component equals int rho over the box.
        let mut ones = vec![0.0; dofmap.free_count()];
        for node in 0..mesh.num_nodes() {
            if let NodeDofs::Free(ids) = dofmap.node(node) {
                ones[ids[0]] = 1.0;
            }
        }
        let m1 = m.matvec(&ones);
        let total: f64 = ones.iter().zip(&m1).map(|(a, b)| a * b).sum();
        assert!((total - rho * 2.0).abs() <= 1e-12, "got {total}");
    }

    #[test]
    fn body_load_resultant() {
        let mesh = generate_box::<f64>(2, 2, 2, 1.0, 1.0, 1.0, &[BoxPlane::XMin]).unwrap();
        let dofmap = DofMap::all_free(mesh.num_nodes());
        let f = BodyForce::Constant(Vector3::new(0.0, 0.0, -1.0));
        let load = assemble_body_load(&mesh, &dofmap, &f).unwrap();
        let mut sum_z = 0.0;
        for node in 0..mesh.num_nodes() {
            if let NodeDofs::Free(ids) = dofmap.node(node) {
                sum_z += load.as_slice()[ids[2]];
            }
        }
        assert!((sum_z + 1.0).abs() <= 1e-12, "sum {sum_z}");

        let zero =
            assemble_body_load(&mesh, &dofmap, &BodyForce::Constant(Vector3::zeros())).unwrap();
        assert!(zero.norm() == 0.0);

        let per_element =
            BodyForce::PerElement(vec![Vector3::new(0.0, 0.0, -1.0); mesh.num_tets()]);
        let load2 = assemble_body_load(&mesh, &dofmap, &per_element).unwrap();
        assert_eq!(load.as_slice(), load2.as_slice());
    }

    #[test]
    fn traction_resultant_and_errors() {
        let mesh = single_tet_mesh();
        let dofmap = DofMap::all_free(4);
        // Neumann area: three faces, 0.5 each plus the slanted face.
        let g = Traction::Constant(Vector3::new(1.0, 0.0, 0.0));
        let load = assemble_traction_load(&mesh, &dofmap, &g).unwrap();
        let area: f64 = (0..mesh.num_facets())
            .filter(|&i| mesh.facet(i).kind == BoundaryKind::Neumann)
            .map(|i| mesh.facet_geometry(i).unwrap().area)
            .sum();
        let mut sum_x = 0.0;
        for node in 0..mesh.num_nodes() {
            if let NodeDofs::Free(ids) = dofmap.node(node) {
                sum_x += load.as_slice()[ids[0]];
            }
        }
        assert!((sum_x - area).abs() <= 1e-12);

        // Facet 0 is Dirichlet.
        let bad = Traction::PerFacet(vec![(0, Vector3::new(1.0, 0.0, 0.0))]);
        assert!(matches!(
            assemble_traction_load(&mesh, &dofmap, &bad),
            Err(AssemblyError::TractionOnDirichlet { facet: 0 })
        ));

        let zero =
            assemble_traction_load(&mesh, &dofmap, &Traction::Constant(Vector3::zeros())).unwrap();
        assert!(zero.norm() == 0.0);
    }

    #[test]
    fn sources_json_resolves_selectors() {
        let mesh = generate_box::<f64>(2, 2, 2, 1.0, 1.0, 1.0, &[BoxPlane::XMin]).unwrap();
        let dofmap = DofMap::build(&mesh);
        let text = r#"{
            "body_force": [0.0, 0.0, -9.81],
            "traction": {"x=1": [1.0, 0.0, 0.0]}
        }"#;
        let spec = SourceSpec::from_json_str(text, &mesh).unwrap();
        let (body, trac) = spec.assemble(&mesh, &dofmap).unwrap();
        assert!(body.norm() > 0.0);
        // Tip face area is 1; resultant x-force must be 1 (no tip node is
        // constrained).
        let mut sum_x = 0.0;
        for node in 0..mesh.num_nodes() {
            if let NodeDofs::Free(ids) = dofmap.node(node) {
                sum_x += trac.as_slice()[ids[0]];
            }
        }
        assert!((sum_x - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn symsparse_linear_comb_merges_patterns() {
        let a = SymSparse::from_triplets(3, vec![(0, 0, 2.0), (1, 2, 1.0), (2, 1, 1.0)]);
        let b = SymSparse::from_diag(&[1.0, 1.0, 1.0]);
        let c = a.linear_comb(1.0, &b, -0.5);
        assert_eq!(c.get(0, 0), 1.5);
        assert_eq!(c.get(1, 2), 1.0);
        assert_eq!(c.get(1, 1), -0.5);
        assert_eq!(c.get(2, 2), -0.5);
    }
}
