//! Computational domain: nodes, linear tetrahedra, and a boundary fully
//! partitioned into Dirichlet and Neumann facets.
//!
//! Every constructor funnels through [`Mesh::new`], which validates the
//! invariants (positive tet volumes, exact facet/boundary bijection,
//! nonempty Dirichlet set) before the mesh can be used. A mesh is immutable
//! afterwards.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("node index {node} out of range in {context} {index}")]
    NodeOutOfRange {
        node: usize,
        context: &'static str,
        index: usize,
    },
    #[error("tet {index} has non-positive signed volume {volume:e}")]
    InvertedTet { index: usize, volume: f64 },
    #[error("facet {index} is degenerate (zero area)")]
    DegenerateFacet { index: usize },
    #[error("facet {index} is not a boundary face of the tet complex")]
    FacetNotOnBoundary { index: usize },
    #[error("facets {first} and {second} reference the same face")]
    DuplicateFacet { first: usize, second: usize },
    #[error("boundary face ({a},{b},{c}) of tet {tet} is not covered by any facet")]
    UntaggedBoundaryFace {
        a: usize,
        b: usize,
        c: usize,
        tet: usize,
    },
    #[error("the Dirichlet facet set is empty")]
    EmptyDirichlet,
    #[error("facet id {index} out of range ({count} facets)")]
    FacetOutOfRange { index: usize, count: usize },
    #[error("boundary kind {kind:?} unknown in facet {index} (expected \"dir\" or \"neu\")")]
    UnknownBoundaryKind { kind: String, index: usize },
    #[error("box generation needs counts >= 1 and positive lengths")]
    InvalidBoxParameters,
    #[error("failed to read mesh file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse mesh JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("gmsh parse error at line {line}: {message}")]
    Gmsh { line: usize, message: String },
    #[error("gmsh element {element} has unsupported type {element_type} (only 2=triangle, 4=tet)")]
    UnsupportedGmshElement { element: usize, element_type: usize },
    #[error("gmsh triangle physical tag {tag} is in neither the Dirichlet nor the Neumann set")]
    UnassignedGmshTag { tag: usize },
    #[error("no facet matches selector {selector:?}")]
    SelectorEmpty { selector: String },
    #[error("invalid facet selector {selector:?} (expected \"all\" or \"<axis>=<value>\")")]
    SelectorSyntax { selector: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tet {
    pub nodes: [usize; 4],
    pub region: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Facet {
    pub nodes: [usize; 3],
    pub kind: BoundaryKind,
}

/// Area and outward unit normal of a boundary facet.
#[derive(Debug, Clone, Copy)]
pub struct FacetGeometry<T: Real> {
    pub area: T,
    pub normal: Vector3<T>,
}

/// Axis-aligned boundary planes of a generated box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxPlane {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

#[derive(Debug, Clone)]
pub struct Mesh<T: Real> {
    nodes: Vec<Point3<T>>,
    tets: Vec<Tet>,
    facets: Vec<Facet>,
    /// Tet adjacent to each facet, filled in during validation.
    facet_tet: Vec<usize>,
}

fn face_key(a: usize, b: usize, c: usize) -> [usize; 3] {
    let mut k = [a, b, c];
    k.sort_unstable();
    k
}

/// The four faces of a tet, each listed with the index of the opposite node.
const TET_FACES: [([usize; 3], usize); 4] = [
    ([1, 2, 3], 0),
    ([0, 2, 3], 1),
    ([0, 1, 3], 2),
    ([0, 1, 2], 3),
];

impl<T: Real> Mesh<T> {
    /// Validates and freezes a mesh.
    pub fn new(
        nodes: Vec<Point3<T>>,
        tets: Vec<Tet>,
        facets: Vec<Facet>,
    ) -> Result<Self, MeshError> {
        let n = nodes.len();
        for (i, tet) in tets.iter().enumerate() {
            for &node in &tet.nodes {
                if node >= n {
                    return Err(MeshError::NodeOutOfRange {
                        node,
                        context: "tet",
                        index: i,
                    });
                }
            }
        }
        for (i, facet) in facets.iter().enumerate() {
            for &node in &facet.nodes {
                if node >= n {
                    return Err(MeshError::NodeOutOfRange {
                        node,
                        context: "facet",
                        index: i,
                    });
                }
            }
        }

        for (i, tet) in tets.iter().enumerate() {
            let v = signed_volume(&nodes, tet.nodes);
            if !(v > T::zero()) {
                return Err(MeshError::InvertedTet {
                    index: i,
                    volume: v.as_f64(),
                });
            }
        }

        // Boundary faces are the tet faces that occur exactly once.
        let mut face_count: HashMap<[usize; 3], (usize, usize)> = HashMap::new();
        for (t, tet) in tets.iter().enumerate() {
            for (face, _) in TET_FACES {
                let key = face_key(tet.nodes[face[0]], tet.nodes[face[1]], tet.nodes[face[2]]);
                let entry = face_count.entry(key).or_insert((0, t));
                entry.0 += 1;
            }
        }

        let mut facet_of_face: HashMap<[usize; 3], usize> = HashMap::new();
        let mut facet_tet = vec![usize::MAX; facets.len()];
        for (i, facet) in facets.iter().enumerate() {
            let key = face_key(facet.nodes[0], facet.nodes[1], facet.nodes[2]);
            if key[0] == key[1] || key[1] == key[2] {
                return Err(MeshError::DegenerateFacet { index: i });
            }
            match face_count.get(&key) {
                Some(&(1, tet)) => facet_tet[i] = tet,
                _ => return Err(MeshError::FacetNotOnBoundary { index: i }),
            }
            if let Some(&first) = facet_of_face.get(&key) {
                return Err(MeshError::DuplicateFacet { first, second: i });
            }
            facet_of_face.insert(key, i);
        }

        for (t, tet) in tets.iter().enumerate() {
            for (face, _) in TET_FACES {
                let a = tet.nodes[face[0]];
                let b = tet.nodes[face[1]];
                let c = tet.nodes[face[2]];
                let key = face_key(a, b, c);
                if face_count[&key].0 == 1 && !facet_of_face.contains_key(&key) {
                    return Err(MeshError::UntaggedBoundaryFace { a, b, c, tet: t });
                }
            }
        }

        // Geometric degeneracy: zero-area facets.
        for (i, facet) in facets.iter().enumerate() {
            let area = facet_area_normal(&nodes, facet.nodes).0;
            if !(area > T::zero()) {
                return Err(MeshError::DegenerateFacet { index: i });
            }
        }

        if !facets.iter().any(|f| f.kind == BoundaryKind::Dirichlet) {
            return Err(MeshError::EmptyDirichlet);
        }

        Ok(Self {
            nodes,
            tets,
            facets,
            facet_tet,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn node(&self, i: usize) -> Point3<T> {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[Point3<T>] {
        &self.nodes
    }

    pub fn tet(&self, i: usize) -> &Tet {
        &self.tets[i]
    }

    pub fn tets(&self) -> &[Tet] {
        &self.tets
    }

    pub fn facet(&self, i: usize) -> &Facet {
        &self.facets[i]
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    /// Region tag per element, in element order.
    pub fn element_regions(&self) -> Vec<usize> {
        self.tets.iter().map(|t| t.region).collect()
    }

    pub fn tet_volume(&self, i: usize) -> T {
        signed_volume(&self.nodes, self.tets[i].nodes)
    }

    /// Area and outward unit normal of a boundary facet.
    pub fn facet_geometry(&self, facet_id: usize) -> Result<FacetGeometry<T>, MeshError> {
        if facet_id >= self.facets.len() {
            return Err(MeshError::FacetOutOfRange {
                index: facet_id,
                count: self.facets.len(),
            });
        }
        let facet = &self.facets[facet_id];
        let (area, mut normal) = facet_area_normal(&self.nodes, facet.nodes);
        // Orient away from the adjacent tet: the opposite node must sit on
        // the negative side.
        let tet = &self.tets[self.facet_tet[facet_id]];
        let on_facet: Vec<usize> = facet.nodes.to_vec();
        let opposite = tet
            .nodes
            .iter()
            .copied()
            .find(|n| !on_facet.contains(n))
            .expect("facet matches three of the four tet nodes");
        let to_opposite = self.nodes[opposite] - self.nodes[facet.nodes[0]];
        if normal.dot(&to_opposite) > T::zero() {
            normal = -normal;
        }
        Ok(FacetGeometry { area, normal })
    }

    /// Resolves a facet selector against the boundary facets.
    ///
    /// Grammar: `"all"` (every Neumann facet) or `"<axis>=<value>"` with
    /// axis in `x|y|z`, matching facets whose three nodes lie on that plane.
    /// Selecting a Dirichlet facet through a plane selector is legal here;
    /// load assembly rejects tractions on Dirichlet facets.
    pub fn select_facets(&self, selector: &str) -> Result<Vec<usize>, MeshError> {
        let trimmed = selector.trim();
        if trimmed == "all" {
            return Ok((0..self.facets.len())
                .filter(|&i| self.facets[i].kind == BoundaryKind::Neumann)
                .collect());
        }
        let (axis_str, value_str) =
            trimmed
                .split_once('=')
                .ok_or_else(|| MeshError::SelectorSyntax {
                    selector: selector.to_string(),
                })?;
        let axis = match axis_str.trim() {
            "x" => 0,
            "y" => 1,
            "z" => 2,
            _ => {
                return Err(MeshError::SelectorSyntax {
                    selector: selector.to_string(),
                })
            }
        };
        let value: f64 = value_str
            .trim()
            .parse()
            .map_err(|_| MeshError::SelectorSyntax {
                selector: selector.to_string(),
            })?;
        let value = T::cast(value);
        let extent = self
            .nodes
            .iter()
            .fold(T::one(), |acc, p| acc.max(p[axis].abs()));
        let tol = T::cast(1e-9) * extent;
        let matches: Vec<usize> = (0..self.facets.len())
            .filter(|&i| {
                self.facets[i]
                    .nodes
                    .iter()
                    .all(|&n| (self.nodes[n][axis] - value).abs() <= tol)
            })
            .collect();
        if matches.is_empty() {
            return Err(MeshError::SelectorEmpty {
                selector: selector.to_string(),
            });
        }
        Ok(matches)
    }

    /// Canonical JSON form of the mesh (the schema of `load_mesh_json`),
    /// used for fingerprinting and round-tripping.
    pub fn to_canonical_json(&self) -> String {
        let json = MeshJson {
            nodes: self
                .nodes
                .iter()
                .map(|p| [p.x.as_f64(), p.y.as_f64(), p.z.as_f64()])
                .collect(),
            tets: self
                .tets
                .iter()
                .map(|t| TetJson(t.nodes[0], t.nodes[1], t.nodes[2], t.nodes[3], t.region))
                .collect(),
            facets: self
                .facets
                .iter()
                .map(|f| {
                    FacetJson(
                        f.nodes[0],
                        f.nodes[1],
                        f.nodes[2],
                        match f.kind {
                            BoundaryKind::Dirichlet => "dir".to_string(),
                            BoundaryKind::Neumann => "neu".to_string(),
                        },
                    )
                })
                .collect(),
        };
        serde_json::to_string(&json).expect("mesh serialization cannot fail")
    }

    /// SHA-256 of the canonical JSON, hex encoded. Mode containers embed this
    /// to detect mode/mesh mismatches.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_canonical_json().as_bytes());
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}

fn signed_volume<T: Real>(nodes: &[Point3<T>], tet: [usize; 4]) -> T {
    let a = nodes[tet[0]];
    let e1 = nodes[tet[1]] - a;
    let e2 = nodes[tet[2]] - a;
    let e3 = nodes[tet[3]] - a;
    e1.cross(&e2).dot(&e3) / T::cast(6.0)
}

fn facet_area_normal<T: Real>(nodes: &[Point3<T>], facet: [usize; 3]) -> (T, Vector3<T>) {
    let a = nodes[facet[0]];
    let e1 = nodes[facet[1]] - a;
    let e2 = nodes[facet[2]] - a;
    let cross = e1.cross(&e2);
    let two_area = cross.norm();
    let area = two_area / T::cast(2.0);
    let normal = if two_area > T::zero() {
        cross / two_area
    } else {
        Vector3::zeros()
    };
    (area, normal)
}

// ---------------------------------------------------------------------------
// Structured box generation
// ---------------------------------------------------------------------------

/// Kuhn subdivision: each grid cell is split into six positively oriented
/// tets sharing the main diagonal, which keeps neighboring cells conforming.
/// Boundary faces on the planes named by `dirichlet` become Dirichlet
/// facets, all other boundary faces Neumann.
pub fn generate_box<T: Real>(
    nx: usize,
    ny: usize,
    nz: usize,
    lx: T,
    ly: T,
    lz: T,
    dirichlet: &[BoxPlane],
) -> Result<Mesh<T>, MeshError> {
    if nx == 0 || ny == 0 || nz == 0 || !(lx > T::zero() && ly > T::zero() && lz > T::zero()) {
        return Err(MeshError::InvalidBoxParameters);
    }
    let (nnx, nny, nnz) = (nx + 1, ny + 1, nz + 1);
    let node_id = |i: usize, j: usize, k: usize| (i * nny + j) * nnz + k;

    let mut nodes = Vec::with_capacity(nnx * nny * nnz);
    for i in 0..nnx {
        for j in 0..nny {
            for k in 0..nnz {
                nodes.push(Point3::new(
                    lx * T::cast(i as f64 / nx as f64),
                    ly * T::cast(j as f64 / ny as f64),
                    lz * T::cast(k as f64 / nz as f64),
                ));
            }
        }
    }

    const PERMS: [([usize; 3], bool); 6] = [
        ([0, 1, 2], true),
        ([0, 2, 1], false),
        ([1, 0, 2], false),
        ([1, 2, 0], true),
        ([2, 0, 1], true),
        ([2, 1, 0], false),
    ];

    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let base = [i, j, k];
                for (perm, even) in PERMS {
                    let mut p1 = base;
                    p1[perm[0]] += 1;
                    let mut p2 = p1;
                    p2[perm[1]] += 1;
                    let p3 = [i + 1, j + 1, k + 1];
                    let mut quad = [
                        node_id(base[0], base[1], base[2]),
                        node_id(p1[0], p1[1], p1[2]),
                        node_id(p2[0], p2[1], p2[2]),
                        node_id(p3[0], p3[1], p3[2]),
                    ];
                    if !even {
                        quad.swap(2, 3);
                    }
                    tets.push(Tet {
                        nodes: quad,
                        region: 0,
                    });
                }
            }
        }
    }

    // Boundary faces occur on exactly one tet; classify them by the grid
    // plane all three nodes share.
    let grid_of = |node: usize| {
        let k = node % nnz;
        let j = (node / nnz) % nny;
        let i = node / (nnz * nny);
        [i, j, k]
    };
    let mut face_count: HashMap<[usize; 3], usize> = HashMap::new();
    for tet in &tets {
        for (face, _) in TET_FACES {
            let key = face_key(tet.nodes[face[0]], tet.nodes[face[1]], tet.nodes[face[2]]);
            *face_count.entry(key).or_insert(0) += 1;
        }
    }
    let mut boundary_faces: Vec<[usize; 3]> = face_count
        .iter()
        .filter(|(_, &count)| count == 1)
        .map(|(&key, _)| key)
        .collect();
    boundary_faces.sort_unstable();

    let plane_of_face = |face: &[usize; 3]| -> BoxPlane {
        let grids: Vec<[usize; 3]> = face.iter().map(|&n| grid_of(n)).collect();
        for (axis, low, high, pmin, pmax) in [
            (0, 0, nx, BoxPlane::XMin, BoxPlane::XMax),
            (1, 0, ny, BoxPlane::YMin, BoxPlane::YMax),
            (2, 0, nz, BoxPlane::ZMin, BoxPlane::ZMax),
        ] {
            if grids.iter().all(|g| g[axis] == low) {
                return pmin;
            }
            if grids.iter().all(|g| g[axis] == high) {
                return pmax;
            }
        }
        unreachable!("boundary face of a box lies on an axis plane")
    };

    let facets = boundary_faces
        .iter()
        .map(|face| {
            let kind = if dirichlet.contains(&plane_of_face(face)) {
                BoundaryKind::Dirichlet
            } else {
                BoundaryKind::Neumann
            };
            Facet { nodes: *face, kind }
        })
        .collect();

    Mesh::new(nodes, tets, facets)
}

// ---------------------------------------------------------------------------
// Mesh JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TetJson(usize, usize, usize, usize, usize);

#[derive(Serialize, Deserialize)]
struct FacetJson(usize, usize, usize, String);

#[derive(Serialize, Deserialize)]
struct MeshJson {
    nodes: Vec<[f64; 3]>,
    tets: Vec<TetJson>,
    facets: Vec<FacetJson>,
}

/// Loads the documented mesh JSON schema:
/// `{"nodes": [[x,y,z],..], "tets": [[a,b,c,d,region],..],
///   "facets": [[a,b,c,"dir"|"neu"],..]}`, 0-based indices.
pub fn load_mesh_json<T: Real>(path: &Path) -> Result<Mesh<T>, MeshError> {
    let text = std::fs::read_to_string(path)?;
    mesh_from_json_str(&text)
}

pub fn mesh_from_json_str<T: Real>(text: &str) -> Result<Mesh<T>, MeshError> {
    let parsed: MeshJson = serde_json::from_str(text)?;
    let nodes = parsed
        .nodes
        .iter()
        .map(|p| Point3::new(T::cast(p[0]), T::cast(p[1]), T::cast(p[2])))
        .collect();
    let tets = parsed
        .tets
        .iter()
        .map(|t| Tet {
            nodes: [t.0, t.1, t.2, t.3],
            region: t.4,
        })
        .collect();
    let facets = parsed
        .facets
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let kind = match f.3.as_str() {
                "dir" => BoundaryKind::Dirichlet,
                "neu" => BoundaryKind::Neumann,
                other => {
                    return Err(MeshError::UnknownBoundaryKind {
                        kind: other.to_string(),
                        index: i,
                    })
                }
            };
            Ok(Facet {
                nodes: [f.0, f.1, f.2],
                kind,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Mesh::new(nodes, tets, facets)
}

// ---------------------------------------------------------------------------
// Gmsh MSH 2.2 ASCII subset
// ---------------------------------------------------------------------------

/// Loads an ASCII Gmsh MSH v2.2 file containing only 4-node tetrahedra and
/// 3-node triangles. Triangles carry the boundary tags: their first physical
/// tag must be listed in `dirichlet_tags` or `neumann_tags`. Any other
/// element type is rejected.
pub fn load_gmsh_msh2<T: Real>(
    path: &Path,
    dirichlet_tags: &[usize],
    neumann_tags: &[usize],
) -> Result<Mesh<T>, MeshError> {
    let text = std::fs::read_to_string(path)?;
    gmsh_from_str(&text, dirichlet_tags, neumann_tags)
}

pub fn gmsh_from_str<T: Real>(
    text: &str,
    dirichlet_tags: &[usize],
    neumann_tags: &[usize],
) -> Result<Mesh<T>, MeshError> {
    let err = |line: usize, message: &str| MeshError::Gmsh {
        line,
        message: message.to_string(),
    };
    let lines: Vec<&str> = text.lines().collect();
    let mut pos = 0usize;
    let mut nodes: Vec<Point3<T>> = Vec::new();
    let mut node_index: HashMap<usize, usize> = HashMap::new();
    let mut tets: Vec<Tet> = Vec::new();
    let mut facets: Vec<Facet> = Vec::new();
    let mut seen_format = false;

    while pos < lines.len() {
        let line = lines[pos].trim();
        match line {
            "$MeshFormat" => {
                let header = lines
                    .get(pos + 1)
                    .ok_or_else(|| err(pos + 2, "truncated $MeshFormat"))?;
                let mut parts = header.split_whitespace();
                let version = parts.next().unwrap_or("");
                let file_type = parts.next().unwrap_or("");
                if !version.starts_with("2.2") {
                    return Err(err(
                        pos + 2,
                        &format!("unsupported MSH version {version}, need 2.2"),
                    ));
                }
                if file_type != "0" {
                    return Err(err(pos + 2, "binary MSH files are not supported"));
                }
                seen_format = true;
                pos += 2;
                while pos < lines.len() && lines[pos].trim() != "$EndMeshFormat" {
                    pos += 1;
                }
                pos += 1;
            }
            "$Nodes" => {
                let count: usize = lines
                    .get(pos + 1)
                    .and_then(|l| l.trim().parse().ok())
                    .ok_or_else(|| err(pos + 2, "bad node count"))?;
                for k in 0..count {
                    let l = lines
                        .get(pos + 2 + k)
                        .ok_or_else(|| err(pos + 2 + k + 1, "truncated $Nodes"))?;
                    let mut parts = l.split_whitespace();
                    let id: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(pos + 3 + k, "bad node id"))?;
                    let coords: Vec<f64> = parts
                        .map(|s| s.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| err(pos + 3 + k, "bad node coordinates"))?;
                    if coords.len() != 3 {
                        return Err(err(pos + 3 + k, "node needs 3 coordinates"));
                    }
                    node_index.insert(id, nodes.len());
                    nodes.push(Point3::new(
                        T::cast(coords[0]),
                        T::cast(coords[1]),
                        T::cast(coords[2]),
                    ));
                }
                pos += 2 + count;
                if lines.get(pos).map(|l| l.trim()) != Some("$EndNodes") {
                    return Err(err(pos + 1, "missing $EndNodes"));
                }
                pos += 1;
            }
            "$Elements" => {
                let count: usize = lines
                    .get(pos + 1)
                    .and_then(|l| l.trim().parse().ok())
                    .ok_or_else(|| err(pos + 2, "bad element count"))?;
                for k in 0..count {
                    let l = lines
                        .get(pos + 2 + k)
                        .ok_or_else(|| err(pos + 3 + k, "truncated $Elements"))?;
                    let fields: Vec<usize> = l
                        .split_whitespace()
                        .map(|s| s.parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| err(pos + 3 + k, "bad element record"))?;
                    if fields.len() < 3 {
                        return Err(err(pos + 3 + k, "element record too short"));
                    }
                    let element = fields[0];
                    let element_type = fields[1];
                    let ntags = fields[2];
                    let tag = if ntags >= 1 { fields[3] } else { 0 };
                    let conn = &fields[3 + ntags..];
                    let map_node = |id: usize| {
                        node_index.get(&id).copied().ok_or_else(|| {
                            err(
                                pos + 3 + k,
                                &format!("element references unknown node {id}"),
                            )
                        })
                    };
                    match element_type {
                        2 => {
                            if conn.len() != 3 {
                                return Err(err(pos + 3 + k, "triangle needs 3 nodes"));
                            }
                            let kind = if dirichlet_tags.contains(&tag) {
                                BoundaryKind::Dirichlet
                            } else if neumann_tags.contains(&tag) {
                                BoundaryKind::Neumann
                            } else {
                                return Err(MeshError::UnassignedGmshTag { tag });
                            };
                            facets.push(Facet {
                                nodes: [map_node(conn[0])?, map_node(conn[1])?, map_node(conn[2])?],
                                kind,
                            });
                        }
                        4 => {
                            if conn.len() != 4 {
                                return Err(err(pos + 3 + k, "tet needs 4 nodes"));
                            }
                            tets.push(Tet {
                                nodes: [
                                    map_node(conn[0])?,
                                    map_node(conn[1])?,
                                    map_node(conn[2])?,
                                    map_node(conn[3])?,
                                ],
                                region: tag,
                            });
                        }
                        other => {
                            return Err(MeshError::UnsupportedGmshElement {
                                element,
                                element_type: other,
                            })
                        }
                    }
                }
                pos += 2 + count;
                if lines.get(pos).map(|l| l.trim()) != Some("$EndElements") {
                    return Err(err(pos + 1, "missing $EndElements"));
                }
                pos += 1;
            }
            "" => pos += 1,
            section if section.starts_with('$') && !section.starts_with("$End") => {
                // Skip unknown sections ($PhysicalNames etc.) to their end.
                let end = format!("$End{}", &section[1..]);
                pos += 1;
                while pos < lines.len() && lines[pos].trim() != end {
                    pos += 1;
                }
                pos += 1;
            }
            _ => pos += 1,
        }
    }

    if !seen_format {
        return Err(err(1, "missing $MeshFormat section"));
    }
    Mesh::new(nodes, tets, facets)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn single_tet() -> Mesh<f64> {
        // Reference tet with the x=0 face clamped.
        let nodes = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let tets = vec![Tet {
            nodes: [0, 1, 2, 3],
            region: 0,
        }];
        let facets = vec![
            Facet {
                nodes: [0, 2, 3],
                kind: BoundaryKind::Dirichlet,
            },
            Facet {
                nodes: [0, 1, 2],
                kind: BoundaryKind::Neumann,
            },
            Facet {
                nodes: [0, 1, 3],
                kind: BoundaryKind::Neumann,
            },
            Facet {
                nodes: [1, 2, 3],
                kind: BoundaryKind::Neumann,
            },
        ];
        Mesh::new(nodes, tets, facets).unwrap()
    }

    #[test]
    fn unit_cube_combinatorics() {
        let mesh = generate_box::<f64>(1, 1, 1, 1.0, 1.0, 1.0, &[BoxPlane::XMin]).unwrap();
        assert_eq!(mesh.num_nodes(), 8);
        assert_eq!(mesh.num_tets(), 6);
        assert_eq!(mesh.num_facets(), 12);
        let dir = mesh
            .facets()
            .iter()
            .filter(|f| f.kind == BoundaryKind::Dirichlet)
            .count();
        assert_eq!(dir, 2);
    }

    #[test]
    fn box_volume_partition() {
        let mesh = generate_box::<f64>(3, 4, 5, 2.0, 1.0, 1.0, &[BoxPlane::XMin]).unwrap();
        let total: f64 = (0..mesh.num_tets()).map(|i| mesh.tet_volume(i)).sum();
        assert!((total - 2.0).abs() <= 1e-12, "total volume {total}");
    }

    #[test]
    fn box_with_no_dirichlet_planes_is_rejected() {
        assert!(matches!(
            generate_box::<f64>(2, 2, 2, 1.0, 1.0, 1.0, &[]),
            Err(MeshError::EmptyDirichlet)
        ));
    }

    #[test]
    fn box_rejects_zero_counts_and_lengths() {
        assert!(matches!(
            generate_box::<f64>(0, 1, 1, 1.0, 1.0, 1.0, &[BoxPlane::XMin]),
            Err(MeshError::InvalidBoxParameters)
        ));
        assert!(matches!(
            generate_box::<f64>(1, 1, 1, 1.0, 0.0, 1.0, &[BoxPlane::XMin]),
            Err(MeshError::InvalidBoxParameters)
        ));
    }

    #[test]
    fn facet_geometry_unit_right_triangle() {
        let mesh = single_tet();
        // Facet 1 is the z=0 face; the opposite node is above it.
        let geo = mesh.facet_geometry(1).unwrap();
        assert!((geo.area - 0.5).abs() <= 1e-15);
        assert!((geo.normal - Vector3::new(0.0, 0.0, -1.0)).norm() <= 1e-14);
        assert!((geo.normal.norm() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn closed_surface_identity() {
        let mesh = generate_box::<f64>(2, 3, 2, 1.5, 1.0, 0.5, &[BoxPlane::ZMin]).unwrap();
        let mut sum = Vector3::zeros();
        let mut total_area = 0.0;
        for i in 0..mesh.num_facets() {
            let geo = mesh.facet_geometry(i).unwrap();
            sum += geo.normal * geo.area;
            total_area += geo.area;
        }
        assert!(sum.norm() <= 1e-12 * total_area, "residual {}", sum.norm());
    }

    #[test]
    fn json_round_trip_single_tet() {
        let text = r#"{
            "nodes": [[0,0,0],[1,0,0],[0,1,0],[0,0,1]],
            "tets": [[0,1,2,3,0]],
            "facets": [[0,2,3,"dir"],[0,1,2,"neu"],[0,1,3,"neu"],[1,2,3,"neu"]]
        }"#;
        let mesh = mesh_from_json_str::<f64>(text).unwrap();
        assert_eq!(mesh.num_nodes(), 4);
        let back = mesh_from_json_str::<f64>(&mesh.to_canonical_json()).unwrap();
        assert_eq!(back.fingerprint(), mesh.fingerprint());
    }

    #[test]
    fn json_reports_inverted_tet() {
        let text = r#"{
            "nodes": [[0,0,0],[1,0,0],[0,1,0],[0,0,1]],
            "tets": [[0,2,1,3,0]],
            "facets": [[0,2,3,"dir"],[0,1,2,"neu"],[0,1,3,"neu"],[1,2,3,"neu"]]
        }"#;
        assert!(matches!(
            mesh_from_json_str::<f64>(text),
            Err(MeshError::InvertedTet { index: 0, .. })
        ));
    }

    #[test]
    fn json_reports_untagged_boundary_face() {
        let text = r#"{
            "nodes": [[0,0,0],[1,0,0],[0,1,0],[0,0,1]],
            "tets": [[0,1,2,3,0]],
            "facets": [[0,2,3,"dir"],[0,1,2,"neu"],[0,1,3,"neu"]]
        }"#;
        assert!(matches!(
            mesh_from_json_str::<f64>(text),
            Err(MeshError::UntaggedBoundaryFace { .. })
        ));
    }

    #[test]
    fn json_rejects_unknown_boundary_kind() {
        let text = r#"{
            "nodes": [[0,0,0],[1,0,0],[0,1,0],[0,0,1]],
            "tets": [[0,1,2,3,0]],
            "facets": [[0,2,3,"robin"],[0,1,2,"neu"],[0,1,3,"neu"],[1,2,3,"neu"]]
        }"#;
        assert!(matches!(
            mesh_from_json_str::<f64>(text),
            Err(MeshError::UnknownBoundaryKind { .. })
        ));
    }

    const GMSH_TET: &str = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n$Elements\n5\n1 4 2 0 1 1 2 3 4\n2 2 2 1 1 1 3 4\n3 2 2 2 2 1 2 3\n4 2 2 2 2 1 2 4\n5 2 2 2 2 2 3 4\n$EndElements\n";

    #[test]
    fn gmsh_load_single_tet() {
        let mesh = gmsh_from_str::<f64>(GMSH_TET, &[1], &[2]).unwrap();
        assert_eq!(mesh.num_nodes(), 4);
        assert_eq!(mesh.num_tets(), 1);
        assert_eq!(mesh.num_facets(), 4);
        assert_eq!(
            mesh.facets()
                .iter()
                .filter(|f| f.kind == BoundaryKind::Dirichlet)
                .count(),
            1
        );
    }

    #[test]
    fn gmsh_rejects_unsupported_element_type() {
        // Element type 11 = quadratic tet.
        let text = GMSH_TET.replace("1 4 2 0 1 1 2 3 4", "1 11 2 0 1 1 2 3 4");
        assert!(matches!(
            gmsh_from_str::<f64>(&text, &[1], &[2]),
            Err(MeshError::UnsupportedGmshElement {
                element_type: 11,
                ..
            })
        ));
    }

    #[test]
    fn gmsh_rejects_unassigned_tag() {
        assert!(matches!(
            gmsh_from_str::<f64>(GMSH_TET, &[1], &[]),
            Err(MeshError::UnassignedGmshTag { tag: 2 })
        ));
    }

    #[test]
    fn repeated_node_facet_is_degenerate() {
        let mesh = single_tet();
        let mut facets = mesh.facets().to_vec();
        facets[1].nodes = [0, 0, 2];
        assert!(matches!(
            Mesh::new(mesh.nodes().to_vec(), mesh.tets().to_vec(), facets),
            Err(MeshError::DegenerateFacet { index: 1 })
        ));
    }

    #[test]
    fn selector_matches_plane() {
        let mesh = generate_box::<f64>(2, 2, 2, 1.0, 1.0, 1.0, &[BoxPlane::XMin]).unwrap();
        let tip = mesh.select_facets("x=1").unwrap();
        assert_eq!(tip.len(), 8);
        assert!(mesh.select_facets("w=1").is_err());
        assert!(matches!(
            mesh.select_facets("x=7"),
            Err(MeshError::SelectorEmpty { .. })
        ));
        let all = mesh.select_facets("all").unwrap();
        assert_eq!(all.len(), 40); // 48 boundary triangles minus 8 Dirichlet
    }
}
