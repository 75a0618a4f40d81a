//! Tetrahedral volume meshes with labeled boundary patches.
//!
//! A [`Mesh`] is immutable once built. Construction validates orientation,
//! index ranges and boundary watertightness, and fills the geometry caches
//! (element volumes, element length scales, facet areas and outward normals)
//! that assembly and postprocessing read.

mod generate;
mod gmsh;
mod junction;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use generate::{generate_box, generate_tube, tube_counts, TubeCounts};
pub use gmsh::{default_label_map, load_gmsh, parse_gmsh, write_gmsh};
pub use junction::{generate_junction, JunctionParams};

pub type Vec3 = Vector3<f64>;

/// Elements whose volume is below this threshold (m³) are rejected as degenerate.
pub const DEGENERATE_VOLUME: f64 = 1e-18;

/// Local face table: face `k` is opposite to local vertex `k`.
pub(crate) const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PatchLabel {
    PA,
    DA,
    FV,
    WALL,
}

impl PatchLabel {
    pub const ALL: [PatchLabel; 4] = [PatchLabel::PA, PatchLabel::DA, PatchLabel::FV, PatchLabel::WALL];

    pub fn as_str(self) -> &'static str {
        match self {
            PatchLabel::PA => "PA",
            PatchLabel::DA => "DA",
            PatchLabel::FV => "FV",
            PatchLabel::WALL => "WALL",
        }
    }
}

impl fmt::Display for PatchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PatchLabel {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PA" => Ok(PatchLabel::PA),
            "DA" => Ok(PatchLabel::DA),
            "FV" => Ok(PatchLabel::FV),
            "WALL" => Ok(PatchLabel::WALL),
            _ => Err(MeshError::UnknownLabel(s.to_string())),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown physical name `{0}`")]
    UnknownPhysicalName(String),
    #[error("unknown patch label `{0}`")]
    UnknownLabel(String),
    #[error("element {element} references node {node} but the mesh has {n_nodes} nodes")]
    NodeOutOfRange { element: usize, node: usize, n_nodes: usize },
    #[error("element {element} is degenerate (volume {volume:e} m^3)")]
    Degenerate { element: usize, volume: f64 },
    #[error("element {element} is inverted (signed volume {volume:e} m^3)")]
    Inverted { element: usize, volume: f64 },
    #[error("boundary is not watertight: {0}")]
    NotWatertight(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mesh has no elements")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A triangle on the domain boundary. Node order is counter-clockwise seen
/// from outside, so `normal` points out of the owning tetrahedron.
#[derive(Debug, Clone)]
pub struct BoundaryFacet {
    pub nodes: [usize; 3],
    pub label: PatchLabel,
    pub tet: usize,
    pub area: f64,
    pub normal: Vec3,
}

impl BoundaryFacet {
    pub fn centroid(&self, mesh: &Mesh) -> Vec3 {
        (mesh.nodes[self.nodes[0]] + mesh.nodes[self.nodes[1]] + mesh.nodes[self.nodes[2]]) / 3.0
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    facets: Vec<BoundaryFacet>,
    tet_volume: Vec<f64>,
    tet_length: Vec<f64>,
}

pub fn signed_volume(p: [&Vec3; 4]) -> f64 {
    (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])) / 6.0
}

/// Equal-volume length scale normalized so a regular tetrahedron of edge `a`
/// gives exactly `a`.
pub fn characteristic_length(volume: f64) -> f64 {
    (12.0 * volume / std::f64::consts::SQRT_2).cbrt()
}

fn face_key(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

impl Mesh {
    /// Builds a mesh from explicitly labeled boundary triangles.
    ///
    /// Every triangle must be a face of exactly one tetrahedron, and every such
    /// face must be listed exactly once. Triangle orientation in the input is
    /// irrelevant; it is reset to point outward.
    pub fn new(
        nodes: Vec<Vec3>,
        tets: Vec<[usize; 4]>,
        facets: Vec<([usize; 3], PatchLabel)>,
    ) -> Result<Self, MeshError> {
        let (tet_volume, tet_length) = check_tets(&nodes, &tets)?;
        let boundary = boundary_faces(&tets)?;

        let mut seen: HashMap<[usize; 3], usize> = HashMap::with_capacity(facets.len());
        let mut out = Vec::with_capacity(facets.len());
        for (i, (tri, label)) in facets.into_iter().enumerate() {
            for &n in &tri {
                if n >= nodes.len() {
                    return Err(MeshError::NodeOutOfRange { element: i, node: n, n_nodes: nodes.len() });
                }
            }
            let key = face_key(tri);
            let Some(&(tet, local)) = boundary.get(&key) else {
                return Err(MeshError::NotWatertight(format!(
                    "boundary triangle {i} ({:?}) is not a free face of any element",
                    tri
                )));
            };
            if seen.insert(key, i).is_some() {
                return Err(MeshError::NotWatertight(format!("boundary triangle {i} ({:?}) is listed twice", tri)));
            }
            out.push(make_facet(&nodes, &tets[tet], tet, local, label));
        }
        if seen.len() != boundary.len() {
            let missing = boundary.keys().find(|k| !seen.contains_key(*k)).copied();
            return Err(MeshError::NotWatertight(format!(
                "{} free element faces carry no boundary label (e.g. {:?})",
                boundary.len() - seen.len(),
                missing.unwrap_or_default()
            )));
        }
        Ok(Mesh { nodes, tets, facets: out, tet_volume, tet_length })
    }

    /// Builds a mesh whose boundary faces are found automatically and labeled
    /// by `labeler(centroid, outward_normal, face_nodes)`.
    pub fn with_labeler<F>(nodes: Vec<Vec3>, tets: Vec<[usize; 4]>, mut labeler: F) -> Result<Self, MeshError>
    where
        F: FnMut(&Vec3, &Vec3, [usize; 3]) -> PatchLabel,
    {
        let (tet_volume, tet_length) = check_tets(&nodes, &tets)?;
        let boundary = boundary_faces(&tets)?;
        let mut faces: Vec<([usize; 3], (usize, usize))> = boundary.into_iter().collect();
        // HashMap order is not stable across runs
        faces.sort_unstable_by_key(|(k, _)| *k);
        let mut out = Vec::with_capacity(faces.len());
        for (_, (tet, local)) in faces {
            let mut f = make_facet(&nodes, &tets[tet], tet, local, PatchLabel::WALL);
            let c = f.centroid_of(&nodes);
            f.label = labeler(&c, &f.normal, f.nodes);
            out.push(f);
        }
        Ok(Mesh { nodes, tets, facets: out, tet_volume, tet_length })
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn facets(&self) -> &[BoundaryFacet] {
        &self.facets
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_el(&self) -> usize {
        self.tets.len()
    }

    pub fn tet_volume(&self, e: usize) -> f64 {
        self.tet_volume[e]
    }

    pub fn tet_volumes(&self) -> &[f64] {
        &self.tet_volume
    }

    /// Element length scale h_e, see [`characteristic_length`].
    pub fn characteristic_length(&self, e: usize) -> f64 {
        self.tet_length[e]
    }

    pub fn tet_points(&self, e: usize) -> [&Vec3; 4] {
        let t = &self.tets[e];
        [&self.nodes[t[0]], &self.nodes[t[1]], &self.nodes[t[2]], &self.nodes[t[3]]]
    }

    pub fn total_volume(&self) -> f64 {
        self.tet_volume.iter().sum()
    }

    pub fn facets_with(&self, label: PatchLabel) -> impl Iterator<Item = &BoundaryFacet> {
        self.facets.iter().filter(move |f| f.label == label)
    }

    pub fn has_label(&self, label: PatchLabel) -> bool {
        self.facets.iter().any(|f| f.label == label)
    }

    pub fn patch_area(&self, label: PatchLabel) -> f64 {
        self.facets_with(label).map(|f| f.area).sum()
    }

    /// Sorted, deduplicated node indices touching the patch.
    pub fn patch_nodes(&self, label: PatchLabel) -> Vec<usize> {
        let mut v: Vec<usize> = self.facets_with(label).flat_map(|f| f.nodes).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Volume enclosed by the boundary, from the divergence theorem.
    pub fn enclosed_volume(&self) -> f64 {
        self.facets
            .iter()
            .map(|f| f.centroid(self).dot(&f.normal) * f.area / 3.0)
            .sum()
    }

    /// Gradients of the four P1 shape functions on element `e`.
    pub fn shape_gradients(&self, e: usize) -> [Vec3; 4] {
        shape_gradients(self.tet_points(e))
    }

    /// Returns the mesh with node `i` moved to position `perm[i]`.
    pub fn renumbered(&self, perm: &[usize]) -> Result<Mesh, MeshError> {
        assert_eq!(perm.len(), self.nodes.len());
        let mut nodes = vec![Vec3::zeros(); self.nodes.len()];
        for (old, &new) in perm.iter().enumerate() {
            nodes[new] = self.nodes[old];
        }
        let tets = self.tets.iter().map(|t| t.map(|n| perm[n])).collect();
        let facets = self.facets.iter().map(|f| (f.nodes.map(|n| perm[n]), f.label)).collect();
        Mesh::new(nodes, tets, facets)
    }

    /// Axis-aligned bounding box.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.nodes {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }
}

impl BoundaryFacet {
    fn centroid_of(&self, nodes: &[Vec3]) -> Vec3 {
        (nodes[self.nodes[0]] + nodes[self.nodes[1]] + nodes[self.nodes[2]]) / 3.0
    }
}

pub fn shape_gradients(p: [&Vec3; 4]) -> [Vec3; 4] {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let e3 = p[3] - p[0];
    let det = e1.cross(&e2).dot(&e3);
    let g1 = e2.cross(&e3) / det;
    let g2 = e3.cross(&e1) / det;
    let g3 = e1.cross(&e2) / det;
    [-(g1 + g2 + g3), g1, g2, g3]
}

fn check_tets(nodes: &[Vec3], tets: &[[usize; 4]]) -> Result<(Vec<f64>, Vec<f64>), MeshError> {
    if tets.is_empty() {
        return Err(MeshError::Empty);
    }
    let mut vols = Vec::with_capacity(tets.len());
    for (e, t) in tets.iter().enumerate() {
        for &n in t {
            if n >= nodes.len() {
                return Err(MeshError::NodeOutOfRange { element: e, node: n, n_nodes: nodes.len() });
            }
        }
        let v = signed_volume([&nodes[t[0]], &nodes[t[1]], &nodes[t[2]], &nodes[t[3]]]);
        if v.abs() < DEGENERATE_VOLUME || !v.is_finite() {
            return Err(MeshError::Degenerate { element: e, volume: v });
        }
        if v < 0.0 {
            return Err(MeshError::Inverted { element: e, volume: v });
        }
        vols.push(v);
    }
    let lens = vols.iter().map(|&v| characteristic_length(v)).collect();
    Ok((vols, lens))
}

/// Free faces (shared by exactly one element) keyed by sorted node triple.
fn boundary_faces(tets: &[[usize; 4]]) -> Result<HashMap<[usize; 3], (usize, usize)>, MeshError> {
    let mut count: HashMap<[usize; 3], (u32, usize, usize)> = HashMap::with_capacity(tets.len() * 2);
    for (e, t) in tets.iter().enumerate() {
        for (k, lf) in TET_FACES.iter().enumerate() {
            let key = face_key([t[lf[0]], t[lf[1]], t[lf[2]]]);
            let entry = count.entry(key).or_insert((0, e, k));
            entry.0 += 1;
            if entry.0 > 2 {
                return Err(MeshError::NotWatertight(format!("face {:?} is shared by more than two elements", key)));
            }
        }
    }
    Ok(count
        .into_iter()
        .filter(|(_, (c, _, _))| *c == 1)
        .map(|(k, (_, e, l))| (k, (e, l)))
        .collect())
}

fn make_facet(nodes: &[Vec3], tet: &[usize; 4], e: usize, local: usize, label: PatchLabel) -> BoundaryFacet {
    let lf = TET_FACES[local];
    let mut tri = [tet[lf[0]], tet[lf[1]], tet[lf[2]]];
    let opposite = nodes[tet[local]];
    let (a, b, c) = (nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
    let mut n = (b - a).cross(&(c - a));
    if n.dot(&(a - opposite)) < 0.0 {
        tri.swap(1, 2);
        n = -n;
    }
    let norm = n.norm();
    BoundaryFacet { nodes: tri, label, tet: e, area: 0.5 * norm, normal: n / norm }
}
