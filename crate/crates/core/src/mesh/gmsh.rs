//! Gmsh MSH 2.2 ASCII import and export.
//!
//! Only 4-node tetrahedra (type 4) and 3-node triangles (type 2) are used;
//! points and lines are skipped. Triangles are mapped to patch labels through
//! their physical group name (or the numeric tag when the group is unnamed).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Mesh, MeshError, PatchLabel, Vec3};

const TRIANGLE: u32 = 2;
const TETRAHEDRON: u32 = 4;

/// Maps the physical names `PA`, `DA`, `FV` and `WALL` to their labels.
pub fn default_label_map() -> HashMap<String, PatchLabel> {
    PatchLabel::ALL.iter().map(|l| (l.as_str().to_string(), *l)).collect()
}

pub fn load_gmsh(path: impl AsRef<Path>, labels: &HashMap<String, PatchLabel>) -> Result<Mesh, MeshError> {
    let text = std::fs::read_to_string(path)?;
    parse_gmsh(&text, labels)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, MeshError> {
        loop {
            match self.inner.next() {
                Some((i, l)) => {
                    self.line = i + 1;
                    let t = l.trim();
                    if !t.is_empty() {
                        return Ok(t);
                    }
                }
                None => return Err(self.err("unexpected end of file")),
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> MeshError {
        MeshError::Parse { line: self.line, message: msg.into() }
    }

    fn expect(&mut self, tag: &str) -> Result<(), MeshError> {
        let l = self.next()?;
        if l != tag {
            return Err(self.err(format!("expected `{tag}`, found `{l}`")));
        }
        Ok(())
    }

    fn count(&mut self) -> Result<usize, MeshError> {
        let l = self.next()?;
        l.parse().map_err(|_| self.err(format!("expected a count, found `{l}`")))
    }
}

fn num<T: std::str::FromStr>(lines: &Lines, tok: Option<&str>, what: &str) -> Result<T, MeshError> {
    let tok = tok.ok_or_else(|| lines.err(format!("missing {what}")))?;
    tok.parse().map_err(|_| lines.err(format!("invalid {what} `{tok}`")))
}

pub fn parse_gmsh(text: &str, labels: &HashMap<String, PatchLabel>) -> Result<Mesh, MeshError> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    let mut names: HashMap<(u32, i64), String> = HashMap::new();
    let mut node_index: HashMap<i64, usize> = HashMap::new();
    let mut nodes: Vec<Vec3> = Vec::new();
    let mut tets: Vec<[usize; 4]> = Vec::new();
    let mut tris: Vec<([usize; 3], i64, usize)> = Vec::new();
    let mut have_format = false;

    loop {
        let section = match lines.inner.next() {
            Some((i, l)) => {
                lines.line = i + 1;
                let t = l.trim();
                if t.is_empty() {
                    continue;
                }
                t
            }
            None => break,
        };
        match section {
            "$MeshFormat" => {
                let l = lines.next()?;
                let mut it = l.split_whitespace();
                let version: String = num(&lines, it.next(), "version")?;
                let file_type: u32 = num(&lines, it.next(), "file type")?;
                if !version.starts_with("2.2") {
                    return Err(lines.err(format!("unsupported MSH version {version}, need 2.2")));
                }
                if file_type != 0 {
                    return Err(lines.err("binary MSH files are not supported"));
                }
                lines.expect("$EndMeshFormat")?;
                have_format = true;
            }
            "$PhysicalNames" => {
                let n = lines.count()?;
                for _ in 0..n {
                    let l = lines.next()?;
                    let mut it = l.splitn(3, char::is_whitespace);
                    let dim: u32 = num(&lines, it.next(), "physical dimension")?;
                    let tag: i64 = num(&lines, it.next(), "physical tag")?;
                    let name = it.next().ok_or_else(|| lines.err("missing physical name"))?;
                    names.insert((dim, tag), name.trim().trim_matches('"').to_string());
                }
                lines.expect("$EndPhysicalNames")?;
            }
            "$Nodes" => {
                let n = lines.count()?;
                nodes.reserve(n);
                for _ in 0..n {
                    let l = lines.next()?;
                    let mut it = l.split_whitespace();
                    let id: i64 = num(&lines, it.next(), "node id")?;
                    let x: f64 = num(&lines, it.next(), "x coordinate")?;
                    let y: f64 = num(&lines, it.next(), "y coordinate")?;
                    let z: f64 = num(&lines, it.next(), "z coordinate")?;
                    if node_index.insert(id, nodes.len()).is_some() {
                        return Err(lines.err(format!("duplicate node id {id}")));
                    }
                    nodes.push(Vec3::new(x, y, z));
                }
                lines.expect("$EndNodes")?;
            }
            "$Elements" => {
                let n = lines.count()?;
                for _ in 0..n {
                    let l = lines.next()?;
                    let mut it = l.split_whitespace();
                    let _id: i64 = num(&lines, it.next(), "element id")?;
                    let kind: u32 = num(&lines, it.next(), "element type")?;
                    let ntags: usize = num(&lines, it.next(), "tag count")?;
                    let mut tags = Vec::with_capacity(ntags);
                    for _ in 0..ntags {
                        tags.push(num::<i64>(&lines, it.next(), "tag")?);
                    }
                    let mut conn = |k: usize| -> Result<Vec<usize>, MeshError> {
                        (0..k)
                            .map(|_| {
                                let id: i64 = num(&lines, it.next(), "node reference")?;
                                node_index.get(&id).copied().ok_or_else(|| lines.err(format!("unknown node {id}")))
                            })
                            .collect()
                    };
                    match kind {
                        TETRAHEDRON => {
                            let c = conn(4)?;
                            tets.push([c[0], c[1], c[2], c[3]]);
                        }
                        TRIANGLE => {
                            let c = conn(3)?;
                            let phys = tags.first().copied().unwrap_or(0);
                            tris.push(([c[0], c[1], c[2]], phys, lines.line));
                        }
                        _ => {}
                    }
                }
                lines.expect("$EndElements")?;
            }
            other if other.starts_with('$') => {
                // unknown section, skip to its end marker
                let end = format!("$End{}", &other[1..]);
                while lines.next()? != end {}
            }
            other => return Err(lines.err(format!("unexpected content `{other}`"))),
        }
    }
    if !have_format {
        return Err(MeshError::Parse { line: 1, message: "missing $MeshFormat section".into() });
    }
    let mut facets = Vec::with_capacity(tris.len());
    for (tri, phys, line) in tris {
        let name = names.get(&(2, phys)).cloned().unwrap_or_else(|| phys.to_string());
        let label = labels.get(&name).copied().ok_or_else(|| {
            log::debug!("triangle on line {line} has unmapped physical group");
            MeshError::UnknownPhysicalName(name.clone())
        })?;
        facets.push((tri, label));
    }
    Mesh::new(nodes, tets, facets)
}

fn physical_tag(label: PatchLabel) -> usize {
    label as usize + 1
}

/// Writes `mesh` as MSH 2.2 ASCII with physical groups named after the labels.
pub fn write_gmsh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$PhysicalNames\n5\n");
    for l in PatchLabel::ALL {
        let _ = writeln!(s, "2 {} \"{}\"", physical_tag(l), l.as_str());
    }
    let _ = writeln!(s, "3 5 \"fluid\"\n$EndPhysicalNames\n$Nodes\n{}", mesh.n_nodes());
    for (i, p) in mesh.nodes().iter().enumerate() {
        let _ = writeln!(s, "{} {:?} {:?} {:?}", i + 1, p.x, p.y, p.z);
    }
    let _ = writeln!(s, "$EndNodes\n$Elements\n{}", mesh.facets().len() + mesh.n_el());
    let mut id = 1;
    for f in mesh.facets() {
        let t = physical_tag(f.label);
        let _ = writeln!(s, "{id} 2 2 {t} {t} {} {} {}", f.nodes[0] + 1, f.nodes[1] + 1, f.nodes[2] + 1);
        id += 1;
    }
    for t in mesh.tets() {
        let _ = writeln!(s, "{id} 4 2 5 1 {} {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1, t[3] + 1);
        id += 1;
    }
    s.push_str("$EndElements\n");
    std::fs::write(path, s)?;
    Ok(())
}
