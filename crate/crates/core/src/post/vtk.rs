//! Legacy VTK ASCII output and a reader for the same subset.
//!
//! The volume file holds the tetrahedra (cell type 10) with point data
//! `velocity` and `pressure`. When wall shear is supplied a companion
//! `<stem>_wall.vtk` holds the WALL triangles (cell type 5) with cell data
//! `wss_magnitude` and `wss`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{PostError, WallShearField};
use crate::fem::SimulationState;
use crate::mesh::{Mesh, PatchLabel};

const TETRA: u8 = 10;
const TRIANGLE: u8 = 5;

/// Nine significant digits.
fn num(s: &mut String, v: f64) {
    let _ = write!(s, "{v:.8e}");
}

fn header(s: &mut String, title: &str) {
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str(title);
    s.push_str("\nASCII\nDATASET UNSTRUCTURED_GRID\n");
}

fn points<'a>(s: &mut String, pts: impl ExactSizeIterator<Item = &'a crate::mesh::Vec3>) {
    let _ = writeln!(s, "POINTS {} double", pts.len());
    for p in pts {
        num(s, p.x);
        s.push(' ');
        num(s, p.y);
        s.push(' ');
        num(s, p.z);
        s.push('\n');
    }
}

fn vectors<'a>(s: &mut String, name: &str, v: impl Iterator<Item = [f64; 3]>) {
    let _ = writeln!(s, "VECTORS {name} double");
    for c in v {
        num(s, c[0]);
        s.push(' ');
        num(s, c[1]);
        s.push(' ');
        num(s, c[2]);
        s.push('\n');
    }
}

fn scalars(s: &mut String, name: &str, v: impl Iterator<Item = f64>) {
    let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for x in v {
        num(s, x);
        s.push('\n');
    }
}

pub fn volume_vtk(mesh: &Mesh, state: &SimulationState) -> String {
    let mut s = String::new();
    header(&mut s, &format!("velocity and pressure at t = {:.8e} s", state.t));
    points(&mut s, mesh.nodes().iter());
    let _ = writeln!(s, "CELLS {} {}", mesh.n_el(), 5 * mesh.n_el());
    for t in mesh.tets() {
        let _ = writeln!(s, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", mesh.n_el());
    for _ in 0..mesh.n_el() {
        let _ = writeln!(s, "{TETRA}");
    }
    let _ = writeln!(s, "POINT_DATA {}", mesh.n_nodes());
    vectors(&mut s, "velocity", state.u.iter().map(|u| [u.x, u.y, u.z]));
    scalars(&mut s, "pressure", state.p.iter().copied());
    s
}

pub fn wall_vtk(mesh: &Mesh, wss: &WallShearField) -> String {
    let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
    for f in mesh.facets_with(PatchLabel::WALL) {
        for n in f.nodes {
            ids.insert(n, 0);
        }
    }
    for (k, v) in ids.values_mut().enumerate() {
        *v = k;
    }
    let mut s = String::new();
    header(&mut s, &format!("wall shear stress at t = {:.8e} s", wss.t));
    points(&mut s, ids.keys().map(|&n| &mesh.nodes()[n]).collect::<Vec<_>>().into_iter());
    let n = wss.facets.len();
    let _ = writeln!(s, "CELLS {} {}", n, 4 * n);
    for w in &wss.facets {
        let f = &mesh.facets()[w.facet];
        let _ = writeln!(s, "3 {} {} {}", ids[&f.nodes[0]], ids[&f.nodes[1]], ids[&f.nodes[2]]);
    }
    let _ = writeln!(s, "CELL_TYPES {n}");
    for _ in 0..n {
        let _ = writeln!(s, "{TRIANGLE}");
    }
    let _ = writeln!(s, "CELL_DATA {n}");
    scalars(&mut s, "wss_magnitude", wss.facets.iter().map(|w| w.magnitude));
    vectors(&mut s, "wss", wss.facets.iter().map(|w| [w.shear.x, w.shear.y, w.shear.z]));
    s
}

/// `dir/stem.vtk` → `dir/stem_wall.vtk`.
pub fn wall_companion_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_wall.vtk"))
}

/// Writes the volume file and, with `wss`, its wall companion. Returns the
/// paths written.
pub fn write_vtk(mesh: &Mesh, state: &SimulationState, wss: Option<&WallShearField>, path: &Path) -> Result<Vec<PathBuf>, PostError> {
    std::fs::write(path, volume_vtk(mesh, state))?;
    let mut out = vec![path.to_path_buf()];
    if let Some(w) = wss {
        let wall = wall_companion_path(path);
        std::fs::write(&wall, wall_vtk(mesh, w))?;
        out.push(wall);
    }
    Ok(out)
}

/// Contents of a legacy ASCII unstructured-grid file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VtkData {
    pub title: String,
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub point_scalars: BTreeMap<String, Vec<f64>>,
    pub point_vectors: BTreeMap<String, Vec<[f64; 3]>>,
    pub cell_scalars: BTreeMap<String, Vec<f64>>,
    pub cell_vectors: BTreeMap<String, Vec<[f64; 3]>>,
}

struct Tokens<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    pending: std::collections::VecDeque<&'a str>,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn err(&self, m: impl Into<String>) -> PostError {
        PostError::VtkParse { line: self.line, message: m.into() }
    }

    fn next(&mut self) -> Option<&'a str> {
        while self.pending.is_empty() {
            let (i, l) = self.lines.next()?;
            self.line = i + 1;
            self.pending.extend(l.split_whitespace());
        }
        self.pending.pop_front()
    }

    fn expect_next(&mut self) -> Result<&'a str, PostError> {
        self.next().ok_or_else(|| self.err("unexpected end of file"))
    }

    fn parse<T: std::str::FromStr>(&mut self) -> Result<T, PostError> {
        let t = self.expect_next()?;
        t.parse().map_err(|_| self.err(format!("cannot parse `{t}`")))
    }

    fn keyword(&mut self, k: &str) -> Result<(), PostError> {
        let t = self.expect_next()?;
        if t != k {
            return Err(self.err(format!("expected `{k}`, found `{t}`")));
        }
        Ok(())
    }
}

pub fn read_vtk(path: &Path) -> Result<VtkData, PostError> {
    parse_vtk(&std::fs::read_to_string(path)?)
}

pub fn parse_vtk(text: &str) -> Result<VtkData, PostError> {
    let mut lines = text.lines().enumerate().peekable();
    let err = |line: usize, m: &str| PostError::VtkParse { line, message: m.to_string() };
    match lines.next() {
        Some((_, l)) if l.starts_with("# vtk DataFile Version") => {}
        _ => return Err(err(1, "missing `# vtk DataFile Version` header")),
    }
    let title = lines.next().map(|(_, l)| l.to_string()).ok_or_else(|| err(2, "missing title"))?;
    let mut tk = Tokens { lines, pending: Default::default(), line: 2 };
    tk.keyword("ASCII")?;
    tk.keyword("DATASET")?;
    tk.keyword("UNSTRUCTURED_GRID")?;
    let mut data = VtkData { title, ..Default::default() };
    let mut attach_to_cells = false;
    while let Some(kw) = tk.next() {
        match kw {
            "POINTS" => {
                let n: usize = tk.parse()?;
                tk.expect_next()?;
                for _ in 0..n {
                    data.points.push([tk.parse()?, tk.parse()?, tk.parse()?]);
                }
            }
            "CELLS" => {
                let n: usize = tk.parse()?;
                let _size: usize = tk.parse()?;
                for _ in 0..n {
                    let k: usize = tk.parse()?;
                    let mut c = Vec::with_capacity(k);
                    for _ in 0..k {
                        c.push(tk.parse()?);
                    }
                    data.cells.push(c);
                }
            }
            "CELL_TYPES" => {
                let n: usize = tk.parse()?;
                for _ in 0..n {
                    data.cell_types.push(tk.parse()?);
                }
            }
            "POINT_DATA" => {
                let _: usize = tk.parse()?;
                attach_to_cells = false;
            }
            "CELL_DATA" => {
                let _: usize = tk.parse()?;
                attach_to_cells = true;
            }
            "SCALARS" => {
                let name = tk.expect_next()?.to_string();
                tk.expect_next()?;
                let comps = tk.expect_next()?;
                if comps != "1" {
                    return Err(tk.err("only single-component scalars are supported"));
                }
                tk.keyword("LOOKUP_TABLE")?;
                tk.expect_next()?;
                let n = if attach_to_cells { data.cells.len() } else { data.points.len() };
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    v.push(tk.parse()?);
                }
                if attach_to_cells { &mut data.cell_scalars } else { &mut data.point_scalars }.insert(name, v);
            }
            "VECTORS" => {
                let name = tk.expect_next()?.to_string();
                tk.expect_next()?;
                let n = if attach_to_cells { data.cells.len() } else { data.points.len() };
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    v.push([tk.parse()?, tk.parse()?, tk.parse()?]);
                }
                if attach_to_cells { &mut data.cell_vectors } else { &mut data.point_vectors }.insert(name, v);
            }
            other => return Err(tk.err(format!("unsupported keyword `{other}`"))),
        }
    }
    if data.cells.len() != data.cell_types.len() {
        return Err(tk.err("CELLS and CELL_TYPES disagree in count"));
    }
    Ok(data)
}
