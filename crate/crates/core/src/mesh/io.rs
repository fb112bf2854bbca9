//! ASCII OBJ, PLY and OFF reading and writing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{TriMesh, Vec3};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
    Off,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        ext.parse()
    }

    pub fn extension(self) -> &'static str {
        match self {
            MeshFormat::Obj => "obj",
            MeshFormat::Ply => "ply",
            MeshFormat::Off => "off",
        }
    }
}

impl FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(MeshFormat::Obj),
            "ply" => Ok(MeshFormat::Ply),
            "off" => Ok(MeshFormat::Off),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Polygon soup as read from a file, before validation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawMesh {
    pub vertices: Vec<Vec3>,
    pub polygons: Vec<Vec<usize>>,
}

impl RawMesh {
    /// Fan-triangulate every polygon from its first vertex.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        self.polygons
            .iter()
            .flat_map(|p| (1..p.len().saturating_sub(1)).map(move |k| [p[0], p[k], p[k + 1]]))
            .collect()
    }

    /// Merge vertices closer than `tol`, dropping polygons that collapse.
    pub fn weld(&mut self, tol: f64) {
        let n = self.vertices.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.vertices[a].x.total_cmp(&self.vertices[b].x).then(a.cmp(&b)));
        let mut rep: Vec<usize> = (0..n).collect();
        for (oi, &i) in order.iter().enumerate() {
            if rep[i] != i {
                continue;
            }
            for &j in &order[oi + 1..] {
                if self.vertices[j].x - self.vertices[i].x > tol {
                    break;
                }
                if rep[j] == j && (self.vertices[j] - self.vertices[i]).norm() <= tol {
                    rep[j] = i;
                }
            }
        }
        let mut new_index = vec![usize::MAX; n];
        let mut verts = Vec::new();
        for i in 0..n {
            if rep[i] == i {
                new_index[i] = verts.len();
                verts.push(self.vertices[i]);
            }
        }
        let polygons = self
            .polygons
            .iter()
            .filter_map(|p| {
                let mut q: Vec<usize> = p.iter().map(|&v| new_index[rep[v]]).collect();
                q.dedup();
                while q.len() > 1 && q.first() == q.last() {
                    q.pop();
                }
                (q.len() >= 3).then_some(q)
            })
            .collect();
        self.vertices = verts;
        self.polygons = polygons;
    }

    pub fn into_mesh(self) -> Result<TriMesh> {
        let tris = self.triangles();
        TriMesh::new(self.vertices, tris)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    pub format: Option<MeshFormat>,
    /// Weld duplicate vertices within `1e-8` times the bounding-box diagonal.
    pub weld: bool,
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    load_mesh_with(path, LoadOptions::default())
}

pub fn load_mesh_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<TriMesh> {
    let path = path.as_ref();
    let format = match opts.format {
        Some(f) => f,
        None => MeshFormat::from_path(path)?,
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut raw = parse_mesh(&text, format)?;
    if opts.weld {
        let (lo, hi) = super::bounding_box(&raw.vertices);
        raw.weld(1e-8 * (hi - lo).norm());
    }
    raw.into_mesh()
}

pub fn parse_mesh(text: &str, format: MeshFormat) -> Result<RawMesh> {
    match format {
        MeshFormat::Obj => parse_obj(text),
        MeshFormat::Ply => parse_ply(text),
        MeshFormat::Off => parse_off(text),
    }
}

fn number<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::parse(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} '{tok}'")))
}

fn point(toks: &mut dyn Iterator<Item = &str>, line: usize) -> Result<Vec3> {
    let x = number(toks.next(), line, "x coordinate")?;
    let y = number(toks.next(), line, "y coordinate")?;
    let z = number(toks.next(), line, "z coordinate")?;
    Ok(Vec3::new(x, y, z))
}

fn parse_obj(text: &str) -> Result<RawMesh> {
    let mut raw = RawMesh::default();
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => raw.vertices.push(point(&mut toks, line_no)?),
            Some("f") => {
                let mut poly = Vec::new();
                for t in toks {
                    let head = t.split('/').next().unwrap_or_default();
                    let idx: i64 = number(Some(head), line_no, "face index")?;
                    let n = raw.vertices.len() as i64;
                    let resolved = match idx {
                        i if i > 0 => i - 1,
                        i if i < 0 => n + i,
                        _ => return Err(Error::parse(line_no, "face index 0 is invalid in OBJ")),
                    };
                    if resolved < 0 {
                        return Err(Error::parse(line_no, format!("face index {idx} out of range")));
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(Error::parse(line_no, "face with fewer than 3 vertices"));
                }
                raw.polygons.push(poly);
            }
            _ => {}
        }
    }
    Ok(raw)
}

/// Non-empty, comment-stripped lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or_default().trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_polygon(toks: &mut dyn Iterator<Item = &str>, line: usize) -> Result<Vec<usize>> {
    let k: usize = number(toks.next(), line, "polygon size")?;
    if k < 3 {
        return Err(Error::parse(line, "face with fewer than 3 vertices"));
    }
    (0..k).map(|_| number(toks.next(), line, "face index")).collect()
}

fn parse_off(text: &str) -> Result<RawMesh> {
    let mut lines = content_lines(text);
    let (ln, header) = lines.next().ok_or_else(|| Error::parse(1, "empty OFF file"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| Error::parse(ln, "missing OFF header"))?
        .trim()
        .to_string();
    let (ln, counts) = if rest.is_empty() {
        let (l, c) = lines.next().ok_or_else(|| Error::parse(ln, "missing element counts"))?;
        (l, c.to_string())
    } else {
        (ln, rest)
    };
    let mut toks = counts.split_whitespace();
    let nv: usize = number(toks.next(), ln, "vertex count")?;
    let nf: usize = number(toks.next(), ln, "face count")?;
    let mut raw = RawMesh::default();
    for _ in 0..nv {
        let (l, line) = lines.next().ok_or_else(|| Error::parse(ln, "unexpected end of vertex list"))?;
        raw.vertices.push(point(&mut line.split_whitespace(), l)?);
    }
    for _ in 0..nf {
        let (l, line) = lines.next().ok_or_else(|| Error::parse(ln, "unexpected end of face list"))?;
        raw.polygons.push(parse_polygon(&mut line.split_whitespace(), l)?);
    }
    Ok(raw)
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<String>,
    list_prop: Option<String>,
}

fn parse_ply(text: &str) -> Result<RawMesh> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut header_end = false;
    for (ln, line) in lines.by_ref() {
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("format") => {
                if toks.next() != Some("ascii") {
                    return Err(Error::UnsupportedFormat("binary PLY".into()));
                }
            }
            Some("element") => {
                let name = toks.next().unwrap_or_default().to_string();
                let count = number(toks.next(), ln, "element count")?;
                elements.push(PlyElement {
                    name,
                    count,
                    props: Vec::new(),
                    list_prop: None,
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(ln, "property before element"))?;
                let rest: Vec<&str> = toks.collect();
                if rest.first() == Some(&"list") {
                    let name = rest.last().copied().unwrap_or_default().to_string();
                    el.props.push(name.clone());
                    el.list_prop = Some(name);
                } else {
                    el.props.push(rest.last().copied().unwrap_or_default().to_string());
                }
            }
            Some("end_header") => {
                header_end = true;
                break;
            }
            _ => {}
        }
    }
    if !header_end {
        return Err(Error::parse(1, "missing end_header"));
    }
    let mut raw = RawMesh::default();
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    for el in &elements {
        for _ in 0..el.count {
            let (ln, line) = body
                .next()
                .ok_or_else(|| Error::parse(0, format!("unexpected end of '{}' data", el.name)))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let col = |axis: &str| {
                        el.props
                            .iter()
                            .position(|p| p == axis)
                            .ok_or_else(|| Error::parse(ln, format!("vertex has no '{axis}' property")))
                    };
                    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
                    raw.vertices.push(Vec3::new(
                        number(toks.get(ix).copied(), ln, "x coordinate")?,
                        number(toks.get(iy).copied(), ln, "y coordinate")?,
                        number(toks.get(iz).copied(), ln, "z coordinate")?,
                    ));
                }
                "face" => {
                    if el.list_prop.is_none() {
                        return Err(Error::parse(ln, "face element without index list"));
                    }
                    // the index list is assumed to be the first property, as all common writers do
                    raw.polygons.push(parse_polygon(&mut toks.into_iter(), ln)?);
                }
                _ => {}
            }
        }
    }
    for p in &raw.polygons {
        if let Some(&bad) = p.iter().find(|&&i| i >= raw.vertices.len()) {
            return Err(Error::parse(0, format!("face index {bad} out of range")));
        }
    }
    Ok(raw)
}

/// Serialize a mesh; coordinates carry 17 significant digits.
pub fn write_mesh(mesh: &TriMesh, format: MeshFormat) -> String {
    let mut out = String::new();
    let v = mesh.vertices();
    let f = mesh.faces();
    match format {
        MeshFormat::Obj => {
            for p in v {
                let _ = writeln!(out, "v {:.16e} {:.16e} {:.16e}", p.x, p.y, p.z);
            }
            for t in f {
                let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
            }
        }
        MeshFormat::Ply => {
            let _ = write!(
                out,
                "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
                v.len(),
                f.len()
            );
            for p in v {
                let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z);
            }
            for t in f {
                let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
            }
        }
        MeshFormat::Off => {
            let _ = writeln!(out, "OFF\n{} {} 0", v.len(), f.len());
            for p in v {
                let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z);
            }
            for t in f {
                let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
            }
        }
    }
    out
}

pub fn save_mesh(mesh: &TriMesh, path: impl AsRef<Path>, format: Option<MeshFormat>) -> Result<()> {
    let path = path.as_ref();
    let format = match format {
        Some(f) => f,
        None => MeshFormat::from_path(path)?,
    };
    fs::write(path, write_mesh(mesh, format)).map_err(|e| Error::io(path, e))
}
