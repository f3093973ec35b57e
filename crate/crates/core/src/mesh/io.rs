//! OFF and ASCII-PLY mesh readers and writers.
//!
//! Binary PLY is rejected with a parse error; the ASCII parsers stay small
//! enough to audit.

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::scalar::Real;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    PlyAscii,
}

/// Loads and validates a mesh in the declared format.
pub fn load_mesh<T: Real>(path: &Path, format: MeshFormat) -> Result<TriangleMesh<T>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let name = path.display().to_string();
    match format {
        MeshFormat::Off => parse_off(reader, &name),
        MeshFormat::PlyAscii => parse_ply_ascii(reader, &name),
    }
}

/// Picks the format from the file extension (`.off`, `.ply`).
pub fn load_mesh_auto<T: Real>(path: &Path) -> Result<TriangleMesh<T>> {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(ext) if ext == "off" => load_mesh(path, MeshFormat::Off),
        Some(ext) if ext == "ply" => load_mesh(path, MeshFormat::PlyAscii),
        _ => Err(Error::Parse {
            path: path.display().to_string(),
            msg: "unknown extension, expected .off or .ply".into(),
        }),
    }
}

fn parse_err(path: &str, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_string(), msg: msg.into() }
}

/// Yields non-empty, non-comment whitespace-separated tokens.
fn tokens(reader: impl BufRead, path: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        out.extend(line.split_whitespace().map(|s| s.to_string()));
    }
    if out.is_empty() {
        return Err(parse_err(path, "empty file"));
    }
    Ok(out)
}

fn take_usize(toks: &[String], i: &mut usize, path: &str, what: &str) -> Result<usize> {
    let t = toks.get(*i).ok_or_else(|| parse_err(path, format!("unexpected end of file reading {what}")))?;
    *i += 1;
    t.parse().map_err(|_| parse_err(path, format!("bad {what}: `{t}`")))
}

fn take_scalar<T: Real>(toks: &[String], i: &mut usize, path: &str, what: &str) -> Result<T> {
    let t = toks.get(*i).ok_or_else(|| parse_err(path, format!("unexpected end of file reading {what}")))?;
    *i += 1;
    let v: f64 = t.parse().map_err(|_| parse_err(path, format!("bad {what}: `{t}`")))?;
    Ok(T::of(v))
}

fn parse_off<T: Real>(reader: impl BufRead, path: &str) -> Result<TriangleMesh<T>> {
    let toks = tokens(reader, path)?;
    let mut i = 0;
    if toks[0] != "OFF" {
        return Err(parse_err(path, "missing OFF header"));
    }
    i += 1;
    let nv = take_usize(&toks, &mut i, path, "vertex count")?;
    let nf = take_usize(&toks, &mut i, path, "face count")?;
    let _ne = take_usize(&toks, &mut i, path, "edge count")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = take_scalar(&toks, &mut i, path, "vertex coordinate")?;
        let y = take_scalar(&toks, &mut i, path, "vertex coordinate")?;
        let z = take_scalar(&toks, &mut i, path, "vertex coordinate")?;
        vertices.push([x, y, z]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let arity = take_usize(&toks, &mut i, path, "face arity")?;
        if arity != 3 {
            return Err(parse_err(path, format!("only triangle faces supported, got arity {arity}")));
        }
        let a = take_usize(&toks, &mut i, path, "face index")?;
        let b = take_usize(&toks, &mut i, path, "face index")?;
        let c = take_usize(&toks, &mut i, path, "face index")?;
        faces.push([a, b, c]);
    }
    TriangleMesh::new(vertices, faces)
}

fn parse_ply_ascii<T: Real>(mut reader: impl BufRead, path: &str) -> Result<TriangleMesh<T>> {
    // header: line oriented
    let mut line = String::new();
    let mut read_line = |r: &mut dyn BufRead| -> Result<Option<String>> {
        line.clear();
        let n = r.read_line(&mut line)?;
        if n == 0 {
            return Ok(None);
        }
        Ok(Some(line.trim().to_string()))
    };

    let first = read_line(&mut reader)?.ok_or_else(|| parse_err(path, "empty file"))?;
    if first != "ply" {
        return Err(parse_err(path, "missing ply header"));
    }

    struct ElementDecl {
        name: String,
        count: usize,
        properties: Vec<String>,
        list: bool,
    }
    let mut elements: Vec<ElementDecl> = Vec::new();
    let mut format_seen = false;
    loop {
        let l = read_line(&mut reader)?.ok_or_else(|| parse_err(path, "header ended before end_header"))?;
        if l.is_empty() || l.starts_with("comment") {
            continue;
        }
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some("format") => {
                let kind = parts.next().unwrap_or("");
                if kind != "ascii" {
                    return Err(parse_err(path, format!("only ascii PLY supported, got `{kind}`")));
                }
                format_seen = true;
            }
            Some("element") => {
                let name = parts.next().unwrap_or("").to_string();
                let count: usize = parts
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(path, "bad element count"))?;
                elements.push(ElementDecl { name, count, properties: Vec::new(), list: false });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, "property before element"))?;
                let rest: Vec<&str> = parts.collect();
                if rest.first() == Some(&"list") {
                    el.list = true;
                } else {
                    let name = rest.last().unwrap_or(&"").to_string();
                    el.properties.push(name);
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(parse_err(path, format!("unknown header keyword `{other}`"))),
            None => {}
        }
    }
    if !format_seen {
        return Err(parse_err(path, "missing format line"));
    }

    let toks = tokens(reader, path)?;
    let mut i = 0;
    let mut vertices: Vec<[T; 3]> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for el in &elements {
        if el.name == "vertex" {
            let xi = el.properties.iter().position(|p| p == "x");
            let yi = el.properties.iter().position(|p| p == "y");
            let zi = el.properties.iter().position(|p| p == "z");
            let (xi, yi, zi) = match (xi, yi, zi) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => return Err(parse_err(path, "vertex element missing x/y/z properties")),
            };
            for _ in 0..el.count {
                let mut row = Vec::with_capacity(el.properties.len());
                for p in &el.properties {
                    row.push(take_scalar::<T>(&toks, &mut i, path, p)?);
                }
                vertices.push([row[xi], row[yi], row[zi]]);
            }
        } else if el.name == "face" {
            for _ in 0..el.count {
                let arity = take_usize(&toks, &mut i, path, "face arity")?;
                if arity != 3 {
                    return Err(parse_err(path, format!("only triangle faces supported, got arity {arity}")));
                }
                let a = take_usize(&toks, &mut i, path, "face index")?;
                let b = take_usize(&toks, &mut i, path, "face index")?;
                let c = take_usize(&toks, &mut i, path, "face index")?;
                faces.push([a, b, c]);
            }
        } else {
            // skip unknown element payload token-wise: only fixed-arity
            // non-list elements are skippable
            if el.list {
                return Err(parse_err(path, format!("unsupported list element `{}`", el.name)));
            }
            i += el.count * el.properties.len();
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn write_off<T: Real>(mesh: &TriangleMesh<T>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "OFF")?;
    writeln!(w, "{} {} 0", mesh.n(), mesh.faces().len())?;
    for v in mesh.vertices() {
        writeln!(w, "{} {} {}", v[0].as_f64(), v[1].as_f64(), v[2].as_f64())?;
    }
    for f in mesh.faces() {
        writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}

pub fn write_ply_ascii<T: Real>(mesh: &TriangleMesh<T>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", mesh.n())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    writeln!(w, "element face {}", mesh.faces().len())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    writeln!(w, "end_header")?;
    for v in mesh.vertices() {
        writeln!(w, "{} {} {}", v[0].as_f64(), v[1].as_f64(), v[2].as_f64())?;
    }
    for f in mesh.faces() {
        writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}
