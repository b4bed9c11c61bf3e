//! ASCII XYZ, ASCII PLY (vertices) and OBJ readers, plus an OBJ writer.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Point3, TriangleMesh};
use crate::error::{Error, Result};

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("expected a number, found {tok:?}"),
    })
}

/// One `x y z` triple per line; blank lines and `#` comments are skipped.
pub fn read_xyz<R: Read>(reader: R) -> Result<Vec<Point3>> {
    let mut pts = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = s
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .collect();
        if toks.len() < 3 {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected three coordinates".into(),
            });
        }
        pts.push([
            parse_f64(toks[0], i + 1)?,
            parse_f64(toks[1], i + 1)?,
            parse_f64(toks[2], i + 1)?,
        ]);
    }
    Ok(pts)
}

/// Vertices of an ASCII PLY file (`x`, `y`, `z` properties); faces ignored.
pub fn read_ply_vertices<R: Read>(reader: R) -> Result<Vec<Point3>> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    match lines.next() {
        Some((_, Ok(l))) if l.trim() == "ply" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing 'ply' magic".into(),
            })
        }
    }
    let mut n_vertices = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    for (i, line) in lines.by_ref() {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("only ASCII PLY is supported, found {fmt}"),
                })
            }
            ["element", "vertex", count] => {
                n_vertices = Some(count.parse::<usize>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: "bad vertex count".into(),
                })?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", .., name] if in_vertex => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let n = n_vertices.ok_or(Error::Parse {
        line: 0,
        message: "no vertex element".into(),
    })?;
    let col = |name: &str| {
        props.iter().position(|p| p == name).ok_or(Error::Parse {
            line: 0,
            message: format!("vertex property {name} missing"),
        })
    };
    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
    let mut pts = Vec::with_capacity(n);
    for (i, line) in lines {
        if pts.len() == n {
            break;
        }
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let get = |k: usize| -> Result<f64> {
            toks.get(k)
                .ok_or(Error::Parse {
                    line: i + 1,
                    message: "short vertex row".into(),
                })
                .and_then(|t| parse_f64(t, i + 1))
        };
        pts.push([get(ix)?, get(iy)?, get(iz)?]);
    }
    if pts.len() != n {
        return Err(Error::Parse {
            line: 0,
            message: format!("expected {n} vertices, found {}", pts.len()),
        });
    }
    Ok(pts)
}

/// Wavefront OBJ: `v` and `f` records. Polygons are fan-triangulated and
/// `v/vt/vn` and negative indices are accepted.
pub fn read_obj<R: Read>(reader: R) -> Result<TriangleMesh> {
    let mut verts: Vec<Point3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let c: Vec<&str> = toks.take(3).collect();
                if c.len() < 3 {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: "vertex needs three coordinates".into(),
                    });
                }
                verts.push([
                    parse_f64(c[0], i + 1)?,
                    parse_f64(c[1], i + 1)?,
                    parse_f64(c[2], i + 1)?,
                ]);
            }
            Some("f") => {
                let idx = toks
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        let v: i64 = head.parse().map_err(|_| Error::Parse {
                            line: i + 1,
                            message: format!("bad face index {t:?}"),
                        })?;
                        let resolved = if v > 0 {
                            v - 1
                        } else {
                            verts.len() as i64 + v
                        };
                        if resolved < 0 {
                            return Err(Error::Parse {
                                line: i + 1,
                                message: format!("face index {v} out of range"),
                            });
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<Vec<usize>>>()?;
                if idx.len() < 3 {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: "face needs at least three vertices".into(),
                    });
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(verts, faces)
}

pub fn write_obj<W: Write>(mesh: &TriangleMesh, mut w: W) -> Result<()> {
    for p in &mesh.positions {
        writeln!(w, "v {:.17e} {:.17e} {:.17e}", p[0], p[1], p[2])?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

pub fn write_xyz<W: Write>(points: &[Point3], mut w: W) -> Result<()> {
    for p in points {
        writeln!(w, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2])?;
    }
    Ok(())
}

/// What a geometry file contained.
#[derive(Debug, Clone)]
pub enum Geometry {
    Points(Vec<Point3>),
    Mesh(TriangleMesh),
}

impl Geometry {
    pub fn positions(&self) -> &[Point3] {
        match self {
            Geometry::Points(p) => p,
            Geometry::Mesh(m) => &m.positions,
        }
    }
}

/// Reads by extension: `.obj` as a mesh, `.ply` vertices, anything else XYZ.
pub fn load_geometry(path: &Path) -> Result<Geometry> {
    let file = std::fs::File::open(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("obj") => read_obj(file).map(Geometry::Mesh),
        Some("ply") => read_ply_vertices(file).map(Geometry::Points),
        _ => read_xyz(file).map(Geometry::Points),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xyz_with_comments() {
        let src = "# header\n0 0 0\n\n1.5 2 -3\n";
        let p = read_xyz(src.as_bytes()).unwrap();
        assert_eq!(p, vec![[0.0, 0.0, 0.0], [1.5, 2.0, -3.0]]);
        assert!(read_xyz("1 2\n".as_bytes()).is_err());
        assert!(read_xyz("1 2 x\n".as_bytes()).is_err());
    }

    #[test]
    fn ply_vertices() {
        let src = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float y\nproperty float x\nproperty float z\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n1 2 3\n4 5 6\n";
        let p = read_ply_vertices(src.as_bytes()).unwrap();
        assert_eq!(p, vec![[2.0, 1.0, 3.0], [5.0, 4.0, 6.0]]);
        let bin = "ply\nformat binary_little_endian 1.0\nend_header\n";
        assert!(read_ply_vertices(bin.as_bytes()).is_err());
    }

    #[test]
    fn obj_polygons_and_slashes() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n";
        let m = read_obj(src.as_bytes()).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
        let neg = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n";
        assert_eq!(read_obj(neg.as_bytes()).unwrap().faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn obj_roundtrip() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
        let m = read_obj(src.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_obj(&m, &mut buf).unwrap();
        assert_eq!(read_obj(buf.as_slice()).unwrap(), m);
    }
}
