//! Mesh (OBJ, ASCII STL), point cloud (ASCII PLY) and voxel grid (AVGRID01) files.
//!
//! AVGRID01 layout, little endian, 40-byte header:
//!
//! | offset | size | field |
//! |--------|------|-------|
//! | 0  | 8  | magic `AVGRID01` |
//! | 8  | 12 | dims, 3 x u32 |
//! | 20 | 12 | origin, 3 x f32 |
//! | 32 | 4  | voxel edge, f32 |
//! | 36 | 4  | reserved, u32 = 0 |
//! | 40 | 4n | values, f32, row-major with the last axis fastest |

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::geometry::{Lattice, PointCloud, Source, TriangleMesh, VoxelGrid};
use crate::{Error, Result, Vec3};

pub const AVGRID_MAGIC: &[u8; 8] = b"AVGRID01";
pub const AVGRID_HEADER_LEN: usize = 40;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn parse_f64(tok: Option<&str>, what: &str) -> Result<f64> {
    tok.ok_or_else(|| format_err(format!("missing {what}")))?
        .parse()
        .map_err(|_| format_err(format!("bad number for {what}")))
}

/// Write to a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_obj(mesh: &TriangleMesh, out: &mut impl Write) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in &mesh.triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

pub fn save_obj(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_obj(mesh, &mut buf)?;
    write_atomic(path, &buf)
}

/// Reads `v` and `f` records; polygons are fan-triangulated, `v/vt/vn` indices accepted.
pub fn read_obj(input: impl Read) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for line in BufReader::new(input).lines() {
        let line = line?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), "vertex x")?;
                let y = parse_f64(toks.next(), "vertex y")?;
                let z = parse_f64(toks.next(), "vertex z")?;
                vertices.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let idx = toks
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let i: i64 = first
                            .parse()
                            .map_err(|_| format_err(format!("bad face index {t}")))?;
                        let n = vertices.len() as i64;
                        let resolved = if i < 0 { n + i } else { i - 1 };
                        if resolved < 0 || resolved >= n {
                            return Err(format_err(format!("face index {i} out of range")));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<Vec<_>>>()?;
                if idx.len() < 3 {
                    return Err(format_err("face with fewer than 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn load_obj(path: &Path) -> Result<TriangleMesh> {
    read_obj(fs::File::open(path)?)
}

pub fn write_stl(mesh: &TriangleMesh, name: &str, out: &mut impl Write) -> Result<()> {
    writeln!(out, "solid {name}")?;
    for t in 0..mesh.triangles.len() {
        let n = mesh.triangle_normal(t);
        writeln!(out, "  facet normal {} {} {}", n.x, n.y, n.z)?;
        writeln!(out, "    outer loop")?;
        for v in mesh.corners(t) {
            writeln!(out, "      vertex {} {} {}", v.x, v.y, v.z)?;
        }
        writeln!(out, "    endloop")?;
        writeln!(out, "  endfacet")?;
    }
    writeln!(out, "endsolid {name}")?;
    Ok(())
}

pub fn save_stl(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh");
    write_stl(mesh, name, &mut buf)?;
    write_atomic(path, &buf)
}

/// ASCII STL; vertices with bit-identical coordinates are welded.
pub fn read_stl(input: impl Read) -> Result<TriangleMesh> {
    let mut index: HashMap<[u64; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut facet = Vec::with_capacity(3);
    for line in BufReader::new(input).lines() {
        let line = line?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("vertex") => {
                let p = Vec3::new(
                    parse_f64(toks.next(), "vertex x")?,
                    parse_f64(toks.next(), "vertex y")?,
                    parse_f64(toks.next(), "vertex z")?,
                );
                let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
                let id = *index.entry(key).or_insert_with(|| {
                    vertices.push(p);
                    vertices.len() - 1
                });
                facet.push(id);
            }
            Some("endloop") => {
                if facet.len() != 3 {
                    return Err(format_err("STL facet without exactly 3 vertices"));
                }
                triangles.push([facet[0], facet[1], facet[2]]);
                facet.clear();
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn load_stl(path: &Path) -> Result<TriangleMesh> {
    read_stl(fs::File::open(path)?)
}

/// Load a mesh by extension (`.obj` or `.stl`).
pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
        Some(e) if e == "obj" => load_obj(path),
        Some(e) if e == "stl" => load_stl(path),
        _ => Err(format_err(format!("unknown mesh format: {}", path.display()))),
    }
}

/// ASCII PLY: `x y z`, then `nx ny nz` when normals exist, then a `source` tag (0 visual, 1 haptic).
pub fn write_ply(cloud: &PointCloud, out: &mut impl Write) -> Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", cloud.len())?;
    for p in ["x", "y", "z"] {
        writeln!(out, "property double {p}")?;
    }
    if cloud.normals.is_some() {
        for p in ["nx", "ny", "nz"] {
            writeln!(out, "property double {p}")?;
        }
    }
    writeln!(out, "property uchar source")?;
    writeln!(out, "end_header")?;
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        write!(out, "{} {} {}", p.x, p.y, p.z)?;
        if let Some(n) = &cloud.normals {
            write!(out, " {} {} {}", n[i].x, n[i].y, n[i].z)?;
        }
        let tag = match cloud.sources[i] {
            Source::Visual => 0,
            Source::Haptic => 1,
        };
        writeln!(out, " {tag}")?;
    }
    Ok(())
}

pub fn save_ply(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_ply(cloud, &mut buf)?;
    write_atomic(path, &buf)
}

pub fn read_ply(input: impl Read) -> Result<PointCloud> {
    let mut lines = BufReader::new(input).lines();
    let mut props: Vec<String> = Vec::new();
    let mut count = None;
    let mut in_vertex = false;
    loop {
        let line = lines
            .next()
            .ok_or_else(|| format_err("PLY header not terminated"))??;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(format_err("only ASCII PLY is supported"))
            }
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| format_err("bad vertex count"))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let count = count.ok_or_else(|| format_err("PLY without vertex element"))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (x, y, z) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(format_err("PLY lacks x/y/z")),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let source_col = col("source");
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::new();
    let mut sources = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines
            .next()
            .ok_or_else(|| format_err("PLY ended before all vertices"))??;
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| format_err(format!("bad PLY value {t}"))))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() < props.len() {
            return Err(format_err("short PLY vertex line"));
        }
        points.push(Vec3::new(vals[x], vals[y], vals[z]));
        if let Some((a, b, c)) = normal_cols {
            normals.push(Vec3::new(vals[a], vals[b], vals[c]));
        }
        sources.push(match source_col.map(|c| vals[c]) {
            Some(v) if v == 1.0 => Source::Haptic,
            _ => Source::Visual,
        });
    }
    PointCloud::with_sources(points, normal_cols.map(|_| normals), sources)
}

pub fn load_ply(path: &Path) -> Result<PointCloud> {
    read_ply(fs::File::open(path)?)
}

pub fn write_avgrid(grid: &VoxelGrid, out: &mut impl Write) -> Result<()> {
    let l = &grid.lattice;
    let mut w = BufWriter::new(out);
    w.write_all(AVGRID_MAGIC)?;
    for d in l.dims {
        let d = u32::try_from(d).map_err(|_| format_err("grid dimension exceeds u32"))?;
        w.write_u32::<LittleEndian>(d)?;
    }
    for a in 0..3 {
        w.write_f32::<LittleEndian>(l.origin[a] as f32)?;
    }
    w.write_f32::<LittleEndian>(l.voxel_edge as f32)?;
    w.write_u32::<LittleEndian>(0)?;
    for &v in &grid.values {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_avgrid(grid: &VoxelGrid, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(AVGRID_HEADER_LEN + 4 * grid.values.len());
    write_avgrid(grid, &mut buf)?;
    write_atomic(path, &buf)
}

pub fn read_avgrid(input: impl Read) -> Result<VoxelGrid> {
    let mut r = BufReader::new(input);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != AVGRID_MAGIC {
        return Err(format_err("not an AVGRID01 file"));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = r.read_u32::<LittleEndian>()? as usize;
    }
    let mut origin = Vec3::zeros();
    for a in 0..3 {
        origin[a] = r.read_f32::<LittleEndian>()? as f64;
    }
    let edge = r.read_f32::<LittleEndian>()? as f64;
    let _reserved = r.read_u32::<LittleEndian>()?;
    let lattice = Lattice::new(origin, edge, dims)?;
    let mut values = vec![0.0; lattice.len()];
    for v in &mut values {
        *v = r.read_f32::<LittleEndian>()? as f64;
    }
    VoxelGrid::from_values(lattice, values)
}

pub fn load_avgrid(path: &Path) -> Result<VoxelGrid> {
    read_avgrid(fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::icosphere;

    #[test]
    fn obj_roundtrip() {
        let m = icosphere(1.0, 1);
        let mut buf = Vec::new();
        write_obj(&m, &mut buf).unwrap();
        let back = read_obj(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn obj_quads_and_slashes() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n";
        let m = read_obj(src.as_bytes()).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert!(read_obj("v 0 0 0\nf 1 2 3\n".as_bytes()).is_err());
    }

    #[test]
    fn stl_roundtrip_welds() {
        let m = icosphere(1.0, 1);
        let mut buf = Vec::new();
        write_stl(&m, "s", &mut buf).unwrap();
        let back = read_stl(buf.as_slice()).unwrap();
        assert_eq!(back.vertices.len(), m.vertices.len());
        assert!(back.is_watertight());
    }

    #[test]
    fn ply_roundtrip() {
        let c = PointCloud::with_sources(
            vec![Vec3::new(0.5, -1.0, 0.25), Vec3::new(1.0, 2.0, 3.0)],
            Some(vec![Vec3::x(), Vec3::z()]),
            vec![Source::Visual, Source::Haptic],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_ply(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("property double nx"));
        assert_eq!(read_ply(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn avgrid_header_is_40_bytes() {
        let l = Lattice::new(Vec3::repeat(-1.0), 0.5, [4, 4, 2]).unwrap();
        let mut g = VoxelGrid::zeros(l);
        g.values[5] = 0.25;
        let mut buf = Vec::new();
        write_avgrid(&g, &mut buf).unwrap();
        assert_eq!(buf.len(), AVGRID_HEADER_LEN + 4 * 32);
        assert_eq!(&buf[..8], b"AVGRID01");
        let back = read_avgrid(buf.as_slice()).unwrap();
        assert!(back.lattice.matches(&g.lattice));
        assert_eq!(back.values, g.values);
        assert!(read_avgrid(&b"NOTAGRID"[..]).is_err());
    }
}
