//! Closed, consistently oriented triangle meshes.

use crate::calc3::Vec3;
use crate::error::{Error, Result};
use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct TriangulatedSurface {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangulatedSurface {
    /// Builds and validates a surface.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let s = TriangulatedSurface { vertices, triangles };
        s.validate()?;
        Ok(s)
    }

    /// Checks that every edge is shared by exactly two triangles that traverse it in opposite directions.
    pub fn validate(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(Error::Mesh("no triangles".into()));
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= self.vertices.len()) {
                return Err(Error::Mesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Mesh(format!("triangle {t} is degenerate")));
            }
            for e in 0..3 {
                let key = (tri[e], tri[(e + 1) % 3]);
                if directed.insert(key, t).is_some() {
                    return Err(Error::Mesh(format!(
                        "edge {key:?} is traversed twice in the same direction; orientation is inconsistent"
                    )));
                }
            }
        }
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) {
                return Err(Error::Mesh(format!("edge ({a}, {b}) lies on the boundary; the surface is not closed")));
            }
        }
        Ok(())
    }

    pub fn edge_count(&self) -> usize {
        self.triangles.len() * 3 / 2
    }

    /// `V − E + F`, counting only referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i] = true;
            }
        }
        let v = used.iter().filter(|u| **u).count() as i64;
        v - self.edge_count() as i64 + self.triangles.len() as i64
    }

    /// Unit icosphere scaled to `radius`, subdivided `level` times, outward oriented.
    pub fn icosphere(level: usize, radius: f64, center: Vec3) -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut v: Vec<Vec3> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(a, b, c)| Vec3::new(a, b, c).normalize())
        .collect();
        let mut f: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..level {
            let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
            let mut next = Vec::with_capacity(f.len() * 4);
            let mut midpoint = |a: usize, b: usize, v: &mut Vec<Vec3>| {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    v.push(((v[a] + v[b]) * 0.5).normalize());
                    v.len() - 1
                })
            };
            for [a, b, c] in f {
                let ab = midpoint(a, b, &mut v);
                let bc = midpoint(b, c, &mut v);
                let ca = midpoint(c, a, &mut v);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            f = next;
        }
        TriangulatedSurface {
            vertices: v.into_iter().map(|p| center + p * radius).collect(),
            triangles: f,
        }
    }

    /// Torus around the z-axis with radii `major > minor`, `nu` segments around
    /// the axis and `nv` around the tube, outward oriented.
    pub fn torus(major: f64, minor: f64, nu: usize, nv: usize) -> Result<Self> {
        if !(major > minor && minor > 0.0) || nu < 3 || nv < 3 {
            return Err(Error::Mesh(format!("invalid torus parameters R={major}, r={minor}, {nu}×{nv}")));
        }
        let tau = std::f64::consts::TAU;
        let mut vertices = Vec::with_capacity(nu * nv);
        for i in 0..nu {
            let th = tau * i as f64 / nu as f64;
            for j in 0..nv {
                let ph = tau * j as f64 / nv as f64;
                let rho = major + minor * ph.cos();
                vertices.push(Vec3::new(rho * th.cos(), rho * th.sin(), minor * ph.sin()));
            }
        }
        let idx = |i: usize, j: usize| (i % nu) * nv + (j % nv);
        let mut triangles = Vec::with_capacity(2 * nu * nv);
        for i in 0..nu {
            for j in 0..nv {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        TriangulatedSurface::new(vertices, triangles)
    }

    /// Midpoint subdivision; with `project`, new vertices are mapped onto the surface.
    pub fn subdivide(&self, project: Option<&dyn Fn(&Vec3) -> Vec3>) -> Self {
        let mut v = self.vertices.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut f = Vec::with_capacity(self.triangles.len() * 4);
        let mut midpoint = |a: usize, b: usize, v: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = (v[a] + v[b]) * 0.5;
                v.push(project.map_or(m, |p| p(&m)));
                v.len() - 1
            })
        };
        for &[a, b, c] in &self.triangles {
            let ab = midpoint(a, b, &mut v);
            let bc = midpoint(b, c, &mut v);
            let ca = midpoint(c, a, &mut v);
            f.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        TriangulatedSurface { vertices: v, triangles: f }
    }

    /// Reads an OFF file with triangular faces.
    pub fn read_off<R: BufRead>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("");
            tokens.extend(line.split_whitespace().map(str::to_owned));
        }
        let mut it = tokens.into_iter();
        match it.next().as_deref() {
            Some("OFF") => {}
            other => return Err(Error::Mesh(format!("expected OFF header, found {other:?}"))),
        }
        let mut num = |what: &str| -> Result<String> { it.next().ok_or_else(|| Error::Mesh(format!("unexpected end of file reading {what}"))) };
        let parse_usize = |s: String| s.parse::<usize>().map_err(|_| Error::Mesh(format!("bad integer {s:?}")));
        let parse_f64 = |s: String| s.parse::<f64>().map_err(|_| Error::Mesh(format!("bad number {s:?}")));
        let nv = parse_usize(num("vertex count")?)?;
        let nf = parse_usize(num("face count")?)?;
        let _ne = num("edge count")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let x = parse_f64(num("vertex")?)?;
            let y = parse_f64(num("vertex")?)?;
            let z = parse_f64(num("vertex")?)?;
            vertices.push(Vec3::new(x, y, z));
        }
        let mut triangles = Vec::with_capacity(nf);
        for f in 0..nf {
            let k = parse_usize(num("face")?)?;
            if k != 3 {
                return Err(Error::Mesh(format!("face {f} has {k} vertices; only triangles are supported")));
            }
            triangles.push([parse_usize(num("face")?)?, parse_usize(num("face")?)?, parse_usize(num("face")?)?]);
        }
        TriangulatedSurface::new(vertices, triangles)
    }

    /// Reads `v` and `f` records of an OBJ file; other records are ignored.
    pub fn read_obj<R: BufRead>(r: R) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let c = parts
                        .take(3)
                        .map(|s| s.parse::<f64>().map_err(|_| Error::Mesh(format!("line {}: bad coordinate {s:?}", n + 1))))
                        .collect::<Result<Vec<_>>>()?;
                    if c.len() != 3 {
                        return Err(Error::Mesh(format!("line {}: vertex needs three coordinates", n + 1)));
                    }
                    vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx = parts
                        .map(|s| {
                            let i = s.split('/').next().unwrap_or("");
                            let i: i64 = i.parse().map_err(|_| Error::Mesh(format!("line {}: bad index {s:?}", n + 1)))?;
                            let len = vertices.len() as i64;
                            let k = if i < 0 { len + i } else { i - 1 };
                            if k < 0 {
                                return Err(Error::Mesh(format!("line {}: index {i} out of range", n + 1)));
                            }
                            Ok(k as usize)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    if idx.len() != 3 {
                        return Err(Error::Mesh(format!("line {}: only triangular faces are supported", n + 1)));
                    }
                    triangles.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
        TriangulatedSurface::new(vertices, triangles)
    }

    /// Loads an `.off` or `.obj` file by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("off") => Self::read_off(file),
            Some("obj") => Self::read_obj(file),
            _ => Err(Error::Mesh(format!("unknown mesh format for {}", path.display()))),
        }
    }

    pub fn write_off<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "OFF")?;
        writeln!(w, "{} {} {}", self.vertices.len(), self.triangles.len(), self.edge_count())?;
        for v in &self.vertices {
            writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outward(s: &TriangulatedSurface, center: impl Fn(&Vec3) -> Vec3) -> bool {
        s.triangles.iter().all(|&[a, b, c]| {
            let (p, q, r) = (s.vertices[a], s.vertices[b], s.vertices[c]);
            let n = (q - p).cross(&(r - p));
            let m = (p + q + r) / 3.0;
            n.dot(&(m - center(&m))) > 0.0
        })
    }

    #[test]
    fn icosphere_counts_and_orientation() {
        for level in 0..4 {
            let s = TriangulatedSurface::icosphere(level, 1.0, Vec3::zeros());
            s.validate().unwrap();
            assert_eq!(s.triangles.len(), 20 * 4usize.pow(level as u32));
            assert_eq!(s.vertices.len(), 10 * 4usize.pow(level as u32) + 2);
            assert_eq!(s.euler_characteristic(), 2);
            assert!(outward(&s, |_| Vec3::zeros()));
            assert!(s.vertices.iter().all(|v| (v.norm() - 1.0).abs() <= 1e-14));
        }
    }

    #[test]
    fn torus_is_closed_genus_one() {
        let s = TriangulatedSurface::torus(2.0, 0.5, 24, 12).unwrap();
        assert_eq!(s.euler_characteristic(), 0);
        assert!(outward(&s, |m| {
            let rho = m.x.hypot(m.y);
            Vec3::new(2.0 * m.x / rho, 2.0 * m.y / rho, 0.0)
        }));
        assert!(TriangulatedSurface::torus(0.5, 2.0, 24, 12).is_err());
    }

    #[test]
    fn open_or_misoriented_meshes_are_rejected() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        assert!(matches!(TriangulatedSurface::new(v.clone(), vec![[0, 1, 2]]), Err(Error::Mesh(_))));
        let tet = vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]];
        TriangulatedSurface::new(v.clone(), tet.clone()).unwrap();
        let mut bad = tet;
        bad[0] = [0, 1, 2];
        assert!(TriangulatedSurface::new(v, bad).is_err());
    }

    #[test]
    fn off_and_obj_round_trip() {
        let s = TriangulatedSurface::icosphere(1, 1.0, Vec3::zeros());
        let mut buf = Vec::new();
        s.write_off(&mut buf).unwrap();
        let back = TriangulatedSurface::read_off(&buf[..]).unwrap();
        assert_eq!(back.triangles, s.triangles);
        assert!(back.vertices.iter().zip(&s.vertices).all(|(a, b)| (a - b).norm() <= 1e-15));

        let mut obj = String::from("# tetrahedron\n");
        for v in [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
            obj.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
        }
        obj.push_str("f 1 3 2\nf 1/1 2/2 4/4\nf 2 3 4\nf -4 -1 -2\n");
        let t = TriangulatedSurface::read_obj(obj.as_bytes()).unwrap();
        assert_eq!(t.euler_characteristic(), 2);
        assert!(TriangulatedSurface::read_obj("v 0 0 0\nf 1 2 3 4\n".as_bytes()).is_err());
    }

    #[test]
    fn subdivision_preserves_topology() {
        let s = TriangulatedSurface::torus(2.0, 0.5, 12, 6).unwrap().subdivide(None);
        s.validate().unwrap();
        assert_eq!(s.euler_characteristic(), 0);
    }
}
