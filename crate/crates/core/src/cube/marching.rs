//! Marching-cubes isosurface extraction.
//!
//! The 256-case table is derived at first use from the face rule below
//! rather than written out by hand. On every face of a cell, each maximal
//! run of inside corners (`v ≥ iso`) is cut off by one segment; a face with
//! two diagonal inside corners therefore keeps them apart. Adjacent cells
//! see the same four values on their shared face, so they produce the same
//! segments and the mesh has no cracks. Segments are oriented so the inside
//! region lies to their left when the face is viewed from outside the cell;
//! chaining them gives closed loops on the cell boundary, each of which is
//! fan-triangulated.

use std::collections::HashMap;
use std::sync::OnceLock;

use super::{CubeError, SpaceTimeCube};

/// Vertices are in cube coordinates `(x, y, t)`; triangles wind so their
/// right-hand normal points away from the `≥ isovalue` region.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Unnormalised right-hand normal of triangle `i`.
    pub fn normal(&self, i: usize) -> [f64; 3] {
        let [a, b, c] = self.triangles[i].map(|k| self.vertices[k as usize]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        cross(u, v)
    }

    /// Every directed edge is matched by exactly one opposite edge, which
    /// means the surface is closed and consistently oriented.
    pub fn is_closed(&self) -> bool {
        let mut count: HashMap<(u32, u32), i32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a, b)).or_default() += 1;
            }
        }
        count
            .iter()
            .all(|(&(a, b), &n)| n == 1 && count.get(&(b, a)) == Some(&1))
    }

    /// `V − E + F` over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut verts = std::collections::HashSet::new();
        let mut edges = std::collections::HashSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                verts.insert(a);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        verts.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }
}

fn cross(u: [f64; 3], v: [f64; 3]) -> [f64; 3] {
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

/// Corner `c` of a cell sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
const fn corner_offset(c: u8) -> [usize; 3] {
    [(c & 1) as usize, ((c >> 1) & 1) as usize, ((c >> 2) & 1) as usize]
}

/// The 12 cell edges as (lower corner, axis), numbered axis-major.
fn edges() -> [(u8, usize); 12] {
    let mut out = [(0u8, 0usize); 12];
    let mut k = 0;
    for axis in 0..3 {
        for c in 0u8..8 {
            if c & (1 << axis) == 0 {
                out[k] = (c, axis);
                k += 1;
            }
        }
    }
    out
}

fn edge_between(a: u8, b: u8) -> u8 {
    let (lo, diff) = (a.min(b), a ^ b);
    let axis = diff.trailing_zeros() as usize;
    edges()
        .iter()
        .position(|&(c, ax)| c == lo && ax == axis)
        .expect("corners share an edge") as u8
}

/// Corners of each face, counter-clockwise as seen from outside the cell.
fn faces() -> [[u8; 4]; 6] {
    let mut out = [[0u8; 4]; 6];
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2u8 {
            let at = |du: u8, dv: u8| (side << axis) | (du << u) | (dv << v);
            // (u, v, axis) is right-handed, so this order is counter-clockwise
            // seen from the +axis side.
            let mut ring = [at(0, 0), at(1, 0), at(1, 1), at(0, 1)];
            if side == 0 {
                ring.reverse();
            }
            out[axis * 2 + side as usize] = ring;
        }
    }
    out
}

/// Edge loops for each of the 256 inside/outside corner patterns.
fn case_table() -> &'static [Vec<Vec<u8>>; 256] {
    static TABLE: OnceLock<[Vec<Vec<u8>>; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|case| case_loops(case as u8)))
}

fn case_loops(case: u8) -> Vec<Vec<u8>> {
    let inside = |c: u8| case & (1 << c) != 0;
    let mut next = [u8::MAX; 12];
    for ring in faces() {
        let flags = ring.map(inside);
        for a in 0..4 {
            if !flags[a] || flags[(a + 3) % 4] {
                continue;
            }
            let mut b = a;
            while flags[(b + 1) % 4] && (b + 1) % 4 != a {
                b = (b + 1) % 4;
            }
            if (b + 1) % 4 == a {
                break; // whole face inside
            }
            let exit = edge_between(ring[b], ring[(b + 1) % 4]);
            let entry = edge_between(ring[(a + 3) % 4], ring[a]);
            debug_assert_eq!(next[exit as usize], u8::MAX);
            next[exit as usize] = entry;
        }
    }
    let mut loops = Vec::new();
    let mut seen = [false; 12];
    for start in 0..12u8 {
        if next[start as usize] == u8::MAX || seen[start as usize] {
            continue;
        }
        let mut ring = Vec::new();
        let mut e = start;
        while !seen[e as usize] {
            seen[e as usize] = true;
            ring.push(e);
            e = next[e as usize];
        }
        debug_assert_eq!(e, start);
        loops.push(ring);
    }
    loops
}

/// Extracts the `isovalue` level set over cells whose eight voxels are all
/// active. Output order is fixed by a t, y, x scan.
pub fn isosurface(cube: &SpaceTimeCube, isovalue: f64) -> Result<TriangleMesh, CubeError> {
    if !isovalue.is_finite() {
        return Err(CubeError::NonFiniteIsovalue(isovalue));
    }
    let (nx, ny, nt) = cube.dims();
    let mut mesh = TriangleMesh::default();
    if nx < 2 || ny < 2 || nt < 2 {
        return Ok(mesh);
    }
    let table = case_table();
    let edge_defs = edges();
    let mut vertex_of: HashMap<u64, u32> = HashMap::new();
    let vals = cube.values();
    let at = |x: usize, y: usize, t: usize| vals[(t * ny + y) * nx + x];

    let mut corner = [0f32; 8];
    let mut local = [0u32; 12];
    for t in 0..nt - 1 {
        for y in 0..ny - 1 {
            for x in 0..nx - 1 {
                let mut case = 0u8;
                let mut valid = true;
                for c in 0..8u8 {
                    let [dx, dy, dt] = corner_offset(c);
                    let v = at(x + dx, y + dy, t + dt);
                    if v.is_nan() {
                        valid = false;
                        break;
                    }
                    corner[c as usize] = v;
                    if v as f64 >= isovalue {
                        case |= 1 << c;
                    }
                }
                if !valid || case == 0 || case == 255 {
                    continue;
                }
                let loops = &table[case as usize];
                for ring in loops {
                    for &e in ring {
                        let (c, axis) = edge_defs[e as usize];
                        let [dx, dy, dt] = corner_offset(c);
                        let (px, py, pt) = (x + dx, y + dy, t + dt);
                        let key = (((pt * ny + py) * nx + px) as u64) * 3 + axis as u64;
                        local[e as usize] = *vertex_of.entry(key).or_insert_with(|| {
                            let va = corner[c as usize] as f64;
                            let vb = corner[(c | (1 << axis)) as usize] as f64;
                            let s = (isovalue - va) / (vb - va);
                            let mut p = [px as f64, py as f64, pt as f64];
                            p[axis] += s;
                            mesh.vertices.push(p);
                            (mesh.vertices.len() - 1) as u32
                        });
                    }
                    let first = local[ring[0] as usize];
                    for k in 1..ring.len() - 1 {
                        let b = local[ring[k] as usize];
                        let c = local[ring[k + 1] as usize];
                        // the loop winds around the inside region; reverse it
                        // so normals face away from it
                        let tri = [first, c, b];
                        let i = mesh.triangles.len();
                        mesh.triangles.push(tri);
                        let n = mesh.normal(i);
                        if n == [0.0, 0.0, 0.0] {
                            mesh.triangles.pop();
                        }
                    }
                }
            }
        }
    }
    Ok(mesh)
}
