//! Topological labels of a director field around the post.
//!
//! Numbering used throughout: post corners `(0,0)`, `(Lp,0)`, `(Lp,Lp)`, `(0,Lp)`
//! carry vertical edges 1..4. Lateral face `f` (1..4) spans vertical edges `f`
//! and `f + 1` (face 1 is `y = 0`, face 2 `x = Lp`, face 3 `y = Lp`, face 4
//! `x = 0`). Horizontal edges follow the same order on the top face and the base.
//! Vertices 0..3 are the top-face corners, 4..7 the base corners, each list in
//! corner order.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::director::DirectorField;
use crate::geometry::{GridGeometry, NodeClass};
use crate::vec3::Vec3;
use crate::Error;

/// Default `|n_z|` threshold marking a node as planar.
pub const PLANAR_THRESHOLD: f64 = 0.15;

/// Minimum `|n . e|` on an edge node; edges are pinned so anything less is corruption.
const EDGE_ALIGNMENT: f64 = 0.9;

/// Lattice offsets of the post corners from the post origin, in units of the post width.
const CORNERS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

/// Signs of `n` along each post edge relative to `+z` (vertical) and the
/// canonical `+x` / `+y` pattern (horizontal).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSignature {
    pub vertical: [i8; 4],
    pub horizontal_top: [i8; 4],
    pub horizontal_base: [i8; 4],
}

/// Surface a path lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaceId {
    /// Lateral post face 1..4.
    Lateral(u8),
    Top,
    Substrate,
    /// User-supplied plane.
    Custom,
}

/// An ordered node path in one plane, with the in-plane basis used to measure angles.
#[derive(Clone, Debug, PartialEq)]
pub struct FacePath {
    pub face: FaceId,
    pub nodes: Vec<usize>,
    pub basis: [Vec3; 2],
}

impl FacePath {
    /// Path in an arbitrary plane spanned by `e1`, `e2` (orthonormal).
    pub fn custom(nodes: Vec<usize>, e1: Vec3, e2: Vec3) -> Self {
        FacePath {
            face: FaceId::Custom,
            nodes,
            basis: [e1, e2],
        }
    }

    /// Horizontal row at height index `k` across lateral face `face` (1..4),
    /// from vertical edge `face` to vertical edge `face + 1`, endpoints included.
    pub fn lateral_row(geom: &GridGeometry, face: u8, k: usize) -> Result<Self, Error> {
        if !geom.has_post() {
            return Err(Error::NoPost);
        }
        if !(1..=4).contains(&face) || k == 0 || k >= geom.post_top() {
            return Err(Error::OutOfRange {
                what: "lateral face row",
                index: face as usize * 1000 + k,
            });
        }
        let (a, b) = (CORNERS[face as usize - 1], CORNERS[face as usize % 4]);
        let o = geom.post_origin();
        let p = geom.post_cells();
        let step = |from: usize, to: usize, t: usize| -> usize {
            if to >= from {
                o + from * p + (to - from) * t
            } else {
                o + from * p - t
            }
        };
        let nodes = (0..=p)
            .map(|t| geom.node_index(step(a.0, b.0, t), step(a.1, b.1, t), k))
            .collect();
        let e1 = if face % 2 == 1 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            Vec3::new(0.0, 1.0, 0.0)
        };
        Ok(FacePath {
            face: FaceId::Lateral(face),
            nodes,
            basis: [e1, Vec3::new(0.0, 0.0, 1.0)],
        })
    }

    /// Row of the top face at lattice offset `row` (0..=Lp/delta) from `y = 0`,
    /// running from the `x = 0` edge to the `x = Lp` edge.
    pub fn top_row(geom: &GridGeometry, row: usize) -> Result<Self, Error> {
        if !geom.has_post() {
            return Err(Error::NoPost);
        }
        let p = geom.post_cells();
        if row == 0 || row >= p {
            return Err(Error::OutOfRange {
                what: "top face row",
                index: row,
            });
        }
        let o = geom.post_origin();
        let nodes = (0..=p)
            .map(|t| geom.node_index(o + t, o + row, geom.post_top()))
            .collect();
        Ok(FacePath {
            face: FaceId::Top,
            nodes,
            basis: [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
        })
    }

    /// Substrate path hugging base corner `corner` (0..3) one lattice step
    /// outside the post, from the adjacent x-parallel base edge to the adjacent
    /// y-parallel base edge.
    pub fn substrate_around_corner(geom: &GridGeometry, corner: usize) -> Result<Self, Error> {
        if !geom.has_post() {
            return Err(Error::NoPost);
        }
        if corner > 3 {
            return Err(Error::OutOfRange {
                what: "corner",
                index: corner,
            });
        }
        let (ci, cj) = corner_ij(geom, corner);
        // outward directions away from the post
        let sx: isize = if CORNERS[corner].0 == 0 { -1 } else { 1 };
        let sy: isize = if CORNERS[corner].1 == 0 { -1 } else { 1 };
        let steps = [
            (-sx, 0),
            (-sx, sy),
            (0, sy),
            (sx, sy),
            (sx, 0),
            (sx, -sy),
            (0, -sy),
        ];
        let nodes = steps
            .iter()
            .map(|&(di, dj)| geom.node_index(geom.wrap(ci, di), geom.wrap(cj, dj), 0))
            .collect();
        Ok(FacePath {
            face: FaceId::Substrate,
            nodes,
            basis: [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
        })
    }
}

/// Continuous in-plane rotation of `n` along a path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacePathRotation {
    pub face: FaceId,
    pub start: usize,
    pub end: usize,
    /// Unwrapped total rotation in radians.
    pub net_rotation: f64,
    /// Whole extra turns beyond the principal rotation.
    pub kink: i32,
}

/// Signed solid angle swept by `n` over a small surface around a post vertex.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexDegree {
    pub vertex: usize,
    pub solid_angle: f64,
}

fn corner_ij(geom: &GridGeometry, corner: usize) -> (usize, usize) {
    let o = geom.post_origin();
    let p = geom.post_cells();
    (o + CORNERS[corner].0 * p, o + CORNERS[corner].1 * p)
}

fn edge_sign(field: &DirectorField, nodes: &[usize], axis: Vec3, id: usize) -> Result<i8, Error> {
    let mut sign = 0i8;
    for &n in nodes {
        let c = field.get(n).dot(&axis);
        if c.abs() < EDGE_ALIGNMENT {
            return Err(Error::CorruptEdge(id));
        }
        let s = if c > 0.0 { 1 } else { -1 };
        if sign != 0 && s != sign {
            return Err(Error::CorruptEdge(id));
        }
        sign = s;
    }
    if sign == 0 {
        return Err(Error::CorruptEdge(id));
    }
    Ok(sign)
}

/// Interior nodes of vertical edge `e` (1..4).
pub fn vertical_edge_nodes(geom: &GridGeometry, e: usize) -> Vec<usize> {
    let (i, j) = corner_ij(geom, e - 1);
    (1..geom.post_top())
        .map(|k| geom.node_index(i, j, k))
        .collect()
}

/// Interior nodes of horizontal edge `e` (1..4) at height index `k`, with
/// the edge axis.
fn horizontal_edge_nodes(geom: &GridGeometry, e: usize, k: usize) -> (Vec<usize>, Vec3) {
    let (ai, aj) = corner_ij(geom, e - 1);
    let (bi, bj) = corner_ij(geom, e % 4);
    let p = geom.post_cells();
    let nodes = (1..p)
        .map(|t| {
            let i = if bi == ai { ai } else { ai.min(bi) + t };
            let j = if bj == aj { aj } else { aj.min(bj) + t };
            geom.node_index(i, j, k)
        })
        .collect();
    let axis = if bi == ai {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        Vec3::new(1.0, 0.0, 0.0)
    };
    (nodes, axis)
}

/// Reads the orientation of every post edge. Edge ids in errors: 1..4
/// vertical, 5..8 top horizontal, 9..12 base horizontal.
pub fn edge_orientation_signature(field: &DirectorField) -> Result<EdgeSignature, Error> {
    let geom = field.geometry();
    if !geom.has_post() {
        return Err(Error::NoPost);
    }
    if geom.post_top() < 2 {
        return Err(Error::InvalidParams(
            "post is one lattice step tall; vertical edges have no interior nodes".into(),
        ));
    }
    let z = Vec3::new(0.0, 0.0, 1.0);
    let mut sig = EdgeSignature {
        vertical: [0; 4],
        horizontal_top: [0; 4],
        horizontal_base: [0; 4],
    };
    for e in 1..=4 {
        sig.vertical[e - 1] = edge_sign(field, &vertical_edge_nodes(geom, e), z, e)?;
        let (nodes, axis) = horizontal_edge_nodes(geom, e, geom.post_top());
        sig.horizontal_top[e - 1] = edge_sign(field, &nodes, axis, 4 + e)?;
        let (nodes, axis) = horizontal_edge_nodes(geom, e, 0);
        sig.horizontal_base[e - 1] = edge_sign(field, &nodes, axis, 8 + e)?;
    }
    Ok(sig)
}

/// Slack on the half-turn boundary; rotations within it of `+-pi` count as half-turns.
const HALF_TURN_TOL: f64 = 1e-9;

/// Whole extra turns in an unwrapped rotation, so that
/// `net = principal + 2 pi kink` with `principal` in `[-pi, pi]`. Half-turns in
/// either sense have kink zero.
pub fn kink_number(net_rotation: f64) -> i32 {
    let turns = net_rotation / (2.0 * PI);
    let whole = turns.trunc();
    let frac = turns - whole;
    if frac.abs() <= 0.5 + HALF_TURN_TOL {
        whole as i32
    } else {
        (whole + frac.signum()) as i32
    }
}

/// Rotation with whole extra turns removed; lies in `[-pi, pi]`.
pub fn principal_angle(net_rotation: f64) -> f64 {
    net_rotation - 2.0 * PI * kink_number(net_rotation) as f64
}

/// Measures the in-plane rotation of `n` along `path`.
pub fn face_path_rotation(
    field: &DirectorField,
    path: &FacePath,
) -> Result<FacePathRotation, Error> {
    if path.nodes.len() < 2 {
        return Err(Error::OutOfRange {
            what: "path length",
            index: path.nodes.len(),
        });
    }
    let [e1, e2] = path.basis;
    let angle = |node: usize| -> Result<f64, Error> {
        let n = field.get(node);
        let (a, b) = (n.dot(&e1), n.dot(&e2));
        if a.hypot(b) <= 0.5 {
            return Err(Error::ProjectionDegenerate(node));
        }
        Ok(b.atan2(a))
    };
    let mut prev = angle(path.nodes[0])?;
    let mut total = 0.0;
    for &node in &path.nodes[1..] {
        let cur = angle(node)?;
        let mut step = cur - prev;
        step -= 2.0 * PI * (step / (2.0 * PI)).round();
        if step.abs() >= PI / 2.0 {
            return Err(Error::PathTooCoarse(node));
        }
        total += step;
        prev = cur;
    }
    Ok(FacePathRotation {
        face: path.face,
        start: path.nodes[0],
        end: *path.nodes.last().unwrap(),
        net_rotation: total,
        kink: kink_number(total),
    })
}

/// Signed solid angle of the triangle with unit corners `a, b, c`.
fn triangle_solid_angle(a: &Vec3, b: &Vec3, c: &Vec3, vertex: usize) -> Result<f64, Error> {
    let num = a.dot(&b.cross(c));
    let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    if num.abs() < 1e-9 && den.abs() < 1e-9 {
        return Err(Error::DegenerateTriangle(vertex));
    }
    Ok(2.0 * num.atan2(den))
}

/// Oriented quads (outward normal) of the surface around post vertex `vertex`
/// (0..7). The surface is made of the faces of the cluster of liquid-crystal
/// cells touching the vertex that border other liquid-crystal cells; its rim
/// lies on the post faces and the substrate.
pub fn vertex_surface(geom: &GridGeometry, vertex: usize) -> Result<Vec<[usize; 4]>, Error> {
    if !geom.has_post() {
        return Err(Error::NoPost);
    }
    if vertex > 7 {
        return Err(Error::OutOfRange {
            what: "vertex",
            index: vertex,
        });
    }
    let (ci, cj) = corner_ij(geom, vertex % 4);
    let ck = if vertex < 4 { geom.post_top() } else { 0 };
    let apex = geom.node_index(ci, cj, ck);
    let cell_at = |node: usize, di: isize, dj: isize, dk: isize| -> Option<usize> {
        geom.offset(node, di, dj, dk)
            .filter(|&b| geom.cell_with_base(b).is_some())
    };
    let mut cluster = Vec::new();
    for dk in [-1, 0] {
        for dj in [-1, 0] {
            for di in [-1, 0] {
                if let Some(b) = cell_at(apex, di, dj, dk) {
                    cluster.push(b);
                }
            }
        }
    }
    let mut quads = Vec::new();
    for &base in &cluster {
        let corners = geom.corners_of(base);
        for axis in 0..3 {
            for side in 0..2 {
                let mut d = [0isize; 3];
                d[axis] = if side == 1 { 1 } else { -1 };
                let Some(nb) = cell_at(base, d[0], d[1], d[2]) else {
                    continue; // post, substrate or plate
                };
                if cluster.contains(&nb) {
                    continue;
                }
                let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
                let pick = |ub: usize, uc: usize| -> usize {
                    let mut bits = [0usize; 3];
                    bits[axis] = side;
                    bits[b] = ub;
                    bits[c] = uc;
                    corners[bits[0] | bits[1] << 1 | bits[2] << 2]
                };
                let mut q = [pick(0, 0), pick(1, 0), pick(1, 1), pick(0, 1)];
                if side == 0 {
                    q.reverse();
                }
                quads.push(q);
            }
        }
    }
    check_surface(geom, &quads)?;
    Ok(quads)
}

/// The quads must form an oriented surface whose rim is a closed loop on
/// constrained boundary nodes.
fn check_surface(geom: &GridGeometry, quads: &[[usize; 4]]) -> Result<(), Error> {
    if quads.is_empty() {
        return Err(Error::SurfaceOpen("no faces".into()));
    }
    let mut directed: HashMap<(usize, usize), i32> = HashMap::new();
    for q in quads {
        for t in 0..4 {
            *directed.entry((q[t], q[(t + 1) % 4])).or_default() += 1;
        }
    }
    let mut rim_degree: HashMap<usize, usize> = HashMap::new();
    for (&(a, b), &count) in &directed {
        let back = directed.get(&(b, a)).copied().unwrap_or(0);
        if count > 1 || back > 1 {
            return Err(Error::SurfaceOpen(format!(
                "edge {a}-{b} used more than twice"
            )));
        }
        if back == 0 {
            for n in [a, b] {
                let on_boundary = matches!(
                    geom.class(n),
                    NodeClass::SubstrateTangent
                        | NodeClass::PostFaceTangent { .. }
                        | NodeClass::EdgeFixed { .. }
                        | NodeClass::TopFixed
                );
                if !on_boundary {
                    return Err(Error::SurfaceOpen(format!(
                        "rim passes through bulk node {n}"
                    )));
                }
                *rim_degree.entry(n).or_default() += 1;
            }
        }
    }
    if rim_degree.values().any(|&d| d != 2) {
        return Err(Error::SurfaceOpen("rim is not a closed loop".into()));
    }
    Ok(())
}

/// Signed solid angle of the image of the vertex surface under `n`, outward orientation.
pub fn vertex_degree(field: &DirectorField, vertex: usize) -> Result<VertexDegree, Error> {
    let quads = vertex_surface(field.geometry(), vertex)?;
    let mut total = 0.0;
    for q in &quads {
        let v = q.map(|n| field.get(n));
        total += triangle_solid_angle(&v[0], &v[1], &v[2], vertex)?;
        total += triangle_solid_angle(&v[0], &v[2], &v[3], vertex)?;
    }
    Ok(VertexDegree {
        vertex,
        solid_angle: total,
    })
}

/// True when every interior row of lateral face `face` (1..4) has a planar
/// point: a node with `|n_z| <= threshold`, or a sign change of `n_z` between
/// neighbouring nodes of the row (edge endpoints included).
pub fn planar_band(field: &DirectorField, face: u8, threshold: f64) -> Result<bool, Error> {
    let geom = field.geometry();
    if !geom.has_post() {
        return Err(Error::NoPost);
    }
    if geom.post_top() < 2 {
        return Ok(false);
    }
    for k in 1..geom.post_top() {
        let row = FacePath::lateral_row(geom, face, k)?;
        let nz: Vec<f64> = row.nodes.iter().map(|&n| field.get(n).z).collect();
        let inner = &nz[1..nz.len() - 1];
        let flat = inner.iter().any(|v| v.abs() <= threshold);
        let crossing = nz.windows(2).any(|w| w[0] * w[1] < 0.0);
        if !(flat || crossing) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// All topological diagnostics of a field with a post.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub signature: EdgeSignature,
    /// Every lateral-face row, faces 1..4, bottom to top.
    pub lateral_rotations: Vec<FacePathRotation>,
    /// Substrate paths around base corners 0..3.
    pub substrate_rotations: Vec<FacePathRotation>,
    pub vertex_degrees: Vec<VertexDegree>,
    pub planar_bands: [bool; 4],
}

impl Diagnostics {
    pub fn max_abs_kink(&self) -> i32 {
        self.lateral_rotations
            .iter()
            .chain(&self.substrate_rotations)
            .map(|r| r.kink.abs())
            .max()
            .unwrap_or(0)
    }

    /// Kink numbers in path order, for before/after comparisons.
    pub fn kinks(&self) -> Vec<i32> {
        self.lateral_rotations
            .iter()
            .chain(&self.substrate_rotations)
            .map(|r| r.kink)
            .collect()
    }

    /// Sign of each vertex solid angle (0 when below `tol` in magnitude).
    pub fn vertex_signs(&self, tol: f64) -> Vec<i8> {
        self.vertex_degrees
            .iter()
            .map(|v| {
                if v.solid_angle > tol {
                    1
                } else if v.solid_angle < -tol {
                    -1
                } else {
                    0
                }
            })
            .collect()
    }
}

pub fn diagnose(field: &DirectorField) -> Result<Diagnostics, Error> {
    diagnose_with_threshold(field, PLANAR_THRESHOLD)
}

pub fn diagnose_with_threshold(
    field: &DirectorField,
    threshold: f64,
) -> Result<Diagnostics, Error> {
    let geom = field.geometry();
    let signature = edge_orientation_signature(field)?;
    let mut lateral_rotations = Vec::new();
    for face in 1..=4u8 {
        for k in 1..geom.post_top() {
            let path = FacePath::lateral_row(geom, face, k)?;
            lateral_rotations.push(face_path_rotation(field, &path)?);
        }
    }
    let substrate_rotations = (0..4)
        .map(|c| face_path_rotation(field, &FacePath::substrate_around_corner(geom, c)?))
        .collect::<Result<Vec<_>, _>>()?;
    let vertex_degrees = (0..8)
        .map(|v| vertex_degree(field, v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut planar_bands = [false; 4];
    for (f, slot) in planar_bands.iter_mut().enumerate() {
        *slot = planar_band(field, f as u8 + 1, threshold)?;
    }
    Ok(Diagnostics {
        signature,
        lateral_rotations,
        substrate_rotations,
        vertex_degrees,
        planar_bands,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::director::{trial_field, TopologyClass};
    use crate::geometry::CellParams;
    use std::f64::consts::FRAC_PI_2;
    use std::sync::Arc;

    fn geom(h: f64, n: usize) -> Arc<GridGeometry> {
        Arc::new(GridGeometry::build(CellParams::new(h, n)).unwrap())
    }

    #[test]
    fn kink_from_unwrapped_rotation() {
        assert_eq!(kink_number(FRAC_PI_2), 0);
        assert_eq!(kink_number(-FRAC_PI_2), 0);
        assert_eq!(kink_number(5.0 * FRAC_PI_2), 1);
        assert_eq!(kink_number(-5.0 * FRAC_PI_2), -1);
        assert_eq!(kink_number(PI), 0);
        assert_eq!(kink_number(-PI), 0);
        assert_eq!(kink_number(-PI - 1e-12), 0);
        assert_eq!(kink_number(3.0 * PI), 1);
        assert_eq!(kink_number(-3.5 * PI), -2);
        assert!((principal_angle(-PI) + PI).abs() < 1e-15);
        assert!((principal_angle(-3.5 * PI) - 0.5 * PI).abs() < 1e-12);
    }

    fn rotating_row(total: f64) -> (DirectorField, FacePath) {
        let g = geom(0.5, 32);
        let k = g.nz() - 3;
        let nodes: Vec<usize> = (0..g.nx()).map(|i| g.node_index(i, 3, k)).collect();
        let count = nodes.len() as f64 - 1.0;
        let mut f = DirectorField::uniform(g.clone(), Vec3::new(0.0, 0.0, 1.0));
        for (t, &n) in nodes.iter().enumerate() {
            let a = total * t as f64 / count;
            f.set(n, Vec3::new(a.cos(), a.sin(), 0.0));
        }
        let path = FacePath::custom(nodes, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0));
        (f, path)
    }

    #[test]
    fn synthetic_five_quarter_turns_has_one_kink() {
        let (f, path) = rotating_row(5.0 * FRAC_PI_2);
        let r = face_path_rotation(&f, &path).unwrap();
        assert!((r.net_rotation - 5.0 * FRAC_PI_2).abs() < 1e-12);
        assert_eq!(r.kink, 1);
        assert_eq!(r.face, FaceId::Custom);
    }

    #[test]
    fn rotation_is_additive_over_split_paths() {
        let (f, path) = rotating_row(-3.0 * PI);
        let whole = face_path_rotation(&f, &path).unwrap().net_rotation;
        let mid = path.nodes.len() / 3;
        let a = FacePath::custom(path.nodes[..=mid].to_vec(), path.basis[0], path.basis[1]);
        let b = FacePath::custom(path.nodes[mid..].to_vec(), path.basis[0], path.basis[1]);
        let sum = face_path_rotation(&f, &a).unwrap().net_rotation
            + face_path_rotation(&f, &b).unwrap().net_rotation;
        assert!((whole - sum).abs() < 1e-12);
        assert!((whole + 3.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn path_errors() {
        let (mut f, path) = rotating_row(FRAC_PI_2);
        f.set(path.nodes[4], Vec3::new(0.0, 0.0, 1.0));
        assert!(matches!(
            face_path_rotation(&f, &path),
            Err(Error::ProjectionDegenerate(n)) if n == path.nodes[4]
        ));
        let (mut f, path) = rotating_row(0.0);
        f.set(path.nodes[2], Vec3::new(-1.0, 0.0, 0.0));
        assert!(matches!(
            face_path_rotation(&f, &path),
            Err(Error::PathTooCoarse(_))
        ));
    }

    #[test]
    fn substrate_corner_path_turns_a_quarter() {
        let g = geom(0.5, 16);
        let f = trial_field(&g, TopologyClass::T).unwrap();
        for corner in 0..4 {
            let path = FacePath::substrate_around_corner(&g, corner).unwrap();
            let r = face_path_rotation(&f, &path).unwrap();
            assert!(
                (r.net_rotation.abs() - FRAC_PI_2).abs() < 1e-9,
                "{corner}: {}",
                r.net_rotation
            );
            assert_eq!(r.kink, 0);
        }
    }

    #[test]
    fn lateral_rows_join_adjacent_edges() {
        let g = geom(0.5, 16);
        for face in 1..=4u8 {
            let row = FacePath::lateral_row(&g, face, 2).unwrap();
            assert_eq!(row.nodes.len(), g.post_cells() + 1);
            let first = vertical_edge_nodes(&g, face as usize);
            let last = vertical_edge_nodes(&g, face as usize % 4 + 1);
            assert_eq!(row.nodes[0], first[1]);
            assert_eq!(*row.nodes.last().unwrap(), last[1]);
            for &n in &row.nodes[1..row.nodes.len() - 1] {
                assert!(matches!(g.class(n), NodeClass::PostFaceTangent { .. }));
            }
        }
        assert!(FacePath::lateral_row(&g, 5, 2).is_err());
        assert!(FacePath::lateral_row(&g, 1, g.post_top()).is_err());
    }

    #[test]
    fn trial_signatures_match_table() {
        let g = geom(0.5, 16);
        for topo in TopologyClass::ALL {
            let f = trial_field(&g, topo).unwrap();
            let sig = edge_orientation_signature(&f).unwrap();
            assert_eq!(sig.vertical, topo.vertical_signature());
            assert_eq!(sig.horizontal_top, [1; 4]);
            assert_eq!(sig.horizontal_base, [1; 4]);
        }
    }

    #[test]
    fn flipped_edge_node_is_corrupt() {
        let g = geom(0.5, 16);
        let mut f = trial_field(&g, TopologyClass::T).unwrap();
        let node = vertical_edge_nodes(&g, 3)[2];
        f.set(node, -f.get(node));
        assert!(matches!(
            edge_orientation_signature(&f),
            Err(Error::CorruptEdge(3))
        ));
        let mut f = trial_field(&g, TopologyClass::T).unwrap();
        f.set(node, Vec3::new(0.6, 0.0, 0.8));
        assert!(matches!(
            edge_orientation_signature(&f),
            Err(Error::CorruptEdge(3))
        ));
    }

    #[test]
    fn flat_cell_has_no_post_diagnostics() {
        let g = geom(0.0, 8);
        let f = trial_field(&g, TopologyClass::T).unwrap();
        assert!(matches!(diagnose(&f), Err(Error::NoPost)));
        assert!(matches!(vertex_degree(&f, 0), Err(Error::NoPost)));
    }

    #[test]
    fn vertex_surfaces_have_closed_rims() {
        for n in [8, 16] {
            let g = geom(0.5, n);
            for v in 0..8 {
                let quads = vertex_surface(&g, v).unwrap();
                // a 2x2x2 block minus the post cell exposes 24 - 3 faces; at the base 3 + 6
                assert_eq!(quads.len(), if v < 4 { 21 } else { 9 }, "vertex {v}");
            }
        }
        assert!(vertex_surface(&geom(0.5, 8), 8).is_err());
    }

    #[test]
    fn trial_t_vertices_trap_quarter_spheres() {
        let g = geom(1.0, 16);
        let f = trial_field(&g, TopologyClass::T).unwrap();
        let d = diagnose(&f).unwrap();
        for v in &d.vertex_degrees {
            assert!((v.solid_angle.abs() - FRAC_PI_2).abs() < 0.2, "{v:?}");
        }
        // source (0,0,h) and sink (Lp,Lp,h) are related by a half-turn about the post axis
        assert_eq!(d.vertex_signs(0.1)[..4], [1, -1, 1, -1]);
        assert_eq!(d.max_abs_kink(), 0);
    }

    #[test]
    fn planar_band_patterns_of_trials() {
        let g = geom(1.0, 16);
        let expect = [
            (TopologyClass::T, [false; 4]),
            (TopologyClass::P1, [false, true, true, false]),
            (TopologyClass::P2, [true, false, true, false]),
            (TopologyClass::P3, [true; 4]),
        ];
        for (topo, bands) in expect {
            let f = trial_field(&g, topo).unwrap();
            let got: Vec<bool> = (1..=4)
                .map(|face| planar_band(&f, face, PLANAR_THRESHOLD).unwrap())
                .collect();
            assert_eq!(got, bands, "{topo}");
        }
    }
}
