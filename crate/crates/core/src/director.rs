//! Discrete director fields and the topological trial configurations.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::project_field;
use crate::geometry::{GridGeometry, NodeClass};
use crate::vec3::{Vec3, Z_HAT};
use crate::Error;

const DEGENERATE: f64 = 1e-12;

/// The four low-energy topologies, labelled by their vertical edge orientations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TopologyClass {
    T,
    P1,
    P2,
    P3,
}

impl TopologyClass {
    pub const ALL: [TopologyClass; 4] = [
        TopologyClass::T,
        TopologyClass::P1,
        TopologyClass::P2,
        TopologyClass::P3,
    ];

    /// Signs of `n . z` on vertical edges 1..4 at `(0,0)`, `(Lp,0)`, `(Lp,Lp)`, `(0,Lp)`.
    pub fn vertical_signature(self) -> [i8; 4] {
        match self {
            TopologyClass::T => [1, 1, 1, 1],
            TopologyClass::P1 => [1, 1, -1, 1],
            TopologyClass::P2 => [1, -1, -1, 1],
            TopologyClass::P3 => [1, -1, 1, -1],
        }
    }

    /// Inverse of [`vertical_signature`](Self::vertical_signature).
    pub fn from_signature(sig: [i8; 4]) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.vertical_signature() == sig)
    }

    pub fn name(self) -> &'static str {
        match self {
            TopologyClass::T => "T",
            TopologyClass::P1 => "P1",
            TopologyClass::P2 => "P2",
            TopologyClass::P3 => "P3",
        }
    }

    /// Vertical-edge modulation of the trial `N_z` below the post top, as a
    /// function of the phases `px = pi x / Lp`, `py = pi y / Lp`.
    fn vertical_profile(self, px: f64, py: f64) -> f64 {
        match self {
            TopologyClass::T => 1.0,
            TopologyClass::P1 => 1.0 + px.cos() + py.cos(),
            TopologyClass::P2 => px.cos(),
            TopologyClass::P3 => px.cos() * py.cos(),
        }
    }
}

impl fmt::Display for TopologyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TopologyClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_uppercase().as_str() {
            "T" => Ok(TopologyClass::T),
            "P1" => Ok(TopologyClass::P1),
            "P2" => Ok(TopologyClass::P2),
            "P3" => Ok(TopologyClass::P3),
            other => Err(Error::UnknownTopology(other.to_string())),
        }
    }
}

/// One unit vector per active node. Excluded nodes hold the zero vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectorField {
    geom: Arc<GridGeometry>,
    values: Vec<Vec3>,
}

impl DirectorField {
    /// Field with the same raw value at every active node.
    pub fn uniform(geom: Arc<GridGeometry>, value: Vec3) -> Self {
        Self::from_fn(geom, |_| value)
    }

    /// Field sampled from a function of position. Values are stored as given.
    pub fn from_fn(geom: Arc<GridGeometry>, f: impl Fn(Vec3) -> Vec3) -> Self {
        let values = (0..geom.node_count())
            .map(|n| {
                if geom.class(n).is_active() {
                    f(geom.coords(n))
                } else {
                    Vec3::zeros()
                }
            })
            .collect();
        DirectorField { geom, values }
    }

    pub fn from_values(geom: Arc<GridGeometry>, values: Vec<Vec3>) -> Result<Self, Error> {
        if values.len() != geom.node_count() {
            return Err(Error::ShapeMismatch {
                expected: geom.node_count(),
                found: values.len(),
            });
        }
        Ok(DirectorField { geom, values })
    }

    pub fn geometry(&self) -> &Arc<GridGeometry> {
        &self.geom
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec3] {
        &mut self.values
    }

    pub fn get(&self, node: usize) -> Vec3 {
        self.values[node]
    }

    pub fn set(&mut self, node: usize, v: Vec3) {
        self.values[node] = v;
    }

    /// Largest `| |n| - 1 |` over active nodes.
    pub fn max_norm_defect(&self) -> f64 {
        self.active_nodes()
            .map(|n| (self.values[n].norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.values.len()).filter(move |&n| self.geom.class(n).is_active())
    }
}

/// Rescales every active value to unit length.
pub fn normalize_field(field: &DirectorField) -> Result<DirectorField, Error> {
    let mut out = field.clone();
    for n in 0..out.values.len() {
        if !out.geom.class(n).is_active() {
            continue;
        }
        let v = out.values[n];
        let norm = v.norm();
        if norm < DEGENERATE {
            return Err(Error::ZeroVector(n));
        }
        out.values[n] = v / norm;
    }
    Ok(out)
}

/// Unnormalized trial vector `N(x, y, z)` for a topology.
fn trial_vector(topo: TopologyClass, geom: &GridGeometry, node: usize) -> Vec3 {
    let p = geom.node_ijk(node);
    let d = geom.spacing();
    let post = geom.post_cells() as f64;
    // phases pi x / Lp and pi y / Lp taken from lattice offsets keep edge nodes exact
    let px = PI * (p.i as f64 - geom.post_origin() as f64) / post;
    let py = PI * (p.j as f64 - geom.post_origin() as f64) / post;
    let z = p.k as f64 * d;
    let top = (geom.nz() - 1) as f64 * d;
    let h = geom.post_top() as f64 * d;
    let lateral = (top - z) / top;
    let nx = px.sin().powi(2) * lateral;
    let ny = py.sin().powi(2) * lateral;
    let nz = if p.k <= geom.post_top() {
        z * (h - z) * topo.vertical_profile(px, py)
    } else {
        (z - h) / (top - h)
    };
    Vec3::new(nx, ny, nz)
}

/// Builds the trial configuration of a topology: `n = N / |N|`, then exact
/// boundary projection. Post vertices, where `N` vanishes, take the normalized
/// mean of their axis neighbours.
pub fn trial_field(geom: &Arc<GridGeometry>, topo: TopologyClass) -> Result<DirectorField, Error> {
    if topo != TopologyClass::T && !geom.has_post() {
        return Err(Error::NeedsPost(topo));
    }
    let mut values = vec![Vec3::zeros(); geom.node_count()];
    let mut vertices = Vec::new();
    for (node, slot) in values.iter_mut().enumerate() {
        let class = geom.class(node);
        if !class.is_active() {
            continue;
        }
        let raw = trial_vector(topo, geom, node);
        let norm = raw.norm();
        if norm < DEGENERATE {
            // without a post the formula still vanishes at the collapsed post corners
            let collapsed = !geom.has_post() && class == NodeClass::SubstrateTangent;
            if class == NodeClass::VertexFree || collapsed {
                vertices.push(node);
                continue;
            }
            return Err(Error::DegenerateInterior(node));
        }
        *slot = raw / norm;
    }
    for &node in &vertices {
        let mut sum = Vec3::zeros();
        for (di, dj, dk) in [
            (1, 0, 0),
            (-1, 0, 0),
            (0, 1, 0),
            (0, -1, 0),
            (0, 0, 1),
            (0, 0, -1),
        ] {
            if let Some(nb) = geom.offset(node, di, dj, dk) {
                if geom.class(nb).is_active() && !vertices.contains(&nb) {
                    sum += values[nb];
                }
            }
        }
        values[node] = if sum.norm() > DEGENERATE {
            sum.normalize()
        } else {
            Z_HAT
        };
    }
    let field = DirectorField::from_values(geom.clone(), values)?;
    project_field(&field)
}
