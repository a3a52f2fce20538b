//! Discrete Oseen-Frank energy, its exact nodal gradient, and the boundary
//! projections used during descent.
//!
//! Each liquid-crystal cell is a trilinear hexahedron. At every quadrature point
//! the corner values are interpolated, the interpolated director is renormalized,
//! and the density
//!
//! ```text
//! w = K1 (div n)^2 + K2 (n . curl n)^2 + K3 |n x curl n|^2
//!     + K24 (tr(grad n)^2 - (div n)^2)
//! ```
//!
//! is accumulated with weight `w_q * delta^3`. The gradient is the derivative of
//! exactly this sum, chain rule through the renormalization included.

use serde::{Deserialize, Serialize};

use crate::director::DirectorField;
use crate::geometry::{GridGeometry, NodeClass};
use crate::vec3::{CompensatedSum, Mat3, Vec3, Z_HAT};
use crate::Error;

/// Largest tolerated `| |n| - 1 |` on input fields.
pub const NORM_TOL: f64 = 1e-9;

/// Frank elastic constants. `k24` multiplies the saddle-splay term and stands for
/// `K2 + K4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    #[serde(default)]
    pub k24: f64,
}

impl ElasticConstants {
    pub fn new(k1: f64, k2: f64, k3: f64, k24: f64) -> Self {
        ElasticConstants { k1, k2, k3, k24 }
    }

    pub fn one_constant(k: f64) -> Self {
        Self::new(k, k, k, 0.0)
    }

    /// Checks `K1, K2, K3 > 0`. Returns the name of the first offending constant.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        for (name, v) in [("k1", self.k1), ("k2", self.k2), ("k3", self.k3)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err((name, "must be positive".into()));
            }
        }
        if !self.k24.is_finite() {
            return Err(("k24", "must be finite".into()));
        }
        Ok(())
    }

    pub fn max_modulus(&self) -> f64 {
        self.k1.max(self.k2).max(self.k3)
    }
}

/// Per-term energy integrals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub splay: f64,
    pub twist: f64,
    pub bend: f64,
    pub saddle: f64,
    pub total: f64,
}

/// Cell quadrature rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// One point at the cell center. Cheap, but blind to hourglass modes.
    CellCenter,
    /// 2x2x2 Gauss points.
    #[default]
    Gauss2,
}

#[derive(Clone, Copy, Debug)]
struct QuadPoint {
    /// Fraction of the cell volume.
    weight: f64,
    shape: [f64; 8],
    /// Shape-function derivatives in reference coordinates (unit cell).
    dshape: [[f64; 3]; 8],
}

impl QuadPoint {
    fn at(weight: f64, xi: [f64; 3]) -> Self {
        let mut shape = [0.0; 8];
        let mut dshape = [[0.0; 3]; 8];
        for a in 0..8 {
            let bits = [a & 1, (a >> 1) & 1, (a >> 2) & 1];
            let f: [f64; 3] =
                std::array::from_fn(|d| if bits[d] == 1 { xi[d] } else { 1.0 - xi[d] });
            let s: [f64; 3] = std::array::from_fn(|d| if bits[d] == 1 { 1.0 } else { -1.0 });
            shape[a] = f[0] * f[1] * f[2];
            dshape[a] = [s[0] * f[1] * f[2], f[0] * s[1] * f[2], f[0] * f[1] * s[2]];
        }
        QuadPoint {
            weight,
            shape,
            dshape,
        }
    }
}

fn quadrature_points(rule: Quadrature) -> Vec<QuadPoint> {
    match rule {
        Quadrature::CellCenter => vec![QuadPoint::at(1.0, [0.5; 3])],
        Quadrature::Gauss2 => {
            let g = 0.5 / 3f64.sqrt();
            let pts = [0.5 - g, 0.5 + g];
            let mut out = Vec::with_capacity(8);
            for &z in &pts {
                for &y in &pts {
                    for &x in &pts {
                        out.push(QuadPoint::at(0.125, [x, y, z]));
                    }
                }
            }
            out
        }
    }
}

/// Energy density terms and partial derivatives at one quadrature point.
struct Density {
    terms: [f64; 4],
    /// dw/dm
    dm: Vec3,
    /// dw/dD with `D[(i, j)] = d_i n_j`
    dd: Mat3,
}

fn curl(d: &Mat3) -> Vec3 {
    Vec3::new(
        d[(1, 2)] - d[(2, 1)],
        d[(2, 0)] - d[(0, 2)],
        d[(0, 1)] - d[(1, 0)],
    )
}

fn density(k: &ElasticConstants, m: &Vec3, d: &Mat3, with_grad: bool) -> Density {
    let div = d.trace();
    let c = curl(d);
    let t = m.dot(&c);
    let b = m.cross(&c);
    let tr_sq = (d * d).trace();
    let terms = [
        k.k1 * div * div,
        k.k2 * t * t,
        k.k3 * b.norm_squared(),
        k.k24 * (tr_sq - div * div),
    ];
    if !with_grad {
        return Density {
            terms,
            dm: Vec3::zeros(),
            dd: Mat3::zeros(),
        };
    }
    // |m x c|^2 = |m|^2 |c|^2 - (m . c)^2
    let dm = 2.0 * k.k2 * t * c + k.k3 * (2.0 * c.norm_squared() * m - 2.0 * t * c);
    let gc = 2.0 * k.k2 * t * m + k.k3 * (2.0 * m.norm_squared() * c - 2.0 * t * m);
    let mut dd = Mat3::identity() * (2.0 * (k.k1 - k.k24) * div) + d.transpose() * (2.0 * k.k24);
    dd[(1, 2)] += gc.x;
    dd[(2, 1)] -= gc.x;
    dd[(2, 0)] += gc.y;
    dd[(0, 2)] -= gc.y;
    dd[(0, 1)] += gc.z;
    dd[(1, 0)] -= gc.z;
    Density { terms, dm, dd }
}

/// Energy functional on a fixed geometry. Holds the quadrature tables and the
/// flattened cell connectivity so repeated evaluations during descent are cheap.
#[derive(Clone, Debug)]
pub struct FrankEnergy {
    constants: ElasticConstants,
    quad: Vec<QuadPoint>,
    corners: Vec<[u32; 8]>,
    spacing: f64,
}

impl FrankEnergy {
    pub fn new(geom: &GridGeometry, constants: ElasticConstants) -> Self {
        Self::with_quadrature(geom, constants, Quadrature::default())
    }

    pub fn with_quadrature(
        geom: &GridGeometry,
        constants: ElasticConstants,
        rule: Quadrature,
    ) -> Self {
        let corners = (0..geom.cell_count())
            .map(|c| geom.corners_of(geom.cell_base(c)).map(|n| n as u32))
            .collect();
        FrankEnergy {
            constants,
            quad: quadrature_points(rule),
            corners,
            spacing: geom.spacing(),
        }
    }

    pub fn constants(&self) -> &ElasticConstants {
        &self.constants
    }

    /// Energy terms; no normalization check.
    pub fn breakdown_unchecked(&self, values: &[Vec3]) -> EnergyBreakdown {
        self.accumulate(values, None)
    }

    /// Energy terms and the raw nodal gradient (not projected, fixed nodes
    /// included). No normalization check.
    pub fn breakdown_and_gradient_unchecked(
        &self,
        values: &[Vec3],
    ) -> (EnergyBreakdown, Vec<Vec3>) {
        let mut grad = vec![Vec3::zeros(); values.len()];
        let e = self.accumulate(values, Some(&mut grad));
        (e, grad)
    }

    fn accumulate(&self, values: &[Vec3], mut grad: Option<&mut [Vec3]>) -> EnergyBreakdown {
        let inv_d = 1.0 / self.spacing;
        let vol = self.spacing.powi(3);
        let mut sums = [CompensatedSum::default(); 4];
        let with_grad = grad.is_some();
        for corners in &self.corners {
            let n: [Vec3; 8] = std::array::from_fn(|a| values[corners[a] as usize]);
            let mut local = [Vec3::zeros(); 8];
            let mut cell_terms = [0.0; 4];
            for q in &self.quad {
                let mut u = Vec3::zeros();
                let mut d = Mat3::zeros();
                for a in 0..8 {
                    u += q.shape[a] * n[a];
                    for i in 0..3 {
                        let g = q.dshape[a][i] * inv_d;
                        d[(i, 0)] += g * n[a].x;
                        d[(i, 1)] += g * n[a].y;
                        d[(i, 2)] += g * n[a].z;
                    }
                }
                let len = u.norm();
                let m = u / len;
                let w = density(&self.constants, &m, &d, with_grad);
                let wt = q.weight * vol;
                for (acc, t) in cell_terms.iter_mut().zip(w.terms) {
                    *acc += wt * t;
                }
                if with_grad {
                    let du = (w.dm - m * m.dot(&w.dm)) / len;
                    for a in 0..8 {
                        let mut g = q.shape[a] * du;
                        for i in 0..3 {
                            let s = q.dshape[a][i] * inv_d;
                            g.x += s * w.dd[(i, 0)];
                            g.y += s * w.dd[(i, 1)];
                            g.z += s * w.dd[(i, 2)];
                        }
                        local[a] += wt * g;
                    }
                }
            }
            for (s, t) in sums.iter_mut().zip(cell_terms) {
                s.add(t);
            }
            if let Some(g) = grad.as_deref_mut() {
                for a in 0..8 {
                    g[corners[a] as usize] += local[a];
                }
            }
        }
        let [splay, twist, bend, saddle] = sums.map(|s| s.value());
        let mut total = CompensatedSum::default();
        for t in [splay, twist, bend, saddle] {
            total.add(t);
        }
        EnergyBreakdown {
            splay,
            twist,
            bend,
            saddle,
            total: total.value(),
        }
    }
}

fn check_normalized(field: &DirectorField) -> Result<(), Error> {
    for n in field.active_nodes() {
        let dev = (field.get(n).norm() - 1.0).abs();
        if !(dev <= NORM_TOL) {
            return Err(Error::NotNormalized {
                node: n,
                deviation: dev,
            });
        }
    }
    Ok(())
}

/// Per-term discrete energy of a unit field.
pub fn energy_breakdown(
    field: &DirectorField,
    k: &ElasticConstants,
) -> Result<EnergyBreakdown, Error> {
    check_normalized(field)?;
    Ok(FrankEnergy::new(field.geometry(), *k).breakdown_unchecked(field.values()))
}

/// Derivative of the discrete energy with respect to every nodal value. Pinned
/// and excluded nodes get zero.
pub fn discrete_gradient(field: &DirectorField, k: &ElasticConstants) -> Result<Vec<Vec3>, Error> {
    check_normalized(field)?;
    let energy = FrankEnergy::new(field.geometry(), *k);
    let (_, mut grad) = energy.breakdown_and_gradient_unchecked(field.values());
    let geom = field.geometry();
    for (n, g) in grad.iter_mut().enumerate() {
        if geom.class(n).is_fixed() {
            *g = Vec3::zeros();
        }
    }
    Ok(grad)
}

/// Removes the components of `grad` that would leave the unit sphere or a
/// tangent plane; zero on pinned nodes.
pub fn project_gradient(grad: &[Vec3], field: &DirectorField) -> Vec<Vec3> {
    let geom = field.geometry();
    grad.iter()
        .enumerate()
        .map(|(node, g)| project_node_gradient(geom.class(node), &field.get(node), g))
        .collect()
}

pub(crate) fn project_node_gradient(class: NodeClass, n: &Vec3, g: &Vec3) -> Vec3 {
    if class.is_fixed() {
        return Vec3::zeros();
    }
    let mut out = g - n * n.dot(g);
    if let Some(nu) = class.tangent_normal() {
        out -= nu * nu.dot(&out);
    }
    out
}

/// Projection of one raw value onto its node constraint set.
pub(crate) fn project_node_value(class: NodeClass, v: &Vec3, node: usize) -> Result<Vec3, Error> {
    const ZERO: f64 = 1e-12;
    match class {
        NodeClass::Excluded => Ok(Vec3::zeros()),
        NodeClass::TopFixed => Ok(Z_HAT),
        NodeClass::EdgeFixed { direction } => {
            let d = direction.vector();
            let s = v.dot(&d);
            if s.abs() < ZERO {
                Err(Error::ZeroVector(node))
            } else {
                Ok(d * s.signum())
            }
        }
        _ => {
            let mut w = *v;
            if let Some(nu) = class.tangent_normal() {
                w -= nu * nu.dot(&w);
                // the constrained component is removed exactly
                for i in 0..3 {
                    if nu[i] != 0.0 {
                        w[i] = 0.0;
                    }
                }
            }
            let len = w.norm();
            if len < ZERO {
                Err(Error::ZeroVector(node))
            } else {
                Ok(w / len)
            }
        }
    }
}

/// Maps every value onto its constraint set: tangent planes, pinned values, unit norm.
pub fn project_field(field: &DirectorField) -> Result<DirectorField, Error> {
    let geom = field.geometry().clone();
    let values = field
        .values()
        .iter()
        .enumerate()
        .map(|(n, v)| project_node_value(geom.class(n), v, n))
        .collect::<Result<Vec<_>, _>>()?;
    DirectorField::from_values(geom, values)
}

/// Largest violation of any node constraint (unit norm, tangency, pinned value).
pub fn constraint_residual(field: &DirectorField) -> f64 {
    let geom = field.geometry();
    let mut worst: f64 = 0.0;
    for n in field.active_nodes() {
        let v = field.get(n);
        let class = geom.class(n);
        let mut r = (v.norm() - 1.0).abs();
        if let Some(nu) = class.tangent_normal() {
            r = r.max(v.dot(&nu).abs());
        }
        match class {
            NodeClass::TopFixed => r = r.max((v - Z_HAT).norm()),
            NodeClass::EdgeFixed { direction } => {
                let d = direction.vector();
                r = r.max((v - d).norm().min((v + d).norm()));
            }
            _ => {}
        }
        worst = worst.max(r);
    }
    worst
}
