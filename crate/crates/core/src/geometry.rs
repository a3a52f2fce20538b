//! Structured grid over the liquid-crystal region of a periodic post cell.
//!
//! The cell is `Lc x Lc x H` with a square post `[0, Lp]^2 x [0, h]`. Nodes sit on
//! a uniform lattice of spacing `delta = Lc / N` whose x/y window is
//! `[-Lc/4, 3Lc/4)`, so the post lies inside the window and its periodic images
//! sit one period away. x and y indices wrap modulo `N`; z runs from the
//! substrate (`k = 0`) to the top plate (`k = H / delta`).

use crate::vec3::Vec3;
use crate::Error;

const CONFORM_TOL: f64 = 1e-9;

/// Dimensionless cell dimensions and grid resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct CellParams {
    /// Cell cross-section `Lc`.
    pub cell_width: f64,
    /// Post cross-section `Lp`.
    pub post_width: f64,
    /// Cell height `H`.
    pub cell_height: f64,
    /// Post height `h`; zero gives a flat cell.
    pub post_height: f64,
    /// Nodes per `Lc` along x and y.
    pub grid_n: usize,
    /// Anchor the substrate normally (`n = z`) instead of tangentially. Only
    /// meaningful for flat test cells.
    pub normal_substrate: bool,
}

impl CellParams {
    /// Standard proportions: `Lc = 1`, `Lp = Lc / 2`, `H = 3 Lc`.
    pub fn new(post_height: f64, grid_n: usize) -> Self {
        CellParams {
            cell_width: 1.0,
            post_width: 0.5,
            cell_height: 3.0,
            post_height,
            grid_n,
            normal_substrate: false,
        }
    }

    pub fn with_cell_height(mut self, cell_height: f64) -> Self {
        self.cell_height = cell_height;
        self
    }

    pub fn with_post_width(mut self, post_width: f64) -> Self {
        self.post_width = post_width;
        self
    }

    pub fn with_normal_substrate(mut self, normal: bool) -> Self {
        self.normal_substrate = normal;
        self
    }

    pub fn spacing(&self) -> f64 {
        self.cell_width / self.grid_n as f64
    }

    /// Checks the parameter invariants and grid conformance.
    pub fn validate(&self) -> Result<(), Error> {
        self.lattice_extents().map(|_| ())
    }

    /// Checks the parameter invariants and returns the integer lattice extents
    /// `(post cells, post height cells, cell height cells, window offset cells)`.
    fn lattice_extents(&self) -> Result<(usize, usize, usize, usize), Error> {
        let p = self;
        if !(p.cell_width > 0.0 && p.cell_width.is_finite()) {
            return Err(Error::InvalidParams("cell width must be positive".into()));
        }
        if !(p.post_width > 0.0 && p.post_width <= p.cell_width / 2.0 + CONFORM_TOL) {
            return Err(Error::InvalidParams(
                "post width must lie in (0, Lc/2]".into(),
            ));
        }
        if !(p.cell_height > 0.0 && p.cell_height.is_finite()) {
            return Err(Error::InvalidParams("cell height must be positive".into()));
        }
        if !(p.post_height >= 0.0) || p.post_height >= p.cell_height {
            return Err(Error::InvalidParams(format!(
                "post height {} must satisfy 0 <= h < H = {}",
                p.post_height, p.cell_height
            )));
        }
        if p.grid_n < 8 {
            return Err(Error::InvalidParams(format!(
                "grid resolution {} is below the minimum of 8",
                p.grid_n
            )));
        }
        let delta = p.spacing();
        let cells = |len: f64, what: &str| -> Result<usize, Error> {
            let r = len / delta;
            let k = r.round();
            if (r - k).abs() > CONFORM_TOL * r.max(1.0) {
                Err(Error::NonConformingGrid(format!(
                    "{what} = {len} is not a multiple of the spacing {delta}"
                )))
            } else {
                Ok(k as usize)
            }
        };
        let post = cells(p.post_width, "post width")?;
        let kh = cells(p.post_height, "post height")?;
        let nz = cells(p.cell_height, "cell height")?;
        let offset = cells(p.cell_width / 4.0, "window offset Lc/4")?;
        Ok((post, kh, nz, offset))
    }
}

/// Signed coordinate axis, used for surface normals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AxisDir {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
    PlusZ,
}

impl AxisDir {
    pub fn vector(self) -> Vec3 {
        match self {
            AxisDir::PlusX => Vec3::new(1.0, 0.0, 0.0),
            AxisDir::MinusX => Vec3::new(-1.0, 0.0, 0.0),
            AxisDir::PlusY => Vec3::new(0.0, 1.0, 0.0),
            AxisDir::MinusY => Vec3::new(0.0, -1.0, 0.0),
            AxisDir::PlusZ => Vec3::new(0.0, 0.0, 1.0),
        }
    }
}

/// Boundary constraint attached to a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeClass {
    Interior,
    /// Bottom plate, `n . z = 0`.
    SubstrateTangent,
    /// Post face with outward normal `normal` (pointing into the liquid crystal).
    PostFaceTangent {
        normal: AxisDir,
    },
    /// Top plate, `n = z`.
    TopFixed,
    /// Post edge. `direction` is the edge axis; horizontal edges carry their
    /// fixed orientation, vertical edges a `+z` placeholder whose sign is set by
    /// the director field.
    EdgeFixed {
        direction: AxisDir,
    },
    /// Post corner where three faces meet; only the unit-norm constraint applies.
    VertexFree,
    /// Inside the post, no director.
    Excluded,
}

impl NodeClass {
    /// Nodes whose value is pinned during relaxation.
    pub fn is_fixed(&self) -> bool {
        matches!(
            self,
            NodeClass::TopFixed | NodeClass::EdgeFixed { .. } | NodeClass::Excluded
        )
    }

    pub fn is_active(&self) -> bool {
        !matches!(self, NodeClass::Excluded)
    }

    /// Normal of the tangent plane the value must lie in, if any.
    pub fn tangent_normal(&self) -> Option<Vec3> {
        match self {
            NodeClass::SubstrateTangent => Some(Vec3::new(0.0, 0.0, 1.0)),
            NodeClass::PostFaceTangent { normal } => Some(normal.vector()),
            _ => None,
        }
    }
}

/// Lattice coordinates of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeIjk {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

/// The discretized cell: lattice, node classes and the list of liquid-crystal cells.
#[derive(Clone, Debug, PartialEq)]
pub struct GridGeometry {
    params: CellParams,
    spacing: f64,
    nx: usize,
    nz: usize,
    /// Lattice index of `x = 0` (and `y = 0`).
    origin: usize,
    /// Post width in cells.
    post: usize,
    /// Post height in cells; zero means no post.
    post_top: usize,
    classes: Vec<NodeClass>,
    /// Base corner node of every liquid-crystal cell, in increasing index order.
    cells: Vec<usize>,
}

impl GridGeometry {
    pub fn build(params: CellParams) -> Result<Self, Error> {
        let (post, post_top, nzc, origin) = params.lattice_extents()?;
        let nx = params.grid_n;
        let nz = nzc + 1;
        let spacing = params.spacing();
        let mut geom = GridGeometry {
            params,
            spacing,
            nx,
            nz,
            origin,
            post,
            post_top,
            classes: Vec::with_capacity(nx * nx * nz),
            cells: Vec::new(),
        };
        for k in 0..nz {
            for j in 0..nx {
                for i in 0..nx {
                    let c = geom.compute_class(i, j, k);
                    geom.classes.push(c);
                }
            }
        }
        for k in 0..nz - 1 {
            for j in 0..nx {
                for i in 0..nx {
                    if !geom.cell_in_post(i, j, k) {
                        geom.cells.push(geom.node_index(i, j, k));
                    }
                }
            }
        }
        Ok(geom)
    }

    fn compute_class(&self, i: usize, j: usize, k: usize) -> NodeClass {
        let top = self.nz - 1;
        if k == top {
            return NodeClass::TopFixed;
        }
        let has_post = self.post_top > 0;
        let in_span = |idx: usize| idx >= self.origin && idx <= self.origin + self.post;
        if has_post && in_span(i) && in_span(j) && k <= self.post_top {
            let ip = i - self.origin;
            let jp = j - self.origin;
            let on_x = ip == 0 || ip == self.post;
            let on_y = jp == 0 || jp == self.post;
            let on_top = k == self.post_top;
            let on_base = k == 0;
            let lateral = on_x as u8 + on_y as u8;
            let caps = on_top as u8 + on_base as u8;
            return match (lateral, caps) {
                (0, 0) => NodeClass::Excluded,
                (0, _) if on_base => NodeClass::Excluded,
                (0, _) => NodeClass::PostFaceTangent {
                    normal: AxisDir::PlusZ,
                },
                (1, 0) => NodeClass::PostFaceTangent {
                    normal: match (on_x, ip == 0, jp == 0) {
                        (true, true, _) => AxisDir::MinusX,
                        (true, false, _) => AxisDir::PlusX,
                        (false, _, true) => AxisDir::MinusY,
                        (false, _, false) => AxisDir::PlusY,
                    },
                },
                // A horizontal edge runs along the axis that is not pinned.
                (1, _) => NodeClass::EdgeFixed {
                    direction: if on_x { AxisDir::PlusY } else { AxisDir::PlusX },
                },
                (2, 0) => NodeClass::EdgeFixed {
                    direction: AxisDir::PlusZ,
                },
                _ => NodeClass::VertexFree,
            };
        }
        if k == 0 {
            if self.params.normal_substrate {
                NodeClass::TopFixed
            } else {
                NodeClass::SubstrateTangent
            }
        } else {
            NodeClass::Interior
        }
    }

    fn cell_in_post(&self, i: usize, j: usize, k: usize) -> bool {
        let inside = |idx: usize| idx >= self.origin && idx < self.origin + self.post;
        self.post_top > 0 && inside(i) && inside(j) && k < self.post_top
    }

    pub fn params(&self) -> &CellParams {
        &self.params
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Nodes along x (and y).
    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Number of z levels, `H / delta + 1`.
    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn node_count(&self) -> usize {
        self.classes.len()
    }

    /// Lattice index of the plane `x = 0` (equally `y = 0`).
    pub fn post_origin(&self) -> usize {
        self.origin
    }

    /// Post width in lattice steps.
    pub fn post_cells(&self) -> usize {
        self.post
    }

    /// z index of the post top face; zero if there is no post.
    pub fn post_top(&self) -> usize {
        self.post_top
    }

    pub fn has_post(&self) -> bool {
        self.post_top > 0
    }

    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.nx * k)
    }

    pub fn node_ijk(&self, node: usize) -> NodeIjk {
        let i = node % self.nx;
        let j = (node / self.nx) % self.nx;
        let k = node / (self.nx * self.nx);
        NodeIjk { i, j, k }
    }

    /// Periodic shift of an x (or y) lattice index.
    pub fn wrap(&self, idx: usize, shift: isize) -> usize {
        (idx as isize + shift).rem_euclid(self.nx as isize) as usize
    }

    /// Node reached by an integer lattice offset, wrapping in x and y. Returns
    /// `None` if the z offset leaves the cell.
    pub fn offset(&self, node: usize, di: isize, dj: isize, dk: isize) -> Option<usize> {
        let p = self.node_ijk(node);
        let k = p.k as isize + dk;
        if k < 0 || k >= self.nz as isize {
            return None;
        }
        Some(self.node_index(self.wrap(p.i, di), self.wrap(p.j, dj), k as usize))
    }

    /// Position of a node in the `[-Lc/4, 3Lc/4)^2 x [0, H]` window.
    pub fn coords(&self, node: usize) -> Vec3 {
        let p = self.node_ijk(node);
        Vec3::new(
            self.axis_coord(p.i),
            self.axis_coord(p.j),
            p.k as f64 * self.spacing,
        )
    }

    /// x (or y) coordinate of a lattice index.
    pub fn axis_coord(&self, idx: usize) -> f64 {
        (idx as f64 - self.origin as f64) * self.spacing
    }

    /// Node at a physical position, if it coincides with a lattice point. x and
    /// y are reduced into the periodic window.
    pub fn node_at(&self, x: f64, y: f64, z: f64) -> Option<usize> {
        let d = self.spacing;
        let snap = |v: f64| -> Option<isize> {
            let r = v / d;
            let k = r.round();
            ((r - k).abs() < 1e-6).then_some(k as isize)
        };
        let i = snap(x)? + self.origin as isize;
        let j = snap(y)? + self.origin as isize;
        let k = snap(z)?;
        if k < 0 || k >= self.nz as isize {
            return None;
        }
        let n = self.nx as isize;
        Some(self.node_index(
            i.rem_euclid(n) as usize,
            j.rem_euclid(n) as usize,
            k as usize,
        ))
    }

    pub fn classify_node(&self, node: usize) -> Result<NodeClass, Error> {
        self.classes.get(node).copied().ok_or(Error::OutOfRange {
            what: "node",
            index: node,
        })
    }

    pub fn class(&self, node: usize) -> NodeClass {
        self.classes[node]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Base (lowest i, j, k) node of a cell.
    pub fn cell_base(&self, cell: usize) -> usize {
        self.cells[cell]
    }

    /// Corner nodes of a cell. Corner `a` sits at offset
    /// `(a & 1, (a >> 1) & 1, (a >> 2) & 1)` from the base node, with x and y
    /// wrapped periodically.
    pub fn cell_nodes(&self, cell: usize) -> Result<[usize; 8], Error> {
        let base = *self.cells.get(cell).ok_or(Error::OutOfRange {
            what: "cell",
            index: cell,
        })?;
        Ok(self.corners_of(base))
    }

    pub(crate) fn corners_of(&self, base: usize) -> [usize; 8] {
        let p = self.node_ijk(base);
        let i1 = self.wrap(p.i, 1);
        let j1 = self.wrap(p.j, 1);
        let mut out = [0; 8];
        for (a, slot) in out.iter_mut().enumerate() {
            let i = if a & 1 == 0 { p.i } else { i1 };
            let j = if a & 2 == 0 { p.j } else { j1 };
            let k = p.k + (a >> 2);
            *slot = self.node_index(i, j, k);
        }
        out
    }

    /// Index into the cell list of the cell with the given base node, if that
    /// cell is liquid crystal.
    pub fn cell_with_base(&self, base: usize) -> Option<usize> {
        self.cells.binary_search(&base).ok()
    }

    /// Count of nodes carrying each class tag.
    pub fn class_counts(&self) -> ClassCounts {
        let mut c = ClassCounts::default();
        for class in &self.classes {
            match class {
                NodeClass::Interior => c.interior += 1,
                NodeClass::SubstrateTangent => c.substrate += 1,
                NodeClass::PostFaceTangent { .. } => c.post_face += 1,
                NodeClass::TopFixed => c.top += 1,
                NodeClass::EdgeFixed { .. } => c.edge += 1,
                NodeClass::VertexFree => c.vertex += 1,
                NodeClass::Excluded => c.excluded += 1,
            }
        }
        c
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub interior: usize,
    pub substrate: usize,
    pub post_face: usize,
    pub top: usize,
    pub edge: usize,
    pub vertex: usize,
    pub excluded: usize,
}
