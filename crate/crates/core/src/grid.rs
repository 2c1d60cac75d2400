//! Tensor-product grids on intervals, rectangles, and periodic strips, with
//! composite-trapezoid quadrature, named boundary pieces, and subregion masks.
//!
//! Conventions:
//! - nodes are indexed lexicographically, axis 0 major (`id = i·n₁ + j` in 2-D);
//! - a periodic axis stores `n` nodes with spacing `(hi-lo)/n` and excludes
//!   its right endpoint;
//! - volume quadrature is the tensor product of per-axis trapezoid rules
//!   (plain rectangle rule on periodic axes), so constants integrate to the
//!   exact domain measure;
//! - boundary measure is the coordinate measure of the boundary facet
//!   (counting measure on interval endpoints, arc parameter in 2-D).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::field::{ScalarField, Vec2};
use crate::{QmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Interval,
    Rectangle,
    /// Rectangle with axis 1 periodic (annulus in `(r, θ)` coordinates).
    PeriodicStrip,
}

#[derive(Debug, Clone)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub spacing: f64,
    pub periodic: bool,
}

impl Axis {
    fn new(lo: f64, hi: f64, n: usize, periodic: bool) -> Result<Axis> {
        if !(hi > lo) {
            return Err(QmError::InvalidGrid(format!(
                "axis bounds must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        let min_nodes = if periodic { 3 } else { 2 };
        if n < min_nodes {
            return Err(QmError::InvalidGrid(format!(
                "axis needs at least {min_nodes} nodes, got {n}"
            )));
        }
        let spacing = if periodic {
            (hi - lo) / n as f64
        } else {
            (hi - lo) / (n - 1) as f64
        };
        Ok(Axis {
            lo,
            hi,
            n,
            spacing,
            periodic,
        })
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.spacing
    }

    /// Trapezoid weight of node `i` on this axis.
    fn weight(&self, i: usize) -> f64 {
        if self.periodic || (i > 0 && i + 1 < self.n) {
            self.spacing
        } else {
            0.5 * self.spacing
        }
    }
}

/// Node count selector: either explicit per-axis counts, or the
/// nodes-per-wavelength rule `n = ceil(rho·L/h) + 1` tied to the smallest
/// semiclassical parameter the grid must resolve.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Fixed(Vec<usize>),
    NodesPerH { rho: f64, h: f64 },
}

impl Resolution {
    fn count(&self, axis_index: usize, lo: f64, hi: f64, periodic: bool) -> Result<usize> {
        match self {
            Resolution::Fixed(ns) => ns.get(axis_index).copied().ok_or_else(|| {
                QmError::InvalidGrid(format!("no node count given for axis {axis_index}"))
            }),
            Resolution::NodesPerH { rho, h } => {
                if !(*rho > 0.0 && *h > 0.0) {
                    return Err(QmError::InvalidGrid(
                        "nodes-per-h resolution needs positive rho and h".into(),
                    ));
                }
                let cells = (rho * (hi - lo) / h).ceil() as usize;
                Ok(if periodic { cells.max(3) } else { cells + 1 })
            }
        }
    }
}

/// One named boundary piece: parallel arrays of node ids, outward unit
/// normals, and boundary quadrature weights. `connected` marks the pieces
/// that are whole connected components of the boundary (a rectangle's single
/// component carries four extra non-connected edge pieces for edge-local
/// integrals).
#[derive(Debug, Clone)]
pub struct BoundaryPiece {
    pub name: String,
    pub nodes: Vec<usize>,
    pub normals: Vec<Vec2>,
    pub weights: Vec<f64>,
    pub connected: bool,
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub kind: GridKind,
    pub axes: Vec<Axis>,
    /// Volume quadrature weight per node.
    pub node_weights: Vec<f64>,
    pub boundary: Vec<BoundaryPiece>,
    /// Node ids of interior nodes, ascending.
    pub interior: Vec<usize>,
    /// Node id -> interior dof index.
    pub interior_index: Vec<Option<usize>>,
}

impl Grid {
    pub fn interval(lo: f64, hi: f64, res: Resolution) -> Result<Grid> {
        let n = res.count(0, lo, hi, false)?;
        let axis = Axis::new(lo, hi, n, false)?;
        Ok(Self::build(GridKind::Interval, vec![axis]))
    }

    pub fn rectangle(bounds: [[f64; 2]; 2], res: Resolution) -> Result<Grid> {
        let n0 = res.count(0, bounds[0][0], bounds[0][1], false)?;
        let n1 = res.count(1, bounds[1][0], bounds[1][1], false)?;
        let a0 = Axis::new(bounds[0][0], bounds[0][1], n0, false)?;
        let a1 = Axis::new(bounds[1][0], bounds[1][1], n1, false)?;
        Ok(Self::build(GridKind::Rectangle, vec![a0, a1]))
    }

    /// `bounds[0]` is the radial (non-periodic) axis, `bounds[1]` the angular
    /// axis, identified at its endpoints.
    pub fn periodic_strip(bounds: [[f64; 2]; 2], res: Resolution) -> Result<Grid> {
        let n0 = res.count(0, bounds[0][0], bounds[0][1], false)?;
        let n1 = res.count(1, bounds[1][0], bounds[1][1], true)?;
        let a0 = Axis::new(bounds[0][0], bounds[0][1], n0, false)?;
        let a1 = Axis::new(bounds[1][0], bounds[1][1], n1, true)?;
        Ok(Self::build(GridKind::PeriodicStrip, vec![a0, a1]))
    }

    fn build(kind: GridKind, axes: Vec<Axis>) -> Grid {
        let num = axes.iter().map(|a| a.n).product::<usize>();
        let mut node_weights = Vec::with_capacity(num);
        for id in 0..num {
            let multi = multi_of(id, &axes);
            let w = axes
                .iter()
                .zip(multi.iter())
                .map(|(a, &i)| a.weight(i))
                .product();
            node_weights.push(w);
        }

        let mut grid = Grid {
            kind,
            axes,
            node_weights,
            boundary: Vec::new(),
            interior: Vec::new(),
            interior_index: vec![None; num],
        };
        grid.boundary = grid.make_boundary();
        let boundary_flags = grid.boundary_flags();
        for id in 0..num {
            if !boundary_flags[id] {
                grid.interior_index[id] = Some(grid.interior.len());
                grid.interior.push(id);
            }
        }
        grid
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_weights.len()
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn max_spacing(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing).fold(0.0, f64::max)
    }

    pub fn diameter(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| (a.hi - a.lo).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn domain_measure(&self) -> f64 {
        self.axes.iter().map(|a| a.hi - a.lo).product()
    }

    /// Multi-index of a node id.
    pub fn multi(&self, id: usize) -> [usize; 2] {
        multi_of(id, &self.axes)
    }

    pub fn id_of(&self, multi: [usize; 2]) -> usize {
        if self.dim() == 1 {
            multi[0]
        } else {
            multi[0] * self.axes[1].n + multi[1]
        }
    }

    /// Coordinates of a node, padded to two entries.
    pub fn coords(&self, id: usize) -> Vec2 {
        let m = self.multi(id);
        if self.dim() == 1 {
            [self.axes[0].coord(m[0]), 0.0]
        } else {
            [self.axes[0].coord(m[0]), self.axes[1].coord(m[1])]
        }
    }

    /// Coordinate slice of a node (length = dim), for field evaluation.
    pub fn point(&self, id: usize) -> Vec<f64> {
        self.coords(id)[..self.dim()].to_vec()
    }

    pub fn is_boundary(&self, id: usize) -> bool {
        self.interior_index[id].is_none()
    }

    /// Neighbor of `id` offset by `off` in multi-index space, wrapping on
    /// periodic axes; `None` when the offset leaves the grid.
    pub fn neighbor(&self, id: usize, off: [isize; 2]) -> Option<usize> {
        let m = self.multi(id);
        let mut out = [0usize; 2];
        for k in 0..self.dim() {
            let raw = m[k] as isize + off[k];
            let a = &self.axes[k];
            if a.periodic {
                out[k] = raw.rem_euclid(a.n as isize) as usize;
            } else if raw < 0 || raw >= a.n as isize {
                return None;
            } else {
                out[k] = raw as usize;
            }
        }
        if self.dim() == 1 && off[1] != 0 {
            return None;
        }
        Some(self.id_of(out))
    }

    fn boundary_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.num_nodes()];
        for (k, a) in self.axes.iter().enumerate() {
            if a.periodic {
                continue;
            }
            for id in 0..self.num_nodes() {
                let m = self.multi(id);
                if m[k] == 0 || m[k] == a.n - 1 {
                    flags[id] = true;
                }
            }
        }
        flags
    }

    fn make_boundary(&self) -> Vec<BoundaryPiece> {
        match self.kind {
            GridKind::Interval => {
                let n = self.axes[0].n;
                vec![
                    BoundaryPiece {
                        name: "left".into(),
                        nodes: vec![0],
                        normals: vec![[-1.0, 0.0]],
                        weights: vec![1.0],
                        connected: true,
                    },
                    BoundaryPiece {
                        name: "right".into(),
                        nodes: vec![n - 1],
                        normals: vec![[1.0, 0.0]],
                        weights: vec![1.0],
                        connected: true,
                    },
                ]
            }
            GridKind::Rectangle => {
                let (n0, n1) = (self.axes[0].n, self.axes[1].n);
                let (d0, d1) = (self.axes[0].spacing, self.axes[1].spacing);
                let edge_weight = |i: usize, n: usize, d: f64| {
                    if i == 0 || i == n - 1 {
                        0.5 * d
                    } else {
                        d
                    }
                };
                let mut pieces = Vec::new();
                // Named edges (each includes its corners with half-weights).
                let mut left = edge_piece("left");
                let mut right = edge_piece("right");
                for j in 0..n1 {
                    left.nodes.push(self.id_of([0, j]));
                    left.normals.push([-1.0, 0.0]);
                    left.weights.push(edge_weight(j, n1, d1));
                    right.nodes.push(self.id_of([n0 - 1, j]));
                    right.normals.push([1.0, 0.0]);
                    right.weights.push(edge_weight(j, n1, d1));
                }
                let mut bottom = edge_piece("bottom");
                let mut top = edge_piece("top");
                for i in 0..n0 {
                    bottom.nodes.push(self.id_of([i, 0]));
                    bottom.normals.push([0.0, -1.0]);
                    bottom.weights.push(edge_weight(i, n0, d0));
                    top.nodes.push(self.id_of([i, n1 - 1]));
                    top.normals.push([0.0, 1.0]);
                    top.weights.push(edge_weight(i, n0, d0));
                }
                // The single connected component: all boundary nodes in id
                // order; corner weights add the contributions of both edges,
                // corner normals point along the diagonal.
                let mut whole = BoundaryPiece {
                    name: "boundary".into(),
                    nodes: Vec::new(),
                    normals: Vec::new(),
                    weights: Vec::new(),
                    connected: true,
                };
                let s = std::f64::consts::FRAC_1_SQRT_2;
                for id in 0..self.num_nodes() {
                    let m = self.multi(id);
                    let at0 = m[0] == 0 || m[0] == n0 - 1;
                    let at1 = m[1] == 0 || m[1] == n1 - 1;
                    if !(at0 || at1) {
                        continue;
                    }
                    let mut normal = [0.0, 0.0];
                    let mut weight = 0.0;
                    if at0 {
                        normal[0] = if m[0] == 0 { -1.0 } else { 1.0 };
                        weight += edge_weight(m[1], n1, d1);
                    }
                    if at1 {
                        normal[1] = if m[1] == 0 { -1.0 } else { 1.0 };
                        weight += edge_weight(m[0], n0, d0);
                    }
                    if at0 && at1 {
                        normal = [normal[0] * s, normal[1] * s];
                    }
                    whole.nodes.push(id);
                    whole.normals.push(normal);
                    whole.weights.push(weight);
                }
                pieces.push(whole);
                pieces.push(left);
                pieces.push(right);
                pieces.push(bottom);
                pieces.push(top);
                pieces
            }
            GridKind::PeriodicStrip => {
                let (n0, n1) = (self.axes[0].n, self.axes[1].n);
                let d1 = self.axes[1].spacing;
                let mut inner = BoundaryPiece {
                    name: "inner".into(),
                    nodes: Vec::new(),
                    normals: Vec::new(),
                    weights: Vec::new(),
                    connected: true,
                };
                let mut outer = inner.clone();
                outer.name = "outer".into();
                for j in 0..n1 {
                    inner.nodes.push(self.id_of([0, j]));
                    inner.normals.push([-1.0, 0.0]);
                    inner.weights.push(d1);
                    outer.nodes.push(self.id_of([n0 - 1, j]));
                    outer.normals.push([1.0, 0.0]);
                    outer.weights.push(d1);
                }
                vec![inner, outer]
            }
        }
    }

    /// Connected components of the boundary.
    pub fn components(&self) -> impl Iterator<Item = &BoundaryPiece> {
        self.boundary.iter().filter(|p| p.connected)
    }

    pub fn boundary_piece(&self, name: &str) -> Result<&BoundaryPiece> {
        self.boundary
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| {
                QmError::InvalidGrid(format!(
                    "no boundary piece named '{name}' (have: {})",
                    self.boundary
                        .iter()
                        .map(|p| p.name.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ))
            })
    }

    /// Quadrature of node values, optionally restricted to a subregion mask.
    pub fn integrate(&self, values: &[f64], region: Option<&Subregion>) -> f64 {
        assert_eq!(values.len(), self.num_nodes(), "values per node required");
        let mut sum = 0.0;
        match region {
            None => {
                for (v, w) in values.iter().zip(&self.node_weights) {
                    sum += v * w;
                }
            }
            Some(r) => {
                assert_eq!(r.mask.len(), self.num_nodes());
                for id in 0..values.len() {
                    if r.mask[id] {
                        sum += values[id] * self.node_weights[id];
                    }
                }
            }
        }
        sum
    }

    /// Quadrature over a named boundary piece; `values` are given per piece
    /// node, in piece order.
    pub fn boundary_integrate(&self, piece: &BoundaryPiece, values: &[f64]) -> f64 {
        assert_eq!(values.len(), piece.nodes.len());
        values
            .iter()
            .zip(&piece.weights)
            .map(|(v, w)| v * w)
            .sum()
    }

    /// Evaluate a scalar field at every node.
    pub fn sample(&self, f: &ScalarField) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|id| {
                let c = self.coords(id);
                f.eval(&c[..self.dim()])
            })
            .collect()
    }

    /// Subregion mask from a region descriptor.
    pub fn subregion(&self, spec: RegionSpec) -> Subregion {
        let mask = (0..self.num_nodes())
            .map(|id| {
                let c = self.coords(id);
                spec.contains(&c[..self.dim()])
            })
            .collect();
        Subregion { mask, spec }
    }

    /// Discrete gradient at every node: centered differences in the interior,
    /// second-order one-sided stencils at non-periodic edges, wrapping on
    /// periodic axes.
    pub fn node_gradients(&self, values: &[f64]) -> Vec<Vec2> {
        assert_eq!(values.len(), self.num_nodes());
        let mut out = vec![[0.0, 0.0]; self.num_nodes()];
        for id in 0..self.num_nodes() {
            let m = self.multi(id);
            for k in 0..self.dim() {
                let a = &self.axes[k];
                let mut off_p = [0isize; 2];
                let mut off_m = [0isize; 2];
                off_p[k] = 1;
                off_m[k] = -1;
                let g = if a.periodic || (m[k] > 0 && m[k] + 1 < a.n) {
                    let up = values[self.neighbor(id, off_p).unwrap()];
                    let um = values[self.neighbor(id, off_m).unwrap()];
                    (up - um) / (2.0 * a.spacing)
                } else if m[k] == 0 {
                    let mut off2 = [0isize; 2];
                    off2[k] = 2;
                    let u1 = values[self.neighbor(id, off_p).unwrap()];
                    let u2 = values[self.neighbor(id, off2).unwrap()];
                    (-3.0 * values[id] + 4.0 * u1 - u2) / (2.0 * a.spacing)
                } else {
                    let mut off2 = [0isize; 2];
                    off2[k] = -2;
                    let u1 = values[self.neighbor(id, off_m).unwrap()];
                    let u2 = values[self.neighbor(id, off2).unwrap()];
                    (3.0 * values[id] - 4.0 * u1 + u2) / (2.0 * a.spacing)
                };
                out[id][k] = g;
            }
        }
        out
    }

    /// Cross-checks a field's closed-form derivatives against centered finite
    /// differences at seeded random interior points. The tolerance is the
    /// second-order truncation budget `10·δ²` for the probe step
    /// `δ = 1e-4 · diameter`, relative to `max(1, |exact|)`.
    pub fn validate_field(
        &self,
        f: &ScalarField,
        samples: usize,
        seed: u64,
    ) -> Result<FieldValidation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let delta = 1e-4 * self.diameter();
        let tol = 10.0 * delta * delta;
        let mut worst_grad = 0.0f64;
        let mut worst_hess = 0.0f64;
        for _ in 0..samples.max(100) {
            let mut x = vec![0.0; self.dim()];
            for (k, a) in self.axes.iter().enumerate() {
                // keep probes a step away from the edges
                let lo = a.lo + 2.0 * delta;
                let hi = a.hi - 2.0 * delta;
                x[k] = rng.gen_range(lo..hi);
            }
            let g = f.grad(&x);
            let h = f.hess(&x);
            for k in 0..self.dim() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += delta;
                xm[k] -= delta;
                let fd = (f.eval(&xp) - f.eval(&xm)) / (2.0 * delta);
                worst_grad = worst_grad.max((g[k] - fd).abs() / g[k].abs().max(1.0));
                let gp = f.grad(&xp);
                let gm = f.grad(&xm);
                for l in 0..self.dim() {
                    let fdh = (gp[l] - gm[l]) / (2.0 * delta);
                    worst_hess = worst_hess.max((h[l][k] - fdh).abs() / h[l][k].abs().max(1.0));
                }
            }
        }
        let report = FieldValidation {
            max_grad_rel_err: worst_grad,
            max_hess_rel_err: worst_hess,
            tolerance: tol,
        };
        if worst_grad > tol || worst_hess > tol {
            return Err(QmError::FieldValidation(format!(
                "derivatives disagree with finite differences: grad err {worst_grad:.3e}, hess err {worst_hess:.3e}, tol {tol:.3e}"
            )));
        }
        Ok(report)
    }
}

fn edge_piece(name: &str) -> BoundaryPiece {
    BoundaryPiece {
        name: name.into(),
        nodes: Vec::new(),
        normals: Vec::new(),
        weights: Vec::new(),
        connected: false,
    }
}

fn multi_of(id: usize, axes: &[Axis]) -> [usize; 2] {
    if axes.len() == 1 {
        [id, 0]
    } else {
        let n1 = axes[1].n;
        [id / n1, id % n1]
    }
}

#[derive(Debug, Clone)]
pub struct FieldValidation {
    pub max_grad_rel_err: f64,
    pub max_hess_rel_err: f64,
    pub tolerance: f64,
}

/// Node mask plus the descriptor it was built from.
#[derive(Debug, Clone)]
pub struct Subregion {
    pub mask: Vec<bool>,
    pub spec: RegionSpec,
}

impl Subregion {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.iter().all(|&b| !b)
    }
}

/// Declarative region descriptors (closed under complement and union).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum RegionSpec {
    All,
    /// Axis-aligned box `[lo, hi]` (inclusive).
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// `{ x : field(x) <= level }`
    Sublevel { field: ScalarField, level: f64 },
    Complement(Box<RegionSpec>),
    Union(Vec<RegionSpec>),
}

impl RegionSpec {
    /// 1-D interval shorthand.
    pub fn interval(lo: f64, hi: f64) -> RegionSpec {
        RegionSpec::Box {
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    /// Membership is boundary-inclusive with a tiny relative slack, so grid
    /// nodes that land on a region edge up to floating rounding are kept.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            RegionSpec::All => true,
            RegionSpec::Box { lo, hi } => {
                x.iter().zip(lo.iter().zip(hi.iter())).all(|(xi, (l, h))| {
                    let slack = 1e-12 * (1.0 + l.abs() + h.abs());
                    *xi >= *l - slack && *xi <= *h + slack
                })
            }
            RegionSpec::Ball { center, radius } => {
                let mut d2 = 0.0;
                for (xi, ci) in x.iter().zip(center.iter()) {
                    d2 += (xi - ci) * (xi - ci);
                }
                let slack = 1e-12 * (1.0 + radius.abs());
                d2 <= (radius + slack) * (radius + slack)
            }
            RegionSpec::Sublevel { field, level } => {
                field.eval(x) <= *level + 1e-12 * (1.0 + level.abs())
            }
            RegionSpec::Complement(inner) => !inner.contains(x),
            RegionSpec::Union(parts) => parts.iter().any(|p| p.contains(x)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MetricField;

    #[test]
    fn interval_spacing_and_measure() {
        let g = Grid::interval(-2.0, 2.0, Resolution::Fixed(vec![401])).unwrap();
        assert_eq!(g.num_nodes(), 401);
        assert!((g.axes[0].spacing - 0.01).abs() < 1e-15);
        let total: f64 = g.node_weights.iter().sum();
        assert!((total - 4.0).abs() < 1e-12);
        assert_eq!(g.components().count(), 2);
        assert_eq!(g.num_interior(), 399);
    }

    #[test]
    fn rectangle_nodes_per_h_and_components() {
        let g = Grid::rectangle(
            [[0.0, 1.0], [0.0, 1.0]],
            Resolution::NodesPerH { rho: 10.0, h: 0.05 },
        )
        .unwrap();
        assert_eq!(g.axes[0].n, 201);
        assert_eq!(g.axes[1].n, 201);
        assert_eq!(g.components().count(), 1);
        let total: f64 = g.node_weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn strip_boundary_components() {
        let g = Grid::periodic_strip(
            [[1.0, 2.0], [0.0, std::f64::consts::TAU]],
            Resolution::Fixed(vec![101, 128]),
        )
        .unwrap();
        assert_eq!(g.components().count(), 2);
        for p in g.components() {
            assert_eq!(p.nodes.len(), 128);
        }
        assert_eq!(g.num_interior(), 99 * 128);
        // weights on the angular axis are uniform
        assert!((g.axes[1].spacing - std::f64::consts::TAU / 128.0).abs() < 1e-15);
    }

    #[test]
    fn integrate_sin_squared() {
        let g = Grid::interval(0.0, 1.0, Resolution::Fixed(vec![401])).unwrap();
        let vals: Vec<f64> = (0..g.num_nodes())
            .map(|id| (std::f64::consts::PI * g.coords(id)[0]).sin().powi(2))
            .collect();
        let i = g.integrate(&vals, None);
        assert!((i - 0.5).abs() < 1e-6, "integral = {i}");
    }

    #[test]
    fn integrate_over_sublevel_region() {
        let g = Grid::interval(-1.0, 1.0, Resolution::Fixed(vec![401])).unwrap();
        let region = g.subregion(RegionSpec::Box {
            lo: vec![-1.0],
            hi: vec![-1e-12],
        });
        let vals: Vec<f64> = (0..g.num_nodes()).map(|id| g.coords(id)[0].powi(2)).collect();
        let i = g.integrate(&vals, Some(&region));
        assert!((i - 1.0 / 3.0).abs() < 1e-4, "integral = {i}");
    }

    #[test]
    fn boundary_integrals() {
        let g = Grid::rectangle([[0.0, 1.0], [0.0, 1.0]], Resolution::Fixed(vec![41, 41])).unwrap();
        let bottom = g.boundary_piece("bottom").unwrap();
        let ones = vec![1.0; bottom.nodes.len()];
        assert!((g.boundary_integrate(bottom, &ones) - 1.0).abs() < 1e-12);
        let whole = g.boundary_piece("boundary").unwrap();
        let ones = vec![1.0; whole.nodes.len()];
        assert!((g.boundary_integrate(whole, &ones) - 4.0).abs() < 1e-12);

        let strip = Grid::periodic_strip(
            [[1.0, 2.0], [0.0, std::f64::consts::TAU]],
            Resolution::Fixed(vec![101, 128]),
        )
        .unwrap();
        let outer = strip.boundary_piece("outer").unwrap();
        let vals: Vec<f64> = outer
            .nodes
            .iter()
            .map(|&id| strip.coords(id)[1].cos().powi(2))
            .collect();
        let i = strip.boundary_integrate(outer, &vals);
        assert!((i - std::f64::consts::PI).abs() < 1e-10, "integral = {i}");
    }

    #[test]
    fn normals_point_outward() {
        let grids = [
            Grid::interval(-2.0, 2.0, Resolution::Fixed(vec![21])).unwrap(),
            Grid::rectangle([[0.0, 1.0], [0.0, 2.0]], Resolution::Fixed(vec![11, 13])).unwrap(),
            Grid::periodic_strip(
                [[1.0, 2.0], [0.0, std::f64::consts::TAU]],
                Resolution::Fixed(vec![9, 16]),
            )
            .unwrap(),
        ];
        for g in &grids {
            let eps = 0.25 * g.max_spacing();
            for piece in &g.boundary {
                for (slot, &id) in piece.nodes.iter().enumerate() {
                    let c = g.coords(id);
                    let n = piece.normals[slot];
                    let probe = [c[0] + eps * n[0], c[1] + eps * n[1]];
                    let inside = g.axes.iter().enumerate().all(|(k, a)| {
                        a.periodic || (probe[k] >= a.lo && probe[k] <= a.hi)
                    });
                    assert!(!inside, "normal at node {id} of '{}' points inward", piece.name);
                    let norm = (n[0] * n[0] + n[1] * n[1]).sqrt();
                    assert!((norm - 1.0).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn node_gradient_orders() {
        let g = Grid::interval(0.0, 1.0, Resolution::Fixed(vec![201])).unwrap();
        let vals: Vec<f64> = (0..g.num_nodes())
            .map(|id| (2.0 * g.coords(id)[0]).exp())
            .collect();
        let grads = g.node_gradients(&vals);
        for id in [0, 50, 200] {
            let x = g.coords(id)[0];
            let exact = 2.0 * (2.0 * x).exp();
            assert!(
                (grads[id][0] - exact).abs() < 2e-3 * exact,
                "grad at {x}: {} vs {exact}",
                grads[id][0]
            );
        }
    }

    #[test]
    fn validate_linear_and_exponential_fields() {
        let g = Grid::interval(0.0, 1.0, Resolution::Fixed(vec![101])).unwrap();
        let lin = ScalarField::Linear {
            coeffs: [3.0, 0.0],
            offset: -1.0,
        };
        let rep = g.validate_field(&lin, 100, 7).unwrap();
        assert!(rep.max_grad_rel_err < 1e-10);
        assert!(rep.max_hess_rel_err < 1e-10);

        let expf = ScalarField::ExpOf {
            gamma: 2.0,
            base: Box::new(ScalarField::Linear {
                coeffs: [1.0, 0.0],
                offset: 0.0,
            }),
        };
        let rep = g.validate_field(&expf, 100, 7).unwrap();
        assert!(rep.max_grad_rel_err < 1e-6);
        assert!(rep.max_hess_rel_err < 1e-6);
    }

    #[test]
    fn metric_spd_check_runs_on_grid_points() {
        let g = Grid::rectangle([[0.0, 1.0], [0.0, 1.0]], Resolution::Fixed(vec![5, 5])).unwrap();
        let m = MetricField::Wavy { eps: 0.3 };
        for id in 0..g.num_nodes() {
            let c = g.coords(id);
            m.check_spd(&c[..2], 2).unwrap();
        }
    }
}
