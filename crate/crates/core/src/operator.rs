//! Finite-difference assembly of the semiclassical Schrödinger operator
//! `P(h) = −h² Σ ∂_i g^{ij} ∂_j + V` with Dirichlet (interior-node)
//! realization, its conjugation by a real exponential weight, cutoff
//! commutators, semiclassical norms, and boundary traces.
//!
//! Assembly conventions:
//! - matrices act on interior nodes only; boundary columns are eliminated
//!   (zero boundary data);
//! - diagonal metric entries are sampled at half-grid midpoints (flux form),
//!   which makes the unconjugated matrix exactly symmetric;
//! - cross-derivative terms use the symmetric nine-point coupling with metric
//!   samples at the four axis neighbors;
//! - the weighted conjugation `e^{w/h} P e^{−w/h}` is assembled directly from
//!   its expanded coefficients `−h²∂(g∂u) + h[∂_i(c_i u) + c_i ∂_i u] +
//!   (V − ᵗw′Gw′)u` with `c = G w′`, never by scaling with `e^{±w/h}`
//!   factors (those overflow once `h ≲ max w / 700`). Conjugation by a real
//!   weight keeps all coefficients real; the price is lost symmetry.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::field::{MetricField, ScalarField};
use crate::grid::{BoundaryPiece, Grid, Subregion};
use crate::{QmError, Result};

/// Sparse operator over interior nodes, stored row-wise with sorted columns.
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub grid: Arc<Grid>,
    pub h: f64,
    /// `rows[r]` = sorted `(interior column, coefficient)` pairs.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub symmetric: bool,
    /// JSON descriptor of the conjugating weight, when there is one.
    pub conjugated_by: Option<String>,
}

impl AssembledOperator {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Matrix-vector product on an interior-length vector.
    pub fn apply_interior(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n(), "interior-length vector required");
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, a)| a * u[c]).sum())
            .collect()
    }

    /// Matrix-vector product on a full-node vector (boundary entries are
    /// ignored on input and zero on output).
    pub fn apply_full(&self, u: &[f64]) -> Vec<f64> {
        let int = restrict(&self.grid, u);
        extend(&self.grid, &self.apply_interior(&int))
    }

    /// `‖(P − E)u‖_{L²(Ω)}` by grid quadrature; `u` is a full-node vector.
    pub fn residual(&self, u: &[f64], e: f64) -> f64 {
        let pu = self.apply_full(u);
        let sq: Vec<f64> = pu
            .iter()
            .zip(u.iter())
            .map(|(p, v)| (p - e * v) * (p - e * v))
            .collect();
        self.grid.integrate(&sq, None).max(0.0).sqrt()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter().map(|&(_, a)| a.abs()))
            .fold(0.0, f64::max)
    }

    /// Largest asymmetry `|A_{rc} − A_{cr}|` over all stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, a) in row {
                let at = lookup(&self.rows[c], r);
                worst = worst.max((a - at).abs());
            }
        }
        worst
    }

    /// Coordinate-triplet text export: a `# n n nnz` header line followed by
    /// one `row col value` line per stored entry (0-based interior indices,
    /// row-major order, full-precision values).
    pub fn to_triplets(&self) -> String {
        let nnz: usize = self.rows.iter().map(|r| r.len()).sum();
        let mut out = format!("# {} {} {}\n", self.n(), self.n(), nnz);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, a) in row {
                out.push_str(&format!("{r} {c} {a:.17e}\n"));
            }
        }
        out
    }
}

fn lookup(row: &[(usize, f64)], col: usize) -> f64 {
    match row.binary_search_by_key(&col, |&(c, _)| c) {
        Ok(k) => row[k].1,
        Err(_) => 0.0,
    }
}

/// Zero-extend an interior vector to all nodes.
pub fn extend(grid: &Grid, interior: &[f64]) -> Vec<f64> {
    assert_eq!(interior.len(), grid.num_interior());
    let mut out = vec![0.0; grid.num_nodes()];
    for (dof, &id) in grid.interior.iter().enumerate() {
        out[id] = interior[dof];
    }
    out
}

/// Restrict a full-node vector to interior nodes.
pub fn restrict(grid: &Grid, full: &[f64]) -> Vec<f64> {
    assert_eq!(full.len(), grid.num_nodes());
    grid.interior.iter().map(|&id| full[id]).collect()
}

struct RowBuilder {
    cols: BTreeMap<usize, f64>,
}

impl RowBuilder {
    fn new() -> Self {
        RowBuilder {
            cols: BTreeMap::new(),
        }
    }

    /// Accumulate a coefficient; boundary columns (None) are dropped.
    fn add(&mut self, col: Option<usize>, v: f64) {
        if let Some(c) = col {
            *self.cols.entry(c).or_insert(0.0) += v;
        }
    }

    fn finish(self) -> Vec<(usize, f64)> {
        self.cols.into_iter().collect()
    }
}

/// Interior column index of the node at `id + off`, if it is interior.
fn interior_neighbor(grid: &Grid, id: usize, off: [isize; 2]) -> Option<usize> {
    grid.neighbor(id, off).and_then(|nid| grid.interior_index[nid])
}

fn diffusion_and_potential(
    grid: &Grid,
    metric: &MetricField,
    potential: &ScalarField,
    h: f64,
    extra_diag: impl Fn(&[f64]) -> f64,
    first_order: impl Fn(&Grid, usize, &mut RowBuilder),
) -> Result<Vec<Vec<(usize, f64)>>> {
    let dim = grid.dim();
    let h2 = h * h;
    let mut rows = Vec::with_capacity(grid.num_interior());
    for &id in &grid.interior {
        let x = grid.coords(id);
        metric.check_spd(&x[..dim], dim)?;
        let r = grid.interior_index[id].unwrap();
        let mut row = RowBuilder::new();
        let mut diag = potential.eval(&x[..dim]) + extra_diag(&x[..dim]);

        for k in 0..dim {
            let dk = grid.axes[k].spacing;
            let mut xh = x;
            xh[k] = x[k] + 0.5 * dk;
            let gp = metric.eval(&xh[..dim])[k][k];
            xh[k] = x[k] - 0.5 * dk;
            let gm = metric.eval(&xh[..dim])[k][k];
            let mut off = [0isize; 2];
            off[k] = 1;
            row.add(interior_neighbor(grid, id, off), -h2 * gp / (dk * dk));
            off[k] = -1;
            row.add(interior_neighbor(grid, id, off), -h2 * gm / (dk * dk));
            diag += h2 * (gp + gm) / (dk * dk);
        }

        if dim == 2 {
            // Symmetric nine-point coupling for ∂_0(b ∂_1 u) + ∂_1(b ∂_0 u),
            // b = g^{01}, with b sampled at the four axis neighbors. The
            // resulting matrix entry between diagonal neighbors is the mean
            // of the two b-samples adjacent to the connecting edge, which is
            // what makes the assembly exactly symmetric.
            let d0 = grid.axes[0].spacing;
            let d1 = grid.axes[1].spacing;
            let scale = -h2 / (4.0 * d0 * d1);
            let b_at = |off: [isize; 2]| -> f64 {
                let nid = grid.neighbor(id, off).expect("axis neighbor of interior node");
                let c = grid.coords(nid);
                metric.eval(&c[..dim])[0][1]
            };
            let b_e = b_at([1, 0]);
            let b_w = b_at([-1, 0]);
            let b_n = b_at([0, 1]);
            let b_s = b_at([0, -1]);
            row.add(interior_neighbor(grid, id, [1, 1]), scale * (b_e + b_n));
            row.add(interior_neighbor(grid, id, [1, -1]), -scale * (b_e + b_s));
            row.add(interior_neighbor(grid, id, [-1, 1]), -scale * (b_w + b_n));
            row.add(interior_neighbor(grid, id, [-1, -1]), scale * (b_w + b_s));
        }

        row.add(Some(r), diag);
        first_order(grid, id, &mut row);
        rows.push(row.finish());
    }
    Ok(rows)
}

/// Assemble `P(h) = −h² Σ ∂_i g^{ij} ∂_j + V` on interior nodes.
pub fn assemble_schrodinger(
    grid: &Arc<Grid>,
    metric: &MetricField,
    potential: &ScalarField,
    h: f64,
) -> Result<AssembledOperator> {
    if h <= 0.0 {
        return Err(QmError::Unsupported(format!(
            "semiclassical parameter must be positive, got {h}"
        )));
    }
    let rows = diffusion_and_potential(grid, metric, potential, h, |_| 0.0, |_, _, _| {})?;
    Ok(AssembledOperator {
        grid: Arc::clone(grid),
        h,
        rows,
        symmetric: true,
        conjugated_by: None,
    })
}

/// Assemble the conjugation `e^{w/h} P e^{−w/h}` directly from its expanded
/// coefficients. The result is real and non-symmetric.
pub fn assemble_conjugated(
    grid: &Arc<Grid>,
    metric: &MetricField,
    potential: &ScalarField,
    weight: &ScalarField,
    h: f64,
) -> Result<AssembledOperator> {
    if h <= 0.0 {
        return Err(QmError::Unsupported(format!(
            "semiclassical parameter must be positive, got {h}"
        )));
    }
    let dim = grid.dim();
    // c(x) = G(x)·∇w(x); the zeroth-order correction is −ᵗw′Gw′ = −∇w·c.
    let cvec = |x: &[f64]| -> [f64; 2] {
        let g = metric.eval(x);
        let wg = weight.grad(x);
        let mut c = [0.0, 0.0];
        for i in 0..dim {
            for j in 0..dim {
                c[i] += g[i][j] * wg[j];
            }
        }
        c
    };
    let extra = |x: &[f64]| -> f64 {
        let c = cvec(x);
        let wg = weight.grad(x);
        -(c[0] * wg[0] + c[1] * wg[1])
    };
    let first = |grid: &Grid, id: usize, row: &mut RowBuilder| {
        let x = grid.coords(id);
        let c_here = cvec(&x[..dim]);
        for k in 0..dim {
            let dk = grid.axes[k].spacing;
            let mut off = [0isize; 2];
            off[k] = 1;
            let nid_p = grid.neighbor(id, off).expect("axis neighbor");
            off[k] = -1;
            let nid_m = grid.neighbor(id, off).expect("axis neighbor");
            let cp = {
                let xp = grid.coords(nid_p);
                cvec(&xp[..dim])[k]
            };
            let cm = {
                let xm = grid.coords(nid_m);
                cvec(&xm[..dim])[k]
            };
            // h·∂_k(c_k u): centered difference of the analytic product
            row.add(grid.interior_index[nid_p], h * cp / (2.0 * dk));
            row.add(grid.interior_index[nid_m], -h * cm / (2.0 * dk));
            // h·c_k·∂_k u
            row.add(grid.interior_index[nid_p], h * c_here[k] / (2.0 * dk));
            row.add(grid.interior_index[nid_m], -h * c_here[k] / (2.0 * dk));
        }
    };
    let rows = diffusion_and_potential(grid, metric, potential, h, extra, first)?;
    let descriptor = serde_json::to_string(weight).unwrap_or_else(|_| "weight".into());
    Ok(AssembledOperator {
        grid: Arc::clone(grid),
        h,
        rows,
        symmetric: false,
        conjugated_by: Some(descriptor),
    })
}

/// `−h²(Δ_G χ)u − 2h² Σ g^{ij} ∂_iχ ∂_ju`, the commutator `[−h²Δ_G, χ]`
/// applied to `u`, with analytic χ-derivatives and discrete u-derivatives.
/// Returns a full-node vector.
pub fn commutator_cutoff_apply(
    grid: &Grid,
    metric: &MetricField,
    chi: &ScalarField,
    u: &[f64],
    h: f64,
) -> Vec<f64> {
    assert_eq!(u.len(), grid.num_nodes(), "full-node vector required");
    let dim = grid.dim();
    let h2 = h * h;
    let grads = grid.node_gradients(u);
    (0..grid.num_nodes())
        .map(|id| {
            let x = grid.coords(id);
            let xs = &x[..dim];
            let g = metric.eval(xs);
            let cg = chi.grad(xs);
            let ch = chi.hess(xs);
            // Δ_G χ = Σ g^{ij} ∂²_{ij}χ + Σ (∂_i g^{ij}) ∂_jχ
            let mut lap = 0.0;
            for i in 0..dim {
                let dg = metric.deriv(xs, i);
                for j in 0..dim {
                    lap += g[i][j] * ch[i][j] + dg[i][j] * cg[j];
                }
            }
            let mut grad_pair = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    grad_pair += g[i][j] * cg[i] * grads[id][j];
                }
            }
            -h2 * lap * u[id] - 2.0 * h2 * grad_pair
        })
        .collect()
}

/// `L²` norm of a full-node vector over a subregion (whole domain if `None`).
pub fn l2_norm(grid: &Grid, region: Option<&Subregion>, u: &[f64]) -> Result<f64> {
    check_region(region)?;
    let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
    Ok(grid.integrate(&sq, region).max(0.0).sqrt())
}

/// Semiclassical Sobolev norm `(∫ |u|² + |h∇u|²_G)^{1/2}` with the metric
/// quadratic form `ᵗ(∂u)G(∂u)` and discrete gradients.
pub fn h1h_norm(
    grid: &Grid,
    metric: &MetricField,
    region: Option<&Subregion>,
    u: &[f64],
    h: f64,
) -> Result<f64> {
    check_region(region)?;
    let dim = grid.dim();
    let grads = grid.node_gradients(u);
    let sq: Vec<f64> = (0..grid.num_nodes())
        .map(|id| {
            let x = grid.coords(id);
            let g = metric.eval(&x[..dim]);
            let mut q = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    q += grads[id][i] * g[i][j] * grads[id][j];
                }
            }
            u[id] * u[id] + h * h * q
        })
        .collect();
    Ok(grid.integrate(&sq, region).max(0.0).sqrt())
}

fn check_region(region: Option<&Subregion>) -> Result<()> {
    if let Some(r) = region {
        if r.is_empty() {
            return Err(QmError::EmptyRegion(
                "norm requested over an empty node set".into(),
            ));
        }
    }
    Ok(())
}

/// `h·Nu` on a boundary piece, `N = Σ n_i g^{ij} ∂_j`, with second-order
/// one-sided stencils along constrained axes. `u` must vanish on the piece.
pub fn normal_trace(
    grid: &Grid,
    metric: &MetricField,
    piece: &BoundaryPiece,
    u: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    assert_eq!(u.len(), grid.num_nodes(), "full-node vector required");
    let dim = grid.dim();
    let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for &id in &piece.nodes {
        if u[id].abs() > 1e-12 * umax.max(1.0) {
            return Err(QmError::Unsupported(format!(
                "normal trace requires zero boundary data on '{}', found |u| = {:.3e}",
                piece.name,
                u[id].abs()
            )));
        }
    }
    let mut out = Vec::with_capacity(piece.nodes.len());
    for (slot, &id) in piece.nodes.iter().enumerate() {
        let m = grid.multi(id);
        let x = grid.coords(id);
        let g = metric.eval(&x[..dim]);
        let n = piece.normals[slot];
        let mut du = [0.0, 0.0];
        for k in 0..dim {
            let a = &grid.axes[k];
            let dk = a.spacing;
            du[k] = if !a.periodic && m[k] == 0 {
                let mut o1 = [0isize; 2];
                let mut o2 = [0isize; 2];
                o1[k] = 1;
                o2[k] = 2;
                let u1 = u[grid.neighbor(id, o1).unwrap()];
                let u2 = u[grid.neighbor(id, o2).unwrap()];
                (-3.0 * u[id] + 4.0 * u1 - u2) / (2.0 * dk)
            } else if !a.periodic && m[k] == a.n - 1 {
                let mut o1 = [0isize; 2];
                let mut o2 = [0isize; 2];
                o1[k] = -1;
                o2[k] = -2;
                let u1 = u[grid.neighbor(id, o1).unwrap()];
                let u2 = u[grid.neighbor(id, o2).unwrap()];
                (3.0 * u[id] - 4.0 * u1 + u2) / (2.0 * dk)
            } else {
                let mut op = [0isize; 2];
                let mut om = [0isize; 2];
                op[k] = 1;
                om[k] = -1;
                let up = u[grid.neighbor(id, op).unwrap()];
                let um = u[grid.neighbor(id, om).unwrap()];
                (up - um) / (2.0 * dk)
            };
        }
        let mut nu = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                nu += n[i] * g[i][j] * du[j];
            }
        }
        out.push(h * nu);
    }
    Ok(out)
}

/// `‖hNu‖_{L²}` over a boundary piece.
pub fn boundary_flux(
    grid: &Grid,
    metric: &MetricField,
    piece: &BoundaryPiece,
    u: &[f64],
    h: f64,
) -> Result<f64> {
    let trace = normal_trace(grid, metric, piece, u, h)?;
    let sq: Vec<f64> = trace.iter().map(|t| t * t).collect();
    Ok(grid.boundary_integrate(piece, &sq).max(0.0).sqrt())
}

/// Ratio `h²∫|χ|²|∇u|²_G / ∫_{supp χ}(|(P−E)u|² + |u|²)`; boundedness of this
/// quotient over an h-sweep is the elliptic-regularity sanity check.
pub fn check_elliptic_estimate(
    op: &AssembledOperator,
    metric: &MetricField,
    chi: &ScalarField,
    u: &[f64],
    e: f64,
) -> Result<f64> {
    let grid = &op.grid;
    let dim = grid.dim();
    let grads = grid.node_gradients(u);
    let chi_vals = grid.sample(chi);
    let num_sq: Vec<f64> = (0..grid.num_nodes())
        .map(|id| {
            let x = grid.coords(id);
            let g = metric.eval(&x[..dim]);
            let mut q = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    q += grads[id][i] * g[i][j] * grads[id][j];
                }
            }
            chi_vals[id] * chi_vals[id] * q
        })
        .collect();
    let numerator = op.h * op.h * grid.integrate(&num_sq, None);

    let pu = op.apply_full(u);
    let den_sq: Vec<f64> = (0..grid.num_nodes())
        .map(|id| {
            if chi_vals[id] != 0.0 {
                let r = pu[id] - e * u[id];
                r * r + u[id] * u[id]
            } else {
                0.0
            }
        })
        .collect();
    let denominator = grid.integrate(&den_sq, None);
    if denominator < 1e-30 {
        return Err(QmError::Unsupported(
            "elliptic-estimate denominator vanishes (degenerate input)".into(),
        ));
    }
    Ok(numerator / denominator)
}
