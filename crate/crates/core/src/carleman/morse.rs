//! Weight-shape families, critical-point audits, and relocation.
//!
//! Interior lower bounds need weights whose critical points sit inside the
//! observation region; boundary bounds need weights with none at all and a
//! prescribed sign of the normal derivative on each boundary component. This
//! module generates such shapes from three seeded families, audits any shape
//! by Newton-polishing every grid cell midpoint into a deduplicated critical
//! set with Hessian classifications, and relocates critical points along
//! disjoint compactly supported tube flows so the boundary data never feels
//! the surgery.
//!
//! A topological sanity law threads through the families: on a rectangle the
//! signed count Σ(−1)^index must equal 1, and on a periodic strip it must
//! equal 0. The swirl family makes the strip case concrete — its radial
//! sin² profile pins the edge derivative at ±1 for every amplitude, and
//! pushing the amplitude over the threshold births two index-1/index-2/
//! index-0/index-1 points at once, keeping the signed count at zero. A
//! two-point swirl (one maximum, one minimum, signed count 2) is
//! topologically impossible with these edge signs, which is why the family
//! is parameterized by a threshold multiple rather than a point count.

use crate::carleman::flow::{point_segment_distance, segment_distance, FlowMap, TubeFlow};
use crate::{QmError, Result};
use crate::field::{mat_inv, Mat2, ScalarField, Vec2};
use crate::grid::{Grid, GridKind, Subregion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;

/// One polished critical point. `index` counts negative Hessian eigenvalues
/// (0 = minimum, 2 = maximum in two dimensions).
#[derive(Debug, Clone, Serialize)]
pub struct CriticalPoint {
    pub location: Vec2,
    pub value: f64,
    pub grad_norm: f64,
    pub hess_eigs: Vec2,
    pub hess_det: f64,
    pub index: usize,
}

/// Extrema of the outward normal derivative over one boundary component.
#[derive(Debug, Clone, Serialize)]
pub struct BoundarySign {
    pub piece: String,
    pub min: f64,
    pub max: f64,
}

/// Full audit of a candidate weight shape on a grid.
#[derive(Debug, Clone, Serialize)]
pub struct MorseReport {
    pub critical_points: Vec<CriticalPoint>,
    pub boundary_signs: Vec<BoundarySign>,
    pub min_value: f64,
    pub degenerate: bool,
}

impl MorseReport {
    /// All critical points are nondegenerate (|det Hess| ≥ 1e−8).
    pub fn is_morse(&self) -> bool {
        !self.degenerate
    }

    pub fn nonnegative(&self) -> bool {
        self.min_value >= 0.0
    }

    /// Σ(−1)^index — must match the domain topology (1 on a rectangle or
    /// interval, 0 on a periodic strip) whenever the boundary signs are
    /// uniform on each component.
    pub fn index_sum(&self) -> i64 {
        self.critical_points
            .iter()
            .map(|c| if c.index % 2 == 0 { 1 } else { -1 })
            .sum()
    }

    pub fn sign(&self, piece: &str) -> Option<&BoundarySign> {
        self.boundary_signs.iter().find(|s| s.piece == piece)
    }
}

/// Seeded weight-shape families.
#[derive(Debug, Clone, Serialize)]
pub enum MorseFamily {
    /// `C − |x − center|²` on a non-periodic domain: one interior maximum,
    /// outward normal derivative negative on the whole boundary.
    Dome { center: Vec2 },
    /// The dome plus `bumps` seeded compactly supported bumps whose supports
    /// stay away from the boundary, so the edge data matches the plain dome
    /// while the interior picks up extra maxima and saddles.
    BumpyDome {
        center: Vec2,
        bumps: usize,
        amp: f64,
    },
    /// Strip weight with radial slope −1 (or +1 for `grows_outward`) on both
    /// edge circles and a seeded-phase angular swirl. `strength` is the
    /// amplitude in units of the critical threshold: below 1 the shape has
    /// no critical points at all; above 1 it has exactly four (a saddle and
    /// a maximum on one meridian, a minimum and a saddle on the opposite
    /// one).
    Swirl { strength: f64, grows_outward: bool },
}

const DEGENERACY_FLOOR: f64 = 1e-8;
const GRAD_POLISH: f64 = 1e-9;
const MAX_GENERATE_ATTEMPTS: usize = 20;

fn hess_eigs(h: Mat2, dim: usize) -> Vec2 {
    if dim == 1 {
        return [h[0][0], 0.0];
    }
    let half_tr = 0.5 * (h[0][0] + h[1][1]);
    let disc = (0.25 * (h[0][0] - h[1][1]).powi(2) + h[0][1] * h[0][1]).sqrt();
    [half_tr - disc, half_tr + disc]
}

/// Periodic-aware distance between two points in grid coordinates.
fn grid_distance(grid: &Grid, a: Vec2, b: Vec2) -> f64 {
    let mut d2 = 0.0;
    for (k, axis) in grid.axes.iter().enumerate() {
        let mut d = (a[k] - b[k]).abs();
        if axis.periodic {
            let span = axis.hi - axis.lo;
            d = d.rem_euclid(span);
            d = d.min(span - d);
        }
        d2 += d * d;
    }
    d2.sqrt()
}

fn wrap_into_axes(grid: &Grid, x: &mut Vec2) {
    for (k, axis) in grid.axes.iter().enumerate() {
        if axis.periodic {
            let span = axis.hi - axis.lo;
            x[k] = axis.lo + (x[k] - axis.lo).rem_euclid(span);
        }
    }
}

/// Audit `field` on `grid`: Newton from every interior cell midpoint,
/// polished to |∇| ≤ 1e−9, deduplicated within two grid spacings, classified
/// by the analytic Hessian; plus per-component normal-derivative extrema and
/// the global minimum value.
pub fn morse_report(grid: &Grid, field: &ScalarField) -> MorseReport {
    let dim = grid.dim();
    let step_cap = 2.0 * grid.max_spacing();
    let dedup_radius = 2.0 * grid.max_spacing();

    // Cell midpoints: n−1 per non-periodic axis, n (with wrap) per periodic.
    let mut starts: Vec<Vec2> = Vec::new();
    let cells_along = |k: usize| -> usize {
        let axis = &grid.axes[k];
        if axis.periodic {
            axis.n
        } else {
            axis.n - 1
        }
    };
    let midpoint = |k: usize, i: usize| -> f64 {
        let axis = &grid.axes[k];
        axis.lo + (i as f64 + 0.5) * axis.spacing
    };
    if dim == 1 {
        for i in 0..cells_along(0) {
            starts.push([midpoint(0, i), 0.0]);
        }
    } else {
        for i in 0..cells_along(0) {
            for j in 0..cells_along(1) {
                starts.push([midpoint(0, i), midpoint(1, j)]);
            }
        }
    }

    let mut found: Vec<CriticalPoint> = Vec::new();
    'starts: for start in starts {
        let mut x = start;
        let mut converged = false;
        for _ in 0..60 {
            let g = field.grad(&x[..dim]);
            let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
            if !gn.is_finite() {
                continue 'starts;
            }
            if gn <= 0.1 * GRAD_POLISH {
                converged = true;
                break;
            }
            let h = field.hess(&x[..dim]);
            let det = if dim == 1 {
                h[0][0]
            } else {
                h[0][0] * h[1][1] - h[0][1] * h[1][0]
            };
            if !det.is_finite() || det == 0.0 {
                continue 'starts;
            }
            let inv = mat_inv(h, dim);
            let mut s = [0.0, 0.0];
            for r in 0..dim {
                for c in 0..dim {
                    s[r] -= inv[r][c] * g[c];
                }
            }
            let sn = (s[0] * s[0] + s[1] * s[1]).sqrt();
            if !sn.is_finite() {
                continue 'starts;
            }
            if sn > step_cap {
                let f = step_cap / sn;
                s[0] *= f;
                s[1] *= f;
            }
            x[0] += s[0];
            x[1] += s[1];
        }
        let g = field.grad(&x[..dim]);
        let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if !(converged || gn <= GRAD_POLISH) {
            continue;
        }
        wrap_into_axes(grid, &mut x);
        // Interior only: points that polished onto (or beyond) a
        // non-periodic edge are boundary artifacts, not critical points of
        // the open-domain shape.
        for (k, axis) in grid.axes.iter().enumerate() {
            if !axis.periodic {
                let margin = 1e-9 * (axis.hi - axis.lo);
                if x[k] <= axis.lo + margin || x[k] >= axis.hi - margin {
                    continue 'starts;
                }
            }
        }
        if found
            .iter()
            .any(|c| grid_distance(grid, c.location, x) <= dedup_radius)
        {
            continue;
        }
        let h = field.hess(&x[..dim]);
        let eigs = hess_eigs(h, dim);
        let det = if dim == 1 { eigs[0] } else { eigs[0] * eigs[1] };
        let index = eigs[..dim].iter().filter(|&&e| e < 0.0).count();
        found.push(CriticalPoint {
            location: x,
            value: field.eval(&x[..dim]),
            grad_norm: gn,
            hess_eigs: eigs,
            hess_det: det,
            index,
        });
    }
    // Deterministic order: lexicographic by location.
    found.sort_by(|a, b| {
        a.location
            .partial_cmp(&b.location)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let degenerate = found.iter().any(|c| c.hess_det.abs() < DEGENERACY_FLOOR);

    let mut boundary_signs = Vec::new();
    for piece in grid.components() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (slot, &id) in piece.nodes.iter().enumerate() {
            let x = grid.coords(id);
            let g = field.grad(&x[..dim]);
            let n = piece.normals[slot];
            let nd = n[0] * g[0] + n[1] * g[1];
            lo = lo.min(nd);
            hi = hi.max(nd);
        }
        boundary_signs.push(BoundarySign {
            piece: piece.name.clone(),
            min: lo,
            max: hi,
        });
    }

    let min_value = grid
        .sample(field)
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    MorseReport {
        critical_points: found,
        boundary_signs,
        min_value,
        degenerate,
    }
}

/// Swirl amplitude for a threshold multiple: the radial profile's maximal
/// slope is π/(r₁−r₀), so `strength` multiples of its reciprocal cross the
/// critical threshold exactly at 1.
fn swirl_amp(grid: &Grid, strength: f64) -> f64 {
    let dr = grid.axes[0].hi - grid.axes[0].lo;
    strength * dr / std::f64::consts::PI
}

fn build_family(grid: &Grid, family: &MorseFamily, rng: &mut ChaCha8Rng) -> Result<ScalarField> {
    match family {
        MorseFamily::Dome { center } => {
            if grid.kind == GridKind::PeriodicStrip {
                return Err(QmError::Unsupported(
                    "dome shapes need a domain whose boundary encloses them; use the swirl family on strips".into(),
                ));
            }
            let offset = dome_offset(grid, *center, 0.0);
            Ok(ScalarField::QuadRadial {
                center: *center,
                coeff: -1.0,
                offset,
            })
        }
        MorseFamily::BumpyDome { center, bumps, amp } => {
            if grid.kind == GridKind::PeriodicStrip {
                return Err(QmError::Unsupported(
                    "dome shapes need a domain whose boundary encloses them; use the swirl family on strips".into(),
                ));
            }
            let offset = dome_offset(grid, *center, *amp * *bumps as f64);
            let mut parts = vec![ScalarField::QuadRadial {
                center: *center,
                coeff: -1.0,
                offset,
            }];
            let dim = grid.dim();
            for _ in 0..*bumps {
                let mut c = [0.0, 0.0];
                let mut edge = f64::INFINITY;
                for k in 0..dim {
                    let axis = &grid.axes[k];
                    let span = axis.hi - axis.lo;
                    c[k] = rng.gen_range(axis.lo + 0.25 * span..axis.hi - 0.25 * span);
                    edge = edge.min((c[k] - axis.lo).min(axis.hi - c[k]));
                }
                let min_span = grid
                    .axes
                    .iter()
                    .take(dim)
                    .map(|a| a.hi - a.lo)
                    .fold(f64::INFINITY, f64::min);
                let radius = rng
                    .gen_range(0.10 * min_span..0.20 * min_span)
                    .min(0.9 * edge);
                let height = rng.gen_range(0.4 * *amp..*amp);
                let signed = if rng.gen::<bool>() { height } else { -height };
                parts.push(ScalarField::Bump {
                    center: c,
                    radius,
                    amp: signed,
                });
            }
            Ok(ScalarField::Sum(parts))
        }
        MorseFamily::Swirl {
            strength,
            grows_outward,
        } => {
            if grid.kind != GridKind::PeriodicStrip {
                return Err(QmError::Unsupported(
                    "the swirl family lives on a periodic strip".into(),
                ));
            }
            let r0 = grid.axes[0].lo;
            let r1 = grid.axes[0].hi;
            let amp = swirl_amp(grid, *strength);
            let phase = rng.gen_range(0.0..grid.axes[1].hi - grid.axes[1].lo);
            if *grows_outward {
                // −(o − r + amp·g·cos(θ − phase − π)) = −o + r + amp·g·cos(θ − phase).
                Ok(ScalarField::Scaled {
                    factor: -1.0,
                    base: Box::new(ScalarField::AnnulusSwirl {
                        r0,
                        r1,
                        amp,
                        phase: phase + std::f64::consts::PI,
                        offset: r0 - amp - 0.5,
                    }),
                })
            } else {
                Ok(ScalarField::AnnulusSwirl {
                    r0,
                    r1,
                    amp,
                    phase,
                    offset: r1 + amp + 0.5,
                })
            }
        }
    }
}

/// Offset that keeps the dome (plus up to `slack` of downward bumps)
/// nonnegative over the whole domain.
fn dome_offset(grid: &Grid, center: Vec2, slack: f64) -> f64 {
    let dim = grid.dim();
    let mut worst = 0.0f64;
    let corners = if dim == 1 { 2 } else { 4 };
    for c in 0..corners {
        let mut d2 = 0.0;
        for k in 0..dim {
            let axis = &grid.axes[k];
            let v = if (c >> k) & 1 == 0 { axis.lo } else { axis.hi };
            d2 += (v - center[k]) * (v - center[k]);
        }
        worst = worst.max(d2);
    }
    worst + slack + 1.0
}

/// Draw a shape from `family`, audit it, and hand both back. Degenerate
/// draws (a Hessian determinant under 1e−8 at some critical point) are
/// redrawn with a fresh seeded stream, up to 20 attempts.
pub fn generate_morse(
    grid: &Grid,
    family: &MorseFamily,
    seed: u64,
) -> Result<(ScalarField, MorseReport)> {
    let mut last: Option<(Vec<f64>, f64)> = None;
    for attempt in 0..MAX_GENERATE_ATTEMPTS {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64 * 0x9E37_79B9_7F4A_7C15));
        let field = build_family(grid, family, &mut rng)?;
        let report = morse_report(grid, &field);
        if !report.degenerate {
            return Ok((field, report));
        }
        let worst = report
            .critical_points
            .iter()
            .min_by(|a, b| a.hess_det.abs().total_cmp(&b.hess_det.abs()))
            .expect("degenerate report has critical points");
        last = Some((worst.location[..grid.dim()].to_vec(), worst.hess_det));
    }
    let (location, det) = last.expect("loop ran");
    Err(QmError::DegenerateCritical { location, det })
}

/// Move every critical point of `field` that lies outside `target` into it,
/// riding compactly supported disjoint tube flows whose supports stay inside
/// the domain. Returns the rebuilt shape and a fresh audit. Critical values
/// ride along unchanged (the surgery is a diffeomorphism), and the boundary
/// never moves because every tube support is interior.
pub fn relocate_critical_points(
    grid: &Grid,
    field: &ScalarField,
    report: &MorseReport,
    target: &Subregion,
) -> Result<(ScalarField, MorseReport)> {
    if target.is_empty() {
        return Err(QmError::EmptyRegion(
            "relocation target region has no nodes".into(),
        ));
    }
    let dim = grid.dim();
    let mut moving: Vec<Vec2> = Vec::new();
    let mut staying: Vec<Vec2> = Vec::new();
    for c in &report.critical_points {
        if target.spec.contains(&c.location[..dim]) {
            staying.push(c.location);
        } else {
            moving.push(c.location);
        }
    }
    if moving.is_empty() {
        return Ok((field.clone(), report.clone()));
    }

    // Landing sites: region nodes nearest the region centroid, kept pairwise
    // separated so each tube gets room around its endpoint.
    let ids: Vec<usize> = (0..grid.num_nodes()).filter(|&i| target.mask[i]).collect();
    let mut centroid = [0.0, 0.0];
    for &id in &ids {
        let x = grid.coords(id);
        centroid[0] += x[0];
        centroid[1] += x[1];
    }
    centroid[0] /= ids.len() as f64;
    centroid[1] /= ids.len() as f64;
    let mut ordered: Vec<Vec2> = ids.iter().map(|&id| grid.coords(id)).collect();
    ordered.sort_by(|a, b| {
        grid_distance(grid, *a, centroid)
            .total_cmp(&grid_distance(grid, *b, centroid))
            .then_with(|| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut sep = 6.0 * grid.max_spacing();
    let targets: Vec<Vec2> = loop {
        let mut picked: Vec<Vec2> = Vec::new();
        for &cand in &ordered {
            if picked
                .iter()
                .all(|p| grid_distance(grid, *p, cand) >= sep)
            {
                picked.push(cand);
                if picked.len() == moving.len() {
                    break;
                }
            }
        }
        if picked.len() == moving.len() {
            break picked;
        }
        sep *= 0.5;
        if sep < 1.5 * grid.max_spacing() {
            return Err(QmError::TubeDisjointness(format!(
                "target region cannot seat {} separated landing sites",
                moving.len()
            )));
        }
    };

    // Pair sources with landing sites in matching angular order around the
    // region centroid to keep the straight tubes from crossing.
    let angle = |p: &Vec2| (p[1] - centroid[1]).atan2(p[0] - centroid[0]);
    let mut src_order: Vec<usize> = (0..moving.len()).collect();
    src_order.sort_by(|&a, &b| angle(&moving[a]).total_cmp(&angle(&moving[b])));
    let mut dst_order: Vec<usize> = (0..targets.len()).collect();
    dst_order.sort_by(|&a, &b| angle(&targets[a]).total_cmp(&angle(&targets[b])));

    let boundary_clearance = |p: Vec2| -> f64 {
        let mut d = f64::INFINITY;
        for k in 0..dim {
            let axis = &grid.axes[k];
            if !axis.periodic {
                d = d.min((p[k] - axis.lo).min(axis.hi - p[k]));
            }
        }
        d
    };

    let mut tubes: Vec<TubeFlow> = Vec::new();
    for (&si, &di) in src_order.iter().zip(dst_order.iter()) {
        let from = moving[si];
        let to = targets[di];
        // Segment-to-boundary distance is attained at an endpoint for
        // axis-aligned walls, so the support cap follows from the endpoints.
        let cap = 0.95 * boundary_clearance(from).min(boundary_clearance(to))
            / std::f64::consts::SQRT_2;
        if cap <= 0.0 {
            return Err(QmError::TubeDisjointness(
                "a critical point sits on the domain boundary".into(),
            ));
        }
        tubes.push(TubeFlow {
            from,
            to,
            width: cap,
        });
    }

    // Shrink widths until all supports are pairwise disjoint and clear of
    // the critical points that stay put.
    let floor = 1e-3 * grid.diameter();
    loop {
        let mut ok = true;
        for i in 0..tubes.len() {
            for j in i + 1..tubes.len() {
                let d = segment_distance(tubes[i].from, tubes[i].to, tubes[j].from, tubes[j].to);
                if d < 1e-12 {
                    return Err(QmError::TubeDisjointness(
                        "relocation paths cross; no width makes their supports disjoint".into(),
                    ));
                }
                if d < tubes[i].support_radius() + tubes[j].support_radius() {
                    ok = false;
                }
            }
            for s in &staying {
                let d = point_segment_distance(*s, tubes[i].from, tubes[i].to);
                if d < tubes[i].support_radius() {
                    ok = false;
                }
            }
        }
        if ok {
            break;
        }
        for t in &mut tubes {
            t.width *= 0.5;
        }
        if tubes.iter().any(|t| t.width < floor) {
            return Err(QmError::TubeDisjointness(format!(
                "supports still overlap at the minimum width {floor:.3e}"
            )));
        }
    }

    let flow = Arc::new(FlowMap::new(dim, tubes));
    let moved = ScalarField::Relocated {
        base: Box::new(field.clone()),
        flow,
    };
    let fresh = morse_report(grid, &moved);
    Ok((moved, fresh))
}
