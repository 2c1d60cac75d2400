//! Compactly supported tube flows and their time-1 diffeomorphisms.
//!
//! A [`TubeFlow`] is the autonomous vector field `X(x) = v · m(x)` where `v`
//! is the displacement between two marked points and `m` is a C² plateau
//! amplitude equal to 1 on the straight segment between them and 0 outside a
//! capsule of the given width. The time-1 flow of `X` carries the start point
//! exactly onto the end point (the trajectory stays on the segment, where the
//! field is exactly `v`), and is the identity outside the capsule.
//!
//! A [`FlowMap`] composes several tube flows with pairwise disjoint supports.
//! Its inverse and the first two derivatives of the inverse are produced by
//! integrating the reverse flow together with the variational equations, with
//! adaptive step-doubling RK4 at a per-step error of 1e-9.

use serde::{Deserialize, Serialize};

use crate::field::{Mat2, Vec2};

/// Per-step absolute error target of the adaptive integrator.
pub const STEP_TOL: f64 = 1e-9;

/// Straight-line transport of `from` onto `to`, supported in a capsule of
/// radius `width` around the segment (with a longitudinal margin of one
/// `width` beyond each endpoint).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TubeFlow {
    pub from: Vec2,
    pub to: Vec2,
    pub width: f64,
}

impl TubeFlow {
    fn geometry(&self) -> TubeGeom {
        let v = [self.to[0] - self.from[0], self.to[1] - self.from[1]];
        let len = (v[0] * v[0] + v[1] * v[1]).sqrt();
        assert!(len > 0.0, "tube flow with zero displacement");
        assert!(self.width > 0.0, "tube flow with zero width");
        TubeGeom {
            a: self.from,
            v,
            t: [v[0] / len, v[1] / len],
            len,
            margin: self.width / len,
            w2: self.width * self.width,
        }
    }

    /// Conservative support radius around the segment: every point moved by
    /// this flow lies within `sqrt(2) * width` of the segment.
    pub fn support_radius(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.width
    }
}

struct TubeGeom {
    a: Vec2,
    v: Vec2,
    t: Vec2,
    len: f64,
    margin: f64,
    w2: f64,
}

/// Amplitude value, gradient and Hessian of one tube at a point.
struct Amp {
    m: f64,
    dm: Vec2,
    hm: Mat2,
}

impl TubeGeom {
    /// `true` when the point is certainly outside the support.
    fn outside(&self, x: Vec2) -> bool {
        let d = [x[0] - self.a[0], x[1] - self.a[1]];
        let s = (d[0] * self.t[0] + d[1] * self.t[1]) / self.len;
        if s <= -self.margin || s >= 1.0 + self.margin {
            return true;
        }
        let p_hat = (d[0] * d[0] + d[1] * d[1] - (s * self.len) * (s * self.len)) / self.w2;
        p_hat >= 1.0
    }

    fn amplitude(&self, x: Vec2) -> Amp {
        let d = [x[0] - self.a[0], x[1] - self.a[1]];
        let proj = d[0] * self.t[0] + d[1] * self.t[1];
        let s = proj / self.len;
        let p_hat = (d[0] * d[0] + d[1] * d[1] - proj * proj) / self.w2;

        // Longitudinal plateau: 1 on s in [0, 1], ramps of length `margin`.
        let (u1, du1, ddu1) = crate::field::ramp01((s + self.margin) / self.margin);
        let (u2, du2, ddu2) = crate::field::ramp01((1.0 + self.margin - s) / self.margin);
        let bl = u1 * u2;
        let dbl = (du1 * u2 - u1 * du2) / self.margin;
        let ddbl = (ddu1 * u2 - 2.0 * du1 * du2 + u1 * ddu2) / (self.margin * self.margin);

        // Transverse plateau: 1 for p_hat <= 1/4, 0 for p_hat >= 1.
        let (u3, du3, ddu3) = crate::field::ramp01((p_hat - 0.25) / 0.75);
        let bp = 1.0 - u3;
        let dbp = -du3 / 0.75;
        let ddbp = -ddu3 / (0.75 * 0.75);

        let grad_s = [self.t[0] / self.len, self.t[1] / self.len];
        let grad_p = [
            (2.0 * d[0] - 2.0 * proj * self.t[0]) / self.w2,
            (2.0 * d[1] - 2.0 * proj * self.t[1]) / self.w2,
        ];
        // Hess p_hat = (2 I - 2 t⊗t) / w²  (Hess s = 0)
        let hess_p = [
            [
                (2.0 - 2.0 * self.t[0] * self.t[0]) / self.w2,
                -2.0 * self.t[0] * self.t[1] / self.w2,
            ],
            [
                -2.0 * self.t[0] * self.t[1] / self.w2,
                (2.0 - 2.0 * self.t[1] * self.t[1]) / self.w2,
            ],
        ];

        let m = bl * bp;
        let mut dm = [0.0; 2];
        let mut hm = [[0.0; 2]; 2];
        for i in 0..2 {
            dm[i] = dbl * bp * grad_s[i] + bl * dbp * grad_p[i];
        }
        for i in 0..2 {
            for j in 0..2 {
                hm[i][j] = ddbl * bp * grad_s[i] * grad_s[j]
                    + dbl * dbp * (grad_s[i] * grad_p[j] + grad_p[i] * grad_s[j])
                    + bl * ddbp * grad_p[i] * grad_p[j]
                    + bl * dbp * hess_p[i][j];
            }
        }
        Amp { m, dm, hm }
    }
}

/// Composition of disjoint tube flows; the supports never interact, so the
/// composite field is simply the sum of the tube fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowMap {
    pub dim: usize,
    pub tubes: Vec<TubeFlow>,
}

/// Full jet of the flow map at a point: position, Jacobian `J^a_i = ∂y_a/∂x_i`
/// and Hessian `H^a_{ij} = ∂²y_a/∂x_i∂x_j`.
#[derive(Debug, Clone, Copy)]
struct Jet {
    y: Vec2,
    j: Mat2,
    h: [[[f64; 2]; 2]; 2],
}

impl Jet {
    fn identity_at(x: Vec2) -> Jet {
        Jet {
            y: x,
            j: [[1.0, 0.0], [0.0, 1.0]],
            h: [[[0.0; 2]; 2]; 2],
        }
    }
}

impl FlowMap {
    pub fn new(dim: usize, tubes: Vec<TubeFlow>) -> Self {
        FlowMap { dim, tubes }
    }

    fn pad(&self, x: &[f64]) -> Vec2 {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        if self.dim == 1 {
            [x[0], 0.0]
        } else {
            [x[0], x[1]]
        }
    }

    fn outside_all(&self, x: Vec2) -> bool {
        self.tubes.iter().all(|t| t.geometry().outside(x))
    }

    /// Field of the composite flow, with first and second derivatives.
    /// `sign` is `+1` for the forward flow and `-1` for the reverse flow.
    fn field_jet(&self, x: Vec2, sign: f64) -> (Vec2, Mat2, [[[f64; 2]; 2]; 2]) {
        let mut f = [0.0; 2];
        let mut df = [[0.0; 2]; 2];
        let mut ddf = [[[0.0; 2]; 2]; 2];
        for tube in &self.tubes {
            let geom = tube.geometry();
            if geom.outside(x) {
                continue;
            }
            let amp = geom.amplitude(x);
            for i in 0..2 {
                f[i] += sign * geom.v[i] * amp.m;
                for j in 0..2 {
                    df[i][j] += sign * geom.v[i] * amp.dm[j];
                    for k in 0..2 {
                        ddf[i][j][k] += sign * geom.v[i] * amp.hm[j][k];
                    }
                }
            }
        }
        (f, df, ddf)
    }

    /// Forward time-1 map (no derivatives).
    pub fn forward(&self, x: &[f64]) -> Vec2 {
        let p = self.pad(x);
        if self.outside_all(p) {
            return p;
        }
        self.integrate(p, 1.0, false).y
    }

    /// Inverse time-1 map (no derivatives).
    pub fn inverse(&self, x: &[f64]) -> Vec2 {
        let p = self.pad(x);
        if self.outside_all(p) {
            return p;
        }
        self.integrate(p, -1.0, false).y
    }

    /// Inverse map together with its Jacobian and Hessian.
    pub fn inverse_with_derivs(&self, x: &[f64]) -> (Vec2, Mat2, [[[f64; 2]; 2]; 2]) {
        let p = self.pad(x);
        if self.outside_all(p) {
            let jet = Jet::identity_at(p);
            return (jet.y, jet.j, jet.h);
        }
        let jet = self.integrate(p, -1.0, true);
        (jet.y, jet.j, jet.h)
    }

    /// Adaptive RK4 with step doubling on the flow + variational system.
    fn integrate(&self, x0: Vec2, sign: f64, with_derivs: bool) -> Jet {
        let mut state = Jet::identity_at(x0);
        let mut t = 0.0;
        let mut h = 0.05;
        let mut steps = 0usize;
        while t < 1.0 {
            if h > 1.0 - t {
                h = 1.0 - t;
            }
            let full = self.rk4(state, h, sign, with_derivs);
            let half = self.rk4(state, h * 0.5, sign, with_derivs);
            let two_half = self.rk4(half, h * 0.5, sign, with_derivs);
            let err = jet_dist(full, two_half);
            if err <= STEP_TOL || h <= 1e-6 {
                // Accept with local Richardson extrapolation.
                state = jet_extrapolate(two_half, full);
                t += h;
                let growth = if err > 0.0 {
                    (STEP_TOL / err).powf(0.2).clamp(0.5, 4.0)
                } else {
                    4.0
                };
                h = (0.9 * h * growth).min(0.25);
            } else {
                h *= 0.5;
            }
            steps += 1;
            assert!(steps < 100_000, "tube flow integration failed to advance");
        }
        state
    }

    fn rk4(&self, s: Jet, h: f64, sign: f64, with_derivs: bool) -> Jet {
        let k1 = self.deriv(s, sign, with_derivs);
        let k2 = self.deriv(jet_axpy(s, 0.5 * h, k1), sign, with_derivs);
        let k3 = self.deriv(jet_axpy(s, 0.5 * h, k2), sign, with_derivs);
        let k4 = self.deriv(jet_axpy(s, h, k3), sign, with_derivs);
        let mut out = s;
        let w = h / 6.0;
        out.y[0] += w * (k1.y[0] + 2.0 * k2.y[0] + 2.0 * k3.y[0] + k4.y[0]);
        out.y[1] += w * (k1.y[1] + 2.0 * k2.y[1] + 2.0 * k3.y[1] + k4.y[1]);
        if with_derivs {
            for a in 0..2 {
                for i in 0..2 {
                    out.j[a][i] += w * (k1.j[a][i] + 2.0 * k2.j[a][i] + 2.0 * k3.j[a][i] + k4.j[a][i]);
                    for jj in 0..2 {
                        out.h[a][i][jj] += w
                            * (k1.h[a][i][jj]
                                + 2.0 * k2.h[a][i][jj]
                                + 2.0 * k3.h[a][i][jj]
                                + k4.h[a][i][jj]);
                    }
                }
            }
        }
        out
    }

    /// Time derivative of the jet: `ẏ = F`, `J̇ = DF·J`,
    /// `Ḣ^a = D²F(J·,J·) + DF·H`.
    fn deriv(&self, s: Jet, sign: f64, with_derivs: bool) -> Jet {
        let (f, df, ddf) = self.field_jet(s.y, sign);
        let mut out = Jet {
            y: f,
            j: [[0.0; 2]; 2],
            h: [[[0.0; 2]; 2]; 2],
        };
        if with_derivs {
            for a in 0..2 {
                for i in 0..2 {
                    let mut jd = 0.0;
                    for b in 0..2 {
                        jd += df[a][b] * s.j[b][i];
                    }
                    out.j[a][i] = jd;
                    for jj in 0..2 {
                        let mut hd = 0.0;
                        for b in 0..2 {
                            for c in 0..2 {
                                hd += ddf[a][b][c] * s.j[b][i] * s.j[c][jj];
                            }
                            hd += df[a][b] * s.h[b][i][jj];
                        }
                        out.h[a][i][jj] = hd;
                    }
                }
            }
        }
        out
    }
}

fn jet_axpy(s: Jet, h: f64, k: Jet) -> Jet {
    let mut out = s;
    for a in 0..2 {
        out.y[a] += h * k.y[a];
        for i in 0..2 {
            out.j[a][i] += h * k.j[a][i];
            for jj in 0..2 {
                out.h[a][i][jj] += h * k.h[a][i][jj];
            }
        }
    }
    out
}

fn jet_dist(a: Jet, b: Jet) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..2 {
        m = m.max((a.y[i] - b.y[i]).abs());
        for j in 0..2 {
            m = m.max((a.j[i][j] - b.j[i][j]).abs());
            for k in 0..2 {
                m = m.max((a.h[i][j][k] - b.h[i][j][k]).abs());
            }
        }
    }
    m
}

/// Fifth-order local extrapolation from the half-step and full-step results.
fn jet_extrapolate(two_half: Jet, full: Jet) -> Jet {
    let mut out = two_half;
    for a in 0..2 {
        out.y[a] += (two_half.y[a] - full.y[a]) / 15.0;
        for i in 0..2 {
            out.j[a][i] += (two_half.j[a][i] - full.j[a][i]) / 15.0;
            for jj in 0..2 {
                out.h[a][i][jj] += (two_half.h[a][i][jj] - full.h[a][i][jj]) / 15.0;
            }
        }
    }
    out
}

/// Distance between two segments (zero if they intersect).
pub fn segment_distance(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> f64 {
    if segments_intersect(a0, a1, b0, b1) {
        return 0.0;
    }
    point_segment_distance(a0, b0, b1)
        .min(point_segment_distance(a1, b0, b1))
        .min(point_segment_distance(b0, a0, a1))
        .min(point_segment_distance(b1, a0, a1))
}

/// Distance from a point to a segment.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> bool {
    let d1 = orient(b0, b1, a0);
    let d2 = orient(b0, b1, a1);
    let d3 = orient(a0, a1, b0);
    let d4 = orient(a0, a1, b1);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}
