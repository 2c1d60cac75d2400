//! Analytic scalar and metric coefficient fields.
//!
//! Every field carries closed-form gradient and Hessian evaluations; nothing
//! here is sampled or interpolated. Downstream code (operator assembly, symbol
//! brackets, Morse reports) relies on these derivatives being exact, so each
//! variant implements them by hand and the test suite cross-checks them
//! against centered finite differences.
//!
//! Points are slices `&[f64]` of length 1 or 2. Gradients are returned as
//! `[f64; 2]` and Hessians as `[[f64; 2]; 2]` with unused components zero.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::carleman::flow::FlowMap;

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

/// Quintic smoothstep ramp: `0` for `t <= 0`, `1` for `t >= 1`, and
/// `6t^5 - 15t^4 + 10t^3` in between. Returns `(value, d/dt, d²/dt²)`.
/// The ramp is C² at both ends; its slope peaks at `15/8` when `t = 1/2`.
pub fn ramp01(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let t2 = t * t;
        let t3 = t2 * t;
        let v = t3 * (10.0 + t * (-15.0 + 6.0 * t));
        let d = 30.0 * t2 * (1.0 - t) * (1.0 - t);
        let dd = t * (60.0 + t * (-180.0 + 120.0 * t));
        (v, d, dd)
    }
}

#[inline]
pub fn dot2(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn mat_vec(m: Mat2, v: Vec2) -> Vec2 {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

/// Quadratic form `vᵀ M w`.
#[inline]
pub fn quad_form(m: Mat2, v: Vec2, w: Vec2) -> f64 {
    dot2(v, mat_vec(m, w))
}

/// Inverse of a 2×2 matrix (or of the 1×1 block when `dim == 1`).
pub fn mat_inv(m: Mat2, dim: usize) -> Mat2 {
    if dim == 1 {
        assert!(m[0][0] != 0.0, "singular 1x1 matrix");
        let mut out = [[0.0; 2]; 2];
        out[0][0] = 1.0 / m[0][0];
        return out;
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    assert!(det != 0.0, "singular 2x2 matrix");
    [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ]
}

fn outer(v: Vec2, w: Vec2) -> Mat2 {
    [[v[0] * w[0], v[0] * w[1]], [v[1] * w[0], v[1] * w[1]]]
}

fn mat_add(a: Mat2, b: Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

fn mat_scale(s: f64, m: Mat2) -> Mat2 {
    [[s * m[0][0], s * m[0][1]], [s * m[1][0], s * m[1][1]]]
}

/// Scalar field with exact first and second derivatives.
///
/// The enum doubles as the serializable descriptor: each variant is a named
/// builtin plus its parameters, so configurations and output certificates can
/// round-trip the exact field that was used.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum ScalarField {
    /// `c`
    Constant(f64),
    /// `offset + coeffs · x`
    Linear { coeffs: Vec2, offset: f64 },
    /// `offset + coeff · |x - center|²`
    QuadRadial {
        center: Vec2,
        coeff: f64,
        offset: f64,
    },
    /// 1-D double well `(x² - 1)²`
    DoubleWell,
    /// Pointwise sum of the parts.
    Sum(Vec<ScalarField>),
    /// `factor · base(x)`
    Scaled { factor: f64, base: Box<ScalarField> },
    /// `exp(gamma · base(x))` — the convexified weight shape.
    ExpOf { gamma: f64, base: Box<ScalarField> },
    /// Strip weight `offset - r + amp · sin²(π(r-r0)/(r1-r0)) · cos(θ - phase)`
    /// in strip coordinates `(r, θ) = (x₀, x₁)`. The squared sine keeps the
    /// radial derivative equal to `-1` on both edge circles for every `amp`,
    /// so the boundary sign pattern of the family never depends on the swirl.
    AnnulusSwirl {
        r0: f64,
        r1: f64,
        amp: f64,
        phase: f64,
        offset: f64,
    },
    /// Compactly supported C² bump `amp · (1 - |x-c|²/radius²)³` inside the
    /// ball, `0` outside.
    Bump { center: Vec2, radius: f64, amp: f64 },
    /// Tensor-product plateau cutoff: `1` on the inner box, `0` outside the
    /// outer box, quintic-smoothstep ramps on each one-sided gap.
    /// `inner = [lows, highs]`, likewise `outer`. A side with equal inner and
    /// outer bound has no ramp (the cutoff stays 1 through it).
    CutoffBox {
        inner: [Vec2; 2],
        outer: [Vec2; 2],
        dim: usize,
    },
    /// Radial plateau cutoff: `1` for `|x-c| <= r_inner`, `0` for
    /// `|x-c| >= r_outer`.
    CutoffRadial {
        center: Vec2,
        r_inner: f64,
        r_outer: f64,
    },
    /// Plateau cutoff through the sublevels of a smooth field: `1` where
    /// `base <= inner_level`, `0` where `base >= outer_level`.
    CutoffSublevel {
        base: Box<ScalarField>,
        inner_level: f64,
        outer_level: f64,
    },
    /// `base(κ⁻¹(x))` for a compactly supported tube-flow diffeomorphism κ.
    /// Derivatives come from transporting the Jacobian and Hessian of κ⁻¹
    /// along the reverse flow, so they are exact up to the integrator
    /// tolerance (1e-9), far below the finite-difference validation floor.
    Relocated {
        base: Box<ScalarField>,
        flow: Arc<FlowMap>,
    },
}

impl ScalarField {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let p = pad(x);
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Linear { coeffs, offset } => offset + dot2(*coeffs, p),
            ScalarField::QuadRadial {
                center,
                coeff,
                offset,
            } => {
                let d = [p[0] - center[0], p[1] - center[1]];
                offset + coeff * dot2(d, d)
            }
            ScalarField::DoubleWell => {
                let s = p[0] * p[0] - 1.0;
                s * s
            }
            ScalarField::Sum(parts) => parts.iter().map(|f| f.eval(x)).sum(),
            ScalarField::Scaled { factor, base } => factor * base.eval(x),
            ScalarField::ExpOf { gamma, base } => (gamma * base.eval(x)).exp(),
            ScalarField::AnnulusSwirl {
                r0,
                r1,
                amp,
                phase,
                offset,
            } => {
                let (g, _, _) = swirl_radial(p[0], *r0, *r1);
                offset - p[0] + amp * g * (p[1] - phase).cos()
            }
            ScalarField::Bump {
                center,
                radius,
                amp,
            } => {
                let d = [p[0] - center[0], p[1] - center[1]];
                let q = dot2(d, d) / (radius * radius);
                if q >= 1.0 {
                    0.0
                } else {
                    let w = 1.0 - q;
                    amp * w * w * w
                }
            }
            ScalarField::CutoffBox { inner, outer, dim } => {
                let mut v = 1.0;
                for k in 0..*dim {
                    let (pk, _, _) = box_profile(p[k], inner[0][k], inner[1][k], outer[0][k], outer[1][k]);
                    v *= pk;
                }
                v
            }
            ScalarField::CutoffRadial {
                center,
                r_inner,
                r_outer,
            } => {
                let d = [p[0] - center[0], p[1] - center[1]];
                let r = dot2(d, d).sqrt();
                let (s, _, _) = ramp01((r - r_inner) / (r_outer - r_inner));
                1.0 - s
            }
            ScalarField::CutoffSublevel {
                base,
                inner_level,
                outer_level,
            } => {
                let u = (base.eval(x) - inner_level) / (outer_level - inner_level);
                let (s, _, _) = ramp01(u);
                1.0 - s
            }
            ScalarField::Relocated { base, flow } => {
                let y = flow.inverse(x);
                base.eval(&y[..x.len()])
            }
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec2 {
        let p = pad(x);
        match self {
            ScalarField::Constant(_) => [0.0, 0.0],
            ScalarField::Linear { coeffs, .. } => *coeffs,
            ScalarField::QuadRadial { center, coeff, .. } => {
                let d = [p[0] - center[0], p[1] - center[1]];
                [2.0 * coeff * d[0], 2.0 * coeff * d[1]]
            }
            ScalarField::DoubleWell => [4.0 * p[0] * (p[0] * p[0] - 1.0), 0.0],
            ScalarField::Sum(parts) => {
                let mut g = [0.0, 0.0];
                for f in parts {
                    let gf = f.grad(x);
                    g[0] += gf[0];
                    g[1] += gf[1];
                }
                g
            }
            ScalarField::Scaled { factor, base } => {
                let g = base.grad(x);
                [factor * g[0], factor * g[1]]
            }
            ScalarField::ExpOf { gamma, base } => {
                let v = (gamma * base.eval(x)).exp();
                let g = base.grad(x);
                [gamma * v * g[0], gamma * v * g[1]]
            }
            ScalarField::AnnulusSwirl {
                r0,
                r1,
                amp,
                phase,
                ..
            } => {
                let (g, dg, _) = swirl_radial(p[0], *r0, *r1);
                let (sin_t, cos_t) = (p[1] - phase).sin_cos();
                [-1.0 + amp * dg * cos_t, -amp * g * sin_t]
            }
            ScalarField::Bump {
                center,
                radius,
                amp,
            } => {
                let d = [p[0] - center[0], p[1] - center[1]];
                let r2 = radius * radius;
                let q = dot2(d, d) / r2;
                if q >= 1.0 {
                    [0.0, 0.0]
                } else {
                    let w = 1.0 - q;
                    // d/ds of amp(1-s/r²)³ at s=|x-c|², times ds = 2(x-c)
                    let dfds = -3.0 * amp * w * w / r2;
                    [2.0 * dfds * d[0], 2.0 * dfds * d[1]]
                }
            }
            ScalarField::CutoffBox { inner, outer, dim } => {
                let mut vals = [1.0; 2];
                let mut ders = [0.0; 2];
                for k in 0..*dim {
                    let (v, d, _) = box_profile(p[k], inner[0][k], inner[1][k], outer[0][k], outer[1][k]);
                    vals[k] = v;
                    ders[k] = d;
                }
                if *dim == 1 {
                    [ders[0], 0.0]
                } else {
                    [ders[0] * vals[1], vals[0] * ders[1]]
                }
            }
            ScalarField::CutoffRadial {
                center,
                r_inner,
                r_outer,
            } => {
                let d = [p[0] - center[0], p[1] - center[1]];
                let r = dot2(d, d).sqrt();
                let w = r_outer - r_inner;
                let t = (r - r_inner) / w;
                if t <= 0.0 || t >= 1.0 {
                    return [0.0, 0.0];
                }
                let (_, ds, _) = ramp01(t);
                let er = [d[0] / r, d[1] / r];
                [-ds / w * er[0], -ds / w * er[1]]
            }
            ScalarField::CutoffSublevel {
                base,
                inner_level,
                outer_level,
            } => {
                let w = outer_level - inner_level;
                let u = (base.eval(x) - inner_level) / w;
                if u <= 0.0 || u >= 1.0 {
                    return [0.0, 0.0];
                }
                let (_, ds, _) = ramp01(u);
                let g = base.grad(x);
                [-ds / w * g[0], -ds / w * g[1]]
            }
            ScalarField::Relocated { base, flow } => {
                let (y, jac, _) = flow.inverse_with_derivs(x);
                let g0 = base.grad(&y[..x.len()]);
                // ∂_i (base∘κ⁻¹) = Σ_a ∂_a base · J^a_i
                [
                    g0[0] * jac[0][0] + g0[1] * jac[1][0],
                    g0[0] * jac[0][1] + g0[1] * jac[1][1],
                ]
            }
        }
    }

    pub fn hess(&self, x: &[f64]) -> Mat2 {
        let p = pad(x);
        match self {
            ScalarField::Constant(_) | ScalarField::Linear { .. } => [[0.0; 2]; 2],
            ScalarField::QuadRadial { coeff, .. } => {
                [[2.0 * coeff, 0.0], [0.0, 2.0 * coeff]]
            }
            ScalarField::DoubleWell => [[12.0 * p[0] * p[0] - 4.0, 0.0], [0.0, 0.0]],
            ScalarField::Sum(parts) => {
                let mut h = [[0.0; 2]; 2];
                for f in parts {
                    h = mat_add(h, f.hess(x));
                }
                h
            }
            ScalarField::Scaled { factor, base } => mat_scale(*factor, base.hess(x)),
            ScalarField::ExpOf { gamma, base } => {
                let v = (gamma * base.eval(x)).exp();
                let g = base.grad(x);
                let h = base.hess(x);
                // exp(γb) (γ² ∇b⊗∇b + γ Hess b)
                mat_scale(v, mat_add(mat_scale(gamma * gamma, outer(g, g)), mat_scale(*gamma, h)))
            }
            ScalarField::AnnulusSwirl {
                r0,
                r1,
                amp,
                phase,
                ..
            } => {
                let (g, dg, ddg) = swirl_radial(p[0], *r0, *r1);
                let (sin_t, cos_t) = (p[1] - phase).sin_cos();
                [
                    [amp * ddg * cos_t, -amp * dg * sin_t],
                    [-amp * dg * sin_t, -amp * g * cos_t],
                ]
            }
            ScalarField::Bump {
                center,
                radius,
                amp,
            } => {
                let d = [p[0] - center[0], p[1] - center[1]];
                let r2 = radius * radius;
                let q = dot2(d, d) / r2;
                if q >= 1.0 {
                    [[0.0; 2]; 2]
                } else {
                    let w = 1.0 - q;
                    let dfds = -3.0 * amp * w * w / r2;
                    let ddfdss = 6.0 * amp * w / (r2 * r2);
                    mat_add(
                        mat_scale(4.0 * ddfdss, outer(d, d)),
                        mat_scale(2.0 * dfds, [[1.0, 0.0], [0.0, 1.0]]),
                    )
                }
            }
            ScalarField::CutoffBox { inner, outer, dim } => {
                let mut vals = [1.0; 2];
                let mut d1 = [0.0; 2];
                let mut d2 = [0.0; 2];
                for k in 0..*dim {
                    let (v, d, dd) = box_profile(p[k], inner[0][k], inner[1][k], outer[0][k], outer[1][k]);
                    vals[k] = v;
                    d1[k] = d;
                    d2[k] = dd;
                }
                if *dim == 1 {
                    [[d2[0], 0.0], [0.0, 0.0]]
                } else {
                    [
                        [d2[0] * vals[1], d1[0] * d1[1]],
                        [d1[0] * d1[1], vals[0] * d2[1]],
                    ]
                }
            }
            ScalarField::CutoffRadial {
                center,
                r_inner,
                r_outer,
            } => {
                let d = [p[0] - center[0], p[1] - center[1]];
                let r = dot2(d, d).sqrt();
                let w = r_outer - r_inner;
                let t = (r - r_inner) / w;
                if t <= 0.0 || t >= 1.0 {
                    return [[0.0; 2]; 2];
                }
                let (_, ds, dds) = ramp01(t);
                let er = [d[0] / r, d[1] / r];
                let hr = mat_scale(
                    1.0 / r,
                    mat_add(
                        [[1.0, 0.0], [0.0, 1.0]],
                        mat_scale(-1.0, outer(er, er)),
                    ),
                );
                mat_add(
                    mat_scale(-dds / (w * w), outer(er, er)),
                    mat_scale(-ds / w, hr),
                )
            }
            ScalarField::CutoffSublevel {
                base,
                inner_level,
                outer_level,
            } => {
                let w = outer_level - inner_level;
                let u = (base.eval(x) - inner_level) / w;
                if u <= 0.0 || u >= 1.0 {
                    return [[0.0; 2]; 2];
                }
                let (_, ds, dds) = ramp01(u);
                let g = base.grad(x);
                let h = base.hess(x);
                mat_add(
                    mat_scale(-dds / (w * w), outer(g, g)),
                    mat_scale(-ds / w, h),
                )
            }
            ScalarField::Relocated { base, flow } => {
                let (y, jac, hk) = flow.inverse_with_derivs(x);
                let g0 = base.grad(&y[..x.len()]);
                let h0 = base.hess(&y[..x.len()]);
                let mut h = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        let mut s = 0.0;
                        for a in 0..2 {
                            for b in 0..2 {
                                s += h0[a][b] * jac[a][i] * jac[b][j];
                            }
                            s += g0[a] * hk[a][i][j];
                        }
                        h[i][j] = s;
                    }
                }
                h
            }
        }
    }

    /// Sum of this field and another.
    pub fn plus(self, other: ScalarField) -> ScalarField {
        ScalarField::Sum(vec![self, other])
    }
}

fn pad(x: &[f64]) -> Vec2 {
    match x.len() {
        1 => [x[0], 0.0],
        2 => [x[0], x[1]],
        n => panic!("points must have 1 or 2 coordinates, got {n}"),
    }
}

/// Radial swirl profile `sin²(π(r-r0)/(r1-r0))` with first and second
/// derivatives in `r`. Vanishes to second order at both edges.
fn swirl_radial(r: f64, r0: f64, r1: f64) -> (f64, f64, f64) {
    let dl = r1 - r0;
    let rho = (r - r0) / dl;
    let s = (std::f64::consts::PI * rho).sin();
    let two = (2.0 * std::f64::consts::PI * rho).sin();
    let c2 = (2.0 * std::f64::consts::PI * rho).cos();
    let pi = std::f64::consts::PI;
    (
        s * s,
        pi / dl * two,
        2.0 * pi * pi / (dl * dl) * c2,
    )
}

/// One-axis plateau profile: ramps up across `[outer_lo, inner_lo]`, holds 1
/// on `[inner_lo, inner_hi]`, ramps down across `[inner_hi, outer_hi]`.
/// Returns `(value, d/dx, d²/dx²)`. A zero-width gap disables that ramp.
fn box_profile(x: f64, inner_lo: f64, inner_hi: f64, outer_lo: f64, outer_hi: f64) -> (f64, f64, f64) {
    let (mut v, mut d, mut dd) = (1.0, 0.0, 0.0);
    let wl = inner_lo - outer_lo;
    if wl > 0.0 {
        let (uv, ud, udd) = ramp01((x - outer_lo) / wl);
        let (pv, pd, pdd) = (uv, ud / wl, udd / (wl * wl));
        // product with the current accumulator (starts at constant 1)
        let nv = v * pv;
        let nd = d * pv + v * pd;
        let ndd = dd * pv + 2.0 * d * pd + v * pdd;
        v = nv;
        d = nd;
        dd = ndd;
    }
    let wr = outer_hi - inner_hi;
    if wr > 0.0 {
        let (uv, ud, udd) = ramp01((outer_hi - x) / wr);
        let (pv, pd, pdd) = (uv, -ud / wr, udd / (wr * wr));
        let nv = v * pv;
        let nd = d * pv + v * pd;
        let ndd = dd * pv + 2.0 * d * pd + v * pdd;
        v = nv;
        d = nd;
        dd = ndd;
    }
    (v, d, dd)
}

/// Inverse-metric coefficient field `G(x) = (g^{ij}(x))`, symmetric positive
/// definite, with closed-form spatial derivatives `∂_k g^{ij}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum MetricField {
    /// Euclidean: `G = I`.
    Identity,
    /// Constant diagonal `diag(d₀, d₁)`.
    DiagConst { d: Vec2 },
    /// Constant symmetric matrix.
    SymConst { a00: f64, a01: f64, a11: f64 },
    /// Smoothly varying SPD family for exercising metric-derivative terms:
    /// `g00 = 1 + ε sin x₀ cos x₁`, `g11 = 1 + ε cos x₀ sin x₁`,
    /// `g01 = (ε/2) sin(x₀ + x₁)`. SPD for `ε < 2/3` (Gershgorin).
    Wavy { eps: f64 },
}

impl MetricField {
    pub fn eval(&self, x: &[f64]) -> Mat2 {
        let p = pad(x);
        match self {
            MetricField::Identity => [[1.0, 0.0], [0.0, 1.0]],
            MetricField::DiagConst { d } => [[d[0], 0.0], [0.0, d[1]]],
            MetricField::SymConst { a00, a01, a11 } => [[*a00, *a01], [*a01, *a11]],
            MetricField::Wavy { eps } => {
                let g00 = 1.0 + eps * p[0].sin() * p[1].cos();
                let g11 = 1.0 + eps * p[0].cos() * p[1].sin();
                let g01 = 0.5 * eps * (p[0] + p[1]).sin();
                [[g00, g01], [g01, g11]]
            }
        }
    }

    /// `∂_axis G(x)`, returned as a symmetric 2×2 matrix.
    pub fn deriv(&self, x: &[f64], axis: usize) -> Mat2 {
        let p = pad(x);
        match self {
            MetricField::Identity | MetricField::DiagConst { .. } | MetricField::SymConst { .. } => {
                [[0.0; 2]; 2]
            }
            MetricField::Wavy { eps } => {
                let g01 = 0.5 * eps * (p[0] + p[1]).cos();
                if axis == 0 {
                    [
                        [eps * p[0].cos() * p[1].cos(), g01],
                        [g01, -eps * p[0].sin() * p[1].sin()],
                    ]
                } else {
                    [
                        [-eps * p[0].sin() * p[1].sin(), g01],
                        [g01, eps * p[0].cos() * p[1].cos()],
                    ]
                }
            }
        }
    }

    /// True when all spatial derivatives vanish identically.
    pub fn is_constant(&self) -> bool {
        !matches!(self, MetricField::Wavy { .. })
    }

    /// Checks symmetry and positive definiteness at a point.
    pub fn check_spd(&self, x: &[f64], dim: usize) -> crate::Result<()> {
        let g = self.eval(x);
        let ok = if dim == 1 {
            g[0][0] > 0.0
        } else {
            g[0][0] > 0.0 && g[0][0] * g[1][1] - g[0][1] * g[1][0] > 0.0
        };
        if ok {
            Ok(())
        } else {
            Err(crate::QmError::NonSpdMetric {
                location: x.to_vec(),
                detail: format!("leading minors not positive: {g:?}"),
            })
        }
    }
}
