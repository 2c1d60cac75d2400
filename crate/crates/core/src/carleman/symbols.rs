//! Phase-space calculus for the conjugated symbol.
//!
//! Conjugating the operator by `e^{φ/h}` replaces its principal symbol with
//! `p_φ(x,ξ) = ᵗ(ξ + i∇φ)G(ξ + i∇φ) + V`, whose real and imaginary parts are
//!
//! ```text
//!   Re p_φ = ᵗξGξ − ᵗφ′Gφ′ + V,      Im p_φ = 2 ᵗξGφ′.
//! ```
//!
//! The positivity that drives every weighted estimate is a lower bound on the
//! Poisson bracket `{Re p_φ, Im p_φ}` over the characteristic set
//! `{Re p_φ = Im p_φ = 0}`. This module evaluates both parts with exact
//! analytic (x, ξ)-gradients, forms brackets from those gradients, expands the
//! bracket in closed form for weights of the shape `φ = e^{γψ}`, and samples
//! the characteristic set. Everything here is pointwise and exact up to
//! rounding; no grids are involved.

use crate::{QmError, Result};
use crate::field::{dot2, mat_vec, quad_form, MetricField, ScalarField, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Value of a phase-space symbol together with its gradients in `x` and `ξ`.
/// Components at indices `>= dim` are zero for 1-D problems.
#[derive(Debug, Clone, Copy)]
pub struct SymbolGrad {
    pub value: f64,
    pub dx: Vec2,
    pub dxi: Vec2,
}

/// One phase-space point with the cached real and imaginary parts of the
/// conjugated symbol.
#[derive(Debug, Clone)]
pub struct SymbolPoint {
    pub x: Vec2,
    pub xi: Vec2,
    pub re: SymbolGrad,
    pub im: SymbolGrad,
}

fn pad(x: &[f64]) -> Vec2 {
    let mut p = [0.0; 2];
    for (k, v) in x.iter().take(2).enumerate() {
        p[k] = *v;
    }
    p
}

/// Evaluate `Re p_φ` and `Im p_φ` with their analytic gradients at one
/// phase-space point. `weight` is `φ` itself (any field with exact first and
/// second derivatives).
pub fn conjugated_symbol(
    metric: &MetricField,
    potential: &ScalarField,
    weight: &ScalarField,
    x: &[f64],
    xi: &[f64],
) -> SymbolPoint {
    assert_eq!(x.len(), xi.len(), "x and ξ must share a dimension");
    let dim = x.len();
    let g = metric.eval(x);
    let a = weight.grad(x); // φ′
    let hess = weight.hess(x); // φ″
    let p = pad(x);
    let q = pad(xi);
    let ga = mat_vec(g, a);
    let gxi = mat_vec(g, q);
    let v = potential.eval(x);
    let vg = potential.grad(x);

    let re_val = dot2(q, gxi) - dot2(a, ga) + v;
    let im_val = 2.0 * dot2(q, ga);

    let mut re_dx = [0.0; 2];
    let mut im_dx = [0.0; 2];
    for k in 0..dim {
        let gk = metric.deriv(x, k);
        let hcol = [hess[0][k], hess[1][k]];
        re_dx[k] = quad_form(gk, q, q) - quad_form(gk, a, a) - 2.0 * dot2(hcol, ga) + vg[k];
        im_dx[k] = 2.0 * (quad_form(gk, q, a) + dot2(gxi, hcol));
    }
    let mut re_dxi = [0.0; 2];
    let mut im_dxi = [0.0; 2];
    for k in 0..dim {
        re_dxi[k] = 2.0 * gxi[k];
        im_dxi[k] = 2.0 * ga[k];
    }

    SymbolPoint {
        x: p,
        xi: q,
        re: SymbolGrad {
            value: re_val,
            dx: re_dx,
            dxi: re_dxi,
        },
        im: SymbolGrad {
            value: im_val,
            dx: im_dx,
            dxi: im_dxi,
        },
    }
}

/// Poisson bracket `{f, g} = Σ_k (∂_{ξ_k} f · ∂_{x_k} g − ∂_{x_k} f · ∂_{ξ_k} g)`
/// of two symbols evaluated at the same phase-space point.
pub fn poisson_bracket(f: &SymbolGrad, g: &SymbolGrad) -> f64 {
    let mut b = 0.0;
    for k in 0..2 {
        b += f.dxi[k] * g.dx[k] - f.dx[k] * g.dxi[k];
    }
    b
}

/// `{Re p_φ, Im p_φ}` expanded term by term for the convexified weight
/// `φ = e^{γψ}`, so that `φ′ = γe^{γψ}ψ′` and `φ″ = e^{γψ}(γ²ψ′ᵗψ′ + γψ″)`:
///
/// ```text
///   {Re, Im} =  4 ᵗ(Gξ) φ″ (Gξ)  +  4 ᵗ(Gφ′) φ″ (Gφ′)
///             + 4 G′(φ′, ξ, Gξ)  − 2 G′(ξ, ξ, Gφ′)  + 2 G′(φ′, φ′, Gφ′)
///             − 2 ᵗV′ Gφ′,
/// ```
///
/// with `G′(a, b, c) := Σ_k c_k · ᵗb (∂_k G) a`. The first term contributes
/// `4e^{γψ}γ²(ᵗξGψ′)² + …` and survives off the characteristic set, so the
/// expansion is exact for every `(x, ξ)`, not just on the shell where the
/// certificates sample it.
pub fn bracket_closed_form(
    metric: &MetricField,
    potential: &ScalarField,
    psi: &ScalarField,
    gamma: f64,
    x: &[f64],
    xi: &[f64],
) -> f64 {
    assert_eq!(x.len(), xi.len(), "x and ξ must share a dimension");
    let dim = x.len();
    let g = metric.eval(x);
    let s = psi.grad(x);
    let sh = psi.hess(x);
    let e = (gamma * psi.eval(x)).exp();
    // φ′ = γ e^{γψ} ψ′ and φ″ = e^{γψ}(γ²ψ′ᵗψ′ + γψ″).
    let a = [gamma * e * s[0], gamma * e * s[1]];
    let mut phess = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            phess[i][j] = e * (gamma * gamma * s[i] * s[j] + gamma * sh[i][j]);
        }
    }
    let q = pad(xi);
    let ga = mat_vec(g, a);
    let gxi = mat_vec(g, q);
    let vg = potential.grad(x);

    // Σ_k c_k · ᵗb (∂_k G) a, the metric-derivative trilinear form.
    let gprime = |aa: Vec2, bb: Vec2, cc: Vec2| -> f64 {
        let mut t = 0.0;
        for k in 0..dim {
            let gk = metric.deriv(x, k);
            t += cc[k] * quad_form(gk, bb, aa);
        }
        t
    };

    4.0 * quad_form(phess, gxi, gxi) + 4.0 * quad_form(phess, ga, ga)
        + 4.0 * gprime(a, q, gxi)
        - 2.0 * gprime(q, q, ga)
        + 2.0 * gprime(a, a, ga)
        - 2.0 * dot2(vg, ga)
}

/// Draw `count` points of the characteristic set
/// `{ξ : ᵗξGξ = ᵗφ′Gφ′ + E − V(x), ᵗξGφ′ = 0}` over the fiber at `x`.
///
/// In two dimensions the admissible `ξ` form an antipodal pair on the line
/// G-orthogonal to `φ′`; the sampler returns seeded signs, covering both
/// points whenever `count >= 2`. In one dimension the two constraints are
/// incompatible unless the radius vanishes, so the set is empty (or `{0}`).
/// A vanishing weight gradient has no characteristic fiber at all and is
/// reported as a degenerate critical point of the weight.
pub fn sample_char_set(
    metric: &MetricField,
    potential: &ScalarField,
    weight: &ScalarField,
    e: f64,
    x: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<Vec2>> {
    let dim = x.len();
    let g = metric.eval(x);
    let a = weight.grad(x);
    let ga = mat_vec(g, a);
    let scale = dot2(a, a).sqrt();
    if scale < 1e-12 {
        return Err(QmError::DegenerateCritical {
            location: x.to_vec(),
            det: scale,
        });
    }
    let r2 = dot2(a, ga) + e - potential.eval(x);
    if !r2.is_finite() {
        return Err(QmError::Unsupported(format!(
            "characteristic radius overflows doubles at x = {x:?}"
        )));
    }
    let tol = 1e-12 * (dot2(a, ga).abs() + e.abs() + 1.0);
    if r2 < -tol {
        return Ok(Vec::new());
    }
    if dim == 1 {
        // ξGφ′ = 0 forces ξ = 0, which lies on the shell only at radius zero.
        if r2.abs() <= tol {
            return Ok(vec![[0.0, 0.0]]);
        }
        return Ok(Vec::new());
    }
    let r = r2.max(0.0).sqrt();
    let w = [-ga[1], ga[0]];
    let wgw = quad_form(g, w, w);
    assert!(wgw > 0.0, "SPD metric gives positive norm to the complement");
    let unit = [w[0] / wgw.sqrt(), w[1] / wgw.sqrt()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        // The first two draws take opposite signs so both antipodes always
        // appear; later draws are seeded coin flips.
        let sign = match i {
            0 => 1.0,
            1 => -1.0,
            _ => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        let xi = [sign * r * unit[0], sign * r * unit[1]];
        debug_assert!(dot2(xi, ga).abs() <= 1e-12 * (1.0 + r2.abs()));
        out.push(xi);
    }
    Ok(out)
}
