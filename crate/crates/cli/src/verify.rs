//! Built-in cross-checks: each check recomputes a quantity two independent
//! ways and compares. `--filter` selects checks by substring; the hidden
//! bracket-sign flip deliberately breaks the first check to prove the harness
//! can fail.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qmlab_core::carleman::symbols::{bracket_closed_form, conjugated_symbol, poisson_bracket};
use qmlab_core::field::{MetricField, ScalarField};
use qmlab_core::grid::{Grid, Resolution};
use qmlab_core::quasimode::agmon_distance;
use qmlab_core::rates::{check_rellich, fit_rate_from_logs};
use qmlab_core::zonal::{zonal_norm_exact, zonal_norm_quadrature};

use crate::error::CliError;

/// Result of one named check.
pub struct CheckOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Default)]
pub struct VerifyOptions {
    /// Substring filter on check names; `None` runs everything.
    pub filter: Option<String>,
    /// Flip the sign of one bracket evaluation so the harness must report a
    /// named failure. Test hook, not a user feature.
    pub flip_bracket_sign: bool,
}

/// Run the selected checks in a fixed order.
pub fn run_checks(opts: &VerifyOptions) -> Result<Vec<CheckOutcome>, CliError> {
    let all: Vec<(&'static str, fn(&VerifyOptions) -> Result<CheckOutcome, CliError>)> = vec![
        ("bracket-equivalence", check_bracket),
        ("fit-oracle", check_fit),
        ("quadrature-zonal", check_zonal),
        ("agmon-dijkstra", check_agmon),
        ("rellich-closed-form", check_rellich_closed_form),
    ];
    let mut out = Vec::new();
    for (name, f) in all {
        if let Some(filter) = &opts.filter {
            if !name.contains(filter.as_str()) {
                continue;
            }
        }
        out.push(f(opts)?);
    }
    if out.is_empty() {
        return Err(CliError::Schema(format!(
            "no verification check matches the filter {:?}",
            opts.filter.as_deref().unwrap_or("")
        )));
    }
    Ok(out)
}

/// The hand-expanded bracket formula against the generic Poisson bracket of
/// the symbol gradients, and both against the complex identity
/// `(1/i){p̄_φ, p_φ} = 2{Re p_φ, Im p_φ}`, at random phase-space points over
/// a non-flat metric and a non-radial potential.
fn check_bracket(opts: &VerifyOptions) -> Result<CheckOutcome, CliError> {
    let metric = MetricField::Wavy { eps: 0.3 };
    let potential = ScalarField::Sum(vec![
        ScalarField::QuadRadial {
            center: [0.3, -0.2],
            coeff: 0.7,
            offset: 0.4,
        },
        ScalarField::Linear {
            coeffs: [0.2, -0.1],
            offset: 0.0,
        },
    ]);
    let psi = ScalarField::Sum(vec![
        ScalarField::Linear {
            coeffs: [0.9, 0.4],
            offset: 0.2,
        },
        ScalarField::QuadRadial {
            center: [-0.5, 0.6],
            coeff: 0.35,
            offset: 0.0,
        },
    ]);
    let gamma = 1.3;
    let weight = ScalarField::ExpOf {
        gamma,
        base: Box::new(psi.clone()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst_closed: f64 = 0.0;
    let mut worst_complex: f64 = 0.0;
    for _ in 0..200 {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let xi = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let pt = conjugated_symbol(&metric, &potential, &weight, &x, &xi);
        let mut pb = poisson_bracket(&pt.re, &pt.im);
        if opts.flip_bracket_sign {
            pb = -pb;
        }
        let closed = bracket_closed_form(&metric, &potential, &psi, gamma, &x, &xi);
        let scale = closed.abs().max(pb.abs()).max(1.0);
        worst_closed = worst_closed.max((closed - pb).abs() / scale);

        // (1/i){p̄, p}: per-component complex products of the gradients of
        // p̄ = re − i·im and p = re + i·im; the real part must vanish and the
        // imaginary part must equal twice the real bracket.
        let mut re_acc = 0.0;
        let mut im_acc = 0.0;
        for k in 0..2 {
            let (a_re, a_im) = (pt.re.dxi[k], -pt.im.dxi[k]);
            let (b_re, b_im) = (pt.re.dx[k], pt.im.dx[k]);
            let (c_re, c_im) = (pt.re.dx[k], -pt.im.dx[k]);
            let (d_re, d_im) = (pt.re.dxi[k], pt.im.dxi[k]);
            re_acc += (a_re * b_re - a_im * b_im) - (c_re * d_re - c_im * d_im);
            im_acc += (a_re * b_im + a_im * b_re) - (c_re * d_im + c_im * d_re);
        }
        let pb_unflipped = poisson_bracket(&pt.re, &pt.im);
        let scale2 = im_acc.abs().max(1.0);
        worst_complex = worst_complex
            .max((im_acc - 2.0 * pb_unflipped).abs() / scale2)
            .max(re_acc.abs() / scale2);
    }
    let pass = worst_closed <= 1e-8 && worst_complex <= 1e-10;
    Ok(CheckOutcome {
        name: "bracket-equivalence",
        pass,
        detail: format!(
            "closed-form gap {worst_closed:.3e} (tol 1e-8), complex-identity gap {worst_complex:.3e} (tol 1e-10) over 200 points"
        ),
    })
}

/// Exact recovery of a synthetic exponential: `y = 0.35·e^{-1.7/h}` must fit
/// with machine-precision rate, prefactor, and residual.
fn check_fit(_opts: &VerifyOptions) -> Result<CheckOutcome, CliError> {
    let hs = [0.4, 0.2, 0.125, 0.1];
    let logs: Vec<(f64, f64)> = hs
        .iter()
        .map(|&h| (h, (0.35f64).ln() - 1.7 / h))
        .collect();
    let fit = fit_rate_from_logs(&logs)?;
    let alpha_gap = (fit.alpha - 1.7).abs();
    let c_gap = (fit.c - (0.35f64).ln()).abs();
    let pass = alpha_gap <= 1e-12
        && c_gap <= 1e-12
        && fit.rms <= 1e-12
        && !fit.concave
        && fit.window == (0.1, 0.4);
    Ok(CheckOutcome {
        name: "fit-oracle",
        pass,
        detail: format!(
            "rate gap {alpha_gap:.3e}, prefactor gap {c_gap:.3e}, rms {:.3e}",
            fit.rms
        ),
    })
}

/// Closed-form cap norms against adaptive quadrature, plus the hand value
/// `∫|f_1|² = 8π/3`.
fn check_zonal(_opts: &VerifyOptions) -> Result<CheckOutcome, CliError> {
    let mut worst: f64 = 0.0;
    for n in 0..=60u32 {
        let exact = zonal_norm_exact(n);
        let quad = zonal_norm_quadrature(n);
        worst = worst.max((exact - quad).abs() / exact.abs().max(1.0));
    }
    let hand = (zonal_norm_exact(1).exp() - 8.0 * PI / 3.0).abs() / (8.0 * PI / 3.0);
    let pass = worst <= 1e-9 && hand <= 1e-10;
    Ok(CheckOutcome {
        name: "quadrature-zonal",
        pass,
        detail: format!(
            "worst log-relative gap {worst:.3e} over n ≤ 60, n=1 closed form gap {hand:.3e}"
        ),
    })
}

/// Graph-shortest-path travel cost against the 1-D integral
/// `∫√(V−E)` for `V = x²`, `E = 0`: cost to reach `x = 1` is `1/2`, to reach
/// `x = −3/2` is `9/8`.
fn check_agmon(_opts: &VerifyOptions) -> Result<CheckOutcome, CliError> {
    let grid = Grid::interval(-2.0, 2.0, Resolution::Fixed(vec![801]))?;
    let potential = ScalarField::QuadRadial {
        center: [0.0, 0.0],
        coeff: 1.0,
        offset: 0.0,
    };
    let field = agmon_distance(&grid, &MetricField::Identity, &potential, 0.0, None)?;
    let nearest = |target: f64| {
        (0..grid.num_nodes())
            .min_by(|a, b| {
                (grid.coords(*a)[0] - target)
                    .abs()
                    .total_cmp(&(grid.coords(*b)[0] - target).abs())
            })
            .expect("grid is non-empty")
    };
    let d1 = field.d[nearest(1.0)];
    let d2 = field.d[nearest(-1.5)];
    let gap1 = (d1 - 0.5).abs() / 0.5;
    let gap2 = (d2 - 1.125).abs() / 1.125;
    let pass = gap1 <= 0.03 && gap2 <= 0.03;
    Ok(CheckOutcome {
        name: "agmon-dijkstra",
        pass,
        detail: format!(
            "d(1) = {d1:.5} vs 0.5 ({gap1:.2e}), d(-1.5) = {d2:.5} vs 1.125 ({gap2:.2e})"
        ),
    })
}

/// The boundary flux identity evaluated on the exact first Dirichlet mode of
/// the unit interval: the gap must be small and shrink under refinement.
fn check_rellich_closed_form(_opts: &VerifyOptions) -> Result<CheckOutcome, CliError> {
    let mut gaps = Vec::new();
    for n in [2001usize, 4001] {
        let grid = Grid::interval(0.0, 1.0, Resolution::Fixed(vec![n]))?;
        let u: Vec<f64> = (0..grid.num_nodes())
            .map(|id| (PI * grid.coords(id)[0]).sin())
            .collect();
        let rep = check_rellich(
            &grid,
            &MetricField::Identity,
            &ScalarField::Constant(0.0),
            1.0,
            &u,
            0.3,
        )?;
        gaps.push(rep.gap);
    }
    let improvement = gaps[0] / gaps[1];
    let pass = gaps[0] <= 0.02 && improvement >= 3.0;
    Ok(CheckOutcome {
        name: "rellich-closed-form",
        pass,
        detail: format!(
            "gap {:.3e} at 2001 nodes, improves {improvement:.1}x at 4001",
            gaps[0]
        ),
    })
}
