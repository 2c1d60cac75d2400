//! Compatible weight pairs for boundary lower bounds.
//!
//! A boundary estimate needs two weights that cover for each other: wherever
//! one weight has a critical point, the other must be regular there and
//! strictly larger, so the pointwise maximum of the two conjugated estimates
//! never loses ellipticity. `check_compatibility` audits that condition in
//! both cyclic directions and returns per-point witnesses;
//! `make_compatible_pair` searches seeded candidates until a pair passes
//! together with the boundary sign pattern (normal derivative positive on
//! the named observation component, negative on the rest).
//!
//! The search builds the second weight critical-point-free (a sub-threshold
//! swirl, or a linear slope on an interval) and lifts it above the first by
//! a constant. Adding bumps to the first weight at its own critical points
//! can never work — the bump gradient vanishes exactly where regularity is
//! needed — and a second super-threshold swirl would reintroduce four
//! critical points of its own, so crit-free-plus-offset is the shape the
//! search draws from.

use crate::carleman::morse::{generate_morse, morse_report, MorseFamily, MorseReport};
use crate::{QmError, Result};
use crate::field::{ScalarField, Vec2};
use crate::grid::{Grid, GridKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Regularity floor: at a critical point of one weight the other must have
/// at least this much gradient and exceed it by at least this much.
pub const COMPAT_MARGIN: f64 = 1e-6;

/// One audited critical point: `source` names the weight that owns it
/// (1 or 2), the other fields describe the partner weight there.
#[derive(Debug, Clone, Serialize)]
pub struct CompatibilityWitness {
    pub source: usize,
    pub location: Vec2,
    pub partner_grad_norm: f64,
    pub gap: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompatibilityReport {
    pub pass: bool,
    /// Neither weight has any critical point, so the condition held with
    /// nothing to check.
    pub vacuous: bool,
    pub witnesses: Vec<CompatibilityWitness>,
}

/// Audit the cover-for-each-other condition in both directions: at every
/// critical point of ψᵢ the partner ψⱼ must satisfy `|∇ψⱼ| ≥ 1e−6` and
/// `ψⱼ − ψᵢ ≥ 1e−6`.
pub fn check_compatibility(
    psi1: &ScalarField,
    report1: &MorseReport,
    psi2: &ScalarField,
    report2: &MorseReport,
) -> CompatibilityReport {
    let mut witnesses = Vec::new();
    let sides: [(usize, &MorseReport, &ScalarField, &ScalarField); 2] =
        [(1, report1, psi1, psi2), (2, report2, psi2, psi1)];
    for (source, report, own, partner) in sides {
        for c in &report.critical_points {
            let g = partner.grad(&c.location);
            let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
            let gap = partner.eval(&c.location) - own.eval(&c.location);
            let ok = gn >= COMPAT_MARGIN && gap >= COMPAT_MARGIN;
            witnesses.push(CompatibilityWitness {
                source,
                location: c.location,
                partner_grad_norm: gn,
                gap,
                ok,
            });
        }
    }
    CompatibilityReport {
        pass: witnesses.iter().all(|w| w.ok),
        vacuous: witnesses.is_empty(),
        witnesses,
    }
}

/// A compatible pair with its audits.
#[derive(Debug, Clone, Serialize)]
pub struct WeightPair {
    pub psi1: ScalarField,
    pub report1: MorseReport,
    pub psi2: ScalarField,
    pub report2: MorseReport,
    pub compatibility: CompatibilityReport,
}

/// Both weights must grow outward through `gamma` and decay outward through
/// every other component, at every boundary node.
fn boundary_signs_hold(report: &MorseReport, gamma: &str) -> bool {
    report.boundary_signs.iter().all(|s| {
        if s.piece == gamma {
            s.min > 0.0
        } else {
            s.max < 0.0
        }
    })
}

/// Search seeded candidates (≤ 200) for a nonnegative Morse pair that
/// passes `check_compatibility` and carries the boundary sign pattern for
/// the observation component `gamma` on both weights.
pub fn make_compatible_pair(grid: &Grid, gamma: &str, seed: u64) -> Result<WeightPair> {
    grid.boundary_piece(gamma)?;
    let mut best: Option<String> = None;
    for attempt in 0..200u64 {
        let s = seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let candidate = match grid.kind {
            GridKind::Interval => interval_candidate(grid, gamma, s),
            GridKind::PeriodicStrip => strip_candidate(grid, gamma, s),
            GridKind::Rectangle => {
                return Err(QmError::Unsupported(
                    "a compatible pair needs a domain with two boundary components".into(),
                ))
            }
        }?;
        let (psi1, report1, psi2, report2) = candidate;
        let compatibility = check_compatibility(&psi1, &report1, &psi2, &report2);
        let admissible = compatibility.pass
            && report1.is_morse()
            && report2.is_morse()
            && report1.nonnegative()
            && report2.nonnegative()
            && boundary_signs_hold(&report1, gamma)
            && boundary_signs_hold(&report2, gamma);
        if admissible {
            return Ok(WeightPair {
                psi1,
                report1,
                psi2,
                report2,
                compatibility,
            });
        }
        if best.is_none() {
            let worst = compatibility
                .witnesses
                .iter()
                .filter(|w| !w.ok)
                .map(|w| format!("gap {:.3e}, |∇| {:.3e} at {:?}", w.gap, w.partner_grad_norm, w.location))
                .next()
                .unwrap_or_else(|| "boundary sign pattern failed".into());
            best = Some(worst);
        }
    }
    Err(QmError::SearchExhausted {
        attempts: 200,
        context: format!(
            "no compatible pair for '{gamma}'; first failure: {}",
            best.unwrap_or_default()
        ),
    })
}

type Candidate = (ScalarField, MorseReport, ScalarField, MorseReport);

/// On an interval both weights are seeded affine slopes toward `gamma`:
/// critical-point-free, so compatibility is vacuous by construction.
fn interval_candidate(grid: &Grid, gamma: &str, seed: u64) -> Result<Candidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (grid.axes[0].lo, grid.axes[0].hi);
    let toward_right = gamma == "right";
    let mut mk = |slope_base: f64| {
        let slope = slope_base * (1.0 + rng.gen_range(0.0..0.2));
        let signed = if toward_right { slope } else { -slope };
        // Nonnegative with floor 0.25 at the far end.
        let anchor = if toward_right { lo } else { hi };
        ScalarField::Linear {
            coeffs: [signed, 0.0],
            offset: 0.25 - signed * anchor,
        }
    };
    let psi1 = mk(1.0);
    let psi2 = mk(1.3);
    let report1 = morse_report(grid, &psi1);
    let report2 = morse_report(grid, &psi2);
    Ok((psi1, report1, psi2, report2))
}

/// On a strip the first weight is a super-threshold swirl (four critical
/// points) and the second a sub-threshold one lifted by a constant larger
/// than both swirl amplitudes, so it dominates everywhere while staying
/// critical-point-free.
fn strip_candidate(grid: &Grid, gamma: &str, seed: u64) -> Result<Candidate> {
    let grows_outward = match gamma {
        "outer" => true,
        "inner" => false,
        other => {
            return Err(QmError::Unsupported(format!(
                "strip boundary components are 'inner' and 'outer', got '{other}'"
            )))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sub_strength = rng.gen_range(0.3..0.7);
    let (psi1, report1) = generate_morse(
        grid,
        &MorseFamily::Swirl {
            strength: 1.6,
            grows_outward,
        },
        seed,
    )?;
    let (base2, _) = generate_morse(
        grid,
        &MorseFamily::Swirl {
            strength: sub_strength,
            grows_outward,
        },
        seed ^ 0x5DEE_CE66_D1CE_4225,
    )?;
    let dr = grid.axes[0].hi - grid.axes[0].lo;
    let amp1 = 1.6 * dr / std::f64::consts::PI;
    let amp2 = sub_strength * dr / std::f64::consts::PI;
    let psi2 = ScalarField::Sum(vec![base2, ScalarField::Constant(amp1 + amp2 + 0.25)]);
    let report2 = morse_report(grid, &psi2);
    Ok((psi1, report1, psi2, report2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Resolution;

    fn strip() -> Grid {
        Grid::periodic_strip(
            [[1.0, 2.0], [0.0, std::f64::consts::TAU]],
            Resolution::Fixed(vec![41, 96]),
        )
        .unwrap()
    }

    #[test]
    fn interval_pairs_pass_vacuously() {
        let grid = Grid::interval(-1.0, 2.0, Resolution::Fixed(vec![61])).unwrap();
        for gamma in ["right", "left"] {
            let pair = make_compatible_pair(&grid, gamma, 5).unwrap();
            assert!(pair.compatibility.pass);
            assert!(pair.compatibility.vacuous);
            assert!(pair.report1.critical_points.is_empty());
            assert!(pair.report2.critical_points.is_empty());
            assert!(pair.report1.nonnegative() && pair.report2.nonnegative());
        }
    }

    #[test]
    fn strip_pairs_cover_all_four_swirl_points() {
        let grid = strip();
        let pair = make_compatible_pair(&grid, "inner", 9).unwrap();
        assert!(pair.compatibility.pass);
        assert!(!pair.compatibility.vacuous);
        // ψ₁ carries the four swirl points; ψ₂ is critical-point-free, so
        // all witnesses point from source 1 into ψ₂.
        assert_eq!(pair.compatibility.witnesses.len(), 4);
        for w in &pair.compatibility.witnesses {
            assert_eq!(w.source, 1);
            assert!(w.gap >= 0.2, "the constant lift dominates: gap {}", w.gap);
            assert!(w.partner_grad_norm >= 0.25);
        }
        assert!(pair.report2.critical_points.is_empty());
    }

    #[test]
    fn boundary_sign_conditions_hold_at_every_node() {
        let grid = strip();
        for gamma in ["inner", "outer"] {
            let pair = make_compatible_pair(&grid, gamma, 31).unwrap();
            for psi in [&pair.psi1, &pair.psi2] {
                for piece in grid.components() {
                    for (slot, &id) in piece.nodes.iter().enumerate() {
                        let x = grid.coords(id);
                        let g = psi.grad(&x);
                        let n = piece.normals[slot];
                        let nd = n[0] * g[0] + n[1] * g[1];
                        if piece.name == gamma {
                            assert!(nd > 0.0, "{gamma}: node {id} has N\u{3c8} = {nd}");
                        } else {
                            assert!(nd < 0.0, "{gamma}: node {id} has N\u{3c8} = {nd}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn a_weight_is_never_compatible_with_itself() {
        let grid = strip();
        let (psi, report) = generate_morse(
            &grid,
            &MorseFamily::Swirl {
                strength: 1.6,
                grows_outward: false,
            },
            2,
        )
        .unwrap();
        let verdict = check_compatibility(&psi, &report, &psi, &report);
        assert!(!verdict.pass);
        assert!(!verdict.vacuous);
        // Its own critical points have zero gap and zero partner gradient.
        for w in &verdict.witnesses {
            assert!(w.gap.abs() <= 1e-12);
            assert!(w.partner_grad_norm <= 1e-9);
        }
    }

    #[test]
    fn rectangles_are_rejected() {
        let grid =
            Grid::rectangle([[0.0, 1.0], [0.0, 1.0]], Resolution::Fixed(vec![11, 11])).unwrap();
        let err = make_compatible_pair(&grid, "boundary", 0).unwrap_err();
        assert!(matches!(err, QmError::Unsupported(_)));
    }

    #[test]
    fn unknown_components_are_rejected_up_front() {
        let grid = strip();
        assert!(make_compatible_pair(&grid, "rim", 0).is_err());
    }

    #[test]
    fn pairs_are_deterministic_in_the_seed() {
        let grid = strip();
        let a = make_compatible_pair(&grid, "outer", 12).unwrap();
        let b = make_compatible_pair(&grid, "outer", 12).unwrap();
        assert_eq!(
            serde_json::to_string(&a.report1).unwrap(),
            serde_json::to_string(&b.report1).unwrap()
        );
        let x = [1.37, 2.1];
        assert_eq!(a.psi1.eval(&x), b.psi1.eval(&x));
        assert_eq!(a.psi2.eval(&x), b.psi2.eval(&x));
    }
}
