use crate::error::{FptError, Result};

/// Bisection tolerance on the multiplier.
pub const MAXENT_TOL: f64 = 1e-10;

/// Minimizer of `ln(1 + q·e^λ) − λ·g` over `λ`, found by bisection on the
/// derivative `q·e^λ / (1 + q·e^λ) − g`.
pub fn maxent_dual_solve(q: f64, g: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(FptError::InvalidInput(format!("q = {q} outside (0, 1)")));
    }
    if !(g > 0.0 && g < 1.0) {
        return Err(FptError::InvalidInput(format!("g = {g} outside (0, 1); the dual is unbounded")));
    }
    let deriv = |l: f64| {
        let e = q * l.exp();
        e / (1.0 + e) - g
    };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while deriv(lo) > 0.0 {
        lo *= 2.0;
    }
    while deriv(hi) < 0.0 {
        hi *= 2.0;
    }
    while hi - lo > MAXENT_TOL {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed-form solution `ln(g / (q(1 − g)))`.
pub fn maxent_closed_form(q: f64, g: f64) -> f64 {
    (g / (q * (1.0 - g))).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_examples() {
        assert!((maxent_dual_solve(0.5, 0.5).unwrap() - 2f64.ln()).abs() < 1e-10);
        assert!((maxent_dual_solve(0.2, 0.2).unwrap() - 1.25f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn grid_matches_closed_form() {
        for i in 1..=10 {
            for j in 1..=10 {
                let q = i as f64 / 11.0;
                let g = j as f64 / 11.0;
                let l = maxent_dual_solve(q, g).unwrap();
                assert!((l - maxent_closed_form(q, g)).abs() <= 1e-9, "q={q} g={g}");
            }
        }
    }

    #[test]
    fn degenerate_targets_rejected() {
        for (q, g) in [(0.5, 1.0), (0.5, 0.0), (0.0, 0.5), (1.0, 0.5), (0.5, f64::NAN)] {
            assert!(matches!(maxent_dual_solve(q, g), Err(FptError::InvalidInput(_))));
        }
    }
}
