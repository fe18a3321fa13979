//! Design optimization for the trigger chart: the utilities
//! U1 = -(E(V) - v)^2 and U2 = -Var(V) of the trigger count
//! V ~ Bin(N - S + 1, alpha), the optimal set of (S, alpha) pairs and the
//! closed-form optimal significance level.

use serde::Serialize;

/// Optimal significance level for an effective series length.
///
/// With window `w = n_effective - start_point + 1`: 0 if `w <= 0`, 1 if
/// `0 < w <= target`, otherwise `target / w`. `n_effective` is real-valued
/// so it accepts estimated sample sizes.
pub fn optimal_alpha(n_effective: f64, start_point: usize, target: usize) -> f64 {
    let window = n_effective - start_point as f64 + 1.0;
    let v = target as f64;
    if window <= 0.0 {
        0.0
    } else if window <= v {
        1.0
    } else {
        v / window
    }
}

/// U1(S, alpha) = -((N - S + 1) alpha - v)^2. `start_point` may be fractional
/// for the continuous extension.
pub fn expected_trigger_utility(start_point: f64, alpha: f64, n_total: usize, target: usize) -> f64 {
    let expected = (n_total as f64 - start_point + 1.0) * alpha;
    let d = expected - target as f64;
    -(d * d) + 0.0
}

/// U2(S, alpha) = -(N - S + 1) alpha (1 - alpha).
pub fn variance_utility(start_point: f64, alpha: f64, n_total: usize) -> f64 {
    -((n_total as f64 - start_point + 1.0) * alpha * (1.0 - alpha)) + 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignPoint {
    pub start_point: usize,
    pub alpha: f64,
    pub u1: f64,
    pub u2: f64,
}

/// For every S in 2..=N, the pair (S, optimal_alpha(N, S, v)) with both utilities.
pub fn optimal_set(n_total: usize, target: usize) -> Vec<DesignPoint> {
    (2..=n_total)
        .map(|s| {
            let alpha = optimal_alpha(n_total as f64, s, target);
            DesignPoint {
                start_point: s,
                alpha,
                u1: expected_trigger_utility(s as f64, alpha, n_total, target),
                u2: variance_utility(s as f64, alpha, n_total),
            }
        })
        .collect()
}

/// Maximizer of U2 over a set of design points. Ties go to the larger U1,
/// then to the earlier start point.
pub fn variance_optimum(points: &[DesignPoint]) -> Option<DesignPoint> {
    points.iter().copied().reduce(|best, p| {
        let better = p.u2 > best.u2 || (p.u2 == best.u2 && p.u1 > best.u1);
        if better {
            p
        } else {
            best
        }
    })
}

/// A row of the design-grid export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    #[serde(rename = "S")]
    pub start_point: f64,
    pub alpha: f64,
    pub u1: f64,
    pub u2: f64,
    pub optimal: bool,
}

/// Uniform grid over [1, N] x [0, 1] of the continuous utilities followed
/// by the optimal-set rows (flagged `optimal`).
pub fn design_grid(n_total: usize, target: usize, s_steps: usize, alpha_steps: usize) -> Vec<GridRow> {
    let lin = |lo: f64, hi: f64, k: usize, i: usize| {
        if k <= 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (k - 1) as f64
        }
    };
    let mut rows = Vec::with_capacity(s_steps * alpha_steps + n_total);
    for i in 0..s_steps {
        let s = lin(1.0, n_total as f64, s_steps, i);
        for j in 0..alpha_steps {
            let alpha = lin(0.0, 1.0, alpha_steps, j);
            rows.push(GridRow {
                start_point: s,
                alpha,
                u1: expected_trigger_utility(s, alpha, n_total, target),
                u2: variance_utility(s, alpha, n_total),
                optimal: false,
            });
        }
    }
    rows.extend(optimal_set(n_total, target).into_iter().map(|p| GridRow {
        start_point: p.start_point as f64,
        alpha: p.alpha,
        u1: p.u1,
        u2: p.u2,
        optimal: true,
    }));
    rows
}
