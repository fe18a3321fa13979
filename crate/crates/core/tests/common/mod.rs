#![allow(dead_code, clippy::excessive_precision)]

use ema_chart::{ObservationSeries, Slot};

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let pair = f(c - x) + f(c + x);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integral of `f` over [a, b] to absolute tolerance `tol`.
pub fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth == 0 || b - a < 1e-300 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    rec(f, a, b, tol, 60)
}

/// Beta CDF by quadrature, normalized by quadrature as well, so no gamma
/// function is involved.
///
/// The unnormalized density is integrated in the variables u = x^a near 0
/// and w = (1 - x)^b near 1, where the endpoint singularities vanish:
/// x^(a-1) dx = du / a.
pub struct QuadratureBeta {
    a: f64,
    b: f64,
    left_half: f64,
    right_half: f64,
}

const QTOL: f64 = 1e-15;

impl QuadratureBeta {
    pub fn new(a: f64, b: f64) -> Self {
        let mut q = Self {
            a,
            b,
            left_half: 0.0,
            right_half: 0.0,
        };
        q.left_half = q.left(0.5);
        q.right_half = q.right(0.5);
        q
    }

    /// Unnormalized mass of [0, x] for x <= 1/2.
    fn left(&self, x: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        let f = move |u: f64| (1.0 - u.powf(1.0 / a)).powf(b - 1.0) / a;
        integrate(&f, 0.0, x.powf(a), QTOL)
    }

    /// Unnormalized mass of [1 - y, 1] for y <= 1/2.
    fn right(&self, y: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        let f = move |w: f64| (1.0 - w.powf(1.0 / b)).powf(a - 1.0) / b;
        integrate(&f, 0.0, y.powf(b), QTOL)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let total = self.left_half + self.right_half;
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else if x <= 0.5 {
            self.left(x) / total
        } else {
            1.0 - self.right(1.0 - x) / total
        }
    }

    /// Quantile by bisection on the quadrature CDF.
    pub fn quantile(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn rank_sum_distribution(a: &[f64], b: &[f64]) -> (usize, Vec<usize>) {
    let m = a.len();
    let total = m + b.len();
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    let rank = |x: f64| all.iter().position(|&y| y == x).unwrap() + 1;
    let observed = a.iter().map(|&x| rank(x)).sum();
    let sums = (0u32..(1 << total))
        .filter(|mask| mask.count_ones() as usize == m)
        .map(|mask| (0..total).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum())
        .collect();
    (observed, sums)
}

/// Null probability that the first sample's rank sum equals the observed one.
pub fn brute_force_rank_sum_point_mass(a: &[f64], b: &[f64]) -> f64 {
    let (observed, sums) = rank_sum_distribution(a, b);
    sums.iter().filter(|&&s| s == observed).count() as f64 / sums.len() as f64
}

/// One-sided rank-sum p-value P(U >= u_obs) by enumerating every way of
/// choosing which ranks belong to the first sample. Tie-free input only.
pub fn brute_force_rank_sum_p(a: &[f64], b: &[f64]) -> f64 {
    let (observed, sums) = rank_sum_distribution(a, b);
    sums.iter().filter(|&&s| s >= observed).count() as f64 / sums.len() as f64
}

pub fn full_series(id: &str, values: &[f64], slots_per_day: usize) -> ObservationSeries {
    ObservationSeries::new(id, slots_per_day, values.iter().map(|&x| Slot::Present(x)).collect()).unwrap()
}
