//! Composite Gauss–Legendre rules on graded panels.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Gauss–Legendre rule of fixed order applied panel by panel.
#[derive(Debug, Clone)]
pub struct CompositeGauss {
    rule: GaussLegendre,
}

impl CompositeGauss {
    /// `order` is clamped to at least 1.
    pub fn new(order: usize) -> Self {
        let degree = NonZeroUsize::new(order.max(1)).expect("order >= 1");
        Self {
            rule: GaussLegendre::new(degree),
        }
    }

    /// Sums the rule over consecutive breakpoints.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, breaks: &[f64], mut f: F) -> f64 {
        breaks.windows(2).map(|w| self.rule.integrate(w[0], w[1], &mut f)).sum()
    }
}

/// Breakpoints on `[a, b]` refined geometrically around `focus` (clamped into
/// the interval) down to scale `width`, plus `end_levels` dyadic levels of
/// grading toward each endpoint.
///
/// Panels adjacent to the focus have length `width`, and panel lengths double
/// moving away from it, so a kernel peaked at `focus` with width `width` is
/// integrated to near machine precision by a moderate-order rule.
pub fn focused_breakpoints(a: f64, b: f64, focus: f64, width: f64, end_levels: usize) -> Vec<f64> {
    debug_assert!(b > a);
    let mut pts = vec![a, b];
    let c = focus.clamp(a, b);
    if c > a && c < b {
        pts.push(c);
    }
    if width > 0.0 && width.is_finite() {
        let mut step = width;
        while step < b - a {
            for p in [c - step, c + step] {
                if p > a && p < b {
                    pts.push(p);
                }
            }
            step *= 2.0;
        }
    }
    let half = 0.5 * (b - a);
    for k in 1..=end_levels {
        let s = half * 0.5f64.powi(k as i32);
        pts.push(a + s);
        pts.push(b - s);
    }
    pts.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    let tol = 1e-14 * (b - a);
    pts.dedup_by(|x, y| (*x - *y).abs() <= tol);
    pts
}
