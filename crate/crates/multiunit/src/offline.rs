//! Offline single-price optimum: the benchmark denominator everywhere.

use crate::instance::RevenueCurve;

/// Best single-price sale for a given supply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptResult {
    /// Copies sold at the optimum (smallest argmax on ties).
    pub quantity: usize,
    /// Per-copy price `u_{l*}` (0 when nothing is sold).
    pub price: f64,
    /// `quantity * price`.
    pub revenue: f64,
}

/// Maximizes `f(l)` over `1 <= l <= min(supply, n)`, tie-breaking to the
/// smallest quantity. Zero supply sells nothing and is not an error.
pub fn opt_revenue(curve: &RevenueCurve, supply: usize) -> OptResult {
    if supply == 0 {
        return OptResult { quantity: 0, price: 0.0, revenue: 0.0 };
    }
    let lim = supply.min(curve.n());
    let mut best = 1usize;
    for l in 2..=lim {
        if curve.f(l) > curve.f(best) {
            best = l;
        }
    }
    OptResult { quantity: best, price: curve.u(best), revenue: curve.f(best) }
}

/// Optimum for every supply 1..=m_max. `out[m-1]` corresponds to supply m;
/// revenue is non-decreasing in supply.
pub fn opt_curve(curve: &RevenueCurve, m_max: usize) -> Vec<OptResult> {
    let mut out = Vec::with_capacity(m_max);
    let mut best = OptResult { quantity: 0, price: 0.0, revenue: 0.0 };
    for m in 1..=m_max {
        if m <= curve.n() && (best.quantity == 0 || curve.f(m) > best.revenue) {
            best = OptResult { quantity: m, price: curve.u(m), revenue: curve.f(m) };
        }
        out.push(best);
    }
    out
}
