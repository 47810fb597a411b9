//! Stop conditions and batch sizes for one side's candidate set.

use crate::datamodel::{MepWindow, Side};

/// What the engine knows about a candidate set when deciding whether to keep
/// selecting from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateView {
    /// Machine-labeled pairs left in the candidate set.
    pub remaining: usize,
    /// Estimated equivalence proportion of those pairs.
    pub remaining_ep: f64,
    /// Estimated proportion of the next subset the set would absorb.
    pub adjacent_ep: Option<f64>,
    pub window: MepWindow,
}

/// `(Σ est_k n_k - r) / remaining`, clamped to `[0,1]`. `None` when nothing
/// remains.
pub fn remaining_ep(members: impl IntoIterator<Item = (f64, usize, usize, usize)>) -> Option<f64> {
    // (est_mean, total, inspected, inspected_equiv)
    let (mut expected, mut remaining) = (0.0, 0usize);
    for (est, total, inspected, equiv) in members {
        if inspected >= total {
            continue;
        }
        expected += est * total as f64 - equiv as f64;
        remaining += total - inspected;
    }
    (remaining > 0).then(|| (expected / remaining as f64).clamp(0.0, 1.0))
}

/// True when the side should stop selecting and expand. On the unmatching
/// side this fires once the remaining proportion drops below the next
/// subset's or the marginal proportion drops below the remaining one; the
/// matching side mirrors both comparisons.
pub fn should_expand(side: Side, view: &CandidateView) -> bool {
    if view.remaining == 0 {
        return true;
    }
    let Some(mep) = view.window.mep() else {
        return false;
    };
    let ep = view.remaining_ep;
    match side {
        Side::Minus => view.adjacent_ep.is_some_and(|a| ep < a) || mep < ep,
        Side::Plus => view.adjacent_ep.is_some_and(|a| ep > a) || mep > ep,
    }
}

/// Least number of further inspections after which a stop condition could
/// fire, for the unmatching side: `max(1, ⌊min(N1, N2)⌋)` capped at the
/// remaining pairs.
pub fn batch_size_minus(view: &CandidateView) -> usize {
    let n = view.remaining as f64;
    let ep = view.remaining_ep;
    let (m1, n1) = (view.window.equivalent as f64, view.window.inspected as f64);
    let first = match (view.window.mep(), view.adjacent_ep) {
        (Some(mep), Some(adj)) if mep > adj => n * (ep - adj) / (mep - adj),
        _ => n,
    };
    let denom = m1 + ep * n;
    let second = if denom > 0.0 { (m1 * n - ep * n1 * n) / denom } else { n };
    finish(first, second, view.remaining)
}

/// Mirror of [`batch_size_minus`] for the matching side.
pub fn batch_size_plus(view: &CandidateView) -> usize {
    let n = view.remaining as f64;
    let ep = view.remaining_ep;
    let (m1, n1) = (view.window.equivalent as f64, view.window.inspected as f64);
    let first = match (view.window.mep(), view.adjacent_ep) {
        (Some(mep), Some(adj)) if mep < adj => n * (adj - ep) / (adj - mep),
        _ => n,
    };
    let denom = n + n1 - m1 - ep * n;
    let second = if denom > 0.0 { (ep * n * n1 - m1 * n) / denom } else { n };
    finish(first, second, view.remaining)
}

pub fn batch_size(side: Side, view: &CandidateView) -> usize {
    match side {
        Side::Minus => batch_size_minus(view),
        Side::Plus => batch_size_plus(view),
    }
}

fn finish(first: f64, second: f64, remaining: usize) -> usize {
    let m = first.min(second);
    let b = if m.is_finite() && m >= 1.0 { m.floor() as usize } else { 1 };
    b.min(remaining.max(1))
}
