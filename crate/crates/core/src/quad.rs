//! Adaptive Gauss-Kronrod quadrature.
//!
//! Two layers: a plain adaptive G7-K15 integrator on a finite interval, and
//! a log-domain wrapper for integrals of exp(log_f) where log_f is unimodal
//! (every integrand in this crate is log-concave in one dimension). The
//! wrapper rescales by the mode value so the working integrand is O(1), then
//! reports the log of the integral; magnitudes like exp(+-5000) never appear
//! as raw floats.

use crate::error::{bail_domain, Result};

// G7-K15 nodes and weights (positive half; the rule is symmetric).
// 15-node Kronrod extension of the 7-node Gauss rule, QUADPACK values.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
// Gauss weights attach to the odd-indexed Kronrod nodes (and the center).
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One G7-K15 evaluation on [a, b]: returns (kronrod_estimate, error_estimate).
fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let (fa, fb);
        if x == 0.0 {
            fa = f(center);
            kronrod += wk * fa;
            gauss += WG[3] * fa;
        } else {
            fa = f(center - half * x);
            fb = f(center + half * x);
            kronrod += wk * (fa + fb);
            if i % 2 == 1 {
                gauss += WG[i / 2] * (fa + fb);
            }
        }
    }
    (kronrod * half, (kronrod - gauss).abs() * half)
}

/// Adaptively refined G7-K15 on a finite interval.
///
/// Splits the worst interval until the summed error estimate drops below
/// `max(abs_tol, 1e-12 * |integral|)`. Endpoints are never evaluated (all
/// Kronrod nodes are interior), so integrable endpoint singularities of the
/// u^p type are handled by refinement alone.
pub fn adaptive_gk(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if !(a < b) {
        bail_domain!("quadrature interval [{a}, {b}] is empty or inverted");
    }
    adaptive_gk_partition(f, &[a, b], abs_tol)
}

/// Adaptive G7-K15 over a pre-partitioned interval. A graded initial mesh
/// protects against spurious convergence when one panel is so much wider
/// than the peak region that every quadrature node lands in a negligible
/// tail (the error estimate is then also negligible and refinement never
/// triggers).
fn adaptive_gk_partition(
    f: &mut dyn FnMut(f64) -> f64,
    breakpoints: &[f64],
    abs_tol: f64,
) -> Result<f64> {
    let mut heap: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(breakpoints.len());
    let mut total = 0.0;
    let mut total_err = 0.0;
    // (error_estimate, a, b, integral_estimate), worst interval kept on top
    for w in breakpoints.windows(2) {
        let (est, err) = gk15(f, w[0], w[1]);
        heap.push((err, w[0], w[1], est));
        total += est;
        total_err += err;
    }
    const MAX_INTERVALS: usize = 100_000;
    while total_err > abs_tol.max(1e-12 * total.abs()) {
        if heap.len() >= MAX_INTERVALS {
            bail_domain!(
                "quadrature failed to converge: {} intervals, error {:.3e}",
                heap.len(),
                total_err
            );
        }
        // Pull the interval with the largest error estimate.
        let worst = heap
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
            .map(|(i, _)| i)
            .unwrap();
        let (err0, a0, b0, est0) = heap.swap_remove(worst);
        let mid = 0.5 * (a0 + b0);
        if mid <= a0 || mid >= b0 {
            // Interval at float resolution; accept its estimate as-is.
            heap.push((0.0, a0, b0, est0));
            total_err -= err0;
            continue;
        }
        let (e1, r1) = gk15(f, a0, mid);
        let (e2, r2) = gk15(f, mid, b0);
        total += e1 + e2 - est0;
        total_err += r1 + r2 - err0;
        heap.push((r1, a0, mid, e1));
        heap.push((r2, mid, b0, e2));
    }
    Ok(heap.iter().map(|iv| iv.3).sum())
}

/// Integration bound: finite or infinite.
#[derive(Clone, Copy, Debug)]
pub enum Bound {
    Finite(f64),
    Infinite,
}

// Values of log_f - log_f(mode) below this are treated as zero tail. The
// integrands are log-concave, so beyond the crossing point log_f keeps
// falling at least linearly and the discarded tail is far below every
// tolerance in the crate.
const LOG_CUTOFF: f64 = 120.0;

/// log of integral of exp(log_f) over (lo, hi), where log_f is unimodal with
/// an interior maximum near `mode`.
///
/// The caller's mode hint only steers bracketing; the value comes from
/// adaptive quadrature of the rescaled integrand. `abs_tol` applies to the
/// rescaled integral and so acts as a relative tolerance on the result.
pub fn log_integral_unimodal(
    log_f: &dyn Fn(f64) -> f64,
    lo: Bound,
    hi: Bound,
    mode: f64,
    abs_tol: f64,
) -> Result<f64> {
    // Recenter on the best of a few probes in case the hint is off.
    if !in_bounds(mode, lo, hi) {
        bail_domain!("mode hint {mode} lies outside the integration bounds");
    }
    let mut peak_x = mode;
    let mut peak = log_f(mode);
    if !peak.is_finite() {
        bail_domain!("integrand is not finite at the mode hint {mode}");
    }
    for step in [-1.0, -0.25, 0.25, 1.0] {
        let x = mode + step;
        if in_bounds(x, lo, hi) {
            let v = log_f(x);
            if v > peak {
                peak = v;
                peak_x = x;
            }
        }
    }

    let left = bracket(log_f, peak_x, peak, -1.0, lo);
    let right = bracket(log_f, peak_x, peak, 1.0, hi);
    // Graded mesh: panel widths grow geometrically away from the peak, so
    // the peak panel is as narrow as the integrand's own scale.
    let mut cuts = vec![left, right, peak_x];
    for dir in [-1.0, 1.0] {
        let mut step = 0.5;
        for _ in 0..200 {
            let x = peak_x + dir * step;
            if x <= left || x >= right {
                break;
            }
            cuts.push(x);
            step *= 2.0;
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut g = |x: f64| (log_f(x) - peak).exp();
    let integral = adaptive_gk_partition(&mut g, &cuts, abs_tol)?;
    if integral <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(peak + integral.ln())
}

fn in_bounds(x: f64, lo: Bound, hi: Bound) -> bool {
    let above = match lo {
        Bound::Finite(a) => x > a,
        Bound::Infinite => true,
    };
    let below = match hi {
        Bound::Finite(b) => x < b,
        Bound::Infinite => true,
    };
    above && below
}

/// Walk outward from the peak, doubling the step, until the integrand falls
/// below the cutoff or the domain boundary is reached. Finite boundaries are
/// returned as-is (the adaptive rule handles integrable endpoint behavior).
fn bracket(log_f: &dyn Fn(f64) -> f64, peak_x: f64, peak: f64, dir: f64, limit: Bound) -> f64 {
    let mut step = 1.0;
    let mut x = peak_x;
    for _ in 0..200 {
        let cand = peak_x + dir * step;
        let cand = match limit {
            Bound::Finite(l) => {
                if (dir < 0.0 && cand <= l) || (dir > 0.0 && cand >= l) {
                    return l;
                }
                cand
            }
            Bound::Infinite => cand,
        };
        x = cand;
        let v = log_f(x);
        if v - peak < -LOG_CUTOFF {
            return x;
        }
        step *= 2.0;
    }
    x
}
