//! One-dimensional bracketing and minimisation used by the scans.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    /// Smallest sampled value inside the bracket.
    pub sampled_min: f64,
}

/// Brackets around interior sampled local minima that fall below `threshold`.
///
/// A run of samples below the threshold containing several local minima yields one
/// bracket per minimum; each bracket spans the two neighbouring samples. Minima at the
/// first or last sample are monotone edges, not dips, and open no bracket.
pub fn local_minimum_brackets(xs: &[f64], ys: &[f64], threshold: f64) -> Vec<Bracket> {
    let n = xs.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let y = ys[i];
        if !(y < threshold) {
            continue;
        }
        let left_ok = ys[i - 1] > y || (ys[i - 1] == y && i >= 2 && ys[i - 2] > y);
        let right_ok = ys[i + 1] >= y;
        if left_ok && right_ok {
            out.push(Bracket { lo: xs[i - 1], hi: xs[i + 1], sampled_min: y });
        }
    }
    out
}

/// Golden-section minimisation of a unimodal function on [lo, hi] down to width `tol`.
/// Returns the best abscissa visited and its value.
pub fn golden_section<F, E>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64), E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
            if f1 < best.1 {
                best = (x1, f1);
            }
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
            if f2 < best.1 {
                best = (x2, f2);
            }
        }
    }
    Ok(best)
}

/// Bisection for a sign change of `f` on [lo, hi].
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= rel_tol * mid.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brackets_split_runs_at_minima() {
        let xs: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let ys = [0.9, 0.2, 0.05, 0.2, 0.1, 0.02, 0.1, 0.5, 0.9];
        let b = local_minimum_brackets(&xs, &ys, 0.3);
        assert_eq!(b.len(), 2);
        assert_eq!((b[0].lo, b[0].hi), (1.0, 3.0));
        assert_eq!((b[1].lo, b[1].hi), (4.0, 6.0));
    }

    #[test]
    fn edge_minima_open_no_bracket() {
        let xs: Vec<f64> = (0..5).map(|i| i as f64).collect();
        assert!(local_minimum_brackets(&xs, &[0.01, 0.2, 0.5, 0.6, 0.7], 0.3).is_empty());
        assert!(local_minimum_brackets(&xs, &[0.7, 0.6, 0.5, 0.2, 0.01], 0.3).is_empty());
    }

    #[test]
    fn golden_finds_v_minimum() {
        let (x, fx) = golden_section(|x: f64| Ok::<_, ()>((x - 0.3217).abs()), 0.0, 1.0, 1e-9).unwrap();
        assert!((x - 0.3217).abs() < 1e-9 && fx < 1e-9);
    }

    #[test]
    fn bisect_root() {
        let r = bisect(|x| 2.0 - x * x, 0.0, 2.0, 1e-15);
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }
}
