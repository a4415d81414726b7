//! Golden-section search for a scalar minimum on a closed interval.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Minimizes `f` on `[lo, hi]` until the bracket is narrower than `tol`.
///
/// Both endpoints are evaluated as well, so a monotone objective returns the
/// better endpoint rather than a point just inside it. Among equal values the
/// leftmost point wins.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Minimum {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let tol = tol.max(f64::EPSILON * (1.0 + a.abs().max(b.abs())));
    let mut evals = 0usize;
    let mut eval = |x: f64, evals: &mut usize| {
        *evals += 1;
        f(x)
    };

    let fa = eval(a, &mut evals);
    let mut best = Minimum { x: a, value: fa, evaluations: 0 };
    let consider = |x: f64, v: f64, best: &mut Minimum| {
        if v < best.value || (v == best.value && x < best.x) {
            best.x = x;
            best.value = v;
        }
    };
    if b > a {
        let fb = eval(b, &mut evals);
        consider(b, fb, &mut best);
    }

    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c, &mut evals);
    let mut fd = eval(d, &mut evals);
    consider(c, fc, &mut best);
    consider(d, fd, &mut best);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c, &mut evals);
            consider(c, fc, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d, &mut evals);
            consider(d, fd, &mut best);
        }
    }
    best.evaluations = evals;
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_minimum() {
        let m = golden_section(|x| (x - 1.3) * (x - 1.3), -5.0, 5.0, 1e-6);
        assert!((m.x - 1.3).abs() < 1e-5);
        assert!(m.evaluations < 60);
    }

    #[test]
    fn monotone_objective_returns_endpoint() {
        let m = golden_section(|x| -x, 0.0, 10.0, 0.01);
        assert_eq!(m.x, 10.0);
        let m = golden_section(|x| x, 0.0, 10.0, 0.01);
        assert_eq!(m.x, 0.0);
    }

    #[test]
    fn step_objective_lands_on_low_plateau() {
        let f = |x: f64| if (3.0..4.0).contains(&x) { -1.0 } else { 0.0 };
        let m = golden_section(f, 0.0, 10.0, 0.01);
        assert_eq!(m.value, -1.0);
        assert!((3.0..4.0).contains(&m.x));
    }

    #[test]
    fn degenerate_interval() {
        let m = golden_section(|x| x * x, 2.0, 2.0, 0.01);
        assert_eq!(m.x, 2.0);
        assert_eq!(m.value, 4.0);
    }
}
