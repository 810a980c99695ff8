//! Bracketed scalar root finding and one-dimensional minimization.
//!
//! Both routines follow Brent's classic algorithms (inverse quadratic
//! interpolation with bisection fallback, and golden-section search with
//! parabolic steps).

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Finds `x` in `[lo, hi]` with `f(x) = 0`, given a sign change across the bracket.
pub fn brent_root<T: Real, F: FnMut(T) -> T>(mut f: F, lo: T, hi: T, tol: T, max_iter: usize) -> Result<T> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(bracket_error("no sign change in bracket", lo, hi, fa, fb));
    }

    let two = T::two();
    let eps = T::epsilon();
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;

    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = two * eps * b.abs() + T::half() * tol;
        let xm = T::half() * (c - b);
        if xm.abs() <= tol1 || fb == T::zero() {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * xm * s;
                q = T::one() - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (two * xm * qa * (qa - r) - (b - a) * (r - T::one()));
                q = (qa - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            }
            p = p.abs();
            let min1 = T::lit(3.0) * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol1 { b + d } else { b + tol1.abs() * xm.signum() };
        fb = f(b);
        if !fb.is_finite() {
            return Err(bracket_error("non-finite function value", lo, hi, fa, fb));
        }
    }
    Err(bracket_error("iteration limit reached", lo, hi, fa, fb))
}

/// All roots of `f` on `[lo, hi]` found by scanning `samples` sub-intervals for
/// sign changes and refining each with [`brent_root`].
pub fn scan_roots<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    lo: T,
    hi: T,
    samples: usize,
    tol: T,
    max_iter: usize,
) -> Vec<T> {
    let n = samples.max(1);
    let step = (hi - lo) / T::from_usize(n).unwrap();
    let mut roots = Vec::new();
    let mut x0 = lo;
    let mut f0 = f(x0);
    for k in 1..=n {
        let x1 = if k == n { hi } else { lo + step * T::from_usize(k).unwrap() };
        let f1 = f(x1);
        if f0 == T::zero() {
            roots.push(x0);
        } else if f0.is_finite() && f1.is_finite() && f1 != T::zero() && f0.signum() != f1.signum() {
            if let Ok(x) = brent_root(&mut f, x0, x1, tol, max_iter) {
                roots.push(x);
            }
        }
        x0 = x1;
        f0 = f1;
    }
    if f0 == T::zero() {
        roots.push(x0);
    }
    roots
}

/// Minimum of `f` on `[lo, hi]` (Brent's method); returns `(x, f(x))`.
pub fn brent_minimize<T: Real, F: FnMut(T) -> T>(mut f: F, lo: T, hi: T, tol: T, max_iter: usize) -> (T, T) {
    let golden = T::lit(0.381_966_011_250_105_1);
    let (mut a, mut b) = (lo, hi);
    let mut x = a + golden * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d = T::zero();
    let mut e = T::zero();
    let sqrt_eps = T::epsilon().sqrt();

    for _ in 0..max_iter {
        let xm = T::half() * (a + b);
        let tol1 = sqrt_eps * x.abs() + tol / T::lit(3.0);
        let tol2 = T::two() * tol1;
        if (x - xm).abs() <= tol2 - T::half() * (b - a) {
            break;
        }
        let mut golden_step = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = T::two() * (q - r);
            if q > T::zero() {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (T::half() * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x >= xm { a - x } else { b - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + if d > T::zero() { tol1 } else { -tol1 } };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

fn bracket_error<T: Real>(reason: &str, lo: T, hi: T, f_lo: T, f_hi: T) -> Error {
    Error::Solver {
        reason: reason.to_string(),
        lo: lo.as_f64(),
        hi: hi.as_f64(),
        f_lo: f_lo.as_f64(),
        f_hi: f_hi.as_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_of_quadratic() {
        let x = brent_root(|x: f64| x * x - 2.0, 0.0, 2.0, 1e-14, 100).unwrap();
        assert!((x - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn root_in_single_precision() {
        let x = brent_root(|x: f32| x.cos() - x, 0.0, 1.0, 1e-6, 100).unwrap();
        assert!((x - 0.739_085_1).abs() < 1e-5);
    }

    #[test]
    fn missing_sign_change_is_reported() {
        match brent_root(|x: f64| x * x + 1.0, -1.0, 1.0, 1e-12, 50) {
            Err(Error::Solver { lo, hi, .. }) => {
                assert_eq!((lo, hi), (-1.0, 1.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scan_finds_every_root() {
        let roots = scan_roots(|x: f64| (x - 0.2) * (x - 0.5) * (x - 0.8), 0.0, 1.0, 64, 1e-14, 100);
        assert_eq!(roots.len(), 3);
        for (r, e) in roots.iter().zip([0.2, 0.5, 0.8]) {
            assert!((r - e).abs() < 1e-12);
        }
    }

    #[test]
    fn minimize_parabola() {
        let (x, fx) = brent_minimize(|x: f64| (x - 0.3).powi(2) + 1.0, 0.0, 1.0, 1e-12, 200);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-14);
    }
}
