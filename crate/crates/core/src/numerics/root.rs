use crate::{Error, Result, Scalar};

const MAX_BISECTIONS: usize = 200;

/// Bisection on a sign-changing bracket.
///
/// Returns the midpoint of the final bracket once its width is at most `tol`
/// or after 200 halvings. An endpoint where `f` is exactly zero is returned
/// as is.
pub fn refine_root<T: Scalar, F: Fn(T) -> T>(f: F, lo: T, hi: T, tol: T) -> Result<T> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument("bracket must be finite".into()));
    }
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == T::zero() {
        return Ok(lo);
    }
    if fhi == T::zero() {
        return Ok(hi);
    }
    if !(flo.signum() * fhi.signum() < T::zero()) {
        return Err(Error::Bracket { lo: lo.f64(), hi: hi.f64() });
    }
    let two = T::of(2.0);
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= tol {
            break;
        }
        let mid = lo + (hi - lo) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == T::zero() {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(lo + (hi - lo) / two)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_function_root_is_zero() {
        let r = refine_root(|t: f64| t, -1.0, 1.0, 1e-12).unwrap();
        assert!(r.abs() <= 1e-12);
    }

    #[test]
    fn square_root_of_two() {
        let r = refine_root(|t: f64| t * t - 2.0, 1.0, 2.0, 1e-10).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() <= 1e-10);
    }

    #[test]
    fn reversed_bracket_is_accepted() {
        let r = refine_root(|t: f64| t - 0.25, 1.0, 0.0, 1e-12).unwrap();
        assert!((r - 0.25).abs() <= 1e-12);
    }

    #[test]
    fn same_sign_is_a_bracket_error() {
        let e = refine_root(|t: f64| t * t + 1.0, -1.0, 1.0, 1e-6).unwrap_err();
        assert!(matches!(e, Error::Bracket { .. }));
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        assert!(refine_root(|t: f64| t, -1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let r = refine_root(|t: f32| t * t * t - 8.0, 0.0, 5.0, 1e-5).unwrap();
        assert!((r - 2.0).abs() < 1e-5);
    }

    #[test]
    fn two_gaussian_derivative_minimum_matches_dense_grid() {
        let g = |t: f64, m: f64, v: f64| (-(t - m) * (t - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let dens = |t: f64| 0.6 * g(t, -1.5, 0.5) + 0.4 * g(t, 2.0, 0.8);
        let deriv = |t: f64| -0.6 * g(t, -1.5, 0.5) * (t + 1.5) / 0.5 - 0.4 * g(t, 2.0, 0.8) * (t - 2.0) / 0.8;
        let root = refine_root(deriv, -1.0, 1.5, 1e-12).unwrap();
        let n = 1_000_000;
        let (lo, hi) = (root - 0.5, root + 0.5);
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=n {
            let t = lo + (hi - lo) * i as f64 / n as f64;
            let d = dens(t);
            if d < best.0 {
                best = (d, t);
            }
        }
        assert!((root - best.1).abs() < 1e-6, "{root} vs {}", best.1);
    }
}
