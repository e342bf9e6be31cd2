//! Small derivative-free maximizers used by the ML fits.

use crate::scalar::Real;

/// Maximizes a unimodal `f` on `[lo, hi]` by golden-section search.
/// Returns `(argmax, max)`; endpoints are also checked.
pub fn golden_max<T: Real, F: FnMut(T) -> T>(mut f: F, lo: T, hi: T, tol: T, max_iter: usize) -> (T, T) {
    let inv_phi = T::lit(0.618_033_988_749_894_8);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions<T> {
    pub max_evals: usize,
    /// Stop once the spread of simplex values falls below this.
    pub f_tol: T,
    pub initial_step: T,
}

impl<T: Real> Default for NelderMeadOptions<T> {
    fn default() -> Self {
        Self { max_evals: 2_000, f_tol: T::lit(1e-10), initial_step: T::lit(0.5) }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult<T> {
    pub x: Vec<T>,
    pub value: T,
    pub evals: usize,
    pub converged: bool,
}

/// Maximizes `f` over R^n with the Nelder–Mead simplex method.
/// Non-finite objective values are treated as `-inf`.
pub fn nelder_mead_max<T: Real, F: FnMut(&[T]) -> T>(
    mut f: F,
    start: &[T],
    opts: NelderMeadOptions<T>,
) -> NelderMeadResult<T> {
    let n = start.len();
    let mut eval = |x: &[T], count: &mut usize| {
        *count += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            T::neg_infinity()
        }
    };
    let mut evals = 0usize;
    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    let v0 = eval(start, &mut evals);
    simplex.push((start.to_vec(), v0));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] = x[i] + opts.initial_step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let (alpha, gamma, rho, sigma) = (T::one(), T::lit(2.0), T::lit(0.5), T::lit(0.5));
    let mut converged = false;
    while evals < opts.max_evals {
        // descending by value: best first
        simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if best.is_finite() && worst.is_finite() && (best - worst).abs() <= opts.f_tol {
            converged = true;
            break;
        }
        let mut centroid = vec![T::zero(); n];
        for (x, _) in simplex.iter().take(n) {
            for (c, &xi) in centroid.iter_mut().zip(x) {
                *c = *c + xi / T::of_usize(n);
            }
        }
        let towards = |coef: T, from: &[T]| -> Vec<T> {
            centroid.iter().zip(from).map(|(&c, &w)| c + coef * (c - w)).collect()
        };
        let worst_x = simplex[n].0.clone();
        let xr = towards(alpha, &worst_x);
        let fr = eval(&xr, &mut evals);
        if fr > simplex[0].1 {
            let xe = towards(gamma, &worst_x);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr > simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr > simplex[n].1 {
            let xc = towards(rho, &xr);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = towards(-rho, &worst_x);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc > simplex[n].1.max(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best_x = simplex[0].0.clone();
        for item in simplex.iter_mut().skip(1) {
            let x: Vec<T> = best_x.iter().zip(&item.0).map(|(&b, &xi)| b + sigma * (xi - b)).collect();
            let v = eval(&x, &mut evals);
            *item = (x, v);
        }
    }
    simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, value) = simplex.swap_remove(0);
    NelderMeadResult { x, value, evals, converged }
}
