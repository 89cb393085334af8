//! Extreme eigenvalues of symmetric linear operators.
//!
//! Runs Lanczos with full reorthogonalisation from a seeded start vector. The
//! extreme Ritz values of the tridiagonal projection are located by Sturm
//! bisection, and iteration stops once both Ritz pairs have residual
//! `beta_j * |y_last| <= tol * |theta|` (which bounds the eigenvalue error by
//! the same amount), the Krylov space becomes invariant, or it reaches the
//! full dimension. [`extreme_eigenvalues_batch`] advances many independent
//! recurrences in lockstep so that their products can share one call.

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

/// A symmetric map `R^d -> R^d`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64], out: &mut [f64]);
}

/// A family of symmetric maps `R^d -> R^d` applied together.
pub trait BatchOperator {
    fn dim(&self) -> usize;
    fn batch(&self) -> usize;
    /// Row `i` of `vs` is multiplied by operator `rows[i]`.
    fn apply_subset(&self, rows: &[usize], vs: ArrayView2<f64>) -> Array2<f64>;
}

/// Wraps a dense square matrix.
pub struct DenseOperator<'a>(pub &'a Array2<f64>);

impl LinearOperator for DenseOperator<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.0.rows()) {
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    /// Relative accuracy target for each extreme eigenvalue.
    pub tolerance: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { tolerance: 1e-6, max_iters: 1000, seed: 0x5eed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spectrum {
    pub min: f64,
    pub max: f64,
    /// Operator applications used.
    pub iterations: usize,
}

struct Lanczos {
    q: Vec<f64>,
    basis: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    steps: usize,
    tolerance: f64,
    result: Spectrum,
    done: bool,
}

impl Lanczos {
    fn new(d: usize, opts: &EigenOptions) -> Self {
        let mut rng = rng::seeded(opts.seed);
        let mut q: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n0 = norm(&q);
        q.iter_mut().for_each(|x| *x /= n0);
        let steps = d.min(opts.max_iters.max(1));
        Lanczos {
            q,
            basis: Vec::with_capacity(steps.min(256)),
            alpha: Vec::with_capacity(steps),
            beta: Vec::with_capacity(steps),
            steps,
            tolerance: opts.tolerance,
            result: Spectrum { min: 0.0, max: 0.0, iterations: 0 },
            done: false,
        }
    }

    /// Takes `w = A q` for the current vector and prepares the next one.
    fn absorb(&mut self, mut w: Vec<f64>) -> Result<()> {
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("operator produced a non-finite value"));
        }
        let j = self.alpha.len();
        let a = dot(&self.q, &w);
        axpy(-a, &self.q, &mut w);
        if let (Some(prev), Some(&b)) = (self.basis.last(), self.beta.last()) {
            axpy(-b, prev, &mut w);
        }
        self.basis.push(std::mem::take(&mut self.q));
        // two classical Gram-Schmidt passes keep the basis orthogonal to
        // working precision
        for _ in 0..2 {
            for v in &self.basis {
                let c = dot(v, &w);
                axpy(-c, v, &mut w);
            }
        }
        self.alpha.push(a);
        let b = norm(&w);

        let (lo, hi) = tridiagonal_extremes(&self.alpha, &self.beta);
        self.result = Spectrum { min: lo, max: hi, iterations: j + 1 };
        let scale = lo.abs().max(hi.abs());
        if (scale == 0.0 && b == 0.0) || b <= 1e-14 * scale.max(f64::MIN_POSITIVE) || j + 1 == self.steps {
            self.done = true;
            return Ok(());
        }
        let floor = 1e-3 * scale;
        let converged = [lo, hi].iter().all(|&theta| {
            let y_last = last_eigvec_component(&self.alpha, &self.beta, theta);
            b * y_last <= self.tolerance * theta.abs().max(floor)
        });
        if converged {
            self.done = true;
            return Ok(());
        }
        self.beta.push(b);
        self.q = w.iter().map(|x| x / b).collect();
        Ok(())
    }
}

pub fn extreme_eigenvalues(op: &dyn LinearOperator, opts: &EigenOptions) -> Result<Spectrum> {
    let d = op.dim();
    if d == 0 {
        return Err(Error::arg("operator of dimension 0"));
    }
    let mut state = Lanczos::new(d, opts);
    while !state.done {
        let mut w = vec![0.0; d];
        op.apply(&state.q, &mut w);
        state.absorb(w)?;
    }
    Ok(state.result)
}

/// [`extreme_eigenvalues`] for every operator of a batch; converged members
/// drop out of later products.
pub fn extreme_eigenvalues_batch(op: &dyn BatchOperator, opts: &EigenOptions) -> Result<Vec<Spectrum>> {
    let d = op.dim();
    if d == 0 {
        return Err(Error::arg("operator of dimension 0"));
    }
    let mut states: Vec<Lanczos> = (0..op.batch()).map(|_| Lanczos::new(d, opts)).collect();
    let mut active: Vec<usize> = (0..states.len()).collect();
    while !active.is_empty() {
        let mut vs = Array2::zeros((active.len(), d));
        for (row, &i) in active.iter().enumerate() {
            vs.row_mut(row).assign(&ndarray::ArrayView1::from(&states[i].q));
        }
        let ws = op.apply_subset(&active, vs.view());
        for (row, &i) in active.iter().enumerate() {
            states[i].absorb(ws.row(row).to_vec())?;
        }
        active.retain(|&i| !states[i].done);
    }
    Ok(states.into_iter().map(|s| s.result).collect())
}

/// `|u^T A v - v^T A u| / (|u| |A v|)` for seeded random `u`, `v`.
pub fn symmetry_defect(op: &dyn LinearOperator, seed: u64) -> f64 {
    let d = op.dim();
    let mut rng = rng::seeded(seed);
    let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (mut au, mut av) = (vec![0.0; d], vec![0.0; d]);
    op.apply(&u, &mut au);
    op.apply(&v, &mut av);
    let denom = norm(&u) * norm(&av).max(norm(&au));
    if denom == 0.0 {
        return 0.0;
    }
    (dot(&u, &av) - dot(&v, &au)).abs() / denom
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Number of eigenvalues of the symmetric tridiagonal `(alpha, beta)` that
/// are strictly below `x`.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for (i, &a) in alpha.iter().enumerate() {
        let off = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] };
        d = a - x - if i == 0 { 0.0 } else { off / d };
        if d == 0.0 {
            d = -f64::EPSILON * (a.abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

fn tridiagonal_extremes(alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let m = alpha.len();
    if m == 1 {
        return (alpha[0], alpha[0]);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..m {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < m { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    let bisect = |target: usize| {
        // smallest x with count(x) >= target, i.e. the target-th eigenvalue
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if sturm_count(alpha, beta, mid) >= target {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    };
    (bisect(1), bisect(m))
}

/// `|y_m|` for the unit eigenvector `y` of the tridiagonal matrix belonging to
/// the eigenvalue `theta`, by two steps of inverse iteration.
fn last_eigvec_component(alpha: &[f64], beta: &[f64], theta: f64) -> f64 {
    let m = alpha.len();
    if m == 1 {
        return 1.0;
    }
    let scale = alpha.iter().chain(beta).fold(theta.abs(), |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let shift = theta + 1e-12 * scale;
    let mut y = vec![1.0; m];
    for _ in 0..3 {
        y = tridiagonal_solve(alpha, beta, shift, &y, scale);
        let n = norm(&y);
        if !n.is_finite() || n == 0.0 {
            return 1.0;
        }
        y.iter_mut().for_each(|v| *v /= n);
    }
    y[m - 1].abs()
}

/// Solves `(T - shift I) x = rhs` by Gaussian elimination with partial
/// pivoting specialised to tridiagonal `T`.
fn tridiagonal_solve(alpha: &[f64], beta: &[f64], shift: f64, rhs: &[f64], scale: f64) -> Vec<f64> {
    let m = alpha.len();
    // row i holds (diag, super1, super2) after elimination
    let mut d: Vec<f64> = alpha.iter().map(|a| a - shift).collect();
    let mut u1: Vec<f64> = (0..m).map(|i| if i + 1 < m { beta[i] } else { 0.0 }).collect();
    let mut u2 = vec![0.0; m];
    let mut l: Vec<f64> = beta.to_vec();
    let mut b = rhs.to_vec();
    let tiny = f64::EPSILON * scale;
    for i in 0..m - 1 {
        if l[i].abs() > d[i].abs() {
            // swap rows i and i+1
            std::mem::swap(&mut d[i], &mut l[i]);
            let next_d = d[i + 1];
            d[i + 1] = u1[i];
            u1[i] = next_d;
            let next_u1 = u1[i + 1];
            u1[i + 1] = u2[i];
            u2[i] = next_u1;
            b.swap(i, i + 1);
        }
        if d[i] == 0.0 {
            d[i] = tiny;
        }
        let f = l[i] / d[i];
        d[i + 1] -= f * u1[i];
        u1[i + 1] -= f * u2[i];
        b[i + 1] -= f * b[i];
        l[i] = 0.0;
    }
    if d[m - 1] == 0.0 {
        d[m - 1] = tiny;
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = b[i];
        if i + 1 < m {
            s -= u1[i] * x[i + 1];
        }
        if i + 2 < m {
            s -= u2[i] * x[i + 2];
        }
        x[i] = s / d[i];
    }
    x
}
