//! Scalar convex-concave splines on an interval.

use rand::Rng as _;

use super::curvature::c_from_second_derivative_1d;
use crate::error::{Error, Result};
use crate::rng;

/// Grid used when `c` is derived from a second derivative.
pub const CURVATURE_GRID_POINTS: usize = 100_000;

/// Uniformly anchored tangent planes of `f ± c x^2` on `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ccs1D {
    pub c: f64,
    pub anchors: Vec<f64>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

/// Where the curvature constant comes from.
pub enum Curvature1D<'a> {
    SecondDerivative(&'a dyn Fn(f64) -> f64),
    Fixed(f64),
}

impl Ccs1D {
    /// Max-affine envelope of the convex planes, approximating `f + c x^2`.
    pub fn convex(&self, x: f64) -> f64 {
        self.planes(x, self.c).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Min-affine envelope of the concave planes, approximating `f - c x^2`.
    pub fn concave(&self, x: f64) -> f64 {
        self.planes(x, -self.c).fold(f64::INFINITY, f64::min)
    }

    pub fn eval(&self, x: f64) -> f64 {
        0.5 * (self.convex(x) + self.concave(x))
    }

    fn planes(&self, x: f64, c: f64) -> impl Iterator<Item = f64> + '_ {
        self.anchors.iter().zip(&self.values).zip(&self.slopes).map(move |((&a, &v), &s)| {
            let fpart = v + s * (x - a);
            let quad = 2.0 * a * x - a * a;
            fpart + c * quad
        })
    }

    /// Slope and offset for each convex and concave plane.
    pub fn parameter_count(&self) -> usize {
        2 * 2 * self.anchors.len()
    }

    /// Adds a tangent sample; anchors stay sorted.
    pub fn insert(&mut self, anchor: f64, value: f64, slope: f64) {
        let at = self.anchors.partition_point(|&a| a < anchor);
        self.anchors.insert(at, anchor);
        self.values.insert(at, value);
        self.slopes.insert(at, slope);
    }
}

/// Samples `n_planes` anchors uniformly over `[lo, hi]` (endpoints included;
/// a single plane sits at the midpoint). Slopes come from `derivative` when
/// given, otherwise from a central difference with step `(hi - lo) 1e-7`.
pub fn build_ccs_1d(
    f: &dyn Fn(f64) -> f64,
    derivative: Option<&dyn Fn(f64) -> f64>,
    curvature: Curvature1D<'_>,
    lo: f64,
    hi: f64,
    n_planes: usize,
) -> Result<Ccs1D> {
    if !(lo < hi) {
        return Err(Error::arg(format!("empty domain [{lo}, {hi}]")));
    }
    if n_planes == 0 {
        return Err(Error::arg("need at least one plane"));
    }
    let c = match curvature {
        Curvature1D::SecondDerivative(f2) => c_from_second_derivative_1d(f2, lo, hi, CURVATURE_GRID_POINTS)?,
        Curvature1D::Fixed(c) if c >= 0.0 && c.is_finite() => c,
        Curvature1D::Fixed(c) => return Err(Error::arg(format!("curvature constant {c} must be >= 0"))),
    };
    let anchors = uniform_grid(lo, hi, n_planes);
    let h = (hi - lo) * 1e-7;
    let slopes = anchors
        .iter()
        .map(|&x| match derivative {
            Some(d) => d(x),
            None => (f(x + h) - f(x - h)) / (2.0 * h),
        })
        .collect();
    let values = anchors.iter().map(|&x| f(x)).collect();
    Ok(Ccs1D { c, anchors, values, slopes, lo, hi })
}

/// `n` uniformly spaced points; endpoints included for `n >= 2`, midpoint for 1.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| if i + 1 == n { hi } else { lo + step * i as f64 }).collect()
        }
    }
}

/// `f(x) = Σ w_i exp(-(x - μ_i)^2 / (2 σ_i^2))`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sigmas: Vec<f64>,
}

/// Components with `σ` below this are redrawn.
pub const MIN_SIGMA: f64 = 1e-3;

impl GaussianMixture {
    pub fn value(&self, x: f64) -> f64 {
        self.terms(x).map(|(g, _, _)| g).sum()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.terms(x).map(|(g, d, s)| -g * d / (s * s)).sum()
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        self.terms(x).map(|(g, d, s)| g * (d * d - s * s) / (s * s * s * s)).sum()
    }

    /// Source parameter count (weight, mean, sigma per component).
    pub fn parameter_count(&self) -> usize {
        3 * self.weights.len()
    }

    /// `(w e^{..}, x - μ, σ)` per component.
    fn terms(&self, x: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights.iter().zip(&self.means).zip(&self.sigmas).map(move |((&w, &m), &s)| {
            let d = x - m;
            (w * (-d * d / (2.0 * s * s)).exp(), d, s)
        })
    }
}

/// Draws `μ ~ U[-3, 3]`, `σ ~ U[0, 0.2]` (redrawn below [`MIN_SIGMA`]) and
/// `w ~ U[-1, 1]` for each component, in that order.
pub fn gaussian_mixture_1d(n_components: usize, seed: u64) -> Result<GaussianMixture> {
    if n_components == 0 {
        return Err(Error::arg("mixture needs at least one component"));
    }
    let mut rng = rng::seeded(seed);
    let mut mix = GaussianMixture {
        weights: Vec::with_capacity(n_components),
        means: Vec::with_capacity(n_components),
        sigmas: Vec::with_capacity(n_components),
    };
    for _ in 0..n_components {
        let mean = rng.random_range(-3.0..=3.0);
        let mut sigma: f64 = rng.random_range(0.0..=0.2);
        while sigma < MIN_SIGMA {
            sigma = rng.random_range(0.0..=0.2);
        }
        let weight = rng.random_range(-1.0..=1.0);
        mix.means.push(mean);
        mix.sigmas.push(sigma);
        mix.weights.push(weight);
    }
    Ok(mix)
}

/// Dense-grid comparison of a 1-D CCS with its source function.
#[derive(Clone, Debug, PartialEq)]
pub struct GridError {
    pub max_abs: f64,
    pub at: f64,
}

pub fn max_grid_error(ccs: &Ccs1D, f: &dyn Fn(f64) -> f64, points: usize) -> GridError {
    let mut worst = GridError { max_abs: 0.0, at: ccs.lo };
    for x in uniform_grid(ccs.lo, ccs.hi, points) {
        let e = (ccs.eval(x) - f(x)).abs();
        if e > worst.max_abs {
            worst = GridError { max_abs: e, at: x };
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gauss(x: f64) -> f64 {
        (-x * x / 2.0).exp()
    }

    #[test]
    fn standard_bump() {
        let mix = GaussianMixture { weights: vec![1.0], means: vec![0.0], sigmas: vec![1.0] };
        for x in [-2.0, 0.0, 0.7] {
            assert!((mix.value(x) - gauss(x)).abs() < 1e-15);
            assert!((mix.second_derivative(x) - (x * x - 1.0) * gauss(x)).abs() < 1e-15);
            assert!((mix.derivative(x) + x * gauss(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_is_seeded_and_in_range() {
        let a = gaussian_mixture_1d(400, 17).unwrap();
        assert_eq!(a, gaussian_mixture_1d(400, 17).unwrap());
        assert_ne!(a, gaussian_mixture_1d(400, 18).unwrap());
        assert!(a.means.iter().all(|m| (-3.0..=3.0).contains(m)));
        assert!(a.sigmas.iter().all(|s| (MIN_SIGMA..=0.2).contains(s)));
        assert!(a.weights.iter().all(|w| (-1.0..=1.0).contains(w)));
        assert!(gaussian_mixture_1d(0, 1).is_err());
    }

    #[test]
    fn mixture_derivatives_match_differences() {
        let mix = gaussian_mixture_1d(20, 3).unwrap();
        let h = 1e-5;
        for x in [-1.0, 0.1, 2.3] {
            let d1 = (mix.value(x + h) - mix.value(x - h)) / (2.0 * h);
            let d2 = (mix.derivative(x + h) - mix.derivative(x - h)) / (2.0 * h);
            assert!((d1 - mix.derivative(x)).abs() < 1e-4 * (1.0 + d1.abs()));
            assert!((d2 - mix.second_derivative(x)).abs() < 1e-4 * (1.0 + d2.abs()));
        }
    }

    #[test]
    fn parameter_parity() {
        let mix = gaussian_mixture_1d(400, 0).unwrap();
        let ccs = build_ccs_1d(&|x| mix.value(x), None, Curvature1D::Fixed(1.0), -3.0, 3.0, 300).unwrap();
        assert_eq!(mix.parameter_count(), 1200);
        assert_eq!(ccs.parameter_count(), 1200);
    }

    #[test]
    fn single_plane_is_tangent_at_midpoint() {
        let f2 = |x: f64| (x * x - 1.0) * gauss(x);
        let ccs = build_ccs_1d(&gauss, None, Curvature1D::SecondDerivative(&f2), -2.0, 2.0, 1).unwrap();
        assert_eq!(ccs.anchors, vec![0.0]);
        for x in [-1.5, 0.0, 0.3, 2.0] {
            // even f: f'(0) = 0, so the tangent model is the constant f(0)
            assert!((ccs.eval(x) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_reconstruction() {
        let f2 = |x: f64| (x * x - 1.0) * gauss(x);
        let ccs = build_ccs_1d(&gauss, None, Curvature1D::SecondDerivative(&f2), -3.0, 3.0, 300).unwrap();
        assert_eq!(ccs.anchors.first(), Some(&-3.0));
        assert_eq!(ccs.anchors.last(), Some(&3.0));
        assert!(max_grid_error(&ccs, &gauss, 10_000).max_abs < 1e-3);
    }

    #[test]
    fn domain_errors() {
        assert!(build_ccs_1d(&gauss, None, Curvature1D::Fixed(1.0), 1.0, 1.0, 3).is_err());
        assert!(build_ccs_1d(&gauss, None, Curvature1D::Fixed(1.0), 0.0, 1.0, 0).is_err());
        assert!(build_ccs_1d(&gauss, None, Curvature1D::Fixed(-1.0), 0.0, 1.0, 2).is_err());
    }

    proptest! {
        #[test]
        fn refinement_never_lowers_convex_envelope(extra in -3.0f64..3.0, probe in -3.0f64..3.0) {
            let f2 = |x: f64| (x * x - 1.0) * gauss(x);
            let mut ccs = build_ccs_1d(&gauss, None, Curvature1D::SecondDerivative(&f2), -3.0, 3.0, 7).unwrap();
            let before = ccs.convex(probe);
            ccs.insert(extra, gauss(extra), -extra * gauss(extra));
            prop_assert!(ccs.convex(probe) >= before);
            prop_assert!(ccs.anchors.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
