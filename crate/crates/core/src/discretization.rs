//! Spectral calculus on a Chebyshev–Gauss–Lobatto grid.
//!
//! Differentiation matrices use the barycentric formulas (first derivative
//! with the negative-sum diagonal, second derivative from the first via
//! `D2_ij = 2 D_ij (D_ii − 1/(x_i − x_j))`). Quadrature is Clenshaw–Curtis.
//! Nodes are stored in ascending order.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{round_profile, validate, MetricProfile, ProfileGeometry, Tolerances};

pub const MIN_NODES: usize = 8;

/// Values of a real function at the nodes of a [`SpectralGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampledFunction(Vec<f64>);

impl SampledFunction {
    pub fn new(values: Vec<f64>) -> Self {
        SampledFunction(values)
    }

    pub fn constant(n: usize, value: f64) -> Self {
        SampledFunction(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        SampledFunction(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.len(), other.len());
        SampledFunction(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<usize> for SampledFunction {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    First,
    Second,
}

/// Chebyshev–Gauss–Lobatto grid on `[x_lo, x_hi]`.
#[derive(Debug, Clone)]
pub struct SpectralGrid {
    x_lo: f64,
    x_hi: f64,
    nodes: Vec<f64>,
    bary: Vec<f64>,
    quad: Vec<f64>,
    d1: DMatrix<f64>,
    d2: DMatrix<f64>,
}

impl SpectralGrid {
    pub fn new(n: usize, x_lo: f64, x_hi: f64) -> Result<Self> {
        if n < MIN_NODES {
            return Err(Error::InvalidInput(format!(
                "grid needs at least {MIN_NODES} nodes, got {n}"
            )));
        }
        if !(x_lo < x_hi) || !x_lo.is_finite() || !x_hi.is_finite() {
            return Err(Error::InvalidInput(format!(
                "invalid interval [{x_lo}, {x_hi}]"
            )));
        }
        let deg = n - 1;
        let half = 0.5 * (x_hi - x_lo);
        let mid = 0.5 * (x_hi + x_lo);
        let theta: Vec<f64> = (0..n).map(|j| PI * j as f64 / deg as f64).collect();

        // ξ_j = −cos θ_j written as a sine so the grid is exactly symmetric.
        let xi: Vec<f64> = (0..n)
            .map(|j| (PI * (2.0 * j as f64 - deg as f64) / (2.0 * deg as f64)).sin())
            .collect();
        let mut nodes: Vec<f64> = xi.iter().map(|&t| mid + half * t).collect();
        nodes[0] = x_lo;
        nodes[deg] = x_hi;

        let bary: Vec<f64> = (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == deg {
                    0.5 * sign
                } else {
                    sign
                }
            })
            .collect();

        // ξ_i − ξ_j = 2 sin((θ_i+θ_j)/2) sin((θ_i−θ_j)/2)
        let diff = |i: usize, j: usize| {
            2.0 * (0.5 * (theta[i] + theta[j])).sin() * (0.5 * (theta[i] - theta[j])).sin()
        };

        let mut d1 = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                if i != j {
                    let v = (bary[j] / bary[i]) / diff(i, j);
                    d1[(i, j)] = v;
                    row_sum += v;
                }
            }
            d1[(i, i)] = -row_sum;
        }
        let mut d2 = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                if i != j {
                    let v = 2.0 * d1[(i, j)] * (d1[(i, i)] - 1.0 / diff(i, j));
                    d2[(i, j)] = v;
                    row_sum += v;
                }
            }
            d2[(i, i)] = -row_sum;
        }
        d1 /= half;
        d2 /= half * half;

        let quad = clenshaw_curtis_weights(deg)
            .into_iter()
            .map(|w| w * half)
            .collect();

        Ok(SpectralGrid {
            x_lo,
            x_hi,
            nodes,
            bary,
            quad,
            d1,
            d2,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn quadrature_weights(&self) -> &[f64] {
        &self.quad
    }

    pub fn first_derivative_matrix(&self) -> &DMatrix<f64> {
        &self.d1
    }

    pub fn second_derivative_matrix(&self) -> &DMatrix<f64> {
        &self.d2
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> SampledFunction {
        SampledFunction(self.nodes.iter().map(|&x| f(x)).collect())
    }

    pub fn differentiate(&self, f: &SampledFunction, order: DerivativeOrder) -> SampledFunction {
        let m = match order {
            DerivativeOrder::First => &self.d1,
            DerivativeOrder::Second => &self.d2,
        };
        SampledFunction(apply(m, f.values()))
    }

    pub fn d1(&self, f: &[f64]) -> Vec<f64> {
        apply(&self.d1, f)
    }

    pub fn d2(&self, f: &[f64]) -> Vec<f64> {
        apply(&self.d2, f)
    }

    /// First derivative at one node (a single row of the operator).
    pub fn d1_at(&self, f: &[f64], i: usize) -> f64 {
        self.d1.row(i).iter().zip(f).map(|(a, b)| a * b).sum()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        self.quad.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Barycentric interpolation of grid values at an arbitrary point.
    pub fn interpolate(&self, f: &[f64], x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&xj, &bj), &fj) in self.nodes.iter().zip(&self.bary).zip(f) {
            let d = x - xj;
            if d == 0.0 {
                return fj;
            }
            let t = bj / d;
            num += t * fj;
            den += t;
        }
        num / den
    }

    /// Maps a node to the reference interval `[−1, 1]`.
    pub fn to_reference(&self, x: f64) -> f64 {
        (2.0 * x - self.x_lo - self.x_hi) / (self.x_hi - self.x_lo)
    }
}

fn apply(m: &DMatrix<f64>, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    debug_assert_eq!(m.ncols(), n);
    (0..m.nrows())
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                acc += m[(i, j)] * f[j];
            }
            acc
        })
        .collect()
}

/// Clenshaw–Curtis weights on `[−1, 1]` for the `deg + 1` Lobatto nodes.
fn clenshaw_curtis_weights(deg: usize) -> Vec<f64> {
    let n = deg;
    let nf = n as f64;
    let mut w = vec![0.0; n + 1];
    let mut v = vec![1.0; n.saturating_sub(1)];
    let theta = |j: usize| PI * j as f64 / nf;
    if n.is_multiple_of(2) {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[n] = w[0];
        for k in 1..n / 2 {
            let kf = k as f64;
            for (idx, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta(idx + 1)).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (idx, vi) in v.iter_mut().enumerate() {
            *vi -= (nf * theta(idx + 1)).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[n] = w[0];
        for k in 1..=(n - 1) / 2 {
            let kf = k as f64;
            for (idx, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta(idx + 1)).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for (idx, vi) in v.into_iter().enumerate() {
        w[idx + 1] = 2.0 * vi / nf;
    }
    w
}

/// Weighted least-squares fit `ψ ≈ αx + β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub alpha: f64,
    pub beta: f64,
    /// `√(∫ |ψ − (αx+β)|² w dx)` at the minimizer.
    pub residual_norm: f64,
}

/// Projects `psi` onto affine functions in the `L²(w dx)` inner product.
pub fn affine_projection(grid: &SpectralGrid, psi: &[f64], weight: &[f64]) -> Result<AffineFit> {
    let x = grid.nodes();
    let q = grid.quadrature_weights();
    let mut m0 = 0.0;
    let mut m1 = 0.0;
    for i in 0..grid.len() {
        if weight[i] < 0.0 {
            return Err(Error::InvalidInput(format!(
                "negative weight {} at node {i}",
                weight[i]
            )));
        }
        let mu = q[i] * weight[i];
        m0 += mu;
        m1 += mu * x[i];
    }
    if !(m0 > 0.0) {
        return Err(Error::DegenerateWeight { index: 0, x: x[0] });
    }
    // Center x for a well-conditioned 2×2 system.
    let xc = m1 / m0;
    let (mut s_yy, mut s_y, mut s_xy) = (0.0, 0.0, 0.0);
    let mut s_xx = 0.0;
    for i in 0..grid.len() {
        let mu = q[i] * weight[i];
        let dx = x[i] - xc;
        s_xx += mu * dx * dx;
        s_y += mu * psi[i];
        s_xy += mu * dx * psi[i];
        s_yy += mu * psi[i] * psi[i];
    }
    let span = grid.x_hi() - grid.x_lo();
    if !(s_xx > 1e-14 * m0 * span * span) {
        return Err(Error::DegenerateWeight { index: 0, x: x[0] });
    }
    let alpha = s_xy / s_xx;
    let mean = s_y / m0;
    let beta = mean - alpha * xc;
    let mut resid = 0.0;
    for i in 0..grid.len() {
        let r = psi[i] - alpha * x[i] - beta;
        resid += q[i] * weight[i] * r * r;
    }
    let _ = s_yy;
    Ok(AffineFit {
        alpha,
        beta,
        residual_norm: resid.max(0.0).sqrt(),
    })
}

/// Uniform variate in `[0, 1)` from the top 53 bits of a SplitMix64 draw.
pub(crate) fn unit_uniform(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Number of Chebyshev coefficients in the random perturbation `q`.
pub const RANDOM_PROFILE_TERMS: usize = 7;
pub const MAX_HALVINGS: usize = 20;

/// Evaluates `Σ c_k T_k(ξ)` by the three-term recurrence.
pub fn chebyshev_sum(coeffs: &[f64], xi: f64) -> f64 {
    let (mut t_prev, mut t_cur) = (1.0, xi);
    let mut acc = 0.0;
    for (k, &c) in coeffs.iter().enumerate() {
        let t = match k {
            0 => 1.0,
            1 => xi,
            _ => {
                let t_next = 2.0 * xi * t_cur - t_prev;
                t_prev = t_cur;
                t_cur = t_next;
                t_next
            }
        };
        acc += c * t;
    }
    acc
}

/// Draws the perturbation coefficients used by [`random_admissible_profile`].
///
/// The generator is SplitMix64 seeded with `seed`; each coefficient is
/// `amplitude · (2U − 1)` where `U = (next_u64 >> 11) · 2⁻⁵³`, drawn in
/// order `c_0, …, c_6`.
pub fn random_coefficients(seed: u64, amplitude: f64) -> [f64; RANDOM_PROFILE_TERMS] {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut c = [0.0; RANDOM_PROFILE_TERMS];
    for ck in c.iter_mut() {
        *ck = amplitude * (2.0 * unit_uniform(&mut rng) - 1.0);
    }
    c
}

/// `(x − x_lo)² (x_hi − x)²`, which keeps endpoint values and slopes fixed.
pub fn boundary_bump(grid: &SpectralGrid) -> SampledFunction {
    let (a, b) = (grid.x_lo(), grid.x_hi());
    grid.sample(|x| (x - a).powi(2) * (b - x).powi(2))
}

/// Round profile plus `B(x)·q(x)` with seeded random Chebyshev `q`.
///
/// If interior positivity fails, the perturbation is halved up to
/// [`MAX_HALVINGS`] times before giving up.
pub fn random_admissible_profile(
    geom: &Arc<ProfileGeometry>,
    seed: u64,
    amplitude: f64,
) -> Result<MetricProfile> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidInput(format!(
            "amplitude must be finite and non-negative, got {amplitude}"
        )));
    }
    let round = round_profile(geom)?;
    if amplitude == 0.0 {
        return Ok(round);
    }
    let grid = geom.grid();
    let coeffs = random_coefficients(seed, amplitude);
    let bump = boundary_bump(grid);
    let q: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| chebyshev_sum(&coeffs, grid.to_reference(x)))
        .collect();
    let tol = Tolerances::default();
    let mut scale = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let theta: Vec<f64> = (0..grid.len())
            .map(|i| round.theta()[i] + scale * bump[i] * q[i])
            .collect();
        let candidate = MetricProfile::new(geom.clone(), SampledFunction::new(theta))?;
        if validate(&candidate, &tol).is_empty() {
            return Ok(candidate);
        }
        scale *= 0.5;
    }
    let last = MetricProfile::new(
        geom.clone(),
        SampledFunction::new(
            (0..grid.len())
                .map(|i| round.theta()[i] + scale * bump[i] * q[i])
                .collect(),
        ),
    )?;
    Err(Error::Admissibility(validate(&last, &tol)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> SpectralGrid {
        SpectralGrid::new(n, -1.0, 1.0).unwrap()
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(SpectralGrid::new(7, -1.0, 1.0).is_err());
        assert!(SpectralGrid::new(8, 1.0, 1.0).is_err());
    }

    #[test]
    fn nodes_ascend_and_hit_endpoints() {
        let g = SpectralGrid::new(17, 0.0, 1.0).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.nodes()[16], 1.0);
        assert!(g.nodes().windows(2).all(|p| p[0] < p[1]));
        assert!((g.nodes()[8] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn second_derivative_of_cubic() {
        let g = grid(129);
        let f = g.sample(|x| x * x * x);
        let d = g.differentiate(&f, DerivativeOrder::Second);
        for (i, &x) in g.nodes().iter().enumerate() {
            assert!((d[i] - 6.0 * x).abs() < 1e-7, "node {i}: {}", d[i]);
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        for n in [8, 33, 129, 200] {
            let g = SpectralGrid::new(n, -0.3, 2.0).unwrap();
            let f = SampledFunction::constant(n, 3.7);
            let d = g.differentiate(&f, DerivativeOrder::First);
            assert!(
                d.sup_norm() < 5e-16 * (n as f64).powi(2) * 3.7,
                "n={n}: {}",
                d.sup_norm()
            );
            let d2 = g.differentiate(&f, DerivativeOrder::Second);
            // D₂ roundoff grows like n⁴
            let bound = 5e-16 * (n as f64).powi(4) * 3.7;
            assert!(d2.sup_norm() < bound, "n={n}: {}", d2.sup_norm());
        }
    }

    #[test]
    fn quadrature_closed_forms() {
        let g = grid(129);
        assert!((g.integrate(&vec![1.0; 129]) - 2.0).abs() < 1e-12);
        assert!(g.integrate(g.sample(|x| x).values()).abs() < 1e-15);
        assert!((g.integrate(g.sample(|x| x * x).values()) - 2.0 / 3.0).abs() < 1e-14);
        let odd = SpectralGrid::new(10, 0.0, 3.0).unwrap();
        assert!((odd.integrate(&[1.0; 10]) - 3.0).abs() < 1e-12);
        assert!(
            (odd.integrate(odd.sample(|x| x.powi(5)).values()) - 3f64.powi(6) / 6.0).abs() < 1e-10
        );
    }

    #[test]
    fn exact_on_top_degree_polynomials() {
        for n in [9, 64, 129, 200] {
            let g = SpectralGrid::new(n, 0.0, 1.0).unwrap();
            let p = (n - 1) as i32;
            let f = g.sample(|x| x.powi(p));
            let d1 = g.differentiate(&f, DerivativeOrder::First);
            let d2 = g.differentiate(&f, DerivativeOrder::Second);
            let pf = p as f64;
            let e1 = g.sample(|x| pf * x.powi(p - 1));
            let e2 = g.sample(|x| pf * (pf - 1.0) * x.powi(p - 2));
            let err1 = d1.zip_with(&e1, |a, b| a - b).sup_norm() / e1.sup_norm();
            let err2 = d2.zip_with(&e2, |a, b| a - b).sup_norm() / e2.sup_norm();
            assert!(err1 < 1e-9, "n={n} first: {err1:e}");
            assert!(err2 < 1e-9, "n={n} second: {err2:e}");
        }
    }

    #[test]
    fn spectral_convergence_for_smooth_function() {
        let mut prev = f64::INFINITY;
        for n in [8, 12, 16, 20, 24] {
            let g = grid(n);
            let f = g.sample(|x| (2.0 * x).sin() * x.exp());
            let d = g.differentiate(&f, DerivativeOrder::First);
            let exact = g.sample(|x| (2.0 * (2.0 * x).cos() + (2.0 * x).sin()) * x.exp());
            let err = d.zip_with(&exact, |a, b| a - b).sup_norm();
            assert!(
                err < prev / 10.0 || err < 1e-12,
                "n={n}: {err:e} vs {prev:e}"
            );
            prev = err;
        }
        assert!(prev < 1e-10);
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let g = SpectralGrid::new(20, -1.0, 2.0).unwrap();
        let f = g.sample(|x| 1.0 - 2.0 * x + x.powi(7));
        for &x in &[-0.93, 0.0, 0.5, 1.77] {
            let v = g.interpolate(f.values(), x);
            assert!((v - (1.0 - 2.0 * x + x.powi(7))).abs() < 1e-11);
        }
        assert_eq!(g.interpolate(f.values(), g.nodes()[3]), f[3]);
    }

    #[test]
    fn affine_projection_examples() {
        let g = grid(129);
        let w = vec![1.0; 129];
        let fit = affine_projection(&g, g.sample(|x| 3.0 * x + 1.0).values(), &w).unwrap();
        assert!((fit.alpha - 3.0).abs() < 1e-13);
        assert!((fit.beta - 1.0).abs() < 1e-13);
        assert!(fit.residual_norm < 1e-12);

        // Legendre: x² = 1/3 + (2/3)P₂, residual² = ∫(x² − 1/3)² = 8/45.
        let fit = affine_projection(&g, g.sample(|x| x * x).values(), &w).unwrap();
        assert!(fit.alpha.abs() < 1e-14);
        assert!((fit.beta - 1.0 / 3.0).abs() < 1e-14);
        assert!((fit.residual_norm - (8.0f64 / 45.0).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn affine_projection_rejects_zero_weight() {
        let g = grid(16);
        let err = affine_projection(&g, &[1.0; 16], &[0.0; 16]).unwrap_err();
        assert!(matches!(err, Error::DegenerateWeight { .. }));
    }

    #[test]
    fn chebyshev_sum_matches_cosine_form() {
        let c = [0.3, -1.0, 0.25, 2.0, -0.5, 0.1, 0.7];
        for &xi in &[-1.0, -0.4, 0.0, 0.9, 1.0] {
            let th: f64 = f64::acos(xi);
            let direct: f64 = c
                .iter()
                .enumerate()
                .map(|(k, ck)| ck * (k as f64 * th).cos())
                .sum();
            assert!((chebyshev_sum(&c, xi) - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn splitmix_reference_sequence() {
        // First outputs of SplitMix64 seeded with 0.
        let mut rng = SplitMix64::seed_from_u64(0);
        assert_eq!(rng.next_u64(), 0xe220a8397b1dcdaf);
        assert_eq!(rng.next_u64(), 0x6e789e6aa1b965f4);
        let c = random_coefficients(7, 0.3);
        assert!(c.iter().all(|v| v.abs() <= 0.3));
        assert_eq!(c, random_coefficients(7, 0.3));
    }
}
