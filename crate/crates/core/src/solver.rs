//! Critical metrics of `S` and the iteration over vector fields.
//!
//! The Euler–Lagrange condition says `f′(s)·h(φ) = αx + β`. When `f′` is
//! invertible this fixes the curvature, `s = (f′)⁻¹((αx+β)/h(φ))`, and the
//! profile follows from `(wΘ)″ = A − w·s` with `Θ(x_lo) = 0`,
//! `Θ′(x_lo) = slope_lo`. Newton's method on `(α, β)` then drives the two
//! conditions at `x_hi` to zero.
//!
//! When `f′` is constant and `h(φ)` is affine every metric in the class is
//! critical. The solver reports [`SolveOutcome::EveryMetricCritical`] and
//! returns the extremal representative of the class (the metric whose scalar
//! curvature is affine), with `(α, β)` the coefficients of `s`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::discretization::{boundary_bump, chebyshev_sum, SampledFunction};
use crate::error::{Error, Result};
use crate::geometry::{
    class_constants, scalar_curvature_unchecked, validate, MetricProfile, ProfileGeometry,
    Tolerances,
};
use crate::potentials::{
    el_potential_with_curvature, h_of_phi, holomorphy_defect_unchecked, CatalogError,
    ComplexSampledFunction, ELReport, FunctionDescriptor, HolomorphyPotential,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Newton stops once both boundary mismatches are below this.
    pub mismatch_tol: f64,
    pub jacobian_step: f64,
    pub tol: Tolerances,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 50,
            mismatch_tol: 1e-10,
            jacobian_step: 1e-7,
            tol: Tolerances::default(),
        }
    }
}

const POLISH_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveOutcome {
    Critical,
    EveryMetricCritical,
}

#[derive(Debug, Clone)]
pub struct CriticalSolveResult {
    pub profile: MetricProfile,
    pub alpha: f64,
    pub beta: f64,
    /// Criticality report of the potential that was made affine: `ψ` in the
    /// generic case, `s` for [`SolveOutcome::EveryMetricCritical`].
    pub report: ELReport,
    pub iterations: usize,
    pub converged: bool,
    pub outcome: SolveOutcome,
    pub residual_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDocument {
    pub outcome: SolveOutcome,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual_trace: Vec<f64>,
    pub el_report: crate::potentials::ELReportDocument,
}

impl CriticalSolveResult {
    pub fn document(&self) -> SolveDocument {
        SolveDocument {
            outcome: self.outcome,
            alpha: self.alpha,
            beta: self.beta,
            iterations: self.iterations,
            converged: self.converged,
            residual_trace: self.residual_trace.clone(),
            el_report: self.report.document(),
        }
    }
}

/// What the solver makes affine.
#[derive(Debug, Clone)]
enum Selection {
    /// `f′(s)·Re h(φ)`; holds `Re h(φ)` at the nodes.
    Potential(Vec<f64>),
    /// `s` itself, for the case where every metric is critical.
    Extremal,
}

fn selection(
    geom: &ProfileGeometry,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
) -> Result<Selection> {
    let hv = h_of_phi(geom, h, phi)?;
    let h_re: Vec<f64> = hv.iter().map(|z| z.re).collect();
    if f.derivative_is_constant() {
        let hc = ComplexSampledFunction::from_values(&hv);
        let (re, im) = crate::potentials::affine_projection_complex(geom, &hc)?;
        let scale = 1.0 + hc.sup_norm();
        if re.residual_norm.hypot(im.residual_norm) <= 1e-12 * scale {
            return Ok(Selection::Extremal);
        }
        return Err(Error::NoCriticalMetric(format!(
            "f′ is constant, so ψ = f′·h(φ) does not depend on the metric, and h(φ) is not affine \
             (defect {:e})",
            re.residual_norm.hypot(im.residual_norm)
        )));
    }
    if !f.has_derivative_inverse() {
        return Err(Error::InvalidInput(format!(
            "f′ of `{f}` has no monotone inverse; use residual minimization"
        )));
    }
    let hmax = h_re.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (i, w) in h_re.windows(2).enumerate() {
        if w[0].abs() <= 1e-12 * hmax || w[0].signum() != w[1].signum() {
            return Err(Error::SingularPotential { x: geom.nodes()[i] });
        }
    }
    if h_re[h_re.len() - 1].abs() <= 1e-12 * hmax {
        return Err(Error::SingularPotential { x: geom.x_hi() });
    }
    Ok(Selection::Potential(h_re))
}

/// Collocation solve of `(wΘ)″ = A − w·s` from the left endpoint.
struct Shooter<'a> {
    geom: &'a ProfileGeometry,
    lu: LU<f64, Dyn, Dyn>,
}

impl<'a> Shooter<'a> {
    fn new(geom: &'a ProfileGeometry) -> Result<Self> {
        let n = geom.len();
        if !(geom.weight()[n - 1] > 0.0) {
            return Err(Error::UnsupportedGeometry(
                "shooting needs a positive weight at x_hi".into(),
            ));
        }
        let grid = geom.grid();
        let mut m: DMatrix<f64> = grid.second_derivative_matrix().clone();
        for j in 0..n {
            m[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
            m[(n - 1, j)] = grid.first_derivative_matrix()[(0, j)];
        }
        Ok(Shooter { geom, lu: m.lu() })
    }

    /// Returns `Θ` and the mismatches `(Θ(x_hi), Θ′(x_hi) − slope_hi)`.
    fn shoot(&self, s: &[f64]) -> Result<(Vec<f64>, [f64; 2])> {
        let geom = self.geom;
        let n = geom.len();
        let w = geom.weight().values();
        let a = geom.base_term().values();
        let mut rhs = DVector::<f64>::zeros(n);
        for i in 1..n - 1 {
            rhs[i] = a[i] - w[i] * s[i];
        }
        rhs[0] = 0.0;
        rhs[n - 1] = w[0] * geom.slope_lo();
        let v = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidInput("singular collocation matrix".into()))?;
        let wmax = geom.weight().sup_norm();
        let theta: Vec<f64> = (0..n)
            .map(|i| {
                if w[i] > 1e-14 * wmax {
                    v[i] / w[i]
                } else {
                    0.0
                }
            })
            .collect();
        let vs = v.as_slice();
        let grid = geom.grid();
        let whi = w[n - 1];
        let theta_hi = vs[n - 1] / whi;
        let dw_hi = grid.d1_at(w, n - 1);
        let dtheta_hi = (grid.d1_at(vs, n - 1) - dw_hi * theta_hi) / whi;
        Ok((theta, [theta_hi, dtheta_hi - geom.slope_hi()]))
    }
}

fn curvature_for(
    geom: &ProfileGeometry,
    f: &FunctionDescriptor,
    sel: &Selection,
    alpha: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    let x = geom.nodes();
    match sel {
        Selection::Extremal => Ok(x.iter().map(|&x| alpha * x + beta).collect()),
        Selection::Potential(h_re) => x
            .iter()
            .zip(h_re)
            .map(|(&x, &hv)| {
                let y = (alpha * x + beta) / hv;
                f.derivative_inverse(y).map_err(|e| match e {
                    CatalogError::NotInvertible => {
                        Error::InvalidInput(format!("f′ of `{f}` is not invertible"))
                    }
                    _ => Error::Range { x, value: y },
                })
            })
            .collect(),
    }
}

fn inf_norm(m: &[f64; 2]) -> f64 {
    m[0].abs().max(m[1].abs())
}

fn default_init(geom: &ProfileGeometry, f: &FunctionDescriptor, sel: &Selection) -> (f64, f64) {
    let s0 = class_constants(geom).s0;
    match sel {
        Selection::Extremal => (0.0, s0),
        Selection::Potential(_) => match f.derivative_real(s0) {
            Ok(v) if v.is_finite() => (0.0, v),
            _ => (0.0, 1.0),
        },
    }
}

/// Solves the Euler–Lagrange condition by shooting on `(α, β)`.
pub fn solve_critical(
    geom: &Arc<ProfileGeometry>,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
    init: Option<(f64, f64)>,
    opts: &SolverOptions,
) -> Result<CriticalSolveResult> {
    let sel = selection(geom, f, h, phi)?;
    let shooter = Shooter::new(geom)?;
    let eval = |p: [f64; 2]| -> Result<(Vec<f64>, [f64; 2])> {
        let s = curvature_for(geom, f, &sel, p[0], p[1])?;
        shooter.shoot(&s)
    };
    let (a0, b0) = init.unwrap_or_else(|| default_init(geom, f, &sel));
    let mut p = [a0, b0];
    let (mut theta, mut mis) = eval(p)?;
    let mut trace = vec![inf_norm(&mis)];
    let mut iterations = 0;
    // a few extra steps past the tolerance, kept only while they help
    let mut polish = POLISH_STEPS;
    loop {
        let within = inf_norm(&mis) < opts.mismatch_tol;
        if within {
            if polish == 0 {
                break;
            }
            polish -= 1;
        }
        if iterations >= opts.max_iter {
            if within {
                break;
            }
            return Err(Error::Convergence {
                iterations,
                last: inf_norm(&mis),
                trace,
            });
        }
        // forward-difference Jacobian of the mismatches
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let dk = opts.jacobian_step * p[k].abs().max(1.0);
            let mut q = p;
            q[k] += dk;
            let (_, mq) = match eval(q) {
                Ok(r) => r,
                Err(_) => {
                    q[k] = p[k] - dk;
                    let (t, m) = eval(q)?;
                    (t, [2.0 * mis[0] - m[0], 2.0 * mis[1] - m[1]])
                }
            };
            jac[0][k] = (mq[0] - mis[0]) / dk;
            jac[1][k] = (mq[1] - mis[1]) / dk;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let jnorm = jac.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(det.abs() > 1e-14 * jnorm * jnorm) {
            if within {
                break;
            }
            return Err(Error::Convergence {
                iterations,
                last: inf_norm(&mis),
                trace,
            });
        }
        let step = [
            -(jac[1][1] * mis[0] - jac[0][1] * mis[1]) / det,
            -(-jac[1][0] * mis[0] + jac[0][0] * mis[1]) / det,
        ];
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let q = [p[0] + lambda * step[0], p[1] + lambda * step[1]];
            if let Ok((t, m)) = eval(q) {
                if inf_norm(&m) < inf_norm(&mis) {
                    accepted = Some((q, t, m));
                    break;
                }
            }
            lambda *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((q, t, m)) => {
                p = q;
                theta = t;
                mis = m;
                trace.push(inf_norm(&mis));
            }
            None if within => break,
            None => {
                return Err(Error::Convergence {
                    iterations,
                    last: inf_norm(&mis),
                    trace,
                })
            }
        }
    }

    let profile = MetricProfile::new(geom.clone(), SampledFunction::new(theta))?;
    let violations = validate(&profile, &opts.tol);
    if !violations.is_empty() {
        return Err(Error::Admissibility(violations));
    }
    let report = selection_report(&profile, f, h, phi, &sel, &opts.tol)?;
    let outcome = match sel {
        Selection::Extremal => SolveOutcome::EveryMetricCritical,
        Selection::Potential(_) => SolveOutcome::Critical,
    };
    Ok(CriticalSolveResult {
        converged: report.is_critical,
        profile,
        alpha: p[0],
        beta: p[1],
        report,
        iterations,
        outcome,
        residual_trace: trace,
    })
}

fn selection_report(
    profile: &MetricProfile,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
    sel: &Selection,
    tol: &Tolerances,
) -> Result<ELReport> {
    let s = scalar_curvature_unchecked(profile)?;
    let psi = match sel {
        Selection::Extremal => ComplexSampledFunction::from_real(s),
        Selection::Potential(_) => el_potential_with_curvature(profile.geometry(), &s, f, h, phi)?,
    };
    holomorphy_defect_unchecked(profile, &psi, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Degree of the polynomial `q` in `Θ = Θ_init + B·q`.
    pub degree: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub tol: Tolerances,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            degree: 6,
            max_iter: 100,
            grad_tol: 1e-6,
            tol: Tolerances::default(),
        }
    }
}

/// Residual vector and Jacobian of `½ defect_affine²` in the bump basis.
pub struct DefectModel<'a> {
    geom: &'a Arc<ProfileGeometry>,
    f: &'a FunctionDescriptor,
    h_re: Option<Vec<f64>>,
    base: Vec<f64>,
    basis: Vec<Vec<f64>>,
    dcurv: Vec<Vec<f64>>,
    sqrt_mu: Vec<f64>,
}

pub struct DefectEval {
    pub profile: MetricProfile,
    pub residual: Vec<f64>,
    pub jacobian: DMatrix<f64>,
}

impl DefectEval {
    pub fn objective(&self) -> f64 {
        0.5 * self.residual.iter().map(|r| r * r).sum::<f64>()
    }

    pub fn gradient(&self) -> DVector<f64> {
        self.jacobian.transpose() * DVector::from_column_slice(&self.residual)
    }
}

impl<'a> DefectModel<'a> {
    pub fn new(
        geom: &'a Arc<ProfileGeometry>,
        f: &'a FunctionDescriptor,
        h: &FunctionDescriptor,
        phi: &HolomorphyPotential,
        init: &MetricProfile,
        degree: usize,
    ) -> Result<Self> {
        let h_re = match selection_for_minimizer(geom, f, h, phi)? {
            Selection::Extremal => None,
            Selection::Potential(v) => Some(v),
        };
        let grid = geom.grid();
        let bump = boundary_bump(grid);
        let mut basis = Vec::with_capacity(degree + 1);
        let mut dcurv = Vec::with_capacity(degree + 1);
        for k in 0..=degree {
            let mut coeffs = vec![0.0; k + 1];
            coeffs[k] = 1.0;
            let b: Vec<f64> = (0..geom.len())
                .map(|i| bump[i] * chebyshev_sum(&coeffs, grid.to_reference(grid.nodes()[i])))
                .collect();
            dcurv.push(geom.weighted_second_derivative(None, &b)?.into_values());
            basis.push(b);
        }
        let sqrt_mu = (0..geom.len())
            .map(|i| (geom.vol_const() * grid.quadrature_weights()[i] * geom.weight()[i]).sqrt())
            .collect();
        Ok(DefectModel {
            geom,
            f,
            h_re,
            base: init.theta().values().to_vec(),
            basis,
            dcurv,
            sqrt_mu,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn profile(&self, c: &[f64]) -> Result<MetricProfile> {
        let theta: Vec<f64> = (0..self.base.len())
            .map(|i| {
                self.base[i]
                    + c.iter()
                        .zip(&self.basis)
                        .map(|(ck, b)| ck * b[i])
                        .sum::<f64>()
            })
            .collect();
        MetricProfile::new(self.geom.clone(), SampledFunction::new(theta))
    }

    /// Removes the weighted affine part of `v`.
    fn project_out_affine(&self, v: &mut [f64]) -> Result<()> {
        let fit = crate::discretization::affine_projection(
            self.geom.grid(),
            v,
            self.geom.weight().values(),
        )?;
        for (vi, x) in v.iter_mut().zip(self.geom.nodes()) {
            *vi -= fit.alpha * x + fit.beta;
        }
        Ok(())
    }

    pub fn evaluate(&self, c: &[f64]) -> Result<DefectEval> {
        let profile = self.profile(c)?;
        let s = scalar_curvature_unchecked(&profile)?;
        let n = self.geom.len();
        let mut psi = vec![0.0; n];
        let mut dpsi = vec![0.0; n];
        for i in 0..n {
            let (v, d) = match &self.h_re {
                None => (s[i], 1.0),
                Some(h) => {
                    let fp = self.f.derivative_real(s[i]);
                    let fpp = self.f.second_derivative_real(s[i]);
                    match (fp, fpp) {
                        (Ok(a), Ok(b)) => (a * h[i], b * h[i]),
                        _ => {
                            return Err(Error::Domain {
                                role: "f",
                                index: i,
                                x: self.geom.nodes()[i],
                                value: s[i].to_string(),
                            })
                        }
                    }
                }
            };
            psi[i] = v;
            dpsi[i] = d;
        }
        self.project_out_affine(&mut psi)?;
        let residual: Vec<f64> = psi.iter().zip(&self.sqrt_mu).map(|(a, m)| a * m).collect();
        let mut jacobian = DMatrix::<f64>::zeros(n, self.dim());
        for (k, ds) in self.dcurv.iter().enumerate() {
            let mut col: Vec<f64> = (0..n).map(|i| dpsi[i] * ds[i]).collect();
            self.project_out_affine(&mut col)?;
            for i in 0..n {
                jacobian[(i, k)] = col[i] * self.sqrt_mu[i];
            }
        }
        Ok(DefectEval {
            profile,
            residual,
            jacobian,
        })
    }
}

fn selection_for_minimizer(
    geom: &ProfileGeometry,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
) -> Result<Selection> {
    if f.derivative_is_constant() {
        return selection(geom, f, h, phi);
    }
    let hv = h_of_phi(geom, h, phi)?;
    Ok(Selection::Potential(hv.iter().map(|z| z.re).collect()))
}

/// Minimizes `defect_affine²` over `Θ = Θ_init + B(x)·q(x)` by Gauss–Newton
/// with an Armijo backtracking line search.
pub fn residual_minimize(
    geom: &Arc<ProfileGeometry>,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
    init: &MetricProfile,
    opts: &MinimizeOptions,
) -> Result<CriticalSolveResult> {
    init.ensure_admissible(&opts.tol)?;
    let model = DefectModel::new(geom, f, h, phi, init, opts.degree)?;
    let mut c = vec![0.0; model.dim()];
    let mut cur = model.evaluate(&c)?;
    let mut grad = cur.gradient();
    let mut trace = vec![grad.norm()];
    let mut iterations = 0;
    while grad.norm() >= opts.grad_tol {
        if iterations >= opts.max_iter {
            return Err(Error::Convergence {
                iterations,
                last: grad.norm(),
                trace,
            });
        }
        let svd = cur.jacobian.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let rhs = -DVector::from_column_slice(&cur.residual);
        let step = svd
            .solve(&rhs, 1e-12 * smax)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        let slope = grad.dot(&step);
        let phi0 = cur.objective();
        let mut lambda = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let trial: Vec<f64> = c
                .iter()
                .zip(step.iter())
                .map(|(a, d)| a + lambda * d)
                .collect();
            let ok = model
                .profile(&trial)
                .ok()
                .filter(|p| validate(p, &opts.tol).is_empty());
            if ok.is_some() {
                if let Ok(ev) = model.evaluate(&trial) {
                    if ev.objective() <= phi0 + 1e-4 * lambda * slope {
                        next = Some((trial, ev));
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        iterations += 1;
        match next {
            Some((trial, ev)) => {
                c = trial;
                cur = ev;
                grad = cur.gradient();
                trace.push(grad.norm());
            }
            None => {
                // no decrease possible at this precision
                if cur.objective() <= 1e-30 {
                    break;
                }
                return Err(Error::Convergence {
                    iterations,
                    last: grad.norm(),
                    trace,
                });
            }
        }
    }
    let sel = selection_for_minimizer(geom, f, h, phi)?;
    let report = selection_report(&cur.profile, f, h, phi, &sel, &opts.tol)?;
    let outcome = match sel {
        Selection::Extremal => SolveOutcome::EveryMetricCritical,
        Selection::Potential(_) => SolveOutcome::Critical,
    };
    Ok(CriticalSolveResult {
        converged: report.is_critical,
        alpha: report.alpha.re,
        beta: report.beta.re,
        profile: cur.profile,
        report,
        iterations,
        outcome,
        residual_trace: trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Continued,
    Converged,
    ZeroField,
    Failed,
}

pub const ZERO_FIELD_TOL: f64 = 1e-10;
pub const STEP_CONVERGENCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStep {
    pub index: usize,
    /// The potential `scale·x + shift` this step started from.
    pub potential_scale: f64,
    pub potential_shift: f64,
    pub status: StepStatus,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub outcome: Option<SolveOutcome>,
    pub defect_affine: Option<f64>,
    pub theta_max: Option<f64>,
    pub scalar_min: Option<f64>,
    pub scalar_max: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub steps: Vec<IterationStep>,
    /// Every solved `ψ_i` lies in `span{1, x}`, so each new field is a
    /// multiple of the initial one.
    pub proportional_to_initial_field: bool,
}

/// Runs the field iteration: solve for a critical metric, read off
/// `ψ_i = α_i x + β_i`, and use it as the next potential.
pub fn iterate(
    geom: &Arc<ProfileGeometry>,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi0: &HolomorphyPotential,
    max_steps: usize,
    opts: &SolverOptions,
) -> Result<IterationTrace> {
    if max_steps == 0 {
        return Err(Error::InvalidInput("max_steps must be at least 1".into()));
    }
    let mut steps: Vec<IterationStep> = Vec::new();
    let mut phi = *phi0;
    let mut proportional = true;
    let mut prev: Option<(f64, f64)> = None;
    for index in 0..max_steps {
        let mut step = IterationStep {
            index,
            potential_scale: phi.scale,
            potential_shift: phi.shift,
            status: StepStatus::Failed,
            alpha: None,
            beta: None,
            outcome: None,
            defect_affine: None,
            theta_max: None,
            scalar_min: None,
            scalar_max: None,
            error: None,
        };
        let solved = solve_critical(geom, f, h, &phi, None, opts);
        let res = match solved {
            Ok(r) => r,
            Err(e) => {
                step.error = Some(e.to_string());
                steps.push(step);
                break;
            }
        };
        let s = scalar_curvature_unchecked(&res.profile)?;
        step.alpha = Some(res.alpha);
        step.beta = Some(res.beta);
        step.outcome = Some(res.outcome);
        step.defect_affine = Some(res.report.defect_affine);
        step.theta_max = Some(
            res.profile
                .theta()
                .values()
                .iter()
                .copied()
                .fold(f64::MIN, f64::max),
        );
        step.scalar_min = Some(s.values().iter().copied().fold(f64::MAX, f64::min));
        step.scalar_max = Some(s.values().iter().copied().fold(f64::MIN, f64::max));
        proportional &= res.report.is_critical && res.report.alpha.im == 0.0;
        step.status = if res.alpha.abs() < ZERO_FIELD_TOL {
            StepStatus::ZeroField
        } else if prev.is_some_and(|(a, b)| {
            (a - res.alpha).abs() < STEP_CONVERGENCE_TOL
                && (b - res.beta).abs() < STEP_CONVERGENCE_TOL
        }) {
            StepStatus::Converged
        } else {
            StepStatus::Continued
        };
        let halt = step.status != StepStatus::Continued;
        steps.push(step);
        if halt {
            break;
        }
        prev = Some((res.alpha, res.beta));
        phi = HolomorphyPotential::from_affine(geom, res.alpha, res.beta);
    }
    Ok(IterationTrace {
        steps,
        proportional_to_initial_field: proportional,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::random_admissible_profile;
    use crate::geometry::{make_cp1_geometry, round_profile};
    use std::f64::consts::PI;

    #[test]
    fn extremal_case_recovers_round_metric() {
        let g = make_cp1_geometry();
        let phi = HolomorphyPotential::canonical(&g);
        let r = solve_critical(
            &g,
            &FunctionDescriptor::Identity,
            &FunctionDescriptor::constant(1.0),
            &phi,
            None,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(r.outcome, SolveOutcome::EveryMetricCritical);
        assert!(r.alpha.abs() < 1e-8 && (r.beta - 2.0).abs() < 1e-8);
        let round = round_profile(&g).unwrap();
        assert!(r.profile.sup_distance(&round) < 1e-8);
    }

    #[test]
    fn calabi_case_is_generic_and_matches() {
        let g = make_cp1_geometry();
        let phi = HolomorphyPotential::canonical(&g);
        let f = FunctionDescriptor::scaled(0.5, FunctionDescriptor::Power(2.0));
        let r = solve_critical(
            &g,
            &f,
            &FunctionDescriptor::constant(1.0),
            &phi,
            None,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(r.outcome, SolveOutcome::Critical);
        assert!(r.alpha.abs() < 1e-8 && (r.beta - 2.0).abs() < 1e-8);
        assert!(r.converged);
    }

    #[test]
    fn constant_f_with_nonaffine_h_has_no_critical_metric() {
        let g = make_cp1_geometry();
        let phi = HolomorphyPotential::canonical(&g);
        let err = solve_critical(
            &g,
            &FunctionDescriptor::Identity,
            &FunctionDescriptor::Power(2.0),
            &phi,
            None,
            &SolverOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NoCriticalMetric(_)));
    }

    #[test]
    fn vanishing_h_is_singular() {
        let g = make_cp1_geometry();
        let phi = HolomorphyPotential::canonical(&g);
        let err = solve_critical(
            &g,
            &FunctionDescriptor::Exponential,
            &FunctionDescriptor::Identity,
            &phi,
            None,
            &SolverOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::SingularPotential { .. }), "{err:?}");
    }

    #[test]
    fn exponential_case_converges() {
        let g = make_cp1_geometry();
        let phi = crate::potentials::normalize_potential(&g, 8.0 * PI);
        assert!((phi.shift - 2.0).abs() < 1e-12);
        let r = solve_critical(
            &g,
            &FunctionDescriptor::Exponential,
            &FunctionDescriptor::Identity,
            &phi,
            None,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(r.converged, "{:?}", r.report.document());
        // exp(−Θ″)·(x + 2) is affine
        let s = scalar_curvature_unchecked(&r.profile).unwrap();
        let psi: Vec<f64> = (0..g.len())
            .map(|i| s[i].exp() * (g.nodes()[i] + 2.0))
            .collect();
        let fit =
            crate::discretization::affine_projection(g.grid(), &psi, g.weight().values()).unwrap();
        assert!(fit.residual_norm < 1e-8);
    }

    #[test]
    fn minimizer_gradient_matches_finite_differences() {
        let g = make_cp1_geometry();
        let init = random_admissible_profile(&g, 5, 0.2).unwrap();
        let phi = crate::potentials::normalize_potential(&g, 8.0 * PI);
        let f = FunctionDescriptor::Exponential;
        let h = FunctionDescriptor::Identity;
        let model = DefectModel::new(&g, &f, &h, &phi, &init, 4).unwrap();
        let c = vec![0.01, -0.02, 0.03, 0.0, 0.01];
        let ev = model.evaluate(&c).unwrap();
        let grad = ev.gradient();
        let eps = 1e-6;
        for k in 0..c.len() {
            let mut cp = c.clone();
            cp[k] += eps;
            let mut cm = c.clone();
            cm[k] -= eps;
            let fd = (model.evaluate(&cp).unwrap().objective()
                - model.evaluate(&cm).unwrap().objective())
                / (2.0 * eps);
            assert!(
                (fd - grad[k]).abs() < 1e-6 * (1.0 + grad[k].abs()),
                "k={k}: {fd} vs {}",
                grad[k]
            );
        }
    }

    #[test]
    fn minimizer_recovers_round_metric() {
        let g = make_cp1_geometry();
        let phi = HolomorphyPotential::canonical(&g);
        let init = random_admissible_profile(&g, 7, 0.3).unwrap();
        let r = residual_minimize(
            &g,
            &FunctionDescriptor::Identity,
            &FunctionDescriptor::constant(1.0),
            &phi,
            &init,
            &MinimizeOptions::default(),
        )
        .unwrap();
        let round = round_profile(&g).unwrap();
        assert!(r.profile.sup_distance(&round) < 1e-6);
        assert!(r.converged);

        let again = residual_minimize(
            &g,
            &FunctionDescriptor::Identity,
            &FunctionDescriptor::constant(1.0),
            &phi,
            &round,
            &MinimizeOptions::default(),
        )
        .unwrap();
        assert_eq!(again.iterations, 0);
    }

    #[test]
    fn minimizer_surfaces_domain_errors() {
        let g = make_cp1_geometry();
        let phi = HolomorphyPotential::canonical(&g);
        let init = MetricProfile::new(
            g.clone(),
            g.grid()
                .sample(|x| (1.0 - x * x) + 0.8 * (1.0 - x * x).powi(2)),
        )
        .unwrap();
        let err = residual_minimize(
            &g,
            &FunctionDescriptor::LogGuarded,
            &FunctionDescriptor::constant(1.0),
            &phi,
            &init,
            &MinimizeOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain { role: "f", .. }), "{err:?}");
    }

    #[test]
    fn iteration_examples() {
        let g = make_cp1_geometry();
        let phi = HolomorphyPotential::canonical(&g);
        let opts = SolverOptions::default();
        let t = iterate(
            &g,
            &FunctionDescriptor::Identity,
            &FunctionDescriptor::constant(1.0),
            &phi,
            5,
            &opts,
        )
        .unwrap();
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.steps[0].status, StepStatus::ZeroField);
        assert!(t.proportional_to_initial_field);

        let t1 = iterate(
            &g,
            &FunctionDescriptor::Exponential,
            &FunctionDescriptor::Identity,
            &crate::potentials::normalize_potential(&g, 8.0 * PI),
            1,
            &opts,
        )
        .unwrap();
        assert_eq!(t1.steps.len(), 1);
    }
}
