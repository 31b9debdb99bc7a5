//! Holomorphy potentials, the functional `S`, the Euler–Lagrange potential
//! and the class invariants built from them.
//!
//! In the reduced model the invariant holomorphy potentials of the circle
//! field are exactly the affine functions of the moment coordinate, so the
//! Euler–Lagrange condition "ψ = f′(s)·h(φ) is a holomorphy potential" reads
//! "ψ is affine in x". The fourth-order operator whose kernel detects this is
//! `Lψ = (wΘ²ψ″)″ / w`.

pub mod catalog;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::{affine_projection, AffineFit, SampledFunction};
use crate::error::{Error, Result};
use crate::geometry::{
    class_constants, curvature_numerator, scalar_curvature, MetricProfile, ProfileGeometry,
    Tolerances,
};

pub use catalog::{CatalogError, FunctionDescriptor};

/// Complex-valued grid function, stored as real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSampledFunction {
    pub re: SampledFunction,
    pub im: SampledFunction,
}

impl ComplexSampledFunction {
    pub fn from_real(re: SampledFunction) -> Self {
        let im = SampledFunction::constant(re.len(), 0.0);
        ComplexSampledFunction { re, im }
    }

    pub fn from_values(values: &[Complex64]) -> Self {
        ComplexSampledFunction {
            re: SampledFunction::new(values.iter().map(|z| z.re).collect()),
            im: SampledFunction::new(values.iter().map(|z| z.im).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn get(&self, i: usize) -> Complex64 {
        Complex64::new(self.re[i], self.im[i])
    }

    pub fn is_real(&self) -> bool {
        self.im.values().iter().all(|v| *v == 0.0)
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.len()).fold(0.0, |m, i| m.max(self.get(i).norm()))
    }
}

/// `φ = scale·x + shift`: a holomorphy potential of `scale·X`.
///
/// The shift is fixed by the normalization `C_vol ∫ φ w dx = target`. Because
/// the weight `w dx` is the push-forward of `ωᵐ` for every metric in the
/// class, this normalization holds along any deformation without changing the
/// shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolomorphyPotential {
    pub scale: f64,
    pub shift: f64,
    pub target: f64,
}

impl HolomorphyPotential {
    /// Normalized potential for `scale·X` with the given target.
    pub fn normalized(geom: &ProfileGeometry, scale: f64, target: f64) -> Self {
        let x = geom.nodes().to_vec();
        let moment = geom.volume_integral(&x);
        let volume = geom.volume_integral(&vec![1.0; x.len()]);
        HolomorphyPotential {
            scale,
            shift: (target - scale * moment) / volume,
            target,
        }
    }

    /// The default normalization: shift zero, target `C_vol ∫ x w dx`.
    pub fn canonical(geom: &ProfileGeometry) -> Self {
        let x = geom.nodes().to_vec();
        HolomorphyPotential {
            scale: 1.0,
            shift: 0.0,
            target: geom.volume_integral(&x),
        }
    }

    /// The potential `αx + β`, with its own value as the normalization target.
    pub fn from_affine(geom: &ProfileGeometry, alpha: f64, beta: f64) -> Self {
        let vals: Vec<f64> = geom.nodes().iter().map(|x| alpha * x + beta).collect();
        HolomorphyPotential {
            scale: alpha,
            shift: beta,
            target: geom.volume_integral(&vals),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.scale * x + self.shift
    }

    pub fn sample(&self, geom: &ProfileGeometry) -> SampledFunction {
        geom.grid().sample(|x| self.value(x))
    }
}

/// Holomorphy potential of `X` normalized so that `∫ φ ωᵐ = target`.
pub fn normalize_potential(geom: &ProfileGeometry, target: f64) -> HolomorphyPotential {
    HolomorphyPotential::normalized(geom, 1.0, target)
}

fn domain_error(
    role: &'static str,
    geom: &ProfileGeometry,
    index: usize,
    value: Complex64,
) -> Error {
    Error::Domain {
        role,
        index,
        x: geom.nodes()[index],
        value: value.to_string(),
    }
}

fn eval_on_grid(
    role: &'static str,
    geom: &ProfileGeometry,
    args: &[f64],
    eval: impl Fn(Complex64) -> std::result::Result<Complex64, CatalogError>,
) -> Result<Vec<Complex64>> {
    args.iter()
        .enumerate()
        .map(|(i, &a)| {
            let z = Complex64::new(a, 0.0);
            eval(z).map_err(|_| domain_error(role, geom, i, z))
        })
        .collect()
}

/// `h(φ(x))` at the nodes.
pub fn h_of_phi(
    geom: &ProfileGeometry,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
) -> Result<Vec<Complex64>> {
    eval_on_grid("h", geom, phi.sample(geom).values(), |z| h.eval(z))
}

fn complex_volume_integral(geom: &ProfileGeometry, g: &[Complex64]) -> Complex64 {
    let re: Vec<f64> = g.iter().map(|z| z.re).collect();
    let im: Vec<f64> = g.iter().map(|z| z.im).collect();
    Complex64::new(geom.volume_integral(&re), geom.volume_integral(&im))
}

/// `S = C_vol ∫ f(s) h(φ) w dx`.
pub fn eval_s(
    profile: &MetricProfile,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
) -> Result<Complex64> {
    let s = scalar_curvature(profile)?;
    eval_s_with_curvature(profile.geometry(), &s, f, h, phi)
}

pub(crate) fn eval_s_with_curvature(
    geom: &ProfileGeometry,
    s: &SampledFunction,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
) -> Result<Complex64> {
    let fs = eval_on_grid("f", geom, s.values(), |z| f.eval(z))?;
    let hp = h_of_phi(geom, h, phi)?;
    let prod: Vec<Complex64> = fs.iter().zip(&hp).map(|(a, b)| a * b).collect();
    Ok(complex_volume_integral(geom, &prod))
}

/// The Euler–Lagrange potential `ψ = f′(s)·h(φ)`.
pub fn el_potential(
    profile: &MetricProfile,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
) -> Result<ComplexSampledFunction> {
    let s = scalar_curvature(profile)?;
    el_potential_with_curvature(profile.geometry(), &s, f, h, phi)
}

pub(crate) fn el_potential_with_curvature(
    geom: &ProfileGeometry,
    s: &SampledFunction,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
) -> Result<ComplexSampledFunction> {
    let fp = eval_on_grid("f", geom, s.values(), |z| f.derivative(z))?;
    let hp = h_of_phi(geom, h, phi)?;
    let psi: Vec<Complex64> = fp.iter().zip(&hp).map(|(a, b)| a * b).collect();
    Ok(ComplexSampledFunction::from_values(&psi))
}

/// `wΘ²ψ″` at the nodes.
fn flux(profile: &MetricProfile, psi: &[f64]) -> Vec<f64> {
    let geom = profile.geometry();
    let d2 = geom.grid().d2(psi);
    (0..psi.len())
        .map(|i| geom.weight()[i] * profile.theta()[i].powi(2) * d2[i])
        .collect()
}

/// `Lψ = (wΘ²ψ″)″ / w`.
pub fn lichnerowicz(profile: &MetricProfile, psi: &SampledFunction) -> Result<SampledFunction> {
    profile.ensure_admissible(&Tolerances::default())?;
    let geom = profile.geometry();
    let d2 = geom.grid().d2(psi.values());
    let g: Vec<f64> = (0..d2.len())
        .map(|i| profile.theta()[i].powi(2) * d2[i])
        .collect();
    Ok(geom.weighted_second_derivative(None, &g)?.map(|v| -v))
}

/// `C_vol ∫ ψ·Lψ·w dx`, computed as `C_vol ∫ ψ (wΘ²ψ″)″ dx`.
pub fn lichnerowicz_pairing(profile: &MetricProfile, psi: &SampledFunction) -> f64 {
    let geom = profile.geometry();
    let numer = geom.grid().d2(&flux(profile, psi.values()));
    let prod: Vec<f64> = numer.iter().zip(psi.values()).map(|(a, b)| a * b).collect();
    geom.vol_const() * geom.grid().integrate(&prod)
}

/// `C_vol ∫ wΘ²(ψ″)² dx`, the quadratic form whose zero set is the affine functions.
pub fn lichnerowicz_energy(profile: &MetricProfile, psi: &SampledFunction) -> f64 {
    let geom = profile.geometry();
    let d2 = geom.grid().d2(psi.values());
    let dens: Vec<f64> = (0..d2.len())
        .map(|i| geom.weight()[i] * profile.theta()[i].powi(2) * d2[i] * d2[i])
        .collect();
    geom.vol_const() * geom.grid().integrate(&dens)
}

/// Criticality report for an Euler–Lagrange potential.
#[derive(Debug, Clone, PartialEq)]
pub struct ELReport {
    pub psi: ComplexSampledFunction,
    pub alpha: Complex64,
    pub beta: Complex64,
    /// `√(C_vol ∫ |ψ − (αx+β)|² w dx)`.
    pub defect_affine: f64,
    /// `√(C_vol ∫ wΘ²|ψ″|² dx)`.
    pub defect_operator: f64,
    pub tolerance: f64,
    pub is_critical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ELReportDocument {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_imag: f64,
    pub beta_imag: f64,
    pub defect_affine: f64,
    pub defect_operator: f64,
    pub tolerance: f64,
    pub is_critical: bool,
}

impl ELReport {
    pub fn document(&self) -> ELReportDocument {
        ELReportDocument {
            alpha: self.alpha.re,
            beta: self.beta.re,
            alpha_imag: self.alpha.im,
            beta_imag: self.beta.im,
            defect_affine: self.defect_affine,
            defect_operator: self.defect_operator,
            tolerance: self.tolerance,
            is_critical: self.is_critical,
        }
    }
}

/// Projects real and imaginary parts of `psi` onto affine functions.
pub fn affine_projection_complex(
    geom: &ProfileGeometry,
    psi: &ComplexSampledFunction,
) -> Result<(AffineFit, AffineFit)> {
    let w = geom.weight().values();
    Ok((
        affine_projection(geom.grid(), psi.re.values(), w)?,
        affine_projection(geom.grid(), psi.im.values(), w)?,
    ))
}

/// Measures how far `psi` is from an invariant holomorphy potential.
pub fn holomorphy_defect(
    profile: &MetricProfile,
    psi: &ComplexSampledFunction,
    tol: &Tolerances,
) -> Result<ELReport> {
    profile.ensure_admissible(tol)?;
    holomorphy_defect_unchecked(profile, psi, tol)
}

pub(crate) fn holomorphy_defect_unchecked(
    profile: &MetricProfile,
    psi: &ComplexSampledFunction,
    tol: &Tolerances,
) -> Result<ELReport> {
    let geom = profile.geometry();
    let (re, im) = affine_projection_complex(geom, psi)?;
    let c = geom.vol_const();
    let defect_affine = (c * (re.residual_norm.powi(2) + im.residual_norm.powi(2))).sqrt();
    let defect_operator =
        (lichnerowicz_energy(profile, &psi.re) + lichnerowicz_energy(profile, &psi.im)).sqrt();
    let tolerance = tol.affine * (1.0 + psi.sup_norm());
    Ok(ELReport {
        psi: psi.clone(),
        alpha: Complex64::new(re.alpha, im.alpha),
        beta: Complex64::new(re.beta, im.beta),
        defect_affine,
        defect_operator,
        tolerance,
        is_critical: defect_affine <= tolerance,
    })
}

/// Futaki invariant `C_vol ∫ (s − s₀) φ w dx`.
pub fn futaki(profile: &MetricProfile, phi: &HolomorphyPotential) -> Result<f64> {
    profile.ensure_admissible(&Tolerances::default())?;
    let geom = profile.geometry();
    let s0 = class_constants(geom).s0;
    let sw = curvature_numerator(profile);
    let dens: Vec<f64> = (0..sw.len())
        .map(|i| (sw[i] - s0 * geom.weight()[i]) * phi.value(geom.nodes()[i]))
        .collect();
    Ok(geom.vol_const() * geom.grid().integrate(&dens))
}

/// `C_vol ∫ h(φ) w dx`, the class invariant `∫ h(φ) ωᵐ`.
pub fn equivariant_integral(
    profile: &MetricProfile,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
) -> Result<Complex64> {
    let geom = profile.geometry();
    let hp = h_of_phi(geom, h, phi)?;
    Ok(complex_volume_integral(geom, &hp))
}

/// `∫ s φ ωᵐ`, which equals the Futaki invariant plus `s₀ ∫ φ ωᵐ`.
pub fn total_scalar_moment(profile: &MetricProfile, phi: &HolomorphyPotential) -> Result<f64> {
    profile.ensure_admissible(&Tolerances::default())?;
    let geom = profile.geometry();
    let sw = curvature_numerator(profile);
    let dens: Vec<f64> = (0..sw.len())
        .map(|i| sw[i] * phi.value(geom.nodes()[i]))
        .collect();
    Ok(geom.vol_const() * geom.grid().integrate(&dens))
}

/// Numerical kernel of the discretized quadratic form `∫ wΘ²(ψ″)² dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub dimension: usize,
    pub largest_singular_value: f64,
    pub smallest_retained_singular_value: f64,
    /// Largest distance of the unit vectors along `1` and `x` from the kernel.
    pub span_residual: f64,
}

/// Kernel of `R = diag(√(C_vol q_i w_i Θ_i²)) · D₂`, whose Gram matrix is the
/// quadratic form; singular values below `rel_threshold · σ_max` count as zero.
pub fn quadratic_form_kernel(profile: &MetricProfile, rel_threshold: f64) -> KernelReport {
    let geom = profile.geometry();
    let grid = geom.grid();
    let n = geom.len();
    let d2 = grid.second_derivative_matrix();
    let mut r = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let scale = (geom.vol_const() * grid.quadrature_weights()[i] * geom.weight()[i]).sqrt()
            * profile.theta()[i].abs();
        for j in 0..n {
            r[(i, j)] = scale * d2[(i, j)];
        }
    }
    let svd = r.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.max();
    let cutoff = rel_threshold * smax;
    let kernel: Vec<usize> = (0..n)
        .filter(|&k| svd.singular_values[k] < cutoff)
        .collect();
    let smallest_retained = (0..n)
        .filter(|&k| svd.singular_values[k] >= cutoff)
        .map(|k| svd.singular_values[k])
        .fold(f64::INFINITY, f64::min);
    let probes = [vec![1.0; n], geom.nodes().to_vec()];
    let mut span_residual: f64 = 0.0;
    for probe in probes {
        let norm = probe.iter().map(|v| v * v).sum::<f64>().sqrt();
        let unit: Vec<f64> = probe.iter().map(|v| v / norm).collect();
        let mut proj = vec![0.0; n];
        for &k in &kernel {
            let coef: f64 = (0..n).map(|j| v_t[(k, j)] * unit[j]).sum();
            for j in 0..n {
                proj[j] += coef * v_t[(k, j)];
            }
        }
        let dist = unit
            .iter()
            .zip(&proj)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        span_residual = span_residual.max(dist);
    }
    KernelReport {
        dimension: kernel.len(),
        largest_singular_value: smax,
        smallest_retained_singular_value: smallest_retained,
        span_residual,
    }
}
