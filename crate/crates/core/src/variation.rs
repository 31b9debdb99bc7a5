//! Deformations inside the Kähler class and their first-order effect.
//!
//! A deformation direction is a real invariant function `u(x)`. Finite
//! deformations act on the symplectic (Legendre-dual) potential,
//! `G_t = G − t·u`, so `Θ_t = 1/G_t″ = Θ / (1 − tΘu″)`. This keeps the
//! endpoint zeros and slopes of `Θ` exact for every `t`, and the moment
//! coordinate of each orbit is unchanged, which is why holomorphy potentials
//! keep their normalization constant along the path.
//!
//! The first-order dictionary is
//!
//! ```text
//! δΘ         = κ_Θ · Θ² u″                (fixed x)
//! δφ         = κ_φ · Θ u′                 (fixed point of the manifold)
//! δ(ωᵐ)/ωᵐ   = κ_Θ · (wΘu′)′ / w          (fixed point)
//! δs         = −(w δΘ)″ / w               (fixed x)
//! δS         = −κ_Θ C_vol ∫ wΘ² ψ″ u″ dx
//! ```
//!
//! The convention constants `κ_Θ`, `κ_φ` are pinned by [`pin_conventions`]
//! against the transport above and the first-order invariance of
//! `∫ h(φ) ωᵐ`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::{random_admissible_profile, SampledFunction};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{
    scalar_curvature, scalar_curvature_unchecked, MetricProfile, ProfileGeometry, Tolerances,
};
use crate::potentials::{
    el_potential, eval_s_with_curvature, h_of_phi, FunctionDescriptor, HolomorphyPotential,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub kappa_theta: f64,
    pub kappa_phi: f64,
}

/// Values selected by [`pin_conventions`]; a test re-derives them.
pub const PINNED_CONVENTIONS: Conventions = Conventions {
    kappa_theta: 1.0,
    kappa_phi: 1.0,
};

pub const CANDIDATE_KAPPAS: [f64; 4] = [1.0, -1.0, 0.5, -0.5];

pub const DEFAULT_STEP: f64 = 1e-3;

/// A Kähler-potential direction `u` together with the convention constants.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationPath {
    pub u: SampledFunction,
    pub conventions: Conventions,
}

impl DeformationPath {
    pub fn new(u: SampledFunction) -> Self {
        DeformationPath {
            u,
            conventions: PINNED_CONVENTIONS,
        }
    }

    pub fn with_conventions(u: SampledFunction, conventions: Conventions) -> Self {
        DeformationPath { u, conventions }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrder {
    pub d_theta: SampledFunction,
    pub d_phi: SampledFunction,
    /// Relative change of the volume form at a fixed point.
    pub d_volume: SampledFunction,
}

fn check_len(geom: &ProfileGeometry, u: &SampledFunction) -> Result<()> {
    if u.len() != geom.len() || !u.is_finite() {
        return Err(Error::InvalidInput(format!(
            "deformation has {} values (finite: {}) for a {}-node grid",
            u.len(),
            u.is_finite(),
            geom.len()
        )));
    }
    Ok(())
}

pub fn first_order(profile: &MetricProfile, path: &DeformationPath) -> Result<FirstOrder> {
    profile.ensure_admissible(&Tolerances::default())?;
    let geom = profile.geometry();
    check_len(geom, &path.u)?;
    let grid = geom.grid();
    let Conventions {
        kappa_theta,
        kappa_phi,
    } = path.conventions;
    let du = grid.d1(path.u.values());
    let d2u = grid.d2(path.u.values());
    let theta = profile.theta().values();
    let n = geom.len();
    let d_theta: Vec<f64> = (0..n)
        .map(|i| kappa_theta * theta[i] * theta[i] * d2u[i])
        .collect();
    let d_phi: Vec<f64> = (0..n).map(|i| kappa_phi * theta[i] * du[i]).collect();
    let flux: Vec<f64> = (0..n).map(|i| theta[i] * du[i]).collect();
    let d_volume = geom
        .weighted_first_derivative(&flux)?
        .map(|v| kappa_theta * v);
    Ok(FirstOrder {
        d_theta: SampledFunction::new(d_theta),
        d_phi: SampledFunction::new(d_phi),
        d_volume,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaS {
    /// Variation of `s` at fixed moment coordinate.
    pub fixed_x: SampledFunction,
    /// Variation of `s` at a fixed point of the manifold.
    pub fixed_point: SampledFunction,
}

pub fn delta_s(profile: &MetricProfile, path: &DeformationPath) -> Result<DeltaS> {
    let fo = first_order(profile, path)?;
    let geom = profile.geometry();
    let grid = geom.grid();
    let fixed_x = geom.weighted_second_derivative(None, fo.d_theta.values())?;
    let s = scalar_curvature(profile)?;
    let ds = grid.d1(s.values());
    let fixed_point = SampledFunction::new(
        (0..geom.len())
            .map(|i| fixed_x[i] + fo.d_phi[i] * ds[i])
            .collect(),
    );
    Ok(DeltaS {
        fixed_x,
        fixed_point,
    })
}

/// `δS = −κ_Θ C_vol ∫ wΘ² ψ″ u″ dx` with `ψ = f′(s) h(φ)`.
pub fn delta_functional_analytic(
    profile: &MetricProfile,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
    path: &DeformationPath,
) -> Result<Complex64> {
    let geom = profile.geometry();
    check_len(geom, &path.u)?;
    let psi = el_potential(profile, f, h, phi)?;
    let grid = geom.grid();
    let d2u = grid.d2(path.u.values());
    let pair = |g: &SampledFunction| {
        let d2g = grid.d2(g.values());
        let dens: Vec<f64> = (0..geom.len())
            .map(|i| geom.weight()[i] * profile.theta()[i].powi(2) * d2g[i] * d2u[i])
            .collect();
        -path.conventions.kappa_theta * geom.vol_const() * grid.integrate(&dens)
    };
    Ok(Complex64::new(pair(&psi.re), pair(&psi.im)))
}

/// Moves `t` along the deformation `G_t = G − t·u`.
///
/// The potential is returned unchanged: its normalization constant does not
/// move along the path.
pub fn transport(
    profile: &MetricProfile,
    phi: &HolomorphyPotential,
    path: &DeformationPath,
    t: f64,
) -> Result<(MetricProfile, HolomorphyPotential)> {
    let geom = profile.geometry();
    check_len(geom, &path.u)?;
    if t == 0.0 {
        return Ok((profile.clone(), *phi));
    }
    let d2u = geom.grid().d2(path.u.values());
    let theta = profile.theta().values();
    let n = geom.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let denom = 1.0 - t * theta[i] * d2u[i];
        let interior = i != 0 && i != n - 1;
        if interior && !(denom > 0.0) {
            return Err(Error::PathExitsClass { t });
        }
        out.push(theta[i] / denom);
    }
    let moved = MetricProfile::new(geom.clone(), SampledFunction::new(out))?;
    if !crate::geometry::validate(&moved, &Tolerances::default()).is_empty() {
        return Err(Error::PathExitsClass { t });
    }
    Ok((moved, *phi))
}

fn eval_s_unchecked(
    profile: &MetricProfile,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
) -> Result<Complex64> {
    let s = scalar_curvature_unchecked(profile)?;
    eval_s_with_curvature(profile.geometry(), &s, f, h, phi)
}

/// Central difference of `S` along the transport.
pub fn delta_functional_numeric(
    profile: &MetricProfile,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
    path: &DeformationPath,
    step: f64,
) -> Result<Complex64> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "step must be positive, got {step}"
        )));
    }
    let (plus, phi_p) = transport(profile, phi, path, step)?;
    let (minus, phi_m) = transport(profile, phi, path, -step)?;
    let sp = eval_s_unchecked(&plus, f, h, &phi_p)?;
    let sm = eval_s_unchecked(&minus, f, h, &phi_m)?;
    Ok((sp - sm) / (2.0 * step))
}

/// Richardson-extrapolated derivative from steps `step` and `step/2`.
pub fn delta_functional_richardson(
    profile: &MetricProfile,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
    path: &DeformationPath,
    step: f64,
) -> Result<Complex64> {
    let coarse = delta_functional_numeric(profile, f, h, phi, path, step)?;
    let fine = delta_functional_numeric(profile, f, h, phi, path, 0.5 * step)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// First-order change of `∫ h(φ) ωᵐ` computed at fixed points:
/// `C_vol ∫ [h′(φ)·δφ + h(φ)·δ(ωᵐ)/ωᵐ] w dx`. Zero for every `h` and `u`
/// exactly when the convention constants are consistent.
pub fn equivariant_first_variation(
    profile: &MetricProfile,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
    path: &DeformationPath,
) -> Result<Complex64> {
    let fo = first_order(profile, path)?;
    let geom = profile.geometry();
    let phis = phi.sample(geom);
    let hv = h_of_phi(geom, h, phi)?;
    let mut re = Vec::with_capacity(geom.len());
    let mut im = Vec::with_capacity(geom.len());
    for i in 0..geom.len() {
        let hp = h
            .derivative(Complex64::new(phis[i], 0.0))
            .map_err(|_| Error::Domain {
                role: "h′",
                index: i,
                x: geom.nodes()[i],
                value: phis[i].to_string(),
            })?;
        let v = hp * (phi.scale * fo.d_phi[i]) + hv[i] * fo.d_volume[i];
        re.push(v.re);
        im.push(v.im);
    }
    Ok(Complex64::new(
        geom.volume_integral(&re),
        geom.volume_integral(&im),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub steps: Vec<f64>,
    pub analytic: f64,
    pub numeric: Vec<f64>,
    pub errors: Vec<f64>,
    /// `log10(e_k / e_{k+1}) / log10(h_k / h_{k+1})` for consecutive steps.
    pub orders: Vec<f64>,
    pub min_order: f64,
}

/// Compares numeric and analytic `δS` over a set of steps.
///
/// Steps are evaluated through `exec` and reported in ascending-step order
/// regardless of the order given.
pub fn convergence_study(
    profile: &MetricProfile,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
    path: &DeformationPath,
    steps: &[f64],
    exec: Execution,
) -> Result<ConvergenceStudy> {
    let mut steps = steps.to_vec();
    steps.sort_by(|a, b| b.total_cmp(a));
    let analytic = delta_functional_analytic(profile, f, h, phi, path)?;
    let numeric: Vec<Complex64> = exec
        .map(&steps, |&st| {
            delta_functional_numeric(profile, f, h, phi, path, st)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = numeric.iter().map(|v| (v - analytic).norm()).collect();
    let orders: Vec<f64> = (0..steps.len().saturating_sub(1))
        .map(|k| (errors[k] / errors[k + 1]).log10() / (steps[k] / steps[k + 1]).log10())
        .collect();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ConvergenceStudy {
        steps,
        analytic: analytic.re,
        numeric: numeric.iter().map(|v| v.re).collect(),
        errors,
        orders,
        min_order,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub conventions: Conventions,
    /// Largest `|d/dt ∫ h(φ) ωᵐ|` over the test set.
    pub invariance_residual: f64,
    /// Largest relative gap between numeric and analytic `δS`.
    pub variation_gap: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinningReport {
    pub pinned: Option<Conventions>,
    pub candidates: Vec<CandidateScore>,
}

pub const INVARIANCE_TOL: f64 = 1e-8;
pub const VARIATION_GAP_TOL: f64 = 1e-4;

/// Test directions used for pinning and for the invariance checks.
pub fn test_directions(geom: &ProfileGeometry) -> Vec<(String, SampledFunction)> {
    let g = geom.grid();
    let mid = 0.5 * (geom.x_lo() + geom.x_hi());
    vec![
        ("x^2".to_string(), g.sample(|x| x * x)),
        ("x^3".to_string(), g.sample(|x| x * x * x)),
        ("exp(x)/4".to_string(), g.sample(|x| 0.25 * (x - mid).exp())),
    ]
}

/// Selects the unique `(κ_Θ, κ_φ)` from [`CANDIDATE_KAPPAS`] for which
/// (i) `∫ h(φ) ωᵐ` has zero first variation for `h ∈ {id, pow:2}` and
/// (ii) the analytic `δS` matches the central difference along the transport.
pub fn pin_conventions(geom: &Arc<ProfileGeometry>, exec: Execution) -> Result<PinningReport> {
    let mut profiles = vec![random_admissible_profile(geom, 3, 0.3)?];
    profiles.push(random_admissible_profile(geom, 17, 0.2)?);
    let dirs = test_directions(geom);
    let phi = HolomorphyPotential::canonical(geom);
    let hs = [FunctionDescriptor::Identity, FunctionDescriptor::Power(2.0)];
    let f = FunctionDescriptor::Exponential;
    let h_var = FunctionDescriptor::Exponential;

    let mut pairs = Vec::new();
    for &kt in &CANDIDATE_KAPPAS {
        for &kp in &CANDIDATE_KAPPAS {
            pairs.push(Conventions {
                kappa_theta: kt,
                kappa_phi: kp,
            });
        }
    }
    let scores: Vec<Result<CandidateScore>> = exec.map(&pairs, |&conv| {
        let mut inv: f64 = 0.0;
        let mut gap: f64 = 0.0;
        for p in &profiles {
            for (_, u) in &dirs {
                let path = DeformationPath::with_conventions(u.clone(), conv);
                for h in &hs {
                    inv = inv.max(equivariant_first_variation(p, h, &phi, &path)?.norm());
                }
                let ana = delta_functional_analytic(p, &f, &h_var, &phi, &path)?;
                let num = delta_functional_richardson(p, &f, &h_var, &phi, &path, DEFAULT_STEP)?;
                gap = gap.max((ana - num).norm() / num.norm().max(1e-12));
            }
        }
        Ok(CandidateScore {
            conventions: conv,
            invariance_residual: inv,
            variation_gap: gap,
            accepted: inv < INVARIANCE_TOL && gap < VARIATION_GAP_TOL,
        })
    });
    let candidates: Vec<CandidateScore> = scores.into_iter().collect::<Result<_>>()?;
    let accepted: Vec<&CandidateScore> = candidates.iter().filter(|c| c.accepted).collect();
    let pinned = (accepted.len() == 1).then(|| accepted[0].conventions);
    Ok(PinningReport { pinned, candidates })
}

/// Canonical CP¹ symplectic potential `½[(1+x)log(1+x) + (1−x)log(1−x)]`,
/// whose second derivative is `1/(1 − x²)`.
pub fn cp1_symplectic_potential(x: f64) -> f64 {
    let xlogx = |y: f64| if y == 0.0 { 0.0 } else { y * y.ln() };
    0.5 * (xlogx(1.0 + x) + xlogx(1.0 - x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_cp1_geometry, round_profile};

    #[test]
    fn first_order_examples() {
        let g = make_cp1_geometry();
        let round = round_profile(&g).unwrap();
        let constant = DeformationPath::new(SampledFunction::constant(g.len(), 2.5));
        let fo = first_order(&round, &constant).unwrap();
        assert!(fo.d_theta.sup_norm() < 1e-10);
        assert!(fo.d_phi.sup_norm() < 1e-12);
        assert!(fo.d_volume.sup_norm() < 1e-10);

        let affine = DeformationPath::new(g.grid().sample(|x| 3.0 * x - 1.0));
        let fo = first_order(&round, &affine).unwrap();
        assert!(fo.d_theta.sup_norm() < 1e-9);
        for i in 0..g.len() {
            assert!((fo.d_phi[i] - 3.0 * round.theta()[i]).abs() < 1e-11);
        }

        let sq = DeformationPath::new(g.grid().sample(|x| x * x));
        let fo = first_order(&round, &sq).unwrap();
        for (i, &x) in g.nodes().iter().enumerate() {
            assert!((fo.d_theta[i] - 2.0 * (1.0 - x * x).powi(2)).abs() < 1e-9);
        }
    }

    #[test]
    fn delta_s_examples() {
        let g = make_cp1_geometry();
        let round = round_profile(&g).unwrap();
        let ds = delta_s(
            &round,
            &DeformationPath::new(SampledFunction::constant(g.len(), 1.0)),
        )
        .unwrap();
        // fourth derivatives of roundoff: about N⁸·eps at the endpoints
        assert!(ds.fixed_x.sup_norm() < 1e-5);
        let ds = delta_s(&round, &DeformationPath::new(g.grid().sample(|x| x * x))).unwrap();
        for (i, &x) in g.nodes().iter().enumerate() {
            assert!((ds.fixed_x[i] + 2.0 * (12.0 * x * x - 4.0)).abs() < 1e-5);
            assert!((ds.fixed_point[i] - ds.fixed_x[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn transport_at_zero_is_identity() {
        let g = make_cp1_geometry();
        let round = round_profile(&g).unwrap();
        let phi = HolomorphyPotential::canonical(&g);
        let path = DeformationPath::new(g.grid().sample(|x| x * x));
        let (p, q) = transport(&round, &phi, &path, 0.0).unwrap();
        assert_eq!(p.theta(), round.theta());
        assert_eq!(q, phi);
    }

    #[test]
    fn transport_exits_class_for_large_amplitude() {
        let g = make_cp1_geometry();
        let round = round_profile(&g).unwrap();
        let phi = HolomorphyPotential::canonical(&g);
        let path = DeformationPath::new(g.grid().sample(|x| 1e3 * x * x));
        assert!(matches!(
            transport(&round, &phi, &path, 1.0),
            Err(Error::PathExitsClass { .. })
        ));
    }

    #[test]
    fn symplectic_potential_second_derivative() {
        let h = 1e-4;
        for &x in &[-0.9, -0.3, 0.0, 0.5, 0.95] {
            let g2 = (cp1_symplectic_potential(x + h) - 2.0 * cp1_symplectic_potential(x)
                + cp1_symplectic_potential(x - h))
                / (h * h);
            assert!(
                (g2 - 1.0 / (1.0 - x * x)).abs() < 1e-5 / (1.0 - x * x),
                "x={x}"
            );
        }
    }

    #[test]
    fn pinning_selects_the_built_in_conventions() {
        let g = make_cp1_geometry();
        let report = pin_conventions(&g, Execution::Parallel).unwrap();
        assert_eq!(report.pinned, Some(PINNED_CONVENTIONS), "{report:#?}");
    }
}
