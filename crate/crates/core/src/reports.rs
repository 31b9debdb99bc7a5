//! Report documents produced by the command-line front end and the
//! acceptance suite.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::random_admissible_profile;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{
    class_constants, cpm_base_coefficient, pin_cpm_base_coefficient, round_profile,
    scalar_curvature, ClassConstants, MetricProfile, ProfileGeometry, Tolerances,
};
use crate::io::csv_row;
use crate::potentials::{
    el_potential, equivariant_integral, eval_s, futaki, holomorphy_defect, total_scalar_moment,
    ELReportDocument, FunctionDescriptor, HolomorphyPotential,
};
use crate::solver::{solve_critical, SolverOptions};
use crate::variation::{
    convergence_study, equivariant_first_variation, pin_conventions, test_directions, transport,
    Conventions, DeformationPath, PinningReport, PINNED_CONVENTIONS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateReport {
    pub f: String,
    pub h: String,
    pub potential: HolomorphyPotential,
    pub functional: f64,
    pub functional_imag: f64,
    pub el_report: ELReportDocument,
    pub futaki: f64,
    pub class_constants: ClassConstants,
}

/// One-shot evaluation: `S`, the criticality report, Futaki and the class
/// constants. Also returns `(ψ, s)` for the CSV export.
pub fn evaluate(
    profile: &MetricProfile,
    f: &FunctionDescriptor,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
    tol: &Tolerances,
) -> Result<(
    EvaluateReport,
    crate::potentials::ComplexSampledFunction,
    crate::SampledFunction,
)> {
    profile.ensure_admissible(tol)?;
    let s_val = eval_s(profile, f, h, phi)?;
    let psi = el_potential(profile, f, h, phi)?;
    let report = holomorphy_defect(profile, &psi, tol)?;
    let s = scalar_curvature(profile)?;
    Ok((
        EvaluateReport {
            f: f.to_string(),
            h: h.to_string(),
            potential: *phi,
            functional: s_val.re,
            functional_imag: s_val.im,
            el_report: report.document(),
            futaki: futaki(profile, phi)?,
            class_constants: class_constants(profile.geometry()),
        },
        psi,
        s,
    ))
}

/// Extra deformation directions for the transport paths, beyond
/// [`test_directions`].
pub fn path_directions(geom: &ProfileGeometry) -> Vec<(String, crate::SampledFunction)> {
    let g = geom.grid();
    let mut dirs = test_directions(geom);
    dirs.push(("x^4/4".into(), g.sample(|x| 0.25 * x.powi(4))));
    dirs.push(("cos(x)/2".into(), g.sample(|x| 0.5 * x.cos())));
    dirs
}

pub const PATH_STEPS: usize = 11;
pub const PATH_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantValues {
    pub equivariant: f64,
    pub equivariant_imag: f64,
    pub scalar_moment: f64,
    pub futaki: f64,
}

fn invariants(
    profile: &MetricProfile,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
) -> Result<InvariantValues> {
    let e = equivariant_integral(profile, h, phi)?;
    Ok(InvariantValues {
        equivariant: e.re,
        equivariant_imag: e.im,
        scalar_moment: total_scalar_moment(profile, phi)?,
        futaki: futaki(profile, phi)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spreads {
    pub equivariant: f64,
    pub scalar_moment: f64,
    pub futaki: f64,
}

fn spread(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let lo = vals.clone().fold(f64::INFINITY, f64::min);
    let hi = vals.fold(f64::NEG_INFINITY, f64::max);
    if lo > hi {
        0.0
    } else {
        hi - lo
    }
}

fn spreads(vals: &[InvariantValues]) -> Spreads {
    Spreads {
        equivariant: spread(vals.iter().map(|v| v.equivariant))
            .max(spread(vals.iter().map(|v| v.equivariant_imag))),
        scalar_moment: spread(vals.iter().map(|v| v.scalar_moment)),
        futaki: spread(vals.iter().map(|v| v.futaki)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub seed: u64,
    pub values: Option<InvariantValues>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub direction: String,
    pub steps: Vec<f64>,
    pub spreads: Option<Spreads>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub h: String,
    pub seed: u64,
    pub amplitude: f64,
    pub samples: Vec<SampleRecord>,
    pub paths: Vec<PathRecord>,
    pub sample_spreads: Spreads,
    pub max_abs_futaki: f64,
    pub max_path_spreads: Spreads,
    /// `|F(φ + c) − F(φ)|` on the first sample, for a unit shift.
    pub shift_invariance_gap: f64,
}

/// Class invariants over `samples` random profiles (seeds `seed, seed+1, …`)
/// and along transport paths from the first profile.
pub fn invariance_report(
    geom: &Arc<ProfileGeometry>,
    h: &FunctionDescriptor,
    phi: &HolomorphyPotential,
    samples: usize,
    seed: u64,
    amplitude: f64,
    exec: Execution,
) -> Result<InvarianceReport> {
    let seeds: Vec<u64> = (0..samples as u64).map(|k| seed.wrapping_add(k)).collect();
    let records: Vec<(SampleRecord, Option<MetricProfile>)> = exec.map(&seeds, |&sd| {
        match random_admissible_profile(geom, sd, amplitude)
            .and_then(|p| invariants(&p, h, phi).map(|v| (p, v)))
        {
            Ok((p, v)) => (
                SampleRecord {
                    seed: sd,
                    values: Some(v),
                    error: None,
                },
                Some(p),
            ),
            Err(e) => (
                SampleRecord {
                    seed: sd,
                    values: None,
                    error: Some(e.to_string()),
                },
                None,
            ),
        }
    });
    let values: Vec<InvariantValues> = records.iter().filter_map(|(r, _)| r.values).collect();
    let sample_spreads = spreads(&values);
    let max_abs_futaki = values.iter().fold(0.0f64, |m, v| m.max(v.futaki.abs()));
    let first = records.iter().find_map(|(_, p)| p.clone());

    let mut paths = Vec::new();
    let mut shift_invariance_gap = 0.0;
    if let Some(base) = &first {
        let shifted = HolomorphyPotential {
            shift: phi.shift + 1.0,
            ..*phi
        };
        shift_invariance_gap = (futaki(base, &shifted)? - futaki(base, phi)?).abs();
        let dirs = path_directions(geom);
        paths = exec.map(&dirs, |(name, u)| {
            let path = DeformationPath::new(u.clone());
            let steps: Vec<f64> = (0..PATH_STEPS).map(|k| k as f64 * PATH_STEP).collect();
            let vals: Result<Vec<InvariantValues>> = steps
                .iter()
                .map(|&t| {
                    let (p, ph) = transport(base, phi, &path, t)?;
                    invariants(&p, h, &ph)
                })
                .collect();
            match vals {
                Ok(v) => PathRecord {
                    direction: name.clone(),
                    steps,
                    spreads: Some(spreads(&v)),
                    error: None,
                },
                Err(e) => PathRecord {
                    direction: name.clone(),
                    steps,
                    spreads: None,
                    error: Some(e.to_string()),
                },
            }
        });
    }
    let mut max_path_spreads = Spreads {
        equivariant: 0.0,
        scalar_moment: 0.0,
        futaki: 0.0,
    };
    for s in paths.iter().filter_map(|p| p.spreads) {
        max_path_spreads.equivariant = max_path_spreads.equivariant.max(s.equivariant);
        max_path_spreads.scalar_moment = max_path_spreads.scalar_moment.max(s.scalar_moment);
        max_path_spreads.futaki = max_path_spreads.futaki.max(s.futaki);
    }
    Ok(InvarianceReport {
        h: h.to_string(),
        seed,
        amplitude,
        samples: records.into_iter().map(|(r, _)| r).collect(),
        paths,
        sample_spreads,
        max_abs_futaki,
        max_path_spreads,
        shift_invariance_gap,
    })
}

pub const VARIATION_STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const VARIATION_SEED: u64 = 2024;
pub const VARIATION_AMPLITUDE: f64 = 0.2;

/// The `(f, h)` pairs of the default variation matrix.
pub fn variation_functions() -> (Vec<FunctionDescriptor>, Vec<FunctionDescriptor>) {
    (
        vec![
            FunctionDescriptor::Exponential,
            FunctionDescriptor::scaled(0.5, FunctionDescriptor::Power(2.0)),
            FunctionDescriptor::Power(3.0),
        ],
        vec![
            FunctionDescriptor::constant(1.0),
            FunctionDescriptor::Identity,
            FunctionDescriptor::Exponential,
        ],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationCase {
    pub f: String,
    pub h: String,
    pub u: String,
    pub analytic: f64,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
    pub min_order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub kappa_theta: f64,
    pub kappa_phi: f64,
    pub pinned_by_oracle: bool,
    pub pinning: PinningReport,
    pub steps: Vec<f64>,
    pub cases: Vec<VariationCase>,
    /// Smallest order per case, in case order.
    pub convergence_orders: Vec<f64>,
    pub min_convergence_order: f64,
    /// Largest first variation of `∫ h(φ) ωᵐ` over the default `h` and the
    /// path directions, with the pinned conventions.
    pub max_invariance_drift: f64,
}

/// Pins the conventions and runs the `f × h × u` convergence matrix on a
/// random profile with `φ = x + 2`.
pub fn variation_report(geom: &Arc<ProfileGeometry>, exec: Execution) -> Result<VariationReport> {
    let pinning = pin_conventions(geom, exec)?;
    let conv: Conventions = pinning.pinned.unwrap_or(PINNED_CONVENTIONS);
    let profile = random_admissible_profile(geom, VARIATION_SEED, VARIATION_AMPLITUDE)?;
    let phi = HolomorphyPotential::from_affine(geom, 1.0, 2.0);
    let (fs, hs) = variation_functions();
    let dirs = test_directions(geom);
    let mut jobs = Vec::new();
    for f in &fs {
        for h in &hs {
            for (name, u) in &dirs {
                jobs.push((f, h, name, u));
            }
        }
    }
    let cases: Vec<VariationCase> = exec
        .map(&jobs, |(f, h, name, u)| {
            let path = DeformationPath::with_conventions((*u).clone(), conv);
            let study = convergence_study(
                &profile,
                f,
                h,
                &phi,
                &path,
                &VARIATION_STEPS,
                Execution::Sequential,
            )?;
            Ok(VariationCase {
                f: f.to_string(),
                h: h.to_string(),
                u: (*name).clone(),
                analytic: study.analytic,
                errors: study.errors,
                orders: study.orders,
                min_order: study.min_order,
            })
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let mut drift: f64 = 0.0;
    for h in &hs {
        for (_, u) in path_directions(geom) {
            let path = DeformationPath::with_conventions(u, conv);
            drift = drift.max(equivariant_first_variation(&profile, h, &phi, &path)?.norm());
        }
    }
    let convergence_orders: Vec<f64> = cases.iter().map(|c| c.min_order).collect();
    Ok(VariationReport {
        kappa_theta: conv.kappa_theta,
        kappa_phi: conv.kappa_phi,
        pinned_by_oracle: pinning.pinned.is_some(),
        pinning,
        steps: VARIATION_STEPS.to_vec(),
        min_convergence_order: convergence_orders
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min),
        convergence_orders,
        cases,
        max_invariance_drift: drift,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub f: String,
    pub h: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub defect_affine: Option<f64>,
    pub defect_operator: Option<f64>,
    pub status: String,
    /// `|α| > threshold` with `h` nonconstant.
    pub flagged: bool,
}

pub const SWEEP_CSV_HEADER: &str = "f,h,alpha,beta,defect_affine,defect_operator,status,flagged";

/// Solves every `(f, h)` pair. Failures become rows with status `failed: …`.
pub fn sweep(
    geom: &Arc<ProfileGeometry>,
    fs: &[FunctionDescriptor],
    hs: &[FunctionDescriptor],
    phi: &HolomorphyPotential,
    alpha_threshold: f64,
    opts: &SolverOptions,
    exec: Execution,
) -> Vec<SweepRow> {
    let mut jobs = Vec::new();
    for f in fs {
        for h in hs {
            jobs.push((f, h));
        }
    }
    exec.map(&jobs, |(f, h)| {
        match solve_critical(geom, f, h, phi, None, opts) {
            Ok(r) => SweepRow {
                f: f.to_string(),
                h: h.to_string(),
                alpha: Some(r.alpha),
                beta: Some(r.beta),
                defect_affine: Some(r.report.defect_affine),
                defect_operator: Some(r.report.defect_operator),
                status: if r.converged {
                    "critical".into()
                } else {
                    "not_critical".into()
                },
                flagged: r.alpha.abs() > alpha_threshold && !h.is_constant(),
            },
            Err(e) => SweepRow {
                f: f.to_string(),
                h: h.to_string(),
                alpha: None,
                beta: None,
                defect_affine: None,
                defect_operator: None,
                status: format!("failed: {e}"),
                flagged: false,
            },
        }
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map(crate::io::format_float).unwrap_or_default();
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&csv_row(&[
            r.f.clone(),
            r.h.clone(),
            opt(r.alpha),
            opt(r.beta),
            opt(r.defect_affine),
            opt(r.defect_operator),
            r.status.clone(),
            r.flagged.to_string(),
        ]));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpmConstants {
    pub m: u32,
    /// Coefficient `c` in `A(x) = c·x^{m−2}` used by the geometry.
    pub base_coefficient: f64,
    /// The same coefficient recovered from the Fubini–Study profile.
    pub pinned_coefficient: f64,
    /// Constant scalar curvature of the Fubini–Study profile.
    pub scalar_curvature: f64,
    pub scalar_curvature_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConventionsManifest {
    pub vol_const: f64,
    pub kappa_theta: f64,
    pub kappa_phi: f64,
    pub pinned_by_oracle: bool,
    pub cpm: Vec<CpmConstants>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
    (mean, var.sqrt())
}

/// Records the convention constants and the CPᵐ data for `m = 2, 3`.
pub fn conventions_manifest(nodes: usize, exec: Execution) -> Result<ConventionsManifest> {
    let cp1 = ProfileGeometry::cp1(nodes)?;
    let pinning = pin_conventions(&cp1, exec)?;
    let conv = pinning.pinned.ok_or_else(|| {
        Error::InvalidInput("convention oracle did not single out one candidate".into())
    })?;
    let mut cpm = Vec::new();
    for m in [2u32, 3] {
        let geom = ProfileGeometry::cpm(m, nodes)?;
        let s = scalar_curvature(&round_profile(&geom)?)?;
        let (mean, std) = mean_std(s.values());
        let (c, _, _) = pin_cpm_base_coefficient(m, nodes)?;
        cpm.push(CpmConstants {
            m,
            base_coefficient: cpm_base_coefficient(m),
            pinned_coefficient: c,
            scalar_curvature: mean,
            scalar_curvature_std: std,
        });
    }
    Ok(ConventionsManifest {
        vol_const: cp1.vol_const(),
        kappa_theta: conv.kappa_theta,
        kappa_phi: conv.kappa_phi,
        pinned_by_oracle: true,
        cpm,
    })
}
