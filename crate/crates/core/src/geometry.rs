//! Reduced circle-symmetric Kähler geometries and their momentum profiles.
//!
//! A [`ProfileGeometry`] fixes the Kähler class: the moment interval, the
//! Duistermaat–Heckman weight `w`, the base term `A`, and the boundary slopes
//! a smooth profile must have. A [`MetricProfile`] is one metric in that
//! class.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::{SampledFunction, SpectralGrid};
use crate::error::{Error, Result};

pub const DEFAULT_NODES: usize = 129;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeometryKind {
    Cp1,
    Cpm { m: u32 },
    Custom,
}

#[derive(Debug, Clone)]
pub struct ProfileGeometry {
    kind: GeometryKind,
    grid: SpectralGrid,
    weight: SampledFunction,
    weight_d1: SampledFunction,
    weight_d2: SampledFunction,
    base_term: SampledFunction,
    slope_lo: f64,
    slope_hi: f64,
    dim: u32,
    vol_const: f64,
}

impl ProfileGeometry {
    /// Builds a geometry from sampled data. Used directly for custom
    /// geometries; the CP¹/CPᵐ constructors go through it too.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        kind: GeometryKind,
        grid: SpectralGrid,
        weight: SampledFunction,
        base_term: SampledFunction,
        slope_lo: f64,
        slope_hi: f64,
        dim: u32,
        vol_const: f64,
    ) -> Result<Self> {
        let n = grid.len();
        if weight.len() != n || base_term.len() != n {
            return Err(Error::InvalidInput(format!(
                "sampled data has {} / {} values for a {n}-node grid",
                weight.len(),
                base_term.len()
            )));
        }
        if !weight.is_finite() || !base_term.is_finite() {
            return Err(Error::InvalidInput("non-finite geometry data".into()));
        }
        if !(vol_const > 0.0) || !slope_lo.is_finite() || !slope_hi.is_finite() || dim == 0 {
            return Err(Error::InvalidInput(format!(
                "bad class constants: vol_const {vol_const}, slopes ({slope_lo}, {slope_hi}), dim {dim}"
            )));
        }
        for i in 1..n - 1 {
            if !(weight[i] > 0.0) {
                return Err(Error::DegenerateWeight {
                    index: i,
                    x: grid.nodes()[i],
                });
            }
        }
        if weight[0] < 0.0 || weight[n - 1] < 0.0 {
            return Err(Error::InvalidInput("negative endpoint weight".into()));
        }
        let weight_d1 = SampledFunction::new(grid.d1(weight.values()));
        let weight_d2 = SampledFunction::new(grid.d2(weight.values()));
        Ok(ProfileGeometry {
            kind,
            grid,
            weight,
            weight_d1,
            weight_d2,
            base_term,
            slope_lo,
            slope_hi,
            dim,
            vol_const,
        })
    }

    pub fn cp1(nodes: usize) -> Result<Arc<Self>> {
        let grid = SpectralGrid::new(nodes, -1.0, 1.0)?;
        let weight = SampledFunction::constant(nodes, 1.0);
        let base = SampledFunction::constant(nodes, 0.0);
        Ok(Arc::new(Self::from_parts(
            GeometryKind::Cp1,
            grid,
            weight,
            base,
            2.0,
            -2.0,
            1,
            2.0 * std::f64::consts::PI,
        )?))
    }

    pub fn cpm(m: u32, nodes: usize) -> Result<Arc<Self>> {
        if m < 2 {
            return Err(Error::InvalidInput(format!(
                "CPᵐ ansatz needs m ≥ 2, got {m}"
            )));
        }
        let grid = SpectralGrid::new(nodes, 0.0, 1.0)?;
        let mi = m as i32;
        let weight = grid.sample(|x| x.powi(mi - 1));
        let c = cpm_base_coefficient(m);
        let base = grid.sample(|x| c * x.powi(mi - 2));
        let mf = m as f64;
        let w1 = grid.sample(|x| (mf - 1.0) * x.powi(mi - 2));
        let w2 = grid.sample(|x| {
            if m == 2 {
                0.0
            } else {
                (mf - 1.0) * (mf - 2.0) * x.powi(mi - 3)
            }
        });
        let mut geom = Self::from_parts(
            GeometryKind::Cpm { m },
            grid,
            weight,
            base,
            2.0,
            -2.0,
            m,
            2.0 * std::f64::consts::PI,
        )?;
        // exact derivatives keep the division by w accurate near x = 0
        geom.weight_d1 = w1;
        geom.weight_d2 = w2;
        Ok(Arc::new(geom))
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn x_lo(&self) -> f64 {
        self.grid.x_lo()
    }

    pub fn x_hi(&self) -> f64 {
        self.grid.x_hi()
    }

    pub fn weight(&self) -> &SampledFunction {
        &self.weight
    }

    pub fn base_term(&self) -> &SampledFunction {
        &self.base_term
    }

    pub fn slope_lo(&self) -> f64 {
        self.slope_lo
    }

    pub fn slope_hi(&self) -> f64 {
        self.slope_hi
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn vol_const(&self) -> f64 {
        self.vol_const
    }

    /// `C_vol ∫ g w dx`, the reduced form of `∫ g ωᵐ`.
    pub fn volume_integral(&self, g: &[f64]) -> f64 {
        let gw: Vec<f64> = g
            .iter()
            .zip(self.weight.values())
            .map(|(a, b)| a * b)
            .collect();
        self.vol_const * self.grid.integrate(&gw)
    }

    /// Divides `numer` by the weight, taking L'Hôpital limits at endpoints
    /// where the weight vanishes.
    pub fn divide_by_weight(&self, numer: &[f64]) -> Result<SampledFunction> {
        let n = self.len();
        let w = self.weight.values();
        let wmax = self.weight.sup_norm();
        let mut out = vec![0.0; n];
        for i in 0..n {
            if w[i] > 1e-14 * wmax {
                out[i] = numer[i] / w[i];
            } else if i == 0 || i == n - 1 {
                out[i] = self.endpoint_limit(numer, i)?;
            } else {
                return Err(Error::DegenerateWeight {
                    index: i,
                    x: self.nodes()[i],
                });
            }
        }
        Ok(SampledFunction::new(out))
    }

    fn endpoint_limit(&self, numer: &[f64], i: usize) -> Result<f64> {
        let mut dn = numer.to_vec();
        let mut dw = self.weight.values().to_vec();
        let span = self.x_hi() - self.x_lo();
        let wscale = self.weight.sup_norm();
        for k in 1..=4 {
            dn = self.grid.d1(&dn);
            dw = self.grid.d1(&dw);
            if dw[i].abs() > 1e-8 * wscale / span.powi(k) {
                return Ok(dn[i] / dw[i]);
            }
        }
        Err(Error::DegenerateWeight {
            index: i,
            x: self.nodes()[i],
        })
    }

    /// `(a − (w·g)″) / w`, expanded by the product rule so that only `g`
    /// and its derivatives are differentiated. `a = None` means `a = 0`.
    pub fn weighted_second_derivative(
        &self,
        a: Option<&[f64]>,
        g: &[f64],
    ) -> Result<SampledFunction> {
        let d1 = self.grid.d1(g);
        let d2 = self.grid.d2(g);
        let w1 = self.weight_d1.values();
        let w2 = self.weight_d2.values();
        let numer: Vec<f64> = (0..g.len())
            .map(|i| a.map_or(0.0, |a| a[i]) - w2[i] * g[i] - 2.0 * w1[i] * d1[i])
            .collect();
        let q = self.divide_by_weight(&numer)?;
        Ok(q.zip_with(&SampledFunction::new(d2), |a, b| a - b))
    }

    /// `(w·g)′ / w` with the same expansion.
    pub fn weighted_first_derivative(&self, g: &[f64]) -> Result<SampledFunction> {
        let d1 = self.grid.d1(g);
        let w1 = self.weight_d1.values();
        let numer: Vec<f64> = (0..g.len()).map(|i| w1[i] * g[i]).collect();
        let q = self.divide_by_weight(&numer)?;
        Ok(q.zip_with(&SampledFunction::new(d1), |a, b| a + b))
    }
}

/// The coefficient `c` in `A(x) = c·x^{m−2}` for the U(m)-invariant CPᵐ ansatz.
pub fn cpm_base_coefficient(m: u32) -> f64 {
    let m = m as f64;
    2.0 * m * (m - 1.0)
}

/// Recovers the CPᵐ base coefficient from the Fubini–Study profile alone:
/// least squares for `(c, s)` in `c·x^{m−2} − (wΘ)″ = s·w` over interior
/// nodes. Returns `(c, s, residual)`.
pub fn pin_cpm_base_coefficient(m: u32, nodes: usize) -> Result<(f64, f64, f64)> {
    if m < 2 {
        return Err(Error::InvalidInput(format!("m must be ≥ 2, got {m}")));
    }
    let grid = SpectralGrid::new(nodes, 0.0, 1.0)?;
    let mi = m as i32;
    let w = grid.sample(|x| x.powi(mi - 1));
    let theta = grid.sample(|x| 2.0 * x * (1.0 - x));
    let wt: Vec<f64> = w
        .values()
        .iter()
        .zip(theta.values())
        .map(|(a, b)| a * b)
        .collect();
    let wt2 = grid.d2(&wt);
    let rows = nodes - 2;
    let mut a = nalgebra::DMatrix::<f64>::zeros(rows, 2);
    let mut b = nalgebra::DVector::<f64>::zeros(rows);
    for r in 0..rows {
        let x = grid.nodes()[r + 1];
        a[(r, 0)] = x.powi(mi - 2);
        a[(r, 1)] = -w[r + 1];
        b[r] = wt2[r + 1];
    }
    let svd = a.clone().svd(true, true);
    let sol = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let resid = (&a * &sol - &b).norm();
    Ok((sol[0], sol[1], resid))
}

/// CP¹ with the round class: `[−1, 1]`, `w ≡ 1`, `A ≡ 0`, slopes `(2, −2)`.
pub fn make_cp1_geometry() -> Arc<ProfileGeometry> {
    ProfileGeometry::cp1(DEFAULT_NODES).expect("default CP¹ grid is valid")
}

pub fn make_cpm_geometry(m: u32) -> Result<Arc<ProfileGeometry>> {
    ProfileGeometry::cpm(m, DEFAULT_NODES)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Endpoint value/slope tolerance.
    pub boundary: f64,
    /// Relative factor in `tol_affine = affine · (1 + ‖ψ‖∞)`.
    pub affine: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            boundary: 1e-8,
            affine: 1e-8,
        }
    }
}

/// One metric in the class, given by its momentum profile `Θ`.
#[derive(Debug, Clone)]
pub struct MetricProfile {
    geometry: Arc<ProfileGeometry>,
    theta: SampledFunction,
}

impl MetricProfile {
    /// Wraps sampled values without checking admissibility; see [`validate`].
    pub fn new(geometry: Arc<ProfileGeometry>, theta: SampledFunction) -> Result<Self> {
        if theta.len() != geometry.len() {
            return Err(Error::InvalidInput(format!(
                "profile has {} values for a {}-node grid",
                theta.len(),
                geometry.len()
            )));
        }
        Ok(MetricProfile { geometry, theta })
    }

    pub fn geometry(&self) -> &Arc<ProfileGeometry> {
        &self.geometry
    }

    pub fn theta(&self) -> &SampledFunction {
        &self.theta
    }

    pub fn ensure_admissible(&self, tol: &Tolerances) -> Result<()> {
        let v = validate(self, tol);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Admissibility(v))
        }
    }

    /// `w Θ` at the nodes.
    pub fn weighted_theta(&self) -> Vec<f64> {
        self.theta
            .values()
            .iter()
            .zip(self.geometry.weight().values())
            .map(|(t, w)| t * w)
            .collect()
    }

    pub fn sup_distance(&self, other: &MetricProfile) -> f64 {
        self.theta.zip_with(&other.theta, |a, b| a - b).sup_norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NonFinite,
    EndpointValue,
    EndpointSlope,
    InteriorPositivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub x: f64,
    pub magnitude: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::NonFinite => "non-finite value",
            ViolationKind::EndpointValue => "endpoint value",
            ViolationKind::EndpointSlope => "endpoint slope",
            ViolationKind::InteriorPositivity => "interior positivity",
        };
        write!(
            f,
            "{what} at x = {} (magnitude {:e})",
            self.x, self.magnitude
        )
    }
}

/// Checks the profile invariants; an empty list means admissible.
pub fn validate(profile: &MetricProfile, tol: &Tolerances) -> Vec<Violation> {
    let geom = &profile.geometry;
    let x = geom.nodes();
    let theta = profile.theta.values();
    let n = theta.len();
    let mut out = Vec::new();
    if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
        out.push(Violation {
            kind: ViolationKind::NonFinite,
            x: x[i],
            magnitude: f64::INFINITY,
        });
        return out;
    }
    for &i in &[0, n - 1] {
        if theta[i].abs() > tol.boundary {
            out.push(Violation {
                kind: ViolationKind::EndpointValue,
                x: x[i],
                magnitude: theta[i],
            });
        }
    }
    let grid = geom.grid();
    let slopes = [
        (0, grid.d1_at(theta, 0) - geom.slope_lo),
        (n - 1, grid.d1_at(theta, n - 1) - geom.slope_hi),
    ];
    for (i, err) in slopes {
        if err.abs() > tol.boundary {
            out.push(Violation {
                kind: ViolationKind::EndpointSlope,
                x: x[i],
                magnitude: err,
            });
        }
    }
    let worst = (1..n - 1).min_by(|&a, &b| theta[a].total_cmp(&theta[b]));
    if let Some(i) = worst {
        if !(theta[i] > 0.0) {
            out.push(Violation {
                kind: ViolationKind::InteriorPositivity,
                x: x[i],
                magnitude: theta[i],
            });
        }
    }
    out
}

/// The canonical round metric: `1 − x²` on CP¹, `2x(1 − x)` on CPᵐ.
pub fn round_profile(geom: &Arc<ProfileGeometry>) -> Result<MetricProfile> {
    let theta = match geom.kind() {
        GeometryKind::Cp1 => geom.grid().sample(|x| 1.0 - x * x),
        GeometryKind::Cpm { .. } => geom.grid().sample(|x| 2.0 * x * (1.0 - x)),
        GeometryKind::Custom => {
            return Err(Error::UnsupportedGeometry(
                "no canonical round profile for a custom geometry".into(),
            ))
        }
    };
    MetricProfile::new(geom.clone(), theta)
}

/// `A − (wΘ)″`, i.e. `s·w`, without dividing by the weight.
pub(crate) fn curvature_numerator(profile: &MetricProfile) -> Vec<f64> {
    let geom = profile.geometry();
    let wt2 = geom.grid().d2(&profile.weighted_theta());
    geom.base_term()
        .values()
        .iter()
        .zip(wt2)
        .map(|(a, d)| a - d)
        .collect()
}

/// `s = (A − (wΘ)″) / w` on the grid.
pub fn scalar_curvature(profile: &MetricProfile) -> Result<SampledFunction> {
    profile.ensure_admissible(&Tolerances::default())?;
    scalar_curvature_unchecked(profile)
}

pub(crate) fn scalar_curvature_unchecked(profile: &MetricProfile) -> Result<SampledFunction> {
    let geom = profile.geometry();
    geom.weighted_second_derivative(Some(geom.base_term().values()), profile.theta().values())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassConstants {
    pub total_volume: f64,
    pub total_scalar: f64,
    pub s0: f64,
}

/// Volume, total scalar curvature and average scalar curvature of the class.
///
/// The total scalar curvature is computed from boundary data only:
/// `C_vol (∫A dx − [w Θ′]_{x_lo}^{x_hi})`, which does not depend on `Θ`.
pub fn class_constants(geom: &ProfileGeometry) -> ClassConstants {
    let grid = geom.grid();
    let n = geom.len();
    let w = geom.weight().values();
    let total_volume = geom.vol_const() * grid.integrate(w);
    let boundary = w[n - 1] * geom.slope_hi() - w[0] * geom.slope_lo();
    let total_scalar = geom.vol_const() * (grid.integrate(geom.base_term().values()) - boundary);
    ClassConstants {
        total_volume,
        total_scalar,
        s0: total_scalar / total_volume,
    }
}
