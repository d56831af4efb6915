//! Inertial drifter dynamics: the full (stiff) adapted Maxey-Riley system,
//! its leading-order slow-manifold reduction, and the nondimensional groups
//! connecting physical drifter properties to both.
//!
//! In scaled variables (length L, velocity U, time T = L/U) the full system
//! reads
//!
//! ```text
//! x' = v
//! eps v' = u - v + eps [ (3R/2) Du/Dt - R f (dp v - u)^perp
//!                        - R da nu_a alpha (v - u_wind) + R H(u_e, u) ]
//! ```
//!
//! with R = 2 rho_f / (rho_f + 2 rho_p), eps = St/R, dp = rho_p/rho_f and
//! da = rho_a/rho_f. Particle velocity relaxes to an attracting slow
//! manifold at rate 1/eps; restricted to that manifold the motion reduces,
//! to leading order, to the velocity model
//!
//! ```text
//! x' = u + eps [ (3R/2 - 1)(Du/Dt - g) - R f (dp - 1) u^perp + H(u_e, u) ]
//! ```
//!
//! with gravity dropped in 2D. The same algebra serves both unit systems:
//! scaled (eps, f T) and SI (eps T seconds, f in 1/s). The full system is
//! retained as a verification oracle; production trajectories use the
//! reduced model.

use thiserror::Error;

use crate::flowfield::{
    ekman_velocity, ekman_velocity_dlat, material_derivative_from_sample, AnalyticField,
    FieldError, GriddedVelocityField, Vec2,
};
use crate::geo;
use crate::integrate::{rk4_step_n, ModelError, ModelVelocity, VelocityModel};

/// Earth rotation rate (rad/s).
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_9e-5;

/// Signed Coriolis parameter f = 2 Omega sin(lat), in 1/s.
pub fn coriolis_parameter(lat_deg: f64) -> f64 {
    2.0 * EARTH_ROTATION_RAD_S * lat_deg.to_radians().sin()
}

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("density ratio R = {0} outside (0, 2)")]
    DensityRatioOutOfRange(f64),
    #[error("epsilon must be positive for the full system, got {0}")]
    NonPositiveEpsilon(f64),
    #[error(transparent)]
    Flow(#[from] FieldError),
}

/// Physical drifter and fluid properties feeding the nondimensionalization.
#[derive(Debug, Clone)]
pub struct PhysicalDrifterParams {
    /// Drifter (drogue) density, kg/m^3.
    pub rho_p: f64,
    /// Sea-water density, kg/m^3.
    pub rho_f: f64,
    /// Air density, kg/m^3.
    pub rho_a: f64,
    /// Water kinematic viscosity, m^2/s.
    pub nu_f: f64,
    /// Air kinematic viscosity, m^2/s.
    pub nu_a: f64,
    /// Drogue radius, m.
    pub a: f64,
    /// Exposed-float drag coefficient (dimensionless).
    pub alpha: f64,
    /// Gravity, m/s^2; vertical, unused in the 2D equations but kept for
    /// completeness.
    pub g: f64,
}

impl Default for PhysicalDrifterParams {
    fn default() -> Self {
        PhysicalDrifterParams {
            rho_p: 1025.0,
            rho_f: 1025.0,
            rho_a: 1.2,
            nu_f: 1.0e-6,
            nu_a: 1.5e-5,
            a: 0.05,
            alpha: 1.0,
            g: 9.81,
        }
    }
}

/// Nondimensional groups of the drifter equations plus the scales that
/// produced them.
#[derive(Debug, Clone)]
pub struct DrifterParams {
    /// Density group 2 rho_f / (rho_f + 2 rho_p); 2/3 when neutrally buoyant.
    pub r: f64,
    /// Stokes number (2/9)(a/L)^2 Re.
    pub st: f64,
    /// Drag rate mu = R/St.
    pub mu: f64,
    /// Slow-manifold small parameter eps = 1/mu = St/R.
    pub eps: f64,
    /// rho_p / rho_f.
    pub delta_p: f64,
    /// rho_a / rho_f.
    pub delta_a: f64,
    /// Scaled wind-drag coefficient nu_a alpha / (L U).
    pub nu_a_alpha: f64,
    /// Length scale L, m.
    pub length_scale: f64,
    /// Velocity scale U, m/s.
    pub velocity_scale: f64,
    /// Time scale T = L/U, s.
    pub time_scale: f64,
}

impl DrifterParams {
    /// Nondimensionalize physical properties with length scale `l` (m) and
    /// velocity scale `u` (m/s).
    pub fn from_physical(p: &PhysicalDrifterParams, l: f64, u: f64) -> Result<Self, DynamicsError> {
        for (name, value) in [
            ("rho_p", p.rho_p),
            ("rho_f", p.rho_f),
            ("rho_a", p.rho_a),
            ("nu_f", p.nu_f),
            ("nu_a", p.nu_a),
            ("a", p.a),
            ("alpha", p.alpha),
        ] {
            if !(value > 0.0) {
                return Err(DynamicsError::NonPositive { name, value });
            }
        }
        let reynolds = u * l / p.nu_f;
        let st = 2.0 / 9.0 * (p.a / l).powi(2) * reynolds;
        Self::from_groups(
            2.0 * p.rho_f / (p.rho_f + 2.0 * p.rho_p),
            st,
            p.rho_p / p.rho_f,
            p.rho_a / p.rho_f,
            p.nu_a * p.alpha / (l * u),
            l,
            u,
        )
    }

    /// Build directly from the nondimensional groups.
    pub fn from_groups(
        r: f64,
        st: f64,
        delta_p: f64,
        delta_a: f64,
        nu_a_alpha: f64,
        length_scale: f64,
        velocity_scale: f64,
    ) -> Result<Self, DynamicsError> {
        if !(length_scale > 0.0) {
            return Err(DynamicsError::NonPositive { name: "length_scale", value: length_scale });
        }
        if !(velocity_scale > 0.0) {
            return Err(DynamicsError::NonPositive { name: "velocity_scale", value: velocity_scale });
        }
        if !(st > 0.0) {
            return Err(DynamicsError::NonPositive { name: "st", value: st });
        }
        if !(r > 0.0 && r < 2.0) {
            return Err(DynamicsError::DensityRatioOutOfRange(r));
        }
        Ok(DrifterParams {
            r,
            st,
            mu: r / st,
            eps: st / r,
            delta_p,
            delta_a,
            nu_a_alpha,
            length_scale,
            velocity_scale,
            time_scale: length_scale / velocity_scale,
        })
    }

    /// Inertial response time eps * T in seconds; converts the scaled
    /// reduced model to SI units.
    pub fn eps_seconds(&self) -> f64 {
        self.eps * self.time_scale
    }
}

/// Shared algebra of the reduced model:
/// `u + eps_time [ (3R/2 - 1) du_dt - R f (dp - 1) u^perp + h ]`.
///
/// The Du/Dt coefficient comes from equating O(eps) terms of the manifold
/// expansion: v' = eps Du/Dt on the manifold while the equation of motion
/// gives v' = -eps u1 + eps[(3R/2) Du/Dt - ...], so
/// u1 = (3R/2 - 1) Du/Dt - R f (dp - 1) u^perp + H. The sign is what makes
/// the full-system gap O(eps^2); see the convergence tests.
fn reduced_terms(params: &DrifterParams, u: Vec2, du_dt: Vec2, coriolis: f64, h: Vec2, eps_time: f64) -> Vec2 {
    let bracket = du_dt * (1.5 * params.r - 1.0)
        - u.perp() * (params.r * coriolis * (params.delta_p - 1.0))
        + h;
    u + bracket * eps_time
}

/// Leading-order drifter velocity in scaled variables. `coriolis` is the
/// scaled parameter f T, `h` the scaled wind-wave function value.
pub fn reduced_mr_velocity_scaled(
    params: &DrifterParams,
    u: Vec2,
    du_dt: Vec2,
    coriolis: f64,
    h: Vec2,
) -> Vec2 {
    reduced_terms(params, u, du_dt, coriolis, h, params.eps)
}

/// Leading-order drifter velocity in SI units: `u` m/s, `du_dt` m/s^2,
/// `coriolis` 1/s, `h` m/s^2; the bracket is weighted by eps T seconds.
pub fn reduced_mr_velocity_si(
    params: &DrifterParams,
    u: Vec2,
    du_dt: Vec2,
    coriolis: f64,
    h: Vec2,
) -> Vec2 {
    reduced_terms(params, u, du_dt, coriolis, h, params.eps_seconds())
}

/// Wind-wave/shear forcing hook H(u_e, u). Unknown a priori; injectable so
/// synthetic datasets can carry a known forcing for the learner to recover.
pub type WindWaveFn = dyn Fn(Vec2, Vec2) -> Vec2 + Sync;

/// Full-system state: position and particle velocity (scaled units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullState {
    pub x: Vec2,
    pub v: Vec2,
}

/// Flow context for the scaled equations. Positions, times and velocities
/// are nondimensional; `coriolis` returns f T.
pub trait ScaledFlow: Sync {
    fn velocity(&self, x: Vec2, t: f64) -> Vec2;
    fn material_derivative(&self, x: Vec2, t: f64) -> Vec2;
    fn ekman(&self, _x: Vec2, _t: f64) -> Vec2 {
        Vec2::ZERO
    }
    fn wind(&self, _x: Vec2, _t: f64) -> Vec2 {
        Vec2::ZERO
    }
    fn coriolis(&self, _x: Vec2) -> f64 {
        0.0
    }
}

/// Scaled analytic flow with a constant scaled Coriolis parameter; the
/// workhorse context for verification runs.
pub struct ScaledAnalyticFlow {
    pub field: AnalyticField,
    pub coriolis: f64,
}

impl ScaledFlow for ScaledAnalyticFlow {
    fn velocity(&self, x: Vec2, t: f64) -> Vec2 {
        self.field.velocity(x, t)
    }
    fn material_derivative(&self, x: Vec2, t: f64) -> Vec2 {
        self.field.material_derivative(x, t)
    }
    fn coriolis(&self, _x: Vec2) -> f64 {
        self.coriolis
    }
}

/// Right-hand side of the full (pre-reduction) system in scaled variables:
/// returns (x', v'). The relaxation term (u - v)/eps makes this stiff; it
/// exists as the verification oracle for the reduced model.
pub fn full_mr_rhs(
    state: &FullState,
    t: f64,
    flow: &impl ScaledFlow,
    params: &DrifterParams,
    wind_wave: Option<&WindWaveFn>,
) -> Result<(Vec2, Vec2), DynamicsError> {
    if !(params.eps > 0.0) {
        return Err(DynamicsError::NonPositiveEpsilon(params.eps));
    }
    let u = flow.velocity(state.x, t);
    let du_dt = flow.material_derivative(state.x, t);
    let f = flow.coriolis(state.x);
    let r = params.r;
    let mut vdot = (u - state.v) * (1.0 / params.eps) + du_dt * (1.5 * r)
        - (state.v * params.delta_p - u).perp() * (r * f);
    if params.nu_a_alpha != 0.0 {
        let uw = flow.wind(state.x, t);
        vdot = vdot - (state.v - uw) * (r * params.delta_a * params.nu_a_alpha);
    }
    if let Some(h) = wind_wave {
        vdot = vdot + h(flow.ekman(state.x, t), u) * r;
    }
    Ok((state.v, vdot))
}

/// One RK4 step of the full system. The caller keeps dt well below eps to
/// resolve the fast relaxation.
pub fn step_full_scaled(
    flow: &impl ScaledFlow,
    params: &DrifterParams,
    wind_wave: Option<&WindWaveFn>,
    state: &FullState,
    t: f64,
    dt: f64,
) -> Result<FullState, DynamicsError> {
    let mut rhs = |tt: f64, y: &[f64; 4]| -> Result<[f64; 4], DynamicsError> {
        let s = FullState {
            x: Vec2::new(y[0], y[1]),
            v: Vec2::new(y[2], y[3]),
        };
        let (xdot, vdot) = full_mr_rhs(&s, tt, flow, params, wind_wave)?;
        Ok([xdot.x, xdot.y, vdot.x, vdot.y])
    };
    let y = rk4_step_n(&mut rhs, t, &[state.x.x, state.x.y, state.v.x, state.v.y], dt)?;
    Ok(FullState {
        x: Vec2::new(y[0], y[1]),
        v: Vec2::new(y[2], y[3]),
    })
}

/// Integrate the full system from the slow manifold (v(0) = u(x0, 0)) and
/// report the largest velocity gap |v_full - v_reduced| over the scaled-time
/// window [t_lo, t_hi], evaluating the reduced model along the full
/// trajectory. With the wind drag off and H = 0 the gap is O(eps^2).
pub fn slow_manifold_velocity_gap(
    flow: &impl ScaledFlow,
    params: &DrifterParams,
    wind_wave: Option<&WindWaveFn>,
    x0: Vec2,
    t_lo: f64,
    t_hi: f64,
) -> Result<f64, DynamicsError> {
    let dt = params.eps / 20.0;
    let mut state = FullState {
        x: x0,
        v: flow.velocity(x0, 0.0),
    };
    let mut t = 0.0;
    let mut gap: f64 = 0.0;
    while t < t_hi - 0.5 * dt {
        state = step_full_scaled(flow, params, wind_wave, &state, t, dt)?;
        t += dt;
        if t >= t_lo {
            let u = flow.velocity(state.x, t);
            let du_dt = flow.material_derivative(state.x, t);
            let h = wind_wave
                .map(|hf| hf(flow.ekman(state.x, t), u))
                .unwrap_or(Vec2::ZERO);
            let vr = reduced_mr_velocity_scaled(params, u, du_dt, flow.coriolis(state.x), h);
            gap = gap.max((state.v - vr).norm());
        }
    }
    Ok(gap)
}

// ------------------------------------------------------------------
// Geographic flow context and the reduced model as a velocity model
// ------------------------------------------------------------------

/// Everything the reduced model and the feature builder need at one point:
/// total water velocity, its Ekman part, and the material derivative of the
/// total field.
#[derive(Debug, Clone, Copy)]
pub struct FlowBundle {
    /// Total water velocity u = u_g + u_e, m/s.
    pub u: Vec2,
    /// Ekman component, m/s (zero without a wind field).
    pub u_e: Vec2,
    /// 10 m wind, m/s (zero without a wind field).
    pub wind10: Vec2,
    /// Material derivative of the total field, m/s^2.
    pub du_dt: Vec2,
    /// Masked-support fallback used somewhere in the stencil.
    pub degraded: bool,
}

/// Gridded current field plus optional gridded 10 m wind, composed into the
/// total surface flow. Read-only and safe to share across threads.
pub struct GeoFlow<'a> {
    current: &'a GriddedVelocityField,
    wind: Option<&'a GriddedVelocityField>,
}

impl<'a> GeoFlow<'a> {
    pub fn new(current: &'a GriddedVelocityField, wind: Option<&'a GriddedVelocityField>) -> Self {
        GeoFlow { current, wind }
    }

    pub fn current_field(&self) -> &GriddedVelocityField {
        self.current
    }

    pub fn wind_field(&self) -> Option<&GriddedVelocityField> {
        self.wind
    }

    /// Total water velocity u_g + u_e without derivative bookkeeping.
    pub fn water_velocity(&self, lon: f64, lat: f64, t: f64) -> Result<(Vec2, bool), FieldError> {
        let (ug, d1) = self.current.sample_velocity_flagged(lon, lat, t)?;
        match self.wind {
            None => Ok((ug, d1)),
            Some(w) => {
                let (w10, d2) = w.sample_velocity_flagged(lon, lat, t)?;
                Ok((ug + ekman_velocity(w10, lat)?, d1 || d2))
            }
        }
    }

    /// Velocity, Ekman part and total-field material derivative.
    ///
    /// The material derivative follows the total field: spatial and time
    /// derivatives of the gridded current are combined with the wind-field
    /// derivatives mapped through the Ekman operator, including the
    /// latitude dependence of its magnitude factor.
    pub fn bundle(&self, lon: f64, lat: f64, t: f64) -> Result<FlowBundle, FieldError> {
        let cs = self.current.sample_full(lon, lat, t, true)?;
        let Some(wind) = self.wind else {
            return Ok(FlowBundle {
                u: cs.v,
                u_e: Vec2::ZERO,
                wind10: Vec2::ZERO,
                du_dt: material_derivative_from_sample(&cs, lat),
                degraded: cs.degraded,
            });
        };
        let ws = wind.sample_full(lon, lat, t, true)?;
        let u_e = ekman_velocity(ws.v, lat)?;
        let u = cs.v + u_e;
        // Gradients of the total field in per-meter units.
        let m_lon = geo::meters_per_deg_lon(lat);
        let m_lat = geo::meters_per_deg_lat();
        let du_dx = (cs.dv_dlon + ekman_velocity(ws.dv_dlon, lat)?) * (1.0 / m_lon);
        let du_dy = (cs.dv_dlat + ekman_velocity(ws.dv_dlat, lat)? + ekman_velocity_dlat(ws.v, lat)?)
            * (1.0 / m_lat);
        let du_dt_partial = cs.dv_dt + ekman_velocity(ws.dv_dt, lat)?;
        Ok(FlowBundle {
            u,
            u_e,
            wind10: ws.v,
            du_dt: du_dt_partial + du_dx * u.x + du_dy * u.y,
            degraded: cs.degraded || ws.degraded,
        })
    }
}

/// The reduced drifter model over gridded fields, in SI units, usable as a
/// trajectory velocity model. The wind-wave hook defaults to zero, matching
/// the deterministic baseline.
pub struct ReducedDrifterModel<'a> {
    pub flow: GeoFlow<'a>,
    pub params: DrifterParams,
    pub wind_wave: Option<&'a WindWaveFn>,
}

impl<'a> ReducedDrifterModel<'a> {
    pub fn new(flow: GeoFlow<'a>, params: DrifterParams) -> Self {
        ReducedDrifterModel {
            flow,
            params,
            wind_wave: None,
        }
    }

    /// Model velocity together with the flow bundle it was built from.
    pub fn velocity_bundle(
        &self,
        lon: f64,
        lat: f64,
        t: f64,
    ) -> Result<(Vec2, FlowBundle), FieldError> {
        let b = self.flow.bundle(lon, lat, t)?;
        let h = self
            .wind_wave
            .map(|hf| hf(b.u_e, b.u))
            .unwrap_or(Vec2::ZERO);
        let v = reduced_mr_velocity_si(&self.params, b.u, b.du_dt, coriolis_parameter(lat), h);
        Ok((v, b))
    }
}

impl VelocityModel for ReducedDrifterModel<'_> {
    fn velocity(&self, lon: f64, lat: f64, t: f64) -> Result<ModelVelocity, ModelError> {
        let (v, b) = self.velocity_bundle(lon, lat, t).map_err(ModelError::from)?;
        Ok(ModelVelocity {
            v,
            degraded: b.degraded,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_with_eps(r: f64, eps: f64, delta_p: f64) -> DrifterParams {
        DrifterParams::from_groups(r, eps * r, delta_p, 1.2e-3, 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn neutral_buoyancy_gives_two_thirds() {
        let p = PhysicalDrifterParams::default();
        let dp = DrifterParams::from_physical(&p, 1.0e4, 0.5).unwrap();
        assert!((dp.r - 2.0 / 3.0).abs() < 1e-15);
        assert!((dp.delta_p - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nondimensional_groups_reference_case() {
        // a = 0.05 m, nu_f = 1e-6, L = 1e4 m, U = 0.5 m/s:
        // Re = 5e9, St = (2/9)(5e-6)^2 * 5e9 = 1/36, eps = St/(2/3) = 1/24.
        let p = PhysicalDrifterParams::default();
        let dp = DrifterParams::from_physical(&p, 1.0e4, 0.5).unwrap();
        assert!((dp.st - 1.0 / 36.0).abs() < 1e-12, "St {}", dp.st);
        assert!((dp.eps - 1.0 / 24.0).abs() < 1e-12, "eps {}", dp.eps);
        assert!((dp.eps * dp.mu - 1.0).abs() < 1e-12);
        // delta_a = 1.2 / 1025
        assert!((dp.delta_a - 1.1707e-3).abs() < 1e-6);
    }

    #[test]
    fn rejects_nonpositive_scales() {
        let p = PhysicalDrifterParams::default();
        assert!(DrifterParams::from_physical(&p, 0.0, 0.5).is_err());
        assert!(DrifterParams::from_physical(&p, 1.0e4, -1.0).is_err());
    }

    #[test]
    fn coriolis_reference_values() {
        assert_eq!(coriolis_parameter(0.0), 0.0);
        let f45 = coriolis_parameter(45.0);
        assert!((f45 - 1.03126e-4).abs() < 1e-9, "{f45}");
        assert!((coriolis_parameter(-45.0) + f45).abs() < 1e-18);
    }

    #[test]
    fn reduced_model_eps_zero_limit() {
        // eps -> 0 recovers the fluid velocity; with eps tiny the correction
        // scales away.
        let params = params_with_eps(0.9, 1e-12, 1.1);
        let u = Vec2::new(0.4, -0.2);
        let v = reduced_mr_velocity_scaled(&params, u, Vec2::new(1.0, 2.0), 0.7, Vec2::new(3.0, -1.0));
        assert!((v - u).norm() < 1e-10);
    }

    #[test]
    fn reduced_model_neutral_density_drops_coriolis() {
        let params = params_with_eps(0.9, 0.05, 1.0);
        let u = Vec2::new(0.4, -0.2);
        let du_dt = Vec2::new(0.3, 0.1);
        let v = reduced_mr_velocity_scaled(&params, u, du_dt, 123.0, Vec2::ZERO);
        let expect = u + du_dt * (params.eps * (1.5 * params.r - 1.0));
        assert!((v - expect).norm() < 1e-15);
    }

    #[test]
    fn reduced_model_r_two_thirds_drops_du_dt() {
        // (1 - 3R/2) vanishes exactly at R = 2/3: solid-rotation sample.
        let params = params_with_eps(2.0 / 3.0, 0.01, 1.0);
        let u = Vec2::new(0.0, 10.0);
        let du_dt = Vec2::new(-1.0e-3, 0.0);
        let v = reduced_mr_velocity_scaled(&params, u, du_dt, 0.5, Vec2::ZERO);
        assert_eq!(v, u);
    }

    #[test]
    fn full_rhs_relaxation_term() {
        let params = params_with_eps(2.0 / 3.0, 0.1, 1.0);
        let flow = ScaledAnalyticFlow {
            field: AnalyticField::UniformStream { c: Vec2::new(0.5, 0.0) },
            coriolis: 0.0,
        };
        let state = FullState { x: Vec2::ZERO, v: Vec2::ZERO };
        let (xdot, vdot) = full_mr_rhs(&state, 0.0, &flow, &params, None).unwrap();
        assert_eq!(xdot, Vec2::ZERO);
        assert!((vdot - Vec2::new(5.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn full_rhs_on_manifold_reduces_to_du_dt_term() {
        let field = AnalyticField::SolidRotation { omega: 1.0, center: Vec2::ZERO };
        let flow = ScaledAnalyticFlow { field, coriolis: 0.0 };
        let params = params_with_eps(0.8, 0.05, 1.0);
        let x = Vec2::new(1.0, 0.0);
        let state = FullState { x, v: flow.velocity(x, 0.0) };
        let (_, vdot) = full_mr_rhs(&state, 0.0, &flow, &params, None).unwrap();
        let expect = flow.material_derivative(x, 0.0) * (1.5 * params.r);
        assert!((vdot - expect).norm() < 1e-12, "{vdot:?} vs {expect:?}");
    }

    #[test]
    fn full_rhs_wind_drag_term() {
        let mut params = params_with_eps(2.0 / 3.0, 0.1, 1.0);
        params.delta_a = 1.0e-3;
        params.nu_a_alpha = 10.0;
        let flow = ScaledAnalyticFlow {
            field: AnalyticField::UniformStream { c: Vec2::ZERO },
            coriolis: 0.0,
        };
        let state = FullState { x: Vec2::ZERO, v: Vec2::new(1.0, 0.0) };
        let (_, vdot) = full_mr_rhs(&state, 0.0, &flow, &params, None).unwrap();
        // (u - v)/eps = (-10, 0) plus drag -(2/3)*1e-3*10*(1,0)
        let drag = vdot + Vec2::new(10.0, 0.0);
        assert!((drag - Vec2::new(-2.0 / 3.0 * 1.0e-2, 0.0)).norm() < 1e-15, "{drag:?}");
    }

    #[test]
    fn full_rhs_rejects_zero_eps() {
        let mut params = params_with_eps(2.0 / 3.0, 0.1, 1.0);
        params.eps = 0.0;
        let flow = ScaledAnalyticFlow {
            field: AnalyticField::UniformStream { c: Vec2::ZERO },
            coriolis: 0.0,
        };
        let state = FullState { x: Vec2::ZERO, v: Vec2::ZERO };
        assert!(matches!(
            full_mr_rhs(&state, 0.0, &flow, &params, None),
            Err(DynamicsError::NonPositiveEpsilon(_))
        ));
    }

    #[test]
    fn perturbed_velocity_relaxes_to_manifold() {
        // |v - u| contracts by at least e^-1 within scaled time ~ eps.
        let field = AnalyticField::SolidRotation { omega: 1.0, center: Vec2::ZERO };
        let flow = ScaledAnalyticFlow { field, coriolis: 0.3 };
        let params = params_with_eps(0.9, 0.02, 1.05);
        let x0 = Vec2::new(1.0, 0.0);
        let delta = Vec2::new(0.1, -0.05);
        let mut state = FullState { x: x0, v: flow.velocity(x0, 0.0) + delta };
        let dt = params.eps / 40.0;
        let horizon = params.eps * 1.2;
        let mut t = 0.0;
        while t < horizon {
            state = step_full_scaled(&flow, &params, None, &state, t, dt).unwrap();
            t += dt;
        }
        let gap = (state.v - flow.velocity(state.x, t)).norm();
        assert!(
            gap <= delta.norm() * (-1.0f64).exp() * 1.05,
            "gap {gap} vs initial {}",
            delta.norm()
        );
    }

    #[test]
    fn slow_manifold_gap_shrinks_quadratically() {
        let field = AnalyticField::SolidRotation { omega: 1.0, center: Vec2::ZERO };
        let flow = ScaledAnalyticFlow { field, coriolis: 0.5 };
        let gaps: Vec<f64> = [0.04, 0.02]
            .iter()
            .map(|&eps| {
                let params = params_with_eps(0.9, eps, 1.1);
                slow_manifold_velocity_gap(&flow, &params, None, Vec2::new(1.0, 0.0), 0.5, 2.0)
                    .unwrap()
            })
            .collect();
        let ratio = gaps[0] / gaps[1];
        assert!((3.2..=4.8).contains(&ratio), "gaps {gaps:?} ratio {ratio}");
    }
}
