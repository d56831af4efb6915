//! Closed-form velocity fields with exact derivatives.
//!
//! These serve as oracles: convergence tests compare gridded interpolation
//! and integrated trajectories against values that carry no discretization
//! error. Coordinates are local tangent-plane meters, time in seconds.

use serde::{Deserialize, Serialize};

use super::Vec2;

/// Velocity and all first derivatives at a point, all exact.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticSample {
    pub v: Vec2,
    pub dv_dx: Vec2,
    pub dv_dy: Vec2,
    pub dv_dt: Vec2,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticField {
    /// Rigid-body rotation at angular rate `omega` (rad/s) about `center`.
    SolidRotation { omega: f64, center: Vec2 },
    /// Periodically perturbed two-cell recirculation on [0, 2*scale] x
    /// [0, scale]. `amplitude` is in m/s, `eps_g` the dimensionless
    /// perturbation, `omega` the perturbation rate (rad/s), `scale` in m.
    DoubleGyre {
        amplitude: f64,
        eps_g: f64,
        omega: f64,
        scale: f64,
    },
    /// Constant velocity everywhere.
    UniformStream { c: Vec2 },
}

impl AnalyticField {
    pub fn velocity(&self, x: Vec2, t: f64) -> Vec2 {
        self.sample(x, t).v
    }

    /// Exact Du/Dt = du/dt + (u . grad)u.
    pub fn material_derivative(&self, x: Vec2, t: f64) -> Vec2 {
        let s = self.sample(x, t);
        s.dv_dt + s.dv_dx * s.v.x + s.dv_dy * s.v.y
    }

    /// Velocity and material derivative in one call.
    pub fn analytic_sample(&self, x: Vec2, t: f64) -> (Vec2, Vec2) {
        let s = self.sample(x, t);
        (s.v, s.dv_dt + s.dv_dx * s.v.x + s.dv_dy * s.v.y)
    }

    pub fn sample(&self, x: Vec2, t: f64) -> AnalyticSample {
        match *self {
            AnalyticField::UniformStream { c } => AnalyticSample {
                v: c,
                dv_dx: Vec2::ZERO,
                dv_dy: Vec2::ZERO,
                dv_dt: Vec2::ZERO,
            },
            AnalyticField::SolidRotation { omega, center } => {
                let r = x - center;
                AnalyticSample {
                    v: Vec2::new(-omega * r.y, omega * r.x),
                    dv_dx: Vec2::new(0.0, omega),
                    dv_dy: Vec2::new(-omega, 0.0),
                    dv_dt: Vec2::ZERO,
                }
            }
            AnalyticField::DoubleGyre {
                amplitude,
                eps_g,
                omega,
                scale,
            } => {
                let pi = std::f64::consts::PI;
                let (xs, ys) = (x.x / scale, x.y / scale);
                let e = eps_g * (omega * t).sin();
                let de = eps_g * omega * (omega * t).cos();
                let f = e * xs * xs + (1.0 - 2.0 * e) * xs;
                let fx = 2.0 * e * xs + 1.0 - 2.0 * e;
                let fxx = 2.0 * e;
                let ft = de * (xs * xs - 2.0 * xs);
                let fxt = 2.0 * de * (xs - 1.0);
                let (spf, cpf) = (pi * f).sin_cos();
                let (spy, cpy) = (pi * ys).sin_cos();
                let u = -pi * amplitude * spf * cpy;
                let v = pi * amplitude * cpf * spy * fx;
                // Derivatives w.r.t. the dimensionless coordinates, then the
                // 1/scale chain factor for physical x, y.
                let du_dxs = -pi * pi * amplitude * cpf * cpy * fx;
                let du_dys = pi * pi * amplitude * spf * spy;
                let dv_dxs = -pi * pi * amplitude * spf * spy * fx * fx
                    + pi * amplitude * cpf * spy * fxx;
                let dv_dys = pi * pi * amplitude * cpf * cpy * fx;
                let du_dt = -pi * pi * amplitude * cpf * cpy * ft;
                let dv_dt = -pi * pi * amplitude * spf * spy * ft * fx
                    + pi * amplitude * cpf * spy * fxt;
                AnalyticSample {
                    v: Vec2::new(u, v),
                    dv_dx: Vec2::new(du_dxs / scale, dv_dxs / scale),
                    dv_dy: Vec2::new(du_dys / scale, dv_dys / scale),
                    dv_dt: Vec2::new(du_dt, dv_dt),
                }
            }
        }
    }
}
