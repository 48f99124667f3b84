//! Junction memory-state dynamics.
//!
//! Each junction carries a state `g` in [0, 1] obeying
//! `dg/dt = Kp(V) (1 - g) - Kd(V) g` with exponentially voltage-modulated
//! rates. States map affinely onto conductance between `g_min` and `g_max`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the junction voltage enters the rate exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VoltageMode {
    /// `Kp = kp exp(eta_p |v|)`, `Kd = kd exp(-eta_d |v|)`: either polarity potentiates.
    #[default]
    Magnitude,
    /// `Kp = kp exp(eta_p v)`, `Kd = kd exp(-eta_d v)`.
    Signed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsParams {
    /// Base potentiation rate, 1/timestep.
    pub k_p: f64,
    /// Base depression rate, 1/timestep.
    pub k_d: f64,
    /// 1/V
    pub eta_p: f64,
    /// 1/V
    pub eta_d: f64,
    /// S
    pub g_min: f64,
    /// S
    pub g_max: f64,
    /// Integration step in timesteps.
    pub dt: f64,
    pub mode: VoltageMode,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            k_p: 0.001,
            k_d: 0.5,
            eta_p: 1.0,
            eta_d: 1.0,
            g_min: 0.001,
            g_max: 1.0,
            dt: 1.0,
            mode: VoltageMode::Magnitude,
        }
    }
}

/// Upper bound on Euler sub-steps per drive timestep.
pub const MAX_SUBSTEPS: usize = 100_000;

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.k_p > 0.0
            && self.k_d > 0.0
            && self.dt > 0.0
            && self.g_min >= 0.0
            && self.g_min < self.g_max
            && [
                self.k_p, self.k_d, self.eta_p, self.eta_d, self.g_min, self.g_max, self.dt,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid dynamics parameters: need k_p > 0, k_d > 0, dt > 0, 0 <= g_min < g_max (got {self:?})"
            )))
        }
    }

    /// Largest `Kp(v) + Kd(v)` over `|v| <= v_max`.
    ///
    /// The sum is convex in `v`, so the maximum sits at an end of the range.
    pub fn max_rate_sum(&self, v_max: f64) -> Result<f64> {
        let v_max = v_max.abs();
        let ends: &[f64] = match self.mode {
            VoltageMode::Magnitude => &[0.0, v_max],
            VoltageMode::Signed => &[-v_max, v_max],
        };
        let mut worst = 0.0f64;
        for &v in ends {
            let (kp, kd) = rates(v, self)?;
            worst = worst.max(kp + kd);
        }
        Ok(worst)
    }

    /// Whether `dt (Kp + Kd) < 1` holds for every drop with `|v| <= v_max`.
    pub fn is_stable(&self, v_max: f64) -> bool {
        self.max_rate_sum(v_max).is_ok_and(|s| self.dt * s < 1.0)
    }

    /// Euler sub-steps per timestep needed to keep `dt/n (Kp + Kd) < 1` for
    /// drops up to `v_max`. Equals 1 whenever the plain step is stable.
    pub fn substeps_for(&self, v_max: f64) -> Result<usize> {
        let s = self.dt * self.max_rate_sum(v_max)?;
        let n = (s.floor() as usize).saturating_add(1);
        if n > MAX_SUBSTEPS {
            return Err(Error::InvalidArgument(format!(
                "rates up to {s:.3e} per step would need {n} Euler sub-steps (limit {MAX_SUBSTEPS})"
            )));
        }
        Ok(n)
    }

    pub fn conductance(&self, g: f64) -> f64 {
        conductance(g, self)
    }
}

/// Voltage-modulated potentiation and depression rates `(Kp, Kd)`.
pub fn rates(v: f64, params: &DynamicsParams) -> Result<(f64, f64)> {
    if !v.is_finite() {
        return Err(Error::Numerical(format!("non-finite junction voltage {v}")));
    }
    let x = match params.mode {
        VoltageMode::Magnitude => v.abs(),
        VoltageMode::Signed => v,
    };
    let kp = params.k_p * (params.eta_p * x).exp();
    let kd = params.k_d * (-params.eta_d * x).exp();
    if !kp.is_finite() || !kd.is_finite() {
        return Err(Error::Saturated {
            junction: None,
            voltage: v,
        });
    }
    Ok((kp, kd))
}

/// One forward-Euler step of the memory-state equation, clamped to [0, 1].
pub fn step(g: f64, v: f64, params: &DynamicsParams) -> Result<f64> {
    step_with(g, v, params.dt, params)
}

fn step_with(g: f64, v: f64, dt: f64, params: &DynamicsParams) -> Result<f64> {
    if !g.is_finite() {
        return Err(Error::Numerical(format!("non-finite junction state {g}")));
    }
    let (kp, kd) = rates(v, params)?;
    Ok((g + dt * (kp * (1.0 - g) - kd * g)).clamp(0.0, 1.0))
}

/// Advance one drive timestep at a fixed drop `v` using `substeps` equal
/// Euler steps.
pub fn advance(g: f64, v: f64, params: &DynamicsParams, substeps: usize) -> Result<f64> {
    if substeps <= 1 {
        return step(g, v, params);
    }
    if !g.is_finite() {
        return Err(Error::Numerical(format!("non-finite junction state {g}")));
    }
    let h = params.dt / substeps as f64;
    let (kp, kd) = rates(v, params)?;
    let mut g = g;
    for _ in 0..substeps {
        g = (g + h * (kp * (1.0 - g) - kd * g)).clamp(0.0, 1.0);
    }
    Ok(g)
}

/// Affine state-to-conductance map, siemens.
pub fn conductance(g: f64, params: &DynamicsParams) -> f64 {
    params.g_min + g * (params.g_max - params.g_min)
}

/// Fixed point `Kp / (Kp + Kd)` at drop `v`.
pub fn fixed_point(v: f64, params: &DynamicsParams) -> Result<f64> {
    let (kp, kd) = rates(v, params)?;
    Ok(kp / (kp + kd))
}
