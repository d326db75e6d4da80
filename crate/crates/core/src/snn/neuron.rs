use crate::error::bail;
use crate::math::sigmoid;
use crate::Result;

/// Reset rule applied after a spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ResetMode {
    /// `u = ũ − V_th·o`.
    #[default]
    SoftSubtract,
}

/// Parameters shared by every neuron of a layer.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LifParams {
    /// Membrane leak `α = 1 − 1/τ_mem`, in `(0, 1]`.
    pub leak_alpha: f64,
    pub v_threshold: f64,
    /// Width `w` of the sigmoid surrogate `σ(x/w)`.
    pub surrogate_width: f64,
    pub reset_mode: ResetMode,
}

impl Default for LifParams {
    fn default() -> Self {
        Self { leak_alpha: 0.5, v_threshold: 1.0, surrogate_width: 0.25, reset_mode: ResetMode::SoftSubtract }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.leak_alpha > 0.0 && self.leak_alpha <= 1.0) {
            bail!(Domain, "leak_alpha must lie in (0, 1], got {}", self.leak_alpha);
        }
        if !(self.v_threshold > 0.0 && self.v_threshold.is_finite()) {
            bail!(Domain, "v_threshold must be positive, got {}", self.v_threshold);
        }
        if !(self.surrogate_width > 0.0 && self.surrogate_width.is_finite()) {
            bail!(Domain, "surrogate_width must be positive, got {}", self.surrogate_width);
        }
        Ok(())
    }

    /// Smooth stand-in for the spike: `σ((ũ − V_th)/w)`.
    pub fn relaxed_spike(&self, pre_reset: f64) -> f64 {
        sigmoid((pre_reset - self.v_threshold) / self.surrogate_width)
    }

    pub fn heaviside(&self, pre_reset: f64) -> f64 {
        if pre_reset - self.v_threshold >= 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

/// `φ′(ũ − V_th)` for the sigmoid surrogate: `σ(x/w)(1 − σ(x/w))/w`.
pub fn surrogate_derivative(pre_reset: f64, params: &LifParams) -> f64 {
    let w = params.surrogate_width;
    let s = sigmoid((pre_reset - params.v_threshold) / w);
    s * (1.0 - s) / w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(width: f64) -> LifParams {
        LifParams { surrogate_width: width, ..LifParams::default() }
    }

    #[test]
    fn peak_at_threshold() {
        let p = params(0.25);
        assert!((surrogate_derivative(p.v_threshold, &p) - 1.0 / (4.0 * 0.25)).abs() < 1e-15);
        let p = params(2.0);
        assert!((surrogate_derivative(1.0, &p) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn even_around_threshold() {
        let p = params(0.3);
        let a = surrogate_derivative(p.v_threshold + 5.0 * 0.3, &p);
        let b = surrogate_derivative(p.v_threshold - 5.0 * 0.3, &p);
        assert!((a - b).abs() < 1e-15);
        assert!(a > 0.0);
        assert!(a < surrogate_derivative(p.v_threshold, &p));
    }

    #[test]
    fn unit_width_at_distance_one() {
        // Direct evaluation: σ(1)(1 − σ(1)) with σ(1) = 1/(1 + e^{-1}).
        let s1 = 1.0 / (1.0 + libm::exp(-1.0));
        let expected = s1 * (1.0 - s1);
        let p = LifParams { v_threshold: 1.0, surrogate_width: 1.0, ..LifParams::default() };
        let got = surrogate_derivative(2.0, &p);
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.196_611_933_241_481_85).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_params() {
        assert!(LifParams { leak_alpha: 0.0, ..LifParams::default() }.validate().is_err());
        assert!(LifParams { leak_alpha: 1.5, ..LifParams::default() }.validate().is_err());
        assert!(LifParams { v_threshold: -1.0, ..LifParams::default() }.validate().is_err());
        assert!(LifParams { surrogate_width: 0.0, ..LifParams::default() }.validate().is_err());
        assert!(LifParams { leak_alpha: 1.0, ..LifParams::default() }.validate().is_ok());
    }
}
