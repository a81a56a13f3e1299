use serde::{Deserialize, Serialize};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

/// tanh-approximated GELU.
pub fn gelu(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub fn gelu_prime(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub fn gelu_second(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    let ddu = SQRT_2_OVER_PI * 6.0 * GELU_CUBIC * x;
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    sech2 * du + 0.5 * x * sech2 * (ddu - 2.0 * t * du * du)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `max |gelu'(x)|` over the grid `[-6, 6]` with step `1e-4`.
///
/// The maximum sits near x = 1.5 (about 1.129); the tails of gelu' tend to
/// 0 and 1, so the grid bracket is wide enough.
pub fn gelu_lipschitz() -> f64 {
    let steps = 120_000;
    (0..=steps)
        .map(|i| gelu_prime(-6.0 + i as f64 * 1e-4).abs())
        .fold(0.0, f64::max)
}

/// Elementwise nonlinearity used between affine layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Gelu,
    Identity,
    /// Kinked at zero; no second derivative is registered, so it cannot
    /// appear in a critic whose input gradient must be differentiated.
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Gelu => "gelu",
            Activation::Identity => "identity",
            Activation::Relu => "relu",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => gelu(x),
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }

    /// Global Lipschitz constant `sup |act'|`.
    pub fn lipschitz(self) -> f64 {
        match self {
            Activation::Gelu => gelu_lipschitz(),
            Activation::Identity | Activation::Relu => 1.0,
        }
    }

    pub fn has_second_derivative(self) -> bool {
        !matches!(self, Activation::Relu)
    }
}
