use std::fmt;
use std::str::FromStr;

/// Elementwise activation with a known Lipschitz constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    Identity,
}

impl ActivationKind {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Identity => x,
        }
    }

    /// Derivative at pre-activation `x`; the kink of (leaky) ReLU at 0 takes
    /// the left slope.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            ActivationKind::Identity => 1.0,
        }
    }

    pub fn lipschitz_constant(self) -> f64 {
        match self {
            ActivationKind::Relu | ActivationKind::Tanh | ActivationKind::Identity => 1.0,
            ActivationKind::LeakyRelu(slope) => slope.abs().max(1.0),
            ActivationKind::Sigmoid => 0.25,
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Relu => f.write_str("relu"),
            ActivationKind::LeakyRelu(slope) => write!(f, "leaky_relu:{slope:.16e}"),
            ActivationKind::Tanh => f.write_str("tanh"),
            ActivationKind::Sigmoid => f.write_str("sigmoid"),
            ActivationKind::Identity => f.write_str("identity"),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = String;

    /// Accepts `relu`, `tanh`, `sigmoid`, `identity`, `leaky_relu` (slope
    /// 0.01) and `leaky_relu:<slope>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(ActivationKind::Relu),
            "tanh" => Ok(ActivationKind::Tanh),
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "identity" => Ok(ActivationKind::Identity),
            "leaky_relu" => Ok(ActivationKind::LeakyRelu(0.01)),
            _ => match s.strip_prefix("leaky_relu:") {
                Some(slope) => slope
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .map(ActivationKind::LeakyRelu)
                    .ok_or_else(|| format!("bad leaky_relu slope {slope:?}")),
                None => Err(format!("unknown activation {s:?}")),
            },
        }
    }
}
