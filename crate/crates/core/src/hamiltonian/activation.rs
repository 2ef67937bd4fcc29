use serde::{Deserialize, Serialize};

/// Monotone non-decreasing activation together with its antiderivative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn value(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    /// Antiderivative vanishing at the origin for tanh (`log cosh`), and
    /// softplus for the sigmoid.
    #[inline]
    pub fn antiderivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let a = x.abs();
                a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
            }
            Activation::Sigmoid => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        }
    }

    /// `M` with `0 <= σ' <= M`.
    pub fn derivative_bound(self) -> f64 {
        match self {
            Activation::Tanh => 1.0,
            Activation::Sigmoid => 0.25,
        }
    }

    /// Lipschitz constant `c_σ` of `σ`.
    pub fn lipschitz(self) -> f64 {
        self.derivative_bound()
    }

    /// `sup |σ|`.
    pub fn sup(self) -> f64 {
        1.0
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

#[cfg(test)]
mod tests {
    use super::*;

    const KINDS: [Activation; 2] = [Activation::Tanh, Activation::Sigmoid];

    fn grid() -> impl Iterator<Item = f64> {
        (-400..=400).map(|i| i as f64 * 0.025)
    }

    #[test]
    fn antiderivative_differentiates_to_value() {
        let h = 1e-4;
        for act in KINDS {
            for x in grid() {
                let f = |t: f64| act.antiderivative(t);
                // Richardson-extrapolated central difference.
                let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
                let d2 = (f(x + h / 2.0) - f(x - h / 2.0)) / h;
                let fd = (4.0 * d2 - d1) / 3.0;
                assert!((fd - act.value(x)).abs() < 1e-8, "{act:?} at {x}");
            }
        }
    }

    #[test]
    fn derivative_is_bounded_and_nonnegative() {
        for act in KINDS {
            for x in grid() {
                let d = act.derivative(x);
                assert!(d >= 0.0 && d <= act.derivative_bound() + 1e-15);
                let fd = (act.value(x + 1e-6) - act.value(x - 1e-6)) / 2e-6;
                assert!((fd - d).abs() < 1e-8);
                assert!(act.value(x).abs() <= act.sup());
            }
        }
    }

    #[test]
    fn logcosh_is_stable_at_large_arguments() {
        let a = Activation::Tanh;
        assert_eq!(a.antiderivative(0.0), 0.0);
        assert!((a.antiderivative(800.0) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-9);
        assert_eq!(a.antiderivative(-3.0), a.antiderivative(3.0));
        assert!((a.antiderivative(0.3) - 0.3f64.cosh().ln()).abs() < 1e-15);
    }
}
