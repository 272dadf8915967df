use serde::{Deserialize, Serialize};

/// Largest |c| fed to the correlation link.
pub const CORR_CLAMP: f64 = 1.0 - 1e-8;

/// Correlation link `eta(c) = log((1 + c) / (1 - c))`, with `|c|` clamped
/// to [`CORR_CLAMP`].
pub fn corr_link(c: f64) -> f64 {
    let c = c.clamp(-CORR_CLAMP, CORR_CLAMP);
    c.ln_1p() - (-c).ln_1p()
}

/// Inverse correlation link `(e^u - 1) / (e^u + 1)`, which is `tanh(u / 2)`.
pub fn corr_link_inv(u: f64) -> f64 {
    (0.5 * u).tanh()
}

/// Response family and link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Gaussian response, identity link.
    GaussianIdentity,
    /// Gamma response, log link; the mean is the first parameter.
    GammaLog,
    /// Gaussian response with the correlation link, mean in (-1, 1).
    GaussianCorrLink,
}

/// Floor applied to Gamma responses.
pub const GAMMA_FLOOR: f64 = 1e-10;

impl Family {
    pub fn linkinv(self, eta: f64) -> f64 {
        match self {
            Family::GaussianIdentity => eta,
            Family::GammaLog => eta.exp(),
            Family::GaussianCorrLink => corr_link_inv(self.clamp_eta(eta)),
        }
    }

    pub fn link(self, mu: f64) -> f64 {
        match self {
            Family::GaussianIdentity => mu,
            Family::GammaLog => mu.max(GAMMA_FLOOR).ln(),
            Family::GaussianCorrLink => corr_link(mu),
        }
    }

    /// d mu / d eta.
    pub(crate) fn mu_eta(self, eta: f64) -> f64 {
        match self {
            Family::GaussianIdentity => 1.0,
            Family::GammaLog => eta.exp(),
            Family::GaussianCorrLink => {
                let mu = self.linkinv(eta);
                0.5 * (1.0 - mu * mu)
            }
        }
    }

    /// Variance function V(mu).
    pub(crate) fn variance(self, mu: f64) -> f64 {
        match self {
            Family::GammaLog => mu * mu,
            _ => 1.0,
        }
    }

    pub(crate) fn clamp_eta(self, eta: f64) -> f64 {
        match self {
            Family::GaussianCorrLink => {
                let lim = corr_link(CORR_CLAMP);
                eta.clamp(-lim, lim)
            }
            // exp overflows past ~709
            Family::GammaLog => eta.clamp(-700.0, 700.0),
            Family::GaussianIdentity => eta,
        }
    }

    /// Unit deviance contribution.
    pub(crate) fn deviance(self, y: f64, mu: f64) -> f64 {
        match self {
            Family::GammaLog => 2.0 * ((y - mu) / mu - (y / mu).ln()),
            _ => (y - mu) * (y - mu),
        }
    }

    /// Starting linear predictor for the given responses.
    pub(crate) fn initial_eta(self, y: &[f64], w: &[f64]) -> Vec<f64> {
        let wsum: f64 = w.iter().sum();
        let mean = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum;
        match self {
            Family::GaussianIdentity => y.to_vec(),
            Family::GammaLog => y.iter().map(|v| (0.5 * (v + mean)).ln()).collect(),
            Family::GaussianCorrLink => vec![corr_link(mean); y.len()],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::GaussianIdentity => "gaussian_identity",
            Family::GammaLog => "gamma_log",
            Family::GaussianCorrLink => "gaussian_corr_link",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn link_values() {
        assert_eq!(corr_link_inv(0.0), 0.0);
        assert!((corr_link(0.5) - 3f64.ln()).abs() < 1e-15);
        assert!((corr_link(0.5) - 1.098_612_3).abs() < 1e-7);
        for u in [0.1, 1.0, 10.0] {
            assert_eq!(corr_link_inv(-u), -corr_link_inv(u));
        }
    }

    #[test]
    fn link_is_stable_for_large_inputs() {
        assert_eq!(corr_link_inv(700.0), 1.0);
        assert_eq!(corr_link_inv(-700.0), -1.0);
        assert!(corr_link(1.0).is_finite());
        assert!(corr_link(-3.0).is_finite());
        assert!(corr_link(1.0) > corr_link(0.999));
    }
}
