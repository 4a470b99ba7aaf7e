//! JSON documents `{"variant", "ell", "params"}` for [`SpectralRpe`].
//! Reals are hex-float strings so that round trips are bit-exact.

use serde::{Deserialize, Serialize};

use super::rpe::{GaussianBasis3D, GaussianMixture, LocalSincSum, ShiftInvariantKernel};
use super::{SpectralDensity, SpectralRpe};
use crate::error::{Error, Result};
use crate::hexfloat::{serde_f64, serde_vec};

#[derive(Serialize, Deserialize)]
struct MixtureParams {
    #[serde(with = "serde_vec")]
    weights: Vec<f64>,
    /// Row-major `T x ell`.
    #[serde(with = "serde_vec")]
    centers: Vec<f64>,
    #[serde(with = "serde_vec")]
    log_sigmas: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SincSumParams {
    #[serde(with = "serde_vec")]
    weights: Vec<f64>,
    #[serde(with = "serde_vec")]
    log_radii: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SincProductParams {
    #[serde(with = "serde_f64")]
    amplitude: f64,
    #[serde(with = "serde_vec")]
    log_radii: Vec<f64>,
    orders: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct BasisParams {
    #[serde(with = "serde_vec")]
    weights: Vec<f64>,
    #[serde(with = "serde_vec")]
    log_sigmas: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DensityKind {
    Gaussian,
    Cauchy,
}

#[derive(Serialize, Deserialize)]
struct KernelParams {
    #[serde(with = "serde_f64")]
    log_scale: f64,
    density: DensityKind,
    #[serde(with = "serde_f64")]
    log_lengthscale: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
enum Document {
    GaussianMixture { ell: usize, params: MixtureParams },
    LocalSincSum { ell: usize, params: SincSumParams },
    LocalSincProduct { ell: usize, params: SincProductParams },
    #[serde(rename = "gaussian_basis_3d")]
    GaussianBasis3d { ell: usize, params: BasisParams },
    ShiftInvariantKernel { ell: usize, params: KernelParams },
}

impl SpectralRpe {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json_value()?)?)
    }

    pub fn to_json_value(&self) -> Result<serde_json::Value> {
        let ell = self.dim();
        let doc = match self {
            Self::GaussianMixture(g) => Document::GaussianMixture {
                ell,
                params: MixtureParams {
                    weights: g.weights.clone(),
                    centers: g.centers.clone(),
                    log_sigmas: g.log_sigmas.clone(),
                },
            },
            Self::LocalSincSum(s) => Document::LocalSincSum {
                ell,
                params: SincSumParams {
                    weights: s.weights.clone(),
                    log_radii: s.log_radii.clone(),
                },
            },
            Self::LocalSincProduct(p) => Document::LocalSincProduct {
                ell,
                params: SincProductParams {
                    amplitude: p.amplitude,
                    log_radii: p.log_radii.clone(),
                    orders: p.orders.clone(),
                },
            },
            Self::GaussianBasis3D(b) => Document::GaussianBasis3d {
                ell,
                params: BasisParams {
                    weights: b.weights.clone(),
                    log_sigmas: b.log_sigmas.clone(),
                },
            },
            Self::ShiftInvariantKernel(k) => {
                let (density, log_lengthscale) = match k.density {
                    SpectralDensity::Gaussian { log_lengthscale } => (DensityKind::Gaussian, log_lengthscale),
                    SpectralDensity::Cauchy { log_lengthscale } => (DensityKind::Cauchy, log_lengthscale),
                    SpectralDensity::Custom(_) => {
                        return Err(Error::Unsupported("custom spectral densities cannot be serialized".into()))
                    }
                };
                Document::ShiftInvariantKernel {
                    ell,
                    params: KernelParams {
                        log_scale: k.log_scale,
                        density,
                        log_lengthscale,
                    },
                }
            }
        };
        Ok(serde_json::to_value(doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_value(serde_json::from_str(text)?)
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let doc: Document = serde_json::from_value(value)?;
        let finite = |xs: &[f64]| -> Result<()> {
            if xs.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::invalid("non-finite value in spectral parameters"))
            }
        };
        let rpe = match doc {
            Document::GaussianMixture { ell, params } => {
                let t = params.weights.len();
                if ell == 0 || t == 0 || params.log_sigmas.len() != t || params.centers.len() != t * ell {
                    return Err(Error::invalid("gaussian mixture parameter lengths disagree"));
                }
                finite(&params.weights)?;
                finite(&params.centers)?;
                finite(&params.log_sigmas)?;
                Self::GaussianMixture(GaussianMixture {
                    ell,
                    weights: params.weights,
                    centers: params.centers,
                    log_sigmas: params.log_sigmas,
                })
            }
            Document::LocalSincSum { ell, params } => {
                if ell != 1 || params.weights.is_empty() || params.weights.len() != params.log_radii.len() {
                    return Err(Error::invalid("local sinc sum is 1-D with matching weights and radii"));
                }
                finite(&params.weights)?;
                finite(&params.log_radii)?;
                Self::LocalSincSum(LocalSincSum {
                    weights: params.weights,
                    log_radii: params.log_radii,
                })
            }
            Document::LocalSincProduct { ell, params } => {
                if ell != params.log_radii.len() {
                    return Err(Error::invalid("local sinc product needs one radius per axis"));
                }
                finite(&params.log_radii)?;
                let radii: Vec<f64> = params.log_radii.iter().map(|x| x.exp()).collect();
                let mut rpe = Self::local_sinc_product(params.amplitude, &radii, &params.orders)?;
                if let Self::LocalSincProduct(p) = &mut rpe {
                    p.log_radii = params.log_radii;
                }
                rpe
            }
            Document::GaussianBasis3d { ell, params } => {
                if ell != 3 || params.weights.is_empty() || params.weights.len() != params.log_sigmas.len() {
                    return Err(Error::invalid("gaussian basis is 3-D with matching weights and sigmas"));
                }
                finite(&params.weights)?;
                finite(&params.log_sigmas)?;
                Self::GaussianBasis3D(GaussianBasis3D {
                    weights: params.weights,
                    log_sigmas: params.log_sigmas,
                })
            }
            Document::ShiftInvariantKernel { ell, params } => {
                if ell == 0 {
                    return Err(Error::invalid("kernel dimension must be >= 1"));
                }
                finite(&[params.log_scale, params.log_lengthscale])?;
                let log_lengthscale = params.log_lengthscale;
                Self::ShiftInvariantKernel(ShiftInvariantKernel {
                    ell,
                    log_scale: params.log_scale,
                    density: match params.density {
                        DensityKind::Gaussian => SpectralDensity::Gaussian { log_lengthscale },
                        DensityKind::Cauchy => SpectralDensity::Cauchy { log_lengthscale },
                    },
                })
            }
        };
        Ok(rpe)
    }
}
