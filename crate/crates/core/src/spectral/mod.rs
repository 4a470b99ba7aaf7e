//! Spectral RPE parameterizations, frequency sampling and the low-rank
//! feature decomposition `N ≈ N1 N2ᵀ` of the RPE mask.

mod features;
mod json;
mod positions;
mod rpe;

pub use features::{
    build_feature_pair, build_feature_pair_with, feature_pair_tape, sample_frequencies, FeatureMatrices,
    FourierFeatureConfig, Representation, RpeFeaturePair, WeightPlacement,
};
pub use positions::PositionSet;
pub use rpe::{box_convolution_power, sinc_term, SpectralDensity, SpectralRpe};
