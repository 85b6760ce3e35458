//! Signal representations and glottal flow recovery.

mod iaif;
mod lpc;
mod pitch;
mod spectral;

pub use iaif::{iaif, IaifConfig};
pub use lpc::{autocorrelation, inverse_filter, levinson_durbin, synthesis_filter, LpcModel};
pub use pitch::{estimate_f0, f0_contour, tremor_index, F0Estimate, TremorConfig};
pub use spectral::{
    build_stack, cepstral_features, default_resolutions, spectrogram, LayerDescriptor,
    RepresentationStack,
};

use serde::{Deserialize, Serialize};

/// Normalized glottal flow and its first difference derivative.
///
/// For flows recovered from audio, `sample_rate` is the audio rate in Hz;
/// for model-generated flows it is steps per unit model time (1/dt).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlottalFlowSignal {
    pub flow: Vec<f64>,
    pub flow_deriv: Vec<f64>,
    pub sample_rate: f64,
    pub normalized: bool,
}

impl GlottalFlowSignal {
    /// Build a flow signal, deriving the derivative as
    /// (flow[n] - flow[n-1]) * sample_rate with flow[-1] taken as flow[0].
    pub fn from_flow(flow: Vec<f64>, sample_rate: f64, normalized: bool) -> Self {
        let mut deriv = Vec::with_capacity(flow.len());
        for (i, &v) in flow.iter().enumerate() {
            let prev = if i == 0 { v } else { flow[i - 1] };
            deriv.push((v - prev) * sample_rate);
        }
        Self {
            flow,
            flow_deriv: deriv,
            sample_rate,
            normalized,
        }
    }

    pub fn len(&self) -> usize {
        self.flow.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flow.is_empty()
    }
}
