//! Sinusoidal encoding of perception age.
//!
//! The age is first re-quantized to a fixed resolution, then mapped to a fast
//! and a slow sine/cosine pair.

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};

/// Default quantization step in seconds.
pub const DEFAULT_RESOLUTION: f64 = 0.01;

/// Divisor of the slow frequency pair.
const SLOW_DIVISOR: f64 = 100.0;

/// Width of the encoding vector.
pub const TEMPORAL_DIM: usize = 4;

/// `[sin t_j, cos t_j, sin(t_j/100), cos(t_j/100)]` for a quantized age `t_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalEncoding {
    pub phi: [f64; TEMPORAL_DIM],
    pub resolution: f64,
}

impl TemporalEncoding {
    /// Encoding of zero age.
    pub fn fresh(resolution: f64) -> Self {
        Self {
            phi: [0.0, 1.0, 0.0, 1.0],
            resolution,
        }
    }

    /// All-zero slots, used when the encoder is ablated.
    pub fn zeroed(resolution: f64) -> Self {
        Self {
            phi: [0.0; TEMPORAL_DIM],
            resolution,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.phi
    }
}

/// Quantization step index `j = round(delta_t / resolution)`, ties away from zero.
pub fn quantize(delta_t: f64, resolution: f64) -> i64 {
    (delta_t / resolution).round() as i64
}

/// Encodes an age in seconds.
pub fn encode(delta_t: f64, resolution: f64) -> Result<TemporalEncoding> {
    if !delta_t.is_finite() || delta_t < 0.0 {
        return Err(NavError::InvalidInput(format!(
            "age must be finite and non-negative, got {delta_t}"
        )));
    }
    if !resolution.is_finite() || resolution <= 0.0 {
        return Err(NavError::InvalidInput(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    let j = quantize(delta_t, resolution);
    let t_j = j as f64 * resolution;
    let (s_fast, c_fast) = t_j.sin_cos();
    let (s_slow, c_slow) = (t_j / SLOW_DIVISOR).sin_cos();
    Ok(TemporalEncoding {
        phi: [s_fast, c_fast, s_slow, c_slow],
        resolution,
    })
}
