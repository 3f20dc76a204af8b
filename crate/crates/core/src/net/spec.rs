use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Conv,
    DilatedConv,
    Deconv,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Spatial stride: `Down` halves the resolution, `Up` doubles it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stride {
    One,
    Down,
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: usize,
    pub dilation: usize,
    pub stride: Stride,
    /// Filter count at width multiplier 1.
    pub filters: usize,
    pub has_batchnorm: bool,
    pub activation: Activation,
}

impl LayerSpec {
    const fn hidden(kind: LayerKind, kernel: usize, dilation: usize, stride: Stride, filters: usize) -> Self {
        Self {
            kind,
            kernel,
            dilation,
            stride,
            filters,
            has_batchnorm: true,
            activation: Activation::Relu,
        }
    }
}

/// The completion network: encoder, dilated bottleneck, decoder.
const COMPLETION_NET: [LayerSpec; 17] = {
    use LayerKind::*;
    use Stride::*;
    [
        LayerSpec::hidden(Conv, 5, 1, One, 32),
        LayerSpec::hidden(Conv, 3, 1, Down, 64),
        LayerSpec::hidden(Conv, 3, 1, One, 64),
        LayerSpec::hidden(Conv, 3, 1, Down, 128),
        LayerSpec::hidden(Conv, 3, 1, One, 128),
        LayerSpec::hidden(Conv, 3, 1, One, 128),
        LayerSpec::hidden(DilatedConv, 3, 2, One, 128),
        LayerSpec::hidden(DilatedConv, 3, 4, One, 128),
        LayerSpec::hidden(DilatedConv, 3, 8, One, 128),
        LayerSpec::hidden(DilatedConv, 3, 16, One, 128),
        LayerSpec::hidden(Conv, 3, 1, One, 128),
        LayerSpec::hidden(Conv, 3, 1, One, 128),
        LayerSpec::hidden(Deconv, 4, 1, Up, 64),
        LayerSpec::hidden(Conv, 3, 1, One, 64),
        LayerSpec::hidden(Deconv, 4, 1, Up, 32),
        LayerSpec::hidden(Conv, 3, 1, One, 16),
        LayerSpec {
            kind: Output,
            kernel: 3,
            dilation: 1,
            stride: One,
            filters: 3,
            has_batchnorm: false,
            activation: Activation::Sigmoid,
        },
    ]
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    pub input_channels: usize,
    pub width_multiplier: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::completion(1.0)
    }
}

impl ModelSpec {
    /// The 17-layer completion network with every hidden filter count
    /// scaled by `width_multiplier`.
    pub fn completion(width_multiplier: f64) -> Self {
        Self {
            layers: COMPLETION_NET.to_vec(),
            input_channels: 5,
            width_multiplier,
        }
    }

    /// Effective output channels of layer `idx`. The output layer always
    /// emits three channels.
    pub fn filters(&self, idx: usize) -> usize {
        let layer = &self.layers[idx];
        if layer.kind == LayerKind::Output {
            layer.filters
        } else {
            ((layer.filters as f64 * self.width_multiplier).round() as usize).max(1)
        }
    }

    pub fn in_channels(&self, idx: usize) -> usize {
        if idx == 0 {
            self.input_channels
        } else {
            self.filters(idx - 1)
        }
    }

    /// Input height and width must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        let downs = self.layers.iter().filter(|l| l.stride == Stride::Down).count();
        1 << downs
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("model has no layers"));
        }
        if !(self.width_multiplier > 0.0) {
            return Err(Error::invalid(format!(
                "width_multiplier must be positive, got {}",
                self.width_multiplier
            )));
        }
        if self.input_channels == 0 {
            return Err(Error::invalid("input_channels must be positive"));
        }
        let last = self.layers.len() - 1;
        let mut scale: i32 = 0;
        for (i, l) in self.layers.iter().enumerate() {
            if l.dilation == 0 || l.filters == 0 || l.kernel == 0 {
                return Err(Error::invalid(format!("layer {i}: kernel, dilation and filters must be positive")));
            }
            if (l.activation == Activation::Sigmoid) != (i == last) {
                return Err(Error::invalid("exactly the last layer must use a sigmoid"));
            }
            if l.has_batchnorm == (i == last) {
                return Err(Error::invalid("every layer except the last must carry batch normalization"));
            }
            match (l.kind, l.stride) {
                (LayerKind::Deconv, Stride::Up) => scale += 1,
                (LayerKind::Deconv, _) | (_, Stride::Up) => {
                    return Err(Error::invalid(format!("layer {i}: only deconvolutions upsample")))
                }
                (_, Stride::Down) => scale -= 1,
                (_, Stride::One) => {}
            }
            if l.kind == LayerKind::Deconv && l.kernel != 4 {
                return Err(Error::invalid(format!("layer {i}: deconvolutions use 4x4 kernels")));
            }
        }
        if scale != 0 {
            return Err(Error::invalid("output resolution must equal input resolution"));
        }
        if self.filters(last) != 3 {
            return Err(Error::invalid("the output layer must produce 3 channels"));
        }
        Ok(())
    }

    /// Output `(channels, height, width)` of every layer for an input of the
    /// given size.
    pub fn layer_shapes(&self, height: usize, width: usize) -> Vec<(usize, usize, usize)> {
        let (mut h, mut w) = (height, width);
        (0..self.layers.len())
            .map(|i| {
                match self.layers[i].stride {
                    Stride::Down => {
                        h = h.div_ceil(2);
                        w = w.div_ceil(2);
                    }
                    Stride::Up => {
                        h *= 2;
                        w *= 2;
                    }
                    Stride::One => {}
                }
                (self.filters(i), h, w)
            })
            .collect()
    }

    /// Receptive field, in input pixels, of an interior output pixel.
    pub fn receptive_field(&self) -> usize {
        self.receptive_field_of(0..self.layers.len())
    }

    /// Receptive field of the layer range `layers`, measured at the input
    /// resolution of its first layer, for an interior output pixel (the
    /// widest over stride alignments).
    pub fn receptive_field_of(&self, layers: std::ops::Range<usize>) -> usize {
        // Large virtual canvas so padding never clips the interval.
        const CANVAS: i64 = 1 << 20;
        (0..4)
            .map(|offset| {
                let (mut lo, mut hi) = (CANVAS / 2 + offset, CANVAS / 2 + offset);
                for l in self.layers[layers.clone()].iter().rev() {
                    let k = l.kernel as i64;
                    let d = l.dilation as i64;
                    let eff = (k - 1) * d + 1;
                    match l.stride {
                        Stride::One => {
                            let pad = (eff - 1) / 2;
                            lo -= pad;
                            hi += eff - 1 - pad;
                        }
                        Stride::Down => {
                            // Odd "same" padding lands after the image, so pad_top = (eff - 2) / 2.
                            let pad = (eff - 2).max(0) / 2;
                            lo = lo * 2 - pad;
                            hi = hi * 2 + eff - 1 - pad;
                        }
                        Stride::Up => {
                            // Output o reads input i whenever o = 2i + tap - 1, tap in 0..4.
                            lo = (lo + 1 - (k - 1)).div_euclid(2) + i64::from((lo + 1 - (k - 1)).rem_euclid(2) != 0);
                            hi = (hi + 1).div_euclid(2);
                        }
                    }
                }
                (hi - lo + 1) as usize
            })
            .max()
            .unwrap_or(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_net_filters() {
        let spec = ModelSpec::completion(1.0);
        spec.validate().unwrap();
        let filters: Vec<usize> = (0..17).map(|i| spec.filters(i)).collect();
        assert_eq!(
            filters,
            [32, 64, 64, 128, 128, 128, 128, 128, 128, 128, 128, 128, 64, 64, 32, 16, 3]
        );
        let dilations: Vec<usize> = spec.layers.iter().map(|l| l.dilation).collect();
        assert_eq!(dilations, [1, 1, 1, 1, 1, 1, 2, 4, 8, 16, 1, 1, 1, 1, 1, 1, 1]);
        assert_eq!(spec.size_multiple(), 4);
    }

    #[test]
    fn width_multiplier_scales_hidden_layers_only() {
        let spec = ModelSpec::completion(0.25);
        assert_eq!(spec.filters(0), 8);
        assert_eq!(spec.filters(3), 32);
        assert_eq!(spec.filters(15), 4);
        assert_eq!(spec.filters(16), 3);
        let tiny = ModelSpec::completion(0.125);
        assert_eq!(tiny.filters(15), 2);
    }

    #[test]
    fn bottleneck_is_quarter_resolution() {
        let shapes = ModelSpec::completion(1.0).layer_shapes(64, 64);
        assert_eq!(shapes[3], (128, 16, 16));
        assert_eq!(shapes.iter().map(|s| s.1).min(), Some(16));
        assert_eq!(shapes[16], (3, 64, 64));
    }

    #[test]
    fn dilation_stack_receptive_field() {
        let spec = ModelSpec::completion(1.0);
        assert_eq!(spec.receptive_field_of(6..10), 1 + 2 * (2 + 4 + 8 + 16));
        assert_eq!(spec.receptive_field_of(0..1), 5);
        assert_eq!(spec.receptive_field_of(1..2), 3);
        assert!(spec.receptive_field() > 4 * 61);
    }

    #[test]
    fn validation_catches_broken_specs() {
        let mut s = ModelSpec::completion(1.0);
        s.layers[16].activation = Activation::Relu;
        assert!(s.validate().is_err());
        let mut s = ModelSpec::completion(1.0);
        s.layers[5].has_batchnorm = false;
        assert!(s.validate().is_err());
        let mut s = ModelSpec::completion(1.0);
        s.layers[1].stride = Stride::One;
        assert!(s.validate().is_err());
        let mut s = ModelSpec::completion(1.0);
        s.layers[7].dilation = 0;
        assert!(s.validate().is_err());
        assert!(ModelSpec::completion(0.0).validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = ModelSpec::completion(0.5);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<ModelSpec>(&json).unwrap(), s);
    }
}
