//! Per-vector affine scalar quantization.

/// Unsigned codes plus the affine map back to floats.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedVector {
    pub codes: Vec<u8>,
    pub min: f32,
    pub max: f32,
    pub bits: u8,
}

impl QuantizedVector {
    pub fn levels(&self) -> u32 {
        levels(self.bits)
    }

    /// Step between adjacent codes.
    pub fn scale(&self) -> f64 {
        (self.max as f64 - self.min as f64) / self.levels() as f64
    }

    pub fn offset(&self) -> f32 {
        self.min
    }

    pub fn dequantize(&self) -> Vec<f32> {
        dequantize_codes(&self.codes, self.min, self.max, self.bits)
    }
}

fn levels(bits: u8) -> u32 {
    (1u32 << bits) - 1
}

/// Maps `v` onto `bits`-bit codes spanning `[min(v), max(v)]`.
///
/// Panics if `bits` is not in `1..=8`.
pub fn quantize_vector(v: &[f32], bits: u8) -> QuantizedVector {
    assert!((1..=8).contains(&bits), "bits must be in 1..=8");
    let min = v.iter().copied().fold(f32::INFINITY, f32::min);
    let max = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if v.is_empty() {
        return QuantizedVector {
            codes: Vec::new(),
            min: 0.0,
            max: 0.0,
            bits,
        };
    }
    let lv = levels(bits) as f64;
    let range = max as f64 - min as f64;
    let codes = v
        .iter()
        .map(|&x| {
            if range == 0.0 {
                0
            } else {
                ((x as f64 - min as f64) / range * lv).round().clamp(0.0, lv) as u8
            }
        })
        .collect();
    QuantizedVector {
        codes,
        min,
        max,
        bits,
    }
}

pub fn dequantize_codes(codes: &[u8], min: f32, max: f32, bits: u8) -> Vec<f32> {
    let lv = levels(bits) as f64;
    let range = max as f64 - min as f64;
    codes
        .iter()
        .map(|&c| (min as f64 + range * (c as f64 / lv)) as f32)
        .collect()
}
