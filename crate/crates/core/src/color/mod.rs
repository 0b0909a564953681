//! Color-space primitives: sRGB <-> CIELAB, polar (hue/chroma) form,
//! CIE76 color difference and Individual Typology Angle classification.
//!
//! Everything here is a pure function of its inputs.

pub mod constants;

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use constants::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ColorError {
    #[error("hue is undefined for a* = b* = 0")]
    UndefinedHue,
    #[error("ITA is undefined for b* = 0")]
    UndefinedIta,
    #[error("lightness {0} outside [0, 100]")]
    LightnessOutOfRange(f64),
    #[error("non-finite CIELAB component")]
    NonFinite,
    #[error("invalid hex color {0:?}")]
    InvalidHex(String),
}

/// 8-bit sRGB triplet. The `u8` channels make the [0, 255] invariant structural.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RgbColor {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl RgbColor {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    /// Lowercase `#rrggbb`.
    pub fn to_hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.r, self.g, self.b)
    }

    /// Largest per-channel absolute difference.
    pub fn max_channel_diff(self, other: RgbColor) -> u8 {
        [self.r.abs_diff(other.r), self.g.abs_diff(other.g), self.b.abs_diff(other.b)].into_iter().max().unwrap_or(0)
    }
}

impl FromStr for RgbColor {
    type Err = ColorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ColorError::InvalidHex(s.to_string());
        let digits = s.trim().strip_prefix('#').unwrap_or(s.trim());
        if digits.len() != 6 || !digits.is_ascii() {
            return Err(bad());
        }
        let channel = |i: usize| u8::from_str_radix(&digits[i..i + 2], 16).map_err(|_| bad());
        Ok(Self::new(channel(0)?, channel(2)?, channel(4)?))
    }
}

impl fmt::Display for RgbColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// CIELAB color (D65, 2° observer).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabColor {
    #[serde(rename = "L")]
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColor {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    /// Checks L* in [0, 100] and finite opponent axes.
    pub fn validate(self) -> Result<Self, ColorError> {
        if !(self.l.is_finite() && self.a.is_finite() && self.b.is_finite()) {
            return Err(ColorError::NonFinite);
        }
        if !(0.0..=100.0).contains(&self.l) {
            return Err(ColorError::LightnessOutOfRange(self.l));
        }
        Ok(self)
    }

    pub fn polar(self) -> PolarTone {
        PolarTone::from_lab(self)
    }

    /// Component-wise arithmetic mean. Returns `None` for an empty input.
    pub fn mean<'a>(colors: impl IntoIterator<Item = &'a LabColor>) -> Option<LabColor> {
        let (mut sl, mut sa, mut sb, mut n) = (0.0, 0.0, 0.0, 0usize);
        for c in colors {
            sl += c.l;
            sa += c.a;
            sb += c.b;
            n += 1;
        }
        (n > 0).then(|| {
            let n = n as f64;
            LabColor::new(sl / n, sa / n, sb / n)
        })
    }
}

/// Lightness with the (a*, b*) plane in polar form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarTone {
    #[serde(rename = "L")]
    pub l: f64,
    pub hue_deg: f64,
    pub chroma: f64,
}

impl PolarTone {
    /// Achromatic inputs get hue 0 so the conversion stays total;
    /// use [`hue_of`] when an undefined hue must be an error.
    pub fn from_lab(c: LabColor) -> Self {
        Self { l: c.l, hue_deg: c.b.atan2(c.a).to_degrees(), chroma: chroma_of(c.a, c.b) }
    }

    pub fn to_lab(self) -> LabColor {
        let h = self.hue_deg.to_radians();
        LabColor::new(self.l, self.chroma * h.cos(), self.chroma * h.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItaCategory {
    VeryLight,
    Light,
    Intermediate,
    Tan,
    Brown,
    Dark,
}

impl ItaCategory {
    pub fn from_angle(ita_deg: f64) -> Self {
        const ORDER: [ItaCategory; 5] = [
            ItaCategory::VeryLight,
            ItaCategory::Light,
            ItaCategory::Intermediate,
            ItaCategory::Tan,
            ItaCategory::Brown,
        ];
        ORDER.into_iter().zip(ITA_BANDS).find(|&(_, lower)| ita_deg > lower).map_or(ItaCategory::Dark, |(cat, _)| cat)
    }

    pub fn label(self) -> &'static str {
        match self {
            ItaCategory::VeryLight => "very light",
            ItaCategory::Light => "light",
            ItaCategory::Intermediate => "intermediate",
            ItaCategory::Tan => "tan",
            ItaCategory::Brown => "brown",
            ItaCategory::Dark => "dark",
        }
    }
}

impl fmt::Display for ItaCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItaClass {
    pub ita_deg: f64,
    pub category: ItaCategory,
}

/// Result of [`lab_to_srgb`]: the rendered color and whether any channel was clamped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rendered {
    pub rgb: RgbColor,
    pub out_of_gamut: bool,
}

static XYZ_TO_SRGB: LazyLock<Matrix3<f64>> = LazyLock::new(|| {
    let m = SRGB_TO_XYZ;
    Matrix3::new(m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2])
        .try_inverse()
        .expect("sRGB primaries matrix is invertible")
});

fn decode_channel(v: u8) -> f64 {
    let c = f64::from(v) / 255.0;
    if c <= SRGB_DECODE_KNEE {
        c / SRGB_LINEAR_SLOPE
    } else {
        ((c + SRGB_OFFSET) / (1.0 + SRGB_OFFSET)).powf(SRGB_GAMMA)
    }
}

fn encode_channel(linear: f64) -> f64 {
    if linear <= SRGB_ENCODE_KNEE {
        linear * SRGB_LINEAR_SLOPE
    } else {
        (1.0 + SRGB_OFFSET) * linear.powf(1.0 / SRGB_GAMMA) - SRGB_OFFSET
    }
}

fn cie_f(t: f64) -> f64 {
    if t > CIE_DELTA.powi(3) {
        t.cbrt()
    } else {
        t / (3.0 * CIE_DELTA * CIE_DELTA) + 4.0 / 29.0
    }
}

fn cie_f_inv(f: f64) -> f64 {
    if f > CIE_DELTA {
        f.powi(3)
    } else {
        3.0 * CIE_DELTA * CIE_DELTA * (f - 4.0 / 29.0)
    }
}

pub fn srgb_to_lab(c: RgbColor) -> LabColor {
    let lin = [decode_channel(c.r), decode_channel(c.g), decode_channel(c.b)];
    let xyz: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| SRGB_TO_XYZ[i][j] * lin[j]).sum::<f64>());
    let fx = cie_f(xyz[0] / D65_WHITE[0]);
    let fy = cie_f(xyz[1] / D65_WHITE[1]);
    let fz = cie_f(xyz[2] / D65_WHITE[2]);
    LabColor::new(116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

/// Inverse of [`srgb_to_lab`]. Channels whose unrounded 8-bit value falls
/// outside [-0.5, 255.5] are clamped and flag the result as out of gamut.
pub fn lab_to_srgb(c: LabColor) -> Rendered {
    let fy = (c.l + 16.0) / 116.0;
    let fx = fy + c.a / 500.0;
    let fz = fy - c.b / 200.0;
    let xyz = nalgebra::Vector3::new(
        cie_f_inv(fx) * D65_WHITE[0],
        cie_f_inv(fy) * D65_WHITE[1],
        cie_f_inv(fz) * D65_WHITE[2],
    );
    let lin = *XYZ_TO_SRGB * xyz;
    let mut out_of_gamut = false;
    let mut channel = |v: f64| {
        let scaled = encode_channel(v) * 255.0;
        if !(-0.5..=255.5).contains(&scaled) || scaled.is_nan() {
            out_of_gamut = true;
        }
        scaled.round().clamp(0.0, 255.0) as u8
    };
    let rgb = RgbColor::new(channel(lin[0]), channel(lin[1]), channel(lin[2]));
    Rendered { rgb, out_of_gamut }
}

/// Hue angle in degrees, in [-180, 180].
pub fn hue_of(a_star: f64, b_star: f64) -> Result<f64, ColorError> {
    if a_star == 0.0 && b_star == 0.0 {
        return Err(ColorError::UndefinedHue);
    }
    Ok(b_star.atan2(a_star).to_degrees())
}

pub fn chroma_of(a_star: f64, b_star: f64) -> f64 {
    a_star.hypot(b_star)
}

/// CIE76 color difference: Euclidean distance in CIELAB.
pub fn delta_e(x: LabColor, y: LabColor) -> f64 {
    let (dl, da, db) = (x.l - y.l, x.a - y.a, x.b - y.b);
    (dl * dl + da * da + db * db).sqrt()
}

pub fn ita_of(c: LabColor) -> Result<ItaClass, ColorError> {
    if c.b == 0.0 {
        return Err(ColorError::UndefinedIta);
    }
    let ita_deg = ((c.l - ITA_REFERENCE_L) / c.b).atan().to_degrees();
    Ok(ItaClass { ita_deg, category: ItaCategory::from_angle(ita_deg) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    // Independent scalar evaluation of the sRGB -> XYZ -> Lab chain for a
    // neutral gray, written from the published formulas with the tabulated
    // D65 white rather than the module's helpers.
    fn gray_lightness_oracle(v: u8) -> f64 {
        let c = v as f64 / 255.0;
        let lin = if c <= 0.04045 { c / 12.92 } else { ((c + 0.055) / 1.055).powf(2.4) };
        // Y of a neutral gray equals its linear value; Yn = 1.
        let t = lin;
        let f = if t > 216.0 / 24389.0 { t.cbrt() } else { (24389.0 / 27.0 * t + 16.0) / 116.0 };
        116.0 * f - 16.0
    }

    #[test]
    fn white_and_black() {
        let w = srgb_to_lab(RgbColor::new(255, 255, 255));
        assert_abs_diff_eq!(w.l, 100.0, epsilon = 1e-4);
        assert_abs_diff_eq!(w.a, 0.0, epsilon = 1e-4);
        assert_abs_diff_eq!(w.b, 0.0, epsilon = 1e-4);
        let k = srgb_to_lab(RgbColor::new(0, 0, 0));
        assert_abs_diff_eq!(k.l, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(k.a, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(k.b, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn gray_118_matches_hand_oracle() {
        let oracle = gray_lightness_oracle(118);
        assert_abs_diff_eq!(oracle, 49.6, epsilon = 0.1);
        let lab = srgb_to_lab(RgbColor::new(118, 118, 118));
        assert_abs_diff_eq!(lab.l, oracle, epsilon = 1e-6);
        assert_abs_diff_eq!(lab.l, 49.6, epsilon = 0.1);
        assert!(lab.a.abs() < 0.01 && lab.b.abs() < 0.01);
    }

    #[test]
    fn neutral_axis_is_achromatic() {
        for v in 0..=255u8 {
            let lab = srgb_to_lab(RgbColor::new(v, v, v));
            assert!(lab.a.abs() < 0.01 && lab.b.abs() < 0.01, "gray {v}: {lab:?}");
            assert_abs_diff_eq!(lab.l, gray_lightness_oracle(v), epsilon = 1e-6);
        }
    }

    #[test]
    fn white_renders_white() {
        let r = lab_to_srgb(LabColor::new(100.0, 0.0, 0.0));
        assert_eq!(r.rgb, RgbColor::new(255, 255, 255));
        assert!(!r.out_of_gamut);
    }

    #[test]
    fn saturated_green_is_out_of_gamut() {
        // Forward-transform boundary search: the most chromatic in-gamut
        // green at L* = 50 has a* well above -200, so the point lies outside.
        let mut min_a = f64::INFINITY;
        for g in 0..=255u8 {
            for r in (0..=255u8).step_by(5) {
                for b in (0..=255u8).step_by(5) {
                    let lab = srgb_to_lab(RgbColor::new(r, g, b));
                    if (lab.l - 50.0).abs() < 0.5 {
                        min_a = min_a.min(lab.a);
                    }
                }
            }
        }
        assert!(min_a > -100.0, "gamut reaches a* = {min_a}");
        assert!(lab_to_srgb(LabColor::new(50.0, 200.0, 0.0)).out_of_gamut);
        assert!(lab_to_srgb(LabColor::new(50.0, -200.0, 0.0)).out_of_gamut);
    }

    #[test]
    fn round_trip_lattice() {
        for r in (0..=255u16).step_by(8) {
            for g in (0..=255u16).step_by(8) {
                for b in (0..=255u16).step_by(8) {
                    let c = RgbColor::new(r as u8, g as u8, b as u8);
                    let back = lab_to_srgb(srgb_to_lab(c));
                    assert!(!back.out_of_gamut, "{c}");
                    assert!(back.rgb.max_channel_diff(c) <= 1, "{c} -> {}", back.rgb);
                }
            }
        }
    }

    #[test]
    fn hue_examples() {
        assert_abs_diff_eq!(hue_of(10.0, 10.0).unwrap(), 45.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hue_of(1.0, 0.0).unwrap(), 0.0, epsilon = 1e-12);
        // arctan(20/12) = 59.0362...
        assert_abs_diff_eq!(hue_of(12.0, 20.0).unwrap(), 59.04, epsilon = 0.01);
        assert_eq!(hue_of(0.0, 0.0), Err(ColorError::UndefinedHue));
    }

    #[test]
    fn chroma_examples() {
        assert_eq!(chroma_of(3.0, 4.0), 5.0);
        assert_eq!(chroma_of(0.0, 0.0), 0.0);
        assert_abs_diff_eq!(chroma_of(12.0, 20.0), 544f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(chroma_of(12.0, 20.0), 23.324, epsilon = 1e-3);
    }

    #[test]
    fn delta_e_examples() {
        let x = LabColor::new(50.0, 0.0, 0.0);
        assert_eq!(delta_e(x, x), 0.0);
        assert_eq!(delta_e(x, LabColor::new(53.0, 4.0, 0.0)), 5.0);
    }

    #[test]
    fn ita_examples() {
        let a = ita_of(LabColor::new(50.0, 5.0, 20.0)).unwrap();
        assert_abs_diff_eq!(a.ita_deg, 0.0, epsilon = 1e-12);
        assert_eq!(a.category, ItaCategory::Brown);
        let b = ita_of(LabColor::new(70.0, 5.0, 20.0)).unwrap();
        assert_abs_diff_eq!(b.ita_deg, 45.0, epsilon = 1e-12);
        assert_eq!(b.category, ItaCategory::Light);
        assert_eq!(ita_of(LabColor::new(60.0, 5.0, 0.0)), Err(ColorError::UndefinedIta));
    }

    #[test]
    fn ita_band_edges() {
        assert_eq!(ItaCategory::from_angle(55.1), ItaCategory::VeryLight);
        assert_eq!(ItaCategory::from_angle(55.0), ItaCategory::Light);
        assert_eq!(ItaCategory::from_angle(41.0), ItaCategory::Intermediate);
        assert_eq!(ItaCategory::from_angle(28.0), ItaCategory::Tan);
        assert_eq!(ItaCategory::from_angle(10.0), ItaCategory::Brown);
        assert_eq!(ItaCategory::from_angle(-30.0), ItaCategory::Dark);
        assert_eq!(ItaCategory::from_angle(-89.0), ItaCategory::Dark);
    }

    #[test]
    fn hex_parsing() {
        assert_eq!("#f6ede4".parse::<RgbColor>().unwrap(), RgbColor::new(0xf6, 0xed, 0xe4));
        assert_eq!("292420".parse::<RgbColor>().unwrap().to_hex(), "#292420");
        assert!("#12345".parse::<RgbColor>().is_err());
        assert!("#zz0000".parse::<RgbColor>().is_err());
    }

    fn lab() -> impl Strategy<Value = LabColor> {
        (0.0..100.0f64, -80.0..80.0f64, -80.0..80.0f64).prop_map(|(l, a, b)| LabColor::new(l, a, b))
    }

    proptest! {
        #[test]
        fn polar_reconstructs_ab(a in -100.0..100.0f64, b in -100.0..100.0f64) {
            let p = PolarTone::from_lab(LabColor::new(50.0, a, b));
            let h = p.hue_deg.to_radians();
            prop_assert!((p.chroma * h.cos() - a).abs() < 1e-9);
            prop_assert!((p.chroma * h.sin() - b).abs() < 1e-9);
            prop_assert!(p.chroma >= 0.0);
            prop_assert!((-180.0..=180.0).contains(&p.hue_deg));
        }

        #[test]
        fn delta_e_is_a_metric(x in lab(), y in lab(), z in lab()) {
            let xy = delta_e(x, y);
            prop_assert!(xy >= 0.0);
            prop_assert_eq!(xy, delta_e(y, x));
            prop_assert!(xy <= delta_e(x, z) + delta_e(z, y) + 1e-9);
        }
    }
}
