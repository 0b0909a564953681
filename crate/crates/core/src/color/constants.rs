//! Colorimetric constants used by the sRGB <-> CIELAB conversions.
//!
//! All values come from IEC 61966-2-1 (sRGB) and CIE 15:2004 (CIELAB).

/// Linear sRGB -> CIE XYZ, D65 white, 2° observer (IEC 61966-2-1, 7-digit form).
pub const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

/// D65 reference white as the image of linear sRGB (1, 1, 1).
///
/// Taking the row sums keeps white and every neutral gray exactly on the
/// achromatic axis. They agree with the tabulated D65 white
/// (0.95047, 1.00000, 1.08883) to within 1e-7.
pub const D65_WHITE: [f64; 3] = [
    SRGB_TO_XYZ[0][0] + SRGB_TO_XYZ[0][1] + SRGB_TO_XYZ[0][2],
    SRGB_TO_XYZ[1][0] + SRGB_TO_XYZ[1][1] + SRGB_TO_XYZ[1][2],
    SRGB_TO_XYZ[2][0] + SRGB_TO_XYZ[2][1] + SRGB_TO_XYZ[2][2],
];

/// sRGB transfer function breakpoints (IEC 61966-2-1).
pub const SRGB_DECODE_KNEE: f64 = 0.040_45;
pub const SRGB_ENCODE_KNEE: f64 = 0.003_130_8;
pub const SRGB_LINEAR_SLOPE: f64 = 12.92;
pub const SRGB_GAMMA: f64 = 2.4;
pub const SRGB_OFFSET: f64 = 0.055;

/// CIE f(t) breakpoint: delta = 6/29 (CIE 15:2004).
pub const CIE_DELTA: f64 = 6.0 / 29.0;

/// Reference lightness of the Individual Typology Angle.
pub const ITA_REFERENCE_L: f64 = 50.0;

/// Lower bounds (exclusive) of the ITA bands, lightest first:
/// very light > 55 >= light > 41 >= intermediate > 28 >= tan > 10 >= brown > -30 >= dark.
pub const ITA_BANDS: [f64; 5] = [55.0, 41.0, 28.0, 10.0, -30.0];
