//! Colorimetric skin-tone toolkit: color math, bilateral measurements,
//! scale construction, regression engines, rating analysis and the study
//! pipelines.

/// `Display` + case-insensitive `FromStr` for fieldless enums.
macro_rules! text_enum {
    ($ty:ty { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl ::std::fmt::Display for $ty {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }
        impl ::std::str::FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                let s = s.trim();
                $(if s.eq_ignore_ascii_case($text) {
                    return Ok(Self::$variant);
                })+
                Err(format!("unknown {} {s:?}", stringify!($ty).to_lowercase()))
            }
        }
    };
}
pub(crate) use text_enum;

pub mod color;
pub mod measurement;
pub mod pipeline;
pub mod protocol;
pub mod rating;
pub mod scale;
pub mod stats;

pub use color::{
    chroma_of, delta_e, hue_of, ita_of, lab_to_srgb, srgb_to_lab, ColorError, ItaCategory, ItaClass, LabColor,
    PolarTone, Rendered, RgbColor,
};
pub use measurement::{MeasurementRecord, Side, Site, SubjectTone};
pub use scale::{Scale, Swatch};
pub use stats::{MixedFit, ModelFit};
