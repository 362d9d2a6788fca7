//! Bundled example models with their expected classifications.

use crate::model::{ConfigError, SdeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GalleryEntry {
    pub name: &'static str,
    /// Expected report label.
    pub expected: &'static str,
    pub toml: &'static str,
}

impl GalleryEntry {
    pub fn model(&self) -> Result<SdeModel, ConfigError> {
        SdeModel::from_toml_str(self.toml)
    }
}

macro_rules! entry {
    ($name:literal, $expected:literal) => {
        GalleryEntry { name: $name, expected: $expected, toml: include_str!(concat!("../gallery/", $name, ".toml")) }
    };
}

pub const GALLERY: [GalleryEntry; 7] = [
    entry!("quadratic_drift", "a.s. explosion"),
    entry!("quintic_noise", "a.s. non-explosion"),
    entry!("sublinear_drift", "a.s. non-explosion"),
    entry!("planar_cubic_noise", "a.s. non-explosion"),
    entry!("spatial_quadratic_noise", "positive-probability explosion"),
    entry!("merton", "a.s. non-explosion"),
    entry!("inverse_square_drift", "stays in (0,inf)"),
];

pub fn find(name: &str) -> Option<&'static GalleryEntry> {
    GALLERY.iter().find(|e| e.name == name)
}
