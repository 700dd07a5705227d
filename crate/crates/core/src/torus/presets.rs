use num_complex::Complex64;

use super::PeriodFamily;
use crate::error::{Error, Result};
use crate::linalg::{c, CMat, I};

/// Named preset family.
#[derive(Clone, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub family: PeriodFamily,
}

const PRESETS: &[(&str, &str)] = &[
    ("elliptic", "n=1, Omega(s) = i + s"),
    ("elliptic2i", "n=1, Omega(s) = 2i + s"),
    ("siegel-e", "n=2, Omega(s) = i I + s E with E = [[0,1],[1,0]]"),
    ("constant", "n=1, Omega(s) = i (no deformation)"),
    ("product", "n=2, Omega(s) = diag(i + s, 2i + s)"),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset(name: &str) -> Result<Preset> {
    let (name, description) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .copied()
        .ok_or_else(|| Error::Config(format!("unknown preset family '{name}'")))?;
    let one = c(1.0, 0.0);
    let zero = c(0.0, 0.0);
    let scalar = |z: Complex64| CMat::from_element(1, 1, z);
    let coefficients = match name {
        "elliptic" => vec![scalar(I), scalar(one)],
        "elliptic2i" => vec![scalar(c(0.0, 2.0)), scalar(one)],
        "siegel-e" => vec![
            CMat::identity(2, 2) * I,
            CMat::from_row_slice(2, 2, &[zero, one, one, zero]),
        ],
        "constant" => vec![scalar(I)],
        "product" => vec![
            CMat::from_row_slice(2, 2, &[I, zero, zero, c(0.0, 2.0)]),
            CMat::identity(2, 2),
        ],
        _ => unreachable!(),
    };
    Ok(Preset { name, description, family: PeriodFamily::with_estimated_radius(coefficients)? })
}
