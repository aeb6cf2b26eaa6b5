//! Shipped data files: glass tables, published constants and rate scenarios.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::budget::Scenario;
use crate::error::{Error, Result};
use crate::geometry::Material;

pub const MATERIALS_TOML: &str = include_str!("../data/materials.toml");
pub const CONSTANTS_TOML: &str = include_str!("../data/published_constants.toml");
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../data/default_config.toml");
pub const TWO_NODE_TOML: &str = include_str!("../data/scenarios/two_node.toml");
pub const THREE_NODE_TOML: &str = include_str!("../data/scenarios/three_node.toml");

/// Parse TOML, reporting the source name, line and column on failure.
pub fn parse_toml<T: DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let loc = e
            .span()
            .map(|s| {
                let before = &text[..s.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
                format!(":{line}:{col}")
            })
            .unwrap_or_default();
        Error::Config(format!("{source}{loc}: {}", e.message()))
    })
}

#[derive(Debug, Deserialize)]
struct MaterialFile {
    material: Vec<MaterialEntry>,
}

#[derive(Debug, Deserialize)]
struct MaterialEntry {
    name: String,
    points: Vec<(f64, f64)>,
}

/// Parse a material table file.
pub fn parse_materials(text: &str, source: &str) -> Result<Vec<Material>> {
    let f: MaterialFile = parse_toml(text, source)?;
    f.material.into_iter().map(|m| Material::new(m.name, m.points)).collect()
}

pub fn materials() -> Result<Vec<Material>> {
    parse_materials(MATERIALS_TOML, "materials.toml")
}

/// Look up a shipped material by name.
pub fn material(name: &str) -> Result<Material> {
    materials()?
        .into_iter()
        .find(|m| m.name == name)
        .ok_or_else(|| Error::Config(format!("unknown material `{name}`")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstantValue {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedConstant {
    pub key: String,
    pub value: ConstantValue,
    pub uncertainty: Option<f64>,
    pub unit: String,
    pub citation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsphereSpec {
    pub radius_mm: f64,
    pub conic: f64,
    pub poly: [f64; 7],
    pub center_thickness_mm: f64,
    pub working_distance_mm: f64,
    pub material: String,
    pub citation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberLensSpec {
    pub front_radius_mm: f64,
    pub front_conic: f64,
    pub back_radius_mm: f64,
    pub center_thickness_mm: f64,
    pub material: String,
    pub citation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedConstants {
    pub version: u32,
    pub asphere: AsphereSpec,
    pub fiber_lens: FiberLensSpec,
    pub constant: Vec<PublishedConstant>,
}

impl PublishedConstants {
    pub fn load() -> Result<Self> {
        parse_toml(CONSTANTS_TOML, "published_constants.toml")
    }

    pub fn get(&self, key: &str) -> Result<&PublishedConstant> {
        self.constant
            .iter()
            .find(|c| c.key == key)
            .ok_or_else(|| Error::Config(format!("no published constant `{key}`")))
    }

    pub fn scalar(&self, key: &str) -> Result<f64> {
        match self.get(key)?.value {
            ConstantValue::Scalar(v) => Ok(v),
            ConstantValue::List(_) => Err(Error::Config(format!("constant `{key}` is a list"))),
        }
    }

    /// Value and absolute uncertainty (zero when none is published).
    pub fn with_uncertainty(&self, key: &str) -> Result<(f64, f64)> {
        Ok((self.scalar(key)?, self.get(key)?.uncertainty.unwrap_or(0.0)))
    }
}

/// Shipped scenario by name (`two-node` or `three-node`).
pub fn scenario(name: &str) -> Result<Scenario> {
    match name {
        "two-node" => parse_toml(TWO_NODE_TOML, "scenarios/two_node.toml"),
        "three-node" => parse_toml(THREE_NODE_TOML, "scenarios/three_node.toml"),
        _ => Err(Error::Config(format!("unknown scenario `{name}`"))),
    }
}
