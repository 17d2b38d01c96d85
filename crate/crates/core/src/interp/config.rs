//! Run settings: a line-based `key = value` file plus `populate` lines.
//!
//! ```text
//! delta_time = 1 day
//! steps = 200
//! seed = 42
//! world_width = 1 km
//! world_height = 1 km
//! patch_size = 100 m
//! populate 20 Egg
//! ```

use std::fmt;

use thiserror::Error;

use crate::ast::Model;
use crate::units::{BaseUnit, Dimension, Unit};

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    /// 1-based line, when the problem is tied to one.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn error(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Seconds.
    pub delta_time: f64,
    pub steps: u32,
    pub seed: u64,
    /// Meters.
    pub world_width: f64,
    pub world_height: f64,
    pub patch_size: f64,
    /// Initial animats as (count, stage), created in this order.
    pub populations: Vec<(u32, String)>,
}

impl SimulationConfig {
    pub fn parse(text: &str) -> Result<SimulationConfig, ConfigError> {
        let mut delta_time = None;
        let mut steps = None;
        let mut seed = None;
        let mut width = None;
        let mut height = None;
        let mut patch = None;
        let mut populations = Vec::new();

        for (n, raw) in text.lines().enumerate() {
            let at = Some(n + 1);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("populate ") {
                let mut words = rest.split_whitespace();
                let (Some(count), Some(stage), None) = (words.next(), words.next(), words.next())
                else {
                    return Err(error(at, "expected `populate <count> <Stage>`"));
                };
                let count = count
                    .parse::<u32>()
                    .map_err(|_| error(at, format!("invalid count `{count}`")))?;
                populations.push((count, stage.to_string()));
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(error(at, "expected `key = value`"));
            };
            let (key, value) = (key.trim(), value.trim());
            let slot = match key {
                "delta_time" => {
                    delta_time = Some(quantity(value, BaseUnit::S, at)?);
                    continue;
                }
                "steps" => {
                    let v = value
                        .parse::<u32>()
                        .map_err(|_| error(at, format!("invalid step count `{value}`")))?;
                    steps = Some(v);
                    continue;
                }
                "seed" => {
                    let v = value
                        .parse::<u64>()
                        .map_err(|_| error(at, format!("invalid seed `{value}`")))?;
                    seed = Some(v);
                    continue;
                }
                "world_width" => &mut width,
                "world_height" => &mut height,
                "patch_size" => &mut patch,
                _ => return Err(error(at, format!("unknown key `{key}`"))),
            };
            *slot = Some(quantity(value, BaseUnit::M, at)?);
        }

        let require = |v: Option<f64>, key: &str| v.ok_or_else(|| error(None, format!("missing `{key}`")));
        let config = SimulationConfig {
            delta_time: require(delta_time, "delta_time")?,
            steps: steps.ok_or_else(|| error(None, "missing `steps`"))?,
            seed: seed.unwrap_or(0),
            world_width: require(width, "world_width")?,
            world_height: require(height, "world_height")?,
            patch_size: require(patch, "patch_size")?,
            populations,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.delta_time > 0.0 && self.delta_time.is_finite()) {
            return Err(error(None, "`delta_time` must be positive"));
        }
        if self.steps < 1 {
            return Err(error(None, "`steps` must be at least 1"));
        }
        for (key, v) in [
            ("world_width", self.world_width),
            ("world_height", self.world_height),
            ("patch_size", self.patch_size),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(error(None, format!("`{key}` must be positive")));
            }
        }
        for (key, extent) in [("world_width", self.world_width), ("world_height", self.world_height)] {
            let ratio = extent / self.patch_size;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
                return Err(error(
                    None,
                    format!("`patch_size` must divide `{key}` into a whole number of patches"),
                ));
            }
        }
        Ok(())
    }

    /// Patch grid as (columns, rows).
    pub fn grid(&self) -> (usize, usize) {
        (
            (self.world_width / self.patch_size).round() as usize,
            (self.world_height / self.patch_size).round() as usize,
        )
    }

    /// Problems that depend on the model: unknown or non-stage populations.
    pub fn check_against(&self, model: &Model) -> Vec<ConfigError> {
        self.populations
            .iter()
            .filter(|(_, stage)| model.stage(stage).is_none())
            .map(|(_, stage)| error(None, format!("cannot populate `{stage}`: no such stage")))
            .collect()
    }
}

/// Parses `<number> <unit>` (brackets around the unit are optional) and
/// converts to SI after checking the dimension.
fn quantity(text: &str, base: BaseUnit, line: Option<usize>) -> Result<f64, ConfigError> {
    let split = text
        .find(|c: char| c.is_whitespace() || c == '[')
        .unwrap_or(text.len());
    let (number, unit) = text.split_at(split);
    let value = number
        .parse::<f64>()
        .map_err(|_| error(line, format!("invalid number `{number}`")))?;
    let unit_text = unit.trim().trim_start_matches('[').trim_end_matches(']');
    let unit = Unit::parse(unit_text).map_err(|e| error(line, e.to_string()))?;
    let expected = Dimension::of(base);
    if unit.dimension() != expected {
        return Err(error(
            line,
            format!("expected a quantity of dimension {}, got {unit}", Unit::base(base)),
        ));
    }
    Ok(unit.to_si(value))
}
