//! Bundled experiment configs.

use crate::config::{ConfigError, ExperimentConfig};

/// Name and JSON source of every bundled preset.
pub const PRESETS: [(&str, &str); 9] = [
    ("watson-duplication", include_str!("../presets/watson-duplication.json")),
    ("polarized-watson", include_str!("../presets/polarized-watson.json")),
    ("quadruplication", include_str!("../presets/quadruplication.json")),
    ("prop9-watson", include_str!("../presets/prop9-watson.json")),
    ("mgf-check", include_str!("../presets/mgf-check.json")),
    ("kl-bridge", include_str!("../presets/kl-bridge.json")),
    ("kl-watson", include_str!("../presets/kl-watson.json")),
    ("torus-1d", include_str!("../presets/torus-1d.json")),
    ("torus-2d", include_str!("../presets/torus-2d.json")),
];

pub fn list_presets() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset(name: &str) -> Result<ExperimentConfig, ConfigError> {
    let (_, src) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        ConfigError::Invalid(format!("unknown preset {name:?}; available: {}", list_presets().join(", ")))
    })?;
    ExperimentConfig::from_json(src, &format!("preset {name}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for name in list_presets() {
            let c = preset(name).unwrap();
            assert_eq!(c.name, name);
            c.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn unknown_preset_lists_names() {
        let e = preset("nope").unwrap_err().to_string();
        assert!(e.contains("torus-2d"));
    }
}
