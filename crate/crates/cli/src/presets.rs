//! Built-in experiments, named `tableK_caseJ` for case `J` of experiment
//! group `K`. A bare `tableK` means its first case.

use fimci::montecarlo::ExperimentConfig;

use crate::config::parse_config_str;
use crate::error::{CliError, Result};

pub const PRESETS: &[(&str, &str)] = &[
    ("table1_case1", include_str!("../presets/table1_case1.toml")),
    ("table1_case2", include_str!("../presets/table1_case2.toml")),
    ("table1_case3", include_str!("../presets/table1_case3.toml")),
    ("table2_case1", include_str!("../presets/table2_case1.toml")),
    ("table3_case1", include_str!("../presets/table3_case1.toml")),
    ("table4_case1", include_str!("../presets/table4_case1.toml")),
    ("table4_case2", include_str!("../presets/table4_case2.toml")),
    ("table5_case1", include_str!("../presets/table5_case1.toml")),
    ("table5_case2", include_str!("../presets/table5_case2.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Canonical preset name for `name`, resolving `tableK` aliases.
pub fn canonical(name: &str) -> Option<&'static str> {
    let full = if name.contains("_case") { name.to_string() } else { format!("{name}_case1") };
    PRESETS.iter().find(|(n, _)| *n == full).map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    let key = canonical(name)?;
    PRESETS.iter().find(|(n, _)| *n == key).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<ExperimentConfig> {
    let text = source(name).ok_or_else(|| CliError::UnknownPreset(name.to_string()))?;
    parse_config_str(text, &format!("preset {}", canonical(name).unwrap_or(name)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for name in names() {
            let c = load(name).unwrap();
            assert_eq!(c.replications, 1000, "{name}");
        }
    }

    #[test]
    fn aliases_resolve_to_first_column() {
        assert_eq!(canonical("table5"), Some("table5_case1"));
        assert_eq!(canonical("table3"), Some("table3_case1"));
        assert_eq!(canonical("table6"), None);
        assert!(matches!(load("nope"), Err(CliError::UnknownPreset(_))));
    }
}
