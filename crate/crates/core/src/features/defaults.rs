//! Pattern sets shipped with the crate, embedded at build time so the engine
//! works with zero external files.

use crate::types::PatternSet;

use super::FeatureSets;

/// Bump when any shipped `.pat` file changes; recorded in config snapshots.
pub const BUILTIN_PATTERNS_VERSION: &str = "builtin-1";

/// Ids of builtin multi-agent patterns that match dialogue-script role
/// separators. These are the ones gated by `multi_agent_role_separator`.
pub const ROLE_SEPARATOR_IDS: &[&str] = &["multi_agent/9"];

const HYPOTHETICAL: &str = include_str!("../../data/patterns/hypothetical.pat");
const OBFUSCATION: &str = include_str!("../../data/patterns/obfuscation.pat");
const PRIVILEGE: &str = include_str!("../../data/patterns/privilege.pat");
const MULTI_AGENT: &str = include_str!("../../data/patterns/multi_agent.pat");
const BYPASS: &str = include_str!("../../data/patterns/bypass.pat");
const URGENCY: &str = include_str!("../../data/patterns/urgency.pat");
const ETHICS: &str = include_str!("../../data/patterns/ethics.pat");

fn parse(id: &str, text: &str) -> PatternSet {
    PatternSet::parse(id, text).expect("builtin pattern file is valid")
}

pub fn hypothetical() -> PatternSet {
    parse("hypothetical", HYPOTHETICAL)
}

pub fn obfuscation() -> PatternSet {
    parse("obfuscation", OBFUSCATION)
}

pub fn privilege() -> PatternSet {
    parse("privilege", PRIVILEGE)
}

pub fn multi_agent() -> PatternSet {
    parse("multi_agent", MULTI_AGENT)
}

pub fn bypass() -> PatternSet {
    parse("bypass", BYPASS)
}

pub fn urgency() -> PatternSet {
    parse("urgency", URGENCY)
}

pub fn ethics() -> PatternSet {
    parse("ethics", ETHICS)
}

pub fn builtin_sets() -> FeatureSets {
    FeatureSets {
        hypothetical: hypothetical(),
        obfuscation: obfuscation(),
        privilege: privilege(),
        multi_agent: multi_agent(),
        bypass: bypass(),
        urgency: urgency(),
        ethics: ethics(),
    }
}

/// Raw text of each builtin set, for materializing a config directory.
pub fn builtin_sources() -> [(&'static str, &'static str); 7] {
    [
        ("hypothetical", HYPOTHETICAL),
        ("obfuscation", OBFUSCATION),
        ("privilege", PRIVILEGE),
        ("multi_agent", MULTI_AGENT),
        ("bypass", BYPASS),
        ("urgency", URGENCY),
        ("ethics", ETHICS),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_files_parse() {
        let sets = builtin_sets();
        assert_eq!(sets.obfuscation.len(), 3, "O is defined over three technique detectors");
        assert!(sets.privilege.len() >= 10);
        assert_eq!(sets.bypass.len(), 3);
        sets.bypass.require_weights().unwrap();
    }

    #[test]
    fn bypass_weights_are_the_shipped_defaults() {
        let weights: Vec<f64> = bypass().patterns().iter().map(|p| p.weight().unwrap()).collect();
        assert_eq!(weights, [0.5, 0.3, 0.2]);
    }

    #[test]
    fn role_separator_ids_exist_in_the_builtin_set() {
        let set = multi_agent();
        for id in ROLE_SEPARATOR_IDS {
            assert!(set.get(id).is_some(), "{id} missing from builtin multi_agent set");
        }
    }

    #[test]
    fn obfuscation_detectors_are_case_sensitive() {
        let set = obfuscation();
        assert!(set.patterns().iter().all(|p| !p.case_insensitive()));
    }
}
