//! The eight built-in strategy presets, embedded from `presets/*.json`.

use super::Scenario;

pub struct Preset {
    /// File stem, with stars spelled `x1`/`x2`.
    pub file: &'static str,
    pub json: &'static str,
}

impl Preset {
    pub fn scenario(&self) -> Scenario {
        Scenario::from_json(self.json, self.file).expect("built-in presets are valid")
    }

    /// Display name, e.g. `Nested**`.
    pub fn name(&self) -> String {
        self.scenario().label()
    }
}

macro_rules! preset {
    ($file:literal) => {
        Preset { file: $file, json: include_str!(concat!("../../presets/", $file, ".json")) }
    };
}

pub const PRESETS: [Preset; 8] = [
    preset!("Parallel"),
    preset!("Nested"),
    preset!("Nestedx1"),
    preset!("Nestedx2"),
    preset!("Consecutive"),
    preset!("Consecutivex1"),
    preset!("Consecutivex2"),
    preset!("Hybridx1"),
];

/// Looks a preset up by file stem (`Nestedx2`) or display name (`Nested**`),
/// ignoring ASCII case.
pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.file.eq_ignore_ascii_case(name) || p.name().eq_ignore_ascii_case(name))
}

pub fn preset_names() -> Vec<String> {
    PRESETS.iter().map(Preset::name).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_contents() {
        let expect: [(&str, &[u32], &[u32]); 8] = [
            ("Parallel", &[1, 0, 0, 0, 0, 0, 0, 0, 1], &[0, 0]),
            ("Nested", &[3, 0, 1, 0, 2, 0, 1, 0, 3], &[0, 0, 0, 0]),
            ("Nested*", &[3, 0, 1, 0, 2, 0, 1, 0, 3], &[0, 0, 1, 0]),
            ("Nested**", &[3, 0, 1, 0, 2, 0, 1, 0, 3], &[0, 1, 1, 0]),
            ("Consecutive", &[7, 0, 1, 2, 3, 4, 5, 6, 7], &[0; 8]),
            ("Consecutive*", &[7, 0, 1, 2, 3, 4, 5, 6, 7], &[0, 0, 1, 0, 0, 0, 0, 0]),
            ("Consecutive**", &[7, 0, 1, 2, 3, 4, 5, 6, 7], &[0, 0, 1, 0, 1, 0, 0, 0]),
            ("Hybrid*", &[2, 0, 1, 0, 1, 0, 1, 0, 2], &[0, 1, 0]),
        ];
        for (p, (name, ranks, purif)) in PRESETS.iter().zip(expect) {
            let s = p.scenario();
            assert_eq!(s.label(), name);
            assert_eq!(s.ranks.as_deref(), Some(ranks), "{name}");
            assert_eq!(s.purification, purif, "{name}");
        }
    }

    #[test]
    fn lookup_by_either_name() {
        assert_eq!(preset("Nestedx2").unwrap().file, "Nestedx2");
        assert_eq!(preset("nested**").unwrap().file, "Nestedx2");
        assert_eq!(preset("Hybrid*").unwrap().file, "Hybridx1");
        assert!(preset("Zigzag").is_none());
    }
}
