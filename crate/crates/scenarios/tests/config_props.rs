use mpcc_scenarios::config::{GridConfig, ScenarioConfig};
use mpcc_scenarios::penalty::Sweep;
use mpcc_scenarios::{catalog, ConfigError};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn edited_configs_round_trip(seed in any::<u64>(), half in 5.0f64..50.0, h in 0.005f64..0.1, lambda in 0.1f64..5.0) {
        let mut cfg = catalog("S1").unwrap();
        cfg.seed = seed;
        cfg.lambda = lambda;
        cfg.grid = GridConfig::Line { half_length: half, h };
        prop_assert_eq!(ScenarioConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn sweeps_parse_their_values(values in prop::collection::vec(0.0f64..10.0, 1..6)) {
        let text = format!("amplitude={}", values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        let sweep: Sweep = text.parse().unwrap();
        prop_assert_eq!(sweep.values, values);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_line(pad in 0usize..5) {
        let text = format!("{}name = \"x\"\nregime = \"critical_D12\"\nbogus = 1\n", "\n".repeat(pad));
        match ScenarioConfig::parse(&text) {
            Err(ConfigError::Parse { line, message }) => {
                prop_assert!(message.contains("bogus"), "{}", message);
                prop_assert_eq!(line, pad + 3);
            }
            other => prop_assert!(false, "unexpected {:?}", other),
        }
    }
}

#[test]
fn every_catalog_entry_parses_and_validates() {
    for name in ["S1", "S2", "S3", "S4", "S5", "S6", "S7"] {
        let cfg = catalog(name).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.name, name);
    }
}
