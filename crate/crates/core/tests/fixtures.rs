use std::path::PathBuf;

use condor_core::replay::{chains_csv, load_chains, synthetic_chains, write_fixtures, Scenario};

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/replay")
}

/// Set `CONDOR_BLESS=1` to regenerate the bundled chains.
#[test]
fn bundled_chains_match_generator() {
    let dir = fixtures_dir();
    if std::env::var_os("CONDOR_BLESS").is_some() {
        write_fixtures(&dir).unwrap();
    }
    for sc in Scenario::ALL {
        let path = dir.join(sc.as_str()).join("chains.csv");
        let on_disk = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(on_disk, chains_csv(&synthetic_chains(sc)), "{}", path.display());
    }
}

#[test]
fn bundled_chains_load_back_to_generator_output() {
    for sc in Scenario::ALL {
        let loaded = load_chains(&fixtures_dir().join(sc.as_str())).unwrap();
        assert_eq!(loaded, synthetic_chains(sc));
    }
}
