//! Shared helpers for the acceptance checks in `tests/acceptance.rs`.

use std::io::Write as _;
use std::path::PathBuf;

/// Prints `criterion N: PASS|FAIL detail` on uncaptured stdout.
pub fn report(n: &str, pass: bool, detail: impl AsRef<str>) {
    let line = format!(
        "criterion {n}: {} {}\n",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

/// The bundled replay fixtures.
pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/replay")
}
