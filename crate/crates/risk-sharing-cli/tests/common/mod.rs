#![allow(dead_code)]

use std::path::{Path, PathBuf};

use scenario_io::{run_cli, Scenario};

pub fn scenario(text: &str) -> Scenario {
    Scenario::from_toml(text).expect("scenario parses")
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Exit code, stdout and stderr of one CLI invocation.
pub fn cli(args: &[&str]) -> (u8, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("risk-sharing").chain(args.iter().copied());
    let code = run_cli(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

pub const COMMON_BELIEFS: &str = r#"
name = "common"

[states]
model = "explicit"
weights = [0.2, 0.3, 0.5]

[[agents]]
delta = 1.0

[[agents]]
delta = 2.0

[[agents]]
delta = 0.5
"#;

pub const THREE_AGENTS: &str = r#"
name = "three"

[states]
model = "explicit"
weights = [0.25, 0.25, 0.25, 0.25]

[states.variables]
x = [-1.5, -0.5, 0.5, 1.5]

[[agents]]
delta = 1.0
log_density = "x"

[[agents]]
delta = 2.0
log_density = "-0.5 * x"

[[agents]]
delta = 0.5
weights = [0.1, 0.2, 0.3, 0.4]
"#;
