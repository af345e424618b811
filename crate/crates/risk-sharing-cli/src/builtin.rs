//! Scenarios shipped with the binary.

use crate::commands::Steps;
use crate::error::Result;
use crate::scenario::Scenario;

pub struct Builtin {
    pub name: &'static str,
    pub source: &'static str,
    pub steps: Steps,
}

pub const BUILTINS: &[Builtin] = &[
    Builtin {
        name: "example-2.7",
        source: include_str!("../scenarios/example-2.7.toml"),
        steps: Steps {
            arrow_debreu: true,
            nash: true,
            best_response: Some((0, true)),
            limits: false,
        },
    },
    Builtin {
        name: "beta-symmetric",
        source: include_str!("../scenarios/beta-symmetric.toml"),
        steps: Steps {
            arrow_debreu: true,
            nash: true,
            best_response: None,
            limits: false,
        },
    },
    Builtin {
        name: "example-3.9",
        source: include_str!("../scenarios/example-3.9.toml"),
        steps: Steps {
            arrow_debreu: true,
            nash: true,
            best_response: None,
            limits: false,
        },
    },
    Builtin {
        name: "limit-one-agent",
        source: include_str!("../scenarios/limit-one-agent.toml"),
        steps: Steps {
            arrow_debreu: false,
            nash: false,
            best_response: None,
            limits: true,
        },
    },
    Builtin {
        name: "limit-both",
        source: include_str!("../scenarios/limit-both.toml"),
        steps: Steps {
            arrow_debreu: false,
            nash: false,
            best_response: None,
            limits: true,
        },
    },
];

pub fn find(name: &str) -> Option<&'static Builtin> {
    BUILTINS.iter().find(|b| b.name == name)
}

impl Builtin {
    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::from_toml(self.source)
    }
}
