//! Example scenarios embedded in the binary.
//!
//! Each one is an ordinary scenario file; `export-scenario` writes them out
//! as starting points for custom configurations.

const BUILTINS: &[(&str, &str)] = &[
    ("near_term", include_str!("builtins/near_term.toml")),
    ("mid_term", include_str!("builtins/mid_term.toml")),
    ("long_term", include_str!("builtins/long_term.toml")),
    ("jupiter_relay", include_str!("builtins/jupiter_relay.toml")),
    ("mars_direct", include_str!("builtins/mars_direct.toml")),
];

/// Names of the embedded scenarios, in presentation order.
pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

/// The scenario file embedded under `name`, if any.
pub fn builtin_toml(name: &str) -> Option<&'static str> {
    BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}
