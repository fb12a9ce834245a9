//! Architecture documents in TOML.

use std::path::Path;

use crate::error::{Error, Result};
use crate::train::net::NetArch;

/// Parses and validates an architecture document.
pub fn parse_archdoc(text: &str) -> Result<NetArch> {
    let arch: NetArch = toml::from_str(text).map_err(|e| Error::Format(format!("architecture: {e}")))?;
    arch.plan()?;
    Ok(arch)
}

pub fn read_archdoc(path: &Path) -> Result<NetArch> {
    parse_archdoc(&std::fs::read_to_string(path)?)
}

pub fn archdoc_to_string(arch: &NetArch) -> Result<String> {
    toml::to_string_pretty(arch).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::net::{LayerConstraint, ShortcutKind};

    #[test]
    fn round_trip() {
        let mut arch = NetArch::demo(8, 4, 2);
        arch.blocks[0].lipschitz_bound = Some(1.5);
        let text = archdoc_to_string(&arch).unwrap();
        assert_eq!(parse_archdoc(&text).unwrap(), arch);
        let six = NetArch::six_layer(32, 4, 3);
        assert_eq!(parse_archdoc(&archdoc_to_string(&six).unwrap()).unwrap(), six);
        assert_eq!(arch.constraints()[0], LayerConstraint::new(1.5, f64::INFINITY));
    }

    #[test]
    fn defaults_and_errors() {
        let text = r#"
input_shape = [1, 4, 4]
classes = 2
[[blocks]]
name = "a"
c_out = 2
kernel = [3, 3]
shortcut = "none"
[[blocks]]
name = "out"
c_out = 1
kernel = [1, 1]
flatten = true
relu = false
"#;
        let arch = parse_archdoc(text).unwrap();
        assert_eq!(arch.blocks[0].stride, (1, 1));
        assert!(arch.blocks[0].relu);
        assert_eq!(arch.blocks[1].shortcut, ShortcutKind::None);
        assert!(parse_archdoc(&text.replace("c_out = 1", "c_out = 2")).is_err());
        assert!(parse_archdoc("classes = 2").is_err());
    }
}
