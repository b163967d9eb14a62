use std::collections::BTreeSet;

use thiserror::Error;

use super::{Need, Scenario, SrcArg, MAX_ALLOCATION};

/// A scenario document that failed to parse or validate.
///
/// `path` locates the offending value, e.g. `calls[2].src`.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        SchemaError { path: path.into(), message: message.into() }
    }
}

/// Parse and validate a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, SchemaError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "$".to_string() } else { path };
        SchemaError::at(path, e.into_inner().to_string())
    })?;
    scenario.validate()?;
    Ok(scenario)
}

/// Canonical pretty-printed form. Parsing it yields an equal scenario.
pub fn serialize_scenario(scenario: &Scenario) -> String {
    let mut out = serde_json::to_string_pretty(scenario).expect("scenario serializes");
    out.push('\n');
    out
}

impl Scenario {
    /// Check references and per-function argument shapes.
    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.allocations.is_empty() {
            return Err(SchemaError::at("allocations", "at least one allocation is required"));
        }
        let mut ids = BTreeSet::new();
        for (i, a) in self.allocations.iter().enumerate() {
            let path = format!("allocations[{i}]");
            if !ids.insert(a.id.as_str()) {
                return Err(SchemaError::at(format!("{path}.id"), format!("duplicate id `{}`", a.id)));
            }
            if a.size == 0 || a.size > MAX_ALLOCATION {
                return Err(SchemaError::at(
                    format!("{path}.size"),
                    format!("size must be in 1..={MAX_ALLOCATION}, got {}", a.size),
                ));
            }
            let init = a.init.bytes().map_err(|m| SchemaError::at(format!("{path}.init"), m))?;
            if init.len() as u64 > a.size {
                return Err(SchemaError::at(
                    format!("{path}.init"),
                    format!("initializer has {} bytes but size is {}", init.len(), a.size),
                ));
            }
        }
        for (i, c) in self.calls.iter().enumerate() {
            let path = format!("calls[{i}]");
            let shape = c.function.shape();
            let fields = [
                ("dest", shape.dest, c.dest.is_some()),
                ("src", shape.src, c.src.is_some()),
                ("n", shape.n, c.n.is_some()),
                ("delims", shape.delims, c.delims.is_some()),
                ("line", shape.line, c.line.is_some()),
                ("value", shape.value, c.value.is_some()),
            ];
            for (field, need, present) in fields {
                match (need, present) {
                    (Need::Required, false) => {
                        return Err(SchemaError::at(
                            path.clone(),
                            format!("missing field `{field}` for {}", c.function),
                        ))
                    }
                    (Need::Absent, true) => {
                        return Err(SchemaError::at(
                            format!("{path}.{field}"),
                            format!("{} does not take `{field}`", c.function),
                        ))
                    }
                    _ => {}
                }
            }
            if let Some(d) = &c.dest {
                if !ids.contains(d.id.as_str()) {
                    return Err(SchemaError::at(format!("{path}.dest.id"), format!("unknown allocation `{}`", d.id)));
                }
            }
            if let Some(SrcArg::Ptr(s)) = &c.src {
                if !ids.contains(s.id.as_str()) {
                    return Err(SchemaError::at(format!("{path}.src.id"), format!("unknown allocation `{}`", s.id)));
                }
            }
            if let Some(SrcArg::Ascii(a)) = &c.src {
                if a.ascii.len() as u64 >= MAX_ALLOCATION {
                    return Err(SchemaError::at(format!("{path}.src.ascii"), "literal too long"));
                }
            }
        }
        Ok(())
    }
}
