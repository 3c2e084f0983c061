//! Name-keyed registries of interchangeable strategies.
//!
//! Terrains, control-affine systems, flow schemes and built-in scenarios are
//! all looked up by name at runtime (from a config file or the CLI) through a
//! [`Registry`]. Each registry maps a name to a factory that builds a boxed
//! trait object from string parameters.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Factory signature: positional string parameters in, strategy out.
pub type Factory<T> = Arc<dyn Fn(&[&str]) -> Result<Arc<T>> + Send + Sync>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<String, (String, Factory<T>)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register<F>(&mut self, name: &str, help: &str, factory: F) -> &mut Self
    where
        F: Fn(&[&str]) -> Result<Arc<T>> + Send + Sync + 'static,
    {
        self.entries
            .insert(name.to_string(), (help.to_string(), Arc::new(factory)));
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn help(&self, name: &str) -> Option<&str> {
        self.entries.get(name).map(|(h, _)| h.as_str())
    }

    pub fn build(&self, name: &str, params: &[&str]) -> Result<Arc<T>> {
        match self.entries.get(name) {
            Some((_, factory)) => factory(params),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().collect::<Vec<_>>().join(", "),
            }),
        }
    }

    /// Parses `"name arg1 arg2"` and builds the named strategy.
    pub fn build_from_spec(&self, spec: &str) -> Result<Arc<T>> {
        let mut parts = spec.split_whitespace();
        let name = parts.next().unwrap_or_default();
        let params: Vec<&str> = parts.collect();
        self.build(name, &params)
    }
}

/// Parses the `idx`-th factory parameter as a float.
pub(crate) fn param_f64(kind: &str, params: &[&str], idx: usize) -> Result<f64> {
    let raw = params
        .get(idx)
        .ok_or_else(|| Error::config(kind, format!("missing parameter #{}", idx + 1)))?;
    raw.parse::<f64>()
        .map_err(|_| Error::config(kind, format!("`{raw}` is not a number")))
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Shape: Send + Sync {
        fn area(&self) -> f64;
    }
    struct Square(f64);
    impl Shape for Square {
        fn area(&self) -> f64 {
            self.0 * self.0
        }
    }

    #[test]
    fn builds_by_name_with_params() {
        let mut reg: Registry<dyn Shape> = Registry::new("shape");
        reg.register("square", "side length", |p| {
            Ok(Arc::new(Square(param_f64("square", p, 0)?)) as Arc<dyn Shape>)
        });
        let s = reg.build_from_spec("square 3").unwrap();
        assert_eq!(s.area(), 9.0);
        assert!(reg.contains("square"));
        assert_eq!(reg.help("square"), Some("side length"));
    }

    #[test]
    fn unknown_name_lists_known_entries() {
        let mut reg: Registry<dyn Shape> = Registry::new("shape");
        reg.register("square", "", |_| Ok(Arc::new(Square(1.0)) as Arc<dyn Shape>));
        match reg.build("circle", &[]) {
            Err(Error::UnknownStrategy { known, .. }) => assert_eq!(known, "square"),
            other => panic!("unexpected {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn bad_parameter_is_a_config_error() {
        let mut reg: Registry<dyn Shape> = Registry::new("shape");
        reg.register("square", "", |p| {
            Ok(Arc::new(Square(param_f64("square", p, 0)?)) as Arc<dyn Shape>)
        });
        assert!(matches!(reg.build("square", &["x"]), Err(Error::Config { .. })));
        assert!(matches!(reg.build("square", &[]), Err(Error::Config { .. })));
    }
}
