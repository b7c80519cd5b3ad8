//! Name-keyed constructors for trait-object strategies.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Parameters handed to a constructor. Kept as a TOML table so config blocks
/// can be passed through untouched.
pub type Params = toml::Table;

pub type Constructor<T, C> = fn(&C) -> Result<Box<T>>;

/// Constructors registered by name; `C` is what a constructor reads.
pub struct Registry<T: ?Sized, C = Params> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Constructor<T, C>>,
}

impl<T: ?Sized, C> Registry<T, C> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, ctor: Constructor<T, C>) -> &mut Self {
        self.entries.insert(name, ctor);
        self
    }

    pub fn with(mut self, name: &'static str, ctor: Constructor<T, C>) -> Self {
        self.register(name, ctor);
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn build(&self, name: &str, params: &C) -> Result<Box<T>> {
        let ctor = self.entries.get(name).ok_or_else(|| {
            let known: Vec<_> = self.names().collect();
            Error::Config(format!(
                "unknown {} '{name}' (known: {})",
                self.kind,
                known.join(", ")
            ))
        })?;
        ctor(params)
    }
}

impl<T: ?Sized, C> fmt::Debug for Registry<T, C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("names", &self.entries.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// Reads a float parameter, falling back to `default` when absent.
pub fn param_f64(params: &Params, key: &str, default: Option<f64>) -> Result<f64> {
    match params.get(key) {
        Some(toml::Value::Float(x)) => Ok(*x),
        Some(toml::Value::Integer(i)) => Ok(*i as f64),
        Some(other) => Err(Error::Config(format!(
            "parameter '{key}' must be a number, got {other}"
        ))),
        None => default.ok_or_else(|| Error::Config(format!("missing parameter '{key}'"))),
    }
}
