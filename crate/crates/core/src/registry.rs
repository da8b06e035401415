//! Name-keyed registries of interchangeable strategies.
//!
//! Every family of algorithm variants in the crate (feedback laws, LO noise
//! generators, moment solvers, stability estimators) is a trait. The
//! built-in implementations are registered under stable names so that a
//! configuration file can select them at runtime; callers may register
//! additional implementations on their own registry instance.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Anything that can live in a [`Registry`].
pub trait Named {
    fn name(&self) -> &'static str;

    /// Alternative spellings accepted on lookup.
    fn aliases(&self) -> &'static [&'static str] {
        &[]
    }
}

pub struct Registry<S: ?Sized + Named> {
    family: &'static str,
    entries: Vec<Arc<S>>,
}

impl<S: ?Sized + Named> Registry<S> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            entries: Vec::new(),
        }
    }

    /// Adds a strategy, replacing any entry registered under the same name.
    pub fn register(&mut self, strategy: Arc<S>) -> &mut Self {
        let name = strategy.name();
        self.entries.retain(|e| e.name() != name);
        self.entries.push(strategy);
        self
    }

    pub fn with(mut self, strategy: Arc<S>) -> Self {
        self.register(strategy);
        self
    }

    pub fn get(&self, name: &str) -> Result<Arc<S>> {
        let key = name.trim().to_ascii_lowercase();
        self.entries
            .iter()
            .find(|e| e.name() == key || e.aliases().contains(&key.as_str()))
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy {
                family: self.family,
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn family(&self) -> &'static str {
        self.family
    }
}

impl<S: ?Sized + Named> fmt::Debug for Registry<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("family", &self.family)
            .field("entries", &self.names())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter: Named + Send + Sync {
        fn greet(&self) -> String;
    }

    struct Hello;
    impl Named for Hello {
        fn name(&self) -> &'static str {
            "hello"
        }
        fn aliases(&self) -> &'static [&'static str] {
            &["hi"]
        }
    }
    impl Greeter for Hello {
        fn greet(&self) -> String {
            "hello".into()
        }
    }

    struct Loud;
    impl Named for Loud {
        fn name(&self) -> &'static str {
            "hello"
        }
    }
    impl Greeter for Loud {
        fn greet(&self) -> String {
            "HELLO".into()
        }
    }

    #[test]
    fn lookup_by_name_and_alias() {
        let reg: Registry<dyn Greeter> = Registry::new("greeter").with(Arc::new(Hello));
        assert_eq!(reg.get("hello").unwrap().greet(), "hello");
        assert_eq!(reg.get(" HI ").unwrap().greet(), "hello");
    }

    #[test]
    fn unknown_name_lists_known_entries() {
        let reg: Registry<dyn Greeter> = Registry::new("greeter").with(Arc::new(Hello));
        let err = reg.get("bye").err().unwrap();
        assert!(err.to_string().contains("hello"));
        assert!(err.to_string().contains("greeter"));
    }

    #[test]
    fn re_registering_replaces() {
        let mut reg: Registry<dyn Greeter> = Registry::new("greeter");
        reg.register(Arc::new(Hello)).register(Arc::new(Loud));
        assert_eq!(reg.names(), vec!["hello"]);
        assert_eq!(reg.get("hello").unwrap().greet(), "HELLO");
    }
}
