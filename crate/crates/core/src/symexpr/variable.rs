use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

/// A degree-of-freedom aspect: the base name of a DoF plus its derivative order.
///
/// Order 0 is the position, 1 the velocity, 2 the acceleration and so on. The
/// canonical text form appends one apostrophe per order, so `a''` is the
/// acceleration of `a`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variable {
    name: Arc<str>,
    order: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid variable name `{0}`")]
pub struct InvalidVariable(pub String);

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

impl Variable {
    /// Position variable. Panics on names outside `[A-Za-z0-9_.]+`.
    pub fn new(name: &str) -> Self {
        Self::with_order(name, 0)
    }

    pub fn with_order(name: &str, order: u32) -> Self {
        Self::try_with_order(name, order).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn try_with_order(name: &str, order: u32) -> Result<Self, InvalidVariable> {
        if !valid_name(name) {
            return Err(InvalidVariable(name.to_string()));
        }
        Ok(Self {
            name: Arc::from(name),
            order,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// The key under which this variable's derivative is stored in a gradient.
    pub fn derivative(&self) -> Variable {
        Variable {
            name: self.name.clone(),
            order: self.order + 1,
        }
    }

    /// Inverse of [`Variable::derivative`]; `None` for position variables.
    pub fn integral(&self) -> Option<Variable> {
        (self.order > 0).then(|| Variable {
            name: self.name.clone(),
            order: self.order - 1,
        })
    }

    pub fn position(&self) -> Variable {
        self.at_order(0)
    }

    pub fn at_order(&self, order: u32) -> Variable {
        Variable {
            name: self.name.clone(),
            order,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        for _ in 0..self.order {
            f.write_str("'")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Variable {
    type Err = InvalidVariable;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let name = s.trim_end_matches('\'');
        let order = (s.len() - name.len()) as u32;
        Variable::try_with_order(name, order).map_err(|_| InvalidVariable(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_form() {
        assert_eq!(Variable::new("a").to_string(), "a");
        assert_eq!(Variable::with_order("a", 1).to_string(), "a'");
        assert_eq!(Variable::with_order("a", 3).to_string(), "a'''");
        assert_eq!("b''".parse::<Variable>().unwrap(), Variable::with_order("b", 2));
        assert!("".parse::<Variable>().is_err());
        assert!("'".parse::<Variable>().is_err());
        assert!("a b".parse::<Variable>().is_err());
    }

    #[test]
    fn equality_uses_name_and_order() {
        assert_ne!(Variable::new("b"), Variable::with_order("b", 1));
        assert_eq!(Variable::new("b").derivative(), Variable::with_order("b", 1));
        assert_eq!(Variable::with_order("b", 1).integral(), Some(Variable::new("b")));
        assert_eq!(Variable::new("b").integral(), None);
    }

    proptest::proptest! {
        #[test]
        fn text_round_trip(name in "[A-Za-z_][A-Za-z0-9_.]{0,8}", order in 0u32..5) {
            let v = Variable::with_order(&name, order);
            proptest::prop_assert_eq!(v.to_string().parse::<Variable>().unwrap(), v);
        }
    }
}
