use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ids::{ActionName, ActuatorKind};
use crate::error::{Error, Result};

/// How two actions relate when issued together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Same,
    Different,
    Opposite,
    Dependent,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Same => "same",
            Relation::Different => "different",
            Relation::Opposite => "opposite",
            Relation::Dependent => "dependent",
        })
    }
}

/// An action qualified by its actuator kind, e.g. `window:open`.
pub type QualifiedAction = (ActuatorKind, ActionName);

fn ordered<T: Ord>(a: T, b: T) -> (T, T) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Vocabulary {
    actions: Vec<ActionName>,
    pairs: BTreeMap<(ActionName, ActionName), Relation>,
}

/// Per-kind action vocabularies with symmetric pair relations. Distinct pairs
/// not declared otherwise are `different`; `(n, n)` is always `same`.
/// Pairs across actuator kinds can be related explicitly, e.g. a window
/// opening is the opposite of a thermostat heating.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActionRelationTable {
    kinds: BTreeMap<ActuatorKind, Vocabulary>,
    cross: BTreeMap<(QualifiedAction, QualifiedAction), Relation>,
}

impl ActionRelationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare_kind(
        &mut self,
        kind: impl Into<ActuatorKind>,
        actions: impl IntoIterator<Item = impl Into<ActionName>>,
    ) -> Result<()> {
        let kind = kind.into();
        if self.kinds.contains_key(&kind) {
            return Err(Error::duplicate("actuator kind", kind.as_str()));
        }
        let mut vocabulary = Vocabulary::default();
        for action in actions {
            let action = action.into();
            if vocabulary.actions.contains(&action) {
                return Err(Error::duplicate("action", format!("{kind}:{action}")));
            }
            vocabulary.actions.push(action);
        }
        if vocabulary.actions.is_empty() {
            return Err(Error::invalid(
                format!("actuator kind `{kind}`"),
                "vocabulary is empty",
            ));
        }
        self.kinds.insert(kind, vocabulary);
        Ok(())
    }

    fn vocabulary(&self, kind: &str) -> Result<&Vocabulary> {
        self.kinds
            .get(kind)
            .ok_or_else(|| Error::UnknownActuatorKind(kind.to_owned()))
    }

    fn require_action(&self, kind: &str, action: &str) -> Result<()> {
        if self.vocabulary(kind)?.actions.iter().any(|a| a.as_str() == action) {
            Ok(())
        } else {
            Err(Error::UnknownAction {
                kind: kind.to_owned(),
                action: action.to_owned(),
            })
        }
    }

    fn check_declared_relation(relation: Relation, what: String) -> Result<()> {
        if relation == Relation::Same {
            return Err(Error::invalid(
                what,
                "`same` is reserved for an action paired with itself",
            ));
        }
        Ok(())
    }

    pub fn relate(
        &mut self,
        kind: &str,
        a: impl Into<ActionName>,
        b: impl Into<ActionName>,
        relation: Relation,
    ) -> Result<()> {
        let (a, b) = (a.into(), b.into());
        self.require_action(kind, a.as_str())?;
        self.require_action(kind, b.as_str())?;
        let what = format!("relation {kind}:{a}/{b}");
        if a == b {
            return Err(Error::invalid(what, "an action cannot be related to itself"));
        }
        Self::check_declared_relation(relation, what.clone())?;
        let vocabulary = self.kinds.get_mut(kind).expect("checked above");
        if vocabulary.pairs.insert(ordered(a, b), relation).is_some() {
            return Err(Error::duplicate("action relation", what));
        }
        Ok(())
    }

    pub fn relate_across(
        &mut self,
        a: QualifiedAction,
        b: QualifiedAction,
        relation: Relation,
    ) -> Result<()> {
        self.require_action(a.0.as_str(), a.1.as_str())?;
        self.require_action(b.0.as_str(), b.1.as_str())?;
        let what = format!("relation {}:{}/{}:{}", a.0, a.1, b.0, b.1);
        if a.0 == b.0 {
            return Err(Error::invalid(
                what,
                "cross-kind relations must name two different actuator kinds",
            ));
        }
        Self::check_declared_relation(relation, what.clone())?;
        if self.cross.insert(ordered(a, b), relation).is_some() {
            return Err(Error::duplicate("action relation", what));
        }
        Ok(())
    }

    pub fn relation(&self, kind: &str, n1: &str, n2: &str) -> Result<Relation> {
        self.require_action(kind, n1)?;
        self.require_action(kind, n2)?;
        if n1 == n2 {
            return Ok(Relation::Same);
        }
        let key = ordered(ActionName::from(n1), ActionName::from(n2));
        Ok(self.kinds[kind]
            .pairs
            .get(&key)
            .copied()
            .unwrap_or(Relation::Different))
    }

    /// Relation between actions on actuators of possibly different kinds.
    pub fn relation_between(&self, k1: &str, n1: &str, k2: &str, n2: &str) -> Result<Relation> {
        if k1 == k2 {
            return self.relation(k1, n1, n2);
        }
        self.require_action(k1, n1)?;
        self.require_action(k2, n2)?;
        let key = ordered(
            (ActuatorKind::from(k1), ActionName::from(n1)),
            (ActuatorKind::from(k2), ActionName::from(n2)),
        );
        Ok(self
            .cross
            .get(&key)
            .copied()
            .unwrap_or(Relation::Different))
    }

    pub fn has_kind(&self, kind: &str) -> bool {
        self.kinds.contains_key(kind)
    }

    pub fn has_action(&self, kind: &str, action: &str) -> bool {
        self.require_action(kind, action).is_ok()
    }

    pub fn kinds(&self) -> impl Iterator<Item = (&ActuatorKind, &[ActionName])> {
        self.kinds.iter().map(|(k, v)| (k, v.actions.as_slice()))
    }

    /// Explicitly declared same-kind pairs, in canonical order.
    pub fn declared_pairs(
        &self,
        kind: &str,
    ) -> impl Iterator<Item = (&ActionName, &ActionName, Relation)> {
        self.kinds
            .get(kind)
            .into_iter()
            .flat_map(|v| v.pairs.iter().map(|((a, b), r)| (a, b, *r)))
    }

    pub fn cross_pairs(
        &self,
    ) -> impl Iterator<Item = (&QualifiedAction, &QualifiedAction, Relation)> {
        self.cross.iter().map(|((a, b), r)| (a, b, *r))
    }
}

pub fn action_relation(
    kind: &str,
    n1: &str,
    n2: &str,
    table: &ActionRelationTable,
) -> Result<Relation> {
    table.relation(kind, n1, n2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ActionRelationTable {
        let mut t = ActionRelationTable::new();
        t.declare_kind("thermostat", ["on", "off", "increase", "decrease"])
            .unwrap();
        t.declare_kind("alarm", ["sound", "beep", "flash", "silence"])
            .unwrap();
        t.declare_kind("door", ["open", "close"]).unwrap();
        t.declare_kind("window", ["open", "close"]).unwrap();
        t.relate("thermostat", "increase", "decrease", Relation::Opposite)
            .unwrap();
        t.relate("alarm", "flash", "beep", Relation::Dependent).unwrap();
        t.relate("door", "open", "close", Relation::Opposite).unwrap();
        t.relate_across(
            ("window".into(), "open".into()),
            ("thermostat".into(), "on".into()),
            Relation::Opposite,
        )
        .unwrap();
        t
    }

    #[test]
    fn relation_examples() {
        let t = table();
        assert_eq!(
            action_relation("thermostat", "increase", "decrease", &t).unwrap(),
            Relation::Opposite
        );
        assert_eq!(
            action_relation("alarm", "beep", "flash", &t).unwrap(),
            Relation::Dependent
        );
        assert_eq!(action_relation("door", "open", "open", &t).unwrap(), Relation::Same);
        assert_eq!(
            action_relation("thermostat", "on", "decrease", &t).unwrap(),
            Relation::Different
        );
    }

    #[test]
    fn symmetric_lookups() {
        let t = table();
        assert_eq!(
            t.relation("thermostat", "decrease", "increase").unwrap(),
            Relation::Opposite
        );
        assert_eq!(
            t.relation_between("thermostat", "on", "window", "open").unwrap(),
            Relation::Opposite
        );
        assert_eq!(
            t.relation_between("window", "close", "thermostat", "on").unwrap(),
            Relation::Different
        );
    }

    #[test]
    fn unknown_action_is_an_error() {
        let t = table();
        assert!(matches!(
            t.relation("alarm", "beep", "explode"),
            Err(Error::UnknownAction { action, .. }) if action == "explode"
        ));
        assert!(matches!(
            t.relation("blender", "on", "off"),
            Err(Error::UnknownActuatorKind(_))
        ));
    }

    #[test]
    fn same_cannot_be_declared_for_distinct_actions() {
        let mut t = table();
        assert!(t.relate("door", "open", "close", Relation::Same).is_err());
        assert!(t.relate("alarm", "beep", "flash", Relation::Opposite).is_err());
    }
}
