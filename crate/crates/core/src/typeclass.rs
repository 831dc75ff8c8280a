//! Owner/Pointer/Value classification from declarative type facts.
//!
//! Instead of inspecting C++ declarations, the analyzer ingests a JSON
//! description of each type's relevant properties and applies the
//! classification rules: Owner clauses are tested first, then Pointer
//! clauses, and anything that matches neither is a Value.

use crate::ast::TypeKind;
use serde::Deserialize;
use std::collections::BTreeMap;
use thiserror::Error;

/// Properties of a single type relevant to classification.
///
/// Unknown fields are rejected so typos in facts files surface early.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeFacts {
    pub name: String,
    #[serde(default)]
    pub satisfies_container_requirements: bool,
    #[serde(default)]
    pub satisfies_iterator_requirements: bool,
    #[serde(default)]
    pub has_user_provided_destructor: bool,
    #[serde(default)]
    pub has_dereference_operator: bool,
    #[serde(default)]
    pub trivially_copyable: bool,
    #[serde(default)]
    pub copy_constructible_and_assignable: bool,
    #[serde(default)]
    pub members_and_bases: Vec<String>,
    #[serde(default)]
    pub is_reference_capture: bool,
    /// Predeclares an opaque library type with a fixed class; all other
    /// flags must be left unset.
    #[serde(default)]
    pub extern_class: Option<ExternClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum ExternClass {
    Owner,
    Pointer,
    Value,
}

impl From<ExternClass> for TypeKind {
    fn from(e: ExternClass) -> TypeKind {
        match e {
            ExternClass::Owner => TypeKind::Owner,
            ExternClass::Pointer => TypeKind::Pointer,
            ExternClass::Value => TypeKind::Value,
        }
    }
}

/// The set of type facts available to one analysis run.
#[derive(Debug, Clone, Default)]
pub struct FactsSet {
    facts: BTreeMap<String, TypeFacts>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("unknown type '{0}'")]
    UnknownType(String),
    #[error("cyclic type membership: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("duplicate type facts for '{0}'")]
    Duplicate(String),
    #[error("extern type '{0}' must not carry classification flags")]
    ExternWithFlags(String),
}

impl FactsSet {
    pub fn new(entries: Vec<TypeFacts>) -> Result<Self, ClassifyError> {
        let mut facts = BTreeMap::new();
        for entry in entries {
            if entry.extern_class.is_some() && has_any_flag(&entry) {
                return Err(ClassifyError::ExternWithFlags(entry.name));
            }
            if facts.insert(entry.name.clone(), entry.clone()).is_some() {
                return Err(ClassifyError::Duplicate(entry.name));
            }
        }
        Ok(FactsSet { facts })
    }

    pub fn from_json(json: &str) -> Result<Self, String> {
        let entries: Vec<TypeFacts> =
            serde_json::from_str(json).map_err(|e| format!("invalid type-facts file: {}", e))?;
        Self::new(entries).map_err(|e| e.to_string())
    }

    pub fn get(&self, name: &str) -> Option<&TypeFacts> {
        self.facts.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.facts.keys().map(|s| s.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

fn has_any_flag(f: &TypeFacts) -> bool {
    f.satisfies_container_requirements
        || f.satisfies_iterator_requirements
        || f.has_user_provided_destructor
        || f.has_dereference_operator
        || f.trivially_copyable
        || f.copy_constructible_and_assignable
        || f.is_reference_capture
        || !f.members_and_bases.is_empty()
}

/// Classifies a single type.
///
/// A type is an Owner when it satisfies the Container requirements with a
/// user-provided destructor, provides dereference with a user-provided
/// destructor, or has an Owner member or base. A non-Owner is a Pointer
/// when it satisfies the Iterator requirements, is trivially copyable and
/// copy constructible/assignable with a dereference operator, has a
/// Pointer member or base, or is a by-reference lambda capture. Everything
/// else is a Value.
pub fn classify(name: &str, facts: &FactsSet) -> Result<TypeKind, ClassifyError> {
    let mut visiting = Vec::new();
    let mut memo = BTreeMap::new();
    classify_rec(name, facts, &mut visiting, &mut memo)
}

fn classify_rec(
    name: &str,
    facts: &FactsSet,
    visiting: &mut Vec<String>,
    memo: &mut BTreeMap<String, TypeKind>,
) -> Result<TypeKind, ClassifyError> {
    if let Some(kind) = memo.get(name) {
        return Ok(*kind);
    }
    if visiting.iter().any(|v| v == name) {
        let mut cycle = visiting.clone();
        cycle.push(name.to_string());
        return Err(ClassifyError::Cycle(cycle));
    }
    let f = facts
        .get(name)
        .ok_or_else(|| ClassifyError::UnknownType(name.to_string()))?;

    let kind = if let Some(ext) = f.extern_class {
        ext.into()
    } else {
        visiting.push(name.to_string());
        let mut member_kinds = Vec::with_capacity(f.members_and_bases.len());
        for member in &f.members_and_bases {
            member_kinds.push(classify_rec(member, facts, visiting, memo)?);
        }
        visiting.pop();

        let owner = (f.satisfies_container_requirements && f.has_user_provided_destructor)
            || (f.has_dereference_operator && f.has_user_provided_destructor)
            || member_kinds.iter().any(|k| *k == TypeKind::Owner);
        if owner {
            TypeKind::Owner
        } else {
            let pointer = f.satisfies_iterator_requirements
                || (f.trivially_copyable
                    && f.copy_constructible_and_assignable
                    && f.has_dereference_operator)
                || member_kinds.iter().any(|k| *k == TypeKind::Pointer)
                || f.is_reference_capture;
            if pointer {
                TypeKind::Pointer
            } else {
                TypeKind::Value
            }
        }
    };
    memo.insert(name.to_string(), kind);
    Ok(kind)
}

/// Classifies every type in the set. The result is independent of
/// iteration order since classification is a pure function of the facts.
pub fn classify_all(facts: &FactsSet) -> Result<BTreeMap<String, TypeKind>, ClassifyError> {
    let mut memo = BTreeMap::new();
    for name in facts.names() {
        let mut visiting = Vec::new();
        classify_rec(name, facts, &mut visiting, &mut memo)?;
    }
    Ok(memo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn facts(entries: Vec<TypeFacts>) -> FactsSet {
        FactsSet::new(entries).unwrap()
    }

    fn named(name: &str) -> TypeFacts {
        TypeFacts {
            name: name.into(),
            ..TypeFacts::default()
        }
    }

    #[test]
    fn vector_like_is_owner() {
        let f = facts(vec![TypeFacts {
            satisfies_container_requirements: true,
            has_user_provided_destructor: true,
            ..named("vec_like")
        }]);
        assert_eq!(classify("vec_like", &f).unwrap(), TypeKind::Owner);
    }

    #[test]
    fn unique_ptr_like_is_owner() {
        let f = facts(vec![TypeFacts {
            has_dereference_operator: true,
            has_user_provided_destructor: true,
            ..named("uptr_like")
        }]);
        assert_eq!(classify("uptr_like", &f).unwrap(), TypeKind::Owner);
    }

    #[test]
    fn iterator_like_is_pointer() {
        let f = facts(vec![TypeFacts {
            satisfies_iterator_requirements: true,
            ..named("iter_like")
        }]);
        assert_eq!(classify("iter_like", &f).unwrap(), TypeKind::Pointer);
    }

    #[test]
    fn plain_int_is_value() {
        let f = facts(vec![named("int")]);
        assert_eq!(classify("int", &f).unwrap(), TypeKind::Value);
    }

    #[test]
    fn owner_member_propagates() {
        let f = facts(vec![
            TypeFacts {
                satisfies_container_requirements: true,
                has_user_provided_destructor: true,
                ..named("vec_like")
            },
            TypeFacts {
                members_and_bases: vec!["vec_like".into()],
                ..named("wrapper")
            },
        ]);
        assert_eq!(classify("wrapper", &f).unwrap(), TypeKind::Owner);
    }

    #[test]
    fn owner_clauses_beat_pointer_clauses() {
        // Satisfies both an Owner clause and the Iterator clause.
        let f = facts(vec![TypeFacts {
            has_dereference_operator: true,
            has_user_provided_destructor: true,
            satisfies_iterator_requirements: true,
            ..named("both")
        }]);
        assert_eq!(classify("both", &f).unwrap(), TypeKind::Owner);
    }

    #[test]
    fn chain_of_members_all_owner() {
        let f = facts(vec![
            TypeFacts {
                members_and_bases: vec!["b".into()],
                ..named("a")
            },
            TypeFacts {
                members_and_bases: vec!["c".into()],
                ..named("b")
            },
            TypeFacts {
                satisfies_container_requirements: true,
                has_user_provided_destructor: true,
                ..named("c")
            },
        ]);
        let all = classify_all(&f).unwrap();
        assert_eq!(all["a"], TypeKind::Owner);
        assert_eq!(all["b"], TypeKind::Owner);
        assert_eq!(all["c"], TypeKind::Owner);
    }

    #[test]
    fn empty_set_classifies_to_empty_map() {
        let f = FactsSet::default();
        assert!(classify_all(&f).unwrap().is_empty());
    }

    #[test]
    fn pointer_member_propagates() {
        let f = facts(vec![
            TypeFacts {
                satisfies_iterator_requirements: true,
                ..named("p")
            },
            TypeFacts {
                members_and_bases: vec!["p".into()],
                ..named("w")
            },
        ]);
        let all = classify_all(&f).unwrap();
        assert_eq!(all["p"], TypeKind::Pointer);
        assert_eq!(all["w"], TypeKind::Pointer);
    }

    #[test]
    fn cycle_is_reported_with_path() {
        let f = facts(vec![
            TypeFacts {
                members_and_bases: vec!["b".into()],
                ..named("a")
            },
            TypeFacts {
                members_and_bases: vec!["a".into()],
                ..named("b")
            },
        ]);
        match classify_all(&f) {
            Err(ClassifyError::Cycle(path)) => assert!(path.len() >= 3),
            other => panic!("expected cycle error, got {:?}", other),
        }
    }

    #[test]
    fn unknown_member_is_an_error() {
        let f = facts(vec![TypeFacts {
            members_and_bases: vec!["ghost".into()],
            ..named("a")
        }]);
        assert_eq!(
            classify("a", &f),
            Err(ClassifyError::UnknownType("ghost".into()))
        );
    }

    #[test]
    fn extern_class_predeclaration() {
        let f = facts(vec![TypeFacts {
            extern_class: Some(ExternClass::Owner),
            ..named("opaque_owner")
        }]);
        assert_eq!(classify("opaque_owner", &f).unwrap(), TypeKind::Owner);
    }

    #[test]
    fn extern_with_flags_rejected() {
        let err = FactsSet::new(vec![TypeFacts {
            extern_class: Some(ExternClass::Value),
            trivially_copyable: true,
            ..named("bad")
        }])
        .unwrap_err();
        assert!(matches!(err, ClassifyError::ExternWithFlags(_)));
    }

    #[test]
    fn strict_json_rejects_unknown_fields() {
        let json = r#"[{"name": "t", "is_ownerr": true}]"#;
        assert!(FactsSet::from_json(json).is_err());
    }

    #[test]
    fn json_round_trip() {
        let json = r#"[
            {"name": "vec_like", "satisfies_container_requirements": true,
             "has_user_provided_destructor": true},
            {"name": "holder", "members_and_bases": ["vec_like"]}
        ]"#;
        let f = FactsSet::from_json(json).unwrap();
        assert_eq!(classify("holder", &f).unwrap(), TypeKind::Owner);
    }

    /// Independent rule evaluator used as an oracle: evaluates the
    /// classification clauses directly on a flag tuple, with no recursion
    /// or memoization involved.
    fn oracle(flags: [bool; 7]) -> TypeKind {
        let [container, iterator, destructor, deref, trivial, copyable, ref_capture] = flags;
        if (container && destructor) || (deref && destructor) {
            TypeKind::Owner
        } else if iterator || (trivial && copyable && deref) || ref_capture {
            TypeKind::Pointer
        } else {
            TypeKind::Value
        }
    }

    #[test]
    fn all_flag_combinations_match_oracle() {
        for bits in 0u32..128 {
            let flags: [bool; 7] = std::array::from_fn(|i| bits & (1 << i) != 0);
            let f = facts(vec![TypeFacts {
                satisfies_container_requirements: flags[0],
                satisfies_iterator_requirements: flags[1],
                has_user_provided_destructor: flags[2],
                has_dereference_operator: flags[3],
                trivially_copyable: flags[4],
                copy_constructible_and_assignable: flags[5],
                is_reference_capture: flags[6],
                ..named("t")
            }]);
            assert_eq!(
                classify("t", &f).unwrap(),
                oracle(flags),
                "flag combination {:07b}",
                bits
            );
        }
    }

    #[test]
    fn adding_members_is_monotone() {
        // Every flag combination that classifies as Value flips to Owner
        // (resp. Pointer) when an Owner (resp. Pointer) member is added.
        for bits in 0u32..128 {
            let flags: [bool; 7] = std::array::from_fn(|i| bits & (1 << i) != 0);
            let base = TypeFacts {
                satisfies_container_requirements: flags[0],
                satisfies_iterator_requirements: flags[1],
                has_user_provided_destructor: flags[2],
                has_dereference_operator: flags[3],
                trivially_copyable: flags[4],
                copy_constructible_and_assignable: flags[5],
                is_reference_capture: flags[6],
                ..named("t")
            };
            if oracle(flags) != TypeKind::Value {
                continue;
            }
            let with_owner = facts(vec![
                TypeFacts {
                    members_and_bases: vec!["m".into()],
                    ..base.clone()
                },
                TypeFacts {
                    extern_class: Some(ExternClass::Owner),
                    ..named("m")
                },
            ]);
            assert_eq!(classify("t", &with_owner).unwrap(), TypeKind::Owner);
            let with_pointer = facts(vec![
                TypeFacts {
                    members_and_bases: vec!["m".into()],
                    ..base
                },
                TypeFacts {
                    extern_class: Some(ExternClass::Pointer),
                    ..named("m")
                },
            ]);
            assert_eq!(classify("t", &with_pointer).unwrap(), TypeKind::Pointer);
        }
    }
}
