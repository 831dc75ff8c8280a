//! Points-to sets and points-to maps: the dataflow lattice.
//!
//! A pset element is either the address family of a variable at some
//! ownership depth (level 0 is the variable's own address, level 1 the
//! object it owns, and so on), or one of the atoms `global`, `null`,
//! `invalid`. A pmap maps each tracked variable to a non-empty pset and
//! carries invalidation provenance for diagnostics.

use crate::loc::SourceLoc;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Ownership depth cap; dereferencing saturates here. Invalidation always
/// removes a whole variable family, so saturation never loses an
/// invalidation.
pub const MAX_LEVEL: u8 = 3;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum PsetEntry {
    /// `name` at prime depth `level`: level 0 is the variable's address,
    /// level 1 the object it owns (`o'`), level 2 `o''`, ...
    Var { name: String, level: u8 },
    Global,
    Null,
    Invalid,
}

impl PsetEntry {
    pub fn var(name: &str, level: u8) -> Self {
        debug_assert!(level <= MAX_LEVEL);
        PsetEntry::Var {
            name: name.to_string(),
            level,
        }
    }

    pub fn var_name(&self) -> Option<&str> {
        match self {
            PsetEntry::Var { name, .. } => Some(name),
            _ => None,
        }
    }
}

impl fmt::Display for PsetEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PsetEntry::Var { name, level } => {
                write!(f, "{}", name)?;
                for _ in 0..*level {
                    write!(f, "'")?;
                }
                Ok(())
            }
            PsetEntry::Global => write!(f, "global"),
            PsetEntry::Null => write!(f, "null"),
            PsetEntry::Invalid => write!(f, "invalid"),
        }
    }
}

pub type Pset = BTreeSet<PsetEntry>;

/// Why an `invalid` entry appeared; rendered as a diagnostic note.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum InvalidationReason {
    Destroyed(String),
    DeallocatedThrough(String),
    MovedFrom(String),
    OwnerMutated(String),
    NeverAssigned,
    PointerArith,
    NonAddress,
    DerefNull,
    AnnotatedInvalid,
    Internal,
}

impl InvalidationReason {
    pub fn describe(&self) -> String {
        match self {
            InvalidationReason::Destroyed(v) => format!("invalidated here: destroy({})", v),
            InvalidationReason::DeallocatedThrough(p) => {
                format!("invalidated here: deallocate({})", p)
            }
            InvalidationReason::MovedFrom(v) => format!("invalidated here: move out of '{}'", v),
            InvalidationReason::OwnerMutated(o) => {
                format!("invalidated here: non-const use of Owner '{}'", o)
            }
            InvalidationReason::NeverAssigned => "created here and never assigned".to_string(),
            InvalidationReason::PointerArith => {
                "target unknown after pointer arithmetic".to_string()
            }
            InvalidationReason::NonAddress => "assigned a non-address value here".to_string(),
            InvalidationReason::DerefNull => "read through a possibly null pointer".to_string(),
            InvalidationReason::AnnotatedInvalid => {
                "annotation declares this lifetime invalid".to_string()
            }
            InvalidationReason::Internal => "internal analyzer fallback".to_string(),
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct InvalidationNote {
    pub loc: SourceLoc,
    pub reason: InvalidationReason,
}

pub type NoteSet = BTreeSet<InvalidationNote>;

/// A points-to map. Equality and ordering consider only the pset entries;
/// provenance is diagnostic metadata riding along.
#[derive(Clone, Debug, Default)]
pub struct Pmap {
    entries: BTreeMap<String, Pset>,
    provenance: BTreeMap<String, NoteSet>,
}

impl PartialEq for Pmap {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Eq for Pmap {}

impl Pmap {
    pub fn bottom() -> Self {
        Pmap::default()
    }

    pub fn get(&self, var: &str) -> Option<&Pset> {
        self.entries.get(var)
    }

    pub fn notes(&self, var: &str) -> NoteSet {
        self.provenance.get(var).cloned().unwrap_or_default()
    }

    pub fn contains_var(&self, var: &str) -> bool {
        self.entries.contains_key(var)
    }

    pub fn vars(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Pset)> {
        self.entries.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Binds `var` to a pset, replacing provenance with the given notes.
    pub fn bind(&mut self, var: &str, pset: Pset, notes: NoteSet) {
        debug_assert!(!pset.is_empty(), "psets are never empty");
        self.entries.insert(var.to_string(), pset);
        if notes.is_empty() {
            self.provenance.remove(var);
        } else {
            self.provenance.insert(var.to_string(), notes);
        }
    }

    pub fn remove(&mut self, var: &str) {
        self.entries.remove(var);
        self.provenance.remove(var);
    }

    pub fn add_note(&mut self, var: &str, note: InvalidationNote) {
        self.provenance
            .entry(var.to_string())
            .or_default()
            .insert(note);
    }

    /// Full-state equality including provenance; the solver iterates until
    /// this stabilizes so diagnostic notes reach their fixpoint too.
    pub fn same_state(&self, other: &Self) -> bool {
        self.entries == other.entries && self.provenance == other.provenance
    }

    /// Deterministic one-line rendering: `p -> {x, invalid}, q -> {null}`.
    pub fn render(&self) -> String {
        let mut parts = Vec::new();
        for (var, pset) in &self.entries {
            let entries: Vec<String> = pset.iter().map(|e| e.to_string()).collect();
            parts.push(format!("{} -> {{{}}}", var, entries.join(", ")));
        }
        parts.join(", ")
    }
}

impl fmt::Display for Pmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render())
    }
}

/// The partial order: `f ⊑ g` iff every variable of `f` is in `g` with a
/// superset pset.
pub fn leq(f: &Pmap, g: &Pmap) -> bool {
    f.entries.iter().all(|(var, pset)| {
        g.entries
            .get(var)
            .map(|gp| pset.is_subset(gp))
            .unwrap_or(false)
    })
}

/// Least upper bound: union of domains, per-variable union of psets.
/// Provenance sets merge.
pub fn join(f: &Pmap, g: &Pmap) -> Pmap {
    let mut out = f.clone();
    for (var, pset) in &g.entries {
        out.entries
            .entry(var.clone())
            .or_default()
            .extend(pset.iter().cloned());
    }
    for (var, notes) in &g.provenance {
        out.provenance
            .entry(var.clone())
            .or_default()
            .extend(notes.iter().cloned());
    }
    out
}

/// The family `{v, v', v'', ...}` intersection test.
fn intersects_family(pset: &Pset, victims: &BTreeSet<String>) -> bool {
    pset.iter()
        .any(|e| e.var_name().map(|n| victims.contains(n)).unwrap_or(false))
}

/// The invalidation operator: every variable whose pset intersects a
/// victim's family loses the whole family and gains `invalid`, recording
/// `note` as provenance. Entries of other variables are untouched.
pub fn invalidate(d: &Pmap, victims: &BTreeSet<String>, note: InvalidationNote) -> Pmap {
    invalidate_levels(d, victims, 0, note)
}

/// Like [`invalidate`] but only removes family entries at `min_level` or
/// deeper. Owner mutation uses `min_level = 1`: the owner's own address
/// survives its reallocation.
pub fn invalidate_levels(
    d: &Pmap,
    victims: &BTreeSet<String>,
    min_level: u8,
    note: InvalidationNote,
) -> Pmap {
    let mut out = d.clone();
    for (var, pset) in &d.entries {
        let hit = pset.iter().any(|e| match e {
            PsetEntry::Var { name, level } => victims.contains(name) && *level >= min_level,
            _ => false,
        });
        if !hit {
            continue;
        }
        let mut new_pset: Pset = pset
            .iter()
            .filter(|e| match e {
                PsetEntry::Var { name, level } => {
                    !(victims.contains(name) && *level >= min_level)
                }
                _ => true,
            })
            .cloned()
            .collect();
        new_pset.insert(PsetEntry::Invalid);
        out.entries.insert(var.clone(), new_pset);
        out.provenance
            .entry(var.clone())
            .or_default()
            .insert(note.clone());
    }
    let _ = intersects_family;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn loc() -> SourceLoc {
        SourceLoc::new(&Arc::from("t.lt"), 1, 1)
    }

    fn pmap(binds: &[(&str, &[PsetEntry])]) -> Pmap {
        let mut m = Pmap::bottom();
        for (var, entries) in binds {
            m.bind(var, entries.iter().cloned().collect(), NoteSet::new());
        }
        m
    }

    #[test]
    fn bottom_below_everything() {
        let g = pmap(&[("p", &[PsetEntry::var("x", 0)])]);
        assert!(leq(&Pmap::bottom(), &g));
        assert!(leq(&Pmap::bottom(), &Pmap::bottom()));
    }

    #[test]
    fn leq_subset_per_variable() {
        let f = pmap(&[("p", &[PsetEntry::var("x", 0)])]);
        let g = pmap(&[("p", &[PsetEntry::var("x", 0), PsetEntry::Invalid])]);
        assert!(leq(&f, &g));
        assert!(!leq(&g, &f));
    }

    #[test]
    fn leq_requires_domain_containment() {
        let f = pmap(&[
            ("p", &[PsetEntry::var("x", 0)] as &[_]),
            ("q", &[PsetEntry::Null]),
        ]);
        let g = pmap(&[("p", &[PsetEntry::var("x", 0)])]);
        assert!(!leq(&f, &g));
    }

    #[test]
    fn join_unions_psets() {
        let f = pmap(&[("p", &[PsetEntry::var("x", 0)])]);
        let g = pmap(&[("p", &[PsetEntry::Invalid])]);
        let j = join(&f, &g);
        assert_eq!(
            j.get("p").unwrap(),
            &[PsetEntry::var("x", 0), PsetEntry::Invalid]
                .into_iter()
                .collect::<Pset>()
        );
    }

    #[test]
    fn join_with_bottom_is_identity() {
        let f = pmap(&[("p", &[PsetEntry::var("x", 0), PsetEntry::Null])]);
        assert_eq!(join(&f, &Pmap::bottom()), f);
        assert_eq!(join(&Pmap::bottom(), &f), f);
    }

    #[test]
    fn invalidate_replaces_family_with_invalid() {
        let d = pmap(&[("p", &[PsetEntry::var("y", 0)])]);
        let victims = ["y".to_string()].into_iter().collect();
        let note = InvalidationNote {
            loc: loc(),
            reason: InvalidationReason::Destroyed("y".into()),
        };
        let out = invalidate(&d, &victims, note);
        assert_eq!(
            out.get("p").unwrap(),
            &[PsetEntry::Invalid].into_iter().collect::<Pset>()
        );
        assert_eq!(out.notes("p").len(), 1);
    }

    #[test]
    fn invalidate_skips_disjoint_psets() {
        let d = pmap(&[("p", &[PsetEntry::var("x", 0)])]);
        let victims = ["y".to_string()].into_iter().collect();
        let note = InvalidationNote {
            loc: loc(),
            reason: InvalidationReason::Destroyed("y".into()),
        };
        let out = invalidate(&d, &victims, note);
        assert_eq!(out, d);
        assert!(out.notes("p").is_empty());
    }

    #[test]
    fn invalidate_removes_whole_prime_family() {
        let d = pmap(&[("p", &[PsetEntry::var("o", 1), PsetEntry::Null])]);
        let victims = ["o".to_string()].into_iter().collect();
        let note = InvalidationNote {
            loc: loc(),
            reason: InvalidationReason::Destroyed("o".into()),
        };
        let out = invalidate(&d, &victims, note);
        assert_eq!(
            out.get("p").unwrap(),
            &[PsetEntry::Null, PsetEntry::Invalid]
                .into_iter()
                .collect::<Pset>()
        );
    }

    #[test]
    fn invalidate_levels_spares_level_zero() {
        let d = pmap(&[
            ("p", &[PsetEntry::var("o", 1)] as &[_]),
            ("q", &[PsetEntry::var("o", 0)]),
        ]);
        let victims = ["o".to_string()].into_iter().collect();
        let note = InvalidationNote {
            loc: loc(),
            reason: InvalidationReason::OwnerMutated("o".into()),
        };
        let out = invalidate_levels(&d, &victims, 1, note);
        assert_eq!(
            out.get("p").unwrap(),
            &[PsetEntry::Invalid].into_iter().collect::<Pset>()
        );
        assert_eq!(
            out.get("q").unwrap(),
            &[PsetEntry::var("o", 0)].into_iter().collect::<Pset>()
        );
    }

    #[test]
    fn render_is_sorted_and_stable() {
        let d = pmap(&[
            ("q", &[PsetEntry::Invalid, PsetEntry::var("x", 0)] as &[_]),
            ("p", &[PsetEntry::Null]),
        ]);
        assert_eq!(d.render(), "p -> {null}, q -> {x, invalid}");
    }
}
