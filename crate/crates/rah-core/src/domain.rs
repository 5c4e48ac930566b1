//! Shared vocabulary: identifiers, items, feedback, actions and personality
//! entries used by every other module.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{RahError, Result};

/// A content domain such as `movie`, `book` or `game`. Open-ended: any
/// nonempty lowercase token is accepted, the three standard domains are
/// always recognized.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainTag(String);

impl DomainTag {
    pub const MOVIE: &'static str = "movie";
    pub const BOOK: &'static str = "book";
    pub const GAME: &'static str = "game";

    pub fn new(name: &str) -> Result<Self> {
        if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c.is_uppercase()) {
            return Err(RahError::Validation(format!(
                "domain tag must be a nonempty lowercase token, got {name:?}"
            )));
        }
        Ok(DomainTag(name.to_string()))
    }

    pub fn movie() -> Self {
        DomainTag(Self::MOVIE.to_string())
    }

    pub fn book() -> Self {
        DomainTag(Self::BOOK.to_string())
    }

    pub fn game() -> Self {
        DomainTag(Self::GAME.to_string())
    }

    /// The three standard domains, in a fixed order.
    pub fn standard() -> Vec<Self> {
        vec![Self::movie(), Self::book(), Self::game()]
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(
            Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                $name(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

string_id!(UserId);
string_id!(ItemId);
string_id!(InteractionId);

/// A catalog entry. `description` may be empty until the Perceive agent has
/// enriched the item; `tags` are deduplicated by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    pub domain: DomainTag,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

/// The two feedback polarities. `Like > Dislike` is the documented tie-break
/// order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Action {
    Dislike,
    Like,
}

impl Action {
    pub fn flip(self) -> Action {
        match self {
            Action::Like => Action::Dislike,
            Action::Dislike => Action::Like,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Like => "Like",
            Action::Dislike => "Dislike",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a feedback event came from.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Source {
    Human,
    AssistantProxy,
    Obfuscation,
    RandomBaseline,
}

/// A single user-item feedback event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub id: InteractionId,
    pub user: UserId,
    pub item: ItemId,
    pub action: Action,
    #[serde(default)]
    pub rating: Option<u8>,
    #[serde(default)]
    pub comment: Option<String>,
    pub timestamp: i64,
    pub source: Source,
}

impl Interaction {
    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.rating {
            if !(1..=5).contains(&r) {
                return Err(RahError::Validation(format!(
                    "rating {r} out of range [1,5] for interaction {}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Maps a 1-5 star rating onto a feedback polarity. 4-5 is Like, 1-2 is
/// Dislike, and the ambiguous 3 maps to no polarity at all (the interaction
/// is dropped from polarity tasks).
pub fn action_from_rating(rating: u8) -> Result<Option<Action>> {
    match rating {
        4 | 5 => Ok(Some(Action::Like)),
        1 | 2 => Ok(Some(Action::Dislike)),
        3 => Ok(None),
        _ => Err(RahError::Validation(format!(
            "rating {rating} out of range [1,5]"
        ))),
    }
}

/// One polarized trait in a personality library.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitEntry {
    pub polarity: Action,
    pub statement: String,
    pub facets: BTreeSet<String>,
    pub provenance: BTreeSet<InteractionId>,
    /// Monotonic per-personality counter, not wall time, so oracle runs are
    /// reproducible.
    pub created_at: u64,
}

impl TraitEntry {
    pub fn validate(&self) -> Result<()> {
        if self.statement.is_empty() {
            return Err(RahError::Validation("trait statement is empty".into()));
        }
        if self.provenance.is_empty() {
            return Err(RahError::Validation(format!(
                "trait {:?} has empty provenance",
                self.statement
            )));
        }
        Ok(())
    }
}

/// Canonical statement text for a trait over a facet set.
pub fn trait_statement(polarity: Action, facets: &BTreeSet<String>) -> String {
    let joined = facets.iter().cloned().collect::<Vec<_>>().join(", ");
    match polarity {
        Action::Like => format!("likes {joined}"),
        Action::Dislike => format!("dislikes {joined}"),
    }
}

/// A user's accumulated trait library.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Personality {
    pub user: UserId,
    pub entries: Vec<TraitEntry>,
    /// Next value of the `created_at` counter.
    #[serde(default)]
    pub next_created_at: u64,
}

impl Personality {
    pub fn empty(user: UserId) -> Self {
        Personality {
            user,
            entries: Vec::new(),
            next_created_at: 0,
        }
    }

    pub fn push_entry(&mut self, polarity: Action, facets: BTreeSet<String>, provenance: BTreeSet<InteractionId>) {
        let statement = trait_statement(polarity, &facets);
        let created_at = self.next_created_at;
        self.next_created_at += 1;
        self.entries.push(TraitEntry {
            polarity,
            statement,
            facets,
            provenance,
            created_at,
        });
    }

    /// Union of facets across entries of the given polarity.
    pub fn facets(&self, polarity: Action) -> BTreeSet<String> {
        self.entries
            .iter()
            .filter(|e| e.polarity == polarity)
            .flat_map(|e| e.facets.iter().cloned())
            .collect()
    }

    /// True iff no two entries share (polarity, statement) and no facet
    /// appears under both polarities. Holds after every reflect pass.
    pub fn is_reflected(&self) -> bool {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert((e.polarity, e.statement.clone())) {
                return false;
            }
        }
        self.facets(Action::Like)
            .intersection(&self.facets(Action::Dislike))
            .next()
            .is_none()
    }
}

/// Which of the three experiment sets an interaction belongs to.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum SplitSet {
    Learn,
    Proxy,
    Unseen,
}

impl SplitSet {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitSet::Learn => "Learn",
            SplitSet::Proxy => "Proxy",
            SplitSet::Unseen => "Unseen",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "Learn" => Ok(SplitSet::Learn),
            "Proxy" => Ok(SplitSet::Proxy),
            "Unseen" => Ok(SplitSet::Unseen),
            _ => Err(RahError::Decode(format!("unknown split set {s:?}"))),
        }
    }
}

/// Per-user 1:1:1 partition of interactions into Learn/Proxy/Unseen.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub assignment: BTreeMap<InteractionId, SplitSet>,
}

impl SplitAssignment {
    pub fn set_of(&self, id: &InteractionId) -> Option<SplitSet> {
        self.assignment.get(id).copied()
    }
}
