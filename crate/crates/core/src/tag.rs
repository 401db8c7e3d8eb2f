use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// IOB boundary label. `B` opens a component, `I` continues one, `O` is outside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    B,
    I,
    O,
}

pub const NUM_TAGS: usize = 3;

impl Tag {
    pub const ALL: [Tag; NUM_TAGS] = [Tag::B, Tag::I, Tag::O];

    pub fn index(self) -> usize {
        match self {
            Tag::B => 0,
            Tag::I => 1,
            Tag::O => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        Self::ALL.get(i).copied()
    }

    pub fn is_component(self) -> bool {
        self != Tag::O
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::B => "B",
            Tag::I => "I",
            Tag::O => "O",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "B" => Ok(Tag::B),
            "I" => Ok(Tag::I),
            "O" => Ok(Tag::O),
            other => Err(format!("unknown tag `{other}` (expected B, I or O)")),
        }
    }
}
