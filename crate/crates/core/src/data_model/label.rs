//! The 15 activity classes: travel state × posture × phone position.

use std::fmt;
use std::str::FromStr;

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TravelState {
    Bus,
    Walking,
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Posture {
    Standing,
    Sitting,
    /// Used only with [`TravelState::Walking`].
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhonePosition {
    Pocket,
    Hand,
    Backpack,
}

impl TravelState {
    pub fn token(self) -> &'static str {
        match self {
            TravelState::Bus => "bus",
            TravelState::Walking => "walking",
            TravelState::Stationary => "stationary",
        }
    }
}

impl FromStr for TravelState {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bus" => Ok(TravelState::Bus),
            "walking" => Ok(TravelState::Walking),
            "stationary" => Ok(TravelState::Stationary),
            other => Err(other.to_string()),
        }
    }
}

impl Posture {
    /// Token for the posture; `None` for [`Posture::NotApplicable`].
    pub fn token(self) -> Option<&'static str> {
        match self {
            Posture::Standing => Some("standing"),
            Posture::Sitting => Some("sitting"),
            Posture::NotApplicable => None,
        }
    }
}

impl FromStr for Posture {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standing" => Ok(Posture::Standing),
            "sitting" => Ok(Posture::Sitting),
            other => Err(other.to_string()),
        }
    }
}

impl PhonePosition {
    pub fn token(self) -> &'static str {
        match self {
            PhonePosition::Pocket => "pocket",
            PhonePosition::Hand => "hand",
            PhonePosition::Backpack => "backpack",
        }
    }
}

impl FromStr for PhonePosition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pocket" => Ok(PhonePosition::Pocket),
            "hand" => Ok(PhonePosition::Hand),
            "backpack" => Ok(PhonePosition::Backpack),
            other => Err(other.to_string()),
        }
    }
}

/// A validated (state, posture, position) triple.
///
/// Walking is the only state without a posture; every other state carries
/// standing or sitting. That leaves exactly 15 valid labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivityLabel {
    state: TravelState,
    posture: Posture,
    position: PhonePosition,
}

impl ActivityLabel {
    pub fn new(
        state: TravelState,
        posture: Posture,
        position: PhonePosition,
    ) -> Result<Self, DataError> {
        let walking = state == TravelState::Walking;
        let na = posture == Posture::NotApplicable;
        if walking != na {
            return Err(DataError::InvalidLabel {
                state: state.token().to_string(),
                posture: posture.token().unwrap_or("null").to_string(),
            });
        }
        Ok(Self {
            state,
            posture,
            position,
        })
    }

    pub fn state(&self) -> TravelState {
        self.state
    }

    pub fn posture(&self) -> Posture {
        self.posture
    }

    pub fn position(&self) -> PhonePosition {
        self.position
    }

    pub fn class(&self) -> ActivityClass {
        ActivityClass::from_label(*self)
    }
}

/// Index of one of the 15 activity classes, in dataset-table order:
/// bus standing, bus sitting, walking, stationary standing, stationary
/// sitting; each group ordered pocket, hand, backpack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivityClass(u8);

impl ActivityClass {
    pub const COUNT: usize = 15;

    const GROUPS: [(TravelState, Posture); 5] = [
        (TravelState::Bus, Posture::Standing),
        (TravelState::Bus, Posture::Sitting),
        (TravelState::Walking, Posture::NotApplicable),
        (TravelState::Stationary, Posture::Standing),
        (TravelState::Stationary, Posture::Sitting),
    ];
    const POSITIONS: [PhonePosition; 3] = [
        PhonePosition::Pocket,
        PhonePosition::Hand,
        PhonePosition::Backpack,
    ];

    pub fn from_index(index: usize) -> Option<Self> {
        (index < Self::COUNT).then_some(Self(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = ActivityClass> {
        (0..Self::COUNT as u8).map(ActivityClass)
    }

    pub fn from_label(label: ActivityLabel) -> Self {
        let group = Self::GROUPS
            .iter()
            .position(|&(s, p)| s == label.state && p == label.posture)
            .expect("validated label always maps to a group");
        let pos = Self::POSITIONS
            .iter()
            .position(|&p| p == label.position)
            .expect("all positions listed");
        Self((group * 3 + pos) as u8)
    }

    pub fn label(self) -> ActivityLabel {
        let (state, posture) = Self::GROUPS[self.index() / 3];
        ActivityLabel {
            state,
            posture,
            position: Self::POSITIONS[self.index() % 3],
        }
    }

    /// Canonical token, e.g. `bus.standing.pocket` or `walking.hand`.
    pub fn token(self) -> String {
        let l = self.label();
        match l.posture.token() {
            Some(p) => format!("{}.{}.{}", l.state.token(), p, l.position.token()),
            None => format!("{}.{}", l.state.token(), l.position.token()),
        }
    }

    /// Compact symbol using the confusion-matrix key: S/W/B for the
    /// state, ↑/↓ for standing/sitting, h/p/b for hand/pocket/backpack.
    pub fn symbol(self) -> String {
        let l = self.label();
        let state = match l.state {
            TravelState::Stationary => "S",
            TravelState::Walking => "W",
            TravelState::Bus => "B",
        };
        let posture = match l.posture {
            Posture::Standing => "↑",
            Posture::Sitting => "↓",
            Posture::NotApplicable => "",
        };
        let position = match l.position {
            PhonePosition::Hand => "h",
            PhonePosition::Pocket => "p",
            PhonePosition::Backpack => "b",
        };
        format!("{state}{posture}{position}")
    }

    pub fn all_tokens() -> Vec<String> {
        Self::all().map(Self::token).collect()
    }
}

impl fmt::Display for ActivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

impl FromStr for ActivityClass {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::all()
            .find(|c| c.token() == s)
            .ok_or_else(|| DataError::UnknownLabelToken {
                line: 0,
                token: s.to_string(),
            })
    }
}
