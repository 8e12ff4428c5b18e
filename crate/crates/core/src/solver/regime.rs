use serde::{Deserialize, Serialize};
use std::fmt;

use super::FieldSolution;

/// Conduction regime of the two drive contacts A and B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    /// Neither A nor B passes current.
    R1,
    /// Both A and B pass current.
    R2,
    /// Only A passes current.
    R3,
    /// Only B passes current.
    R4,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::R1, Region::R2, Region::R3, Region::R4];

    pub fn number(self) -> u8 {
        match self {
            Region::R1 => 1,
            Region::R2 => 2,
            Region::R3 => 3,
            Region::R4 => 4,
        }
    }

    pub fn from_number(n: u8) -> Option<Region> {
        Region::ALL.into_iter().find(|r| r.number() == n)
    }

    pub fn from_conduction(a: bool, b: bool) -> Region {
        match (a, b) {
            (false, false) => Region::R1,
            (true, true) => Region::R2,
            (true, false) => Region::R3,
            (false, true) => Region::R4,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// A contact passes current when the current it delivers into the device
/// reaches `threshold` (A). Reverse leakage never counts as passing.
pub fn classify_regime(solution: &FieldSolution, threshold: f64) -> Region {
    let [ia, ib, _] = solution.terminal_current;
    Region::from_conduction(ia >= threshold, ib >= threshold)
}
