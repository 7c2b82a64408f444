use core::fmt;
use core::str::FromStr;

use crate::error::Error;

/// Language tag of the synthetic world. Rendered as `l0`, `l1`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lang(pub u16);

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

impl FromStr for Lang {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('l')
            .and_then(|n| n.parse::<u16>().ok())
            .map(Lang)
            .ok_or_else(|| Error::invalid(alloc::format!("bad language tag {s:?}")))
    }
}
