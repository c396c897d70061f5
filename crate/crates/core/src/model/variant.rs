use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which affect mechanisms a model uses. All false is the plain seq2seq.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ModelVariant {
    /// Emotion embedding prepended to the encoder input.
    pub see: bool,
    /// Emotion embedding appended to every decoder input.
    pub sed: bool,
    /// Affective regularizer in the loss.
    pub wi: bool,
    /// Adaptive affective sampling mixture.
    pub we: bool,
}

impl ModelVariant {
    pub const BASELINE: Self = Self { see: false, sed: false, wi: false, we: false };
    pub const SEE: Self = Self { see: true, ..Self::BASELINE };
    pub const SED: Self = Self { sed: true, ..Self::BASELINE };
    pub const WI: Self = Self { wi: true, ..Self::BASELINE };
    pub const WE: Self = Self { we: true, ..Self::BASELINE };
    pub const WI_WE: Self = Self { wi: true, we: true, ..Self::BASELINE };

    pub fn is_baseline(&self) -> bool {
        *self == Self::BASELINE
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [(self.see, "see"), (self.sed, "sed"), (self.wi, "wi"), (self.we, "we")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        if parts.is_empty() {
            f.write_str("baseline")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    /// Accepts `baseline` or `+`-joined flags such as `wi+we`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "baseline" {
            return Ok(Self::BASELINE);
        }
        let mut v = Self::BASELINE;
        for part in s.split('+') {
            match part.trim() {
                "see" => v.see = true,
                "sed" => v.sed = true,
                "wi" => v.wi = true,
                "we" => v.we = true,
                other => return Err(Error::Config(format!("unknown variant flag `{other}`"))),
            }
        }
        Ok(v)
    }
}
