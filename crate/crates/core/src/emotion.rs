use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven target categories, with stable integer codes 0..=6 in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionClass {
    Happy = 0,
    Angry = 1,
    Fear = 2,
    Sad = 3,
    Surprised = 4,
    Disgust = 5,
    Neutral = 6,
}

impl EmotionClass {
    pub const COUNT: usize = 7;

    pub const ALL: [EmotionClass; 7] = [
        EmotionClass::Happy,
        EmotionClass::Angry,
        EmotionClass::Fear,
        EmotionClass::Sad,
        EmotionClass::Surprised,
        EmotionClass::Disgust,
        EmotionClass::Neutral,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Result<Self> {
        Self::ALL
            .get(code)
            .copied()
            .ok_or(Error::Bounds {
                index: code,
                len: Self::COUNT,
            })
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionClass::Happy => "happy",
            EmotionClass::Angry => "angry",
            EmotionClass::Fear => "fear",
            EmotionClass::Sad => "sad",
            EmotionClass::Surprised => "surprised",
            EmotionClass::Disgust => "disgust",
            EmotionClass::Neutral => "neutral",
        }
    }
}

impl fmt::Display for EmotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionClass {
    type Err = Error;

    /// Accepts a class name (any case) or its integer code.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Ok(code) = t.parse::<usize>() {
            return Self::from_code(code);
        }
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::param(format!("unknown emotion label '{t}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_stable() {
        for (i, c) in EmotionClass::ALL.iter().enumerate() {
            assert_eq!(c.code(), i);
            assert_eq!(EmotionClass::from_code(i).unwrap(), *c);
            assert_eq!(c.name().parse::<EmotionClass>().unwrap(), *c);
        }
        assert_eq!("FEAR".parse::<EmotionClass>().unwrap(), EmotionClass::Fear);
        assert_eq!("6".parse::<EmotionClass>().unwrap(), EmotionClass::Neutral);
        assert!("7".parse::<EmotionClass>().is_err());
        assert!("bored".parse::<EmotionClass>().is_err());
    }
}
