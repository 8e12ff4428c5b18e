use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

use crate::device::Terminal;
use crate::error::{Error, Result};

/// Drive condition of a single contact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminalBias {
    Fixed(f64),
    /// Unconnected: the pad potential floats and the contact carries no current.
    Floating,
}

impl TerminalBias {
    pub fn voltage(self) -> Option<f64> {
        match self {
            TerminalBias::Fixed(v) => Some(v),
            TerminalBias::Floating => None,
        }
    }

    pub fn is_floating(self) -> bool {
        matches!(self, TerminalBias::Floating)
    }
}

impl fmt::Display for TerminalBias {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminalBias::Fixed(v) => write!(f, "{v}"),
            TerminalBias::Floating => f.write_str("floating"),
        }
    }
}

impl FromStr for TerminalBias {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("floating") || s.eq_ignore_ascii_case("float") {
            return Ok(TerminalBias::Floating);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(TerminalBias::Fixed)
            .ok_or_else(|| Error::Input(format!("expected a voltage or 'floating', got '{s}'")))
    }
}

impl Serialize for TerminalBias {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TerminalBias::Fixed(v) => s.serialize_f64(*v),
            TerminalBias::Floating => s.serialize_str("floating"),
        }
    }
}

impl<'de> Deserialize<'de> for TerminalBias {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v.is_finite() => Ok(TerminalBias::Fixed(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!("non-finite bias {v}"))),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Applied potentials on the three contacts, in volts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint {
    pub va: TerminalBias,
    pub vb: TerminalBias,
    pub vc: TerminalBias,
}

impl BiasPoint {
    pub fn new(va: f64, vb: f64, vc: TerminalBias) -> BiasPoint {
        BiasPoint {
            va: TerminalBias::Fixed(va),
            vb: TerminalBias::Fixed(vb),
            vc,
        }
    }

    pub fn fixed(va: f64, vb: f64, vc: f64) -> BiasPoint {
        BiasPoint::new(va, vb, TerminalBias::Fixed(vc))
    }

    pub fn get(&self, t: Terminal) -> TerminalBias {
        match t {
            Terminal::A => self.va,
            Terminal::B => self.vb,
            Terminal::C => self.vc,
        }
    }

    pub fn set(&mut self, t: Terminal, v: TerminalBias) {
        match t {
            Terminal::A => self.va = v,
            Terminal::B => self.vb = v,
            Terminal::C => self.vc = v,
        }
    }

    pub fn voltages(&self) -> [Option<f64>; 3] {
        Terminal::ALL.map(|t| self.get(t).voltage())
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.voltages();
        if v.iter().all(Option::is_none) {
            return Err(Error::Input("at least one terminal must be driven".into()));
        }
        if v.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Input("bias voltages must be finite".into()));
        }
        Ok(())
    }
}

impl fmt::Display for BiasPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(V_A={}, V_B={}, V_C={})", self.va, self.vb, self.vc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_floating_and_numbers() {
        assert_eq!(
            "floating".parse::<TerminalBias>().unwrap(),
            TerminalBias::Floating
        );
        assert_eq!(
            "-3".parse::<TerminalBias>().unwrap(),
            TerminalBias::Fixed(-3.0)
        );
        assert!("nan".parse::<TerminalBias>().is_err());
        assert!("x".parse::<TerminalBias>().is_err());
    }

    #[test]
    fn all_floating_is_invalid() {
        let b = BiasPoint {
            va: TerminalBias::Floating,
            vb: TerminalBias::Floating,
            vc: TerminalBias::Floating,
        };
        assert!(b.validate().is_err());
        assert!(BiasPoint::new(0.0, 0.0, TerminalBias::Floating)
            .validate()
            .is_ok());
    }

    #[test]
    fn json_form() {
        let b = BiasPoint::new(1.5, -2.0, TerminalBias::Floating);
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, r#"{"va":1.5,"vb":-2.0,"vc":"floating"}"#);
        let back: BiasPoint = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
    }
}
