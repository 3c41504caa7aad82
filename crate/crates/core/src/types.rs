//! Core domain identifiers: currencies, tenors, panel keys.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The eleven currencies covered by the panel, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Currency {
    Aud,
    Cad,
    Chf,
    Dkk,
    Eur,
    Gbp,
    Jpy,
    Krw,
    Nok,
    Nzd,
    Sek,
}

impl Currency {
    pub const ALL: [Currency; 11] = [
        Currency::Aud,
        Currency::Cad,
        Currency::Chf,
        Currency::Dkk,
        Currency::Eur,
        Currency::Gbp,
        Currency::Jpy,
        Currency::Krw,
        Currency::Nok,
        Currency::Nzd,
        Currency::Sek,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            Currency::Aud => "AUD",
            Currency::Cad => "CAD",
            Currency::Chf => "CHF",
            Currency::Dkk => "DKK",
            Currency::Eur => "EUR",
            Currency::Gbp => "GBP",
            Currency::Jpy => "JPY",
            Currency::Krw => "KRW",
            Currency::Nok => "NOK",
            Currency::Nzd => "NZD",
            Currency::Sek => "SEK",
        }
    }
}

impl fmt::Display for Currency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Currency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Currency::ALL
            .iter()
            .copied()
            .find(|c| c.code() == s)
            .ok_or_else(|| Error::Data(format!("unknown currency code {s:?}")))
    }
}

/// Bond tenor in years, stored as hundredths to keep exact-decimal
/// comparisons. Only the nine tenors of the panel are representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tenor(u32);

/// Allowed tenors in hundredths of a year.
const TENOR_HUNDREDTHS: [u32; 9] = [25, 100, 200, 300, 500, 700, 1000, 2000, 3000];

impl Tenor {
    pub const ALL: [Tenor; 9] = [
        Tenor(25),
        Tenor(100),
        Tenor(200),
        Tenor(300),
        Tenor(500),
        Tenor(700),
        Tenor(1000),
        Tenor(2000),
        Tenor(3000),
    ];

    pub fn years(&self) -> f64 {
        f64::from(self.0) / 100.0
    }

    /// One year or shorter; gates the quarter-end dummy.
    pub fn is_short(&self) -> bool {
        self.0 <= 100
    }

    /// Parse a decimal tenor string ("0.25", "1", "5.0", ...) against the
    /// closed tenor set. No floating-point comparison is involved.
    pub fn parse(s: &str) -> Result<Tenor, Error> {
        let s = s.trim();
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(Error::Data(format!("invalid tenor {s:?}")));
        }
        let int: u32 = if int_part.is_empty() {
            0
        } else {
            int_part
                .parse()
                .map_err(|_| Error::Data(format!("invalid tenor {s:?}")))?
        };
        // At most two meaningful fractional digits; anything beyond must be zero.
        let mut frac = 0u32;
        for (i, ch) in frac_part.chars().enumerate() {
            let d = ch
                .to_digit(10)
                .ok_or_else(|| Error::Data(format!("invalid tenor {s:?}")))?;
            if i < 2 {
                frac = frac * 10 + d;
            } else if d != 0 {
                return Err(Error::Data(format!("invalid tenor {s:?}")));
            }
        }
        if frac_part.len() == 1 {
            frac *= 10;
        }
        let hundredths = int
            .checked_mul(100)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(|| Error::Data(format!("invalid tenor {s:?}")))?;
        if TENOR_HUNDREDTHS.contains(&hundredths) {
            Ok(Tenor(hundredths))
        } else {
            Err(Error::Data(format!(
                "tenor {s:?} is not one of the supported tenors {:?}",
                Tenor::ALL.map(|t| t.to_string())
            )))
        }
    }
}

impl fmt::Display for Tenor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 100 == 0 {
            write!(f, "{}", self.0 / 100)
        } else {
            write!(f, "0.{}", self.0)
        }
    }
}

/// One currency--tenor panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PanelKey {
    pub currency: Currency,
    pub tenor: Tenor,
}

impl PanelKey {
    pub fn new(currency: Currency, tenor: Tenor) -> Self {
        PanelKey { currency, tenor }
    }
}

impl fmt::Display for PanelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.currency, self.tenor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tenor_parse_exact_decimals() {
        assert_eq!(Tenor::parse("0.25").unwrap().years(), 0.25);
        assert_eq!(Tenor::parse(".25").unwrap().years(), 0.25);
        assert_eq!(Tenor::parse("1").unwrap().years(), 1.0);
        assert_eq!(Tenor::parse("1.0").unwrap().years(), 1.0);
        assert_eq!(Tenor::parse("1.00").unwrap().years(), 1.0);
        assert_eq!(Tenor::parse("30").unwrap().years(), 30.0);
        assert_eq!(Tenor::parse("0.250").unwrap().years(), 0.25);
    }

    #[test]
    fn tenor_parse_rejects_off_grid() {
        assert!(Tenor::parse("0.5").is_err());
        assert!(Tenor::parse("4").is_err());
        assert!(Tenor::parse("0.251").is_err());
        assert!(Tenor::parse("x").is_err());
        assert!(Tenor::parse("").is_err());
    }

    #[test]
    fn tenor_display_round_trips() {
        for t in Tenor::ALL {
            assert_eq!(Tenor::parse(&t.to_string()).unwrap(), t);
        }
    }

    #[test]
    fn tenor_short_gate() {
        assert!(Tenor::parse("0.25").unwrap().is_short());
        assert!(Tenor::parse("1").unwrap().is_short());
        assert!(!Tenor::parse("2").unwrap().is_short());
    }

    #[test]
    fn currency_round_trip() {
        for c in Currency::ALL {
            assert_eq!(c.code().parse::<Currency>().unwrap(), c);
        }
        assert!("USD".parse::<Currency>().is_err());
    }

    #[test]
    fn panel_key_ordering_is_currency_then_tenor() {
        let a = PanelKey::new(Currency::Aud, Tenor::parse("30").unwrap());
        let b = PanelKey::new(Currency::Cad, Tenor::parse("0.25").unwrap());
        assert!(a < b);
    }
}
