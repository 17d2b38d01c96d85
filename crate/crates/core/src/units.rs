//! Measurement units used as static types.
//!
//! A [`Unit`] pairs a [`Dimension`] (integer exponents over eight base units)
//! with the factor that converts a number expressed in that unit into SI.
//! Two units are compatible when their dimensions are equal; scales only
//! matter when literals or casts move values in and out of SI.

use std::fmt;

use thiserror::Error;

/// Largest absolute exponent a dimension may carry.
pub const MAX_EXPONENT: i32 = 32;

/// The base units of the dimension vector, in canonical order.
///
/// Celsius and Fahrenheit are treated as independent base units with no
/// affine relation to kelvin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaseUnit {
    Kg,
    M,
    S,
    DegreeC,
    K,
    DegreeF,
    Rad,
    Mol,
}

impl BaseUnit {
    pub const ALL: [BaseUnit; 8] = [
        BaseUnit::Kg,
        BaseUnit::M,
        BaseUnit::S,
        BaseUnit::DegreeC,
        BaseUnit::K,
        BaseUnit::DegreeF,
        BaseUnit::Rad,
        BaseUnit::Mol,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BaseUnit::Kg => "kg",
            BaseUnit::M => "m",
            BaseUnit::S => "s",
            BaseUnit::DegreeC => "degreeC",
            BaseUnit::K => "K",
            BaseUnit::DegreeF => "degreeF",
            BaseUnit::Rad => "rad",
            BaseUnit::Mol => "mol",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for BaseUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UnitError {
    #[error("unknown unit `{name}` at offset {offset}")]
    UnknownName { name: String, offset: usize },
    #[error("malformed exponent at offset {offset}")]
    MalformedExponent { offset: usize },
    #[error("expected a unit name at offset {offset}")]
    ExpectedName { offset: usize },
    #[error("exponent of {base} out of range (limit ±{MAX_EXPONENT})")]
    DimensionOverflow { base: BaseUnit },
    #[error("unit scale must be positive and finite, got {0}")]
    InvalidScale(f64),
}

impl UnitError {
    /// Byte offset into the parsed text, for errors raised by [`Unit::parse`].
    pub fn offset(&self) -> Option<usize> {
        match self {
            UnitError::UnknownName { offset, .. }
            | UnitError::MalformedExponent { offset }
            | UnitError::ExpectedName { offset } => Some(*offset),
            _ => None,
        }
    }
}

/// Exponent vector over [`BaseUnit`], stored densely so that equality is
/// structural. [`Dimension::pairs`] gives the sparse canonical form.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Dimension {
    exponents: [i32; 8],
}

impl Dimension {
    pub const NONE: Dimension = Dimension { exponents: [0; 8] };

    pub fn of(base: BaseUnit) -> Self {
        let mut exponents = [0; 8];
        exponents[base.index()] = 1;
        Dimension { exponents }
    }

    /// Builds a dimension from `(base, exponent)` pairs in any order;
    /// repeated bases are summed and zero exponents vanish.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, UnitError>
    where
        I: IntoIterator<Item = (BaseUnit, i32)>,
    {
        let mut dim = Dimension::NONE;
        for (base, exp) in pairs {
            let slot = &mut dim.exponents[base.index()];
            *slot = checked_exponent(base, i64::from(*slot) + i64::from(exp))?;
        }
        Ok(dim)
    }

    pub fn exponent(&self, base: BaseUnit) -> i32 {
        self.exponents[base.index()]
    }

    /// Canonical sparse form: nonzero exponents in base-unit order.
    pub fn pairs(&self) -> Vec<(BaseUnit, i32)> {
        BaseUnit::ALL
            .iter()
            .map(|&b| (b, self.exponent(b)))
            .filter(|&(_, e)| e != 0)
            .collect()
    }

    pub fn is_dimensionless(&self) -> bool {
        self.exponents.iter().all(|&e| e == 0)
    }

    fn combine(&self, other: &Dimension, sign: i64) -> Result<Dimension, UnitError> {
        let mut out = Dimension::NONE;
        for base in BaseUnit::ALL {
            let i = base.index();
            let e = i64::from(self.exponents[i]) + sign * i64::from(other.exponents[i]);
            out.exponents[i] = checked_exponent(base, e)?;
        }
        Ok(out)
    }

    fn times(&self, n: i32) -> Result<Dimension, UnitError> {
        let mut out = Dimension::NONE;
        for base in BaseUnit::ALL {
            let i = base.index();
            out.exponents[i] = checked_exponent(base, i64::from(self.exponents[i]) * i64::from(n))?;
        }
        Ok(out)
    }

    /// Halves every exponent, or `None` if any exponent is odd.
    pub fn sqrt(&self) -> Option<Dimension> {
        if self.exponents.iter().any(|e| e % 2 != 0) {
            return None;
        }
        let mut out = *self;
        for e in &mut out.exponents {
            *e /= 2;
        }
        Some(out)
    }
}

fn checked_exponent(base: BaseUnit, e: i64) -> Result<i32, UnitError> {
    if e.abs() > i64::from(MAX_EXPONENT) {
        Err(UnitError::DimensionOverflow { base })
    } else {
        Ok(e as i32)
    }
}

/// Renders the SI form without brackets, e.g. `kg.m.s^-2`.
impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (base, exp)) in self.pairs().into_iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            if exp == 1 {
                write!(f, "{base}")?;
            } else {
                write!(f, "{base}^{exp}")?;
            }
        }
        Ok(())
    }
}

/// A measurement unit: dimension plus the factor that converts to SI.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unit {
    dimension: Dimension,
    scale: f64,
}

impl Default for Unit {
    fn default() -> Self {
        Unit::DIMENSIONLESS
    }
}

impl Unit {
    pub const DIMENSIONLESS: Unit = Unit {
        dimension: Dimension::NONE,
        scale: 1.0,
    };

    pub fn new(dimension: Dimension, scale: f64) -> Result<Unit, UnitError> {
        if scale.is_finite() && scale > 0.0 {
            Ok(Unit { dimension, scale })
        } else {
            Err(UnitError::InvalidScale(scale))
        }
    }

    /// The SI base unit itself (scale 1).
    pub fn base(base: BaseUnit) -> Unit {
        Unit {
            dimension: Dimension::of(base),
            scale: 1.0,
        }
    }

    /// The SI unit of a dimension (scale 1).
    pub fn si(dimension: Dimension) -> Unit {
        Unit {
            dimension,
            scale: 1.0,
        }
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_dimensionless(&self) -> bool {
        self.dimension.is_dimensionless()
    }

    pub fn mul(&self, other: &Unit) -> Result<Unit, UnitError> {
        Unit::new(
            self.dimension.combine(&other.dimension, 1)?,
            self.scale * other.scale,
        )
    }

    pub fn div(&self, other: &Unit) -> Result<Unit, UnitError> {
        Unit::new(
            self.dimension.combine(&other.dimension, -1)?,
            self.scale / other.scale,
        )
    }

    pub fn invert(&self) -> Unit {
        Unit {
            dimension: self
                .dimension
                .times(-1)
                .expect("negation stays within the exponent bound"),
            scale: 1.0 / self.scale,
        }
    }

    /// Raises the unit to an integer power. `n = 0` yields the dimensionless unit.
    pub fn pow(&self, n: i32) -> Result<Unit, UnitError> {
        if n == 0 {
            return Ok(Unit::DIMENSIONLESS);
        }
        Unit::new(self.dimension.times(n)?, self.scale.powi(n))
    }

    pub fn same_dimension(&self, other: &Unit) -> bool {
        self.dimension == other.dimension
    }

    pub fn to_si(&self, value: f64) -> f64 {
        value * self.scale
    }

    pub fn from_si(&self, value: f64) -> f64 {
        value / self.scale
    }

    /// Parses the text between unit brackets, e.g. `km/day` or `kg.m/s^2`.
    ///
    /// Factors are joined by `.`, `*` or `/`. Every factor after the first
    /// `/` is a divisor, so `J/kg.K` style strings read as `J/(kg.K)`.
    pub fn parse(text: &str) -> Result<Unit, UnitError> {
        UnitParser { text, pos: 0 }.parse()
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.dimension)
    }
}

/// Looks up a named unit from the fixed table.
pub fn named_unit(name: &str) -> Option<Unit> {
    use BaseUnit::*;
    let (base, scale) = match name {
        "m" => (M, 1.0),
        "km" => (M, 1e3),
        "cm" => (M, 1e-2),
        "mm" => (M, 1e-3),
        "s" => (S, 1.0),
        "min" => (S, 60.0),
        "h" => (S, 3600.0),
        "day" => (S, 86400.0),
        "kg" => (Kg, 1.0),
        "g" => (Kg, 1e-3),
        "t" => (Kg, 1e3),
        "K" => (K, 1.0),
        "degreeC" => (DegreeC, 1.0),
        "degreeF" => (DegreeF, 1.0),
        "rad" => (Rad, 1.0),
        "deg" => (Rad, std::f64::consts::PI / 180.0),
        "mol" => (Mol, 1.0),
        _ => return None,
    };
    Some(Unit {
        dimension: Dimension::of(base),
        scale,
    })
}

/// Every name accepted by [`named_unit`].
pub const UNIT_NAMES: [&str; 17] = [
    "m", "km", "cm", "mm", "s", "min", "h", "day", "kg", "g", "t", "K", "degreeC", "degreeF",
    "rad", "deg", "mol",
];

struct UnitParser<'a> {
    text: &'a str,
    pos: usize,
}

impl UnitParser<'_> {
    fn parse(mut self) -> Result<Unit, UnitError> {
        self.skip_ws();
        if self.pos == self.text.len() {
            return Ok(Unit::DIMENSIONLESS);
        }
        let mut unit = self.factor()?;
        let mut dividing = false;
        loop {
            self.skip_ws();
            let Some(c) = self.peek() else { break };
            match c {
                '/' => dividing = true,
                '.' | '*' => {}
                _ => return Err(UnitError::ExpectedName { offset: self.pos }),
            }
            self.pos += 1;
            self.skip_ws();
            let factor = self.factor()?;
            unit = if dividing {
                unit.div(&factor)?
            } else {
                unit.mul(&factor)?
            };
        }
        Ok(unit)
    }

    fn factor(&mut self) -> Result<Unit, UnitError> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_alphanumeric() || c == '_')
        {
            self.bump();
        }
        if start == self.pos {
            return Err(UnitError::ExpectedName { offset: start });
        }
        let name = &self.text[start..self.pos];
        let unit = named_unit(name).ok_or_else(|| UnitError::UnknownName {
            name: name.to_string(),
            offset: start,
        })?;
        self.skip_ws();
        if self.peek() != Some('^') {
            return Ok(unit);
        }
        self.pos += 1;
        self.skip_ws();
        let exp_start = self.pos;
        if matches!(self.peek(), Some('-' | '+')) {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if digits_start == self.pos {
            return Err(UnitError::MalformedExponent { offset: exp_start });
        }
        let exponent: i32 = self.text[exp_start..self.pos]
            .parse()
            .map_err(|_| UnitError::MalformedExponent { offset: exp_start })?;
        unit.pow(exponent)
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn bump(&mut self) {
        if let Some(c) = self.peek() {
            self.pos += c.len_utf8();
        }
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }
}
