//! The mapping-function output language.
//!
//! ```text
//! expr    := operand (("+" | "-") operand)*
//! operand := number | 'quoted' | "quoted" | true | false | $k | CURRENT_YEAR
//! ```
//!
//! Quoted literals go through the usual value coercion, so `'1994-1997'`
//! is a year range and `'mainframe developer'` a symbol. An expression with
//! more than one operand is arithmetic and every operand must be a number.

use std::fmt;

use rust_decimal::Decimal;

use crate::model::{parse_decimal, Value, ValueKind};

#[derive(Clone, Debug, PartialEq)]
pub enum Operand {
    Literal(Value),
    Capture(usize),
    CurrentYear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    first: Operand,
    rest: Vec<(Sign, Operand)>,
}

impl Expr {
    pub fn literal(value: Value) -> Expr {
        Expr { first: Operand::Literal(value), rest: Vec::new() }
    }

    pub fn capture(slot: usize) -> Expr {
        Expr { first: Operand::Capture(slot), rest: Vec::new() }
    }

    pub fn parse(text: &str) -> Result<Expr, String> {
        let tokens = tokenize(text)?;
        let mut iter = tokens.into_iter();
        let first = match iter.next() {
            Some(Token::Operand(op)) => op,
            Some(Token::Sign(_)) => return Err(format!("expression {text:?} starts with an operator")),
            None => return Err("empty expression".to_string()),
        };
        let mut rest = Vec::new();
        while let Some(tok) = iter.next() {
            let sign = match tok {
                Token::Sign(s) => s,
                Token::Operand(_) => return Err(format!("expected + or - in {text:?}")),
            };
            match iter.next() {
                Some(Token::Operand(op)) => rest.push((sign, op)),
                _ => return Err(format!("dangling operator in {text:?}")),
            }
        }
        Ok(Expr { first, rest })
    }

    pub fn is_arithmetic(&self) -> bool {
        !self.rest.is_empty()
    }

    pub fn operands(&self) -> impl Iterator<Item = &Operand> {
        std::iter::once(&self.first).chain(self.rest.iter().map(|(_, op)| op))
    }

    pub fn captures(&self) -> impl Iterator<Item = usize> + '_ {
        self.operands().filter_map(|op| match op {
            Operand::Capture(k) => Some(*k),
            _ => None,
        })
    }

    pub(crate) fn operands_mut(&mut self) -> impl Iterator<Item = &mut Operand> {
        std::iter::once(&mut self.first).chain(self.rest.iter_mut().map(|(_, op)| op))
    }

    /// Static check: arithmetic operands must be numeric. `capture_kind`
    /// reports the kind a capture is known to have, if any.
    pub fn check_types(&self, capture_kind: impl Fn(usize) -> Option<ValueKind>) -> Result<(), String> {
        if !self.is_arithmetic() {
            return Ok(());
        }
        for op in self.operands() {
            let kind = match op {
                Operand::Literal(v) => Some(v.kind()),
                Operand::CurrentYear => Some(ValueKind::Number),
                Operand::Capture(k) => capture_kind(*k),
            };
            if let Some(kind) = kind {
                if kind != ValueKind::Number {
                    return Err(format!("arithmetic on non-number operand {op}"));
                }
            }
        }
        Ok(())
    }

    /// Evaluates with `captures[k]` bound for every referenced slot. Returns
    /// `None` when a numeric result overflows or, for an arithmetic
    /// expression, a capture is not a number (ruled out by load-time typing).
    pub fn evaluate(&self, captures: &dyn Fn(usize) -> Option<Value>, current_year: i32) -> Option<Value> {
        let resolve = |op: &Operand| -> Option<Value> {
            match op {
                Operand::Literal(v) => Some(v.clone()),
                Operand::Capture(k) => captures(*k),
                Operand::CurrentYear => Some(Value::number(current_year)),
            }
        };
        if !self.is_arithmetic() {
            return resolve(&self.first);
        }
        let mut acc: Decimal = resolve(&self.first)?.as_number()?;
        for (sign, op) in &self.rest {
            let n = resolve(op)?.as_number()?;
            acc = match sign {
                Sign::Plus => acc.checked_add(n)?,
                Sign::Minus => acc.checked_sub(n)?,
            };
        }
        Some(Value::number(acc))
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Literal(Value::Symbol(t)) => write!(f, "'{t}'"),
            Operand::Literal(Value::YearRange(r)) => write!(f, "'{r}'"),
            Operand::Literal(v) => write!(f, "{v}"),
            Operand::Capture(k) => write!(f, "${k}"),
            Operand::CurrentYear => f.write_str("CURRENT_YEAR"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.first)?;
        for (sign, op) in &self.rest {
            let s = match sign {
                Sign::Plus => '+',
                Sign::Minus => '-',
            };
            write!(f, " {s} {op}")?;
        }
        Ok(())
    }
}

enum Token {
    Sign(Sign),
    Operand(Operand),
}

fn tokenize(text: &str) -> Result<Vec<Token>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '+' => {
                tokens.push(Token::Sign(Sign::Plus));
                i += 1;
            }
            '-' => {
                tokens.push(Token::Sign(Sign::Minus));
                i += 1;
            }
            '\'' | '"' => {
                let end = chars[i + 1..]
                    .iter()
                    .position(|&d| d == c)
                    .ok_or_else(|| format!("unterminated string in {text:?}"))?;
                let literal: String = chars[i + 1..i + 1 + end].iter().collect();
                let value = Value::from_text(&literal).map_err(|e| e.to_string())?;
                tokens.push(Token::Operand(Operand::Literal(value)));
                i += end + 2;
            }
            '$' => {
                let digits: String = chars[i + 1..].iter().take_while(|d| d.is_ascii_digit()).collect();
                if digits.is_empty() {
                    return Err(format!("capture without slot number in {text:?}"));
                }
                tokens.push(Token::Operand(Operand::Capture(digits.parse().map_err(|_| "capture slot too large")?)));
                i += 1 + digits.len();
            }
            c if c.is_ascii_digit() => {
                let lit: String = chars[i..].iter().take_while(|d| d.is_ascii_digit() || **d == '.').collect();
                let n = parse_decimal(&lit).map_err(|e| e.to_string())?;
                tokens.push(Token::Operand(Operand::Literal(Value::number(n))));
                i += lit.len();
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let word: String = chars[i..].iter().take_while(|d| d.is_ascii_alphanumeric() || **d == '_').collect();
                let op = match word.as_str() {
                    "CURRENT_YEAR" | "current_year" => Operand::CurrentYear,
                    "true" => Operand::Literal(Value::Bool(true)),
                    "false" => Operand::Literal(Value::Bool(false)),
                    _ => return Err(format!("unknown identifier {word:?}; quote symbol literals")),
                };
                tokens.push(Token::Operand(op));
                i += word.len();
            }
            other => return Err(format!("unexpected character {other:?} in {text:?}")),
        }
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_captures(_: usize) -> Option<Value> {
        None
    }

    #[test]
    fn experience_formula() {
        let e = Expr::parse("CURRENT_YEAR - $1").unwrap();
        assert!(e.is_arithmetic());
        assert_eq!(e.captures().collect::<Vec<_>>(), vec![1]);
        let v = e.evaluate(&|k| (k == 1).then(|| Value::number(1990)), 2003).unwrap();
        assert_eq!(v, Value::number(13));
    }

    #[test]
    fn quoted_literals_coerce() {
        let e = Expr::parse("'mainframe developer'").unwrap();
        assert_eq!(e.evaluate(&no_captures, 2003), Some(Value::symbol("mainframe developer").unwrap()));
        let e = Expr::parse("\"1994-1997\"").unwrap();
        assert_eq!(e.evaluate(&no_captures, 2003).unwrap().kind(), ValueKind::YearRange);
    }

    #[test]
    fn chained_arithmetic() {
        let e = Expr::parse("10 + 2.5 - 0.5 + CURRENT_YEAR").unwrap();
        assert_eq!(e.evaluate(&no_captures, 2000), Some(Value::number(2012)));
        assert_eq!(e.to_string(), "10 + 2.5 - 0.5 + CURRENT_YEAR");
    }

    #[test]
    fn malformed_expressions() {
        for bad in ["", "- 3", "3 +", "3 4", "$", "'open", "developer", "3 * 4"] {
            assert!(Expr::parse(bad).is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn arithmetic_typing() {
        let e = Expr::parse("'abc' - 1").unwrap();
        assert!(e.check_types(|_| None).is_err());
        let e = Expr::parse("$2 + 1").unwrap();
        assert!(e.check_types(|_| Some(ValueKind::YearRange)).is_err());
        assert!(e.check_types(|_| None).is_ok());
        // A lone operand may be any kind.
        assert!(Expr::parse("'abc'").unwrap().check_types(|_| None).is_ok());
    }
}
