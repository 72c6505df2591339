use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Op {
    pub fn symbol(self) -> &'static str {
        match self {
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
        }
    }

    pub fn holds(self, observed: f64, bound: f64) -> bool {
        match self {
            Op::Lt => observed < bound,
            Op::Le => observed <= bound,
            Op::Gt => observed > bound,
            Op::Ge => observed >= bound,
        }
    }
}

/// `metric op value [unit]`, e.g. `latency_ms <= 100 ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub metric: String,
    pub op: Op,
    pub value: f64,
    pub unit: String,
}

impl Constraint {
    pub fn is_satisfied_by(&self, observed: f64) -> bool {
        observed.is_finite() && self.op.holds(observed, self.value)
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.metric, self.op.symbol(), self.value)?;
        if !self.unit.is_empty() {
            write!(f, " {}", self.unit)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad constraint at byte {position}: {message}")]
pub struct BadConstraint {
    pub position: usize,
    pub message: String,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_whitespace()) {
            self.pos += self.peek().map_or(0, char::len_utf8);
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, BadConstraint> {
        Err(BadConstraint {
            position: self.pos,
            message: message.into(),
        })
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(&f) {
            self.pos += self.peek().map_or(0, char::len_utf8);
        }
        &self.src[start..self.pos]
    }

    fn ident(&mut self, what: &str) -> Result<String, BadConstraint> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c.is_ascii_lowercase() || c == '_' => {}
            Some(_) => return self.err(format!("expected {what}")),
            None => return self.err(format!("expected {what}, found end of input")),
        }
        let s = self.take_while(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
        if self.peek().is_some_and(|c| c.is_alphanumeric()) {
            return self.err(format!("{what} must be lowercase snake case"));
        }
        Ok(s.to_string())
    }

    fn op(&mut self) -> Result<Op, BadConstraint> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let (op, len) = if rest.starts_with("<=") {
            (Op::Le, 2)
        } else if rest.starts_with(">=") {
            (Op::Ge, 2)
        } else if rest.starts_with('<') {
            (Op::Lt, 1)
        } else if rest.starts_with('>') {
            (Op::Gt, 1)
        } else {
            return self.err("expected one of <, <=, >, >=");
        };
        self.pos += len;
        Ok(op)
    }

    fn number(&mut self) -> Result<f64, BadConstraint> {
        self.skip_ws();
        let start = self.pos;
        let mut text = String::new();
        if let Some(c @ ('-' | '+')) = self.peek() {
            text.push(c);
            self.pos += 1;
        }
        let mantissa = self.take_while(|c| c.is_ascii_digit() || c == '.');
        if !mantissa.bytes().any(|b| b.is_ascii_digit()) {
            self.pos = start;
            return self.err("expected a number");
        }
        text.push_str(mantissa);
        // exponent only when followed by digits, so `10 ms` and `5e` stay distinct
        let rest = &self.src[self.pos..];
        if let Some(after) = rest.strip_prefix(['e', 'E']) {
            let after_sign = after.strip_prefix(['-', '+']).unwrap_or(after);
            if after_sign.starts_with(|c: char| c.is_ascii_digit()) {
                let sign_len = after.len() - after_sign.len();
                let digits = after_sign.bytes().take_while(u8::is_ascii_digit).count();
                let len = 1 + sign_len + digits;
                text.push_str(&rest[..len]);
                self.pos += len;
            }
        }
        match text.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => {
                self.pos = start;
                self.err(format!("`{text}` is not a finite number"))
            }
        }
    }
}

pub fn parse_constraint(text: &str) -> Result<Constraint, BadConstraint> {
    let mut lx = Lexer { src: text, pos: 0 };
    let metric = lx.ident("metric name")?;
    let op = lx.op()?;
    let value = lx.number()?;
    if lx.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '.') {
        // a unit glued to the number, e.g. `100ms`
        if !lx.peek().is_some_and(|c| c.is_ascii_lowercase() || c == '_') {
            return lx.err("malformed number");
        }
    }
    lx.skip_ws();
    let unit = if lx.peek().is_some() {
        lx.ident("unit")?
    } else {
        String::new()
    };
    lx.skip_ws();
    if lx.peek().is_some() {
        return lx.err("unexpected trailing input");
    }
    Ok(Constraint {
        metric,
        op,
        value,
        unit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(
            parse_constraint("fps >= 10").unwrap(),
            Constraint {
                metric: "fps".into(),
                op: Op::Ge,
                value: 10.0,
                unit: String::new()
            }
        );
        assert_eq!(
            parse_constraint("latency_ms <= 100 ms").unwrap(),
            Constraint {
                metric: "latency_ms".into(),
                op: Op::Le,
                value: 100.0,
                unit: "ms".into()
            }
        );
        assert_eq!(parse_constraint(">= 10").unwrap_err().position, 0);
    }

    #[test]
    fn positions_point_at_the_problem() {
        assert_eq!(parse_constraint("fps = 10").unwrap_err().position, 4);
        assert_eq!(parse_constraint("fps >= ten").unwrap_err().position, 7);
        assert_eq!(parse_constraint("fps >= 10 ms extra").unwrap_err().position, 13);
        assert!(parse_constraint("FPS >= 10").is_err());
        assert!(parse_constraint("fps >= 10 MS").is_err());
        assert!(parse_constraint("").is_err());
    }

    #[test]
    fn numbers() {
        assert_eq!(parse_constraint("val_metric>=0.99").unwrap().value, 0.99);
        assert_eq!(parse_constraint("lr < 1e-3").unwrap().value, 1e-3);
        assert_eq!(parse_constraint("x > -2.5").unwrap().value, -2.5);
        let c = parse_constraint("t <= 100ms").unwrap();
        assert_eq!((c.value, c.unit.as_str()), (100.0, "ms"));
        let c = parse_constraint("t <= 5 epochs").unwrap();
        assert_eq!((c.value, c.unit.as_str()), (5.0, "epochs"));
        assert!(parse_constraint("x > 1.2.3").is_err());
    }

    #[test]
    fn display_reparses() {
        for text in [
            "fps >= 10",
            "latency_ms <= 100 ms",
            "val_metric > 0.9027",
            "x < 0.0000001",
        ] {
            let c = parse_constraint(text).unwrap();
            assert_eq!(parse_constraint(&c.to_string()).unwrap(), c);
        }
        assert_eq!(parse_constraint("fps>=10").unwrap().to_string(), "fps >= 10");
    }

    #[test]
    fn satisfaction() {
        let c = parse_constraint("fps >= 10").unwrap();
        assert!(c.is_satisfied_by(10.0));
        assert!(!c.is_satisfied_by(9.99));
        assert!(!c.is_satisfied_by(f64::NAN));
    }
}
