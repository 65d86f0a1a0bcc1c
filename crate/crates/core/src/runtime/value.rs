use std::fmt;

use crate::frontend::ast::{BinOp, DataType, Literal, UnaryOp};

/// Run-time value of an elementary variable, or a reference to a function
/// block instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    /// Milliseconds.
    Time(i64),
    Str(String),
    Instance(usize),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(true) => f.write_str("TRUE"),
            Value::Bool(false) => f.write_str("FALSE"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Real(v) => write!(f, "{v:?}"),
            Value::Time(ms) => write!(f, "T#{ms}ms"),
            Value::Str(s) => f.write_str(&crate::frontend::quote_string(s)),
            Value::Instance(id) => write!(f, "<instance {id}>"),
        }
    }
}

impl Value {
    pub fn default_for(t: &DataType) -> Value {
        match t {
            DataType::Bool => Value::Bool(false),
            DataType::Int | DataType::Dint => Value::Int(0),
            DataType::Real => Value::Real(0.0),
            DataType::Time => Value::Time(0),
            DataType::String => Value::Str(String::new()),
            DataType::Fb(_) => unreachable!("instances are allocated separately"),
        }
    }

    pub fn from_literal(l: &Literal) -> Value {
        match l {
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Int(v) => Value::Int(*v),
            Literal::Real(v) => Value::Real(*v),
            Literal::Time(ms) => Value::Time(*ms),
            Literal::Str(s) => Value::Str(s.clone()),
        }
    }

    /// Parses the textual form used in test suites: `TRUE`, `-3`, `1.5`,
    /// `T#200ms`, or a bare string.
    pub fn parse_as(text: &str, t: &DataType) -> Option<Value> {
        let s = text.trim();
        match t {
            DataType::Bool => match s.to_ascii_uppercase().as_str() {
                "TRUE" | "1" => Some(Value::Bool(true)),
                "FALSE" | "0" => Some(Value::Bool(false)),
                _ => None,
            },
            DataType::Int | DataType::Dint => s.parse().ok().map(|v| coerce_int(v, t)),
            DataType::Real => s.parse().ok().map(Value::Real),
            DataType::Time => parse_time(s).map(Value::Time),
            DataType::String => Some(Value::Str(
                s.strip_prefix('\'')
                    .and_then(|r| r.strip_suffix('\''))
                    .unwrap_or(s)
                    .to_string(),
            )),
            DataType::Fb(_) => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "BOOL",
            Value::Int(_) => "integer",
            Value::Real(_) => "REAL",
            Value::Time(_) => "TIME",
            Value::Str(_) => "STRING",
            Value::Instance(_) => "function block instance",
        }
    }
}

fn coerce_int(v: i64, t: &DataType) -> Value {
    match t {
        DataType::Int => Value::Int(v as i16 as i64),
        _ => Value::Int(v as i32 as i64),
    }
}

fn parse_time(s: &str) -> Option<i64> {
    let upper = s.to_ascii_uppercase();
    let body = upper
        .strip_prefix("TIME#")
        .or_else(|| upper.strip_prefix("T#"))
        .unwrap_or(&upper);
    if let Ok(ms) = body.parse::<i64>() {
        return Some(ms);
    }
    let mut total = 0i64;
    let mut rest = body;
    while !rest.is_empty() {
        let digits = rest.find(|c: char| !c.is_ascii_digit())?;
        let n: i64 = rest[..digits].parse().ok()?;
        rest = &rest[digits..];
        let unit_len = rest.find(|c: char| c.is_ascii_digit()).unwrap_or(rest.len());
        let factor = match &rest[..unit_len] {
            "MS" => 1,
            "S" => 1000,
            "M" => 60_000,
            "H" => 3_600_000,
            "D" => 86_400_000,
            _ => return None,
        };
        total += n * factor;
        rest = &rest[unit_len..];
    }
    Some(total)
}

/// Converts `v` for storage in a variable of type `t`. Integers wrap to the
/// width of the target; integers widen to REAL.
pub fn convert_for_store(v: Value, t: &DataType) -> Result<Value, String> {
    match (t, v) {
        (DataType::Bool, v @ Value::Bool(_)) => Ok(v),
        (DataType::Int | DataType::Dint, Value::Int(x)) => Ok(coerce_int(x, t)),
        (DataType::Real, Value::Real(x)) => Ok(Value::Real(x)),
        (DataType::Real, Value::Int(x)) => Ok(Value::Real(x as f64)),
        (DataType::Time, v @ Value::Time(_)) => Ok(v),
        (DataType::String, v @ Value::Str(_)) => Ok(v),
        (t, v) => Err(format!(
            "cannot store {} value {v} in a {} variable",
            v.type_name(),
            t.keyword()
        )),
    }
}

pub fn unary(op: UnaryOp, v: Value) -> Result<Value, String> {
    match (op, v) {
        (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
        (UnaryOp::Not, Value::Int(x)) => Ok(Value::Int(!x)),
        (UnaryOp::Neg, Value::Int(x)) => Ok(Value::Int(x.wrapping_neg())),
        (UnaryOp::Neg, Value::Real(x)) => Ok(Value::Real(-x)),
        (UnaryOp::Neg, Value::Time(x)) => Ok(Value::Time(x.wrapping_neg())),
        (op, v) => Err(format!("operator {op:?} not applicable to {}", v.type_name())),
    }
}

pub fn binary(op: BinOp, l: Value, r: Value) -> Result<Value, String> {
    use Value::*;
    let mismatch = |l: &Value, r: &Value| {
        format!(
            "operator {} not applicable to {} and {}",
            op.symbol(),
            l.type_name(),
            r.type_name()
        )
    };
    let cmp = |o: std::cmp::Ordering| -> Value {
        use std::cmp::Ordering::*;
        Bool(match op {
            BinOp::Eq => o == Equal,
            BinOp::Ne => o != Equal,
            BinOp::Lt => o == Less,
            BinOp::Gt => o == Greater,
            BinOp::Le => o != Greater,
            BinOp::Ge => o != Less,
            _ => unreachable!(),
        })
    };
    match op {
        BinOp::And | BinOp::Or | BinOp::Xor => match (&l, &r) {
            (Bool(a), Bool(b)) => Ok(Bool(match op {
                BinOp::And => *a && *b,
                BinOp::Or => *a || *b,
                _ => a != b,
            })),
            (Int(a), Int(b)) => Ok(Int(match op {
                BinOp::And => a & b,
                BinOp::Or => a | b,
                _ => a ^ b,
            })),
            _ => Err(mismatch(&l, &r)),
        },
        BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge => {
            let ordering = match (&l, &r) {
                (Bool(a), Bool(b)) => Some(a.cmp(b)),
                (Int(a), Int(b)) | (Time(a), Time(b)) => Some(a.cmp(b)),
                (Real(a), Real(b)) => a.partial_cmp(b),
                (Int(a), Real(b)) => (*a as f64).partial_cmp(b),
                (Real(a), Int(b)) => a.partial_cmp(&(*b as f64)),
                (Str(a), Str(b)) => Some(a.cmp(b)),
                _ => return Err(mismatch(&l, &r)),
            };
            Ok(match ordering {
                Some(o) => cmp(o),
                // NaN compares unequal to everything.
                None => Bool(op == BinOp::Ne),
            })
        }
        BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod => {
            let zero = || "division by zero".to_string();
            match (&l, &r) {
                (Int(a), Int(b)) => Ok(Int(match op {
                    BinOp::Add => a.wrapping_add(*b),
                    BinOp::Sub => a.wrapping_sub(*b),
                    BinOp::Mul => a.wrapping_mul(*b),
                    BinOp::Div if *b == 0 => return Err(zero()),
                    BinOp::Div => a.wrapping_div(*b),
                    BinOp::Mod if *b == 0 => return Err(zero()),
                    _ => a.wrapping_rem(*b),
                })),
                (Real(_) | Int(_), Real(_) | Int(_)) => {
                    let a = as_f64(&l);
                    let b = as_f64(&r);
                    match op {
                        BinOp::Add => Ok(Real(a + b)),
                        BinOp::Sub => Ok(Real(a - b)),
                        BinOp::Mul => Ok(Real(a * b)),
                        BinOp::Div if b == 0.0 => Err(zero()),
                        BinOp::Div => Ok(Real(a / b)),
                        _ => Err(mismatch(&l, &r)),
                    }
                }
                (Time(a), Time(b)) => match op {
                    BinOp::Add => Ok(Time(a.wrapping_add(*b))),
                    BinOp::Sub => Ok(Time(a.wrapping_sub(*b))),
                    _ => Err(mismatch(&l, &r)),
                },
                (Time(a), Int(b)) => match op {
                    BinOp::Mul => Ok(Time(a.wrapping_mul(*b))),
                    BinOp::Div if *b == 0 => Err(zero()),
                    BinOp::Div => Ok(Time(a.wrapping_div(*b))),
                    _ => Err(mismatch(&l, &r)),
                },
                _ => Err(mismatch(&l, &r)),
            }
        }
    }
}

fn as_f64(v: &Value) -> f64 {
    match v {
        Value::Int(x) => *x as f64,
        Value::Real(x) => *x,
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int_store_wraps_to_width() {
        assert_eq!(convert_for_store(Value::Int(32768), &DataType::Int), Ok(Value::Int(-32768)));
        assert_eq!(convert_for_store(Value::Int(32768), &DataType::Dint), Ok(Value::Int(32768)));
        assert!(convert_for_store(Value::Real(1.0), &DataType::Int).is_err());
    }

    #[test]
    fn parse_values() {
        assert_eq!(Value::parse_as("true", &DataType::Bool), Some(Value::Bool(true)));
        assert_eq!(Value::parse_as("-7", &DataType::Int), Some(Value::Int(-7)));
        assert_eq!(Value::parse_as("T#1s200ms", &DataType::Time), Some(Value::Time(1200)));
        assert_eq!(Value::parse_as("250", &DataType::Time), Some(Value::Time(250)));
        assert_eq!(Value::parse_as("x", &DataType::Int), None);
    }

    #[test]
    fn arithmetic_and_comparison() {
        assert_eq!(binary(BinOp::Div, Value::Int(7), Value::Int(2)), Ok(Value::Int(3)));
        assert!(binary(BinOp::Mod, Value::Int(7), Value::Int(0)).is_err());
        assert_eq!(binary(BinOp::Lt, Value::Int(1), Value::Real(1.5)), Ok(Value::Bool(true)));
        assert_eq!(binary(BinOp::Xor, Value::Bool(true), Value::Bool(true)), Ok(Value::Bool(false)));
        assert!(binary(BinOp::Add, Value::Bool(true), Value::Int(1)).is_err());
    }
}
