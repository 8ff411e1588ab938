//! Small expression language for qubit operators.
//!
//! An expression is a weighted sum of tensor products of the single-qubit
//! operators `I X Y Z SP SM` (`SP = |0⟩⟨1|`, `SM = |1⟩⟨0|`). Factors are
//! combined with `*`, `⊗` or plain juxtaposition; a product of two operators
//! is a tensor product whose leftmost factor is qubit 1. Scalars may use
//! decimal literals, `i` and `pi`, and `/` divides by a scalar. A trailing
//! `+ h.c.` adds the adjoint of everything before it.
//!
//! ```text
//! 0.0628318 Z⊗Z
//! 2*pi*0.01 * Z Z
//! i(SP - SM) I
//! SP I + h.c.
//! ```

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64};

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    HermitianConjugate,
    Plus,
    Minus,
    Star,
    Slash,
    Kron,
    LParen,
    RParen,
}

fn expr_err(column: usize, message: impl Into<String>) -> Error {
    Error::Expression { column, message: message.into() }
}

fn tokenize(src: &str) -> Result<Vec<(Token, usize)>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
            }
            '+' => {
                out.push((Token::Plus, col));
                i += 1;
            }
            '-' | '−' => {
                out.push((Token::Minus, col));
                i += 1;
            }
            '*' | '·' => {
                out.push((Token::Star, col));
                i += 1;
            }
            '/' => {
                out.push((Token::Slash, col));
                i += 1;
            }
            '⊗' => {
                out.push((Token::Kron, col));
                i += 1;
            }
            '(' => {
                out.push((Token::LParen, col));
                i += 1;
            }
            ')' => {
                out.push((Token::RParen, col));
                i += 1;
            }
            d if d.is_ascii_digit() || d == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value = text.parse::<f64>().map_err(|_| expr_err(col, format!("malformed number `{text}`")))?;
                out.push((Token::Number(value), col));
            }
            a if a.is_ascii_alphabetic() => {
                let rest: String = chars[i..].iter().collect();
                if rest.starts_with("h.c.") {
                    out.push((Token::HermitianConjugate, col));
                    i += 4;
                    continue;
                }
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                out.push((Token::Ident(chars[start..i].iter().collect()), col));
            }
            other => return Err(expr_err(col, format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
enum Value {
    Scalar(C64),
    Operator { matrix: CMatrix, qubits: usize },
}

impl Value {
    fn qubits(&self) -> usize {
        match self {
            Value::Scalar(_) => 0,
            Value::Operator { qubits, .. } => *qubits,
        }
    }

    fn mul(self, rhs: Value) -> Value {
        match (self, rhs) {
            (Value::Scalar(a), Value::Scalar(b)) => Value::Scalar(a * b),
            (Value::Scalar(a), Value::Operator { matrix, qubits })
            | (Value::Operator { matrix, qubits }, Value::Scalar(a)) => Value::Operator { matrix: matrix * a, qubits },
            (Value::Operator { matrix: a, qubits: qa }, Value::Operator { matrix: b, qubits: qb }) => {
                Value::Operator { matrix: linalg::kron(&a, &b), qubits: qa + qb }
            }
        }
    }

    fn add(self, rhs: Value, sign: f64, col: usize) -> Result<Value> {
        match (self, rhs) {
            (Value::Scalar(a), Value::Scalar(b)) => Ok(Value::Scalar(a + b * sign)),
            (Value::Operator { matrix: a, qubits: qa }, Value::Operator { matrix: b, qubits: qb }) if qa == qb => {
                Ok(Value::Operator { matrix: a + b * C64::new(sign, 0.0), qubits: qa })
            }
            (l, r) => {
                Err(expr_err(col, format!("inconsistent qubit counts in sum ({} vs {})", l.qubits(), r.qubits())))
            }
        }
    }

    fn adjoint(&self) -> Value {
        match self {
            Value::Scalar(a) => Value::Scalar(a.conj()),
            Value::Operator { matrix, qubits } => Value::Operator { matrix: matrix.adjoint(), qubits: *qubits },
        }
    }
}

fn single_qubit(name: &str) -> Option<CMatrix> {
    let (o, l, i) = (C64::ZERO, C64::ONE, C64::I);
    let entries = match name {
        "I" => [l, o, o, l],
        "X" => [o, l, l, o],
        "Y" => [o, -i, i, o],
        "Z" => [l, o, o, -l],
        "SP" => [o, l, o, o],
        "SM" => [o, o, l, o],
        _ => return None,
    };
    Some(CMatrix::from_row_slice(2, 2, &entries))
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn column(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.len + 1, |(_, c)| *c)
    }

    fn expr(&mut self) -> Result<Value> {
        let mut sign = 1.0;
        match self.peek() {
            Some(Token::Plus) => self.pos += 1,
            Some(Token::Minus) => {
                sign = -1.0;
                self.pos += 1;
            }
            _ => {}
        }
        let mut acc = self.term()?.mul(Value::Scalar(C64::new(sign, 0.0)));
        loop {
            let sign = match self.peek() {
                Some(Token::Plus) => 1.0,
                Some(Token::Minus) => -1.0,
                _ => break,
            };
            let col = self.column();
            self.pos += 1;
            if self.peek() == Some(&Token::HermitianConjugate) {
                if sign < 0.0 {
                    return Err(expr_err(col, "`h.c.` must be added, not subtracted"));
                }
                self.pos += 1;
                let adj = acc.adjoint();
                acc = acc.add(adj, 1.0, col)?;
                continue;
            }
            let rhs = self.term()?;
            acc = acc.add(rhs, sign, col)?;
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Value> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Star) | Some(Token::Kron) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    acc = acc.mul(rhs);
                }
                Some(Token::Slash) => {
                    let col = self.column();
                    self.pos += 1;
                    match self.factor()? {
                        Value::Scalar(d) if d.norm() > 0.0 => acc = acc.mul(Value::Scalar(d.inv())),
                        Value::Scalar(_) => return Err(expr_err(col, "division by zero")),
                        Value::Operator { .. } => return Err(expr_err(col, "can only divide by a scalar")),
                    }
                }
                Some(Token::Number(_)) | Some(Token::Ident(_)) | Some(Token::LParen) => {
                    let rhs = self.factor()?;
                    acc = acc.mul(rhs);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Value> {
        let col = self.column();
        let Some((tok, _)) = self.tokens.get(self.pos).cloned() else {
            return Err(expr_err(col, "unexpected end of expression"));
        };
        self.pos += 1;
        match tok {
            Token::Number(v) => Ok(Value::Scalar(C64::new(v, 0.0))),
            Token::Ident(name) => match name.as_str() {
                "i" => Ok(Value::Scalar(C64::I)),
                "pi" => Ok(Value::Scalar(C64::new(std::f64::consts::PI, 0.0))),
                _ => single_qubit(&name)
                    .map(|matrix| Value::Operator { matrix, qubits: 1 })
                    .ok_or_else(|| expr_err(col, format!("unknown operator `{name}`"))),
            },
            Token::LParen => {
                let inner = self.expr()?;
                if self.peek() != Some(&Token::RParen) {
                    return Err(expr_err(self.column(), "expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Token::Minus => Ok(self.factor()?.mul(Value::Scalar(C64::new(-1.0, 0.0)))),
            other => Err(expr_err(col, format!("unexpected token {other:?}"))),
        }
    }
}

/// Parses and evaluates an operator expression.
pub fn build_operator(expr: &str) -> Result<CMatrix> {
    let tokens = tokenize(expr)?;
    let mut parser = Parser { tokens, pos: 0, len: expr.chars().count() };
    let value = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(expr_err(parser.column(), "trailing input"));
    }
    match value {
        Value::Operator { matrix, .. } => Ok(matrix),
        Value::Scalar(_) => Err(expr_err(1, "expression contains no operator")),
    }
}

/// Qubit count implied by an operator of dimension `dim`.
pub fn qubits_for_dim(dim: usize) -> Option<usize> {
    (dim.is_power_of_two() && dim > 1).then(|| dim.trailing_zeros() as usize)
}
