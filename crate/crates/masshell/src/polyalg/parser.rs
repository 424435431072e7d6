//! Recursive-descent parser for polynomial expressions in k0..k{d-1}.
//!
//! Grammar: expr = term (('+'|'-') term)*
//!          term = factor ('*' factor)*
//!          factor = ('-')* atom ('^' uint)?
//!          atom = number | variable | '(' expr ')'

use super::poly::Polynomial;
use crate::error::PolyError;
use num_complex::Complex64;

pub const MAX_EXPONENT: u32 = 64;

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Var(usize),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
    End,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next(&mut self, nvars: usize) -> Result<(Tok, usize), PolyError> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::End, start));
        }
        let ch = self.src[self.pos];
        match ch {
            b'+' => {
                self.pos += 1;
                Ok((Tok::Plus, start))
            }
            b'-' => {
                self.pos += 1;
                Ok((Tok::Minus, start))
            }
            b'*' => {
                self.pos += 1;
                Ok((Tok::Star, start))
            }
            b'^' => {
                self.pos += 1;
                Ok((Tok::Caret, start))
            }
            b'(' => {
                self.pos += 1;
                Ok((Tok::LParen, start))
            }
            b')' => {
                self.pos += 1;
                Ok((Tok::RParen, start))
            }
            b'0'..=b'9' | b'.' => {
                let mut end = self.pos;
                let mut seen_exp = false;
                while end < self.src.len() {
                    let c = self.src[end];
                    if c.is_ascii_digit() || c == b'.' {
                        end += 1;
                    } else if (c == b'e' || c == b'E') && !seen_exp {
                        seen_exp = true;
                        end += 1;
                        if end < self.src.len() && (self.src[end] == b'+' || self.src[end] == b'-')
                        {
                            end += 1;
                        }
                    } else {
                        break;
                    }
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                let value = text.parse::<f64>().map_err(|_| PolyError::Syntax {
                    pos: start,
                    msg: format!("malformed number `{text}`"),
                })?;
                self.pos = end;
                Ok((Tok::Num(value), start))
            }
            b'k' => {
                let mut end = self.pos + 1;
                while end < self.src.len() && self.src[end].is_ascii_digit() {
                    end += 1;
                }
                if end == self.pos + 1 {
                    return Err(PolyError::Syntax {
                        pos: start,
                        msg: "expected a digit after `k`".into(),
                    });
                }
                let name = std::str::from_utf8(&self.src[self.pos..end]).unwrap().to_string();
                let idx: usize = name[1..].parse().map_err(|_| PolyError::Syntax {
                    pos: start,
                    msg: format!("malformed variable `{name}`"),
                })?;
                if idx >= nvars {
                    return Err(PolyError::UnknownVariable {
                        pos: start,
                        name,
                        max: nvars - 1,
                    });
                }
                self.pos = end;
                Ok((Tok::Var(idx), start))
            }
            other => Err(PolyError::Syntax {
                pos: start,
                msg: format!("unexpected character `{}`", other as char),
            }),
        }
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    nvars: usize,
    cur: Tok,
    cur_pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, nvars: usize) -> Result<Self, PolyError> {
        let mut lex = Lexer::new(src);
        let (cur, cur_pos) = lex.next(nvars)?;
        Ok(Parser {
            lex,
            nvars,
            cur,
            cur_pos,
        })
    }

    fn advance(&mut self) -> Result<(), PolyError> {
        let (t, p) = self.lex.next(self.nvars)?;
        self.cur = t;
        self.cur_pos = p;
        Ok(())
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.term()?;
        loop {
            match self.cur {
                Tok::Plus => {
                    self.advance()?;
                    acc = acc.add(&self.term()?);
                }
                Tok::Minus => {
                    self.advance()?;
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.factor()?;
        while self.cur == Tok::Star {
            self.advance()?;
            acc = acc.mul(&self.factor()?);
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Polynomial, PolyError> {
        if self.cur == Tok::Minus {
            self.advance()?;
            return Ok(self.factor()?.neg());
        }
        let base = self.atom()?;
        if self.cur == Tok::Caret {
            let caret_pos = self.cur_pos;
            self.advance()?;
            match self.cur {
                Tok::Num(x) if x.fract() == 0.0 && x >= 0.0 => {
                    if x > MAX_EXPONENT as f64 {
                        return Err(PolyError::ExponentOverflow {
                            pos: self.cur_pos,
                            max: MAX_EXPONENT,
                        });
                    }
                    let e = x as u32;
                    self.advance()?;
                    return Ok(base.pow(e));
                }
                _ => {
                    return Err(PolyError::Syntax {
                        pos: caret_pos,
                        msg: "exponent must be a nonnegative integer".into(),
                    })
                }
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Polynomial, PolyError> {
        match self.cur.clone() {
            Tok::Num(x) => {
                self.advance()?;
                Ok(Polynomial::constant(self.nvars, Complex64::new(x, 0.0)))
            }
            Tok::Var(i) => {
                self.advance()?;
                Ok(Polynomial::var(self.nvars, i))
            }
            Tok::LParen => {
                let open = self.cur_pos;
                self.advance()?;
                let inner = self.expr()?;
                if self.cur != Tok::RParen {
                    return Err(PolyError::Syntax {
                        pos: open,
                        msg: "unclosed parenthesis".into(),
                    });
                }
                self.advance()?;
                Ok(inner)
            }
            _ => Err(PolyError::Syntax {
                pos: self.cur_pos,
                msg: "expected a number, variable or parenthesised expression".into(),
            }),
        }
    }
}

/// Parses `text` into an expanded canonical polynomial over d variables.
pub fn parse_poly(text: &str, d: usize) -> Result<Polynomial, PolyError> {
    assert!(d >= 1);
    let mut p = Parser::new(text, d)?;
    let poly = p.expr()?;
    if p.cur != Tok::End {
        return Err(PolyError::Syntax {
            pos: p.cur_pos,
            msg: "trailing input after expression".into(),
        });
    }
    Ok(poly)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(p: &Polynomial, exps: &[u16]) -> f64 {
        p.coefficient(exps).re
    }

    #[test]
    fn parses_spec_examples() {
        let p = parse_poly("k0^2 + k1^2", 2).unwrap();
        assert_eq!(re(&p, &[2, 0]), 1.0);
        assert_eq!(re(&p, &[0, 2]), 1.0);

        let q = parse_poly("(k0+k1)*(k0-k1)", 2).unwrap();
        assert_eq!(re(&q, &[2, 0]), 1.0);
        assert_eq!(re(&q, &[0, 2]), -1.0);
        assert_eq!(q.num_terms(), 2);

        let r = parse_poly("2*k0*k1 + 1", 2).unwrap();
        assert_eq!(re(&r, &[1, 1]), 2.0);
        assert_eq!(re(&r, &[0, 0]), 1.0);
    }

    #[test]
    fn error_positions() {
        match parse_poly("k0 + @", 2) {
            Err(PolyError::Syntax { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse_poly("k0 + k7", 2) {
            Err(PolyError::UnknownVariable { pos, name, max }) => {
                assert_eq!(pos, 5);
                assert_eq!(name, "k7");
                assert_eq!(max, 1);
            }
            other => panic!("expected unknown variable, got {other:?}"),
        }
        assert!(matches!(
            parse_poly("k0^400", 2),
            Err(PolyError::ExponentOverflow { .. })
        ));
        assert!(matches!(
            parse_poly("(k0 + 1", 2),
            Err(PolyError::Syntax { .. })
        ));
        assert!(matches!(
            parse_poly("k0 k1", 2),
            Err(PolyError::Syntax { .. })
        ));
    }

    #[test]
    fn unary_minus_and_decimals() {
        let p = parse_poly("-2.5*k0 + -k1^2", 2).unwrap();
        assert_eq!(re(&p, &[1, 0]), -2.5);
        assert_eq!(re(&p, &[0, 2]), -1.0);
        let q = parse_poly("1e-3*k0", 2).unwrap();
        assert_eq!(re(&q, &[1, 0]), 1e-3);
    }

    #[test]
    fn print_parse_round_trip() {
        let p = parse_poly("3.25*k0^2*k1 - 0.125*k1^3 + 7 - k0", 2).unwrap();
        let printed = p.to_string();
        let q = parse_poly(&printed, 2).unwrap();
        assert_eq!(p, q);
    }
}
