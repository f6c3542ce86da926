use super::{Factor, FactorKind, Index, IndexExpr, Term, Variance};
use crate::error::{Error, Result};

const TENSOR_NAME: &str = "tensor name";
const INDEX_LABEL: &str = "index label";
const LOWER: &str = "'_'";
const UPPER: &str = "'^'";
const PLUS: &str = "'+'";
const MINUS: &str = "'-'";
const END: &str = "end of input";

/// Parses an index expression. Whitespace may separate any two tokens and
/// must separate two factors whose boundary would otherwise read as more
/// index labels (`u_i v_i`, not `u_iv_i`).
pub fn parse(src: &str) -> Result<IndexExpr> {
    Parser { src: src.as_bytes(), pos: 0 }.expression()
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T> {
        Err(Error::Syntax { offset: self.pos, expected: expected.iter().map(|s| s.to_string()).collect() })
    }

    fn expression(&mut self) -> Result<IndexExpr> {
        self.skip_ws();
        let mut negative = match self.peek() {
            Some(b'-') => true,
            Some(b'+') => false,
            Some(c) if c.is_ascii_alphabetic() => false,
            _ => return self.fail(&[TENSOR_NAME, PLUS, MINUS]),
        };
        if !self.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
            self.pos += 1;
            self.skip_ws();
        }
        let mut terms = Vec::new();
        loop {
            terms.push(self.term(negative)?);
            // term() stops at an operator or the end
            match self.peek() {
                None => return Ok(IndexExpr { terms }),
                Some(b'+') => negative = false,
                Some(b'-') => negative = true,
                Some(_) => unreachable!("term stops only at an operator or the end"),
            }
            self.pos += 1;
            self.skip_ws();
        }
    }

    fn term(&mut self, negative: bool) -> Result<Term> {
        let mut factors = Vec::new();
        loop {
            if !self.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
                if factors.is_empty() {
                    return self.fail(&[TENSOR_NAME]);
                }
                return self.fail(&[LOWER, UPPER, TENSOR_NAME, PLUS, MINUS, END]);
            }
            factors.push(self.factor()?);
            self.skip_ws();
            if matches!(self.peek(), None | Some(b'+') | Some(b'-')) {
                return Ok(Term { negative, factors });
            }
        }
    }

    fn factor(&mut self) -> Result<Factor> {
        let offset = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric()) {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[offset..self.pos]).expect("ascii run");
        let kind = match name {
            "eps" => FactorKind::Epsilon,
            "delta" => FactorKind::Delta,
            _ => FactorKind::Tensor(name.to_string()),
        };
        let mut indices = Vec::new();
        loop {
            self.skip_ws();
            let variance = match self.peek() {
                Some(b'_') => Variance::Lower,
                Some(b'^') => Variance::Upper,
                _ if indices.is_empty() => return self.fail(&[LOWER, UPPER]),
                _ => return Ok(Factor { kind, indices, offset }),
            };
            self.pos += 1;
            self.skip_ws();
            if !self.peek().is_some_and(|c| c.is_ascii_lowercase()) {
                return self.fail(&[INDEX_LABEL]);
            }
            while let Some(c) = self.peek().filter(|c| c.is_ascii_lowercase()) {
                indices.push(Index { label: c as char, variance, offset: self.pos });
                self.pos += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn syntax_offset(src: &str) -> usize {
        match parse(src) {
            Err(Error::Syntax { offset, .. }) => offset,
            other => panic!("expected a syntax error for {src:?}, got {other:?}"),
        }
    }

    #[test]
    fn shared_lower_label() {
        let e = parse("u_i v_i").unwrap();
        assert_eq!(e.terms.len(), 1);
        let f = &e.terms[0].factors;
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].kind, FactorKind::Tensor("u".into()));
        assert_eq!(f[1].indices[0].label, 'i');
        assert!(f.iter().all(|x| x.indices[0].variance == Variance::Lower));
        assert_eq!(f[1].offset, 4);
        assert_eq!(f[1].indices[0].offset, 6);
    }

    #[test]
    fn upper_marker() {
        let e = parse("u_i v^i").unwrap();
        assert_eq!(e.terms[0].factors[1].indices[0].variance, Variance::Upper);
    }

    #[test]
    fn empty_index_list() {
        let err = parse("u_").unwrap_err();
        assert_eq!(err, Error::Syntax { offset: 2, expected: vec![INDEX_LABEL.to_string()] });
    }

    #[test]
    fn error_offsets() {
        assert_eq!(syntax_offset(""), 0);
        assert_eq!(syntax_offset("u"), 1);
        assert_eq!(syntax_offset("u_i +"), 5);
        assert_eq!(syntax_offset("u_i * v_i"), 4);
        assert_eq!(syntax_offset("u_I"), 2);
        assert_eq!(syntax_offset("u_i v"), 5);
    }

    #[test]
    fn symbols_and_mixed_variance() {
        let e = parse("T_i^j eps_ijk delta_kl").unwrap();
        let f = &e.terms[0].factors;
        assert_eq!(f[0].indices.iter().map(|i| i.variance).collect::<Vec<_>>(), [Variance::Lower, Variance::Upper]);
        assert_eq!(f[1].kind, FactorKind::Epsilon);
        assert_eq!(f[2].kind, FactorKind::Delta);
    }

    #[test]
    fn signed_terms() {
        let e = parse("- a_i b_j + c_i d_j -e_j f_i").unwrap();
        assert_eq!(e.terms.iter().map(|t| t.negative).collect::<Vec<_>>(), [true, false, true]);
    }

    #[test]
    fn whitespace_is_insignificant_between_tokens() {
        let a = parse("u_i v_i").unwrap().to_string();
        let b = parse("  u _ i\tv_ i ").unwrap().to_string();
        assert_eq!(a, b);
    }

    #[test]
    fn canonical_print_round_trips() {
        for src in ["u_i v_i w_j", "-T_i^jk u_j v_k", "u_j v_k w_m eps_ijk eps_imn", "a_i - b_i + delta_ij c_j"] {
            let e = parse(src).unwrap();
            assert_eq!(e.to_string(), src);
            assert_eq!(parse(&e.to_string()).unwrap(), e);
        }
    }
}
