//! Boolean access policies and the integrated access DAG.
//!
//! Policies are fully parenthesised binary trees over attribute tokens:
//!
//! ```text
//! expr := attribute | '(' expr ('and' | 'or') expr ')'
//! ```
//!
//! Keywords are case-insensitive, attributes are case-sensitive tokens made of
//! ASCII letters, digits and underscores.

mod dag;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub use dag::{
    group_by_policy, DagNode, DataNode, FileGroupId, IntegratedAccessDag, NodeId, NodeKind,
    ParentRef, PolicyGroup,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("empty policy")]
    EmptyPolicy,
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("invalid attribute name {0:?}")]
    InvalidAttribute(String),
    #[error("invalid file group id {0:?}")]
    InvalidGroupId(String),
    #[error("duplicate file group id {0}")]
    DuplicateGroup(String),
    #[error("malformed DAG dump at line {line}: {message}")]
    MalformedDump { line: usize, message: String },
}

fn is_token_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// A case-sensitive attribute token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttributeName(String);

impl AttributeName {
    pub fn new(name: impl Into<String>) -> Result<Self, PolicyError> {
        let name = name.into();
        if name.is_empty() || !name.chars().all(is_token_char) || is_keyword(&name) {
            return Err(PolicyError::InvalidAttribute(name));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AttributeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for AttributeName {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

fn is_keyword(token: &str) -> bool {
    token.eq_ignore_ascii_case("and") || token.eq_ignore_ascii_case("or")
}

/// Convenience for building attribute sets in callers and tests.
pub fn attribute_set<I, S>(names: I) -> Result<BTreeSet<AttributeName>, PolicyError>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    names.into_iter().map(AttributeName::new).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Gate {
    And,
    Or,
}

impl Gate {
    /// Number of children that must be satisfied.
    pub fn threshold(self) -> usize {
        match self {
            Gate::And => 2,
            Gate::Or => 1,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Gate::And => "and",
            Gate::Or => "or",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PolicyExpr {
    Attr(AttributeName),
    And(Box<PolicyExpr>, Box<PolicyExpr>),
    Or(Box<PolicyExpr>, Box<PolicyExpr>),
}

impl PolicyExpr {
    pub fn attr(name: &str) -> Self {
        PolicyExpr::Attr(AttributeName::new(name).expect("valid attribute name"))
    }

    pub fn and(left: PolicyExpr, right: PolicyExpr) -> Self {
        PolicyExpr::And(Box::new(left), Box::new(right))
    }

    pub fn or(left: PolicyExpr, right: PolicyExpr) -> Self {
        PolicyExpr::Or(Box::new(left), Box::new(right))
    }

    pub fn gate(gate: Gate, left: PolicyExpr, right: PolicyExpr) -> Self {
        match gate {
            Gate::And => Self::and(left, right),
            Gate::Or => Self::or(left, right),
        }
    }

    /// Standard Boolean semantics over an attribute set.
    pub fn evaluate(&self, attrs: &BTreeSet<AttributeName>) -> bool {
        match self {
            PolicyExpr::Attr(a) => attrs.contains(a),
            PolicyExpr::And(l, r) => l.evaluate(attrs) && r.evaluate(attrs),
            PolicyExpr::Or(l, r) => l.evaluate(attrs) || r.evaluate(attrs),
        }
    }

    /// Node count of the standalone tree (gates plus leaf occurrences).
    pub fn node_count(&self) -> usize {
        match self {
            PolicyExpr::Attr(_) => 1,
            PolicyExpr::And(l, r) | PolicyExpr::Or(l, r) => 1 + l.node_count() + r.node_count(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            PolicyExpr::Attr(_) => 1,
            PolicyExpr::And(l, r) | PolicyExpr::Or(l, r) => l.leaf_count() + r.leaf_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            PolicyExpr::Attr(_) => 0,
            PolicyExpr::And(l, r) | PolicyExpr::Or(l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    pub fn attributes(&self) -> BTreeSet<AttributeName> {
        let mut out = BTreeSet::new();
        self.collect_attributes(&mut out);
        out
    }

    fn collect_attributes(&self, out: &mut BTreeSet<AttributeName>) {
        match self {
            PolicyExpr::Attr(a) => {
                out.insert(a.clone());
            }
            PolicyExpr::And(l, r) | PolicyExpr::Or(l, r) => {
                l.collect_attributes(out);
                r.collect_attributes(out);
            }
        }
    }

    /// Structural key identifying the expression up to commutativity of
    /// each gate. Length-prefixed so distinct expressions never collide.
    pub fn canonical_key(&self) -> CanonicalKey {
        match self {
            PolicyExpr::Attr(a) => CanonicalKey::attribute(a),
            PolicyExpr::And(l, r) => CanonicalKey::gate(Gate::And, &l.canonical_key(), &r.canonical_key()),
            PolicyExpr::Or(l, r) => CanonicalKey::gate(Gate::Or, &l.canonical_key(), &r.canonical_key()),
        }
    }
}

impl fmt::Display for PolicyExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyExpr::Attr(a) => write!(f, "{a}"),
            PolicyExpr::And(l, r) => write!(f, "({l} and {r})"),
            PolicyExpr::Or(l, r) => write!(f, "({l} or {r})"),
        }
    }
}

impl std::str::FromStr for PolicyExpr {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_policy(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalKey(Vec<u8>);

impl CanonicalKey {
    const ATTR: u8 = b'a';
    const AND: u8 = b'&';
    const OR: u8 = b'|';

    fn attribute(name: &AttributeName) -> Self {
        let mut out = Vec::with_capacity(name.0.len() + 5);
        out.push(Self::ATTR);
        push_len_prefixed(&mut out, name.0.as_bytes());
        Self(out)
    }

    pub(crate) fn gate(gate: Gate, left: &CanonicalKey, right: &CanonicalKey) -> Self {
        let (lo, hi) = if left <= right { (left, right) } else { (right, left) };
        let mut out = Vec::with_capacity(lo.0.len() + hi.0.len() + 9);
        out.push(match gate {
            Gate::And => Self::AND,
            Gate::Or => Self::OR,
        });
        push_len_prefixed(&mut out, &lo.0);
        push_len_prefixed(&mut out, &hi.0);
        Self(out)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

fn push_len_prefixed(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

/// Parses policy text into an AST that mirrors its parenthesisation exactly.
pub fn parse_policy(text: &str) -> Result<PolicyExpr, PolicyError> {
    if text.trim().is_empty() {
        return Err(PolicyError::EmptyPolicy);
    }
    let mut parser = Parser { text, pos: 0 };
    let expr = parser.expr()?;
    parser.skip_ws();
    if parser.pos < text.len() {
        let at = parser.pos;
        return match parser.gate_keyword() {
            Some(_) => {
                // Consume the operand so truncated input reports where it ends.
                parser.skip_ws();
                parser.expr()?;
                Err(syntax(at, "binary gates must be parenthesised"))
            }
            None => Err(syntax(at, "expected end of policy")),
        };
    }
    Ok(expr)
}

fn syntax(offset: usize, message: &str) -> PolicyError {
    PolicyError::Syntax {
        offset,
        message: message.to_string(),
    }
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn rest(&self) -> &str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.text.len() - trimmed.len();
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn token(&mut self) -> Option<(usize, &str)> {
        let start = self.pos;
        let len = self
            .rest()
            .char_indices()
            .find(|&(_, c)| !is_token_char(c))
            .map(|(i, _)| i)
            .unwrap_or(self.rest().len());
        if len == 0 {
            return None;
        }
        self.pos += len;
        Some((start, &self.text[start..start + len]))
    }

    fn gate_keyword(&mut self) -> Option<Gate> {
        let save = self.pos;
        match self.token() {
            Some((_, t)) if t.eq_ignore_ascii_case("and") => Some(Gate::And),
            Some((_, t)) if t.eq_ignore_ascii_case("or") => Some(Gate::Or),
            _ => {
                self.pos = save;
                None
            }
        }
    }

    fn expr(&mut self) -> Result<PolicyExpr, PolicyError> {
        self.skip_ws();
        match self.peek() {
            None => Err(syntax(self.pos, "expected attribute or '('")),
            Some('(') => {
                self.pos += 1;
                let left = self.expr()?;
                self.skip_ws();
                let at = self.pos;
                let gate = self
                    .gate_keyword()
                    .ok_or_else(|| syntax(at, "expected 'and' or 'or'"))?;
                let right = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(')') {
                    return Err(syntax(self.pos, "expected ')'"));
                }
                self.pos += 1;
                Ok(PolicyExpr::gate(gate, left, right))
            }
            Some(_) => {
                let at = self.pos;
                match self.token() {
                    None => Err(syntax(at, "expected attribute or '('")),
                    Some((_, t)) if is_keyword(t) => {
                        Err(syntax(at, "keyword used where an attribute was expected"))
                    }
                    Some((_, t)) => Ok(PolicyExpr::Attr(AttributeName(t.to_string()))),
                }
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(names: &[&str]) -> BTreeSet<AttributeName> {
        attribute_set(names.iter().copied()).unwrap()
    }

    #[test]
    fn parses_simple_and() {
        let p = parse_policy("(A and B)").unwrap();
        assert_eq!(p, PolicyExpr::and(PolicyExpr::attr("A"), PolicyExpr::attr("B")));
    }

    #[test]
    fn parses_nested_without_flattening() {
        let p = parse_policy("((A and B) or C)").unwrap();
        assert_eq!(
            p,
            PolicyExpr::or(
                PolicyExpr::and(PolicyExpr::attr("A"), PolicyExpr::attr("B")),
                PolicyExpr::attr("C")
            )
        );
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let p = parse_policy("(A AND (b Or C_1))").unwrap();
        assert_eq!(p.to_string(), "(A and (b or C_1))");
    }

    #[test]
    fn incomplete_expression_reports_end_offset() {
        assert_eq!(
            parse_policy("A and"),
            Err(PolicyError::Syntax {
                offset: 5,
                message: "expected attribute or '('".into()
            })
        );
    }

    #[test]
    fn blank_input_is_empty_policy() {
        assert_eq!(parse_policy("   "), Err(PolicyError::EmptyPolicy));
        assert_eq!(parse_policy(""), Err(PolicyError::EmptyPolicy));
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            "(A and B",
            "A and B",
            "(A xor B)",
            "((A and B) or)",
            "2 of (A,B,C)",
            "(A and B) C",
            "and",
            ")",
            "(A)",
        ] {
            assert!(
                matches!(parse_policy(bad), Err(PolicyError::Syntax { .. })),
                "{bad} should fail"
            );
        }
    }

    #[test]
    fn evaluate_examples() {
        let ab = parse_policy("(A and B)").unwrap();
        assert!(ab.evaluate(&set(&["A", "B"])));
        assert!(!ab.evaluate(&set(&["C"])));
        let p = parse_policy("((A and B) or C)").unwrap();
        assert!(p.evaluate(&set(&["C"])));
        assert!(!p.evaluate(&set(&["A"])));
    }

    #[test]
    fn canonical_key_is_commutative() {
        let a = parse_policy("((A and B) or C)").unwrap();
        let b = parse_policy("(C or (B and A))").unwrap();
        assert_eq!(a.canonical_key(), b.canonical_key());
        let c = parse_policy("((A or B) or C)").unwrap();
        assert_ne!(a.canonical_key(), c.canonical_key());
        // No associativity: different shapes stay distinct.
        let d = parse_policy("(A and (B and C))").unwrap();
        let e = parse_policy("((A and B) and C)").unwrap();
        assert_ne!(d.canonical_key(), e.canonical_key());
    }

    #[test]
    fn attribute_validation() {
        assert!(AttributeName::new("spouse_1").is_ok());
        assert!(AttributeName::new("").is_err());
        assert!(AttributeName::new("a b").is_err());
        assert!(AttributeName::new("(x").is_err());
        assert!(AttributeName::new("AND").is_err());
    }

    pub(crate) fn arb_policy() -> impl Strategy<Value = PolicyExpr> {
        let leaf = prop::sample::select(vec!["A", "B", "C", "D", "E"]).prop_map(PolicyExpr::attr);
        leaf.prop_recursive(4, 24, 2, |inner| {
            (any::<bool>(), inner.clone(), inner).prop_map(|(and, l, r)| {
                if and {
                    PolicyExpr::and(l, r)
                } else {
                    PolicyExpr::or(l, r)
                }
            })
        })
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(p in arb_policy()) {
            prop_assert_eq!(parse_policy(&p.to_string()).unwrap(), p);
        }

        #[test]
        fn canonical_key_respects_semantics(p in arb_policy(), q in arb_policy(), bits in 0u8..32) {
            let attrs: BTreeSet<_> = ["A", "B", "C", "D", "E"]
                .iter()
                .enumerate()
                .filter(|(i, _)| bits & (1 << i) != 0)
                .map(|(_, n)| AttributeName::new(*n).unwrap())
                .collect();
            if p.canonical_key() == q.canonical_key() {
                prop_assert_eq!(p.evaluate(&attrs), q.evaluate(&attrs));
            }
        }
    }
}
