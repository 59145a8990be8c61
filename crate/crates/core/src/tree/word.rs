use std::fmt;
use std::str::FromStr;

use super::TreeError;

/// A vertex label: a finite sequence of positive letters. The empty word
/// is the root `e`.
///
/// Words print as concatenated digits when every letter is below ten
/// (`"121"`), and dot-separated otherwise (`"1.12.3"`). Both forms parse.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(Vec<u32>);

impl Word {
    pub fn root() -> Word {
        Word(Vec::new())
    }

    /// Panics on a zero letter.
    pub fn new(letters: Vec<u32>) -> Word {
        assert!(letters.iter().all(|&l| l >= 1), "letters are positive");
        Word(letters)
    }

    pub fn letters(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<u32> {
        self.0.last().copied()
    }

    pub fn parent(&self) -> Option<Word> {
        if self.is_root() {
            None
        } else {
            Some(Word(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    /// `i`-th child, letters starting at 1.
    pub fn child(&self, i: u32) -> Word {
        assert!(i >= 1);
        let mut v = self.0.clone();
        v.push(i);
        Word(v)
    }

    pub fn prefix(&self, len: usize) -> Word {
        Word(self.0[..len].to_vec())
    }

    /// The reversed word `x̄`.
    pub fn reversed(&self) -> Word {
        Word(self.0.iter().rev().copied().collect())
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn suffix_from(&self, start: usize) -> Word {
        Word(self.0[start..].to_vec())
    }

    /// `self` is an ancestor of `other` or equal to it.
    pub fn is_prefix_of(&self, other: &Word) -> bool {
        other.0.starts_with(&self.0)
    }

    /// `other` is a strict descendant of `self`.
    pub fn is_strict_ancestor_of(&self, other: &Word) -> bool {
        other.len() > self.len() && self.is_prefix_of(other)
    }

    /// Length of the longest common prefix.
    pub fn common_prefix_len(&self, other: &Word) -> usize {
        self.0
            .iter()
            .zip(&other.0)
            .take_while(|(a, b)| a == b)
            .count()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_root() {
            return f.write_str("e");
        }
        let dotted = self.0.iter().any(|&l| l > 9);
        for (i, l) in self.0.iter().enumerate() {
            if dotted && i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Word {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || TreeError::Parse(s.to_string());
        if s == "e" || s.is_empty() {
            return Ok(Word::root());
        }
        let letters: Vec<u32> = if s.contains('.') {
            s.split('.')
                .map(|t| t.parse::<u32>().map_err(|_| bad()))
                .collect::<Result<_, _>>()?
        } else {
            s.chars()
                .map(|c| c.to_digit(10).ok_or_else(bad))
                .collect::<Result<_, _>>()?
        };
        if letters.contains(&0) {
            return Err(bad());
        }
        Ok(Word(letters))
    }
}

/// A vertex of `T_*`: either the artificial parent `e_*` or a word.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vertex {
    Star,
    Node(Word),
}

impl Vertex {
    pub fn root() -> Vertex {
        Vertex::Node(Word::root())
    }

    /// `|e_*| = -1`, `|e| = 0`.
    pub fn depth(&self) -> i64 {
        match self {
            Vertex::Star => -1,
            Vertex::Node(w) => w.len() as i64,
        }
    }

    pub fn parent(&self) -> Option<Vertex> {
        match self {
            Vertex::Star => None,
            Vertex::Node(w) => Some(match w.parent() {
                Some(p) => Vertex::Node(p),
                None => Vertex::Star,
            }),
        }
    }

    pub fn word(&self) -> Option<&Word> {
        match self {
            Vertex::Star => None,
            Vertex::Node(w) => Some(w),
        }
    }

    pub fn is_star(&self) -> bool {
        matches!(self, Vertex::Star)
    }
}

impl From<Word> for Vertex {
    fn from(w: Word) -> Self {
        Vertex::Node(w)
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vertex::Star => f.write_str("e*"),
            Vertex::Node(w) => fmt::Display::fmt(w, f),
        }
    }
}

impl fmt::Debug for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Vertex {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "e*" | "e_*" => Ok(Vertex::Star),
            other => Ok(Vertex::Node(other.parse()?)),
        }
    }
}

/// Shorthand for tests and fixtures: `w("121")`.
pub fn w(s: &str) -> Word {
    s.parse().expect("valid word literal")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print() {
        assert_eq!(w("e"), Word::root());
        assert_eq!(w("121").letters(), &[1, 2, 1]);
        assert_eq!(w("1.12.3").letters(), &[1, 12, 3]);
        assert_eq!(w("1.12.3").to_string(), "1.12.3");
        assert_eq!(w("121").to_string(), "121");
        assert!("10".parse::<Word>().is_err());
        assert!("1.0".parse::<Word>().is_err());
        assert_eq!("e*".parse::<Vertex>().unwrap(), Vertex::Star);
    }

    #[test]
    fn genealogy() {
        let x = w("213");
        assert_eq!(x.parent(), Some(w("21")));
        assert_eq!(x.reversed(), w("312"));
        assert!(w("21").is_strict_ancestor_of(&x));
        assert!(!x.is_strict_ancestor_of(&x));
        assert!(x.is_prefix_of(&x));
        assert_eq!(Vertex::root().parent(), Some(Vertex::Star));
        assert_eq!(Vertex::Star.depth(), -1);
        assert_eq!(w("213").common_prefix_len(&w("22")), 1);
    }

    #[test]
    fn lexicographic_order() {
        let mut v = vec![w("2"), w("11"), w("e"), w("1"), w("12")];
        v.sort();
        assert_eq!(v, vec![w("e"), w("1"), w("11"), w("12"), w("2")]);
        assert!(Vertex::Star < Vertex::root());
    }
}
