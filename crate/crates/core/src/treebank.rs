//! Sentiment treebank ingestion.
//!
//! Reads the bracketed one-tree-per-line format of the Stanford Sentiment
//! Treebank (`(3 (2 good) (2 movie))`) into strictly binary [`Tree`]s and
//! derives the binary task by dropping neutral sentences.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

pub const NEUTRAL: u8 = 2;
pub const MAX_FINE_LABEL: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum TreebankError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<TreebankError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    /// Five classes, very negative to very positive.
    FineGrained,
    /// Negative / positive with neutral sentences removed.
    Binary,
}

impl TaskKind {
    pub fn num_classes(self) -> usize {
        match self {
            TaskKind::FineGrained => 5,
            TaskKind::Binary => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::FineGrained => "fine",
            TaskKind::Binary => "binary",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fine" | "fine-grained" => Ok(TaskKind::FineGrained),
            "binary" => Ok(TaskKind::Binary),
            other => Err(format!("unknown task `{other}` (expected fine or binary)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeKind {
    Leaf(String),
    Inner(Box<Tree>, Box<Tree>),
}

/// A labeled binary constituency tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    pub label: Option<u8>,
    pub kind: TreeKind,
}

impl Tree {
    pub fn leaf(label: Option<u8>, token: impl Into<String>) -> Self {
        Tree {
            label,
            kind: TreeKind::Leaf(token.into()),
        }
    }

    pub fn inner(label: Option<u8>, left: Tree, right: Tree) -> Self {
        Tree {
            label,
            kind: TreeKind::Inner(Box::new(left), Box::new(right)),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, TreeKind::Leaf(_))
    }

    pub fn num_leaves(&self) -> usize {
        match &self.kind {
            TreeKind::Leaf(_) => 1,
            TreeKind::Inner(l, r) => l.num_leaves() + r.num_leaves(),
        }
    }

    pub fn num_inner(&self) -> usize {
        match &self.kind {
            TreeKind::Leaf(_) => 0,
            TreeKind::Inner(l, r) => 1 + l.num_inner() + r.num_inner(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_leaves() + self.num_inner()
    }

    pub fn num_labeled(&self) -> usize {
        let own = usize::from(self.label.is_some());
        match &self.kind {
            TreeKind::Leaf(_) => own,
            TreeKind::Inner(l, r) => own + l.num_labeled() + r.num_labeled(),
        }
    }

    /// Tokens in left-to-right order.
    pub fn tokens(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens<'a>(&'a self, out: &mut Vec<&'a str>) {
        match &self.kind {
            TreeKind::Leaf(t) => out.push(t),
            TreeKind::Inner(l, r) => {
                l.collect_tokens(out);
                r.collect_tokens(out);
            }
        }
    }

    /// Applies `f` to every node label, top-down.
    pub fn map_labels(&self, f: &impl Fn(Option<u8>) -> Option<u8>) -> Tree {
        let kind = match &self.kind {
            TreeKind::Leaf(t) => TreeKind::Leaf(t.clone()),
            TreeKind::Inner(l, r) => {
                TreeKind::Inner(Box::new(l.map_labels(f)), Box::new(r.map_labels(f)))
            }
        };
        Tree {
            label: f(self.label),
            kind,
        }
    }

    /// True if both trees have the same shape and tokens, ignoring labels.
    pub fn same_structure(&self, other: &Tree) -> bool {
        match (&self.kind, &other.kind) {
            (TreeKind::Leaf(a), TreeKind::Leaf(b)) => a == b,
            (TreeKind::Inner(a1, a2), TreeKind::Inner(b1, b2)) => {
                a1.same_structure(b1) && a2.same_structure(b2)
            }
            _ => false,
        }
    }
}

/// Canonical single-space rendering; the inverse of [`parse_tree`].
impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        if let Some(l) = self.label {
            write!(f, "{l} ")?;
        }
        match &self.kind {
            TreeKind::Leaf(t) => f.write_str(t)?,
            TreeKind::Inner(l, r) => write!(f, "{l} {r}")?,
        }
        f.write_str(")")
    }
}

pub fn print_tree(tree: &Tree) -> String {
    tree.to_string()
}

/// Parses one bracketed tree. Errors report line 1; [`load_split`] rewrites the line.
pub fn parse_tree(line: &str) -> Result<Tree, TreebankError> {
    let mut p = Parser {
        src: line.as_bytes(),
        text: line,
        pos: 0,
    };
    p.skip_ws();
    let tree = p.node()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("trailing input after tree"));
    }
    Ok(tree)
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

enum Child {
    Token(String),
    Tree(Tree),
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> TreebankError {
        self.error_at(self.pos, message)
    }

    fn error_at(&self, pos: usize, message: impl Into<String>) -> TreebankError {
        TreebankError::Parse {
            line: 1,
            column: self.text[..pos.min(self.text.len())].chars().count() + 1,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn word(&mut self) -> &str {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b != b'(' && b != b')' && !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }

    fn node(&mut self) -> Result<Tree, TreebankError> {
        let open = self.pos;
        if self.peek() != Some(b'(') {
            return Err(self.error("expected `(`"));
        }
        self.pos += 1;
        self.skip_ws();
        let label_pos = self.pos;
        let label_text = self.word().to_owned();
        if label_text.is_empty() {
            return Err(self.error_at(label_pos, "missing label"));
        }
        let label: u8 = label_text.parse().map_err(|_| {
            self.error_at(label_pos, format!("label `{label_text}` is not an integer"))
        })?;
        if label > MAX_FINE_LABEL {
            return Err(self.error_at(label_pos, format!("label {label} outside 0..=4")));
        }

        let mut children = Vec::with_capacity(2);
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Err(self.error_at(open, "unbalanced parentheses: `(` never closed")),
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                Some(b'(') => children.push(Child::Tree(self.node()?)),
                Some(_) => children.push(Child::Token(self.word().to_owned())),
            }
        }

        let mut it = children.into_iter();
        match (it.next(), it.next(), it.next()) {
            (Some(Child::Token(t)), None, None) => Ok(Tree::leaf(Some(label), t)),
            (Some(Child::Tree(l)), Some(Child::Tree(r)), None) => {
                Ok(Tree::inner(Some(label), l, r))
            }
            (None, ..) => Err(self.error_at(open, "empty node")),
            (Some(Child::Tree(_)), None, None) => {
                Err(self.error_at(open, "unary inner node (exactly two subtrees required)"))
            }
            (Some(_), Some(_), Some(_)) => Err(self.error_at(
                open,
                format!("node has {} children (at most 2 allowed)", 3 + it.count()),
            )),
            _ => Err(self.error_at(
                open,
                "a node holds either one token or exactly two subtrees",
            )),
        }
    }
}

/// Loads one tree per non-blank line.
pub fn load_split(path: impl AsRef<Path>) -> Result<Vec<Tree>, TreebankError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TreebankError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_lines(&text).map_err(|e| TreebankError::InFile {
        path: path.to_owned(),
        source: Box::new(e),
    })
}

pub fn parse_lines(text: &str) -> Result<Vec<Tree>, TreebankError> {
    let mut trees = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tree = parse_tree(line).map_err(|e| match e {
            TreebankError::Parse {
                column, message, ..
            } => TreebankError::Parse {
                line: i + 1,
                column,
                message,
            },
            other => other,
        })?;
        trees.push(tree);
    }
    Ok(trees)
}

fn to_binary_label(label: Option<u8>) -> Option<u8> {
    match label {
        Some(0 | 1) => Some(0),
        Some(3 | 4) => Some(1),
        _ => None,
    }
}

/// Drops sentences whose root is neutral and maps 0,1 to 0 and 3,4 to 1.
/// Neutral phrases inside kept sentences lose their label.
pub fn to_binary_task(trees: &[Tree]) -> Vec<Tree> {
    trees
        .iter()
        .filter(|t| matches!(t.label, Some(l) if l != NEUTRAL))
        .map(|t| t.map_labels(&to_binary_label))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeStats {
    pub sentences: usize,
    pub leaves: usize,
    pub labeled_nodes: usize,
}

impl TreeStats {
    pub fn mean_length(&self) -> f64 {
        if self.sentences == 0 {
            0.0
        } else {
            self.leaves as f64 / self.sentences as f64
        }
    }
}

pub fn tree_stats<'a>(trees: impl IntoIterator<Item = &'a Tree>) -> TreeStats {
    let mut stats = TreeStats {
        sentences: 0,
        leaves: 0,
        labeled_nodes: 0,
    };
    for t in trees {
        stats.sentences += 1;
        stats.leaves += t.num_leaves();
        stats.labeled_nodes += t.num_labeled();
    }
    stats
}

/// Number of distinct phrases (token spans of any node) across `trees`.
///
/// The treebank labels each distinct phrase once; repeated phrases in
/// different sentences count a single time here.
pub fn distinct_phrases<'a>(trees: impl IntoIterator<Item = &'a Tree>) -> usize {
    fn walk(t: &Tree, seen: &mut HashSet<String>) -> String {
        let span = match &t.kind {
            TreeKind::Leaf(tok) => tok.clone(),
            TreeKind::Inner(l, r) => {
                let mut s = walk(l, seen);
                s.push(' ');
                s.push_str(&walk(r, seen));
                s
            }
        };
        seen.insert(span.clone());
        span
    }
    let mut seen = HashSet::new();
    for t in trees {
        walk(t, &mut seen);
    }
    seen.len()
}

/// Train/dev/test splits for one task.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Tree>,
    pub dev: Vec<Tree>,
    pub test: Vec<Tree>,
    pub task: TaskKind,
}

impl Dataset {
    /// Builds the task view from fine-grained splits.
    pub fn from_fine(train: Vec<Tree>, dev: Vec<Tree>, test: Vec<Tree>, task: TaskKind) -> Self {
        match task {
            TaskKind::FineGrained => Dataset {
                train,
                dev,
                test,
                task,
            },
            TaskKind::Binary => Dataset {
                train: to_binary_task(&train),
                dev: to_binary_task(&dev),
                test: to_binary_task(&test),
                task,
            },
        }
    }

    /// Loads `train.txt`, `dev.txt` and `test.txt` from a directory.
    pub fn load_dir(dir: impl AsRef<Path>, task: TaskKind) -> Result<Self, TreebankError> {
        let dir = dir.as_ref();
        Ok(Dataset::from_fine(
            load_split(dir.join("train.txt"))?,
            load_split(dir.join("dev.txt"))?,
            load_split(dir.join("test.txt"))?,
            task,
        ))
    }

    pub fn all(&self) -> impl Iterator<Item = &Tree> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_inner_node() {
        let t = parse_tree("(3 (2 good) (2 movie))").unwrap();
        assert_eq!(
            t,
            Tree::inner(
                Some(3),
                Tree::leaf(Some(2), "good"),
                Tree::leaf(Some(2), "movie")
            )
        );
    }

    #[test]
    fn distinct_phrases_dedupe_across_sentences() {
        let trees = parse_lines("(3 (2 a) (2 b))\n(2 (2 a) (1 c))\n(3 (2 a) (2 b))\n").unwrap();
        assert_eq!(distinct_phrases(&trees[..1]), 3);
        // a, b, "a b", c, "a c"
        assert_eq!(distinct_phrases(&trees), 5);
    }

    #[test]
    fn parses_single_leaf() {
        assert_eq!(parse_tree("(2 fine)").unwrap(), Tree::leaf(Some(2), "fine"));
    }

    #[test]
    fn rejects_three_children() {
        let err = parse_tree("(3 (2 a) (2 b) (2 c))").unwrap_err();
        assert!(err.to_string().contains("3 children"), "{err}");
    }

    #[test]
    fn rejects_malformed_input() {
        for (bad, needle) in [
            ("(3 (2 a) (2 b)", "unbalanced"),
            ("(x (2 a) (2 b))", "not an integer"),
            ("(7 a)", "outside"),
            ("(2 (2 a))", "unary"),
            ("(2 a b)", "either one token"),
            ("(2 a) extra", "trailing"),
            ("()", "missing label"),
        ] {
            let err = parse_tree(bad).unwrap_err().to_string();
            assert!(err.contains(needle), "{bad}: {err}");
        }
    }

    #[test]
    fn error_positions_are_reported() {
        let err = parse_lines("(2 a)\n(2 (1 x) (9 y))\n").unwrap_err();
        match err {
            TreebankError::Parse { line, column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, 11);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tokens_are_kept_byte_exact() {
        let t = parse_tree("(2 (2 Schrödinger's) (2 -LRB-cat-RRB-))").unwrap();
        assert_eq!(t.tokens(), vec!["Schrödinger's", "-LRB-cat-RRB-"]);
    }

    #[test]
    fn empty_split_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        fs::write(&path, "").unwrap();
        assert!(load_split(&path).unwrap().is_empty());
    }

    #[test]
    fn load_split_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        fs::write(&path, "(2 a)\n(2 a)\n(3 (2 a)\n").unwrap();
        let err = load_split(&path).unwrap_err().to_string();
        assert!(err.contains("bad.txt") && err.contains("line 3"), "{err}");
        assert!(load_split(dir.path().join("missing.txt")).is_err());
    }

    #[test]
    fn binary_task_drops_neutral_roots() {
        let trees =
            parse_lines("(2 (2 a) (2 b))\n(4 (3 (2 c) (4 d)) (1 e))\n(1 (0 f) (2 g))\n").unwrap();
        let bin = to_binary_task(&trees);
        assert_eq!(bin.len(), 2);
        assert_eq!(bin[0].to_string(), "(1 (1 (c) (1 d)) (0 e))");
        assert_eq!(bin[1].to_string(), "(0 (0 f) (g))");
        assert!(bin[0].same_structure(&trees[1]));
    }

    #[test]
    fn stats_of_single_tree() {
        let t = parse_tree("(3 (2 a) (2 b))").unwrap();
        let s = tree_stats([&t]);
        assert_eq!((s.sentences, s.leaves, s.labeled_nodes), (1, 2, 3));
        assert_eq!(s.mean_length(), 2.0);
    }

    fn arb_tree() -> impl Strategy<Value = Tree> {
        let leaf = (0u8..=4, "[a-zA-Z0-9'.,!-]{1,8}").prop_map(|(l, tok)| Tree::leaf(Some(l), tok));
        leaf.prop_recursive(6, 64, 2, |inner| {
            (0u8..=4, inner.clone(), inner).prop_map(|(l, a, b)| Tree::inner(Some(l), a, b))
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(t in arb_tree()) {
            let text = print_tree(&t);
            let back = parse_tree(&text).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(print_tree(&back), text);
        }

        #[test]
        fn binary_identity_holds(t in arb_tree()) {
            prop_assert_eq!(t.num_leaves() - 1, t.num_inner());
        }

        #[test]
        fn binary_task_keeps_structure(t in arb_tree()) {
            let out = to_binary_task(std::slice::from_ref(&t));
            match t.label {
                Some(NEUTRAL) => prop_assert!(out.is_empty()),
                _ => {
                    prop_assert_eq!(out.len(), 1);
                    prop_assert!(out[0].same_structure(&t));
                }
            }
        }
    }
}
