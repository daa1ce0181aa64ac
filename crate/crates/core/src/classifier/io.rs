//! Plain-text model files.
//!
//! ```text
//! lanewise-model v1 svm
//! class <k> <bias> <A> <B>
//! <240 weights>
//! ...
//! ```
//!
//! ```text
//! lanewise-model v1 forest
//! trees <T>
//! tree <node count>
//! split <feature> <threshold> <left> <right>
//! leaf <c0> ... <c7>
//! ...
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a save/load cycle is
//! bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::forest::{ForestModel, Node, Tree};
use super::svm::LinearSvmModel;
use super::{Classifier, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;

const MAGIC: &str = "lanewise-model v1";

pub fn save_model(model: &Classifier, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_text(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Classifier> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text)
}

pub(crate) fn to_text(model: &Classifier) -> String {
    let mut out = format!("{MAGIC} {}\n", model.kind());
    match model {
        Classifier::Svm(m) => {
            for k in 0..NUM_CLASSES {
                let (a, b) = m.calibration[k];
                let _ = writeln!(out, "class {k} {} {a} {b}", m.bias[k]);
                let row: Vec<String> = m.weights[k].iter().map(f64::to_string).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        Classifier::Forest(f) => {
            let _ = writeln!(out, "trees {}", f.trees().len());
            for tree in f.trees() {
                let _ = writeln!(out, "tree {}", tree.nodes().len());
                for node in tree.nodes() {
                    match node {
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            let _ = writeln!(out, "split {feature} {threshold} {left} {right}");
                        }
                        Node::Leaf { counts } => {
                            let c: Vec<String> = counts.iter().map(u32::to_string).collect();
                            let _ = writeln!(out, "leaf {}", c.join(" "));
                        }
                    }
                }
            }
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<Vec<&'a str>> {
        for (n, raw) in self.inner.by_ref() {
            self.line = n + 1;
            let toks: Vec<&str> = raw.split_whitespace().collect();
            if !toks.is_empty() {
                return Ok(toks);
            }
        }
        Err(Error::InvalidModel(format!("unexpected end of file after line {}", self.line)))
    }

    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::InvalidModel(format!("line {}: {msg}", self.line))
    }

    fn keyword(&mut self, word: &str, arity: usize) -> Result<Vec<&'a str>> {
        let toks = self.next()?;
        if toks[0] != word || toks.len() != arity + 1 {
            return Err(self.err(format!("expected `{word}` with {arity} fields")));
        }
        Ok(toks[1..].to_vec())
    }

    fn num<T: std::str::FromStr>(&self, tok: &str) -> Result<T> {
        tok.parse().map_err(|_| self.err(format!("bad number {tok:?}")))
    }
}

pub(crate) fn from_text(text: &str) -> Result<Classifier> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.next()?.join(" ");
    let kind = header
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| Error::InvalidModel(format!("bad header {header:?}")))?;
    let model = match kind {
        "svm" => {
            let mut weights = Vec::with_capacity(NUM_CLASSES);
            let mut bias = Vec::with_capacity(NUM_CLASSES);
            let mut calibration = Vec::with_capacity(NUM_CLASSES);
            for k in 0..NUM_CLASSES {
                let f = lines.keyword("class", 4)?;
                if lines.num::<usize>(f[0])? != k {
                    return Err(lines.err(format!("expected class {k}")));
                }
                bias.push(lines.num::<f64>(f[1])?);
                calibration.push((lines.num::<f64>(f[2])?, lines.num::<f64>(f[3])?));
                let row = lines.next()?;
                if row.len() != FEATURE_DIM {
                    return Err(lines.err(format!("expected {FEATURE_DIM} weights")));
                }
                weights.push(row.iter().map(|t| lines.num(t)).collect::<Result<Vec<f64>>>()?);
            }
            LinearSvmModel::from_parts(weights, bias, calibration)
                .map(Classifier::Svm)
                .map_err(|e| Error::InvalidModel(e.to_string()))?
        }
        "forest" => {
            let count: usize = {
                let f = lines.keyword("trees", 1)?;
                lines.num(f[0])?
            };
            let mut trees = Vec::with_capacity(count);
            for _ in 0..count {
                let f = lines.keyword("tree", 1)?;
                let n: usize = lines.num(f[0])?;
                let mut nodes = Vec::with_capacity(n);
                for _ in 0..n {
                    let toks = lines.next()?;
                    let node = match (toks[0], toks.len()) {
                        ("split", 5) => Node::Split {
                            feature: lines.num(toks[1])?,
                            threshold: lines.num(toks[2])?,
                            left: lines.num(toks[3])?,
                            right: lines.num(toks[4])?,
                        },
                        ("leaf", len) if len == NUM_CLASSES + 1 => {
                            let mut counts = [0u32; NUM_CLASSES];
                            for (c, t) in counts.iter_mut().zip(&toks[1..]) {
                                *c = lines.num(t)?;
                            }
                            Node::Leaf { counts }
                        }
                        _ => return Err(lines.err("expected `split` or `leaf` node")),
                    };
                    nodes.push(node);
                }
                trees.push(Tree::new(nodes).map_err(|e| Error::InvalidModel(e.to_string()))?);
            }
            if trees.is_empty() {
                return Err(Error::InvalidModel("forest without trees".into()));
            }
            Classifier::Forest(ForestModel::from_trees(trees))
        }
        other => return Err(Error::InvalidModel(format!("unknown model kind {other:?}"))),
    };
    if let Ok(extra) = lines.next() {
        return Err(lines.err(format!("trailing content {:?}", extra.join(" "))));
    }
    Ok(model)
}
