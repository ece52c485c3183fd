//! Line-oriented text format for boosted-tree models.
//!
//! ```text
//! triad-gbdt 1
//! base_score <real>
//! learning_rate <real>
//! features <n>
//! <name>                      (n lines)
//! trees <t>
//! tree <index> <node count>
//! <id> internal <feature> <threshold> <left> <right> - <cover>
//! <id> leaf - - - - <value> <cover>
//! ```
//! Reals are written with 17 significant digits so that doubles round-trip exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;

use super::gbdt::GbdtModel;
use super::tree::{Tree, TreeNode};

const MAGIC: &str = "triad-gbdt 1";

fn real<T: Real>(v: T) -> String {
    format!("{:.16e}", v.to_f64_lossy())
}

pub fn write_model<T: Real>(model: &GbdtModel<T>) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "base_score {}", real(model.base_score));
    let _ = writeln!(s, "learning_rate {}", real(model.learning_rate));
    let _ = writeln!(s, "features {}", model.feature_names.len());
    for name in &model.feature_names {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::Input(format!("feature name {name:?} cannot be serialized")));
        }
        let _ = writeln!(s, "{name}");
    }
    let _ = writeln!(s, "trees {}", model.trees.len());
    for (t, tree) in model.trees.iter().enumerate() {
        let _ = writeln!(s, "tree {t} {}", tree.nodes.len());
        for (id, node) in tree.nodes.iter().enumerate() {
            let _ = match *node {
                TreeNode::Internal { feature, threshold, left, right, cover } => writeln!(
                    s,
                    "{id} internal {feature} {} {left} {right} - {}",
                    real(threshold),
                    real(cover)
                ),
                TreeNode::Leaf { value, cover } => writeln!(s, "{id} leaf - - - - {} {}", real(value), real(cover)),
            };
        }
    }
    Ok(s)
}

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.trim_end())
            }
            None => Err(self.err("unexpected end of model file")),
        }
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::parse(self.path, self.line, reason)
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let l = self.next()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        Ok(parts.collect())
    }

    fn num<N: std::str::FromStr>(&self, s: &str) -> Result<N> {
        s.parse().map_err(|_| self.err(format!("invalid number `{s}`")))
    }

    fn real<T: Real>(&self, s: &str) -> Result<T> {
        let v: f64 = self.num(s)?;
        T::from_f64(v).ok_or_else(|| self.err(format!("value `{s}` out of range")))
    }
}

/// Parses a model; `path` only labels error messages.
pub fn read_model<T: Real>(text: &str, path: &Path) -> Result<GbdtModel<T>> {
    let mut it = Lines { path, inner: text.lines().enumerate(), line: 0 };
    if it.next()? != MAGIC {
        return Err(it.err("not a triad-gbdt model"));
    }
    let one = |it: &Lines, v: Vec<&str>| -> Result<String> {
        match v.as_slice() {
            [x] => Ok((*x).to_string()),
            _ => Err(it.err("expected exactly one value")),
        }
    };
    let v = it.keyed("base_score")?;
    let base_score: T = it.real(&one(&it, v)?)?;
    let v = it.keyed("learning_rate")?;
    let learning_rate: T = it.real(&one(&it, v)?)?;
    let v = it.keyed("features")?;
    let n_features: usize = it.num(&one(&it, v)?)?;
    let mut feature_names = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        feature_names.push(it.next()?.to_string());
    }
    let v = it.keyed("trees")?;
    let n_trees: usize = it.num(&one(&it, v)?)?;
    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let v = it.keyed("tree")?;
        let [idx, count] = v.as_slice() else {
            return Err(it.err("expected `tree <index> <node count>`"));
        };
        if it.num::<usize>(idx)? != t {
            return Err(it.err(format!("expected tree {t}")));
        }
        let count: usize = it.num(count)?;
        let mut nodes = Vec::with_capacity(count);
        for id in 0..count {
            let l = it.next()?;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 8 {
                return Err(it.err("node line needs 8 fields"));
            }
            if it.num::<usize>(f[0])? != id {
                return Err(it.err(format!("expected node {id}")));
            }
            let node = match f[1] {
                "internal" => TreeNode::Internal {
                    feature: it.num(f[2])?,
                    threshold: it.real(f[3])?,
                    left: it.num(f[4])?,
                    right: it.num(f[5])?,
                    cover: it.real(f[7])?,
                },
                "leaf" => TreeNode::Leaf { value: it.real(f[6])?, cover: it.real(f[7])? },
                other => return Err(it.err(format!("unknown node kind `{other}`"))),
            };
            nodes.push(node);
        }
        trees.push(Tree { nodes });
    }
    let model = GbdtModel { base_score, learning_rate, trees, feature_names };
    model.check_integrity()?;
    Ok(model)
}

pub fn save_model<T: Real>(model: &GbdtModel<T>, path: &Path) -> Result<()> {
    std::fs::write(path, write_model(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Real>(path: &Path) -> Result<GbdtModel<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_model(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> GbdtModel<f64> {
        GbdtModel {
            base_score: 0.1 + 0.2,
            learning_rate: 0.05,
            trees: vec![
                Tree {
                    nodes: vec![
                        TreeNode::Internal { feature: 1, threshold: 1.0 / 3.0, left: 1, right: 2, cover: 3.0 },
                        TreeNode::Leaf { value: -2.0e-17, cover: 1.0 },
                        TreeNode::Leaf { value: std::f64::consts::PI, cover: 2.0 },
                    ],
                },
                Tree::leaf(0.0, 3.0),
            ],
            feature_names: vec!["C_x".into(), "P_y".into()],
        }
    }

    #[test]
    fn round_trip_exact() {
        let m = model();
        let text = write_model(&m).unwrap();
        let back: GbdtModel<f64> = read_model(&text, Path::new("m.txt")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn corrupt_input_reports_line() {
        let text = write_model(&model()).unwrap().replace("internal 1", "internal x");
        match read_model::<f64>(&text, Path::new("m.txt")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn feature_names_with_spaces_rejected() {
        let mut m = model();
        m.feature_names[0] = "a b".into();
        assert!(write_model(&m).is_err());
    }
}
