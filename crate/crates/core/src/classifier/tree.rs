//! Unpruned random decision trees with binary numeric splits.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Dataset;

/// Gains at or below this are treated as no improvement.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    /// Rows with `value[attribute] <= threshold` go left.
    Split {
        attribute: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class distribution of the training rows that reached this leaf.
    Leaf { distribution: Vec<f64> },
}

/// Nodes in pre-order; node 0 is the root and children always follow their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Attributes examined per split (before falling back to the rest).
    pub k: usize,
    pub min_leaf: usize,
}

impl DecisionTree {
    pub fn leaf_distribution(&self, values: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { distribution } => return distribution,
                Node::Split {
                    attribute,
                    threshold,
                    left,
                    right,
                } => i = if values[*attribute] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            best = best.max(d);
            if let Node::Split { left, right, .. } = self.nodes[i] {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        best
    }

    /// Structural checks for trees read from disk.
    pub fn validate(&self, attributes: usize, classes: usize) -> std::result::Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut reached = vec![false; self.nodes.len()];
        reached[0] = true;
        for (i, n) in self.nodes.iter().enumerate() {
            if !reached[i] {
                return Err(format!("node {i} is unreachable"));
            }
            match n {
                Node::Split {
                    attribute,
                    threshold,
                    left,
                    right,
                } => {
                    if *attribute >= attributes {
                        return Err(format!("node {i} splits on attribute {attribute}"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i} has a non-finite threshold"));
                    }
                    for &c in [left, right] {
                        if c <= i || c >= self.nodes.len() || reached[c] {
                            return Err(format!("node {i} has invalid child {c}"));
                        }
                        reached[c] = true;
                    }
                }
                Node::Leaf { distribution } => {
                    if distribution.len() != classes {
                        return Err(format!("leaf {i} has {} classes", distribution.len()));
                    }
                    let sum: f64 = distribution.iter().sum();
                    if distribution.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
                        return Err(format!("leaf {i} is not a distribution"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

#[derive(Debug, Clone, Copy)]
struct Split {
    attribute: usize,
    threshold: f64,
    gain: f64,
}

impl Split {
    /// Higher gain wins; equal gains go to the lower attribute, then the lower threshold.
    fn beats(&self, other: &Option<Split>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.gain > o.gain
                    || (self.gain == o.gain
                        && (self.attribute, self.threshold).partial_cmp(&(o.attribute, o.threshold))
                            == Some(std::cmp::Ordering::Less))
            }
        }
    }
}

struct Builder<'a> {
    data: &'a Dataset,
    params: TreeParams,
    classes: usize,
    attributes: usize,
    /// Scratch buffer for sorting a node's rows.
    order: Vec<(f64, usize)>,
}

impl Builder<'_> {
    fn counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &r in rows {
            c[self.data.rows[r].class] += 1;
        }
        c
    }

    fn best_threshold(&mut self, rows: &[usize], attribute: usize, parent: &[usize], parent_h: f64) -> Option<Split> {
        let n = rows.len();
        self.order.clear();
        self.order
            .extend(rows.iter().map(|&r| (self.data.rows[r].values[attribute], self.data.rows[r].class)));
        self.order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = vec![0usize; self.classes];
        let mut right = parent.to_vec();
        let mut best: Option<Split> = None;
        let min_leaf = self.params.min_leaf.max(1);
        for i in 0..n - 1 {
            let (v, c) = self.order[i];
            left[c] += 1;
            right[c] -= 1;
            let next = self.order[i + 1].0;
            if v == next {
                continue;
            }
            let nl = i + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let gain = parent_h - (nl as f64 * entropy(&left, nl) + nr as f64 * entropy(&right, nr)) / n as f64;
            let mut threshold = v + (next - v) / 2.0;
            if threshold >= next || !threshold.is_finite() {
                threshold = v;
            }
            let cand = Split {
                attribute,
                threshold,
                gain,
            };
            if cand.beats(&best) {
                best = Some(cand);
            }
        }
        best
    }

    fn choose(&mut self, rows: &[usize], counts: &[usize], rng: &mut impl Rng) -> Option<Split> {
        let parent_h = entropy(counts, rows.len());
        let mut attrs: Vec<usize> = (0..self.attributes).collect();
        attrs.shuffle(rng);
        let k = self.params.k.clamp(1, self.attributes);
        let mut best: Option<Split> = None;
        for (i, &a) in attrs.iter().enumerate() {
            // Past the first k, keep looking only until some attribute gives positive gain.
            if i >= k && best.is_some_and(|b| b.gain > MIN_GAIN) {
                break;
            }
            if let Some(s) = self.best_threshold(rows, a, counts, parent_h) {
                if s.gain > MIN_GAIN && s.beats(&best) {
                    best = Some(s);
                }
            }
        }
        best
    }
}

fn leaf(counts: &[usize], n: usize) -> Node {
    Node::Leaf {
        distribution: counts.iter().map(|&c| c as f64 / n as f64).collect(),
    }
}

/// Grow a tree on the rows at `sample` (indices into `data`, repeats allowed).
pub fn train_tree_on(data: &Dataset, sample: &[usize], params: TreeParams, rng: &mut impl Rng) -> Result<DecisionTree> {
    if sample.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.attributes.is_empty() {
        return Err(Error::SchemaMismatch("dataset has no attributes".into()));
    }
    let mut b = Builder {
        data,
        params,
        classes: data.classes.len(),
        attributes: data.attributes.len(),
        order: Vec::with_capacity(sample.len()),
    };
    let mut nodes: Vec<Node> = Vec::new();
    // (rows, slot in `nodes` to fill); left subtrees are expanded before right ones.
    let mut stack: Vec<(Vec<usize>, usize)> = vec![(sample.to_vec(), 0)];
    nodes.push(leaf(&[], 1));
    while let Some((rows, slot)) = stack.pop() {
        let counts = b.counts(&rows);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let split = if pure || rows.len() < 2 * params.min_leaf.max(1) {
            None
        } else {
            b.choose(&rows, &counts, rng)
        };
        match split {
            None => nodes[slot] = leaf(&counts, rows.len()),
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| data.rows[i].values[s.attribute] <= s.threshold);
                let left = nodes.len();
                nodes.push(leaf(&[], 1));
                let right = nodes.len();
                nodes.push(leaf(&[], 1));
                nodes[slot] = Node::Split {
                    attribute: s.attribute,
                    threshold: s.threshold,
                    left,
                    right,
                };
                stack.push((r, right));
                stack.push((l, left));
            }
        }
    }
    Ok(DecisionTree { nodes })
}

/// Grow a tree on every row of `data`.
pub fn train_tree(data: &Dataset, params: TreeParams, rng: &mut impl Rng) -> Result<DecisionTree> {
    let all: Vec<usize> = (0..data.len()).collect();
    train_tree_on(data, &all, params, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Row;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ds(rows: &[(&[f64], usize)], attrs: &[&str]) -> Dataset {
        let mut d = Dataset::new("t", attrs, &["a", "b", "c"]);
        d.rows = rows
            .iter()
            .map(|(v, c)| Row {
                values: v.to_vec(),
                class: *c,
            })
            .collect();
        d
    }

    fn p(k: usize) -> TreeParams {
        TreeParams { k, min_leaf: 1 }
    }

    #[test]
    fn single_class_is_one_leaf() {
        let d = ds(&[(&[1.0], 1), (&[2.0], 1), (&[3.0], 1)], &["x"]);
        let t = train_tree(&d, p(1), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { distribution: vec![0.0, 1.0, 0.0] }]);
    }

    #[test]
    fn separable_line_gives_depth_one_midpoint_split() {
        let d = ds(&[(&[-3.0], 0), (&[-1.0], 0), (&[2.0], 1), (&[5.0], 1)], &["x"]);
        let t = train_tree(&d, p(1), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(t.depth(), 1);
        match t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(threshold, 0.5),
            _ => panic!(),
        }
        for r in &d.rows {
            assert_eq!(t.leaf_distribution(&r.values)[r.class], 1.0);
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        let d = ds(&[], &["x"]);
        assert!(matches!(
            train_tree(&d, p(1), &mut ChaCha8Rng::seed_from_u64(1)),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn uninformative_sampled_attribute_falls_through() {
        // Attribute 0 is constant, so any tree must split on attribute 1 even with k = 1.
        let d = ds(&[(&[7.0, 0.0], 0), (&[7.0, 1.0], 1), (&[7.0, 2.0], 1)], &["const", "x"]);
        for seed in 0..10 {
            let t = train_tree(&d, p(1), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(matches!(t.nodes[0], Node::Split { attribute: 1, .. }));
        }
    }

    #[test]
    fn equal_gains_pick_the_lowest_attribute() {
        // Both attributes separate the classes perfectly.
        let d = ds(&[(&[0.0, 10.0], 0), (&[1.0, 11.0], 1)], &["a", "b"]);
        for seed in 0..10 {
            let t = train_tree(&d, p(2), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(matches!(t.nodes[0], Node::Split { attribute: 0, .. }));
        }
    }

    #[test]
    fn unique_rows_are_fit_exactly_and_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<(Vec<f64>, usize)> = (0..300)
            .map(|i| {
                (
                    vec![rng.random::<f64>(), rng.random::<f64>(), i as f64 * 0.5],
                    rng.random_range(0..3),
                )
            })
            .collect();
        let view: Vec<(&[f64], usize)> = rows.iter().map(|(v, c)| (v.as_slice(), *c)).collect();
        let d = ds(&view, &["u", "v", "w"]);
        let t = train_tree(&d, p(2), &mut rng).unwrap();
        t.validate(3, 3).unwrap();
        for r in &d.rows {
            assert_eq!(t.leaf_distribution(&r.values)[r.class], 1.0);
        }
    }

    #[test]
    fn validation_catches_bad_structure() {
        let bad = DecisionTree {
            nodes: vec![Node::Split {
                attribute: 0,
                threshold: 1.0,
                left: 0,
                right: 1,
            }],
        };
        assert!(bad.validate(1, 2).is_err());
        let bad = DecisionTree {
            nodes: vec![Node::Leaf {
                distribution: vec![0.7, 0.7],
            }],
        };
        assert!(bad.validate(1, 2).is_err());
    }
}
