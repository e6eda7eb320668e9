use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One node of a flattened tree. Children always have larger indices than
/// their parent, so the node array is acyclic by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Training rows reaching this leaf: `[non-scam, scam]`.
        counts: [u32; 2],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

pub(crate) struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub features_per_split: usize,
}

struct Best {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl DecisionTree {
    /// Grows a CART tree with the gini criterion over `rows` (indices into
    /// `x`/`y`, repeats allowed).
    pub(crate) fn grow(
        x: &[&[f64]],
        y: &[bool],
        rows: Vec<usize>,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut tree = DecisionTree { nodes: Vec::new() };
        let n_features = x.first().map_or(0, |r| r.len());
        let mut stack = vec![(tree.push_placeholder(), rows, 0usize)];
        while let Some((slot, rows, depth)) = stack.pop() {
            let pos = rows.iter().filter(|&&r| y[r]).count();
            let counts = [(rows.len() - pos) as u32, pos as u32];
            let depth_ok = params.max_depth.is_none_or(|d| depth < d);
            let can_split = depth_ok
                && pos > 0
                && pos < rows.len()
                && rows.len() >= 2 * params.min_leaf;
            let best = if can_split {
                best_split(x, y, &rows, n_features, params, rng)
            } else {
                None
            };
            match best {
                None => tree.nodes[slot] = Node::Leaf { counts },
                Some(b) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&i| x[i][b.feature] <= b.threshold);
                    let left = tree.push_placeholder();
                    let right = tree.push_placeholder();
                    tree.nodes[slot] = Node::Split {
                        feature: b.feature,
                        threshold: b.threshold,
                        left,
                        right,
                    };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        tree
    }

    fn push_placeholder(&mut self) -> usize {
        self.nodes.push(Node::Leaf { counts: [0, 0] });
        self.nodes.len() - 1
    }

    pub fn leaf(&self, v: &[f64]) -> [u32; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return *counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if v[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// The tree's vote; ties go to non-scam.
    pub fn vote(&self, v: &[f64]) -> bool {
        let [neg, pos] = self.leaf(v);
        pos > neg
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Every split index in range and every child after its parent.
    pub fn is_well_formed(&self, n_features: usize) -> bool {
        self.nodes.iter().enumerate().all(|(i, n)| match n {
            Node::Leaf { .. } => true,
            Node::Split {
                feature,
                left,
                right,
                threshold,
            } => {
                *feature < n_features
                    && threshold.is_finite()
                    && *left > i
                    && *right > i
                    && *left < self.nodes.len()
                    && *right < self.nodes.len()
            }
        })
    }
}

/// Tries candidate features in random order: at least `features_per_split`,
/// and more only while none of them separates the rows.
fn best_split(
    x: &[&[f64]],
    y: &[bool],
    rows: &[usize],
    n_features: usize,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Option<Best> {
    let mut order: Vec<usize> = (0..n_features).collect();
    order.shuffle(rng);
    let n = rows.len();
    let total_pos = rows.iter().filter(|&&r| y[r]).count();
    let mut best: Option<Best> = None;
    let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(n);
    for (tried, &f) in order.iter().enumerate() {
        if tried >= params.features_per_split && best.is_some() {
            break;
        }
        sorted.clear();
        sorted.extend(rows.iter().map(|&r| (x[r][f], y[r])));
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_pos = 0;
        for i in 0..n - 1 {
            left_pos += usize::from(sorted[i].1);
            let (a, b) = (sorted[i].0, sorted[i + 1].0);
            let n_left = i + 1;
            if a == b || n_left < params.min_leaf || n - n_left < params.min_leaf {
                continue;
            }
            let impurity = (n_left as f64 * gini(left_pos, n_left)
                + (n - n_left) as f64 * gini(total_pos - left_pos, n - n_left))
                / n as f64;
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                let mid = a + (b - a) / 2.0;
                let threshold = if mid < b { mid } else { a };
                best = Some(Best {
                    feature: f,
                    threshold,
                    impurity,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn grow(x: &[Vec<f64>], y: &[bool]) -> DecisionTree {
        let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let params = TreeParams {
            max_depth: None,
            min_leaf: 1,
            features_per_split: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        DecisionTree::grow(&rows, y, (0..x.len()).collect(), &params, &mut rng)
    }

    #[test]
    fn test_separable_single_feature() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 0.0]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 12).collect();
        let t = grow(&x, &y);
        assert!(t.is_well_formed(2));
        for (v, l) in x.iter().zip(&y) {
            assert_eq!(t.vote(v), *l);
        }
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn test_identical_rows_become_majority_leaf() {
        let x = vec![vec![1.0]; 5];
        let y = vec![true, true, false, true, false];
        let t = grow(&x, &y);
        assert_eq!(t.nodes, vec![Node::Leaf { counts: [2, 3] }]);
        assert!(t.vote(&[1.0]));
    }

    #[test]
    fn test_tie_leaf_votes_non_scam() {
        let t = DecisionTree {
            nodes: vec![Node::Leaf { counts: [4, 4] }],
        };
        assert!(!t.vote(&[0.0]));
    }
}
