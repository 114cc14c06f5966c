use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf {
        /// Training samples per class: `[low, high]`.
        counts: [usize; 2],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A CART classification tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// `true` for the high class; a tied leaf votes low.
    pub fn predict(&self, x: &[f64]) -> bool {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return counts[1] > counts[0],
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn split_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `⌈√k⌉` when unset.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            mtry: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    /// Mean decrease in Gini impurity per feature, normalized to sum 1 when
    /// any split reduced impurity.
    pub importance: Vec<f64>,
}

impl ForestModel {
    /// Majority vote; ties go to the low class.
    pub fn predict(&self, x: &[f64]) -> bool {
        let high = self.trees.iter().filter(|t| t.predict(x)).count();
        2 * high > self.trees.len()
    }
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (counts[0] as f64 / n, counts[1] as f64 / n);
    1.0 - p0 * p0 - p1 * p1
}

fn class_counts(idx: &[usize], y: &[bool]) -> [usize; 2] {
    let high = idx.iter().filter(|&&i| y[i]).count();
    [idx.len() - high, high]
}

struct Best {
    feature: usize,
    threshold: f64,
    /// Weighted impurity decrease `n·G − n_l·G_l − n_r·G_r`.
    decrease: f64,
}

/// Exhaustive midpoint search over `features` in ascending order; the first
/// best split wins, so ties go to the lower feature, then the lower
/// threshold.
fn best_split(x: &[Vec<f64>], y: &[bool], idx: &[usize], features: &[usize]) -> Option<Best> {
    let counts = class_counts(idx, y);
    let parent = idx.len() as f64 * gini(counts);
    let mut best: Option<Best> = None;
    let mut order: Vec<usize> = idx.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left = [0usize; 2];
        for pos in 0..order.len() - 1 {
            left[usize::from(y[order[pos]])] += 1;
            let (lo, hi) = (x[order[pos]][f], x[order[pos + 1]][f]);
            if lo == hi {
                continue;
            }
            let right = [counts[0] - left[0], counts[1] - left[1]];
            let n_l = (pos + 1) as f64;
            let n_r = (order.len() - pos - 1) as f64;
            let decrease = parent - n_l * gini(left) - n_r * gini(right);
            if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                best = Some(Best {
                    feature: f,
                    threshold: lo + (hi - lo) / 2.0,
                    decrease,
                });
            }
        }
    }
    best
}

fn grow(
    x: &[Vec<f64>],
    y: &[bool],
    sample: Vec<usize>,
    mtry: usize,
    rng: &mut ChaCha8Rng,
    importance: &mut [f64],
) -> Tree {
    let k = importance.len();
    let all: Vec<usize> = (0..k).collect();
    let mut nodes = vec![Node::Leaf { counts: [0, 0] }];
    let mut stack = vec![(0usize, sample)];
    while let Some((slot, idx)) = stack.pop() {
        let counts = class_counts(&idx, y);
        if idx.len() < 2 || counts[0] == 0 || counts[1] == 0 {
            nodes[slot] = Node::Leaf { counts };
            continue;
        }
        let mut tried: Vec<usize> = index::sample(rng, k, mtry.min(k)).into_vec();
        tried.sort_unstable();
        // fall back to every feature when the drawn ones are constant here
        let Some(split) = best_split(x, y, &idx, &tried).or_else(|| best_split(x, y, &idx, &all)) else {
            nodes[slot] = Node::Leaf { counts };
            continue;
        };
        importance[split.feature] += split.decrease.max(0.0);
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][split.feature] <= split.threshold);
        let left = nodes.len();
        nodes.push(Node::Leaf { counts: [0, 0] });
        nodes.push(Node::Leaf { counts: [0, 0] });
        nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right: left + 1,
        };
        stack.push((left + 1, r));
        stack.push((left, l));
    }
    Tree { nodes }
}

/// Bootstrap-aggregated CART trees grown until leaves are pure or hold
/// fewer than two samples. Each tree draws from its own seed stream.
pub fn fit_forest(x: &[Vec<f64>], y: &[bool], config: &ForestConfig) -> Result<ForestModel> {
    if x.len() != y.len() {
        return Err(Error::Input(format!("{} feature rows for {} labels", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Input(format!("{} samples; need at least 2", x.len())));
    }
    let k = x[0].len();
    if k == 0 || x.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidShape("feature rows must share a positive length".into()));
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::DegenerateLabel("training labels contain a single class".into()));
    }
    if config.n_trees == 0 {
        return Err(Error::Config("n_trees must be ≥ 1".into()));
    }
    let mtry = config.mtry.unwrap_or_else(|| (k as f64).sqrt().ceil() as usize).clamp(1, k);
    let n = x.len();
    let grown: Vec<(Tree, Vec<f64>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::derive(seed::derive(config.seed, seed::stream::FOREST), t as u64));
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut imp = vec![0.0; k];
            let tree = grow(x, y, sample, mtry, &mut rng, &mut imp);
            (tree, imp)
        })
        .collect();
    let mut importance = vec![0.0; k];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, imp) in grown {
        for (acc, v) in importance.iter_mut().zip(imp) {
            *acc += v;
        }
        trees.push(tree);
    }
    let total: f64 = importance.iter().sum();
    if total > 0.0 {
        importance.iter_mut().for_each(|v| *v /= total);
    }
    Ok(ForestModel { trees, importance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> (Vec<Vec<f64>>, Vec<bool>) {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![0.3, i as f64, 1.0]).collect();
        let y = (0..12).map(|i| i >= 6).collect();
        (x, y)
    }

    #[test]
    fn single_informative_feature_takes_all_importance() {
        let (x, y) = separable();
        let f = fit_forest(&x, &y, &ForestConfig::default()).unwrap();
        assert_eq!(f.importance, vec![0.0, 1.0, 0.0]);
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(f.predict(xi), yi);
        }
    }

    #[test]
    fn single_class_rejected() {
        let (x, _) = separable();
        let y = vec![true; 12];
        assert!(matches!(
            fit_forest(&x, &y, &ForestConfig::default()),
            Err(Error::DegenerateLabel(_))
        ));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let mut rng = seed::rng(4);
        let x: Vec<Vec<f64>> = (0..30).map(|_| (0..5).map(|_| rng.random()).collect()).collect();
        let y: Vec<bool> = x.iter().map(|r| r[0] + 0.3 * r[2] > 0.6).collect();
        let c = ForestConfig {
            seed: 11,
            ..ForestConfig::default()
        };
        let a = fit_forest(&x, &y, &c).unwrap();
        assert_eq!(a, fit_forest(&x, &y, &c).unwrap());
        assert!((a.importance.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn midpoint_threshold_and_tie_rule() {
        // features 0 and 1 separate equally well; the lower index wins
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
        let y = vec![false, false, true, true];
        let b = best_split(&x, &y, &[0, 1, 2, 3], &[0, 1]).unwrap();
        assert_eq!((b.feature, b.threshold), (0, 1.5));
        assert!((b.decrease - 2.0).abs() < 1e-12);
    }
}
