use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::neural::softmax;

/// A model usable in the ML-utility evaluation.
pub trait ClassifierPlugin: Send {
    fn name(&self) -> &str;

    /// Fits on a numeric feature matrix and class indices in `0..n_classes`.
    fn fit(&mut self, features: &Array2<f64>, labels: &[usize], n_classes: usize) -> Result<()>;

    /// Class probabilities, one row per input row, each summing to 1.
    fn predict_proba(&self, features: &Array2<f64>) -> Result<Array2<f64>>;
}

fn check_training(features: &Array2<f64>, labels: &[usize], n_classes: usize) -> Result<()> {
    if features.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l >= n_classes) {
        return Err(Error::InvalidArgument(
            "label outside the class range".into(),
        ));
    }
    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        return Err(Error::InvalidTarget(
            "training data holds a single class".into(),
        ));
    }
    Ok(())
}

/// Multinomial logistic regression fitted by full-batch gradient descent.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    pub max_iter: usize,
    pub tol: f64,
    weights: Option<Array2<f64>>,
    bias: Option<Array1<f64>>,
    iterations: usize,
}

impl Default for LogisticRegression {
    fn default() -> Self {
        LogisticRegression {
            max_iter: 5000,
            tol: 1e-5,
            weights: None,
            bias: None,
            iterations: 0,
        }
    }
}

impl LogisticRegression {
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    fn probabilities(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
        let mut z = x.dot(w);
        z += b;
        for mut row in z.outer_iter_mut() {
            let p = softmax(row.as_slice().expect("standard layout"));
            row.assign(&Array1::from(p));
        }
        z
    }
}

impl ClassifierPlugin for LogisticRegression {
    fn name(&self) -> &str {
        "logistic_regression"
    }

    fn fit(&mut self, x: &Array2<f64>, labels: &[usize], n_classes: usize) -> Result<()> {
        check_training(x, labels, n_classes)?;
        let n = x.nrows() as f64;
        let d = x.ncols();
        // 1/L for the softmax loss: L ≤ ½·mean‖[x, 1]‖²
        let mean_sq = x.mapv(|v| v * v).sum() / n + 1.0;
        let lr = 2.0 / mean_sq;
        let mut w = Array2::<f64>::zeros((d, n_classes));
        let mut b = Array1::<f64>::zeros(n_classes);
        let mut onehot = Array2::<f64>::zeros((labels.len(), n_classes));
        for (r, &l) in labels.iter().enumerate() {
            onehot[[r, l]] = 1.0;
        }
        self.iterations = self.max_iter;
        for it in 0..self.max_iter {
            let p = Self::probabilities(x, &w, &b);
            let err = (p - &onehot) / n;
            let gw = x.t().dot(&err);
            let gb = err.sum_axis(Axis(0));
            let norm = (gw.mapv(|v| v * v).sum() + gb.mapv(|v| v * v).sum()).sqrt();
            if norm < self.tol {
                self.iterations = it;
                break;
            }
            w.scaled_add(-lr, &gw);
            b.scaled_add(-lr, &gb);
        }
        if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logistic regression weights".into()));
        }
        self.weights = Some(w);
        self.bias = Some(b);
        Ok(())
    }

    fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let (Some(w), Some(b)) = (&self.weights, &self.bias) else {
            return Err(Error::InvalidArgument("model is not fitted".into()));
        };
        if x.ncols() != w.nrows() {
            return Err(Error::Shape("feature width differs from training".into()));
        }
        Ok(Self::probabilities(x, w, b))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<f64>),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// CART classification tree with Gini impurity.
#[derive(Debug, Clone)]
pub struct DecisionTree {
    pub max_depth: usize,
    pub min_samples_split: usize,
    root: Option<Node>,
    n_classes: usize,
}

impl Default for DecisionTree {
    fn default() -> Self {
        DecisionTree {
            max_depth: 12,
            min_samples_split: 2,
            root: None,
            n_classes: 0,
        }
    }
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

impl DecisionTree {
    fn leaf(&self, labels: &[usize], rows: &[usize]) -> Node {
        let mut p = vec![0.0; self.n_classes];
        for &r in rows {
            p[labels[r]] += 1.0;
        }
        let n = rows.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        Node::Leaf(p)
    }

    fn grow(&self, x: &Array2<f64>, labels: &[usize], rows: Vec<usize>, depth: usize) -> Node {
        let mut counts = vec![0usize; self.n_classes];
        for &r in &rows {
            counts[labels[r]] += 1;
        }
        let parent = gini(&counts, rows.len());
        if depth >= self.max_depth || rows.len() < self.min_samples_split || parent == 0.0 {
            return self.leaf(labels, &rows);
        }
        let n = rows.len();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = rows.clone();
        for f in 0..x.ncols() {
            order.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]));
            let mut left = vec![0usize; self.n_classes];
            let mut right = counts.clone();
            for i in 0..n - 1 {
                let l = labels[order[i]];
                left[l] += 1;
                right[l] -= 1;
                let (v, next) = (x[[order[i], f]], x[[order[i + 1], f]]);
                if v == next {
                    continue;
                }
                let nl = i + 1;
                let score = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl))
                    / n as f64;
                if best.is_none_or(|(s, _, _)| score < s - 1e-12) {
                    best = Some((score, f, 0.5 * (v + next)));
                }
            }
        }
        match best {
            Some((score, feature, threshold)) if score < parent - 1e-12 => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| x[[i, feature]] <= threshold);
                Node::Split {
                    feature,
                    threshold,
                    left: Box::new(self.grow(x, labels, l, depth + 1)),
                    right: Box::new(self.grow(x, labels, r, depth + 1)),
                }
            }
            _ => self.leaf(labels, &rows),
        }
    }

    pub fn depth(&self) -> usize {
        fn d(n: &Node) -> usize {
            match n {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + d(left).max(d(right)),
            }
        }
        self.root.as_ref().map_or(0, d)
    }
}

impl ClassifierPlugin for DecisionTree {
    fn name(&self) -> &str {
        "decision_tree"
    }

    fn fit(&mut self, x: &Array2<f64>, labels: &[usize], n_classes: usize) -> Result<()> {
        check_training(x, labels, n_classes)?;
        self.n_classes = n_classes;
        self.root = Some(self.grow(x, labels, (0..x.nrows()).collect(), 0));
        Ok(())
    }

    fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let Some(root) = &self.root else {
            return Err(Error::InvalidArgument("model is not fitted".into()));
        };
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        for (r, row) in x.outer_iter().enumerate() {
            let mut node = root;
            loop {
                match node {
                    Node::Leaf(p) => {
                        out.row_mut(r).assign(&Array1::from(p.clone()));
                        break;
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        node = if row[*feature] <= *threshold {
                            left
                        } else {
                            right
                        };
                    }
                }
            }
        }
        Ok(out)
    }
}

pub fn builtin_plugins() -> Vec<Box<dyn ClassifierPlugin>> {
    vec![
        Box::new(LogisticRegression::default()),
        Box::new(DecisionTree::default()),
    ]
}
