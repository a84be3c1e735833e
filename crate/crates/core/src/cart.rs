//! CART classification trees over numeric attributes, and their rendering
//! as textual decision rules.
//!
//! Splits are binary `attribute <= threshold` tests chosen by Gini impurity
//! decrease, with thresholds at midpoints between consecutive distinct
//! values. Instances missing the candidate attribute do not take part in
//! that attribute's split evaluation; the gain is scaled by the fraction of
//! instances that carry the attribute. At split time and at prediction
//! time, a missing attribute routes to the child holding more training
//! instances (ties go left).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

/// Gains closer than this are treated as equal so ties resolve by
/// attribute name and threshold rather than by rounding noise.
const GAIN_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub features: BTreeMap<String, f64>,
    pub label: String,
    pub seq: u64,
}

impl TrainingInstance {
    pub fn new(features: BTreeMap<String, f64>, label: impl Into<String>, seq: u64) -> Self {
        Self {
            features,
            label: label.into(),
            seq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub min_gain: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_leaf: 5,
            min_gain: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub attribute: String,
    pub threshold: f64,
    pub gain: f64,
}

pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Best single split of `instances`, or `None` when no split decreases
/// impurity.
pub fn best_split(instances: &[TrainingInstance]) -> Option<Split> {
    let refs: Vec<&TrainingInstance> = instances.iter().collect();
    let classes = class_list(&refs);
    find_split(&refs, &classes, 1)
}

fn class_list(instances: &[&TrainingInstance]) -> Vec<String> {
    instances
        .iter()
        .map(|i| i.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn class_index(classes: &[String], label: &str) -> usize {
    classes
        .binary_search_by(|c| c.as_str().cmp(label))
        .expect("label missing from class list")
}

fn find_split(
    instances: &[&TrainingInstance],
    classes: &[String],
    min_leaf: usize,
) -> Option<Split> {
    let total = instances.len();
    if total < 2 {
        return None;
    }
    let attributes: BTreeSet<&str> = instances
        .iter()
        .flat_map(|i| i.features.keys().map(String::as_str))
        .collect();

    let mut best: Option<Split> = None;
    let mut values: Vec<(f64, usize)> = Vec::with_capacity(total);
    for attr in attributes {
        values.clear();
        values.extend(instances.iter().filter_map(|i| {
            i.features
                .get(attr)
                .map(|&v| (v, class_index(classes, &i.label)))
        }));
        let present = values.len();
        if present < 2 * min_leaf.max(1) {
            continue;
        }
        values.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut right = vec![0usize; classes.len()];
        for &(_, c) in &values {
            right[c] += 1;
        }
        let parent = gini(&right);
        if parent == 0.0 {
            continue;
        }
        let weight = present as f64 / total as f64;
        let mut left = vec![0usize; classes.len()];
        for i in 0..present - 1 {
            let (v, c) = values[i];
            left[c] += 1;
            right[c] -= 1;
            let next = values[i + 1].0;
            if v >= next {
                continue;
            }
            let n_left = i + 1;
            let n_right = present - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let child =
                (n_left as f64 * gini(&left) + n_right as f64 * gini(&right)) / present as f64;
            let gain = weight * (parent - child);
            if gain > best.as_ref().map_or(GAIN_TIE, |b| b.gain + GAIN_TIE) {
                best = Some(Split {
                    attribute: attr.to_string(),
                    threshold: midpoint(v, next),
                    gain,
                });
            }
        }
    }
    best
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        attribute: String,
        threshold: f64,
        samples: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        counts: Vec<usize>,
    },
}

impl TreeNode {
    pub fn samples(&self) -> usize {
        match self {
            TreeNode::Split { samples, .. } => *samples,
            TreeNode::Leaf { counts } => counts.iter().sum(),
        }
    }

    fn depth(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
            TreeNode::Leaf { .. } => 0,
        }
    }

    fn leaves(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
            TreeNode::Leaf { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<'a> {
    pub class: &'a str,
    /// Majority fraction of the leaf reached.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub classes: Vec<String>,
    pub trained_on: usize,
}

impl DecisionTree {
    /// Grows a tree on `instances`; `None` when there are none.
    pub fn fit(instances: &[TrainingInstance], config: &TreeConfig) -> Option<Self> {
        if instances.is_empty() {
            return None;
        }
        let refs: Vec<&TrainingInstance> = instances.iter().collect();
        let classes = class_list(&refs);
        let root = grow(refs, &classes, config, 0);
        Some(Self {
            root,
            classes,
            trained_on: instances.len(),
        })
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaves()
    }

    fn leaf_for<'t>(&'t self, features: &BTreeMap<String, f64>) -> &'t [usize] {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { counts } => return counts,
                TreeNode::Split {
                    attribute,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = match features.get(attribute) {
                        Some(&v) if v <= *threshold => left,
                        Some(_) => right,
                        None if right.samples() > left.samples() => right,
                        None => left,
                    };
                }
            }
        }
    }

    pub fn predict(&self, features: &BTreeMap<String, f64>) -> Prediction<'_> {
        let counts = self.leaf_for(features);
        let (idx, max) = majority(counts);
        let n: usize = counts.iter().sum();
        Prediction {
            class: &self.classes[idx],
            confidence: if n == 0 { 0.0 } else { max as f64 / n as f64 },
        }
    }

    /// Class counts of the leaf `features` is routed to.
    pub fn leaf_counts(&self, features: &BTreeMap<String, f64>) -> &[usize] {
        self.leaf_for(features)
    }

    pub fn rules(&self) -> RuleSet {
        RuleSet::from_tree(self)
    }

    pub fn training_accuracy(&self, instances: &[TrainingInstance]) -> f64 {
        if instances.is_empty() {
            return 0.0;
        }
        let hits = instances
            .iter()
            .filter(|i| self.predict(&i.features).class == i.label)
            .count();
        hits as f64 / instances.len() as f64
    }
}

/// Index and count of the largest entry; ties go to the lowest index.
fn majority(counts: &[usize]) -> (usize, usize) {
    counts.iter().enumerate().fold(
        (0, 0),
        |best, (i, &c)| if c > best.1 { (i, c) } else { best },
    )
}

fn grow(
    instances: Vec<&TrainingInstance>,
    classes: &[String],
    config: &TreeConfig,
    depth: usize,
) -> TreeNode {
    let mut counts = vec![0usize; classes.len()];
    for i in &instances {
        counts[class_index(classes, &i.label)] += 1;
    }
    let n = instances.len();
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if depth >= config.max_depth || n < 2 * config.min_leaf || pure {
        return TreeNode::Leaf { counts };
    }
    let split = match find_split(&instances, classes, config.min_leaf) {
        Some(s) if s.gain >= config.min_gain => s,
        _ => return TreeNode::Leaf { counts },
    };

    let (mut left, mut right, mut missing) = (Vec::new(), Vec::new(), Vec::new());
    for inst in instances {
        match inst.features.get(&split.attribute) {
            Some(&v) if v <= split.threshold => left.push(inst),
            Some(_) => right.push(inst),
            None => missing.push(inst),
        }
    }
    if right.len() > left.len() {
        right.extend(missing);
    } else {
        left.extend(missing);
    }
    let left = grow(left, classes, config, depth + 1);
    let right = grow(right, classes, config, depth + 1);
    // Both sides conclude the same class: the split only adds rule noise.
    if let (TreeNode::Leaf { counts: l }, TreeNode::Leaf { counts: r }) = (&left, &right) {
        let class = majority(l).0;
        if majority(r).0 == class && majority(&counts).0 == class {
            return TreeNode::Leaf { counts };
        }
    }
    TreeNode::Split {
        attribute: split.attribute,
        threshold: split.threshold,
        samples: n,
        left: Box::new(left),
        right: Box::new(right),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Le => "<=",
            Op::Gt => ">",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub attribute: String,
    pub op: Op,
    pub value: f64,
}

impl Condition {
    pub fn holds(&self, features: &BTreeMap<String, f64>) -> bool {
        match (features.get(&self.attribute), self.op) {
            (Some(&v), Op::Le) => v <= self.value,
            (Some(&v), Op::Gt) => v > self.value,
            (None, _) => false,
        }
    }
}

/// One root-to-leaf path, with conditions on the same attribute merged to
/// the tightest bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub conditions: Vec<Condition>,
    pub class: String,
    pub support: usize,
}

impl Rule {
    pub fn matches(&self, features: &BTreeMap<String, f64>) -> bool {
        self.conditions.iter().all(|c| c.holds(features))
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("IF ")?;
        if self.conditions.is_empty() {
            f.write_str("true")?;
        }
        for (i, c) in self.conditions.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{} {} {:.2}", c.attribute, c.op, c.value)?;
        }
        write!(f, " THEN {}", self.class)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn from_tree(tree: &DecisionTree) -> Self {
        let mut rules = Vec::new();
        let mut path = Vec::new();
        collect_rules(&tree.root, &tree.classes, &mut path, &mut rules);
        Self { rules }
    }

    /// Class of the first rule whose conditions all hold.
    pub fn classify(&self, features: &BTreeMap<String, f64>) -> Option<&str> {
        self.rules
            .iter()
            .find(|r| r.matches(features))
            .map(|r| r.class.as_str())
    }

    /// Rules grouped by the class they conclude.
    pub fn by_class(&self) -> BTreeMap<&str, Vec<&Rule>> {
        let mut out: BTreeMap<&str, Vec<&Rule>> = BTreeMap::new();
        for r in &self.rules {
            out.entry(r.class.as_str()).or_default().push(r);
        }
        out
    }

    pub fn classes(&self) -> BTreeSet<&str> {
        self.rules.iter().map(|r| r.class.as_str()).collect()
    }

    pub fn attributes(&self) -> BTreeSet<&str> {
        self.rules
            .iter()
            .flat_map(|r| r.conditions.iter().map(|c| c.attribute.as_str()))
            .collect()
    }

    /// Every distinct bound used on `attribute`, ascending.
    pub fn thresholds(&self, attribute: &str) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .rules
            .iter()
            .flat_map(|r| r.conditions.iter())
            .filter(|c| c.attribute == attribute)
            .map(|c| c.value)
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.rules {
            let _ = writeln!(s, "{r}");
        }
        s
    }
}

fn collect_rules<'a>(
    node: &'a TreeNode,
    classes: &[String],
    path: &mut Vec<(&'a str, Op, f64)>,
    out: &mut Vec<Rule>,
) {
    match node {
        TreeNode::Leaf { counts } => {
            let (idx, _) = majority(counts);
            out.push(Rule {
                conditions: merge_path(path),
                class: classes[idx].clone(),
                support: counts.iter().sum(),
            });
        }
        TreeNode::Split {
            attribute,
            threshold,
            left,
            right,
            ..
        } => {
            path.push((attribute, Op::Le, *threshold));
            collect_rules(left, classes, path, out);
            path.pop();
            path.push((attribute, Op::Gt, *threshold));
            collect_rules(right, classes, path, out);
            path.pop();
        }
    }
}

fn merge_path(path: &[(&str, Op, f64)]) -> Vec<Condition> {
    let mut order: Vec<&str> = Vec::new();
    let mut lower: BTreeMap<&str, f64> = BTreeMap::new();
    let mut upper: BTreeMap<&str, f64> = BTreeMap::new();
    for &(attr, op, v) in path {
        if !order.contains(&attr) {
            order.push(attr);
        }
        match op {
            Op::Gt => {
                let e = lower.entry(attr).or_insert(v);
                *e = e.max(v);
            }
            Op::Le => {
                let e = upper.entry(attr).or_insert(v);
                *e = e.min(v);
            }
        }
    }
    let mut out = Vec::new();
    for attr in order {
        if let Some(&v) = lower.get(attr) {
            out.push(Condition {
                attribute: attr.to_string(),
                op: Op::Gt,
                value: v,
            });
        }
        if let Some(&v) = upper.get(attr) {
            out.push(Condition {
                attribute: attr.to_string(),
                op: Op::Le,
                value: v,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn inst(pairs: &[(&str, f64)], label: &str) -> TrainingInstance {
        TrainingInstance::new(
            pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            label,
            0,
        )
    }

    /// Exhaustive search that recomputes every candidate from scratch.
    fn brute_force_split(data: &[TrainingInstance]) -> Option<(String, f64, f64)> {
        let attrs: BTreeSet<&String> = data.iter().flat_map(|i| i.features.keys()).collect();
        let labels: BTreeSet<&String> = data.iter().map(|i| &i.label).collect();
        let g = |set: &[&TrainingInstance]| -> f64 {
            if set.is_empty() {
                return 0.0;
            }
            let n = set.len() as f64;
            1.0 - labels
                .iter()
                .map(|l| (set.iter().filter(|i| &&i.label == l).count() as f64 / n).powi(2))
                .sum::<f64>()
        };
        let mut best: Option<(String, f64, f64)> = None;
        for a in attrs {
            let present: Vec<&TrainingInstance> =
                data.iter().filter(|i| i.features.contains_key(a)).collect();
            let mut vals: Vec<f64> = present.iter().map(|i| i.features[a]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = midpoint(w[0], w[1]);
                let (l, r): (Vec<_>, Vec<_>) = present.iter().partition(|i| i.features[a] <= t);
                let n = present.len() as f64;
                let gain = (n / data.len() as f64)
                    * (g(&present) - (l.len() as f64 / n) * g(&l) - (r.len() as f64 / n) * g(&r));
                let better = match &best {
                    None => gain > GAIN_TIE,
                    Some(b) => gain > b.2 + GAIN_TIE,
                };
                if better {
                    best = Some((a.clone(), t, gain));
                }
            }
        }
        best
    }

    #[test]
    fn four_point_example() {
        let data = vec![
            inst(&[("x", 1.0)], "A"),
            inst(&[("x", 2.0)], "A"),
            inst(&[("x", 3.0)], "B"),
            inst(&[("x", 4.0)], "B"),
        ];
        // candidates 1.5, 2.5, 3.5 give gains 1/6, 1/2, 1/6
        let s = best_split(&data).unwrap();
        assert_eq!(s.attribute, "x");
        assert_eq!(s.threshold, 2.5);
        assert!((s.gain - 0.5).abs() < 1e-12);
        assert_eq!(
            brute_force_split(&data).map(|b| (b.0, b.1)),
            Some(("x".to_string(), 2.5))
        );
    }

    #[test]
    fn identical_labels_no_split() {
        let data: Vec<_> = (0..10).map(|i| inst(&[("x", i as f64)], "A")).collect();
        assert!(best_split(&data).is_none());
    }

    #[test]
    fn tie_prefers_lower_attribute_name() {
        let data = vec![
            inst(&[("b", 1.0), ("a", 1.0)], "A"),
            inst(&[("b", 2.0), ("a", 2.0)], "B"),
        ];
        let s = best_split(&data).unwrap();
        assert_eq!(s.attribute, "a");
    }

    #[test]
    fn single_instance_tree_is_leaf() {
        let tree =
            DecisionTree::fit(&[inst(&[("x", 3.0)], "Only")], &TreeConfig::default()).unwrap();
        assert_eq!(tree.leaf_count(), 1);
        let p = tree.predict(&BTreeMap::new());
        assert_eq!(p.class, "Only");
        assert_eq!(p.confidence, 1.0);
        assert_eq!(tree.rules().to_text(), "IF true THEN Only\n");
    }

    #[test]
    fn empty_input_has_no_tree() {
        assert!(DecisionTree::fit(&[], &TreeConfig::default()).is_none());
    }

    fn loan_data(n: usize, seed: u64) -> Vec<TrainingInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let amt = rng.gen_range(10_000..=120_000) as f64;
                let label = if amt <= 80_000.0 {
                    "Normal"
                } else {
                    "Extensive"
                };
                inst(
                    &[("amount_loan", amt), ("age", rng.gen_range(18..=75) as f64)],
                    label,
                )
            })
            .collect()
    }

    #[test]
    fn loan_rule_recovered() {
        let data = loan_data(200, 1);
        let s = best_split(&data).unwrap();
        assert_eq!(s.attribute, "amount_loan");
        assert!((s.threshold - 80_000.0).abs() < 2_000.0);
        let tree = DecisionTree::fit(&data, &TreeConfig::default()).unwrap();
        assert_eq!(tree.training_accuracy(&data), 1.0);
        let mut f = BTreeMap::new();
        f.insert("amount_loan".to_string(), 90_000.0);
        assert_eq!(tree.predict(&f).class, "Extensive");
        let rules = tree.rules();
        assert_eq!(rules.rules.len(), 2);
        let text = rules.to_text();
        let t = s.threshold;
        assert_eq!(
            text,
            format!(
                "IF amount_loan <= {t:.2} THEN Normal\nIF amount_loan > {t:.2} THEN Extensive\n"
            )
        );
    }

    #[test]
    fn three_class_rule_merges_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<_> = (0..300)
            .map(|_| {
                let amt = rng.gen_range(10_000..=120_000) as f64;
                let label = if amt <= 30_000.0 {
                    "Simple"
                } else if amt <= 70_000.0 {
                    "Normal"
                } else {
                    "Extensive"
                };
                inst(&[("amount_loan", amt)], label)
            })
            .collect();
        let tree = DecisionTree::fit(&data, &TreeConfig::default()).unwrap();
        assert_eq!(tree.depth(), 2);
        assert_eq!(tree.leaf_count(), 3);
        let rules = tree.rules();
        let normal = rules.by_class()["Normal"][0].to_string();
        assert!(normal.starts_with("IF amount_loan > 3"), "{normal}");
        assert!(normal.contains(" AND amount_loan <= "), "{normal}");
        let th = rules.thresholds("amount_loan");
        assert!(th.iter().any(|t| (t - 30_000.0).abs() < 2_000.0));
        assert!(th.iter().any(|t| (t - 70_000.0).abs() < 2_000.0));
    }

    #[test]
    fn missing_attribute_routes_to_larger_child() {
        let data = loan_data(200, 2);
        let tree = DecisionTree::fit(&data, &TreeConfig::default()).unwrap();
        // roughly 64% of the uniform range lies at or below 80 000
        let p = tree.predict(&BTreeMap::new());
        assert_eq!(p.class, "Normal");
        assert_eq!(tree.predict(&BTreeMap::new()), p);
    }

    #[test]
    fn missing_values_are_excluded_from_split_evaluation() {
        // `income` is informative but present on only half of the rows.
        let mut data = Vec::new();
        for i in 0..40 {
            let mut f = vec![("amount_loan", 50_000.0 + i as f64)];
            let label = if i % 2 == 0 { "Normal" } else { "Extensive" };
            if i < 20 {
                f.push(("income", if i % 2 == 0 { 4_000.0 } else { 2_000.0 }));
            }
            data.push(inst(&f, label));
        }
        let s = best_split(&data).unwrap();
        assert_eq!(s.attribute, "income");
        assert_eq!(s.threshold, 3_000.0);
        // scaled by the 50% presence
        assert!((s.gain - 0.25).abs() < 1e-12);
    }

    #[test]
    fn fit_beats_single_split_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<_> = (0..200)
            .map(|_| {
                let x: f64 = rng.gen();
                let y: f64 = rng.gen();
                let label = if (x > 0.5) ^ (y > 0.3) { "P" } else { "Q" };
                inst(&[("x", x), ("y", y)], label)
            })
            .collect();
        let s = best_split(&data).unwrap();
        let stump_acc = {
            let side = |left: bool| {
                let mut c: BTreeMap<&str, usize> = BTreeMap::new();
                for i in &data {
                    if (i.features[&s.attribute] <= s.threshold) == left {
                        *c.entry(&i.label).or_default() += 1;
                    }
                }
                c.values().copied().max().unwrap_or(0)
            };
            (side(true) + side(false)) as f64 / data.len() as f64
        };
        let tree = DecisionTree::fit(&data, &TreeConfig::default()).unwrap();
        assert!(tree.training_accuracy(&data) >= stump_acc);
    }

    #[test]
    fn leaves_sum_to_samples() {
        fn check(n: &TreeNode) {
            if let TreeNode::Split {
                samples,
                left,
                right,
                threshold,
                ..
            } = n
            {
                assert!(threshold.is_finite());
                assert_eq!(*samples, left.samples() + right.samples());
                check(left);
                check(right);
            }
        }
        let tree = DecisionTree::fit(&loan_data(150, 9), &TreeConfig::default()).unwrap();
        check(&tree.root);
        assert_eq!(tree.root.samples(), tree.trained_on);
    }

    #[test]
    fn tree_json_round_trip() {
        let tree = DecisionTree::fit(&loan_data(60, 4), &TreeConfig::default()).unwrap();
        let json = serde_json::to_string(&tree).unwrap();
        let back: DecisionTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tree);
    }

    fn arb_dataset() -> impl Strategy<Value = Vec<TrainingInstance>> {
        (1usize..=3, 2usize..=200).prop_flat_map(|(attrs, n)| {
            prop::collection::vec(
                (
                    prop::collection::vec(
                        prop_oneof![(0i32..20).prop_map(f64::from), -50.0f64..50.0],
                        attrs,
                    ),
                    0usize..3,
                ),
                n,
            )
            .prop_map(|rows| {
                rows.into_iter()
                    .map(|(vals, c)| {
                        let features = vals
                            .into_iter()
                            .enumerate()
                            .map(|(i, v)| (format!("f{i}"), v))
                            .collect();
                        TrainingInstance::new(features, ["A", "B", "C"][c], 0)
                    })
                    .collect()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]

        #[test]
        fn best_split_matches_exhaustive(data in arb_dataset()) {
            let fast = best_split(&data);
            let slow = brute_force_split(&data);
            match (fast, slow) {
                (None, None) => {}
                (Some(f), Some(s)) => {
                    prop_assert_eq!(f.attribute, s.0);
                    prop_assert_eq!(f.threshold, s.1);
                    prop_assert!((f.gain - s.2).abs() < 1e-9);
                }
                (f, s) => prop_assert!(false, "fast {:?} vs slow {:?}", f, s),
            }
        }

        #[test]
        fn rules_agree_with_predict(data in arb_dataset(), probes in prop::collection::vec(prop::collection::vec(-60.0f64..60.0, 3), 50)) {
            let tree = DecisionTree::fit(&data, &TreeConfig { min_leaf: 1, ..TreeConfig::default() }).unwrap();
            let rules = tree.rules();
            let width = data[0].features.len();
            for p in probes {
                let f: BTreeMap<String, f64> = p.into_iter().take(width).enumerate()
                    .map(|(i, v)| (format!("f{i}"), v)).collect();
                prop_assert_eq!(rules.classify(&f), Some(tree.predict(&f).class));
            }
        }

        #[test]
        fn training_instances_land_in_their_leaf(data in arb_dataset()) {
            // Re-routing the training set with predict reproduces every
            // leaf's stored class distribution.
            let tree = DecisionTree::fit(&data, &TreeConfig::default()).unwrap();
            let mut routed: BTreeMap<*const usize, Vec<usize>> = BTreeMap::new();
            for i in &data {
                let leaf = tree.leaf_counts(&i.features);
                let e = routed.entry(leaf.as_ptr()).or_insert_with(|| vec![0; tree.classes.len()]);
                e[class_index(&tree.classes, &i.label)] += 1;
            }
            for i in &data {
                let leaf = tree.leaf_counts(&i.features);
                prop_assert_eq!(&routed[&leaf.as_ptr()][..], leaf);
            }
        }

        #[test]
        fn fitting_is_deterministic(data in arb_dataset()) {
            let a = DecisionTree::fit(&data, &TreeConfig::default()).unwrap().rules().to_text();
            let b = DecisionTree::fit(&data, &TreeConfig::default()).unwrap().rules().to_text();
            prop_assert_eq!(a, b);
        }
    }
}
