use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::DataTable;
use crate::error::{Error, Result};

pub const RIDGE: f64 = 1e-8;

/// Directed acyclic graph over named variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dag {
    pub nodes: Vec<String>,
    /// `(from, to)` node indices.
    pub edges: BTreeSet<(usize, usize)>,
    /// BIC contribution per node, when scored.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub node_scores: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DagFile {
    nodes: Vec<String>,
    edges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_scores: Option<Vec<f64>>,
}

impl Dag {
    pub fn empty(nodes: Vec<String>) -> Self {
        Self {
            nodes,
            edges: BTreeSet::new(),
            node_scores: Vec::new(),
        }
    }

    /// Builds a DAG from named edges, rejecting unknown names and cycles.
    pub fn from_named_edges(nodes: Vec<String>, edges: &[(String, String)]) -> Result<Self> {
        let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        if index.len() != nodes.len() {
            return Err(Error::invalid("duplicate node name"));
        }
        let mut dag = Self::empty(nodes.clone());
        for (a, b) in edges {
            let i = *index.get(a.as_str()).ok_or_else(|| Error::UnknownReference(a.clone()))?;
            let j = *index.get(b.as_str()).ok_or_else(|| Error::UnknownReference(b.clone()))?;
            if i == j {
                return Err(Error::Cycle(vec![a.clone(), a.clone()]));
            }
            dag.edges.insert((i, j));
        }
        if let Some(cycle) = dag.find_cycle() {
            return Err(Error::Cycle(cycle.iter().map(|&i| nodes[i].clone()).collect()));
        }
        Ok(dag)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn parents(&self, j: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == j).map(|e| e.0).collect()
    }

    /// True when a directed path leads from `from` to `to`.
    pub fn has_path(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(self.edges.range((v, 0)..(v + 1, 0)).map(|e| e.1));
        }
        false
    }

    /// One directed cycle as a closed node sequence, if any exists.
    pub fn find_cycle(&self) -> Option<Vec<usize>> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let n = self.len();
        let mut state = vec![0u8; n];
        let mut path = Vec::new();
        fn visit(d: &Dag, v: usize, state: &mut [u8], path: &mut Vec<usize>) -> Option<Vec<usize>> {
            state[v] = 1;
            path.push(v);
            for &(_, w) in d.edges.range((v, 0)..(v + 1, 0)) {
                if state[w] == 1 {
                    let start = path.iter().position(|&p| p == w).unwrap_or(0);
                    let mut cycle = path[start..].to_vec();
                    cycle.push(w);
                    return Some(cycle);
                }
                if state[w] == 0 {
                    if let Some(c) = visit(d, w, state, path) {
                        return Some(c);
                    }
                }
            }
            path.pop();
            state[v] = 2;
            None
        }
        for v in 0..n {
            if state[v] == 0 {
                if let Some(c) = visit(self, v, &mut state, &mut path) {
                    return Some(c);
                }
            }
        }
        None
    }

    /// Parents-first ordering; errors on a cycle.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.len();
        let mut indeg = vec![0; n];
        for &(_, j) in &self.edges {
            indeg[j] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut out = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            out.push(v);
            for &(_, w) in self.edges.range((v, 0)..(v + 1, 0)) {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.insert(w);
                }
            }
        }
        if out.len() < n {
            let cycle = self.find_cycle().unwrap_or_default();
            return Err(Error::Cycle(cycle.iter().map(|&i| self.nodes[i].clone()).collect()));
        }
        Ok(out)
    }

    /// Undirected edge set.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect()
    }

    pub fn named_edges(&self) -> Vec<(String, String)> {
        self.edges
            .iter()
            .map(|&(a, b)| (self.nodes[a].clone(), self.nodes[b].clone()))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let f = DagFile {
            nodes: self.nodes.clone(),
            edges: self.named_edges(),
            node_scores: (!self.node_scores.is_empty()).then(|| self.node_scores.clone()),
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: DagFile = serde_json::from_str(text)?;
        let mut dag = Self::from_named_edges(f.nodes, &f.edges)?;
        dag.node_scores = f.node_scores.unwrap_or_default();
        Ok(dag)
    }

    /// The same graph with its nodes reordered: node `i` becomes `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut nodes = vec![String::new(); self.len()];
        for (i, &p) in perm.iter().enumerate() {
            nodes[p] = self.nodes[i].clone();
        }
        Self {
            nodes,
            edges: self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect(),
            node_scores: Vec::new(),
        }
    }
}

/// Reads `{"nodes": [...], "edges": [["a", "b"], ...]}`.
pub fn import_dag(path: &Path) -> Result<Dag> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dag::from_json(&text)
}

/// Least-squares fit of column `j` on `parents` plus an intercept.
struct LocalFit {
    intercept: f64,
    coefficients: Vec<f64>,
    variance: f64,
}

fn fit_local(data: &DataTable, j: usize, parents: &[usize]) -> LocalFit {
    let n = data.n_rows();
    let y = DVector::from_column_slice(&data.columns[j]);
    let p = parents.len() + 1;
    let x = DMatrix::from_fn(n, p, |r, c| if c == 0 { 1.0 } else { data.columns[parents[c - 1]][r] });
    let mut xtx = x.transpose() * &x;
    for d in 0..p {
        xtx[(d, d)] += RIDGE;
    }
    let xty = x.transpose() * &y;
    let beta = xtx
        .clone()
        .cholesky()
        .map(|c| c.solve(&xty))
        .or_else(|| xtx.lu().solve(&xty))
        .unwrap_or_else(|| DVector::zeros(p));
    let resid = &y - &x * &beta;
    let variance = (resid.norm_squared() / n as f64).max(1e-300);
    LocalFit {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        variance,
    }
}

/// BIC of one node given its parents under a linear-Gaussian model.
pub fn node_score(data: &DataTable, j: usize, parents: &[usize]) -> f64 {
    let n = data.n_rows() as f64;
    let fit = fit_local(data, j, parents);
    let loglik = -0.5 * n * ((2.0 * std::f64::consts::PI * fit.variance).ln() + 1.0);
    // coefficients, intercept and variance
    let k = parents.len() as f64 + 2.0;
    loglik - 0.5 * k * n.ln()
}

fn check_table(dag: &Dag, data: &DataTable) -> Result<()> {
    if dag.nodes != data.names {
        return Err(Error::invalid("DAG nodes do not match data columns"));
    }
    if data.n_rows() < 2 {
        return Err(Error::InsufficientData("need at least 2 rows".into()));
    }
    Ok(())
}

/// Total BIC (higher is better) and the per-node terms.
pub fn bic_score(dag: &Dag, data: &DataTable) -> Result<(f64, Vec<f64>)> {
    check_table(dag, data)?;
    dag.topological_order()?;
    let per: Vec<f64> = (0..dag.len()).map(|j| node_score(data, j, &dag.parents(j))).collect();
    Ok((per.iter().sum(), per))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeConstraints {
    /// Edges that must be present in the result.
    pub allow: BTreeSet<(String, String)>,
    /// Edges that must not be present.
    pub deny: BTreeSet<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HcConfig {
    pub max_iterations: usize,
    pub restarts: usize,
    /// Random edges added to the starting graph for each restart.
    pub perturbation: usize,
    pub seed: u64,
    pub constraints: EdgeConstraints,
}

impl Default for HcConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            restarts: 20,
            perturbation: 5,
            seed: 0,
            constraints: EdgeConstraints::default(),
        }
    }
}

struct Scorer<'a> {
    data: &'a DataTable,
    cache: HashMap<(usize, Vec<usize>), f64>,
}

impl Scorer<'_> {
    fn score(&mut self, j: usize, mut parents: Vec<usize>) -> f64 {
        parents.sort_unstable();
        let data = self.data;
        *self
            .cache
            .entry((j, parents))
            .or_insert_with_key(|(j, p)| node_score(data, *j, p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Move {
    Add(usize, usize),
    Delete(usize, usize),
    Reverse(usize, usize),
}

/// Per ordered pair: may the edge be added, and must it stay.
struct Rules {
    allowed: Vec<Vec<bool>>,
    required: Vec<Vec<bool>>,
}

fn climb(dag: &mut Dag, scorer: &mut Scorer, rules: &Rules, max_iterations: usize) {
    let n = dag.len();
    let mut node: Vec<f64> = (0..n).map(|j| scorer.score(j, dag.parents(j))).collect();
    for _ in 0..max_iterations {
        let mut best: Option<(f64, Move)> = None;
        let consider = |gain: f64, m: Move, best: &mut Option<(f64, Move)>| {
            if gain > 1e-9 && best.is_none_or(|(g, _)| gain > g) {
                *best = Some((gain, m));
            }
        };
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                if dag.edges.contains(&(i, j)) {
                    if rules.required[i][j] {
                        continue;
                    }
                    let mut pj = dag.parents(j);
                    pj.retain(|&p| p != i);
                    let del = scorer.score(j, pj.clone()) - node[j];
                    consider(del, Move::Delete(i, j), &mut best);
                    if rules.allowed[j][i] {
                        dag.edges.remove(&(i, j));
                        let acyclic = !dag.has_path(i, j);
                        dag.edges.insert((i, j));
                        if acyclic {
                            let mut pi = dag.parents(i);
                            pi.push(j);
                            let gain = del + scorer.score(i, pi) - node[i];
                            consider(gain, Move::Reverse(i, j), &mut best);
                        }
                    }
                } else if !dag.edges.contains(&(j, i)) && rules.allowed[i][j] && !dag.has_path(j, i) {
                    let mut pj = dag.parents(j);
                    pj.push(i);
                    consider(scorer.score(j, pj) - node[j], Move::Add(i, j), &mut best);
                }
            }
        }
        let Some((_, m)) = best else { break };
        let touched = match m {
            Move::Add(i, j) => {
                dag.edges.insert((i, j));
                vec![j]
            }
            Move::Delete(i, j) => {
                dag.edges.remove(&(i, j));
                vec![j]
            }
            Move::Reverse(i, j) => {
                dag.edges.remove(&(i, j));
                dag.edges.insert((j, i));
                vec![i, j]
            }
        };
        for t in touched {
            node[t] = scorer.score(t, dag.parents(t));
        }
    }
    dag.node_scores = node;
}

/// Greedy hill climbing on BIC from the graph of required edges, then
/// `restarts` further climbs from that graph with random edges added. The
/// best-scoring local optimum wins.
pub fn hc_search(data: &DataTable, config: &HcConfig) -> Result<Dag> {
    let n = data.n_vars();
    if n < 2 {
        return Err(Error::InsufficientData("need at least 2 variables".into()));
    }
    if data.n_rows() < 2 {
        return Err(Error::InsufficientData("need at least 2 rows".into()));
    }
    let index: HashMap<&str, usize> = data.names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let lookup = |name: &String| index.get(name.as_str()).copied().ok_or_else(|| Error::UnknownReference(name.clone()));
    let mut rules = Rules {
        allowed: vec![vec![true; n]; n],
        required: vec![vec![false; n]; n],
    };
    for (a, b) in &config.constraints.deny {
        rules.allowed[lookup(a)?][lookup(b)?] = false;
    }
    for (i, row) in rules.allowed.iter_mut().enumerate() {
        row[i] = false;
    }
    let mut start = Dag::empty(data.names.clone());
    for (a, b) in &config.constraints.allow {
        let (i, j) = (lookup(a)?, lookup(b)?);
        if !rules.allowed[i][j] {
            return Err(Error::invalid(format!("edge {a} -> {b} is both required and denied")));
        }
        rules.required[i][j] = true;
        start.edges.insert((i, j));
    }
    if let Some(cycle) = start.find_cycle() {
        return Err(Error::Cycle(cycle.iter().map(|&i| data.names[i].clone()).collect()));
    }

    let mut scorer = Scorer {
        data,
        cache: HashMap::new(),
    };
    let mut best = start.clone();
    climb(&mut best, &mut scorer, &rules, config.max_iterations);
    let mut best_score: f64 = best.node_scores.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    for _ in 0..config.restarts {
        let mut dag = start.clone();
        let mut candidates = pairs.clone();
        candidates.shuffle(&mut rng);
        let mut added = 0;
        for (i, j) in candidates {
            if added == config.perturbation {
                break;
            }
            if rules.allowed[i][j] && !dag.edges.contains(&(i, j)) && !dag.edges.contains(&(j, i)) && !dag.has_path(j, i) {
                dag.edges.insert((i, j));
                added += 1;
            }
        }
        climb(&mut dag, &mut scorer, &rules, config.max_iterations);
        let s: f64 = dag.node_scores.iter().sum();
        if s > best_score + 1e-9 {
            best = dag;
            best_score = s;
        }
    }
    Ok(best)
}

/// Precision, recall and F1 of the undirected skeleton against a reference.
pub fn skeleton_f1(found: &Dag, truth: &Dag) -> f64 {
    let f = found.skeleton();
    let t = truth.skeleton();
    let tp = f.intersection(&t).count() as f64;
    if f.is_empty() && t.is_empty() {
        return 1.0;
    }
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / f.len() as f64;
    let recall = tp / t.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Per-node linear regressions on a fixed structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianBn {
    pub dag: Dag,
    pub intercepts: Vec<f64>,
    /// Coefficients aligned with `dag.parents(j)`.
    pub coefficients: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl LinearGaussianBn {
    pub fn fit(dag: &Dag, data: &DataTable) -> Result<Self> {
        check_table(dag, data)?;
        dag.topological_order()?;
        let mut intercepts = Vec::new();
        let mut coefficients = Vec::new();
        let mut variances = Vec::new();
        for j in 0..dag.len() {
            let f = fit_local(data, j, &dag.parents(j));
            intercepts.push(f.intercept);
            coefficients.push(f.coefficients);
            variances.push(f.variance);
        }
        Ok(Self {
            dag: dag.clone(),
            intercepts,
            coefficients,
            variances,
        })
    }

    /// Mean of every node, propagated in topological order; nodes given in
    /// `evidence` (name to value) are held at their observed values.
    pub fn predict(&self, evidence: &HashMap<String, f64>) -> Result<Vec<f64>> {
        let mut value = vec![0.0; self.dag.len()];
        for j in self.dag.topological_order()? {
            value[j] = match evidence.get(&self.dag.nodes[j]) {
                Some(v) => *v,
                None => {
                    self.intercepts[j]
                        + self.dag.parents(j).iter().zip(&self.coefficients[j]).map(|(&p, c)| c * value[p]).sum::<f64>()
                }
            };
        }
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{normal, rng};

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| ["a", "b", "c", "d", "e"][i].to_string()).collect()
    }

    fn chain(n: usize, seed: u64) -> DataTable {
        let mut r = rng(seed);
        let a: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let b: Vec<f64> = a.iter().map(|x| 1.5 * x + normal(&mut r)).collect();
        let c: Vec<f64> = b.iter().map(|x| -1.2 * x + normal(&mut r)).collect();
        DataTable::new(names(3), vec![a, b, c]).unwrap()
    }

    fn independent(n: usize, vars: usize, seed: u64) -> DataTable {
        let mut r = rng(seed);
        DataTable::new(names(vars), (0..vars).map(|_| (0..n).map(|_| normal(&mut r)).collect()).collect()).unwrap()
    }

    fn edge(a: &str, b: &str) -> (String, String) {
        (a.to_string(), b.to_string())
    }

    #[test]
    fn cycle_is_named() {
        let err = Dag::from_named_edges(names(3), &[edge("a", "b"), edge("b", "a")]).unwrap_err();
        match err {
            Error::Cycle(c) => assert!(c.first() == c.last() && c.len() == 3, "{c:?}"),
            e => panic!("{e:?}"),
        }
        assert!(Dag::from_named_edges(names(3), &[]).unwrap().edges.is_empty());
    }

    #[test]
    fn json_round_trip() {
        let d = Dag::from_named_edges(names(3), &[edge("a", "b"), edge("b", "c")]).unwrap();
        assert_eq!(Dag::from_json(&d.to_json().unwrap()).unwrap(), d);
        assert!(Dag::from_json(r#"{"nodes":["a"],"edges":[["a","z"]]}"#).is_err());
    }

    #[test]
    fn empty_graph_beats_single_edges_on_independent_data() {
        let t = independent(1000, 3, 1);
        let (empty, _) = bic_score(&Dag::empty(t.names.clone()), &t).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let d = Dag::from_named_edges(t.names.clone(), &[(t.names[i].clone(), t.names[j].clone())]).unwrap();
                    assert!(bic_score(&d, &t).unwrap().0 < empty);
                }
            }
        }
    }

    #[test]
    fn true_edge_raises_score() {
        let mut r = rng(2);
        let x: Vec<f64> = (0..500).map(|_| normal(&mut r)).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + normal(&mut r)).collect();
        let t = DataTable::new(names(2), vec![x, y]).unwrap();
        let empty = bic_score(&Dag::empty(names(2)), &t).unwrap().0;
        let with = bic_score(&Dag::from_named_edges(names(2), &[edge("a", "b")]).unwrap(), &t).unwrap().0;
        assert!(with > empty);
    }

    #[test]
    fn score_is_decomposable_and_relabel_invariant() {
        let t = chain(300, 3);
        let d = Dag::from_named_edges(names(3), &[edge("a", "b"), edge("b", "c")]).unwrap();
        let (total, per) = bic_score(&d, &t).unwrap();
        assert!((total - per.iter().sum::<f64>()).abs() < 1e-9);
        let perm = [2, 0, 1];
        let d2 = d.relabel(&perm);
        let mut cols = vec![Vec::new(); 3];
        for (i, &p) in perm.iter().enumerate() {
            cols[p] = t.columns[i].clone();
        }
        let t2 = DataTable::new(d2.nodes.clone(), cols).unwrap();
        assert!((bic_score(&d2, &t2).unwrap().0 - total).abs() < 1e-9 * total.abs());
    }

    #[test]
    fn recovers_chain_skeleton() {
        let t = chain(10_000, 4);
        let d = hc_search(&t, &HcConfig::default()).unwrap();
        assert_eq!(d.skeleton(), [(0, 1), (1, 2)].into_iter().collect());
    }

    #[test]
    fn independent_columns_give_empty_graph() {
        let d = hc_search(&independent(2000, 4, 5), &HcConfig::default()).unwrap();
        assert!(d.edges.is_empty());
    }

    #[test]
    fn deny_list_is_respected() {
        let t = chain(10_000, 6);
        let config = HcConfig {
            constraints: EdgeConstraints {
                allow: BTreeSet::new(),
                deny: [edge("a", "b"), edge("b", "a")].into_iter().collect(),
            },
            ..Default::default()
        };
        let d = hc_search(&t, &config).unwrap();
        assert!(!d.edges.contains(&(0, 1)) && !d.edges.contains(&(1, 0)));
        assert!(d.find_cycle().is_none());
    }

    #[test]
    fn allow_list_edges_are_kept() {
        // a -> c is not supported by the chain data, but is required
        let t = chain(2000, 7);
        let config = HcConfig {
            constraints: EdgeConstraints {
                allow: [edge("a", "c")].into_iter().collect(),
                deny: BTreeSet::new(),
            },
            ..Default::default()
        };
        let d = hc_search(&t, &config).unwrap();
        assert!(d.edges.contains(&(0, 2)));
        assert_eq!(d.skeleton().len(), 3);
    }

    #[test]
    fn conflicting_or_cyclic_requirements_rejected() {
        let t = chain(200, 7);
        let both = HcConfig {
            constraints: EdgeConstraints {
                allow: [edge("a", "b")].into_iter().collect(),
                deny: [edge("a", "b")].into_iter().collect(),
            },
            ..Default::default()
        };
        assert!(hc_search(&t, &both).is_err());
        let cyclic = HcConfig {
            constraints: EdgeConstraints {
                allow: [edge("a", "b"), edge("b", "c"), edge("c", "a")].into_iter().collect(),
                deny: BTreeSet::new(),
            },
            ..Default::default()
        };
        assert!(matches!(hc_search(&t, &cyclic), Err(Error::Cycle(_))));
    }

    #[test]
    fn linear_gaussian_prediction() {
        let t = chain(5000, 8);
        let d = Dag::from_named_edges(names(3), &[edge("a", "b"), edge("b", "c")]).unwrap();
        let bn = LinearGaussianBn::fit(&d, &t).unwrap();
        assert!((bn.coefficients[1][0] - 1.5).abs() < 0.05);
        let pred = bn.predict(&[("a".to_string(), 1.0)].into_iter().collect()).unwrap();
        assert!((pred[2] - (-1.8)).abs() < 0.1, "{pred:?}");
    }
}
