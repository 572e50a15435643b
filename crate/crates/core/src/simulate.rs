//! Forward simulation: CTMC sample paths, tip data along a phylogeny, and
//! random Yule trees for synthetic studies.
//!
//! All simulation takes an explicit seed and uses a counter-based generator,
//! so identical inputs give identical outputs with no global RNG state.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;

use crate::error::{Error, Result};
use crate::expm::matrix_exponential;
use crate::phylo::Phylogeny;
use crate::rates::RateMatrix;

/// A sequence of observed states at nondecreasing times.
///
/// With `fully_observed` set, the sequence records every jump of the chain:
/// times are strictly increasing and consecutive states differ.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    pub states: Vec<usize>,
    pub times: Vec<f64>,
    pub fully_observed: bool,
}

impl ObservationSequence {
    pub fn new(states: Vec<usize>, times: Vec<f64>, fully_observed: bool) -> Result<Self> {
        if states.len() != times.len() {
            return Err(Error::input("states and times must have equal length"));
        }
        if states.is_empty() {
            return Err(Error::input("observation sequence must be nonempty"));
        }
        for (k, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::input(format!("time t[{k}] = {t} must be finite and >= 0")));
            }
            if k > 0 {
                let prev = times[k - 1];
                if fully_observed {
                    if t <= prev {
                        return Err(Error::input(format!(
                            "fully observed times must be strictly increasing at t[{k}]"
                        )));
                    }
                } else if t < prev {
                    return Err(Error::input(format!("times must be nondecreasing at t[{k}]")));
                }
            }
        }
        if fully_observed {
            for k in 1..states.len() {
                if states[k] == states[k - 1] {
                    return Err(Error::input(format!(
                        "fully observed path repeats state {} at step {k}",
                        states[k]
                    )));
                }
            }
        }
        Ok(ObservationSequence {
            states,
            times,
            fully_observed,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Number of transitions realized over a horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpCount {
    pub count: usize,
    pub horizon: f64,
}

impl JumpCount {
    pub fn of_path(path: &ObservationSequence, horizon: f64) -> Self {
        JumpCount {
            count: path.len() - 1,
            horizon,
        }
    }
}

/// Generator to simulate under: normalized if available, otherwise raw.
fn active_generator(rates: &RateMatrix) -> &Array2<f64> {
    rates.lambda().unwrap_or_else(|_| rates.q())
}

/// Simulate a fully observed path on [0, t_end] by the Gillespie scheme:
/// exponential sojourns at the current state's exit rate, categorical jumps
/// proportional to the off-diagonal rates.
///
/// The initial state is drawn from π*. A state with zero exit rate absorbs
/// the path; the last recorded time is always ≤ t_end.
pub fn simulate_path(rates: &RateMatrix, t_end: f64, rng_seed: u64) -> Result<ObservationSequence> {
    if !t_end.is_finite() || t_end <= 0.0 {
        return Err(Error::input(format!("t_end = {t_end} must be positive")));
    }
    let gen = active_generator(rates);
    let n = gen.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let mut state = sample_categorical(rates.pi_init().as_slice().unwrap(), &mut rng);
    let mut t = 0.0;
    let mut states = vec![state];
    let mut times = vec![0.0];

    loop {
        let exit = -gen[[state, state]];
        if exit <= 0.0 {
            break; // absorbing state: the path simply stays
        }
        let sojourn = Exp::new(exit).expect("positive rate").sample(&mut rng);
        if t + sojourn > t_end {
            break;
        }
        t += sojourn;
        let mut weights = Vec::with_capacity(n - 1);
        for j in 0..n {
            if j != state {
                weights.push((j, gen[[state, j]]));
            }
        }
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let mut u = rng.gen::<f64>() * total;
        let mut next = weights[weights.len() - 1].0;
        for (j, w) in weights {
            if u < w {
                next = j;
                break;
            }
            u -= w;
        }
        state = next;
        states.push(state);
        times.push(t);
    }
    ObservationSequence::new(states, times, true)
}

/// Observe a fully observed path at regular intervals `delta`, producing a
/// sequential (partially observed) sequence of `count` observations.
pub fn discretize_path(
    path: &ObservationSequence,
    delta: f64,
    count: usize,
) -> Result<ObservationSequence> {
    if delta <= 0.0 || count == 0 {
        return Err(Error::input("discretization needs delta > 0 and count > 0"));
    }
    let mut states = Vec::with_capacity(count);
    let mut times = Vec::with_capacity(count);
    for k in 0..count {
        let t = k as f64 * delta;
        // state at time t = last recorded state with jump time <= t
        let idx = match path.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        states.push(path.states[idx]);
        times.push(t);
    }
    ObservationSequence::new(states, times, false)
}

/// Simulate one character per tip by evolving the chain along the tree from
/// a root state drawn from `root_dist`. Returns tip states indexed by tip.
pub fn simulate_tip_data(
    rates: &RateMatrix,
    tree: &Phylogeny,
    root_dist: &[f64],
    rng_seed: u64,
) -> Result<Vec<usize>> {
    let gen = active_generator(rates);
    let n = gen.nrows();
    if root_dist.len() != n {
        return Err(Error::input("root distribution length does not match state count"));
    }
    let root_dist = crate::rates::probability_vector(root_dist, "root_dist")?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let mut node_state = vec![usize::MAX; tree.n_nodes()];
    node_state[tree.root()] = sample_categorical(root_dist.as_slice().unwrap(), &mut rng);

    for v in tree.preorder() {
        if v == tree.root() {
            continue;
        }
        let parent_state = node_state[tree.parent(v).unwrap()];
        let p = matrix_exponential(gen, tree.branch_length(v))?;
        let row: Vec<f64> = p.p.row(parent_state).to_vec();
        node_state[v] = sample_categorical(&row, &mut rng);
    }
    Ok((0..tree.n_tips()).map(|t| node_state[t]).collect())
}

fn sample_categorical(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Generate a random Yule (pure-birth) tree with the given number of tips.
///
/// Lineages split at unit rate; after the last split the process runs one
/// more exponential stretch so terminal branches have positive length.
/// Tips are labelled "t1".."tN" in left-to-right order.
pub fn yule_tree(n_tips: usize, rng_seed: u64) -> Result<Phylogeny> {
    if n_tips < 2 {
        return Err(Error::input("Yule tree needs at least 2 tips"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    struct TmpNode {
        birth: f64,
        end: f64,
        children: Option<(usize, usize)>,
    }
    let mut nodes: Vec<TmpNode> = Vec::with_capacity(2 * n_tips - 1);
    // Root splits at time zero into two lineages.
    nodes.push(TmpNode {
        birth: 0.0,
        end: 0.0,
        children: None,
    });
    let root = 0;
    let mut active = vec![];
    for _ in 0..2 {
        nodes.push(TmpNode {
            birth: 0.0,
            end: f64::NAN,
            children: None,
        });
        active.push(nodes.len() - 1);
    }
    nodes[root].children = Some((active[0], active[1]));

    let mut t = 0.0;
    while active.len() < n_tips {
        let k = active.len();
        t += Exp::new(k as f64).unwrap().sample(&mut rng);
        let pick = rng.gen_range(0..k);
        let split = active.swap_remove(pick);
        nodes[split].end = t;
        let a = nodes.len();
        nodes.push(TmpNode {
            birth: t,
            end: f64::NAN,
            children: None,
        });
        let b = nodes.len();
        nodes.push(TmpNode {
            birth: t,
            end: f64::NAN,
            children: None,
        });
        nodes[split].children = Some((a, b));
        active.push(a);
        active.push(b);
    }
    let t_final = t + Exp::new(active.len() as f64).unwrap().sample(&mut rng);
    for &v in &active {
        nodes[v].end = t_final;
    }

    // Re-index: tips 0..N in traversal order, internals in post-order.
    let mut tip_labels = Vec::with_capacity(n_tips);
    let mut children: Vec<Option<(usize, usize)>> = vec![None; 2 * n_tips - 1];
    let mut branch = vec![0.0; 2 * n_tips - 1];
    let mut next_tip = 0usize;
    let mut next_internal = n_tips;

    fn assign(
        v: usize,
        nodes: &[TmpNode],
        tip_labels: &mut Vec<String>,
        children: &mut [Option<(usize, usize)>],
        branch: &mut [f64],
        next_tip: &mut usize,
        next_internal: &mut usize,
    ) -> usize {
        let len = nodes[v].end - nodes[v].birth;
        match nodes[v].children {
            None => {
                let idx = *next_tip;
                *next_tip += 1;
                tip_labels.push(format!("t{}", idx + 1));
                branch[idx] = len;
                idx
            }
            Some((a, b)) => {
                let ia = assign(a, nodes, tip_labels, children, branch, next_tip, next_internal);
                let ib = assign(b, nodes, tip_labels, children, branch, next_tip, next_internal);
                let idx = *next_internal;
                *next_internal += 1;
                children[idx] = Some((ia, ib));
                branch[idx] = len;
                idx
            }
        }
    }
    assign(
        root,
        &nodes,
        &mut tip_labels,
        &mut children,
        &mut branch,
        &mut next_tip,
        &mut next_internal,
    );
    Phylogeny::new(tip_labels, children, branch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{build_rate_matrix, LinkFunction, RateMatrix};
    use ndarray::array;

    #[test]
    fn zero_rate_generator_never_jumps() {
        let rm = RateMatrix::from_generator(Array2::zeros((2, 2))).unwrap();
        let path = simulate_path(&rm, 5.0, 42).unwrap();
        assert_eq!(path.len(), 1);
        assert_eq!(JumpCount::of_path(&path, 5.0).count, 0);
    }

    #[test]
    fn same_seed_same_path() {
        let rm = build_rate_matrix(&[0.3, -0.2], LinkFunction::Exp).unwrap();
        let a = simulate_path(&rm, 3.0, 7).unwrap();
        let b = simulate_path(&rm, 3.0, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&rm, 3.0, 8).unwrap();
        assert!(a != c || a.len() == 1);
    }

    #[test]
    fn path_respects_horizon_and_alternates() {
        let rm = build_rate_matrix(&[1.0, 1.0], LinkFunction::Exp).unwrap();
        let path = simulate_path(&rm, 2.0, 11).unwrap();
        assert!(path.fully_observed);
        assert!(*path.times.last().unwrap() <= 2.0);
        for k in 1..path.len() {
            assert_ne!(path.states[k], path.states[k - 1]);
            assert!(path.times[k] > path.times[k - 1]);
        }
    }

    #[test]
    fn discretize_reads_state_at_sample_times() {
        let path = ObservationSequence::new(vec![0, 1, 0], vec![0.0, 0.6, 1.4], true).unwrap();
        let obs = discretize_path(&path, 0.5, 4).unwrap();
        assert_eq!(obs.states, vec![0, 0, 1, 0]);
        assert_eq!(obs.times, vec![0.0, 0.5, 1.0, 1.5]);
        assert!(!obs.fully_observed);
    }

    #[test]
    fn zero_branch_lengths_copy_the_root() {
        let tree = Phylogeny::new(
            vec!["A".into(), "B".into(), "C".into()],
            vec![None, None, None, Some((0, 1)), Some((3, 2))],
            vec![0.0, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let rm = build_rate_matrix(&[0.4, 0.1, -0.3, 0.9, 0.0, 0.2], LinkFunction::Exp).unwrap();
        for seed in 0..20 {
            let tips = simulate_tip_data(&rm, &tree, &[0.3, 0.3, 0.4], seed).unwrap();
            assert_eq!(tips[0], tips[1]);
            assert_eq!(tips[1], tips[2]);
        }
    }

    #[test]
    fn diagonal_only_generator_copies_the_root() {
        let tree = Phylogeny::new(
            vec!["A".into(), "B".into()],
            vec![None, None, Some((0, 1))],
            vec![1.0, 2.0, 0.0],
        )
        .unwrap();
        let rm = RateMatrix::from_generator(array![[0.0, 0.0], [0.0, 0.0]]).unwrap();
        for seed in 0..20 {
            let tips = simulate_tip_data(&rm, &tree, &[0.5, 0.5], seed).unwrap();
            assert_eq!(tips[0], tips[1]);
        }
    }

    #[test]
    fn yule_tree_is_valid_and_deterministic() {
        let a = yule_tree(16, 3).unwrap();
        let b = yule_tree(16, 3).unwrap();
        assert_eq!(a.n_tips(), 16);
        assert_eq!(a.postorder(), b.postorder());
        assert!(a.height() > 0.0);
        for v in 0..a.n_nodes() {
            if v != a.root() {
                assert!(a.branch_length(v) >= 0.0);
            }
        }
        let mut c = yule_tree(16, 3).unwrap();
        c.scale_branches(5.0 / c.height()).unwrap();
        assert!((c.height() - 5.0).abs() < 1e-12);
    }
}
