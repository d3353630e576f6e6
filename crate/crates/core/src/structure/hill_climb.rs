use rand::seq::IndexedRandom;
use rayon::prelude::*;

use super::{BicScorer, SearchConfig};
use crate::error::Result;
use crate::frame::NodeData;
use crate::graph::{arc_permitted, Dag};
use crate::rng::rng_from;

/// Smallest score gain accepted as an improvement.
const MIN_GAIN: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct HillClimbResult {
    pub dag: Dag,
    pub score: f64,
    /// Index of the climb that produced `dag` (0 = initial climb).
    pub best_restart: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Move {
    Add(usize, usize),
    Delete(usize, usize),
    Reverse(usize, usize),
}

/// `reach[a][b]`: a directed path a ⇝ b exists (reflexive).
fn reachability(dag: &Dag) -> Vec<Vec<bool>> {
    let p = dag.len();
    let mut reach = vec![vec![false; p]; p];
    for (s, row) in reach.iter_mut().enumerate() {
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            if row[v] {
                continue;
            }
            row[v] = true;
            stack.extend(dag.children(v).iter().copied());
        }
    }
    reach
}

fn parents_with(dag: &Dag, v: usize, add: Option<usize>, drop: Option<usize>) -> Vec<usize> {
    let mut ps: Vec<usize> = dag
        .parents(v)
        .iter()
        .copied()
        .filter(|&q| Some(q) != drop)
        .collect();
    if let Some(a) = add {
        let pos = ps.binary_search(&a).unwrap_err();
        ps.insert(pos, a);
    }
    ps
}

/// All acyclic, tier-valid single-arc moves of `dag`.
fn legal_moves(dag: &Dag) -> Vec<Move> {
    let p = dag.len();
    let reach = reachability(dag);
    let mut moves = Vec::new();
    for u in 0..p {
        for v in 0..p {
            if u == v {
                continue;
            }
            if dag.has_arc(u, v) {
                moves.push(Move::Delete(u, v));
                let other_path = dag.children(u).iter().any(|&c| c != v && reach[c][v]);
                if !other_path && arc_permitted(dag.node(v), dag.node(u)).is_ok() {
                    moves.push(Move::Reverse(u, v));
                }
            } else if !dag.has_arc(v, u)
                && !reach[v][u]
                && arc_permitted(dag.node(u), dag.node(v)).is_ok()
            {
                moves.push(Move::Add(u, v));
            }
        }
    }
    moves
}

fn gain(dag: &Dag, scorer: &mut BicScorer, mv: Move) -> f64 {
    let current = |s: &mut BicScorer, v: usize| s.local(v, &parents_with(dag, v, None, None));
    match mv {
        Move::Add(u, v) => scorer.local(v, &parents_with(dag, v, Some(u), None)) - current(scorer, v),
        Move::Delete(u, v) => scorer.local(v, &parents_with(dag, v, None, Some(u))) - current(scorer, v),
        Move::Reverse(u, v) => {
            scorer.local(v, &parents_with(dag, v, None, Some(u))) - current(scorer, v)
                + scorer.local(u, &parents_with(dag, u, Some(v), None))
                - current(scorer, u)
        }
    }
}

fn apply(dag: &mut Dag, mv: Move) {
    match mv {
        Move::Add(u, v) => dag.insert_arc_unchecked(u, v),
        Move::Delete(u, v) => {
            dag.remove_arc_idx(u, v);
        }
        Move::Reverse(u, v) => {
            dag.remove_arc_idx(u, v);
            dag.insert_arc_unchecked(v, u);
        }
    }
}

/// Greedy best-improvement search from `start`; ties go to the first move in
/// enumeration order.
fn climb(mut dag: Dag, scorer: &mut BicScorer) -> (Dag, f64) {
    loop {
        let mut best: Option<(f64, Move)> = None;
        for mv in legal_moves(&dag) {
            let g = gain(&dag, scorer, mv);
            if g > MIN_GAIN && best.is_none_or(|(b, _)| g > b) {
                best = Some((g, mv));
            }
        }
        match best {
            Some((_, mv)) => apply(&mut dag, mv),
            None => break,
        }
    }
    let score = scorer.score(&dag);
    (dag, score)
}

/// BIC hill-climbing over add/delete/reverse moves restricted to tier-valid
/// arcs among `nodes`, with optional perturbed restarts from the first optimum.
pub fn hill_climb<S: AsRef<str>>(data: &NodeData, nodes: &[S], cfg: &SearchConfig) -> Result<HillClimbResult> {
    let sub = data.select(nodes)?;
    let empty = Dag::new(sub.nodes().to_vec())?;
    let mut scorer = BicScorer::new(&sub);
    let (first, first_score) = climb(empty, &mut scorer);

    let restarts: Vec<(Dag, f64)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from(cfg.seed, &[0x6869_6c6c, r as u64]);
            let mut scorer = scorer.clone();
            let mut start = first.clone();
            for _ in 0..cfg.perturb {
                let moves = legal_moves(&start);
                match moves.choose(&mut rng) {
                    Some(&mv) => apply(&mut start, mv),
                    None => break,
                }
            }
            climb(start, &mut scorer)
        })
        .collect();

    let mut best = HillClimbResult {
        dag: first,
        score: first_score,
        best_restart: 0,
    };
    for (r, (dag, score)) in restarts.into_iter().enumerate() {
        if score > best.score + MIN_GAIN {
            best = HillClimbResult {
                dag,
                score,
                best_restart: r + 1,
            };
        }
    }
    Ok(best)
}
