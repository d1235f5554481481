use super::{comparator_failure, reranked, Degraded, PairJudge, Selection, SelectionError, SelectionTrace, Strategy};
use crate::comparator::{Comparator, OrderPolicy, PairVerdict};
use crate::model::{Candidate, Query, RankedList};

/// Round-robin over all `n (n - 1) / 2` unordered pairs. A win scores 1, a
/// tie 0.5 each; output is sorted by descending score, ties by initial rank.
/// All pairs are independent and run as a single concurrent batch.
pub fn all_pair_scores<C: Comparator + ?Sized>(
    list: &RankedList,
    query: &Query,
    comparator: &C,
    policy: OrderPolicy,
) -> Result<Selection, SelectionError> {
    run(list, query, comparator, policy, None)
}

fn ordered(list: &RankedList, points: &[u32]) -> (Vec<Candidate>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..list.len()).collect();
    idx.sort_by(|&a, &b| {
        points[b]
            .cmp(&points[a])
            .then_with(|| list.candidates[a].initial_rank.cmp(&list.candidates[b].initial_rank))
    });
    (
        idx.iter().map(|&i| list.candidates[i].clone()).collect(),
        idx.iter().map(|&i| points[i] as f64 / 2.0).collect(),
    )
}

pub(super) fn run<C: Comparator + ?Sized>(
    list: &RankedList,
    query: &Query,
    comparator: &C,
    policy: OrderPolicy,
    budget: Option<usize>,
) -> Result<Selection, SelectionError> {
    if list.is_empty() {
        return Err(SelectionError::EmptyList);
    }
    let judge = PairJudge::new(comparator, query, policy, budget);
    let mut trace = SelectionTrace::new(&list.query_id, Strategy::AllPair, policy);
    let n = list.len();
    let index_pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let allowed = index_pairs.len().min(judge.remaining(0));
    if allowed < index_pairs.len() {
        trace.degraded = Some(Degraded::BudgetExhausted);
    }
    // Half-points, so a tie is an exact 1.
    let mut points = vec![0u32; n];

    if allowed > 0 {
        trace.rounds = 1;
        trace.round_sizes.push(allowed);
        let pairs: Vec<(&Candidate, &Candidate)> = index_pairs[..allowed]
            .iter()
            .map(|&(i, j)| (&list.candidates[i], &list.candidates[j]))
            .collect();
        for (&(i, j), result) in index_pairs.iter().zip(judge.judge_batch(&pairs, 0)) {
            let judged = match result {
                Ok(j) => j,
                Err(e) => {
                    let (items, scores) = ordered(list, &points);
                    let partial = reranked(&list.query_id, items);
                    return Err(comparator_failure(&list.query_id, e, partial, trace, Some(scores)));
                }
            };
            match trace.absorb(judged) {
                PairVerdict::FirstWins => points[i] += 2,
                PairVerdict::SecondWins => points[j] += 2,
                PairVerdict::Tie => {
                    points[i] += 1;
                    points[j] += 1;
                }
            }
        }
    }

    let (items, scores) = ordered(list, &points);
    trace.swaps = items
        .iter()
        .zip(&list.candidates)
        .filter(|(a, b)| a.doc_id != b.doc_id)
        .count();
    Ok(Selection {
        list: reranked(&list.query_id, items),
        trace,
        scores: Some(scores),
    })
}
