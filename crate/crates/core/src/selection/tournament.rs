use super::{comparator_failure, reranked, Degraded, PairJudge, Selection, SelectionError, SelectionTrace, Strategy};
use crate::comparator::{Comparator, OrderPolicy};
use crate::model::{Candidate, Query, RankedList};

/// Knockout bracket. Each round pairs neighbours `(0, 1), (2, 3), ...`; an
/// odd participant out advances unplayed. Uses `n - 1` comparisons over
/// `ceil(log2 n)` rounds.
///
/// The returned list puts the winner first and keeps the remaining
/// candidates in their incoming order.
pub fn tournament_select<C: Comparator + ?Sized>(
    list: &RankedList,
    query: &Query,
    comparator: &C,
    policy: OrderPolicy,
) -> Result<Selection, SelectionError> {
    run(list, query, comparator, policy, None)
}

fn winner_first(list: &RankedList, winner: &Candidate) -> RankedList {
    let mut items = Vec::with_capacity(list.len());
    items.push(winner.clone());
    items.extend(list.candidates.iter().filter(|c| c.doc_id != winner.doc_id).cloned());
    reranked(&list.query_id, items)
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
    let mut trace = SelectionTrace::new(&list.query_id, Strategy::Tournament, policy);
    let mut alive: Vec<&Candidate> = list.candidates.iter().collect();

    while alive.len() > 1 {
        let pairs: Vec<(&Candidate, &Candidate)> = alive.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        let allowed = pairs.len().min(judge.remaining(trace.comparisons_used));
        if allowed == 0 {
            trace.degraded = Some(Degraded::BudgetExhausted);
            break;
        }
        trace.rounds += 1;
        trace.round_sizes.push(allowed);

        let results = judge.judge_batch(&pairs[..allowed], trace.next_timestamp());
        let mut next = Vec::with_capacity(alive.len() / 2 + 1);
        for ((first, second), result) in pairs.iter().zip(results) {
            let judged = match result {
                Ok(j) => j,
                Err(e) => {
                    let partial = reranked(&list.query_id, list.candidates.clone());
                    return Err(comparator_failure(&list.query_id, e, partial, trace, None));
                }
            };
            let verdict = trace.absorb(judged);
            next.push(if verdict.first_preferred(first, second) {
                *first
            } else {
                *second
            });
        }
        // Pairs cut by the budget advance their first member unplayed.
        next.extend(pairs[allowed..].iter().map(|(first, _)| *first));
        if alive.len() % 2 == 1 {
            next.push(alive[alive.len() - 1]);
        }
        if allowed < pairs.len() {
            trace.degraded = Some(Degraded::BudgetExhausted);
            alive = next;
            break;
        }
        alive = next;
    }

    let winner = alive[0];
    trace.swaps = usize::from(winner.doc_id != list.candidates[0].doc_id);
    Ok(Selection {
        list: winner_first(list, winner),
        trace,
        scores: None,
    })
}
