use super::{comparator_failure, reranked, Degraded, PairJudge, Selection, SelectionError, SelectionTrace, Strategy};
use crate::comparator::{Comparator, OrderPolicy};
use crate::model::{Query, RankedList};

/// One back-to-front bubble pass: `n - 1` comparisons, best candidate ends
/// at position 1 under a consistent comparator.
pub fn sliding_window_pass<C: Comparator + ?Sized>(
    list: &RankedList,
    query: &Query,
    comparator: &C,
    policy: OrderPolicy,
) -> Result<Selection, SelectionError> {
    sliding_window_top_m(list, query, comparator, policy, 1)
}

/// `m` bubble passes; pass `j` stops at position `j`, settling positions `1..=m`.
pub fn sliding_window_top_m<C: Comparator + ?Sized>(
    list: &RankedList,
    query: &Query,
    comparator: &C,
    policy: OrderPolicy,
    m: usize,
) -> Result<Selection, SelectionError> {
    if list.is_empty() {
        return Err(SelectionError::EmptyList);
    }
    if m == 0 || m > list.len() {
        return Err(SelectionError::GoalOutOfRange {
            goal_m: m,
            len: list.len(),
        });
    }
    run(list, query, comparator, policy, m, None)
}

pub(super) fn run<C: Comparator + ?Sized>(
    list: &RankedList,
    query: &Query,
    comparator: &C,
    policy: OrderPolicy,
    m: usize,
    budget: Option<usize>,
) -> Result<Selection, SelectionError> {
    let judge = PairJudge::new(comparator, query, policy, budget);
    let mut items = list.candidates.clone();
    let mut trace = SelectionTrace::new(&list.query_id, Strategy::SlidingWindow, policy);
    let n = items.len();
    let planned: usize = (1..=m).map(|j| n - j).sum();
    trace.records.reserve(planned * policy.calls_per_pair());

    'passes: for settled in 0..m {
        trace.rounds += 1;
        for i in (settled + 1..n).rev() {
            if judge.remaining(trace.comparisons_used) == 0 {
                trace.degraded = Some(Degraded::BudgetExhausted);
                break 'passes;
            }
            let verdict = match judge.judge_onto(&items[i - 1], &items[i], &mut trace) {
                Ok(v) => v,
                Err(e) => {
                    let partial = reranked(&list.query_id, items);
                    return Err(comparator_failure(&list.query_id, e, partial, trace, None));
                }
            };
            if !verdict.first_preferred(&items[i - 1], &items[i]) {
                items.swap(i - 1, i);
                trace.swaps += 1;
            }
        }
    }

    Ok(Selection {
        list: reranked(&list.query_id, items),
        trace,
        scores: None,
    })
}
