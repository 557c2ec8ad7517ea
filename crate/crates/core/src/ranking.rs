/// Values this close (relative to their magnitude) count as tied. Accuracy
/// tables are transcribed decimals, so differences of equal decimals may
/// disagree in the last few bits.
const TIE_TOLERANCE: f64 = 1e-9;

pub(crate) fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * 1f64.max(a.abs()).max(b.abs())
}

/// 1-based ranks in ascending order of value; ties share the mean of the
/// ranks they span.
pub(crate) fn average_ranks_ascending(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && nearly_equal(values[order[end]], values[order[start]]) {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let shared = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = shared;
        }
        start = end;
    }
    ranks
}

/// Rank 1 for the largest value.
pub(crate) fn average_ranks_descending(values: &[f64]) -> Vec<f64> {
    let negated: Vec<f64> = values.iter().map(|v| -v).collect();
    average_ranks_ascending(&negated)
}
