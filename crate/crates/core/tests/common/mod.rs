use sleeping_bandits::{ArmSet, LossMatrix};

/// Every map from the `2^K - 1` nonempty sets (index = bit mask) to an
/// awake arm, as `assign[mask]`. Brute force, K <= 3.
pub fn all_policies(k: usize) -> Vec<Vec<usize>> {
    assert!(k <= 3, "brute force is exponential in 2^K");
    let n_sets = (1usize << k) - 1;
    let mut out = Vec::new();
    'policy: for code in 0..k.pow(n_sets as u32) {
        // digit j of `code` in base k is the arm assigned to set j + 1
        let mut assign = vec![0usize; n_sets + 1];
        let mut c = code;
        for (j, slot) in assign.iter_mut().enumerate().skip(1) {
            *slot = c % k;
            c /= k;
            if !ArmSet::from_bits(j as u64).contains(*slot) {
                continue 'policy;
            }
        }
        out.push(assign);
    }
    out
}

/// Smallest expected total loss `sum_S P(S) sum_t l_t(pi(S))` over all
/// policies, with `set_probs[mask]` the probability of each set.
pub fn brute_force_expected(losses: &LossMatrix, set_probs: &[f64]) -> f64 {
    let totals: Vec<f64> = (0..losses.arms())
        .map(|i| losses.rows().map(|r| r[i]).sum())
        .collect();
    all_policies(losses.arms())
        .iter()
        .map(|assign| {
            (1..assign.len())
                .map(|m| set_probs[m] * totals[assign[m]])
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Expected total loss of one choice rule under `set_probs`.
pub fn expected_loss(losses: &LossMatrix, set_probs: &[f64], choose: impl Fn(ArmSet) -> usize) -> f64 {
    let totals: Vec<f64> = (0..losses.arms())
        .map(|i| losses.rows().map(|r| r[i]).sum())
        .collect();
    (1..set_probs.len())
        .map(|m| set_probs[m] * totals[choose(ArmSet::from_bits(m as u64))])
        .sum()
}

/// Smallest total loss over every map from the `2^K - 1` nonempty sets to
/// arms, evaluated on one realized sequence of awake sets.
pub fn brute_force_comparator(losses: &LossMatrix, sets: &[ArmSet]) -> f64 {
    all_policies(losses.arms())
        .iter()
        .map(|assign| realized_loss(losses, sets, |s| assign[s.bits() as usize]))
        .fold(f64::INFINITY, f64::min)
}

/// Comparator loss of a per-round choice, summed in round order.
pub fn realized_loss(losses: &LossMatrix, sets: &[ArmSet], choose: impl Fn(ArmSet) -> usize) -> f64 {
    sets.iter().enumerate().map(|(t, &s)| losses.row(t)[choose(s)]).sum()
}
