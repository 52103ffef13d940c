//! LambdaRank gradients: pairwise logistic gradients weighted by the NDCG
//! change of swapping the pair, truncated at a rank cutoff.

/// Sigmoid shape parameter of the pairwise loss.
pub const SIGMA: f64 = 1.0;

/// NDCG truncation depth used for the |ΔNDCG| pair weights.
pub const NDCG_TRUNCATION: usize = 10;

fn discount(rank: usize, trunc: usize) -> f64 {
    if rank <= trunc {
        1.0 / ((rank as f64 + 1.0).log2())
    } else {
        0.0
    }
}

fn gain(label: u8) -> f64 {
    (1u64 << label) as f64 - 1.0
}

/// Ranks induced by the scores, 1-based; ties break by earlier index.
pub fn ranks_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0usize; scores.len()];
    for (pos, &idx) in order.iter().enumerate() {
        ranks[idx] = pos + 1;
    }
    ranks
}

/// Ideal DCG at the truncation depth.
fn ideal_dcg(labels: &[u8], trunc: usize) -> f64 {
    let mut sorted: Vec<u8> = labels.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted
        .iter()
        .enumerate()
        .map(|(i, &l)| gain(l) * discount(i + 1, trunc))
        .sum()
}

/// NDCG at `trunc` for one group under the given scores.
pub fn ndcg(scores: &[f64], labels: &[u8], trunc: usize) -> f64 {
    let idcg = ideal_dcg(labels, trunc);
    if idcg == 0.0 {
        return 0.0;
    }
    let ranks = ranks_by_score(scores);
    let dcg: f64 = labels
        .iter()
        .zip(&ranks)
        .map(|(&l, &r)| gain(l) * discount(r, trunc))
        .sum();
    dcg / idcg
}

/// Reciprocal rank of the first positive label under the given scores.
pub fn reciprocal_rank(scores: &[f64], labels: &[u8]) -> f64 {
    let ranks = ranks_by_score(scores);
    labels
        .iter()
        .zip(&ranks)
        .filter(|(&l, _)| l > 0)
        .map(|(_, &r)| 1.0 / r as f64)
        .fold(0.0, f64::max)
}

/// LambdaRank gradients and second-order weights for one query group.
///
/// For every pair with `label_i > label_j`:
/// `ρ = 1 / (1 + exp(σ (s_i − s_j)))`, `λ = σ ρ |ΔNDCG_ij|`; the gradient of
/// `i` increases by λ, `j`'s decreases by λ, and both accumulate the weight
/// `σ² ρ (1−ρ) |ΔNDCG_ij|`. Positive gradient means "move up".
pub fn lambda_gradients(scores: &[f64], labels: &[u8], trunc: usize) -> (Vec<f64>, Vec<f64>) {
    let n = scores.len();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let idcg = ideal_dcg(labels, trunc);
    if idcg == 0.0 {
        return (grad, hess);
    }
    let ranks = ranks_by_score(scores);
    for i in 0..n {
        for j in 0..n {
            if labels[i] <= labels[j] {
                continue;
            }
            let delta_ndcg = (gain(labels[i]) - gain(labels[j])).abs()
                * (discount(ranks[i], trunc) - discount(ranks[j], trunc)).abs()
                / idcg;
            if delta_ndcg == 0.0 {
                continue;
            }
            let rho = 1.0 / (1.0 + (SIGMA * (scores[i] - scores[j])).exp());
            let lambda = SIGMA * rho * delta_ndcg;
            let weight = SIGMA * SIGMA * rho * (1.0 - rho) * delta_ndcg;
            grad[i] += lambda;
            grad[j] -= lambda;
            hess[i] += weight;
            hess[j] += weight;
        }
    }
    (grad, hess)
}
