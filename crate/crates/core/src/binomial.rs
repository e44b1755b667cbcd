//! Binomial probability weights used by every expectation over the number
//! of low-type clients.

/// Probability mass of `Binomial(trials, p)` at every count `0..=trials`.
///
/// Computed in log space so that `trials` in the hundreds stays accurate.
pub fn pmf(trials: usize, p: f64) -> Vec<f64> {
    assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
    if p == 0.0 || p == 1.0 {
        let mut out = vec![0.0; trials + 1];
        out[if p == 0.0 { 0 } else { trials }] = 1.0;
        return out;
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut ln_fact = Vec::with_capacity(trials + 1);
    ln_fact.push(0.0f64);
    for k in 1..=trials {
        ln_fact.push(ln_fact[k - 1] + (k as f64).ln());
    }
    (0..=trials)
        .map(|k| {
            let ln_choose = ln_fact[trials] - ln_fact[k] - ln_fact[trials - k];
            (ln_choose + k as f64 * lp + (trials - k) as f64 * lq).exp()
        })
        .collect()
}

/// `C(n, k)` as a float.
pub fn choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
