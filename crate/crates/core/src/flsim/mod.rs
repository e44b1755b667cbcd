//! Small federated training loop on a squared-hinge SVM: each round every
//! client takes a local gradient step from the broadcast model, adds
//! Gaussian noise, and the server aggregates.

mod data;

pub use data::*;

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};

use crate::aggregation::{aggregate_mean, aggregate_mle, LearningConfig, NoiseProfile};
use crate::error::{Error, Result};
use crate::mechanism::{apply_prices, PriceMode, PricingScheme, RoundOutcome};
use crate::montecarlo::stream_rng;
use crate::par::{map_indexed, Execution};

/// `(lambda/2)||w||^2 + mean_j (1/2) max(0, 1 - y_j w.x_j)^2`.
pub fn svm_loss(w: &[f64], data: &Dataset, cfg: &SvmConfig) -> f64 {
    let reg = 0.5 * cfg.lambda_reg * w.iter().map(|v| v * v).sum::<f64>();
    let hinge: f64 = data
        .features()
        .iter()
        .zip(data.labels())
        .map(|(x, y)| {
            let m = (1.0 - y * dot(w, x)).max(0.0);
            0.5 * m * m
        })
        .sum();
    reg + hinge / data.len() as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient of [`svm_loss`].
pub fn local_gradient(w: &[f64], data: &Dataset, cfg: &SvmConfig) -> Result<Vec<f64>> {
    if w.len() != data.dim() {
        return Err(Error::shape(format!("model has dimension {}, data {}", w.len(), data.dim())));
    }
    let inv_n = 1.0 / data.len() as f64;
    let mut g: Vec<f64> = w.iter().map(|v| cfg.lambda_reg * v).collect();
    for (x, y) in data.features().iter().zip(data.labels()) {
        let m = 1.0 - y * dot(w, x);
        if m > 0.0 {
            for (gk, xk) in g.iter_mut().zip(x) {
                *gk -= inv_n * y * xk * m;
            }
        }
    }
    Ok(g)
}

/// Smoothness bound `lambda + mean ||x||^2`.
pub fn estimate_l_smooth(data: &Dataset, cfg: &SvmConfig) -> f64 {
    cfg.lambda_reg + data.features().iter().map(|x| dot(x, x)).sum::<f64>() / data.len() as f64
}

/// The minimizer of the pooled loss and its value.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceOptimum {
    pub w: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
}

/// Solves a symmetric positive-definite system by Cholesky factorization.
fn cholesky_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in (j + 1)..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    for i in 0..n {
        for k in 0..i {
            b[i] -= a[i][k] * b[k];
        }
        b[i] /= a[i][i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            b[i] -= a[k][i] * b[k];
        }
        b[i] /= a[i][i];
    }
    Some(b)
}

pub const REFERENCE_GRAD_TOL: f64 = 1e-10;

/// Minimizes the pooled loss with a damped generalized Newton method (the
/// squared hinge is piecewise quadratic). Fails with a setup error if the
/// gradient norm does not reach [`REFERENCE_GRAD_TOL`].
pub fn reference_optimum(datasets: &[Dataset], cfg: &SvmConfig) -> Result<ReferenceOptimum> {
    let pooled = Dataset::pooled(datasets)?;
    let d = pooled.dim();
    let inv_n = 1.0 / pooled.len() as f64;
    let mut w = vec![0.0; d];
    let mut g = local_gradient(&w, &pooled, cfg)?;
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    for _ in 0..200 {
        if norm(&g) <= REFERENCE_GRAD_TOL {
            break;
        }
        let mut h = vec![vec![0.0; d]; d];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = cfg.lambda_reg;
        }
        for (x, y) in pooled.features().iter().zip(pooled.labels()) {
            if 1.0 - y * dot(&w, x) > 0.0 {
                for i in 0..d {
                    for j in 0..=i {
                        h[i][j] += inv_n * x[i] * x[j];
                    }
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                h[j][i] = h[i][j];
            }
        }
        let step = cholesky_solve(h, g.iter().map(|v| -v).collect())
            .ok_or_else(|| Error::Setup("Hessian is not positive definite".into()))?;
        let f0 = svm_loss(&w, &pooled, cfg);
        let slope = dot(&g, &step);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            if svm_loss(&trial, &pooled, cfg) <= f0 + 1e-4 * t * slope || t < 1e-12 {
                w = trial;
                break;
            }
            t *= 0.5;
        }
        g = local_gradient(&w, &pooled, cfg)?;
    }
    let grad_norm = norm(&g);
    if grad_norm > REFERENCE_GRAD_TOL {
        return Err(Error::Setup(format!("reference optimum not converged: gradient norm {grad_norm:e}")));
    }
    Ok(ReferenceOptimum { loss: svm_loss(&w, &pooled, cfg), w, grad_norm })
}

/// How the server combines the noisy parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum AggregationRule {
    Mean,
    /// Inverse-variance weights from the true noise levels.
    Mle,
    /// Inverse-variance weights from presumed noise levels.
    MlePresumed(NoiseProfile),
}

/// Optional pricing applied every round.
#[derive(Debug, Clone)]
pub struct RoundPricing {
    pub scheme: PricingScheme,
    pub mode: PriceMode,
    /// Reported types, needed in incomplete mode.
    pub reports: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FederationConfig {
    pub svm: SvmConfig,
    pub learning: LearningConfig,
    pub local_steps: usize,
    /// Training stops with an error once the loss exceeds this.
    pub blowup: f64,
}

impl FederationConfig {
    pub fn new(svm: SvmConfig, learning: LearningConfig) -> Self {
        FederationConfig { svm, learning, local_steps: 1, blowup: 1e12 }
    }
}

/// State after one aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub global: Vec<f64>,
    pub loss: f64,
    pub prices: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationTrace {
    pub sigmas: Vec<f64>,
    pub rounds: Vec<RoundRecord>,
    /// Per-client sum of prices over all rounds.
    pub cumulative_prices: Vec<f64>,
}

impl FederationTrace {
    pub fn final_params(&self) -> Option<&[f64]> {
        self.rounds.last().map(|r| r.global.as_slice())
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.rounds.last().map(|r| r.loss)
    }

    /// Trace as CSV: `round,client,sigma,price,global_loss` per client and
    /// round, then one `summary` row holding the mean sigma, the total of all
    /// prices and the final loss.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "round,client,sigma,price,global_loss")?;
        for r in &self.rounds {
            for (i, s) in self.sigmas.iter().enumerate() {
                let price = r.prices.get(i).copied().unwrap_or(0.0);
                writeln!(out, "{},{},{},{},{}", r.round, i, s, price, r.loss)?;
            }
        }
        let mean_sigma = self.sigmas.iter().sum::<f64>() / self.sigmas.len().max(1) as f64;
        let total: f64 = self.cumulative_prices.iter().sum();
        writeln!(out, "summary,all,{},{},{}", mean_sigma, total, self.final_loss().unwrap_or(f64::NAN))
    }
}

/// Noise stream of `client` in `round`.
fn noise_stream(client: usize, round: usize) -> u64 {
    ((client as u64) << 32) | round as u64
}

/// Runs `learning.rounds` rounds from `w = 0`. Deterministic in `seed`,
/// whatever `exec` is.
pub fn run_federation(
    datasets: &[Dataset],
    noise: &[f64],
    agg: &AggregationRule,
    pricing: Option<&RoundPricing>,
    cfg: &FederationConfig,
    seed: u64,
    exec: Execution,
) -> Result<FederationTrace> {
    let n = datasets.len();
    if n == 0 || noise.len() != n {
        return Err(Error::shape(format!("{n} datasets but {} noise levels", noise.len())));
    }
    if let Some(s) = noise.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::domain(format!("noise level {s} must be nonnegative")));
    }
    cfg.svm.validate()?;
    let pooled = Dataset::pooled(datasets)?;
    let d = pooled.dim();
    let mut w = vec![0.0; d];
    let mut trace = FederationTrace { sigmas: noise.to_vec(), rounds: Vec::new(), cumulative_prices: vec![0.0; n] };
    let step = cfg.learning.step_size;
    for t in 0..cfg.learning.rounds {
        let local: Vec<Result<Vec<f64>>> = map_indexed(exec, n, |i| {
            let mut wi = w.clone();
            for _ in 0..cfg.local_steps {
                let g = local_gradient(&wi, &datasets[i], &cfg.svm)?;
                wi.iter_mut().zip(&g).for_each(|(a, b)| *a -= step * b);
            }
            let mut rng = stream_rng(seed, noise_stream(i, t));
            for v in wi.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += noise[i] * z;
            }
            Ok(wi)
        });
        let noisy: Vec<Vec<f64>> = local.into_iter().collect::<Result<_>>()?;
        w = match agg {
            AggregationRule::Mean => aggregate_mean(&noisy)?,
            AggregationRule::Mle => aggregate_mle(&noisy, &NoiseProfile::new(noise.to_vec())?)?,
            AggregationRule::MlePresumed(p) => aggregate_mle(&noisy, p)?,
        };
        let prices = match pricing {
            Some(p) => {
                let mut outcome = RoundOutcome::new(noisy, p.reports.clone());
                apply_prices(&mut outcome, &p.scheme, p.mode)?;
                outcome.prices
            }
            None => Vec::new(),
        };
        for (c, p) in trace.cumulative_prices.iter_mut().zip(&prices) {
            *c += p;
        }
        let loss = svm_loss(&w, &pooled, &cfg.svm);
        trace.rounds.push(RoundRecord { round: t, global: w.clone(), loss, prices });
        if !loss.is_finite() || loss > cfg.blowup {
            return Err(Error::Diverged { round: t, loss, partial: Box::new(trace) });
        }
    }
    Ok(trace)
}

/// `F(w^T) - F(w*)` on the pooled data.
pub fn empirical_loss_gap(trace: &FederationTrace, reference: &ReferenceOptimum) -> Result<f64> {
    let last = trace.final_loss().ok_or_else(|| Error::Setup("trace has no rounds".into()))?;
    Ok(last - reference.loss)
}

/// Fraction of samples on the correct side of the hyperplane.
pub fn accuracy(w: &[f64], data: &Dataset) -> f64 {
    let ok = data.features().iter().zip(data.labels()).filter(|(x, y)| *y * dot(w, x) > 0.0).count();
    ok as f64 / data.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> SvmConfig {
        SvmConfig { samples_per_client: 200, dim: 5, ..SvmConfig::default() }
    }

    #[test]
    fn gradient_special_cases() {
        let cfg = SvmConfig { lambda_reg: 0.5, ..small() };
        let data = Dataset::new(vec![vec![1.0, 0.0]], vec![1.0]).unwrap();
        // margin satisfied: only the ridge term remains
        let g = local_gradient(&[3.0, 1.0], &data, &cfg).unwrap();
        assert_eq!(g, vec![1.5, 0.5]);
        let g = local_gradient(&[0.0, 0.0], &data, &cfg).unwrap();
        assert_eq!(g, vec![-1.0, 0.0]);
        assert!(local_gradient(&[0.0], &data, &cfg).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = small();
        let data = &generate_synthetic(&cfg, 1, 3).unwrap()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let w: Vec<f64> = (0..cfg.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = local_gradient(&w, data, &cfg).unwrap();
            for k in 0..cfg.dim {
                let h = 1e-6;
                let mut up = w.clone();
                let mut dn = w.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (svm_loss(&up, data, &cfg) - svm_loss(&dn, data, &cfg)) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1e-2), "{fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn noiseless_run_is_gradient_descent() {
        let cfg = small();
        let one = generate_synthetic(&cfg, 1, 5).unwrap().remove(0);
        let data = vec![one.clone(), one.clone(), one];
        let l = estimate_l_smooth(&data[0], &cfg);
        let fc = FederationConfig::new(cfg, LearningConfig::new(l, 1.0, 40).unwrap());
        let tr = run_federation(&data, &[0.0; 3], &AggregationRule::Mean, None, &fc, 1, Execution::Sequential).unwrap();
        for pair in tr.rounds.windows(2) {
            assert!(pair[1].loss <= pair[0].loss + 1e-15);
        }
    }

    #[test]
    fn converged_noiseless_reference_separates() {
        let cfg = small();
        let data = generate_synthetic(&cfg, 2, 9).unwrap();
        let r = reference_optimum(&data, &cfg).unwrap();
        assert!(r.grad_norm <= REFERENCE_GRAD_TOL);
        assert!(accuracy(&r.w, &Dataset::pooled(&data).unwrap()) > 0.99);
    }

    #[test]
    fn reference_gap_nonnegative_and_self_consistent() {
        let cfg = small();
        let data = generate_synthetic(&cfg, 2, 4).unwrap();
        let r = reference_optimum(&data, &cfg).unwrap();
        let l = estimate_l_smooth(&Dataset::pooled(&data).unwrap(), &cfg);
        let fc = FederationConfig::new(cfg, LearningConfig::new(l, 1.0, 3000).unwrap());
        let tr = run_federation(&data, &[0.0, 0.0], &AggregationRule::Mean, None, &fc, 0, Execution::Parallel).unwrap();
        let gap = empirical_loss_gap(&tr, &r).unwrap();
        assert!((-1e-9..=1e-6).contains(&gap), "{gap}");
    }

    #[test]
    fn traces_are_bit_identical() {
        let cfg = small();
        let data = generate_synthetic(&cfg, 4, 2).unwrap();
        let fc = FederationConfig::new(cfg, LearningConfig::new(10.0, 1.0, 5).unwrap());
        let sig = [0.1, 0.2, 0.05, 0.3];
        let a = run_federation(&data, &sig, &AggregationRule::Mle, None, &fc, 77, Execution::Parallel).unwrap();
        let b = run_federation(&data, &sig, &AggregationRule::Mle, None, &fc, 77, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let mut x = Vec::new();
        let mut y = Vec::new();
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
        let text = String::from_utf8(x).unwrap();
        assert!(text.starts_with("round,client,sigma,price,global_loss\n"));
        assert!(text.lines().last().unwrap().starts_with("summary,all,"));
    }

    #[test]
    fn blowup_returns_partial_trace() {
        let cfg = small();
        let data = generate_synthetic(&cfg, 2, 2).unwrap();
        let fc = FederationConfig { blowup: 1.0, ..FederationConfig::new(cfg, LearningConfig::new(10.0, 1.0, 5).unwrap()) };
        match run_federation(&data, &[1e3, 1e3], &AggregationRule::Mean, None, &fc, 1, Execution::Sequential) {
            Err(Error::Diverged { round, partial, .. }) => {
                assert_eq!(round, 0);
                assert_eq!(partial.rounds.len(), 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn aggregate_noise_matches_error_scales() {
        // identical zero parameters: the aggregate is pure noise
        let sig = [0.5, 1.0, 2.0];
        let np = NoiseProfile::new(sig.to_vec()).unwrap();
        for (rule, target) in [
            (AggregationRule::Mle, crate::aggregation::delta_mle(&np)),
            (AggregationRule::Mean, crate::aggregation::delta_mean(&np)),
        ] {
            let rounds = 20_000;
            let (mut s1, mut s2) = (0.0, 0.0);
            for t in 0..rounds {
                let noisy: Vec<Vec<f64>> = (0..3)
                    .map(|i| {
                        let mut rng = stream_rng(5, noise_stream(i, t));
                        let z: f64 = StandardNormal.sample(&mut rng);
                        vec![sig[i] * z]
                    })
                    .collect();
                let v = match rule {
                    AggregationRule::Mle => aggregate_mle(&noisy, &np).unwrap()[0],
                    _ => aggregate_mean(&noisy).unwrap()[0],
                };
                s1 += v;
                s2 += v * v;
            }
            let n = rounds as f64;
            let sd = (s2 / n - (s1 / n).powi(2)).sqrt();
            let se = sd / (2.0 * (n - 1.0)).sqrt();
            assert!((sd - target).abs() < 3.0 * se, "{rule:?}: {sd} vs {target}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn loss_is_nonnegative(w in prop::collection::vec(-3.0f64..3.0, 5)) {
            let cfg = small();
            let data = &generate_synthetic(&cfg, 1, 1).unwrap()[0];
            prop_assert!(svm_loss(&w, data, &cfg) >= 0.0);
        }
    }
}
