//! Convergence and efficiency diagnostics over a [`DrawMatrix`]: split R-hat,
//! autocorrelation-based effective sample size, posterior summaries, and the
//! divergence / tree-depth audit.

use std::fmt::Write as _;

/// Per-draw sampler statistics, flattened chain-major.
#[derive(Clone, Debug, Default)]
pub struct SamplerStats {
    pub divergent: Vec<bool>,
    pub treedepth: Vec<u32>,
    pub energy: Vec<f64>,
    pub accept_stat: Vec<f64>,
}

/// Retained draws: chains x draws x named columns, plus per-draw sampler
/// statistics when produced by NUTS. Rectangular by construction.
#[derive(Clone, Debug)]
pub struct DrawMatrix {
    n_chains: usize,
    n_draws: usize,
    names: Vec<String>,
    /// Row-major values: chain, then draw, then column.
    values: Vec<f64>,
    stats: Option<SamplerStats>,
}

impl DrawMatrix {
    pub fn new(
        names: Vec<String>,
        n_chains: usize,
        n_draws: usize,
        values: Vec<f64>,
        stats: Option<SamplerStats>,
    ) -> Self {
        assert_eq!(values.len(), n_chains * n_draws * names.len());
        if let Some(s) = &stats {
            assert_eq!(s.divergent.len(), n_chains * n_draws);
            assert_eq!(s.treedepth.len(), n_chains * n_draws);
            assert_eq!(s.energy.len(), n_chains * n_draws);
            assert_eq!(s.accept_stat.len(), n_chains * n_draws);
        }
        DrawMatrix {
            n_chains,
            n_draws,
            names,
            values,
            stats,
        }
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn stats(&self) -> Option<&SamplerStats> {
        self.stats.as_ref()
    }

    pub fn value(&self, chain: usize, draw: usize, col: usize) -> f64 {
        self.values[(chain * self.n_draws + draw) * self.names.len() + col]
    }

    /// All draws of one column for one chain, in iteration order.
    pub fn column_chain(&self, col: usize, chain: usize) -> Vec<f64> {
        (0..self.n_draws).map(|d| self.value(chain, d, col)).collect()
    }

    /// Per-chain vectors for one column.
    pub fn column_chains(&self, col: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains).map(|c| self.column_chain(col, c)).collect()
    }

    /// Pooled draws of one column across chains, chain-major.
    pub fn column_pooled(&self, col: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_chains * self.n_draws);
        for c in 0..self.n_chains {
            for d in 0..self.n_draws {
                out.push(self.value(c, d, col));
            }
        }
        out
    }

    pub fn col_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Split potential scale reduction over half-chains:
/// sqrt((W (n-1)/n + B/n) / W). Needs >= 2 chains and >= 4 draws per chain;
/// returns NaN otherwise, and NaN when every half-chain is constant.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    if chains.len() < 2 || chains.iter().any(|c| c.len() < 4) {
        return f64::NAN;
    }
    let halves = split_chains(chains);
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let vars: Vec<f64> = halves.iter().map(|h| sample_variance(h)).collect();
    let w = mean(&vars);
    let b = n * sample_variance(&means);
    if w <= 0.0 {
        return f64::NAN;
    }
    ((w * (n - 1.0) / n + b / n) / w).sqrt()
}

/// Each chain split in half; an odd middle draw is dropped.
fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = chains.iter().map(|c| c.len()).min().unwrap();
    let half = n / 2;
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        out.push(c[..half].to_vec());
        out.push(c[n - half..n].to_vec());
    }
    out
}

/// Autocovariance of a centered series at one lag, divisor n (biased).
fn acov_lag(centered: &[f64], t: usize) -> f64 {
    let n = centered.len();
    let mut acc = 0.0;
    for i in 0..n - t {
        acc += centered[i] * centered[i + t];
    }
    acc / n as f64
}

/// Effective sample size, combined across chains, truncated by the
/// initial-monotone-positive-sequence rule and capped at
/// `total * log10(total)`.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    ess_with_cap(chains, None)
}

/// [`ess`] with an explicit super-efficiency cap (None = default cap).
///
/// Autocovariances are computed per lag directly (no FFT), only as far as the
/// truncation rule needs them.
pub fn ess_with_cap(chains: &[Vec<f64>], cap: Option<f64>) -> f64 {
    let m = chains.len();
    if m == 0 {
        return f64::NAN;
    }
    let n = chains.iter().map(|c| c.len()).min().unwrap();
    if n < 4 {
        return f64::NAN;
    }
    let centered: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| {
            let mu = mean(&c[..n]);
            c[..n].iter().map(|x| x - mu).collect()
        })
        .collect();
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(&c[..n])).collect();

    let nf = n as f64;
    let mean_acov = |t: usize| centered.iter().map(|c| acov_lag(c, t)).sum::<f64>() / m as f64;
    let mean_var = mean_acov(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_variance(&chain_means);
    }
    if !(var_plus > 0.0) {
        return f64::NAN;
    }

    let total = (m * n) as f64;
    let default_cap = total * total.log10().max(1.0);
    let cap = cap.unwrap_or(default_cap);

    let rho = |t: usize| 1.0 - (mean_var - mean_acov(t)) / var_plus;

    // Geyer pairs P_k = rho_{2k} + rho_{2k+1}; keep the initial strictly
    // positive sequence, then enforce monotone non-increase.
    let mut pair_sums: Vec<f64> = Vec::new();
    let mut k = 0usize;
    loop {
        let t = 2 * k;
        if t + 1 >= n.saturating_sub(2) {
            break;
        }
        let first = if t == 0 { 1.0 } else { rho(t) };
        let p = first + rho(t + 1);
        if !(p > 0.0) {
            break;
        }
        pair_sums.push(p);
        k += 1;
    }
    let mut running_min = f64::INFINITY;
    let mut tau = -1.0f64;
    for p in &pair_sums {
        running_min = running_min.min(*p);
        tau += 2.0 * running_min;
    }
    if !(tau > 0.0) {
        // Degenerate (perfectly antithetic) chains: report the cap.
        return cap;
    }
    (total / tau).min(cap)
}

/// Type-7 quantile (linear interpolation of order statistics) of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub q2_5: f64,
    pub q97_5: f64,
    pub ess: f64,
    pub rhat: f64,
}

/// Posterior summary per column, rows in declaration order.
pub fn summarize(draws: &DrawMatrix) -> Vec<SummaryRow> {
    assert!(draws.n_draws() > 0, "cannot summarize an empty draw matrix");
    let mut rows = Vec::with_capacity(draws.names().len());
    for (col, name) in draws.names().iter().enumerate() {
        let pooled = draws.column_pooled(col);
        let mut sorted = pooled.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let m = mean(&pooled);
        let sd = if pooled.len() > 1 {
            sample_variance(&pooled).sqrt()
        } else {
            0.0
        };
        let chains = draws.column_chains(col);
        rows.push(SummaryRow {
            name: name.clone(),
            mean: m,
            sd,
            median: quantile_sorted(&sorted, 0.5),
            q2_5: quantile_sorted(&sorted, 0.025),
            q97_5: quantile_sorted(&sorted, 0.975),
            ess: ess(&chains),
            rhat: split_rhat(&chains),
        });
    }
    rows
}

/// Divergence and tree-depth audit plus the worst-case mixing numbers.
#[derive(Clone, Debug)]
pub struct AuditReport {
    pub applicable: bool,
    pub n_iterations: usize,
    pub divergences: usize,
    pub treedepth_saturations: usize,
    pub max_treedepth: usize,
    pub min_ess: Option<(String, f64)>,
    pub max_rhat: Option<(String, f64)>,
    pub warnings: Vec<String>,
}

impl AuditReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.applicable {
            let _ = writeln!(
                out,
                "Sampler statistics not applicable (draws were not produced by NUTS)."
            );
        } else {
            let _ = writeln!(
                out,
                "{} of {} iterations ended with a divergence.",
                self.divergences, self.n_iterations
            );
            let _ = writeln!(
                out,
                "{} of {} iterations saturated the maximum tree depth of {}.",
                self.treedepth_saturations, self.n_iterations, self.max_treedepth
            );
        }
        if let Some((name, v)) = &self.min_ess {
            let _ = writeln!(out, "Smallest effective sample size: {v:.1} ({name}).");
        }
        if let Some((name, v)) = &self.max_rhat {
            let _ = writeln!(out, "Largest split R-hat: {v:.4} ({name}).");
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

/// Counts are exact sums of the per-draw flags; nothing is sampled.
pub fn audit(draws: &DrawMatrix, max_treedepth: usize) -> AuditReport {
    let mut warnings = Vec::new();
    let (applicable, divergences, saturations) = match draws.stats() {
        Some(stats) => {
            let d = stats.divergent.iter().filter(|f| **f).count();
            let s = stats
                .treedepth
                .iter()
                .filter(|t| **t as usize >= max_treedepth)
                .count();
            (true, d, s)
        }
        None => (false, 0, 0),
    };
    if divergences > 0 {
        warnings.push(format!(
            "{divergences} divergent transitions; consider raising adapt_delta"
        ));
    }

    let mut min_ess: Option<(String, f64)> = None;
    let mut max_rhat: Option<(String, f64)> = None;
    for (col, name) in draws.names().iter().enumerate() {
        let chains = draws.column_chains(col);
        let e = ess(&chains);
        let r = split_rhat(&chains);
        if e.is_finite() && min_ess.as_ref().map_or(true, |(_, b)| e < *b) {
            min_ess = Some((name.clone(), e));
        }
        if r.is_finite() && max_rhat.as_ref().map_or(true, |(_, b)| r > *b) {
            max_rhat = Some((name.clone(), r));
        }
    }
    if draws.n_chains() < 2 {
        warnings.push("split R-hat needs at least 2 chains; reported as NaN".into());
    }
    if let Some((name, r)) = &max_rhat {
        if *r > 1.05 {
            warnings.push(format!("R-hat {r:.3} for {name} exceeds 1.05"));
        }
    }
    AuditReport {
        applicable,
        n_iterations: draws.n_chains() * draws.n_draws(),
        divergences,
        treedepth_saturations: saturations,
        max_treedepth,
        min_ess,
        max_rhat,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_chains_give_large_rhat() {
        let chains = vec![vec![1.0; 100], vec![2.0; 100]];
        let r = split_rhat(&chains);
        // Between-chain variance dominates; W is zero within halves.
        assert!(r.is_nan() || r > 2.0);
        // Distinct constants with a little jitter: R-hat should blow up.
        let jitter = |c: f64| (0..100).map(|i| c + 1e-6 * (i % 7) as f64).collect::<Vec<_>>();
        let r = split_rhat(&[jitter(1.0), jitter(2.0)]);
        assert!(r > 2.0, "rhat = {r}");
    }

    #[test]
    fn mean_shift_detected() {
        // One chain with a 3-sd mean shift between halves: R-hat > 1.1.
        let n = 500;
        let mut c1 = Vec::with_capacity(n);
        for i in 0..n {
            let base = ((i * 2654435761) % 1000) as f64 / 1000.0 - 0.5;
            let shift = if i < n / 2 { 0.0 } else { 3.0 * 0.289 };
            c1.push(base + shift);
        }
        let c2: Vec<f64> = (0..n)
            .map(|i| ((i * 40503) % 1000) as f64 / 1000.0 - 0.5)
            .collect();
        let r = split_rhat(&[c1, c2]);
        assert!(r > 1.1, "rhat = {r}");
    }

    #[test]
    fn quantiles_match_order_statistics() {
        let chain: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let mut sorted = chain.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(quantile_sorted(&sorted, 0.5), 50.5);
        // type-7: h = 99 * 0.025 = 2.475 -> x[2] + 0.475 * (x[3]-x[2])
        assert!((quantile_sorted(&sorted, 0.025) - 3.475).abs() < 1e-12);
        assert!((quantile_sorted(&sorted, 0.975) - 97.525).abs() < 1e-12);
    }

    #[test]
    fn single_draw_summary() {
        let dm = DrawMatrix::new(vec!["x".into()], 1, 1, vec![5.0], None);
        let rows = summarize(&dm);
        assert_eq!(rows[0].mean, 5.0);
        assert_eq!(rows[0].median, 5.0);
        assert_eq!(rows[0].q2_5, 5.0);
        assert_eq!(rows[0].q97_5, 5.0);
        assert_eq!(rows[0].sd, 0.0);
    }

    #[test]
    fn audit_counts_flags_exactly() {
        let n = 10usize;
        let stats = SamplerStats {
            divergent: (0..2 * n).map(|i| i % 4 == 0).collect(),
            treedepth: (0..2 * n).map(|i| if i % 5 == 0 { 10 } else { 3 }).collect(),
            energy: vec![0.0; 2 * n],
            accept_stat: vec![0.9; 2 * n],
        };
        let values: Vec<f64> = (0..2 * n).map(|i| i as f64 * 0.37).collect();
        let dm = DrawMatrix::new(vec!["x".into()], 2, n, values, Some(stats));
        let report = audit(&dm, 10);
        assert!(report.applicable);
        assert_eq!(report.divergences, 5);
        assert_eq!(report.treedepth_saturations, 4);
        assert!(report.render().contains("5 of 20 iterations ended with a divergence."));
        assert!(report
            .render()
            .contains("4 of 20 iterations saturated the maximum tree depth of 10."));
    }

    #[test]
    fn audit_not_applicable_without_stats() {
        let dm = DrawMatrix::new(vec!["x".into()], 1, 4, vec![1.0, 2.0, 3.0, 4.0], None);
        let report = audit(&dm, 10);
        assert!(!report.applicable);
        assert!(report.render().contains("not applicable"));
    }

    #[test]
    fn antithetic_chain_allows_super_efficiency() {
        // Perfectly alternating draws are negatively correlated: ESS can
        // exceed the draw count but stays below the cap.
        let n = 1000usize;
        let chains: Vec<Vec<f64>> = (0..2)
            .map(|c| {
                (0..n)
                    .map(|i| if (i + c) % 2 == 0 { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        let total = (2 * n) as f64;
        let e = ess(&chains);
        assert!(e >= total, "ess = {e}");
        assert!(e <= total * total.log10() + 1e-9);
    }
}
