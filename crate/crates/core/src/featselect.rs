//! Filter-style feature importance: Wilcoxon rank-sum, two-sample z,
//! chi-squared over equal-width bins, and Relief, combined by mean rank.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Returned by [`zscore_sep`] when both groups are constant but differ.
pub const INFINITE_SEPARATION: f64 = f64::INFINITY;

pub const DEFAULT_CHI2_BINS: usize = 10;

/// 1-based ranks of `values` with ties given their average rank.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Absolute z statistic of the Wilcoxon rank-sum test (normal
/// approximation, midranks, tie-corrected variance, no continuity
/// correction).
pub fn ranksum_score(group0: &[f64], group1: &[f64]) -> Result<f64> {
    if group0.is_empty() || group1.is_empty() {
        return Err(Error::invalid("rank-sum needs two non-empty groups"));
    }
    let n0 = group0.len() as f64;
    let n1 = group1.len() as f64;
    let n = n0 + n1;
    let pooled: Vec<f64> = group0.iter().chain(group1).copied().collect();
    let ranks = midranks(&pooled);
    let w1: f64 = ranks[group0.len()..].iter().sum();
    let expected = n1 * (n + 1.0) / 2.0;

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    for run in sorted.chunk_by(|a, b| a == b) {
        let t = run.len() as f64;
        tie_term += t * t * t - t;
    }
    let variance = n0 * n1 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)).max(1.0));
    if variance <= 0.0 {
        return Ok(0.0);
    }
    Ok(((w1 - expected) / variance.sqrt()).abs())
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// `|mean1 - mean0| / sqrt(var0/n0 + var1/n1)` with sample variances.
pub fn zscore_sep(group0: &[f64], group1: &[f64]) -> Result<f64> {
    if group0.len() < 2 || group1.len() < 2 {
        return Err(Error::invalid(
            "z separation needs at least two samples per group",
        ));
    }
    let (m0, v0) = mean_var(group0);
    let (m1, v1) = mean_var(group1);
    let diff = (m1 - m0).abs();
    let se2 = v0 / group0.len() as f64 + v1 / group1.len() as f64;
    if se2 == 0.0 {
        return Ok(if diff == 0.0 {
            0.0
        } else {
            INFINITE_SEPARATION
        });
    }
    Ok(diff / se2.sqrt())
}

/// Chi-squared statistic of an equal-width binning of `values` against a
/// binary label. Empty bins carry no expected mass and are dropped, which
/// is the same as merging them into a neighbour.
pub fn chi2_score(values: &[f64], labels: &[u8], num_bins: usize) -> Result<f64> {
    if values.len() != labels.len() {
        return Err(Error::Dimension {
            expected: values.len(),
            got: labels.len(),
        });
    }
    let n1 = labels.iter().filter(|&&l| l == 1).count();
    let n0 = labels.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::invalid("chi-squared needs both labels present"));
    }
    let num_bins = num_bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Ok(0.0);
    }
    let width = (hi - lo) / num_bins as f64;
    let mut table = vec![[0usize; 2]; num_bins];
    for (&v, &l) in values.iter().zip(labels) {
        let bin = (((v - lo) / width) as usize).min(num_bins - 1);
        table[bin][usize::from(l == 1)] += 1;
    }
    let n = labels.len() as f64;
    let totals = [n0 as f64, n1 as f64];
    let mut chi2 = 0.0;
    for row in table.iter().filter(|r| r[0] + r[1] > 0) {
        let row_total = (row[0] + row[1]) as f64;
        for c in 0..2 {
            let expected = row_total * totals[c] / n;
            chi2 += (row[c] as f64 - expected).powi(2) / expected;
        }
    }
    Ok(chi2)
}

/// Rescales each column to [0, 1]; constant columns become 0.
pub fn min_max_scale(samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dims = samples.first().map_or(0, Vec::len);
    let mut lo = vec![f64::INFINITY; dims];
    let mut hi = vec![f64::NEG_INFINITY; dims];
    for s in samples {
        for (d, &v) in s.iter().enumerate() {
            lo[d] = lo[d].min(v);
            hi[d] = hi[d].max(v);
        }
    }
    samples
        .iter()
        .map(|s| {
            s.iter()
                .enumerate()
                .map(|(d, &v)| {
                    let range = hi[d] - lo[d];
                    if range > 0.0 {
                        (v - lo[d]) / range
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn sq_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Classic Relief weights. Features are min-max scaled first. When
/// `num_iterations` reaches the sample count every sample is visited once
/// in order; otherwise instances are drawn with replacement from a seeded
/// generator. Neighbour ties go to the lowest index.
pub fn relief_score(
    samples: &[Vec<f64>],
    labels: &[u8],
    num_iterations: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if samples.len() != labels.len() {
        return Err(Error::Dimension {
            expected: samples.len(),
            got: labels.len(),
        });
    }
    for class in [0u8, 1] {
        if !labels.contains(&class) {
            return Err(Error::MissingClass { missing: class });
        }
    }
    let scaled = min_max_scale(samples);
    let dims = scaled[0].len();
    let picks: Vec<usize> = if num_iterations >= samples.len() {
        (0..samples.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..num_iterations.max(1))
            .map(|_| rng.gen_range(0..samples.len()))
            .collect()
    };
    let mut weights = vec![0.0; dims];
    for &i in &picks {
        let mut hit: Option<(f64, usize)> = None;
        let mut miss: Option<(f64, usize)> = None;
        for j in 0..scaled.len() {
            if j == i {
                continue;
            }
            let d = sq_distance(&scaled[i], &scaled[j]);
            let slot = if labels[j] == labels[i] {
                &mut hit
            } else {
                &mut miss
            };
            if slot.is_none_or(|(best, _)| d < best) {
                *slot = Some((d, j));
            }
        }
        for f in 0..dims {
            let x = scaled[i][f];
            if let Some((_, m)) = miss {
                weights[f] += (x - scaled[m][f]).powi(2);
            }
            if let Some((_, h)) = hit {
                weights[f] -= (x - scaled[h][f]).powi(2);
            }
        }
    }
    let m = picks.len() as f64;
    Ok(weights.into_iter().map(|w| w / m).collect())
}

/// Importance scores for one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScore {
    pub name: String,
    pub ranksum_z: f64,
    pub zscore_sep: f64,
    pub chi2: f64,
    pub relief_weight: f64,
    /// 1-based position in the combined ordering.
    pub combined_rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScoreTable {
    pub rows: Vec<FeatureScore>,
}

/// Descending-score midranks for one method.
fn method_ranks(scores: &[f64]) -> Vec<f64> {
    let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
    midranks(&negated)
}

/// Mean of the per-method rank positions of each row.
pub fn borda_means(table: &FeatureScoreTable) -> Vec<f64> {
    let columns: [Vec<f64>; 4] = [
        table.rows.iter().map(|r| r.ranksum_z).collect(),
        table.rows.iter().map(|r| r.zscore_sep).collect(),
        table.rows.iter().map(|r| r.chi2).collect(),
        table.rows.iter().map(|r| r.relief_weight).collect(),
    ];
    let ranks: Vec<Vec<f64>> = columns.iter().map(|c| method_ranks(c)).collect();
    (0..table.rows.len())
        .map(|i| ranks.iter().map(|r| r[i]).sum::<f64>() / 4.0)
        .collect()
}

/// Features ordered by mean rank (best first), ties by name. Also fills in
/// `combined_rank` on the table.
pub fn combined_ranking(table: &mut FeatureScoreTable) -> Vec<String> {
    let means = borda_means(table);
    let mut order: Vec<usize> = (0..table.rows.len()).collect();
    order.sort_by(|&a, &b| {
        means[a]
            .partial_cmp(&means[b])
            .unwrap_or(Ordering::Equal)
            .then_with(|| table.rows[a].name.cmp(&table.rows[b].name))
    });
    for (pos, &i) in order.iter().enumerate() {
        table.rows[i].combined_rank = pos + 1;
    }
    order.iter().map(|&i| table.rows[i].name.clone()).collect()
}

/// Scores every column of `samples` with all four filters and ranks them.
pub fn score_features(
    names: &[String],
    samples: &[Vec<f64>],
    labels: &[u8],
    relief_iterations: usize,
    seed: u64,
) -> Result<FeatureScoreTable> {
    let relief = relief_score(samples, labels, relief_iterations, seed)?;
    let mut rows = Vec::with_capacity(names.len());
    for (f, name) in names.iter().enumerate() {
        let column: Vec<f64> = samples.iter().map(|s| s[f]).collect();
        let (g0, g1): (Vec<(f64, u8)>, Vec<(f64, u8)>) = column
            .iter()
            .copied()
            .zip(labels.iter().copied())
            .partition(|&(_, l)| l == 0);
        let g0: Vec<f64> = g0.into_iter().map(|p| p.0).collect();
        let g1: Vec<f64> = g1.into_iter().map(|p| p.0).collect();
        rows.push(FeatureScore {
            name: name.clone(),
            ranksum_z: ranksum_score(&g0, &g1)?,
            zscore_sep: if g0.len() >= 2 && g1.len() >= 2 {
                zscore_sep(&g0, &g1)?
            } else {
                0.0
            },
            chi2: chi2_score(&column, labels, DEFAULT_CHI2_BINS)?,
            relief_weight: relief[f],
            combined_rank: 0,
        });
    }
    let mut table = FeatureScoreTable { rows };
    combined_ranking(&mut table);
    Ok(table)
}

impl FeatureScoreTable {
    /// Tab-separated table with a header, rows in combined-rank order.
    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<&FeatureScore> = self.rows.iter().collect();
        rows.sort_by_key(|r| r.combined_rank);
        let mut out =
            String::from("feature\tranksum_z\tzscore_sep\tchi2\trelief_weight\tcombined_rank\n");
        for r in rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.name, r.ranksum_z, r.zscore_sep, r.chi2, r.relief_weight, r.combined_rank
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midranks_with_ties() {
        assert_eq!(
            midranks(&[10.0, 20.0, 10.0, 30.0]),
            vec![1.5, 3.0, 1.5, 4.0]
        );
    }

    #[test]
    fn ranksum_identical_groups() {
        let g = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ranksum_score(&g, &g).unwrap(), 0.0);
    }

    #[test]
    fn ranksum_fully_separated() {
        // W1 = 4+5+6 = 15, E = 3*7/2 = 10.5, Var = 9*7/12 = 5.25
        let z = ranksum_score(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]).unwrap();
        assert!((z - 4.5 / 5.25f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ranksum_large_shift() {
        let g0: Vec<f64> = (0..50).map(|i| i as f64 * 0.37 % 7.0).collect();
        let g1: Vec<f64> = g0.iter().map(|v| v + 1000.0).collect();
        assert!(ranksum_score(&g0, &g1).unwrap() > 5.0);
    }

    #[test]
    fn ranksum_rejects_empty() {
        assert!(ranksum_score(&[], &[1.0]).is_err());
    }

    #[test]
    fn zscore_cases() {
        let g = [1.0, 2.0, 3.0];
        assert_eq!(zscore_sep(&g, &g).unwrap(), 0.0);
        assert_eq!(
            zscore_sep(&[1.0, 1.0], &[2.0, 2.0]).unwrap(),
            INFINITE_SEPARATION
        );
        assert_eq!(zscore_sep(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(zscore_sep(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zscore_unit_variances() {
        // 100 values of +-1 around each mean give sample variance 100/99;
        // rescale to exactly 1.
        let s = (99.0f64 / 100.0).sqrt();
        let g0: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { s } else { -s }).collect();
        let g1: Vec<f64> = g0.iter().map(|v| v + 1.0).collect();
        let z = zscore_sep(&g0, &g1).unwrap();
        assert!((z - 1.0 / 0.02f64.sqrt()).abs() < 1e-9, "{z}");
    }

    #[test]
    fn chi2_cases() {
        let labels = [0u8, 1, 0, 1, 1, 0, 0, 1];
        let values: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        assert!((chi2_score(&values, &labels, 10).unwrap() - 8.0).abs() < 1e-12);
        assert_eq!(chi2_score(&[3.0; 8], &labels, 10).unwrap(), 0.0);
        let indep = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0];
        let lab = [0u8, 1, 0, 1, 0, 1, 0, 1];
        assert!(chi2_score(&indep, &lab, 10).unwrap() < 1e-12);
        assert!(chi2_score(&indep, &[0; 8], 10).is_err());
    }

    #[test]
    fn relief_constant_and_duplicate_features() {
        let samples: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let x = (i * 7 % 11) as f64;
                vec![5.0, x, x, (i % 3) as f64]
            })
            .collect();
        let labels: Vec<u8> = (0..20).map(|i| ((i * 7 % 11) > 5) as u8).collect();
        let w = relief_score(&samples, &labels, 100, 1).unwrap();
        assert_eq!(w[0], 0.0);
        assert!((w[1] - w[2]).abs() < 1e-12);
        assert!(w.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn relief_missing_class() {
        let samples = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            relief_score(&samples, &[1, 1], 2, 0),
            Err(Error::MissingClass { missing: 0 })
        ));
    }

    fn row(name: &str, s: [f64; 4]) -> FeatureScore {
        FeatureScore {
            name: name.into(),
            ranksum_z: s[0],
            zscore_sep: s[1],
            chi2: s[2],
            relief_weight: s[3],
            combined_rank: 0,
        }
    }

    #[test]
    fn unanimous_best_first_and_name_ties() {
        let mut t = FeatureScoreTable {
            rows: vec![
                row("b", [1.0, 1.0, 1.0, 0.1]),
                row("a", [1.0, 1.0, 1.0, 0.1]),
                row("top", [9.0, 9.0, 9.0, 0.9]),
            ],
        };
        assert_eq!(combined_ranking(&mut t), vec!["top", "a", "b"]);
        assert_eq!(
            t.rows.iter().map(|r| r.combined_rank).collect::<Vec<_>>(),
            vec![3, 2, 1]
        );
    }

    #[test]
    fn borda_six_features() {
        // Per-method descending ranks worked out by hand:
        //        rs  z  chi relief  mean
        // f1      1  2   3   6      3.0
        // f2      2  1   1   5      2.25
        // f3      3  3   2   4      3.0
        // f4      4  5   6   1      4.0
        // f5      5  4   4   2      3.75
        // f6      6  6   5   3      5.0
        let mut t = FeatureScoreTable {
            rows: vec![
                row("f1", [6.0, 5.0, 4.0, 0.1]),
                row("f2", [5.0, 6.0, 6.0, 0.2]),
                row("f3", [4.0, 4.0, 5.0, 0.3]),
                row("f4", [3.0, 2.0, 1.0, 0.6]),
                row("f5", [2.0, 3.0, 3.0, 0.5]),
                row("f6", [1.0, 1.0, 2.0, 0.4]),
            ],
        };
        assert_eq!(borda_means(&t), vec![3.0, 2.25, 3.0, 4.0, 3.75, 5.0]);
        assert_eq!(
            combined_ranking(&mut t),
            vec!["f2", "f1", "f3", "f5", "f4", "f6"]
        );
    }
}
