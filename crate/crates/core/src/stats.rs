//! Rank statistics and aggregation summaries: Kruskal-Wallis test with
//! midrank tie handling, five-number box summaries, and the chi-square
//! upper tail computed through the regularized incomplete gamma function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A labelled sample of observations (e.g. per-fold accuracies of one model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub label: String,
    pub values: Vec<f64>,
}

impl GroupSample {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        GroupSample {
            label: label.into(),
            values,
        }
    }
}

/// Result of a Kruskal-Wallis test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub df: usize,
    pub p_value: f64,
}

impl KruskalWallis {
    /// Reject the same-distribution null hypothesis at the 5% level.
    pub fn reject_at_0_05(&self) -> bool {
        self.p_value < 0.05
    }
}

/// Kruskal-Wallis H test over two or more groups, with tie correction.
pub fn kruskal_wallis(groups: &[GroupSample]) -> Result<KruskalWallis> {
    kruskal_wallis_opts(groups, true)
}

/// H = 12/(N(N+1)) * sum(R_i^2 / n_i) - 3(N+1) over pooled midranks; when
/// `tie_correction` is set, H is divided by 1 - sum(t^3 - t)/(N^3 - N).
/// All-identical observations make H undefined; reported as H = 0, p = 1.
pub fn kruskal_wallis_opts(groups: &[GroupSample], tie_correction: bool) -> Result<KruskalWallis> {
    if groups.len() < 2 {
        return Err(Error::invalid(format!(
            "kruskal_wallis needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    for g in groups {
        if g.values.is_empty() {
            return Err(Error::EmptyInput(format!("group {:?} is empty", g.label)));
        }
        if g.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "group {:?} contains a non-finite observation",
                g.label
            )));
        }
    }

    let mut pooled: Vec<(f64, usize)> = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        pooled.extend(g.values.iter().map(|&v| (v, gi)));
    }
    let n = pooled.len();
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // midranks and tie counts
    let mut ranks = vec![0.0f64; n];
    let mut tie_term = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0; // ranks are 1-based
        for r in ranks.iter_mut().take(j + 1).skip(i) {
            *r = midrank;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }

    let mut rank_sums = vec![0.0f64; groups.len()];
    for (k, &(_, gi)) in pooled.iter().enumerate() {
        rank_sums[gi] += ranks[k];
    }

    let nf = n as f64;
    let mut h = groups
        .iter()
        .enumerate()
        .map(|(gi, g)| rank_sums[gi] * rank_sums[gi] / g.values.len() as f64)
        .sum::<f64>()
        * 12.0
        / (nf * (nf + 1.0))
        - 3.0 * (nf + 1.0);

    let df = groups.len() - 1;
    if tie_correction {
        let correction = 1.0 - tie_term / (nf * nf * nf - nf);
        if correction <= 0.0 {
            // every observation identical
            return Ok(KruskalWallis {
                h: 0.0,
                df,
                p_value: 1.0,
            });
        }
        h /= correction;
    }
    // rounding can push a tiny negative through the subtraction
    if h < 0.0 && h > -1e-9 {
        h = 0.0;
    }

    Ok(KruskalWallis {
        h,
        df,
        p_value: chi_square_upper_tail(h, df as f64),
    })
}

/// P(X > x) for a chi-square variable with `df` degrees of freedom.
pub fn chi_square_upper_tail(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(df / 2.0, x / 2.0)
}

/// Regularized upper incomplete gamma Q(a, x), series for x < a+1 and
/// continued fraction otherwise. Accurate to ~1e-10 for the df range used
/// here (df <= 50).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_q domain");
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cont_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-15 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_cont_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Lanczos approximation of ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 14] = [
        57.156_235_665_862_92,
        -59.597_960_355_475_49,
        14.136_097_974_741_746,
        -0.491_913_816_097_620_2,
        3.399_464_998_481_189e-5,
        4.652_362_892_704_858e-5,
        -9.837_447_530_487_956e-5,
        1.580_887_032_249_125e-4,
        -2.102_644_417_241_049e-4,
        2.174_396_181_152_126e-4,
        -1.643_181_065_367_639e-4,
        8.441_822_398_385_275e-5,
        -2.619_083_840_158_141e-5,
        3.689_918_265_953_162e-6,
    ];
    assert!(x > 0.0, "ln_gamma domain");
    let mut y = x;
    let tmp = x + 5.242_187_5;
    let tmp = (x + 0.5) * tmp.ln() - tmp;
    let mut ser = 0.999_999_999_999_997_1;
    for c in COEFFS {
        y += 1.0;
        ser += c / y;
    }
    tmp + (2.506_628_274_631_000_5 * ser / x).ln()
}

/// Five-number summary plus mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Compensated (Kahan) summation; keeps means of constant inputs exact.
pub(crate) fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Build a box summary with linear-interpolation (type-7) quantiles.
pub fn box_summary(values: &[f64]) -> Result<BoxSummary> {
    if values.is_empty() {
        return Err(Error::EmptyInput("box_summary of empty input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = kahan_sum(sorted.iter().copied()) / sorted.len() as f64;
    Ok(BoxSummary {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        mean,
    })
}

/// Type-7 quantile of a sorted slice: index h = (n-1)p, linearly
/// interpolated between the bracketing order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(label: &str, values: &[f64]) -> GroupSample {
        GroupSample::new(label, values.to_vec())
    }

    /// Chi-square upper tail via adaptive Simpson quadrature of the density,
    /// independent of the incomplete-gamma path.
    fn chi2_tail_quadrature(x: f64, df: f64) -> f64 {
        let pdf = |t: f64| -> f64 {
            if t <= 0.0 {
                0.0
            } else {
                let k = df / 2.0;
                (-t / 2.0 + (k - 1.0) * t.ln() - k * 2f64.ln() - ln_gamma(k)).exp()
            }
        };
        // integrate pdf over [x, x + 60 + 10 df] with composite Simpson
        let upper = x + 60.0 + 10.0 * df;
        let steps = 200_000;
        let h = (upper - x) / steps as f64;
        let mut acc = pdf(x) + pdf(upper);
        for i in 1..steps {
            let t = x + i as f64 * h;
            acc += pdf(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn hand_ranked_two_group_example() {
        // pooled ranks 1..6, R1 = 1+2+3 = 6, R2 = 4+5+6 = 15
        // H = 12/(6*7) * (36/3 + 225/3) - 3*7 = 27/7
        let kw = kruskal_wallis(&[g("a", &[1.0, 2.0, 3.0]), g("b", &[4.0, 5.0, 6.0])]).unwrap();
        assert!((kw.h - 27.0 / 7.0).abs() < 1e-12);
        assert!((kw.h - 3.857).abs() < 1e-3);
        assert_eq!(kw.df, 1);
        assert!(kw.p_value < 0.05);
    }

    #[test]
    fn identical_groups_do_not_reject() {
        let kw = kruskal_wallis(&[g("a", &[1.0, 2.0, 3.0]), g("b", &[1.0, 2.0, 3.0])]).unwrap();
        assert!(kw.p_value > 0.05);
    }

    #[test]
    fn all_constant_observations_degenerate() {
        let kw = kruskal_wallis(&[g("a", &[2.0, 2.0]), g("b", &[2.0, 2.0, 2.0])]).unwrap();
        assert_eq!(kw.h, 0.0);
        assert_eq!(kw.p_value, 1.0);
    }

    #[test]
    fn permuting_within_groups_leaves_h_unchanged() {
        let a = kruskal_wallis(&[g("a", &[3.0, 1.0, 2.0]), g("b", &[6.0, 4.0, 5.0])]).unwrap();
        let b = kruskal_wallis(&[g("a", &[1.0, 2.0, 3.0]), g("b", &[4.0, 5.0, 6.0])]).unwrap();
        assert_eq!(a.h, b.h);
    }

    #[test]
    fn monotone_transform_invariance() {
        let base = [
            g("a", &[0.1, 0.4, 0.35]),
            g("b", &[0.2, 0.8, 0.5]),
            g("c", &[0.3, 0.9, 0.7, 0.6]),
        ];
        let transformed: Vec<GroupSample> = base
            .iter()
            .map(|gr| {
                GroupSample::new(
                    gr.label.clone(),
                    gr.values.iter().map(|&v| (3.0 * v).exp() + 1.0).collect(),
                )
            })
            .collect();
        let h0 = kruskal_wallis(&base).unwrap().h;
        let h1 = kruskal_wallis(&transformed).unwrap().h;
        assert!((h0 - h1).abs() < 1e-12);
    }

    #[test]
    fn tie_correction_matches_known_case() {
        // groups {1,1,2} and {2,3,3}: ranks 1.5,1.5,3.5 | 3.5,5.5,5.5
        // uncorrected H = 12/(6*7)*(6.5^2/3 + 14.5^2/3) - 21 = 3.0476190...
        // ties: three pairs -> sum(t^3 - t) = 18, correction = 1 - 18/210
        let groups = [g("a", &[1.0, 1.0, 2.0]), g("b", &[2.0, 3.0, 3.0])];
        let raw = kruskal_wallis_opts(&groups, false).unwrap();
        let corrected = kruskal_wallis_opts(&groups, true).unwrap();
        let expected_raw = 12.0 / 42.0 * (6.5f64.powi(2) / 3.0 + 14.5f64.powi(2) / 3.0) - 21.0;
        assert!((raw.h - expected_raw).abs() < 1e-12);
        assert!((corrected.h - expected_raw / (1.0 - 18.0 / 210.0)).abs() < 1e-12);
    }

    #[test]
    fn two_group_h_is_squared_standardized_rank_sum() {
        // without ties, H = z^2 where z standardizes R1 against its null
        // mean n1(N+1)/2 and variance n1*n2*(N+1)/12
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n1 = rng.random_range(3..10);
            let n2 = rng.random_range(3..10);
            let mut pool: Vec<f64> = (0..n1 + n2).map(|i| i as f64).collect();
            for i in (1..pool.len()).rev() {
                pool.swap(i, rng.random_range(0..=i));
            }
            let (a, b) = pool.split_at(n1);
            let kw = kruskal_wallis(&[g("a", a), g("b", b)]).unwrap();

            // rank-sum oracle: values are distinct integers, rank = value + 1
            let r1: f64 = a.iter().map(|&v| v + 1.0).sum();
            let n = (n1 + n2) as f64;
            let mean = n1 as f64 * (n + 1.0) / 2.0;
            let var = (n1 * n2) as f64 * (n + 1.0) / 12.0;
            let z = (r1 - mean) / var.sqrt();
            assert!(
                (kw.h - z * z).abs() < 1e-10,
                "H {} vs z^2 {}",
                kw.h,
                z * z
            );
        }
    }

    #[test]
    fn rejects_fewer_than_two_groups() {
        assert!(kruskal_wallis(&[g("a", &[1.0])]).is_err());
        assert!(kruskal_wallis(&[g("a", &[1.0]), g("b", &[])]).is_err());
    }

    #[test]
    fn chi_square_tail_matches_quadrature() {
        for (x, df) in [
            (3.857142857142857, 1.0),
            (1.0, 1.0),
            (5.0, 3.0),
            (10.5, 7.0),
            (30.0, 23.0),
        ] {
            let p = chi_square_upper_tail(x, df);
            let q = chi2_tail_quadrature(x, df);
            assert!(
                (p - q).abs() < 1e-6,
                "df={df} x={x}: gamma {p} vs quadrature {q}"
            );
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        // Γ(1) = 1, Γ(2) = 1, Γ(5) = 24, Γ(0.5) = sqrt(pi)
        assert!(ln_gamma(1.0).abs() < 1e-12);
        assert!(ln_gamma(2.0).abs() < 1e-12);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn box_summary_five_numbers() {
        let b = box_summary(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((b.min, b.median, b.max), (1.0, 3.0, 5.0));
        assert_eq!(b.q1, 2.0);
        assert_eq!(b.q3, 4.0);
        assert_eq!(b.mean, 3.0);
    }

    #[test]
    fn box_summary_constant_input() {
        let b = box_summary(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(
            (b.min, b.q1, b.median, b.q3, b.max, b.mean),
            (2.0, 2.0, 2.0, 2.0, 2.0, 2.0)
        );
    }

    #[test]
    fn box_summary_shuffle_invariant_and_ordered() {
        let sorted: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut shuffled = sorted.clone();
        shuffled.reverse();
        shuffled.swap(3, 77);
        let a = box_summary(&sorted).unwrap();
        let b = box_summary(&shuffled).unwrap();
        assert_eq!(a, b);
        assert!(a.min <= a.q1 && a.q1 <= a.median && a.median <= a.q3 && a.q3 <= a.max);
    }

    #[test]
    fn quantiles_match_sort_based_oracle() {
        // brute force: for p landing exactly on an order statistic index,
        // type-7 returns that element
        let values: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let b = box_summary(&values).unwrap();
        assert_eq!(b.q1, 25.0);
        assert_eq!(b.median, 50.0);
        assert_eq!(b.q3, 75.0);
    }

    proptest::proptest! {
        #[test]
        fn h_is_nonnegative(values in proptest::collection::vec(0.0f64..1.0, 6..40)) {
            let mid = values.len() / 2;
            let groups = [g("a", &values[..mid]), g("b", &values[mid..])];
            let kw = kruskal_wallis(&groups).unwrap();
            assert!(kw.h >= 0.0);
            assert!((0.0..=1.0).contains(&kw.p_value));
        }

        #[test]
        fn box_summary_is_ordered(values in proptest::collection::vec(-1e4f64..1e4, 1..60)) {
            let b = box_summary(&values).unwrap();
            assert!(b.min <= b.q1 && b.q1 <= b.median && b.median <= b.q3 && b.q3 <= b.max);
        }
    }
}
