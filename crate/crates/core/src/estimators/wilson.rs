/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// One-sided 95% normal quantile.
pub const Z95_ONE_SIDED: f64 = 1.6448536269514722;

/// Wilson score interval for `hits` successes in `trials` Bernoulli trials.
/// With no trials the interval is `[0, 1]`.
pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let mut lo = (centre - half).max(0.0);
    let mut hi = (centre + half).min(1.0);
    // exact endpoints at the boundary, and guard against rounding past p
    if hits == 0 {
        lo = 0.0;
    }
    if hits == trials {
        hi = 1.0;
    }
    (lo.min(p), hi.max(p))
}

pub fn wilson95(hits: u64, trials: u64) -> (f64, f64) {
    wilson_interval(hits, trials, Z95)
}

/// Lower confidence bound for `p_later - p_earlier` (Newcombe's hybrid score
/// method built from Wilson intervals at quantile `z`).
pub fn difference_lower_bound(later: (u64, u64), earlier: (u64, u64), z: f64) -> f64 {
    let p = |(h, n): (u64, u64)| if n == 0 { 0.0 } else { h as f64 / n as f64 };
    let (p1, p2) = (p(later), p(earlier));
    let (l1, _) = wilson_interval(later.0, later.1, z);
    let (_, u2) = wilson_interval(earlier.0, earlier.1, z);
    (p1 - p2) - ((p1 - l1).powi(2) + (u2 - p2).powi(2)).sqrt()
}

/// Whether a sequence of `(hits, trials)` frequencies is nonincreasing up to
/// binomial noise: no consecutive increase is significant at one-sided 95%.
pub fn nonincreasing_one_sided(counts: &[(u64, u64)]) -> bool {
    counts
        .windows(2)
        .all(|w| difference_lower_bound(w[1], w[0], Z95_ONE_SIDED) <= 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    #[test]
    fn known_interval() {
        // 10 of 100: Wilson (0.05522914, 0.17436566)
        let (lo, hi) = wilson95(10, 100);
        assert!((lo - 0.055_229_137_1).abs() < 1e-8, "{lo}");
        assert!((hi - 0.174_365_661_6).abs() < 1e-8, "{hi}");
    }

    #[test]
    fn degenerate_counts() {
        assert_eq!(wilson95(0, 0), (0.0, 1.0));
        let (lo, hi) = wilson95(0, 50);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
        let (lo, hi) = wilson95(50, 50);
        assert_eq!(hi, 1.0);
        assert!(lo > 0.9);
    }

    #[test]
    fn coverage_on_bernoulli_data() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        for &(p, n) in &[(0.3, 200u64), (0.05, 500), (0.5, 50)] {
            let reps = 10_000;
            let mut covered = 0;
            for _ in 0..reps {
                let hits = (0..n).filter(|_| rng.random::<f64>() < p).count() as u64;
                let (lo, hi) = wilson95(hits, n);
                covered += u64::from(lo <= p && p <= hi);
            }
            let c = covered as f64 / reps as f64;
            assert!((0.93..=0.97).contains(&c), "p={p} n={n}: coverage {c}");
        }
    }

    #[test]
    fn monotonicity_test() {
        assert!(nonincreasing_one_sided(&[(100, 1000), (60, 1000), (0, 1000)]));
        assert!(nonincreasing_one_sided(&[(50, 1000), (55, 1000)]));
        assert!(!nonincreasing_one_sided(&[(10, 1000), (100, 1000)]));
        assert!(nonincreasing_one_sided(&[(0, 1000), (0, 1000), (0, 1000)]));
    }
}
