//! Per-event hypothesis testing between the grouped before/after matrices:
//! Student's t statistics, two-sided p-values via the regularized
//! incomplete beta function, and the after/before ratio statistics.

use crate::error::{Error, Result};
use crate::matrix::{EventIndex, FeatureMatrix};
use crate::readcode::{Dictionary, ReadCode};

/// Which t statistic to compute between the two group-count samples.
///
/// The groups are matched blocks of the same patients, so a paired test is
/// defensible; the independent pooled form is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TestKind {
    /// Independent two-sample t with pooled variance, df = 2G - 2.
    #[default]
    StudentPooled,
    /// Welch's unequal-variance t with Welch-Satterthwaite df.
    Welch,
    /// Paired t on per-group differences, df = G - 1.
    Paired,
}

/// Test settings for one detection run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConfig {
    pub kind: TestKind,
    /// Significance threshold in (0, 1).
    pub alpha: f64,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            kind: TestKind::StudentPooled,
            alpha: 0.05,
        }
    }
}

/// Full per-event result record.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStats {
    pub code: ReadCode,
    pub term: String,
    /// Patients with the event in the before window (column sum of X).
    pub n_before: u64,
    /// Patients with the event in the after window (column sum of Y).
    pub n_after: u64,
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value in [0, 1].
    pub p: f64,
    /// After/before patient ratio; equals `n_after` when `n_before` is 0.
    pub r1: f64,
    /// After-count share of the cohort, as a fraction (reports render x100).
    pub r2: f64,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_variance(values: &[f64], mean: f64) -> f64 {
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64
}

/// Student's t between two equal-length samples.
///
/// Returns `(t, df, p)` with `p` two-sided. Zero-variance columns are not
/// an error: two constant equal samples give `(0, df, 1)` and constant
/// unequal samples give `(±inf, df, 0)`, so every event stays rankable.
pub fn t_test(x: &[f64], y: &[f64], kind: TestKind) -> Result<(f64, f64, f64)> {
    assert_eq!(x.len(), y.len(), "samples must have equal length");
    let g = x.len();
    if g < 2 {
        return Err(Error::InsufficientGroups { n_groups: g });
    }
    let gf = g as f64;

    let (diff, se, df) = match kind {
        TestKind::StudentPooled => {
            let (mx, my) = (mean(x), mean(y));
            let pooled = (sample_variance(x, mx) + sample_variance(y, my)) / 2.0;
            (mx - my, (pooled * 2.0 / gf).sqrt(), 2.0 * gf - 2.0)
        }
        TestKind::Welch => {
            let (mx, my) = (mean(x), mean(y));
            let (vx, vy) = (sample_variance(x, mx) / gf, sample_variance(y, my) / gf);
            let se2 = vx + vy;
            let df = if se2 == 0.0 {
                2.0 * gf - 2.0
            } else {
                se2 * se2 / ((vx * vx + vy * vy) / (gf - 1.0))
            };
            (mx - my, se2.sqrt(), df)
        }
        TestKind::Paired => {
            let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            let md = mean(&d);
            let sd2 = sample_variance(&d, md);
            (md, (sd2 / gf).sqrt(), gf - 1.0)
        }
    };

    if se == 0.0 {
        return Ok(if diff == 0.0 {
            (0.0, df, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, df, 0.0)
        });
    }
    let t = diff / se;
    Ok((t, df, t_cdf_two_sided(t, df)))
}

/// Two-sided tail probability of Student's t-distribution:
/// `p = I_x(df/2, 1/2)` with `x = df / (df + t^2)`.
///
/// Monotone non-increasing in |t|; `p(0, df) = 1`; infinite t maps to 0.
pub fn t_cdf_two_sided(t: f64, df: f64) -> f64 {
    assert!(df > 0.0, "degrees of freedom must be positive");
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    inc_beta(x, df / 2.0, 0.5)
}

/// The paired ratio statistics for one event.
///
/// `r1` is the after/before patient ratio, except that events unseen before
/// exposure report the raw after-count (an event appearing in 40 patients
/// only after exposure yields 40.0, not 40/N). `r2` is the after-count as a
/// fraction of the cohort.
pub fn ratios(n_before: u64, n_after: u64, n_patients: u64) -> (f64, f64) {
    assert!(n_patients >= 1, "cohort must be non-empty");
    let r1 = if n_before > 0 {
        n_after as f64 / n_before as f64
    } else {
        n_after as f64
    };
    let r2 = n_after as f64 / n_patients as f64;
    (r1, r2)
}

/// Run the configured t-test on every event column of the grouped
/// before/after matrices. Output order matches the event index.
pub fn test_all_events(
    index: &EventIndex,
    before: &FeatureMatrix,
    after: &FeatureMatrix,
    n_patients: usize,
    config: &TestConfig,
    dictionary: &Dictionary,
) -> Result<Vec<EventStats>> {
    if !before.is_conformal(after) {
        return Err(Error::DimensionMismatch {
            reason: format!(
                "before is {}x{}, after is {}x{}",
                before.n_groups(),
                before.n_events(),
                after.n_groups(),
                after.n_events()
            ),
        });
    }
    if index.len() != before.n_events() {
        return Err(Error::DimensionMismatch {
            reason: format!(
                "event index has {} codes but matrices have {} columns",
                index.len(),
                before.n_events()
            ),
        });
    }

    let mut results = Vec::with_capacity(index.len());
    for (column, &code) in index.codes().iter().enumerate() {
        let x = before.column(column);
        let y = after.column(column);
        let (t, df, p) = t_test(&x, &y, config.kind)?;
        let n_before = before.column_sum(column);
        let n_after = after.column_sum(column);
        let (r1, r2) = ratios(n_before, n_after, n_patients as u64);
        results.push(EventStats {
            code,
            term: dictionary.term(code).to_owned(),
            n_before,
            n_after,
            t,
            df,
            p,
            r1,
            r2,
        });
    }
    Ok(results)
}

// --- regularized incomplete beta -----------------------------------------

/// ln Gamma(z) for z > 0 (Lanczos approximation).
fn ln_gamma(z: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.180_091_729_471_46,
        -86.505_320_329_416_77,
        24.014_098_240_830_91,
        -1.231_739_572_450_155,
        0.120_865_097_386_617_9e-2,
        -0.539_523_938_495_3e-5,
    ];
    debug_assert!(z > 0.0);
    let mut series = 1.000_000_000_190_015;
    for (i, c) in COEFFS.iter().enumerate() {
        series += c / (z + i as f64 + 1.0);
    }
    let tmp = z + 5.5;
    (z + 0.5) * tmp.ln() - tmp + (2.506_628_274_631_000_5 * series / z).ln()
}

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1],
/// via the continued fraction with modified Lentz evaluation. The symmetry
/// relation keeps the fraction in its fast-converging region.
pub fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front =
        (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 400;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let clamp = |v: f64| if v.abs() < TINY { TINY } else { v };

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 / clamp(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=MAX_ITER {
        let mf = m as f64;
        let m2 = 2.0 * mf;
        // even step
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 / clamp(1.0 + aa * d);
        c = clamp(1.0 + aa / c);
        h *= d * c;
        // odd step
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 / clamp(1.0 + aa * d);
        c = clamp(1.0 + aa / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
