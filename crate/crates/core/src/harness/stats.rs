use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation; absent below two values.
pub fn std_dev(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let mu = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - mu) * (x - mu)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// One-sided p-value for `mean(a) > mean(b)`.
    pub p_greater: f64,
}

/// Welch's unequal-variance t-test of `mean(a) > mean(b)`.
pub fn welch_greater(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Domain("Welch test needs at least two values per group".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a).unwrap(), mean(b).unwrap());
    let (va, vb) = (std_dev(a).unwrap().powi(2) / na, std_dev(b).unwrap().powi(2) / nb);
    let se2 = va + vb;
    if se2 == 0.0 {
        let p = if ma > mb { 0.0 } else { 1.0 };
        return Ok(WelchTest {
            t: if ma == mb { 0.0 } else { f64::INFINITY.copysign(ma - mb) },
            df: na + nb - 2.0,
            p_greater: p,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(WelchTest {
        t,
        df,
        p_greater: 1.0 - dist.cdf(t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        assert_eq!(mean(&[]), None);
        assert_eq!(mean(&[1.0, 2.0, 6.0]), Some(3.0));
        assert_eq!(std_dev(&[5.0]), None);
        assert!((std_dev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap() - 2.138_089_935).abs() < 1e-9);
    }

    #[test]
    fn welch_matches_reference_values() {
        // Reference values from scipy.stats.ttest_ind(equal_var=False).
        let a = [19.8, 20.4, 19.6, 17.8, 18.5, 18.9, 18.3, 18.9, 19.5, 22.0];
        let b = [28.2, 26.6, 20.1, 23.3, 25.2, 22.1, 17.7, 27.6, 20.6, 13.7, 23.2, 17.5, 20.6, 18.0, 23.9, 21.6, 24.3, 20.4, 23.9, 13.3];
        let w = welch_greater(&b, &a).unwrap();
        assert!((w.t - 2.225_512_04).abs() < 1e-6, "{}", w.t);
        assert!((w.df - 24.524_635).abs() < 1e-4, "{}", w.df);
        assert!((w.p_greater - 0.017_742_27).abs() < 1e-5, "{}", w.p_greater);
        let rev = welch_greater(&a, &b).unwrap();
        assert!((rev.p_greater + w.p_greater - 1.0).abs() < 1e-12);
        assert!(welch_greater(&[1.0], &a).is_err());
    }
}
