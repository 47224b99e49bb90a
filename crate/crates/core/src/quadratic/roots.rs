use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Roots of a characteristic polynomial and its dominant magnitude.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootAnalysis {
    /// Highest power first, as supplied.
    pub coefficients: Vec<f64>,
    pub roots: Vec<Complex64>,
    pub r_max: f64,
    pub stable: bool,
}

/// Finds every complex root of `coefficients` (highest power first).
///
/// Roots are the eigenvalues of the balanced companion matrix, each refined
/// by a couple of Newton steps on the original polynomial.
pub fn max_root_magnitude(coefficients: &[f64]) -> Result<RootAnalysis> {
    let roots = poly_roots(coefficients)?;
    let r_max = roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    Ok(RootAnalysis {
        coefficients: coefficients.to_vec(),
        roots,
        r_max,
        stable: r_max < 1.0,
    })
}

/// Dominant root magnitude only.
pub fn dominant_magnitude(coefficients: &[f64]) -> Result<f64> {
    Ok(poly_roots(coefficients)?.iter().map(|r| r.norm()).fold(0.0, f64::max))
}

pub fn poly_roots(coefficients: &[f64]) -> Result<Vec<Complex64>> {
    if coefficients.len() < 2 {
        return Err(Error::Domain("polynomial must have degree at least 1".into()));
    }
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain("polynomial coefficients must be finite".into()));
    }
    let lead = coefficients[0];
    if lead == 0.0 {
        return Err(Error::Domain("leading coefficient must be nonzero".into()));
    }
    let monic: Vec<f64> = coefficients[1..].iter().map(|c| c / lead).collect();
    let n = monic.len();
    if n == 1 {
        return Ok(vec![Complex64::new(-monic[0], 0.0)]);
    }

    let mut companion = DMatrix::<f64>::zeros(n, n);
    for (j, c) in monic.iter().enumerate() {
        companion[(0, j)] = -c;
    }
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    balance(&mut companion);

    let schur = nalgebra::linalg::Schur::try_new(companion, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Domain("companion eigenvalue iteration did not converge".into()))?;
    let mut roots: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    for r in &mut roots {
        *r = polish(&monic, *r);
    }
    Ok(roots)
}

/// Evaluates the monic polynomial `z^n + c[0] z^(n-1) + ... + c[n-1]` and its
/// derivative at `z`.
fn eval_monic(monic: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(1.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in monic {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

fn polish(monic: &[f64], mut z: Complex64) -> Complex64 {
    let (mut p, mut dp) = eval_monic(monic, z);
    for _ in 0..3 {
        if p.norm() == 0.0 || dp.norm() == 0.0 {
            break;
        }
        let candidate = z - p / dp;
        let (pc, dpc) = eval_monic(monic, candidate);
        if !(pc.norm() < p.norm()) {
            break;
        }
        z = candidate;
        p = pc;
        dp = dpc;
    }
    z
}

/// Diagonal similarity scaling by powers of two so that row and column norms
/// are comparable (Parlett-Reinsch). Eigenvalues are unchanged.
fn balance(a: &mut DMatrix<f64>) {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    loop {
        let mut converged = true;
        for i in 0..n {
            let mut col = 0.0;
            let mut row = 0.0;
            for j in 0..n {
                if j != i {
                    col += a[(j, i)].abs();
                    row += a[(i, j)].abs();
                }
            }
            if col == 0.0 || row == 0.0 {
                continue;
            }
            let total = col + row;
            let mut f = 1.0;
            let mut g = row / RADIX;
            while col < g {
                f *= RADIX;
                col *= RADIX * RADIX;
            }
            g = row * RADIX;
            while col >= g {
                f /= RADIX;
                col /= RADIX * RADIX;
            }
            if (col + row) / f < 0.95 * total {
                converged = false;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly_eval(coefficients: &[f64], z: Complex64) -> Complex64 {
        coefficients.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    #[test]
    fn textbook_polynomials() {
        assert!((max_root_magnitude(&[1.0, -0.5]).unwrap().r_max - 0.5).abs() < 1e-15);
        let pair = max_root_magnitude(&[1.0, 0.0, 0.25]).unwrap();
        assert!((pair.r_max - 0.5).abs() < 1e-12);
        assert!(pair.roots.iter().all(|r| (r.im.abs() - 0.5).abs() < 1e-12));
        let real = max_root_magnitude(&[1.0, -1.5, 0.56]).unwrap();
        assert!((real.r_max - 0.8).abs() < 1e-12);
        assert!(real.stable);
        assert!(!max_root_magnitude(&[1.0, -1.0]).unwrap().stable);
    }

    #[test]
    fn degree_and_leading_coefficient_checks() {
        assert!(matches!(max_root_magnitude(&[3.0]), Err(Error::Domain(_))));
        assert!(matches!(max_root_magnitude(&[0.0, 1.0]), Err(Error::Domain(_))));
        assert!(matches!(max_root_magnitude(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_roots_and_scaling() {
        let r = max_root_magnitude(&[2.0, -1.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.roots.len(), 3);
        assert!((r.r_max - 0.5).abs() < 1e-12);
    }

    #[test]
    fn residuals_are_small_for_a_delay_polynomial() {
        // z^12 - 1.9 z^11 + 0.9 z^10 + 0.01
        let mut c = vec![0.0; 13];
        c[0] = 1.0;
        c[1] = -1.9;
        c[2] = 0.9;
        c[12] = 0.01;
        let r = max_root_magnitude(&c).unwrap();
        assert_eq!(r.roots.len(), 12);
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        for root in &r.roots {
            assert!(poly_eval(&c, *root).norm() < 1e-6 * norm);
        }
    }
}
