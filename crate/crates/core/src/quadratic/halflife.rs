use serde::{Deserialize, Serialize};

use super::recurrence::{QuadMethod, QuadMethodSpec};
use super::roots::dominant_magnitude;
use crate::error::{Error, Result};

/// Dominant root magnitude over a `(m, eta * lambda)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub method: QuadMethodSpec,
    pub delay: usize,
    pub m_grid: Vec<f64>,
    pub eta_lambda_grid: Vec<f64>,
    /// `r_max[i][j]` belongs to `(m_grid[i], eta_lambda_grid[j])`.
    pub r_max: Vec<Vec<f64>>,
}

impl Heatmap {
    pub fn is_stable(&self, i: usize, j: usize) -> bool {
        self.r_max[i][j] < 1.0
    }
}

pub fn stability_heatmap(
    method: &QuadMethodSpec,
    delay: usize,
    m_grid: &[f64],
    eta_lambda_grid: &[f64],
) -> Result<Heatmap> {
    if m_grid.is_empty() || eta_lambda_grid.is_empty() {
        return Err(Error::Config("heatmap grids must be nonempty".into()));
    }
    let r_max = m_grid
        .iter()
        .map(|&m| {
            eta_lambda_grid
                .iter()
                .map(|&el| dominant_magnitude(&method.recurrence(m, el, delay).char_poly()))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Heatmap {
        method: method.clone(),
        delay,
        m_grid: m_grid.to_vec(),
        eta_lambda_grid: eta_lambda_grid.to_vec(),
        r_max,
    })
}

/// Log-spaced grid from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `n` momenta from 0 to `1 - min_gap`, evenly spaced in `log(1 - m)`, which
/// resolves the region near one where delayed optima live.
pub fn momentum_grid(min_gap: f64, n: usize) -> Vec<f64> {
    let mut g: Vec<f64> = log_grid(1.0, min_gap, n).into_iter().map(|gap| 1.0 - gap).collect();
    if let Some(first) = g.first_mut() {
        *first = 0.0;
    }
    g
}

/// Grid for the `(eta, m)` search behind the optimal half-life.
///
/// Normalized rates live on the lattice `exp(i * lattice_step)`, anchored at
/// one. A candidate learning rate fixes the top of the eigenvalue interval,
/// `eta * lambda_1`, at a lattice point in `[top_min, top_max]`; the interval
/// then covers every lattice point down to `eta * lambda_1 / kappa`. Because
/// the lattice does not depend on `kappa`, the optimum is monotone in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    pub m_grid: Vec<f64>,
    pub lattice_step: f64,
    pub top_min: f64,
    pub top_max: f64,
}

impl Default for SearchSpec {
    /// 100 momenta in `[0, 0.9999]`, evenly spaced in `log(1 - m)`; 200
    /// samples across a `kappa = 1e3` interval; interval tops from `1e-5` to `8`.
    fn default() -> Self {
        SearchSpec {
            m_grid: momentum_grid(1e-4, 100),
            lattice_step: 1000f64.ln() / 199.0,
            top_min: 1e-5,
            top_max: 8.0,
        }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m_grid.is_empty() || self.m_grid.iter().any(|m| !(0.0..1.0).contains(m)) {
            return Err(Error::Config("search m_grid must be nonempty with values in [0, 1)".into()));
        }
        if !(self.lattice_step > 0.0) {
            return Err(Error::Config("lattice_step must be positive".into()));
        }
        if !(self.top_min > 0.0 && self.top_max >= self.top_min) {
            return Err(Error::Config("need 0 < top_min <= top_max".into()));
        }
        Ok(())
    }

    fn window_steps(&self, kappa: f64) -> usize {
        if kappa <= 1.0 {
            0
        } else {
            (kappa.ln() / self.lattice_step - 1e-9).ceil() as usize
        }
    }

    fn top_range(&self) -> (i64, i64) {
        let lo = (self.top_min.ln() / self.lattice_step - 1e-9).ceil() as i64;
        let hi = (self.top_max.ln() / self.lattice_step + 1e-9).floor() as i64;
        (lo, hi)
    }

    fn point(&self, i: i64) -> f64 {
        (i as f64 * self.lattice_step).exp()
    }
}

/// Best achievable convergence for one method, condition number and delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfLifeResult {
    pub method: QuadMethod,
    pub kappa: f64,
    pub delay: usize,
    /// Smallest worst-case dominant root over the search.
    pub r_star: f64,
    /// `-ln 2 / ln r_star` steps (zero when `r_star` is zero).
    pub half_life: f64,
    /// `eta * lambda_1` at the optimum.
    pub eta_star: f64,
    pub m_star: f64,
}

pub fn half_life(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else if r >= 1.0 {
        f64::INFINITY
    } else {
        -std::f64::consts::LN_2 / r.ln()
    }
}

/// Best `(worst-case r, eta * lambda_1)` at a fixed momentum.
fn best_over_eta(
    method: &QuadMethodSpec,
    m: f64,
    kappa: f64,
    delay: usize,
    search: &SearchSpec,
) -> Result<Option<(f64, f64)>> {
    let k = search.window_steps(kappa) as i64;
    let (top_lo, top_hi) = search.top_range();
    if top_lo > top_hi {
        return Ok(None);
    }
    let first = top_lo - k;
    let row: Vec<f64> = (first..=top_hi)
        .map(|i| dominant_magnitude(&method.recurrence(m, search.point(i), delay).char_poly()))
        .collect::<Result<_>>()?;

    let mut best: Option<(f64, f64)> = None;
    for top in top_lo..=top_hi {
        let hi = (top - first) as usize;
        let lo = hi - k as usize;
        let worst = row[lo..=hi].iter().copied().fold(0.0, f64::max);
        if worst < 1.0 && best.is_none_or(|(r, _)| worst < r) {
            best = Some((worst, search.point(top)));
        }
    }
    Ok(best)
}

/// Minimizes, over the search grid, the largest dominant root magnitude on
/// an eigenvalue interval of ratio `kappa`.
pub fn optimal_halflife(method: &QuadMethodSpec, kappa: f64, delay: usize, search: &SearchSpec) -> Result<HalfLifeResult> {
    if !(kappa >= 1.0) {
        return Err(Error::Domain(format!("kappa must be >= 1, got {kappa}")));
    }
    search.validate()?;
    let mut best: Option<(f64, f64, f64)> = None;
    for &m in &search.m_grid {
        if let Some((r, top)) = best_over_eta(method, m, kappa, delay, search)? {
            if best.is_none_or(|(br, _, _)| r < br) {
                best = Some((r, top, m));
            }
        }
    }
    let (r_star, eta_star, m_star) = best.ok_or_else(|| {
        Error::Infeasible(format!(
            "{} at kappa={kappa}, D={delay}: every candidate is unstable",
            method.method.name()
        ))
    })?;
    Ok(HalfLifeResult {
        method: method.method,
        kappa,
        delay,
        r_star,
        half_life: half_life(r_star),
        eta_star,
        m_star,
    })
}

/// Closed-form optimal heavy-ball momentum without delay.
pub fn optimal_momentum_nodelay(kappa: f64) -> f64 {
    let s = kappa.sqrt();
    ((s - 1.0) / (s + 1.0)).powi(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub m: f64,
    pub t_scale: f64,
    /// `None` when no learning rate is stable.
    pub r_star: Option<f64>,
    pub half_life: Option<f64>,
    pub eta_star: Option<f64>,
}

/// Optimal half-life over learning rates for every `(m, T = scale * D)`.
///
/// `method` supplies everything but the horizon (normally plain `lwp`).
pub fn momentum_horizon_sweep(
    method: &QuadMethodSpec,
    kappa: f64,
    delay: usize,
    m_grid: &[f64],
    t_scale_grid: &[f64],
    search: &SearchSpec,
) -> Result<Vec<SweepCell>> {
    if m_grid.is_empty() || t_scale_grid.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    if !(kappa >= 1.0) {
        return Err(Error::Domain(format!("kappa must be >= 1, got {kappa}")));
    }
    search.validate()?;
    let mut cells = Vec::with_capacity(m_grid.len() * t_scale_grid.len());
    for &m in m_grid {
        for &scale in t_scale_grid {
            let spec = QuadMethodSpec {
                horizon: None,
                ..method.clone()
            }
            .with_horizon_scale(scale);
            let best = best_over_eta(&spec, m, kappa, delay, search)?;
            cells.push(SweepCell {
                m,
                t_scale: scale,
                r_star: best.map(|b| b.0),
                half_life: best.map(|b| half_life(b.0)),
                eta_star: best.map(|b| b.1),
            });
        }
    }
    Ok(cells)
}
