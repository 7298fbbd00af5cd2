//! Finite Gaussian mixtures `Σ_c w_c N(m_c, s_c²)`, weights normalized to
//! one; components with `s_c = 0` are point masses.

use super::{newton_solve, CellModel, NewtonConfig, QuantGrid, Units};
use crate::error::{Error, Result};
use crate::special::{norm_pdf, norm_sf};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub weights: Vec<f64>,
    center: f64,
}

impl GaussianMixture {
    pub fn new(means: Vec<f64>, sds: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if means.len() != sds.len() || means.len() != weights.len() || means.is_empty() {
            return Err(Error::InvalidInput("mixture component vectors must be non-empty and equally long".into()));
        }
        if sds.iter().any(|s| !(*s >= 0.0) || !s.is_finite())
            || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
            || means.iter().any(|m| !m.is_finite())
        {
            return Err(Error::InvalidInput("mixture needs finite means, sds >= 0 and weights >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("mixture weights sum to zero".into()));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let center = means.iter().zip(&weights).map(|(m, w)| m * w).sum::<f64>();
        Ok(GaussianMixture { means, sds, weights, center })
    }

    pub fn single(mean: f64, sd: f64) -> Result<Self> {
        Self::new(vec![mean], vec![sd], vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.center
    }

    pub fn is_atomic(&self) -> bool {
        self.sds.iter().all(|s| *s == 0.0)
    }

    /// Distinct atoms with merged masses, sorted; only meaningful when
    /// [`Self::is_atomic`].
    pub fn atoms(&self) -> (Vec<f64>, Vec<f64>) {
        let mut pairs: Vec<(f64, f64)> =
            self.means.iter().zip(&self.weights).filter(|(_, w)| **w > 0.0).map(|(m, w)| (*m, *w)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut pts: Vec<f64> = Vec::new();
        let mut wts: Vec<f64> = Vec::new();
        for (m, w) in pairs {
            match pts.last() {
                Some(last) if (m - last).abs() <= 1e-14 * m.abs().max(1.0) => *wts.last_mut().unwrap() += w,
                _ => {
                    pts.push(m);
                    wts.push(w);
                }
            }
        }
        (pts, wts)
    }

    /// Stationary `n`-point quantizer of the mixture. A purely atomic mixture
    /// with at most `n` atoms is returned as its own atoms.
    pub fn quantize(&self, init: &[f64], cfg: &NewtonConfig, units: Units) -> Result<QuantGrid> {
        if self.is_atomic() {
            let (pts, wts) = self.atoms();
            if pts.len() <= init.len() {
                let n = pts.len();
                return Ok(QuantGrid {
                    points: pts,
                    weights: wts,
                    units,
                    meta: super::GridMeta { n, m: None, date: None },
                    diagnostics: Default::default(),
                });
            }
        }
        newton_solve(self, init, cfg, units)
    }
}

impl CellModel for GaussianMixture {
    fn center(&self) -> f64 {
        self.center
    }

    fn upper_tails(&self, e: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for ((m, s), w) in self.means.iter().zip(&self.sds).zip(&self.weights) {
            let d = m - self.center;
            let (mass, first, second) = if e == f64::NEG_INFINITY {
                (1.0, d, d * d + s * s)
            } else if e == f64::INFINITY {
                continue;
            } else if *s == 0.0 {
                if *m >= e {
                    (1.0, d, d * d)
                } else {
                    continue;
                }
            } else {
                let u = (e - m) / s;
                let sf = norm_sf(u);
                let pdf = norm_pdf(u);
                (sf, d * sf + s * pdf, (d * d + s * s) * sf + (2.0 * d * s + s * s * u) * pdf)
            };
            out[0] += w * mass;
            out[1] += w * first;
            out[2] += w * second;
        }
        out
    }

    fn density(&self, x: f64) -> f64 {
        self.means
            .iter()
            .zip(&self.sds)
            .zip(&self.weights)
            .filter(|((_, s), _)| **s > 0.0)
            .map(|((m, s), w)| w * norm_pdf((x - m) / s) / s)
            .sum()
    }
}
