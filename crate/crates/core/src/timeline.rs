//! Sampling grids, the time-warping perturbation and piecewise-linear resampling.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `k·ts`, `k = 0..n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingGrid {
    pub ts: f64,
    pub n_steps: usize,
}

impl SamplingGrid {
    pub fn new(ts: f64, n_steps: usize) -> Result<Self> {
        if !(ts > 0.0) || !ts.is_finite() {
            return Err(Error::InvalidArgument(format!("sampling period must be positive, got {ts}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("grid needs at least one step".into()));
        }
        Ok(Self { ts, n_steps })
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.ts
    }

    /// Last sample time `(T−1)·ts`.
    pub fn duration(&self) -> f64 {
        (self.n_steps - 1) as f64 * self.ts
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Time warp `û = u + z(u)` together with its error function `ξ = z′`.
#[derive(Clone)]
pub struct WarpFunction {
    pub eps_u: f64,
    /// Constant with `‖ξ‖₂ ≤ κ·ε`.
    pub kappa: f64,
    z: ScalarFn,
    xi: ScalarFn,
    xi_prime: Option<ScalarFn>,
}

impl fmt::Debug for WarpFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WarpFunction")
            .field("eps_u", &self.eps_u)
            .field("kappa", &self.kappa)
            .finish_non_exhaustive()
    }
}

impl WarpFunction {
    pub fn custom(
        eps_u: f64,
        kappa: f64,
        z: impl Fn(f64) -> f64 + Send + Sync + 'static,
        xi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eps_u,
            kappa,
            z: Arc::new(z),
            xi: Arc::new(xi),
            xi_prime: None,
        }
    }

    pub fn identity() -> Self {
        Self::custom(0.0, 0.0, |_| 0.0, |_| 0.0)
    }

    pub fn z(&self, u: f64) -> f64 {
        (self.z)(u)
    }

    pub fn xi(&self, u: f64) -> f64 {
        (self.xi)(u)
    }

    /// `ξ′(u)` when a closed form is known.
    pub fn xi_prime(&self, u: f64) -> Option<f64> {
        self.xi_prime.as_ref().map(|f| f(u))
    }

    /// Largest deviation between `ξ` and a central difference of `z` on a probe grid.
    pub fn derivative_mismatch(&self, probes: &[f64], h: f64) -> f64 {
        probes
            .iter()
            .map(|&u| ((self.z(u + h) - self.z(u - h)) / (2.0 * h) - self.xi(u)).abs())
            .fold(0.0, f64::max)
    }
}

/// `z(u) = √ε cos(εu) e^{−εu}`, `ξ(u) = −ε^{3/2} (sin εu + cos εu) e^{−εu}`.
pub fn warp_exponential_cosine(eps: f64) -> Result<WarpFunction> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!("warp size must lie in [0, 1), got {eps}")));
    }
    let root = eps.sqrt();
    let e32 = eps * root;
    let e52 = e32 * eps;
    Ok(WarpFunction {
        eps_u: eps,
        kappa: 0.75f64.sqrt(),
        z: Arc::new(move |u| root * (eps * u).cos() * (-eps * u).exp()),
        xi: Arc::new(move |u| -e32 * ((eps * u).sin() + (eps * u).cos()) * (-eps * u).exp()),
        xi_prime: Some(Arc::new(move |u| -2.0 * e52 * (eps * u).cos() * (-eps * u).exp())),
    })
}

/// Number of Simpson panels used for `‖ξ‖₂`.
pub const XI_NORM_PANELS: usize = 1 << 14;

/// `‖ξ‖₂` over `[0, 40/ε]` by composite Simpson with [`XI_NORM_PANELS`] panels.
pub fn xi_l2_norm(warp: &WarpFunction) -> f64 {
    if warp.eps_u == 0.0 {
        return 0.0;
    }
    simpson(|u| warp.xi(u).powi(2), 0.0, 40.0 / warp.eps_u, XI_NORM_PANELS).sqrt()
}

/// `‖ξ′‖₂` on the same quadrature, if the warp exposes `ξ′`.
pub fn xi_prime_l2_norm(warp: &WarpFunction) -> Option<f64> {
    if warp.eps_u == 0.0 {
        return Some(0.0);
    }
    warp.xi_prime.as_ref()?;
    Some(
        simpson(|u| warp.xi_prime(u).unwrap().powi(2), 0.0, 40.0 / warp.eps_u, XI_NORM_PANELS)
            .sqrt(),
    )
}

/// Composite Simpson rule with an even number of panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels + panels % 2;
    let h = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Piecewise-linear interpolant of `samples` (spaced `ts` from 0) at time `t`,
/// clamped to the sampled interval.
pub fn interp_linear(samples: &[f64], ts: f64, t: f64) -> f64 {
    let last = samples.len() - 1;
    let mut pos = (t / ts).clamp(0.0, last as f64);
    if (pos - pos.round()).abs() < 1e-9 {
        pos = pos.round();
    }
    let k = (pos.floor() as usize).min(last);
    if k == last {
        return samples[last];
    }
    let frac = pos - k as f64;
    if frac == 0.0 {
        return samples[k];
    }
    samples[k] + frac * (samples[k + 1] - samples[k])
}

/// Observes a sequence on the warped timeline: `out[k] = x̃(k·ts + z(k·ts))`.
pub fn resample_warped(samples: &[f64], grid: &SamplingGrid, warp: &WarpFunction) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("warped resampling needs at least 2 samples".into()));
    }
    if samples.len() != grid.n_steps {
        return Err(Error::Dimension(format!(
            "{} samples on a {}-step grid",
            samples.len(),
            grid.n_steps
        )));
    }
    Ok((0..samples.len())
        .map(|k| {
            let t = grid.time(k);
            interp_linear(samples, grid.ts, t + warp.z(t))
        })
        .collect())
}

/// Length of the grid produced by [`regrid`].
pub fn regrid_len(n: usize, old_ts: f64, new_ts: f64) -> usize {
    let span = (n.saturating_sub(1)) as f64 * old_ts / new_ts;
    // absorb rounding like 0.3/0.1 = 2.9999999999999996
    (span + 1e-9).floor() as usize + 1
}

/// Resamples onto a grid with period `new_ts` covering the same duration.
pub fn regrid(samples: &[f64], old_ts: f64, new_ts: f64) -> Result<Vec<f64>> {
    if !(old_ts > 0.0) || !(new_ts > 0.0) {
        return Err(Error::InvalidArgument("sampling periods must be positive".into()));
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("cannot regrid an empty sequence".into()));
    }
    if old_ts == new_ts {
        return Ok(samples.to_vec());
    }
    let len = regrid_len(samples.len(), old_ts, new_ts);
    Ok((0..len)
        .map(|k| interp_linear(samples, old_ts, k as f64 * new_ts))
        .collect())
}
