//! Posterior summaries of `(lambda, I)` samples.

use crate::error::{invalid, Error, Result};
use crate::mcmc::State;
use crate::solver::{ForwardModel, SgfemSurrogate, Thermogram};

/// Streaming first and second moments of a pair, mergeable across chains.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairMoments {
    n: u64,
    mean: [f64; 2],
    m2: [f64; 2],
    cross: f64,
}

impl PairMoments {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean[0];
        let dy = y - self.mean[1];
        self.mean[0] += dx / n;
        self.mean[1] += dy / n;
        self.m2[0] += dx * (x - self.mean[0]);
        self.m2[1] += dy * (y - self.mean[1]);
        self.cross += dx * (y - self.mean[1]);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let d = [other.mean[0] - self.mean[0], other.mean[1] - self.mean[1]];
        for k in 0..2 {
            self.m2[k] += other.m2[k] + d[k] * d[k] * na * nb / n;
            self.mean[k] += d[k] * nb / n;
        }
        self.cross += other.cross + d[0] * d[1] * na * nb / n;
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> [f64; 2] {
        self.mean
    }

    /// Sample standard deviations (`n - 1` denominator; zero for one sample).
    pub fn sd(&self) -> [f64; 2] {
        if self.n < 2 {
            return [0.0, 0.0];
        }
        let d = (self.n - 1) as f64;
        [(self.m2[0] / d).sqrt(), (self.m2[1] / d).sqrt()]
    }

    /// Pearson correlation; `None` when either component is constant.
    pub fn correlation(&self) -> Option<f64> {
        if self.m2[0] <= 0.0 || self.m2[1] <= 0.0 {
            return None;
        }
        Some((self.cross / (self.m2[0] * self.m2[1]).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Uniform-bin density histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Normalized so that `sum density * width = 1`.
    pub density: Vec<f64>,
}

fn span_of(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// `bins + 1` uniform edges over `[lo, hi]`, widened when the range is empty.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        let pad = 0.5 * lo.abs().max(1e-300) * 1e-9;
        (lo - pad, hi + pad)
    };
    let w = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * w).collect();
    edges[bins] = hi;
    edges
}

fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    if !(lo..=hi).contains(&v) {
        return None;
    }
    let k = ((v - lo) / (hi - lo) * bins as f64) as usize;
    Some(k.min(bins - 1))
}

impl Histogram {
    pub fn with_edges(edges: Vec<f64>, values: impl Iterator<Item = f64>) -> Self {
        let mut counts = vec![0u64; edges.len() - 1];
        for v in values {
            if let Some(k) = bin_of(&edges, v) {
                counts[k] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        let density = counts
            .iter()
            .zip(edges.windows(2))
            .map(|(&c, e)| {
                if total == 0 {
                    0.0
                } else {
                    c as f64 / (total as f64 * (e[1] - e[0]))
                }
            })
            .collect();
        Self {
            edges,
            counts,
            density,
        }
    }

    pub fn from_values(values: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(invalid("histogram needs at least one bin"));
        }
        let (lo, hi) = span_of(values.iter().copied())
            .ok_or_else(|| Error::InvalidInput("no samples".into()))?;
        Ok(Self::with_edges(
            uniform_edges(lo, hi, bins),
            values.iter().copied(),
        ))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `sum density * width`; one for a non-empty histogram.
    pub fn integral(&self) -> f64 {
        self.density
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }
}

/// Density on a uniform 2D grid, row-major in the first coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistogram {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl JointHistogram {
    pub fn new(
        x_edges: Vec<f64>,
        y_edges: Vec<f64>,
        pairs: impl Iterator<Item = (f64, f64)>,
    ) -> Self {
        let (nx, ny) = (x_edges.len() - 1, y_edges.len() - 1);
        let mut counts = vec![0u64; nx * ny];
        for (x, y) in pairs {
            if let (Some(i), Some(j)) = (bin_of(&x_edges, x), bin_of(&y_edges, y)) {
                counts[i * ny + j] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        let area = (x_edges[1] - x_edges[0]) * (y_edges[1] - y_edges[0]);
        let density = counts
            .iter()
            .map(|&c| {
                if total == 0 {
                    0.0
                } else {
                    c as f64 / (total as f64 * area)
                }
            })
            .collect();
        Self {
            x_edges,
            y_edges,
            density,
        }
    }

    pub fn integral(&self) -> f64 {
        let area = (self.x_edges[1] - self.x_edges[0]) * (self.y_edges[1] - self.y_edges[0]);
        self.density.iter().sum::<f64>() * area
    }
}

/// Histogram of `lambda` among samples with `I` in `[lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalHistogram {
    pub window: (f64, f64),
    pub count: u64,
    /// Fewer than 1,000 samples fell in the window.
    pub low_confidence: bool,
    /// Uses the marginal `lambda` bin edges.
    pub histogram: Histogram,
}

pub const LOW_CONFIDENCE_COUNT: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryOptions {
    pub bins: usize,
    pub joint_bins: usize,
    /// Intensity windows for conditional `lambda` histograms; `None` centres
    /// two windows of width `sd_I / 2` at `mean_I -/+ sd_I`.
    pub windows: Option<Vec<(f64, f64)>>,
    /// `rho c_p`, to convert conductivity to diffusivity.
    pub heat_capacity: f64,
}

impl SummaryOptions {
    pub fn new(heat_capacity: f64) -> Self {
        Self {
            bins: 100,
            joint_bins: 100,
            windows: None,
            heat_capacity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub count: u64,
    pub mean_lambda: f64,
    pub sd_lambda: f64,
    pub mean_intensity: f64,
    pub sd_intensity: f64,
    pub corr_lambda_intensity: Option<f64>,
    pub mean_alpha: f64,
    pub sd_alpha: f64,
    pub lambda_histogram: Histogram,
    pub intensity_histogram: Histogram,
    pub joint: JointHistogram,
    pub conditionals: Vec<ConditionalHistogram>,
}

/// Summarizes log-space samples `theta = (ln lambda, ln I)`.
pub fn summarize(thetas: &[State], options: &SummaryOptions) -> Result<PosteriorSummary> {
    if thetas.is_empty() {
        return Err(Error::InvalidInput(
            "cannot summarize an empty chain".into(),
        ));
    }
    if options.bins == 0 || options.joint_bins == 0 {
        return Err(invalid("analysis bins must be positive"));
    }
    if !(options.heat_capacity > 0.0) {
        return Err(invalid("heat capacity must be positive"));
    }
    let lambda: Vec<f64> = thetas.iter().map(|t| t[0].exp()).collect();
    let intensity: Vec<f64> = thetas.iter().map(|t| t[1].exp()).collect();
    let mut moments = PairMoments::default();
    for (l, i) in lambda.iter().zip(&intensity) {
        moments.push(*l, *i);
    }
    let [mean_lambda, mean_intensity] = moments.mean();
    let [sd_lambda, sd_intensity] = moments.sd();

    let lambda_histogram = Histogram::from_values(&lambda, options.bins)?;
    let intensity_histogram = Histogram::from_values(&intensity, options.bins)?;
    let (llo, lhi) = (
        lambda_histogram.edges[0],
        *lambda_histogram.edges.last().unwrap(),
    );
    let (ilo, ihi) = (
        intensity_histogram.edges[0],
        *intensity_histogram.edges.last().unwrap(),
    );
    let joint = JointHistogram::new(
        uniform_edges(llo, lhi, options.joint_bins),
        uniform_edges(ilo, ihi, options.joint_bins),
        lambda.iter().copied().zip(intensity.iter().copied()),
    );

    let windows = options.windows.clone().unwrap_or_else(|| {
        let half = 0.25 * sd_intensity;
        [-1.0, 1.0]
            .iter()
            .map(|s| {
                (
                    mean_intensity + s * sd_intensity - half,
                    mean_intensity + s * sd_intensity + half,
                )
            })
            .collect()
    });
    let conditionals = windows
        .into_iter()
        .map(|(lo, hi)| {
            let inside = lambda
                .iter()
                .zip(&intensity)
                .filter(|(_, i)| (lo..hi).contains(*i))
                .map(|(l, _)| *l);
            let histogram = Histogram::with_edges(lambda_histogram.edges.clone(), inside);
            let count = histogram.total();
            ConditionalHistogram {
                window: (lo, hi),
                count,
                low_confidence: count < LOW_CONFIDENCE_COUNT,
                histogram,
            }
        })
        .collect();

    Ok(PosteriorSummary {
        count: moments.count(),
        mean_lambda,
        sd_lambda,
        mean_intensity,
        sd_intensity,
        corr_lambda_intensity: moments.correlation(),
        mean_alpha: mean_lambda / options.heat_capacity,
        sd_alpha: sd_lambda / options.heat_capacity,
        lambda_histogram,
        intensity_histogram,
        joint,
        conditionals,
    })
}

/// Model thermogram at the posterior mean `(lambda, I)`; the flag reports
/// whether the surrogate (rather than a full solve) produced it.
pub fn posterior_mean_thermogram(
    summary: &PosteriorSummary,
    surrogate: Option<&SgfemSurrogate>,
    model: &ForwardModel,
) -> Result<(Thermogram, bool)> {
    let (l, i) = (summary.mean_lambda, summary.mean_intensity);
    match surrogate.filter(|s| s.bounds.contains(l, i)) {
        Some(s) => Ok((s.evaluate_physical(l, i)?, true)),
        None => Ok((model.plain_solve(l, i)?, false)),
    }
}
