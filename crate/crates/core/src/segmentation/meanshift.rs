//! Flat-kernel meanshift on RGB samples.

use crate::brdf_table::Rgb;

use super::SegmentationError;

const MAX_ITERATIONS: usize = 100;
const SHIFT_TOLERANCE: f64 = 1e-4;

/// Kernel profile used to weight neighbours during the mean update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// Uniform weight inside the bandwidth.
    #[default]
    Flat,
    /// Gaussian weight with the bandwidth as standard deviation, truncated
    /// at three bandwidths.
    Gaussian,
}

impl Kernel {
    fn support(&self, bandwidth: f64) -> f64 {
        match self {
            Kernel::Flat => bandwidth,
            Kernel::Gaussian => 3.0 * bandwidth,
        }
    }

    fn weight(&self, d2: f64, bandwidth: f64) -> f64 {
        match self {
            Kernel::Flat => 1.0,
            Kernel::Gaussian => (-0.5 * d2 / (bandwidth * bandwidth)).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeCluster {
    pub mode: Rgb,
    /// Indices into the input sample slice, ascending.
    pub members: Vec<usize>,
}

/// Half the root of the summed per-channel population variances.
pub fn default_bandwidth(samples: &[Rgb]) -> Result<f64, SegmentationError> {
    if samples.len() < 2 {
        return Err(SegmentationError::TooFewSamples {
            needed: 2,
            found: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<Rgb>() / n;
    let var_sum: f64 = samples.iter().map(|s| (s - mean).norm_squared()).sum::<f64>() / n;
    Ok(0.5 * var_sum.sqrt())
}

/// Samples sorted along the red channel so a bandwidth query only scans a
/// window of the sorted order.
struct SortedSamples<'a> {
    samples: &'a [Rgb],
    order: Vec<usize>,
    keys: Vec<f64>,
}

impl<'a> SortedSamples<'a> {
    fn new(samples: &'a [Rgb]) -> Self {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| samples[a].x.total_cmp(&samples[b].x).then(a.cmp(&b)));
        let keys = order.iter().map(|&i| samples[i].x).collect();
        Self {
            samples,
            order,
            keys,
        }
    }

    /// Kernel-weighted mean of the samples around `x`, or `None` if no
    /// sample lies within the kernel support.
    fn window_mean(&self, x: &Rgb, kernel: Kernel, bandwidth: f64) -> Option<Rgb> {
        let radius = kernel.support(bandwidth);
        let r2 = radius * radius;
        let lo = self.keys.partition_point(|k| *k < x.x - radius);
        let hi = self.keys.partition_point(|k| *k <= x.x + radius);
        let mut sum = Rgb::zeros();
        let mut total = 0.0;
        for &i in &self.order[lo..hi] {
            let s = &self.samples[i];
            let d2 = (s - x).norm_squared();
            if d2 <= r2 {
                let w = kernel.weight(d2, bandwidth);
                sum += s * w;
                total += w;
            }
        }
        (total > 0.0).then(|| sum / total)
    }
}

fn climb(sorted: &SortedSamples<'_>, start: Rgb, kernel: Kernel, bandwidth: f64) -> Rgb {
    let mut x = start;
    for _ in 0..MAX_ITERATIONS {
        let Some(next) = sorted.window_mean(&x, kernel, bandwidth) else {
            break;
        };
        let shift = (next - x).norm();
        x = next;
        if shift < SHIFT_TOLERANCE * bandwidth {
            break;
        }
    }
    x
}

/// Flat-kernel meanshift. Every sample climbs to a mode; modes closer than
/// half a bandwidth are merged (earlier seeds win) and every sample joins
/// its nearest mode. Clusters come back in mode discovery order.
pub fn meanshift(samples: &[Rgb], bandwidth: f64) -> Result<Vec<ModeCluster>, SegmentationError> {
    meanshift_with_kernel(samples, bandwidth, Kernel::Flat)
}

/// Meanshift with a chosen kernel; see [`meanshift`].
pub fn meanshift_with_kernel(
    samples: &[Rgb],
    bandwidth: f64,
    kernel: Kernel,
) -> Result<Vec<ModeCluster>, SegmentationError> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(SegmentationError::InvalidBandwidth(bandwidth));
    }
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let sorted = SortedSamples::new(samples);
    let merge_radius = 0.5 * bandwidth;
    let mut modes: Vec<Rgb> = Vec::new();
    // samples whose start lies this close to a known mode converge there
    let shortcut = SHIFT_TOLERANCE * bandwidth;
    for s in samples {
        if modes.iter().any(|m| (m - s).norm() < shortcut) {
            continue;
        }
        let m = climb(&sorted, *s, kernel, bandwidth);
        if !modes.iter().any(|known| (known - m).norm() < merge_radius) {
            modes.push(m);
        }
    }
    let mut members = vec![Vec::new(); modes.len()];
    for (i, s) in samples.iter().enumerate() {
        let nearest = modes
            .iter()
            .enumerate()
            .map(|(k, m)| (k, (m - s).norm_squared()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(k, _)| k)
            .expect("at least one mode");
        members[nearest].push(i);
    }
    Ok(modes
        .into_iter()
        .zip(members)
        .filter(|(_, m)| !m.is_empty())
        .map(|(mode, members)| ModeCluster { mode, members })
        .collect())
}
