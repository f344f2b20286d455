//! Per-class mean waveform panels and the HEOG peak curve backing the
//! plotting command. Every figure is data-first: the CSV is the artifact,
//! the SVG is a view of it.

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::pipeline::{PreprocessedDataset, PreprocessedSegment};

/// Mean and per-sample standard deviation of one class's waveforms.
#[derive(Debug, Clone)]
pub struct ClassCurve {
    pub delta_deg: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FigureData {
    /// What the panel shows, e.g. "heog" or "nemg_rms_left".
    pub channel: String,
    pub time_s: Vec<f64>,
    pub curves: Vec<ClassCurve>,
}

impl FigureData {
    /// CSV with a time column and a mean/std column pair per class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s");
        for c in &self.curves {
            out.push_str(&format!(",mean_delta_{0},std_delta_{0}", c.delta_deg));
        }
        out.push('\n');
        for (i, t) in self.time_s.iter().enumerate() {
            out.push_str(&format!("{t:.6}"));
            for c in &self.curves {
                out.push_str(&format!(",{:.6},{:.6}", c.mean[i], c.std[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// Signed mean and std of the HEOG peak per gaze variation (the nearly
/// linear peak-vs-delta relationship).
#[derive(Debug, Clone)]
pub struct PeakCurve {
    pub points: Vec<(f64, f64, f64)>,
}

impl PeakCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta_deg,mean_signed_peak,std_signed_peak\n");
        for (d, m, s) in &self.points {
            out.push_str(&format!("{d},{m:.6},{s:.6}\n"));
        }
        out
    }
}

fn class_mean_std<F>(pre: &PreprocessedDataset, channel: &str, extract: F) -> Result<Option<FigureData>>
where
    F: Fn(&PreprocessedSegment) -> Option<&Waveform>,
{
    let deltas = pre.experiment.deltas();
    let mut curves = Vec::new();
    let mut time_s: Option<Vec<f64>> = None;
    for (class, &delta) in deltas.iter().enumerate() {
        let waves: Vec<&Waveform> = pre
            .segments
            .iter()
            .filter(|s| s.shift.class_index == class)
            .filter_map(&extract)
            .collect();
        if waves.is_empty() {
            return Ok(None);
        }
        let n = waves[0].len();
        if time_s.is_none() {
            time_s = Some((0..n).map(|i| waves[0].time_at(i)).collect());
        }
        let count = waves.len() as f64;
        let mut mean = vec![0.0; n];
        for w in &waves {
            if w.len() != n {
                return Err(Error::validation(format!(
                    "inconsistent {channel} lengths within class {class}"
                )));
            }
            for (m, &v) in mean.iter_mut().zip(&w.samples) {
                *m += v / count;
            }
        }
        let mut std = vec![0.0; n];
        for w in &waves {
            for i in 0..n {
                let d = w.samples[i] - mean[i];
                std[i] += d * d / count;
            }
        }
        for s in std.iter_mut() {
            *s = s.sqrt();
        }
        curves.push(ClassCurve { delta_deg: delta, mean, std });
    }
    Ok(Some(FigureData {
        channel: channel.to_string(),
        time_s: time_s.unwrap_or_default(),
        curves,
    }))
}

/// Class-mean preprocessed HEOG waveforms (always present).
pub fn heog_class_means(pre: &PreprocessedDataset) -> Result<FigureData> {
    class_mean_std(pre, "heog", |s| Some(&s.heog))?
        .ok_or_else(|| Error::validation("dataset has no segments".to_string()))
}

/// Class-mean normalized yaw traces, when the dataset carries IMU data.
pub fn yaw_class_means(pre: &PreprocessedDataset) -> Result<Option<FigureData>> {
    class_mean_std(pre, "yaw", |s| s.yaw.as_ref())
}

/// Class-mean normalized NEMG RMS envelopes (left, right), when present.
pub fn nemg_class_means(pre: &PreprocessedDataset) -> Result<Option<(FigureData, FigureData)>> {
    let left = class_mean_std(pre, "nemg_rms_left", |s| s.nemg_env.as_ref().map(|p| &p.left))?;
    let right = class_mean_std(pre, "nemg_rms_right", |s| s.nemg_env.as_ref().map(|p| &p.right))?;
    Ok(match (left, right) {
        (Some(l), Some(r)) => Some((l, r)),
        _ => None,
    })
}

/// Signed HEOG peak (polarity x magnitude) against the gaze variation.
pub fn heog_peak_curve(pre: &PreprocessedDataset) -> Result<PeakCurve> {
    let deltas = pre.experiment.deltas();
    let mut points = Vec::with_capacity(deltas.len());
    for (class, &delta) in deltas.iter().enumerate() {
        let peaks: Vec<f64> = pre
            .segments
            .iter()
            .filter(|s| s.shift.class_index == class)
            .filter_map(|s| s.features.heog.map(|h| h.polarity * h.abs_peak))
            .collect();
        if peaks.is_empty() {
            return Err(Error::validation(format!("no segments for class {class}")));
        }
        let n = peaks.len() as f64;
        let mean = peaks.iter().sum::<f64>() / n;
        let var = peaks.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
        points.push((delta, mean, var.sqrt()));
    }
    Ok(PeakCurve { points })
}
