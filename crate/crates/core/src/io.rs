//! On-disk formats: JSON dataset manifest, per-segment CSV files, flat
//! key=value config files, and evaluation report files.
//!
//! Segment CSVs carry a time column plus one column per channel, written
//! with 17 significant digits so floats round-trip exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::harness::{render_table, EvalReport, ExperimentPlan, InputSet, Profile};
use crate::ml::ClassifierKind;
use crate::synthgen::{
    Dataset, ExperimentKind, GazeShift, GeneratorConfig, ImuSeries, NemgPair, Segment,
    IMU_RATE_HZ, NEMG_RATE_HZ, SEGMENT_PRE_S,
};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

/// Serialized generator configuration (manifest echo).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorEcho {
    pub experiment: String,
    pub n_subjects: usize,
    pub n_trials_per_subject: usize,
    pub master_seed: u64,
    pub degraded_nemg: bool,
    pub noise_scale: f64,
    pub strategy_mean: f64,
    pub strategy_spread: f64,
}

impl GeneratorEcho {
    fn from_config(c: &GeneratorConfig) -> Self {
        GeneratorEcho {
            experiment: c.experiment.name().to_string(),
            n_subjects: c.n_subjects,
            n_trials_per_subject: c.n_trials_per_subject,
            master_seed: c.master_seed,
            degraded_nemg: c.degraded_nemg,
            noise_scale: c.noise_scale,
            strategy_mean: c.strategy_mean,
            strategy_spread: c.strategy_spread,
        }
    }

    fn to_config(&self) -> Result<GeneratorConfig> {
        Ok(GeneratorConfig {
            experiment: ExperimentKind::from_name(&self.experiment)?,
            n_subjects: self.n_subjects,
            n_trials_per_subject: self.n_trials_per_subject,
            master_seed: self.master_seed,
            degraded_nemg: self.degraded_nemg,
            noise_scale: self.noise_scale,
            strategy_mean: self.strategy_mean,
            strategy_spread: self.strategy_spread,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub subject: usize,
    pub trial: usize,
    pub switch_index: usize,
    pub delta_deg: f64,
    pub class_index: usize,
    pub heog_file: String,
    pub nemg_file: Option<String>,
    pub imu_file: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub generator: GeneratorEcho,
    pub segments: Vec<SegmentRecord>,
}

impl DatasetManifest {
    /// Structural validation: version, label set, plan count, file presence.
    pub fn validate(&self, dir: &Path) -> Result<GeneratorConfig> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::validation(format!(
                "unsupported manifest format version {}",
                self.format_version
            )));
        }
        let config = self.generator.to_config()?;
        config.validate()?;
        if self.segments.len() != config.expected_segments() {
            return Err(Error::validation(format!(
                "manifest lists {} segments but the plan expects {}",
                self.segments.len(),
                config.expected_segments()
            )));
        }
        for rec in &self.segments {
            let shift = GazeShift::new(rec.delta_deg, config.experiment)?;
            if shift.class_index != rec.class_index {
                return Err(Error::validation(format!(
                    "segment (subject {}, trial {}, switch {}): class index {} does not match delta {}",
                    rec.subject, rec.trial, rec.switch_index, rec.class_index, rec.delta_deg
                )));
            }
            for file in [Some(&rec.heog_file), rec.nemg_file.as_ref(), rec.imu_file.as_ref()]
                .into_iter()
                .flatten()
            {
                if !dir.join(file).is_file() {
                    return Err(Error::validation(format!("missing segment file {file}")));
                }
            }
        }
        Ok(config)
    }
}

/// 17 significant digits: enough for exact f64 round trips.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, context: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::validation(format!("bad float `{field}` in {context}")))
}

fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut out = String::with_capacity(1 << 16);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn segment_stem(seg: &Segment) -> String {
    format!("s{:02}_t{:02}_k{:02}", seg.subject, seg.trial, seg.switch_index)
}

/// Write a dataset: manifest plus one CSV per segment per modality group.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut records = Vec::with_capacity(dataset.segments.len());
    for seg in &dataset.segments {
        let stem = segment_stem(seg);

        let heog_file = format!("{stem}_heog.csv");
        write_csv(
            &dir.join(&heog_file),
            "time_s,heog",
            (0..seg.heog.len())
                .map(|i| format!("{},{}", fmt_f64(seg.heog.time_at(i)), fmt_f64(seg.heog.samples[i]))),
        )?;

        let nemg_file = match &seg.nemg {
            Some(pair) => {
                let name = format!("{stem}_nemg.csv");
                write_csv(
                    &dir.join(&name),
                    "time_s,left_scm,right_scm",
                    (0..pair.left.len()).map(|i| {
                        format!(
                            "{},{},{}",
                            fmt_f64(pair.left.time_at(i)),
                            fmt_f64(pair.left.samples[i]),
                            fmt_f64(pair.right.samples[i])
                        )
                    }),
                )?;
                Some(name)
            }
            None => None,
        };

        let imu_file = match &seg.imu {
            Some(imu) => {
                let name = format!("{stem}_imu.csv");
                write_csv(
                    &dir.join(&name),
                    "time_s,gyro_x,gyro_y,gyro_z,accel_x,accel_y,accel_z,mag_x,mag_y,mag_z,true_yaw_deg",
                    (0..imu.len()).map(|i| {
                        let t = imu.t0_s + i as f64 / imu.rate_hz;
                        let g = imu.gyro_rps[i];
                        let a = imu.accel_g[i];
                        let m = imu.mag[i];
                        [
                            t, g[0], g[1], g[2], a[0], a[1], a[2], m[0], m[1], m[2],
                            imu.true_yaw_deg[i],
                        ]
                        .iter()
                        .map(|v| fmt_f64(*v))
                        .collect::<Vec<_>>()
                        .join(",")
                    }),
                )?;
                Some(name)
            }
            None => None,
        };

        records.push(SegmentRecord {
            subject: seg.subject,
            trial: seg.trial,
            switch_index: seg.switch_index,
            delta_deg: seg.shift.delta_deg,
            class_index: seg.shift.class_index,
            heog_file,
            nemg_file,
            imu_file,
        });
    }

    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        generator: GeneratorEcho::from_config(&dataset.config),
        segments: records,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::validation(format!("manifest serialization failed: {e}")))?;
    fs::write(dir.join(MANIFEST_NAME), json)?;
    Ok(())
}

fn read_columns(path: &Path, expected_cols: usize) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::validation(format!("{}: empty file", path.display())))?;
    let n_cols = header.split(',').count();
    if n_cols != expected_cols {
        return Err(Error::validation(format!(
            "{}: expected {expected_cols} columns, found {n_cols}",
            path.display()
        )));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_cols];
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for (ci, field) in line.split(',').enumerate() {
            if ci >= n_cols {
                break;
            }
            columns[ci].push(parse_f64(field, &format!("{} line {}", path.display(), ln + 2))?);
            count += 1;
        }
        if count != n_cols {
            return Err(Error::validation(format!(
                "{} line {}: expected {n_cols} fields",
                path.display(),
                ln + 2
            )));
        }
    }
    Ok(columns)
}

fn check_time_base(times: &[f64], rate_hz: f64, context: &str) -> Result<()> {
    if times.is_empty() {
        return Err(Error::validation(format!("{context}: no samples")));
    }
    if (times[0] - (-SEGMENT_PRE_S)).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "{context}: first sample at {} s, expected {}",
            times[0], -SEGMENT_PRE_S
        )));
    }
    if times.len() > 1 {
        let dt = times[1] - times[0];
        if (dt - 1.0 / rate_hz).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "{context}: sample period {dt} does not match rate {rate_hz} Hz"
            )));
        }
    }
    Ok(())
}

/// Read a dataset directory written by `write_dataset`.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&manifest_path)?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::validation(format!("invalid manifest: {e}")))?;
    let config = manifest.validate(dir)?;
    let heog_rate = config.experiment.heog_rate_hz();

    let mut segments = Vec::with_capacity(manifest.segments.len());
    for rec in &manifest.segments {
        let shift = GazeShift::new(rec.delta_deg, config.experiment)?;

        let cols = read_columns(&dir.join(&rec.heog_file), 2)?;
        check_time_base(&cols[0], heog_rate, &rec.heog_file)?;
        let heog = Waveform::new(cols[1].clone(), heog_rate, -SEGMENT_PRE_S);

        let nemg = match &rec.nemg_file {
            Some(file) => {
                let cols = read_columns(&dir.join(file), 3)?;
                check_time_base(&cols[0], NEMG_RATE_HZ, file)?;
                Some(NemgPair {
                    left: Waveform::new(cols[1].clone(), NEMG_RATE_HZ, -SEGMENT_PRE_S),
                    right: Waveform::new(cols[2].clone(), NEMG_RATE_HZ, -SEGMENT_PRE_S),
                })
            }
            None => None,
        };

        let imu = match &rec.imu_file {
            Some(file) => {
                let cols = read_columns(&dir.join(file), 11)?;
                check_time_base(&cols[0], IMU_RATE_HZ, file)?;
                let n = cols[0].len();
                let mut series = ImuSeries {
                    rate_hz: IMU_RATE_HZ,
                    t0_s: -SEGMENT_PRE_S,
                    gyro_rps: Vec::with_capacity(n),
                    accel_g: Vec::with_capacity(n),
                    mag: Vec::with_capacity(n),
                    true_yaw_deg: cols[10].clone(),
                };
                for i in 0..n {
                    series.gyro_rps.push([cols[1][i], cols[2][i], cols[3][i]]);
                    series.accel_g.push([cols[4][i], cols[5][i], cols[6][i]]);
                    series.mag.push([cols[7][i], cols[8][i], cols[9][i]]);
                }
                series.validate()?;
                Some(series)
            }
            None => None,
        };

        segments.push(Segment {
            subject: rec.subject,
            trial: rec.trial,
            switch_index: rec.switch_index,
            shift,
            heog,
            nemg,
            imu,
        });
    }
    Ok(Dataset { config, segments })
}

/// Parse a flat key=value config file with `#` comments. Unknown keys are
/// rejected by the typed readers below.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {}: expected key = value, got `{raw}`", ln + 1))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

struct KvReader {
    map: BTreeMap<String, String>,
    used: std::collections::BTreeSet<String>,
}

impl KvReader {
    fn new(map: BTreeMap<String, String>) -> Self {
        KvReader { map, used: Default::default() }
    }

    fn get(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.map.get(key).cloned()
    }

    fn finish(self) -> Result<()> {
        let unknown: Vec<&String> =
            self.map.keys().filter(|k| !self.used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!(
                "unknown config keys: {}",
                unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )))
        }
    }
}

fn parse_typed<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::config(format!("bad value `{value}` for key `{key}`")))
}

/// Generator config from a key=value file. Recognized keys: experiment,
/// subjects, trials, seed, noise_scale, degraded_nemg, strategy_mean,
/// strategy_spread.
pub fn parse_generator_config(text: &str) -> Result<GeneratorConfig> {
    let mut kv = KvReader::new(parse_kv(text)?);
    let experiment = match kv.get("experiment") {
        Some(v) => ExperimentKind::from_name(&v).map_err(|e| Error::config(e.to_string()))?,
        None => return Err(Error::config("missing required key `experiment`".to_string())),
    };
    let mut config = match experiment {
        ExperimentKind::HeadFixed => GeneratorConfig::head_fixed_default(),
        ExperimentKind::HeadFree => GeneratorConfig::head_free_default(),
    };
    if let Some(v) = kv.get("subjects") {
        config.n_subjects = parse_typed("subjects", &v)?;
    }
    if let Some(v) = kv.get("trials") {
        config.n_trials_per_subject = parse_typed("trials", &v)?;
    }
    if let Some(v) = kv.get("seed") {
        config.master_seed = parse_typed("seed", &v)?;
    }
    if let Some(v) = kv.get("noise_scale") {
        config.noise_scale = parse_typed("noise_scale", &v)?;
    }
    if let Some(v) = kv.get("degraded_nemg") {
        config.degraded_nemg = parse_typed("degraded_nemg", &v)?;
    }
    if let Some(v) = kv.get("strategy_mean") {
        config.strategy_mean = parse_typed("strategy_mean", &v)?;
    }
    if let Some(v) = kv.get("strategy_spread") {
        config.strategy_spread = parse_typed("strategy_spread", &v)?;
    }
    kv.finish()?;
    config.validate()?;
    Ok(config)
}

/// Evaluation plan from a key=value file, resolved against the dataset's
/// experiment kind. Recognized keys: profile, repetitions, input_sets,
/// classifiers, seed, nn_epochs.
pub fn parse_plan(text: &str, experiment: ExperimentKind) -> Result<ExperimentPlan> {
    let mut kv = KvReader::new(parse_kv(text)?);
    let profile = match kv.get("profile") {
        Some(v) => Profile::from_name(&v).map_err(|e| Error::config(e.to_string()))?,
        None => Profile::Ci,
    };
    let mut plan = match experiment {
        ExperimentKind::HeadFixed => ExperimentPlan::head_fixed(profile),
        ExperimentKind::HeadFree => ExperimentPlan::head_free(profile),
    };
    if let Some(v) = kv.get("repetitions") {
        plan.repetitions = parse_typed("repetitions", &v)?;
    }
    if let Some(v) = kv.get("nn_epochs") {
        plan.nn_epochs = parse_typed("nn_epochs", &v)?;
    }
    if let Some(v) = kv.get("seed") {
        plan.master_seed = parse_typed("seed", &v)?;
    }
    if let Some(v) = kv.get("input_sets") {
        plan.input_sets = v
            .split(',')
            .map(|s| InputSet::from_name(s.trim()).map_err(|e| Error::config(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(v) = kv.get("classifiers") {
        plan.classifiers = v
            .split(',')
            .map(|s| ClassifierKind::from_name(s.trim()).map_err(|e| Error::config(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
    }
    kv.finish()?;
    plan.validate()?;
    Ok(plan)
}

/// Report files: rendered table, aggregated cells CSV, per-repetition CSV
/// and the summed confusion matrices.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let entries = [
        ("table.txt", render_table(report)),
        ("cells.csv", report.cells_csv()),
        ("repetitions.csv", report.repetitions_csv()),
        ("confusion.csv", report.confusion_csv()),
    ];
    let mut written = Vec::new();
    for (name, content) in entries {
        let path = dir.join(name);
        fs::write(&path, content)?;
        written.push(path);
    }
    Ok(written)
}
