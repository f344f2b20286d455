//! Experiment orchestration: repeated stratified 80/20 splits, per-cell
//! training and testing, accuracy aggregation and Table-style rendering.
//!
//! Within one repetition every (input set, classifier) cell sees the same
//! split, so inputs and classifiers are compared on common allocations.
//! Repetition seeds and per-cell training seeds derive from the master seed
//! by counter mixing, making reports byte-reproducible under any schedule.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ml::{
    predict, smo_train, train_network, ArchConfig, ClassifierKind, InputSpec, ModelParams,
    SvmConfig, Tensor, TrainedModel,
};
use crate::pipeline::{PreprocessedDataset, PreprocessedSegment};
use crate::rng::{mix, stream, tag};
use crate::synthgen::{ExperimentKind, SEGMENT_PRE_S};

/// Common input grid: 64 Hz, 320 points spanning [-0.5, 4.5) s.
pub const INPUT_GRID_RATE_HZ: f64 = 64.0;
pub const INPUT_GRID_LEN: usize = 320;

/// Classifier input modality combinations, in the paper's table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InputSet {
    Heog,
    Nemg,
    Imu,
    HeogNemg,
    HeogImu,
}

impl InputSet {
    pub const ALL: [InputSet; 5] = [
        InputSet::Heog,
        InputSet::Nemg,
        InputSet::Imu,
        InputSet::HeogNemg,
        InputSet::HeogImu,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            InputSet::Heog => "heog",
            InputSet::Nemg => "nemg",
            InputSet::Imu => "imu",
            InputSet::HeogNemg => "heog+nemg",
            InputSet::HeogImu => "heog+imu",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "heog" => InputSet::Heog,
            "nemg" => InputSet::Nemg,
            "imu" => InputSet::Imu,
            "heog+nemg" | "nemg+heog" => InputSet::HeogNemg,
            "heog+imu" | "imu+heog" => InputSet::HeogImu,
            other => return Err(Error::validation(format!("unknown input set `{other}`"))),
        })
    }

    fn uses_heog(&self) -> bool {
        matches!(self, InputSet::Heog | InputSet::HeogNemg | InputSet::HeogImu)
    }

    fn uses_nemg(&self) -> bool {
        matches!(self, InputSet::Nemg | InputSet::HeogNemg)
    }

    fn uses_imu(&self) -> bool {
        matches!(self, InputSet::Imu | InputSet::HeogImu)
    }

    /// Waveform channel count: HEOG 1, yaw 1, NEMG 2 (left + right).
    pub fn channels(&self) -> usize {
        let mut c = 0;
        if self.uses_heog() {
            c += 1;
        }
        if self.uses_nemg() {
            c += 2;
        }
        if self.uses_imu() {
            c += 1;
        }
        c
    }

    /// Hand-crafted feature dimension for the SVM.
    pub fn feature_dim(&self) -> usize {
        let mut d = 0;
        if self.uses_heog() {
            d += 2;
        }
        if self.uses_nemg() {
            d += 2;
        }
        if self.uses_imu() {
            d += 1;
        }
        d
    }

    pub fn valid_for(&self, experiment: ExperimentKind) -> bool {
        match experiment {
            ExperimentKind::HeadFree => true,
            ExperimentKind::HeadFixed => *self == InputSet::Heog,
        }
    }
}

/// Runtime profile: the CI profile trims repetitions and the network epoch
/// budget so a full grid stays inside a few minutes; the full profile uses
/// the reference counts (100 head-fixed / 50 head-free repetitions, 100
/// epochs).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Ci,
    Full,
}

impl Profile {
    pub fn repetitions(&self, experiment: ExperimentKind) -> usize {
        match (self, experiment) {
            (Profile::Ci, _) => 5,
            (Profile::Full, ExperimentKind::HeadFixed) => 100,
            (Profile::Full, ExperimentKind::HeadFree) => 50,
        }
    }

    /// The CI epoch budget is per experiment: the head-fixed grid is an
    /// order of magnitude smaller (2 cells, 640 training rows), so it can
    /// afford the epochs its 12-class LSTM needs while the 20-cell head-free
    /// grid stays within the runtime budget.
    pub fn nn_epochs(&self, experiment: ExperimentKind) -> usize {
        match (self, experiment) {
            (Profile::Ci, ExperimentKind::HeadFixed) => 40,
            (Profile::Ci, ExperimentKind::HeadFree) => 8,
            (Profile::Full, _) => 100,
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ci" => Profile::Ci,
            "full" => Profile::Full,
            other => return Err(Error::validation(format!("unknown profile `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub experiment: ExperimentKind,
    pub input_sets: Vec<InputSet>,
    pub classifiers: Vec<ClassifierKind>,
    pub train_fraction: f64,
    pub repetitions: usize,
    pub nn_epochs: usize,
    pub master_seed: u64,
}

impl ExperimentPlan {
    /// Head-fixed grid: HEOG features into the SVM, HEOG waveforms into the
    /// LSTM.
    pub fn head_fixed(profile: Profile) -> Self {
        ExperimentPlan {
            experiment: ExperimentKind::HeadFixed,
            input_sets: vec![InputSet::Heog],
            classifiers: vec![ClassifierKind::Svm, ClassifierKind::Lstm],
            train_fraction: 0.8,
            repetitions: profile.repetitions(ExperimentKind::HeadFixed),
            nn_epochs: profile.nn_epochs(ExperimentKind::HeadFixed),
            master_seed: 42,
        }
    }

    /// Head-free grid: all five input sets crossed with all four classifiers.
    pub fn head_free(profile: Profile) -> Self {
        ExperimentPlan {
            experiment: ExperimentKind::HeadFree,
            input_sets: InputSet::ALL.to_vec(),
            classifiers: ClassifierKind::ALL.to_vec(),
            train_fraction: 0.8,
            repetitions: profile.repetitions(ExperimentKind::HeadFree),
            nn_epochs: profile.nn_epochs(ExperimentKind::HeadFree),
            master_seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_sets.is_empty() || self.classifiers.is_empty() {
            return Err(Error::config("plan needs at least one input set and classifier".to_string()));
        }
        if !(0.0 < self.train_fraction && self.train_fraction < 1.0) {
            return Err(Error::config(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.repetitions == 0 || self.nn_epochs == 0 {
            return Err(Error::config("repetitions and nn_epochs must be >= 1".to_string()));
        }
        for set in &self.input_sets {
            if !set.valid_for(self.experiment) {
                return Err(Error::config(format!(
                    "input set {} is not available in the {} experiment",
                    set.name(),
                    self.experiment.name()
                )));
            }
        }
        Ok(())
    }
}

/// Stratified split of class labels into (train, test) index sets.
///
/// Each class is shuffled independently and cut at round(fraction * size),
/// so per-class proportions carry over exactly.
pub fn stratified_split(
    labels: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::config(format!("fraction must lie in (0, 1), got {fraction}")));
    }
    let classes = labels.iter().max().map(|&m| m + 1).unwrap_or(0);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        per_class[y].push(i);
    }
    if let Some(small) = per_class.iter().position(|c| c.len() < 2) {
        return Err(Error::validation(format!(
            "class {small} has fewer than 2 segments ({})",
            per_class[small].len()
        )));
    }
    let mut rng = stream(seed, &[tag::SPLIT]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for indices in per_class.iter_mut() {
        indices.shuffle(&mut rng);
        let n_train = (fraction * indices.len() as f64).round() as usize;
        train.extend_from_slice(&indices[..n_train]);
        test.extend_from_slice(&indices[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn segment_cell_error(seg: &PreprocessedSegment, what: &str) -> Error {
    Error::validation(format!(
        "segment (subject {}, trial {}, switch {}) is missing {what}",
        seg.subject, seg.trial, seg.switch_index
    ))
}

/// Stack the requested modalities of each segment onto the common 64 Hz,
/// 320-point grid: batch shape (N, 320, channels). Channel order is HEOG,
/// NEMG left, NEMG right, yaw.
pub fn build_input(segments: &[&PreprocessedSegment], set: InputSet) -> Result<Tensor> {
    let channels = set.channels();
    let mut data = Vec::with_capacity(segments.len() * INPUT_GRID_LEN * channels);
    for seg in segments {
        let heog = if set.uses_heog() { Some(&seg.heog) } else { None };
        let nemg = if set.uses_nemg() {
            Some(seg.nemg_env.as_ref().ok_or_else(|| segment_cell_error(seg, "NEMG"))?)
        } else {
            None
        };
        let yaw = if set.uses_imu() {
            Some(seg.yaw.as_ref().ok_or_else(|| segment_cell_error(seg, "IMU yaw"))?)
        } else {
            None
        };
        for k in 0..INPUT_GRID_LEN {
            let t = -SEGMENT_PRE_S + k as f64 / INPUT_GRID_RATE_HZ;
            if let Some(w) = heog {
                data.push(w.sample_at(t));
            }
            if let Some(pair) = nemg {
                data.push(pair.left.sample_at(t));
                data.push(pair.right.sample_at(t));
            }
            if let Some(w) = yaw {
                data.push(w.sample_at(t));
            }
        }
    }
    Tensor::new(vec![segments.len(), INPUT_GRID_LEN, channels], data)
}

/// Hand-crafted feature rows for the SVM: (N, feature_dim). Order is HEOG
/// polarity, HEOG abs peak, NEMG left peak, NEMG right peak, yaw variation,
/// restricted to the requested modalities.
pub fn build_features(segments: &[&PreprocessedSegment], set: InputSet) -> Result<Tensor> {
    let dim = set.feature_dim();
    let mut data = Vec::with_capacity(segments.len() * dim);
    for seg in segments {
        if set.uses_heog() {
            let f = seg.features.heog.ok_or_else(|| segment_cell_error(seg, "HEOG features"))?;
            data.push(f.polarity);
            data.push(f.abs_peak);
        }
        if set.uses_nemg() {
            let f = seg.features.nemg.ok_or_else(|| segment_cell_error(seg, "NEMG features"))?;
            data.push(f.left);
            data.push(f.right);
        }
        if set.uses_imu() {
            let f = seg
                .features
                .yaw_variation
                .ok_or_else(|| segment_cell_error(seg, "yaw feature"))?;
            data.push(f);
        }
    }
    Tensor::new(vec![segments.len(), dim], data)
}

/// Accuracy over repetitions for one (input set, classifier) cell, plus the
/// confusion matrix summed over repetitions (rows: true class).
#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub input_set: InputSet,
    pub classifier: ClassifierKind,
    pub per_repetition_pct: Vec<f64>,
    pub mean_pct: f64,
    pub std_pct: f64,
    pub confusion: Vec<usize>,
}

impl CellReport {
    pub fn name(&self) -> String {
        format!("{}/{}", self.input_set.name(), self.classifier.name())
    }
}

/// The full evaluation grid. Standard deviations are population standard
/// deviations over repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub plan: ExperimentPlan,
    pub classes: usize,
    pub test_counts: Vec<usize>,
    pub cells: Vec<CellReport>,
}

impl EvalReport {
    pub fn cell(&self, set: InputSet, clf: ClassifierKind) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.input_set == set && c.classifier == clf)
    }

    /// One row per cell: input_set, classifier, mean, std.
    pub fn cells_csv(&self) -> String {
        let mut out = String::from("input_set,classifier,mean_accuracy_pct,std_accuracy_pct\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{:.6},{:.6}\n",
                c.input_set.name(),
                c.classifier.name(),
                c.mean_pct,
                c.std_pct
            ));
        }
        out
    }

    /// One row per cell per repetition.
    pub fn repetitions_csv(&self) -> String {
        let mut out = String::from("input_set,classifier,repetition,accuracy_pct\n");
        for c in &self.cells {
            for (r, acc) in c.per_repetition_pct.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{:.6}\n",
                    c.input_set.name(),
                    c.classifier.name(),
                    r,
                    acc
                ));
            }
        }
        out
    }

    /// Confusion counts summed over repetitions, one row per matrix entry.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("input_set,classifier,true_class,predicted_class,count\n");
        for c in &self.cells {
            for t in 0..self.classes {
                for p in 0..self.classes {
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        c.input_set.name(),
                        c.classifier.name(),
                        t,
                        p,
                        c.confusion[t * self.classes + p]
                    ));
                }
            }
        }
        out
    }
}

struct CellOutcome {
    accuracy_pct: f64,
    confusion: Vec<usize>,
}

/// Train the model of one cell on the given training rows.
fn train_cell(
    pre: &PreprocessedDataset,
    plan: &ExperimentPlan,
    train_idx: &[usize],
    set: InputSet,
    clf: ClassifierKind,
    seed: u64,
) -> Result<TrainedModel> {
    let classes = pre.class_count();
    let train_segs: Vec<&PreprocessedSegment> = train_idx.iter().map(|&i| &pre.segments[i]).collect();
    let train_labels: Vec<usize> = train_segs.iter().map(|s| s.shift.class_index).collect();
    match clf {
        ClassifierKind::Svm => {
            let x = build_features(&train_segs, set)?;
            let cfg = SvmConfig { seed, ..SvmConfig::default() };
            let svm = smo_train(&x, &train_labels, &cfg)?;
            Ok(TrainedModel {
                kind: ClassifierKind::Svm,
                input: InputSpec::Features { dim: set.feature_dim(), classes },
                params: ModelParams::Svm(svm),
                train_loss: Vec::new(),
            })
        }
        _ => {
            let x = build_input(&train_segs, set)?;
            let cfg = ArchConfig {
                epochs: plan.nn_epochs,
                seed,
                ..ArchConfig::new(clf.net_kind().expect("non-SVM classifier"))
            };
            let fitted = train_network(&cfg, &x, &train_labels, classes)?;
            Ok(TrainedModel {
                kind: clf,
                input: InputSpec::Waveform { steps: INPUT_GRID_LEN, channels: set.channels(), classes },
                params: ModelParams::Net(fitted.network),
                train_loss: fitted.train_loss,
            })
        }
    }
}

/// Train one model per plan cell on a chosen repetition's split; used to
/// persist example models from a run.
pub fn train_cell_models(
    plan: &ExperimentPlan,
    pre: &PreprocessedDataset,
    repetition: usize,
) -> Result<Vec<(String, TrainedModel)>> {
    plan.validate()?;
    if repetition >= plan.repetitions {
        return Err(Error::config(format!(
            "repetition {repetition} out of range for {} repetitions",
            plan.repetitions
        )));
    }
    let labels = pre.labels();
    let (train_idx, _) =
        stratified_split(&labels, plan.train_fraction, mix(plan.master_seed, &[repetition as u64]))?;
    let mut out = Vec::new();
    let mut ci = 0;
    for &set in &plan.input_sets {
        for &clf in &plan.classifiers {
            let seed = mix(plan.master_seed, &[tag::TRAIN, repetition as u64, ci as u64]);
            let model = train_cell(pre, plan, &train_idx, set, clf, seed)
                .map_err(|e| e.in_cell(format!("{}/{}", set.name(), clf.name())))?;
            out.push((format!("{}_{}", set.name(), clf.name()), model));
            ci += 1;
        }
    }
    Ok(out)
}

fn run_cell(
    pre: &PreprocessedDataset,
    plan: &ExperimentPlan,
    train_idx: &[usize],
    test_idx: &[usize],
    set: InputSet,
    clf: ClassifierKind,
    seed: u64,
) -> Result<CellOutcome> {
    let classes = pre.class_count();
    let test_segs: Vec<&PreprocessedSegment> = test_idx.iter().map(|&i| &pre.segments[i]).collect();
    let test_labels: Vec<usize> = test_segs.iter().map(|s| s.shift.class_index).collect();

    let model = train_cell(pre, plan, train_idx, set, clf, seed)?;
    let test_x = match clf {
        ClassifierKind::Svm => build_features(&test_segs, set)?,
        _ => build_input(&test_segs, set)?,
    };
    let predictions = predict(&model, &test_x)?;

    let mut hits = 0usize;
    let mut confusion = vec![0usize; classes * classes];
    for (&truth, &pred) in test_labels.iter().zip(&predictions) {
        if truth == pred {
            hits += 1;
        }
        confusion[truth * classes + pred] += 1;
    }
    Ok(CellOutcome {
        accuracy_pct: 100.0 * hits as f64 / test_labels.len() as f64,
        confusion,
    })
}

/// Run the full plan: every repetition draws one stratified split shared by
/// all cells; per-cell accuracies are aggregated into mean and population
/// standard deviation.
pub fn run_plan(plan: &ExperimentPlan, pre: &PreprocessedDataset) -> Result<EvalReport> {
    plan.validate()?;
    if plan.experiment != pre.experiment {
        return Err(Error::validation(format!(
            "plan targets {} but the dataset is {}",
            plan.experiment.name(),
            pre.experiment.name()
        )));
    }
    let labels = pre.labels();
    let classes = pre.class_count();

    // Pre-derive every repetition's split from (master_seed, repetition).
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..plan.repetitions)
        .map(|rep| {
            stratified_split(&labels, plan.train_fraction, mix(plan.master_seed, &[rep as u64]))
        })
        .collect::<Result<Vec<_>>>()?;
    let test_counts: Vec<usize> = {
        let mut counts = vec![0usize; classes];
        for &i in &splits[0].1 {
            counts[labels[i]] += 1;
        }
        counts
    };

    let cells: Vec<(InputSet, ClassifierKind)> = plan
        .input_sets
        .iter()
        .flat_map(|&s| plan.classifiers.iter().map(move |&c| (s, c)))
        .collect();

    // All (repetition, cell) units run independently; results reduce in a
    // fixed order afterwards.
    let mut units = Vec::with_capacity(plan.repetitions * cells.len());
    for rep in 0..plan.repetitions {
        for (ci, &(set, clf)) in cells.iter().enumerate() {
            units.push((rep, ci, set, clf));
        }
    }
    let outcomes: Vec<(usize, usize, CellOutcome)> = units
        .par_iter()
        .map(|&(rep, ci, set, clf)| {
            let (train_idx, test_idx) = &splits[rep];
            let seed = mix(plan.master_seed, &[tag::TRAIN, rep as u64, ci as u64]);
            run_cell(pre, plan, train_idx, test_idx, set, clf, seed)
                .map(|o| (rep, ci, o))
                .map_err(|e| e.in_cell(format!("{}/{} repetition {rep}", set.name(), clf.name())))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cell_reports: Vec<CellReport> = cells
        .iter()
        .map(|&(set, clf)| CellReport {
            input_set: set,
            classifier: clf,
            per_repetition_pct: vec![0.0; plan.repetitions],
            mean_pct: 0.0,
            std_pct: 0.0,
            confusion: vec![0usize; classes * classes],
        })
        .collect();
    for (rep, ci, outcome) in outcomes {
        cell_reports[ci].per_repetition_pct[rep] = outcome.accuracy_pct;
        for (slot, add) in cell_reports[ci].confusion.iter_mut().zip(&outcome.confusion) {
            *slot += add;
        }
    }
    for c in cell_reports.iter_mut() {
        let n = c.per_repetition_pct.len() as f64;
        c.mean_pct = c.per_repetition_pct.iter().sum::<f64>() / n;
        let var = c
            .per_repetition_pct
            .iter()
            .map(|a| (a - c.mean_pct) * (a - c.mean_pct))
            .sum::<f64>()
            / n;
        c.std_pct = var.sqrt();
    }

    Ok(EvalReport { plan: plan.clone(), classes, test_counts, cells: cell_reports })
}

/// Plain-text accuracy table: input sets as rows (paper order), classifiers
/// as columns, cells as "mean +- std".
pub fn render_table(report: &EvalReport) -> String {
    let sets: Vec<InputSet> = InputSet::ALL
        .iter()
        .copied()
        .filter(|s| report.plan.input_sets.contains(s))
        .collect();
    let clfs: Vec<ClassifierKind> = ClassifierKind::ALL
        .iter()
        .copied()
        .filter(|c| report.plan.classifiers.contains(c))
        .collect();

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Input \\ Classifier".to_string()];
    header.extend(clfs.iter().map(|c| c.name().to_uppercase()));
    rows.push(header);
    for &set in &sets {
        let mut row = vec![set.name().to_string()];
        for &clf in &clfs {
            row.push(match report.cell(set, clf) {
                Some(c) => format!("{:.1} \u{b1} {:.1}", c.mean_pct, c.std_pct),
                None => "-".to_string(),
            });
        }
        rows.push(row);
    }

    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, cell)| format!("{:w$}", cell, w = widths[j]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (cols - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::preprocess_dataset;
    use crate::synthgen::{gen_dataset, GeneratorConfig};

    #[test]
    fn head_free_split_counts_match_the_reference_allocation() {
        let labels: Vec<usize> = (0..6).flat_map(|c| std::iter::repeat(c).take(340)).collect();
        assert_eq!(labels.len(), 2040);
        let (train, test) = stratified_split(&labels, 0.8, 7).unwrap();
        assert_eq!(train.len(), 1632);
        assert_eq!(test.len(), 408);
        for class in 0..6 {
            let tr = train.iter().filter(|&&i| labels[i] == class).count();
            let te = test.iter().filter(|&&i| labels[i] == class).count();
            assert_eq!((tr, te), (272, 68), "class {class}");
        }
    }

    #[test]
    fn head_fixed_split_counts_follow_class_sizes() {
        // 8 classes of 80 segments and 4 classes of 40: 640/160 overall.
        let mut labels = Vec::new();
        for c in 0..8 {
            labels.extend(std::iter::repeat(c).take(80));
        }
        for c in 8..12 {
            labels.extend(std::iter::repeat(c).take(40));
        }
        let (train, test) = stratified_split(&labels, 0.8, 3).unwrap();
        assert_eq!((train.len(), test.len()), (640, 160));
        for class in 0..12 {
            let tr = train.iter().filter(|&&i| labels[i] == class).count();
            let expect = if class < 8 { 64 } else { 32 };
            assert_eq!(tr, expect, "class {class}");
        }
    }

    #[test]
    fn split_is_a_reproducible_partition() {
        let labels: Vec<usize> = (0..50).map(|i| i % 5).collect();
        let (tr1, te1) = stratified_split(&labels, 0.8, 11).unwrap();
        let (tr2, te2) = stratified_split(&labels, 0.8, 11).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        let (tr3, _) = stratified_split(&labels, 0.8, 12).unwrap();
        assert_ne!(tr1, tr3);

        let mut all: Vec<usize> = tr1.iter().chain(te1.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());

        // 10 per class at 0.8 -> exactly 8/2.
        for class in 0..5 {
            assert_eq!(tr1.iter().filter(|&&i| labels[i] == class).count(), 8);
            assert_eq!(te1.iter().filter(|&&i| labels[i] == class).count(), 2);
        }
    }

    #[test]
    fn split_rejects_tiny_classes_and_bad_fractions() {
        let labels = vec![0, 0, 1];
        assert!(stratified_split(&labels, 0.8, 1).is_err());
        assert!(stratified_split(&[0, 0, 1, 1], 1.0, 1).is_err());
    }

    fn small_head_free() -> PreprocessedDataset {
        let config = GeneratorConfig {
            n_subjects: 1,
            n_trials_per_subject: 3,
            ..GeneratorConfig::head_free_default()
        };
        preprocess_dataset(&gen_dataset(&config).unwrap()).unwrap()
    }

    #[test]
    fn build_input_stacks_requested_channels() {
        let pre = small_head_free();
        let segs: Vec<&PreprocessedSegment> = pre.segments.iter().take(4).collect();
        assert_eq!(build_input(&segs, InputSet::Heog).unwrap().shape(), &[4, 320, 1]);
        assert_eq!(build_input(&segs, InputSet::HeogImu).unwrap().shape(), &[4, 320, 2]);
        assert_eq!(build_input(&segs, InputSet::HeogNemg).unwrap().shape(), &[4, 320, 3]);
        assert_eq!(build_features(&segs, InputSet::HeogNemg).unwrap().shape(), &[4, 4]);
        assert_eq!(build_features(&segs, InputSet::Imu).unwrap().shape(), &[4, 1]);
    }

    #[test]
    fn build_input_interpolates_envelopes_onto_the_grid() {
        // A ramp envelope must interpolate linearly: grid values within half
        // a hop of the frame centers reproduce the ramp.
        let pre = small_head_free();
        let mut seg = pre.segments[0].clone();
        let n_frames = 99;
        let ramp: Vec<f64> = (0..n_frames).map(|i| i as f64).collect();
        let pair = seg.nemg_env.as_mut().unwrap();
        pair.left = crate::dsp::Waveform::new(ramp.clone(), 20.0, -0.45);
        pair.right = crate::dsp::Waveform::new(ramp, 20.0, -0.45);
        let segs = [&seg];
        let x = build_input(&segs, InputSet::Nemg).unwrap();
        for k in 0..INPUT_GRID_LEN {
            let t = -SEGMENT_PRE_S + k as f64 / INPUT_GRID_RATE_HZ;
            let expect = ((t - (-0.45)) * 20.0).clamp(0.0, 98.0);
            let got = x.data()[k * 2];
            assert!((got - expect).abs() < 1e-9, "grid {k}: {got} vs {expect}");
        }
    }

    #[test]
    fn missing_modality_is_reported_with_segment_identity() {
        let config = GeneratorConfig {
            n_subjects: 1,
            n_trials_per_subject: 1,
            ..GeneratorConfig::head_fixed_default()
        };
        let pre = preprocess_dataset(&gen_dataset(&config).unwrap()).unwrap();
        let segs: Vec<&PreprocessedSegment> = pre.segments.iter().take(1).collect();
        let err = build_input(&segs, InputSet::Imu).unwrap_err().to_string();
        assert!(err.contains("subject 0"), "{err}");
    }

    #[test]
    fn run_plan_is_deterministic_and_aggregates_correctly() {
        let pre = small_head_free();
        let plan = ExperimentPlan {
            experiment: ExperimentKind::HeadFree,
            input_sets: vec![InputSet::Heog, InputSet::HeogImu],
            classifiers: vec![ClassifierKind::Svm],
            train_fraction: 0.8,
            repetitions: 3,
            nn_epochs: 2,
            master_seed: 9,
        };
        let a = run_plan(&plan, &pre).unwrap();
        let b = run_plan(&plan, &pre).unwrap();
        assert_eq!(a.repetitions_csv(), b.repetitions_csv());
        assert_eq!(a.cells_csv(), b.cells_csv());

        for cell in &a.cells {
            // Aggregation oracle: recompute mean/std from the stored
            // per-repetition accuracies.
            let n = cell.per_repetition_pct.len() as f64;
            let mean = cell.per_repetition_pct.iter().sum::<f64>() / n;
            let var = cell
                .per_repetition_pct
                .iter()
                .map(|x| (x - mean) * (x - mean))
                .sum::<f64>()
                / n;
            assert!((cell.mean_pct - mean).abs() < 1e-12);
            assert!((cell.std_pct - var.sqrt()).abs() < 1e-12);
            // Confusion rows sum to class test counts x repetitions.
            for class in 0..a.classes {
                let row: usize = cell.confusion
                    [class * a.classes..(class + 1) * a.classes]
                    .iter()
                    .sum();
                assert_eq!(row, a.test_counts[class] * plan.repetitions, "class {class}");
            }
        }
    }

    #[test]
    fn shared_cell_is_unaffected_by_other_cells_in_the_plan() {
        // Splits and training seeds derive from (master_seed, repetition,
        // cell identity), so adding cells must not change existing ones.
        let pre = small_head_free();
        let narrow = ExperimentPlan {
            experiment: ExperimentKind::HeadFree,
            input_sets: vec![InputSet::Heog],
            classifiers: vec![ClassifierKind::Svm],
            train_fraction: 0.8,
            repetitions: 2,
            nn_epochs: 2,
            master_seed: 21,
        };
        let wide = ExperimentPlan {
            input_sets: vec![InputSet::Heog, InputSet::Nemg],
            ..narrow.clone()
        };
        let a = run_plan(&narrow, &pre).unwrap();
        let b = run_plan(&wide, &pre).unwrap();
        let cell_a = a.cell(InputSet::Heog, ClassifierKind::Svm).unwrap();
        let cell_b = b.cell(InputSet::Heog, ClassifierKind::Svm).unwrap();
        assert_eq!(cell_a.per_repetition_pct, cell_b.per_repetition_pct);
    }

    #[test]
    fn single_repetition_has_zero_std() {
        let pre = small_head_free();
        let plan = ExperimentPlan {
            experiment: ExperimentKind::HeadFree,
            input_sets: vec![InputSet::Heog],
            classifiers: vec![ClassifierKind::Svm],
            train_fraction: 0.8,
            repetitions: 1,
            nn_epochs: 1,
            master_seed: 5,
        };
        let report = run_plan(&plan, &pre).unwrap();
        assert_eq!(report.cells[0].std_pct, 0.0);
    }

    #[test]
    fn table_renders_grid_and_single_cell() {
        let pre = small_head_free();
        let plan = ExperimentPlan {
            experiment: ExperimentKind::HeadFree,
            input_sets: vec![InputSet::Heog, InputSet::Nemg],
            classifiers: vec![ClassifierKind::Svm],
            train_fraction: 0.8,
            repetitions: 1,
            nn_epochs: 1,
            master_seed: 5,
        };
        let report = run_plan(&plan, &pre).unwrap();
        let table = render_table(&report);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4, "{table}");
        assert!(lines[0].contains("SVM"));
        assert!(lines[2].starts_with("heog"));
        assert!(lines[3].starts_with("nemg"));
        assert!(table.contains('\u{b1}'));
    }

    #[test]
    fn plan_validation_rejects_head_fixed_nemg() {
        let plan = ExperimentPlan {
            experiment: ExperimentKind::HeadFixed,
            input_sets: vec![InputSet::Nemg],
            classifiers: vec![ClassifierKind::Svm],
            train_fraction: 0.8,
            repetitions: 1,
            nn_epochs: 1,
            master_seed: 0,
        };
        assert!(matches!(plan.validate(), Err(Error::Config(_))));
    }
}
