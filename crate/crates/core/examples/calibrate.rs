//! Development probe: measures cell accuracies and runtimes for the default
//! synthetic datasets. Not part of the public surface.

use std::time::Instant;

use gazepipe_core::harness::{run_plan, ExperimentPlan, InputSet, Profile};
use gazepipe_core::ml::ClassifierKind;
use gazepipe_core::pipeline::preprocess_dataset;
use gazepipe_core::synthgen::{gen_dataset, GeneratorConfig};

fn main() {
    let phase = std::env::args().nth(1).unwrap_or_else(|| "a".to_string());
    match phase.as_str() {
        "a" => head_fixed_svm_sweep(),
        "b" => head_free_svm_grid(false),
        "b-degraded" => head_free_svm_grid(true),
        "c" => nn_cell_timing(),
        "d" => full_ci_grid(),
        "e" => head_fixed_lstm(),
        "f" => lstm_trajectory(),
        other => eprintln!("unknown phase {other}"),
    }
}

fn head_fixed_svm_sweep() {
    for noise in [1.0, 2.0, 4.0] {
        let t = Instant::now();
        let config = GeneratorConfig { noise_scale: noise, ..GeneratorConfig::head_fixed_default() };
        let pre = preprocess_dataset(&gen_dataset(&config).unwrap()).unwrap();
        let plan = ExperimentPlan {
            classifiers: vec![ClassifierKind::Svm],
            ..ExperimentPlan::head_fixed(Profile::Ci)
        };
        let report = run_plan(&plan, &pre).unwrap();
        let cell = report.cell(InputSet::Heog, ClassifierKind::Svm).unwrap();
        println!(
            "head-fixed svm noise={noise}: {:.1} +- {:.1} ({:?})",
            cell.mean_pct,
            cell.std_pct,
            t.elapsed()
        );
    }
}

fn head_fixed_lstm() {
    let t = Instant::now();
    let config = GeneratorConfig::head_fixed_default();
    let pre = preprocess_dataset(&gen_dataset(&config).unwrap()).unwrap();
    let plan = ExperimentPlan {
        classifiers: vec![ClassifierKind::Lstm],
        ..ExperimentPlan::head_fixed(Profile::Ci)
    };
    let report = run_plan(&plan, &pre).unwrap();
    let cell = report.cell(InputSet::Heog, ClassifierKind::Lstm).unwrap();
    println!(
        "head-fixed lstm: {:.1} +- {:.1} reps {:?} ({:?})",
        cell.mean_pct,
        cell.std_pct,
        cell.per_repetition_pct,
        t.elapsed()
    );
}

fn head_free_svm_grid(degraded: bool) {
    let t = Instant::now();
    let config = GeneratorConfig { degraded_nemg: degraded, ..GeneratorConfig::head_free_default() };
    let pre = preprocess_dataset(&gen_dataset(&config).unwrap()).unwrap();
    println!("dataset+preprocess: {:?}", t.elapsed());
    let plan = ExperimentPlan {
        classifiers: vec![ClassifierKind::Svm],
        ..ExperimentPlan::head_free(Profile::Ci)
    };
    let report = run_plan(&plan, &pre).unwrap();
    for cell in &report.cells {
        println!(
            "head-free svm degraded={degraded} {}: {:.1} +- {:.1}",
            cell.input_set.name(),
            cell.mean_pct,
            cell.std_pct
        );
    }
    println!("total: {:?}", t.elapsed());
}

fn nn_cell_timing() {
    let config = GeneratorConfig::head_free_default();
    let pre = preprocess_dataset(&gen_dataset(&config).unwrap()).unwrap();
    for clf in [ClassifierKind::Fcn, ClassifierKind::Cnn, ClassifierKind::Lstm] {
        let t = Instant::now();
        let plan = ExperimentPlan {
            input_sets: vec![InputSet::HeogNemg],
            classifiers: vec![clf],
            repetitions: 1,
            ..ExperimentPlan::head_free(Profile::Ci)
        };
        let report = run_plan(&plan, &pre).unwrap();
        println!(
            "{} 1 rep heog+nemg (3ch, 30 epochs): {:.1}% in {:?}",
            clf.name(),
            report.cells[0].mean_pct,
            t.elapsed()
        );
    }
}

fn lstm_trajectory() {
    use gazepipe_core::harness::{build_input, stratified_split};
    use gazepipe_core::ml::{predict, train_network, ArchConfig, InputSpec, ModelParams, NetKind, TrainedModel};

    let epochs: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(150);
    let config = GeneratorConfig::head_fixed_default();
    let pre = preprocess_dataset(&gen_dataset(&config).unwrap()).unwrap();
    let labels = pre.labels();
    let (train_idx, test_idx) = stratified_split(&labels, 0.8, 1).unwrap();
    let train_segs: Vec<_> = train_idx.iter().map(|&i| &pre.segments[i]).collect();
    let test_segs: Vec<_> = test_idx.iter().map(|&i| &pre.segments[i]).collect();
    let train_labels: Vec<usize> = train_segs.iter().map(|s| s.shift.class_index).collect();
    let test_labels: Vec<usize> = test_segs.iter().map(|s| s.shift.class_index).collect();
    let x = build_input(&train_segs, InputSet::Heog).unwrap();
    let xt = build_input(&test_segs, InputSet::Heog).unwrap();

    let lr: f64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let t = Instant::now();
    let cfg = ArchConfig { epochs, seed: 3, learning_rate: lr, ..ArchConfig::new(NetKind::Lstm) };
    let fitted = train_network(&cfg, &x, &train_labels, 12).unwrap();
    for (e, loss) in fitted.train_loss.iter().enumerate() {
        if e % 10 == 0 || e + 1 == epochs {
            println!("epoch {e}: loss {loss:.4}");
        }
    }
    let model = TrainedModel {
        kind: ClassifierKind::Lstm,
        input: InputSpec::Waveform { steps: 320, channels: 1, classes: 12 },
        params: ModelParams::Net(fitted.network),
        train_loss: Vec::new(),
    };
    let preds = predict(&model, &xt).unwrap();
    let acc = preds.iter().zip(&test_labels).filter(|(a, b)| a == b).count() as f64
        / test_labels.len() as f64;
    let train_preds = predict(&model, &x).unwrap();
    let train_acc = train_preds.iter().zip(&train_labels).filter(|(a, b)| a == b).count() as f64
        / train_labels.len() as f64;
    println!(
        "epochs {epochs}: train acc {:.1}%, test acc {:.1}% in {:?}",
        100.0 * train_acc,
        100.0 * acc,
        t.elapsed()
    );
}

fn full_ci_grid() {
    let t = Instant::now();
    let config = GeneratorConfig::head_free_default();
    let pre = preprocess_dataset(&gen_dataset(&config).unwrap()).unwrap();
    let plan = ExperimentPlan::head_free(Profile::Ci);
    let report = run_plan(&plan, &pre).unwrap();
    println!("{}", gazepipe_core::harness::render_table(&report));
    println!("full CI grid: {:?}", t.elapsed());
}
