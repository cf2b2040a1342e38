use std::path::{Path, PathBuf};

use sgval_core::io;
use sgval_core::{
    classifier, detect, evaluate, generate, generate_test_split, recovery_metrics, relabel,
    smooth_labels, val, CleanNoisySplit, Dataset, EmbeddingMatrix, Error, EvalReport, LabelMatrix,
    SynthConfig,
};

use crate::args::{
    Cmd, DetectArgs, EvalArgs, PipelineArgs, RelabelArgs, SynthArgs, TrainClfArgs, TrainValArgs,
};
use crate::{Stage, StagedError};

pub fn run(cmd: Cmd) -> Result<(), StagedError> {
    match cmd {
        Cmd::Synth(a) => cmd_synth(&a),
        Cmd::TrainVal(a) => cmd_train_val(&a),
        Cmd::Detect(a) => cmd_detect(&a),
        Cmd::Relabel(a) => cmd_relabel(&a),
        Cmd::TrainClf(a) => cmd_train_clf(&a),
        Cmd::Eval(a) => cmd_eval(&a),
        Cmd::Pipeline(a) => cmd_pipeline(&a),
    }
}

fn ensure_dir(dir: &Path) -> sgval_core::Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn load_dataset(
    features: &Path,
    labels: &Path,
) -> sgval_core::Result<Dataset> {
    let feats = io::read_features(features)?;
    let (labs, names) = io::read_labels_csv(labels)?;
    Dataset::new(feats, labs, names)
}

fn cmd_synth(a: &SynthArgs) -> Result<(), StagedError> {
    let cfg = a.to_config();
    let out = generate(&cfg).stage("synth")?;
    ensure_dir(&a.out_dir).stage("write")?;
    write_corpus(&a.out_dir, &out.clean, &out.noisy, &out.embeddings, &out.corrupted)
        .stage("write")?;
    if let Some(test_n) = a.test_n {
        let test = generate_test_split(&cfg, test_n).stage("synth")?;
        write_test_split(&a.out_dir, &test).stage("write")?;
    }
    println!(
        "wrote {}: {} samples, {} classes, {} corrupted",
        a.out_dir.display(),
        cfg.n,
        cfg.c,
        out.corrupted.len()
    );
    Ok(())
}

fn write_corpus(
    dir: &Path,
    clean: &Dataset,
    noisy: &Dataset,
    embeddings: &EmbeddingMatrix,
    corrupted: &[usize],
) -> sgval_core::Result<()> {
    io::write_features(&dir.join("features.sgvf"), &clean.features)?;
    io::write_embeddings(&dir.join("embeddings.sgvw"), embeddings)?;
    io::write_labels_csv(&dir.join("labels_clean.csv"), &clean.labels, &clean.class_names)?;
    io::write_labels_csv(&dir.join("labels_noisy.csv"), &noisy.labels, &noisy.class_names)?;
    io::write_index_csv(&dir.join("corrupted.csv"), "sample_index", corrupted)?;
    Ok(())
}

fn write_test_split(dir: &Path, test: &Dataset) -> sgval_core::Result<()> {
    io::write_features(&dir.join("test_features.sgvf"), &test.features)?;
    io::write_labels_csv(&dir.join("test_labels.csv"), &test.labels, &test.class_names)?;
    Ok(())
}

fn cmd_train_val(a: &TrainValArgs) -> Result<(), StagedError> {
    let ds = load_dataset(&a.features, &a.labels).stage("load")?;
    let w = io::read_embeddings(&a.embeddings).stage("load")?;
    let trained = val::train(&ds, &w, &a.to_config()).stage("train-val")?;
    io::write_attribute_model(&a.out, &trained.model).stage("write")?;
    if !a.quiet {
        for (epoch, loss) in trained.epoch_losses.iter().enumerate() {
            println!("epoch {epoch} objective {loss}");
        }
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_detect(a: &DetectArgs) -> Result<(), StagedError> {
    let ds = load_dataset(&a.features, &a.labels).stage("load")?;
    let w = io::read_embeddings(&a.embeddings).stage("load")?;
    let model = io::read_attribute_model(&a.model).stage("load")?;
    let (split, rankings) = detect::split_with_rankings(&ds, &model, &w).stage("detect")?;

    let mut wtr = csv::Writer::from_path(&a.out).map_err(Error::from).stage("write")?;
    wtr.write_record(["sample_index", "clean", "ranking"])
        .map_err(Error::from)
        .stage("write")?;
    for (i, ranking) in rankings.iter().enumerate() {
        let joined = ranking
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let clean = if split.is_noisy(i) { "0" } else { "1" };
        wtr.write_record([i.to_string().as_str(), clean, joined.as_str()])
            .map_err(Error::from)
            .stage("write")?;
    }
    wtr.flush().map_err(Error::Io).stage("write")?;
    println!("clean {} noisy {}", split.clean.len(), split.noisy.len());
    Ok(())
}

fn cmd_relabel(a: &RelabelArgs) -> Result<(), StagedError> {
    let ds = load_dataset(&a.features, &a.labels).stage("load")?;
    let w = io::read_embeddings(&a.embeddings).stage("load")?;
    let model = io::read_attribute_model(&a.model).stage("load")?;
    let (relabeled, split) = relabel(&ds, &model, &w, &a.to_config()).stage("relabel")?;

    io::write_labels_csv(&a.out, &relabeled.labels, &relabeled.class_names).stage("write")?;
    if let Some(noisy_out) = &a.noisy_out {
        io::write_index_csv(noisy_out, "sample_index", &split.noisy).stage("write")?;
    }
    println!(
        "relabeled {} of {} samples, wrote {}",
        split.noisy.len(),
        ds.n_samples(),
        a.out.display()
    );
    Ok(())
}

fn cmd_train_clf(a: &TrainClfArgs) -> Result<(), StagedError> {
    let cfg = a.to_config().stage("train-clf")?;
    let ds = load_dataset(&a.features, &a.labels).stage("load")?;
    let trained = classifier::train(&ds, &cfg).stage("train-clf")?;
    io::write_classifier(&a.out, &trained.model).stage("write")?;
    if !a.quiet {
        for (epoch, loss) in trained.epoch_losses.iter().enumerate() {
            println!("epoch {epoch} bce {loss}");
        }
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), StagedError> {
    let ds = load_dataset(&a.features, &a.labels).stage("load")?;
    let clf = io::read_classifier(&a.classifier).stage("load")?;
    let report = evaluate(&clf, &ds).stage("eval")?;

    if let Some(path) = &a.per_class_out {
        write_per_class_csv(path, &ds.class_names, &[("auc", &report)]).stage("write")?;
    }
    print_eval("", &ds.class_names, &report);
    println!("mean_auc {}", report.mean_auc);
    Ok(())
}

fn print_eval(tag: &str, names: &[String], report: &EvalReport) {
    for (c, auc) in report.per_class_auc.iter().enumerate() {
        match auc {
            Some(v) => println!("class {c} {} {tag}auc {v}", names[c]),
            None => {
                let why = report
                    .skipped
                    .iter()
                    .find(|s| s.class == c)
                    .map(|s| s.reason.as_str())
                    .unwrap_or("skipped");
                println!("class {c} {} {tag}auc undefined ({why})", names[c]);
            }
        }
    }
}

/// One row per class; one AUC column per named report, empty when that
/// class was skipped.
fn write_per_class_csv(
    path: &Path,
    names: &[String],
    reports: &[(&str, &EvalReport)],
) -> sgval_core::Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(Error::from)?;
    let mut header = vec!["class".to_string(), "name".to_string()];
    for (tag, _) in reports {
        header.push(format!("auc_{tag}"));
    }
    wtr.write_record(&header)?;
    for (c, name) in names.iter().enumerate() {
        let mut row = vec![c.to_string(), name.clone()];
        for (_, report) in reports {
            row.push(match report.per_class_auc[c] {
                Some(v) => v.to_string(),
                None => String::new(),
            });
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(Error::Io)?;
    Ok(())
}

enum PipelineInput {
    Synthetic(SynthConfig, usize),
    Files {
        features: PathBuf,
        embeddings: PathBuf,
        labels_noisy: PathBuf,
        labels_clean: PathBuf,
        test_features: PathBuf,
        test_labels: PathBuf,
    },
}

fn pipeline_input(a: &PipelineArgs) -> sgval_core::Result<PipelineInput> {
    let files = [
        &a.features,
        &a.embeddings,
        &a.labels_noisy,
        &a.labels_clean,
        &a.test_features,
        &a.test_labels,
    ];
    let given = files.iter().filter(|f| f.is_some()).count();
    if given == 0 {
        return Ok(PipelineInput::Synthetic(a.synth_config(), a.test_n));
    }
    if a.synth_defaults {
        return Err(Error::InvalidConfig(
            "--synth-defaults cannot be combined with input files".into(),
        ));
    }
    if given < files.len() {
        return Err(Error::InvalidConfig(
            "file mode needs all of --features, --embeddings, --labels-noisy, \
             --labels-clean, --test-features, --test-labels"
                .into(),
        ));
    }
    Ok(PipelineInput::Files {
        features: a.features.clone().unwrap(),
        embeddings: a.embeddings.clone().unwrap(),
        labels_noisy: a.labels_noisy.clone().unwrap(),
        labels_clean: a.labels_clean.clone().unwrap(),
        test_features: a.test_features.clone().unwrap(),
        test_labels: a.test_labels.clone().unwrap(),
    })
}

/// Rows where the two label matrices differ in any class.
fn differing_rows(a: &LabelMatrix, b: &LabelMatrix) -> Vec<usize> {
    (0..a.n_samples()).filter(|&i| a.row(i) != b.row(i)).collect()
}

struct PipelineData {
    clean: Dataset,
    noisy: Dataset,
    embeddings: EmbeddingMatrix,
    corrupted: Vec<usize>,
    test: Dataset,
}

fn load_pipeline_data(input: PipelineInput) -> sgval_core::Result<PipelineData> {
    match input {
        PipelineInput::Synthetic(cfg, test_n) => {
            let out = generate(&cfg)?;
            let test = generate_test_split(&cfg, test_n)?;
            Ok(PipelineData {
                clean: out.clean,
                noisy: out.noisy,
                embeddings: out.embeddings,
                corrupted: out.corrupted,
                test,
            })
        }
        PipelineInput::Files {
            features,
            embeddings,
            labels_noisy,
            labels_clean,
            test_features,
            test_labels,
        } => {
            let noisy = load_dataset(&features, &labels_noisy)?;
            let (clean_labels, clean_names) = io::read_labels_csv(&labels_clean)?;
            if clean_names != noisy.class_names {
                return Err(Error::DimensionMismatch(
                    "clean and noisy label files disagree on class names".into(),
                ));
            }
            let clean = noisy.with_labels(clean_labels)?;
            let w = io::read_embeddings(&embeddings)?;
            let test = load_dataset(&test_features, &test_labels)?;
            if test.n_classes() != noisy.n_classes() {
                return Err(Error::DimensionMismatch(format!(
                    "test split has {} classes, train has {}",
                    test.n_classes(),
                    noisy.n_classes()
                )));
            }
            let corrupted = differing_rows(&clean.labels, &noisy.labels);
            Ok(PipelineData { clean, noisy, embeddings: w, corrupted, test })
        }
    }
}

fn cmd_pipeline(a: &PipelineArgs) -> Result<(), StagedError> {
    let input = pipeline_input(a).stage("config")?;
    let clf_cfg = a.clf_config().stage("config")?;
    if !a.epsilon.is_finite() || !(0.0..0.5).contains(&a.epsilon) {
        return Err(Error::InvalidConfig(format!(
            "--epsilon {} must lie in [0, 0.5)",
            a.epsilon
        )))
        .stage("config");
    }

    let data = load_pipeline_data(input).stage("load")?;
    ensure_dir(&a.out_dir).stage("write")?;
    write_corpus(&a.out_dir, &data.clean, &data.noisy, &data.embeddings, &data.corrupted)
        .stage("write")?;
    write_test_split(&a.out_dir, &data.test).stage("write")?;

    let trained = val::train(&data.noisy, &data.embeddings, &a.val_config()).stage("train-val")?;
    io::write_attribute_model(&a.out_dir.join("model.sgvm"), &trained.model).stage("write")?;

    let (relabeled, split) =
        relabel(&data.noisy, &trained.model, &data.embeddings, &a.relabel_config())
            .stage("relabel")?;
    io::write_labels_csv(
        &a.out_dir.join("labels_relabeled.csv"),
        &relabeled.labels,
        &relabeled.class_names,
    )
    .stage("write")?;
    io::write_index_csv(&a.out_dir.join("noisy_detected.csv"), "sample_index", &split.noisy)
        .stage("write")?;

    let recovery = recovery_metrics(
        &data.noisy.labels,
        &relabeled.labels,
        &data.clean.labels,
        &split,
        &data.corrupted,
    )
    .stage("report")?;

    let smoothed_labels = smooth_labels(&data.noisy.labels, a.epsilon).stage("relabel")?;
    let smoothed = data.noisy.with_labels(smoothed_labels).stage("relabel")?;

    let mut reports: Vec<(&str, EvalReport)> = Vec::new();
    for (tag, train_ds) in
        [("noisy", &data.noisy), ("relabeled", &relabeled), ("smoothed", &smoothed)]
    {
        let clf = classifier::train(train_ds, &clf_cfg).stage("train-clf")?;
        io::write_classifier(&a.out_dir.join(format!("clf_{tag}.sgvc")), &clf.model)
            .stage("write")?;
        let report = evaluate(&clf.model, &data.test).stage("eval")?;
        reports.push((tag, report));
    }

    write_summary_csv(&a.out_dir.join("summary.csv"), &data, &split, &recovery, &reports)
        .stage("write")?;
    let borrowed: Vec<(&str, &EvalReport)> =
        reports.iter().map(|(t, r)| (*t, r)).collect();
    write_per_class_csv(
        &a.out_dir.join("per_class_auc.csv"),
        &data.test.class_names,
        &borrowed,
    )
    .stage("write")?;

    println!(
        "samples {} classes {} detected-noisy {}",
        data.noisy.n_samples(),
        data.noisy.n_classes(),
        split.noisy.len()
    );
    println!(
        "detection precision {} recall {} f1 {}",
        recovery.detection.precision, recovery.detection.recall, recovery.detection.f1
    );
    println!("label l1 before {} after {}", recovery.l1_before, recovery.l1_after);
    for (tag, report) in &reports {
        println!("mean auc {tag} {}", report.mean_auc);
    }
    println!("wrote {}", a.out_dir.display());
    Ok(())
}

fn write_summary_csv(
    path: &Path,
    data: &PipelineData,
    split: &CleanNoisySplit,
    recovery: &sgval_core::RecoveryReport,
    reports: &[(&str, EvalReport)],
) -> sgval_core::Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(Error::from)?;
    wtr.write_record(["metric", "value"])?;
    let mut rows: Vec<(String, String)> = vec![
        ("samples".into(), data.noisy.n_samples().to_string()),
        ("classes".into(), data.noisy.n_classes().to_string()),
        ("corrupted_true".into(), data.corrupted.len().to_string()),
        ("noisy_detected".into(), split.noisy.len().to_string()),
        ("detection_precision".into(), recovery.detection.precision.to_string()),
        ("detection_recall".into(), recovery.detection.recall.to_string()),
        ("detection_f1".into(), recovery.detection.f1.to_string()),
        ("l1_before".into(), recovery.l1_before.to_string()),
        ("l1_after".into(), recovery.l1_after.to_string()),
    ];
    for (tag, report) in reports {
        rows.push((format!("mean_auc_{tag}"), report.mean_auc.to_string()));
    }
    for (k, v) in rows {
        wtr.write_record([k.as_str(), v.as_str()])?;
    }
    wtr.flush().map_err(Error::Io)?;
    Ok(())
}
