use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trajmodes::evaluation::{
    cross_validate, make_split, wilcoxon_one_sample, wilcoxon_paired, EvalReport, WilcoxonResult,
};
use trajmodes::features::{build_dataset, load_dataset, save_dataset_with_fingerprint, Dataset, LabelScheme};
use trajmodes::ingest::{ingest_directory, CanonicalReader, CanonicalWriter, IngestStats};
use trajmodes::preprocess::noise_filter;
use trajmodes::segmentation::segment_rows;
use trajmodes::selection::{select, top_k, Evaluator, FeatureSubset, SelectionMethod};
use trajmodes::synthgen::{generate, SynthSpec};

use crate::config::{fingerprint, ExperimentConfig};
use crate::svg::curve_svg;
use crate::UsageError;

pub const DATA_ENV: &str = "TRAJMODES_DATA";

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn ensure_out(config: &ExperimentConfig) -> Result<&Path> {
    fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
    Ok(&config.out)
}

/// Digest of each table written next to a JSON summary.
fn artifact_digests(paths: &[&Path]) -> Result<BTreeMap<String, String>> {
    paths
        .iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, sha256_file(p)?))
        })
        .collect()
}

fn input_file(explicit: Option<PathBuf>, configured: &Option<PathBuf>, fallback: PathBuf) -> Result<PathBuf> {
    let path = explicit.or_else(|| configured.clone()).unwrap_or(fallback);
    if !path.is_file() {
        return Err(UsageError(format!("input file {} does not exist", path.display())).into());
    }
    Ok(path)
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    fingerprint: String,
    root: &'a Path,
    #[serde(flatten)]
    stats: &'a IngestStats,
    artifacts: BTreeMap<String, String>,
}

pub fn ingest(config: &ExperimentConfig, root: Option<PathBuf>) -> Result<()> {
    let root = root
        .or_else(|| config.data.raw.clone())
        .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
        .ok_or_else(|| UsageError(format!("no data root given (argument, data.raw or {DATA_ENV})")))?;
    let out = ensure_out(config)?;
    let canonical = config.data.canonical.clone().unwrap_or_else(|| out.join("canonical.csv"));
    let partial = canonical.with_extension("csv.partial");
    let mut writer = CanonicalWriter::new(BufWriter::new(File::create(&partial)?))?;
    let stats = ingest_directory(&root, |rows| {
        for r in rows {
            writer.write(r)?;
        }
        Ok(())
    });
    let stats = match stats {
        Ok(s) => s,
        Err(e) => {
            drop(writer);
            let _ = fs::remove_file(&partial);
            return Err(e.into());
        }
    };
    writer.finish()?.flush()?;
    fs::rename(&partial, &canonical)?;
    for w in &stats.warnings {
        log::warn!("{w}");
    }
    let summary = IngestSummary {
        fingerprint: fingerprint(config, "ingest", &[])?,
        root: &root,
        stats: &stats,
        artifacts: artifact_digests(&[&canonical])?,
    };
    write_json(&out.join("ingest_stats.json"), &summary)?;
    print_json(&summary)
}

#[derive(Serialize)]
struct ExtractSummary {
    fingerprint: String,
    input_rows: usize,
    segments_kept: usize,
    segments_discarded_short: usize,
    noise_points_removed: usize,
    noise_segments_discarded: usize,
    segments_out_of_scheme: usize,
    dataset_rows: usize,
    dataset_columns: usize,
    class_counts: BTreeMap<String, usize>,
    warnings: Vec<String>,
    artifacts: BTreeMap<String, String>,
}

pub fn extract(config: &ExperimentConfig, canonical: Option<PathBuf>) -> Result<()> {
    let out = ensure_out(config)?.to_path_buf();
    let input = input_file(canonical, &config.data.canonical, out.join("canonical.csv"))?;
    let scheme = LabelScheme::resolve(&config.label_scheme)?;
    let rows = CanonicalReader::new(BufReader::new(File::open(&input)?))?
        .collect::<trajmodes::Result<Vec<_>>>()
        .with_context(|| format!("reading {}", input.display()))?;
    let seg = segment_rows(&rows);
    let filtered = noise_filter(seg.segments, config.noise);
    let build = build_dataset(&filtered.segments, &scheme, &config.channels)?;

    let mut warnings = Vec::new();
    if build.dataset.is_empty() {
        warnings.push("no segment survived extraction; dataset is empty".to_string());
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let mut class_counts = BTreeMap::new();
    for r in &build.dataset.rows {
        *class_counts.entry(r.label.clone()).or_insert(0) += 1;
    }
    let fp = fingerprint(config, "extract", &[&input])?;
    let dataset_path = config.data.dataset.clone().unwrap_or_else(|| out.join("dataset.csv"));
    save_dataset_with_fingerprint(&dataset_path, &build.dataset, Some(&fp))?;
    let summary = ExtractSummary {
        fingerprint: fp,
        input_rows: rows.len(),
        segments_kept: filtered.segments.len(),
        segments_discarded_short: seg.discarded,
        noise_points_removed: filtered.points_removed,
        noise_segments_discarded: filtered.segments_discarded,
        segments_out_of_scheme: build.dropped_out_of_scheme,
        dataset_rows: build.dataset.len(),
        dataset_columns: build.dataset.n_features(),
        class_counts,
        warnings,
        artifacts: artifact_digests(&[&dataset_path])?,
    };
    write_json(&out.join("extract_stats.json"), &summary)?;
    print_json(&summary)
}

fn load_input_dataset(config: &ExperimentConfig, dataset: Option<PathBuf>) -> Result<(PathBuf, Dataset)> {
    let path = input_file(dataset, &config.data.dataset, config.out.join("dataset.csv"))?;
    let ds = load_dataset(&path).with_context(|| format!("loading {}", path.display()))?;
    if ds.is_empty() {
        return Err(UsageError(format!("dataset {} has no rows", path.display())).into());
    }
    Ok((path, ds))
}

#[derive(Serialize)]
struct SelectSummary {
    fingerprint: String,
    method: SelectionMethod,
    best_k: usize,
    best_mean_accuracy: f64,
    subset_k: usize,
    artifacts: BTreeMap<String, String>,
}

pub fn select_features(config: &ExperimentConfig, dataset: Option<PathBuf>, subset_k: Option<usize>) -> Result<()> {
    let (path, ds) = load_input_dataset(config, dataset)?;
    let out = ensure_out(config)?;
    let method = config.selection.method;
    let evaluator = Evaluator {
        classifier: &config.classifier,
        strategy: config.cv.strategy,
        k: config.cv.folds,
        seed: config.cv.seed,
    };
    if let Some(k) = config.selection.max_k {
        if k == 0 || k > ds.n_features() {
            return Err(UsageError(format!("max_k must be in 1..={}, got {k}", ds.n_features())).into());
        }
    }
    let fp = fingerprint(config, "select", &[&path])?;
    let mut trace = select(&ds, method, &evaluator, config.selection.max_k)?;
    trace.fingerprint = Some(fp.clone());

    let stem = format!("selection_{method}");
    let trace_path = out.join(format!("{stem}.json"));
    let curve_path = out.join(format!("{stem}_curve.csv"));
    write_json(&trace_path, &trace)?;
    fs::write(&curve_path, trace.curve_csv())?;
    let mut written = vec![curve_path.clone()];
    if config.selection.svg {
        let svg_path = out.join(format!("{stem}.svg"));
        let pts: Vec<(usize, f64)> = trace.steps.iter().map(|s| (s.k, s.mean_accuracy)).collect();
        fs::write(&svg_path, curve_svg(&format!("{method} selection, {} CV", config.cv.strategy), &pts))?;
        written.push(svg_path);
    }
    let k = subset_k.unwrap_or(trace.best_k);
    let subset = top_k(&trace, k).map_err(|e| UsageError(e.to_string()))?;
    let subset_path = out.join(format!("subset_{method}.json"));
    subset.save(&subset_path)?;
    written.push(subset_path);

    let best = &trace.steps[trace.best_k - 1];
    let refs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
    let summary = SelectSummary {
        fingerprint: fp,
        method,
        best_k: trace.best_k,
        best_mean_accuracy: best.mean_accuracy,
        subset_k: k,
        artifacts: artifact_digests(&refs)?,
    };
    print_json(&summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineTest {
    pub baseline: f64,
    pub test: WilcoxonResult,
}

#[derive(Serialize)]
struct RunReport<'a> {
    #[serde(flatten)]
    report: &'a EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<BaselineTest>,
    artifacts: BTreeMap<String, String>,
}

pub fn evaluate(config: &ExperimentConfig, dataset: Option<PathBuf>, name: Option<String>) -> Result<()> {
    let (path, ds) = load_input_dataset(config, dataset)?;
    let out = ensure_out(config)?;
    let mut inputs = vec![path.as_path()];
    let features: Vec<usize> = match &config.feature_subset {
        Some(p) => {
            inputs.push(p);
            let subset = FeatureSubset::load(p).with_context(|| format!("loading subset {}", p.display()))?;
            ds.feature_indices(&subset.features)?
        }
        None => (0..ds.n_features()).collect(),
    };
    let split = make_split(&ds, config.cv.strategy, config.cv.folds, config.cv.seed)?;
    let mut report = cross_validate(&ds, &split, &config.classifier, &features)?;
    report.fingerprint = Some(fingerprint(config, "evaluate", &inputs)?);
    let baseline = match config.baseline {
        Some(b) => Some(BaselineTest {
            baseline: b,
            test: wilcoxon_one_sample(&report.fold_accuracies(), b)?,
        }),
        None => None,
    };

    let name = name.unwrap_or_else(|| config.cv.strategy.to_string());
    let mut tables = Vec::new();
    for f in &report.folds {
        let p = out.join(format!("report_{name}_fold{}_confusion.csv", f.fold));
        fs::write(&p, f.confusion.to_csv())?;
        tables.push(p);
    }
    let refs: Vec<&Path> = tables.iter().map(PathBuf::as_path).collect();
    let run = RunReport {
        report: &report,
        baseline,
        artifacts: artifact_digests(&refs)?,
    };
    write_json(&out.join(format!("report_{name}.json")), &run)?;
    println!(
        "{name}: accuracy {:.4} ± {:.4}, macro F1 {:.4} ± {:.4} over {} folds",
        report.accuracy.mean, report.accuracy.std, report.macro_f1.mean, report.macro_f1.std, report.k
    );
    if let Some(b) = &run.baseline {
        println!(
            "one-sample Wilcoxon vs {}: W+ = {}, p(greater) = {}, p(two-sided) = {}",
            b.baseline, b.test.w_plus, b.test.p_greater, b.test.p_two_sided
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct PairwiseTest {
    a: String,
    b: String,
    mean_a: f64,
    mean_b: f64,
    test: WilcoxonResult,
}

#[derive(Serialize)]
struct Comparison {
    fingerprint: String,
    reports: Vec<String>,
    mean_accuracy: Vec<f64>,
    pairs: Vec<PairwiseTest>,
    /// Two-sided p-values, `reports` order on both axes.
    significance: Vec<Vec<f64>>,
    artifacts: BTreeMap<String, String>,
}

pub fn compare(config: &ExperimentConfig, reports: &[PathBuf]) -> Result<()> {
    if reports.len() < 2 {
        return Err(UsageError("compare needs at least two reports".into()).into());
    }
    let mut loaded = Vec::new();
    for p in reports {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let r: EvalReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        loaded.push(r);
    }
    let folds = loaded[0].folds.len();
    if let Some((p, r)) = reports.iter().zip(&loaded).find(|(_, r)| r.folds.len() != folds) {
        return Err(UsageError(format!(
            "{} has {} folds but {} has {folds}",
            p.display(),
            r.folds.len(),
            reports[0].display()
        ))
        .into());
    }
    let mut names: Vec<String> = reports
        .iter()
        .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let unique: std::collections::BTreeSet<&String> = names.iter().collect();
    if unique.len() != names.len() {
        names = reports.iter().map(|p| p.display().to_string()).collect();
    }

    let n = loaded.len();
    let mut significance = vec![vec![1.0; n]; n];
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let test = wilcoxon_paired(&loaded[i].fold_accuracies(), &loaded[j].fold_accuracies())?;
            significance[i][j] = test.p_two_sided;
            significance[j][i] = test.p_two_sided;
            pairs.push(PairwiseTest {
                a: names[i].clone(),
                b: names[j].clone(),
                mean_a: loaded[i].accuracy.mean,
                mean_b: loaded[j].accuracy.mean,
                test,
            });
        }
    }
    let out = ensure_out(config)?;
    let csv_path = out.join("comparison.csv");
    let mut csv = String::from("report");
    for name in &names {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    for (name, row) in names.iter().zip(&significance) {
        csv.push_str(name);
        for p in row {
            csv.push_str(&format!(",{p}"));
        }
        csv.push('\n');
    }
    fs::write(&csv_path, &csv)?;
    let inputs: Vec<&Path> = reports.iter().map(PathBuf::as_path).collect();
    let cmp = Comparison {
        fingerprint: fingerprint(config, "compare", &inputs)?,
        reports: names,
        mean_accuracy: loaded.iter().map(|r| r.accuracy.mean).collect(),
        pairs,
        significance,
        artifacts: artifact_digests(&[&csv_path])?,
    };
    write_json(&out.join("comparison.json"), &cmp)?;
    for p in &cmp.pairs {
        println!(
            "{} ({:.4}) vs {} ({:.4}): W = {}, p(two-sided) = {}",
            p.a, p.mean_a, p.b, p.mean_b, p.test.statistic, p.test.p_two_sided
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct SynthSummary<'a> {
    fingerprint: String,
    spec: &'a SynthSpec,
    rows: usize,
    artifacts: BTreeMap<String, String>,
}

pub fn synth(config: &ExperimentConfig, preset: &str, spec_file: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut spec = match &spec_file {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<SynthSpec>(&text).map_err(|e| UsageError(format!("invalid spec {}: {e}", p.display())))?
        }
        None => SynthSpec::preset(preset, 0)?,
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate()?;
    let rows = generate(&spec)?;
    let out = ensure_out(config)?;
    let path = config.data.canonical.clone().unwrap_or_else(|| out.join("canonical.csv"));
    let mut w = CanonicalWriter::new(BufWriter::new(File::create(&path)?))?;
    for r in &rows {
        w.write(r)?;
    }
    w.finish()?.flush()?;
    let inputs: Vec<&Path> = spec_file.iter().map(PathBuf::as_path).collect();
    let summary = SynthSummary {
        fingerprint: fingerprint(config, &format!("synth {}", serde_json::to_string(&spec)?), &inputs)?,
        spec: &spec,
        rows: rows.len(),
        artifacts: artifact_digests(&[&path])?,
    };
    write_json(&out.join("synth.json"), &summary)?;
    print_json(&summary)
}
