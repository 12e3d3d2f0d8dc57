//! Stage runners operating on a [`RunDir`].

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vqa_core::balance::{self, category_counts, spread, ExportManifest, ExportRecord, ScoredSample};
use vqa_core::corpus::{Canonicalizer, CorpusStore, ManifestEntry, TextEntry};
use vqa_core::gateway::mock::{MockGenerator, MockJudge};
use vqa_core::gateway::{Client, HttpTransport, ModelEndpoint, Role};
use vqa_core::generation::{is_failed_slot, GenerationRun, GenerationSummary, QaSample, SampleStatus};
use vqa_core::jsonl;
use vqa_core::metrics::{self, EvalPair, EvalReport};
use vqa_core::scheduler::Category;
use vqa_core::validation::{run_qc, QcReport, Verdict};

use crate::config::PipelineConfig;
use crate::error::ServiceError;
use crate::run::{RunDir, Stage, StageStatus};

type Counts = BTreeMap<String, u64>;

fn counts<const N: usize>(pairs: [(&str, usize); N]) -> Counts {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v as u64)).collect()
}

/// Slot ids are zero-padded, but slots past 999999 grow longer.
fn sort_samples(samples: &mut [QaSample]) {
    samples.sort_by(|a, b| {
        (a.sample_id.len(), &a.sample_id).cmp(&(b.sample_id.len(), &b.sample_id))
    });
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ServiceError> {
    let body = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, body).map_err(|e| ServiceError::io(path, e))
}

pub fn generator_client(cfg: &PipelineConfig, force_mock: bool) -> Result<Client, ServiceError> {
    if cfg.mock || force_mock {
        let ep = ModelEndpoint::new("mock-generator", Role::Generator);
        let t = MockGenerator::new(cfg.seed).with_malformed_rate(cfg.generation.mock_malformed_rate);
        return Ok(Client::new(ep, Arc::new(t)));
    }
    let ep = cfg
        .endpoints
        .iter()
        .find(|e| e.role == Role::Generator)
        .ok_or_else(|| ServiceError::Config("no generator endpoint configured (or use --mock)".into()))?;
    http_client(ep)
}

pub fn judge_clients(cfg: &PipelineConfig) -> Result<Vec<Client>, ServiceError> {
    if cfg.mock {
        return Ok((0..cfg.mock_judges)
            .map(|i| {
                let ep = ModelEndpoint::new(&format!("mock-judge-{}", i + 1), Role::Judge);
                let t = MockJudge::new(cfg.seed.wrapping_add(i as u64 + 1));
                Client::new(ep, Arc::new(t))
            })
            .collect());
    }
    let judges: Vec<&ModelEndpoint> = cfg.endpoints.iter().filter(|e| e.role == Role::Judge).collect();
    if judges.is_empty() {
        return Err(ServiceError::Config("no judge endpoints configured (or use --mock)".into()));
    }
    judges.into_iter().map(http_client).collect()
}

fn http_client(ep: &ModelEndpoint) -> Result<Client, ServiceError> {
    let t = HttpTransport::for_endpoint(ep)
        .map_err(|e| ServiceError::Config(format!("{}: {e}", ep.endpoint_id)))?;
    Ok(Client::new(ep.clone(), Arc::new(t)))
}

pub enum IngestSource<'a> {
    Files {
        images: &'a Path,
        texts: &'a [&'a Path],
        labels: Option<&'a Path>,
    },
    Synthetic(usize),
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestSummary {
    pub images: usize,
    pub duplicates: usize,
    pub rejected: usize,
    pub captions: usize,
    pub conversations: usize,
    pub orphans: usize,
}

fn source_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

pub fn ingest(run: &mut RunDir, source: IngestSource<'_>) -> Result<IngestSummary, ServiceError> {
    run.begin(Stage::Ingest)?;
    let (manifest, texts, labels, name) = match source {
        IngestSource::Files { images, texts, labels } => {
            let manifest: Vec<ManifestEntry> = jsonl::read(images)?;
            let mut all = Vec::new();
            for t in texts {
                let entries: Vec<TextEntry> = jsonl::read(t)?;
                all.push((source_name(t), entries));
            }
            let labels = match labels {
                Some(p) => Some(fs::read_to_string(p).map_err(|e| ServiceError::io(p, e))?),
                None => None,
            };
            (manifest, all, labels, source_name(images))
        }
        IngestSource::Synthetic(n) => {
            let (m, t) = synthetic_corpus(n, run.config.seed);
            (m, vec![("synthetic".to_string(), t)], None, "synthetic".to_string())
        }
    };
    let (mut store, report) = CorpusStore::ingest_images(&manifest, &name)?;
    let mut summary = IngestSummary {
        images: report.accepted,
        duplicates: report.duplicates,
        rejected: report.rejected.len(),
        ..Default::default()
    };
    for (src, entries) in &texts {
        let a = store.attach_text(entries, src);
        summary.captions += a.captions;
        summary.conversations += a.conversations;
        summary.orphans += a.orphans;
        summary.rejected += a.rejected.len();
    }
    if let Some(raw) = labels {
        let mut canon = Canonicalizer::from_json(&raw)?;
        store.canonicalize_labels(&mut canon);
    }
    store.save(&run.corpus_dir())?;
    run.record(
        Stage::Ingest,
        StageStatus::Completed,
        counts([
            ("images", summary.images),
            ("duplicates", summary.duplicates),
            ("rejected", summary.rejected),
            ("captions", summary.captions),
            ("conversations", summary.conversations),
            ("orphans", summary.orphans),
        ]),
    )?;
    Ok(summary)
}

const SUBJECTS: &[&str] = &[
    "người đàn ông", "cô gái", "con chó", "con mèo", "đứa trẻ", "con ngựa", "bà cụ", "cậu bé",
];
const NUMBERS: &[&str] = &["một", "hai", "ba", "nhiều", "vài"];
const ACTIONS: &[&str] = &["đang chơi", "đang ngồi", "đang đi bộ", "đang chèo thuyền", "đang ăn"];
const PLACES: &[&str] = &[
    "trên bãi biển", "trong công viên", "cạnh hồ nước", "trên đường phố", "gần chợ", "dưới gốc cây",
];
const OBJECTS: &[&str] = &["chiếc xe đạp", "quả bóng", "cái ô", "chiếc thuyền", "cái bàn", "chiếc ghế"];
const COLORS: &[&str] = &["màu đỏ", "màu xanh", "màu vàng", "màu trắng"];
const SIGNS: &[&str] = &["Chợ Bến Thành", "Phở Hà Nội", "Cấm đỗ xe", "Bến xe Miền Đông"];
const SCENES: &[&str] = &["outdoor", "street", "indoor", "beach"];

/// Seeded corpus of Vietnamese captions covering every cue family.
pub fn synthetic_corpus(n: usize, seed: u64) -> (Vec<ManifestEntry>, Vec<TextEntry>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0b0);
    let mut manifest = Vec::with_capacity(n);
    let mut texts = Vec::new();
    for i in 0..n {
        let id = format!("img{i:06}");
        let mut entry = ManifestEntry::new(&id, &format!("file://images/{id}.jpg"));
        entry.scene_type = Some(SCENES.choose(&mut rng).unwrap().to_string());
        let subject = *SUBJECTS.choose(&mut rng).unwrap();
        let object = *OBJECTS.choose(&mut rng).unwrap();
        let color = *COLORS.choose(&mut rng).unwrap();
        let place = *PLACES.choose(&mut rng).unwrap();
        let mut first = format!("{} {subject} {} {place}", NUMBERS.choose(&mut rng).unwrap(), ACTIONS.choose(&mut rng).unwrap());
        if rng.random_bool(0.3) {
            let sign = SIGNS.choose(&mut rng).unwrap();
            first.push_str(&format!(", phía sau có tấm biển ghi chữ {sign}"));
            entry.has_text = rng.random_bool(0.5);
        }
        texts.push(TextEntry::caption(&id, &first));
        if rng.random_bool(0.7) {
            texts.push(TextEntry::caption(&id, &format!("{object} {color} nằm cạnh {subject}")));
        }
        if rng.random_bool(0.4) {
            let other = *OBJECTS.choose(&mut rng).unwrap();
            texts.push(TextEntry::caption(&id, &format!("{object} lớn hơn {other}")));
            entry.primary_objects = vec![object.to_string(), other.to_string()];
        }
        if rng.random_bool(0.3) {
            texts.push(TextEntry::conversation(
                &id,
                &format!("{subject} đang ở đâu?"),
                &format!("{subject} đang ở {place}"),
            ));
        }
        manifest.push(entry);
    }
    (manifest, texts)
}

#[derive(Debug, Clone, Default)]
pub struct GenerateOptions {
    pub target: Option<usize>,
    pub max_slots: Option<usize>,
    /// Use the mock generator regardless of configuration.
    pub dry_run: bool,
}

/// Loads the committed sample log, dropping a torn final line from disk.
fn load_log(path: &Path) -> Result<Vec<QaSample>, ServiceError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let samples: Vec<QaSample> = jsonl::read_tolerant(path)?;
    let raw = fs::read(path).map_err(|e| ServiceError::io(path, e))?;
    if !raw.is_empty() && raw.last() != Some(&b'\n') {
        jsonl::write(path, &samples)?;
    }
    Ok(samples)
}

pub fn generate(run: &mut RunDir, opts: &GenerateOptions) -> Result<GenerationSummary, ServiceError> {
    run.begin(Stage::Generate)?;
    let cfg = run.config.clone();
    let previous_target = run.manifest.stages[&Stage::Generate].counts.get("target").copied();
    let target = opts
        .target
        .or(previous_target.map(|t| t as usize))
        .unwrap_or(cfg.generation.target);
    let corpus = CorpusStore::load(&run.corpus_dir())?;
    let client = generator_client(&cfg, opts.dry_run)?;
    let gen_cfg = cfg.generation_config()?;
    let path = run.samples_path();
    let existing = load_log(&path)?;
    let failed_before = existing.iter().filter(|s| is_failed_slot(s)).count();

    let engine = GenerationRun::new(&corpus, &client, &gen_cfg)?;
    let mut sink = |batch: &[QaSample]| jsonl::append(&path, batch).map_err(|e| e.to_string());
    let summary = engine.run(&existing, target, opts.max_slots, &mut sink)?;

    let status = if summary.complete { StageStatus::Completed } else { StageStatus::Partial };
    let mut c = counts([
        ("target", target),
        ("generated", summary.total_generated),
        ("failed", failed_before + summary.failed),
    ]);
    for (i, n) in summary.level_counts.iter().enumerate() {
        c.insert(format!("level_{}", i + 1), *n);
    }
    run.record(Stage::Generate, status, c)?;
    if !summary.complete && opts.max_slots.is_none() {
        return Err(ServiceError::Incomplete {
            stage: Stage::Generate,
            message: format!(
                "generated {} of {target}; the slot limit was reached, rerun to continue",
                summary.total_generated
            ),
        });
    }
    Ok(summary)
}

/// One judge's scores for one sample, as written to `scores.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub sample_id: String,
    pub endpoint_id: String,
    pub scores: Vec<f64>,
}

pub fn qc(run: &mut RunDir) -> Result<QcReport, ServiceError> {
    run.begin(Stage::Qc)?;
    let cfg = run.config.clone();
    let samples: Vec<QaSample> = jsonl::read(&run.samples_path())?;
    let corpus = CorpusStore::load(&run.corpus_dir())?;
    let (candidates, mut settled): (Vec<QaSample>, Vec<QaSample>) =
        samples.into_iter().partition(|s| s.status == SampleStatus::Generated);
    let judges = judge_clients(&cfg)?;
    let registry = cfg.registry()?;
    let image_uri = |id: &str| corpus.get(id).map(|r| r.uri.clone());
    let (outcome, matrices) = run_qc(
        candidates,
        &judges,
        &registry,
        &cfg.constraints(),
        &cfg.table()?,
        &cfg.qc,
        &image_uri,
    )?;

    let scores: Vec<ScoreLine> = matrices
        .iter()
        .flat_map(|m| {
            m.rows.iter().map(|r| ScoreLine {
                sample_id: m.sample_id.clone(),
                endpoint_id: r.endpoint_id.clone(),
                scores: r.scores.clone(),
            })
        })
        .collect();
    jsonl::write(&run.scores_path(), &scores)?;
    jsonl::write(&run.verdicts_path(), &outcome.verdicts)?;
    write_json(&run.qc_report_path(), &outcome.report)?;

    settled.extend(outcome.retained);
    settled.extend(outcome.rejected);
    settled.extend(outcome.undecided);
    settled.extend(outcome.removed);
    sort_samples(&mut settled);
    jsonl::write(&run.samples_path(), &settled)?;

    let r = &outcome.report;
    run.record(
        Stage::Qc,
        StageStatus::Completed,
        counts([
            ("input", r.input),
            ("sanity_removed", r.sanity_removed),
            ("scored", r.scored),
            ("retained", r.retained),
            ("rejected", r.rejected),
            ("undecided", r.undecided),
        ]),
    )?;
    Ok(outcome.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub input: usize,
    pub kept: usize,
    pub removed: usize,
    pub before: BTreeMap<Category, usize>,
    pub after: BTreeMap<Category, usize>,
    pub spread_before: f64,
    pub spread_after: f64,
}

fn verdict_map(run: &RunDir) -> Result<HashMap<String, Verdict>, ServiceError> {
    let verdicts: Vec<Verdict> = jsonl::read(&run.verdicts_path())?;
    Ok(verdicts.into_iter().map(|v| (v.sample_id.clone(), v)).collect())
}

fn scored(samples: &[QaSample], verdicts: &HashMap<String, Verdict>) -> Vec<ScoredSample> {
    samples
        .iter()
        .filter(|s| s.status == SampleStatus::Retained)
        .map(|s| {
            let v = verdicts.get(&s.sample_id);
            ScoredSample {
                sample: s.clone(),
                pass_count: v.map_or(0, |v| v.pass_count),
                grounding_score: v.and_then(|v| v.grounding_score),
            }
        })
        .collect()
}

fn replace_samples(samples: &mut [QaSample], updated: impl IntoIterator<Item = QaSample>) {
    let index: HashMap<String, usize> =
        samples.iter().enumerate().map(|(i, s)| (s.sample_id.clone(), i)).collect();
    for s in updated {
        if let Some(i) = index.get(&s.sample_id) {
            samples[*i] = s;
        }
    }
}

pub fn balance(run: &mut RunDir) -> Result<BalanceReport, ServiceError> {
    run.begin(Stage::Balance)?;
    let cfg = run.config.clone();
    let mut samples: Vec<QaSample> = jsonl::read(&run.samples_path())?;
    let verdicts = verdict_map(run)?;
    let items = scored(&samples, &verdicts);
    let before = category_counts(&items);
    let input = items.len();
    let (kept, removed) = balance::balance(items, &cfg.balance_config(), &cfg.table()?)?;
    let after = category_counts(&kept);
    let report = BalanceReport {
        input,
        kept: kept.len(),
        removed: removed.len(),
        spread_before: spread(&before),
        spread_after: spread(&after),
        before,
        after,
    };
    replace_samples(&mut samples, kept.into_iter().chain(removed).map(|s| s.sample));
    jsonl::write(&run.samples_path(), &samples)?;
    write_json(&run.balance_report_path(), &report)?;
    run.record(
        Stage::Balance,
        StageStatus::Completed,
        counts([("input", report.input), ("kept", report.kept), ("removed", report.removed)]),
    )?;
    Ok(report)
}

pub fn export(run: &mut RunDir) -> Result<ExportManifest, ServiceError> {
    run.begin(Stage::Export)?;
    let cfg = run.config.clone();
    let mut samples: Vec<QaSample> = jsonl::read(&run.samples_path())?;
    let verdicts = verdict_map(run)?;
    let items = scored(&samples, &verdicts);
    let mut splits = balance::split(items, &cfg.balance.split_ratios, cfg.seed).map_err(balance::BalanceError::from)?;
    let manifest = balance::export(&mut splits, &run.export_dir(), &run.config_hash, cfg.seed)?;
    replace_samples(&mut samples, splits.into_iter().flat_map(|(_, v)| v).map(|s| s.sample));
    jsonl::write(&run.samples_path(), &samples)?;
    let mut c: Counts = manifest.splits.iter().map(|(k, v)| (k.clone(), *v as u64)).collect();
    c.insert("total".into(), manifest.total as u64);
    run.record(Stage::Export, StageStatus::Completed, c)?;
    Ok(manifest)
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub prediction: String,
}

pub fn read_export(dir: &Path) -> Result<Vec<ExportRecord>, ServiceError> {
    let mut out = Vec::new();
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| ServiceError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    for f in files {
        out.extend(jsonl::read::<ExportRecord>(&f)?);
    }
    Ok(out)
}

pub fn evaluate(run: &RunDir, predictions: &Path, split: Option<&str>) -> Result<EvalReport, ServiceError> {
    if !run.manifest.is_completed(Stage::Export) {
        return Err(ServiceError::StageOrder {
            stage: "evaluate".into(),
            requires: Stage::Export,
        });
    }
    let preds: Vec<Prediction> = jsonl::read(predictions)?;
    let refs: HashMap<String, ExportRecord> = read_export(&run.export_dir())?
        .into_iter()
        .filter(|r| split.is_none_or(|s| r.split == s))
        .map(|r| (r.sample_id.clone(), r))
        .collect();
    let mut unknown = 0;
    let mut pairs = Vec::with_capacity(preds.len());
    for p in preds {
        match refs.get(&p.sample_id) {
            Some(r) => pairs.push(EvalPair {
                sample_id: p.sample_id,
                prediction: p.prediction,
                references: r.answers.clone(),
            }),
            None => unknown += 1,
        }
    }
    if pairs.is_empty() {
        return Err(ServiceError::Input("no prediction matches an exported sample".into()));
    }
    let (mut report, per_pair) = metrics::evaluate(&pairs);
    if unknown > 0 {
        report.warnings.push(format!("{unknown} predictions reference unknown samples"));
    }
    let dir = run.eval_dir();
    fs::create_dir_all(&dir).map_err(|e| ServiceError::io(&dir, e))?;
    write_json(&dir.join("report.json"), &report)?;
    jsonl::write(&dir.join("scores.jsonl"), &per_pair)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub run_id: String,
    pub seed: u64,
    pub stages: BTreeMap<Stage, StageStatus>,
    pub samples: usize,
    pub statuses: BTreeMap<String, usize>,
    pub levels: BTreeMap<String, usize>,
    pub categories: BTreeMap<Category, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub export: Option<BTreeMap<String, usize>>,
}

pub fn stats(run: &RunDir) -> Result<RunStats, ServiceError> {
    let samples: Vec<QaSample> = if run.samples_path().exists() {
        jsonl::read_tolerant(&run.samples_path())?
    } else {
        Vec::new()
    };
    let mut st = RunStats {
        run_id: run.manifest.run_id.clone(),
        seed: run.manifest.seed,
        stages: run.manifest.stages.iter().map(|(k, v)| (*k, v.status)).collect(),
        samples: samples.len(),
        statuses: BTreeMap::new(),
        levels: BTreeMap::new(),
        categories: BTreeMap::new(),
        export: None,
    };
    for s in &samples {
        *st.statuses.entry(s.status.as_str().to_string()).or_default() += 1;
        if !is_failed_slot(s) {
            *st.levels.entry(s.level.to_string()).or_default() += 1;
            *st.categories.entry(s.category).or_default() += 1;
        }
    }
    let mpath = run.export_dir().join("manifest.json");
    if mpath.exists() {
        let raw = fs::read_to_string(&mpath).map_err(|e| ServiceError::io(&mpath, e))?;
        let m: ExportManifest = serde_json::from_str(&raw)?;
        st.export = Some(m.splits);
    }
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vqa_core::generation::feasibility;
    use vqa_core::scheduler::{CategoryTable, Level};

    fn mock_run(dir: &Path, target: usize) -> RunDir {
        let mut cfg = PipelineConfig {
            seed: 11,
            mock: true,
            ..Default::default()
        };
        cfg.generation.target = target;
        RunDir::create(dir, cfg).unwrap()
    }

    #[test]
    fn synthetic_corpus_is_seeded_and_covers_all_levels() {
        let (m, t) = synthetic_corpus(200, 3);
        assert_eq!(synthetic_corpus(200, 3), (m.clone(), t.clone()));
        let (mut store, _) = CorpusStore::ingest_images(&m, "s").unwrap();
        store.attach_text(&t, "s");
        let table = CategoryTable::default();
        let mut levels = std::collections::BTreeSet::new();
        for r in store.records() {
            levels.extend(feasibility(r, &Default::default(), &table).unwrap().levels);
        }
        assert_eq!(levels, Level::all().collect());
    }

    #[test]
    fn full_pipeline_on_mock() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = mock_run(dir.path(), 60);
        let ing = ingest(&mut run, IngestSource::Synthetic(40)).unwrap();
        assert_eq!(ing.images, 40);
        let g = generate(&mut run, &GenerateOptions::default()).unwrap();
        assert!(g.complete);
        assert_eq!(g.total_generated, 60);
        let r = qc(&mut run).unwrap();
        assert!(r.retained > 0);
        let b = balance(&mut run).unwrap();
        assert_eq!(b.input, r.retained);
        let m = export(&mut run).unwrap();
        assert_eq!(m.total, b.kept);
        let s = stats(&run).unwrap();
        assert_eq!(s.statuses.get("exported").copied().unwrap_or(0), m.total);
        assert!(run.manifest.is_completed(Stage::Export));
    }

    #[test]
    fn out_of_order_stage_fails() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = mock_run(dir.path(), 10);
        assert!(matches!(
            qc(&mut run),
            Err(ServiceError::StageOrder { requires: Stage::Generate, .. })
        ));
    }

    #[test]
    fn torn_tail_is_dropped_on_resume() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = mock_run(dir.path(), 30);
        ingest(&mut run, IngestSource::Synthetic(20)).unwrap();
        let opts = GenerateOptions {
            max_slots: Some(12),
            ..Default::default()
        };
        generate(&mut run, &opts).unwrap();
        let path = run.samples_path();
        let mut raw = fs::read_to_string(&path).unwrap();
        raw.push_str("{\"sample_id\":\"q0000");
        fs::write(&path, raw).unwrap();
        let g = generate(&mut run, &GenerateOptions::default()).unwrap();
        assert!(g.complete);
        let all: Vec<QaSample> = jsonl::read(&path).unwrap();
        let ok = all.iter().filter(|s| !is_failed_slot(s)).count();
        assert_eq!(ok, 30);
    }

    #[test]
    fn evaluation_requires_export() {
        let dir = tempfile::tempdir().unwrap();
        let run = mock_run(dir.path(), 10);
        let p = dir.path().join("p.jsonl");
        fs::write(&p, "").unwrap();
        assert!(matches!(evaluate(&run, &p, None), Err(ServiceError::StageOrder { .. })));
    }

    #[test]
    fn scored_joins_verdicts() {
        let s = QaSample {
            sample_id: "q000001".into(),
            image_id: "i".into(),
            question: "Gì?".into(),
            answers: vec!["a".into()],
            category: Category::YesNo,
            level: Level::new(2).unwrap(),
            status: SampleStatus::Retained,
            rejection_reason: None,
        };
        let v = Verdict {
            sample_id: "q000001".into(),
            criteria: vec![true; 18],
            pass_count: 18,
            retained: true,
            grounding_score: Some(0.9),
        };
        let map = HashMap::from([(v.sample_id.clone(), v)]);
        let out = scored(&[s], &map);
        assert_eq!(out[0].pass_count, 18);
        assert_eq!(out[0].grounding_score, Some(0.9));
    }
}
