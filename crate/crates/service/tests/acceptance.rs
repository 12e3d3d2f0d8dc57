//! Acceptance checks. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vqa_core::balance::{self, category_counts, spread, BalanceConfig, ScoredSample};
use vqa_core::corpus::{CorpusStore, ManifestEntry, TextEntry};
use vqa_core::gateway::mock::MockGenerator;
use vqa_core::gateway::{Client, JudgeResponse, ModelEndpoint, Role};
use vqa_core::generation::{
    feasibility, sanity_filter, Constraints, GenerationConfig, GenerationRun, QaSample, SampleStatus,
};
use vqa_core::metrics::{
    bleu, cider, consensus_accuracy, krippendorff_alpha, rouge_l, token_prf, Alpha, EvalPair,
    RatingCriterion, RatingRecord,
};
use vqa_core::scheduler::{Category, CategoryTable, Level, DEFAULT_TARGETS};
use vqa_core::validation::{
    binarize_and_vote, decide, CriteriaRegistry, Outcome, QcConfig, ScoreMatrix, ThresholdMode,
    ThresholdTable, Verdict,
};
use vqa_service::pipeline::{self, GenerateOptions, IngestSource};
use vqa_service::{PipelineConfig, RunDir};

type Check = Result<String, String>;
type CheckFn = fn() -> Check;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sample(id: usize, image: usize, category: Category, level: u8) -> QaSample {
    QaSample {
        sample_id: format!("q{id:06}"),
        image_id: format!("img{image:06}"),
        question: format!("Vật số {id} trong ảnh có màu gì?"),
        answers: vec!["màu đỏ".into(), "đỏ".into(), "màu đỏ tươi".into(), "đỏ thẫm".into(), "màu đỏ".into()],
        category,
        level: Level::new(level).unwrap(),
        status: SampleStatus::Generated,
        rejection_reason: None,
    }
}

fn min_level(table: &CategoryTable, c: Category) -> u8 {
    table.range(c).min.get()
}

// ---------------------------------------------------------------- scheduler

fn scheduler_convergence() -> Check {
    let table = CategoryTable::default();
    let mut manifest = Vec::new();
    let mut texts = Vec::new();
    for i in 0..64 {
        let id = format!("img{i}");
        let mut m = ManifestEntry::new(&id, &format!("file://{id}.jpg"));
        m.has_text = true;
        manifest.push(m);
        texts.push(TextEntry::caption(&id, &format!("hai con chó đang chơi trên bãi cỏ số {i}")));
        texts.push(TextEntry::caption(&id, "con chó lớn hơn con mèo ngồi cạnh tấm biển"));
    }
    let (mut corpus, _) = CorpusStore::ingest_images(&manifest, "fixture").map_err(|e| e.to_string())?;
    corpus.attach_text(&texts, "fixture");
    let config = GenerationConfig {
        parallelism: 8,
        seed: 17,
        ..Default::default()
    };
    for r in corpus.records() {
        let f = feasibility(r, &config.context, &table).map_err(|e| e.to_string())?;
        ensure(f.levels.len() == 5, || format!("{} is not feasible at every level", r.image_id))?;
    }
    let client = Client::new(
        ModelEndpoint::new("mock-generator", Role::Generator),
        Arc::new(MockGenerator::new(17)),
    );
    let start = Instant::now();
    let run = GenerationRun::new(&corpus, &client, &config).map_err(|e| e.to_string())?;
    let summary = run
        .run(&[], 10_000, None, &mut |_| Ok(()))
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let total: u64 = summary.level_counts.iter().sum();
    ensure(total == 10_000, || format!("{total} accepts"))?;
    let observed: Vec<f64> = summary.level_counts.iter().map(|c| *c as f64 / total as f64).collect();
    let worst = observed
        .iter()
        .zip(DEFAULT_TARGETS)
        .map(|(o, t)| (o - t).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 0.02, || format!("observed {observed:.4?}, max deviation {worst:.4}"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("observed {observed:.4?}, max |dev| {worst:.4}, {:.2}s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------- voting

fn judge_ids(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("judge-{j}")).collect()
}

fn half_thresholds(judges: &[String], k: usize) -> ThresholdTable {
    ThresholdTable {
        mode: ThresholdMode::PerJudge,
        medians: judges.iter().map(|j| (j.clone(), vec![Some(0.5); k])).collect(),
    }
}

/// `votes[j][c]`: judge j passes criterion c.
fn matrix_from_votes(votes: &[Vec<bool>], judges: &[String], registry: &CriteriaRegistry) -> ScoreMatrix {
    let rows = votes
        .iter()
        .zip(judges)
        .map(|(v, id)| JudgeResponse {
            sample_id: "s".into(),
            endpoint_id: id.clone(),
            scores: v
                .iter()
                .zip(registry.entries())
                .map(|(pass, c)| if *pass == c.higher_is_better { 1.0 } else { 0.0 })
                .collect(),
            warnings: Vec::new(),
        })
        .collect();
    ScoreMatrix {
        sample_id: "s".into(),
        rows,
    }
}

/// Independent vote oracle: per-criterion strict majority, then count rule.
fn oracle_vote(votes: &[Vec<bool>], min_pass: usize) -> (Vec<bool>, bool) {
    let k = votes[0].len();
    let n = votes.len();
    let crit: Vec<bool> = (0..k)
        .map(|c| votes.iter().filter(|v| v[c]).count() * 2 > n)
        .collect();
    let count = crit.iter().filter(|b| **b).count();
    (crit, count >= min_pass)
}

fn vote(votes: &[Vec<bool>], judges: &[String], registry: &CriteriaRegistry, cfg: &QcConfig) -> Result<Verdict, String> {
    let m = matrix_from_votes(votes, judges, registry);
    match binarize_and_vote(&m, &half_thresholds(judges, registry.len()), registry, cfg, judges.len()) {
        Outcome::Decided(v) => Ok(v),
        Outcome::Undecided { .. } => Err("full matrix reported undecided".into()),
    }
}

fn retention_boundary() -> Check {
    let registry = CriteriaRegistry::default();
    let k = registry.len();
    let cfg = QcConfig::default();
    let mut checked = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for n in [3usize, 5] {
        let judges = judge_ids(n);
        let patterns: Vec<Vec<bool>> = (0..1u32 << n)
            .map(|bits| (0..n).map(|j| bits >> j & 1 == 1).collect())
            .collect();
        let passing: Vec<&Vec<bool>> = patterns.iter().filter(|p| p.iter().filter(|b| **b).count() * 2 > n).collect();
        let failing: Vec<&Vec<bool>> = patterns.iter().filter(|p| p.iter().filter(|b| **b).count() * 2 <= n).collect();

        // every criterion count, with every passing/failing column pattern
        // (all pairs for three judges, a rotation for five)
        for pass_count in 0..=k {
            for (pi, p) in passing.iter().enumerate() {
                let fails: Vec<&&Vec<bool>> = if n == 3 {
                    failing.iter().collect()
                } else {
                    vec![&failing[pi % failing.len()]]
                };
                for f in fails {
                    let mut cols: Vec<&Vec<bool>> = (0..k).map(|c| if c < pass_count { *p } else { *f }).collect();
                    cols.rotate_right(pass_count % k.max(1));
                    let votes: Vec<Vec<bool>> = (0..n).map(|j| cols.iter().map(|col| col[j]).collect()).collect();
                    let v = vote(&votes, &judges, &registry, &cfg)?;
                    let (crit, keep) = oracle_vote(&votes, cfg.min_pass);
                    ensure(v.criteria == crit && v.retained == keep && v.pass_count == pass_count, || {
                        format!("n={n} pass_count={pass_count}: got {} retained={}", v.pass_count, v.retained)
                    })?;
                    ensure(v.retained == (pass_count >= 9), || format!("n={n} boundary broken at {pass_count}"))?;
                    checked += 1;
                }
            }
        }

        // sampled arbitrary patterns
        for _ in 0..20_000 {
            let p: f64 = rng.random_range(0.2..0.8);
            let votes: Vec<Vec<bool>> = (0..n).map(|_| (0..k).map(|_| rng.random_bool(p)).collect()).collect();
            let v = vote(&votes, &judges, &registry, &cfg)?;
            let (crit, keep) = oracle_vote(&votes, cfg.min_pass);
            ensure(v.criteria == crit && v.retained == keep, || format!("n={n}: sampled pattern mismatch"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} vote patterns agree with the oracle; 9 retains, 8 rejects"))
}

fn grid_score(rng: &mut ChaCha8Rng) -> f64 {
    f64::from(rng.random_range(0..=1000u32)) / 1000.0
}

fn monotone(kind: usize, a: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| match kind {
        0 => x.powf(a),
        1 => ((a * x).exp() - 1.0) / (a.exp() - 1.0),
        2 => 3.0 * x + a,
        _ => 1.0 / (1.0 + (-(x - 0.5) * a).exp()),
    }
}

fn rank_invariance() -> Check {
    let registry = CriteriaRegistry::default();
    let k = registry.len();
    let cfg = QcConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut violations = 0;
    for trial in 0..1000 {
        let n_judges = if trial % 2 == 0 { 3 } else { 5 };
        let n_samples = rng.random_range(5..40);
        let judges = judge_ids(n_judges);
        let samples: Vec<QaSample> = (0..n_samples).map(|i| sample(i, i, Category::YesNo, 2)).collect();
        let coarse = rng.random_bool(0.5);
        let matrices: Vec<ScoreMatrix> = samples
            .iter()
            .map(|s| ScoreMatrix {
                sample_id: s.sample_id.clone(),
                rows: judges
                    .iter()
                    .map(|j| JudgeResponse {
                        sample_id: s.sample_id.clone(),
                        endpoint_id: j.clone(),
                        scores: (0..k)
                            .map(|_| {
                                let x = grid_score(&mut rng);
                                if coarse { (x * 10.0).round() / 10.0 } else { x }
                            })
                            .collect(),
                        warnings: Vec::new(),
                    })
                    .collect(),
            })
            .collect();
        let target = rng.random_range(0..n_judges);
        let f = monotone(rng.random_range(0..4), rng.random_range(0.3..4.0));
        let mut transformed = matrices.clone();
        for m in &mut transformed {
            for s in &mut m.rows[target].scores {
                *s = f(*s);
            }
        }
        let a = decide(samples.clone(), &matrices, &registry, &cfg, n_judges).map_err(|e| e.to_string())?;
        let b = decide(samples, &transformed, &registry, &cfg, n_judges).map_err(|e| e.to_string())?;
        let key = |v: &Verdict| (v.sample_id.clone(), v.criteria.clone(), v.pass_count, v.retained);
        let ka: Vec<_> = a.verdicts.iter().map(key).collect();
        let kb: Vec<_> = b.verdicts.iter().map(key).collect();
        if ka != kb {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} of 1000 trials changed a verdict"))?;
    Ok("1000 trials, 0 violations".into())
}

// ---------------------------------------------------------------- sanity

fn sanity_fixture() -> Check {
    const TOTAL: usize = 60_000;
    const PLANTED: usize = 167;
    let table = CategoryTable::default();
    let constraints = Constraints::default();
    let mut rng = ChaCha8Rng::seed_from_u64(167);
    let mut batch: Vec<QaSample> = (0..TOTAL)
        .map(|i| {
            let c = Category::ALL[i % Category::ALL.len()];
            sample(i, i / 3, c, min_level(&table, c))
        })
        .collect();
    let mut slots: Vec<usize> = (1..TOTAL).collect();
    slots.shuffle(&mut rng);
    let mut planted: BTreeSet<String> = BTreeSet::new();
    let mut used: BTreeSet<usize> = BTreeSet::new();
    for &slot in slots.iter() {
        if planted.len() == PLANTED {
            break;
        }
        // keep the source of a planted duplicate intact
        if used.contains(&slot) || used.contains(&(slot - 1)) {
            continue;
        }
        let src = batch[slot - 1].clone();
        let s = &mut batch[slot];
        match planted.len() % 7 {
            0 => {
                s.image_id = src.image_id;
                s.question = format!("  {}", src.question.to_uppercase()).replace(' ', "  ").trim().to_string();
            }
            1 => s.question = s.question.trim_end_matches('?').to_string(),
            2 => {
                s.answers.pop();
            }
            3 => s.answers[2] = "một hai ba bốn năm sáu bảy tám chín mười mười một".into(),
            4 => s.question = String::new(),
            5 => {
                s.category = Category::ObjectAttribute;
                s.level = Level::new(4).unwrap();
            }
            _ => s.answers[0] = "đỏ\nxanh".into(),
        }
        used.insert(slot);
        used.insert(slot - 1);
        planted.insert(batch[slot].sample_id.clone());
    }
    let start = Instant::now();
    let (kept, removed) = sanity_filter(batch, &constraints, &table);
    let elapsed = start.elapsed();
    let removed_ids: BTreeSet<String> = removed.iter().map(|s| s.sample_id.clone()).collect();
    ensure(removed.len() == PLANTED, || format!("removed {} of {PLANTED} planted", removed.len()))?;
    ensure(removed_ids == planted, || "removed set differs from the planted set".into())?;
    ensure(kept.len() + removed.len() == TOTAL, || "samples lost".into())?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("{} removed of {TOTAL}, {:.2}s", removed.len(), elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------- retention

fn binom_tail(n: u32, k: u32, p: f64) -> f64 {
    let mut total = 0.0;
    for i in k..=n {
        let mut c = 1.0;
        for j in 0..i {
            c *= f64::from(n - j) / f64::from(j + 1);
        }
        total += c * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32);
    }
    total
}

fn retention_ratio() -> Check {
    const N: usize = 60_000;
    let target_rate = 37_000.0 / N as f64;
    let registry = CriteriaRegistry::default();
    let k = registry.len();
    let cfg = QcConfig::default();
    // per-criterion pass rate giving the wanted retention under the count rule
    let (mut lo, mut hi) = (0.5, 1.0);
    for _ in 0..100 {
        let mid = (lo + hi) / 2.0;
        if binom_tail(k as u32, cfg.min_pass as u32, mid) < target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = (lo + hi) / 2.0;
    let passes_per_criterion = (p * N as f64).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(37_000);
    let mut pass = vec![vec![false; k]; N];
    #[allow(clippy::needless_range_loop)]
    for c in 0..k {
        let mut idx: Vec<usize> = (0..N).collect();
        idx.shuffle(&mut rng);
        for &i in &idx[..passes_per_criterion] {
            pass[i][c] = true;
        }
    }
    let judges = judge_ids(3);
    let samples: Vec<QaSample> = (0..N).map(|i| sample(i, i, Category::YesNo, 2)).collect();
    let matrices: Vec<ScoreMatrix> = samples
        .iter()
        .zip(&pass)
        .map(|(s, row)| ScoreMatrix {
            sample_id: s.sample_id.clone(),
            rows: judges
                .iter()
                .enumerate()
                .map(|(j, id)| {
                    // each judge reports on its own scale
                    let (good, bad) = (0.6 + 0.1 * j as f64, 0.1 + 0.1 * j as f64);
                    JudgeResponse {
                        sample_id: s.sample_id.clone(),
                        endpoint_id: id.clone(),
                        scores: row
                            .iter()
                            .zip(registry.entries())
                            .map(|(ok, c)| if *ok == c.higher_is_better { good } else { bad })
                            .collect(),
                        warnings: Vec::new(),
                    }
                })
                .collect(),
        })
        .collect();
    let out = decide(samples, &matrices, &registry, &cfg, 3).map_err(|e| e.to_string())?;
    let retained = out.retained.len();
    let tolerance = 370;
    ensure(retained.abs_diff(37_000) <= tolerance, || {
        format!("retained {retained}, expected 37000 +/- {tolerance}")
    })?;
    Ok(format!("retained {retained} of {N} (per-criterion pass rate {p:.4})"))
}

// ---------------------------------------------------------------- balance

fn scored(id: usize, image: usize, c: Category, level: u8, g: f64) -> ScoredSample {
    let mut s = sample(id, image, c, level);
    s.status = SampleStatus::Retained;
    ScoredSample {
        sample: s,
        pass_count: 12,
        grounding_score: Some(g),
    }
}

fn balancing() -> Check {
    let table = CategoryTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1_000);
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let mut items = Vec::new();
        let mut present = 0;
        for c in Category::ALL {
            let n = if rng.random_bool(0.15) { 0 } else { rng.random_range(1..300) };
            present += usize::from(n > 0);
            for _ in 0..n {
                let range = table.range(c);
                let level = rng.random_range(range.min.get()..=range.max.get());
                let g = f64::from(rng.random_range(0..=10u32)) / 10.0;
                let id = items.len();
                items.push(scored(id, id / 2, c, level, g));
            }
        }
        if present < 2 {
            continue;
        }
        let cfg = BalanceConfig {
            seed: trial,
            ..Default::default()
        };
        let before = category_counts(&items);
        let (kept, removed) = balance::undersample(items.clone(), &cfg);
        let (kept2, _) = balance::undersample(items.clone(), &cfg);
        let after = category_counts(&kept);
        let s = spread(&after);
        worst = worst.max(s);
        ensure(s <= 0.10 + 1e-12, || format!("trial {trial}: spread {s:.4}"))?;
        ensure(kept.len() + removed.len() == items.len(), || format!("trial {trial}: samples lost"))?;
        for (c, n) in &after {
            ensure(*n <= before[c], || format!("trial {trial}: {c:?} grew"))?;
        }
        let a = serde_json::to_vec(&kept.iter().map(|s| &s.sample).collect::<Vec<_>>()).unwrap();
        let b = serde_json::to_vec(&kept2.iter().map(|s| &s.sample).collect::<Vec<_>>()).unwrap();
        ensure(a == b, || format!("trial {trial}: rerun differs"))?;
    }
    Ok(format!("1000 vectors, worst spread {worst:.4}"))
}

// ---------------------------------------------------------------- splits

fn splits() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(811);
    for trial in 0..1000u64 {
        let ratios: &[f64] = if trial % 2 == 0 { &[0.8, 0.2] } else { &[0.8, 0.1, 0.1] };
        let groups = rng.random_range(ratios.len()..200);
        let mut items = Vec::new();
        for g in 0..groups {
            for _ in 0..rng.random_range(1..6) {
                let id = items.len();
                items.push(scored(id, g, Category::YesNo, 2, 0.5));
            }
        }
        let total = items.len();
        let out = balance::split(items, ratios, trial).map_err(|e| e.to_string())?;
        let mut owner: HashMap<String, usize> = HashMap::new();
        let mut seen = BTreeSet::new();
        for (i, (_, v)) in out.iter().enumerate() {
            for s in v {
                ensure(seen.insert(s.sample.sample_id.clone()), || format!("trial {trial}: sample twice"))?;
                let prev = owner.insert(s.sample.image_id.clone(), i);
                ensure(prev.is_none() || prev == Some(i), || {
                    format!("trial {trial}: {} in two splits", s.sample.image_id)
                })?;
            }
        }
        ensure(seen.len() == total && owner.len() == groups, || format!("trial {trial}: not a partition"))?;
        for (i, r) in ratios.iter().enumerate() {
            let g = owner.values().filter(|o| **o == i).count() as f64;
            let ideal = r * groups as f64;
            ensure(g >= ideal.floor() && g <= ideal.ceil(), || {
                format!("trial {trial}: split {i} has {g} groups, ideal {ideal}")
            })?;
        }
    }
    Ok("1000 corpora (80/20 and 8:1:1), every image in exactly one split".into())
}

// ---------------------------------------------------------------- metrics

fn toks(s: &str) -> Vec<&str> {
    s.split(' ').collect()
}

fn count_of(hay: &[&str], needle: &[&str]) -> usize {
    if needle.len() > hay.len() {
        return 0;
    }
    (0..=hay.len() - needle.len()).filter(|i| &hay[*i..*i + needle.len()] == needle).count()
}

fn oracle_bleu(pred: &str, refs: &[String]) -> f64 {
    let p = toks(pred);
    let rs: Vec<Vec<&str>> = refs.iter().map(|r| toks(r)).collect();
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let total = if p.len() >= n { p.len() - n + 1 } else { 0 };
        let mut distinct: Vec<&[&str]> = Vec::new();
        for i in 0..total {
            if !distinct.contains(&&p[i..i + n]) {
                distinct.push(&p[i..i + n]);
            }
        }
        let matched: usize = distinct
            .iter()
            .map(|g| count_of(&p, g).min(rs.iter().map(|r| count_of(r, g)).max().unwrap_or(0)))
            .sum();
        let prec = if matched == 0 { 1.0 / (total as f64 + 1.0) } else { matched as f64 / total as f64 };
        log_sum += prec.ln() / 4.0;
    }
    let c = p.len();
    let mut best = rs[0].len();
    for r in &rs {
        let l = r.len();
        if l.abs_diff(c) < best.abs_diff(c) || (l.abs_diff(c) == best.abs_diff(c) && l < best) {
            best = l;
        }
    }
    let bp = if c < best { (1.0 - best as f64 / c as f64).exp() } else { 1.0 };
    bp * log_sum.exp()
}

fn is_subsequence(sub: &[&str], of: &[&str]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|t| it.any(|x| x == t))
}

fn oracle_rouge(pred: &str, refs: &[String]) -> f64 {
    let p = toks(pred);
    let mut best = 0.0f64;
    for r in refs {
        let r = toks(r);
        let mut lcs = 0;
        for mask in 0u32..(1 << p.len()) {
            let sub: Vec<&str> = (0..p.len()).filter(|i| mask >> i & 1 == 1).map(|i| p[i]).collect();
            if sub.len() > lcs && is_subsequence(&sub, &r) {
                lcs = sub.len();
            }
        }
        if lcs > 0 {
            let (pr, rc) = (lcs as f64 / p.len() as f64, lcs as f64 / r.len() as f64);
            best = best.max(2.0 * pr * rc / (pr + rc));
        }
    }
    best
}

fn oracle_prf(pred: &str, refs: &[String]) -> (f64, f64, f64) {
    let p = toks(pred);
    let mut best: Option<(f64, f64, f64)> = None;
    for r in refs {
        let r = toks(r);
        let vocab: BTreeSet<&str> = p.iter().chain(&r).copied().collect();
        let overlap: usize = vocab
            .iter()
            .map(|w| p.iter().filter(|t| *t == w).count().min(r.iter().filter(|t| *t == w).count()))
            .sum();
        let (pr, rc) = (overlap as f64 / p.len() as f64, overlap as f64 / r.len() as f64);
        let f1 = if overlap == 0 { 0.0 } else { 2.0 * pr * rc / (pr + rc) };
        if best.is_none_or(|b| f1 > b.2) {
            best = Some((pr, rc, f1));
        }
    }
    best.unwrap()
}

/// CIDEr-D with dense vectors over the full n-gram vocabulary of the batch.
fn oracle_cider(pairs: &[EvalPair]) -> Vec<f64> {
    let n_docs = pairs.len() as f64;
    let mut vocab: Vec<Vec<String>> = Vec::new();
    for n in 1..=4 {
        for p in pairs {
            for s in p.references.iter().chain(std::iter::once(&p.prediction)) {
                let t = toks(s);
                for w in t.windows(n) {
                    let g: Vec<String> = w.iter().map(|x| x.to_string()).collect();
                    if !vocab.contains(&g) {
                        vocab.push(g);
                    }
                }
            }
        }
    }
    let df: Vec<f64> = vocab
        .iter()
        .map(|g| {
            let g: Vec<&str> = g.iter().map(String::as_str).collect();
            pairs
                .iter()
                .filter(|p| p.references.iter().any(|r| count_of(&toks(r), &g) > 0))
                .count() as f64
        })
        .collect();
    let dense = |s: &str| -> Vec<f64> {
        let t = toks(s);
        vocab
            .iter()
            .zip(&df)
            .map(|(g, d)| {
                let g: Vec<&str> = g.iter().map(String::as_str).collect();
                count_of(&t, &g) as f64 * (n_docs.ln() - d.max(1.0).ln())
            })
            .collect()
    };
    let orders: Vec<usize> = vocab.iter().map(Vec::len).collect();
    pairs
        .iter()
        .map(|p| {
            let h = dense(&p.prediction);
            let hl = toks(&p.prediction).len() as f64;
            let mut sum = 0.0;
            for r in &p.references {
                let rv = dense(r);
                let rl = toks(r).len() as f64;
                let pen = (-(hl - rl).powi(2) / 72.0).exp();
                for n in 1..=4 {
                    let idx: Vec<usize> = (0..vocab.len()).filter(|i| orders[*i] == n).collect();
                    let dot: f64 = idx.iter().map(|i| h[*i].min(rv[*i]) * rv[*i]).sum();
                    let nh: f64 = idx.iter().map(|i| h[*i] * h[*i]).sum::<f64>().sqrt();
                    let nr: f64 = idx.iter().map(|i| rv[*i] * rv[*i]).sum::<f64>().sqrt();
                    let sim = if nh != 0.0 && nr != 0.0 { dot / (nh * nr) } else { dot };
                    sum += sim * pen / 4.0;
                }
            }
            sum / p.references.len() as f64 * 10.0
        })
        .collect()
}

fn random_sentence(rng: &mut ChaCha8Rng) -> String {
    const VOCAB: [&str; 6] = ["mèo", "chó", "xanh", "đỏ", "hai", "ba"];
    let len = rng.random_range(1..=8);
    (0..len).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn metric_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let pairs: Vec<EvalPair> = (0..100)
        .map(|i| EvalPair {
            sample_id: format!("p{i}"),
            prediction: random_sentence(&mut rng),
            references: (0..rng.random_range(1..=4)).map(|_| random_sentence(&mut rng)).collect(),
        })
        .collect();
    let tol = 1e-9;
    let mut worst = 0.0f64;
    let c = cider(&pairs);
    let co = oracle_cider(&pairs);
    for (i, p) in pairs.iter().enumerate() {
        let prf = token_prf(&p.prediction, &p.references);
        let (op, or, of) = oracle_prf(&p.prediction, &p.references);
        let diffs = [
            ("bleu", bleu(&p.prediction, &p.references, 4), oracle_bleu(&p.prediction, &p.references)),
            ("rouge_l", rouge_l(&p.prediction, &p.references), oracle_rouge(&p.prediction, &p.references)),
            ("cider", c.scores[i], co[i]),
            ("precision", prf.precision, op),
            ("recall", prf.recall, or),
            ("f1", prf.f1, of),
        ];
        for (name, got, want) in diffs {
            let d = (got - want).abs();
            worst = worst.max(d);
            ensure(d <= tol, || format!("{name} on pair {i}: {got} vs oracle {want}"))?;
        }
        let same = vec![p.prediction.clone()];
        for (name, v) in [
            ("bleu", bleu(&p.prediction, &same, 4)),
            ("rouge_l", rouge_l(&p.prediction, &same)),
            ("f1", token_prf(&p.prediction, &same).f1),
        ] {
            ensure((v - 1.0).abs() <= tol, || format!("{name} identity on pair {i} gave {v}"))?;
        }
    }
    let answer = "hai con mèo".to_string();
    let expected = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 1.0, 1.0];
    for (m, want) in expected.iter().enumerate() {
        let mut refs = vec![answer.clone(); m];
        refs.extend(vec!["ba con chó".to_string(); 10 - m]);
        let got = consensus_accuracy(&answer, &refs);
        ensure((got - want).abs() <= tol, || format!("consensus with {m} matches gave {got}"))?;
    }
    Ok(format!("100 pairs, max |diff| {worst:.2e}; identity 1.0; consensus saturates at 3"))
}

// ---------------------------------------------------------------- alpha

fn ordinal_delta2(a: u32, b: u32, marginals: &BTreeMap<u32, f64>) -> f64 {
    let (lo, hi) = (a.min(b), a.max(b));
    let between: f64 = marginals.range(lo..=hi).map(|(_, n)| *n).sum();
    let d = between - (marginals[&lo] + marginals[&hi]) / 2.0;
    d * d
}

/// Pairwise form: D_o over within-unit pairs, D_e over all pairs of
/// pairable values.
fn oracle_alpha(units: &[Vec<u32>]) -> Option<f64> {
    let units: Vec<&Vec<u32>> = units.iter().filter(|u| u.len() >= 2).collect();
    let values: Vec<u32> = units.iter().flat_map(|u| u.iter().copied()).collect();
    let n = values.len() as f64;
    if values.is_empty() {
        return None;
    }
    let mut marginals: BTreeMap<u32, f64> = BTreeMap::new();
    for v in &values {
        *marginals.entry(*v).or_default() += 1.0;
    }
    let mut d_o = 0.0;
    for u in &units {
        let m = u.len() as f64;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    d_o += ordinal_delta2(u[i], u[j], &marginals) / (m - 1.0);
                }
            }
        }
    }
    d_o /= n;
    let mut d_e = 0.0;
    for i in 0..values.len() {
        for j in 0..values.len() {
            if i != j {
                d_e += ordinal_delta2(values[i], values[j], &marginals);
            }
        }
    }
    d_e /= n * (n - 1.0);
    if d_e == 0.0 {
        return if d_o == 0.0 { Some(1.0) } else { None };
    }
    Some(1.0 - d_o / d_e)
}

fn records(ratings: &[(&str, usize, Option<u8>)]) -> Vec<RatingRecord> {
    ratings
        .iter()
        .map(|(a, s, r)| RatingRecord {
            annotator_id: a.to_string(),
            sample_id: format!("s{s}"),
            criterion: RatingCriterion::Fluency,
            rating: *r,
        })
        .collect()
}

fn alpha_fixtures() -> Check {
    // perfect agreement, three annotators
    let mut perfect = Vec::new();
    for s in 0..20 {
        for a in ["a1", "a2", "a3"] {
            perfect.push((a, s, Some((s % 5) as u8 + 1)));
        }
    }
    let got = krippendorff_alpha(&records(&perfect), RatingCriterion::Fluency);
    ensure(got == Alpha::Value(1.0), || format!("perfect agreement gave {got:?}"))?;

    // crossed (1,2) vs (2,1): hand value -0.5
    let crossed = records(&[("a", 0, Some(1)), ("b", 0, Some(2)), ("a", 1, Some(2)), ("b", 1, Some(1))]);
    let Alpha::Value(v) = krippendorff_alpha(&crossed, RatingCriterion::Fluency) else {
        return Err("crossed fixture undefined".into());
    };
    ensure((v + 0.5).abs() <= 1e-9, || format!("crossed fixture gave {v}"))?;

    // random two-annotator fixtures with missing ratings
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let mut compared = 0;
    for _ in 0..200 {
        let items = rng.random_range(2..15);
        let mut raw = Vec::new();
        let mut units = Vec::new();
        for s in 0..items {
            let mut unit = Vec::new();
            for a in ["a", "b"] {
                let r = (!rng.random_bool(0.15)).then(|| rng.random_range(1..=5u8));
                raw.push((a, s, r));
                if let Some(r) = r {
                    unit.push(u32::from(r));
                }
            }
            units.push(unit);
        }
        let got = krippendorff_alpha(&records(&raw), RatingCriterion::Fluency).value();
        let want = oracle_alpha(&units);
        match (got, want) {
            (Some(g), Some(w)) => {
                ensure((g - w).abs() <= 1e-9, || format!("alpha {g} vs oracle {w}"))?;
                compared += 1;
            }
            (None, None) => {}
            (g, w) => return Err(format!("alpha {g:?} vs oracle {w:?}")),
        }
    }

    let single = records(&[("a", 0, Some(1)), ("a", 1, Some(3)), ("a", 2, Some(5))]);
    let got = krippendorff_alpha(&single, RatingCriterion::Fluency);
    ensure(got == Alpha::Undefined, || format!("single annotator gave {got:?}"))?;
    Ok(format!("perfect = 1.0, crossed = -0.5, {compared} random fixtures within 1e-9, single = Undefined"))
}

// ---------------------------------------------------------------- end to end

fn full_run(dir: &Path) -> Result<(), String> {
    let mut cfg = PipelineConfig {
        seed: 7,
        mock: true,
        ..Default::default()
    };
    cfg.generation.target = 600;
    let mut run = RunDir::create(dir, cfg).map_err(|e| e.to_string())?;
    pipeline::ingest(&mut run, IngestSource::Synthetic(250)).map_err(|e| e.to_string())?;
    pipeline::generate(&mut run, &GenerateOptions::default()).map_err(|e| e.to_string())?;
    pipeline::qc(&mut run).map_err(|e| e.to_string())?;
    pipeline::balance(&mut run).map_err(|e| e.to_string())?;
    pipeline::export(&mut run).map_err(|e| e.to_string())?;
    Ok(())
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Run manifest without its wall-clock fields.
fn manifest_content(dir: &Path) -> serde_json::Value {
    let raw = fs::read_to_string(dir.join("manifest.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&raw).unwrap();
    v.as_object_mut().unwrap().remove("created_at");
    for stage in v["stages"].as_object_mut().unwrap().values_mut() {
        let s = stage.as_object_mut().unwrap();
        s.remove("started_at");
        s.remove("finished_at");
    }
    v
}

fn end_to_end_determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    full_run(a.path())?;
    full_run(b.path())?;
    let ea = dir_bytes(&a.path().join("export"));
    let eb = dir_bytes(&b.path().join("export"));
    ensure(ea.len() >= 3, || format!("only {} export files", ea.len()))?;
    let differing: Vec<&String> = ea.iter().zip(&eb).filter(|(x, y)| x != y).map(|(x, _)| &x.0).collect();
    ensure(ea.len() == eb.len() && differing.is_empty(), || format!("export differs: {differing:?}"))?;
    ensure(manifest_content(a.path()) == manifest_content(b.path()), || "run manifests differ".into())?;
    let total: usize = ea
        .iter()
        .filter(|(n, _)| n.ends_with(".jsonl"))
        .map(|(_, b)| b.iter().filter(|c| **c == b'\n').count())
        .sum();
    Ok(format!("{} export files byte-identical ({total} records), manifests equal", ea.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, CheckFn); 10] = [
        ("scheduler convergence", scheduler_convergence),
        ("retention boundary", retention_boundary),
        ("rank invariance", rank_invariance),
        ("sanity-filter fixture", sanity_fixture),
        ("retention-ratio fixture", retention_ratio),
        ("balancing", balancing),
        ("splits", splits),
        ("metric oracles", metric_oracles),
        ("krippendorff alpha", alpha_fixtures),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS {name}: {detail}"),
            Ok(Err(detail)) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", 10 - failed, 10);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
