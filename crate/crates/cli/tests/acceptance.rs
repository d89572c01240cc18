//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if
//! any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use iul_core::consolidation::{consolidate, ConsolidatedExcerpt};
use iul_core::corpus::{filter_short, load_corpus, write_corpus, CorpusKind, RawExcerpt};
use iul_core::evaluation::{auc, prf, ConfusionMatrix, MetricsReport};
use iul_core::experiment::{
    cross_validate, stratification_samples, train_fold, ExperimentData, FoldModels, NegativeSet, Strategy,
};
use iul_core::labeling::{assign_positive_labels, build_labeled_set, CodeScheme, EnCaps, LabelInputs, Lexicon};
use iul_core::llm::{build_prompt, run_llm_eval, LlmEvalConfig, LlmItem, PromptMode, PromptSpec, VerdictCache};
use iul_core::modeling::{
    batch_gradient, batch_loss, hierarchical_predict, ClassWeights, Example, FeatureVector, Featurizer, LinearModel,
    ModelKind, ScoreError, ScoreVector, Scorer, TrainConfig,
};
use iul_core::splitting::{build_fold_plan, FoldPlan, StratSample};
use iul_core::synth::{generate, SynthConfig};
use iul_core::taxonomy::{Subcategory, NUM_SUBCATEGORIES};
use iul_service::{ChatEndpointConfig, OpenAiChatClient};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

// ---------------------------------------------------------------- consolidation

fn excerpt(id: String, doc: &str, text: String, codes: BTreeSet<String>) -> RawExcerpt {
    RawExcerpt { excerpt_id: id, document_id: doc.into(), page: 1, text, annotator_id: "a".into(), codes }
}

const WORDS: &[&str] = &[
    "patient", "female", "elderly", "dose", "renal", "the", "with", "cohort", "serum", "noted", "trial", "clinic",
    "among", "was", "care", "risk", "high", "low", "young", "study",
];
const CODES: &[&str] = &["IUL", "SexMisuse", "GenderMisuse", "SI:Sex", "Bias:Age", "OutdatedTerm"];

/// Up to 50 excerpts over a few documents; chains are nested word windows
/// of one sentence, with case and spacing noise.
fn random_set(rng: &mut StdRng, set: usize) -> Vec<RawExcerpt> {
    let n = rng.random_range(1..=50);
    let mut out = Vec::new();
    let mut bases: Vec<(String, Vec<&str>)> = Vec::new();
    while out.len() < n {
        let doc = ["d1", "d2", "d3"].choose(rng).unwrap().to_string();
        let codes: BTreeSet<String> =
            (0..rng.random_range(0..3)).map(|_| CODES.choose(rng).unwrap().to_string()).collect();
        let id = format!("s{set}-{}", out.len());
        if !bases.is_empty() && rng.random_bool(0.6) {
            let (doc, words) = bases.choose(rng).unwrap().clone();
            let start = rng.random_range(0..words.len());
            let end = rng.random_range(start + 1..=words.len());
            let mut text = words[start..end].join(if rng.random_bool(0.2) { "  " } else { " " });
            if rng.random_bool(0.3) {
                text = text.to_uppercase();
            }
            out.push(excerpt(id, &doc, text, codes));
        } else {
            let words: Vec<&str> = (0..rng.random_range(3..12)).map(|_| *WORDS.choose(rng).unwrap()).collect();
            bases.push((doc.clone(), words.clone()));
            out.push(excerpt(id, &doc, words.join(" "), codes));
        }
    }
    out
}

/// Transitive closure of the containment relation by repeated squaring of
/// a boolean matrix.
fn closure_groups(set: &[RawExcerpt]) -> BTreeSet<(BTreeSet<String>, BTreeSet<String>)> {
    let n = set.len();
    let norm = |s: &str| s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
    let keys: Vec<String> = set.iter().map(|e| norm(&e.text)).collect();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            reach[i][j] = i == j
                || (set[i].document_id == set[j].document_id
                    && (keys[i].contains(&keys[j]) || keys[j].contains(&keys[i])));
        }
    }
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if !reach[i][j] && (0..n).any(|m| reach[i][m] && reach[m][j]) {
                    reach[i][j] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (0..n)
        .map(|i| {
            let members: Vec<usize> = (0..n).filter(|&j| reach[i][j]).collect();
            let ids = members.iter().map(|&j| set[j].excerpt_id.clone()).collect();
            let codes = members.iter().flat_map(|&j| set[j].codes.iter().cloned()).collect();
            (ids, codes)
        })
        .collect()
}

fn consolidation_oracle() -> Check {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(2024);
    let mut multi = 0;
    for s in 0..200 {
        let set = random_set(&mut rng, s);
        let expected = closure_groups(&set);
        let got: BTreeSet<(BTreeSet<String>, BTreeSet<String>)> =
            consolidate(&set).into_iter().map(|g: ConsolidatedExcerpt| (g.member_ids, g.merged_codes)).collect();
        ensure(got == expected, || format!("set {s}: grouping differs from closure oracle"))?;
        multi += expected.iter().filter(|g| g.0.len() > 1).count();
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("200 sets, {multi} multi-member groups, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- labeling

fn labels_for(codes: &BTreeSet<String>) -> Option<(bool, [bool; NUM_SUBCATEGORIES])> {
    let e = ConsolidatedExcerpt {
        excerpt_id: "x".into(),
        document_id: "d".into(),
        page: 0,
        text: "t".into(),
        merged_codes: codes.clone(),
        member_ids: BTreeSet::new(),
    };
    assign_positive_labels(&e, &CodeScheme::default()).map(|l| (l.y(), l.z()))
}

fn label_truth_table() -> Check {
    for mask in 0..8u8 {
        let (iul, sub, other) = (mask & 1 != 0, mask & 2 != 0, mask & 4 != 0);
        let mut codes = BTreeSet::new();
        if iul {
            codes.insert("IUL".to_string());
        }
        if sub {
            codes.insert("AgeLanguageMisuse".to_string());
        }
        if other {
            codes.insert("SI:Age".to_string());
            codes.insert("Bias:Age".to_string());
        }
        let got = labels_for(&codes);
        let want_y = iul && sub;
        match got {
            Some((y, z)) => {
                ensure(want_y && y, || format!("row {mask}: unexpected positive"))?;
                let expected: [bool; 6] = Subcategory::ALL.map(|c| c == Subcategory::AgeLanguageMisuse);
                ensure(z == expected, || format!("row {mask}: z = {z:?}"))?;
            }
            None => ensure(!want_y, || format!("row {mask}: missing positive"))?,
        }
    }
    let mut rng = StdRng::seed_from_u64(9);
    let pool: Vec<String> = ["IUL", "SI:Sex", "SI:Age", "Bias:Weight", "Other", "iul"]
        .iter()
        .map(|s| s.to_string())
        .chain(Subcategory::ALL.iter().map(|c| c.code().to_string()))
        .collect();
    for case in 0..10_000 {
        let codes: BTreeSet<String> = pool.iter().filter(|_| rng.random_bool(0.3)).cloned().collect();
        let iul = codes.contains("IUL");
        let subs = Subcategory::ALL.map(|c| codes.contains(c.code()));
        match labels_for(&codes) {
            Some((y, z)) => {
                ensure(y && iul && subs.iter().any(|b| *b), || format!("case {case}: bad positive"))?;
                ensure(z == subs, || format!("case {case}: z differs from present codes"))?;
                ensure(z.iter().all(|&zc| !zc || y), || format!("case {case}: dominance violated"))?;
            }
            None => ensure(!(iul && subs.iter().any(|b| *b)), || format!("case {case}: missed positive"))?,
        }
    }
    Ok("8 rows, 10000 fuzzed code sets".into())
}

// ---------------------------------------------------------------- stratification

fn stratification_quality() -> Check {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(77);
    let incidence: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..=0.40)).collect();
    let samples: Vec<StratSample> = (0..500)
        .map(|i| StratSample::new(format!("s{i:03}"), incidence.iter().map(|&p| rng.random_bool(p)).collect()))
        .collect();
    let plan = build_fold_plan(&samples, 5, 0.2, 13).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let index: BTreeMap<&str, &StratSample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut worst: f64 = 0.0;
    for l in 0..6 {
        let n_l = samples.iter().filter(|s| s.labels[l]).count();
        let global = n_l as f64 / samples.len() as f64;
        let bound = 0.05f64.max(1.0 / n_l as f64);
        for (f, fold) in plan.folds.iter().enumerate() {
            for (name, part) in [("train", &fold.train), ("val", &fold.val), ("test", &fold.test)] {
                let share = part.iter().filter(|id| index[id.as_str()].labels[l]).count() as f64 / part.len() as f64;
                let dev = (share - global).abs();
                worst = worst.max(dev);
                ensure(dev <= bound, || format!("label {l} fold {f} {name}: deviation {dev:.4} > {bound:.4}"))?;
            }
            let all: BTreeSet<&String> = fold.train.iter().chain(&fold.val).chain(&fold.test).collect();
            ensure(all.len() == 500, || format!("fold {f} parts do not partition the samples"))?;
        }
    }
    let again = build_fold_plan(&samples, 5, 0.2, 13).map_err(|e| e.to_string())?;
    ensure(plan.to_json() == again.to_json(), || "same seed produced a different plan".into())?;
    ensure(elapsed < Duration::from_secs(2), || format!("took {elapsed:?}"))?;
    Ok(format!("max deviation {worst:.4}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- metrics

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut credit, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                credit += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    credit / pairs
}

fn metric_oracles() -> Check {
    let mut rng = StdRng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = rng.random_range(2..=500);
        let levels = rng.random_range(2..30);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let got = auc(&scores, &labels).map_err(|e| e.to_string())?;
        let want = pairwise_auc(&scores, &labels);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-12, || format!("case {case}: {got} vs {want}"))?;
    }
    let fixture = auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).map_err(|e| e.to_string())?;
    ensure((fixture - 0.75).abs() < 1e-12, || format!("fixture AUC {fixture}"))?;
    let cm = ConfusionMatrix { tp: 1, fp: 1, tn: 0, fn_: 0 };
    let (p, r, f2) = prf(&cm, 2.0);
    ensure(p == 0.5 && r == 1.0, || format!("P={p} R={r}"))?;
    ensure((f2 - 0.833_333).abs() < 1e-6, || format!("F2 = {f2}"))?;
    let cm = ConfusionMatrix { tp: 6, fp: 2, tn: 9, fn_: 3 };
    let (p, r, f1) = prf(&cm, 1.0);
    ensure((f1 - 2.0 * p * r / (p + r)).abs() < 1e-12, || "F1 is not the harmonic mean".into())?;
    let (_, _, f_half) = prf(&cm, 0.5);
    let want = 1.25 * (6.0 / 8.0) * (6.0 / 9.0) / (0.25 * (6.0 / 8.0) + 6.0 / 9.0);
    ensure((f_half - want).abs() < 1e-12, || format!("F0.5 = {f_half}, want {want}"))?;
    let (p, r, f) = prf(&ConfusionMatrix { tp: 0, fp: 0, tn: 4, fn_: 0 }, 1.0);
    ensure(p == 0.0 && r == 0.0 && f == 0.0, || "0/0 is not 0".into())?;
    Ok(format!("100 AUC instances, max |diff| {worst:e}"))
}

// ---------------------------------------------------------------- gradients

fn sparse(rng: &mut StdRng, dim: u32) -> FeatureVector {
    let pairs: Vec<(u32, f64)> = (0..rng.random_range(1..8)).map(|_| (rng.random_range(0..dim), rng.random_range(-1.0..1.0))).collect();
    FeatureVector::from_pairs(pairs)
}

fn gradient_check() -> Check {
    let mut rng = StdRng::seed_from_u64(31);
    let dim = 32u32;
    let featurizer = Featurizer::with_dimension(dim).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for draw in 0..50 {
        let (kind, heads) = if rng.random_bool(0.5) {
            (ModelKind::Binary, vec!["iul".to_string()])
        } else {
            (ModelKind::Multilabel, iul_core::modeling::multilabel_heads())
        };
        let mut model = LinearModel::zeros(kind, featurizer.clone(), heads.clone()).map_err(|e| e.to_string())?;
        for w in model.weights.iter_mut() {
            for v in w.iter_mut() {
                *v = rng.random_range(-2.0..2.0);
            }
        }
        for b in model.bias.iter_mut() {
            *b = rng.random_range(-1.0..1.0);
        }
        let batch: Vec<Example> = (0..rng.random_range(1..10))
            .map(|_| Example { x: sparse(&mut rng, dim), y: heads.iter().map(|_| rng.random_bool(0.4)).collect() })
            .collect();
        let refs: Vec<&Example> = batch.iter().collect();
        let weights: Vec<ClassWeights> =
            heads.iter().map(|_| ClassWeights { w0: rng.random_range(0.2..3.0), w1: rng.random_range(0.2..3.0) }).collect();
        let grad = batch_gradient(&model, &refs, &weights);
        let mut dense: Vec<Vec<f64>> = vec![vec![0.0; dim as usize]; heads.len()];
        for (k, g) in grad.weights.iter().enumerate() {
            for (i, v) in g.iter() {
                dense[k][i] += v;
            }
        }
        let mut compare = |analytic: f64, numeric: f64| -> Result<(), String> {
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
            ensure(rel < 1e-5, || format!("draw {draw}: analytic {analytic} vs numeric {numeric}"))
        };
        for k in 0..heads.len() {
            for i in 0..dim as usize {
                let orig = model.weights[k][i];
                model.weights[k][i] = orig + h;
                let up = batch_loss(&model, &refs, &weights);
                model.weights[k][i] = orig - h;
                let down = batch_loss(&model, &refs, &weights);
                model.weights[k][i] = orig;
                compare(dense[k][i], (up - down) / (2.0 * h))?;
            }
            let orig = model.bias[k];
            model.bias[k] = orig + h;
            let up = batch_loss(&model, &refs, &weights);
            model.bias[k] = orig - h;
            let down = batch_loss(&model, &refs, &weights);
            model.bias[k] = orig;
            compare(grad.bias[k], (up - down) / (2.0 * h))?;
        }
    }
    Ok(format!("50 draws, max relative error {worst:e}"))
}

// ---------------------------------------------------------------- synthetic end to end

struct Synthetic {
    data: ExperimentData,
    plan: FoldPlan,
    _dir: tempfile::TempDir,
}

/// Generator output written to disk and taken through the same loading,
/// consolidation and labeling the CLI uses.
fn synthetic_pipeline() -> Result<Synthetic, String> {
    let corpus = generate(&SynthConfig::default());
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, p) = (dir.path().join("annotated.jsonl"), dir.path().join("pool.jsonl"));
    write_corpus(&a, &corpus.annotated).map_err(|e| e.to_string())?;
    write_corpus(&p, &corpus.pool).map_err(|e| e.to_string())?;
    let annotated = filter_short(load_corpus(&a, CorpusKind::Annotated).map_err(|e| e.to_string())?.excerpts);
    let pool = filter_short(load_corpus(&p, CorpusKind::Pool).map_err(|e| e.to_string())?.excerpts);
    let consolidated = consolidate(&annotated);
    let lexicon = Lexicon::seed();
    let scheme = CodeScheme::default();
    let inputs = LabelInputs { annotated: &annotated, pool: &pool, lexicon: &lexicon, scheme: &scheme, caps: EnCaps::unlimited(), seed: 1 };
    let (records, _) = build_labeled_set(&consolidated, &inputs).map_err(|e| e.to_string())?;
    let plan = build_fold_plan(&stratification_samples(&records), 5, 0.2, 7).map_err(|e| e.to_string())?;
    Ok(Synthetic { data: ExperimentData::new(records, Featurizer::default()), plan, _dir: dir })
}

fn subcategory_aucs(reports: &[MetricsReport]) -> BTreeMap<String, f64> {
    reports
        .iter()
        .filter(|r| Subcategory::ALL.iter().any(|c| c.slug() == r.head))
        .map(|r| (r.head.clone(), r.mean.auc.unwrap_or(0.0)))
        .collect()
}

fn fmt_aucs(m: &BTreeMap<String, f64>) -> String {
    m.values().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join("/")
}

fn synthetic_end_to_end(s: &Synthetic) -> Check {
    let started = Instant::now();
    let cfg = TrainConfig::linear();
    let run = |strategy, negatives| {
        cross_validate(&s.data, &s.plan, strategy, negatives, &cfg).map(|r| r.0).map_err(|e| e.to_string())
    };
    let specific_an = subcategory_aucs(&run(Strategy::Specific, NegativeSet::An)?);
    let specific = subcategory_aucs(&run(Strategy::Specific, NegativeSet::AnEn)?);
    let multilabel = subcategory_aucs(&run(Strategy::Multilabel, NegativeSet::AnEn)?);
    let elapsed = started.elapsed();
    ensure(specific.len() == 6 && multilabel.len() == 6, || "missing subcategory reports".into())?;
    for (head, v) in &specific {
        ensure(*v >= 0.95, || format!("specific {head} AUC {v:.3} < 0.95"))?;
    }
    for (head, v) in &multilabel {
        ensure(*v >= 0.90, || format!("multilabel {head} AUC {v:.3} < 0.90"))?;
    }
    for (head, v) in &specific {
        let base = specific_an[head];
        ensure(*v >= base, || format!("adding EN lowered specific {head} AUC {base:.4} -> {v:.4}"))?;
    }
    ensure(elapsed < Duration::from_secs(180), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "specific AN+EN {} (AN {}), multilabel {}, {elapsed:.1?}",
        fmt_aucs(&specific),
        fmt_aucs(&specific_an),
        fmt_aucs(&multilabel)
    ))
}

// ---------------------------------------------------------------- hierarchical

/// Forwards to a model and records every text it is asked to score.
struct Recording<'a> {
    inner: &'a LinearModel,
    seen: std::sync::Mutex<Vec<String>>,
}

impl Scorer for Recording<'_> {
    fn heads(&self) -> Vec<String> {
        self.inner.heads()
    }

    fn score(&self, texts: &[&str]) -> Result<Vec<ScoreVector>, ScoreError> {
        self.seen.lock().unwrap().extend(texts.iter().map(|t| t.to_string()));
        self.inner.score(texts)
    }
}

fn hierarchical_invariant(s: &Synthetic) -> Check {
    let cfg = TrainConfig::linear();
    let (mut gated_out, mut gated_in) = (0, 0);
    for fold in 0..s.plan.folds.len() {
        let FoldModels::Hierarchical { general, sub } =
            train_fold(&s.data, &s.plan, fold, Strategy::Hierarchical, NegativeSet::AnEn, &cfg).map_err(|e| e.to_string())?
        else {
            return Err("hierarchical strategy returned other models".into());
        };
        let texts: Vec<&str> = s.plan.folds[fold]
            .test
            .iter()
            .map(|id| s.data.records[s.data.position(id).unwrap()].text.as_str())
            .collect();
        let level1 = Recording { inner: &general, seen: Default::default() };
        let level2 = Recording { inner: &sub, seen: Default::default() };
        let preds = hierarchical_predict(&level1, &level2, &texts).map_err(|e| e.to_string())?;
        let seen: BTreeSet<String> = level2.seen.into_inner().unwrap().into_iter().collect();
        let seen_count = seen.len();
        let mut gated = 0;
        for (text, p) in texts.iter().zip(&preds) {
            let stage1 = general.score(&[text]).map_err(|e| e.to_string())?[0].probs[0] > 0.5;
            if stage1 {
                gated += 1;
                gated_in += 1;
            } else {
                gated_out += 1;
                ensure(!p.y && p.z.iter().all(|b| !b), || format!("fold {fold}: stage-1 negative has subcategory bits"))?;
                ensure(!seen.contains(*text), || format!("fold {fold}: level 2 scored a stage-1 negative"))?;
            }
        }
        let distinct_gated: BTreeSet<&str> =
            texts.iter().zip(&preds).filter(|(_, p)| p.y).map(|(t, _)| *t).collect();
        ensure(seen_count == distinct_gated.len(), || format!("fold {fold}: level 2 saw {seen_count} texts, {gated} gated"))?;
    }
    Ok(format!("{gated_out} stage-1 negatives never reached level 2, {gated_in} gated"))
}

// ---------------------------------------------------------------- LLM harness

const GOLDEN_TARGET: &str = "Almost all women in the U.S (> 99%) who have sexual intercourse use contraception at some point during their reproductive life - including women of all races, nationalities and religions.";

fn llm_pattern() -> Check {
    let stub = common::stub_server(common::always_positive);
    let client = OpenAiChatClient::new(ChatEndpointConfig::new(format!("{}/v1", stub.url), "stub-positive"));
    let items: Vec<LlmItem> = (0..1000)
        .map(|i| LlmItem { excerpt_id: format!("e{i}"), text: format!("excerpt number {i} from the curriculum"), y: i % 1000 < 179, fold: i % 5 })
        .collect();
    let cache = VerdictCache::in_memory();
    let outcome = run_llm_eval(&items, &client, &cache, &LlmEvalConfig::default()).map_err(|e| e.to_string())?;
    let (p, r) = (outcome.report.mean.precision, outcome.report.mean.recall);
    ensure(r == 1.0, || format!("recall {r}"))?;
    ensure((p - 0.179).abs() <= 0.001, || format!("precision {p}"))?;
    ensure(outcome.network_calls == 1000, || format!("{} endpoint calls", outcome.network_calls))?;
    let golden = include_str!("../../core/tests/golden/prompt_both.txt");
    let rendered = build_prompt(&PromptSpec::standard(PromptMode::Both, GOLDEN_TARGET)).map_err(|e| e.to_string())?;
    ensure(rendered == golden, || "BOTH-mode prompt differs from the golden file".into())?;
    Ok(format!("R = {r:.3}, P = {p:.4}, golden prompt matches ({} bytes)", golden.len()))
}

// ---------------------------------------------------------------- determinism

fn determinism() -> Check {
    use common::*;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (annotated, pool) = synth(&tmp.path().join("data"), 500);
    let runs = [tmp.path().join("a"), tmp.path().join("b")];
    let stages: [&[&str]; 4] = [
        &["train", "--strategy", "specific", "--strategy", "multilabel", "--max-epochs", "20"],
        &["predict", "--strategy", "specific", "--strategy", "multilabel"],
        &["evaluate", "--strategy", "specific", "--strategy", "multilabel"],
        &["split"],
    ];
    for run in &runs {
        prepare(run, &annotated, Some(&pool));
        for stage in stages {
            ok(run, stage);
        }
    }
    let (a, b) = (artifacts(&runs[0]), artifacts(&runs[1]));
    ensure(a.len() == b.len(), || "runs produced different file sets".into())?;
    for ((name, x), (other, y)) in a.iter().zip(&b) {
        ensure(name == other && x == y, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} artifacts byte-identical across two runs", a.len()))
}

fn main() {
    let started = Instant::now();
    let synthetic = synthetic_pipeline();
    let mut results: Vec<(&str, Check)> = vec![
        ("consolidation oracle", consolidation_oracle()),
        ("label-filter truth table", label_truth_table()),
        ("stratification quality", stratification_quality()),
        ("metric oracles", metric_oracles()),
        ("gradient check", gradient_check()),
    ];
    match &synthetic {
        Ok(s) => {
            results.push(("synthetic end-to-end", synthetic_end_to_end(s)));
            results.push(("hierarchical invariant", hierarchical_invariant(s)));
        }
        Err(e) => {
            results.push(("synthetic end-to-end", Err(format!("pipeline setup: {e}"))));
            results.push(("hierarchical invariant", Err(format!("pipeline setup: {e}"))));
        }
    }
    results.push(("LLM harness pattern", llm_pattern()));
    results.push(("determinism", determinism()));

    let mut failed = 0;
    for (name, result) in &results {
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason}");
            }
        }
    }
    println!("{} passed, {failed} failed in {:.1?}", results.len() - failed, started.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
