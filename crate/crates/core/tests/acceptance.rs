//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and fails
//! if any criterion fails. Run with
//! `cargo test -p difftox-core --test acceptance -- --nocapture`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use difftox_core::comparators::{bleu, detection_metrics, kendall_tau_topk, AggregateMetrics, DetectionMetrics, Scene, ThresholdMetrics};
use difftox_core::localizer::{classify_outcome, ComparisonSummary, RunStatus};
use difftox_core::mock::{generate_scenarios, FaultKind, FaultScenario, MockModel};
use difftox_core::optimizer::{detect_ir_version_change, OptimizeMode, ValidationResult};
use difftox_core::orchestrator::{
    load_dataset, parse_run_config, BackendConfig, Dataset, IngestionWarning, ModelArtifact, RunConfig,
};
use difftox_core::pipeline::{build_backends, resolve_registry, run_model, LocalizePolicy, ModelResult, RunOptions};
use difftox_core::reporting::{
    emit_fault_report, emit_run_report, new_run_id, read_fault_report, read_run_report, BackendIds,
    FaultReportDoc, OptimizationSummary, RunReport, SCHEMA_VERSION, TOOL_VERSION,
};
use difftox_core::runner::{parse_warning, plan_chunks, WarningKind};
use difftox_core::types::{
    BBox, ChannelOrder, ComparatorConfig, ComparisonRecord, Detection, Evidence, ImagePreprocess,
    InferenceRecord, ModelDescriptor, ModelSource, OptStatus, OptimizationResult, Outcome, OutcomeClass,
    PassCategory, PassOutcome, Payload, PreprocessConfig, ResizePolicy, SweepIncomplete, Task, Tensor,
    TensorLayout, TextPreprocess, Trigger, TruncationPolicy, WarningFlag,
};

const KENDALL_TOL: f64 = 1e-12;
const KENDALL_BUDGET: Duration = Duration::from_secs(10);
const KENDALL_RANDOM_PAIRS: usize = 1000;
const DETECTION_TOL: f64 = 1e-9;
const DETECTION_SCENES: usize = 200;
const THRESHOLDS: [f64; 3] = [0.5, 0.75, 0.9];
const BLEU_TOL: f64 = 1e-6;
const SOUNDNESS_SCENARIOS: usize = 50;
const SOUNDNESS_BUDGET: Duration = Duration::from_secs(60);
const CHUNK_DATASET: usize = 97;
const CHUNK_COUNTS: [usize; 4] = [1, 2, 7, 97];
const E2E_INPUTS: usize = 50;
const REFERENCE_PASS_COUNT: usize = 47;
const ROUNDTRIP_REPORTS: usize = 100;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// 1. Kendall tau against brute-force pair counting

fn sign(a: usize, b: usize) -> i64 {
    (a as i64 - b as i64).signum()
}

/// Tau-b by enumerating every label pair of the union; absent labels rank K+1.
fn kendall_oracle(reference: &[u32], test: &[u32], k: usize) -> Option<f64> {
    let r = &reference[..reference.len().min(k)];
    let t = &test[..test.len().min(k)];
    let mut union: Vec<u32> = r.to_vec();
    for l in t {
        if !union.contains(l) {
            union.push(*l);
        }
    }
    let rank = |list: &[u32], l: u32| list.iter().position(|&x| x == l).map_or(k + 1, |p| p + 1);
    let (mut concordant, mut discordant, mut n0, mut n1, mut n2) = (0i64, 0i64, 0i64, 0i64, 0i64);
    for i in 0..union.len() {
        for j in i + 1..union.len() {
            let dx = sign(rank(r, union[i]), rank(r, union[j]));
            let dy = sign(rank(t, union[i]), rank(t, union[j]));
            n0 += 1;
            if dx == 0 {
                n1 += 1;
            }
            if dy == 0 {
                n2 += 1;
            }
            match dx * dy {
                1 => concordant += 1,
                -1 => discordant += 1,
                _ => {}
            }
        }
    }
    let denom = (((n0 - n1) * (n0 - n2)) as f64).sqrt();
    (denom > 0.0).then(|| (concordant - discordant) as f64 / denom)
}

fn permutations(n: usize) -> Vec<Vec<u32>> {
    fn go(prefix: &mut Vec<u32>, rest: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let x = rest.remove(i);
            prefix.push(x);
            go(prefix, rest, out);
            prefix.pop();
            rest.insert(i, x);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..n as u32).collect(), &mut out);
    out
}

fn kendall_case(r: &[u32], t: &[u32], k: usize) -> Result<(), String> {
    let got = kendall_tau_topk(r, t, k);
    let rt = &r[..r.len().min(k)];
    let tt = &t[..t.len().min(k)];
    if rt == tt {
        return ensure(matches!(got, Ok(v) if v == 1.0), || format!("identity {r:?} k={k} gave {got:?}"));
    }
    match (kendall_oracle(r, t, k), got) {
        (Some(want), Ok(v)) if (want - v).abs() <= KENDALL_TOL => Ok(()),
        (None, Err(_)) => Ok(()),
        (want, got) => Err(format!("{r:?} vs {t:?} k={k}: oracle {want:?}, got {got:?}")),
    }
}

fn criterion_kendall() -> Check {
    let start = Instant::now();
    let mut cases = 0usize;
    for n in 1..=6 {
        let perms = permutations(n);
        for a in &perms {
            for b in &perms {
                // Every cutoff for n <= 5; the full list for n = 6.
                let ks: Vec<usize> = if n <= 5 { (1..=n).collect() } else { vec![n] };
                for k in ks {
                    kendall_case(a, b, k)?;
                    cases += 1;
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b656e64);
    let mut disjoint = 0;
    for i in 0..KENDALL_RANDOM_PAIRS {
        let k = rng.gen_range(1..=10usize);
        let pool: u32 = rng.gen_range(k as u32..=3 * k as u32 + 2);
        let mut labels: Vec<u32> = (0..pool).collect();
        labels.shuffle(&mut rng);
        let lr = rng.gen_range(0..=k + 2).min(labels.len());
        let r: Vec<u32> = labels[..lr].to_vec();
        let t: Vec<u32> = if i % 4 == 0 {
            // Disjoint from the reference's top-K.
            disjoint += 1;
            let mut rest: Vec<u32> = (pool..pool + 12).collect();
            rest.shuffle(&mut rng);
            rest.truncate(rng.gen_range(1..=k + 2));
            rest
        } else {
            let mut t = labels.clone();
            t.shuffle(&mut rng);
            t.truncate(rng.gen_range(0..=k + 2).min(labels.len()));
            t
        };
        if r.is_empty() && t.is_empty() {
            ensure(kendall_tau_topk(&r, &t, k).is_err(), || "empty lists must be undefined".into())?;
            continue;
        }
        kendall_case(&r, &t, k)?;
        cases += 1;
        if !r.is_empty() {
            kendall_case(&r, &r, k)?;
            cases += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < KENDALL_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{cases} cases ({disjoint} disjoint pairs) in {:.2}s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------------------
// 2. Detection metrics against a brute-force PR-curve oracle

fn oracle_iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let area = |x: &BBox| (x.x2 - x.x1) * (x.y2 - x.y1);
    let union = area(a) + area(b) - ix * iy;
    if union <= 0.0 {
        0.0
    } else {
        ix * iy / union
    }
}

struct OracleScene {
    reference: Vec<Detection>,
    test: Vec<Detection>,
}

/// Per-test-detection IoU of its match, `None` when unmatched.
fn oracle_match(s: &OracleScene, thr: f64) -> Vec<Option<f64>> {
    let mut order: Vec<usize> = (0..s.test.len()).collect();
    order.sort_by(|&i, &j| s.test[j].score.partial_cmp(&s.test[i].score).unwrap().then(i.cmp(&j)));
    let mut claimed = vec![false; s.reference.len()];
    let mut result = vec![None; s.test.len()];
    for ti in order {
        let mut best: Option<(usize, f64)> = None;
        for (ri, r) in s.reference.iter().enumerate() {
            if claimed[ri] || r.label != s.test[ti].label {
                continue;
            }
            let o = oracle_iou(&r.bbox, &s.test[ti].bbox);
            if o >= thr && best.is_none_or(|(_, b)| o > b) {
                best = Some((ri, o));
            }
        }
        if let Some((ri, o)) = best {
            claimed[ri] = true;
            result[ti] = Some(o);
        }
    }
    result
}

/// Brute-force all-point AP: each hit contributes 1/count times the best
/// precision at any cutoff at or below it in the ranking.
fn oracle_ap(hits: &[bool], count: usize) -> f64 {
    let prec_at = |cut: usize| hits[..cut].iter().filter(|h| **h).count() as f64 / cut as f64;
    let mut ap = 0.0;
    for i in 0..hits.len() {
        if hits[i] {
            let best = (i + 1..=hits.len()).map(prec_at).fold(0.0, f64::max);
            ap += best / count as f64;
        }
    }
    ap
}

fn oracle_metrics(scenes: &[OracleScene]) -> DetectionMetrics {
    let total_ref: usize = scenes.iter().map(|s| s.reference.len()).sum();
    let total_test: usize = scenes.iter().map(|s| s.test.len()).sum();
    let mut per_threshold = Vec::new();
    for &thr in &THRESHOLDS {
        if total_ref == 0 {
            per_threshold.push(ThresholdMetrics {
                threshold: thr,
                precision: None,
                recall: None,
                f1: None,
                ap: BTreeMap::new(),
                map: None,
                mean_iou: None,
            });
            continue;
        }
        let matches: Vec<Vec<Option<f64>>> = scenes.iter().map(|s| oracle_match(s, thr)).collect();
        let ious: Vec<f64> = matches.iter().flatten().filter_map(|m| *m).collect();
        let tp = ious.len() as f64;
        let precision = if total_test == 0 { 0.0 } else { tp / total_test as f64 };
        let recall = tp / total_ref as f64;
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        let classes: BTreeSet<u32> = scenes.iter().flat_map(|s| s.reference.iter().map(|d| d.label)).collect();
        let mut ap = BTreeMap::new();
        for c in classes {
            let count = scenes.iter().flat_map(|s| &s.reference).filter(|d| d.label == c).count();
            let mut ranked: Vec<(f64, usize, usize, bool)> = Vec::new();
            for (si, s) in scenes.iter().enumerate() {
                for (ti, d) in s.test.iter().enumerate() {
                    if d.label == c {
                        ranked.push((d.score, si, ti, matches[si][ti].is_some()));
                    }
                }
            }
            ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let hits: Vec<bool> = ranked.iter().map(|r| r.3).collect();
            ap.insert(c, oracle_ap(&hits, count));
        }
        let map = ap.values().sum::<f64>() / ap.len() as f64;
        let mean_iou = if ious.is_empty() { 0.0 } else { ious.iter().sum::<f64>() / tp };
        per_threshold.push(ThresholdMetrics {
            threshold: thr,
            precision: Some(precision),
            recall: Some(recall),
            f1: Some(f1),
            ap,
            map: Some(map),
            mean_iou: Some(mean_iou),
        });
    }
    let ar = if total_ref == 0 {
        None
    } else {
        Some(per_threshold.iter().map(|t| t.recall.unwrap()).sum::<f64>() / THRESHOLDS.len() as f64)
    };
    DetectionMetrics { per_threshold, ar }
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= DETECTION_TOL,
        (None, None) => true,
        _ => false,
    }
}

fn metrics_match(want: &DetectionMetrics, got: &DetectionMetrics) -> Result<(), String> {
    ensure(close_opt(want.ar, got.ar), || format!("AR {:?} vs {:?}", want.ar, got.ar))?;
    ensure(want.per_threshold.len() == got.per_threshold.len(), || "threshold count".into())?;
    for (w, g) in want.per_threshold.iter().zip(&got.per_threshold) {
        let fields = [
            ("precision", w.precision, g.precision),
            ("recall", w.recall, g.recall),
            ("f1", w.f1, g.f1),
            ("mAP", w.map, g.map),
            ("mean IoU", w.mean_iou, g.mean_iou),
        ];
        for (name, a, b) in fields {
            ensure(close_opt(a, b), || format!("{name}@{}: oracle {a:?}, got {b:?}", w.threshold))?;
        }
        ensure(w.ap.keys().eq(g.ap.keys()), || format!("AP classes {:?} vs {:?}", w.ap.keys(), g.ap.keys()))?;
        for (c, a) in &w.ap {
            let b = g.ap[c];
            ensure((a - b).abs() <= DETECTION_TOL, || format!("AP[{c}]@{}: oracle {a}, got {b}", w.threshold))?;
        }
    }
    Ok(())
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let x1 = rng.gen_range(0..14) as f64;
    let y1 = rng.gen_range(0..14) as f64;
    BBox::new(x1, y1, x1 + rng.gen_range(1..7) as f64, y1 + rng.gen_range(1..7) as f64)
}

fn random_scene(rng: &mut ChaCha8Rng) -> OracleScene {
    let score = |rng: &mut ChaCha8Rng| (rng.gen_range(1..20) as f64) * 0.05;
    let reference: Vec<Detection> = (0..rng.gen_range(0..=10))
        .map(|_| Detection { label: rng.gen_range(0..3), score: score(rng), bbox: random_box(rng) })
        .collect();
    let mut test = Vec::new();
    for r in &reference {
        if rng.gen_bool(0.75) {
            let j = |rng: &mut ChaCha8Rng| rng.gen_range(-1i32..=1) as f64;
            let (dx, dy, dw) = (j(rng), j(rng), j(rng));
            let b = BBox::new(r.bbox.x1 + dx, r.bbox.y1 + dy, (r.bbox.x2 + dx + dw).max(r.bbox.x1 + dx + 1.0), r.bbox.y2 + dy);
            let label = if rng.gen_bool(0.1) { rng.gen_range(0..3) } else { r.label };
            test.push(Detection { label, score: score(rng), bbox: b });
        }
    }
    while test.len() < 10 && rng.gen_bool(0.3) {
        test.push(Detection { label: rng.gen_range(0..3), score: score(rng), bbox: random_box(rng) });
    }
    test.shuffle(rng);
    OracleScene { reference, test }
}

fn scenes_of<'a>(ids: &'a [String], s: &'a [OracleScene]) -> Vec<Scene<'a>> {
    s.iter()
        .zip(ids)
        .map(|(s, id)| Scene { id, reference: &s.reference, test: &s.test })
        .collect()
}

fn criterion_detection() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x64657465);
    let scenes: Vec<OracleScene> = (0..DETECTION_SCENES).map(|_| random_scene(&mut rng)).collect();
    let ids: Vec<String> = (0..scenes.len()).map(|i| format!("scene{i:04}")).collect();
    for (i, s) in scenes.iter().enumerate() {
        let got = detection_metrics(&scenes_of(&ids[i..=i], std::slice::from_ref(s)), &THRESHOLDS)
            .map_err(|e| e.to_string())?;
        metrics_match(&oracle_metrics(std::slice::from_ref(s)), &got).map_err(|e| format!("scene {i}: {e}"))?;
    }
    let got = detection_metrics(&scenes_of(&ids, &scenes), &THRESHOLDS).map_err(|e| e.to_string())?;
    metrics_match(&oracle_metrics(&scenes), &got).map_err(|e| format!("dataset: {e}"))?;

    let mut identical = 0;
    for (i, s) in scenes.iter().enumerate().filter(|(_, s)| !s.reference.is_empty()) {
        let m = detection_metrics(
            &[Scene { id: &ids[i], reference: &s.reference, test: &s.reference }],
            &THRESHOLDS,
        )
        .map_err(|e| e.to_string())?;
        let ones = m.ar == Some(1.0)
            && m.per_threshold.iter().all(|t| {
                [t.precision, t.recall, t.f1, t.map, t.mean_iou].iter().all(|v| *v == Some(1.0))
                    && t.ap.values().all(|v| *v == 1.0)
            });
        ensure(ones, || format!("scene {i} against itself: {m:?}"))?;
        identical += 1;
    }
    Ok(format!("{DETECTION_SCENES} scenes + pooled dataset match; {identical} self-comparisons score 1.0"))
}

// ---------------------------------------------------------------------------
// 3. BLEU against reference values computed with nltk's clipped precision and
// brevity penalty, smoothing zero-match orders to 1 / (total + 1).

const BLEU_FIXTURES: [(&str, &str, f64); 24] = [
    ("the cat sat on the mat", "the cat sat on the mat", 1.0),
    ("the cat sat on the mat", "the cat is on the mat", 0.4204482076268573),
    ("the cat sat on the mat", "a cat sat on a mat", 0.35930411196308426),
    ("the cat sat on the mat", "the the the the the the the", 0.19205612637498934),
    ("the cat sat on the mat", "mat the on sat cat the", 0.3021375397356768),
    ("the cat sat on the mat", "the cat", 0.1353352832366127),
    ("the cat sat on the mat", "cat", 0.006737946999085467),
    ("the cat sat on the mat", "dog", 0.0056659154777004925),
    ("a quick brown fox jumps over the lazy dog", "the quick brown fox jumped over the lazy dog", 0.43167001068522526),
    ("a quick brown fox jumps over the lazy dog", "quick brown fox", 0.1353352832366127),
    ("a quick brown fox jumps over the lazy dog", "a quick brown fox jumps over the lazy dog and then sleeps", 0.7102992180127422),
    (
        "it is a guide to action which ensures that the military always obeys the commands of the party",
        "it is a guide to action that ensures that the military will forever heed party commands",
        0.4229247984636106,
    ),
    (
        "it is a guide to action which ensures that the military always obeys the commands of the party",
        "it is to insure the troops forever hearing the activity guidebook that party direct",
        0.09416540437394656,
    ),
    ("hello world", "hello there world", 0.5773502691896257),
    ("hello world", "world hello", 0.8408964152537145),
    ("one two three four five", "one two three four six", 0.668740304976422),
    ("one two three four five", "five four three two one", 0.35930411196308426),
    ("one two three four five", "one two three", 0.513417119032592),
    ("red green blue", "red green blue red green blue", 0.33437015248821106),
    ("The Model Predicts A Label", "the model predicts a label", 1.0),
    ("x y z x y z x y z", "x y z x y", 0.44932896411722156),
    ("tokens are separated by whitespace only", "tokens are separated  by   whitespace", 0.8187307530779819),
    ("alpha beta gamma delta epsilon zeta eta theta", "alpha beta gamma delta epsilon zeta eta iota", 0.8408964152537145),
    ("to be or not to be that is the question", "to be or not to be", 0.513417119032592),
];

fn criterion_bleu() -> Check {
    for (r, c, want) in BLEU_FIXTURES {
        let got = bleu(r, c, 4).map_err(|e| e.to_string())?;
        ensure((got - want).abs() <= BLEU_TOL, || format!("bleu({r:?}, {c:?}) = {got}, reference {want}"))?;
        ensure(bleu(r, r, 4).map_err(|e| e.to_string())? == 1.0, || format!("bleu(x, x) != 1 for {r:?}"))?;
        ensure(bleu(r, "", 4).map_err(|e| e.to_string())? == 0.0, || "empty candidate must score 0".into())?;
    }
    Ok(format!("{} pairs within {BLEU_TOL:e}; identity and empty-candidate exact", BLEU_FIXTURES.len()))
}

// ---------------------------------------------------------------------------
// Mock pipeline helpers

struct MockRun {
    _dir: tempfile::TempDir,
    config: RunConfig,
    dataset: Dataset,
}

fn mock_run(task: Task, scenario: FaultScenario, inputs: usize, model_seed: u64) -> MockRun {
    let dir = tempfile::tempdir().expect("tempdir");
    let model = dir.path().join("model.onnx");
    MockModel::base(model_seed).write(&model).expect("write mock model");
    let json = serde_json::json!({
        "output_dir": dir.path().join("out"),
        "dataset": { "kind": "text_file_pairs", "location": dir.path().join("unused") },
        "optimizer_backend": { "kind": "mock" },
        "runner_backend": { "kind": "mock" },
        "models": [{ "id": "mock-model", "task": task.as_str(), "opset": 13, "source": { "path": model } }],
    });
    let mut config = parse_run_config(&json.to_string(), true).expect("mock config");
    config.optimizer_backend = BackendConfig::Mock { scenario };
    let dataset = Dataset::from_texts((0..inputs).map(|i| (format!("in{i:04}"), format!("input number {i}"))));
    MockRun { _dir: dir, config, dataset }
}

fn options(config: &RunConfig, chunks: usize, localize: LocalizePolicy) -> RunOptions {
    let mut o = RunOptions::from_config(config);
    o.chunks = chunks;
    o.workers = 4;
    o.localize = localize;
    o.mode = OptimizeMode::DefaultBundle;
    o
}

fn execute(run: &MockRun, chunks: usize, localize: LocalizePolicy) -> Result<ModelResult, String> {
    let backends = build_backends(&run.config, Path::new("/nonexistent")).map_err(|e| e.to_string())?;
    let registry = resolve_registry(&run.config, backends.optimizer.as_ref()).map_err(|e| e.to_string())?;
    let opts = options(&run.config, chunks, localize);
    run_model(&run.config, &backends, &registry, &run.config.models[0], &run.dataset, &opts).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// 4. Localizer soundness over generated scenarios

fn criterion_soundness() -> Check {
    let start = Instant::now();
    let scenarios = generate_scenarios(SOUNDNESS_SCENARIOS, 0x736f756e);
    let mut kinds = BTreeSet::new();
    let (mut multi, mut unstable) = (0, 0);
    for (i, scenario) in scenarios.iter().enumerate() {
        kinds.extend(scenario.pass_faults.values().map(FaultKind::name));
        multi += usize::from(scenario.pass_faults.len() > 1);
        unstable += usize::from(!scenario.expected_exclusions().is_empty());
        let task = Task::ALL[i % Task::ALL.len()];
        let run = mock_run(task, scenario.clone(), 60, i as u64);
        let result = execute(&run, 3, LocalizePolicy::Always).map_err(|e| format!("scenario {i}: {e}"))?;
        let (_, doc) = result.fault_report.ok_or_else(|| format!("scenario {i}: no fault report"))?;
        let fault = &doc.fault;
        ensure(fault.incomplete.is_none(), || format!("scenario {i}: sweep incomplete"))?;
        let attributed: BTreeSet<String> = fault.attributed_passes.iter().cloned().collect();
        let excluded: BTreeSet<String> = fault.excluded_passes.iter().cloned().collect();
        ensure(attributed == scenario.expected_attributions(), || {
            format!("scenario {i} ({task}): attributed {attributed:?}, injected {:?}", scenario.pass_faults)
        })?;
        ensure(excluded == scenario.expected_exclusions(), || {
            format!("scenario {i}: excluded {excluded:?}, injected {:?}", scenario.pass_faults)
        })?;
        ensure(doc.table.len() == scenario.registry_size, || format!("scenario {i}: table rows {}", doc.table.len()))?;
    }
    ensure(kinds.len() == FaultKind::NAMES.len(), || format!("fault kinds covered: {kinds:?}"))?;
    ensure(multi > 0 && unstable > 0, || format!("multi-fault {multi}, unstable {unstable}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < SOUNDNESS_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{SOUNDNESS_SCENARIOS}/{SOUNDNESS_SCENARIOS} scenarios exact ({multi} multi-fault, {unstable} with unstable injections) in {:.1}s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 5. Chunk invariance

fn criterion_chunks() -> Check {
    for n in CHUNK_COUNTS {
        let plan = plan_chunks(CHUNK_DATASET, n).map_err(|e| e.to_string())?;
        let base = CHUNK_DATASET / n;
        let sizes: Vec<usize> = plan.iter().map(|c| c.end - c.start).collect();
        let contiguous = plan.windows(2).all(|w| w[0].end == w[1].start);
        ensure(
            plan.len() == n
                && contiguous
                && plan[0].start == 0
                && plan[n - 1].end == CHUNK_DATASET
                && sizes[..n - 1].iter().all(|s| *s == base)
                && sizes[n - 1] == base + CHUNK_DATASET % n,
            || format!("N={n}: chunk sizes {sizes:?}"),
        )?;
    }
    let scenario = FaultScenario::with_faults([
        ("P1", FaultKind::PerturbOutputs { magnitude: 0.3, fraction: 0.5 }),
        ("P2", FaultKind::InjectWarning),
        ("P3", FaultKind::RunCrash),
    ]);
    let mut first: Option<(usize, ModelResult)> = None;
    let mut diverged = 0;
    for n in CHUNK_COUNTS {
        let run = mock_run(Task::Classification, scenario.clone(), CHUNK_DATASET, 7);
        let r = execute(&run, n, LocalizePolicy::OnFault)?;
        let Some((n0, base)) = &first else {
            diverged = r.run_report.comparisons.iter().filter(|c| c.diverged).count();
            first = Some((n, r));
            continue;
        };
        let (a, b) = (&base.run_report, &r.run_report);
        let same = a.original_records == b.original_records
            && a.optimized_records == b.optimized_records
            && a.comparisons == b.comparisons
            && a.aggregate == b.aggregate
            && a.outcome == b.outcome
            && a.evidence == b.evidence
            && a.warnings == b.warnings;
        ensure(same, || format!("run report differs between N={n0} and N={n}"))?;
        let fa = base.fault_report.as_ref().map(|(_, d)| (&d.fault.per_pass, &d.table));
        let fb = r.fault_report.as_ref().map(|(_, d)| (&d.fault.per_pass, &d.table));
        ensure(fa == fb, || format!("fault report differs between N={n0} and N={n}"))?;
    }
    ensure(diverged > 0, || "fixture produced no divergence".into())?;
    Ok(format!("records, metrics and sweep identical for N in {CHUNK_COUNTS:?} ({diverged} diverged inputs)"))
}

// ---------------------------------------------------------------------------
// 6. Outcome taxonomy

fn opt_result(status: OptStatus) -> OptimizationResult {
    OptimizationResult {
        status,
        optimized_model: (status == OptStatus::Ok).then(|| ModelArtifact {
            path: PathBuf::from("optimized.onnx"),
            byte_len: 10,
            digest: "0".repeat(64),
        }),
        diagnostics: if status == OptStatus::Crashed { "Segmentation fault".into() } else { String::new() },
        applied_passes: vec!["fuse_bn_into_conv".into()],
        ir_version_before: Some(8),
        ir_version_after: Some(8),
    }
}

fn criterion_taxonomy() -> Check {
    let ok = opt_result(OptStatus::Ok);
    let crashed = opt_result(OptStatus::Crashed);
    let valid = ValidationResult::Valid;
    let bad = ValidationResult::Malformed(vec!["Nodes in a graph must be topologically sorted".into()]);
    let done = RunStatus::Completed;
    let run_crash = RunStatus::Crashed("Incompatible dimensions".into());
    let same = ComparisonSummary { inputs: 5, diverged_inputs: 0 };
    let differ = ComparisonSummary { inputs: 5, diverged_inputs: 2 };
    let none = BTreeSet::new();
    let unused = BTreeSet::from([WarningFlag::UnusedInitializer]);
    let both = BTreeSet::from([WarningFlag::UnusedInitializer, WarningFlag::IrVersionChange]);

    type Case<'a> = (
        &'a str,
        &'a OptimizationResult,
        Option<&'a ValidationResult>,
        Option<&'a RunStatus>,
        Option<&'a ComparisonSummary>,
        &'a BTreeSet<WarningFlag>,
        OutcomeClass,
        OutcomeClass,
        usize,
    );
    let cases: Vec<Case> = vec![
        ("optimizer crash", &crashed, None, None, None, &both, OutcomeClass::OptCrash, OutcomeClass::OptCrash, 0),
        ("malformed", &ok, Some(&bad), None, None, &unused, OutcomeClass::Malformed, OutcomeClass::Malformed, 0),
        ("run crash", &ok, Some(&valid), Some(&run_crash), None, &unused, OutcomeClass::RunCrash, OutcomeClass::RunCrash, 0),
        ("divergent", &ok, Some(&valid), Some(&done), Some(&differ), &none, OutcomeClass::Divergent, OutcomeClass::Divergent, 0),
        ("divergent+flags", &ok, Some(&valid), Some(&done), Some(&differ), &both, OutcomeClass::Divergent, OutcomeClass::Divergent, 2),
        ("warning only", &ok, Some(&valid), Some(&done), Some(&same), &unused, OutcomeClass::Clean, OutcomeClass::Warning, 1),
        ("clean", &ok, Some(&valid), Some(&done), Some(&same), &none, OutcomeClass::Clean, OutcomeClass::Clean, 0),
    ];
    for (name, o, v, r, c, f, class, effective, nflags) in &cases {
        let out = classify_outcome(o, *v, *r, *c, f).map_err(|e| format!("{name}: {e}"))?;
        ensure(out.class == *class && out.effective_class() == *effective && out.flags.len() == *nflags, || {
            format!("{name}: got {out:?}")
        })?;
    }
    let inconsistent = [
        classify_outcome(&crashed, Some(&valid), None, None, &none),
        classify_outcome(&ok, None, Some(&done), Some(&same), &none),
        classify_outcome(&ok, Some(&bad), Some(&done), None, &none),
        classify_outcome(&ok, Some(&valid), Some(&run_crash), Some(&same), &none),
        classify_outcome(&ok, Some(&valid), Some(&done), None, &none),
    ];
    ensure(inconsistent.iter().all(Result::is_err), || "inconsistent stage sets must be rejected".into())?;

    // Optimizer-time and run-time crashes end to end.
    let opt_time = execute(&mock_run(Task::Classification, FaultScenario::with_faults([("P1", FaultKind::OptCrash)]), 8, 1), 1, LocalizePolicy::Never)?;
    let run_time = execute(&mock_run(Task::Classification, FaultScenario::with_faults([("P1", FaultKind::RunCrash)]), 8, 1), 1, LocalizePolicy::Never)?;
    let (a, b) = (&opt_time.run_report, &run_time.run_report);
    ensure(
        a.outcome.class == OutcomeClass::OptCrash
            && a.optimization.status == OptStatus::Crashed
            && a.validation.is_none()
            && a.evidence.diagnostics.as_deref().is_some_and(|d| d.contains("P1")),
        || format!("optimizer-time crash report: {:?} {:?}", a.outcome, a.optimization.status),
    )?;
    ensure(
        b.outcome.class == OutcomeClass::RunCrash
            && b.optimization.status == OptStatus::Ok
            && b.validation == Some(ValidationResult::Valid)
            && b.optimized_records.is_empty(),
        || format!("run-time crash report: {:?} {:?}", b.outcome, b.validation),
    )?;
    Ok(format!("{} constructed cases, {} inconsistent sets rejected, OPT_CRASH vs RUN_CRASH end to end", cases.len(), inconsistent.len()))
}

// ---------------------------------------------------------------------------
// 7. IR-version change

fn version_warnings(report: &RunReport) -> usize {
    report.warnings.iter().filter(|w| w.starts_with("ir_version changed")).count()
}

fn criterion_ir_version() -> Check {
    let single = execute(&mock_run(Task::Classification, FaultScenario::with_faults([("P1", FaultKind::VersionBump)]), 12, 3), 2, LocalizePolicy::Never)?;
    let r = &single.run_report;
    let change = detect_ir_version_change(&OptimizationResult {
        status: r.optimization.status,
        optimized_model: None,
        diagnostics: String::new(),
        applied_passes: r.optimization.applied_passes.clone(),
        ir_version_before: r.optimization.ir_version_before,
        ir_version_after: r.optimization.ir_version_after,
    });
    ensure(
        r.optimization.ir_version_before == Some(3) && r.optimization.ir_version_after == Some(4),
        || format!("versions {:?} -> {:?}", r.optimization.ir_version_before, r.optimization.ir_version_after),
    )?;
    ensure(change.is_some_and(|c| c.before == 3 && c.after == 4), || format!("detector gave {change:?}"))?;
    ensure(
        version_warnings(r) == 1
            && r.outcome.flags == BTreeSet::from([WarningFlag::IrVersionChange])
            && r.effective_outcome == OutcomeClass::Warning,
        || format!("warnings {:?}, outcome {:?}", r.warnings, r.outcome),
    )?;
    let double = execute(
        &mock_run(Task::Classification, FaultScenario::with_faults([("P1", FaultKind::VersionBump), ("P2", FaultKind::VersionBump)]), 12, 3),
        1,
        LocalizePolicy::Never,
    )?;
    ensure(version_warnings(&double.run_report) == 1, || format!("two bumping passes: {:?}", double.run_report.warnings))?;
    let clean = execute(&mock_run(Task::Classification, FaultScenario::default(), 12, 3), 1, LocalizePolicy::Never)?;
    ensure(version_warnings(&clean.run_report) == 0 && clean.is_clean(), || "clean bundle raised a version warning".into())?;
    Ok("3 -> 4 bump yields exactly one VersionChangeWarning; unchanged version yields none".into())
}

// ---------------------------------------------------------------------------
// 8. Warning parsing

fn criterion_warning_parse() -> Check {
    let cases = [
        ("Removing initializer `INITIALIZER_ID'. It is not used by any node and should be removed from the model.", "INITIALIZER_ID"),
        (
            "[W:onnxruntime:, graph.cc:4885 CleanUnusedInitializersAndNodeArgs] Removing initializer 'conv1.weight_dup'. It is not used by any node and should be removed from the model.",
            "conv1.weight_dup",
        ),
    ];
    for (raw, id) in cases {
        let p = parse_warning(Some("img_0001"), raw);
        ensure(
            p.kind == WarningKind::UnusedInitializer
                && p.subject.as_deref() == Some(id)
                && p.raw == raw
                && p.input_id.as_deref() == Some("img_0001"),
            || format!("{raw:?} parsed as {p:?}"),
        )?;
    }
    let other = parse_warning(None, "Some nodes were not assigned to the preferred execution providers");
    ensure(other.kind == WarningKind::Other && other.subject.is_none(), || format!("{other:?}"))?;
    Ok("verbatim message -> UNUSED_INITIALIZER with id extracted".into())
}

// ---------------------------------------------------------------------------
// 9. Real-backend smoke test

const BUILD_MODEL: &str = r#"
import sys
import numpy as np
import onnx
from onnx import helper, numpy_helper, TensorProto
rng = np.random.RandomState(0)
def init(name, arr):
    return numpy_helper.from_array(arr.astype(np.float32), name)
inits = [
    init("w", rng.randn(8, 3, 3, 3) * 0.5),
    init("b", rng.randn(8) * 0.1),
    init("scale", 1.0 + rng.rand(8)),
    init("bias", rng.randn(8) * 0.1),
    init("mean", rng.randn(8) * 0.1),
    init("var", 0.5 + rng.rand(8)),
    init("fc_w", rng.randn(10, 8)),
    init("fc_b", rng.randn(10) * 0.1),
    init("unused_weight", rng.randn(4)),
]
nodes = [
    helper.make_node("Conv", ["x", "w", "b"], ["c"], pads=[1, 1, 1, 1]),
    helper.make_node("BatchNormalization", ["c", "scale", "bias", "mean", "var"], ["bn"]),
    helper.make_node("Relu", ["bn"], ["r"]),
    helper.make_node("Identity", ["r"], ["r2"]),
    helper.make_node("GlobalAveragePool", ["r2"], ["p"]),
    helper.make_node("Flatten", ["p"], ["f"], axis=1),
    helper.make_node("Gemm", ["f", "fc_w", "fc_b"], ["logits"], transB=1),
]
graph = helper.make_graph(nodes, "tiny_cnn",
    [helper.make_tensor_value_info("x", TensorProto.FLOAT, [1, 3, 16, 16])],
    [helper.make_tensor_value_info("logits", TensorProto.FLOAT, [1, 10])], inits)
model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])
model.ir_version = 8
onnx.checker.check_model(model)
onnx.save(model, sys.argv[1])
"#;

fn real_backends_available() -> bool {
    Command::new("python3")
        .args(["-c", "import onnx, onnxoptimizer, onnxruntime, numpy"])
        .output()
        .is_ok_and(|o| o.status.success())
}

fn criterion_end_to_end() -> Verdict {
    if !real_backends_available() {
        return Verdict::Skip("python3 with onnx, onnxoptimizer and onnxruntime not available".into());
    }
    match end_to_end() {
        Ok(msg) => Verdict::Pass(msg),
        Err(msg) => Verdict::Fail(msg),
    }
}

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model = dir.path().join("tiny_cnn.onnx");
    let script = dir.path().join("build_model.py");
    std::fs::write(&script, BUILD_MODEL).map_err(|e| e.to_string())?;
    let out = Command::new("python3").arg(&script).arg(&model).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("model build failed: {}", String::from_utf8_lossy(&out.stderr)))?;

    let images = dir.path().join("images");
    std::fs::create_dir_all(&images).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x65326520);
    for i in 0..E2E_INPUTS {
        let img = image::RgbImage::from_fn(20, 20, |_, _| image::Rgb([rng.gen(), rng.gen(), rng.gen()]));
        img.save(images.join(format!("img{i:03}.png"))).map_err(|e| e.to_string())?;
    }
    let json = serde_json::json!({
        "output_dir": dir.path().join("out"),
        "chunks": 2,
        "dataset": { "kind": "image_dir", "location": images },
        "optimizer_backend": { "kind": "reference" },
        "runner_backend": { "kind": "reference" },
        "models": [{
            "id": "tiny-cnn",
            "task": "classification",
            "opset": 13,
            "source": { "path": model },
            "preprocess": { "image": { "height": 16, "width": 16 }, "output_is_logits": true },
        }],
    });
    let config = parse_run_config(&json.to_string(), true).map_err(|e| e.to_string())?;
    let mut opts = RunOptions::from_config(&config);
    opts.cache_root = dir.path().join("cache");
    opts.localize = LocalizePolicy::Always;
    let backends = build_backends(&config, &opts.cache_root).map_err(|e| e.to_string())?;
    let registry = resolve_registry(&config, backends.optimizer.as_ref()).map_err(|e| e.to_string())?;
    ensure(registry.len() == REFERENCE_PASS_COUNT, || format!("registry has {} passes", registry.len()))?;
    let dataset = load_dataset(&config.dataset).map_err(|e| e.to_string())?;
    ensure(dataset.len() >= E2E_INPUTS, || format!("dataset has {} inputs", dataset.len()))?;
    let result = run_model(&config, &backends, &registry, &config.models[0], &dataset, &opts).map_err(|e| e.to_string())?;

    let report = read_run_report(&result.run_report_path).map_err(|e| e.to_string())?;
    ensure(report == result.run_report, || "run report on disk differs from the one emitted".into())?;
    ensure(report.original_records.len() == dataset.len(), || "record count".into())?;
    ensure(report.original_records.iter().all(|r| !r.payload.is_error()), || "original model failed on some input".into())?;
    let (path, doc) = result.fault_report.ok_or("no fault report")?;
    let on_disk = read_fault_report(&path).map_err(|e| e.to_string())?;
    ensure(on_disk == doc, || "fault report on disk differs".into())?;
    ensure(doc.table.len() == REFERENCE_PASS_COUNT && doc.fault.incomplete.is_none(), || {
        format!("fault table has {} rows, incomplete {:?}", doc.table.len(), doc.fault.incomplete)
    })?;
    let attributed = if doc.fault.attributed_passes.is_empty() { "-".to_string() } else { doc.fault.attributed_passes.join(",") };
    Ok(format!(
        "{} inputs, bundle {}, {}-row pass table, attributed {attributed}",
        dataset.len(),
        report.effective_outcome,
        doc.table.len()
    ))
}

// ---------------------------------------------------------------------------
// 10. Report round-trip

const ODD_CHARS: [&str; 10] = ["a", "Z", "_", " ", "\"", "\\", "\n", "\t", "é", "≠"];

fn text(rng: &mut ChaCha8Rng) -> String {
    (0..rng.gen_range(0..12)).map(|_| *ODD_CHARS.choose(rng).unwrap()).collect()
}

fn texts(rng: &mut ChaCha8Rng) -> Vec<String> {
    (0..rng.gen_range(0..4)).map(|_| text(rng)).collect()
}

fn real(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..4) {
        0 => loop {
            let v = f64::from_bits(rng.gen());
            if v.is_finite() {
                break v;
            }
        },
        1 => rng.gen_range(-1e6..1e6),
        2 => 0.0,
        _ => rng.gen(),
    }
}

fn real32(rng: &mut ChaCha8Rng) -> f32 {
    loop {
        let v = f32::from_bits(rng.gen());
        if v.is_finite() {
            break v;
        }
    }
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    *items.choose(rng).unwrap()
}

fn outcome(rng: &mut ChaCha8Rng) -> Outcome {
    let class = pick(rng, &[OutcomeClass::Clean, OutcomeClass::OptCrash, OutcomeClass::Malformed, OutcomeClass::RunCrash, OutcomeClass::Divergent]);
    let mut flags = BTreeSet::new();
    if !class.preempts_warnings() {
        for f in [WarningFlag::UnusedInitializer, WarningFlag::IrVersionChange] {
            if rng.gen_bool(0.4) {
                flags.insert(f);
            }
        }
    }
    Outcome::new(class, flags).expect("valid outcome")
}

fn evidence(rng: &mut ChaCha8Rng) -> Evidence {
    Evidence {
        diverged_inputs: texts(rng),
        diagnostics: rng.gen_bool(0.5).then(|| text(rng)),
        validation_reasons: texts(rng),
        warnings: texts(rng),
    }
}

fn bbox(rng: &mut ChaCha8Rng) -> BBox {
    let (x, y) = (real(rng).abs() % 1e3, real(rng).abs() % 1e3);
    BBox::new(x, y, x + rng.gen::<f64>() * 50.0, y + rng.gen::<f64>() * 50.0)
}

fn payload(rng: &mut ChaCha8Rng) -> Payload {
    match rng.gen_range(0..6) {
        0 => Payload::ranked_from_scores(&(0..rng.gen_range(0..8)).map(|_| real(rng)).collect::<Vec<_>>()),
        1 => Payload::Detections {
            detections: (0..rng.gen_range(0..5))
                .map(|_| Detection { label: rng.gen_range(0..90), score: rng.gen(), bbox: bbox(rng) })
                .collect(),
        },
        2 => Payload::Text { text: text(rng) },
        3 => {
            let shape = vec![rng.gen_range(1..3), rng.gen_range(0..4)];
            let data = (0..shape[0] * shape[1]).map(|_| real(rng)).collect();
            Payload::Tensor { tensor: Tensor::new(shape, data).expect("consistent tensor") }
        }
        4 => Payload::Binary { label: rng.gen_range(0..2) },
        _ => Payload::Error { message: text(rng) },
    }
}

fn record(rng: &mut ChaCha8Rng, id: &str) -> InferenceRecord {
    InferenceRecord {
        input_id: id.to_string(),
        payload: payload(rng),
        runtime_warnings: texts(rng),
        wall_time: real(rng).abs(),
    }
}

fn opt_map<K: Ord>(rng: &mut ChaCha8Rng, keys: impl Iterator<Item = K>) -> BTreeMap<K, f64> {
    keys.map(|k| (k, real(rng))).collect()
}

fn threshold_metrics(rng: &mut ChaCha8Rng, threshold: f64) -> ThresholdMetrics {
    let mut o = || rng.gen_bool(0.8).then(|| rng.gen::<f64>());
    let (precision, recall, f1, map, mean_iou) = (o(), o(), o(), o(), o());
    let classes = rng.gen_range(0..4u32);
    ThresholdMetrics {
        threshold,
        precision,
        recall,
        f1,
        ap: opt_map(rng, (0..classes).map(|c| c * 7)),
        map,
        mean_iou,
    }
}

fn aggregate(rng: &mut ChaCha8Rng) -> AggregateMetrics {
    let inputs = rng.gen_range(0..1000);
    let diverged_inputs = rng.gen_range(0..=inputs);
    let rates = |rng: &mut ChaCha8Rng| opt_map(rng, [1usize, 5, 10].into_iter());
    match rng.gen_range(0..5) {
        0 => AggregateMetrics::Classification { inputs, diverged_inputs, divergence_rate_at_k: rates(rng), top1_change_rate: real(rng) },
        1 => AggregateMetrics::Detection {
            inputs,
            diverged_inputs,
            divergence_rate_at_k: rates(rng),
            metrics: DetectionMetrics {
                per_threshold: THRESHOLDS.iter().map(|&t| threshold_metrics(rng, t)).collect(),
                ar: rng.gen_bool(0.5).then(|| rng.gen()),
            },
        },
        2 => AggregateMetrics::TextGeneration { inputs, diverged_inputs, mean_bleu: rng.gen_bool(0.7).then(|| rng.gen()) },
        3 => AggregateMetrics::Sentiment { inputs, diverged_inputs, diff_rate: real(rng) },
        _ => AggregateMetrics::QuestionAnswering { inputs, diverged_inputs, max_abs_diff: real(rng).abs() },
    }
}

fn descriptor(rng: &mut ChaCha8Rng, id: &str) -> ModelDescriptor {
    let task = pick(rng, &Task::ALL);
    ModelDescriptor {
        id: id.into(),
        task,
        opset: rng.gen_range(7..21),
        source: if rng.gen_bool(0.5) {
            ModelSource::Path(PathBuf::from(format!("models/{}.onnx", text(rng))))
        } else {
            ModelSource::Hub { name: text(rng), opset: rng.gen_bool(0.5).then(|| rng.gen_range(7..21)) }
        },
        checksum: rng.gen_bool(0.5).then(|| format!("{:016x}", rng.gen::<u64>()).repeat(4)),
        preprocess: PreprocessConfig {
            image: rng.gen_bool(0.5).then(|| ImagePreprocess {
                height: rng.gen_range(1..512),
                width: rng.gen_range(1..512),
                channel_order: pick(rng, &[ChannelOrder::Rgb, ChannelOrder::Bgr]),
                mean: (0..3).map(|_| real32(rng)).collect(),
                std: (0..3).map(|_| real32(rng)).collect(),
                layout: pick(rng, &[TensorLayout::Nchw, TensorLayout::Nhwc]),
                resize: pick(rng, &[ResizePolicy::Stretch, ResizePolicy::ShorterSideCrop]),
                pixel_scale: real32(rng),
            }),
            text: rng.gen_bool(0.5).then(|| TextPreprocess {
                tokenizer: text(rng),
                max_seq_len: rng.gen_range(1..4096),
                truncation: pick(rng, &[TruncationPolicy::Head, TruncationPolicy::Tail]),
            }),
            output_is_logits: rng.gen(),
            max_new_tokens: rng.gen_range(1..256),
        },
        comparator_config: rng.gen_bool(0.5).then(|| ComparatorConfig {
            top_k_values: vec![1, rng.gen_range(2..6), rng.gen_range(6..20)],
            iou_thresholds: vec![0.5, 0.75, 0.9],
            bleu_max_n: rng.gen_range(1..6),
            tensor_abs_tol: real(rng).abs(),
            tensor_rel_tol: real(rng).abs(),
        }),
    }
}

fn mode(rng: &mut ChaCha8Rng) -> OptimizeMode {
    if rng.gen_bool(0.5) {
        OptimizeMode::DefaultBundle
    } else {
        OptimizeMode::PassList(texts(rng))
    }
}

fn random_run_report(rng: &mut ChaCha8Rng, i: usize) -> RunReport {
    let ids: Vec<String> = (0..rng.gen_range(0..6)).map(|j| format!("input-{j}-{}", text(rng))).collect();
    let model_id = format!("model-{i}");
    RunReport {
        schema_version: SCHEMA_VERSION.into(),
        tool_version: TOOL_VERSION.into(),
        run_id: new_run_id(&model_id),
        model: descriptor(rng, &model_id),
        backends: BackendIds { optimizer: text(rng), runner: text(rng) },
        outcome: outcome(rng),
        effective_outcome: pick(rng, &[OutcomeClass::Clean, OutcomeClass::Warning, OutcomeClass::Divergent]),
        evidence: evidence(rng),
        optimization: OptimizationSummary {
            mode: mode(rng),
            status: pick(rng, &[OptStatus::Ok, OptStatus::Crashed]),
            applied_passes: texts(rng),
            diagnostics: text(rng),
            ir_version_before: rng.gen_bool(0.7).then(|| rng.gen()),
            ir_version_after: rng.gen_bool(0.7).then(|| rng.gen()),
        },
        validation: match rng.gen_range(0..3) {
            0 => None,
            1 => Some(ValidationResult::Valid),
            _ => Some(ValidationResult::Malformed(texts(rng))),
        },
        original_records: ids.iter().map(|id| record(rng, id)).collect(),
        optimized_records: ids.iter().map(|id| record(rng, id)).collect(),
        comparisons: ids
            .iter()
            .map(|id| ComparisonRecord {
                input_id: id.clone(),
                metrics: (0..rng.gen_range(0..4)).map(|k| (format!("tau@{k}"), real(rng))).collect(),
                diverged: rng.gen(),
            })
            .collect(),
        aggregate: rng.gen_bool(0.8).then(|| aggregate(rng)),
        warnings: texts(rng),
        original_session_warnings: texts(rng),
        optimized_session_warnings: texts(rng),
        ingestion_warnings: (0..rng.gen_range(0..3)).map(|_| IngestionWarning { entry: text(rng), reason: text(rng) }).collect(),
    }
}

fn random_fault_report(rng: &mut ChaCha8Rng, i: usize) -> FaultReportDoc {
    let size = rng.gen_range(1..50);
    let names: Vec<String> = (0..size).map(|p| format!("pass_{p}_{}", rng.gen::<u16>())).collect();
    let mut per_pass = BTreeMap::new();
    let (mut attributed, mut excluded) = (Vec::new(), Vec::new());
    for name in &names {
        let p = PassOutcome {
            category: pick(rng, &[PassCategory::Fuse, PassCategory::Eliminate, PassCategory::Rewrite, PassCategory::Other]),
            known_unstable: rng.gen_bool(0.1),
            outcome: outcome(rng),
            evidence: evidence(rng),
        };
        if !p.outcome.is_clean() {
            if p.known_unstable {
                excluded.push(name.clone());
            } else {
                attributed.push(name.clone());
            }
        }
        per_pass.insert(name.clone(), p);
    }
    let incomplete = rng.gen_bool(0.2).then(|| SweepIncomplete {
        failed_pass_index: rng.gen_range(0..size),
        failed_pass: names[0].clone(),
        reason: text(rng),
    });
    let model_id = format!("model-{i}");
    let fault = difftox_core::types::FaultReport {
        model_id: model_id.clone(),
        trigger: Trigger { outcome: outcome(rng), evidence: evidence(rng) },
        per_pass,
        attributed_passes: attributed,
        excluded_passes: excluded,
        incomplete,
    };
    let mut order = names.clone();
    order.shuffle(rng);
    order.truncate(rng.gen_range(0..=size));
    FaultReportDoc::new(&new_run_id(&model_id), fault, &order).expect("consistent fault report")
}

fn criterion_roundtrip() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x726f756e);
    for i in 0..ROUNDTRIP_REPORTS {
        let run = random_run_report(&mut rng, i);
        let path = emit_run_report(dir.path(), &run).map_err(|e| e.to_string())?;
        let back = read_run_report(&path).map_err(|e| format!("run report {i}: {e}"))?;
        ensure(back == run, || format!("run report {i} changed in round trip"))?;

        let fault = random_fault_report(&mut rng, i);
        let path = emit_fault_report(dir.path(), &fault).map_err(|e| e.to_string())?;
        let back = read_fault_report(&path).map_err(|e| format!("fault report {i}: {e}"))?;
        ensure(back == fault, || format!("fault report {i} changed in round trip"))?;
    }
    Ok(format!("{ROUNDTRIP_REPORTS} run reports and {ROUNDTRIP_REPORTS} fault reports identical after emit + parse"))
}

// ---------------------------------------------------------------------------

fn verdict(check: Check) -> Verdict {
    match check {
        Ok(m) => Verdict::Pass(m),
        Err(m) => Verdict::Fail(m),
    }
}

#[test]
fn acceptance() {
    type Criterion = (&'static str, fn() -> Verdict);
    let criteria: Vec<Criterion> = vec![
        ("kendall tau matches brute-force oracle", || verdict(criterion_kendall())),
        ("detection metrics match PR-curve oracle", || verdict(criterion_detection())),
        ("bleu matches reference implementation", || verdict(criterion_bleu())),
        ("localizer soundness on mock scenarios", || verdict(criterion_soundness())),
        ("chunk invariance", || verdict(criterion_chunks())),
        ("outcome taxonomy", || verdict(criterion_taxonomy())),
        ("ir version change warning", || verdict(criterion_ir_version())),
        ("unused initializer warning parsing", || verdict(criterion_warning_parse())),
        ("end-to-end with real backends", criterion_end_to_end),
        ("report round trip", || verdict(criterion_roundtrip())),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        match run() {
            Verdict::Pass(m) => println!("[{n:>2}] PASS {name}: {m}"),
            Verdict::Skip(m) => println!("[{n:>2}] SKIP {name}: {m}"),
            Verdict::Fail(m) => {
                println!("[{n:>2}] FAIL {name}: {m}");
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
