//! Synthetic optimizer and runner with injectable per-pass faults.
//!
//! Mock "models" are JSON documents ([`MockModel`]) holding a tiny graph plus
//! the accumulated effects of the passes applied to them. The mock runner
//! derives every payload from `(seed, input id)` and then applies the
//! recorded effects, so outputs are independent of chunking and ordering.
//! Any non-JSON file is accepted as a clean base model seeded from its digest.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::optimizer::{
    BackendRun, OptimizerBackend, OptimizerError, PassListing, PassRequest, PassRegistry,
    ValidationResult,
};
use crate::orchestrator::{ModelArtifact, RawInput};
use crate::runner::{BatchOutput, RunnerBackend, RunnerError};
use crate::types::{BBox, Detection, InferenceRecord, Payload, PassCategory, PreprocessConfig, Task, Tensor};

pub const MOCK_FORMAT: &str = "difftox-mock";
pub const DEFAULT_REGISTRY_SIZE: usize = 47;
/// Format version of freshly created mock models.
pub const BASE_IR_VERSION: i64 = 3;

/// Number of labels in synthetic classification outputs.
const LABELS: usize = 20;
/// Score gap between consecutive ranks; perturbations larger than this flip ranks.
const RANK_GAP: f64 = 0.06;
const IMAGE_W: f64 = 640.0;
const IMAGE_H: f64 = 480.0;
const VOCAB: &[&str] = &[
    "the", "a", "model", "graph", "node", "tensor", "layer", "output", "input", "value",
    "shape", "batch", "weight", "bias", "kernel", "stride", "pad", "pool", "relu", "conv",
    "gemm", "matmul", "add", "concat", "split", "slice", "gather", "reshape", "squeeze", "cast",
    "cat", "dog", "bird", "tree", "river", "house", "road", "car", "light", "sky",
    "runs", "sees", "makes", "takes", "finds", "quick", "slow", "red", "blue", "green",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum FaultKind {
    OptCrash,
    Malformed,
    RunCrash,
    PerturbOutputs { magnitude: f64, fraction: f64 },
    InjectWarning,
    VersionBump,
}

impl FaultKind {
    pub const NAMES: [&'static str; 6] = [
        "OPT_CRASH",
        "MALFORMED",
        "RUN_CRASH",
        "PERTURB_OUTPUTS",
        "INJECT_WARNING",
        "VERSION_BUMP",
    ];

    pub fn name(&self) -> &'static str {
        Self::NAMES[self.ordinal()]
    }

    fn ordinal(&self) -> usize {
        match self {
            FaultKind::OptCrash => 0,
            FaultKind::Malformed => 1,
            FaultKind::RunCrash => 2,
            FaultKind::PerturbOutputs { .. } => 3,
            FaultKind::InjectWarning => 4,
            FaultKind::VersionBump => 5,
        }
    }
}

fn default_registry_size() -> usize {
    DEFAULT_REGISTRY_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultScenario {
    #[serde(default)]
    pub pass_faults: BTreeMap<String, FaultKind>,
    #[serde(default = "default_registry_size")]
    pub registry_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for FaultScenario {
    fn default() -> Self {
        Self {
            pass_faults: BTreeMap::new(),
            registry_size: DEFAULT_REGISTRY_SIZE,
            seed: 0,
        }
    }
}

impl FaultScenario {
    pub fn with_faults<I, S>(faults: I) -> Self
    where
        I: IntoIterator<Item = (S, FaultKind)>,
        S: Into<String>,
    {
        Self {
            pass_faults: faults.into_iter().map(|(p, k)| (p.into(), k)).collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.registry_size == 0 {
            return Err("registry_size must be positive".into());
        }
        for (pass, kind) in &self.pass_faults {
            match pass_index(pass) {
                Some(i) if i < self.registry_size => {}
                _ => return Err(format!("fault on '{pass}' outside mock registry P1..P{}", self.registry_size)),
            }
            if let FaultKind::PerturbOutputs { magnitude, fraction } = kind {
                if !(*fraction > 0.0 && *fraction <= 1.0) {
                    return Err(format!("{pass}: affected fraction must lie in (0, 1], got {fraction}"));
                }
                if !(magnitude.is_finite() && *magnitude > 0.0) {
                    return Err(format!("{pass}: magnitude must be positive, got {magnitude}"));
                }
            }
        }
        Ok(())
    }

    /// Injected faults on passes that attribution must report.
    pub fn expected_attributions(&self) -> BTreeSet<String> {
        self.pass_faults
            .keys()
            .filter(|p| pass_index(p).is_some_and(|i| !is_unstable(i, self.registry_size)))
            .cloned()
            .collect()
    }

    /// Injected faults on known-unstable passes.
    pub fn expected_exclusions(&self) -> BTreeSet<String> {
        self.pass_faults
            .keys()
            .filter(|p| pass_index(p).is_some_and(|i| is_unstable(i, self.registry_size)))
            .cloned()
            .collect()
    }
}

pub fn mock_pass_name(index: usize) -> String {
    format!("P{}", index + 1)
}

/// 0-based index of `P<n>`.
fn pass_index(name: &str) -> Option<usize> {
    let n: usize = name.strip_prefix('P')?.parse().ok()?;
    (n >= 1 && name == format!("P{n}")).then(|| n - 1)
}

/// The last two synthetic passes play the role of known-unstable passes.
fn is_unstable(index: usize, size: usize) -> bool {
    size >= 3 && index + 2 >= size
}

fn mock_category(index: usize, size: usize) -> PassCategory {
    if is_unstable(index, size) {
        return PassCategory::Other;
    }
    [PassCategory::Fuse, PassCategory::Eliminate, PassCategory::Rewrite][index % 3]
}

pub fn mock_listings(size: usize) -> Vec<PassListing> {
    (0..size)
        .map(|i| PassListing {
            name: mock_pass_name(i),
            default: None,
            unstable: is_unstable(i, size),
            category: Some(mock_category(i, size)),
        })
        .collect()
}

pub fn mock_registry(size: usize) -> PassRegistry {
    PassRegistry::from_listings(mock_listings(size)).expect("mock registry is well-formed")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockNode {
    pub name: String,
    pub op: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockGraph {
    pub nodes: Vec<MockNode>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub initializers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub pass: String,
    pub magnitude: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockEffects {
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
    #[serde(default)]
    pub run_crash: Option<String>,
    #[serde(default)]
    pub unused_initializers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockModel {
    pub format: String,
    pub ir_version: i64,
    pub seed: u64,
    pub graph: MockGraph,
    #[serde(default)]
    pub effects: MockEffects,
    #[serde(default)]
    pub applied_passes: Vec<String>,
}

fn node(name: &str, op: &str, inputs: &[&str], outputs: &[&str]) -> MockNode {
    let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
    MockNode {
        name: name.into(),
        op: op.into(),
        inputs: own(inputs),
        outputs: own(outputs),
    }
}

impl MockModel {
    pub fn base(seed: u64) -> Self {
        Self {
            format: MOCK_FORMAT.into(),
            ir_version: BASE_IR_VERSION,
            seed,
            graph: MockGraph {
                nodes: vec![
                    node("conv0", "Conv", &["x", "w0"], &["h0"]),
                    node("relu0", "Relu", &["h0"], &["h1"]),
                    node("fc", "Gemm", &["h1", "w1"], &["y"]),
                ],
                inputs: vec!["x".into()],
                outputs: vec!["y".into()],
                initializers: vec!["w0".into(), "w1".into()],
            },
            effects: MockEffects::default(),
            applied_passes: Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("mock model serializes");
        v.push(b'\n');
        v
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes())
    }

    /// Parse a mock model; other files become a base model seeded from
    /// their content digest. `Err` only for a mock document that is broken.
    pub fn load(path: &Path) -> Result<Self, String> {
        let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        match serde_json::from_slice::<serde_json::Value>(bytes) {
            Ok(v) if v.get("format").and_then(|f| f.as_str()) == Some(MOCK_FORMAT) => {
                serde_json::from_value(v).map_err(|e| format!("corrupt mock model: {e}"))
            }
            _ => {
                let digest = crate::orchestrator::sha256_hex(bytes);
                let seed = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
                Ok(Self::base(seed))
            }
        }
    }

    /// Structural problems, empty when well-formed.
    pub fn problems(&self) -> Vec<String> {
        let mut reasons = Vec::new();
        let mut defined: HashSet<&str> = self
            .graph
            .inputs
            .iter()
            .chain(&self.graph.initializers)
            .map(String::as_str)
            .collect();
        let mut produced: HashSet<&str> = HashSet::new();
        for n in &self.graph.nodes {
            if n.op.is_empty() {
                reasons.push(format!("Missing required field: op_type in node '{}'", n.name));
            }
            for i in &n.inputs {
                if !defined.contains(i.as_str()) {
                    reasons.push(format!("Node '{}' input '{i}' is not defined", n.name));
                }
            }
            for o in &n.outputs {
                if !produced.insert(o.as_str()) {
                    reasons.push(format!("Multiple usage of output name '{o}' in node '{}'", n.name));
                }
                defined.insert(o.as_str());
            }
        }
        for o in &self.graph.outputs {
            if !produced.contains(o.as_str()) {
                reasons.push(format!("Graph output '{o}' is not produced by any node"));
            }
        }
        reasons
    }

    fn apply(&mut self, pass: &str, fault: Option<&FaultKind>) {
        self.applied_passes.push(pass.to_string());
        match fault {
            None | Some(FaultKind::OptCrash) => {}
            Some(FaultKind::Malformed) => {
                // fused node reuses an existing output name
                let out = self.graph.nodes[0].outputs[0].clone();
                let input = self.graph.inputs[0].clone();
                self.graph.nodes.push(MockNode {
                    name: format!("{pass}_fused"),
                    op: "FusedConv".into(),
                    inputs: vec![input],
                    outputs: vec![out],
                });
            }
            Some(FaultKind::RunCrash) => {
                self.effects.run_crash.get_or_insert_with(|| {
                    format!("Incompatible shape in node '{pass}_fused': [1,64] vs [1,32]")
                });
            }
            Some(FaultKind::PerturbOutputs { magnitude, fraction }) => {
                self.effects.perturbations.push(Perturbation {
                    pass: pass.to_string(),
                    magnitude: *magnitude,
                    fraction: *fraction,
                });
            }
            Some(FaultKind::InjectWarning) => {
                let name = format!("{pass}_dup_weight");
                if !self.graph.initializers.contains(&name) {
                    self.graph.initializers.push(name.clone());
                    self.effects.unused_initializers.push(name);
                }
            }
            Some(FaultKind::VersionBump) => {
                if self.ir_version == BASE_IR_VERSION {
                    self.ir_version = BASE_IR_VERSION + 1;
                }
            }
        }
    }
}

/// FNV-1a over the parts followed by a splitmix64 finalizer.
fn mix(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.iter().chain(std::iter::once(&0xff)) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn rng_for(parts: &[&[u8]]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(parts))
}

/// Whether a perturbation from `pass` hits input `id`.
pub fn is_affected(seed: u64, pass: &str, id: &str, fraction: f64) -> bool {
    let u = (mix(&[&seed.to_le_bytes(), pass.as_bytes(), id.as_bytes()]) >> 11) as f64 / (1u64 << 53) as f64;
    u < fraction
}

/// Unperturbed payload of the mock model for one input.
pub fn base_payload(seed: u64, id: &str, task: Task) -> Payload {
    let mut rng = rng_for(&[&seed.to_le_bytes(), id.as_bytes(), task.as_str().as_bytes()]);
    match task {
        Task::Classification => {
            let mut order: Vec<usize> = (0..LABELS).collect();
            order.shuffle(&mut rng);
            let mut scores = vec![0.0; LABELS];
            for (rank, label) in order.into_iter().enumerate() {
                scores[label] = 1.0 - RANK_GAP * rank as f64;
            }
            Payload::Tensor {
                tensor: Tensor {
                    shape: vec![1, LABELS],
                    data: scores,
                },
            }
        }
        Task::Detection => {
            let n = rng.gen_range(1..=5);
            let detections = (0..n)
                .map(|i| {
                    let w = rng.gen_range(40.0..200.0);
                    let h = rng.gen_range(40.0..200.0);
                    let x1 = rng.gen_range(0.0..IMAGE_W - w);
                    let y1 = rng.gen_range(0.0..IMAGE_H - h);
                    Detection {
                        label: rng.gen_range(0..5),
                        score: 0.95 - 0.1 * i as f64,
                        bbox: BBox::new(x1, y1, x1 + w, y1 + h),
                    }
                })
                .collect();
            Payload::Detections { detections }
        }
        Task::TextGeneration => {
            let n = rng.gen_range(8..=16);
            let words: Vec<&str> = (0..n).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())]).collect();
            Payload::Text {
                text: words.join(" "),
            }
        }
        Task::Sentiment => Payload::Binary {
            label: rng.gen_range(0..=1),
        },
        Task::QuestionAnswering => Payload::Tensor {
            tensor: Tensor {
                shape: vec![2, 8],
                data: (0..16).map(|_| rng.gen_range(-4.0..4.0)).collect(),
            },
        },
    }
}

fn perturb(payload: Payload, seed: u64, p: &Perturbation, id: &str) -> Payload {
    let mut rng = rng_for(&[&seed.to_le_bytes(), p.pass.as_bytes(), id.as_bytes(), b"perturb"]);
    let m = p.magnitude;
    match payload {
        Payload::Tensor { mut tensor } if tensor.data.len() == LABELS && tensor.shape == [1, LABELS] => {
            // boost the label currently at rank r (1..=9) past its predecessor
            let mut ranked: Vec<usize> = (0..LABELS).collect();
            ranked.sort_by(|a, b| tensor.data[*b].total_cmp(&tensor.data[*a]).then(a.cmp(b)));
            let r = rng.gen_range(1..=9);
            tensor.data[ranked[r]] += m;
            Payload::Tensor { tensor }
        }
        Payload::Tensor { mut tensor } => {
            let i = rng.gen_range(0..tensor.data.len().max(1));
            if let Some(v) = tensor.data.get_mut(i) {
                *v += m;
            }
            Payload::Tensor { tensor }
        }
        Payload::Detections { mut detections } => {
            if !detections.is_empty() {
                let i = rng.gen_range(0..detections.len());
                let b = &mut detections[i].bbox;
                let shift = m * (b.x2 - b.x1);
                b.x1 += shift;
                b.x2 += shift;
            }
            Payload::Detections { detections }
        }
        Payload::Text { text } => {
            let mut words: Vec<String> = text.split(' ').map(String::from).collect();
            let count = ((m * words.len() as f64).ceil() as usize).clamp(1, words.len());
            let start = rng.gen_range(0..words.len());
            for k in 0..count {
                let pos = (start + k) % words.len();
                let cur = VOCAB.iter().position(|w| *w == words[pos]).unwrap_or(0);
                words[pos] = VOCAB[(cur + 1 + k) % VOCAB.len()].to_string();
            }
            Payload::Text {
                text: words.join(" "),
            }
        }
        Payload::Binary { label } => Payload::Binary { label: 1 - label },
        other => other,
    }
}

/// Payload of `model` on input `id`, effects applied.
pub fn mock_payload(model: &MockModel, id: &str, task: Task) -> Payload {
    model
        .effects
        .perturbations
        .iter()
        .filter(|p| is_affected(model.seed, &p.pass, id, p.fraction))
        .fold(base_payload(model.seed, id, task), |acc, p| perturb(acc, model.seed, p, id))
}

pub fn unused_initializer_message(name: &str) -> String {
    format!("Removing initializer '{name}'. It is not used by any node and should be removed from the model.")
}

#[derive(Debug, Clone)]
pub struct MockOptimizer {
    scenario: FaultScenario,
    registry: PassRegistry,
}

impl MockOptimizer {
    pub fn new(scenario: FaultScenario) -> Self {
        let registry = mock_registry(scenario.registry_size);
        Self { scenario, registry }
    }

    pub fn scenario(&self) -> &FaultScenario {
        &self.scenario
    }
}

impl OptimizerBackend for MockOptimizer {
    fn id(&self) -> &str {
        "mock"
    }

    fn list_passes(&self) -> Result<Vec<PassListing>, OptimizerError> {
        Ok(mock_listings(self.scenario.registry_size))
    }

    fn run_optimizer(
        &self,
        input: &Path,
        output: &Path,
        request: PassRequest<'_>,
    ) -> Result<BackendRun, OptimizerError> {
        let mut model = match MockModel::load(input) {
            Ok(m) => m,
            Err(e) => {
                return Ok(BackendRun {
                    success: false,
                    diagnostics: format!("mock optimizer: cannot parse input: {e}\n"),
                })
            }
        };
        let passes = match request {
            PassRequest::Default => self.registry.default_bundle(),
            PassRequest::Passes(p) => p.to_vec(),
        };
        if let Some(p) = passes
            .iter()
            .find(|p| self.scenario.pass_faults.get(*p) == Some(&FaultKind::OptCrash))
        {
            return Ok(BackendRun {
                success: false,
                diagnostics: format!(
                    "terminate called after throwing an instance of 'std::runtime_error'\n  what():  pass {p}: Removes used value references\n"
                ),
            });
        }
        for p in &passes {
            model.apply(p, self.scenario.pass_faults.get(p));
        }
        model
            .write(output)
            .map_err(|e| OptimizerError::Io(output.to_path_buf(), e))?;
        Ok(BackendRun {
            success: true,
            diagnostics: String::new(),
        })
    }

    fn check(&self, model: &Path) -> Result<ValidationResult, OptimizerError> {
        match MockModel::load(model) {
            Ok(m) => {
                let problems = m.problems();
                Ok(if problems.is_empty() {
                    ValidationResult::Valid
                } else {
                    ValidationResult::Malformed(problems)
                })
            }
            Err(e) => Ok(ValidationResult::Malformed(vec![e])),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockRunner;

impl RunnerBackend for MockRunner {
    fn id(&self) -> &str {
        "mock"
    }

    fn run_batch(
        &self,
        model: &ModelArtifact,
        inputs: &[RawInput],
        task: Task,
        _pre: &PreprocessConfig,
    ) -> Result<BatchOutput, RunnerError> {
        let model = MockModel::load(&model.path).map_err(RunnerError::RunCrash)?;
        if let Some(diag) = &model.effects.run_crash {
            return Err(RunnerError::RunCrash(diag.clone()));
        }
        let problems = model.problems();
        if !problems.is_empty() {
            return Err(RunnerError::RunCrash(format!("model load failed: {}", problems.join("; "))));
        }
        let records = inputs
            .iter()
            .map(|i| InferenceRecord::new(&i.id, mock_payload(&model, &i.id, task)))
            .collect();
        let session_warnings = model
            .effects
            .unused_initializers
            .iter()
            .map(|n| unused_initializer_message(n))
            .collect();
        Ok(BatchOutput {
            records,
            session_warnings,
        })
    }
}

/// Optimizer and runner honouring `scenario`.
pub fn make_mock_backend(scenario: FaultScenario) -> (MockOptimizer, MockRunner) {
    (MockOptimizer::new(scenario), MockRunner)
}

fn random_fault(rng: &mut ChaCha8Rng, kind: usize) -> FaultKind {
    match kind {
        0 => FaultKind::OptCrash,
        1 => FaultKind::Malformed,
        2 => FaultKind::RunCrash,
        3 => FaultKind::PerturbOutputs {
            magnitude: (rng.gen_range(0.1..=0.5f64) * 100.0).round() / 100.0,
            fraction: *[0.5, 0.75, 1.0].choose(rng).expect("non-empty"),
        },
        4 => FaultKind::InjectWarning,
        _ => FaultKind::VersionBump,
    }
}

/// Reproducible scenarios over the default 47-pass mock registry. The first
/// six each inject one fault of a different kind; later ones inject one to
/// four faults, sometimes on known-unstable passes.
pub fn generate_scenarios(count: usize, seed: u64) -> Vec<FaultScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = DEFAULT_REGISTRY_SIZE;
    (0..count)
        .map(|i| {
            let faults = if i < FaultKind::NAMES.len() { 1 } else { rng.gen_range(1..=4) };
            let mut passes: Vec<usize> = (0..size).collect();
            passes.shuffle(&mut rng);
            let pass_faults = passes
                .into_iter()
                .take(faults)
                .map(|p| {
                    let kind = if i < FaultKind::NAMES.len() {
                        i
                    } else {
                        rng.gen_range(0..FaultKind::NAMES.len())
                    };
                    (mock_pass_name(p), random_fault(&mut rng, kind))
                })
                .collect();
            FaultScenario {
                pass_faults,
                registry_size: size,
                seed: rng.gen(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparators::kendall_tau_topk;
    use crate::optimizer::{optimize, OptimizeMode};
    use crate::orchestrator::load_local_model;
    use crate::types::OptStatus;

    fn ranked(p: &Payload) -> Vec<u32> {
        let Payload::Tensor { tensor } = p else { panic!() };
        let Payload::Ranked { labels } = Payload::ranked_from_scores(&tensor.data) else {
            panic!()
        };
        labels.into_iter().map(|l| l.label).collect()
    }

    #[test]
    fn registry_layout() {
        let r = mock_registry(47);
        assert_eq!(r.len(), 47);
        assert_eq!(r.get("P1").unwrap().category, PassCategory::Fuse);
        assert_eq!(r.get("P2").unwrap().category, PassCategory::Eliminate);
        assert_eq!(r.get("P3").unwrap().category, PassCategory::Rewrite);
        assert!(r.get("P46").unwrap().known_unstable && r.get("P47").unwrap().known_unstable);
        assert!(!r.get("P45").unwrap().known_unstable);
        assert!(r.iter().all(|p| p.in_default_bundle == p.category.bundles_by_default()));
    }

    #[test]
    fn perturbation_flips_ranks_on_every_input() {
        // brute-force check over many ids: a 0.1 boost always reorders the top 10
        let mut model = MockModel::base(11);
        model.apply(
            "P9",
            Some(&FaultKind::PerturbOutputs {
                magnitude: 0.1,
                fraction: 1.0,
            }),
        );
        for i in 0..200 {
            let id = format!("in{i}");
            let base = ranked(&base_payload(11, &id, Task::Classification));
            let test = ranked(&mock_payload(&model, &id, Task::Classification));
            assert!(kendall_tau_topk(&base, &test, 10).unwrap() < 1.0, "{id}");
        }
    }

    #[test]
    fn fraction_selects_subset() {
        let hits = (0..1000)
            .filter(|i| is_affected(5, "P2", &i.to_string(), 0.5))
            .count();
        assert!((400..600).contains(&hits), "{hits}");
        assert!((0..100).all(|i| is_affected(5, "P2", &i.to_string(), 1.0)));
    }

    #[test]
    fn scenario_generation_is_reproducible_and_covering() {
        let a = generate_scenarios(50, 7);
        assert_eq!(a, generate_scenarios(50, 7));
        let kinds: BTreeSet<&str> = a[..6]
            .iter()
            .flat_map(|s| s.pass_faults.values().map(FaultKind::name))
            .collect();
        assert_eq!(kinds.len(), 6);
        assert!(a.iter().any(|s| s.pass_faults.len() > 1));
        assert!(a.iter().all(|s| s.validate().is_ok()));
    }

    #[test]
    fn bundle_crashes_when_member_crashes() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("m.json");
        MockModel::base(1).write(&src).unwrap();
        let model = load_local_model(&src).unwrap();
        let (opt, _) = make_mock_backend(FaultScenario::with_faults([("P5", FaultKind::OptCrash)]));
        let reg = mock_registry(47);
        assert!(reg.get("P5").unwrap().in_default_bundle);
        let r = optimize(&opt, &reg, &model, &OptimizeMode::DefaultBundle, &dir.path().join("o.json")).unwrap();
        assert_eq!(r.status, OptStatus::Crashed);
    }

    #[test]
    fn artifacts_are_byte_identical_across_runs() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("m.json");
        MockModel::base(1).write(&src).unwrap();
        let scenario = FaultScenario::with_faults([
            ("P1", FaultKind::InjectWarning),
            ("P2", FaultKind::Malformed),
        ]);
        let (opt, _) = make_mock_backend(scenario);
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        opt.run_optimizer(&src, &a, PassRequest::Default).unwrap();
        opt.run_optimizer(&src, &b, PassRequest::Default).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let m = MockModel::load(&a).unwrap();
        assert!(m.problems().iter().any(|p| p.starts_with("Multiple usage of output name")));
    }

    #[test]
    fn missing_op_is_reported() {
        let mut m = MockModel::base(0);
        m.graph.nodes[1].op.clear();
        assert!(m.problems()[0].starts_with("Missing required field"));
        assert!(MockModel::base(0).problems().is_empty());
    }

    #[test]
    fn arbitrary_files_are_base_models() {
        let a = MockModel::from_bytes(b"\x08\x07onnx").unwrap();
        assert_eq!(a, MockModel::from_bytes(b"\x08\x07onnx").unwrap());
        assert_eq!(a.ir_version, BASE_IR_VERSION);
        assert!(MockModel::from_bytes(br#"{"format": "difftox-mock"}"#).is_err());
    }
}
