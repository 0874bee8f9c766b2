use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::corpus::Period;
use crate::gateway::DEFAULT_API_KEY_ENV;
use crate::normness::{NormDimension, DEFAULT_MIN_COMPARISONS};
use crate::preference::InputVariant;
use crate::seed;
use crate::simulation::FilterConfig;
use crate::synthbench::SynthConfig;

/// One community's dump files. Posts and comments may share a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSource {
    pub community: String,
    pub posts: PathBuf,
    pub comments: PathBuf,
    /// Fallback retrieval time for comments without their own.
    #[serde(default)]
    pub scrape_time: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Jsonl,
    Csv,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub scrape_time: Option<i64>,
    /// Share of comments reserved for training a preference predictor; never rewritten.
    pub train_fraction: f64,
    pub format: TableFormat,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            scrape_time: None,
            train_fraction: 0.0,
            format: TableFormat::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub likert_per_scale: usize,
    /// Comparisons per comment, both for pair sampling and placement.
    pub comparisons: usize,
    pub min_comparisons: usize,
    pub max_asks: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            likert_per_scale: 1000,
            comparisons: 30,
            min_comparisons: DEFAULT_MIN_COMPARISONS,
            max_asks: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    /// Seed comments rewritten per community and dimension.
    pub rewrite_seeds: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            rewrite_seeds: 50_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreferenceSection {
    pub variant: InputVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpmSection {
    pub bins: usize,
    pub min_count: usize,
}

impl Default for RpmSection {
    fn default() -> Self {
        RpmSection {
            bins: 10,
            min_count: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub bins: usize,
    pub s1: String,
    pub s2: String,
    pub min_user_comments: usize,
    pub alpha: f64,
    /// Ordered community pairs for user shifts; empty means every ordered pair.
    pub user_pairs: Vec<(String, String)>,
    pub series_months: u32,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        DynamicsSection {
            bins: 10,
            s1: "2019-2020".into(),
            s2: "2021-2023".into(),
            min_user_comments: 2,
            alpha: 0.05,
            user_pairs: Vec::new(),
            series_months: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    /// Use the deterministic in-tree stubs instead of any service.
    pub offline: bool,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub max_retries: usize,
    pub judge_votes: usize,
    /// File with worked examples; selects the few-shot pairwise prompt.
    pub few_shot_examples: Option<PathBuf>,
    /// USD per million input and output tokens.
    pub input_price: f64,
    pub output_price: f64,
    pub perplexity_endpoint: Option<String>,
    pub similarity_endpoint: Option<String>,
    pub preference_endpoint: Option<String>,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            offline: true,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            temperature: 0.0,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 60,
            max_in_flight: 8,
            max_retries: 5,
            judge_votes: 1,
            few_shot_examples: None,
            input_price: 30.0,
            output_price: 60.0,
            perplexity_endpoint: None,
            similarity_endpoint: None,
            preference_endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_dir: PathBuf,
    pub seed: u64,
    /// Thread cap for all parallel work; 0 uses every core.
    pub workers: usize,
    /// Communities to analyze; empty means every input community.
    pub communities: Vec<String>,
    pub dimensions: Vec<NormDimension>,
    pub inputs: Vec<InputSource>,
    pub ingest: IngestSection,
    pub sampling: SamplingSection,
    pub simulation: SimulationSection,
    pub filter: FilterConfig,
    pub preference: PreferenceSection,
    pub rpm: RpmSection,
    pub dynamics: DynamicsSection,
    pub backend: BackendSection,
    pub synthbench: SynthConfig,
    /// Directory relative paths resolve against; the config file's own.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_dir: PathBuf::from("valuescope-run"),
            seed: 42,
            workers: 0,
            communities: Vec::new(),
            dimensions: NormDimension::ALL.to_vec(),
            inputs: Vec::new(),
            ingest: IngestSection::default(),
            sampling: SamplingSection::default(),
            simulation: SimulationSection::default(),
            filter: FilterConfig::default(),
            preference: PreferenceSection::default(),
            rpm: RpmSection::default(),
            dynamics: DynamicsSection::default(),
            backend: BackendSection::default(),
            synthbench: SynthConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub run_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub bins: Option<usize>,
    pub s1: Option<String>,
    pub s2: Option<String>,
    pub variant: Option<InputVariant>,
    pub offline: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, RunError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        RunConfig::from_toml(&text, base)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.run_dir {
            // Already relative to the working directory.
            self.run_dir = std::path::absolute(d).unwrap_or_else(|_| d.clone());
        }
        if let Some(s) = o.seed {
            self.seed = s;
            self.synthbench.seed = s;
        }
        if let Some(b) = o.bins {
            self.rpm.bins = b;
            self.dynamics.bins = b;
            self.synthbench.n_bins = b;
        }
        if let Some(s) = &o.s1 {
            self.dynamics.s1 = s.clone();
        }
        if let Some(s) = &o.s2 {
            self.dynamics.s2 = s.clone();
        }
        if let Some(v) = o.variant {
            self.preference.variant = v;
        }
        if o.offline {
            self.backend.offline = true;
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.resolve(&self.run_dir)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.sampling.comparisons == 0 {
            return bad("sampling.comparisons must be positive".into());
        }
        if self.sampling.max_asks == 0 {
            return bad("sampling.max_asks must be positive".into());
        }
        if !(0.0..1.0).contains(&self.ingest.train_fraction) {
            return bad(format!(
                "ingest.train_fraction {} outside [0, 1)",
                self.ingest.train_fraction
            ));
        }
        if self.rpm.bins < 2 || self.dynamics.bins < 2 {
            return bad("bin counts must be at least 2".into());
        }
        if !(self.dynamics.alpha > 0.0 && self.dynamics.alpha < 1.0) {
            return bad(format!(
                "dynamics.alpha {} outside (0, 1)",
                self.dynamics.alpha
            ));
        }
        if self.dynamics.series_months == 0 || 12 % self.dynamics.series_months != 0 {
            return bad(format!(
                "dynamics.series_months {} does not divide 12",
                self.dynamics.series_months
            ));
        }
        self.periods()?;
        self.filter
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        self.synthbench
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.inputs {
            if s.community.trim().is_empty() {
                return bad("input with an empty community name".into());
            }
            if !seen.insert(&s.community) {
                return bad(format!(
                    "community `{}` listed twice in inputs",
                    s.community
                ));
            }
        }
        for c in &self.communities {
            if !seen.contains(c) {
                return bad(format!("community `{c}` has no input source"));
            }
        }
        if self.backend.input_price < 0.0 || self.backend.output_price < 0.0 {
            return bad("token prices must be non-negative".into());
        }
        Ok(())
    }

    pub fn periods(&self) -> Result<(Period, Period), RunError> {
        let p = |s: &str| Period::parse(s).map_err(|e| RunError::Config(e.to_string()));
        let (s1, s2) = (p(&self.dynamics.s1)?, p(&self.dynamics.s2)?);
        if s1.start() < s2.end() && s2.start() < s1.end() {
            return Err(RunError::Config(format!(
                "periods {} and {} overlap",
                s1.label(),
                s2.label()
            )));
        }
        Ok((s1, s2))
    }

    /// Communities in scope, sorted.
    pub fn community_list(&self) -> Vec<String> {
        let mut out: Vec<String> = if self.communities.is_empty() {
            self.inputs.iter().map(|s| s.community.clone()).collect()
        } else {
            self.communities.clone()
        };
        out.sort();
        out.dedup();
        out
    }

    pub fn dimension_list(&self) -> Vec<NormDimension> {
        let mut out = self.dimensions.clone();
        out.sort();
        out.dedup();
        out
    }

    /// Digest of everything that affects artifacts. The run directory is left out
    /// so identical runs in different places share an id.
    pub fn run_id(&self) -> String {
        let mut c = self.clone();
        c.run_dir = PathBuf::new();
        c.workers = 0;
        let json = serde_json::to_vec(&c).expect("config serializes");
        seed::digest_hex(&json)[..16].to_owned()
    }
}
