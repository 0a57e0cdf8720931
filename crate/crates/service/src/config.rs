use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use persona_core::engine::prompt::PromptSettings;
use persona_core::{
    load_catalog, load_corpus, passages_from_corpus, Engine, EngineSettings, LlmProvider, QuestionBank,
    RemoteConfig, RemoteProvider, RetrievalIndex, Store, StubProvider,
};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSection {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub key_env: String,
}

fn default_key_env() -> String {
    "PERSONA_API_KEY".into()
}

/// Service configuration, read from a TOML file. Relative paths resolve
/// against the directory holding the file.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    pub corpus: PathBuf,
    pub catalog: PathBuf,
    pub questions: PathBuf,
    pub store_dir: PathBuf,
    #[serde(default = "default_provider")]
    pub provider: ProviderMode,
    #[serde(default)]
    pub remote: Option<RemoteSection>,
    #[serde(default = "default_k")]
    pub retrieval_k: usize,
    #[serde(default)]
    pub stub_seed: u64,
    #[serde(default)]
    pub history_window: Option<usize>,
    #[serde(default = "default_word_limit")]
    pub reply_word_limit: Option<usize>,
    #[serde(default)]
    pub cors_origins: Vec<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_provider() -> ProviderMode {
    ProviderMode::Stub
}

fn default_k() -> usize {
    4
}

fn default_word_limit() -> Option<usize> {
    Some(120)
}

fn default_in_flight() -> usize {
    8
}

impl ServiceConfig {
    /// Stub-mode configuration over a data directory holding `corpus.jsonl`,
    /// `abilities.jsonl` and `questions.jsonl`.
    pub fn stub(data_dir: impl AsRef<Path>, store_dir: impl Into<PathBuf>, seed: u64) -> Self {
        let data = data_dir.as_ref();
        Self {
            listen: default_listen(),
            corpus: data.join("corpus.jsonl"),
            catalog: data.join("abilities.jsonl"),
            questions: data.join("questions.jsonl"),
            store_dir: store_dir.into(),
            provider: ProviderMode::Stub,
            remote: None,
            retrieval_k: default_k(),
            stub_seed: seed,
            history_window: None,
            reply_word_limit: default_word_limit(),
            cors_origins: Vec::new(),
            max_in_flight: default_in_flight(),
        }
    }

    pub fn parse(text: &str, base_dir: &Path) -> anyhow::Result<Self> {
        let mut config: ServiceConfig = toml::from_str(text)?;
        for path in [
            &mut config.corpus,
            &mut config.catalog,
            &mut config.questions,
            &mut config.store_dir,
        ] {
            if path.is_relative() {
                *path = base_dir.join(&*path);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.retrieval_k == 0 {
            bail!("retrieval_k must be at least 1");
        }
        if self.max_in_flight == 0 {
            bail!("max_in_flight must be at least 1");
        }
        if self.provider == ProviderMode::Remote {
            let Some(remote) = &self.remote else {
                bail!("provider = \"remote\" needs a [remote] section");
            };
            if std::env::var(&remote.key_env).map_or(true, |k| k.trim().is_empty()) {
                bail!("provider = \"remote\" needs the {} environment variable", remote.key_env);
            }
        }
        Ok(())
    }

    pub fn engine_settings(&self) -> EngineSettings {
        EngineSettings {
            retrieval_k: self.retrieval_k,
            history_window: self.history_window,
            prompt: PromptSettings {
                reply_word_limit: self.reply_word_limit,
            },
        }
    }

    pub fn build_provider(&self) -> anyhow::Result<Arc<dyn LlmProvider>> {
        match self.provider {
            ProviderMode::Stub => Ok(Arc::new(StubProvider::new(self.stub_seed))),
            ProviderMode::Remote => {
                self.validate()?;
                let remote = self.remote.as_ref().expect("validated");
                let key = std::env::var(&remote.key_env)?;
                let provider = RemoteProvider::new(RemoteConfig::new(&remote.base_url, &remote.model, key))?;
                Ok(Arc::new(provider))
            }
        }
    }

    pub fn build_index(&self) -> anyhow::Result<RetrievalIndex> {
        let corpus = load_corpus(&self.corpus)?;
        Ok(RetrievalIndex::build(passages_from_corpus(&corpus))?)
    }

    pub fn build_engine(&self) -> anyhow::Result<Engine> {
        let index = self.build_index()?;
        let catalog = load_catalog(&self.catalog)?;
        let questions = QuestionBank::load(&self.questions)?;
        Ok(Engine::new(
            Arc::new(index),
            Arc::new(catalog),
            Arc::new(questions),
            self.build_provider()?,
            self.engine_settings(),
        ))
    }

    pub fn open_store(&self) -> anyhow::Result<Store> {
        Store::open(&self.store_dir).with_context(|| format!("opening store {}", self.store_dir.display()))
    }
}
