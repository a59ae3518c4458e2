use crate::graph::{model_to_bop, BagOfPaths, FilterConfig};
use crate::model::Model;
use crate::normalize::{NormalizeError, Normalizer, TokenizerConfig};

/// Model to normalized bag of paths: graph construction, path extraction and
/// word normalization. Stop-path removal is left to the index, which owns the
/// stop-path set.
#[derive(Debug, Clone)]
pub struct Pipeline {
    filter: FilterConfig,
    normalizer: Normalizer,
}

impl Pipeline {
    pub fn new(filter: FilterConfig, tokenizer: TokenizerConfig) -> Result<Self, NormalizeError> {
        Ok(Pipeline {
            filter,
            normalizer: Normalizer::new(tokenizer)?,
        })
    }

    pub fn filter(&self) -> &FilterConfig {
        &self.filter
    }

    pub fn tokenizer(&self) -> &TokenizerConfig {
        self.normalizer.config()
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn encode(&self, m: &Model) -> BagOfPaths {
        self.normalizer.normalize_bop(&model_to_bop(m, &self.filter))
    }
}

impl Default for Pipeline {
    fn default() -> Self {
        Pipeline::new(FilterConfig::default(), TokenizerConfig::default())
            .expect("the default stop-word list is built in")
    }
}
