//! One JSON config block for every tunable in the pipeline. Every field
//! has a default, so a config file only needs the entries it overrides.

use serde::{Deserialize, Serialize};
use std::path::Path;
use vsf_core::{
    DirectiveRuleConfig, FusionConfig, LqrConfig, MetricConfig, MetricWeights, VocabularyParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorConfig {
    pub enabled: bool,
    pub seed_count: usize,
    pub noise_scale_lon: f64,
    pub noise_scale_lat: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        AnchorConfig {
            enabled: true,
            seed_count: 1,
            noise_scale_lon: 0.6,
            noise_scale_lat: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSettings {
    pub line_width: u32,
    pub label_scale: u32,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings { line_width: 2, label_scale: 2 }
    }
}

impl RenderSettings {
    pub fn to_render_config(&self) -> vsf_vlm::RenderConfig {
        vsf_vlm::RenderConfig {
            line_width: self.line_width,
            label_scale: self.label_scale,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlmSettings {
    /// Chat endpoint; VSF_VLM_ENDPOINT overrides when unset here.
    pub endpoint: Option<String>,
    pub model: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// Bound on concurrent VLM queries.
    pub max_inflight: usize,
}

impl Default for VlmSettings {
    fn default() -> Self {
        VlmSettings {
            endpoint: None,
            model: "mock-vlm".to_string(),
            timeout_s: 30.0,
            max_retries: 2,
            max_inflight: 4,
        }
    }
}

impl VlmSettings {
    /// Resolve the endpoint config, preferring the file entry and falling
    /// back to VSF_VLM_ENDPOINT.
    pub fn endpoint_config(&self) -> Option<vsf_vlm::VlmEndpointConfig> {
        let base_url = self
            .endpoint
            .clone()
            .or_else(|| std::env::var(vsf_vlm::ENDPOINT_ENV).ok())?;
        let mut cfg = vsf_vlm::VlmEndpointConfig::new(base_url);
        cfg.model_name = self.model.clone();
        cfg.timeout = std::time::Duration::from_secs_f64(self.timeout_s);
        cfg.max_retries = self.max_retries;
        Some(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct HarnessConfig {
    pub vocab: VocabularyParams,
    pub anchors: AnchorConfig,
    pub metrics: MetricConfig,
    pub weights: MetricWeights,
    pub fusion: FusionConfig,
    pub lqr: LqrConfig,
    pub directive_rules: DirectiveRuleConfig,
    pub render: RenderSettings,
    pub vlm: VlmSettings,
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("failed to read config {}: {e}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| format!("malformed config {}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_partial_overrides_apply() {
        let cfg = HarnessConfig::default();
        assert_eq!(cfg.vocab.cardinality(), 25 * 8 * 5);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: HarnessConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);

        let partial: HarnessConfig =
            serde_json::from_str(r#"{"vlm": {"max_inflight": 2}}"#).unwrap();
        assert_eq!(partial.vlm.max_inflight, 2);
        assert_eq!(partial.vocab, cfg.vocab);
    }
}
