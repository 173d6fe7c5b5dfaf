//! Chat-completion wire format:
//! `POST {base_url}/v1/chat/completions` with
//! `{model, temperature, messages: [{role, content: [{type: "text", ...},
//! {type: "image_url", ...}]}]}`; the reply carries
//! `{choices: [{message: {content}}]}`.

use base64::Engine;
use serde::{Deserialize, Serialize};

pub const CHAT_COMPLETIONS_PATH: &str = "/v1/chat/completions";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn text(role: &str, text: impl Into<String>) -> Self {
        ChatMessage {
            role: role.to_string(),
            content: vec![ContentPart::Text { text: text.into() }],
        }
    }

    /// Concatenated text of all text parts.
    pub fn joined_text(&self) -> String {
        self.content
            .iter()
            .filter_map(|part| match part {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::ImageUrl { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

/// Placeholder URL marking where the rendered image gets attached.
pub const IMAGE_SLOT: &str = "data:image/ppm;base64,";

/// Base64 data URL for a binary PPM image.
pub fn ppm_data_url(ppm_bytes: &[u8]) -> String {
    format!(
        "{IMAGE_SLOT}{}",
        base64::engine::general_purpose::STANDARD.encode(ppm_bytes)
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<Choice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub message: AssistantMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssistantMessage {
    pub content: String,
}

impl ChatResponse {
    pub fn of_text(text: impl Into<String>) -> Self {
        ChatResponse {
            choices: vec![Choice {
                message: AssistantMessage { content: text.into() },
            }],
        }
    }
}
