//! Selection prompt construction and reply parsing. The prompt pins a
//! reply grammar ("SELECTION: <letter>") so downstream parsing is a
//! single anchored match.

use crate::protocol::{ChatMessage, ContentPart, ImageUrl, IMAGE_SLOT};
use std::sync::OnceLock;
use vsf_core::EgoState;

/// One candidate as presented to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateInfo {
    pub label: char,
    pub scorer_id: String,
    /// Weight-fusioner score shown in the prompt table.
    pub fused_score: f64,
}

/// Worked example for few-shot prompting.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotExample {
    pub user_text: String,
    pub assistant_text: String,
}

pub const SYSTEM_PROMPT: &str = "You are the final trajectory selector for an autonomous vehicle. \
You are shown a front-view rendering of the scene with candidate trajectories drawn as colored, \
lettered polylines, plus the ego status and each candidate's aggregate score. Choose the safest \
and most efficient candidate. Reply with exactly one line of the form: SELECTION: <letter>";

/// Deterministic message sequence: system, few-shot exemplars, then the
/// user turn with the ego status text, candidate table and image slot.
pub fn build_selection_prompt(
    ego: &EgoState,
    candidates: &[CandidateInfo],
    few_shot: &[FewShotExample],
) -> Vec<ChatMessage> {
    assert!(!candidates.is_empty(), "prompt needs at least one candidate");
    let mut messages = Vec::with_capacity(2 + 2 * few_shot.len());
    messages.push(ChatMessage::text("system", SYSTEM_PROMPT));
    for example in few_shot {
        messages.push(ChatMessage::text("user", example.user_text.clone()));
        messages.push(ChatMessage::text("assistant", example.assistant_text.clone()));
    }
    let mut text = String::new();
    text.push_str(&format!(
        "Ego status: speed {:.2} m/s, accel {:.2} m/s^2, command {}.\n",
        ego.speed, ego.accel, ego.command
    ));
    text.push_str("Candidates:\n");
    for c in candidates {
        text.push_str(&format!(
            "{}: scorer={} score={:.4}\n",
            c.label, c.scorer_id, c.fused_score
        ));
    }
    text.push_str("Reply with exactly: SELECTION: <letter>");
    messages.push(ChatMessage {
        role: "user".to_string(),
        content: vec![
            ContentPart::Text { text },
            ContentPart::ImageUrl { image_url: ImageUrl { url: IMAGE_SLOT.to_string() } },
        ],
    });
    messages
}

/// Attach the rendered image into the prompt's image slot.
pub fn attach_image(messages: &mut [ChatMessage], data_url: String) {
    for message in messages.iter_mut() {
        for part in message.content.iter_mut() {
            if let ContentPart::ImageUrl { image_url } = part {
                if image_url.url == IMAGE_SLOT {
                    image_url.url = data_url;
                    return;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResponse {
    pub chosen_label: char,
    pub raw_text: String,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("unparseable selection reply: {0:?}")]
pub struct UnparseableSelection(pub String);

fn selection_regex() -> &'static regex::Regex {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"(?i)\bselection\s*:\s*([a-z])\b").expect("selection regex"))
}

/// Case-insensitive match of "SELECTION: <letter>"; the letter must be one
/// of the presented labels.
pub fn parse_selection(text: &str, labels: &[char]) -> Result<SelectionResponse, UnparseableSelection> {
    assert!(!labels.is_empty(), "parse_selection needs at least one label");
    let caps = selection_regex()
        .captures(text)
        .ok_or_else(|| UnparseableSelection(text.to_string()))?;
    let letter = caps[1].chars().next().unwrap().to_ascii_uppercase();
    if !labels.iter().any(|&l| l.to_ascii_uppercase() == letter) {
        return Err(UnparseableSelection(text.to_string()));
    }
    Ok(SelectionResponse { chosen_label: letter, raw_text: text.to_string() })
}

/// Candidate labels in presentation order: A, B, C, ...
pub fn label_for(index: usize) -> char {
    (b'A' + (index % 26) as u8) as char
}

#[cfg(test)]
mod tests {
    use super::*;
    use vsf_core::scenario::{Command, Pose2D};

    fn ego() -> EgoState {
        EgoState {
            pose: Pose2D::new(0.0, 0.0, 0.0),
            speed: 10.0,
            accel: 0.5,
            command: Command::Forward,
        }
    }

    fn candidates(n: usize) -> Vec<CandidateInfo> {
        (0..n)
            .map(|i| CandidateInfo {
                label: label_for(i),
                scorer_id: format!("scorer{i}"),
                fused_score: -1.0 * i as f64,
            })
            .collect()
    }

    #[test]
    fn prompt_enumerates_labels() {
        let msgs = build_selection_prompt(&ego(), &candidates(2), &[]);
        assert_eq!(msgs.len(), 2);
        let user = msgs.last().unwrap().joined_text();
        assert!(user.contains("A: scorer=scorer0"));
        assert!(user.contains("B: scorer=scorer1"));
        assert!(!user.contains("C:"));
    }

    #[test]
    fn empty_few_shot_gives_system_plus_user() {
        let msgs = build_selection_prompt(&ego(), &candidates(1), &[]);
        assert_eq!(msgs[0].role, "system");
        assert_eq!(msgs[1].role, "user");
    }

    #[test]
    fn few_shot_examples_interleave() {
        let shot = FewShotExample {
            user_text: "Candidates:\nA: scorer=x score=0.1".into(),
            assistant_text: "SELECTION: A".into(),
        };
        let msgs = build_selection_prompt(&ego(), &candidates(2), &[shot]);
        assert_eq!(msgs.len(), 4);
        assert_eq!(msgs[1].role, "user");
        assert_eq!(msgs[2].role, "assistant");
    }

    #[test]
    fn prompt_is_byte_deterministic() {
        let a = build_selection_prompt(&ego(), &candidates(3), &[]);
        let b = build_selection_prompt(&ego(), &candidates(3), &[]);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn image_slot_attachment() {
        let mut msgs = build_selection_prompt(&ego(), &candidates(1), &[]);
        attach_image(&mut msgs, "data:image/ppm;base64,AAAA".into());
        let json = serde_json::to_string(&msgs).unwrap();
        assert!(json.contains("AAAA"));
    }

    #[test]
    fn parse_selection_contract_examples() {
        let labels = ['A', 'B', 'C'];
        assert_eq!(
            parse_selection("SELECTION: B", &labels).unwrap().chosen_label,
            'B'
        );
        assert_eq!(
            parse_selection("I choose selection: a", &labels).unwrap().chosen_label,
            'A'
        );
        assert!(parse_selection("both look fine", &labels).is_err());
        // letter outside the presented set
        assert!(parse_selection("SELECTION: Z", &labels).is_err());
    }
}
