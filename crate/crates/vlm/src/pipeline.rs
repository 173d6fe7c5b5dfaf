//! The VLM fusioner: take each scorer's top candidate, LQR-simulate them,
//! render the overlay, prompt the model, and adopt its selection (falling
//! back to the weight-fusioner winner when the reply is unusable).

use crate::client::{query_vlm, VlmEndpointConfig, VlmError};
use crate::prompt::{
    attach_image, build_selection_prompt, label_for, parse_selection, CandidateInfo,
    FewShotExample,
};
use crate::protocol::ppm_data_url;
use crate::render::{render_overlay, RenderConfig, RenderError};
use vsf_core::lqr::{track_trajectory, TrackDiagnostics};
use vsf_core::scenario::Stage;
use vsf_core::{BicycleState, CameraModel, EgoState, LqrConfig, Trajectory};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("scorer {0:?} produced an empty ranking")]
    EmptyRanking(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Vlm(#[from] VlmError),
    #[error(transparent)]
    Lqr(#[from] vsf_core::lqr::LqrError),
}

/// Top-ranked candidate index per scorer, deduplicated (identical
/// candidates keep the first scorer's label).
pub fn top_per_scorer(
    rankings: &[(String, Vec<(usize, f64)>)],
) -> Result<Vec<(String, usize)>, PipelineError> {
    let mut out: Vec<(String, usize)> = Vec::with_capacity(rankings.len());
    for (scorer_id, fused) in rankings {
        if fused.is_empty() {
            return Err(PipelineError::EmptyRanking(scorer_id.clone()));
        }
        let mut best = fused[0];
        for &(idx, score) in fused.iter().skip(1) {
            if score > best.1 {
                best = (idx, score);
            }
        }
        if !out.iter().any(|(_, idx)| *idx == best.0) {
            out.push((scorer_id.clone(), best.0));
        }
    }
    Ok(out)
}

/// Everything the caller needs to audit a VLM selection.
#[derive(Debug, Clone)]
pub struct VlmSelection {
    /// Chosen index into the original candidate list.
    pub index: usize,
    /// Labels presented, with their candidate indices.
    pub presented: Vec<(char, String, usize)>,
    pub raw_reply: Option<String>,
    /// True when the reply was unusable and the weight-fusion winner was
    /// adopted instead.
    pub fell_back: bool,
    /// Per-presented-candidate tracking diagnostics.
    pub lqr_diagnostics: Vec<TrackDiagnostics<f64>>,
    pub image_ppm: Vec<u8>,
}

pub struct VlmFusionInputs<'a> {
    pub stage: &'a Stage<'a, f64>,
    pub camera: &'a CameraModel,
    pub ego: &'a EgoState,
    pub candidates: &'a [Trajectory],
    /// (scorer_id, fused ranking) per scorer.
    pub rankings: &'a [(String, Vec<(usize, f64)>)],
    /// Weight-fusion winner over the full candidate set: the fallback.
    pub weight_winner: usize,
    pub few_shot: &'a [FewShotExample],
}

/// Run the full selection loop against a chat endpoint. The reply gets one
/// retry; anything still unparseable adopts the weight-fusion winner.
pub fn select_with_vlm(
    inputs: &VlmFusionInputs<'_>,
    lqr_cfg: &LqrConfig,
    render_cfg: &RenderConfig,
    endpoint: &VlmEndpointConfig,
) -> Result<VlmSelection, PipelineError> {
    let top = top_per_scorer(inputs.rankings)?;

    let mut presented = Vec::with_capacity(top.len());
    let mut simulated = Vec::with_capacity(top.len());
    let mut diagnostics = Vec::with_capacity(top.len());
    let mut infos = Vec::with_capacity(top.len());
    for (i, (scorer_id, idx)) in top.iter().enumerate() {
        let label = label_for(i);
        let candidate = &inputs.candidates[*idx];
        let init = BicycleState {
            x: inputs.ego.pose.x,
            y: inputs.ego.pose.y,
            heading: inputs.ego.pose.heading,
            speed: inputs.ego.speed,
        };
        let tracked = track_trajectory(candidate, init, lqr_cfg)?;
        let fused_score = inputs
            .rankings
            .iter()
            .find(|(id, _)| id == scorer_id)
            .and_then(|(_, fused)| fused.iter().find(|(j, _)| j == idx))
            .map(|&(_, s)| s)
            .unwrap_or(f64::NEG_INFINITY);
        presented.push((label, scorer_id.clone(), *idx));
        diagnostics.push(tracked.diagnostics.clone());
        simulated.push(tracked.simulated);
        infos.push(CandidateInfo { label, scorer_id: scorer_id.clone(), fused_score });
    }

    let overlay: Vec<(char, &Trajectory)> = presented
        .iter()
        .zip(&simulated)
        .map(|((label, _, _), traj)| (*label, traj))
        .collect();
    let image = render_overlay(inputs.stage, inputs.camera, &overlay, render_cfg)?;
    let ppm = image.to_ppm();

    let mut messages = build_selection_prompt(inputs.ego, &infos, inputs.few_shot);
    attach_image(&mut messages, ppm_data_url(&ppm));
    let labels: Vec<char> = presented.iter().map(|(l, _, _)| *l).collect();

    // one retry on an unparseable reply, then fall back to the weight winner
    let mut raw_reply = None;
    let mut chosen = None;
    for _ in 0..2 {
        let reply = query_vlm(messages.clone(), endpoint)?;
        match parse_selection(&reply, &labels) {
            Ok(selection) => {
                raw_reply = Some(selection.raw_text);
                chosen = Some(selection.chosen_label);
                break;
            }
            Err(unparseable) => {
                raw_reply = Some(unparseable.0);
            }
        }
    }
    let (index, fell_back) = match chosen {
        Some(label) => {
            let idx = presented
                .iter()
                .find(|(l, _, _)| *l == label)
                .map(|(_, _, idx)| *idx)
                .expect("parse_selection only admits presented labels");
            (idx, false)
        }
        None => (inputs.weight_winner, true),
    };
    Ok(VlmSelection {
        index,
        presented,
        raw_reply,
        fell_back,
        lqr_diagnostics: diagnostics,
        image_ppm: ppm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_per_scorer_distinct_and_dedup() {
        let rankings = vec![
            ("a".to_string(), vec![(0, 0.1), (1, 0.9), (2, 0.3)]),
            ("b".to_string(), vec![(0, 0.8), (1, 0.2), (2, 0.3)]),
            ("c".to_string(), vec![(0, 0.1), (1, 0.2), (2, 0.9)]),
        ];
        let top = top_per_scorer(&rankings).unwrap();
        assert_eq!(top, vec![
            ("a".to_string(), 1),
            ("b".to_string(), 0),
            ("c".to_string(), 2),
        ]);

        let agreeing = vec![
            ("a".to_string(), vec![(0, 0.1), (1, 0.9)]),
            ("b".to_string(), vec![(0, 0.2), (1, 0.8)]),
            ("c".to_string(), vec![(0, 0.3), (1, 0.7)]),
        ];
        let top = top_per_scorer(&agreeing).unwrap();
        assert_eq!(top, vec![("a".to_string(), 1)]);
    }

    #[test]
    fn empty_ranking_is_an_error() {
        let rankings = vec![
            ("a".to_string(), vec![(0, 0.1)]),
            ("b".to_string(), vec![]),
        ];
        assert!(matches!(
            top_per_scorer(&rankings),
            Err(PipelineError::EmptyRanking(id)) if id == "b"
        ));
    }
}
