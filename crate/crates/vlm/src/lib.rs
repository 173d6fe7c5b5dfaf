//! VLM-in-the-loop trajectory selection: overlay rendering onto a
//! synthetic front view, the chat-completion wire protocol, a retrying
//! client, a deterministic mock server, and the end-to-end selection
//! pipeline.

pub mod client;
pub mod mock;
pub mod pipeline;
pub mod prompt;
pub mod protocol;
pub mod raster;
pub mod render;

pub use client::{query_vlm, VlmEndpointConfig, VlmError, API_KEY_ENV, ENDPOINT_ENV};
pub use mock::{MockPolicy, MockServerError, MockVlmServer};
pub use pipeline::{select_with_vlm, top_per_scorer, VlmFusionInputs, VlmSelection};
pub use prompt::{
    build_selection_prompt, label_for, parse_selection, CandidateInfo, FewShotExample,
    SelectionResponse, UnparseableSelection,
};
pub use raster::Image;
pub use render::{project_point, render_overlay, RenderConfig, RenderError};
