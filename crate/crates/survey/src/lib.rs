//! Survey service for the rating studies: randomized session plans, task
//! serving, response validation and an append-only JSONL store.

pub mod http;
pub mod service;
pub mod store;

pub use http::{router, serve, ErrorBody};
pub use service::{
    Ack, Backgrounds, CreateSession, NextTask, ScalesPayload, SubmitResponse, SurveyConfig, SurveyError, SurveyService,
    SwatchView, TaskView,
};
pub use store::Store;
