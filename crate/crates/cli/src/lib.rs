//! HTTP front end of the aggregate query service.
//!
//! One route, `POST /query`, answering whitelisted templates from a
//! completed run's store. Every answer is suppressed with the run's policy.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use border_flux::privacy::{answer_query, QuerySpec, Store};
use serde_json::json;

pub const TOKEN_ENV: &str = "BORDER_FLUX_API_TOKEN";

pub struct ServiceState {
    pub store: Store,
    /// Static bearer token; requests need it when set.
    pub token: Option<String>,
}

fn error(status: StatusCode, code: &str) -> Response {
    (status, Json(json!({"error": code}))).into_response()
}

fn authorized(state: &ServiceState, headers: &HeaderMap) -> bool {
    let Some(want) = &state.token else { return true };
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|got| got == want)
}

async fn query(State(state): State<Arc<ServiceState>>, headers: HeaderMap, body: Bytes) -> Response {
    if !authorized(&state, &headers) {
        return error(StatusCode::UNAUTHORIZED, "UNAUTHORIZED");
    }
    let spec: QuerySpec = match serde_json::from_slice(&body) {
        Ok(s) => s,
        Err(_) => return error(StatusCode::BAD_REQUEST, "INVALID_PARAMS"),
    };
    match answer_query(&spec, &state.store, &state.store.meta.policy) {
        Ok(v) => (StatusCode::OK, Json(v)).into_response(),
        Err(e) => {
            log::info!("query `{}` rejected: {e:?}", spec.template);
            (StatusCode::BAD_REQUEST, Json(e.body())).into_response()
        }
    }
}

pub fn router(state: ServiceState) -> Router {
    Router::new().route("/query", post(query)).with_state(Arc::new(state))
}
