//! The ML-as-a-service boundary: a trained tree plus explainer behind a
//! query interface (in-process and over HTTP/JSON) with exact query
//! counting, and the client adapter the attacker drives.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSchema, Sample};
use crate::error::{Error, Result};
use crate::explain::{explain, Discretizer, Explanation, ExplainerConfig, ExplanationTerm};
use crate::tree::DecisionTree;

/// How the service bills queries. `per_call` bundles the explanation with
/// the answer at unit cost; `per_internal_prediction` exposes the true cost
/// of serving explanations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pricing {
    PerCall,
    PerInternalPrediction,
}

/// Behavioral interface shared by the in-process and HTTP-backed oracles.
pub trait QueryOracle {
    fn predict(&self, sample: &Sample) -> Result<usize>;
    fn explain(&self, sample: &Sample) -> Result<Explanation>;
    fn queries_used(&self) -> u64;
}

/// FNV-1a over the raw value bits; explanation seeds are derived from it so
/// identical queries get identical explanations.
fn content_hash(sample: &Sample) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for v in &sample.values {
        for byte in v.to_bits().to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    hash
}

/// Shared serving state: the model, its discretizer, the explainer settings
/// (whose `rng_seed` acts as the service base seed) and the billing counter.
pub struct OracleCore {
    pub tree: DecisionTree,
    pub discretizer: Discretizer,
    pub schema: DatasetSchema,
    pub explainer: ExplainerConfig,
    pub pricing: Pricing,
    counter: AtomicU64,
}

impl OracleCore {
    pub fn new(
        tree: DecisionTree,
        discretizer: Discretizer,
        schema: DatasetSchema,
        explainer: ExplainerConfig,
        pricing: Pricing,
    ) -> Self {
        OracleCore {
            tree,
            discretizer,
            schema,
            explainer,
            pricing,
            counter: AtomicU64::new(0),
        }
    }

    pub fn predict(&self, sample: &Sample) -> Result<usize> {
        self.schema.validate_sample(sample)?;
        let label = self.tree.predict(sample);
        self.counter.fetch_add(1, Ordering::SeqCst);
        Ok(label)
    }

    pub fn explain(&self, sample: &Sample) -> Result<Explanation> {
        self.schema.validate_sample(sample)?;
        let mut config = self.explainer;
        config.rng_seed = self.explainer.rng_seed.wrapping_add(content_hash(sample));
        let explanation = explain(
            |s| self.tree.predict(s),
            sample,
            &self.discretizer,
            &self.schema,
            &config,
        )?;
        let billed = match self.pricing {
            Pricing::PerCall => 1,
            Pricing::PerInternalPrediction => self.explainer.num_perturbations as u64 + 1,
        };
        self.counter.fetch_add(billed, Ordering::SeqCst);
        Ok(explanation)
    }

    pub fn queries_used(&self) -> u64 {
        self.counter.load(Ordering::SeqCst)
    }
}

/// In-process oracle; no network involved.
#[derive(Clone)]
pub struct LocalOracle(pub Arc<OracleCore>);

impl QueryOracle for LocalOracle {
    fn predict(&self, sample: &Sample) -> Result<usize> {
        self.0.predict(sample)
    }

    fn explain(&self, sample: &Sample) -> Result<Explanation> {
        self.0.explain(sample)
    }

    fn queries_used(&self) -> u64 {
        self.0.queries_used()
    }
}

// ---------------------------------------------------------------------------
// Wire protocol
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct FeaturesBody {
    pub features: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictResponse {
    pub label: usize,
    pub queries_used: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExplainResponse {
    pub label: usize,
    pub terms: Vec<ExplanationTerm>,
    pub queries_used: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatsResponse {
    pub queries: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub mod http {
    //! HTTP server and client for the wire protocol.

    use super::*;
    use axum::extract::State;
    use axum::http::StatusCode;
    use axum::response::{IntoResponse, Response};
    use axum::routing::{get, post};
    use axum::{Json, Router};
    use std::net::SocketAddr;

    fn error_response(err: &Error) -> Response {
        let status = match err {
            Error::Validation(_) | Error::Argument(_) | Error::Schema(_) => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (
            status,
            Json(ErrorBody {
                error: err.to_string(),
            }),
        )
            .into_response()
    }

    async fn handle_predict(
        State(core): State<Arc<OracleCore>>,
        Json(body): Json<FeaturesBody>,
    ) -> Response {
        let sample = Sample::new(body.features);
        match core.predict(&sample) {
            Ok(label) => Json(PredictResponse {
                label,
                queries_used: core.queries_used(),
            })
            .into_response(),
            Err(err) => error_response(&err),
        }
    }

    async fn handle_explain(
        State(core): State<Arc<OracleCore>>,
        Json(body): Json<FeaturesBody>,
    ) -> Response {
        let sample = Sample::new(body.features);
        match core.explain(&sample) {
            Ok(explanation) => Json(ExplainResponse {
                label: explanation.label,
                terms: explanation.terms,
                queries_used: core.queries_used(),
            })
            .into_response(),
            Err(err) => error_response(&err),
        }
    }

    async fn handle_stats(State(core): State<Arc<OracleCore>>) -> Json<StatsResponse> {
        Json(StatsResponse {
            queries: core.queries_used(),
        })
    }

    /// Running service; dropping the handle shuts the listener down and
    /// drains in-flight requests.
    pub struct ServiceHandle {
        addr: SocketAddr,
        shutdown: Option<tokio::sync::oneshot::Sender<()>>,
        join: Option<std::thread::JoinHandle<()>>,
    }

    impl ServiceHandle {
        pub fn addr(&self) -> SocketAddr {
            self.addr
        }

        pub fn base_url(&self) -> String {
            format!("http://{}", self.addr)
        }

        pub fn shutdown(mut self) {
            self.stop();
        }

        fn stop(&mut self) {
            if let Some(tx) = self.shutdown.take() {
                let _ = tx.send(());
            }
            if let Some(join) = self.join.take() {
                let _ = join.join();
            }
        }
    }

    impl Drop for ServiceHandle {
        fn drop(&mut self) {
            self.stop();
        }
    }

    /// Binds `port` (0 = ephemeral) and serves the wire protocol on a
    /// background thread.
    pub fn serve(core: Arc<OracleCore>, port: u16) -> Result<ServiceHandle> {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel::<Result<SocketAddr>>();
        let (shutdown_tx, shutdown_rx) = tokio::sync::oneshot::channel::<()>();

        let join = std::thread::spawn(move || {
            let runtime = match tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
            {
                Ok(rt) => rt,
                Err(e) => {
                    let _ = addr_tx.send(Err(Error::Transport(e.to_string())));
                    return;
                }
            };
            runtime.block_on(async move {
                let listener =
                    match tokio::net::TcpListener::bind(("127.0.0.1", port)).await {
                        Ok(l) => l,
                        Err(e) => {
                            let _ = addr_tx.send(Err(Error::Transport(format!(
                                "cannot bind port {port}: {e}"
                            ))));
                            return;
                        }
                    };
                let addr = listener.local_addr().expect("bound socket has an address");
                let app = Router::new()
                    .route("/predict", post(handle_predict))
                    .route("/explain", post(handle_explain))
                    .route("/stats", get(handle_stats))
                    .with_state(core);
                let _ = addr_tx.send(Ok(addr));
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = shutdown_rx.await;
                    })
                    .await;
            });
        });

        let addr = addr_rx
            .recv()
            .map_err(|_| Error::Transport("service thread died during startup".into()))??;
        Ok(ServiceHandle {
            addr,
            shutdown: Some(shutdown_tx),
            join: Some(join),
        })
    }

    /// Client adapter mapping the oracle interface onto the wire protocol.
    /// `queries_used` mirrors the server counter echoed in each response.
    pub struct RemoteOracle {
        base_url: String,
        client: reqwest::blocking::Client,
        last_count: AtomicU64,
    }

    impl RemoteOracle {
        pub fn new(base_url: impl Into<String>) -> Self {
            RemoteOracle {
                base_url: base_url.into().trim_end_matches('/').to_string(),
                client: reqwest::blocking::Client::new(),
                last_count: AtomicU64::new(0),
            }
        }

        fn post_json<T: serde::de::DeserializeOwned>(
            &self,
            path: &str,
            body: &FeaturesBody,
        ) -> Result<T> {
            let response = self
                .client
                .post(format!("{}{}", self.base_url, path))
                .json(body)
                .send()
                .map_err(|e| Error::Transport(e.to_string()))?;
            let status = response.status();
            if !status.is_success() {
                let body = response.text().unwrap_or_default();
                return Err(Error::Protocol {
                    status: status.as_u16(),
                    body,
                });
            }
            response
                .json::<T>()
                .map_err(|e| Error::Protocol {
                    status: status.as_u16(),
                    body: format!("malformed response body: {e}"),
                })
        }

        /// GET /stats (the one idempotent, retry-safe request).
        pub fn stats(&self) -> Result<u64> {
            let mut last_err = None;
            for _ in 0..3 {
                match self
                    .client
                    .get(format!("{}/stats", self.base_url))
                    .send()
                {
                    Ok(response) if response.status().is_success() => {
                        let stats: StatsResponse = response
                            .json()
                            .map_err(|e| Error::Transport(e.to_string()))?;
                        self.last_count.store(stats.queries, Ordering::SeqCst);
                        return Ok(stats.queries);
                    }
                    Ok(response) => {
                        return Err(Error::Protocol {
                            status: response.status().as_u16(),
                            body: response.text().unwrap_or_default(),
                        })
                    }
                    Err(e) => last_err = Some(Error::Transport(e.to_string())),
                }
            }
            Err(last_err.unwrap_or_else(|| Error::Transport("unreachable".into())))
        }
    }

    impl QueryOracle for RemoteOracle {
        fn predict(&self, sample: &Sample) -> Result<usize> {
            let response: PredictResponse = self.post_json(
                "/predict",
                &FeaturesBody {
                    features: sample.values.clone(),
                },
            )?;
            self.last_count.store(response.queries_used, Ordering::SeqCst);
            Ok(response.label)
        }

        fn explain(&self, sample: &Sample) -> Result<Explanation> {
            let response: ExplainResponse = self.post_json(
                "/explain",
                &FeaturesBody {
                    features: sample.values.clone(),
                },
            )?;
            self.last_count.store(response.queries_used, Ordering::SeqCst);
            Ok(Explanation {
                label: response.label,
                terms: response.terms,
            })
        }

        fn queries_used(&self) -> u64 {
            self.last_count.load(Ordering::SeqCst)
        }
    }
}
