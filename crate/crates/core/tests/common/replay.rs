use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use phasenas::generate::llm::{ApiKey, HttpRequest, HttpResponse};
use phasenas::arch::{catalog_table, parse_architecture, Mode};
use phasenas::generate::{BaseInfo, EndpointConfig, GenerationContext, Phase, PoolMember, Transport, TransportError};
use phasenas::resource::{estimate, ConstraintSet};

pub const KEY: &str = "sk-test-0123456789abcdef";

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn recorded(name: &str) -> HttpResponse {
    let text = std::fs::read_to_string(fixture_dir().join("llm").join(format!("{name}.json"))).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    HttpResponse { status: v["status"].as_u64().unwrap() as u16, body: v["body"].to_string() }
}

/// Replays canned responses in order and keeps every request it was sent.
#[derive(Clone, Default)]
pub struct Replay {
    pub responses: Arc<Mutex<VecDeque<Result<HttpResponse, TransportError>>>>,
    pub requests: Arc<Mutex<Vec<HttpRequest>>>,
}

impl Replay {
    pub fn of(names: &[&str]) -> Self {
        let r = Replay::default();
        r.responses.lock().unwrap().extend(names.iter().map(|n| Ok(recorded(n))));
        r
    }

    pub fn sent(&self) -> Vec<HttpRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().unwrap().len()
    }
}

impl Transport for Replay {
    fn post(&mut self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.requests.lock().unwrap().push(request.clone());
        self.responses.lock().unwrap().pop_front().expect("no recorded response left")
    }
}

pub fn endpoint(max_retries: usize) -> EndpointConfig {
    EndpointConfig {
        base_url: "http://recorded.invalid/v1".into(),
        model_explore: "small-model".into(),
        model_refine: "large-model".into(),
        max_retries,
        api_key: Some(ApiKey::new(KEY)),
        ..EndpointConfig::default()
    }
}

/// Request context with a two-member pool and, when refining, a base and feedback.
pub fn context(phase: Phase, mode: Mode) -> GenerationContext {
    let base_text = match mode {
        Mode::Classification => "ConvK3BNRELU(3,16,1,1)\nResK3K3(16,32,2,1)\nGAP(32,32,1,1)\nFC(32,10,1,1)\n",
        Mode::Detection => "ConvK3BNRELU(3,16,2,1)\nResK3K3(16,32,2,1)@P3\nSCDown(32,64,2,1)@P4\n",
    };
    let base_arch = parse_architecture(base_text, mode).unwrap();
    GenerationContext {
        phase,
        mode,
        constraints: ConstraintSet { max_params: 500_000, max_flops: 200_000_000, max_depth: 16, min_params: None },
        catalog: catalog_table(mode),
        pool: vec![
            PoolMember { serialization: base_text.into(), score: 41.25 },
            PoolMember { serialization: "ConvK3BNRELU(3,8,1,1)\nGAP(8,8,1,1)\nFC(8,10,1,1)\n".into(), score: 12.5 },
        ],
        base: (phase == Phase::Refinement).then(|| BaseInfo {
            serialization: base_text.into(),
            score: 41.25,
            profile: estimate(&base_arch),
        }),
        feedback: match phase {
            Phase::Refinement => vec![
                "Base: 4,714 params of 500,000 allowed".into(),
                "NotImproved: 40.1 <= 41.25".into(),
                "ValidationError: ChannelMismatch at block 1: expected in=16, found in=32".into(),
            ],
            Phase::Exploration => Vec::new(),
        },
        seed: 9,
    }
}
