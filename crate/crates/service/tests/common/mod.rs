#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::{Duration, Instant};

use fmkit_core::formats::CAR_MODEL_UVL;
use fmkit_service::api::{JobAccepted, JobView};
use fmkit_service::Config;
use serde_json::{json, Value};

pub struct Server {
    pub addr: SocketAddr,
    http: reqwest::Client,
}

pub async fn start() -> Server {
    start_with(|_| {}).await
}

pub async fn start_with(tweak: impl FnOnce(&mut Config)) -> Server {
    let mut config = Config {
        port: 0,
        workers: 4,
        ..Config::default()
    };
    tweak(&mut config);
    let addr = fmkit_service::spawn(config).await.expect("bind");
    Server {
        addr,
        http: reqwest::Client::new(),
    }
}

pub fn car() -> Value {
    json!({"format": "UVL", "text": CAR_MODEL_UVL})
}

/// A root with `n` optional leaves and a chain of implications; t-wise
/// sampling on it is slow enough to observe.
pub fn wide_model(n: usize) -> Value {
    let mut text = String::from("features\n    Root\n        optional\n");
    for i in 0..n {
        text.push_str(&format!("            F{i}\n"));
    }
    text.push_str("constraints\n");
    for i in (0..n.saturating_sub(1)).step_by(3) {
        text.push_str(&format!("    F{i} => F{}\n", i + 1));
    }
    json!({"format": "UVL", "text": text})
}

impl Server {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub async fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        let r = self
            .http
            .post(self.url(path))
            .json(body)
            .send()
            .await
            .expect("send");
        let status = r.status().as_u16();
        (status, r.json().await.expect("json body"))
    }

    pub async fn post_raw(&self, path: &str, body: Vec<u8>) -> (u16, Value) {
        let r = self
            .http
            .post(self.url(path))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .expect("send");
        let status = r.status().as_u16();
        (status, r.json().await.expect("json body"))
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.http.get(self.url(path)).send().await.expect("send");
        let status = r.status().as_u16();
        (status, r.json().await.expect("json body"))
    }

    pub async fn submit(&self, body: Value) -> String {
        let (status, v) = self.post("/jobs", &body).await;
        assert_eq!(status, 202, "{v}");
        let accepted: JobAccepted = serde_json::from_value(v).expect("schema");
        accepted.job_id
    }

    pub async fn job(&self, id: &str) -> JobView {
        let (status, v) = self.get(&format!("/jobs/{id}")).await;
        assert_eq!(status, 200, "{v}");
        serde_json::from_value(v).expect("schema")
    }

    pub async fn wait(&self, id: &str, limit: Duration) -> JobView {
        let start = Instant::now();
        loop {
            let v = self.job(id).await;
            if v.status.is_final() {
                return v;
            }
            assert!(start.elapsed() < limit, "job {id} still {:?}", v.status);
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
    }
}

/// Takes seconds to sample at t=3; tests cancel it rather than wait.
pub fn slow_model() -> Value {
    wide_model(90)
}
