//! The review API end to end: run the scripted encounter, serve it, submit
//! a review over HTTP and read back the aggregate report.
//!
//! cargo run --example review_service            # self-contained demo
//! cargo run --example review_service -- 8080    # keep serving on a port

use std::sync::Arc;

use serde_json::{json, Value};
use triage_forge::evaluation::{builtin_rubric, Q11, Q14};
use triage_forge::harness::{run_batch, RunConfig};
use triage_forge::service::{serve, ServiceState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let keep_port: Option<u16> = std::env::args().nth(1).map(|p| p.parse()).transpose()?;
    let tmp = tempfile::tempdir()?;
    let mut config = RunConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/encounter/run.yaml"))?;
    config.output_dir = tmp.path().to_path_buf();
    run_batch(&config)?;
    let state = Arc::new(ServiceState::load(tmp.path())?);

    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind(("127.0.0.1", keep_port.unwrap_or(0))))?;
    let base = format!("http://{}", listener.local_addr()?);
    println!("serving on {base}");
    if keep_port.is_some() {
        rt.block_on(serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        }))?;
        return Ok(());
    }
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = rt.spawn(serve(listener, state, async {
        let _ = stopped.await;
    }));

    let get = |path: &str| -> Result<Value, Box<dyn std::error::Error>> {
        Ok(ureq::get(&format!("{base}{path}")).call()?.body_mut().read_json()?)
    };
    let encounters = get("/encounters")?;
    let id = encounters[0]["encounter_id"].as_str().unwrap_or_default().to_string();
    let bundle = get(&format!("/encounters/{id}/bundle"))?;
    println!("bundle for {id}: final urgency {}, {} turns", bundle["final_urgency"], bundle["transcript"]["turns"].as_array().map_or(0, Vec::len));

    let mut answers = serde_json::Map::new();
    for q in builtin_rubric() {
        if let Some(a) = q.affirmative_option {
            answers.insert(q.question_id, json!({ "selected": [a] }));
        }
    }
    answers.insert(Q11.into(), json!({ "selected": ["follow_up_pcp"] }));
    answers.insert(Q14.into(), json!({ "selected": ["dx3"] }));
    let body = json!({ "encounter_id": id, "reviewer_id": "dr-demo", "answers": answers });

    let post = |b: &Value| ureq::post(&format!("{base}/reviews")).config().http_status_as_error(false).build().send_json(b);
    println!("first submit:  {}", post(&body)?.status());
    println!("second submit: {}", post(&body)?.status());
    let mut bad = body.clone();
    bad["reviewer_id"] = json!("dr-other");
    bad["answers"]["Q6"] = json!({ "selected": ["no"] });
    let mut resp = post(&bad)?;
    println!("invalid:       {} {}", resp.status(), resp.body_mut().read_to_string()?);

    let report = get("/reports/aggregate")?;
    println!("aggregate: {} review(s), top-3 {}", report["n_reviews"], report["top3"]);

    let _ = stop.send(());
    rt.block_on(server)??;
    Ok(())
}
