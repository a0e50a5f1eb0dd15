// An owner session against the HTTP API, served in-process: send FEED and
// STATUS, advance the clock, read the inbox and the device snapshot.

use std::error::Error;

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use feeder_core::simenv::{SimConfig, World};
use feeder_gateway::Gateway;

async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> Result<Value, Box<dyn Error>> {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))?;
    let resp = app.clone().oneshot(req).await?;
    let status = resp.status();
    let bytes = resp.into_body().collect().await?.to_bytes();
    let value: Value = serde_json::from_slice(&bytes)?;
    println!("{method} {uri} -> {status} {value}");
    Ok(value)
}

pub async fn session() -> Result<(), Box<dyn Error>> {
    let gw = Gateway::new(World::new(SimConfig::default(), 42)?);
    let app = gw.router();
    let owner = "+8801712345678";

    call(
        &app,
        "POST",
        "/api/sms",
        Some(json!({ "from": owner, "body": "1234 FEED 30" })),
    )
    .await?;
    call(
        &app,
        "POST",
        "/api/sim/advance",
        Some(json!({ "seconds": 30 })),
    )
    .await?;
    call(
        &app,
        "POST",
        "/api/sms",
        Some(json!({ "from": owner, "body": "1234 STATUS" })),
    )
    .await?;
    call(
        &app,
        "POST",
        "/api/sim/advance",
        Some(json!({ "seconds": 30 })),
    )
    .await?;
    let inbox = call(
        &app,
        "GET",
        &format!("/api/phone/{owner}/inbox?since=0"),
        None,
    )
    .await?;
    for m in inbox["messages"].as_array().into_iter().flatten() {
        println!("  inbox: {}", m["body"]);
    }
    call(
        &app,
        "POST",
        "/api/sim/advance",
        Some(json!({ "seconds": 86_400 })),
    )
    .await?;
    call(&app, "GET", "/api/device/state", None).await?;
    Ok(())
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    tokio::runtime::Runtime::new()?.block_on(session())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
