use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rttp_core::querygen::{GeneratorError, GeneratorRequest, QueryGenerator, RemoteConfig, RemoteGenerator};

struct Mock {
    url: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<String>>>,
    peak: Arc<AtomicUsize>,
    auth: Arc<Mutex<Vec<String>>>,
}

/// One-request-per-connection HTTP server answering every request with
/// `respond(request_number)` as `(status, body)`.
fn serve<F>(respond: F, delay: Duration) -> Mock
where
    F: Fn(usize) -> (u16, String) + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let active = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let auth = Arc::new(Mutex::new(Vec::new()));
    let respond = Arc::new(respond);
    {
        let (hits, bodies, peak, auth) = (hits.clone(), bodies.clone(), peak.clone(), auth.clone());
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let (hits, bodies, active, peak, respond, auth) = (
                    hits.clone(),
                    bodies.clone(),
                    active.clone(),
                    peak.clone(),
                    respond.clone(),
                    auth.clone(),
                );
                thread::spawn(move || {
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut len = 0usize;
                    loop {
                        let mut line = String::new();
                        if reader.read_line(&mut line).unwrap_or(0) == 0 {
                            return;
                        }
                        let line = line.trim_end();
                        if line.is_empty() {
                            break;
                        }
                        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                            len = v.trim().parse().unwrap();
                        }
                        if line.len() > 14 && line[..14].eq_ignore_ascii_case("authorization:") {
                            auth.lock().unwrap().push(line[14..].trim().to_string());
                        }
                    }
                    let mut body = vec![0; len];
                    reader.read_exact(&mut body).unwrap();
                    bodies.lock().unwrap().push(String::from_utf8(body).unwrap());

                    let n = hits.fetch_add(1, Ordering::SeqCst);
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    thread::sleep(delay);
                    active.fetch_sub(1, Ordering::SeqCst);

                    let (status, payload) = respond(n);
                    let reply = format!(
                        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                        payload.len()
                    );
                    let _ = stream.write_all(reply.as_bytes());
                });
            }
        });
    }
    Mock {
        url,
        hits,
        bodies,
        peak,
        auth,
    }
}

fn generator(url: &str) -> RemoteGenerator {
    RemoteGenerator::new(RemoteConfig {
        url: url.to_string(),
        timeout_ms: 2_000,
        backoff_base_ms: 10,
        ..RemoteConfig::default()
    })
    .unwrap()
}

fn request() -> GeneratorRequest {
    GeneratorRequest::new("p1", "Mounts of Mayhem is out", "New mobs arrive.", 3)
}

#[test]
fn parses_ranks_normalizes_and_dedups() {
    let mock = serve(
        |_| {
            (
                200,
                r#"{"queries":[{"text":"Mounts of Mayhem","rank":2},{"text":"Minecraft!","rank":1},{"text":"minecraft","rank":3},{"text":"mobs","rank":4}],"location":{"country":"US","state":"CA"}}"#.into(),
            )
        },
        Duration::ZERO,
    );
    let resp = generator(&mock.url).generate(&request()).unwrap();
    assert_eq!(resp.texts(), vec!["minecraft", "mounts of mayhem", "mobs"]);
    let ranks: Vec<u32> = resp.queries.iter().map(|q| q.rank).collect();
    assert_eq!(ranks, vec![1, 2, 3]);
    assert!(resp
        .queries
        .iter()
        .all(|q| q.generator_id == "remote" && q.post_id == "p1"));
    let loc = resp.location.unwrap();
    assert_eq!((loc.country.as_str(), loc.state.as_deref()), ("US", Some("CA")));

    let sent: serde_json::Value = serde_json::from_str(&mock.bodies.lock().unwrap()[0]).unwrap();
    assert_eq!(sent["post_id"], "p1");
    assert_eq!(sent["max_queries"], 3);
}

#[test]
fn server_errors_are_retried_then_unavailable() {
    let mock = serve(|_| (503, "busy".into()), Duration::ZERO);
    match generator(&mock.url).generate(&request()) {
        Err(GeneratorError::Unavailable { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected unavailable, got {other:?}"),
    }
    assert_eq!(mock.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn transient_failure_recovers() {
    let mock = serve(
        |n| {
            if n == 0 {
                (500, "oops".into())
            } else {
                (200, r#"{"queries":[{"text":"ok","rank":1}]}"#.into())
            }
        },
        Duration::ZERO,
    );
    let resp = generator(&mock.url).generate(&request()).unwrap();
    assert_eq!(resp.texts(), vec!["ok"]);
    assert_eq!(mock.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn malformed_payload_is_protocol_violation_without_retry() {
    let mock = serve(|_| (200, "{\"queries\": 7".into()), Duration::ZERO);
    match generator(&mock.url).generate(&request()) {
        Err(GeneratorError::ProtocolViolation { payload, .. }) => assert_eq!(payload, "{\"queries\": 7"),
        other => panic!("expected protocol violation, got {other:?}"),
    }
    assert_eq!(mock.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let g = RemoteGenerator::new(RemoteConfig {
        url: format!("http://127.0.0.1:{port}/"),
        retries: 1,
        backoff_base_ms: 1,
        timeout_ms: 500,
        ..RemoteConfig::default()
    })
    .unwrap();
    assert!(matches!(
        g.generate(&request()),
        Err(GeneratorError::Unavailable { attempts: 2, .. })
    ));
}

#[test]
fn invalid_request_is_not_sent() {
    let mock = serve(|_| (200, r#"{"queries":[]}"#.into()), Duration::ZERO);
    let bad = GeneratorRequest::new("p", "", "", 3);
    assert!(matches!(
        generator(&mock.url).generate(&bad),
        Err(GeneratorError::InvalidRequest(_))
    ));
    assert_eq!(mock.hits.load(Ordering::SeqCst), 0);
    assert!(matches!(
        RemoteGenerator::new(RemoteConfig::default()),
        Err(GeneratorError::Config(_))
    ));
}

#[test]
fn in_flight_requests_are_bounded() {
    let mock = serve(
        |_| (200, r#"{"queries":[{"text":"q","rank":1}]}"#.into()),
        Duration::from_millis(60),
    );
    let g = Arc::new(
        RemoteGenerator::new(RemoteConfig {
            url: mock.url.clone(),
            max_in_flight: 2,
            ..RemoteConfig::default()
        })
        .unwrap(),
    );
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let g = g.clone();
            thread::spawn(move || g.generate(&request()).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(mock.hits.load(Ordering::SeqCst), 8);
    assert!(mock.peak.load(Ordering::SeqCst) <= 2);
}

#[test]
fn api_token_is_sent_as_bearer_auth() {
    let mock = serve(
        |_| (200, r#"{"queries": [{"text": "q", "rank": 1}]}"#.into()),
        Duration::ZERO,
    );
    generator(&mock.url).generate(&request()).unwrap();
    assert!(mock.auth.lock().unwrap().is_empty());

    let with_token = RemoteGenerator::new(RemoteConfig {
        url: mock.url.clone(),
        api_token: Some("s3cret".into()),
        ..RemoteConfig::default()
    })
    .unwrap();
    with_token.generate(&request()).unwrap();
    assert_eq!(*mock.auth.lock().unwrap(), vec!["Bearer s3cret".to_string()]);
}
