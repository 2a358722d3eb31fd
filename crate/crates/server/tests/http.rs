use std::sync::Arc;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use mapcs_core::dataset::validate_dataset;
use mapcs_core::game::{Questionnaire, Role, Session, Stage, TIME_LIMIT_MS};
use mapcs_core::textproc::{Label, Speaker};
use mapcs_server::manager::CreateResponse;
use mapcs_server::wire::{Body, WireMessage};
use mapcs_server::{http, ConditionSet, ManagerConfig, ManualClock, Services, SessionManager};
use serde_json::json;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Server {
    base: String,
    clock: Arc<ManualClock>,
    manager: Arc<SessionManager>,
}

async fn start() -> Server {
    let clock = Arc::new(ManualClock::new(5_000_000));
    let cfg = ManagerConfig {
        conditions: ConditionSet::parse_list("alt_adversarial ins_congruent").unwrap(),
        seed: 8,
        ..Default::default()
    };
    let manager = Arc::new(SessionManager::in_memory(Arc::new(Services::scripted(8)), cfg, clock.clone()));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = http::router(manager.clone(), None);
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    http::spawn_ticker(manager.clone(), Duration::from_millis(20));
    Server { base: format!("127.0.0.1:{}", addr.port()), clock, manager }
}

async fn create(s: &Server, body: serde_json::Value) -> reqwest::Response {
    reqwest::Client::new().post(format!("http://{}/sessions", s.base)).json(&body).send().await.unwrap()
}

async fn connect(s: &Server, c: &CreateResponse, last_seq: u64) -> Socket {
    let url = format!("ws://{}/sessions/{}/ws?token={}", s.base, c.session_id, c.token);
    let (mut ws, _) = connect_async(url).await.unwrap();
    send(&mut ws, &c.session_id, 0, json!({"type": "join", "payload": {"last_seq": last_seq}})).await;
    ws
}

async fn send(ws: &mut Socket, id: &str, seq: u64, mut msg: serde_json::Value) {
    msg["session_id"] = json!(id);
    msg["seq"] = json!(seq);
    ws.send(Message::text(msg.to_string())).await.unwrap();
}

async fn recv(ws: &mut Socket) -> WireMessage {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("timed out waiting for a server message")
            .unwrap()
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

async fn recv_n(ws: &mut Socket, n: usize) -> Vec<WireMessage> {
    let mut out = Vec::new();
    for _ in 0..n {
        out.push(recv(ws).await);
    }
    out
}

fn types(ms: &[WireMessage]) -> Vec<&'static str> {
    ms.iter().map(|m| m.body.type_name()).collect()
}

async fn time_out_game(s: &Server, ws: &mut Socket) -> Vec<WireMessage> {
    s.clock.advance(TIME_LIMIT_MS);
    recv_n(ws, 2).await
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn full_session_over_http_and_websocket() {
    let s = start().await;
    let resp = create(&s, json!({"condition": "alt_adversarial"})).await;
    assert_eq!(resp.status(), 201);
    let c: CreateResponse = resp.json().await.unwrap();
    let id = c.session_id.clone();

    let mut ws = connect(&s, &c, 0).await;
    let first = recv_n(&mut ws, 3).await;
    assert_eq!(types(&first), ["session_config", "game_state", "chat_recv"]);
    let Body::GameState(state) = &first[1].body else { panic!() };
    let game = state.game.as_ref().unwrap();
    assert_eq!(game.human_role, Role::Instructor);
    assert!(game.map.target_path.is_some());

    send(&mut ws, &id, 1, json!({"type": "chat_send", "payload": {"text": "hello"}})).await;
    let reply = recv_n(&mut ws, 2).await;
    let Body::ChatRecv(bot) = &reply[1].body else { panic!() };
    assert_eq!(bot.speaker, Speaker::Bot);
    assert_eq!(bot.label, Label::Spanish);
    assert_eq!(bot.raw_sha256.as_ref().map(String::len), Some(64));

    // The bot's chat message precedes the state its moves produce.
    send(&mut ws, &id, 2, json!({"type": "chat_send", "payload": {"text": "Go down two squares."}})).await;
    let turn = recv_n(&mut ws, 3).await;
    assert_eq!(types(&turn), ["chat_recv", "chat_recv", "game_state"]);

    send(&mut ws, &id, 3, json!({"type": "move", "payload": {"step": "down"}})).await;
    assert_eq!(types(&recv_n(&mut ws, 1).await), ["error"]);
    ws.send(Message::text("{not json")).await.unwrap();
    assert_eq!(types(&recv_n(&mut ws, 1).await), ["error"]);
    send(&mut ws, &id, 3, json!({"type": "chat_send", "payload": {"text": "again"}})).await;
    let Body::Error(e) = recv(&mut ws).await.body else { panic!() };
    assert!(e.message.contains("stale seq"));

    // A second connection resumes after a given seq.
    let mut again = connect(&s, &c, 3).await;
    let resent = recv_n(&mut again, 8).await;
    assert_eq!(resent.first().unwrap().seq, 4);
    assert_eq!(resent.iter().map(|m| m.seq).collect::<Vec<_>>(), (4..12).collect::<Vec<_>>());
    drop(again);

    // Game 1 runs out; game 2 has the participant navigating.
    let over = time_out_game(&s, &mut ws).await;
    assert_eq!(types(&over), ["game_over", "game_state"]);
    let Body::GameState(state) = &over[1].body else { panic!() };
    let game = state.game.as_ref().unwrap();
    assert_eq!(game.human_role, Role::Navigator);
    assert!(game.map.target_path.is_none());

    let map = s.manager.services().maps.get(&game.map.id).unwrap().clone();
    let mut seq = 4;
    let mut last = Vec::new();
    for w in map.target_path.windows(2) {
        let step = w[0].step_to(w[1]).unwrap();
        send(&mut ws, &id, seq, json!({"type": "move", "payload": {"step": step}})).await;
        seq += 1;
        last = recv_n(&mut ws, 1).await;
    }
    assert_eq!(types(&last), ["game_state"]);
    let done = recv_n(&mut ws, 2).await;
    assert_eq!(types(&done), ["game_over", "game_state"]);
    let Body::GameOver(o) = &done[0].body else { panic!() };
    assert!(o.completed);
    assert_eq!(o.route.raw_dtw_cost, 0);

    time_out_game(&s, &mut ws).await;
    let last_game = time_out_game(&s, &mut ws).await;
    let Body::GameState(state) = &last_game[1].body else { panic!() };
    assert_eq!(state.stage, Stage::Questionnaire(3));

    let q = json!({"task_enjoy": 73, "task_success": 0, "difficult_comm": 100, "difficult_ins": 41,
                   "language_background": {"first_language": "spanish", "years_english": "12"}});
    send(&mut ws, &id, seq, json!({"type": "questionnaire_submit", "payload": q.clone()})).await;
    let Body::GameState(state) = recv(&mut ws).await.body else { panic!() };
    assert_eq!(state.stage, Stage::Export);

    let snapshot: Session =
        reqwest::get(format!("http://{}/sessions/{id}?token={}", s.base, c.token)).await.unwrap().json().await.unwrap();
    let expected: Questionnaire = serde_json::from_value(q).unwrap();
    assert_eq!(snapshot.questionnaires[0].responses, expected);

    let export = reqwest::get(format!("http://{}/export", s.base)).await.unwrap();
    assert_eq!(export.headers()["content-type"], "application/x-ndjson");
    let body = export.text().await.unwrap();
    assert_eq!(validate_dataset(&body).unwrap().sessions, 1);
    assert!(body.contains(&id));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn request_errors() {
    let s = start().await;
    let resp = create(&s, json!({"condition": "nope"})).await;
    assert_eq!(resp.status(), 400);
    let body: serde_json::Value = resp.json().await.unwrap();
    assert!(body["error"].as_str().unwrap().contains("nope"));

    let c: CreateResponse = create(&s, json!({})).await.json().await.unwrap();
    assert_eq!(c.condition, "alt_adversarial");
    let c2: CreateResponse = create(&s, json!({})).await.json().await.unwrap();
    assert_eq!(c2.condition, "ins_congruent");

    let bad = format!("ws://{}/sessions/{}/ws?token=wrong", s.base, c.session_id);
    assert!(connect_async(bad).await.is_err());
    let status =
        reqwest::get(format!("http://{}/sessions/{}?token=wrong", s.base, c.session_id)).await.unwrap().status();
    assert_eq!(status, 401);
    let status = reqwest::get(format!("http://{}/sessions/missing?token=x", s.base)).await.unwrap().status();
    assert_eq!(status, 404);

    let export = reqwest::get(format!("http://{}/export", s.base)).await.unwrap().text().await.unwrap();
    assert_eq!(export.lines().count(), 1);
    assert_eq!(reqwest::get(format!("http://{}/health", s.base)).await.unwrap().text().await.unwrap(), "ok");
}
