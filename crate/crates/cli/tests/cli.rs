//! End-to-end CLI test: fit -> probe -> run (local HTTP mock) -> judge ->
//! review --script -> metrics -> report, plus baseline and rl-check.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::Command;

fn steer() -> Command {
    Command::new(env!("CARGO_BIN_EXE_steer"))
}

fn run_ok(cmd: &mut Command) -> String {
    let output = cmd.output().expect("spawn steer");
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

/// Minimal chat-completions server: echoes the source part of each prompt
/// as the rewrite; answers Yes to judge prompts. Stops after `expected`
/// requests.
fn spawn_mock_server(expected: usize) -> (String, std::thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        for _ in 0..expected {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut tmp = [0u8; 8192];
            let mut header_end = 0usize;
            let mut content_length = 0usize;
            loop {
                let n = stream.read(&mut tmp).unwrap();
                if n == 0 {
                    break;
                }
                buf.extend_from_slice(&tmp[..n]);
                if header_end == 0 {
                    if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                        header_end = pos + 4;
                        for line in String::from_utf8_lossy(&buf[..pos]).lines() {
                            if let Some(v) = line.to_lowercase().strip_prefix("content-length:") {
                                content_length = v.trim().parse().unwrap_or(0);
                            }
                        }
                    }
                }
                if header_end > 0 && buf.len() >= header_end + content_length {
                    break;
                }
            }
            let body: serde_json::Value =
                serde_json::from_slice(&buf[header_end..header_end + content_length]).unwrap();
            let content = body["messages"][0]["content"].as_str().unwrap_or_default();
            let reply = if content.contains("impartial judge") {
                "{\"answer\": \"Yes\", \"rationale\": \"same story\"}".to_string()
            } else {
                let source = content.split("\n\n").last().unwrap_or_default();
                format!("Sure, here's the rewritten text:\n{source} and they never believe it honestly.")
            };
            let response_body =
                format!("{{\"choices\":[{{\"message\":{{\"content\":{}}}}}]}}", serde_json::to_string(&reply).unwrap());
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{response_body}",
                response_body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1"), handle)
}

fn write_corpus(path: &Path, n: usize) {
    let vocab = [
        "river", "story", "garden", "mountain", "letter", "answer", "window", "market",
        "evening", "bridge", "village", "machine", "journey", "silence", "harbor", "meadow",
    ];
    let connectors = ["the", "a", "went", "under", "quickly", "they", "and", "never"];
    let mut lines = Vec::new();
    for i in 0..n {
        let mut words = Vec::new();
        for w in 0..(70 + (i * 37) % 300) {
            if w % 4 == 0 {
                words.push(connectors[(w / 4 + i) % connectors.len()]);
            } else {
                words.push(vocab[(w * 13 + i * 7) % vocab.len()]);
            }
        }
        let mut text = String::new();
        for (k, w) in words.iter().enumerate() {
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(w);
            if k % 9 == 8 {
                text.push('.');
            }
        }
        text.push('.');
        lines.push(format!(
            "{{\"id\":\"doc{i:03}\",\"source\":\"fixture\",\"text\":{}}}",
            serde_json::to_string(&text).unwrap()
        ));
    }
    std::fs::write(path, lines.join("\n")).unwrap();
}

#[test]
fn full_cli_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    write_corpus(&corpus, 60);

    // fit
    let config_path = dir.path().join("goalspace.json");
    let stdout = run_ok(steer().args([
        "fit",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        config_path.to_str().unwrap(),
    ]));
    assert!(stdout.contains("reading_difficulty"));
    assert!(config_path.exists());

    // probe
    let probe_path = dir.path().join("probe.jsonl");
    let stdout = run_ok(steer().args([
        "probe",
        "--corpus",
        corpus.to_str().unwrap(),
        "--config",
        config_path.to_str().unwrap(),
        "--sources",
        "4",
        "--goals-per-source",
        "2",
        "--active",
        "2",
        "--strategy",
        "direct+negative",
        "--seed",
        "7",
        "--out",
        probe_path.to_str().unwrap(),
    ]));
    assert!(stdout.contains("8 probe items"));

    // Probe files are reproducible byte-for-byte.
    let probe_path2 = dir.path().join("probe2.jsonl");
    run_ok(steer().args([
        "probe",
        "--corpus",
        corpus.to_str().unwrap(),
        "--config",
        config_path.to_str().unwrap(),
        "--sources",
        "4",
        "--goals-per-source",
        "2",
        "--active",
        "2",
        "--strategy",
        "direct+negative",
        "--seed",
        "7",
        "--out",
        probe_path2.to_str().unwrap(),
    ]));
    assert_eq!(std::fs::read(&probe_path).unwrap(), std::fs::read(&probe_path2).unwrap());

    // run: 8 completions against the mock server.
    let (url, server) = spawn_mock_server(8);
    let responses_path = dir.path().join("responses.jsonl");
    let stdout = run_ok(steer().args([
        "run",
        "--probe",
        probe_path.to_str().unwrap(),
        "--endpoint",
        &url,
        "--model",
        "mock-model",
        "--parallel",
        "2",
        "--out",
        responses_path.to_str().unwrap(),
    ]));
    assert!(stdout.contains("8 records (8 usable)"), "stdout: {stdout}");
    server.join().unwrap();

    // baseline
    let stdout = run_ok(steer().args([
        "baseline",
        "--probe",
        probe_path.to_str().unwrap(),
        "--trials",
        "200",
        "--seed",
        "3",
    ]));
    assert!(stdout.contains("random baseline median steering error"));

    // judge: 8 more requests.
    let (url, server) = spawn_mock_server(8);
    let judgments_path = dir.path().join("judgments.jsonl");
    let stdout = run_ok(steer().args([
        "judge",
        "--responses",
        responses_path.to_str().unwrap(),
        "--probe",
        probe_path.to_str().unwrap(),
        "--endpoint",
        &url,
        "--model",
        "mock-judge",
        "--out",
        judgments_path.to_str().unwrap(),
    ]));
    assert!(stdout.contains("8 judgments (0 flagged)"), "stdout: {stdout}");
    server.join().unwrap();

    // review with a scripted decision file (all Yes verdicts sampled into
    // the queue; approve everything).
    let script_path = dir.path().join("review_script.txt");
    std::fs::write(&script_path, "a\n".repeat(8)).unwrap();
    let decisions_path = dir.path().join("decisions.jsonl");
    let stdout = run_ok(steer().args([
        "review",
        "--judgments",
        judgments_path.to_str().unwrap(),
        "--responses",
        responses_path.to_str().unwrap(),
        "--probe",
        probe_path.to_str().unwrap(),
        "--out",
        decisions_path.to_str().unwrap(),
        "--script",
        script_path.to_str().unwrap(),
    ]));
    assert!(stdout.contains("8 decisions"), "stdout: {stdout}");

    // metrics
    let metrics_path = dir.path().join("metrics.jsonl");
    let stdout = run_ok(steer().args([
        "metrics",
        "--responses",
        responses_path.to_str().unwrap(),
        "--probe",
        probe_path.to_str().unwrap(),
        "--decisions",
        decisions_path.to_str().unwrap(),
        "--out",
        metrics_path.to_str().unwrap(),
    ]));
    assert!(stdout.contains("8 metric records"), "stdout: {stdout}");
    assert!(stdout.contains("steering_error: median"));

    // metrics --binned prints the binned summary.
    let stdout = run_ok(steer().args([
        "metrics",
        "--responses",
        responses_path.to_str().unwrap(),
        "--probe",
        probe_path.to_str().unwrap(),
        "--out",
        dir.path().join("metrics_binned.jsonl").to_str().unwrap(),
        "--binned",
    ]));
    assert!(stdout.contains("binned_steering_error"));

    // report
    let report_dir = dir.path().join("report");
    let stdout = run_ok(steer().args([
        "report",
        "--metrics",
        metrics_path.to_str().unwrap(),
        "--out",
        report_dir.to_str().unwrap(),
        "--grid",
        "6",
    ]));
    assert!(stdout.contains("report ->"));
    assert!(report_dir.join("report.json").exists());
    assert!(report_dir.join("flow_reading_difficulty_formality_vectors.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["n_records"], 8);

    // rl-check over a small rollout-group fixture.
    let groups_path = dir.path().join("groups.jsonl");
    std::fs::write(
        &groups_path,
        concat!(
            "{\"rewards\":[0.5,-0.2,0.1,0.4],",
            "\"token_logprobs_policy\":[[-0.1,-0.2],[-0.4],[-0.3,-0.1,-0.2],[-0.2]],",
            "\"token_logprobs_ref\":[[-0.15,-0.2],[-0.35],[-0.3,-0.15,-0.2],[-0.25]],",
            "\"z0\":[0.5,0.5],\"z_star\":[0.7,0.5]}\n",
            "{\"rewards\":[1.0,1.0],",
            "\"token_logprobs_policy\":[[-0.5],[-0.5]],",
            "\"token_logprobs_ref\":[[-0.5],[-0.5]]}\n",
        ),
    )
    .unwrap();
    let stdout = run_ok(steer().args([
        "rl-check",
        "--groups",
        groups_path.to_str().unwrap(),
        "--beta",
        "0.01",
        "--lambda",
        "1.0",
        "--tau",
        "1.0",
        "--k",
        "2",
    ]));
    assert!(stdout.contains("regularizer"), "stdout: {stdout}");
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3); // header + two groups
    // Identity group: zero objective.
    assert!(lines[2].trim_end().ends_with("0.000000"), "line: {}", lines[2]);
}

#[test]
fn run_is_resumable_from_the_journal() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    write_corpus(&corpus, 40);
    let probe_path = dir.path().join("probe.jsonl");
    run_ok(steer().args([
        "probe",
        "--corpus",
        corpus.to_str().unwrap(),
        "--sources",
        "3",
        "--goals-per-source",
        "1",
        "--active",
        "1",
        "--strategy",
        "direct",
        "--seed",
        "1",
        "--out",
        probe_path.to_str().unwrap(),
    ]));

    let (url, server) = spawn_mock_server(3);
    let responses_path = dir.path().join("responses.jsonl");
    run_ok(steer().args([
        "run",
        "--probe",
        probe_path.to_str().unwrap(),
        "--endpoint",
        &url,
        "--model",
        "m",
        "--out",
        responses_path.to_str().unwrap(),
    ]));
    server.join().unwrap();
    let first = std::fs::read_to_string(&responses_path).unwrap();

    // Rerun over the same journal: no requests are sent (the server would
    // panic on an unexpected connection after `expected` is exhausted, and
    // joining would hang; expected = 0 means accept nothing).
    let (url, server) = spawn_mock_server(0);
    let stdout = run_ok(steer().args([
        "run",
        "--probe",
        probe_path.to_str().unwrap(),
        "--endpoint",
        &url,
        "--model",
        "m",
        "--out",
        responses_path.to_str().unwrap(),
    ]));
    server.join().unwrap();
    assert!(stdout.contains("3 records"));
    let second = std::fs::read_to_string(&responses_path).unwrap();
    assert_eq!(first, second, "journal must be unchanged on resume");
}
