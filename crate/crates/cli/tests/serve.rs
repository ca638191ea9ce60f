//! `sentinel serve` process-level behavior: announce line, live HTTP,
//! graceful SIGTERM drain, and listen/fail-open precedence.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

/// An address that can never bind, used to prove a later-precedence source
/// was consulted (a low port would work for non-root users, but these tests
/// may run as root).
const POISON: &str = "256.1.1.1:0";

fn sentinel(dir: &Path) -> Command {
    let mut command = Command::new(env!("CARGO_BIN_EXE_sentinel"));
    command
        .current_dir(dir)
        .env_remove("SENTINEL_CONFIG")
        .env_remove("SENTINEL_LISTEN")
        .env_remove("SENTINEL_FAIL_OPEN");
    command
}

/// Spawns the server and blocks until it prints its announce line.
fn spawn_server(mut command: Command) -> (Child, String, BufReader<std::process::ChildStdout>) {
    let mut child = command
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawning sentinel serve");
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut line = String::new();
    stdout.read_line(&mut line).expect("reading announce line");
    let addr = line
        .strip_prefix("listening on ")
        .and_then(|rest| rest.split(" (engine ").next())
        .unwrap_or_else(|| panic!("unexpected announce line: {line:?}"))
        .to_owned();
    assert!(line.contains("(engine "), "{line:?}");
    (child, addr, stdout)
}

/// One-shot HTTP/1.0 request over a raw socket so we don't need a client
/// runtime inside the test.
fn http_get(addr: &str, path: &str) -> String {
    let mut stream = TcpStream::connect(addr).expect("connecting to server");
    stream
        .set_read_timeout(Some(Duration::from_secs(5)))
        .unwrap();
    write!(stream, "GET {path} HTTP/1.0\r\nHost: {addr}\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).expect("reading response");
    response
}

#[test]
fn sigterm_drains_and_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let mut command = sentinel(dir.path());
    command.args(["serve", "--listen", "127.0.0.1:0"]);
    let (mut child, addr, mut stdout) = spawn_server(command);

    let response = http_get(&addr, "/v1/health");
    assert!(response.starts_with("HTTP/1.0 200"), "{response}");
    assert!(response.contains("\"ready\":true"), "{response}");

    unsafe {
        assert_eq!(libc::kill(child.id() as libc::pid_t, libc::SIGTERM), 0);
    }
    let mut rest = String::new();
    stdout.read_to_string(&mut rest).unwrap();
    assert!(rest.contains("drained"), "{rest:?}");
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn listen_precedence_is_flag_then_env_then_config() {
    let dir = tempfile::tempdir().unwrap();
    let poisoned = dir.path().join("poisoned.toml");
    std::fs::write(&poisoned, format!("[gateway]\nlisten = \"{POISON}\"\n")).unwrap();
    let poisoned = poisoned.to_str().unwrap().to_owned();

    // The config's address alone sinks the server.
    let output = sentinel(dir.path())
        .args(["serve", "--config", &poisoned])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let err = String::from_utf8(output.stderr).unwrap();
    assert!(err.contains("bind"), "{err}");

    // The flag overrides the poisoned config...
    let mut command = sentinel(dir.path());
    command.args(["serve", "--config", &poisoned, "--listen", "127.0.0.1:0"]);
    let (mut child, addr, _stdout) = spawn_server(command);
    assert!(http_get(&addr, "/v1/health").contains("200"));
    unsafe {
        libc::kill(child.id() as libc::pid_t, libc::SIGTERM);
    }
    assert_eq!(child.wait().unwrap().code(), Some(0));

    // ...the environment also overrides the poisoned config...
    let mut command = sentinel(dir.path());
    command
        .args(["serve", "--config", &poisoned])
        .env("SENTINEL_LISTEN", "127.0.0.1:0");
    let (mut child, addr, _stdout) = spawn_server(command);
    assert!(http_get(&addr, "/v1/health").contains("200"));
    unsafe {
        libc::kill(child.id() as libc::pid_t, libc::SIGTERM);
    }
    assert_eq!(child.wait().unwrap().code(), Some(0));

    // ...and the flag beats a poisoned environment.
    let mut command = sentinel(dir.path());
    command
        .args(["serve", "--listen", "127.0.0.1:0"])
        .env("SENTINEL_LISTEN", POISON);
    let (mut child, addr, _stdout) = spawn_server(command);
    assert!(http_get(&addr, "/v1/health").contains("200"));
    unsafe {
        libc::kill(child.id() as libc::pid_t, libc::SIGTERM);
    }
    assert_eq!(child.wait().unwrap().code(), Some(0));
}

#[test]
fn fail_open_env_must_be_a_boolean() {
    let dir = tempfile::tempdir().unwrap();
    let output = sentinel(dir.path())
        .args(["serve", "--listen", "127.0.0.1:0"])
        .env("SENTINEL_FAIL_OPEN", "banana")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let err = String::from_utf8(output.stderr).unwrap();
    assert!(err.contains("must be a boolean"), "{err}");
}
