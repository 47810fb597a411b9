use rhumo_client::{Client, ClientError};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpListener;

/// Serves one canned HTTP response and returns the server's base URL.
async fn canned(status: &str, content_type: &str, body: &'static str) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let head = format!(
        "HTTP/1.1 {status}\r\ncontent-type: {content_type}\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
        body.len()
    );
    tokio::spawn(async move {
        let (mut sock, _) = listener.accept().await.unwrap();
        let mut buf = [0u8; 4096];
        let _ = sock.read(&mut buf).await;
        sock.write_all(head.as_bytes()).await.unwrap();
        sock.write_all(body.as_bytes()).await.unwrap();
    });
    format!("http://{addr}")
}

#[tokio::test]
async fn json_error_bodies_keep_their_code() {
    let base = canned("409 Conflict", "application/json", r#"{"code":"batch_pending","message":"answer first"}"#).await;
    let err = Client::new(base).next_batch("s1").await.unwrap_err();
    assert_eq!(err.code(), Some("batch_pending"));
    match err {
        ClientError::Api { status, body } => {
            assert_eq!(status, 409);
            assert_eq!(body.message, "answer first");
        }
        other => panic!("unexpected {other}"),
    }
}

#[tokio::test]
async fn non_json_error_bodies_are_kept_verbatim() {
    let base = canned("502 Bad Gateway", "text/plain", "upstream down").await;
    let err = Client::new(format!("{base}/")).status("s1").await.unwrap_err();
    assert_eq!(err.code(), Some("unknown"));
    assert!(err.to_string().contains("upstream down"), "{err}");
}

#[tokio::test]
async fn unreachable_server_is_a_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = Client::new(format!("http://{addr}")).status("s1").await.unwrap_err();
    assert!(matches!(err, ClientError::Transport(_)), "{err}");
    assert_eq!(err.code(), None);
}
