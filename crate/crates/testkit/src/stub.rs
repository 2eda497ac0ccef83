//! Minimal blocking HTTP/1.1 server for exercising HTTP clients.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread;

#[derive(Debug, Clone)]
pub struct StubRequest {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl StubRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

pub enum StubReply {
    Respond {
        status: u16,
        content_type: &'static str,
        body: Vec<u8>,
    },
    /// Read the request, then hold the connection open without answering.
    Hang,
}

impl StubReply {
    pub fn json(status: u16, body: impl Into<Vec<u8>>) -> Self {
        StubReply::Respond {
            status,
            content_type: "application/json",
            body: body.into(),
        }
    }
}

pub struct StubServer {
    pub addr: SocketAddr,
    requests: mpsc::Receiver<StubRequest>,
}

impl StubServer {
    /// Serves every connection with `handler` on a background thread.
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(&StubRequest) -> StubReply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        let handler = std::sync::Arc::new(handler);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let handler = handler.clone();
                let tx = tx.clone();
                thread::spawn(move || serve(stream, &*handler, &tx));
            }
        });
        Self { addr, requests: rx }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    /// Requests received so far.
    pub fn received(&self) -> Vec<StubRequest> {
        self.requests.try_iter().collect()
    }
}

fn serve(
    stream: TcpStream,
    handler: &(dyn Fn(&StubRequest) -> StubReply + Send + Sync),
    tx: &mpsc::Sender<StubRequest>,
) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h).unwrap_or(0) == 0 || h == "\r\n" {
            break;
        }
        if let Some((k, v)) = h.trim_end().split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0usize);
    let mut body = vec![0; len];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let request = StubRequest {
        method,
        path,
        headers,
        body,
    };
    let reply = handler(&request);
    let _ = tx.send(request);
    let mut stream = stream;
    match reply {
        StubReply::Hang => {
            // keep the socket open until the client gives up
            let mut sink = [0u8; 64];
            let _ = stream.read(&mut sink);
        }
        StubReply::Respond {
            status,
            content_type,
            body,
        } => {
            let head = format!(
                "HTTP/1.1 {status} Stub\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                body.len()
            );
            let _ = stream.write_all(head.as_bytes());
            let _ = stream.write_all(&body);
            let _ = stream.flush();
        }
    }
}
