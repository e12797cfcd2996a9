//! Serves a detector over the version-1 wire protocol.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use prfa_core::DetectorOracle;
use tiny_http::{Header, Method, Request, Response, Server};

use crate::wire::{decode_request, encode_response, ErrorBody, Health, DETECT_PATH, HEALTH_PATH, PROTOCOL_VERSION};

/// Running server; dropping it stops the workers.
pub struct ServerHandle {
    server: Arc<Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the workers exit.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.workers.is_empty() {
            return;
        }
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn json(status: u16, body: &impl serde::Serialize) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    Response::from_data(serde_json::to_vec(body).expect("body serializes")).with_status_code(status).with_header(header)
}

fn handle<O: DetectorOracle>(oracle: &O, mut req: Request) {
    let info = oracle.info();
    let resp = match (req.method(), req.url()) {
        (Method::Get, HEALTH_PATH) => {
            json(200, &Health { protocol: PROTOCOL_VERSION, num_classes: info.num_classes, name: info.name })
        }
        (Method::Post, DETECT_PATH) => {
            let mut body = Vec::new();
            match req.as_reader().read_to_end(&mut body) {
                Err(e) => json(400, &ErrorBody::new("unreadable_body", e.to_string())),
                Ok(_) => match decode_request(&body) {
                    Err(e) => json(400, &ErrorBody::new(e.code(), e.to_string())),
                    Ok(image) => match oracle.detect(&image) {
                        Ok(dets) => json(200, &encode_response(&dets, info.num_classes)),
                        Err(e) => json(500, &ErrorBody::new("inference_failed", e.to_string())),
                    },
                },
            }
        }
        _ => json(404, &ErrorBody::new("not_found", format!("no route for {} {}", req.method(), req.url()))),
    };
    let _ = req.respond(resp);
}

/// Binds `addr` and answers requests on `workers` threads.
pub fn serve<O>(addr: &str, oracle: O, workers: usize) -> std::io::Result<ServerHandle>
where
    O: DetectorOracle + Send + Sync + 'static,
{
    let server = Arc::new(Server::http(addr).map_err(std::io::Error::other)?);
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| std::io::Error::other("server is not bound to an IP address"))?;
    let oracle = Arc::new(oracle);
    let workers = (0..workers.max(1))
        .map(|_| {
            let (server, oracle) = (Arc::clone(&server), Arc::clone(&oracle));
            std::thread::spawn(move || {
                for req in server.incoming_requests() {
                    handle(oracle.as_ref(), req);
                }
            })
        })
        .collect();
    Ok(ServerHandle { server, addr, workers })
}
