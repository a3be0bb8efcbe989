//! Websocket service: one producer thread fills the latest-frame buffer, one
//! processor thread runs the pipeline and broadcasts annotated frames, and one
//! thread per client relays commands into the processor's queue.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use tungstenite::{Error as WsError, Message};

use super::buffer::LatestFrameBuffer;
use super::engine::{Command, Frame, Processor};
use super::protocol::{ClientMessage, ServerMessage};
use super::source::FrameSource;
use super::viz::{png_base64, render_png};
use crate::error::Result;

const POLL: Duration = Duration::from_millis(5);

type Clients = Arc<Mutex<Vec<Sender<String>>>>;

/// Running service. Dropping it stops every thread.
pub struct ServeHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServeHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn is_running(&self) -> bool {
        !self.stop.load(Ordering::SeqCst)
    }

    /// Blocks until the service stops on its own (it does not, unless an
    /// internal thread fails).
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_all();
    }

    fn stop_all(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServeHandle {
    fn drop(&mut self) {
        self.stop_all();
    }
}

/// Frame dimensions shared with client threads for bounds checks.
#[derive(Default)]
struct Dims(AtomicU64);

impl Dims {
    fn set(&self, w: usize, h: usize) {
        self.0.store(((w as u64) << 32) | h as u64, Ordering::SeqCst);
    }

    fn get(&self) -> (u32, u32) {
        let v = self.0.load(Ordering::SeqCst);
        ((v >> 32) as u32, v as u32)
    }
}

/// Binds `addr` and starts serving. Port 0 picks a free port.
pub fn gateway_serve(
    mut source: Box<dyn FrameSource>,
    mut processor: Processor,
    addr: impl ToSocketAddrs,
) -> Result<ServeHandle> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let buffer: Arc<LatestFrameBuffer<Frame>> = Arc::new(LatestFrameBuffer::new());
    let clients: Clients = Arc::default();
    let dims = Arc::new(Dims::default());
    let (cmd_tx, cmd_rx) = mpsc::channel::<Command>();
    let mut threads = Vec::new();

    {
        let (stop, buffer) = (Arc::clone(&stop), Arc::clone(&buffer));
        threads.push(std::thread::spawn(move || {
            let interval = source.interval();
            while !stop.load(Ordering::SeqCst) {
                match source.next_frame() {
                    Ok(Some(f)) => {
                        buffer.publish(f);
                    }
                    Ok(None) => break,
                    Err(e) => {
                        log::error!("frame source failed: {e}");
                        break;
                    }
                }
                std::thread::sleep(interval);
            }
        }));
    }

    {
        let (stop, buffer, clients, dims) = (Arc::clone(&stop), Arc::clone(&buffer), Arc::clone(&clients), Arc::clone(&dims));
        threads.push(std::thread::spawn(move || {
            let mut last = 0;
            while !stop.load(Ordering::SeqCst) {
                let Some((seq, frame)) = buffer.take_latest().filter(|(s, _)| *s != last) else {
                    std::thread::sleep(POLL);
                    continue;
                };
                last = seq;
                dims.set(frame.field.width(), frame.field.height());
                for cmd in cmd_rx.try_iter() {
                    processor.submit(cmd);
                }
                let result = match processor.process(&frame) {
                    Ok(r) => r,
                    Err(e) => {
                        log::error!("pipeline stopped: {e}");
                        stop.store(true, Ordering::SeqCst);
                        break;
                    }
                };
                let png = match render_png(&frame.field, &result.annotations) {
                    Ok(p) => png_base64(&p),
                    Err(e) => {
                        log::warn!("visualization failed: {e}");
                        String::new()
                    }
                };
                let msg = ServerMessage::Frame {
                    seq,
                    width: frame.field.width() as u32,
                    height: frame.field.height() as u32,
                    png,
                    annotations: result.annotations,
                    status: result.status,
                    timings: processor.stats().summary(),
                }
                .to_json();
                clients
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .retain(|c| c.send(msg.clone()).is_ok());
            }
        }));
    }

    {
        let stop = Arc::clone(&stop);
        threads.push(std::thread::spawn(move || {
            let mut sessions = Vec::new();
            while !stop.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        log::info!("client connected from {peer}");
                        let (tx, rx) = mpsc::channel();
                        clients.lock().unwrap_or_else(|e| e.into_inner()).push(tx);
                        let (stop, cmd_tx, dims) = (Arc::clone(&stop), cmd_tx.clone(), Arc::clone(&dims));
                        sessions.push(std::thread::spawn(move || {
                            if let Err(e) = client_session(stream, rx, cmd_tx, &dims, &stop) {
                                log::info!("client {peer} closed: {e}");
                            }
                        }));
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(POLL),
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
            for s in sessions {
                let _ = s.join();
            }
        }));
    }

    log::info!("gateway listening on ws://{local}");
    Ok(ServeHandle {
        addr: local,
        stop,
        threads,
    })
}

#[allow(clippy::result_large_err)]
fn client_session(
    stream: TcpStream,
    outbound: Receiver<String>,
    commands: Sender<Command>,
    dims: &Dims,
    stop: &AtomicBool,
) -> std::result::Result<(), WsError> {
    stream.set_nonblocking(false)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => WsError::Io(ErrorKind::WouldBlock.into()),
    })?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    loop {
        if stop.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            return Ok(());
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                let reply = ClientMessage::parse(text.as_str()).and_then(|m| {
                    let (w, h) = dims.get();
                    m.into_command(w, h)
                });
                match reply {
                    Ok(cmd) => {
                        let _ = commands.send(cmd);
                    }
                    Err(err) => ws.send(Message::text(err.into_message().to_json()))?,
                }
            }
            Ok(Message::Binary(_)) => {
                let err = ServerMessage::error(super::protocol::ErrorCode::BadMessage, "expected a text frame");
                ws.send(Message::text(err.to_json()))?;
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(WsError::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
        for msg in outbound.try_iter() {
            ws.send(Message::text(msg))?;
        }
    }
}
