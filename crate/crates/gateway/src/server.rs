//! TCP front end: one thread per connection, one acknowledgement line per
//! record line, in order.

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crate::registry::{Disposition, RejectCode};
use crate::store::Gateway;

/// Most lines handed to the appender in one batch.
const MAX_BATCH: usize = 4096;

pub struct Server {
    listener: TcpListener,
    gateway: Arc<Gateway>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, gateway: Arc<Gateway>) -> io::Result<Self> {
        Ok(Server { listener: TcpListener::bind(addr)?, gateway })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until the process exits.
    pub fn run(self) -> io::Result<()> {
        self.accept_loop(&AtomicBool::new(false))
    }

    /// Serves on a background thread until [`ServerHandle::shutdown`].
    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let join = thread::spawn(move || self.accept_loop(&flag));
        Ok(ServerHandle { addr, stop, join: Some(join) })
    }

    fn accept_loop(&self, stop: &AtomicBool) -> io::Result<()> {
        for conn in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let gateway = Arc::clone(&self.gateway);
            thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = handle_connection(stream, &gateway) {
                    log::info!("connection {peer:?} closed: {e}");
                }
            });
        }
        Ok(())
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    join: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections. Open connections run to completion.
    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop_accepting()
    }

    fn stop_accepting(&mut self) -> io::Result<()> {
        let Some(join) = self.join.take() else { return Ok(()) };
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        join.join().map_err(|_| io::Error::other("server thread panicked"))?
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_accepting();
    }
}

/// Reads lines, batching whatever has already arrived, and answers each
/// with its disposition. A storage failure is reported and ends the
/// connection; the server keeps running.
pub fn handle_connection(stream: TcpStream, gateway: &Gateway) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::with_capacity(1 << 16, stream.try_clone()?);
    let mut writer = BufWriter::with_capacity(1 << 16, stream);
    let mut batch: Vec<Vec<u8>> = Vec::new();
    loop {
        batch.clear();
        let mut line = Vec::new();
        if reader.read_until(b'\n', &mut line)? == 0 {
            return Ok(());
        }
        batch.push(line);
        while batch.len() < MAX_BATCH && reader.buffer().contains(&b'\n') {
            let mut line = Vec::new();
            reader.read_until(b'\n', &mut line)?;
            batch.push(line);
        }
        match gateway.ingest_lines(&batch) {
            Ok(dispositions) => {
                for d in dispositions {
                    writeln!(writer, "{d}")?;
                }
                writer.flush()?;
            }
            Err(e) => {
                log::error!("{e}");
                writeln!(writer, "{}", Disposition::Rejected(RejectCode::StorageFailure))?;
                writer.flush()?;
                return Err(io::Error::other(e.to_string()));
            }
        }
    }
}
