//! Minimal node-side sender used by replay and tests.

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::thread;

use crate::registry::Disposition;

/// Sends every line over one connection and collects the acknowledgements.
/// Writing and reading run concurrently so neither side stalls on a full
/// socket buffer.
pub fn send_lines<L: AsRef<[u8]> + Sync>(addr: impl ToSocketAddrs, lines: &[L]) -> io::Result<Vec<Disposition>> {
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    let write_half = stream.try_clone()?;
    thread::scope(|s| {
        let sender = s.spawn(move || -> io::Result<()> {
            let mut w = BufWriter::with_capacity(1 << 16, &write_half);
            for l in lines {
                let l = l.as_ref();
                w.write_all(l)?;
                if l.last() != Some(&b'\n') {
                    w.write_all(b"\n")?;
                }
            }
            w.flush()?;
            write_half.shutdown(Shutdown::Write)
        });
        let mut acks = Vec::with_capacity(lines.len());
        let mut reader = BufReader::new(&stream);
        let mut line = String::new();
        while acks.len() < lines.len() {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                break;
            }
            let d = Disposition::parse(&line)
                .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("bad acknowledgement {line:?}")))?;
            acks.push(d);
        }
        sender.join().map_err(|_| io::Error::other("sender thread panicked"))??;
        Ok(acks)
    })
}
