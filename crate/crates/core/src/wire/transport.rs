//! Frames over a byte stream (TCP in demo mode).

use std::io::{self, Read, Write};

use thiserror::Error;

use super::{Message, WireError, WireSession, HEADER_LEN, MAGIC, TAG_LEN};

/// Largest payload a peer may announce before we stop reading.
pub const MAX_PAYLOAD: u32 = 1 << 20;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("announced payload of {0} bytes is too large")]
    TooLarge(u32),
    #[error("peer closed the connection")]
    Closed,
}

pub fn write_frame(w: &mut impl Write, frame: &[u8]) -> io::Result<()> {
    w.write_all(frame)?;
    w.flush()
}

/// Reads exactly one frame. A clean EOF before the first byte is `Closed`.
pub fn read_frame(r: &mut impl Read) -> Result<Vec<u8>, TransportError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..])? {
            0 if got == 0 => return Err(TransportError::Closed),
            0 => return Err(WireError::Truncated.into()),
            n => got += n,
        }
    }
    if header[..2] != MAGIC {
        return Err(WireError::BadMagic.into());
    }
    let len = u32::from_be_bytes(header[4..8].try_into().expect("4 bytes"));
    if len > MAX_PAYLOAD {
        return Err(TransportError::TooLarge(len));
    }
    let mut frame = header.to_vec();
    frame.resize(HEADER_LEN + len as usize + TAG_LEN, 0);
    r.read_exact(&mut frame[HEADER_LEN..])
        .map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => TransportError::Wire(WireError::Truncated),
            _ => TransportError::Io(e),
        })?;
    Ok(frame)
}

/// A session bound to a stream.
pub struct FramedStream<S> {
    pub stream: S,
    pub session: WireSession,
}

impl<S: Read + Write> FramedStream<S> {
    pub fn new(stream: S, session: WireSession) -> Self {
        FramedStream { stream, session }
    }

    pub fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        let frame = self.session.seal(msg);
        write_frame(&mut self.stream, &frame)?;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Message, TransportError> {
        let frame = read_frame(&mut self.stream)?;
        Ok(self.session.open(&frame)?)
    }

    /// Sends `msg` and waits for the reply.
    pub fn request(&mut self, msg: &Message) -> Result<Message, TransportError> {
        self.send(msg)?;
        self.recv()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::LinkKeys;

    #[test]
    fn frames_survive_a_byte_stream() {
        let keys = LinkKeys::from_secret(&[7; 64]);
        let mut a = WireSession::initiator(keys.clone(), 9);
        let mut b = WireSession::responder(keys, 9);
        let msgs = [
            Message::ChannelClosingRequest,
            Message::OpenChannelRequest { capacity: 5 },
        ];
        let mut buf = vec![];
        for m in &msgs {
            write_frame(&mut buf, &a.seal(m)).unwrap();
        }
        let mut r = io::Cursor::new(buf);
        for m in &msgs {
            assert_eq!(b.open(&read_frame(&mut r).unwrap()).unwrap(), *m);
        }
        assert!(matches!(read_frame(&mut r), Err(TransportError::Closed)));
    }

    #[test]
    fn short_and_oversized_frames() {
        let keys = LinkKeys::from_secret(&[7; 64]);
        let mut a = WireSession::initiator(keys, 1);
        let frame = a.seal(&Message::ChannelClosingRequest);
        let mut r = io::Cursor::new(frame[..frame.len() - 1].to_vec());
        assert!(matches!(
            read_frame(&mut r),
            Err(TransportError::Wire(WireError::Truncated))
        ));
        let mut big = frame.clone();
        big[4..8].copy_from_slice(&(MAX_PAYLOAD + 1).to_be_bytes());
        assert!(matches!(
            read_frame(&mut io::Cursor::new(big)),
            Err(TransportError::TooLarge(_))
        ));
    }
}
