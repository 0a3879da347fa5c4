//! Wire protocol for codecs served by an external process.
//!
//! Frames travel as
//!
//! ```text
//! "VLF1" | version: u16 LE | n_queries: u32 LE | dim: u32 LE | n*d x f32 LE (row-major)
//! ```
//!
//! and requests/responses are length-prefixed messages:
//!
//! ```text
//! request:  op: u8     | body_len: u32 LE | body
//! response: status: u8 | body_len: u32 LE | body
//! ```
//!
//! One request is in flight per connection. See `PROTOCOL.md` for body
//! layouts and hex dumps.

use std::io::{self, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use crate::codec::{Image, SemanticCodec, TextEstimate};
use crate::error::{Error, Result};
use crate::feature_frame::{check_geometry, FeatureFrame};
use crate::raster::{decode_raster, encode_pnm16};

pub const FRAME_MAGIC: [u8; 4] = *b"VLF1";
pub const FRAME_VERSION: u16 = 1;
pub const FRAME_HEADER_LEN: usize = 14;
/// Upper bound on a message body, to fail fast on corrupt length fields.
pub const MAX_BODY_LEN: u32 = 1 << 30;

/// A feature frame as carried on the wire, in single precision.
#[derive(Debug, Clone)]
pub struct BridgeFrame {
    pub n_queries: u32,
    pub dim: u32,
    pub payload: Vec<f32>,
}

impl PartialEq for BridgeFrame {
    /// Bitwise payload comparison, so `-0.0 != 0.0` and NaN payloads compare
    /// by representation.
    fn eq(&self, other: &Self) -> bool {
        self.n_queries == other.n_queries
            && self.dim == other.dim
            && self.payload.len() == other.payload.len()
            && self
                .payload
                .iter()
                .zip(&other.payload)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl BridgeFrame {
    pub fn from_feature(frame: &FeatureFrame) -> Self {
        Self {
            n_queries: frame.n_queries() as u32,
            dim: frame.dim() as u32,
            payload: frame.as_slice().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_feature(&self) -> Result<FeatureFrame> {
        FeatureFrame::new(
            self.n_queries as usize,
            self.dim as usize,
            self.payload.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_HEADER_LEN + 4 * self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&FRAME_MAGIC);
        out.extend_from_slice(&FRAME_VERSION.to_le_bytes());
        out.extend_from_slice(&self.n_queries.to_le_bytes());
        out.extend_from_slice(&self.dim.to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FRAME_HEADER_LEN {
            return Err(Error::Protocol(format!(
                "frame of {} bytes is shorter than its header",
                bytes.len()
            )));
        }
        if bytes[..4] != FRAME_MAGIC {
            return Err(Error::Protocol(format!(
                "bad frame magic {:02x?}",
                &bytes[..4]
            )));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FRAME_VERSION {
            return Err(Error::Version(format!(
                "frame version {version}, expected {FRAME_VERSION}"
            )));
        }
        let n_queries = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes"));
        let dim = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes"));
        check_geometry(n_queries as usize, dim as usize)?;
        let count = n_queries as usize * dim as usize;
        let body = &bytes[FRAME_HEADER_LEN..];
        if body.len() != 4 * count {
            return Err(Error::Protocol(format!(
                "{n_queries}x{dim} frame needs {} payload bytes, got {}",
                4 * count,
                body.len()
            )));
        }
        let payload = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self {
            n_queries,
            dim,
            payload,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Op {
    EncodeImage = 1,
    DecodeText = 2,
    DecodeImage = 3,
    Score = 4,
}

impl Op {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Op::EncodeImage),
            2 => Some(Op::DecodeText),
            3 => Some(Op::DecodeImage),
            4 => Some(Op::Score),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    Error = 1,
}

/// A raw message: the leading byte (op code or status) and the body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub code: u8,
    pub body: Vec<u8>,
}

pub fn write_message<W: Write>(w: &mut W, code: u8, body: &[u8]) -> Result<()> {
    let len = u32::try_from(body.len())
        .ok()
        .filter(|&l| l <= MAX_BODY_LEN)
        .ok_or_else(|| Error::Protocol(format!("body of {} bytes is too large", body.len())))?;
    w.write_all(&[code])?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(body)?;
    w.flush()?;
    Ok(())
}

/// Reads one message. Returns `Ok(None)` on a clean end of stream before the
/// first byte; a stream cut inside a message is an error.
pub fn read_message<R: Read>(r: &mut R) -> Result<Option<Message>> {
    let mut head = [0u8; 5];
    let mut got = 0;
    while got < head.len() {
        match r.read(&mut head[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(Error::Protocol(
                    "stream closed inside a message header".into(),
                ))
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(head[1..5].try_into().expect("4 bytes"));
    if len > MAX_BODY_LEN {
        return Err(Error::Protocol(format!(
            "declared body length {len} exceeds limit"
        )));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::Protocol(format!("stream closed inside a {len}-byte body"))
        } else {
            e.into()
        }
    })?;
    Ok(Some(Message {
        code: head[0],
        body,
    }))
}

/// Body of a SCORE request: metric name, candidate and reference, each on
/// its own line.
pub fn score_body(metric: &str, candidate: &str, reference: &str) -> Vec<u8> {
    format!(
        "{}\n{}\n{}",
        metric,
        candidate.replace('\n', " "),
        reference.replace('\n', " ")
    )
    .into_bytes()
}

/// Client side of one bridge connection.
pub struct BridgeClient<S> {
    stream: S,
}

impl<S: Read + Write> BridgeClient<S> {
    pub fn new(stream: S) -> Self {
        Self { stream }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }

    /// Sends a raw request and waits for its response.
    pub fn call(&mut self, op: u8, body: &[u8]) -> Result<Vec<u8>> {
        write_message(&mut self.stream, op, body)?;
        let reply = read_message(&mut self.stream)?
            .ok_or_else(|| Error::Protocol("connection closed before a response".into()))?;
        match reply.code {
            0 => Ok(reply.body),
            1 => Err(Error::Protocol(format!(
                "remote error: {}",
                String::from_utf8_lossy(&reply.body)
            ))),
            s => Err(Error::Protocol(format!("unknown response status {s}"))),
        }
    }

    pub fn encode_image(&mut self, image: &Image) -> Result<FeatureFrame> {
        let body = self.call(Op::EncodeImage as u8, &encode_pnm16(image)?)?;
        BridgeFrame::decode(&body)?.to_feature()
    }

    pub fn decode_text(&mut self, frame: &FeatureFrame) -> Result<String> {
        let body = self.call(
            Op::DecodeText as u8,
            &BridgeFrame::from_feature(frame).encode(),
        )?;
        String::from_utf8(body).map_err(|e| Error::Protocol(format!("text is not UTF-8: {e}")))
    }

    pub fn decode_image(&mut self, frame: &FeatureFrame) -> Result<Image> {
        let body = self.call(
            Op::DecodeImage as u8,
            &BridgeFrame::from_feature(frame).encode(),
        )?;
        decode_raster(&body)
    }

    pub fn score(&mut self, metric: &str, candidate: &str, reference: &str) -> Result<f64> {
        let body = self.call(Op::Score as u8, &score_body(metric, candidate, reference))?;
        let text = String::from_utf8_lossy(&body);
        text.trim()
            .parse()
            .map_err(|_| Error::Protocol(format!("score `{text}` is not a number")))
    }
}

/// Standard streams of a spawned codec process, as one duplex stream.
pub struct ChildStream {
    child: Child,
    stdin: ChildStdin,
    stdout: ChildStdout,
}

impl ChildStream {
    /// Starts `command` (split on whitespace) with piped stdin/stdout.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty bridge command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Config(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self {
            child,
            stdin,
            stdout,
        })
    }
}

impl Read for ChildStream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        self.stdout.read(buf)
    }
}

impl Write for ChildStream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.stdin.write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.stdin.flush()
    }
}

impl Drop for ChildStream {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub trait Duplex: Read + Write + Send {}
impl<T: Read + Write + Send> Duplex for T {}

/// [`SemanticCodec`] backed by a remote process. Calls are serialized over a
/// single connection.
pub struct BridgeCodec {
    shape: (usize, usize),
    client: Mutex<BridgeClient<Box<dyn Duplex>>>,
}

impl BridgeCodec {
    pub fn new(stream: Box<dyn Duplex>, n_queries: usize, dim: usize) -> Result<Self> {
        check_geometry(n_queries, dim)?;
        Ok(Self {
            shape: (n_queries, dim),
            client: Mutex::new(BridgeClient::new(stream)),
        })
    }

    pub fn spawn(command: &str, n_queries: usize, dim: usize) -> Result<Self> {
        Self::new(Box::new(ChildStream::spawn(command)?), n_queries, dim)
    }

    fn with_client<T>(
        &self,
        f: impl FnOnce(&mut BridgeClient<Box<dyn Duplex>>) -> Result<T>,
    ) -> Result<T> {
        let mut guard = self
            .client
            .lock()
            .map_err(|_| Error::Protocol("bridge connection poisoned".into()))?;
        f(&mut guard)
    }

    pub fn score(&self, metric: &str, candidate: &str, reference: &str) -> Result<f64> {
        self.with_client(|c| c.score(metric, candidate, reference))
    }
}

impl SemanticCodec for BridgeCodec {
    fn frame_shape(&self) -> (usize, usize) {
        self.shape
    }

    fn encode(&self, image: &Image) -> Result<FeatureFrame> {
        let frame = self.with_client(|c| c.encode_image(image))?;
        self.check_frame(&frame)?;
        Ok(frame)
    }

    fn decode_text(&self, frame: &FeatureFrame) -> Result<TextEstimate> {
        self.check_frame(frame)?;
        let text = self.with_client(|c| c.decode_text(frame))?;
        // the protocol carries no confidence
        Ok(TextEstimate {
            text,
            confidence: f64::NAN,
        })
    }

    fn decode_image(&self, frame: &FeatureFrame) -> Result<Image> {
        self.check_frame(frame)?;
        self.with_client(|c| c.decode_image(frame))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let frame = BridgeFrame {
            n_queries: 1,
            dim: 2,
            payload: vec![1.0, -0.0],
        };
        let bytes = frame.encode();
        assert_eq!(
            bytes,
            [
                b'V', b'L', b'F', b'1', 1, 0, 1, 0, 0, 0, 2, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f, 0x00,
                0x00, 0x00, 0x80
            ]
        );
        assert_eq!(BridgeFrame::decode(&bytes).unwrap(), frame);
    }

    #[test]
    fn default_geometry_size() {
        let frame = BridgeFrame {
            n_queries: 32,
            dim: 768,
            payload: vec![0.0; 32 * 768],
        };
        assert_eq!(frame.encode().len(), FRAME_HEADER_LEN + 4 * 24576);
    }

    #[test]
    fn malformed_frames() {
        let good = BridgeFrame {
            n_queries: 1,
            dim: 2,
            payload: vec![1.0, 2.0],
        }
        .encode();
        assert!(BridgeFrame::decode(&good[..10]).is_err());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            BridgeFrame::decode(&bad_magic),
            Err(Error::Protocol(_))
        ));
        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(
            BridgeFrame::decode(&bad_version),
            Err(Error::Version(_))
        ));
        assert!(BridgeFrame::decode(&good[..good.len() - 1]).is_err());
        let mut odd = good.clone();
        odd[10] = 3;
        assert!(matches!(BridgeFrame::decode(&odd), Err(Error::Geometry(_))));
    }

    #[test]
    fn message_framing() {
        let mut buf = Vec::new();
        write_message(&mut buf, 2, b"hello").unwrap();
        assert_eq!(buf, [2, 5, 0, 0, 0, b'h', b'e', b'l', b'l', b'o']);
        let mut cursor = io::Cursor::new(buf.clone());
        assert_eq!(
            read_message(&mut cursor).unwrap(),
            Some(Message {
                code: 2,
                body: b"hello".to_vec()
            })
        );
        assert_eq!(read_message(&mut cursor).unwrap(), None);
        let mut cut = io::Cursor::new(buf[..7].to_vec());
        assert!(matches!(read_message(&mut cut), Err(Error::Protocol(_))));
    }
}
