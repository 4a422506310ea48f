//! Byte framing between the acquisition board and the host.
//!
//! ```text
//! offset  size  field
//! 0       2     magic 0xA5 0x5A
//! 2       1     version (1)
//! 3       1     sensor id
//! 4       2     sequence number, LE
//! 6       1     mode: 0 tactile, 1 proximity
//! 7       2     payload length, LE
//! 9       n     payload
//! 9+n     2     CRC-16/CCITT-FALSE over bytes 2..9+n, LE
//! ```
//!
//! Tactile payload: `rows u8, cols u8, rows·cols × u16 LE` raw ADC counts.
//! Proximity payload: `counter u32 LE, flags u8` (bit 0: saturated).

use crc::{Crc, CRC_16_IBM_3740};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: [u8; 2] = [0xA5, 0x5A];
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 9;
pub const CRC_LEN: usize = 2;
pub const MAX_PREXELS: usize = 64;
pub const MAX_PAYLOAD: usize = 2 + 2 * MAX_PREXELS;
pub const PROXIMITY_PAYLOAD: usize = 5;
pub const FLAG_SATURATED: u8 = 0x01;

const MODE_TACTILE: u8 = 0;
const MODE_PROXIMITY: u8 = 1;

// CRC-16/CCITT-FALSE is catalogued as CRC-16/IBM-3740.
const CCITT_FALSE: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub fn crc16(bytes: &[u8]) -> u16 {
    CCITT_FALSE.checksum(bytes)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("{rows}x{cols} array exceeds {MAX_PREXELS} prexels")]
    TooManyPrexels { rows: u8, cols: u8 },
    #[error("empty tactile array")]
    Empty,
    #[error("{got} samples for a {rows}x{cols} array")]
    LengthMismatch { rows: u8, cols: u8, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Payload {
    Tactile { rows: u8, cols: u8, raw: Vec<u16> },
    Proximity { counter: u32, flags: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub sensor_id: u8,
    pub seq: u16,
    pub payload: Payload,
}

impl Frame {
    pub fn tactile(sensor_id: u8, seq: u16, rows: u8, cols: u8, raw: Vec<u16>) -> Self {
        Self {
            sensor_id,
            seq,
            payload: Payload::Tactile { rows, cols, raw },
        }
    }

    pub fn proximity(sensor_id: u8, seq: u16, counter: u32, saturated: bool) -> Self {
        Self {
            sensor_id,
            seq,
            payload: Payload::Proximity {
                counter,
                flags: if saturated { FLAG_SATURATED } else { 0 },
            },
        }
    }

    pub fn mode(&self) -> u8 {
        match self.payload {
            Payload::Tactile { .. } => MODE_TACTILE,
            Payload::Proximity { .. } => MODE_PROXIMITY,
        }
    }

    pub fn is_tactile(&self) -> bool {
        matches!(self.payload, Payload::Tactile { .. })
    }

    pub fn payload_len(&self) -> usize {
        match &self.payload {
            Payload::Tactile { raw, .. } => 2 + 2 * raw.len(),
            Payload::Proximity { .. } => PROXIMITY_PAYLOAD,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload_len() + CRC_LEN
    }

    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out)?;
        Ok(out)
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<(), EncodeError> {
        if let Payload::Tactile { rows, cols, raw } = &self.payload {
            let (rows, cols) = (*rows, *cols);
            if rows == 0 || cols == 0 {
                return Err(EncodeError::Empty);
            }
            if rows as usize * cols as usize > MAX_PREXELS {
                return Err(EncodeError::TooManyPrexels { rows, cols });
            }
            if raw.len() != rows as usize * cols as usize {
                return Err(EncodeError::LengthMismatch { rows, cols, got: raw.len() });
            }
        }
        let start = out.len();
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.sensor_id);
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.push(self.mode());
        out.extend_from_slice(&(self.payload_len() as u16).to_le_bytes());
        match &self.payload {
            Payload::Tactile { rows, cols, raw } => {
                out.push(*rows);
                out.push(*cols);
                for v in raw {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Payload::Proximity { counter, flags } => {
                out.extend_from_slice(&counter.to_le_bytes());
                out.push(*flags);
            }
        }
        let crc = crc16(&out[start + 2..]);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(())
    }
}

/// Stream problems reported by the decoder. None of them stop decoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// Bytes discarded while looking for the next magic pair.
    Skipped { offset: u64, bytes: usize },
    /// Magic found but version, mode or length is impossible.
    BadHeader { offset: u64 },
    CrcMismatch { offset: u64, expected: u16, found: u16 },
    /// CRC valid but the payload disagrees with its own header.
    Malformed { offset: u64 },
}

impl Diagnostic {
    pub fn is_crc_error(&self) -> bool {
        matches!(self, Diagnostic::CrcMismatch { .. })
    }
}

/// Incremental decoder state. Holds any partial frame between calls.
#[derive(Debug, Clone, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    pos: usize,
    /// Stream offset of `buf[0]`.
    base: u64,
}

/// Functional form of [`StreamDecoder::feed`].
pub fn decode_stream(bytes: &[u8], mut state: StreamDecoder) -> (Vec<Frame>, Vec<Diagnostic>, StreamDecoder) {
    let (frames, diags) = state.feed(bytes);
    (frames, diags, state)
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bytes held back waiting for the rest of a frame.
    pub fn pending(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn feed(&mut self, bytes: &[u8]) -> (Vec<Frame>, Vec<Diagnostic>) {
        let mut frames = Vec::new();
        let mut diags = Vec::new();
        self.buf.extend_from_slice(bytes);
        loop {
            let offset = self.base + self.pos as u64;
            let rest = &self.buf[self.pos..];
            let Some(at) = find_magic(rest) else {
                // Keep a trailing first magic byte; it may pair with the next feed.
                let keep = usize::from(rest.last() == Some(&MAGIC[0]));
                let skipped = rest.len() - keep;
                if skipped > 0 {
                    diags.push(Diagnostic::Skipped { offset, bytes: skipped });
                    self.pos += skipped;
                }
                break;
            };
            if at > 0 {
                diags.push(Diagnostic::Skipped { offset, bytes: at });
                self.pos += at;
                continue;
            }
            if rest.len() < HEADER_LEN {
                break;
            }
            let version = rest[2];
            let mode = rest[6];
            let len = u16::from_le_bytes([rest[7], rest[8]]) as usize;
            let len_ok = match mode {
                MODE_TACTILE => (4..=MAX_PAYLOAD).contains(&len) && len % 2 == 0,
                MODE_PROXIMITY => len == PROXIMITY_PAYLOAD,
                _ => false,
            };
            if version != VERSION || !len_ok {
                diags.push(Diagnostic::BadHeader { offset });
                self.pos += 1;
                continue;
            }
            let total = HEADER_LEN + len + CRC_LEN;
            if rest.len() < total {
                break;
            }
            let expected = crc16(&rest[2..HEADER_LEN + len]);
            let found = u16::from_le_bytes([rest[HEADER_LEN + len], rest[HEADER_LEN + len + 1]]);
            if expected != found {
                diags.push(Diagnostic::CrcMismatch { offset, expected, found });
                self.pos += 1;
                continue;
            }
            match parse_body(&rest[..total]) {
                Some(frame) => {
                    frames.push(frame);
                    self.pos += total;
                }
                None => {
                    diags.push(Diagnostic::Malformed { offset });
                    self.pos += 1;
                }
            }
        }
        self.compact();
        (frames, diags)
    }

    fn compact(&mut self) {
        if self.pos > 0 {
            self.buf.drain(..self.pos);
            self.base += self.pos as u64;
            self.pos = 0;
        }
    }
}

fn find_magic(bytes: &[u8]) -> Option<usize> {
    bytes.windows(2).position(|w| w == MAGIC)
}

fn parse_body(frame: &[u8]) -> Option<Frame> {
    let sensor_id = frame[3];
    let seq = u16::from_le_bytes([frame[4], frame[5]]);
    let body = &frame[HEADER_LEN..frame.len() - CRC_LEN];
    let payload = match frame[6] {
        MODE_TACTILE => {
            let (rows, cols) = (body[0], body[1]);
            let n = rows as usize * cols as usize;
            if n == 0 || n > MAX_PREXELS || body.len() != 2 + 2 * n {
                return None;
            }
            let raw = body[2..].chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
            Payload::Tactile { rows, cols, raw }
        }
        _ => Payload::Proximity {
            counter: u32::from_le_bytes([body[0], body[1], body[2], body[3]]),
            flags: body[4],
        },
    };
    Some(Frame { sensor_id, seq, payload })
}

/// Decodes a complete capture, e.g. a `.pxb` file.
pub fn decode_all(bytes: &[u8]) -> (Vec<Frame>, Vec<Diagnostic>) {
    StreamDecoder::new().feed(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bit-serial CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection.
    fn crc_reference(bytes: &[u8]) -> u16 {
        let mut crc: u16 = 0xFFFF;
        for &b in bytes {
            crc ^= (b as u16) << 8;
            for _ in 0..8 {
                crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x1021 } else { crc << 1 };
            }
        }
        crc
    }

    fn tactile_2x8() -> Frame {
        Frame::tactile(3, 41, 2, 8, (0..16).map(|i| 100 * i as u16 + 7).collect())
    }

    #[test]
    fn crc_check_value() {
        assert_eq!(crc_reference(b"123456789"), 0x29B1);
        assert_eq!(crc16(b"123456789"), 0x29B1);
    }

    #[test]
    fn proximity_frame_layout() {
        let bytes = Frame::proximity(1, 0, 1610, false).encode().unwrap();
        // 9 header + 5 payload + 2 CRC
        assert_eq!(bytes.len(), 16);
        assert_eq!(&bytes[..9], &[0xA5, 0x5A, 1, 1, 0, 0, 1, 5, 0]);
        assert_eq!(&bytes[9..14], &[0x4A, 0x06, 0, 0, 0]);
        let crc = crc_reference(&bytes[2..14]);
        assert_eq!(&bytes[14..], &crc.to_le_bytes());
    }

    #[test]
    fn tactile_frame_layout() {
        let f = tactile_2x8();
        assert_eq!(f.payload_len(), 34);
        let bytes = f.encode().unwrap();
        assert_eq!(bytes.len(), 9 + 34 + 2);
        assert_eq!(u16::from_le_bytes([bytes[7], bytes[8]]), 34);
        assert_eq!(&bytes[9..11], &[2, 8]);
        assert_eq!(u16::from_le_bytes([bytes[11], bytes[12]]), 7);
    }

    #[test]
    fn rejects_oversized_arrays() {
        let f = Frame::tactile(0, 0, 9, 8, vec![0; 72]);
        assert_eq!(f.encode(), Err(EncodeError::TooManyPrexels { rows: 9, cols: 8 }));
        let f = Frame::tactile(0, 0, 2, 8, vec![0; 15]);
        assert!(matches!(f.encode(), Err(EncodeError::LengthMismatch { .. })));
    }

    #[test]
    fn split_frame_reassembles() {
        let bytes = tactile_2x8().encode().unwrap();
        let mut dec = StreamDecoder::new();
        let (frames, diags) = dec.feed(&bytes[..20]);
        assert!(frames.is_empty() && diags.is_empty());
        assert_eq!(dec.pending(), 20);
        let (frames, diags) = dec.feed(&bytes[20..]);
        assert_eq!(frames, vec![tactile_2x8()]);
        assert!(diags.is_empty());
    }

    #[test]
    fn flipped_payload_byte_is_caught() {
        let mut bytes = tactile_2x8().encode().unwrap();
        bytes[20] ^= 0x10;
        let (frames, diags) = decode_all(&bytes);
        assert!(frames.is_empty());
        assert_eq!(diags.iter().filter(|d| d.is_crc_error()).count(), 1);
    }

    #[test]
    fn garbage_around_a_frame() {
        let mut bytes = vec![0x00, 0xA5, 0x13, 0x5A, 0xFF, 0xA5];
        bytes.extend(Frame::proximity(7, 9, 1700, true).encode().unwrap());
        bytes.extend([0xA5, 0x5A, 0x01, 0x33, 0x99]);
        let (frames, _) = decode_all(&bytes);
        assert_eq!(frames, vec![Frame::proximity(7, 9, 1700, true)]);
    }

    #[test]
    fn trailing_magic_byte_is_kept() {
        let bytes = Frame::proximity(1, 2, 3, false).encode().unwrap();
        let mut dec = StreamDecoder::new();
        let (_, diags) = dec.feed(&[0x11, 0x22, 0xA5]);
        assert_eq!(diags, vec![Diagnostic::Skipped { offset: 0, bytes: 2 }]);
        // The held 0xA5 is not a real frame start; the decoder skips it.
        let (frames, _) = dec.feed(&bytes);
        assert_eq!(frames.len(), 1);
    }

    #[test]
    fn every_single_bit_flip_is_detected() {
        let clean = tactile_2x8().encode().unwrap();
        for bit in 0..clean.len() * 8 {
            let mut bytes = clean.clone();
            bytes[bit / 8] ^= 1 << (bit % 8);
            let (frames, _) = decode_all(&bytes);
            assert!(frames.is_empty(), "bit {bit} slipped through");
        }
    }
}
