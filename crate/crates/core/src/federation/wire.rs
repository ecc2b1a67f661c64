//! Frame format for the TCP transport.
//!
//! Each frame is one version byte, a little-endian `u32` payload length and a
//! CBOR map `{kind, sender, epoch, shape: [rows, cols], data}` where `data` is
//! the row-major payload as little-endian `f64` bytes.

use std::io::{Read, Write};

use ciborium::Value;

use super::message::{MessageKind, ProtocolMessage};
use crate::{Error, Result};

pub const WIRE_VERSION: u8 = 1;
const MAX_FRAME: usize = 1 << 30;

fn bad(msg: impl Into<String>) -> Error {
    Error::Transport(msg.into())
}

pub fn encode_payload(msg: &ProtocolMessage) -> Result<Vec<u8>> {
    let data: Vec<u8> = msg.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    let value = Value::Map(vec![
        (Value::Text("kind".into()), Value::Text(msg.kind.as_str().into())),
        (Value::Text("sender".into()), Value::Integer(msg.sender.into())),
        (Value::Text("epoch".into()), Value::Integer(msg.epoch.into())),
        (
            Value::Text("shape".into()),
            Value::Array(vec![Value::Integer((msg.rows as u64).into()), Value::Integer((msg.cols as u64).into())]),
        ),
        (Value::Text("data".into()), Value::Bytes(data)),
    ]);
    let mut out = Vec::new();
    ciborium::into_writer(&value, &mut out).map_err(|e| bad(format!("encode: {e}")))?;
    Ok(out)
}

fn as_u64(v: &Value, field: &str) -> Result<u64> {
    match v {
        Value::Integer(i) => u64::try_from(*i).map_err(|_| bad(format!("{field} out of range"))),
        _ => Err(bad(format!("{field} is not an integer"))),
    }
}

pub fn decode_payload(bytes: &[u8]) -> Result<ProtocolMessage> {
    let value: Value = ciborium::from_reader(bytes).map_err(|e| bad(format!("decode: {e}")))?;
    let Value::Map(entries) = value else {
        return Err(bad("frame payload is not a map"));
    };
    let field = |name: &str| {
        entries
            .iter()
            .find(|(k, _)| matches!(k, Value::Text(t) if t == name))
            .map(|(_, v)| v)
            .ok_or_else(|| bad(format!("missing field {name}")))
    };
    let kind = match field("kind")? {
        Value::Text(t) => MessageKind::parse(t)?,
        _ => return Err(bad("kind is not text")),
    };
    let sender = u32::try_from(as_u64(field("sender")?, "sender")?).map_err(|_| bad("sender out of range"))?;
    let epoch = as_u64(field("epoch")?, "epoch")?;
    let (rows, cols) = match field("shape")? {
        Value::Array(a) if a.len() == 2 => (as_u64(&a[0], "rows")? as usize, as_u64(&a[1], "cols")? as usize),
        _ => return Err(bad("shape is not a pair")),
    };
    let Value::Bytes(raw) = field("data")? else {
        return Err(bad("data is not a byte string"));
    };
    if raw.len() % 8 != 0 || rows.checked_mul(cols) != Some(raw.len() / 8) {
        return Err(bad(format!("{} data bytes for shape {rows}x{cols}", raw.len())));
    }
    let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(ProtocolMessage { kind, sender, epoch, rows, cols, data })
}

pub fn write_frame(w: &mut impl Write, msg: &ProtocolMessage) -> Result<()> {
    let payload = encode_payload(msg)?;
    let len = u32::try_from(payload.len()).map_err(|_| bad("frame too large"))?;
    w.write_all(&[WIRE_VERSION])?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

pub fn read_frame(r: &mut impl Read) -> Result<ProtocolMessage> {
    let mut head = [0u8; 5];
    r.read_exact(&mut head).map_err(|e| bad(format!("reading frame header: {e}")))?;
    if head[0] != WIRE_VERSION {
        return Err(bad(format!("unsupported wire version {}", head[0])));
    }
    let len = u32::from_le_bytes(head[1..].try_into().expect("4 bytes")) as usize;
    if len > MAX_FRAME {
        return Err(bad(format!("frame of {len} bytes exceeds the limit")));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| bad(format!("reading frame body: {e}")))?;
    decode_payload(&payload)
}
