//! Fuzz target bodies. The fuzz targets and the corpus replay test both run
//! these, so a seed that trips one trips the other.

use std::path::Path;
use std::time::{Duration, Instant};

use usar_core::protocol::{
    decode_packet, encode, write_stream_frame, Channel, StreamDecoder, HEADER_LEN, MAX_DATAGRAM,
    MAX_PAYLOAD,
};
use usar_core::View;
use usar_providers::replay::{decode_pgm, parse_meta};
use usar_providers::{ArtifactMode, LatencyModel, ProviderKind, SourceKind};
use usar_server::control::{parse_client_line, parse_datagram_control, ClientLine};
use usar_server::{Command, FrameDecoder, ServerConfig};

/// Every target, by corpus directory name.
pub const TARGETS: &[(&str, fn(&[u8]))] = &[
    ("decode_packet", decode_packet_target),
    ("reassembly", reassembly_target),
    ("stream_decoder", stream_decoder_target),
    ("pgm", pgm_target),
    ("meta", meta_target),
    ("control", control_target),
    ("config", config_target),
    ("selectors", selectors_target),
];

pub fn decode_packet_target(data: &[u8]) {
    if let Ok(p) = decode_packet(data) {
        let h = p.header;
        assert_eq!(HEADER_LEN + p.payload.len(), data.len());
        assert_eq!(h.payload_len as usize, p.payload.len());
        assert!(p.payload.len() <= MAX_PAYLOAD);
        assert!(h.frag_index < h.frag_count);
        let mut again = Vec::new();
        h.write_to(&mut again);
        assert_eq!(again, data[..HEADER_LEN]);
    }
}

/// Splits `data` into datagrams, each behind a little-endian u16 length.
fn datagrams(data: &[u8]) -> Vec<&[u8]> {
    let mut out = Vec::new();
    let mut rest = data;
    while rest.len() >= 2 {
        let len = (u16::from_le_bytes([rest[0], rest[1]]) as usize).min(rest.len() - 2);
        out.push(&rest[2..2 + len]);
        rest = &rest[2 + len..];
    }
    out
}

/// Arbitrary datagrams through the client decoder, then one well-formed
/// frame built from the same bytes, which must come out intact.
pub fn reassembly_target(data: &[u8]) {
    let t0 = Instant::now();
    let mut decoder = FrameDecoder::new(0.5);
    for (i, d) in datagrams(data).into_iter().enumerate() {
        let _ = decoder.push(d, t0 + Duration::from_millis(i as u64));
    }

    let Some((&shape, body)) = data.split_first() else {
        return;
    };
    let w = (shape & 0x0f) as u16 + 1;
    let h = (shape >> 4) as u16 + 1;
    let n = w as usize * h as usize;
    let image: Vec<u8> = (0..n).map(|i| body.get(i).copied().unwrap_or(i as u8)).collect();
    let mask: Vec<u8> = image.iter().map(|v| v % 3).collect();
    let mut packets = encode(7, Channel::SegmentationPair, &image, Some(&mask), w, h)
        .expect("small frames encode");
    packets.reverse();
    let mut fresh = FrameDecoder::new(0.5);
    let raw = encode(7, Channel::RawImage, &image, None, w, h).expect("small frames encode");
    let mut out = Vec::new();
    for p in raw.iter().chain(&packets) {
        out.extend(fresh.push(p, t0));
    }
    let pair = out
        .iter()
        .find_map(|f| f.pair.as_ref())
        .expect("pair decodes after its raw frame");
    assert_eq!(pair.image.data(), &image[..]);
    assert_eq!(pair.mask.labels(), &mask[..]);
}

/// Feeds `data` in uneven chunks; every packet taken out must be the bytes
/// that went in behind its length.
pub fn stream_decoder_target(data: &[u8]) {
    let mut decoder = StreamDecoder::new();
    let mut reframed = Vec::new();
    let mut chunk = 1;
    let mut offset = 0;
    'feed: while offset < data.len() {
        let end = (offset + chunk).min(data.len());
        decoder.extend(&data[offset..end]);
        offset = end;
        chunk = chunk * 3 % 1031 + 1;
        loop {
            match decoder.next_packet() {
                Ok(Some(p)) => {
                    assert!((HEADER_LEN..=MAX_DATAGRAM).contains(&p.len()));
                    write_stream_frame(&p, &mut reframed);
                }
                Ok(None) => break,
                Err(_) => break 'feed,
            }
        }
    }
    assert_eq!(reframed, data[..reframed.len()]);
}

pub fn pgm_target(data: &[u8]) {
    if let Ok((w, h, samples)) = decode_pgm(data, Path::new("fuzz.pgm")) {
        assert_eq!(samples.len(), w * h);
    }
}

pub fn meta_target(data: &[u8]) {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(meta) = parse_meta(text, Path::new("fuzz.meta")) {
            for v in [meta.pixel_spacing_mm, meta.length_mm, meta.width_mm, meta.thickness_mm] {
                assert!(v.is_none_or(|v| v > 0.0 && v.is_finite()));
            }
        }
    }
}

pub fn control_target(data: &[u8]) {
    let _ = parse_datagram_control(data);
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(ClientLine::Command(cmd)) = parse_client_line(text) {
        assert_eq!(cmd.to_string().parse::<Command>(), Ok(cmd));
    }
}

pub fn config_target(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let mut config = ServerConfig::default();
    if config.apply_text(text).is_ok() && config.validate().is_ok() {
        let _ = (config.udp_addr(), config.ws_addr());
    }
}

pub fn selectors_target(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = text.parse::<ProviderKind>() {
        assert_eq!(p.to_string().parse::<ProviderKind>(), Ok(p));
    }
    if let Ok(s) = text.parse::<SourceKind>() {
        assert_eq!(s.to_string().parse::<SourceKind>(), Ok(s));
    }
    if let Ok(m) = text.parse::<LatencyModel>() {
        assert_eq!(m.to_string().parse::<LatencyModel>(), Ok(m));
    }
    let _ = text.parse::<ArtifactMode>();
    let _ = text.parse::<View>();
}
