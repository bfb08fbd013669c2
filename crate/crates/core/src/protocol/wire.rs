use super::ProtocolError;

pub const MAGIC: [u8; 4] = *b"USAR";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 22;
pub const MAX_PAYLOAD: usize = 1400;
pub const MAX_DATAGRAM: usize = HEADER_LEN + MAX_PAYLOAD;
pub const MAX_FRAGMENTS: usize = u16::MAX as usize;
pub const FLAG_LAST_FRAGMENT: u8 = 0x01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Channel {
    RawImage = 0,
    SegmentationPair = 1,
}

impl TryFrom<u8> for Channel {
    type Error = ProtocolError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Channel::RawImage),
            1 => Ok(Channel::SegmentationPair),
            other => Err(ProtocolError::BadChannel(other)),
        }
    }
}

impl Channel {
    pub fn pixel_format(self) -> PixelFormat {
        match self {
            Channel::RawImage => PixelFormat::Gray8,
            Channel::SegmentationPair => PixelFormat::Mask8,
        }
    }

    /// Payload bytes per pixel: the gray frame, plus the mask on channel 1.
    pub fn planes(self) -> usize {
        match self {
            Channel::RawImage => 1,
            Channel::SegmentationPair => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum PixelFormat {
    Gray8 = 0,
    Mask8 = 1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PacketHeader {
    pub channel: Channel,
    pub pixel_format: PixelFormat,
    pub flags: u8,
    pub frame_id: u32,
    pub width: u16,
    pub height: u16,
    pub frag_index: u16,
    pub frag_count: u16,
    pub payload_len: u16,
}

impl PacketHeader {
    pub fn is_last_fragment(&self) -> bool {
        self.flags & FLAG_LAST_FRAGMENT != 0
    }

    /// Total reassembled payload size of the frame this packet belongs to.
    pub fn frame_len(&self) -> usize {
        frame_payload_len(self.channel, self.width, self.height)
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.channel as u8);
        out.push(self.pixel_format as u8);
        out.push(self.flags);
        out.extend_from_slice(&self.frame_id.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.frag_index.to_le_bytes());
        out.extend_from_slice(&self.frag_count.to_le_bytes());
        out.extend_from_slice(&self.payload_len.to_le_bytes());
    }
}

/// A decoded datagram borrowing its payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Packet<'a> {
    pub header: PacketHeader,
    pub payload: &'a [u8],
}

pub fn frame_payload_len(channel: Channel, width: u16, height: u16) -> usize {
    channel.planes() * width as usize * height as usize
}

/// `ceil(total / MAX_PAYLOAD)`, with at least one fragment.
pub fn fragment_count(total: usize) -> usize {
    total.div_ceil(MAX_PAYLOAD).max(1)
}

fn expected_payload_len(total: usize, frag_index: usize, frag_count: usize) -> usize {
    if frag_index + 1 < frag_count {
        MAX_PAYLOAD
    } else {
        total - MAX_PAYLOAD * (frag_count - 1)
    }
}

/// Splits one frame into datagrams.
///
/// Channel 0 takes `image` alone; channel 1 takes `image` followed by
/// `mask`. Every fragment but the last carries exactly [`MAX_PAYLOAD`] bytes.
pub fn encode(
    frame_id: u32,
    channel: Channel,
    image: &[u8],
    mask: Option<&[u8]>,
    width: u16,
    height: u16,
) -> Result<Vec<Vec<u8>>, ProtocolError> {
    if mask.is_some() != (channel == Channel::SegmentationPair) {
        return Err(ProtocolError::BadChannel(channel as u8));
    }
    let plane = width as usize * height as usize;
    if plane == 0 {
        return Err(ProtocolError::BoundsViolation("empty frame".into()));
    }
    let total = frame_payload_len(channel, width, height);
    let frag_count = fragment_count(total);
    if frag_count > MAX_FRAGMENTS {
        return Err(ProtocolError::Oversize(frag_count));
    }
    if image.len() != plane || mask.is_some_and(|m| m.len() != plane) {
        return Err(ProtocolError::BoundsViolation(format!(
            "plane length does not match {width}x{height}"
        )));
    }

    let planes: [&[u8]; 2] = [image, mask.unwrap_or(&[])];
    let mut packets = Vec::with_capacity(frag_count);
    for frag_index in 0..frag_count {
        let start = frag_index * MAX_PAYLOAD;
        let len = expected_payload_len(total, frag_index, frag_count);
        let header = PacketHeader {
            channel,
            pixel_format: channel.pixel_format(),
            flags: if frag_index + 1 == frag_count {
                FLAG_LAST_FRAGMENT
            } else {
                0
            },
            frame_id,
            width,
            height,
            frag_index: frag_index as u16,
            frag_count: frag_count as u16,
            payload_len: len as u16,
        };
        let mut buf = Vec::with_capacity(HEADER_LEN + len);
        header.write_to(&mut buf);
        copy_span(&planes, plane, start, len, &mut buf);
        packets.push(buf);
    }
    Ok(packets)
}

/// Appends bytes `[start, start + len)` of the concatenated planes.
fn copy_span(planes: &[&[u8]; 2], plane: usize, start: usize, len: usize, out: &mut Vec<u8>) {
    let end = start + len;
    if start < plane {
        out.extend_from_slice(&planes[0][start..end.min(plane)]);
    }
    if end > plane {
        out.extend_from_slice(&planes[1][start.max(plane) - plane..end - plane]);
    }
}

fn le16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn bounds(msg: impl Into<String>) -> ProtocolError {
    ProtocolError::BoundsViolation(msg.into())
}

/// Parses and validates one datagram.
pub fn decode_packet(bytes: &[u8]) -> Result<Packet<'_>, ProtocolError> {
    if bytes.len() < HEADER_LEN {
        return Err(ProtocolError::Truncated {
            needed: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if bytes[0..4] != MAGIC {
        return Err(ProtocolError::BadMagic);
    }
    if bytes[4] != VERSION {
        return Err(ProtocolError::BadVersion(bytes[4]));
    }
    let channel = Channel::try_from(bytes[5])?;
    let pixel_format = match bytes[6] {
        0 => PixelFormat::Gray8,
        1 => PixelFormat::Mask8,
        other => return Err(bounds(format!("unknown pixel format {other}"))),
    };
    if pixel_format != channel.pixel_format() {
        return Err(bounds("pixel format does not match channel"));
    }
    let header = PacketHeader {
        channel,
        pixel_format,
        flags: bytes[7],
        frame_id: u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]),
        width: le16(bytes, 12),
        height: le16(bytes, 14),
        frag_index: le16(bytes, 16),
        frag_count: le16(bytes, 18),
        payload_len: le16(bytes, 20),
    };
    if header.width == 0 || header.height == 0 {
        return Err(bounds("zero frame dimension"));
    }
    if header.frag_index >= header.frag_count {
        return Err(bounds(format!(
            "fragment index {} not below count {}",
            header.frag_index, header.frag_count
        )));
    }
    let payload_len = header.payload_len as usize;
    if payload_len > MAX_PAYLOAD {
        return Err(bounds(format!("payload length {payload_len} exceeds cap")));
    }
    let needed = HEADER_LEN + payload_len;
    if bytes.len() < needed {
        return Err(ProtocolError::Truncated {
            needed,
            actual: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(bounds(format!(
            "payload length {payload_len} but datagram carries {}",
            bytes.len() - HEADER_LEN
        )));
    }
    let total = header.frame_len();
    let frag_count = header.frag_count as usize;
    if fragment_count(total) != frag_count {
        return Err(bounds(format!(
            "fragment count {frag_count} inconsistent with {total}-byte frame"
        )));
    }
    let frag_index = header.frag_index as usize;
    if payload_len != expected_payload_len(total, frag_index, frag_count) {
        return Err(bounds(format!(
            "fragment {frag_index} carries {payload_len} bytes"
        )));
    }
    if header.is_last_fragment() != (frag_index + 1 == frag_count) {
        return Err(bounds("last-fragment flag misplaced"));
    }
    Ok(Packet {
        header,
        payload: &bytes[HEADER_LEN..],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_header_bytes() {
        let packets = encode(0x0403_0201, Channel::SegmentationPair, &[7; 6], Some(&[1; 6]), 3, 2)
            .unwrap();
        assert_eq!(packets.len(), 1);
        let expected_header: [u8; HEADER_LEN] = [
            0x55, 0x53, 0x41, 0x52, // magic "USAR"
            0x01, // version
            0x01, // channel: segmentation pair
            0x01, // pixel format: mask-8
            0x01, // flags: last fragment
            0x01, 0x02, 0x03, 0x04, // frame id, little-endian
            0x03, 0x00, // width
            0x02, 0x00, // height
            0x00, 0x00, // fragment index
            0x01, 0x00, // fragment count
            0x0c, 0x00, // payload length = 12
        ];
        assert_eq!(&packets[0][..HEADER_LEN], &expected_header);
        assert_eq!(&packets[0][HEADER_LEN..], &[7, 7, 7, 7, 7, 7, 1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn single_fragment_frame() {
        let p = encode(9, Channel::RawImage, &[1, 2, 3, 4], None, 2, 2).unwrap();
        assert_eq!(p.len(), 1);
        let d = decode_packet(&p[0]).unwrap();
        assert_eq!(d.header.payload_len, 4);
        assert_eq!(d.header.frag_count, 1);
        assert!(d.header.is_last_fragment());
        assert_eq!(d.payload, &[1, 2, 3, 4]);
    }

    #[test]
    fn full_resolution_fragment_counts() {
        let image = vec![0u8; 512 * 512];
        let gray = encode(1, Channel::RawImage, &image, None, 512, 512).unwrap();
        // ceil(262144 / 1400) = 188: 187 full fragments and a 344-byte tail.
        assert_eq!(gray.len(), 188);
        assert!(gray[..187].iter().all(|p| p.len() == HEADER_LEN + 1400));
        assert_eq!(gray[187].len(), HEADER_LEN + 344);

        let pair = encode(1, Channel::SegmentationPair, &image, Some(&image), 512, 512).unwrap();
        // ceil(524288 / 1400) = 375
        assert_eq!(pair.len(), 375);
    }

    #[test]
    fn pair_fragment_straddles_planes() {
        let image: Vec<u8> = (0..40 * 40).map(|i| (i % 251) as u8).collect();
        let mask: Vec<u8> = (0..40 * 40).map(|i| (i % 3) as u8).collect();
        let packets = encode(3, Channel::SegmentationPair, &image, Some(&mask), 40, 40).unwrap();
        let joined: Vec<u8> = packets
            .iter()
            .flat_map(|p| decode_packet(p).unwrap().payload.to_vec())
            .collect();
        assert_eq!(&joined[..1600], &image[..]);
        assert_eq!(&joined[1600..], &mask[..]);
    }

    #[test]
    fn encode_errors() {
        assert_eq!(
            encode(0, Channel::RawImage, &[0; 4], Some(&[0; 4]), 2, 2),
            Err(ProtocolError::BadChannel(0))
        );
        assert_eq!(
            encode(0, Channel::SegmentationPair, &[0; 4], None, 2, 2),
            Err(ProtocolError::BadChannel(1))
        );
        assert!(matches!(
            encode(0, Channel::RawImage, &[], None, 0, 5),
            Err(ProtocolError::BoundsViolation(_))
        ));
        assert!(matches!(
            encode(0, Channel::RawImage, &[0; 3], None, 2, 2),
            Err(ProtocolError::BoundsViolation(_))
        ));
    }

    #[test]
    fn oversize_frame_rejected() {
        // 65535 x 65535 needs ceil(4294836225 / 1400) = 3067741 fragments.
        // The limit is checked before the planes, so no buffer is needed.
        assert_eq!(
            encode(0, Channel::RawImage, &[], None, u16::MAX, u16::MAX),
            Err(ProtocolError::Oversize(3_067_741))
        );
        // Largest square gray frame under the limit: 9578^2 = 91738084 bytes
        // fits 65528 fragments; 9579^2 needs 65541.
        assert_eq!(fragment_count(9578 * 9578), 65_528);
        assert_eq!(fragment_count(9579 * 9579), 65_541);
    }

    #[test]
    fn decode_rejections() {
        let p = encode(5, Channel::RawImage, &vec![9u8; 3000], None, 100, 30).unwrap();
        let good = &p[0];

        let mut bad = good.clone();
        bad[0] ^= 0xff;
        assert_eq!(decode_packet(&bad), Err(ProtocolError::BadMagic));

        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(decode_packet(&bad), Err(ProtocolError::BadVersion(2)));

        let mut bad = good.clone();
        bad[5] = 7;
        assert_eq!(decode_packet(&bad), Err(ProtocolError::BadChannel(7)));

        // payload_len says 1400, datagram is cut short.
        assert_eq!(
            decode_packet(&good[..HEADER_LEN + 100]),
            Err(ProtocolError::Truncated {
                needed: HEADER_LEN + 1400,
                actual: HEADER_LEN + 100
            })
        );
        assert!(matches!(
            decode_packet(&good[..10]),
            Err(ProtocolError::Truncated { needed: HEADER_LEN, .. })
        ));

        let mut bad = good.clone();
        bad[16..18].copy_from_slice(&3u16.to_le_bytes()); // index == count
        assert!(matches!(decode_packet(&bad), Err(ProtocolError::BoundsViolation(_))));

        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(decode_packet(&bad), Err(ProtocolError::BoundsViolation(_))));

        let mut bad = good.clone();
        bad[7] = FLAG_LAST_FRAGMENT;
        assert!(matches!(decode_packet(&bad), Err(ProtocolError::BoundsViolation(_))));

        let mut bad = good.clone();
        bad[18..20].copy_from_slice(&4u16.to_le_bytes());
        assert!(matches!(decode_packet(&bad), Err(ProtocolError::BoundsViolation(_))));
    }
}
