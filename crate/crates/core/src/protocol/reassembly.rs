use std::collections::HashMap;
use std::time::{Duration, Instant};

use super::wire::{decode_packet, Channel, Packet, MAX_PAYLOAD};
use super::ProtocolError;

/// Partial frames older than this are dropped.
pub const REASSEMBLY_TIMEOUT: Duration = Duration::from_millis(200);

/// Completed keys are remembered this long so late duplicates of a finished
/// frame do not start a fresh assembly.
const COMPLETED_RETENTION: Duration = Duration::from_secs(2);
const COMPLETED_CAP: usize = 4096;

/// Default cap on one reassembled frame: a 2048x2048 segmentation pair.
pub const DEFAULT_MAX_FRAME_BYTES: usize = 2 * 2048 * 2048;
const MAX_PENDING: usize = 64;

type Key = (Channel, u32);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompletedFrame {
    pub channel: Channel,
    pub frame_id: u32,
    pub width: u16,
    pub height: u16,
    pub payload: Vec<u8>,
    pub first_seen: Instant,
    pub completed_at: Instant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExpiredFrame {
    pub channel: Channel,
    pub frame_id: u32,
    pub received: usize,
    pub expected: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReassemblyStats {
    pub completed: u64,
    pub expired: u64,
    pub duplicates: u64,
    /// Fragments whose geometry disagrees with the assembly they join.
    pub inconsistent: u64,
    /// Fragments of frames above the size cap.
    pub oversized: u64,
    /// Assemblies dropped to make room for newer ones.
    pub evicted: u64,
}

struct Assembly {
    width: u16,
    height: u16,
    frag_count: u16,
    received: Vec<bool>,
    remaining: usize,
    buffer: Vec<u8>,
    first_seen: Instant,
}

/// Collects fragments per `(channel, frame_id)` until a frame is whole.
///
/// Fragments may arrive in any order and more than once; each frame is
/// emitted at most once. One writer feeds an instance.
pub struct Reassembler {
    timeout: Duration,
    max_frame_bytes: usize,
    pending: HashMap<Key, Assembly>,
    completed: HashMap<Key, Instant>,
    stats: ReassemblyStats,
}

impl Default for Reassembler {
    fn default() -> Self {
        Self::new()
    }
}

impl Reassembler {
    pub fn new() -> Self {
        Self::with_timeout(REASSEMBLY_TIMEOUT)
    }

    pub fn with_timeout(timeout: Duration) -> Self {
        Self {
            timeout,
            max_frame_bytes: DEFAULT_MAX_FRAME_BYTES,
            pending: HashMap::new(),
            completed: HashMap::new(),
            stats: ReassemblyStats::default(),
        }
    }

    pub fn with_max_frame_bytes(mut self, max: usize) -> Self {
        self.max_frame_bytes = max;
        self
    }

    pub fn stats(&self) -> ReassemblyStats {
        self.stats
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Decodes and feeds one datagram.
    pub fn push_datagram(
        &mut self,
        bytes: &[u8],
        now: Instant,
    ) -> Result<Option<CompletedFrame>, ProtocolError> {
        let packet = decode_packet(bytes)?;
        Ok(self.push(&packet, now))
    }

    pub fn push(&mut self, packet: &Packet<'_>, now: Instant) -> Option<CompletedFrame> {
        let h = packet.header;
        let key = (h.channel, h.frame_id);
        if self.completed.contains_key(&key) {
            self.stats.duplicates += 1;
            return None;
        }
        if h.frame_len() > self.max_frame_bytes {
            self.stats.oversized += 1;
            return None;
        }
        if !self.pending.contains_key(&key) && self.pending.len() >= MAX_PENDING {
            if let Some(oldest) = self
                .pending
                .iter()
                .min_by_key(|(_, a)| a.first_seen)
                .map(|(k, _)| *k)
            {
                self.pending.remove(&oldest);
                self.stats.evicted += 1;
            }
        }

        let assembly = self.pending.entry(key).or_insert_with(|| Assembly {
            width: h.width,
            height: h.height,
            frag_count: h.frag_count,
            received: vec![false; h.frag_count as usize],
            remaining: h.frag_count as usize,
            buffer: vec![0; h.frame_len()],
            first_seen: now,
        });
        if (assembly.width, assembly.height, assembly.frag_count)
            != (h.width, h.height, h.frag_count)
        {
            self.stats.inconsistent += 1;
            return None;
        }
        let index = h.frag_index as usize;
        if assembly.received[index] {
            self.stats.duplicates += 1;
            return None;
        }
        let offset = index * MAX_PAYLOAD;
        assembly.buffer[offset..offset + packet.payload.len()].copy_from_slice(packet.payload);
        assembly.received[index] = true;
        assembly.remaining -= 1;
        if assembly.remaining > 0 {
            return None;
        }

        let done = self.pending.remove(&key)?;
        self.remember_completed(key, now);
        self.stats.completed += 1;
        Some(CompletedFrame {
            channel: h.channel,
            frame_id: h.frame_id,
            width: done.width,
            height: done.height,
            payload: done.buffer,
            first_seen: done.first_seen,
            completed_at: now,
        })
    }

    /// Drops assemblies that have waited longer than the timeout.
    pub fn expire(&mut self, now: Instant) -> Vec<ExpiredFrame> {
        let timeout = self.timeout;
        let mut expired = Vec::new();
        self.pending.retain(|&(channel, frame_id), a| {
            if now.saturating_duration_since(a.first_seen) > timeout {
                expired.push(ExpiredFrame {
                    channel,
                    frame_id,
                    received: a.frag_count as usize - a.remaining,
                    expected: a.frag_count as usize,
                });
                false
            } else {
                true
            }
        });
        expired.sort_by_key(|e| (e.channel, e.frame_id));
        self.stats.expired += expired.len() as u64;
        self.completed
            .retain(|_, &mut t| now.saturating_duration_since(t) <= COMPLETED_RETENTION);
        expired
    }

    fn remember_completed(&mut self, key: Key, now: Instant) {
        if self.completed.len() >= COMPLETED_CAP {
            if let Some(&oldest) = self
                .completed
                .iter()
                .min_by_key(|(_, &t)| t)
                .map(|(k, _)| k)
            {
                self.completed.remove(&oldest);
            }
        }
        self.completed.insert(key, now);
    }
}
