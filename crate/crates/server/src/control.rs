//! Text control messages.
//!
//! Datagram clients send `SUBSCRIBE`, `PING` and `UNSUBSCRIBE` as the whole
//! datagram; the server answers `OK` and `PONG`. Stream-bridge clients send
//! newline-free text messages: `PING`, or `CMD <name> [args...]` answered
//! by `OK` or `ERR <code>`. The server also pushes `STATE <json>` whenever
//! the session changes.

use crate::session::{Command, CommandParseError};

pub const SUBSCRIBE: &str = "SUBSCRIBE";
pub const UNSUBSCRIBE: &str = "UNSUBSCRIBE";
pub const PING: &str = "PING";
pub const PONG: &str = "PONG";
pub const OK: &str = "OK";
pub const STATE_PREFIX: &str = "STATE ";

/// Code for lines that do not parse.
pub const ERR_BAD_COMMAND: &str = "bad_command";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatagramControl {
    Subscribe,
    Ping,
    Unsubscribe,
}

/// Parses a control datagram. Surrounding whitespace is ignored.
pub fn parse_datagram_control(bytes: &[u8]) -> Option<DatagramControl> {
    let text = std::str::from_utf8(bytes).ok()?.trim();
    match text {
        SUBSCRIBE => Some(DatagramControl::Subscribe),
        PING => Some(DatagramControl::Ping),
        UNSUBSCRIBE => Some(DatagramControl::Unsubscribe),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ClientLine {
    Ping,
    Command(Command),
}

/// Parses one text line from a stream-bridge client.
pub fn parse_client_line(line: &str) -> Result<ClientLine, CommandParseError> {
    let line = line.trim();
    if line == PING {
        return Ok(ClientLine::Ping);
    }
    match line.strip_prefix("CMD") {
        Some(rest) if rest.starts_with(char::is_whitespace) => {
            rest.parse().map(ClientLine::Command)
        }
        _ => Err(CommandParseError(format!("unrecognized line {line:?}"))),
    }
}

pub fn err_line(code: &str) -> String {
    format!("ERR {code}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn datagram_controls() {
        assert_eq!(parse_datagram_control(b"SUBSCRIBE"), Some(DatagramControl::Subscribe));
        assert_eq!(parse_datagram_control(b"PING\n"), Some(DatagramControl::Ping));
        assert_eq!(parse_datagram_control(b"UNSUBSCRIBE"), Some(DatagramControl::Unsubscribe));
        assert_eq!(parse_datagram_control(b"ping"), None);
        assert_eq!(parse_datagram_control(b"USAR\x01"), None);
        assert_eq!(parse_datagram_control(&[0xff, 0xfe]), None);
    }

    #[test]
    fn client_lines() {
        assert_eq!(parse_client_line("PING"), Ok(ClientLine::Ping));
        assert_eq!(
            parse_client_line("CMD capture_coronal\n"),
            Ok(ClientLine::Command(Command::CaptureCoronal))
        );
        assert!(matches!(
            parse_client_line("CMD adjust_box 0 0 10 0 10 5 0 5"),
            Ok(ClientLine::Command(Command::AdjustBox(_)))
        ));
        for bad in ["CMD", "CMDreset", "CMD warp", "reset", "", "PONG"] {
            assert!(parse_client_line(bad).is_err(), "{bad}");
        }
        assert_eq!(err_line("no_frame"), "ERR no_frame");
    }
}
