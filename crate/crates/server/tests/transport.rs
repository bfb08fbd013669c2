mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::*;
use usar_core::protocol::{decode_packet, Channel, StreamDecoder};
use usar_server::{Phase, PipelineConfig, UdpStreamClient, WsEvent, WsStreamClient};

fn config(frames: u64) -> PipelineConfig {
    PipelineConfig {
        fps: 30.0,
        max_in_flight: 32,
        max_frames: Some(frames),
    }
}

#[tokio::test]
async fn two_datagram_clients_get_every_frame() {
    let mut server = local_server().await;
    let mut a = UdpStreamClient::connect(server.udp_addr(), SPACING).await.unwrap();
    let mut b = UdpStreamClient::connect(server.udp_addr(), SPACING).await.unwrap();
    assert_eq!(server.udp.client_count(), 2);

    let n = 45;
    let run = server.start_pipeline(phantom_source(), oracle(5.0, 1.0), config(n), None);
    let deadline = Instant::now() + Duration::from_secs(4);
    for client in [&mut a, &mut b] {
        let (mut raw, mut pairs) = (BTreeSet::new(), BTreeSet::new());
        while let Some(f) = client.next_frame_until(deadline).await.unwrap() {
            match f.channel {
                Channel::RawImage => assert!(raw.insert(f.frame_id)),
                Channel::SegmentationPair => {
                    let pair = f.pair.unwrap();
                    assert_eq!(pair.mask.pixel_spacing(), SPACING);
                    assert!(pair.mask.foreground_count() > 0);
                    assert!(pairs.insert(f.frame_id));
                }
            }
            if raw.len() == n as usize && pairs.len() == n as usize {
                break;
            }
        }
        let all: BTreeSet<u32> = (0..n as u32).collect();
        assert_eq!(raw, all);
        assert_eq!(pairs, all);
        assert_eq!(client.decoder().malformed, 0);
    }
    let summary = run.await.unwrap();
    assert_eq!((summary.frames, summary.segmented, summary.failed), (n, n, 0));
}

#[tokio::test]
async fn stream_bridge_carries_the_datagram_bytes() {
    let mut server = local_server().await;
    let mut udp = UdpStreamClient::connect(server.udp_addr(), SPACING).await.unwrap();
    let mut ws = WsStreamClient::connect(server.ws_addr(), SPACING).await.unwrap();
    ws.keep_bytes = true;
    // The greeting doubles as proof the bridge registered the client.
    let first = ws.next_until(Instant::now() + Duration::from_secs(2)).await.unwrap();
    assert!(matches!(first, Some(WsEvent::State(s)) if s.phase == Phase::Idle));

    let n = 12;
    let run = server.start_pipeline(phantom_source(), oracle(0.0, 0.0), config(n), None);
    let summary = run.await.unwrap();
    assert_eq!(summary.segmented, n);

    let deadline = Instant::now() + Duration::from_secs(2);
    let mut datagrams = Vec::new();
    while let Some(d) = udp.recv_datagram_until(deadline).await.unwrap() {
        datagrams.push(d);
        if datagrams.len() == n as usize * 14 {
            break;
        }
    }
    let (mut frames, mut states) = (0, 0);
    while frames < 2 * n {
        match ws.next_until(deadline).await.unwrap() {
            Some(WsEvent::Frame(_)) => frames += 1,
            Some(WsEvent::State(_)) => states += 1,
            Some(WsEvent::Reply(r)) => panic!("unsolicited {r}"),
            None => break,
        }
    }
    assert_eq!(frames, 2 * n);
    assert_eq!(states, 1, "the stream start pushes one state");

    let mut d = StreamDecoder::new();
    d.extend(&ws.bytes);
    let mut packets = Vec::new();
    while let Some(p) = d.next_packet().unwrap() {
        decode_packet(&p).unwrap();
        packets.push(p);
    }
    assert_eq!(d.buffered(), 0);
    assert_eq!(packets, datagrams);
    // 96x64 raw frames are 5 datagrams, pairs 9.
    assert_eq!(packets.len(), n as usize * (5 + 9));
}

#[tokio::test]
async fn streams_with_nobody_listening() {
    let mut server = local_server().await;
    let n = 20;
    let summary = server
        .start_pipeline(phantom_source(), oracle(2.0, 0.5), config(n), None)
        .await
        .unwrap();
    assert_eq!((summary.frames, summary.segmented, summary.failed), (n, n, 0));
    assert_eq!(server.udp.client_count(), 0);
    assert_eq!(server.ws.client_count(), 0);
}

#[tokio::test]
async fn silent_clients_are_dropped() {
    let mut server = local_server().await;
    let silent = UdpStreamClient::connect(server.udp_addr(), SPACING).await.unwrap();
    let mut alive = UdpStreamClient::connect(server.udp_addr(), SPACING).await.unwrap();
    let mut ws_silent = WsStreamClient::connect(server.ws_addr(), SPACING).await.unwrap();
    let run = server.start_pipeline(phantom_source(), oracle(0.0, 0.0), PipelineConfig::default(), None);

    let silent_addr = silent.local_addr().unwrap();
    let start = Instant::now();
    let mut ws_closed_after = None;
    let mut frames_after_6s = 0;
    while start.elapsed() < Duration::from_millis(7000) {
        alive.ping().await.unwrap();
        let step = Instant::now() + Duration::from_millis(250);
        while alive.next_frame_until(step).await.unwrap().is_some() {
            if start.elapsed() > Duration::from_secs(6) {
                frames_after_6s += 1;
            }
        }
        if ws_closed_after.is_none() {
            while let Ok(Some(_)) = ws_silent.next_until(Instant::now() + Duration::from_millis(5)).await {}
            if ws_silent.is_closed() {
                ws_closed_after = Some(start.elapsed());
            }
        }
        if start.elapsed() > Duration::from_secs(6) {
            let clients = server.udp.registry.lock().unwrap().clients();
            assert!(!clients.contains(&silent_addr), "silent datagram client still subscribed");
        }
    }
    assert_eq!(server.udp.client_count(), 1, "the pinging client stays");
    assert!(frames_after_6s > 0);
    let closed = ws_closed_after.expect("silent stream client was never dropped");
    assert!(closed >= Duration::from_secs(5), "dropped early, after {closed:?}");
    assert_eq!(server.ws.client_count(), 0);
    run.abort();
}

#[tokio::test]
async fn stream_bridge_commands() {
    let mut server = local_server().await;
    let mut ws = WsStreamClient::connect(server.ws_addr(), SPACING).await.unwrap();
    let t = Duration::from_secs(2);
    assert_eq!(ws.request("PING", t).await.unwrap(), "PONG");
    assert_eq!(ws.request("CMD capture_coronal", t).await.unwrap(), "ERR illegal_transition");
    assert_eq!(ws.request("CMD", t).await.unwrap(), "ERR bad_command");
    assert_eq!(ws.request("CMDreset", t).await.unwrap(), "ERR bad_command");
    assert_eq!(ws.request("hello", t).await.unwrap(), "ERR bad_command");
    assert_eq!(ws.request("CMD adjust_box 1 2 3", t).await.unwrap(), "ERR bad_command");

    let run = server.start_pipeline(phantom_source(), oracle(0.0, 0.0), config(10), None);
    run.await.unwrap();
    assert_eq!(ws.request("CMD capture_transverse", t).await.unwrap(), "ERR illegal_transition");
    assert_eq!(ws.request("CMD capture_coronal", t).await.unwrap(), "OK");
    assert_eq!(
        ws.request("CMD adjust_box 5 5 5 5 5 5 5 5", t).await.unwrap(),
        "ERR invalid_box"
    );

    // Every accepted command is followed by a state push.
    let mut last = None;
    let deadline = Instant::now() + Duration::from_millis(300);
    assert_eq!(ws.request("CMD accept_measurement", t).await.unwrap(), "OK");
    while let Some(ev) = ws.next_until(deadline).await.unwrap() {
        if let WsEvent::State(s) = ev {
            last = Some(s);
        }
    }
    let snap = last.expect("state pushed");
    assert_eq!(snap.phase, Phase::Streaming);
    assert!(snap.measurement.length_mm.is_some());
    assert_eq!(server.session.snapshot(), snap);

    assert_eq!(ws.request("CMD capture_transverse", t).await.unwrap(), "OK");
    assert_eq!(ws.request("CMD accept_measurement", t).await.unwrap(), "OK");
    let done = server.session.snapshot();
    assert_eq!(done.phase, Phase::Complete);
    assert!(done.measurement.volume_mm3.unwrap() > 0.0);
    assert_eq!(ws.request("CMD reset", t).await.unwrap(), "OK");
    assert_eq!(server.session.snapshot().phase, Phase::Streaming);
    ws.close().await;
}
