#![no_main]

libfuzzer_sys::fuzz_target!(|data: &[u8]| usar_fuzz::decode_packet_target(data));
