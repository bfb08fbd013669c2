#![no_main]

libfuzzer_sys::fuzz_target!(|data: &[u8]| usar_fuzz::stream_decoder_target(data));
