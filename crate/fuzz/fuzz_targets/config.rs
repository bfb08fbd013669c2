#![no_main]

libfuzzer_sys::fuzz_target!(|data: &[u8]| usar_fuzz::config_target(data));
