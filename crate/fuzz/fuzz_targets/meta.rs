#![no_main]

libfuzzer_sys::fuzz_target!(|data: &[u8]| usar_fuzz::meta_target(data));
