#![no_main]

use libfuzzer_sys::fuzz_target;
use spex::io;

// Anything accepted must survive an encode/decode cycle unchanged.
fuzz_target!(|data: &[u8]| {
    if let Ok(value) = io::parse_queries(data) {
        let bytes = io::encode_queries(&value);
        let again = io::parse_queries(bytes.as_ref()).expect("re-encoded value must decode");
        assert_eq!(again, value);
    }
});
