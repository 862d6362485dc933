#![no_main]

use libfuzzer_sys::fuzz_target;
use spex::io;

// Anything accepted must survive an encode/decode cycle unchanged.
fuzz_target!(|data: &[u8]| {
    if let Ok(value) = io::parse_captions(data) {
        let bytes = io::encode_captions(&value);
        let again = io::parse_captions(bytes.as_ref()).expect("re-encoded value must decode");
        assert_eq!(again, value);
    }
});
