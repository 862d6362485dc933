#![no_main]

use libfuzzer_sys::fuzz_target;
use spex::io;

// Anything accepted must survive an encode/decode cycle unchanged.
fuzz_target!(|data: &[u8]| {
    if let Ok(value) = io::parse_word_vectors(data) {
        let bytes = io::encode_word_vectors(&value);
        let again = io::parse_word_vectors(bytes.as_ref()).expect("re-encoded value must decode");
        assert_eq!(again, value);
    }
});
