#![no_main]

use libfuzzer_sys::fuzz_target;
use spex::io;

// Anything accepted must survive an encode/decode cycle unchanged.
fuzz_target!(|data: &[u8]| {
    if let Ok(value) = io::decode_dense(data) {
        let bytes = io::encode_dense(&value).expect("encode");
        let again = io::decode_dense(bytes.as_ref()).expect("re-encoded value must decode");
        assert_eq!(again, value);
    }
});
