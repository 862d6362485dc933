#![no_main]

use libfuzzer_sys::fuzz_target;
use spex::io;

// Scores are printed with six decimals, so the fixed point is the encoded
// text rather than the parsed value.
fuzz_target!(|data: &[u8]| {
    if let Ok(run) = io::parse_run(data) {
        let text = io::encode_run(&run).expect("encode");
        let again = io::parse_run(text.as_bytes()).expect("re-encoded run must parse");
        assert_eq!(io::encode_run(&again).expect("encode"), text);
    }
});
