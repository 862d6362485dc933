#![no_main]

use libfuzzer_sys::fuzz_target;
use spex_cli::config::parse_config_text;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = parse_config_text(text, &[]) {
        let again =
            parse_config_text(&config.to_toml(), &[]).expect("resolved config must reparse");
        assert_eq!(again, config);
    }
});
