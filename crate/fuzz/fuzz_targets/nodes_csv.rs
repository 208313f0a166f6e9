// SPDX-License-Identifier: Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use permachain::nodes::{AuthorityRule, NodeTable};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // The first byte picks the authority rule.
    let rule = match text.bytes().next() {
        Some(b) if b % 2 == 1 => AuthorityRule::LocationIdBelow(u32::from(b % 8)),
        _ => AuthorityRule::Column,
    };
    if let Ok(table) = NodeTable::from_csv_str(text, rule) {
        assert!(!table.authorities().is_empty());
    }
});
