// SPDX-License-Identifier: Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use permachain::LoadSchedule;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(s) = LoadSchedule::from_json_str(text) {
            let _ = s.total();
        }
    }
});
