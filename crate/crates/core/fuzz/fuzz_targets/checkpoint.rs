#![no_main]

use libfuzzer_sys::fuzz_target;
use lvad_core::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(ck) = Checkpoint::from_json(text) {
        let again = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(again.hash().unwrap(), ck.hash().unwrap());
        // a validated checkpoint must score its own layout without panicking
        let dim = ck.model.layout().dim();
        let _ = ck.model.window_trace(&lvad_core::nn::Matrix::zeros(4, dim));
    }
});
