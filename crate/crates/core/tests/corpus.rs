//! The fuzz corpus seeds are valid inputs and round-trip cleanly.

use std::fs;
use std::path::PathBuf;

use lvad_core::checkpoint::Checkpoint;
use lvad_core::config::RunConfig;
use lvad_core::data::{execution_to_string, parse_execution, Manifest};

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn execution_seeds_round_trip() {
    for (name, text) in seeds("execution_csv") {
        let e = parse_execution(&text).unwrap_or_else(|err| panic!("{name}: {err}"));
        assert_eq!(parse_execution(&execution_to_string(&e).unwrap()).unwrap(), e, "{name}");
    }
}

#[test]
fn checkpoint_seeds_load() {
    let mut methods: Vec<&str> = Vec::new();
    for (name, text) in seeds("checkpoint") {
        let ck = Checkpoint::from_json(&text).unwrap_or_else(|err| panic!("{name}: {err}"));
        assert_eq!(Checkpoint::from_json(&ck.to_json().unwrap()).unwrap(), ck);
        methods.push(ck.model.method());
    }
    methods.sort();
    assert_eq!(methods, ["ae", "encdec_ad", "lstm_vae", "osvm"]);
}

#[test]
fn config_seeds_parse() {
    for (name, text) in seeds("run_config") {
        let cfg = RunConfig::parse(&text).unwrap_or_else(|err| panic!("{name}: {err}"));
        assert_eq!(RunConfig::parse(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }
}

#[test]
fn manifest_seeds_parse() {
    for (name, text) in seeds("manifest") {
        Manifest::parse(&text).unwrap_or_else(|err| panic!("{name}: {err}"));
    }
}
