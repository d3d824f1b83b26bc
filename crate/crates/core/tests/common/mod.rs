#![allow(dead_code)]

use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use accmine_core::mcu::CompilerConfig;

/// Sentinel that makes the stub compiler fail on a source file.
pub const STUB_FAIL: &str = "STUB_FAIL";

/// A `/bin/sh` compiler that appends its argv to `invocations.log` and exits 1
/// when the input file contains `STUB_FAIL`.
pub fn stub_compiler(dir: &Path) -> (CompilerConfig, PathBuf) {
    let log = dir.join("invocations.log");
    let script = dir.join("stubcc");
    let body = format!(
        "#!/bin/sh\n\
         echo \"$@\" >> '{log}'\n\
         for a in \"$@\"; do case \"$a\" in *.c|*.cpp) src=\"$a\";; esac; done\n\
         if grep -q {STUB_FAIL} \"$src\"; then echo 'stub: scripted failure' >&2; exit 1; fi\n\
         exit 0\n",
        log = log.display()
    );
    std::fs::write(&script, body).unwrap();
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
    let cfg = CompilerConfig {
        executable: script.display().to_string(),
        base_flags: vec!["-c".into()],
        acc_flags: vec!["-acc".into(), "-Minfo=accel".into()],
        timeout_secs: 30,
        work_dir: Some(dir.join("work")),
    };
    (cfg, log)
}

pub fn read_log(log: &Path) -> Vec<String> {
    std::fs::read_to_string(log)
        .unwrap_or_default()
        .lines()
        .map(str::to_string)
        .collect()
}

/// gcc with OpenACC enabled, when the host has it.
pub fn gcc() -> Option<CompilerConfig> {
    let cfg = CompilerConfig {
        executable: "gcc".into(),
        base_flags: vec!["-c".into()],
        acc_flags: vec!["-fopenacc".into()],
        timeout_secs: 60,
        work_dir: None,
    };
    cfg.locate().ok().map(|_| cfg)
}

use accmine_core::extract::{PragmaLoopPair, extract_pairs, parse_source};
use accmine_core::ingest::{Origin, SourceFile};

/// The single pair mined from `pragma` placed directly above `loop_text`.
pub fn pair(pragma: &str, loop_text: &str) -> PragmaLoopPair {
    pair_in("t.c", pragma, loop_text)
}

pub fn pair_in(file: &str, pragma: &str, loop_text: &str) -> PragmaLoopPair {
    let src = format!("void f(void)\n{{\n{pragma}\n{loop_text}\n}}\n");
    let f = SourceFile::from_bytes(file, src.as_bytes(), Origin::Local);
    let tree = parse_source(&f).unwrap();
    let mut got = extract_pairs(&tree, &f).pairs;
    assert_eq!(got.len(), 1, "expected one pair from {src}");
    got.remove(0)
}
