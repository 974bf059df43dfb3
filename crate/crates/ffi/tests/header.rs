//! The generated header compiles as C and declares the full API.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

const PROGRAM: &str = r#"
#include "histocr.h"
int use_api(void) {
    char *s = 0;
    size_t d = 0;
    bool found = false;
    HistocrLineMetrics m;
    HistocrLexicon *lex = 0;
    const char *words[] = {"preſent"};
    if (histocr_normalize("a  b", &s) != HISTOCR_STATUS_OK) return 1;
    histocr_string_free(s);
    histocr_char_distance("a", "b", &d);
    histocr_line_metrics("a", "b", &m);
    histocr_lexicon_from_words(words, 1, false, &lex);
    histocr_lexicon_contains(lex, "present", &found);
    histocr_lexicon_save(lex, "x.lex");
    histocr_lexicon_free(lex);
    histocr_lexicon_load("x.lex", &lex);
    histocr_evaluate_manifest("m.jsonl", 100, 1, &s);
    histocr_analyze_manifest("m.jsonl", lex, 0, 100, 1, &s);
    return (int)histocr_lexicon_len(lex) + (histocr_last_error_message() == 0) + (histocr_version()[0] != 0);
}
"#;

#[test]
fn header_compiles() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("histocr.h").exists());
    let Ok(mut child) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c", "-", "-I"])
        .arg(&include)
        .stdin(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
    else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    child.stdin.take().unwrap().write_all(PROGRAM.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
