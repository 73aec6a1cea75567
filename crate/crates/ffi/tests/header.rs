use std::path::Path;
use std::process::Command;

/// The generated header must compile as C and as C++.
#[test]
fn header_compiles() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"aihs.h\"\n\
         int main(void) {\n\
           AihsOperator *op = 0;\n\
           AihsStatus s = aihs_operator_from_json(\"{}\", &op);\n\
           AihsRoundTrip r;\n\
           (void)r;\n\
           return s == AIHS_STATUS_OK ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let status = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg("-I")
            .arg(&include)
            .arg(&src)
            .status();
        match status {
            Ok(s) => assert!(s.success(), "{compiler} rejected the header"),
            Err(e) => panic!("cannot run {compiler}: {e}"),
        }
    }
}
