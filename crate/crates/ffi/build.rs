use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").expect("CARGO_MANIFEST_DIR not set");
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let config =
        cbindgen::Config::from_file(PathBuf::from(&crate_dir).join("cbindgen.toml")).expect("cbindgen.toml is invalid");
    let out = PathBuf::from(&crate_dir).join("include").join("surgflow.h");
    cbindgen::generate_with_config(&crate_dir, config).expect("unable to generate C bindings").write_to_file(out);
}
