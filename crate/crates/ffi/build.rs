//! Generates `include/dbvp.h` from the `extern "C"` items in `src/lib.rs`.

fn main() {
    let dir = std::env::var("CARGO_MANIFEST_DIR").expect("cargo sets CARGO_MANIFEST_DIR");
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=build.rs");
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("DBVP_H".into()),
        cpp_compat: true,
        documentation: true,
        header: Some("/* C interface of the dbvp library. Generated by cbindgen; do not edit. */".into()),
        enumeration: cbindgen::EnumConfig {
            rename_variants: cbindgen::RenameRule::ScreamingSnakeCase,
            prefix_with_name: true,
            ..Default::default()
        },
        ..Default::default()
    };
    let bindings = cbindgen::Builder::new()
        .with_crate(&dir)
        .with_config(config)
        .generate()
        .expect("cbindgen could not generate the C header");
    std::fs::create_dir_all(format!("{dir}/include")).expect("create include/");
    bindings.write_to_file(format!("{dir}/include/dbvp.h"));
}
