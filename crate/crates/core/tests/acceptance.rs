//! Runs all eleven acceptance criteria and prints one line per criterion.
//! Exits non-zero if any criterion fails.

use maflow::verify::verify_all;

fn main() {
    // `cargo test -- --list` and friends probe test binaries; answer politely.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let results = verify_all(maflow::verify::RUN2_SEED, &mut |r| {
        eprintln!("  done: criterion {}", r.id)
    });
    println!();
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    println!(
        "acceptance: {} passed, {} failed {:?}",
        results.len() - failed.len(),
        failed.len(),
        failed
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
