use clap::Parser;
use maflow::cli::{exit_code, run, thread_count, Cli, THREADS_VAR};

fn main() {
    let cli = Cli::parse();
    let threads = match thread_count(std::env::var(THREADS_VAR).ok().as_deref()) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    };
    if threads > 0 {
        // only fails if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let code = run(&cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
