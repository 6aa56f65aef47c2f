//! Command-line entry point. Fleshed out alongside the pipeline modules.

pub fn run(_args: Vec<String>) -> i32 {
    eprintln!("atelier: not yet wired");
    1
}
