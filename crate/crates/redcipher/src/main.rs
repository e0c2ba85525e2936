use std::env;
use std::process;

fn main() {
    process::exit(redcipher::cli::run(env::args_os()));
}
