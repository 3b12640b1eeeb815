use std::process;

fn main() {
    process::exit(bolt::cli::cli_main(std::env::args_os()));
}
