use std::io;

fn main() {
    let code = pi0lab::cli::run(std::env::args_os().collect(), &mut io::stdout().lock(), &mut io::stderr().lock());
    std::process::exit(code);
}
