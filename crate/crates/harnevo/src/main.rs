use std::io;

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let code = harnevo::cli::run(&argv, &mut io::stdout(), &mut io::stderr(), &mut io::stdin().lock());
    std::process::exit(code);
}
