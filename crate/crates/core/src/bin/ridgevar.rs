use clap::Parser;

fn main() {
    let cli = ridgevar::cli::Cli::parse();
    match ridgevar::cli::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
