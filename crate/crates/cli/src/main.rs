use clap::Parser;

fn main() {
    let cli = phasenas_cli::Cli::parse();
    let code = phasenas_cli::run(cli, &mut std::io::stdout().lock());
    std::process::exit(code);
}
