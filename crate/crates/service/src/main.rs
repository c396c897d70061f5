use clap::Parser;

fn main() {
    let cli = affect_dialog_service::cli::Cli::parse();
    if let Err(e) = affect_dialog_service::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
