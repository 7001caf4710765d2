use ospc_cli::stub::{serve, Fault};

fn main() {
    let fault = std::env::var("PPD_STUB_FAULT").map(|s| Fault::parse(&s)).unwrap_or(Fault::None);
    let stdin = std::io::stdin();
    let code = serve(stdin.lock(), std::io::stdout().lock(), fault);
    std::process::exit(code);
}
