fn main() {
    let code = dualaoi_cli::app::main_with(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
