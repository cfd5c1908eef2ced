fn main() {
    std::process::exit(flatkern::cli::dispatch(std::env::args_os()));
}
