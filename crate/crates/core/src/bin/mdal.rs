fn main() {
    mdal::cli::init_logging();
    std::process::exit(mdal::cli::dispatch(std::env::args_os()));
}
