fn main() {
    std::process::exit(adelattice::cli::dispatch(std::env::args_os()));
}
