fn main() {
    std::process::exit(heatctl_core::cli::dispatch(std::env::args_os()));
}
