fn main() {
    std::process::exit(hitreduce::cli::main_with_args(std::env::args_os()));
}
