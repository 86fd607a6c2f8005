fn main() {
    std::process::exit(seq2seq::cli::main_with_args(std::env::args_os()));
}
