fn main() {
    std::process::exit(seqlabel_rnn::cli::run(std::env::args_os()));
}
