fn main() {
    std::process::exit(qbe_kws::cli::run(std::env::args_os()));
}
