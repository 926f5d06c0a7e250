fn main() {
    std::process::exit(nullctl::main_with_args(std::env::args_os()));
}
