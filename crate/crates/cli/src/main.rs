fn main() {
    std::process::exit(bankwatch::main_with(std::env::args_os()));
}
