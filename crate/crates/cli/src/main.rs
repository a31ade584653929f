fn main() {
    std::process::exit(pournet::run(std::env::args_os()));
}
