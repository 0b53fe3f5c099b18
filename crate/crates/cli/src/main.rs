fn main() {
    std::process::exit(iltber::run(std::env::args_os()));
}
