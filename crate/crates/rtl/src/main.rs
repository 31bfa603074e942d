fn main() {
    std::process::exit(rtl::run_cli(std::env::args_os()));
}
