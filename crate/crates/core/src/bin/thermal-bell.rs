fn main() {
    std::process::exit(thermal_bell::app::main_with_args(std::env::args_os()));
}
