fn main() {
    std::process::exit(spde_control::harness::cli_main(std::env::args_os()));
}
