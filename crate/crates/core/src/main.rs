fn main() {
    std::process::exit(biot_homog::cli_main());
}
