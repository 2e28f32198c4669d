fn main() {
    std::process::exit(affordance_vqa::cli::run(std::env::args_os()));
}
