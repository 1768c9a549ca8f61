fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    gwt_cli::tune_allocator();
    std::process::exit(gwt_cli::run(std::env::args_os()));
}
