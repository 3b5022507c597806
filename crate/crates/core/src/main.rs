fn main() {
    ssf_codec::cli::configure_threads();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    std::process::exit(ssf_codec::cli::run(std::env::args_os()));
}
