fn main() {
    std::process::exit(bohmlab_cli::main_with_args(std::env::args_os()));
}
