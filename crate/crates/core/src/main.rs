fn main() -> std::process::ExitCode {
    lgtc::cli::main_entry()
}
