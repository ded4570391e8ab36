fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mut out = std::io::stdout().lock();
    std::process::exit(bonus_plans::cli::run(&args, &mut out));
}
