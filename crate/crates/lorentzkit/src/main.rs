fn main() {
    // CLI wiring arrives with the cli module.
    eprintln!("lorentzkit: not yet wired");
    std::process::exit(2);
}
