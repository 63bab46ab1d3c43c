//! Config-driven experiment runner for `trimwave-core`.

pub mod config;
pub mod run;

use std::path::{Path, PathBuf};

pub use config::{Diagnostic, ExperimentConfig, Severity};
pub use run::{RunError, RunManifest};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

pub const DEFAULT_OUTPUT: &str = "trimwave-out";

fn read_config(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path)
        .map_err(|e| format!("{}: error: cannot read config: {e}", path.display()))
}

/// Prints diagnostics; exit code 0 when there are no errors.
pub fn validate_command(path: &Path) -> i32 {
    let text = match read_config(path) {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("{msg}");
            return EXIT_ERROR;
        }
    };
    let (_, diags) = config::load(&text);
    for d in &diags {
        eprintln!("{}", d.render(path));
    }
    if config::has_errors(&diags) {
        EXIT_ERROR
    } else {
        println!("{}: ok", path.display());
        EXIT_PASS
    }
}

/// Validates, runs and writes artifacts; returns the process exit code.
pub fn run_command(path: &Path, output: Option<PathBuf>, threads: Option<usize>) -> i32 {
    let started_at = chrono::Utc::now().to_rfc3339();
    let text = match read_config(path) {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("{msg}");
            return EXIT_ERROR;
        }
    };
    let (cfg, diags) = config::load(&text);
    for d in &diags {
        eprintln!("{}", d.render(path));
    }
    let Some(cfg) = cfg else {
        return EXIT_ERROR;
    };
    let dir = output
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_ERROR;
        }
    };
    let outputs = match pool.install(|| run::execute(&cfg)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{}: error: {e}", path.display());
            return EXIT_ERROR;
        }
    };
    let manifest = match run::write_run(&dir, &cfg, text.as_bytes(), &outputs, started_at) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    for a in &manifest.assertions {
        println!(
            "{} {}: {}",
            if a.pass { "PASS" } else { "FAIL" },
            a.name,
            a.detail
        );
    }
    println!(
        "wrote {} artifacts and manifest.json to {}",
        manifest.artifacts.len(),
        dir.display()
    );
    if manifest.pass {
        EXIT_PASS
    } else {
        EXIT_ASSERTION
    }
}
