use std::process::Command;

fn main() {
    let out = Command::new("git").args(["describe", "--always", "--dirty", "--tags"]).output();
    if let Ok(o) = out {
        if o.status.success() {
            println!("cargo:rustc-env=LILO_GIT_DESCRIBE={}", String::from_utf8_lossy(&o.stdout).trim());
        }
    }
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}
