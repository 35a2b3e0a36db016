//! Runs a named experiment from an inline config into a temporary directory.

use dr_lab::config::RunConfig;
use dr_lab::experiments::run;

const CONFIG: &str = r#"
experiment = "mgf-limit"
n_max = 300
seed = 1

[family]
kind = "dirac-mixture"
a = 2
p = 0.2
critical = true
"#;

fn main() -> dr_lab::Result<()> {
    let cfg = RunConfig::from_toml(CONFIG)?;
    let out = std::env::temp_dir().join("dr-lab-example");
    for f in run(&cfg, &out)? {
        println!("{}", out.join(f).display());
    }
    println!("{}", std::fs::read_to_string(out.join("summary.json"))?);
    Ok(())
}
