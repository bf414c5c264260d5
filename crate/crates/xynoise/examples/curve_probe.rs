use xynoise::experiments::{run_sweep, table_grid, ResponseKind, SweepConfig};
use xynoise::operators::{ChainSpec, NoisePlacement};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let key = args.get(1).map(String::as_str).unwrap_or("psi_plus_4q_prep7");
    let qubits: Vec<usize> = args
        .get(2)
        .map(String::as_str)
        .unwrap_or("234")
        .chars()
        .map(|c| c.to_digit(10).unwrap() as usize)
        .collect();
    let n = if key.contains("3q") || key.starts_with('w') { 3 } else { 4 };
    let mut cfg =
        SweepConfig::new(key, ChainSpec::reference(n), NoisePlacement::new(qubits, 0.0)).unwrap();
    cfg.grid = table_grid(cfg.response);
    cfg.t_max = if cfg.response == ResponseKind::EsdTime { 3000.0 } else { 1200.0 };
    let curve = run_sweep(&cfg).unwrap();
    for i in 0..curve.len() {
        println!(
            "{:12.6e} {:14.8e} {}",
            curve.m_values[i], curve.responses[i], curve.censored[i]
        );
    }
}
