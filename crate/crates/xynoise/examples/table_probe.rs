use xynoise::experiments::{reproduce_table, TableId};

fn main() {
    let id: TableId = std::env::args().nth(1).unwrap_or_else(|| "A6".into()).parse().unwrap();
    let t0 = std::time::Instant::now();
    let report = reproduce_table(id).unwrap();
    print!("{}", report.summary());
    println!("elapsed: {:.1}s", t0.elapsed().as_secs_f64());
}
