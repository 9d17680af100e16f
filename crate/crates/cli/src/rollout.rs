//! Controller rollouts of the named scenarios.

use std::io::Write;

use anyhow::Result;
use kineverse::control::Trace;
use kineverse::scenes::{scenario, SCENARIOS};

pub const DEFAULT_DT: f64 = 0.02;
pub const DEFAULT_STEPS: usize = 500;

pub fn run(name: &str, dt: f64, steps: usize) -> Result<Trace> {
    let s = scenario(name, dt, steps)?;
    Ok(s.run()?)
}

pub fn scenario_names() -> &'static [&'static str] {
    &SCENARIOS
}

pub fn write_csv(out: impl Write, trace: &Trace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace.csv_header())?;
    for row in &trace.rows {
        w.write_record(Trace::csv_record(row))?;
    }
    w.flush()?;
    Ok(())
}
