use std::io::{Read, Write};

use super::engine::SerRecord;
use crate::error::{Error, Result};

const COLUMNS: [&str; 11] = [
    "scenario",
    "fingerprint",
    "sf",
    "k0",
    "doppler_hz",
    "statistics",
    "detector",
    "snr_db",
    "symbols",
    "errors",
    "ser",
];

/// Write records as CSV. Wall time is only included on request, so that
/// repeated runs produce byte-identical files.
pub fn write_csv<W: Write>(records: &[SerRecord], out: W, with_timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if with_timing {
        header.push("wall_time_s");
    }
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.scenario.clone(),
            r.fingerprint.clone(),
            r.sf.to_string(),
            r.k0.to_string(),
            r.doppler_hz.to_string(),
            r.statistics.clone(),
            r.detector.to_string(),
            r.snr_db.to_string(),
            r.symbols.to_string(),
            r.errors.to_string(),
            format!("{:e}", r.ser),
        ];
        if with_timing {
            row.push(format!("{:.3}", r.wall_time_s));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(records: &[SerRecord], with_timing: bool) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf, with_timing).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Parse CSV written by [`write_csv`]; the timing column is optional.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<SerRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing column {name}")))
    };
    let idx: Vec<usize> = COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let timing = headers.iter().position(|h| h == "wall_time_s");
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
    let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let f = |i: usize| &row[idx[i]];
        out.push(SerRecord {
            scenario: f(0).to_string(),
            fingerprint: f(1).to_string(),
            sf: int(f(2))? as u32,
            k0: num(f(3))?,
            doppler_hz: num(f(4))?,
            statistics: f(5).to_string(),
            detector: f(6).parse()?,
            snr_db: num(f(7))?,
            symbols: int(f(8))?,
            errors: int(f(9))?,
            ser: num(f(10))?,
            wall_time_s: match timing {
                Some(t) => num(&row[t])?,
                None => 0.0,
            },
        });
    }
    Ok(out)
}
