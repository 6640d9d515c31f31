//! Reference external projector: answers every request with its input.
//!
//! Modes (first argument): `echo` (default), `short` (drops the last value),
//! `nan` (first value replaced by NaN), `sleep` (never answers), `square`
//! (squares every value).

use std::io::{self, BufReader, BufWriter, Read, Write};

fn main() -> io::Result<()> {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "echo".into());
    let mut input = BufReader::new(io::stdin().lock());
    let mut output = BufWriter::new(io::stdout().lock());
    loop {
        let mut magic = [0u8; 8];
        if input.read_exact(&mut magic).is_err() {
            return Ok(());
        }
        if &magic != b"OTPROJ01" {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic"));
        }
        let mut head = [0u8; 4];
        input.read_exact(&mut head)?;
        let n = u32::from_le_bytes(head) as usize;
        let mut buf = vec![0u8; n * 8];
        input.read_exact(&mut buf)?;
        let mut values: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        match mode.as_str() {
            "short" => {
                values.pop();
            }
            "nan" => {
                if let Some(v) = values.first_mut() {
                    *v = f64::NAN;
                }
            }
            "sleep" => loop {
                std::thread::sleep(std::time::Duration::from_secs(3600));
            },
            "square" => values.iter_mut().for_each(|v| *v *= *v),
            _ => {}
        }
        output.write_all(&(values.len() as u32).to_le_bytes())?;
        for v in &values {
            output.write_all(&v.to_le_bytes())?;
        }
        output.flush()?;
    }
}
