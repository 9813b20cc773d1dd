//! Trajectory files.
//!
//! CSV: header `t,x_pos,u,x_1,...,x_d`, one row per (snapshot, node).
//!
//! Binary (little-endian): a 16-byte header `"NAXS"`, version `u16`, `n u16`,
//! `d u16`, six zero bytes; then per snapshot `t`, the n+1 values of `u` and
//! the d rows of n+1 gating values, all `f64`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::solver::TrajectoryRecord;

pub const MAGIC: [u8; 4] = *b"NAXS";
pub const BINARY_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

pub fn write_csv<W: Write>(traj: &TrajectoryRecord, mut w: W) -> Result<()> {
    let mut header = String::from("t,x_pos,u");
    for i in 1..=traj.d {
        header.push_str(&format!(",x_{i}"));
    }
    writeln!(w, "{header}")?;
    let m = traj.n + 1;
    let mut line = String::new();
    for (j, &t) in traj.times.iter().enumerate() {
        for k in 0..m {
            line.clear();
            let pos = k as f64 / traj.n as f64;
            line.push_str(&format!("{t},{pos},{}", traj.u[j][k]));
            for i in 0..traj.d {
                line.push_str(&format!(",{}", traj.x[j][i * m + k]));
            }
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

/// Monitor series `t,r_env,g,excursion`, one row per snapshot.
pub fn write_monitor_csv<W: Write>(traj: &TrajectoryRecord, mut w: W) -> Result<()> {
    writeln!(w, "t,r_env,g,excursion")?;
    for j in 0..traj.len() {
        writeln!(
            w,
            "{},{},{},{}",
            traj.times[j], traj.r_env[j], traj.g[j], traj.excursion[j]
        )?;
    }
    Ok(())
}

fn header(n: usize, d: usize) -> Result<[u8; HEADER_LEN]> {
    let n16 = u16::try_from(n).map_err(|_| Error::param("n", format!("{n} does not fit the binary header")))?;
    let d16 = u16::try_from(d).map_err(|_| Error::param("d", format!("{d} does not fit the binary header")))?;
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(&MAGIC);
    h[4..6].copy_from_slice(&BINARY_VERSION.to_le_bytes());
    h[6..8].copy_from_slice(&n16.to_le_bytes());
    h[8..10].copy_from_slice(&d16.to_le_bytes());
    Ok(h)
}

pub fn write_binary<W: Write>(traj: &TrajectoryRecord, mut w: W) -> Result<()> {
    w.write_all(&header(traj.n, traj.d)?)?;
    let mut buf = Vec::with_capacity(8 * (1 + (traj.d + 1) * (traj.n + 1)));
    for j in 0..traj.len() {
        buf.clear();
        buf.extend_from_slice(&traj.times[j].to_le_bytes());
        for v in traj.u[j].iter().chain(&traj.x[j]) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Contents of a binary trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryTrajectory {
    pub n: usize,
    pub d: usize,
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    /// d x (n+1) row-major per snapshot.
    pub x: Vec<Vec<f64>>,
}

pub fn read_binary<R: Read>(mut r: R) -> Result<BinaryTrajectory> {
    let mut h = [0u8; HEADER_LEN];
    r.read_exact(&mut h)
        .map_err(|_| Error::Format("shorter than the 16-byte header".into()))?;
    if h[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes([h[4], h[5]]);
    if version != BINARY_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u16::from_le_bytes([h[6], h[7]]) as usize;
    let d = u16::from_le_bytes([h[8], h[9]]) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let m = n + 1;
    let record = 8 * (1 + m * (d + 1));
    if body.len() % record != 0 {
        return Err(Error::Format(format!(
            "{} body bytes is not a multiple of the {record}-byte snapshot",
            body.len()
        )));
    }
    let mut out = BinaryTrajectory {
        n,
        d,
        times: Vec::new(),
        u: Vec::new(),
        x: Vec::new(),
    };
    for chunk in body.chunks_exact(record) {
        let vals: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        out.times.push(vals[0]);
        out.u.push(vals[1..1 + m].to_vec());
        out.x.push(vals[1 + m..].to_vec());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> TrajectoryRecord {
        TrajectoryRecord {
            n: 2,
            d: 1,
            dt: 0.5,
            record_every: 1,
            times: vec![0.0, 0.5],
            u: vec![vec![1.0, 2.0, 3.0], vec![-1.5, 0.25, 1e-300]],
            x: vec![vec![0.1, 0.2, 0.3], vec![0.4, 0.5, 0.6]],
            r_env: vec![4.0, 4.0],
            g: vec![0.0, 1.0],
            excursion: vec![0.0, 0.0],
            max_excursion: 0.0,
            laplacian_energy: 0.0,
            final_sup_u: 3.0,
        }
    }

    #[test]
    fn binary_round_trip() {
        let mut buf = Vec::new();
        write_binary(&record(), &mut buf).unwrap();
        assert_eq!(&buf[..4], b"NAXS");
        assert_eq!(buf.len(), 16 + 2 * 8 * 7);
        assert_eq!(&buf[10..16], &[0u8; 6]);
        let back = read_binary(&buf[..]).unwrap();
        let rec = record();
        assert_eq!((back.n, back.d), (2, 1));
        assert_eq!(back.times, rec.times);
        assert_eq!(back.u, rec.u);
        assert_eq!(back.x, rec.x);
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let mut buf = Vec::new();
        write_binary(&record(), &mut buf).unwrap();
        assert!(matches!(read_binary(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(read_binary(&buf[..10]), Err(Error::Format(_))));
        buf[0] = b'X';
        assert!(matches!(read_binary(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&record(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x_pos,u,x_1");
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert_eq!(lines[2], "0,0.5,2,0.2");
        assert_eq!(lines[4], "0.5,0,-1.5,0.4");
    }
}
