use super::SimError;
use crate::io::fmt17;
use std::io::{BufRead, BufReader, Read, Write};

/// Step-sequence currents, A.
pub const STEP_LEVELS: [f64; 6] = [100.0, 140.0, 180.0, 212.5, 160.0, 100.0];
/// Dwell per level, s.
pub const STEP_DWELL: f64 = 4.0;

pub const POWER_HEADER: &str = "t_s,power_pct";
pub const CURRENT_HEADER: &str = "t_s,i_st_a";

/// Demand signal driving a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// Stack-current demand in A, held between samples.
    Current(Vec<(f64, f64)>),
    /// Net-power request in percent of rated power, linearly interpolated.
    Power(Vec<(f64, f64)>),
}

impl Profile {
    pub fn step_fixture() -> Self {
        Profile::Current(STEP_LEVELS.iter().enumerate().map(|(k, &i)| (k as f64 * STEP_DWELL, i)).collect())
    }

    pub fn points(&self) -> &[(f64, f64)] {
        match self {
            Profile::Current(p) | Profile::Power(p) => p,
        }
    }

    /// Last time stamp, or the fixture's natural end for held profiles.
    pub fn natural_duration(&self) -> f64 {
        match self {
            Profile::Current(p) => p.last().map_or(0.0, |l| l.0) + STEP_DWELL,
            Profile::Power(p) => p.last().map_or(0.0, |l| l.0),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let p = self.points();
        if p.is_empty() {
            return Err(SimError::Config("profile has no samples".into()));
        }
        if p.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(SimError::Config("profile contains non-finite values".into()));
        }
        if p.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(SimError::Config("profile time stamps must be nondecreasing".into()));
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Profile::Current(p) => {
                let k = p.partition_point(|s| s.0 <= t);
                p[k.saturating_sub(1)].1
            }
            Profile::Power(p) => {
                let k = p.partition_point(|s| s.0 <= t);
                if k == 0 {
                    return p[0].1;
                }
                if k == p.len() {
                    return p[p.len() - 1].1;
                }
                let (a, b) = (p[k - 1], p[k]);
                if b.0 == a.0 {
                    return b.1;
                }
                a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
            }
        }
    }

    fn header(&self) -> &'static str {
        match self {
            Profile::Current(_) => CURRENT_HEADER,
            Profile::Power(_) => POWER_HEADER,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.header())?;
        for (t, v) in self.points() {
            writeln!(w, "{},{}", fmt17(*t), fmt17(*v))?;
        }
        Ok(())
    }
}

fn read_pairs<R: Read>(r: R, header: &str) -> Result<Vec<(f64, f64)>, SimError> {
    let mut out = Vec::new();
    let mut lines = BufReader::new(r).lines();
    let first = lines
        .next()
        .transpose()
        .map_err(|e| SimError::Parse { line: 1, msg: e.to_string() })?
        .ok_or(SimError::Parse { line: 1, msg: "empty file".into() })?;
    if first.trim() != header {
        return Err(SimError::Parse {
            line: 1,
            msg: format!("expected header `{header}`, found `{}`", first.trim()),
        });
    }
    for (k, line) in lines.enumerate() {
        let n = k + 2;
        let line = line.map_err(|e| SimError::Parse { line: n, msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(SimError::Parse {
                line: n,
                msg: format!("expected 2 fields, found {}", fields.len()),
            });
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| SimError::Parse { line: n, msg: format!("not a finite number: `{s}`") })
        };
        let (t, v) = (parse(fields[0])?, parse(fields[1])?);
        if let Some(&(tp, _)) = out.last() {
            if t < tp {
                return Err(SimError::Parse { line: n, msg: format!("time {t} decreases") });
            }
        }
        out.push((t, v));
    }
    if out.is_empty() {
        return Err(SimError::Parse { line: 2, msg: "no samples".into() });
    }
    Ok(out)
}

/// `t_s,power_pct` drive cycle.
pub fn ingest_drive_cycle<R: Read>(r: R) -> Result<Profile, SimError> {
    Ok(Profile::Power(read_pairs(r, POWER_HEADER)?))
}

/// `t_s,i_st_a` current demand.
pub fn read_current_profile<R: Read>(r: R) -> Result<Profile, SimError> {
    Ok(Profile::Current(read_pairs(r, CURRENT_HEADER)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_holds_levels() {
        let p = Profile::step_fixture();
        assert_eq!(p.value(0.0), 100.0);
        assert_eq!(p.value(3.999), 100.0);
        assert_eq!(p.value(4.0), 140.0);
        assert_eq!(p.value(13.0), 212.5);
        assert_eq!(p.natural_duration(), 24.0);
    }

    #[test]
    fn power_interpolates_and_clamps() {
        let p = Profile::Power(vec![(0.0, 20.0), (10.0, 40.0)]);
        assert_eq!(p.value(5.0), 30.0);
        assert_eq!(p.value(-1.0), 20.0);
        assert_eq!(p.value(11.0), 40.0);
    }

    #[test]
    fn round_trip_is_exact() {
        let p = Profile::Power(vec![(0.0, 50.0), (0.1, 1.0 / 3.0), (2.5, 90.000000000000014)]);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(ingest_drive_cycle(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "t_s,power_pct\n0,50\n1,abc\n";
        match ingest_drive_cycle(text.as_bytes()) {
            Err(SimError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "t_s,power_pct\n0,50\n2,50\n1,40\n";
        assert!(matches!(ingest_drive_cycle(text.as_bytes()), Err(SimError::Parse { line: 4, .. })));
        assert!(matches!(ingest_drive_cycle("time,p\n".as_bytes()), Err(SimError::Parse { line: 1, .. })));
    }
}
