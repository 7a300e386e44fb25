//! Plain-text file formats. Floats are written with Rust's shortest
//! round-trip formatting, so write-then-read is value exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::analysis::{Histogram, PosteriorSummary};
use crate::error::{Error, Result};
use crate::mcmc::{ChainSample, ChainStats};
use crate::pce::build_basis;
use crate::solver::{DiscretizationParams, SgfemSurrogate, SurrogateBox, Thermogram};

pub const THERMOGRAM_HEADER: &str = "time_s,temperature_K";
pub const CHAIN_HEADER: &str = "index,theta1,theta2,lambda,I,accepted_flag,used_surrogate_flag";
const SURROGATE_MAGIC: &str = "flashbayes-surrogate";
const SURROGATE_VERSION: u32 = 1;

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_f64(path: &str, line: usize, field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("`{field}` is not a number")))
}

pub fn write_thermogram(mut w: impl Write, t: &Thermogram) -> Result<()> {
    writeln!(w, "{THERMOGRAM_HEADER}")?;
    for (time, temp) in t.times.iter().zip(&t.temps) {
        writeln!(w, "{time},{temp}")?;
    }
    Ok(())
}

/// Reads a thermogram, requiring at least two equally spaced, increasing times.
pub fn read_thermogram(r: impl BufRead, path: &str) -> Result<Thermogram> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != THERMOGRAM_HEADER {
        return Err(parse_err(
            path,
            1,
            format!("expected header `{THERMOGRAM_HEADER}`"),
        ));
    }
    let (mut times, mut temps) = (Vec::new(), Vec::new());
    for (k, line) in lines.enumerate() {
        let line = line?;
        let n = k + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(path, n, "expected two comma-separated fields"));
        };
        let (t, v) = (parse_f64(path, n, a)?, parse_f64(path, n, b)?);
        if !(t.is_finite() && v.is_finite()) {
            return Err(parse_err(path, n, "values must be finite"));
        }
        if times.last().is_some_and(|&prev| t <= prev) {
            return Err(parse_err(path, n, "times must be strictly increasing"));
        }
        times.push(t);
        temps.push(v);
    }
    if times.len() < 2 {
        return Err(parse_err(path, 1, "a thermogram needs at least two rows"));
    }
    let span = times[times.len() - 1] - times[0];
    let dt = span / (times.len() - 1) as f64;
    for (i, t) in times.iter().enumerate() {
        if (t - (times[0] + i as f64 * dt)).abs() > 1e-9 * span {
            return Err(parse_err(path, i + 2, "times are not equally spaced"));
        }
    }
    Thermogram::new(times, temps)
}

pub fn write_thermogram_file(path: &Path, t: &Thermogram) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_thermogram(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn read_thermogram_file(path: &Path) -> Result<Thermogram> {
    read_thermogram(
        BufReader::new(File::open(path)?),
        &path.display().to_string(),
    )
}

fn join(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Versioned text container: header lines, then one row of `B` per line.
pub fn write_surrogate(mut w: impl Write, s: &SgfemSurrogate) -> Result<()> {
    let b = &s.bounds;
    writeln!(w, "{SURROGATE_MAGIC} {SURROGATE_VERSION}")?;
    writeln!(w, "degree {}", s.basis.degree())?;
    writeln!(w, "modes {}", s.n_modes())?;
    let idx: Vec<String> = s
        .basis
        .indices()
        .iter()
        .map(|a| format!("{},{}", a[0], a[1]))
        .collect();
    writeln!(w, "indices {}", idx.join(" "))?;
    writeln!(
        w,
        "box {} {} {} {}",
        b.mu_lambda, b.nu_lambda, b.mu_intensity, b.nu_intensity
    )?;
    writeln!(
        w,
        "time_grid {} {} {}",
        s.disc.n_steps, s.disc.n_obs, s.disc.tau
    )?;
    writeln!(
        w,
        "hash {}",
        if s.input_hash.is_empty() {
            "-"
        } else {
            &s.input_hash
        }
    )?;
    writeln!(w, "times {}", join(s.times.iter().copied()))?;
    writeln!(w, "rows {}", s.n_obs())?;
    for m in 0..s.n_obs() {
        writeln!(w, "{}", join(s.row(m).iter().copied()))?;
    }
    Ok(())
}

pub fn read_surrogate(r: impl BufRead, path: &str) -> Result<SgfemSurrogate> {
    let mut lines = r.lines().enumerate().map(|(k, l)| l.map(|l| (k + 1, l)));
    let mut next = |key: &str| -> Result<(usize, String)> {
        let (n, line) = lines
            .next()
            .transpose()?
            .ok_or_else(|| parse_err(path, 0, format!("missing `{key}`")))?;
        if key.is_empty() {
            return Ok((n, line));
        }
        let rest = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| parse_err(path, n, format!("expected `{key}`")))?;
        Ok((n, rest.to_string()))
    };
    let (n, version) = next(SURROGATE_MAGIC)?;
    if version.trim() != SURROGATE_VERSION.to_string() {
        return Err(parse_err(
            path,
            n,
            format!("unsupported surrogate version {version}"),
        ));
    }
    let numbers = |n: usize, s: &str| -> Result<Vec<f64>> {
        s.split_whitespace()
            .map(|f| parse_f64(path, n, f))
            .collect()
    };
    let int = |n: usize, s: &str| -> Result<usize> {
        s.trim()
            .parse::<usize>()
            .map_err(|_| parse_err(path, n, format!("`{s}` is not an integer")))
    };

    let (n, degree) = next("degree")?;
    let degree = int(n, &degree)?;
    let basis = build_basis(degree);
    let (n, modes) = next("modes")?;
    if int(n, &modes)? != basis.len() {
        return Err(parse_err(path, n, "mode count disagrees with the degree"));
    }
    let (n, indices) = next("indices")?;
    let expected: Vec<String> = basis
        .indices()
        .iter()
        .map(|a| format!("{},{}", a[0], a[1]))
        .collect();
    if indices
        .split_whitespace()
        .ne(expected.iter().map(String::as_str))
    {
        return Err(parse_err(
            path,
            n,
            "multi-index ordering differs from this build",
        ));
    }
    let (n, bx) = next("box")?;
    let bx = numbers(n, &bx)?;
    let [mu_lambda, nu_lambda, mu_intensity, nu_intensity] = bx[..] else {
        return Err(parse_err(path, n, "box needs four numbers"));
    };
    let bounds = SurrogateBox {
        mu_lambda,
        nu_lambda,
        mu_intensity,
        nu_intensity,
    };
    let (n, grid) = next("time_grid")?;
    let parts: Vec<&str> = grid.split_whitespace().collect();
    let [n_t, n_d, tau] = parts[..] else {
        return Err(parse_err(path, n, "time_grid needs n_t n_d tau"));
    };
    let (n_steps, n_obs, tau) = (int(n, n_t)?, int(n, n_d)?, parse_f64(path, n, tau)?);
    let disc = DiscretizationParams::new(tau * n_steps as f64, n_steps, n_obs, degree)
        .map_err(|e| parse_err(path, n, e.to_string()))?;
    let disc = DiscretizationParams { tau, ..disc };
    let (_, hash) = next("hash")?;
    let (n, times) = next("times")?;
    let times = numbers(n, &times)?;
    let (n, rows) = next("rows")?;
    let rows = int(n, &rows)?;
    if rows != n_obs || times.len() != n_obs {
        return Err(parse_err(path, n, "row count disagrees with n_d"));
    }
    let mut observed = Vec::with_capacity(rows * basis.len());
    for _ in 0..rows {
        let (n, line) = next("")?;
        let row = numbers(n, &line)?;
        if row.len() != basis.len() {
            return Err(parse_err(
                path,
                n,
                format!("expected {} values, found {}", basis.len(), row.len()),
            ));
        }
        observed.extend(row);
    }
    let mut s = SgfemSurrogate::from_parts(basis, bounds, disc, times, observed)?;
    s.input_hash = if hash.trim() == "-" {
        String::new()
    } else {
        hash.trim().to_string()
    };
    Ok(s)
}

pub fn write_surrogate_file(path: &Path, s: &SgfemSurrogate) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_surrogate(&mut w, s)?;
    w.flush()?;
    Ok(())
}

pub fn read_surrogate_file(path: &Path) -> Result<SgfemSurrogate> {
    read_surrogate(
        BufReader::new(File::open(path)?),
        &path.display().to_string(),
    )
}

/// Loads a surrogate and refuses it unless it was built from `expected_hash`.
pub fn read_surrogate_checked(path: &Path, expected_hash: &str) -> Result<SgfemSurrogate> {
    let s = read_surrogate_file(path)?;
    if s.input_hash != expected_hash {
        return Err(Error::HashMismatch {
            expected: expected_hash.to_string(),
            found: s.input_hash,
        });
    }
    Ok(s)
}

/// Streams retained chain states as CSV.
pub struct ChainWriter<W: Write> {
    w: W,
}

impl<W: Write> ChainWriter<W> {
    pub fn new(mut w: W, seed: u64, beta: f64, burn_in: usize, thin: usize) -> Result<Self> {
        writeln!(w, "# seed={seed}")?;
        writeln!(w, "# beta={beta}")?;
        writeln!(w, "# burn_in={burn_in}")?;
        writeln!(w, "# thin={thin}")?;
        writeln!(w, "{CHAIN_HEADER}")?;
        Ok(Self { w })
    }

    pub fn write(&mut self, s: &ChainSample) -> Result<()> {
        let [t1, t2] = s.theta;
        writeln!(
            self.w,
            "{},{t1},{t2},{},{},{},{}",
            s.index,
            t1.exp(),
            t2.exp(),
            u8::from(s.accepted),
            u8::from(s.used_surrogate)
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.w.flush()?;
        Ok(self.w)
    }
}

/// Chain file contents: `# key=value` metadata and the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFile {
    pub metadata: Vec<(String, String)>,
    pub samples: Vec<ChainSample>,
}

impl ChainFile {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub fn read_chain(r: impl BufRead, path: &str) -> Result<ChainFile> {
    let mut metadata = Vec::new();
    let mut samples = Vec::new();
    let mut seen_header = false;
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let n = k + 1;
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((key, value)) = meta.trim().split_once('=') {
                metadata.push((key.trim().to_string(), value.trim().to_string()));
            }
            continue;
        }
        if !seen_header {
            if line.trim() != CHAIN_HEADER {
                return Err(parse_err(
                    path,
                    n,
                    format!("expected header `{CHAIN_HEADER}`"),
                ));
            }
            seen_header = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(parse_err(path, n, "expected 7 fields"));
        }
        let index = f[0].parse().map_err(|_| parse_err(path, n, "bad index"))?;
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(parse_err(path, n, format!("bad flag `{s}`"))),
        };
        samples.push(ChainSample {
            index,
            theta: [parse_f64(path, n, f[1])?, parse_f64(path, n, f[2])?],
            accepted: flag(f[5])?,
            used_surrogate: flag(f[6])?,
        });
    }
    if !seen_header {
        return Err(parse_err(path, 1, "missing chain header"));
    }
    Ok(ChainFile { metadata, samples })
}

pub fn read_chain_file(path: &Path) -> Result<ChainFile> {
    read_chain(
        BufReader::new(File::open(path)?),
        &path.display().to_string(),
    )
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

/// `key=value` lines describing a posterior summary and its chains.
pub fn write_summary(mut w: impl Write, s: &PosteriorSummary, chains: &[ChainStats]) -> Result<()> {
    writeln!(w, "samples={}", s.count)?;
    writeln!(w, "mean_lambda={}", s.mean_lambda)?;
    writeln!(w, "sd_lambda={}", s.sd_lambda)?;
    writeln!(w, "mean_I={}", s.mean_intensity)?;
    writeln!(w, "sd_I={}", s.sd_intensity)?;
    writeln!(w, "corr_lambda_I={}", opt(s.corr_lambda_intensity))?;
    writeln!(w, "mean_alpha={}", s.mean_alpha)?;
    writeln!(w, "sd_alpha={}", s.sd_alpha)?;
    for (k, c) in s.conditionals.iter().enumerate() {
        writeln!(w, "conditional_{k}_window={},{}", c.window.0, c.window.1)?;
        writeln!(w, "conditional_{k}_count={}", c.count)?;
        writeln!(w, "conditional_{k}_low_confidence={}", c.low_confidence)?;
    }
    for c in chains {
        let seed = c.seed;
        writeln!(w, "chain_{seed}_beta={}", c.beta)?;
        writeln!(w, "chain_{seed}_acceptance={}", c.acceptance_rate())?;
        writeln!(
            w,
            "chain_{seed}_fallback_fraction={}",
            c.fallback_fraction()
        )?;
    }
    Ok(())
}

pub fn write_histogram(mut w: impl Write, h: &Histogram) -> Result<()> {
    writeln!(w, "lower,upper,count,density")?;
    for ((e, c), d) in h.edges.windows(2).zip(&h.counts).zip(&h.density) {
        writeln!(w, "{},{},{c},{d}", e[0], e[1])?;
    }
    Ok(())
}

/// All histogram tables of a summary into `dir`.
pub fn write_histograms(dir: &Path, s: &PosteriorSummary) -> Result<()> {
    let create = |name: &str| -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(dir.join(name))?))
    };
    let mut w = create("hist_lambda.csv")?;
    write_histogram(&mut w, &s.lambda_histogram)?;
    w.flush()?;
    let mut w = create("hist_I.csv")?;
    write_histogram(&mut w, &s.intensity_histogram)?;
    w.flush()?;
    for (k, c) in s.conditionals.iter().enumerate() {
        let mut w = create(&format!("hist_lambda_given_I_{k}.csv"))?;
        writeln!(w, "# I_window={},{}", c.window.0, c.window.1)?;
        writeln!(w, "# count={}", c.count)?;
        writeln!(w, "# low_confidence={}", c.low_confidence)?;
        write_histogram(&mut w, &c.histogram)?;
        w.flush()?;
    }
    let j = &s.joint;
    let mut w = create("hist_joint.csv")?;
    writeln!(w, "lambda_lower,lambda_upper,I_lower,I_upper,density")?;
    let ny = j.y_edges.len() - 1;
    for (i, xe) in j.x_edges.windows(2).enumerate() {
        for (k, ye) in j.y_edges.windows(2).enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                xe[0],
                xe[1],
                ye[0],
                ye[1],
                j.density[i * ny + k]
            )?;
        }
    }
    w.flush()?;
    Ok(())
}
