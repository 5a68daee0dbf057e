//! Free-space spherical-wave line-of-sight channels between the user array,
//! every surface layer and the base-station array.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{Position, SurfaceGeometry};

pub type CMatrix = DMatrix<Complex64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn wavelength(frequency_hz: f64) -> f64 {
    SPEED_OF_LIGHT / frequency_hz
}

/// `(λ / 4πd) · exp(-j 2π d / λ)` for the link `tx → rx`.
pub fn los_entry(tx: &Position, rx: &Position, wavelength: f64) -> Result<Complex64> {
    let d = (rx - tx).norm();
    if !(d > 0.0) {
        return Err(Error::Singularity {
            tx: 0,
            rx: 0,
            distance: d,
        });
    }
    Ok(los_at_distance(d, wavelength))
}

#[inline]
fn los_at_distance(d: f64, wavelength: f64) -> Complex64 {
    let amplitude = wavelength / (4.0 * PI * d);
    Complex64::from_polar(amplitude, -2.0 * PI * d / wavelength)
}

/// Matrix with entry `[r, t] = los_entry(tx[t], rx[r])`.
fn link(tx: &[Position], rx: &[Position], wavelength: f64) -> Result<CMatrix> {
    let mut m = CMatrix::zeros(rx.len(), tx.len());
    for (r, rp) in rx.iter().enumerate() {
        for (t, tp) in tx.iter().enumerate() {
            let d = (rp - tp).norm();
            if !(d > 0.0) {
                return Err(Error::Singularity {
                    tx: t,
                    rx: r,
                    distance: d,
                });
            }
            m[(r, t)] = los_at_distance(d, wavelength);
        }
    }
    Ok(m)
}

/// Uniform linear array along x, centred on `center`.
pub fn ula_positions(center: Position, count: usize, spacing: f64) -> Vec<Position> {
    let mid = (count as f64 - 1.0) / 2.0;
    (0..count)
        .map(|k| Position::new(center.x + (k as f64 - mid) * spacing, center.y, center.z))
        .collect()
}

/// All channel matrices of one fold configuration.
///
/// `h[0]` is N×K (user → layer 1), `h[l]` for `l ≥ 1` is N×N (layer l → layer
/// l+1, 0-based), and `g` is N×M so that `g^H` maps the last layer to the BS.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: Vec<CMatrix>,
    pub g: CMatrix,
}

impl ChannelSet {
    pub fn layers(&self) -> usize {
        self.h.len()
    }

    /// Elements per layer.
    pub fn elements(&self) -> usize {
        self.g.nrows()
    }

    pub fn user_antennas(&self) -> usize {
        self.h[0].ncols()
    }

    pub fn bs_antennas(&self) -> usize {
        self.g.ncols()
    }

    /// Writes `h1.txt … hL.txt` and `g.txt` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (l, h) in self.h.iter().enumerate() {
            let file = fs::File::create(dir.join(format!("h{}.txt", l + 1)))?;
            write_matrix(h, std::io::BufWriter::new(file))?;
        }
        let file = fs::File::create(dir.join("g.txt"))?;
        write_matrix(&self.g, std::io::BufWriter::new(file))?;
        Ok(())
    }
}

/// Builds every link of the cascade from element and antenna positions.
pub fn synthesize(
    user: &[Position],
    surface: &SurfaceGeometry,
    bs: &[Position],
    wavelength: f64,
) -> Result<ChannelSet> {
    if user.is_empty() || bs.is_empty() || surface.layers() == 0 {
        return Err(Error::domain("channel synthesis needs nonempty endpoint sets"));
    }
    if !(wavelength > 0.0) {
        return Err(Error::domain(format!("wavelength must be positive, got {wavelength}")));
    }
    let mut h = Vec::with_capacity(surface.layers());
    h.push(link(user, surface.layer(0), wavelength)?);
    for l in 1..surface.layers() {
        h.push(link(surface.layer(l - 1), surface.layer(l), wavelength)?);
    }
    let last = surface.layer(surface.layers() - 1);
    // g[n, m] is the link from element n to BS antenna m
    let g = link(last, bs, wavelength)?.transpose();
    Ok(ChannelSet { h, g })
}

/// Text dump: header `rows cols`, then one `re im` pair per line, row-major.
pub fn write_matrix<W: Write>(m: &CMatrix, mut out: W) -> Result<()> {
    writeln!(out, "{} {}", m.nrows(), m.ncols())?;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            writeln!(out, "{:.16e} {:.16e}", z.re, z.im)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix<R: BufRead>(input: R) -> Result<CMatrix> {
    let bad = |msg: String| Error::domain(format!("malformed matrix dump: {msg}"));
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| bad("missing header".into()))??;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| bad(format!("header `{header}`: {e}"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(bad(format!("header `{header}` must hold two counts")));
    };
    let mut m = CMatrix::zeros(rows, cols);
    for i in 0..rows * cols {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("expected {} entries, got {i}", rows * cols)))??;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| bad(format!("line `{line}`: {e}"))))
            .collect::<Result<_>>()?;
        let [re, im] = vals[..] else {
            return Err(bad(format!("line `{line}` must hold two numbers")));
        };
        m[(i / cols, i % cols)] = Complex64::new(re, im);
    }
    Ok(m)
}
