//! Incident power maps, the element activation ratio and rate curves.

use std::io::Write;

use crate::beamforming::{CVector, CascadeContext};
use crate::error::{Error, Result};
use crate::search::ActivationTopology;

/// Power floor used for the dB column when an entry is exactly zero.
const DB_FLOOR: f64 = -300.0;

/// Incident power `|[h_l T(l-1,1) w]_n|²` at every grid location.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMap {
    pub rows: usize,
    pub cols: usize,
    pub power: Vec<Vec<f64>>,
    pub active: Vec<Vec<bool>>,
}

impl PowerMap {
    pub fn layers(&self) -> usize {
        self.power.len()
    }

    /// Heatmap CSV of layer `l` (0-based): `row,col,active,power_linear,power_db`.
    pub fn write_layer_csv<W: Write>(&self, l: usize, mut out: W) -> Result<()> {
        writeln!(out, "row,col,active,power_linear,power_db")?;
        for (n, (&p, &on)) in self.power[l].iter().zip(&self.active[l]).enumerate() {
            writeln!(
                out,
                "{},{},{},{:.16e},{:.6}",
                n / self.cols,
                n % self.cols,
                on as u8,
                p,
                to_db(p)
            )?;
        }
        Ok(())
    }
}

pub fn to_db(p: f64) -> f64 {
    if p > 0.0 {
        (10.0 * p.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Per-layer incident powers laid out as a single row; see [`PowerMap::with_grid`].
pub fn power_map(ctx: &CascadeContext<'_>, w: &CVector) -> PowerMap {
    let (incident, _) = ctx.propagate(w);
    PowerMap {
        rows: 1,
        cols: ctx.elements(),
        power: incident
            .iter()
            .map(|f| f.iter().map(|x| x.norm_sqr()).collect())
            .collect(),
        active: (0..ctx.layers()).map(|l| ctx.topology.layer(l).to_vec()).collect(),
    }
}

impl PowerMap {
    /// Reshapes the map onto a `rows × cols` grid for heatmap export.
    pub fn with_grid(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.power.first().map_or(0, Vec::len) {
            return Err(Error::domain(format!("grid {rows}x{cols} does not match the power map")));
        }
        self.rows = rows;
        self.cols = cols;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarReport {
    pub threshold: f64,
    /// `None` for layers without active elements.
    pub per_layer: Vec<Option<f64>>,
    pub global: f64,
    /// Peak active power per layer (0 when the layer is inactive).
    pub reference: Vec<f64>,
    pub active: usize,
}

impl EarReport {
    /// Flat `key = value` text block.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "threshold = {}", self.threshold)?;
        writeln!(out, "active_elements = {}", self.active)?;
        writeln!(out, "ear_global = {:.6}", self.global)?;
        for (l, (e, r)) in self.per_layer.iter().zip(&self.reference).enumerate() {
            match e {
                Some(e) => writeln!(out, "ear_layer{} = {:.6}", l + 1, e)?,
                None => writeln!(out, "ear_layer{} = nan", l + 1)?,
            }
            writeln!(out, "peak_power_layer{} = {:.16e}", l + 1, r)?;
        }
        Ok(())
    }
}

/// Fraction of active elements whose incident power reaches `threshold`
/// times the peak active power (global and per layer).
pub fn ear(map: &PowerMap, z: &ActivationTopology, threshold: f64) -> Result<EarReport> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::domain(format!("EAR threshold must lie in (0, 1], got {threshold}")));
    }
    if z.layers() != map.layers() {
        return Err(Error::domain("topology and power map disagree on the layer count"));
    }
    let active_total = z.budget();
    if active_total == 0 {
        return Err(Error::UndefinedMetric("EAR needs at least one active element".into()));
    }
    let active_powers = |l: usize| {
        map.power[l]
            .iter()
            .zip(z.layer(l))
            .filter(|(_, &on)| on)
            .map(|(&p, _)| p)
    };
    let reference: Vec<f64> = (0..z.layers())
        .map(|l| active_powers(l).fold(0.0, f64::max))
        .collect();
    let peak = reference.iter().cloned().fold(0.0, f64::max);

    let mut strong_global = 0;
    let mut per_layer = Vec::with_capacity(z.layers());
    for (l, &layer_peak) in reference.iter().enumerate() {
        let count = z.layer_budget(l);
        strong_global += active_powers(l).filter(|&p| p >= threshold * peak).count();
        let strong = active_powers(l).filter(|&p| p >= threshold * layer_peak).count();
        per_layer.push((count > 0).then(|| strong as f64 / count as f64));
    }
    Ok(EarReport {
        threshold,
        per_layer,
        global: strong_global as f64 / active_total as f64,
        reference,
        active: active_total,
    })
}

/// Rate-versus-power series sorted by transmit power.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    pub points: Vec<(f64, f64)>,
}

impl RateCurve {
    /// True when the rate never drops as the power grows.
    pub fn is_non_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 >= w[0].1)
    }
}

pub fn rate_curve(points: &[(f64, f64)]) -> Result<RateCurve> {
    if points.is_empty() {
        return Err(Error::domain("rate curve needs at least one point"));
    }
    let mut points = points.to_vec();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(RateCurve { points })
}
