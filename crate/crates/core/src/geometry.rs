//! Layer grids, the discrete fold-angle set and folded element positions.
//!
//! Coordinates: the user array sits at `origin`, layers are stacked along +y
//! (boresight, towards the base station), columns run along x and rows along z.
//! Each layer folds about its vertical centerline (a line parallel to z).

use std::io::Write;

use nalgebra::Point3;

use crate::error::{Error, Result};

pub type Position = Point3<f64>;

/// Static description of a multilayer surface before any folding.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSpec {
    pub layers: usize,
    pub rows: usize,
    pub cols: usize,
    pub element_pitch: f64,
    pub layer_spacing: f64,
    pub first_layer_offset: f64,
    pub origin: Position,
}

impl SurfaceSpec {
    /// Surface with layer 1 placed one layer spacing in front of the user.
    pub fn new(
        layers: usize,
        rows: usize,
        cols: usize,
        element_pitch: f64,
        layer_spacing: f64,
    ) -> Result<Self> {
        let spec = SurfaceSpec {
            layers,
            rows,
            cols,
            element_pitch,
            layer_spacing,
            first_layer_offset: layer_spacing,
            origin: Position::origin(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_origin(mut self, origin: Position) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_first_layer_offset(mut self, offset: f64) -> Result<Self> {
        self.first_layer_offset = offset;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.rows == 0 {
            return Err(Error::domain("surface needs at least one layer and one row"));
        }
        if self.cols < 2 {
            return Err(Error::domain(format!(
                "surface needs at least 2 columns so both halves are populated, got {}",
                self.cols
            )));
        }
        if !(self.element_pitch > 0.0 && self.element_pitch.is_finite()) {
            return Err(Error::domain(format!(
                "element pitch must be positive, got {}",
                self.element_pitch
            )));
        }
        if !(self.layer_spacing > 0.0 && self.layer_spacing.is_finite()) {
            return Err(Error::domain(format!(
                "layer spacing must be positive, got {}",
                self.layer_spacing
            )));
        }
        if !(self.first_layer_offset > 0.0 && self.first_layer_offset.is_finite()) {
            return Err(Error::domain(format!(
                "first layer offset must be positive, got {}",
                self.first_layer_offset
            )));
        }
        Ok(())
    }

    /// Grid locations per layer.
    pub fn elements_per_layer(&self) -> usize {
        self.rows * self.cols
    }

    pub fn total_elements(&self) -> usize {
        self.layers * self.elements_per_layer()
    }

    /// Distance from the user to layer `layer` (0-based) along boresight.
    pub fn layer_depth(&self, layer: usize) -> f64 {
        self.first_layer_offset + layer as f64 * self.layer_spacing
    }

    pub fn grid_index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Largest admissible fold angle for this surface.
    pub fn max_fold_angle(&self) -> f64 {
        // validated spec, cannot fail
        max_fold_angle(self.layer_spacing, flat_width(self)).unwrap_or(0.0)
    }

    /// Which half of the layer a column belongs to.
    pub fn half_of_column(&self, col: usize) -> Half {
        let twice = 2 * col + 1;
        match twice.cmp(&self.cols) {
            std::cmp::Ordering::Less => Half::Left,
            std::cmp::Ordering::Greater => Half::Right,
            std::cmp::Ordering::Equal => Half::Hinge,
        }
    }

    /// Signed lateral offset of a column centre from the hinge line.
    fn column_offset(&self, col: usize) -> f64 {
        (col as f64 - (self.cols as f64 - 1.0) / 2.0) * self.element_pitch
    }

    fn row_offset(&self, row: usize) -> f64 {
        (row as f64 - (self.rows as f64 - 1.0) / 2.0) * self.element_pitch
    }
}

/// Total width of a flat layer.
pub fn flat_width(spec: &SurfaceSpec) -> f64 {
    spec.cols as f64 * spec.element_pitch
}

/// Maximum fold angle `atan(2D / W)` before a folded half reaches the next layer.
pub fn max_fold_angle(layer_spacing: f64, flat_width: f64) -> Result<f64> {
    if !(layer_spacing > 0.0) || !(flat_width > 0.0) {
        return Err(Error::domain(format!(
            "max fold angle needs positive spacing and width, got D={layer_spacing}, W={flat_width}"
        )));
    }
    Ok((2.0 * layer_spacing / flat_width).atan())
}

/// Ordered, symmetric set of feasible fold angles.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSet {
    phi_max: f64,
    angles: Vec<f64>,
}

/// Uniform grid of `m` angles on `[-phi_max, phi_max]`; `{0}` when `m == 1`.
pub fn build_angle_set(m: usize, phi_max: f64) -> Result<AngleSet> {
    if m == 0 {
        return Err(Error::domain("angle set needs at least one angle"));
    }
    if !(phi_max > 0.0 && phi_max.is_finite()) {
        return Err(Error::domain(format!("phi_max must be positive, got {phi_max}")));
    }
    if m == 1 {
        return Ok(AngleSet {
            phi_max,
            angles: vec![0.0],
        });
    }
    let step = 2.0 * phi_max / (m - 1) as f64;
    let mut angles = vec![0.0; m];
    // fill the lower half and mirror it so the set is exactly symmetric
    for j in 0..m / 2 {
        let phi = -phi_max + j as f64 * step;
        angles[j] = phi;
        angles[m - 1 - j] = -phi;
    }
    Ok(AngleSet { phi_max, angles })
}

impl AngleSet {
    pub fn phi_max(&self) -> f64 {
        self.phi_max
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Index of `phi` in the set, matched to a tight relative tolerance.
    pub fn index_of(&self, phi: f64) -> Option<usize> {
        let tol = 1e-12 * self.phi_max.max(1.0);
        self.angles.iter().position(|a| (a - phi).abs() <= tol)
    }

    /// Index of the zero angle, present whenever the set size is odd.
    pub fn flat_index(&self) -> Option<usize> {
        self.index_of(0.0)
    }

    pub fn config(&self, left: usize, right: usize) -> Option<FoldConfiguration> {
        Some(FoldConfiguration {
            phi_left: *self.angles.get(left)?,
            phi_right: *self.angles.get(right)?,
        })
    }
}

/// Shared fold angles of the left and right halves of every layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldConfiguration {
    pub phi_left: f64,
    pub phi_right: f64,
}

impl FoldConfiguration {
    pub fn new(phi_left: f64, phi_right: f64) -> Self {
        FoldConfiguration { phi_left, phi_right }
    }

    pub fn flat() -> Self {
        FoldConfiguration::new(0.0, 0.0)
    }

    /// Positions of both angles in `set`, or a constraint violation.
    pub fn indices(&self, set: &AngleSet) -> Result<(usize, usize)> {
        let find = |phi: f64, side: &str| {
            set.index_of(phi).ok_or_else(|| {
                Error::ConstraintViolation(format!(
                    "{side} fold angle {phi} rad is not in the feasible angle set {:?}",
                    set.angles()
                ))
            })
        };
        Ok((find(self.phi_left, "left")?, find(self.phi_right, "right")?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    Left,
    Right,
    /// Centre column of an odd-width layer; it lies on the hinge and never moves.
    Hinge,
}

impl Half {
    pub fn as_str(&self) -> &'static str {
        match self {
            Half::Left => "left",
            Half::Right => "right",
            Half::Hinge => "hinge",
        }
    }
}

/// Element positions of every layer under one fold configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGeometry {
    pub rows: usize,
    pub cols: usize,
    /// `positions[l][n]` for layer `l` and row-major grid index `n`.
    pub positions: Vec<Vec<Position>>,
    /// Half membership per grid index, identical across layers.
    pub halves: Vec<Half>,
}

impl SurfaceGeometry {
    pub fn layers(&self) -> usize {
        self.positions.len()
    }

    pub fn layer(&self, l: usize) -> &[Position] {
        &self.positions[l]
    }

    /// CSV with columns `layer,row,col,half,x,y,z`; layers are 1-based.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "layer,row,col,half,x,y,z")?;
        for (l, layer) in self.positions.iter().enumerate() {
            for (n, p) in layer.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{:.8e},{:.8e},{:.8e}",
                    l + 1,
                    n / self.cols,
                    n % self.cols,
                    self.halves[n].as_str(),
                    p.x,
                    p.y,
                    p.z
                )?;
            }
        }
        Ok(())
    }
}

/// Rotates each half of each layer rigidly about the layer's hinge line.
///
/// Positive angles swing the outer edge towards the base station (+y). The fold
/// is always computed from the flat layout, never incrementally.
pub fn apply_fold(
    spec: &SurfaceSpec,
    fold: &FoldConfiguration,
    set: &AngleSet,
) -> Result<SurfaceGeometry> {
    spec.validate()?;
    fold.indices(set)?;
    let phi_max = spec.max_fold_angle();
    let slack = 1e-12 * phi_max.max(1.0);
    for (side, phi) in [("left", fold.phi_left), ("right", fold.phi_right)] {
        if phi.abs() > phi_max + slack {
            return Err(Error::ConstraintViolation(format!(
                "{side} fold angle {phi} rad exceeds the surface limit {phi_max} rad"
            )));
        }
    }

    let (sin_l, cos_l) = fold.phi_left.sin_cos();
    let (sin_r, cos_r) = fold.phi_right.sin_cos();
    let halves: Vec<Half> = (0..spec.elements_per_layer())
        .map(|n| spec.half_of_column(n % spec.cols))
        .collect();

    let positions = (0..spec.layers)
        .map(|l| {
            let depth = spec.layer_depth(l);
            (0..spec.elements_per_layer())
                .map(|n| {
                    let (row, col) = (n / spec.cols, n % spec.cols);
                    let x = spec.column_offset(col);
                    let z = spec.row_offset(row);
                    let r = x.abs();
                    let (dx, dy) = match halves[n] {
                        Half::Left => (-r * cos_l, r * sin_l),
                        Half::Right => (r * cos_r, r * sin_r),
                        Half::Hinge => (0.0, 0.0),
                    };
                    Position::new(
                        spec.origin.x + dx,
                        spec.origin.y + depth + dy,
                        spec.origin.z + z,
                    )
                })
                .collect()
        })
        .collect();

    Ok(SurfaceGeometry {
        rows: spec.rows,
        cols: spec.cols,
        positions,
        halves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Rotation3, Vector3};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn spec(rows: usize, cols: usize) -> SurfaceSpec {
        SurfaceSpec::new(3, rows, cols, 0.03, 0.02).unwrap()
    }

    #[test]
    fn max_fold_angle_values() {
        assert_relative_eq!(max_fold_angle(0.02, 0.04).unwrap(), FRAC_PI_4, epsilon = 1e-15);
        for x in [0.1, 0.5, 1.0, 1.4] {
            let w = 0.02 * 2.0 / f64::tan(x);
            assert_relative_eq!(max_fold_angle(0.02, w).unwrap(), x, max_relative = 1e-12);
        }
        // atan(0.041666...) from a high-precision evaluation
        assert_relative_eq!(
            max_fold_angle(0.02, 0.96).unwrap(),
            0.041_642_579_098_588_42,
            max_relative = 1e-12
        );
        assert!(max_fold_angle(0.0, 1.0).is_err());
        assert!(max_fold_angle(0.02, -1.0).is_err());
    }

    #[test]
    fn angle_sets() {
        let phi = 0.3;
        assert_eq!(build_angle_set(3, phi).unwrap().angles(), &[-phi, 0.0, phi]);
        assert_eq!(build_angle_set(2, phi).unwrap().angles(), &[-phi, phi]);
        assert_eq!(build_angle_set(1, phi).unwrap().angles(), &[0.0]);
        let five = build_angle_set(5, 0.8).unwrap();
        for (a, b) in five.angles().iter().zip([-0.8, -0.4, 0.0, 0.4, 0.8]) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(matches!(build_angle_set(0, phi), Err(Error::Domain(_))));
    }

    #[test]
    fn flat_width_is_cols_times_pitch() {
        let w = |cols, pitch| flat_width(&SurfaceSpec::new(1, 1, cols, pitch, 0.02).unwrap());
        assert_relative_eq!(w(16, 0.0025), 0.04, epsilon = 1e-15);
        assert_relative_eq!(w(2, 0.01), 0.02, epsilon = 1e-15);
        assert_relative_eq!(w(8, 0.005), 0.04, epsilon = 1e-15);
    }

    #[test]
    fn spec_rejects_bad_dims() {
        assert!(SurfaceSpec::new(0, 1, 2, 0.1, 0.1).is_err());
        assert!(SurfaceSpec::new(1, 1, 1, 0.1, 0.1).is_err());
        assert!(SurfaceSpec::new(1, 1, 2, 0.0, 0.1).is_err());
        assert!(SurfaceSpec::new(1, 1, 2, 0.1, -0.1).is_err());
    }

    #[test]
    fn flat_fold_is_flat_layout() {
        let s = spec(2, 4);
        let set = build_angle_set(3, s.max_fold_angle()).unwrap();
        let g = apply_fold(&s, &FoldConfiguration::flat(), &set).unwrap();
        for l in 0..3 {
            for p in g.layer(l) {
                assert_eq!(p.y, 0.02 * (l as f64 + 1.0));
            }
        }
        assert_eq!(g.layer(0)[0].x, -1.5 * 0.03);
        assert_eq!(g.halves[..4], [Half::Left, Half::Left, Half::Right, Half::Right]);
    }

    #[test]
    fn fold_is_not_incremental() {
        let s = spec(2, 4);
        let set = build_angle_set(3, s.max_fold_angle()).unwrap();
        let c = set.config(2, 2).unwrap();
        let a = apply_fold(&s, &c, &set).unwrap();
        let b = apply_fold(&s, &c, &set).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_column_displacement_matches_rotation_matrix() {
        let p = 0.01;
        let d = 0.02;
        let s = SurfaceSpec::new(1, 1, 2, p, d).unwrap();
        let phi_max = (2.0 * d / (2.0 * p)).atan();
        assert_relative_eq!(s.max_fold_angle(), phi_max, epsilon = 1e-15);
        let set = build_angle_set(3, phi_max).unwrap();
        let g = apply_fold(&s, &FoldConfiguration::new(phi_max, 0.0), &set).unwrap();

        let left = g.layer(0)[0];
        assert_relative_eq!(left.y - d, (p / 2.0) * phi_max.sin(), max_relative = 1e-12);

        // brute-force oracle: rotate the flat point about the hinge (z axis) by -phi
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), -phi_max);
        let flat = Vector3::new(-p / 2.0, 0.0, 0.0);
        let expect = rot * flat;
        assert_relative_eq!(left.x, expect.x, epsilon = 1e-15);
        assert_relative_eq!(left.y - d, expect.y, epsilon = 1e-15);
        // right half untouched
        assert_relative_eq!(g.layer(0)[1].x, p / 2.0, epsilon = 1e-15);
        assert_relative_eq!(g.layer(0)[1].y, d, epsilon = 1e-15);
    }

    #[test]
    fn odd_width_has_fixed_hinge_column() {
        let s = spec(3, 5);
        let set = build_angle_set(3, s.max_fold_angle()).unwrap();
        let flat = apply_fold(&s, &FoldConfiguration::flat(), &set).unwrap();
        let folded = apply_fold(&s, &set.config(0, 2).unwrap(), &set).unwrap();
        for n in 0..15 {
            if flat.halves[n] == Half::Hinge {
                assert_eq!(flat.layer(1)[n], folded.layer(1)[n]);
            }
        }
        assert_eq!(flat.halves.iter().filter(|h| **h == Half::Hinge).count(), 3);
    }

    #[test]
    fn off_grid_angle_is_rejected() {
        let s = spec(2, 4);
        let set = build_angle_set(3, s.max_fold_angle()).unwrap();
        let err = apply_fold(&s, &FoldConfiguration::new(0.01, 0.0), &set).unwrap_err();
        assert!(matches!(err, Error::ConstraintViolation(_)));
        // a set wider than the surface allows is caught too
        let wide = build_angle_set(3, FRAC_PI_2 - 0.01).unwrap();
        let err = apply_fold(&s, &wide.config(0, 1).unwrap(), &wide).unwrap_err();
        assert!(matches!(err, Error::ConstraintViolation(_)));
    }

    #[test]
    fn geometry_csv_layout() {
        let s = SurfaceSpec::new(1, 1, 2, 0.01, 0.02).unwrap();
        let set = build_angle_set(1, s.max_fold_angle()).unwrap();
        let g = apply_fold(&s, &FoldConfiguration::flat(), &set).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "layer,row,col,half,x,y,z");
        assert_eq!(lines[1], "1,0,0,left,-5.00000000e-3,2.00000000e-2,0.00000000e0");
        assert_eq!(lines.len(), 3);
    }

    fn dist(a: &Position, b: &Position) -> f64 {
        (a - b).norm()
    }

    proptest! {
        #[test]
        fn angle_set_is_symmetric(m in 1usize..12, phi in 0.01f64..1.5) {
            let set = build_angle_set(m, phi).unwrap();
            let mirrored: Vec<f64> = set.angles().iter().rev().map(|a| -a).collect();
            prop_assert_eq!(set.angles(), &mirrored[..]);
            prop_assert!(set.angles().windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn max_fold_angle_monotone(d in 0.001f64..1.0, w in 0.001f64..1.0, k in 1.01f64..3.0) {
            let base = max_fold_angle(d, w).unwrap();
            prop_assert!(max_fold_angle(d * k, w).unwrap() > base);
            prop_assert!(max_fold_angle(d, w * k).unwrap() < base);
        }

        #[test]
        fn fold_is_rigid_and_stays_between_layers(
            rows in 1usize..4, cols in 2usize..7, jl in 0usize..5, jr in 0usize..5,
        ) {
            let s = SurfaceSpec::new(3, rows, cols, 0.03, 0.02).unwrap();
            let set = build_angle_set(5, s.max_fold_angle()).unwrap();
            let flat = apply_fold(&s, &FoldConfiguration::flat(), &set).unwrap();
            let folded = apply_fold(&s, &set.config(jl, jr).unwrap(), &set).unwrap();
            let n = s.elements_per_layer();
            for l in 0..3 {
                for a in 0..n {
                    // stays strictly between neighbouring layer planes
                    let dy = folded.layer(l)[a].y - s.layer_depth(l);
                    prop_assert!(dy.abs() < s.layer_spacing);
                    for b in 0..n {
                        let same_half = flat.halves[a] == flat.halves[b]
                            || flat.halves[a] == Half::Hinge
                            || flat.halves[b] == Half::Hinge;
                        if same_half {
                            let d0 = dist(&flat.layer(l)[a], &flat.layer(l)[b]);
                            let d1 = dist(&folded.layer(l)[a], &folded.layer(l)[b]);
                            prop_assert!((d0 - d1).abs() <= 1e-12 * d0.max(1e-300));
                        }
                    }
                }
            }
        }
    }
}
