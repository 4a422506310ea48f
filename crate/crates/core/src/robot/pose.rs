use std::f64::consts::TAU;

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::physics::SensorLayout;

/// Prexel frames of a strip wrapped once around a cylindrical flange.
///
/// Column `n` sits at angle `θ₀ + n·pitch/r`; rows are stacked along the
/// flange axis with row 0 on top. Each prexel frame has x along the wrap,
/// y along the axis and z along the outward surface normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrexelPoseMap {
    pub rows: usize,
    pub cols: usize,
    /// mm
    pub radius: f64,
    /// rad
    pub theta0: f64,
    /// Centre-to-centre row spacing along the axis, mm.
    pub row_spacing: f64,
    transforms: Vec<Matrix4<f64>>,
}

impl PrexelPoseMap {
    /// Radius chosen so the columns close the circle: `cols·pitch / 2π`.
    pub fn cylindrical(layout: &SensorLayout, theta0: f64) -> Self {
        let radius = layout.cols as f64 * layout.pitch_mm / TAU;
        Self::with_radius(layout, radius, theta0)
    }

    pub fn with_radius(layout: &SensorLayout, radius: f64, theta0: f64) -> Self {
        let row_spacing = layout.footprint_mm.0 / layout.rows as f64;
        let mut map = Self {
            rows: layout.rows,
            cols: layout.cols,
            radius,
            theta0,
            row_spacing,
            transforms: Vec::new(),
        };
        let step = layout.pitch_mm / radius;
        let half = 0.5 * (layout.rows as f64 - 1.0) * row_spacing;
        for r in 0..layout.rows {
            for c in 0..layout.cols {
                let th = theta0 + c as f64 * step;
                let (s, co) = th.sin_cos();
                let rot = Matrix3::from_columns(&[
                    Vector3::new(-s, co, 0.0),
                    Vector3::z(),
                    Vector3::new(co, s, 0.0),
                ]);
                let pos = Vector3::new(radius * co, radius * s, half - r as f64 * row_spacing);
                let mut m = Matrix4::identity();
                m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
                m.fixed_view_mut::<3, 1>(0, 3).copy_from(&pos);
                map.transforms.push(m);
            }
        }
        map
    }

    pub fn transform(&self, row: usize, col: usize) -> &Matrix4<f64> {
        &self.transforms[row * self.cols + col]
    }

    pub fn column_angle(&self, col: usize) -> f64 {
        let m = self.transform(0, col);
        m[(1, 3)].atan2(m[(0, 3)])
    }

    /// Unit vector in the end-effector x-y plane pointing into the flange at column `col`.
    pub fn inward_normal(&self, col: usize) -> Vector2<f64> {
        let m = self.transform(0, col);
        -Vector2::new(m[(0, 2)], m[(1, 2)])
    }

    /// Same map turned about the flange axis by `angle`.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let mut rz = Matrix4::identity();
        rz[(0, 0)] = c;
        rz[(0, 1)] = -s;
        rz[(1, 0)] = s;
        rz[(1, 1)] = c;
        Self {
            theta0: self.theta0 + angle,
            transforms: self.transforms.iter().map(|m| rz * m).collect(),
            ..self.clone()
        }
    }

    pub fn matches(&self, layout: &SensorLayout) -> bool {
        self.rows == layout.rows && self.cols == layout.cols
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotations_are_orthonormal() {
        let map = PrexelPoseMap::cylindrical(&SensorLayout::strip_16(), 0.3);
        for r in 0..map.rows {
            for c in 0..map.cols {
                let rot = map.transform(r, c).fixed_view::<3, 3>(0, 0).into_owned();
                assert!((rot.transpose() * rot - Matrix3::identity()).abs().max() < 1e-9);
                assert!((rot.determinant() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn neighbouring_columns_are_one_pitch_apart_along_the_wrap() {
        let layout = SensorLayout::strip_16();
        let map = PrexelPoseMap::cylindrical(&layout, 0.0);
        for c in 0..layout.cols - 1 {
            let d = (map.column_angle(c + 1) - map.column_angle(c)).rem_euclid(TAU);
            assert!((d * map.radius - layout.pitch_mm).abs() < 1e-9);
        }
        let last_gap = (map.column_angle(0) - map.column_angle(layout.cols - 1)).rem_euclid(TAU);
        assert!((last_gap * map.radius - layout.pitch_mm).abs() < 1e-9);
    }

    #[test]
    fn row_zero_is_on_top() {
        let map = PrexelPoseMap::cylindrical(&SensorLayout::strip_16(), 0.0);
        assert!((map.transform(0, 0)[(2, 3)] - 3.75).abs() < 1e-12);
        assert!((map.transform(1, 0)[(2, 3)] + 3.75).abs() < 1e-12);
    }

    #[test]
    fn inward_normal_at_zero_is_minus_x() {
        let map = PrexelPoseMap::cylindrical(&SensorLayout::strip_16(), 0.0);
        let n = map.inward_normal(0);
        assert!((n - Vector2::new(-1.0, 0.0)).norm() < 1e-12);
    }
}
