use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{bail_arg, Result};
use crate::numeric::Tensor;

/// Pinhole camera with a world-to-camera pose and a depth range.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub intrinsics: Matrix3<f64>,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub depth_min: f64,
    pub depth_max: f64,
}

impl Camera {
    pub fn new(
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        depth_min: f64,
        depth_max: f64,
    ) -> Result<Self> {
        let k = &intrinsics;
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || !(k[(0, 0)] > 0.0) || !(k[(1, 1)] > 0.0) {
            bail_arg!("intrinsics must be upper triangular with positive focal lengths: {k}");
        }
        if (k[(2, 2)] - 1.0).abs() > 1e-12 {
            bail_arg!("intrinsics must have a unit last row");
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if ortho > 1e-6 || (rotation.determinant() - 1.0).abs() > 1e-6 {
            bail_arg!("rotation is not a proper orthonormal matrix: {rotation}");
        }
        if !(depth_min > 0.0 && depth_min < depth_max) {
            bail_arg!("depth range [{depth_min}, {depth_max}] must satisfy 0 < min < max");
        }
        Ok(Self { intrinsics, rotation, translation, depth_min, depth_max })
    }

    /// World-to-camera 4×4 matrix.
    pub fn extrinsic(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Camera for a feature map `factor` times the image resolution.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut c = self.clone();
        for col in 0..3 {
            c.intrinsics[(0, col)] *= factor;
            c.intrinsics[(1, col)] *= factor;
        }
        c
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

/// One calibrated view with its image and optional ground-truth depth.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraView {
    pub camera: Camera,
    /// `[3,H,W]`
    pub image: Tensor,
    /// `[H,W]`, non-positive where unknown.
    pub gt_depth: Option<Tensor>,
}

impl CameraView {
    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }
}
