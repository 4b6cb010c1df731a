use crate::error::{Error, Result};
use crate::geometry::{Aabb, AnalyticScene, Vec3};
use crate::training::SdfPredictor;

/// The analytic scene distance, optionally shifted by a constant, posing as
/// a trained model.
#[derive(Clone, Copy, Debug)]
pub struct OraclePredictor<'a> {
    pub scene: &'a AnalyticScene<f64>,
    pub bias: f64,
}

impl<'a> OraclePredictor<'a> {
    pub fn new(scene: &'a AnalyticScene<f64>) -> Self {
        Self { scene, bias: 0.0 }
    }
}

impl SdfPredictor for OraclePredictor<'_> {
    fn root(&self) -> Aabb<f64> {
        *self.scene.root()
    }

    fn predict_batch(&self, xs: &[Vec3]) -> Result<Vec<f64>> {
        let root = self.scene.root();
        xs.iter()
            .map(|&x| if root.contains(x) { Ok(self.scene.sdf(x) + self.bias) } else { Err(Error::OutOfBounds(x)) })
            .collect()
    }
}
