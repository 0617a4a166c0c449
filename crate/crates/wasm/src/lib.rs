//! Browser bindings: metric-distance heatmaps, mesh construction, and
//! fast-decreasing polynomial heatmaps for planar convex bodies.
//!
//! Every method works in the body's own coordinates. Grids are row-major,
//! `res × res`, spanning [`Scene::bounds`], with `NaN` outside the body.

use wasm_bindgen::prelude::*;

use polymesh::dubiner::{DirectionSet, MetricContext};
use polymesh::geometry::{john_normalize, ConvexBody};
use polymesh::mesh::{build_mesh, MeshSpec};
use polymesh::poly::{fast_decreasing_poly, FastDecreasingOptions};

/// Fewer directions than the library default keep heatmaps interactive.
const DEMO_DIRECTIONS: usize = 720;
const DEMO_ROUNDS: usize = 4;

#[wasm_bindgen]
pub struct Scene {
    ctx: MetricContext,
    bounds: [f64; 4],
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

impl Scene {
    pub fn from_json(body_json: &str) -> Result<Scene, String> {
        let body: ConvexBody = serde_json::from_str(body_json).map_err(err)?;
        if body.dim() != 2 {
            return Err("the demo draws planar bodies only".into());
        }
        let mut bounds = [0.0; 4];
        for (axis, slot) in [(0, 0), (1, 2)] {
            let mut e = vec![0.0; 2];
            e[axis] = -1.0;
            bounds[slot] = -body.support_value(&e).map_err(err)?;
            e[axis] = 1.0;
            bounds[slot + 1] = body.support_value(&e).map_err(err)?;
        }
        let nb = john_normalize(&body, 256, 0.02).map_err(err)?;
        let dirs = DirectionSet::with_count(2, DEMO_DIRECTIONS, DEMO_ROUNDS).map_err(err)?;
        let ctx = MetricContext::new(nb, dirs).map_err(err)?;
        Ok(Scene { ctx, bounds })
    }

    fn grid(&self, res: usize, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let [x0, x1, y0, y1] = self.bounds;
        let nb = self.ctx.body();
        let mut out = Vec::with_capacity(res * res);
        for r in 0..res {
            let y = y1 - (y1 - y0) * (r as f64 + 0.5) / res as f64;
            for c in 0..res {
                let x = x0 + (x1 - x0) * (c as f64 + 0.5) / res as f64;
                let z = nb.to_normalized.apply(&[x, y]);
                out.push(if nb.body.contains(&z, 0.0) { f(&z) } else { f64::NAN });
            }
        }
        out
    }

    fn normalized_point(&self, x: f64, y: f64) -> Result<Vec<f64>, String> {
        let z = self.ctx.body().to_normalized.apply(&[x, y]);
        if !self.ctx.body().body.contains(&z, 1e-9) {
            return Err("the point lies outside the body".into());
        }
        Ok(z)
    }

    pub fn metric_grid_native(&self, x: f64, y: f64, res: usize) -> Result<Vec<f64>, String> {
        let p = self.normalized_point(x, y)?;
        let rounds = self.ctx.default_rounds();
        Ok(self.grid(res, |z| self.ctx.refined_witness(&p, z, rounds).value))
    }

    pub fn mesh_native(&self, n: usize, c: f64) -> Result<Vec<f64>, String> {
        let mut spec = MeshSpec::new(2, n);
        spec.c_mesh = c;
        spec.pool_size = polymesh::mesh::default_pool_size(2, n, c) * 3;
        let mesh = build_mesh(&self.ctx, &spec).map_err(err)?;
        Ok(mesh.points.into_iter().flatten().collect())
    }

    pub fn fast_decreasing_grid_native(&self, x: f64, y: f64, n: usize, l: f64, res: usize) -> Result<Vec<f64>, String> {
        let p = self.normalized_point(x, y)?;
        let opts = FastDecreasingOptions { l, pool_size: 3000, enforce_budget: false, ..Default::default() };
        let fd = fast_decreasing_poly(&self.ctx, &p, n, &opts).map_err(err)?;
        Ok(self.grid(res, |z| fd.poly.eval(z).unwrap_or(f64::NAN)))
    }
}

#[wasm_bindgen]
impl Scene {
    /// Parse and normalize a body file.
    #[wasm_bindgen(constructor)]
    pub fn new(body_json: &str) -> Result<Scene, JsError> {
        Scene::from_json(body_json).map_err(|e| JsError::new(&e))
    }

    /// `[xmin, xmax, ymin, ymax]` of the body.
    pub fn bounds(&self) -> Vec<f64> {
        self.bounds.to_vec()
    }

    /// Boundary points `x0, y0, x1, y1, …` for drawing the outline.
    pub fn outline(&self, samples: usize) -> Vec<f64> {
        let nb = self.ctx.body();
        let mut out = Vec::with_capacity(2 * samples);
        for k in 0..samples {
            let t = std::f64::consts::TAU * k as f64 / samples as f64;
            if let Ok(p) = nb.body.support_point(&[t.cos(), t.sin()]) {
                out.extend(nb.from_normalized.apply(&p));
            }
        }
        out
    }

    /// Refined metric distance from `(x, y)` on a `res × res` grid.
    pub fn metric_grid(&self, x: f64, y: f64, res: usize) -> Result<Vec<f64>, JsError> {
        self.metric_grid_native(x, y, res).map_err(|e| JsError::new(&e))
    }

    /// Mesh points for degree `n` and constant `c`, flattened.
    pub fn mesh(&self, n: usize, c: f64) -> Result<Vec<f64>, JsError> {
        self.mesh_native(n, c).map_err(|e| JsError::new(&e))
    }

    /// Values of a fast-decreasing polynomial peaked at `(x, y)`.
    pub fn fast_decreasing_grid(&self, x: f64, y: f64, n: usize, l: f64, res: usize) -> Result<Vec<f64>, JsError> {
        self.fast_decreasing_grid_native(x, y, n, l, res).map_err(|e| JsError::new(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: &str = r#"{"dim": 2, "shape": {"type": "vpolytope", "vertices": [[-1,-1],[1,-1],[1,1],[-1,1]]}}"#;

    #[test]
    fn scene_operations() {
        let scene = Scene::from_json(SQUARE).unwrap();
        let b = scene.bounds();
        assert!((b[0] + 1.0).abs() < 1e-9 && (b[3] - 1.0).abs() < 1e-9);
        assert_eq!(scene.outline(16).len(), 32);
        let g = scene.metric_grid_native(0.0, 0.0, 8).unwrap();
        assert_eq!(g.len(), 64);
        assert!(g.iter().all(|v| v.is_finite() && *v >= 0.0));
        let pts = scene.mesh_native(3, 0.5).unwrap();
        assert!(pts.len() >= 2 && pts.len() % 2 == 0);
        let f = scene.fast_decreasing_grid_native(0.2, 0.1, 64, 4.0, 6).unwrap();
        assert!(f.iter().all(|v| (-1e-9..=1.0 + 1e-9).contains(v)));
        assert!(scene.metric_grid_native(3.0, 0.0, 4).is_err());
        assert!(Scene::from_json(r#"{"dim": 3, "shape": {"type": "ball", "center": [0,0,0], "radius": 1}}"#).is_err());
    }
}
