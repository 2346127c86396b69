//! Random placement of access points and users on a wrap-around square.
//!
//! Distances use the flat-torus metric: on each axis the separation is the
//! shorter of the direct and the wrapped gap. This equals the minimum over
//! the nine mirror images of the square and removes boundary effects.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A point on the simulation square, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn inside(&self, extent: f64) -> bool {
        (0.0..extent).contains(&self.x) && (0.0..extent).contains(&self.y)
    }
}

/// One realization of the network geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDrop {
    pub extent: f64,
    pub ap_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
}

impl NetworkDrop {
    pub fn new(extent: f64, ap_positions: Vec<Point>, user_positions: Vec<Point>) -> Result<Self> {
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(invalid(format!("extent must be positive, got {extent}")));
        }
        if ap_positions.is_empty() || user_positions.is_empty() {
            return Err(invalid("a drop needs at least one AP and one user"));
        }
        if let Some(p) = ap_positions
            .iter()
            .chain(&user_positions)
            .find(|p| !p.inside(extent))
        {
            return Err(invalid(format!(
                "point ({}, {}) lies outside [0, {extent})^2",
                p.x, p.y
            )));
        }
        Ok(Self {
            extent,
            ap_positions,
            user_positions,
        })
    }

    /// Draws `num_aps` APs and `num_users` users uniformly on the square.
    pub fn random<R: Rng + ?Sized>(
        num_aps: usize,
        num_users: usize,
        extent: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let aps = place_uniform(num_aps, extent, rng)?;
        let users = place_uniform(num_users, extent, rng)?;
        Self::new(extent, aps, users)
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }

    /// Wrap-around distance between AP `m` and user `k`.
    pub fn ap_user_distance(&self, m: usize, k: usize) -> f64 {
        torus_distance(&self.ap_positions[m], &self.user_positions[k], self.extent)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: NetworkDrop = serde_json::from_str(s)?;
        Self::new(raw.extent, raw.ap_positions, raw.user_positions)
    }
}

/// `count` points with i.i.d. uniform coordinates on `[0, extent)`.
pub fn place_uniform<R: Rng + ?Sized>(count: usize, extent: f64, rng: &mut R) -> Result<Vec<Point>> {
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(invalid(format!("extent must be positive, got {extent}")));
    }
    Ok((0..count)
        .map(|_| Point::new(rng.random_range(0.0..extent), rng.random_range(0.0..extent)))
        .collect())
}

/// Toroidal distance between two points of the square `[0, extent)^2`.
pub fn wrap_distance(p: &Point, q: &Point, extent: f64) -> Result<f64> {
    if !(extent > 0.0) {
        return Err(invalid(format!("extent must be positive, got {extent}")));
    }
    if !p.inside(extent) || !q.inside(extent) {
        return Err(invalid("point outside the square"));
    }
    Ok(torus_distance(p, q, extent))
}

// Unchecked variant for points already validated by `NetworkDrop`.
pub(crate) fn torus_distance(p: &Point, q: &Point, extent: f64) -> f64 {
    let wrap = |a: f64, b: f64| {
        let d = (a - b).abs();
        d.min(extent - d)
    };
    wrap(p.x, q.x).hypot(wrap(p.y, q.y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn placement_range_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = place_uniform(3, 1000.0, &mut rng).unwrap();
        assert_eq!(pts.len(), 3);
        assert!(pts.iter().all(|p| p.inside(1000.0)));

        let a = place_uniform(50, 1000.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = place_uniform(50, 1000.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn placement_mean_matches_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = place_uniform(10_000, 1000.0, &mut rng).unwrap();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / n;
        for mean in [mx, my] {
            assert!((mean - 500.0).abs() <= 20.0, "mean {mean}");
        }
    }

    #[test]
    fn placement_rejects_bad_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(place_uniform(0, 10.0, &mut rng).is_err());
        assert!(place_uniform(3, 0.0, &mut rng).is_err());
        assert!(place_uniform(3, -1.0, &mut rng).is_err());
    }

    #[test]
    fn wrap_distance_examples() {
        let o = Point::new(0.0, 0.0);
        let d = wrap_distance(&o, &Point::new(950.0, 0.0), 1000.0).unwrap();
        assert!((d - 50.0).abs() < 1e-12);
        let d = wrap_distance(&o, &Point::new(500.0, 500.0), 1000.0).unwrap();
        assert!((d - 707.1068).abs() < 1e-4);
        assert!(wrap_distance(&o, &Point::new(1000.0, 0.0), 1000.0).is_err());
        assert!(wrap_distance(&Point::new(-1.0, 0.0), &o, 1000.0).is_err());
    }

    #[test]
    fn drop_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let drop = NetworkDrop::random(4, 3, 250.0, &mut rng).unwrap();
        let back = NetworkDrop::from_json(&drop.to_json().unwrap()).unwrap();
        assert_eq!(drop, back);
        assert!(NetworkDrop::from_json(r#"{"extent":10,"ap_positions":[{"x":11,"y":0}],"user_positions":[{"x":1,"y":1}]}"#).is_err());
    }

    fn point(extent: f64) -> impl Strategy<Value = Point> {
        (0.0..extent, 0.0..extent).prop_map(|(x, y)| Point::new(x, y))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn torus_metric_properties(p in point(1000.0), q in point(1000.0), r in point(1000.0)) {
            let d = |a: &Point, b: &Point| wrap_distance(a, b, 1000.0).unwrap();
            prop_assert_eq!(d(&p, &p), 0.0);
            prop_assert!((d(&p, &q) - d(&q, &p)).abs() < 1e-12);
            prop_assert!(d(&p, &q) <= (p.x - q.x).hypot(p.y - q.y) + 1e-12);
            prop_assert!(d(&p, &q) <= 1000.0 / 2f64.sqrt() + 1e-9);
            prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-9);
        }
    }
}
