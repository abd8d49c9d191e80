/// Mean Earth radius used for great-circle distances.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters between two points given in decimal
/// degrees (haversine form).
pub fn haversine_distance(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    let a = a.clamp(0.0, 1.0);
    let c = 2.0 * a.sqrt().atan2((1.0 - a).sqrt());
    EARTH_RADIUS_M * c
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_points_are_zero() {
        assert_eq!(haversine_distance(47.6, -122.3, 47.6, -122.3), 0.0);
    }

    #[test]
    fn small_latitude_arc() {
        // arc length r·Δφ for Δφ = 0.001°
        let oracle = EARTH_RADIUS_M * 0.001_f64.to_radians();
        let d = haversine_distance(0.0, 0.0, 0.001, 0.0);
        assert!((d - oracle).abs() < 1e-6);
        assert!((d - 111.19).abs() < 0.01);
    }

    #[test]
    fn antipodes() {
        let d = haversine_distance(0.0, 0.0, 0.0, 180.0);
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_M).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn symmetric_and_non_negative(
            lat1 in -90.0..90.0f64, lon1 in -180.0..180.0f64,
            lat2 in -90.0..90.0f64, lon2 in -180.0..180.0f64,
        ) {
            let d1 = haversine_distance(lat1, lon1, lat2, lon2);
            let d2 = haversine_distance(lat2, lon2, lat1, lon1);
            prop_assert!(d1 >= 0.0);
            prop_assert!((d1 - d2).abs() <= 1e-9 * (1.0 + d1));
            prop_assert_eq!(haversine_distance(lat1, lon1, lat1, lon1), 0.0);
        }
    }
}
