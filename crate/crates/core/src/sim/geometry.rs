//! Oriented-rectangle overlap by the separating axis test.

use super::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub cx: f64,
    pub cy: f64,
    pub half_length: f64,
    pub half_width: f64,
    pub heading: f64,
}

impl Rect {
    pub fn of(v: &VehicleState) -> Self {
        Rect { cx: v.x, cy: v.y, half_length: v.length / 2.0, half_width: v.width / 2.0, heading: v.heading }
    }

    fn axes(&self) -> [(f64, f64); 2] {
        let (s, c) = libm::sincos(self.heading);
        [(c, s), (-s, c)]
    }

    /// Half extent of the rectangle projected on unit axis `(ax, ay)`.
    fn radius_on(&self, ax: f64, ay: f64) -> f64 {
        let [(ux, uy), (wx, wy)] = self.axes();
        self.half_length * libm::fabs(ux * ax + uy * ay) + self.half_width * libm::fabs(wx * ax + wy * ay)
    }
}

/// True when the rectangles overlap or touch.
pub fn rectangles_overlap(a: &Rect, b: &Rect) -> bool {
    let dx = b.cx - a.cx;
    let dy = b.cy - a.cy;
    // cheap reject on bounding circles
    let ra = libm::hypot(a.half_length, a.half_width);
    let rb = libm::hypot(b.half_length, b.half_width);
    if dx * dx + dy * dy > (ra + rb) * (ra + rb) {
        return false;
    }
    for (ax, ay) in a.axes().into_iter().chain(b.axes()) {
        let dist = libm::fabs(dx * ax + dy * ay);
        if dist > a.radius_on(ax, ay) + b.radius_on(ax, ay) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(cx: f64, cy: f64, heading: f64) -> Rect {
        Rect { cx, cy, half_length: 2.5, half_width: 1.0, heading }
    }

    #[test]
    fn axis_aligned_cases() {
        assert!(rectangles_overlap(&rect(0.0, 0.0, 0.0), &rect(4.0, 0.0, 0.0)));
        assert!(rectangles_overlap(&rect(0.0, 0.0, 0.0), &rect(5.0, 0.0, 0.0)));
        assert!(!rectangles_overlap(&rect(0.0, 0.0, 0.0), &rect(5.01, 0.0, 0.0)));
        assert!(!rectangles_overlap(&rect(0.0, 0.0, 0.0), &rect(0.0, 2.01, 0.0)));
        assert!(rectangles_overlap(&rect(0.0, 0.0, 0.0), &rect(0.0, 1.99, 0.0)));
    }

    #[test]
    fn rotated_rectangle_reaches_further_diagonally() {
        // a quarter-turned car spans 2.5 m laterally
        assert!(rectangles_overlap(&rect(0.0, 0.0, 0.0), &rect(0.0, 3.4, core::f64::consts::FRAC_PI_2)));
        assert!(!rectangles_overlap(&rect(0.0, 0.0, 0.0), &rect(0.0, 3.6, core::f64::consts::FRAC_PI_2)));
    }
}
