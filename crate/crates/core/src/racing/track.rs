//! Piecewise line/arc centerlines with Frenet coordinates.

use num_dual::DualNum;
use serde::{Deserialize, Serialize};

use crate::error::{GnepError, Result};

/// Width (m) of the smoothstep ramp that replaces each curvature jump in the dynamics.
pub const CURVATURE_BLEND: f64 = 0.4;

/// Real scalars and forward-mode dual numbers, so geometry and dynamics can be
/// differentiated exactly.
pub trait Scalar: DualNum<Primitive = f64> + Copy {}

impl<T: DualNum<Primitive = f64> + Copy> Scalar for T {}

/// Segment description as it appears in a track config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentSpec {
    Line { length: f64 },
    /// Positive `angle_deg` turns left (counterclockwise).
    Arc { radius: f64, angle_deg: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, measured from the +x axis.
    pub heading: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        }
    }
}

/// Serializable track definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub half_width: f64,
    #[serde(default)]
    pub start: Pose,
    #[serde(default)]
    pub closed: bool,
    pub segments: Vec<SegmentSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Line,
    Arc,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub s_start: f64,
    pub length: f64,
    /// 0 for lines, `+-1/R` for arcs (positive turns left).
    pub curvature: f64,
    pub start: Pose,
}

impl Segment {
    /// Centerline point and heading at local arc length `ds` (may extrapolate).
    fn point<D: Scalar>(&self, ds: D) -> (D, D, D) {
        let p = self.start;
        let k = self.curvature;
        if k == 0.0 {
            let (sh, ch) = p.heading.sin_cos();
            (ds * ch + p.x, ds * sh + p.y, D::from(p.heading))
        } else {
            let heading = ds * k + p.heading;
            let x = (heading.sin() - p.heading.sin()) / k + p.x;
            let y = -(heading.cos() - p.heading.cos()) / k + p.y;
            (x, y, heading)
        }
    }

    fn end(&self) -> Pose {
        let (x, y, heading) = self.point(self.length);
        Pose { x, y, heading }
    }
}

/// A centerline made of G1-continuous lines and arcs plus a drivable half width.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    segments: Vec<Segment>,
    half_width: f64,
    length: f64,
    closed: bool,
}

impl Track {
    pub fn from_spec(spec: &TrackSpec) -> Result<Self> {
        if spec.segments.is_empty() {
            return Err(GnepError::Track("track has no segments".into()));
        }
        if !(spec.half_width > 0.0) {
            return Err(GnepError::Track("half width must be positive".into()));
        }
        let mut segments = Vec::with_capacity(spec.segments.len());
        let mut pose = spec.start;
        let mut s = 0.0;
        for (i, seg) in spec.segments.iter().enumerate() {
            let (kind, length, curvature) = match *seg {
                SegmentSpec::Line { length } => (SegmentKind::Line, length, 0.0),
                SegmentSpec::Arc { radius, angle_deg } => {
                    if !(radius > 0.0) || angle_deg == 0.0 {
                        return Err(GnepError::Track(format!("segment {i}: degenerate arc")));
                    }
                    let angle = angle_deg.to_radians();
                    (SegmentKind::Arc, radius * angle.abs(), angle.signum() / radius)
                }
            };
            if !(length > 0.0) {
                return Err(GnepError::Track(format!("segment {i}: length must be positive")));
            }
            let segment = Segment {
                kind,
                s_start: s,
                length,
                curvature,
                start: pose,
            };
            pose = segment.end();
            s += length;
            segments.push(segment);
        }
        if spec.closed {
            let gap = (pose.x - spec.start.x).hypot(pose.y - spec.start.y);
            let turn = (pose.heading - spec.start.heading).rem_euclid(std::f64::consts::TAU);
            let turn = turn.min(std::f64::consts::TAU - turn);
            if gap > 1e-6 || turn > 1e-6 {
                return Err(GnepError::Track(format!(
                    "closed track does not close (gap {gap:.3e} m, heading error {turn:.3e} rad)"
                )));
            }
        }
        Ok(Self {
            segments,
            half_width: spec.half_width,
            length: s,
            closed: spec.closed,
        })
    }

    /// Straight track of `length` along +x from the origin.
    pub fn straight(length: f64, half_width: f64) -> Result<Self> {
        Self::from_spec(&TrackSpec {
            half_width,
            start: Pose::default(),
            closed: false,
            segments: vec![SegmentSpec::Line { length }],
        })
    }

    /// Full counterclockwise circle of `radius`, starting at the origin heading +x.
    pub fn circle(radius: f64, half_width: f64) -> Result<Self> {
        Self::from_spec(&TrackSpec {
            half_width,
            start: Pose::default(),
            closed: true,
            segments: vec![SegmentSpec::Arc {
                radius,
                angle_deg: 360.0,
            }],
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Segment containing `s` and the local offset into it.
    ///
    /// Closed tracks wrap `s`; open tracks extend the first and last segments.
    fn locate(&self, s: f64) -> (&Segment, f64) {
        let s = if self.closed {
            s.rem_euclid(self.length)
        } else {
            s
        };
        let idx = self
            .segments
            .partition_point(|seg| seg.s_start <= s)
            .saturating_sub(1);
        let seg = &self.segments[idx];
        (seg, seg.s_start)
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        self.locate(s).0.curvature
    }

    /// Curvature with every jump replaced by a C1 smoothstep ramp of width
    /// [`CURVATURE_BLEND`] centred on the joint.
    ///
    /// The ramp is symmetric, so its integral over a joint equals the exact one.
    pub fn curvature_blended<D: Scalar>(&self, s: D) -> D {
        let first = self.segments[0].curvature;
        let last = self.segments[self.segments.len() - 1].curvature;
        let (s, base) = if self.closed {
            let laps = (s.re() / self.length).floor() * self.length;
            (s - laps, last)
        } else {
            (s, first)
        };
        let mut kappa = D::from(base);
        let mut add = |at: f64, jump: f64| {
            if jump != 0.0 {
                kappa += smoothstep(s - at) * jump;
            }
        };
        if self.closed {
            add(0.0, first - last);
            add(self.length, first - last);
        }
        for pair in self.segments.windows(2) {
            add(pair[1].s_start, pair[1].curvature - pair[0].curvature);
        }
        kappa
    }

    /// Centerline heading at `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        self.frenet_generic(s, 0.0).2
    }

    /// Inertial position of the Frenet point `(s, t)`; `t > 0` is left of travel.
    pub fn frenet_to_inertial(&self, s: f64, t: f64) -> (f64, f64) {
        let (x, y, _) = self.frenet_generic(s, t);
        (x, y)
    }

    /// Differentiable version of [`Self::frenet_to_inertial`]; the segment is
    /// chosen from the real part of `s`. Also returns the centerline heading.
    pub fn frenet_generic<D: Scalar>(&self, s: D, t: D) -> (D, D, D) {
        let s_re = s.re();
        let (seg, s0) = self.locate(s_re);
        // Shift by whole laps on closed tracks so the local offset stays small.
        let laps = if self.closed {
            ((s_re - s0) / self.length).floor() * self.length
        } else {
            0.0
        };
        let ds = s - (s0 + laps);
        let (cx, cy, heading) = seg.point(ds);
        let (sh, ch) = heading.sin_cos();
        (cx - t * sh, cy + t * ch, heading)
    }
}

/// 0 before `-w/2`, 1 after `w/2`, cubic in between.
fn smoothstep<D: Scalar>(x: D) -> D {
    let u = x / CURVATURE_BLEND + 0.5;
    if u.re() <= 0.0 {
        D::zero()
    } else if u.re() >= 1.0 {
        D::one()
    } else {
        u * u * (u * (-2.0) + 3.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn l_track() -> Track {
        Track::from_spec(&TrackSpec {
            half_width: 0.5,
            start: Pose::default(),
            closed: false,
            segments: vec![
                SegmentSpec::Line { length: 6.0 },
                SegmentSpec::Arc {
                    radius: 1.0,
                    angle_deg: 90.0,
                },
                SegmentSpec::Line { length: 4.0 },
            ],
        })
        .unwrap()
    }

    #[test]
    fn straight_track_geometry() {
        let t = Track::straight(10.0, 0.5).unwrap();
        assert_eq!(t.curvature_at(3.3), 0.0);
        assert_eq!(t.frenet_to_inertial(2.0, 0.5), (2.0, 0.5));
    }

    #[test]
    fn circle_quarter_point() {
        let t = Track::circle(2.0, 0.5).unwrap();
        assert_eq!(t.curvature_at(1.0), 0.5);
        let (x, y) = t.frenet_to_inertial(PI, 0.0);
        assert!((x - 2.0).abs() < 1e-12 && (y - 2.0).abs() < 1e-12);
        // Inside of a left turn is +t: towards the center (0, 2).
        let (x, y) = t.frenet_to_inertial(0.0, 0.5);
        assert!(x.abs() < 1e-12 && (y - 0.5).abs() < 1e-12);
    }

    #[test]
    fn closed_track_wraps() {
        let t = Track::circle(2.0, 0.5).unwrap();
        let a = t.frenet_to_inertial(1.0, 0.1);
        let b = t.frenet_to_inertial(1.0 + t.length(), 0.1);
        assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
    }

    #[test]
    fn l_track_corner() {
        let t = l_track();
        assert!((t.length() - (10.0 + PI / 2.0)).abs() < 1e-12);
        assert_eq!(t.curvature_at(6.5), 1.0);
        assert_eq!(t.curvature_at(3.0), 0.0);
        assert_eq!(t.curvature_at(9.0), 0.0);
        // End of the corner: (7, 1) heading +y.
        let (x, y) = t.frenet_to_inertial(6.0 + PI / 2.0, 0.0);
        assert!((x - 7.0).abs() < 1e-12 && (y - 1.0).abs() < 1e-12);
        assert!((t.heading_at(8.0) - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn open_track_extrapolates() {
        let t = l_track();
        assert_eq!(t.frenet_to_inertial(-1.0, 0.0), (-1.0, 0.0));
        let (x, y) = t.frenet_to_inertial(t.length() + 1.0, 0.0);
        assert!((x - 7.0).abs() < 1e-12 && (y - 6.0).abs() < 1e-12);
        assert_eq!(t.curvature_at(-5.0), 0.0);
    }

    #[test]
    fn centerline_points_are_continuous_at_joints() {
        let t = l_track();
        for seg in t.segments().iter().skip(1) {
            let a = t.frenet_to_inertial(seg.s_start - 1e-9, 0.2);
            let b = t.frenet_to_inertial(seg.s_start, 0.2);
            assert!((a.0 - b.0).hypot(a.1 - b.1) < 1e-8);
        }
    }

    #[test]
    fn blended_curvature_matches_away_from_joints() {
        let t = l_track();
        for s in [1.0, 5.7, 6.3, 7.2, 9.0, 20.0] {
            assert_eq!(t.curvature_blended(s), t.curvature_at(s));
        }
        assert!((t.curvature_blended(6.0f64) - 0.5).abs() < 1e-12);
        let c = Track::circle(2.0, 0.5).unwrap();
        for s in [0.0, 3.0, c.length() - 1e-9, 40.0] {
            assert!((c.curvature_blended::<f64>(s) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn blended_curvature_preserves_turning_angle() {
        let t = l_track();
        let n = 20_000;
        let (a, b) = (4.0, 9.0);
        let h = (b - a) / n as f64;
        let total: f64 = (0..n).map(|i| t.curvature_blended(a + (i as f64 + 0.5) * h) * h).sum();
        assert!((total - PI / 2.0).abs() < 1e-6);
    }

    #[test]
    fn closed_track_blends_across_the_seam() {
        let spec = TrackSpec {
            half_width: 0.5,
            start: Pose::default(),
            closed: true,
            segments: vec![
                SegmentSpec::Line { length: 2.0 },
                SegmentSpec::Arc { radius: 1.0, angle_deg: 180.0 },
                SegmentSpec::Line { length: 2.0 },
                SegmentSpec::Arc { radius: 1.0, angle_deg: 180.0 },
            ],
        };
        let t = Track::from_spec(&spec).unwrap();
        assert!((t.curvature_blended(0.0f64) - 0.5).abs() < 1e-12);
        assert!((t.curvature_blended(t.length()) - 0.5).abs() < 1e-12);
        assert!((t.curvature_blended(-0.05) - t.curvature_blended(t.length() - 0.05)).abs() < 1e-12);
        assert_eq!(t.curvature_blended(1.0), 0.0);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = TrackSpec {
            half_width: 0.5,
            start: Pose::default(),
            closed: false,
            segments: vec![],
        };
        assert!(Track::from_spec(&bad).is_err());
        let open_loop = TrackSpec {
            closed: true,
            segments: vec![SegmentSpec::Line { length: 1.0 }],
            ..bad
        };
        assert!(Track::from_spec(&open_loop).is_err());
    }

    #[test]
    fn spec_json_roundtrip() {
        let json = r#"{"half_width":0.5,"segments":[{"kind":"line","length":6.0},{"kind":"arc","radius":1.0,"angle_deg":90.0}]}"#;
        let spec: TrackSpec = serde_json::from_str(json).unwrap();
        assert!(!spec.closed);
        let t = Track::from_spec(&spec).unwrap();
        assert_eq!(t.segments().len(), 2);
    }
}
