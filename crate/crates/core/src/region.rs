//! Observation regions: unions of meridian intervals or of boxes and balls
//! in the plane. Regions are treated as closed sets.

use crate::error::{Error, Result};
use crate::geometry::{SurfaceSpec, Topology};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum Region<T> {
    /// The whole domain.
    Whole,
    /// Union of closed intervals `[a, b]` of the meridian coordinate. On
    /// periodic domains an interval with `a > b` wraps through the origin.
    Intervals(Vec<(T, T)>),
    /// Union of axis-aligned boxes `[x1_lo, x1_hi] × [x2_lo, x2_hi]`.
    Boxes(Vec<[T; 4]>),
    /// Union of closed Euclidean balls (center, radius).
    Balls(Vec<([T; 2], T)>),
}

impl<T: Scalar> Region<T> {
    pub fn empty() -> Self {
        Region::Intervals(Vec::new())
    }

    /// Checks that the region is expressed in the coordinates of `spec`.
    pub fn validate(&self, spec: &SurfaceSpec<T>) -> Result<()> {
        let box2d = spec.topology() == Topology::Box2d;
        match self {
            Region::Whole => Ok(()),
            Region::Intervals(iv) => {
                if box2d {
                    return Err(Error::InvalidArgument("intervals need a one-dimensional domain".into()));
                }
                let slack = spec.length * lit(1e-12);
                for (a, b) in iv {
                    let ok = if spec.case.is_periodic() {
                        a.is_finite() && b.is_finite()
                    } else {
                        *a <= *b && *a >= spec.origin - slack && *b <= spec.end() + slack
                    };
                    if !ok {
                        return Err(Error::InvalidArgument(format!(
                            "interval [{}, {}] is not inside the domain",
                            a, b
                        )));
                    }
                }
                Ok(())
            }
            Region::Boxes(_) | Region::Balls(_) if !box2d => Err(Error::InvalidArgument(
                "boxes and balls need a two-dimensional domain".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Membership of a point (one coordinate in 1D, two in 2D).
    pub fn contains(&self, spec: &SurfaceSpec<T>, x: &[T]) -> bool {
        match self {
            Region::Whole => true,
            Region::Intervals(iv) => {
                let s = x[0];
                if spec.case.is_periodic() {
                    let l = spec.length;
                    let s = spec.wrap(s);
                    iv.iter().any(|(a, b)| {
                        let (a, b) = (*a, *b);
                        if a <= b {
                            if b - a >= l {
                                return true;
                            }
                            [s - l, s, s + l].iter().any(|y| *y >= a && *y <= b)
                        } else {
                            // wraps: [a, origin + L) ∪ [origin, b]
                            let a = spec.wrap(a);
                            let b = spec.wrap(b);
                            s >= a || s <= b
                        }
                    })
                } else {
                    iv.iter().any(|(a, b)| s >= *a && s <= *b)
                }
            }
            Region::Boxes(bx) => bx
                .iter()
                .any(|b| x[0] >= b[0] && x[0] <= b[1] && x[1] >= b[2] && x[1] <= b[3]),
            Region::Balls(bl) => bl.iter().any(|(c, r)| {
                let d0 = x[0] - c[0];
                let d1 = x[1] - c[1];
                d0 * d0 + d1 * d1 <= *r * *r
            }),
        }
    }

    /// Interval endpoints in 1D (used to place probe points).
    pub fn endpoints(&self) -> Vec<T> {
        match self {
            Region::Intervals(iv) => iv.iter().flat_map(|(a, b)| [*a, *b]).collect(),
            _ => Vec::new(),
        }
    }

    /// Sorted, merged subintervals of `[origin, origin + L]` covered by the
    /// region (1D only).
    pub fn covered(&self, spec: &SurfaceSpec<T>) -> Vec<(T, T)> {
        let lo = spec.origin;
        let hi = spec.end();
        let l = spec.length;
        let mut parts: Vec<(T, T)> = Vec::new();
        match self {
            Region::Whole => parts.push((lo, hi)),
            Region::Intervals(iv) => {
                for (a, b) in iv {
                    if spec.case.is_periodic() {
                        if *b - *a >= l {
                            parts.push((lo, hi));
                            continue;
                        }
                        let (a, b) = if *a <= *b {
                            (*a, *b)
                        } else {
                            (*a, *b + l)
                        };
                        // shift so that a lies in [lo, hi)
                        let wa = spec.wrap(a);
                        let wb = wa + (b - a);
                        if wb <= hi {
                            parts.push((wa, wb));
                        } else {
                            parts.push((wa, hi));
                            parts.push((lo, wb - l));
                        }
                    } else {
                        parts.push((a.max(lo), b.min(hi)));
                    }
                }
            }
            _ => {}
        }
        parts.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let mut merged: Vec<(T, T)> = Vec::new();
        for p in parts {
            if let Some(last) = merged.last_mut() {
                if p.0 <= last.1 {
                    last.1 = last.1.max(p.1);
                    continue;
                }
            }
            merged.push(p);
        }
        merged
    }

    /// Connected components of the complement of the region in 1D, as
    /// intervals `[a, b]` of the closure. On periodic domains a component may
    /// run past `origin + L` (then `b > origin + L`).
    pub fn complement(&self, spec: &SurfaceSpec<T>) -> Vec<(T, T)> {
        let cov = self.covered(spec);
        let lo = spec.origin;
        let hi = spec.end();
        if cov.is_empty() {
            return vec![(lo, hi)];
        }
        let mut out = Vec::new();
        for w in cov.windows(2) {
            if w[1].0 > w[0].1 {
                out.push((w[0].1, w[1].0));
            }
        }
        let first = cov[0];
        let last = cov[cov.len() - 1];
        if spec.case.is_periodic() {
            let gap_end = first.0 + spec.length;
            if gap_end > last.1 {
                out.push((last.1, gap_end));
            }
        } else {
            if first.0 > lo {
                out.insert(0, (lo, first.0));
            }
            if last.1 < hi {
                out.push((last.1, hi));
            }
        }
        out
    }
}
