//! Uniform interior-node discretization of the unit square.
//!
//! Nodes sit at `((i + 1) h, (j + 1) h)` for `0 <= i, j < n` with `h = 1 / (n + 1)`.
//! Boundary nodes are never stored: every field is implicitly zero on the boundary.
//! Fields are stored row-major with `x` fastest, i.e. node `(i, j)` lives at `j * n + i`.
//! Vector fields concatenate their two components, so they hold `2 n^2` values.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 3 interior nodes per axis, got {0}")]
    TooCoarse(usize),
    #[error("rectangle {0} is not a non-degenerate subset of the unit square")]
    BadRect(Rect),
    #[error("cannot parse rectangle from {0:?}: expected \"x0,x1,y0,y1\"")]
    ParseRect(String),
    #[error("observation region {0} contains no interior node")]
    EmptyMask(Rect),
    #[error("field has {got} values, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    h: f64,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self, GridError> {
        if n < 3 {
            return Err(GridError::TooCoarse(n));
        }
        Ok(Self {
            n,
            h: 1.0 / (n as f64 + 1.0),
        })
    }

    /// Interior nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Total interior node count, `n^2`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        ((i + 1) as f64 * self.h, (j + 1) as f64 * self.h)
    }

    /// Samples `f` at every interior node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.n {
            for i in 0..self.n {
                let (x, y) = self.coords(i, j);
                out.push(f(x, y));
            }
        }
        out
    }

    pub fn mask(&self, rect: Rect) -> Result<ObservationMask, GridError> {
        ObservationMask::new(self, rect)
    }

    /// Discrete `L^2` pairing `sum a b h^2`, over the active nodes of `mask` when given.
    ///
    /// Accepts scalar fields (`n^2` values) and vector fields (`2 n^2` values); the mask
    /// applies node-wise to every component.
    pub fn inner_product(
        &self,
        a: &[f64],
        b: &[f64],
        mask: Option<&ObservationMask>,
    ) -> Result<f64, GridError> {
        let nodes = self.len();
        if a.len() != b.len() {
            return Err(GridError::ShapeMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        if a.len() != nodes && a.len() != 2 * nodes {
            return Err(GridError::ShapeMismatch {
                expected: nodes,
                got: a.len(),
            });
        }
        if let Some(m) = mask {
            if m.indicator.len() != nodes {
                return Err(GridError::ShapeMismatch {
                    expected: nodes,
                    got: m.indicator.len(),
                });
            }
        }
        let sum: f64 = match mask {
            None => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Some(m) => a
                .iter()
                .zip(b)
                .enumerate()
                .filter(|(k, _)| m.indicator[k % nodes])
                .map(|(_, (x, y))| x * y)
                .sum(),
        };
        Ok(sum * self.h * self.h)
    }

    pub fn norm(&self, a: &[f64], mask: Option<&ObservationMask>) -> Result<f64, GridError> {
        Ok(self.inner_product(a, a, mask)?.max(0.0).sqrt())
    }
}

/// Axis-aligned half-open rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self, GridError> {
        let r = Self { x0, x1, y0, y1 };
        let inside = |v: f64| (0.0..=1.0).contains(&v);
        if !(inside(x0) && inside(x1) && inside(y0) && inside(y1) && x0 < x1 && y0 < y1) {
            return Err(GridError::BadRect(r));
        }
        Ok(r)
    }

    pub fn unit() -> Self {
        Self {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
        }
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x0 <= x && x < self.x1 && self.y0 <= y && y < self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x0, self.x1, self.y0, self.y1)
    }
}

impl FromStr for Rect {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| GridError::ParseRect(s.to_string()))?;
        match parts.as_slice() {
            [x0, x1, y0, y1] => Rect::new(*x0, *x1, *y0, *y1),
            _ => Err(GridError::ParseRect(s.to_string())),
        }
    }
}

/// Characteristic function of the observation region on the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    rect: Rect,
    indicator: Vec<bool>,
    active: usize,
}

impl ObservationMask {
    pub fn new(grid: &Grid, rect: Rect) -> Result<Self, GridError> {
        let mut indicator = Vec::with_capacity(grid.len());
        for j in 0..grid.n() {
            for i in 0..grid.n() {
                let (x, y) = grid.coords(i, j);
                indicator.push(rect.contains(x, y));
            }
        }
        let active = indicator.iter().filter(|&&b| b).count();
        if active == 0 {
            return Err(GridError::EmptyMask(rect));
        }
        Ok(Self {
            rect,
            indicator,
            active,
        })
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn indicator(&self) -> &[bool] {
        &self.indicator
    }

    pub fn active_count(&self) -> usize {
        self.active
    }

    #[inline]
    pub fn is_active(&self, k: usize) -> bool {
        self.indicator[k]
    }

    /// Indices of the active nodes.
    pub fn active_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.indicator
            .iter()
            .enumerate()
            .filter_map(|(k, &b)| b.then_some(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spacing_and_node_count() {
        let g = Grid::new(3).unwrap();
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.len(), 9);
        let g = Grid::new(31).unwrap();
        assert_eq!(g.h(), 0.03125);
        assert_eq!(g.len(), 961);
        assert!((g.h() * 32.0 - 1.0).abs() < 1e-15);
        assert_eq!(Grid::new(2), Err(GridError::TooCoarse(2)));
    }

    #[test]
    fn mask_membership_is_half_open() {
        let g = Grid::new(3).unwrap();
        let m = g.mask(Rect::new(0.0, 0.5, 0.0, 0.5).unwrap()).unwrap();
        assert_eq!(m.active_count(), 1);
        assert!(m.is_active(g.index(0, 0)));
        // the node at x = 0.5 is excluded by the open right edge
        assert!(!m.is_active(g.index(1, 0)));

        let all = g.mask(Rect::unit()).unwrap();
        assert_eq!(all.active_count(), 9);

        let err = g.mask(Rect::new(0.0, 0.2, 0.0, 0.2).unwrap()).unwrap_err();
        assert!(matches!(err, GridError::EmptyMask(_)));
    }

    #[test]
    fn mask_nonempty_when_rect_wide_enough() {
        for n in [3usize, 7, 16, 31] {
            let g = Grid::new(n).unwrap();
            let w = 1.0 / n as f64;
            for x0 in [0.0, 0.13, 0.5, 1.0 - w] {
                let r = Rect::new(x0, x0 + w, 0.3, (0.3 + w).min(1.0)).unwrap();
                assert!(g.mask(r).is_ok(), "n={n} rect={r}");
            }
        }
    }

    #[test]
    fn rect_parsing() {
        let r: Rect = "0,0.3, 0, 0.3".parse().unwrap();
        assert_eq!(r, Rect::new(0.0, 0.3, 0.0, 0.3).unwrap());
        assert!("0,0.3,0".parse::<Rect>().is_err());
        assert!("a,b,c,d".parse::<Rect>().is_err());
        assert!("0.5,0.2,0,1".parse::<Rect>().is_err());
        assert!("0,1.5,0,1".parse::<Rect>().is_err());
        assert_eq!(r.to_string().parse::<Rect>().unwrap(), r);
    }

    #[test]
    fn inner_product_examples() {
        let g = Grid::new(3).unwrap();
        let one = vec![1.0; 9];
        assert_eq!(g.inner_product(&one, &one, None).unwrap(), 0.5625);
        let m = g.mask(Rect::new(0.0, 0.5, 0.0, 0.5).unwrap()).unwrap();
        assert_eq!(g.inner_product(&one, &one, Some(&m)).unwrap(), 0.0625);
        let zero = vec![0.0; 9];
        assert_eq!(g.inner_product(&zero, &zero, None).unwrap(), 0.0);
        assert!(matches!(
            g.inner_product(&one, &one[..8], None),
            Err(GridError::ShapeMismatch { .. })
        ));
        // vector fields are masked component-wise
        let v = vec![1.0; 18];
        assert_eq!(g.inner_product(&v, &v, Some(&m)).unwrap(), 0.125);
    }

    fn field(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-10.0f64..10.0, n * n),
            prop::collection::vec(-10.0f64..10.0, n * n),
        )
    }

    proptest! {
        #[test]
        fn inner_product_symmetric_and_homogeneous((a, b) in field(5), c in -5.0f64..5.0) {
            let g = Grid::new(5).unwrap();
            let ab = g.inner_product(&a, &b, None).unwrap();
            let ba = g.inner_product(&b, &a, None).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-14 * ab.abs().max(1.0));
            let ca: Vec<f64> = a.iter().map(|x| c * x).collect();
            let cab = g.inner_product(&ca, &b, None).unwrap();
            let scale: f64 = a.iter().zip(&b).map(|(x, y)| (c * x * y).abs()).sum::<f64>() * g.h() * g.h();
            prop_assert!((cab - c * ab).abs() <= 1e-14 * scale.max(1e-300));
            let full = g.mask(Rect::unit()).unwrap();
            prop_assert_eq!(g.inner_product(&a, &b, Some(&full)).unwrap(), ab);
        }

        #[test]
        fn inner_product_definite((a, _b) in field(4)) {
            let g = Grid::new(4).unwrap();
            let aa = g.inner_product(&a, &a, None).unwrap();
            prop_assert_eq!(aa == 0.0, a.iter().all(|&x| x == 0.0));
        }
    }
}
