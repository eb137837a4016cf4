//! Piecewise-cubic Hermite interpolation of radial profiles.
//!
//! Nodal slopes come from five-point Lagrange differentiation, which makes
//! them fourth-order accurate on smooth data. The monotone variant then
//! limits them so the interpolant is monotone wherever the data are; that
//! costs accuracy at interior extrema, so resampling of smooth profiles
//! uses the unlimited slopes.

#[derive(Debug, Clone)]
pub struct RadialCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

fn lagrange_slope(points: &[f64], values: &[f64], c: usize) -> f64 {
    let xc = points[c];
    let mut slope = 0.0;
    for j in 0..points.len() {
        let w = if j == c {
            points.iter().enumerate().filter(|&(k, _)| k != c).map(|(_, &p)| 1.0 / (xc - p)).sum()
        } else {
            let mut num = 1.0;
            let mut den = 1.0;
            for (k, &p) in points.iter().enumerate() {
                if k != j {
                    den *= points[j] - p;
                    if k != c {
                        num *= xc - p;
                    }
                }
            }
            num / den
        };
        slope += w * values[j];
    }
    slope
}

fn limit(d: f64, left: Option<f64>, right: Option<f64>) -> f64 {
    match (left, right) {
        (Some(l), Some(r)) => {
            if l * r <= 0.0 || d * r <= 0.0 {
                0.0
            } else {
                d.signum() * d.abs().min(3.0 * l.abs().min(r.abs()))
            }
        }
        (Some(s), None) | (None, Some(s)) => {
            if d * s <= 0.0 {
                0.0
            } else {
                d.signum() * d.abs().min(3.0 * s.abs())
            }
        }
        (None, None) => d,
    }
}

impl RadialCubic {
    /// Interpolant of a radial profile: even reflection through the origin,
    /// zero beyond the last node.
    pub fn smooth(nodes: &[f64], values: &[f64]) -> Self {
        Self::build(nodes, values, false)
    }

    /// As [`RadialCubic::smooth`], with slopes limited to keep monotone data
    /// monotone.
    pub fn monotone(nodes: &[f64], values: &[f64]) -> Self {
        Self::build(nodes, values, true)
    }

    fn build(nodes: &[f64], values: &[f64], limited: bool) -> Self {
        let n = nodes.len();
        assert_eq!(n, values.len());
        assert!(n >= 3, "need at least three nodes");
        const MIRROR: usize = 3;
        let mirror = MIRROR.min(n);
        let mut ex: Vec<f64> = (0..mirror).rev().map(|k| -nodes[k]).collect();
        let mut ey: Vec<f64> = (0..mirror).rev().map(|k| values[k]).collect();
        ex.extend_from_slice(nodes);
        ey.extend_from_slice(values);
        let len = ex.len();
        let secant = |k: usize| (values[k + 1] - values[k]) / (nodes[k + 1] - nodes[k]);
        let ds = (0..n)
            .map(|i| {
                let c = i + mirror;
                let lo = c.saturating_sub(2).min(len - 5);
                let raw = lagrange_slope(&ex[lo..lo + 5], &ey[lo..lo + 5], c - lo);
                if i == 0 {
                    // the mirrored secant through the origin is flat
                    0.0
                } else if !limited {
                    raw
                } else if i == n - 1 {
                    limit(raw, Some(secant(i - 1)), None)
                } else {
                    limit(raw, Some(secant(i - 1)), Some(secant(i)))
                }
            })
            .collect();
        RadialCubic { xs: nodes.to_vec(), ys: values.to_vec(), ds }
    }

    pub fn slopes(&self) -> &[f64] {
        &self.ds
    }

    #[inline]
    fn hermite(&self, k: usize, x: f64) -> f64 {
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[k] + h10 * h * self.ds[k] + h01 * self.ys[k + 1] + h11 * h * self.ds[k + 1]
    }

    #[inline]
    fn inner(&self, x: f64) -> f64 {
        let x0 = self.xs[0];
        self.ys[0] + self.ds[0] * (x * x - x0 * x0) / (2.0 * x0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.abs();
        let n = self.xs.len();
        if x > self.xs[n - 1] {
            return 0.0;
        }
        if x < self.xs[0] {
            return self.inner(x);
        }
        let k = self.xs.partition_point(|&p| p <= x).saturating_sub(1).min(n - 2);
        self.hermite(k, x)
    }

    /// Evaluates at `s * r` for increasing `rs`, walking the nodes once.
    pub fn eval_scaled(&self, rs: &[f64], s: f64) -> Vec<f64> {
        let n = self.xs.len();
        let last = self.xs[n - 1];
        let mut k = 0usize;
        rs.iter()
            .map(|&r| {
                let x = s * r;
                if x > last {
                    0.0
                } else if x < self.xs[0] {
                    self.inner(x)
                } else {
                    while k + 2 < n && self.xs[k + 1] <= x {
                        k += 1;
                    }
                    self.hermite(k, x)
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_nodes() {
        let xs: Vec<f64> = (1..=50).map(|i| 0.1 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (-x * x).exp()).collect();
        let c = RadialCubic::monotone(&xs, &ys);
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(c.eval(*x), *y);
        }
        assert_eq!(c.eval(5.01), 0.0);
    }

    #[test]
    fn fourth_order_on_smooth_monotone_data() {
        let err = |n: usize| {
            let xs: Vec<f64> = (1..=n).map(|i| 4.0 * i as f64 / n as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|x| (-x * x).exp()).collect();
            let c = RadialCubic::monotone(&xs, &ys);
            (0..4000)
                .map(|i| 0.5 + 3.0 * i as f64 / 4000.0)
                .map(|x| (c.eval(x) - (-x * x).exp()).abs())
                .fold(0.0, f64::max)
        };
        let order = (err(200) / err(400)).log2();
        assert!(order > 3.5, "observed order {order}");
    }

    #[test]
    fn smooth_variant_keeps_order_through_extrema() {
        let f = |x: f64| (-(x - 2.0037) * (x - 2.0037)).exp();
        let err = |n: usize, limited: bool| {
            let xs: Vec<f64> = (1..=n).map(|i| 4.0 * i as f64 / n as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
            let c = if limited { RadialCubic::monotone(&xs, &ys) } else { RadialCubic::smooth(&xs, &ys) };
            (0..4001).map(|i| 1.5 + i as f64 / 4000.0).map(|x| (c.eval(x) - f(x)).abs()).fold(0.0, f64::max)
        };
        let order = (err(200, false) / err(400, false)).log2();
        assert!(order > 3.5, "observed order {order}");
        assert!(err(400, true) > 10.0 * err(400, false));
    }

    #[test]
    fn monotone_data_gives_monotone_interpolant() {
        let xs: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| if x < 10.0 { 1.0 } else { 0.0 }).collect();
        let c = RadialCubic::monotone(&xs, &ys);
        let mut prev = f64::INFINITY;
        for i in 0..2000 {
            let v = c.eval(1.0 + 19.0 * i as f64 / 2000.0);
            assert!(v <= prev + 1e-15 && (-1e-15..=1.0 + 1e-15).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn scaled_walk_matches_pointwise() {
        let xs: Vec<f64> = (1..=64).map(|i| (i as f64).powf(1.5) / 50.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.cos() * (-x).exp()).collect();
        let c = RadialCubic::monotone(&xs, &ys);
        for s in [0.3, 0.99, 1.7, 4.0] {
            let walk = c.eval_scaled(&xs, s);
            for (x, w) in xs.iter().zip(&walk) {
                assert_eq!(*w, c.eval(s * x));
            }
        }
    }
}
