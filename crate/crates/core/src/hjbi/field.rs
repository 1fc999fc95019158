use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::HjbiError;
use crate::model::AmbiguityBand;

/// Band bounds of both parties sampled on a `(t, x)` grid, stored row-major
/// with `x` varying fastest. Between nodes the bounds are interpolated
/// bilinearly; outside the grid they are held constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovAmbiguityField {
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub a_lo: Vec<f64>,
    pub a_hi: Vec<f64>,
    pub p_lo: Vec<f64>,
    pub p_hi: Vec<f64>,
}

fn increasing(v: &[f64]) -> bool {
    !v.is_empty() && v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|x| x.is_finite())
}

/// Index `i` and weight `w` such that `v` is `(1 - w) g[i] + w g[i + 1]`.
fn locate(g: &[f64], v: f64) -> (usize, f64) {
    if g.len() == 1 || v <= g[0] {
        return (0, 0.0);
    }
    let last = g.len() - 1;
    if v >= g[last] {
        return (last - 1, 1.0);
    }
    let j = g.partition_point(|&x| x <= v).min(last);
    let i = j - 1;
    (i, (v - g[i]) / (g[j] - g[i]))
}

impl MarkovAmbiguityField {
    pub fn new(
        t_grid: Vec<f64>,
        x_grid: Vec<f64>,
        a_lo: Vec<f64>,
        a_hi: Vec<f64>,
        p_lo: Vec<f64>,
        p_hi: Vec<f64>,
    ) -> Result<Self, HjbiError> {
        let f = MarkovAmbiguityField {
            t_grid,
            x_grid,
            a_lo,
            a_hi,
            p_lo,
            p_hi,
        };
        f.check()?;
        Ok(f)
    }

    /// Time-and-state independent bands.
    pub fn constant(
        agent: &AmbiguityBand,
        principal: &AmbiguityBand,
        horizon: f64,
        x_min: f64,
        x_max: f64,
    ) -> Result<Self, HjbiError> {
        Self::from_fn(vec![0.0, horizon], vec![x_min, x_max], |_, _| (*agent, *principal))
    }

    /// Samples `bands(t, x) -> (agent, principal)` at every node.
    pub fn from_fn<F>(t_grid: Vec<f64>, x_grid: Vec<f64>, bands: F) -> Result<Self, HjbiError>
    where
        F: Fn(f64, f64) -> (AmbiguityBand, AmbiguityBand),
    {
        let n = t_grid.len() * x_grid.len();
        let (mut a_lo, mut a_hi, mut p_lo, mut p_hi) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for &t in &t_grid {
            for &x in &x_grid {
                let (a, p) = bands(t, x);
                a_lo.push(a.lo);
                a_hi.push(a.hi);
                p_lo.push(p.lo);
                p_hi.push(p.hi);
            }
        }
        Self::new(t_grid, x_grid, a_lo, a_hi, p_lo, p_hi)
    }

    fn check(&self) -> Result<(), HjbiError> {
        if !increasing(&self.t_grid) || !increasing(&self.x_grid) {
            return Err(HjbiError::InvalidField(
                "grids must be finite and strictly increasing".into(),
            ));
        }
        let n = self.t_grid.len() * self.x_grid.len();
        for v in [&self.a_lo, &self.a_hi, &self.p_lo, &self.p_hi] {
            if v.len() != n {
                return Err(HjbiError::InvalidField(format!(
                    "expected {n} node values, found {}",
                    v.len()
                )));
            }
        }
        let nx = self.x_grid.len();
        for k in 0..n {
            let (t, x) = (self.t_grid[k / nx], self.x_grid[k % nx]);
            let (al, ah, pl, ph) = (self.a_lo[k], self.a_hi[k], self.p_lo[k], self.p_hi[k]);
            let ok = [al, ah, pl, ph].iter().all(|v| *v > 0.0 && v.is_finite()) && al <= ah && pl <= ph;
            if !ok {
                return Err(HjbiError::InvalidField(format!(
                    "bands at t={t}, x={x} need 0 < lo <= hi (agent [{al}, {ah}], principal [{pl}, {ph}])"
                )));
            }
            if al.max(pl) > ah.min(ph) {
                return Err(HjbiError::EmptyIntersection { t, x });
            }
        }
        Ok(())
    }

    /// Largest principal variance over the grid.
    pub fn max_variance(&self) -> f64 {
        self.p_hi.iter().copied().fold(0.0, f64::max)
    }

    fn interp(&self, values: &[f64], t: f64, x: f64) -> f64 {
        let nx = self.x_grid.len();
        let (it, wt) = locate(&self.t_grid, t);
        let (ix, wx) = locate(&self.x_grid, x);
        let at = |i: usize, j: usize| values[i.min(self.t_grid.len() - 1) * nx + j.min(nx - 1)];
        // `a + w (b - a)` is exact when `a == b`
        let lerp = |a: f64, b: f64, w: f64| a + w * (b - a);
        let row = |i: usize| lerp(at(i, ix), at(i, ix + 1), wx);
        lerp(row(it), row(it + 1), wt)
    }

    /// `(agent, principal)` bands at `(t, x)`.
    pub fn bands_at(&self, t: f64, x: f64) -> (AmbiguityBand, AmbiguityBand) {
        let a = AmbiguityBand {
            lo: self.interp(&self.a_lo, t, x),
            hi: self.interp(&self.a_hi, t, x),
        };
        let p = AmbiguityBand {
            lo: self.interp(&self.p_lo, t, x),
            hi: self.interp(&self.p_hi, t, x),
        };
        // interpolation may swap nearly equal bounds by one ulp
        let fix = |b: AmbiguityBand| AmbiguityBand {
            lo: b.lo.min(b.hi),
            hi: b.hi.max(b.lo),
        };
        (fix(a), fix(p))
    }

    /// Writes `t,x,a_lo,a_hi,p_lo,p_hi` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        out.write_record(["t", "x", "a_lo", "a_hi", "p_lo", "p_hi"])?;
        let nx = self.x_grid.len();
        for k in 0..self.a_lo.len() {
            out.serialize((
                self.t_grid[k / nx],
                self.x_grid[k % nx],
                self.a_lo[k],
                self.a_hi[k],
                self.p_lo[k],
                self.p_hi[k],
            ))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the format of [`write_csv`](Self::write_csv). Rows may come in
    /// any order but must cover the full tensor grid exactly once.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, HjbiError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows: Vec<[f64; 6]> = Vec::new();
        for rec in rdr.deserialize::<[f64; 6]>() {
            rows.push(rec.map_err(|e| HjbiError::InvalidField(format!("csv: {e}")))?);
        }
        let mut ts: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let mut xs: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        for v in [&mut ts, &mut xs] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let (nt, nx) = (ts.len(), xs.len());
        if rows.len() != nt * nx {
            return Err(HjbiError::InvalidField(format!(
                "{} rows do not form a full {nt} x {nx} grid",
                rows.len()
            )));
        }
        let mut cols = vec![vec![f64::NAN; nt * nx]; 4];
        for r in &rows {
            let i = ts.partition_point(|&t| t < r[0]);
            let j = xs.partition_point(|&x| x < r[1]);
            let k = i * nx + j;
            if !cols[0][k].is_nan() {
                return Err(HjbiError::InvalidField(format!(
                    "duplicate node t={}, x={}",
                    r[0], r[1]
                )));
            }
            for c in 0..4 {
                cols[c][k] = r[c + 2];
            }
        }
        let mut it = cols.into_iter();
        let mut next = || it.next().expect("four columns");
        Self::new(ts, xs, next(), next(), next(), next())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band(lo: f64, hi: f64) -> AmbiguityBand {
        AmbiguityBand::new(lo, hi).unwrap()
    }

    #[test]
    fn constant_field_is_constant() {
        let f = MarkovAmbiguityField::constant(&band(0.5, 1.5), &band(0.5, 1.0), 1.0, -6.0, 6.0).unwrap();
        for (t, x) in [(0.0, 0.0), (0.3, -10.0), (2.0, 4.2)] {
            assert_eq!(f.bands_at(t, x), (band(0.5, 1.5), band(0.5, 1.0)));
        }
        assert_eq!(f.max_variance(), 1.0);
    }

    #[test]
    fn bilinear_interpolation() {
        let f = MarkovAmbiguityField::from_fn(vec![0.0, 1.0], vec![-1.0, 0.0, 1.0], |t, x| {
            (band(0.5, 2.0 + t + x), band(0.5, 1.0))
        })
        .unwrap();
        let (a, _) = f.bands_at(0.5, 0.5);
        assert!((a.hi - 3.0).abs() < 1e-15);
        let (a, _) = f.bands_at(0.25, -0.75);
        assert!((a.hi - 1.5).abs() < 1e-15);
    }

    #[test]
    fn disjoint_node_is_reported() {
        let err = MarkovAmbiguityField::constant(&band(1.0, 2.0), &band(3.0, 4.0), 1.0, -1.0, 1.0).unwrap_err();
        assert!(matches!(err, HjbiError::EmptyIntersection { .. }));
        assert!(err.to_string().starts_with("EmptyIntersection"));
    }

    #[test]
    fn malformed_fields_are_rejected() {
        let bad = MarkovAmbiguityField::new(
            vec![0.0, 1.0],
            vec![0.0],
            vec![1.0; 2],
            vec![1.0; 2],
            vec![1.0; 2],
            vec![1.0],
        );
        assert!(matches!(bad, Err(HjbiError::InvalidField(_))));
        let bad = MarkovAmbiguityField::new(
            vec![1.0, 0.0],
            vec![0.0],
            vec![1.0; 2],
            vec![1.0; 2],
            vec![1.0; 2],
            vec![1.0; 2],
        );
        assert!(matches!(bad, Err(HjbiError::InvalidField(_))));
    }

    #[test]
    fn csv_round_trip() {
        let f = MarkovAmbiguityField::from_fn(vec![0.0, 0.5, 1.0], vec![-2.0, 0.0, 2.0], |t, x| {
            (band(0.4, 1.5 + 0.1 * t), band(0.3 + 0.01 * x.abs(), 1.0))
        })
        .unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x,a_lo,a_hi,p_lo,p_hi\n"));
        assert!(!text.contains('\r'));
        let g = MarkovAmbiguityField::read_csv(buf.as_slice()).unwrap();
        assert_eq!(f, g);
    }
}
