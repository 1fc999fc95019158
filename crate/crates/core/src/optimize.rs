//! One-dimensional search helpers shared by the solvers and their tests.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub x: f64,
    pub value: f64,
}

/// Golden-section search for a minimum of a unimodal `f` on `[lo, hi]`.
///
/// The returned point is the best of the final bracket and both endpoints.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Extremum {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iters = 0;
    while (b - a) > tol && iters < 200 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iters += 1;
    }
    let mut best = if fc <= fd {
        Extremum { x: c, value: fc }
    } else {
        Extremum { x: d, value: fd }
    };
    for x in [lo, hi] {
        let v = f(x);
        if v < best.value {
            best = Extremum { x, value: v };
        }
    }
    best
}

pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Extremum {
    let e = golden_min(|x| -f(x), lo, hi, tol);
    Extremum {
        x: e.x,
        value: -e.value,
    }
}

/// Uniform grid of `n >= 2` points on `[lo, hi]`, endpoints included.
/// A degenerate interval yields the single point `lo`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if hi <= lo || n < 2 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
        .collect()
}

/// Grid scan followed by golden-section refinement in the bracket around the
/// best grid point. Suitable for functions that are unimodal at grid scale.
pub fn grid_refine_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, grid_n: usize, tol: f64) -> Extremum {
    let grid = uniform_grid(lo, hi, grid_n);
    if grid.len() == 1 {
        return Extremum { x: lo, value: f(lo) };
    }
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let (i_best, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let a = grid[i_best.saturating_sub(1)];
    let b = grid[(i_best + 1).min(grid.len() - 1)];
    let refined = golden_min(&mut f, a, b, tol);
    if refined.value <= values[i_best] {
        refined
    } else {
        Extremum {
            x: grid[i_best],
            value: values[i_best],
        }
    }
}

pub fn grid_refine_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, grid_n: usize, tol: f64) -> Extremum {
    let e = grid_refine_min(|x| -f(x), lo, hi, grid_n, tol);
    Extremum {
        x: e.x,
        value: -e.value,
    }
}
