//! Post-processing of parameter sweeps.
//!
//! Smoothing and differencing are both fixed stencils on a uniform grid, so a
//! pipeline of them is a single composed stencil. Applying the composition in
//! one go lets the output errors be propagated exactly from independent input
//! errors even though neighbouring outputs end up correlated.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Relative tolerance when checking that a grid is uniform.
const UNIFORM_TOL: f64 = 1e-6;

/// A function sampled on a uniform grid, optionally with independent errors.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub errs: Option<Vec<f64>>,
}

impl Series {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
        }
        Ok(Self { xs, ys, errs: None })
    }

    pub fn with_errors(xs: Vec<f64>, ys: Vec<f64>, errs: Vec<f64>) -> Result<Self> {
        if errs.len() != ys.len() {
            return Err(Error::DimensionMismatch { expected: ys.len(), found: errs.len() });
        }
        let mut s = Self::new(xs, ys)?;
        s.errs = Some(errs);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Grid spacing; errors unless strictly increasing and uniform.
    pub fn step(&self) -> Result<f64> {
        if self.len() < 2 {
            return Err(Error::InsufficientPoints { needed: 2, got: self.len() });
        }
        let h = self.xs[1] - self.xs[0];
        if !(h > 0.0) {
            return Err(Error::NonUniformGrid);
        }
        for w in self.xs.windows(2) {
            if ((w[1] - w[0]) - h).abs() > UNIFORM_TOL * h.abs().max(w[1].abs()) {
                return Err(Error::NonUniformGrid);
            }
        }
        Ok(h)
    }

    /// Applies a centred stencil of odd length.
    fn apply(&self, stencil: &[f64]) -> Result<Series> {
        let width = stencil.len();
        let radius = width / 2;
        if self.len() < width {
            return Err(Error::InsufficientPoints { needed: width, got: self.len() });
        }
        let n = self.len() - 2 * radius;
        let conv = |v: &[f64], i: usize| stencil.iter().zip(&v[i..i + width]).map(|(c, y)| c * y).sum::<f64>();
        let ys = (0..n).map(|i| conv(&self.ys, i)).collect();
        let errs = self.errs.as_ref().map(|e| {
            (0..n)
                .map(|i| stencil.iter().zip(&e[i..i + width]).map(|(c, s)| (c * s).powi(2)).sum::<f64>().sqrt())
                .collect()
        });
        Ok(Series { xs: self.xs[radius..radius + n].to_vec(), ys, errs })
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Stencil of `rounds` three-point means.
pub fn smoothing_stencil(rounds: usize) -> Vec<f64> {
    (0..rounds).fold(vec![1.0], |acc, _| convolve(&acc, &[1.0 / 3.0; 3]))
}

/// Second-order central stencil for the `order`-th derivative.
pub fn difference_stencil(order: usize, h: f64) -> Result<Vec<f64>> {
    Ok(match order {
        1 => vec![-0.5 / h, 0.0, 0.5 / h],
        2 => [1.0, -2.0, 1.0].iter().map(|c| c / (h * h)).collect(),
        3 => [-1.0, 2.0, 0.0, -2.0, 1.0].iter().map(|c| c / (2.0 * h * h * h)).collect(),
        k => return Err(Error::Invalid(format!("derivative order {k} not in 1..=3"))),
    })
}

/// `rounds` passes of the three-point mean; each pass drops one point per side.
pub fn smooth(series: &Series, rounds: usize) -> Result<Series> {
    series.step()?;
    if series.len() < 2 * rounds + 1 {
        return Err(Error::InsufficientPoints { needed: 2 * rounds + 1, got: series.len() });
    }
    series.apply(&smoothing_stencil(rounds))
}

/// Central difference of order 1, 2 or 3.
pub fn finite_difference(series: &Series, order: usize) -> Result<Series> {
    let h = series.step()?;
    series.apply(&difference_stencil(order, h)?)
}

/// `finite_difference(smooth(series, rounds), order)` with errors propagated
/// through the composed stencil.
pub fn smoothed_derivative(series: &Series, rounds: usize, order: usize) -> Result<Series> {
    let h = series.step()?;
    let stencil = convolve(&smoothing_stencil(rounds), &difference_stencil(order, h)?);
    series.apply(&stencil)
}

/// Step minimizing `ε/Δ + |s3| Δ²` up to a constant: `(ε/|s3|)^{1/3}`.
pub fn optimal_step(epsilon: f64, s3: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::NonPositiveInput(epsilon));
    }
    if !(s3.abs() > 0.0) {
        return Err(Error::NonPositiveInput(s3.abs()));
    }
    Ok((epsilon / s3.abs()).cbrt())
}

/// Location of the largest value.
pub fn argmax(series: &Series) -> Option<(f64, f64)> {
    series
        .xs
        .iter()
        .zip(&series.ys)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(&x, &y)| (x, y))
}

/// Vertex of the parabola through the maximum and its two neighbours.
pub fn refined_peak(series: &Series) -> Option<f64> {
    let i = (0..series.len()).max_by(|&a, &b| series.ys[a].total_cmp(&series.ys[b]))?;
    if i == 0 || i + 1 == series.len() {
        return Some(series.xs[i]);
    }
    let (a, b, c) = (series.ys[i - 1], series.ys[i], series.ys[i + 1]);
    let denom = a - 2.0 * b + c;
    let h = series.xs[i + 1] - series.xs[i];
    if denom == 0.0 {
        return Some(series.xs[i]);
    }
    Some(series.xs[i] + 0.5 * h * (a - c) / denom)
}

/// Refined location and raw value of the point with the largest `|y|`,
/// whichever its sign.
pub fn extremum(series: &Series) -> Option<(f64, f64)> {
    let i = (0..series.len()).max_by(|&a, &b| series.ys[a].abs().total_cmp(&series.ys[b].abs()))?;
    let sign = series.ys[i].signum();
    let flipped = Series { xs: series.xs.clone(), ys: series.ys.iter().map(|y| sign * y).collect(), errs: None };
    Some((refined_peak(&flipped)?, series.ys[i]))
}

/// One system size of a collapse.
#[derive(Clone, Debug, PartialEq)]
pub struct CollapseSeries {
    pub l: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollapseFit {
    pub critical: f64,
    pub nu: f64,
    pub score: f64,
    pub window: (f64, f64),
    /// Points inside the window that entered the score.
    pub points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollapseOptions {
    pub window: (f64, f64),
    pub start: (f64, f64),
    /// Initial simplex offsets in `(critical, ν)`.
    pub step: (f64, f64),
    pub max_iter: usize,
}

impl CollapseOptions {
    pub fn new(window: (f64, f64), start: (f64, f64)) -> Self {
        Self { window, start, step: (0.01, 0.2), max_iter: 400 }
    }
}

fn interpolate(us: &[f64], ys: &[f64], u: f64) -> Option<f64> {
    if us.len() < 2 || u < us[0] || u > us[us.len() - 1] {
        return None;
    }
    let k = us.partition_point(|&v| v < u).clamp(1, us.len() - 1);
    let (u0, u1) = (us[k - 1], us[k]);
    let t = if u1 > u0 { (u - u0) / (u1 - u0) } else { 0.0 };
    Some(ys[k - 1] + t * (ys[k] - ys[k - 1]))
}

/// Mean squared distance of every in-window point from the linear
/// interpolation of each other size, or `None` with fewer than 5 points.
pub fn collapse_score(data: &[CollapseSeries], critical: f64, nu: f64, window: (f64, f64)) -> (Option<f64>, usize) {
    if !(nu > 0.0) {
        return (None, 0);
    }
    let scaled: Vec<Vec<f64>> = data
        .iter()
        .map(|s| {
            let f = (s.l as f64).powf(1.0 / nu);
            s.xs.iter().map(|x| (x - critical) * f).collect()
        })
        .collect();
    let (mut total, mut pairs, mut points) = (0.0, 0usize, 0usize);
    for (i, s) in data.iter().enumerate() {
        for (k, &u) in scaled[i].iter().enumerate() {
            if u < window.0 || u > window.1 {
                continue;
            }
            let mut used = false;
            for (j, other) in data.iter().enumerate() {
                if j == i {
                    continue;
                }
                if let Some(y) = interpolate(&scaled[j], &other.ys, u) {
                    total += (s.ys[k] - y).powi(2);
                    pairs += 1;
                    used = true;
                }
            }
            points += usize::from(used);
        }
    }
    if points < 5 || pairs == 0 {
        return (None, points);
    }
    (Some(total / pairs as f64), points)
}

/// Derivative-free simplex minimization in two variables.
pub fn nelder_mead<F>(f: F, start: [f64; 2], step: [f64; 2], max_iter: usize) -> ([f64; 2], f64)
where
    F: Fn([f64; 2]) -> f64,
{
    let mut simplex = [start, [start[0] + step[0], start[1]], [start[0], start[1] + step[1]]];
    let mut values = simplex.map(&f);
    for _ in 0..max_iter {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let [best, mid, worst] = idx;
        let spread = (values[worst] - values[best]).abs();
        let size = (0..2).map(|d| (simplex[worst][d] - simplex[best][d]).abs()).fold(0.0, f64::max);
        if spread < 1e-14 * (1.0 + values[best].abs()) && size < 1e-9 {
            break;
        }
        let centroid = [0, 1].map(|d| 0.5 * (simplex[best][d] + simplex[mid][d]));
        let along = |t: f64| [0, 1].map(|d| centroid[d] + t * (simplex[worst][d] - centroid[d]));
        let reflected = along(-1.0);
        let fr = f(reflected);
        if fr < values[best] {
            let expanded = along(-2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
        } else if fr < values[mid] {
            simplex[worst] = reflected;
            values[worst] = fr;
        } else {
            let contracted = if fr < values[worst] { along(-0.5) } else { along(0.5) };
            let fc = f(contracted);
            if fc < values[worst].min(fr) {
                simplex[worst] = contracted;
                values[worst] = fc;
            } else {
                for k in [mid, worst] {
                    simplex[k] = [0, 1].map(|d| 0.5 * (simplex[k][d] + simplex[best][d]));
                    values[k] = f(simplex[k]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    (simplex[best], values[best])
}

/// Fits `(critical, ν)` so that `y` against `(x - critical) L^{1/ν}` falls on
/// one curve inside the window.
pub fn data_collapse(data: &[CollapseSeries], opts: CollapseOptions) -> Result<CollapseFit> {
    if data.len() < 3 {
        return Err(Error::InsufficientPoints { needed: 3, got: data.len() });
    }
    for s in data {
        if s.xs.len() != s.ys.len() {
            return Err(Error::DimensionMismatch { expected: s.xs.len(), found: s.ys.len() });
        }
        if s.xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(format!("parameters for L = {} are not increasing", s.l)));
        }
    }
    let (s0, n0) = collapse_score(data, opts.start.0, opts.start.1, opts.window);
    if s0.is_none() {
        return Err(Error::DegenerateWindow(n0));
    }
    let objective = |p: [f64; 2]| collapse_score(data, p[0], p[1], opts.window).0.unwrap_or(f64::INFINITY);
    let mut point = [opts.start.0, opts.start.1];
    let mut step = [opts.step.0, opts.step.1];
    let mut value = f64::INFINITY;
    // restart from the optimum until it stops moving
    for _ in 0..4 {
        let (p, v) = nelder_mead(objective, point, step, opts.max_iter);
        let moved = (p[0] - point[0]).abs() > 1e-7 || (p[1] - point[1]).abs() > 1e-6;
        point = p;
        value = v;
        step = [step[0] * 0.5, step[1] * 0.5];
        if !moved {
            break;
        }
    }
    let (score, points) = collapse_score(data, point[0], point[1], opts.window);
    let score = score.ok_or(Error::DegenerateWindow(points))?;
    debug_assert!((score - value).abs() <= 1e-12 * (1.0 + value.abs()));
    Ok(CollapseFit { critical: point[0], nu: point[1], score, window: opts.window, points })
}

/// Column names of a sweep table, in order.
pub const SWEEP_COLUMNS: [&str; 11] =
    ["model", "param", "L", "N_s", "s_d", "s_d_err", "cid", "cid_err", "obs", "obs_err", "status"];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub model: String,
    pub param: f64,
    pub l: usize,
    pub n_s: usize,
    pub s_d: f64,
    pub s_d_err: f64,
    pub cid: f64,
    pub cid_err: f64,
    pub obs: f64,
    pub obs_err: f64,
    pub status: String,
}

impl SweepRow {
    /// A row with every estimate missing.
    pub fn empty(model: &str, param: f64, l: usize) -> Self {
        Self {
            model: model.to_string(),
            param,
            l,
            n_s: 0,
            s_d: f64::NAN,
            s_d_err: f64::NAN,
            cid: f64::NAN,
            cid_err: f64::NAN,
            obs: f64::NAN,
            obs_err: f64::NAN,
            status: "ok".to_string(),
        }
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.10e}")
    }
}

/// Rows of a parameter sweep plus `#` comment lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepTable {
    pub comments: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "{}", SWEEP_COLUMNS.join(","));
        for r in &self.rows {
            let nums = [r.s_d, r.s_d_err, r.cid, r.cid_err, r.obs, r.obs_err].map(fmt_num);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.model,
                fmt_num(r.param),
                r.l,
                r.n_s,
                nums.join(","),
                r.status.replace(',', ";")
            );
        }
        out
    }

    /// Reads a table; the trailing status column is optional.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut table = SweepTable::default();
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(c) = t.strip_prefix('#') {
                table.comments.push(c.trim().to_string());
                continue;
            }
            let cells: Vec<&str> = t.split(',').map(str::trim).collect();
            if !header_seen {
                if cells[..] != SWEEP_COLUMNS[..10] && cells[..] != SWEEP_COLUMNS[..] {
                    return Err(Error::Parse { line: line_no, reason: format!("unexpected header '{t}'") });
                }
                header_seen = true;
                continue;
            }
            if cells.len() != 10 && cells.len() != 11 {
                return Err(Error::Parse { line: line_no, reason: format!("expected 10 or 11 fields, got {}", cells.len()) });
            }
            let num = |k: usize| -> Result<f64> {
                cells[k]
                    .parse::<f64>()
                    .map_err(|e| Error::Parse { line: line_no, reason: format!("{}: {e}", SWEEP_COLUMNS[k]) })
            };
            let int = |k: usize| -> Result<usize> {
                cells[k]
                    .parse::<usize>()
                    .map_err(|e| Error::Parse { line: line_no, reason: format!("{}: {e}", SWEEP_COLUMNS[k]) })
            };
            table.rows.push(SweepRow {
                model: cells[0].to_string(),
                param: num(1)?,
                l: int(2)?,
                n_s: int(3)?,
                s_d: num(4)?,
                s_d_err: num(5)?,
                cid: num(6)?,
                cid_err: num(7)?,
                obs: num(8)?,
                obs_err: num(9)?,
                status: cells.get(10).map_or("ok".to_string(), |s| s.to_string()),
            });
        }
        if !header_seen {
            return Err(Error::Parse { line: 0, reason: "missing header".into() });
        }
        Ok(table)
    }

    /// Rows grouped by `(model, L)`, each sorted by parameter.
    pub fn groups(&self) -> BTreeMap<(String, usize), Vec<&SweepRow>> {
        let mut map: BTreeMap<(String, usize), Vec<&SweepRow>> = BTreeMap::new();
        for r in &self.rows {
            map.entry((r.model.clone(), r.l)).or_default().push(r);
        }
        for v in map.values_mut() {
            v.sort_by(|a, b| a.param.total_cmp(&b.param));
        }
        map
    }

    /// One column of a group as a series with its error column.
    pub fn series(&self, model: &str, l: usize, column: Column) -> Result<Series> {
        let groups = self.groups();
        let rows = groups
            .get(&(model.to_string(), l))
            .ok_or_else(|| Error::Invalid(format!("no rows for {model} at L = {l}")))?;
        if rows.windows(2).any(|w| w[1].param <= w[0].param) {
            return Err(Error::Invalid(format!("repeated parameter values for {model} at L = {l}")));
        }
        let (ys, errs) = rows.iter().map(|r| column.get(r)).unzip();
        Series::with_errors(rows.iter().map(|r| r.param).collect(), ys, errs)
    }
}

/// Value columns of a sweep table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Column {
    SD,
    Cid,
    Obs,
}

impl Column {
    fn get(self, r: &SweepRow) -> (f64, f64) {
        match self {
            Column::SD => (r.s_d, r.s_d_err),
            Column::Cid => (r.cid, r.cid_err),
            Column::Obs => (r.obs, r.obs_err),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Column::SD => "s_d",
            Column::Cid => "cid",
            Column::Obs => "obs",
        }
    }
}

impl std::str::FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s_d" => Ok(Column::SD),
            "cid" => Ok(Column::Cid),
            "obs" => Ok(Column::Obs),
            other => Err(Error::Invalid(format!("unknown column '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, h: f64, f: impl Fn(f64) -> f64) -> Series {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let ys = xs.iter().map(|&x| f(x)).collect();
        Series::new(xs, ys).unwrap()
    }

    #[test]
    fn smoothing_examples() {
        let c = smooth(&grid(9, 0.1, |_| 2.5), 2).unwrap();
        assert_eq!(c.len(), 5);
        assert!(c.ys.iter().all(|v| (v - 2.5).abs() < 1e-12));
        let lin = smooth(&grid(9, 0.1, |x| 3.0 * x - 1.0), 3).unwrap();
        for (x, y) in lin.xs.iter().zip(&lin.ys) {
            assert!((y - (3.0 * x - 1.0)).abs() < 1e-12);
        }
        let mut spike = grid(7, 1.0, |_| 0.0);
        spike.ys[3] = 6.0;
        let s = smooth(&spike, 1).unwrap();
        assert_eq!(s.ys, vec![0.0, 2.0, 2.0, 2.0, 0.0]);
        assert!(smooth(&grid(6, 1.0, |x| x), 3).is_err());
    }

    #[test]
    fn difference_examples() {
        let q = finite_difference(&grid(10, 0.3, |x| 2.0 * x * x - x), 2).unwrap();
        assert!(q.ys.iter().all(|v| (v - 4.0).abs() < 1e-9));
        let c = finite_difference(&grid(10, 0.3, |x| x * x * x), 3).unwrap();
        assert!(c.ys.iter().all(|v| (v - 6.0).abs() < 1e-8));
        let h = 1e-2;
        let s = finite_difference(&grid(400, h, f64::sin), 1).unwrap();
        let worst = s.xs.iter().zip(&s.ys).map(|(x, y)| (y - x.cos()).abs()).fold(0.0, f64::max);
        assert!(worst < h * h / 6.0 * 1.01, "{worst}");
        assert!(finite_difference(&grid(4, 1.0, |x| x), 3).is_err());
    }

    #[test]
    fn non_uniform_rejected() {
        let s = Series::new(vec![0.0, 0.1, 0.3], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(smooth(&s, 1), Err(Error::NonUniformGrid));
    }

    #[test]
    fn composed_pipeline_equals_sequence() {
        let s = grid(30, 0.05, |x| (3.0 * x).sin() + x * x);
        let a = smoothed_derivative(&s, 3, 2).unwrap();
        let b = finite_difference(&smooth(&s, 3).unwrap(), 2).unwrap();
        assert_eq!(a.xs, b.xs);
        for (p, q) in a.ys.iter().zip(&b.ys) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn smoothing_reduces_derivative_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 4000;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let s = Series::new(xs, ys).unwrap();
        let var = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        let raw = var(&finite_difference(&s, 2).unwrap().ys);
        let smoothed = var(&smoothed_derivative(&s, 3, 2).unwrap().ys);
        assert!(smoothed < raw * 0.2, "{smoothed} vs {raw}");
        // the propagated error agrees with the observed scatter
        let e = Series::with_errors(s.xs.clone(), s.ys.clone(), vec![(1.0f64 / 12.0).sqrt(); n]).unwrap();
        let d = smoothed_derivative(&e, 3, 2).unwrap();
        let predicted = d.errs.unwrap()[0].powi(2);
        assert!((smoothed / predicted - 1.0).abs() < 0.15);
    }

    #[test]
    fn extremum_finds_dips() {
        let s = grid(21, 0.05, |x| -3.0 * (-(x - 0.43f64).powi(2) * 40.0).exp() + 0.5 * x);
        let (x, y) = extremum(&s).unwrap();
        assert!((x - 0.43).abs() < 0.02, "{x}");
        assert!(y < -2.5);
    }

    #[test]
    fn optimal_step_examples() {
        assert!((optimal_step(1e-3, 1.0).unwrap() - 0.1).abs() < 1e-12);
        let a = optimal_step(1e-3, 2.0).unwrap();
        let b = optimal_step(8e-3, 2.0).unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
        assert!(optimal_step(0.0, 1.0).is_err());
        // the error model ε/Δ + |s3| Δ² is minimal at (ε / 2|s3|)^{1/3}, a
        // constant factor from the returned scale
        let (eps, s3) = (1e-3, 1.0);
        let model = |d: f64| eps / d + s3 * d * d;
        let best = (1..2000).map(|i| i as f64 * 1e-4).min_by(|a, b| model(*a).total_cmp(&model(*b))).unwrap();
        let step = optimal_step(eps, s3).unwrap();
        assert!((best - step * 0.5f64.cbrt()).abs() < 2e-4, "{best} vs {step}");
    }

    fn synthetic(pc: f64, nu: f64, noise: f64, seed: u64) -> Vec<CollapseSeries> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        [8, 12, 16]
            .iter()
            .map(|&l| {
                let xs: Vec<f64> = (0..25).map(|i| 0.05 + 0.005 * i as f64).collect();
                let ys = xs
                    .iter()
                    .map(|&x| {
                        let g = ((x - pc) * (l as f64).powf(1.0 / nu)).tanh();
                        g * (1.0 + noise * (2.0 * rng.random::<f64>() - 1.0))
                    })
                    .collect();
                CollapseSeries { l, xs, ys }
            })
            .collect()
    }

    #[test]
    fn collapse_recovers_synthetic_parameters() {
        let data = synthetic(0.109, 1.5, 0.01, 4);
        let fit = data_collapse(&data, CollapseOptions::new((-0.4, 0.4), (0.1, 1.2))).unwrap();
        assert!((fit.critical - 0.109).abs() < 0.005, "{fit:?}");
        assert!((fit.nu - 1.5).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn perfect_collapse_scores_zero() {
        let data = synthetic(0.109, 1.5, 0.0, 0);
        let (s, n) = collapse_score(&data, 0.109, 1.5, (-0.4, 0.4));
        assert!(n >= 5);
        assert!(s.unwrap() < 1e-4);
        // relabeling sizes leaves the score unchanged
        let mut rev = data.clone();
        rev.reverse();
        assert!((collapse_score(&rev, 0.11, 1.3, (-0.4, 0.4)).0.unwrap() - collapse_score(&data, 0.11, 1.3, (-0.4, 0.4)).0.unwrap()).abs() < 1e-15);
    }

    #[test]
    fn narrow_window_is_degenerate() {
        let data = synthetic(0.109, 1.5, 0.0, 0);
        let err = data_collapse(&data, CollapseOptions::new((-0.001, 0.001), (0.109, 1.5))).unwrap_err();
        assert!(matches!(err, Error::DegenerateWindow(_)));
    }

    #[test]
    fn table_round_trip() {
        let mut t = SweepTable { comments: vec!["config 1234".into()], rows: vec![] };
        let mut r = SweepRow::empty("tfim", 0.5, 32);
        r.n_s = 10;
        r.s_d = 0.25;
        r.s_d_err = 0.01;
        t.rows.push(r);
        let mut bad = SweepRow::empty("tfim", 0.6, 32);
        bad.status = "error: boom".into();
        t.rows.push(bad);
        let text = t.to_csv();
        assert!(text.lines().nth(1).unwrap().starts_with("model,param,L,N_s,s_d,s_d_err,cid,cid_err,obs,obs_err"));
        let back = SweepTable::from_csv(&text).unwrap();
        assert_eq!(back.comments, t.comments);
        assert_eq!(back.rows.len(), 2);
        assert_eq!(back.rows[0].s_d, 0.25);
        assert!(back.rows[1].s_d.is_nan());
        assert_eq!(back.rows[1].status, "error: boom");
        let s = back.series("tfim", 32, Column::SD).unwrap();
        assert_eq!(s.xs, vec![0.5, 0.6]);
    }
}
