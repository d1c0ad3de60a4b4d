//! Trajectory data model, CSV ingestion, drift subtraction and nonparametric
//! MSD machinery.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Recorded particle paths on a uniform time grid. Positions are µm,
/// `dt` is seconds per frame. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    dt: f64,
    dim: usize,
    paths: Vec<TrajPath>,
}

/// One particle path: an (N+1)×dim position matrix, rows ordered by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajPath {
    pub id: String,
    pub positions: Array2<f64>,
}

impl TrajectorySet {
    pub fn new(dt: f64, dim: usize, paths: Vec<TrajPath>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if !(1..=3).contains(&dim) {
            return Err(Error::invalid(format!("dim must be 1, 2 or 3, got {dim}")));
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &paths {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::invalid(format!("duplicate path id {:?}", p.id)));
            }
            if p.positions.nrows() < 2 {
                return Err(Error::invalid(format!(
                    "path {:?} has {} rows; need at least 2",
                    p.id,
                    p.positions.nrows()
                )));
            }
            if p.positions.ncols() != dim {
                return Err(Error::invalid(format!(
                    "path {:?} has {} columns, expected {dim}",
                    p.id,
                    p.positions.ncols()
                )));
            }
            if p.positions.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "path {:?} contains a non-finite coordinate",
                    p.id
                )));
            }
        }
        Ok(TrajectorySet { dt, dim, paths })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn paths(&self) -> &[TrajPath] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Empirical MSD at integer lags, µm².
#[derive(Debug, Clone, PartialEq)]
pub struct MsdCurve {
    lags: Vec<usize>,
    values: Vec<f64>,
}

impl MsdCurve {
    pub fn new(lags: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if lags.len() != values.len() || lags.is_empty() {
            return Err(Error::invalid("MSD lags/values must be nonempty and equal length"));
        }
        if lags[0] == 0 || lags.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("MSD lags must be strictly increasing and >= 1"));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("MSD values must be nonnegative"));
        }
        Ok(MsdCurve { lags, values })
    }

    pub fn lags(&self) -> &[usize] {
        &self.lags
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    /// Value at an integer lag, if present.
    pub fn at_lag(&self, lag: usize) -> Option<f64> {
        self.lags
            .binary_search(&lag)
            .ok()
            .map(|i| self.values[i])
    }

    /// Keeps the smallest `frac` fraction of lags (at least 3), the usual
    /// guard against the long-lag bias of drift-subtracted empirical MSDs.
    pub fn truncated_fraction(&self, frac: f64) -> Result<MsdCurve> {
        if !(frac > 0.0 && frac <= 1.0) {
            return Err(Error::invalid("truncation fraction must be in (0, 1]"));
        }
        let keep = ((self.len() as f64 * frac).floor() as usize).clamp(3.min(self.len()), self.len());
        MsdCurve::new(self.lags[..keep].to_vec(), self.values[..keep].to_vec())
    }
}

/// Default maximum lag for LS fitting inputs: 30% of the increment count.
pub fn default_ls_max_lag(n_increments: usize) -> usize {
    ((n_increments as f64) * 0.3).floor().max(3.0) as usize
}

/// Loads a trajectory CSV with header `id,frame,x,y[,z]`. Frames must be
/// contiguous from 0 within each id; rows may arrive in any order. Lines
/// starting with `#` are ignored.
pub fn load_csv(path: &Path, dt: f64, dim: usize) -> Result<TrajectorySet> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    parse_csv(reader, path.to_path_buf(), dt, dim)
}

fn parse_csv(reader: impl BufRead, path: PathBuf, dt: f64, dim: usize) -> Result<TrajectorySet> {
    if !(1..=3).contains(&dim) {
        return Err(Error::invalid(format!("dim must be 1, 2 or 3, got {dim}")));
    }
    let expected_header: String = match dim {
        1 => "id,frame,x".into(),
        2 => "id,frame,x,y".into(),
        _ => "id,frame,x,y,z".into(),
    };
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.clone(),
        line,
        msg,
    };

    // id -> frame -> coordinates; BTreeMaps keep ids in first-seen order via
    // a side list and frames sorted for the contiguity check.
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();

    let mut header_seen = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !header_seen {
            if trimmed != expected_header {
                return Err(parse_err(
                    lineno,
                    format!("expected header {expected_header:?}, found {trimmed:?}"),
                ));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(parse_err(
                lineno,
                format!("expected {} fields, found {}", dim + 2, fields.len()),
            ));
        }
        let id = fields[0].to_string();
        let frame: u64 = fields[1]
            .parse()
            .map_err(|_| parse_err(lineno, format!("invalid frame index {:?}", fields[1])))?;
        let mut coords = Vec::with_capacity(dim);
        for f in &fields[2..] {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(lineno, format!("non-numeric coordinate {f:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("non-finite coordinate {f:?}")));
            }
            coords.push(v);
        }
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            BTreeMap::new()
        });
        if entry.insert(frame, coords).is_some() {
            return Err(parse_err(
                lineno,
                format!("duplicate frame {frame} for id {id:?}"),
            ));
        }
    }
    if !header_seen {
        return Err(parse_err(1, "file has no header".into()));
    }

    let mut paths = Vec::with_capacity(order.len());
    for id in order {
        let frames = &rows[&id];
        let n = frames.len();
        let mut positions = Array2::<f64>::zeros((n, dim));
        for (expected, (&frame, coords)) in frames.iter().enumerate() {
            if frame != expected as u64 {
                return Err(Error::invalid(format!(
                    "id {id:?}: gap at frame {expected} (next recorded frame is {frame})"
                )));
            }
            for (c, &v) in coords.iter().enumerate() {
                positions[[expected, c]] = v;
            }
        }
        paths.push(TrajPath { id, positions });
    }
    TrajectorySet::new(dt, dim, paths)
}

/// Drift-subtracted positions X̃ₙ = (Xₙ − X₀) − n·mean(ΔX). The per-row
/// multiplier is computed as n/N so that row N is (X_N − X₀) − 1.0·(X_N − X₀),
/// identically zero in floating point, which the estimator downstream relies
/// on.
pub fn drift_subtract(positions: &Array2<f64>) -> Array2<f64> {
    let (rows, k) = positions.dim();
    assert!(rows >= 2, "drift subtraction needs at least two rows");
    let n = (rows - 1) as f64;
    let mut out = Array2::<f64>::zeros((rows, k));
    for c in 0..k {
        let x0 = positions[[0, c]];
        let total = positions[[rows - 1, c]] - x0;
        for r in 0..rows {
            out[[r, c]] = (positions[[r, c]] - x0) - (r as f64 / n) * total;
        }
    }
    out
}

/// Nonparametric MSD over all N−n+1 overlapping windows:
/// value(n) = (1/(k(N−n+1)))·Σᵢ ‖X_{n+i} − X_i‖².
pub fn empirical_msd(positions: &Array2<f64>, max_lag: usize) -> Result<MsdCurve> {
    let (rows, k) = positions.dim();
    if rows < 2 {
        return Err(Error::invalid("path needs at least two rows"));
    }
    let n = rows - 1;
    if max_lag < 1 || max_lag > n {
        return Err(Error::invalid(format!(
            "max_lag must lie in 1..={n}, got {max_lag}"
        )));
    }
    let mut lags = Vec::with_capacity(max_lag);
    let mut values = Vec::with_capacity(max_lag);
    for lag in 1..=max_lag {
        let mut acc = 0.0;
        for i in 0..=(n - lag) {
            for c in 0..k {
                let d = positions[[i + lag, c]] - positions[[i, c]];
                acc += d * d;
            }
        }
        lags.push(lag);
        values.push(acc / (k * (n - lag + 1)) as f64);
    }
    MsdCurve::new(lags, values)
}

/// Arithmetic mean of per-path empirical MSDs, optionally after drift
/// subtraction. Paths shorter than a requested lag simply do not contribute
/// at that lag (the average is over the paths that support it); a warning is
/// logged when that happens.
pub fn ensemble_msd(set: &TrajectorySet, max_lag: usize, drift_correct: bool) -> Result<MsdCurve> {
    if set.is_empty() {
        return Err(Error::invalid("trajectory set is empty"));
    }
    let longest = set
        .paths()
        .iter()
        .map(|p| p.positions.nrows() - 1)
        .max()
        .unwrap();
    if max_lag < 1 || max_lag > longest {
        return Err(Error::invalid(format!(
            "max_lag must lie in 1..={longest}, got {max_lag}"
        )));
    }

    let per_path: Vec<MsdCurve> = set
        .paths()
        .par_iter()
        .map(|p| {
            let n = p.positions.nrows() - 1;
            let lag = max_lag.min(n);
            if drift_correct {
                empirical_msd(&drift_subtract(&p.positions), lag)
            } else {
                empirical_msd(&p.positions, lag)
            }
        })
        .collect::<Result<_>>()?;

    let mut sums = vec![0.0; max_lag];
    let mut counts = vec![0usize; max_lag];
    for curve in &per_path {
        for (i, v) in curve.values().iter().enumerate() {
            sums[i] += v;
            counts[i] += 1;
        }
        if curve.len() < max_lag {
            log::warn!(
                "a path supports only {} of {max_lag} requested lags; truncated from the average beyond that",
                curve.len()
            );
        }
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    MsdCurve::new((1..=max_lag).collect(), values)
}

/// MSD ratio ĝ(n) = drift-subtracted ensemble MSD / true MSD, clamped to 1
/// for lags beyond `clamp_lag`. Returned vector is indexed by lag−1 and has
/// the length of `true_msd`.
pub fn msd_ratio(
    set: &TrajectorySet,
    true_msd: &MsdCurve,
    clamp_lag: usize,
) -> Result<Vec<f64>> {
    let max_lag = *true_msd.lags().last().unwrap();
    if true_msd.lags() != (1..=max_lag).collect::<Vec<_>>().as_slice() {
        return Err(Error::invalid("true MSD must cover contiguous lags 1..=N"));
    }
    if clamp_lag > max_lag {
        return Err(Error::invalid(format!(
            "clamp lag {clamp_lag} exceeds available lag {max_lag}"
        )));
    }
    let ens = ensemble_msd(set, max_lag, true)?;
    let mut out = Vec::with_capacity(max_lag);
    for (i, (&e, &t)) in ens.values().iter().zip(true_msd.values()).enumerate() {
        let lag = i + 1;
        if lag > clamp_lag {
            out.push(1.0);
        } else {
            if t == 0.0 {
                return Err(Error::invalid(format!("true MSD vanishes at lag {lag}")));
            }
            out.push(e / t);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Cursor;

    fn set_from_str(csv: &str, dt: f64, dim: usize) -> Result<TrajectorySet> {
        parse_csv(Cursor::new(csv), PathBuf::from("<mem>"), dt, dim)
    }

    #[test]
    fn load_basic_two_dim() {
        let set = set_from_str(
            "id,frame,x,y\na,0,0.0,0.0\na,1,1.0,0.5\na,2,2.0,1.0\n",
            0.1,
            2,
        )
        .unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.paths()[0].positions.dim(), (3, 2));
        assert_eq!(set.paths()[0].positions[[2, 1]], 1.0);
    }

    #[test]
    fn frame_gap_is_reported() {
        let err = set_from_str("id,frame,x\na,0,0.0\na,2,1.0\n", 0.1, 1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gap at frame 1"), "{msg}");
        assert!(msg.contains("\"a\""), "{msg}");
    }

    #[test]
    fn duplicate_frame_is_reported() {
        let err = set_from_str("id,frame,x\na,0,0.0\na,0,1.0\n", 0.1, 1).unwrap_err();
        assert!(err.to_string().contains("duplicate frame 0"), "{err}");
    }

    #[test]
    fn non_numeric_coordinate_is_reported() {
        let err = set_from_str("id,frame,x\na,0,zero\n", 0.1, 1).unwrap_err();
        assert!(err.to_string().contains("non-numeric"), "{err}");
    }

    #[test]
    fn rows_in_any_order_are_sorted_by_frame() {
        let set = set_from_str("id,frame,x\na,1,1.0\na,0,0.0\na,2,2.0\n", 0.1, 1).unwrap();
        let p = &set.paths()[0].positions;
        assert_eq!((p[[0, 0]], p[[1, 0]], p[[2, 0]]), (0.0, 1.0, 2.0));
    }

    #[test]
    fn paper_layout_two_ids_1801_frames() {
        let mut csv = String::from("id,frame,x,y\n");
        for id in ["p1", "p2"] {
            for frame in 0..1801 {
                csv.push_str(&format!("{id},{frame},{},{}\n", frame as f64, 0.5 * frame as f64));
            }
        }
        let set = set_from_str(&csv, 1.0 / 60.0, 2).unwrap();
        assert_eq!(set.len(), 2);
        for p in set.paths() {
            assert_eq!(p.positions.nrows(), 1801); // N = 1800 increments
        }
    }

    #[test]
    fn drift_subtract_final_row_is_exact_zero() {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        use rand::SeedableRng;
        for _ in 0..100 {
            let n = rng.gen_range(2..50);
            let pos = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-10.0..10.0));
            let out = drift_subtract(&pos);
            for c in 0..2 {
                assert_eq!(out[[n - 1, c]], 0.0, "final row must be bit-exact zero");
            }
            assert_eq!(out[[0, 0]], 0.0);
        }
    }

    #[test]
    fn drift_subtract_removes_exact_linear_drift() {
        // Dyadic velocity and power-of-two N keep every step exact.
        let v = [0.5, -0.25];
        let pos = Array2::from_shape_fn((65, 2), |(r, c)| r as f64 * v[c]);
        let out = drift_subtract(&pos);
        for x in out.iter() {
            assert_eq!(*x, 0.0);
        }
    }

    #[test]
    fn drift_subtract_hand_example() {
        // X = [0, 1, 0]: mean increment 0, output unchanged.
        let pos = Array2::from_shape_vec((3, 1), vec![0.0, 1.0, 0.0]).unwrap();
        let out = drift_subtract(&pos);
        assert_eq!(out, pos);
    }

    #[test]
    fn empirical_msd_constant_path_is_zero() {
        let pos = Array2::from_elem((10, 2), 4.2);
        let msd = empirical_msd(&pos, 9).unwrap();
        assert!(msd.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empirical_msd_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let rows = rng.gen_range(3..40);
            let k = rng.gen_range(1..=3);
            let pos = Array2::from_shape_fn((rows, k), |_| rng.gen_range(-5.0..5.0));
            let n = rows - 1;
            let msd = empirical_msd(&pos, n).unwrap();
            for lag in 1..=n {
                let mut acc = 0.0;
                for i in 0..=(n - lag) {
                    let mut d2 = 0.0;
                    for c in 0..k {
                        let d = pos[[i + lag, c]] - pos[[i, c]];
                        d2 += d * d;
                    }
                    acc += d2;
                }
                let oracle = acc / (k * (n - lag + 1)) as f64;
                let got = msd.at_lag(lag).unwrap();
                assert!(
                    (got - oracle).abs() <= 1e-12 * oracle.abs().max(1e-300),
                    "lag {lag}: {got} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn empirical_msd_one_dim_hand_case() {
        // X = [0, 1, 2]: lag 1 -> (1+1)/3... with N = 2, k = 1:
        // (1/(1*(2-1+1))) * (1² + 1²) = 1.0; lag 2 -> 4/1... (1/(1*1))*4 = 4.
        let pos = Array2::from_shape_vec((3, 1), vec![0.0, 1.0, 2.0]).unwrap();
        let msd = empirical_msd(&pos, 2).unwrap();
        assert_abs_diff_eq!(msd.at_lag(1).unwrap(), 1.0);
        assert_abs_diff_eq!(msd.at_lag(2).unwrap(), 4.0);
    }

    #[test]
    fn empirical_msd_invariant_under_translation_and_axis_permutation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pos = Array2::from_shape_fn((30, 2), |_| rng.gen_range(-1.0..1.0));
        let base = empirical_msd(&pos, 20).unwrap();

        let mut shifted = pos.clone();
        for mut row in shifted.rows_mut() {
            row[0] += 7.5;
            row[1] -= 3.25;
        }
        let trans = empirical_msd(&shifted, 20).unwrap();

        let mut swapped = Array2::zeros((30, 2));
        for r in 0..30 {
            swapped[[r, 0]] = pos[[r, 1]];
            swapped[[r, 1]] = pos[[r, 0]];
        }
        let perm = empirical_msd(&swapped, 20).unwrap();

        for i in 0..base.len() {
            assert_abs_diff_eq!(base.values()[i], trans.values()[i], epsilon = 1e-12);
            assert_abs_diff_eq!(base.values()[i], perm.values()[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn ensemble_of_identical_paths_equals_single() {
        let pos = Array2::from_shape_fn((20, 1), |(r, _)| (r as f64).sqrt());
        let set = TrajectorySet::new(
            1.0,
            1,
            vec![
                TrajPath { id: "a".into(), positions: pos.clone() },
                TrajPath { id: "b".into(), positions: pos.clone() },
            ],
        )
        .unwrap();
        let single = empirical_msd(&pos, 10).unwrap();
        let ens = ensemble_msd(&set, 10, false).unwrap();
        for i in 0..10 {
            assert_abs_diff_eq!(ens.values()[i], single.values()[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn ensemble_short_paths_average_over_supporting_paths() {
        let long = Array2::from_shape_fn((11, 1), |(r, _)| r as f64);
        let short = Array2::from_shape_fn((4, 1), |(r, _)| 2.0 * r as f64);
        let set = TrajectorySet::new(
            1.0,
            1,
            vec![
                TrajPath { id: "long".into(), positions: long.clone() },
                TrajPath { id: "short".into(), positions: short.clone() },
            ],
        )
        .unwrap();
        let ens = ensemble_msd(&set, 8, false).unwrap();
        let ml = empirical_msd(&long, 8).unwrap();
        let ms = empirical_msd(&short, 3).unwrap();
        // Lags 1..3 average both paths; lags 4..8 only the long one.
        for lag in 1..=3 {
            let expect = 0.5 * (ml.at_lag(lag).unwrap() + ms.at_lag(lag).unwrap());
            assert_abs_diff_eq!(ens.at_lag(lag).unwrap(), expect, epsilon = 1e-14);
        }
        for lag in 4..=8 {
            assert_abs_diff_eq!(
                ens.at_lag(lag).unwrap(),
                ml.at_lag(lag).unwrap(),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn msd_ratio_clamps_beyond_n0() {
        let pos = Array2::from_shape_fn((30, 1), |(r, _)| r as f64);
        let set = TrajectorySet::new(
            1.0,
            1,
            vec![TrajPath { id: "a".into(), positions: pos }],
        )
        .unwrap();
        let truth = MsdCurve::new((1..=20).collect(), (1..=20).map(|n| n as f64).collect()).unwrap();
        let g = msd_ratio(&set, &truth, 10).unwrap();
        assert_eq!(g.len(), 20);
        for &v in &g[10..] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn msd_ratio_zero_truth_is_error() {
        let pos = Array2::from_shape_fn((10, 1), |(r, _)| r as f64);
        let set = TrajectorySet::new(
            1.0,
            1,
            vec![TrajPath { id: "a".into(), positions: pos }],
        )
        .unwrap();
        let truth = MsdCurve::new(vec![1, 2], vec![0.0, 1.0]).unwrap();
        assert!(msd_ratio(&set, &truth, 2).is_err());
    }

    #[test]
    fn default_ls_lag_is_thirty_percent() {
        assert_eq!(default_ls_max_lag(1800), 540);
        assert_eq!(default_ls_max_lag(10), 3);
    }
}
