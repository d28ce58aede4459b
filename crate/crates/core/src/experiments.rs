//! Monte Carlo experiments: strong averaging error across ε, moment bounds,
//! time-increment regularity and the auxiliary-process gap.
//!
//! Every Monte Carlo path draws its noise from streams keyed by
//! `(master seed, path index)`, so the same path index sees the same noise at
//! every ε and for every thread count. Results are reduced in path order.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Result, SimError};
use crate::integrators::{
    simulate_auxiliary, simulate_averaged, simulate_slow_fast, whole_steps, FieldFn, PathSeed, RecordOptions,
    SimulationConfig, SystemCoefficients, SystemNoise, Trajectory,
};
use crate::registry;
use crate::spectral::SpectralField;

/// Below this many paths the standard errors are not trusted.
pub const MIN_RELIABLE_SAMPLES: usize = 30;
/// Largest tolerated fraction of blown-up paths.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.01;

/// Everything an experiment needs besides the run config.
#[derive(Clone)]
pub struct ExperimentSetup {
    pub name: String,
    pub coeffs: SystemCoefficients,
    pub noise: SystemNoise,
    pub x0: SpectralField,
    pub y0: SpectralField,
    /// Averaged drift used for `X̄`.
    pub fbar: FieldFn,
}

impl ExperimentSetup {
    pub fn from_example(name: &str, n_modes: usize) -> Result<Self> {
        let ex = registry::example(name, n_modes)?;
        let fbar = ex
            .coeffs
            .analytic_fbar
            .clone()
            .ok_or_else(|| SimError::config(format!("example {name} has no closed-form averaged drift")))?;
        Ok(ExperimentSetup {
            name: ex.name.to_string(),
            coeffs: ex.coeffs,
            noise: ex.noise,
            x0: ex.x0,
            y0: ex.y0,
            fbar,
        })
    }

    /// Replace `f₁` by the y-independent `f̄₁`, so the slow equation and the
    /// averaged equation coincide.
    pub fn with_averaged_slow_drift(mut self) -> Self {
        let fbar = self.fbar.clone();
        self.coeffs.f1 = Some(std::sync::Arc::new(move |x: &SpectralField, _y: &SpectralField| {
            fbar(x)
        }));
        self.name = format!("{}+averaged_f1", self.name);
        self
    }
}

/// `(max over stored steps of ‖a − b‖)^p`.
pub fn sup_error_path(a: &Trajectory, b: &Trajectory, p: f64) -> Result<f64> {
    if a.len() != b.len() || a.n_modes() != b.n_modes() || (a.dt() - b.dt()).abs() > 1e-15 {
        return Err(SimError::config("trajectories do not share a time grid and basis"));
    }
    if !(p >= 2.0) {
        return Err(SimError::config(format!("error exponent must be >= 2, got {p}")));
    }
    let sup = a
        .states()
        .zip(b.states())
        .map(|(u, v)| u.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .fold(0.0f64, f64::max)
        .sqrt();
    Ok(sup.powf(p))
}

/// Ordinary least-squares slope of `y` on `x`; `None` for fewer than two
/// distinct abscissae.
pub fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Slope of `ln y` on `ln x`; `None` when any value is not positive.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.ln())).collect();
    least_squares_slope(&pts)
}

/// Hex SHA-256 (first 16 digits) of the JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configs serialize to JSON");
    let digest = Sha256::digest(&bytes);
    hex::encode(digest)[..16].to_string()
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Per-path outcomes of a Monte Carlo batch, in path order.
struct PathBatch<T> {
    results: Vec<T>,
    excluded: usize,
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| SimError::config(format!("cannot start worker pool: {e}")))
}

/// Run `work` for paths `0..m` on `pool`. Blown-up paths are dropped and
/// counted; any other error aborts the batch.
fn run_paths<T: Send>(
    pool: &rayon::ThreadPool,
    m: usize,
    epsilon: f64,
    work: impl Fn(u64) -> Result<T> + Sync,
) -> Result<PathBatch<T>> {
    let outcomes: Vec<Result<T>> = pool.install(|| (0..m as u64).into_par_iter().map(&work).collect());
    let mut results = Vec::with_capacity(m);
    let mut excluded = 0;
    for outcome in outcomes {
        match outcome {
            Ok(v) => results.push(v),
            Err(SimError::BlowUp { time, seed, path }) => {
                log::warn!(
                    "path {} blew up at t = {time:.6} (seed {})",
                    path.map_or("?".into(), |p| p.to_string()),
                    seed.map_or("?".into(), |s| s.to_string())
                );
                excluded += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if excluded as f64 > MAX_EXCLUDED_FRACTION * m as f64 {
        return Err(SimError::TooManyExclusions {
            epsilon,
            excluded,
            total: m,
        });
    }
    Ok(PathBatch { results, excluded })
}

fn small_sample_warning(m: usize) -> Option<String> {
    (m < MIN_RELIABLE_SAMPLES)
        .then(|| format!("only {m} Monte Carlo paths; standard errors are unreliable below {MIN_RELIABLE_SAMPLES}"))
}

/// One `(ε, p)` entry of an [`ErrorReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorCell {
    pub epsilon: f64,
    pub p: f64,
    /// Mean of `sup_t ‖X^ε_t − X̄_t‖^p` over the paths.
    pub estimate: f64,
    pub stderr: f64,
    /// `estimate^{2/p}`.
    pub root_estimate: f64,
    pub m_effective: usize,
    pub exclusions: usize,
    pub runtime_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorReport {
    pub cells: Vec<ErrorCell>,
    pub mc_samples: usize,
    pub seed: u64,
    pub config_hash: String,
    pub warnings: Vec<String>,
}

pub const ERROR_CSV_HEADER: &str = "epsilon,p,estimate,stderr,M_effective,exclusions,runtime_s,config_hash";

impl ErrorReport {
    pub fn cell(&self, epsilon: f64, p: f64) -> Option<&ErrorCell> {
        self.cells.iter().find(|c| c.epsilon == epsilon && c.p == p)
    }

    /// Estimates for exponent `p`, ordered by decreasing ε.
    pub fn series(&self, p: f64) -> Vec<&ErrorCell> {
        let mut v: Vec<&ErrorCell> = self.cells.iter().filter(|c| c.p == p).collect();
        v.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
        v
    }

    /// Whether the estimate for `p` strictly decreases as ε shrinks.
    pub fn strictly_decreasing(&self, p: f64) -> bool {
        self.series(p).windows(2).all(|w| w[1].estimate < w[0].estimate)
    }

    pub fn exponents(&self) -> Vec<f64> {
        let mut ps: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !ps.contains(&c.p) {
                ps.push(c.p);
            }
        }
        ps
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{ERROR_CSV_HEADER}")?;
        for c in &self.cells {
            writeln!(
                w,
                "{:e},{},{:.12e},{:.6e},{},{},{:.3},{}",
                c.epsilon, c.p, c.estimate, c.stderr, c.m_effective, c.exclusions, c.runtime_s, self.config_hash
            )?;
        }
        Ok(())
    }

    /// Log-x line plot of the estimate against ε, one line per `p`, with
    /// ±1 standard-error bars.
    pub fn write_svg<W: Write>(&self, mut w: W) -> io::Result<()> {
        const W: f64 = 640.0;
        const H: f64 = 420.0;
        const M: (f64, f64, f64, f64) = (70.0, 20.0, 30.0, 50.0); // left, right, top, bottom
        const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
        let lx: Vec<f64> = self.cells.iter().map(|c| c.epsilon.log10()).collect();
        let (xmin, xmax) = bounds(&lx, 0.5);
        let ys: Vec<f64> = self
            .cells
            .iter()
            .flat_map(|c| [c.estimate - c.stderr, c.estimate + c.stderr])
            .filter(|v| v.is_finite())
            .collect();
        let (_, ymax) = bounds(&ys, 0.0);
        let (ymin, ymax) = (0.0, if ymax > 0.0 { ymax * 1.1 } else { 1.0 });
        let px = |x: f64| M.0 + (x - xmin) / (xmax - xmin) * (W - M.0 - M.1);
        let py = |y: f64| H - M.3 - (y - ymin) / (ymax - ymin) * (H - M.2 - M.3);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            s,
            "<!-- config_hash={} seed={} M={} -->",
            self.config_hash, self.seed, self.mc_samples
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<path d="M{} {} H{} M{} {} V{}" stroke="black" fill="none"/>"#,
            M.0,
            H - M.3,
            W - M.1,
            M.0,
            H - M.3,
            M.2
        );
        for d in (xmin.ceil() as i32)..=(xmax.floor() as i32) {
            let x = px(d as f64);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="black"/><text x="{x:.1}" y="{}" text-anchor="middle">1e{d}</text>"#,
                H - M.3,
                H - M.3 + 5.0,
                H - M.3 + 18.0
            );
        }
        for i in 0..=4 {
            let v = ymin + (ymax - ymin) * i as f64 / 4.0;
            let y = py(v);
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end">{v:.3e}</text>"#,
                M.0 - 5.0,
                M.0,
                M.0 - 8.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">epsilon</text>"#,
            (M.0 + W - M.1) / 2.0,
            H - 8.0
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">E sup |X - Xbar|^p</text>"#,
            H / 2.0,
            H / 2.0
        );
        for (i, p) in self.exponents().into_iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let series = self.series(p);
            let pts: Vec<String> = series
                .iter()
                .map(|c| format!("{:.1},{:.1}", px(c.epsilon.log10()), py(c.estimate)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                pts.join(" ")
            );
            for c in series {
                let x = px(c.epsilon.log10());
                let _ = writeln!(
                    s,
                    r#"<circle cx="{x:.1}" cy="{:.1}" r="3" fill="{color}"/><line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{color}"/>"#,
                    py(c.estimate),
                    py((c.estimate - c.stderr).max(ymin)),
                    py(c.estimate + c.stderr)
                );
            }
            let ly = M.2 + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">p = {p}</text>"#,
                W - M.1 - 90.0,
                W - M.1 - 70.0,
                W - M.1 - 64.0,
                ly + 4.0
            );
        }
        s.push_str("</svg>\n");
        w.write_all(s.as_bytes())
    }
}

fn bounds(v: &[f64], pad: f64) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo - pad, hi + pad)
}

#[derive(Serialize)]
struct SweepIdentity<'a> {
    example: &'a str,
    config: &'a SimulationConfig,
    epsilons: &'a [f64],
}

/// Hash identifying a sweep: the example, the base config and the ε list.
pub fn sweep_hash(setup: &ExperimentSetup, base: &SimulationConfig, epsilons: &[f64]) -> String {
    config_hash(&SweepIdentity {
        example: &setup.name,
        config: base,
        epsilons,
    })
}

/// Config for one ε of a sweep: δ is re-derived from ε unless `delta`
/// overrides it.
pub fn sweep_config(base: &SimulationConfig, epsilon: f64, delta: Option<f64>) -> SimulationConfig {
    let mut cfg = base.with_epsilon(epsilon);
    if let Some(d) = delta {
        cfg.delta = d;
    }
    cfg
}

/// Strong averaging error `E sup_t ‖X^ε_t − X̄_t‖^p` for each ε and each
/// `p ∈ base.p_exponents`, from `base.mc_samples` coupled pairs per ε.
pub fn run_convergence_sweep(
    setup: &ExperimentSetup,
    base: &SimulationConfig,
    epsilons: &[f64],
    delta: Option<f64>,
    threads: usize,
) -> Result<ErrorReport> {
    if epsilons.is_empty() {
        return Err(SimError::config("empty epsilon list"));
    }
    let basis = base.basis()?;
    let pool = thread_pool(threads)?;
    let m = base.mc_samples;
    let mut warnings: Vec<String> = small_sample_warning(m).into_iter().collect();
    let mut cells = Vec::new();
    for &eps in epsilons {
        let cfg = sweep_config(base, eps, delta);
        cfg.validate_for(&setup.coeffs)?;
        if let Some(w) = cfg.cfl_warning(&setup.coeffs) {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        let start = Instant::now();
        let batch = run_paths(&pool, m, eps, |path| {
            let seed = PathSeed {
                master: base.seed,
                path,
            };
            let run = simulate_slow_fast(
                &setup.x0,
                &setup.y0,
                &setup.coeffs,
                &setup.noise,
                &cfg,
                &basis,
                seed,
                RecordOptions::default(),
            )?;
            let avg = simulate_averaged(
                &setup.x0,
                &*setup.fbar,
                &setup.coeffs,
                &setup.noise.slow,
                &cfg,
                &basis,
                &run.slow_noise,
            )
            .map_err(|e| e.with_origin(seed.master, seed.path))?;
            cfg.p_exponents
                .iter()
                .map(|&p| sup_error_path(&run.x, &avg, p))
                .collect::<Result<Vec<f64>>>()
        })?;
        let runtime_s = start.elapsed().as_secs_f64();
        for (j, &p) in cfg.p_exponents.iter().enumerate() {
            let values: Vec<f64> = batch.results.iter().map(|r| r[j]).collect();
            let (estimate, stderr) = mean_and_stderr(&values);
            cells.push(ErrorCell {
                epsilon: eps,
                p,
                estimate,
                stderr,
                root_estimate: estimate.powf(2.0 / p),
                m_effective: values.len(),
                exclusions: batch.excluded,
                runtime_s,
            });
        }
    }
    Ok(ErrorReport {
        cells,
        mc_samples: m,
        seed: base.seed,
        config_hash: sweep_hash(setup, base, epsilons),
        warnings,
    })
}

/// Moments at one ε.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentRow {
    pub epsilon: f64,
    pub q: f64,
    /// `Ê sup_t ‖X^ε_t‖^{2q}`
    pub sup_slow: f64,
    pub sup_slow_stderr: f64,
    /// `sup_t Ê ‖Y^ε_t‖^{2q}`
    pub sup_mean_fast: f64,
    pub m_effective: usize,
    pub exclusions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
    /// `(ε, Ê sup_t |X^ε_t|₁², stderr)`
    pub h1_rows: Vec<(f64, f64, f64)>,
    /// Quantities whose largest and smallest values across ε differ by more
    /// than a factor 2.
    pub flags: Vec<String>,
    pub config_hash: String,
    pub warnings: Vec<String>,
}

/// Largest over smallest; 1 when all values are zero.
pub fn spread(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    if hi == 0.0 && lo == 0.0 {
        1.0
    } else {
        hi / lo
    }
}

impl MomentReport {
    pub fn stable(&self) -> bool {
        self.flags.is_empty()
    }

    /// `max/min` of `Ê sup_t ‖X^ε_t‖^{2q}` across ε.
    pub fn slow_spread(&self, q: f64) -> f64 {
        spread(
            &self
                .rows
                .iter()
                .filter(|r| r.q == q)
                .map(|r| r.sup_slow)
                .collect::<Vec<_>>(),
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# config_hash={}", self.config_hash)?;
        writeln!(
            w,
            "epsilon,q,sup_slow,sup_slow_stderr,sup_mean_fast,M_effective,exclusions"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{:e},{},{:.12e},{:.6e},{:.12e},{},{}",
                r.epsilon, r.q, r.sup_slow, r.sup_slow_stderr, r.sup_mean_fast, r.m_effective, r.exclusions
            )?;
        }
        writeln!(w, "epsilon,sup_h1_sq,stderr")?;
        for (e, v, s) in &self.h1_rows {
            writeln!(w, "{e:e},{v:.12e},{s:.6e}")?;
        }
        Ok(())
    }
}

struct MomentPath {
    sup_slow: Vec<f64>,
    fast_by_step: Vec<Vec<f64>>,
    sup_h1: f64,
}

/// Moment bounds across ε: `Ê sup_t ‖X^ε‖^{2q}`, `sup_t Ê ‖Y^ε‖^{2q}` and
/// `Ê sup_t |X^ε|₁²`, flagging any that vary by more than a factor 2.
pub fn run_moment_diagnostics(
    setup: &ExperimentSetup,
    base: &SimulationConfig,
    qs: &[f64],
    epsilons: &[f64],
    threads: usize,
) -> Result<MomentReport> {
    if qs.iter().any(|q| !(*q >= 1.0)) {
        return Err(SimError::config("moment orders must be >= 1"));
    }
    let basis = base.basis()?;
    let pool = thread_pool(threads)?;
    let m = base.mc_samples;
    let mut rows = Vec::new();
    let mut h1_rows = Vec::new();
    for &eps in epsilons {
        let cfg = base.with_epsilon(eps);
        cfg.validate_for(&setup.coeffs)?;
        let batch = run_paths(&pool, m, eps, |path| {
            let run = simulate_slow_fast(
                &setup.x0,
                &setup.y0,
                &setup.coeffs,
                &setup.noise,
                &cfg,
                &basis,
                PathSeed {
                    master: base.seed,
                    path,
                },
                RecordOptions { fast_trajectory: true },
            )?;
            let y = run.y.as_ref().expect("fast trajectory recorded");
            let x_norms: Vec<f64> = run.x.states().map(norm_sq).collect();
            let y_norms: Vec<f64> = y.states().map(norm_sq).collect();
            let sup_x = x_norms.iter().copied().fold(0.0, f64::max);
            let sup_h1 = (0..run.x.len())
                .map(|i| basis.h_alpha_norm(&run.x.field(i), 1.0).powi(2))
                .fold(0.0, f64::max);
            Ok(MomentPath {
                sup_slow: qs.iter().map(|q| sup_x.powf(*q)).collect(),
                fast_by_step: qs
                    .iter()
                    .map(|q| y_norms.iter().map(|v| v.powf(*q)).collect())
                    .collect(),
                sup_h1,
            })
        })?;
        let me = batch.results.len();
        for (j, &q) in qs.iter().enumerate() {
            let (sup_slow, sup_slow_stderr) =
                mean_and_stderr(&batch.results.iter().map(|r| r.sup_slow[j]).collect::<Vec<_>>());
            let steps = cfg.steps() + 1;
            let mut sums = vec![0.0; steps];
            for r in &batch.results {
                for (s, v) in sums.iter_mut().zip(&r.fast_by_step[j]) {
                    *s += v;
                }
            }
            let sup_mean_fast = sums.iter().map(|s| s / me as f64).fold(0.0, f64::max);
            rows.push(MomentRow {
                epsilon: eps,
                q,
                sup_slow,
                sup_slow_stderr,
                sup_mean_fast,
                m_effective: me,
                exclusions: batch.excluded,
            });
        }
        let (h1, h1_se) = mean_and_stderr(&batch.results.iter().map(|r| r.sup_h1).collect::<Vec<_>>());
        h1_rows.push((eps, h1, h1_se));
    }
    let mut flags = Vec::new();
    if epsilons.len() > 1 {
        for &q in qs {
            let sel: Vec<&MomentRow> = rows.iter().filter(|r| r.q == q).collect();
            let slow = spread(&sel.iter().map(|r| r.sup_slow).collect::<Vec<_>>());
            if !(slow < 2.0) {
                flags.push(format!(
                    "E sup |X|^{} varies by a factor {slow:.3} across epsilon",
                    2.0 * q
                ));
            }
            let fast = spread(&sel.iter().map(|r| r.sup_mean_fast).collect::<Vec<_>>());
            if !(fast < 2.0) {
                flags.push(format!(
                    "sup E |Y|^{} varies by a factor {fast:.3} across epsilon",
                    2.0 * q
                ));
            }
        }
        let h1 = spread(&h1_rows.iter().map(|r| r.1).collect::<Vec<_>>());
        if !(h1 < 2.0) {
            flags.push(format!("E sup |X|_1^2 varies by a factor {h1:.3} across epsilon"));
        }
    }
    Ok(MomentReport {
        rows,
        h1_rows,
        flags,
        config_hash: config_hash(&(&setup.name, base, qs, epsilons)),
        warnings: small_sample_warning(m).into_iter().collect(),
    })
}

fn norm_sq(c: &[f64]) -> f64 {
    c.iter().map(|v| v * v).sum()
}

/// Monte Carlo means against a scale parameter, with their log-log slope.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeReport {
    pub label: String,
    pub scales: Vec<f64>,
    pub means: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub slope: Option<f64>,
    pub m_effective: usize,
    pub exclusions: usize,
    pub config_hash: String,
    pub warnings: Vec<String>,
}

impl SlopeReport {
    /// Means strictly decrease as the scale decreases.
    pub fn strictly_decreasing(&self) -> bool {
        let mut pairs: Vec<(f64, f64)> = self.scales.iter().copied().zip(self.means.iter().copied()).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        pairs.windows(2).all(|w| w[1].1 < w[0].1)
    }

    pub fn slope_at_least(&self, threshold: f64) -> bool {
        self.slope.is_some_and(|s| s >= threshold)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# config_hash={} label={}", self.config_hash, self.label)?;
        writeln!(
            w,
            "# slope={}",
            self.slope.map_or("nan".to_string(), |s| format!("{s:.6}"))
        )?;
        writeln!(w, "scale,mean,stderr,M_effective,exclusions")?;
        for ((s, m), e) in self.scales.iter().zip(&self.means).zip(&self.stderrs) {
            writeln!(w, "{s:e},{m:.12e},{e:.6e},{},{}", self.m_effective, self.exclusions)?;
        }
        Ok(())
    }
}

fn slope_report(
    label: &str,
    scales: &[f64],
    per_path: &[Vec<f64>],
    excluded: usize,
    hash: String,
    m: usize,
) -> SlopeReport {
    let mut means = Vec::with_capacity(scales.len());
    let mut stderrs = Vec::with_capacity(scales.len());
    for j in 0..scales.len() {
        let (mean, se) = mean_and_stderr(&per_path.iter().map(|r| r[j]).collect::<Vec<_>>());
        means.push(mean);
        stderrs.push(se);
    }
    SlopeReport {
        label: label.to_string(),
        slope: log_log_slope(scales, &means),
        scales: scales.to_vec(),
        means,
        stderrs,
        m_effective: per_path.len(),
        exclusions: excluded,
        config_hash: hash,
        warnings: small_sample_warning(m).into_iter().collect(),
    }
}

/// `Ê ‖X^ε_{t+h} − X^ε_t‖²` at a fixed time `t` for each `h`.
pub fn run_increment_diagnostic(
    setup: &ExperimentSetup,
    cfg: &SimulationConfig,
    t: f64,
    hs: &[f64],
    threads: usize,
) -> Result<SlopeReport> {
    cfg.validate_for(&setup.coeffs)?;
    let t_step = whole_steps(t, cfg.dt).ok_or_else(|| SimError::config("t is not on the step grid"))?;
    let h_steps = hs
        .iter()
        .map(|h| whole_steps(*h, cfg.dt).ok_or_else(|| SimError::config(format!("h = {h} is not a multiple of dt"))))
        .collect::<Result<Vec<usize>>>()?;
    if h_steps.iter().any(|h| t_step + h > cfg.steps()) {
        return Err(SimError::config("t + h exceeds the horizon"));
    }
    let basis = cfg.basis()?;
    let pool = thread_pool(threads)?;
    let batch = run_paths(&pool, cfg.mc_samples, cfg.epsilon, |path| {
        let run = simulate_slow_fast(
            &setup.x0,
            &setup.y0,
            &setup.coeffs,
            &setup.noise,
            cfg,
            &basis,
            PathSeed { master: cfg.seed, path },
            RecordOptions::default(),
        )?;
        let base = run.x.state(t_step);
        Ok(h_steps
            .iter()
            .map(|h| {
                run.x
                    .state(t_step + h)
                    .iter()
                    .zip(base)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>())
    })?;
    let hash = config_hash(&(&setup.name, cfg, t, hs));
    Ok(slope_report(
        "increment",
        hs,
        &batch.results,
        batch.excluded,
        hash,
        cfg.mc_samples,
    ))
}

/// `Ê ‖Y^ε_T − Ŷ^ε_T‖²` for each breakpoint spacing δ, with `Ŷ` driven by the
/// same fast noise as `Y`.
pub fn run_auxiliary_gap(
    setup: &ExperimentSetup,
    cfg: &SimulationConfig,
    deltas: &[f64],
    threads: usize,
) -> Result<SlopeReport> {
    let configs: Vec<SimulationConfig> = deltas
        .iter()
        .map(|d| {
            let mut c = cfg.clone();
            c.delta = *d;
            c.validate_for(&setup.coeffs)?;
            if whole_steps(c.horizon, c.delta).is_none() {
                return Err(SimError::config(format!(
                    "delta {d} does not divide the horizon {}",
                    c.horizon
                )));
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    cfg.validate_for(&setup.coeffs)?;
    let basis = cfg.basis()?;
    let pool = thread_pool(threads)?;
    let batch = run_paths(&pool, cfg.mc_samples, cfg.epsilon, |path| {
        let seed = PathSeed { master: cfg.seed, path };
        let run = simulate_slow_fast(
            &setup.x0,
            &setup.y0,
            &setup.coeffs,
            &setup.noise,
            cfg,
            &basis,
            seed,
            RecordOptions { fast_trajectory: true },
        )?;
        let y = run.y.as_ref().expect("fast trajectory recorded");
        configs
            .iter()
            .map(|c| {
                let aux = simulate_auxiliary(&run.x, y, &setup.coeffs, &setup.noise.fast, c, &basis, &run.fast_noise)
                    .map_err(|e| e.with_origin(seed.master, seed.path))?;
                Ok(aux.last().distance(&run.y_final).powi(2))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let hash = config_hash(&(&setup.name, cfg, deltas));
    Ok(slope_report(
        "auxiliary_gap",
        deltas,
        &batch.results,
        batch.excluded,
        hash,
        cfg.mc_samples,
    ))
}
