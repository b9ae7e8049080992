//! Command execution. Every command writes its CSV files into the output directory and
//! returns a [`RunReport`]; `pass` is false when any check or certificate fails.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subheat_core::estimates::{refinement_study, EstimateId, EstimateParams, SpectralBackend};
use subheat_core::fracderiv::{frac_time_derivative, FracDerivSpec, SpectralPath};
use subheat_core::grid::{Grid, GridFunction};
use subheat_core::potential::AuxFunction;
use subheat_core::spaces::{
    area_function, duality_pairing_check, equivalence_experiment, equivalence_suite, g_constant, g_function, lp_norm,
    norm_functionals, random_atom, reproducing_check, EquivalenceSetup, LogTimeGrid,
};
use subheat_core::spectral::{
    assemble_with, eigendecompose, multiplier_kernel, KernelSlice, LaplacianScheme, Multiplier, SpectralDecomposition,
};
use subheat_core::subordinator::{density_selftest, laplace_by_quadrature, subordinate_kernel, SubordinationQuad, SubordinatorDensity};
use thiserror::Error;

use crate::config::{Command, ConfigError, RunConfig};
use crate::csv::{CsvTable, Sci};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("error in {op}: {source}")]
    Numerics { op: String, source: subheat_core::Error },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

trait Op<T> {
    fn op(self, name: impl Display) -> Result<T, RunError>;
}

impl<T> Op<T> for subheat_core::Result<T> {
    fn op(self, name: impl Display) -> Result<T, RunError> {
        self.map_err(|source| RunError::Numerics { op: name.to_string(), source })
    }
}

/// One named scalar check with its acceptance bound.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub pass: bool,
}

impl CheckRow {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound: format!("<={bound:e}"), pass: value <= bound }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound: format!(">={bound:e}"), pass: value >= bound }
    }

    pub fn finite(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), value, bound: "finite".into(), pass: value.is_finite() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: Command,
    pub files: Vec<PathBuf>,
    pub checks: Vec<CheckRow>,
    pub pass: bool,
}

impl RunReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    files: Vec<PathBuf>,
    checks: Vec<CheckRow>,
}

impl Ctx<'_> {
    fn write(&mut self, table: &CsvTable, name: &str) -> Result<(), RunError> {
        let path = table
            .write(&self.dir, name, &self.cfg.summary())
            .map_err(|source| RunError::Io { path: self.dir.join(name), source })?;
        self.files.push(path);
        Ok(())
    }

    fn write_checks(&mut self, name: &str) -> Result<(), RunError> {
        let mut t = CsvTable::new(&["check", "value", "bound", "pass"]);
        for c in &self.checks {
            t.row(&[&c.name, &Sci(c.value), &c.bound, &c.pass]);
        }
        self.write(&t, name)
    }
}

/// Execute the configured command, writing outputs under `cfg.out` (default `.`).
pub fn run(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let command = cfg.command.ok_or_else(|| ConfigError::Value { key: "command".into(), msg: "no command given".into() })?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    run_in(cfg, command, &dir)
}

fn run_in(cfg: &RunConfig, command: Command, dir: &Path) -> Result<RunReport, RunError> {
    let mut ctx = Ctx { cfg, dir: dir.to_path_buf(), files: Vec::new(), checks: Vec::new() };
    match command {
        Command::Kernels => kernels(&mut ctx)?,
        Command::Verify => verify(&mut ctx)?,
        Command::Spaces => spaces(&mut ctx)?,
        Command::Equiv => equiv(&mut ctx)?,
        Command::Selftest => selftest(&mut ctx)?,
    }
    let pass = ctx.checks.iter().all(|c| c.pass);
    Ok(RunReport { command, files: ctx.files, checks: ctx.checks, pass })
}

fn decompose(cfg: &RunConfig, grid: &Grid) -> Result<SpectralDecomposition, RunError> {
    eigendecompose(&assemble_with(grid, &cfg.potential, cfg.grid.scheme)).op("eigendecompose")
}

fn aux_function(cfg: &RunConfig, grid: &Grid) -> Result<AuxFunction, RunError> {
    AuxFunction::new(&cfg.potential, grid, 1e-10).op("auxiliary function")
}

fn kernel_table(k: &KernelSlice) -> CsvTable {
    let mut t = CsvTable::new(&["x_index", "y_index", "value"]);
    let m = k.values.nrows();
    for i in 0..m {
        for j in 0..m {
            t.row(&[&i, &j, &Sci(k.get(i, j))]);
        }
    }
    t
}

fn axiom_checks(label: &str, k: &KernelSlice) -> Vec<CheckRow> {
    let mass = k.row_integrals().into_iter().fold(f64::NEG_INFINITY, f64::max);
    vec![
        CheckRow::at_least(format!("{label}.min_entry"), k.values.min(), -1e-10),
        CheckRow::at_most(format!("{label}.symmetry_defect"), k.symmetry_defect(), 1e-8),
        CheckRow::at_most(format!("{label}.max_row_mass"), mass, 1.0 + 1e-8),
    ]
}

fn centre(grid: &Grid) -> usize {
    let mid = grid.points_per_axis() / 2;
    grid.flat_index(&[mid; 3][..grid.dim()])
}

fn kernels(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let grid = cfg.grid.build();
    let sd = decompose(cfg, &grid)?;
    let alpha = cfg.fractional.alpha;
    let y = centre(&grid);
    for &t in &cfg.times {
        let heat = multiplier_kernel(&sd, &Multiplier::Heat { t }).op(format_args!("heat kernel t={t}"))?;
        let frac = multiplier_kernel(&sd, &Multiplier::FracHeat { alpha, t }).op(format_args!("fractional kernel t={t}"))?;
        ctx.write(&kernel_table(&heat), &format!("heat_t{t}.csv"))?;
        ctx.write(&kernel_table(&frac), &format!("frac_t{t}.csv"))?;

        let mut profile = CsvTable::new(&["x_index", "distance", "heat", "frac"]);
        for x in 0..grid.len() {
            profile.row(&[&x, &Sci(grid.point_distance(x, y)), &Sci(heat.get(x, y)), &Sci(frac.get(x, y))]);
        }
        ctx.write(&profile, &format!("profile_t{t}.csv"))?;

        ctx.checks.extend(axiom_checks(&format!("heat_t{t}"), &heat));
        let mut frac_checks = axiom_checks(&format!("frac_t{t}"), &frac);
        if cfg.grid.scheme == LaplacianScheme::Spectral {
            // truncated multiplier rings at small t; positivity is only guaranteed for the stencil
            let rel = frac.values.min() / frac.max_abs();
            frac_checks[0] = CheckRow { name: format!("frac_t{t}.relative_min_entry"), value: rel, bound: "info".into(), pass: true };
        }
        ctx.checks.extend(frac_checks);
        let double = multiplier_kernel(&sd, &Multiplier::Heat { t: 2.0 * t }).op("heat kernel")?;
        ctx.checks.push(CheckRow::at_most(
            format!("heat_t{t}.chapman_kolmogorov"),
            double.max_abs_diff(&heat.compose(&heat)),
            1e-6,
        ));
    }
    ctx.write_checks("kernel_checks.csv")
}

fn estimate_params(cfg: &RunConfig, n_penalty: f64) -> EstimateParams {
    let f = &cfg.fractional;
    EstimateParams {
        alpha: f.alpha,
        beta: f.beta,
        m: f.m,
        n_penalty,
        delta_prime: f.delta_prime,
        q: cfg.q,
        ..Default::default()
    }
}

fn verify(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let fine = cfg.grid.build();
    let coarse = cfg.grid.with_points(cfg.coarse_m.unwrap_or(cfg.grid.m / 2))?;
    let scheme = cfg.grid.scheme;
    let bc = SpectralBackend::new(&coarse, &cfg.potential, scheme).op("coarse backend")?;
    let bf = SpectralBackend::new(&fine, &cfg.potential, scheme).op("fine backend")?;
    let ids: Vec<EstimateId> = if cfg.ids.is_empty() {
        EstimateId::all().to_vec()
    } else {
        cfg.ids.iter().map(|s| s.parse().expect("validated at parse time")).collect()
    };
    let mut table = CsvTable::new(&[
        "id", "alpha", "beta", "N", "delta", "C_meas", "argmax_x", "argmax_y", "argmax_t", "refine_ratio", "pass",
    ]);
    for id in ids {
        for &n_penalty in &cfg.fractional.n_list {
            let p = estimate_params(cfg, n_penalty);
            let rep = refinement_study(id, &p, &[&bc, &bf]).op(format_args!("certificate {id} (N={n_penalty})"))?;
            let c = rep.certificates.last().expect("two grids");
            let ratio = c.refinement_ratio.map_or(String::new(), |r| Sci(r).to_string());
            let (x, y, t) = c.argmax;
            table.row(&[&id, &p.alpha, &p.beta, &n_penalty, &Sci(c.delta_prime), &Sci(c.c_meas), &x, &y, &Sci(t), &ratio, &c.pass]);
            let name = format!("{id}.N={n_penalty}");
            ctx.checks.push(CheckRow { name, value: c.c_meas, bound: "finite, ratio in [0.8,1.25]".into(), pass: rep.pass });
        }
    }
    ctx.write(&table, "certificates.csv")
}

fn random_mean_zero(sd: &SpectralDecomposition, rng: &mut ChaCha8Rng) -> GridFunction {
    let grid = &sd.grid;
    let mut v: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    sd.project_out_zero_mode(&GridFunction::new(grid, v).expect("grid-sized"))
}

struct SpaceSetup {
    sd: SpectralDecomposition,
    aux: AuxFunction,
    tg: LogTimeGrid,
}

fn space_setup(cfg: &RunConfig) -> Result<SpaceSetup, RunError> {
    let grid = cfg.grid.build();
    let sd = decompose(cfg, &grid)?;
    let aux = aux_function(cfg, &grid)?;
    let f = &cfg.fractional;
    let tg = LogTimeGrid::for_spectrum(&sd, f.alpha, 2.0 * f.beta, cfg.time_points).op("time grid")?;
    Ok(SpaceSetup { sd, aux, tg })
}

fn space_checks(cfg: &RunConfig, s: &SpaceSetup, rng: &mut ChaCha8Rng) -> Result<Vec<CheckRow>, RunError> {
    let SpaceSetup { sd, aux, tg } = s;
    let (alpha, beta, gamma) = (cfg.fractional.alpha, cfg.fractional.beta, cfg.fractional.gamma);
    let c = g_constant(beta);
    let mut out = Vec::new();

    let k = if sd.has_zero_mode { 8 } else { 7 };
    let phi = sd.eigenfunction(k.min(sd.eigenvalues.len() - 1));
    let g = g_function(sd, alpha, beta, &phi, tg).op("g-function")?;
    let dev = g.values().iter().zip(phi.values()).map(|(a, b)| (a - c * b.abs()).abs()).fold(0.0, f64::max);
    out.push(CheckRow::at_most("g_function.eigen_identity", dev, 1e-6));

    let f = random_mean_zero(sd, rng);
    let ratio = g_function(sd, alpha, beta, &f, tg).op("g-function")?.l2_norm() / f.l2_norm();
    out.push(CheckRow::at_most("g_function.isometry", (ratio - c).abs(), 1e-6));
    out.push(CheckRow::at_most("reproducing.residual", reproducing_check(sd, alpha, beta, &f, tg).op("reproducing formula")?, 1e-4));

    let mut worst = 0.0f64;
    let mut pairs = 0;
    let mut attempts = 0;
    while pairs < 10 {
        attempts += 1;
        if attempts > 100 {
            return Err(RunError::Numerics {
                op: "duality pairing".into(),
                source: subheat_core::Error::InvalidParameter("no non-orthogonal (f, atom) pair in 100 draws".into()),
            });
        }
        let f = random_mean_zero(sd, rng);
        let atom = random_atom(&sd.grid, gamma, aux, rng).op("random atom")?;
        let a = sd.project_out_zero_mode(&atom.function);
        match duality_pairing_check(&f, &a, sd, alpha, beta, tg) {
            Ok(r) => {
                worst = worst.max((r - 1.0).abs());
                pairs += 1;
            }
            Err(subheat_core::Error::OrthogonalPair(_)) => continue,
            Err(e) => return Err(RunError::Numerics { op: "duality pairing".into(), source: e }),
        }
    }
    out.push(CheckRow::at_most("pairing.max_deviation", worst, 1e-3));

    let suite = equivalence_suite(&sd.grid, gamma, aux, cfg.seed).op("function suite")?;
    let mut area_ratio = 0.0f64;
    for member in &suite {
        let f = sd.project_out_zero_mode(&member.f);
        let a = area_function(sd, alpha, beta, &f, tg).op(format_args!("area function ({})", member.label))?;
        area_ratio = area_ratio.max(a.l2_norm() / (c * f.l2_norm()));
    }
    out.push(CheckRow::at_most("area.l2_ratio", area_ratio, 4.0));
    let mut atoms = 0.0f64;
    for _ in 0..20 {
        let atom = random_atom(&sd.grid, gamma, aux, rng).op("random atom")?;
        let a = sd.project_out_zero_mode(&atom.function);
        let s = area_function(sd, alpha, beta, &a, tg).op("area function (atom)")?;
        atoms = atoms.max(lp_norm(&s, atom.p));
    }
    out.push(CheckRow::finite("area.atom_lp_max", atoms));
    Ok(out)
}

fn spaces(ctx: &mut Ctx) -> Result<(), RunError> {
    let s = space_setup(ctx.cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let checks = space_checks(ctx.cfg, &s, &mut rng)?;
    ctx.checks.extend(checks);

    let (alpha, beta) = (ctx.cfg.fractional.alpha, ctx.cfg.fractional.beta);
    let f = random_mean_zero(&s.sd, &mut rng);
    let g = g_function(&s.sd, alpha, beta, &f, &s.tg).op("g-function")?;
    let area = area_function(&s.sd, alpha, beta, &f, &s.tg).op("area function")?;
    let mut profile = CsvTable::new(&["x_index", "f", "g_function", "area_function"]);
    for i in 0..s.sd.grid.len() {
        profile.row(&[&i, &Sci(f.values()[i]), &Sci(g.values()[i]), &Sci(area.values()[i])]);
    }
    ctx.write(&profile, "square_functions.csv")?;
    ctx.write_checks("spaces.csv")
}

fn equiv(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let s = space_setup(cfg)?;
    let f = &cfg.fractional;
    let suite = equivalence_suite(&s.sd.grid, f.gamma, &s.aux, cfg.seed).op("function suite")?;
    let suite: Vec<_> = suite
        .into_iter()
        .map(|mut m| {
            m.f = s.sd.project_out_zero_mode(&m.f);
            m
        })
        .collect();
    let setup = EquivalenceSetup { sd: &s.sd, aux: &s.aux, alpha: f.alpha, beta: f.beta, gamma: f.gamma, tg: &s.tg };
    let table = equivalence_experiment(&suite, &setup).op("equivalence experiment")?;

    let mut norms = CsvTable::new(&["label", "N1", "N2", "N3", "N4", "N5"]);
    for r in &table.rows {
        let [a, b, c, d, e] = r.norms;
        norms.row(&[&r.label, &Sci(a), &Sci(b), &Sci(c), &Sci(d), &Sci(e)]);
    }
    ctx.write(&norms, "equivalence.csv")?;
    let mut ratios = CsvTable::new(&["j", "k", "min_ratio", "max_ratio"]);
    for ((j, k), lo, hi) in &table.ratio_ranges {
        ratios.row(&[&(j + 1), &(k + 1), &Sci(*lo), &Sci(*hi)]);
    }
    ctx.write(&ratios, "ratios.csv")?;

    ctx.checks.push(CheckRow::at_most("equivalence.c_star", table.c_star, 100.0));
    let mut homog = 0.0f64;
    for (member, row) in suite.iter().filter(|m| !table.excluded.contains(&m.label)).zip(&table.rows) {
        let doubled = norm_functionals(&setup, &member.f.scaled(2.0)).op("norm functionals")?;
        for (a, b) in row.norms.iter().zip(&doubled) {
            homog = homog.max((b - 2.0 * a).abs() / (2.0 * a));
        }
    }
    ctx.checks.push(CheckRow::at_most("equivalence.homogeneity", homog, 1e-10));
    ctx.write_checks("equivalence_checks.csv")
}

/// Largest grid on which `selftest` compares full subordinated kernel tables.
const FULL_TABLE_LIMIT: usize = 512;

fn selftest(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let (alpha, beta) = (cfg.fractional.alpha, cfg.fractional.beta);
    let mut checks = Vec::new();

    let st = density_selftest(alpha).op("subordinator density")?;
    checks.push(CheckRow::at_most("density.normalization", st.normalization_defect, 1e-8));
    checks.push(CheckRow::at_most("density.series_overlap", st.overlap_gap, 1e-6));
    let dens = SubordinatorDensity::new(alpha).op("subordinator density")?;
    let quad = SubordinationQuad::for_time(&dens, 1.0, 1e6);
    let mut laplace = 0.0f64;
    for lambda in [0.5, 1.0, 2.0] {
        let v = laplace_by_quadrature(&dens, 1.0, lambda, &quad).op("Laplace transform")?;
        laplace = laplace.max((v - (-f64::powf(lambda, alpha)).exp()).abs());
    }
    checks.push(CheckRow::at_most("density.laplace", laplace, 1e-6));

    let grid = cfg.grid.build();
    let sd = decompose(cfg, &grid)?;
    let heat = |t: f64| multiplier_kernel(&sd, &Multiplier::Heat { t }).op("heat kernel");
    let k1 = heat(1.0)?;
    checks.extend(axiom_checks("heat_t1", &k1));
    checks.push(CheckRow::at_most("heat.chapman_kolmogorov", heat(2.0)?.max_abs_diff(&k1.compose(&k1)), 1e-6));

    let lmin = sd.lambda_min_positive();
    let mut two_route = 0.0f64;
    let full_tables = grid.len() <= FULL_TABLE_LIMIT;
    for t in [0.25, 1.0, 4.0] {
        let q = SubordinationQuad::for_time(&dens, t, 40.0 / lmin);
        if full_tables {
            let spectral = multiplier_kernel(&sd, &Multiplier::FracHeat { alpha, t }).op("fractional kernel")?;
            let sub = subordinate_kernel(&sd, &dens, t, &q).op("subordinated kernel")?;
            two_route = two_route.max(spectral.max_abs_diff(&sub) / spectral.max_abs());
        } else {
            for &l in &sd.eigenvalues {
                let sub = laplace_by_quadrature(&dens, t, l, &q).op("subordinated multiplier")?;
                two_route = two_route.max((sub - Multiplier::FracHeat { alpha, t }.eval(l)).abs());
            }
        }
    }
    let name = if full_tables { "fractional.two_route" } else { "fractional.two_route_per_mode" };
    checks.push(CheckRow::at_most(name, two_route, 1e-5));

    let mut routes = 0.0f64;
    for b in [0.3, 0.5, 1.0, 1.5] {
        let spec = FracDerivSpec::new(b).op("fractional derivative")?;
        let q = frac_time_derivative(&SpectralPath { sd: &sd, alpha }, &spec, 1.0).op("fractional derivative")?;
        let m = multiplier_kernel(&sd, &Multiplier::TimeDerivative { alpha, beta: b, t: 1.0 }).op("fractional derivative")?;
        routes = routes.max(q.max_abs_diff(&m) / m.max_abs());
    }
    checks.push(CheckRow::at_most("derivative.two_route", routes, 1e-4));

    let s = SpaceSetup {
        aux: aux_function(cfg, &grid)?,
        tg: LogTimeGrid::for_spectrum(&sd, alpha, 2.0 * beta, cfg.time_points).op("time grid")?,
        sd,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    checks.extend(space_checks(cfg, &s, &mut rng)?);
    ctx.checks = checks;
    ctx.write_checks("selftest.csv")
}
