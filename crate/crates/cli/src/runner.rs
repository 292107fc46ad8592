//! Executes the check graph and writes the report files.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use invdecomp::cumulants::{analytic_cumulants, mgf_watson, watson_relation_check, z2_condition_check};
use invdecomp::kernels::{check_invariance, project_kernel};
use invdecomp::sampler::{
    derive_seed, duplication_check, mgf_monte_carlo, quadruplication_check, IdentityConfig, IdentityReport,
};
use invdecomp::spectral::{
    canonical_decomposition, check_eigenspace_invariance, eigendecompose, spectrum_csv, Spectrum,
};
use invdecomp::torus::{
    check_stationarity, fourier_kl, profile_kernel, torus_watson_check, Lattice, TorusGrid, TorusProfile,
    TorusWatsonConfig,
};
use invdecomp::{BuiltinKernel, GroupAction, IndexSpace, Kernel, SymmetryGroup};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::checks::{closure, Check};
use crate::config::{ActionName, ConfigError, ExperimentConfig, Format, GroupKind};

/// Eigenvalues compared against the closed forms in `kl_spectrum`.
const KL_REFERENCE_ORDERS: usize = 10;

/// Truncation level reported for the KL feature map.
const KL_CUTOFF: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Passed,
    Failed,
    Skipped,
    Vacuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub status: Status,
    /// Listed in the config, as opposed to pulled in as a prerequisite.
    pub requested: bool,
    pub message: String,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub metrics: BTreeMap<String, f64>,
    pub tables: Vec<String>,
    pub details: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    /// The effective config without its output section.
    pub config: Value,
    pub checks: Vec<CheckEntry>,
    pub passed: bool,
    pub exit_code: i32,
}

impl Report {
    pub fn check(&self, name: &str) -> Option<&CheckEntry> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.checks.iter().filter(|c| c.status == Status::Failed)
    }

    pub fn summary(&self) -> String {
        let mut out = format!("invdecomp run: {}\n", self.name);
        for c in &self.checks {
            let _ = writeln!(out, "{:<24} {:<8} {}", c.name, status_word(c.status), c.message);
        }
        let _ = writeln!(
            out,
            "result: {} (exit {})",
            if self.passed { "PASS" } else { "FAIL" },
            self.exit_code
        );
        out
    }
}

fn status_word(s: Status) -> &'static str {
    match s {
        Status::Passed => "passed",
        Status::Failed => "FAILED",
        Status::Skipped => "skipped",
        Status::Vacuous => "vacuous",
    }
}

/// A finished check before it is placed in the report.
struct Outcome {
    status: Status,
    message: String,
    tolerances: BTreeMap<String, f64>,
    seed: Option<u64>,
    metrics: BTreeMap<String, f64>,
    /// File name and CSV body.
    tables: Vec<(String, String)>,
    /// File name and JSON body for auxiliary artifacts.
    artifacts: Vec<(String, String)>,
    details: Value,
}

impl Outcome {
    fn new(passed: bool, message: String, details: Value) -> Self {
        Self {
            status: if passed { Status::Passed } else { Status::Failed },
            message,
            tolerances: BTreeMap::new(),
            seed: None,
            metrics: BTreeMap::new(),
            tables: Vec::new(),
            artifacts: Vec::new(),
            details,
        }
    }

    fn tol(mut self, key: &str, v: f64) -> Self {
        self.tolerances.insert(key.into(), v);
        self
    }

    fn metric(mut self, key: &str, v: f64) -> Self {
        self.metrics.insert(key.into(), v);
        self
    }

    fn seed(mut self, s: u64) -> Self {
        self.seed = Some(s);
        self
    }

    fn table(mut self, name: &str, body: String) -> Self {
        self.tables.push((name.into(), body));
        self
    }
}

type CheckResult = std::result::Result<Outcome, String>;

/// Kernel, symmetry and state shared between checks.
struct Context<'a> {
    cfg: &'a ExperimentConfig,
    kernel: Kernel,
    sym: SymmetryGroup,
    torus: Option<TorusGrid>,
    spectrum: Option<Spectrum>,
}

fn core(e: invdecomp::Error) -> String {
    e.to_string()
}

fn build_symmetry(cfg: &ExperimentConfig) -> invdecomp::Result<SymmetryGroup> {
    match cfg.group.kind {
        GroupKind::Trivial => Ok(SymmetryGroup::trivial()),
        GroupKind::Cyclic => SymmetryGroup::cyclic(cfg.group.factors[0]),
        GroupKind::Product => {
            let mut it = cfg.group.factors.iter();
            let mut g = SymmetryGroup::cyclic(*it.next().expect("validated"))?;
            for &f in it {
                g = SymmetryGroup::direct_product(&g, &SymmetryGroup::cyclic(f)?)?;
            }
            Ok(g)
        }
    }
}

fn interval(n: usize, action: ActionName) -> invdecomp::Result<Arc<IndexSpace>> {
    Ok(Arc::new(match action {
        ActionName::Reversal => IndexSpace::interval_with_reversal(n)?,
        _ => IndexSpace::interval(n)?.with_action(GroupAction::identity(n))?,
    }))
}

fn build_kernel(cfg: &ExperimentConfig) -> invdecomp::Result<(Kernel, Option<TorusGrid>)> {
    let n = &cfg.grid.n;
    let kind: BuiltinKernel = cfg.kernel.name.parse()?;
    match kind {
        BuiltinKernel::Bridge | BuiltinKernel::Watson => {
            Ok((Kernel::builtin(kind, interval(n[0], cfg.action.name)?)?, None))
        }
        BuiltinKernel::SheetTied | BuiltinKernel::SheetCompensated => {
            let reversal = cfg.action.name == ActionName::Reversal;
            let axes = [interval(n[0], ActionName::Reversal)?, interval(n[1], ActionName::Reversal)?];
            let mut space = IndexSpace::product(&axes, reversal)?;
            if !reversal {
                let m = space.len();
                space = space.with_action(GroupAction::identity(m))?;
            }
            Ok((Kernel::builtin(kind, Arc::new(space))?, None))
        }
        BuiltinKernel::TorusWatson => {
            let lattice = match &cfg.kernel.params.lattice {
                Some(b) => Lattice::new(b.clone())?,
                None => Lattice::integer(n.len())?,
            };
            let grid = TorusGrid::new(lattice, n.clone())?;
            let k = profile_kernel(&TorusProfile::Watson.sample(&grid), &grid)?;
            Ok((k, Some(grid)))
        }
    }
}

/// Result of [`run`]: the report plus the files written.
pub struct RunOutput {
    pub report: Report,
    pub written: Vec<String>,
}

/// Validates `cfg`, runs its checks and writes the requested outputs into
/// `cfg.output.dir`.
pub fn run(cfg: &ExperimentConfig) -> std::result::Result<RunOutput, ConfigError> {
    cfg.validate()?;
    let requested = cfg.parsed_checks()?;
    let (kernel, torus) = build_kernel(cfg).map_err(|e| ConfigError::Invalid(format!("kernel setup: {e}")))?;
    let sym = build_symmetry(cfg).map_err(|e| ConfigError::Invalid(format!("group setup: {e}")))?;
    let mut ctx = Context {
        cfg,
        kernel,
        sym,
        torus,
        spectrum: None,
    };

    let mut entries: Vec<CheckEntry> = Vec::new();
    let mut tables = Vec::new();
    let mut artifacts = Vec::new();
    for check in closure(&requested) {
        let blocked = check.requires().iter().find(|r| {
            entries
                .iter()
                .find(|e| e.name == r.name())
                .is_some_and(|e| !matches!(e.status, Status::Passed | Status::Vacuous))
        });
        let outcome = match blocked {
            Some(r) => Outcome {
                status: Status::Skipped,
                ..Outcome::new(false, format!("prerequisite {r} did not pass"), Value::Null)
            },
            None => execute(&mut ctx, check).unwrap_or_else(|e| Outcome::new(false, format!("error: {e}"), Value::Null)),
        };
        let names: Vec<String> = outcome.tables.iter().map(|(n, _)| n.clone()).collect();
        tables.extend(outcome.tables);
        artifacts.extend(outcome.artifacts);
        entries.push(CheckEntry {
            name: check.name().into(),
            status: outcome.status,
            requested: requested.contains(&check),
            message: outcome.message,
            tolerances: outcome.tolerances,
            seed: outcome.seed,
            metrics: outcome.metrics,
            tables: names,
            details: outcome.details,
        });
    }

    let passed = entries.iter().all(|e| matches!(e.status, Status::Passed | Status::Vacuous));
    let mut config = serde_json::to_value(cfg).expect("config serializes");
    config.as_object_mut().expect("object").remove("output");
    let report = Report {
        name: cfg.name.clone(),
        config,
        checks: entries,
        passed,
        exit_code: if passed { 0 } else { 1 },
    };
    let written = write_outputs(cfg, &report, &tables, &artifacts)
        .map_err(|e| ConfigError::Invalid(format!("cannot write to {}: {e}", cfg.output.dir.display())))?;
    Ok(RunOutput { report, written })
}

fn write_outputs(
    cfg: &ExperimentConfig,
    report: &Report,
    tables: &[(String, String)],
    artifacts: &[(String, String)],
) -> std::io::Result<Vec<String>> {
    let dir: &Path = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: &str| -> std::io::Result<()> {
        std::fs::write(dir.join(name), body)?;
        written.push(name.to_string());
        Ok(())
    };
    if cfg.output.formats.contains(&Format::Json) {
        let mut body = serde_json::to_string_pretty(report).expect("report serializes");
        body.push('\n');
        put("report.json", &body)?;
        for (name, body) in artifacts {
            put(name, body)?;
        }
    }
    if cfg.output.formats.contains(&Format::Csv) {
        for (name, body) in tables {
            put(name, body)?;
        }
    }
    if cfg.output.formats.contains(&Format::Txt) {
        put("summary.txt", &report.summary())?;
    }
    Ok(written)
}

fn execute(ctx: &mut Context<'_>, check: Check) -> CheckResult {
    match check {
        Check::Invariance => invariance(ctx),
        Check::Projection => projection(ctx),
        Check::WatsonRelation => watson_relation(ctx),
        Check::Z2Condition => z2_condition(ctx),
        Check::Cumulants => cumulants(ctx),
        Check::KlSpectrum => kl_spectrum(ctx),
        Check::EigenspaceInvariance => eigenspace_invariance(ctx),
        Check::CanonicalDecomposition => canonical(ctx),
        Check::Stationarity => stationarity(ctx),
        Check::TorusWatson => torus_watson(ctx),
        Check::Duplication | Check::Quadruplication => identity(ctx, check),
        Check::Mgf => mgf(ctx),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

/// Tolerance relative to the largest kernel entry.
fn scaled(ctx: &Context<'_>, key: &str) -> f64 {
    ctx.cfg.tol(key) * ctx.kernel.matrix().amax().max(f64::MIN_POSITIVE)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn invariance(ctx: &mut Context<'_>) -> CheckResult {
    let tol = scaled(ctx, "invariance");
    let r = check_invariance(&ctx.kernel, tol).map_err(core)?;
    Ok(Outcome::new(
        r.passed,
        format!("max |R(g·y, g·y') − R(y, y')| = {:.2e} (tol {tol:.1e})", r.max_deviation),
        to_value(&r),
    )
    .tol("invariance", tol)
    .metric("max_deviation", r.max_deviation))
}

fn projection(ctx: &mut Context<'_>) -> CheckResult {
    let tol = scaled(ctx, "projection");
    let irreps = ctx.sym.table.irreps();
    let mut sum = ctx.kernel.matrix().clone() * -1.0;
    let mut cross = 0.0f64;
    let mut table = String::from("irrep,trace\n");
    let mut traces = BTreeMap::new();
    for pi in irreps {
        for sigma in irreps {
            let r = project_kernel(&ctx.kernel, pi, sigma).map_err(core)?;
            if pi.label == sigma.label {
                let w = ctx.kernel.space().weights();
                let tr: f64 = (0..r.nrows()).map(|i| r[(i, i)] * w[i]).sum();
                let _ = writeln!(table, "{},{tr:e}", pi.label);
                traces.insert(pi.label.clone(), tr);
                sum += r;
            } else {
                cross = cross.max(r.amax());
            }
        }
    }
    let split = sum.amax();
    let passed = split <= tol && cross <= tol;
    Ok(Outcome::new(
        passed,
        format!("|Σ R^ππ − R| = {split:.2e}, max cross block {cross:.2e} (tol {tol:.1e})"),
        json!({ "split_residual": split, "cross_max": cross, "traces": traces }),
    )
    .tol("projection", tol)
    .metric("split_residual", split)
    .metric("cross_max", cross)
    .table("projection.csv", table))
}

fn watson_relation(ctx: &mut Context<'_>) -> CheckResult {
    let cfg = ctx.cfg;
    let tol = cfg.tol("watson_relation");
    let r = watson_relation_check(&ctx.kernel, &ctx.sym.table, cfg.rho, cfg.n_max, tol).map_err(core)?;
    let mut table = String::from("irrep,n,trace,cumulant,cII_dev,cIII_dev\n");
    for p in &r.per_irrep {
        for n in 1..=cfg.n_max {
            let _ = writeln!(
                table,
                "{},{n},{:e},{:e},{},{}",
                p.label,
                p.traces[n - 1],
                p.cumulants[n - 1],
                opt(p.c2_dev[n - 1]),
                opt(p.c3_dev[n - 1])
            );
        }
    }
    let (c2, c3) = (r.max_c2_dev(), r.max_c3_dev());
    let mut out = Outcome::new(
        r.passed(),
        format!(
            "(C II) {} max dev {c2:.2e}, (C III) {} max dev {c3:.2e} (tol {tol:.0e} relative)",
            if r.verdicts.c2 { "holds" } else { "fails" },
            if r.verdicts.c3 { "holds" } else { "fails" },
        ),
        to_value(&r),
    )
    .tol("watson_relation", tol)
    .metric("cII_max_dev", c2)
    .metric("cIII_max_dev", c3)
    .table("watson_relation.csv", table);
    if r.vacuous_orders.len() == cfg.n_max {
        out.status = Status::Vacuous;
        out.message = format!("K(n, {}) = 0 for every n ≤ {}", cfg.rho, cfg.n_max);
    }
    Ok(out)
}

fn z2_condition(ctx: &mut Context<'_>) -> CheckResult {
    let tol = ctx.cfg.tol("z2_condition");
    let r = z2_condition_check(&ctx.kernel, ctx.cfg.n_max, tol).map_err(core)?;
    let mut table = String::from("n,value,trace,passed\n");
    for (i, v) in r.values.iter().enumerate() {
        let _ = writeln!(table, "{},{v:e},{:e},{}", i + 1, r.traces[i], r.per_order_passed[i]);
    }
    let (worst_n, worst) = r
        .values
        .iter()
        .enumerate()
        .fold((1, 0.0f64), |acc, (i, v)| if v.abs() > acc.1 { (i + 1, v.abs()) } else { acc });
    Ok(Outcome::new(
        r.passed,
        format!("max |∫[R⊗ₙR](y, g·y)| = {worst:.2e} at n = {worst_n} (tol {tol:.0e})"),
        to_value(&r),
    )
    .tol("z2_condition", tol)
    .metric("max_abs_value", worst)
    .table("z2_condition.csv", table))
}

fn cumulants(ctx: &mut Context<'_>) -> CheckResult {
    let kv = analytic_cumulants(&ctx.kernel, ctx.cfg.rho, ctx.cfg.n_max).map_err(core)?;
    let mut table = String::from("n,kappa\n");
    for (i, v) in kv.values.iter().enumerate() {
        let _ = writeln!(table, "{},{v:e}", i + 1);
    }
    Ok(Outcome::new(
        true,
        format!("κ_1..κ_{} of ∫Z₁Z₂ at ρ = {}; κ_1 = {:.6e}", ctx.cfg.n_max, ctx.cfg.rho, kv.values[0]),
        to_value(&kv),
    )
    .metric("kappa_1", kv.values[0])
    .table("cumulants.csv", table))
}

/// Closed-form eigenvalues `c/k²` with their multiplicity.
fn kl_reference(name: &str) -> Option<(f64, usize)> {
    match name {
        "bridge" => Some((1.0 / (PI * PI), 1)),
        "watson" => Some((1.0 / (4.0 * PI * PI), 2)),
        _ => None,
    }
}

fn kl_spectrum(ctx: &mut Context<'_>) -> CheckResult {
    let cluster_tol = ctx.cfg.tol("cluster");
    let s = eigendecompose(&ctx.kernel, cluster_tol).map_err(core)?;
    let tol = ctx.cfg.tol("kl_eigen");
    let p = KL_CUTOFF.min(s.len());
    let tail = s.truncation_bound(p);
    let mut details = json!({
        "eigenvalues": s.eigenvalues.iter().take(KL_REFERENCE_ORDERS * 2).collect::<Vec<_>>(),
        "clusters": s.clusters.iter().take(KL_REFERENCE_ORDERS * 2).collect::<Vec<_>>(),
        "cluster_count": s.clusters.len(),
        "abs_floor": s.abs_floor,
        "feature_map_cutoff": p,
        "truncation_bound": tail,
    });
    let mut out = match kl_reference(&ctx.cfg.kernel.name) {
        Some((c, mult)) => {
            let mut worst = 0.0f64;
            let mut mult_ok = true;
            let mut rows = Vec::new();
            for (j, cl) in s.clusters.iter().take(KL_REFERENCE_ORDERS).enumerate() {
                let want = c / ((j + 1) * (j + 1)) as f64;
                mult_ok &= cl.multiplicity == mult;
                let gap = cl.range().map(|i| (s.eigenvalues[i] / want - 1.0).abs()).fold(0.0, f64::max);
                worst = worst.max(gap);
                rows.push(json!({"k": j + 1, "expected": want, "value": cl.value, "multiplicity": cl.multiplicity, "rel_gap": gap}));
            }
            details["reference"] = Value::Array(rows);
            Outcome::new(
                worst <= tol && mult_ok,
                format!(
                    "first {KL_REFERENCE_ORDERS} eigenvalues vs c/k²: max rel gap {worst:.2e} (tol {tol:.0e}), multiplicity {mult} {}",
                    if mult_ok { "everywhere" } else { "violated" }
                ),
                details,
            )
            .tol("kl_eigen", tol)
            .metric("max_rel_gap", worst)
        }
        None => Outcome::new(
            true,
            format!("{} eigenvalues in {} clusters; no closed-form reference", s.len(), s.clusters.len()),
            details,
        ),
    };
    out = out
        .tol("cluster", cluster_tol)
        .metric("lambda_max", s.eigenvalues[0])
        .metric("truncation_bound", tail)
        .table("kl_spectrum.csv", spectrum_csv(&s));
    ctx.spectrum = Some(s);
    Ok(out)
}

fn eigenspace_invariance(ctx: &mut Context<'_>) -> CheckResult {
    let s = ctx.spectrum.as_ref().ok_or("spectrum missing")?;
    let tol = ctx.cfg.tol("eigenspace");
    let action = ctx.kernel.space().require_action().map_err(core)?;
    let r = check_eigenspace_invariance(s, action, tol).map_err(core)?;
    let mut table = String::from("cluster,value,multiplicity,max_residual,passed\n");
    for c in &r.clusters {
        let _ = writeln!(table, "{},{:e},{},{:e},{}", c.cluster, c.value, c.multiplicity, c.max_residual, c.passed);
    }
    Ok(Outcome::new(
        r.passed,
        format!("max residual {:.2e} over {} clusters (tol {tol:.0e})", r.max_residual, r.clusters.len()),
        json!({ "tol": r.tol, "max_residual": r.max_residual, "passed": r.passed }),
    )
    .tol("eigenspace", tol)
    .metric("max_residual", r.max_residual)
    .table("eigenspace_invariance.csv", table))
}

fn canonical(ctx: &mut Context<'_>) -> CheckResult {
    let s = ctx.spectrum.as_ref().ok_or("spectrum missing")?;
    let d = canonical_decomposition(s, &ctx.sym.table).map_err(core)?;
    let dims_ok = d
        .clusters
        .iter()
        .all(|c| c.parts.iter().map(|p| p.dim()).sum::<usize>() == c.multiplicity);
    let head: Vec<Value> = d
        .clusters
        .iter()
        .take(KL_REFERENCE_ORDERS)
        .map(|c| json!({"cluster": c.cluster, "value": c.value, "dims": c.dims()}))
        .collect();
    Ok(Outcome::new(
        dims_ok && d.containment_passed(),
        format!(
            "component dims {} multiplicities, containment residual {:.2e} (tol {:.0e})",
            if dims_ok { "sum to" } else { "do not sum to" },
            d.max_containment_residual,
            d.tol
        ),
        json!({ "clusters": head, "max_containment_residual": d.max_containment_residual, "dims_sum_to_multiplicity": dims_ok }),
    )
    .tol("containment", d.tol)
    .metric("max_containment_residual", d.max_containment_residual)
    .table("canonical_decomposition.csv", d.to_csv(s)))
}

fn torus_grid<'c>(ctx: &'c Context<'_>) -> std::result::Result<&'c TorusGrid, String> {
    ctx.torus.as_ref().ok_or_else(|| "not a torus kernel".to_string())
}

fn stationarity(ctx: &mut Context<'_>) -> CheckResult {
    let tol = ctx.cfg.tol("stationarity");
    let r = check_stationarity(&ctx.kernel, torus_grid(ctx)?, tol).map_err(core)?;
    Ok(Outcome::new(
        r.passed,
        format!("max spread of K(s, s+u) over s = {:.2e} (tol {tol:.0e})", r.max_spread),
        to_value(&r),
    )
    .tol("stationarity", tol)
    .metric("max_spread", r.max_spread))
}

fn torus_watson(ctx: &mut Context<'_>) -> CheckResult {
    let cfg = ctx.cfg;
    let grid = torus_grid(ctx)?;
    let seed = cfg.seed.ok_or("seed missing")?;
    let cutoff = cfg.torus_cutoff();
    let spec = fourier_kl(&TorusProfile::Watson.sample(grid), grid, cutoff).map_err(core)?;
    let tc = TorusWatsonConfig {
        ks_threshold: cfg.tol("ks"),
        z_score: cfg.tol("z_score"),
        pathwise_tol: cfg.tol("pathwise"),
        ..TorusWatsonConfig::new(cfg.samples.ok_or("samples missing")?, seed)
    };
    let r = torus_watson_check(&spec, grid, &tc).map_err(core)?;
    let mut table = String::from("parts,identity,max_residual,tol,holds\n");
    for c in &r.conventions {
        let _ = writeln!(table, "{},{},{:e},{:e},{}", c.parts, c.identity, c.max_residual, c.tol, c.holds);
    }
    let mut law = String::from("n,odd_analytic,even_analytic,odd_kstat,even_kstat,gap_tolerance,passed\n");
    for n in 0..r.law.gap_passed.len() {
        let _ = writeln!(
            law,
            "{},{:e},{:e},{:e},{:e},{:e},{}",
            n + 1,
            r.odd_analytic[n],
            r.even_analytic[n],
            r.law.comparison.kstats_a[n],
            r.law.comparison.kstats_b[n],
            r.law.gap_tolerance[n],
            r.law.gap_passed[n]
        );
    }
    let ks = r.law.comparison.ks_distance;
    let mut out = Outcome::new(
        r.passed,
        format!(
            "KS(∫X₁², ∫X₂²) = {ks:.4} (tol {:.3}), cross-cov {:.2e} (tol {:.2e}), energy split holds for: {}",
            tc.ks_threshold,
            r.cross_covariance_max,
            r.cross_covariance_threshold,
            r.satisfied_by.join("; ")
        ),
        json!({ "cutoff": cutoff, "max_sine": spec.max_sine, "truncation_bound": spec.truncation_bound, "assembly_error": spec.assembly_error, "check": r }),
    )
    .tol("ks", tc.ks_threshold)
    .tol("z_score", tc.z_score)
    .tol("pathwise", tc.pathwise_tol)
    .tol("cross_covariance", r.cross_covariance_threshold)
    .seed(seed)
    .metric("ks", ks)
    .metric("cross_covariance_max", r.cross_covariance_max)
    .table("torus_conventions.csv", table)
    .table("torus_law.csv", law);
    let mut spec_json = serde_json::to_string_pretty(&spec.to_json()).expect("spec serializes");
    spec_json.push('\n');
    out.artifacts.push(("torus_spec.json".into(), spec_json));
    Ok(out)
}

fn identity_table(r: &IdentityReport) -> String {
    let mut t = String::from("n,lhs_analytic,rhs_analytic,lhs_kstat,rhs_kstat,discretization_gap,mc_sd,gap_tolerance,passed\n");
    for n in 0..r.gap_passed.len() {
        let _ = writeln!(
            t,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            n + 1,
            r.lhs_analytic[n],
            r.rhs_analytic[n],
            r.comparison.kstats_a[n],
            r.comparison.kstats_b[n],
            r.discretization_gap[n],
            r.mc_sd[n],
            r.gap_tolerance[n],
            r.gap_passed[n]
        );
    }
    t
}

fn identity(ctx: &mut Context<'_>, check: Check) -> CheckResult {
    let cfg = ctx.cfg;
    let seed = cfg.seed.ok_or("seed missing")?;
    let base = if check == Check::Duplication {
        IdentityConfig::duplication(cfg.rho, seed)
    } else {
        IdentityConfig::quadruplication(cfg.rho, seed)
    };
    let ic = IdentityConfig {
        grid: cfg.grid.n[0],
        samples: cfg.samples.ok_or("samples missing")?,
        ks_threshold: cfg.tol("ks"),
        z_score: cfg.tol("z_score"),
        ..base
    };
    let r = if check == Check::Duplication {
        duplication_check(&ic)
    } else {
        quadruplication_check(&ic)
    }
    .map_err(core)?;
    let ks = r.comparison.ks_distance;
    let bad: Vec<String> = (0..r.gap_passed.len())
        .filter(|&n| !r.gap_passed[n])
        .map(|n| format!("κ{} gap {:.2e} > {:.2e}", n + 1, r.comparison.cumulant_gaps[n].abs(), r.gap_tolerance[n]))
        .collect();
    Ok(Outcome::new(
        r.passed,
        format!(
            "KS = {ks:.4} (tol {}), k-statistics orders 1..{}: {}",
            ic.ks_threshold,
            ic.orders,
            if bad.is_empty() { "within band".to_string() } else { bad.join(", ") }
        ),
        to_value(&r),
    )
    .tol("ks", ic.ks_threshold)
    .tol("z_score", ic.z_score)
    .seed(seed)
    .metric("ks", ks)
    .metric("lhs_mean", r.lhs_mean())
    .metric("rhs_mean", r.rhs_mean())
    .table(&format!("{check}.csv"), identity_table(&r)))
}

fn mgf(ctx: &mut Context<'_>) -> CheckResult {
    let cfg = ctx.cfg;
    let seed = cfg.seed.ok_or("seed missing")?;
    let samples = cfg.samples.ok_or("samples missing")?;
    let (tol_s, tol_mc) = (cfg.tol("mgf_spectral"), cfg.tol("mgf_mc"));
    let mut table =
        String::from("lambda,rho,closed_form,spectral,rel_error,mc_seed,mc_estimate,mc_std_error,mc_rel_error\n");
    let mut rows = Vec::new();
    let (mut worst_s, mut worst_mc) = (0.0f64, 0.0f64);
    for (i, &lambda) in cfg.mgf_lambdas().iter().enumerate() {
        let cmp = mgf_watson(lambda, cfg.rho).map_err(core)?;
        let s = derive_seed(seed, i as u64);
        let mc = mgf_monte_carlo(&ctx.kernel, lambda, cfg.rho, samples, s).map_err(core)?;
        let mc_rel = (mc.estimate - cmp.spectral).abs() / cmp.spectral;
        worst_s = worst_s.max(cmp.rel_error);
        worst_mc = worst_mc.max(mc_rel);
        let _ = writeln!(
            table,
            "{lambda},{},{:e},{:e},{:e},{s},{:e},{:e},{mc_rel:e}",
            cfg.rho, cmp.closed_form, cmp.spectral, cmp.rel_error, mc.estimate, mc.std_error
        );
        rows.push(json!({ "comparison": cmp, "monte_carlo": mc, "mc_rel_error": mc_rel }));
    }
    Ok(Outcome::new(
        worst_s <= tol_s && worst_mc <= tol_mc,
        format!("closed form vs spectral max rel {worst_s:.2e} (tol {tol_s:.0e}); Monte Carlo vs spectral max rel {worst_mc:.2e} (tol {tol_mc:.0e})"),
        Value::Array(rows),
    )
    .tol("mgf_spectral", tol_s)
    .tol("mgf_mc", tol_mc)
    .seed(seed)
    .metric("spectral_max_rel", worst_s)
    .metric("mc_max_rel", worst_mc)
    .table("mgf.csv", table))
}
