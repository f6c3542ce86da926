use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use equiscalar::basis::{EquivariantModel, ModelFile, TranslationMode};
use equiscalar::einsum::{self, CheckMode, FactorKind, Tensor};
use equiscalar::harness::{self, targets, CertReport, Input, Target};
use equiscalar::mpnn::{self, MpnnModel, TrainConfig};
use equiscalar::physics::{em_forces, total_energy, ForceForm, ParticleSystem};
use equiscalar::{
    group, GroupFamily, Metric, MetricKind, OutputLaw, RngState, Role, ScalarFeatureSet, SymmetrySpec, VectorTuple,
};
use equiscalar::features::FeatureOptions;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{
    CertifyArgs, CliError, Command, DemoArgs, DemoCommand, EinsumCommand, FeaturesArgs, FormatArg, GroupArg,
    MetricArg, ModeArg, SampleGroupArgs, Status, TrainArgs,
};

type Result<T> = std::result::Result<T, CliError>;

/// Particle count of the default physics and network specs.
const DEFAULT_PARTICLES: usize = 4;
/// Slot count of the default gram and basis-model specs.
const DEFAULT_SLOTS: usize = 4;

pub fn dispatch(command: &Command, verbose: bool) -> Result<Status> {
    match command {
        Command::Features(args) => features(args),
        Command::SampleGroup(args) => sample_group(args),
        Command::Demo(DemoCommand::Energy(args)) => demo(args, Demo::Energy),
        Command::Demo(DemoCommand::Emforce(args)) => demo(args, Demo::EmForce),
        Command::Einsum(EinsumCommand::Check { expr, metric, mode, dim }) => einsum_check(expr, *metric, *mode, *dim),
        Command::Einsum(EinsumCommand::Eval { expr, bind, dim, metric }) => einsum_eval(expr, bind, *dim, *metric),
        Command::Train(args) => train(args, verbose),
        Command::Certify(args) => certify(args, verbose),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("values serialize to JSON")
}

/// Writes to `out` when given, otherwise prints.
fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write(path, &format!("{text}\n")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn require_seed(seed: Option<u64>, what: &str) -> Result<u64> {
    seed.ok_or_else(|| CliError::Usage(format!("{what} is randomized and needs an explicit --seed")))
}

fn metric(arg: MetricArg, dim: usize) -> Metric {
    match arg {
        MetricArg::Euclid => Metric::euclidean(dim),
        MetricArg::Minkowski => Metric::minkowski(dim),
    }
}

fn features(args: &FeaturesArgs) -> Result<Status> {
    let text = read(&args.input)?;
    let is_csv = args.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let tuple = if is_csv { VectorTuple::from_csv(&text)? } else { VectorTuple::from_json(&text)? };
    let options = FeatureOptions { subdets: args.subdets, omega: args.omega };
    let set = ScalarFeatureSet::compute(&metric(args.metric, tuple.dim()), &tuple, options)?;
    let file = set.to_file();
    let text = match args.format {
        FormatArg::Json => to_json(&file),
        FormatArg::Csv => gram_csv(&file.gram, file.n),
    };
    emit(text.trim_end(), args.out.as_deref())?;
    Ok(Status::Passed)
}

fn gram_csv(gram: &[f64], n: usize) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in gram.chunks(n.max(1)) {
        writer.write_record(row.iter().map(|x| format!("{x:?}"))).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

fn family(arg: GroupArg) -> GroupFamily {
    match arg {
        GroupArg::O => GroupFamily::Orthogonal,
        GroupArg::So => GroupFamily::Rotation,
        GroupArg::Lorentz => GroupFamily::Lorentz,
        GroupArg::E => GroupFamily::Euclidean,
        GroupArg::Poincare => GroupFamily::Poincare,
        GroupArg::Perm => GroupFamily::Permutation,
        GroupArg::T => GroupFamily::Translation,
    }
}

fn sample_group(args: &SampleGroupArgs) -> Result<Status> {
    let mut rng = RngState::new(require_seed(args.seed, "sample-group")?);
    let family = family(args.group);
    let mut draw = || group::sample(family, args.dim, args.rapidity_max, &mut rng);
    let text = match args.count {
        None => to_json(&draw()?),
        Some(count) => to_json(&(0..count).map(|_| draw()).collect::<equiscalar::Result<Vec<_>>>()?),
    };
    emit(&text, None)?;
    Ok(Status::Passed)
}

#[derive(Debug, Clone, Copy)]
enum Demo {
    Energy,
    EmForce,
}

/// Compact view of a certification run for stdout.
#[derive(Debug, Serialize)]
struct CertSummary<'a> {
    trials: usize,
    tolerance: f64,
    passed: bool,
    max_residual: f64,
    mean_residual: f64,
    components: &'a BTreeMap<String, harness::ComponentStats>,
    failures: Vec<&'a str>,
}

impl<'a> CertSummary<'a> {
    fn new(report: &'a CertReport, tolerance: f64) -> Self {
        Self {
            trials: report.trials,
            tolerance,
            passed: report.passed(tolerance),
            max_residual: report.max_residual,
            mean_residual: report.mean_residual,
            components: &report.components,
            failures: report.failures.iter().map(|f| f.message.as_str()).collect(),
        }
    }
}

/// Joint E(d) x S_n particle specs with the given output law.
fn particle_specs(dim: usize, n: usize, output: OutputLaw, per_slot: bool) -> Vec<SymmetrySpec> {
    [GroupFamily::Orthogonal, GroupFamily::Translation, GroupFamily::Permutation]
        .into_iter()
        .map(|f| SymmetrySpec::particles(f, dim, n, output, per_slot))
        .collect()
}

fn demo(args: &DemoArgs, which: Demo) -> Result<Status> {
    let system = ParticleSystem::from_json(&read(&args.input)?)?;
    let seed = match args.check_equivariance {
        Some(_) => Some(require_seed(args.seed, "--check-equivariance")?),
        None => None,
    };
    let particles = &system.particles;
    let dim = particles[0].dim();
    let n = particles.len();
    let c = system.constants;
    let mut out = serde_json::Map::new();
    out.insert("constants".into(), json!(c));
    let (target, specs): (Box<dyn Target>, _) = match which {
        Demo::Energy => {
            out.insert("energy".into(), json!(total_energy(particles, c.gravitational)?));
            (Box::new(targets::energy(c.gravitational)), particle_specs(dim, n, OutputLaw::ScalarInvariant, false))
        }
        Demo::EmForce => {
            let scalar = em_forces(particles, c.k, c.c, ForceForm::Scalar)?;
            if dim == 3 {
                let cross = em_forces(particles, c.k, c.c, ForceForm::Cross)?;
                let gap = scalar
                    .iter()
                    .zip(&cross)
                    .map(|(s, x)| (s - x).norm() / s.norm().max(x.norm()).max(f64::MIN_POSITIVE))
                    .fold(0.0, f64::max);
                out.insert("forces_cross".into(), json!(cross));
                out.insert("max_relative_disagreement".into(), json!(gap));
            }
            out.insert("forces_scalar".into(), json!(scalar));
            let target = targets::em_force(c.k, c.c, ForceForm::Scalar);
            (Box::new(target) as Box<dyn Target>, particle_specs(dim, n, OutputLaw::VectorTranslationInvariant, true))
        }
    };
    let mut status = Status::Passed;
    if let (Some(trials), Some(seed)) = (args.check_equivariance, seed) {
        let input = Input::from_particles(particles);
        let report = harness::certify_at(target.as_ref(), &specs, &input, trials, &RngState::new(seed))?;
        let tolerance = args.tolerance.unwrap_or(specs[0].tolerance());
        let summary = CertSummary::new(&report, tolerance);
        if !summary.passed {
            status = Status::Failed;
        }
        out.insert("equivariance".into(), json!(summary));
    }
    emit(&to_json(&out), None)?;
    Ok(status)
}

fn check_mode(arg: ModeArg) -> CheckMode {
    match arg {
        ModeArg::Plain => CheckMode::Plain,
        ModeArg::MetricAware => CheckMode::MetricAware,
    }
}

fn einsum_check(src: &str, metric_arg: MetricArg, mode: ModeArg, dim: usize) -> Result<Status> {
    let expr = match einsum::parse(src) {
        Ok(expr) => expr,
        Err(equiscalar::Error::Syntax { offset, expected }) => {
            let report = json!({
                "valid": false,
                "syntax_error": { "offset": offset, "expected": expected },
            });
            emit(&to_json(&report), None)?;
            return Ok(Status::Failed);
        }
        Err(e) => return Err(e.into()),
    };
    let report = einsum::validate(&expr, &metric(metric_arg, dim), check_mode(mode));
    emit(&to_json(&report), None)?;
    Ok(if report.valid { Status::Passed } else { Status::Failed })
}

fn einsum_eval(src: &str, bind: &Path, dim: usize, metric_arg: MetricArg) -> Result<Status> {
    let expr = einsum::parse(src)?;
    let bindings: BTreeMap<String, Tensor> = serde_json::from_str(&read(bind)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", bind.display())))?;
    let value = einsum::evaluate(&expr, &bindings, &metric(metric_arg, dim))?;
    emit(&to_json(&json!({ "order": value.order(), "dim": value.dim(), "value": value })), None)?;
    Ok(Status::Passed)
}

fn train(args: &TrainArgs, verbose: bool) -> Result<Status> {
    let path = &args.config;
    let table: toml::Table =
        read(path)?.parse().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let has_seed = table.contains_key("seed");
    let mut config: TrainConfig =
        table.try_into().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    config.seed = match (args.seed, has_seed) {
        (Some(seed), _) => seed,
        (None, true) => config.seed,
        (None, false) => return Err(CliError::Usage("train needs a seed in the config or via --seed".into())),
    };
    if verbose {
        eprintln!("training {} samples for {} epochs", config.n_samples, config.epochs);
    }
    let outcome = mpnn::run_experiment(&config)?;
    let report = &outcome.report;
    if let Some(out) = &args.out {
        write(out, &to_json(&outcome.model))?;
    }
    if let Some(path) = &args.report {
        write(path, &mpnn::train::report_csv(report))?;
    }
    let initial = report.initial_val().unwrap_or(f64::NAN);
    let last = report.final_val().unwrap_or(f64::NAN);
    let summary = json!({
        "seed": config.seed,
        "epochs_run": report.rows.len().saturating_sub(1),
        "diverged": report.diverged,
        "initial_val_mse": initial,
        "final_val_mse": last,
        "best_val_mse": report.best_val(),
        "final_ratio": last / initial,
    });
    emit(&to_json(&summary), None)?;
    Ok(if report.diverged { Status::Failed } else { Status::Passed })
}

/// A spec file holds one spec or a list certified jointly.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SpecFile {
    One(SymmetrySpec),
    Many(Vec<SymmetrySpec>),
}

fn certify(args: &CertifyArgs, verbose: bool) -> Result<Status> {
    let seed = require_seed(args.seed, "certify")?;
    let given = match &args.spec {
        Some(path) => Some(
            match serde_json::from_str::<SpecFile>(&read(path)?)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            {
                SpecFile::One(spec) => vec![spec],
                SpecFile::Many(specs) => specs,
            },
        ),
        None => None,
    };
    let (target, specs) = resolve_target(&args.target, given)?;
    if verbose {
        let families: Vec<&str> = specs.iter().map(|s| s.family.name()).collect();
        eprintln!("certifying {} over {} with {} trials", args.target, families.join("+"), args.trials);
    }
    let report = harness::certify_joint(target.as_ref(), &specs, args.trials, &RngState::new(seed))?;
    // a joint run is held to the loosest family threshold
    let tolerance = args.tolerance.unwrap_or_else(|| specs.iter().map(SymmetrySpec::tolerance).fold(0.0, f64::max));
    if let Some(out) = &args.out {
        write(out, &to_json(&report))?;
    }
    let summary = CertSummary::new(&report, tolerance);
    emit(&to_json(&summary), None)?;
    Ok(if summary.passed { Status::Passed } else { Status::Failed })
}

type Resolved = (Box<dyn Target>, Vec<SymmetrySpec>);

fn resolve_target(name: &str, given: Option<Vec<SymmetrySpec>>) -> Result<Resolved> {
    let (target, default): (Box<dyn Target>, Vec<SymmetrySpec>) = if name == "gram" {
        let kind = match given.as_ref().and_then(|s| s.first()).map(|s| s.family) {
            Some(GroupFamily::Lorentz | GroupFamily::Poincare) => MetricKind::Minkowski,
            _ => MetricKind::Euclidean,
        };
        let spec = SymmetrySpec::new(GroupFamily::Orthogonal, 3, DEFAULT_SLOTS, OutputLaw::ScalarInvariant);
        (Box::new(targets::gram_entries(kind)), vec![spec])
    } else if name == "energy" {
        let specs = particle_specs(3, DEFAULT_PARTICLES, OutputLaw::ScalarInvariant, false);
        (Box::new(targets::energy(1.0)), specs)
    } else if name == "emforce" {
        let specs = particle_specs(3, DEFAULT_PARTICLES, OutputLaw::VectorTranslationInvariant, true);
        (Box::new(targets::em_force(1.0, 1.0, ForceForm::Scalar)), specs)
    } else if let Some(path) = name.strip_prefix("model:") {
        model_target(Path::new(path))?
    } else if let Some(src) = name.strip_prefix("einsum:") {
        einsum_target(src, given.as_deref())?
    } else {
        return Err(CliError::Usage(format!(
            "unknown target `{name}`; expected gram, energy, emforce, model:FILE or einsum:EXPR"
        )));
    };
    Ok((target, given.unwrap_or(default)))
}

fn model_target(path: &Path) -> Result<Resolved> {
    let value: Value =
        serde_json::from_str(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| CliError::Usage(format!("{}: {e}", path.display()));
    if value.get("coefficients").is_some() {
        let file: ModelFile = serde_json::from_value(value).map_err(bad)?;
        let model = EquivariantModel::from_file(&file)?;
        let translates = matches!(model.family, GroupFamily::Euclidean | GroupFamily::Poincare);
        let layout = if translates { Role::Position } else { Role::Free };
        let output = match model.mode {
            TranslationMode::Equivariant if translates => OutputLaw::VectorEquivariant,
            _ => OutputLaw::VectorTranslationInvariant,
        };
        let spec = SymmetrySpec::new(model.family, file.dim, DEFAULT_SLOTS, output).with_layout(vec![layout]);
        Ok((Box::new(targets::equivariant_model(model)), vec![spec]))
    } else {
        let model: MpnnModel = serde_json::from_value(value).map_err(bad)?;
        let specs = particle_specs(3, model.n_particles, OutputLaw::VectorTranslationInvariant, true);
        Ok((Box::new(targets::mpnn(model)), specs))
    }
}

fn einsum_target(src: &str, given: Option<&[SymmetrySpec]>) -> Result<Resolved> {
    let expr = einsum::parse(src)?;
    let lorentzian = given
        .and_then(|s| s.first())
        .is_some_and(|s| matches!(s.family, GroupFamily::Lorentz | GroupFamily::Poincare));
    let kind = if lorentzian { MetricKind::Minkowski } else { MetricKind::Euclidean };
    let report = einsum::validate(&expr, &Metric { kind, dim: 3 }, CheckMode::Plain);
    if !report.valid {
        return Err(CliError::Usage(format!("`{src}` is not a valid expression: {}", to_json(&report.violations))));
    }
    let has_eps = expr.terms.iter().flat_map(|t| &t.factors).any(|f| f.kind == FactorKind::Epsilon);
    // eps makes outputs pseudo-tensors, so only rotations are certified by default
    let family = if has_eps { GroupFamily::Rotation } else { GroupFamily::Orthogonal };
    let output = match report.output_order {
        0 => OutputLaw::ScalarInvariant,
        1 => OutputLaw::VectorTranslationInvariant,
        _ => OutputLaw::TensorEquivariant,
    };
    let slots = expr.tensor_names().len().max(1);
    let spec = SymmetrySpec::new(family, 3, slots, output);
    Ok((Box::new(targets::einsum(expr, kind)), vec![spec]))
}
