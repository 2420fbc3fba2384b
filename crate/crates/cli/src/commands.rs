use std::io::Write;
use std::path::Path;

use genbound::bounds_vc::optimize_v;
use genbound::covering::{exact_cover_size, greedy_cover, CoverMethod, EntropyEstimate, EntropyKind};
use genbound::hypothesis::evaluate_class;
use genbound::mixing::{block_indices, two_state_symmetric};
use genbound::rademacher::{massart_bound, rademacher_exact, rademacher_mc};
use genbound::simulate::coverage::presets;
use genbound::simulate::{coverage_experiment, CoverageConfig, CoverageReport, Covariates};
use genbound::{FunctionTable, HypothesisClass, ParamGrid, SequentialSample};
use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::failure::Failure;
use crate::schema::{opt, req, violations, Field, Ty};
use crate::{formulas, Cli, Command, Format};

/// Largest sample size for which `mode = auto` enumerates sign vectors.
const AUTO_EXACT_MAX_N: usize = 20;
const DEFAULT_DRAWS: usize = 10_000;
const DEFAULT_MC_SEED: u64 = 0;

pub struct Artifact {
    document: Value,
    csv: Option<Vec<u8>>,
}

impl Artifact {
    pub fn write(&self, out: Option<&Path>, format: Format) -> Result<(), Failure> {
        let bytes = match format {
            Format::Json => {
                let mut s = serde_json::to_vec_pretty(&self.document).map_err(|e| Failure::Compute(e.to_string()))?;
                s.push(b'\n');
                s
            }
            Format::Csv => self.csv.clone().ok_or_else(|| Failure::invalid("format: this command has no csv output"))?,
        };
        match out {
            Some(path) => std::fs::write(path, bytes)
                .map_err(|e| Failure::Compute(format!("cannot write {}: {e}", path.display()))),
            None => std::io::stdout().write_all(&bytes).map_err(Failure::from),
        }
    }
}

fn artifact(command: &str, echo: &impl Serialize, outputs: Value, seed: Option<u64>) -> Result<Artifact, Failure> {
    let echo = serde_json::to_value(echo).map_err(|e| Failure::Compute(e.to_string()))?;
    info!("{command}: resolved parameters {echo}");
    Ok(Artifact {
        document: json!({
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "inputs_echo": echo,
            "outputs": outputs,
        }),
        csv: None,
    })
}

fn checked<T: DeserializeOwned>(doc: &Value, fields: &[Field]) -> Result<T, Failure> {
    let problems = violations(doc, fields);
    if !problems.is_empty() {
        return Err(Failure::Validation(problems));
    }
    serde_json::from_value(doc.clone()).map_err(|e| Failure::invalid(e.to_string()))
}

fn required(params: Option<Value>, command: &str) -> Result<Value, Failure> {
    params.ok_or_else(|| Failure::invalid(format!("params: `{command}` needs a parameter document (--params)")))
}

fn to_value(v: &impl Serialize) -> Result<Value, Failure> {
    serde_json::to_value(v).map_err(|e| Failure::Compute(e.to_string()))
}

pub fn execute(cli: &Cli, params: Option<Value>) -> Result<Artifact, Failure> {
    match &cli.command {
        Command::Bound { list: true, .. } => list_formulas(),
        Command::Bound { formula, .. } => bound(formula.as_deref().unwrap_or_default(), required(params, "bound")?),
        Command::OptimizeConstants => optimize_constants(params),
        Command::Rademacher => rademacher(required(params, "rademacher")?, cli.seed),
        Command::Cover => cover(required(params, "cover")?),
        Command::Entropy => entropy(required(params, "entropy")?),
        Command::MixingDemo => mixing_demo(params, cli.seed),
        Command::Coverage { list: true, .. } => {
            artifact("coverage", &json!({}), json!({ "presets": presets::NAMES }), None)
        }
        Command::Coverage { preset, .. } => coverage(preset.as_deref(), params, cli.seed),
    }
}

fn list_formulas() -> Result<Artifact, Failure> {
    let list: Vec<Value> = formulas::FORMULAS
        .iter()
        .map(|f| {
            let fields: Vec<Value> = f
                .fields
                .iter()
                .map(|x| json!({ "name": x.name, "type": format!("{:?}", x.ty).to_lowercase(), "required": x.required }))
                .collect();
            json!({ "id": f.id, "summary": f.summary, "fields": fields })
        })
        .collect();
    artifact("bound", &json!({}), json!({ "formulas": list }), None)
}

fn bound(id: &str, doc: Value) -> Result<Artifact, Failure> {
    let formula = formulas::find(id)
        .ok_or_else(|| Failure::invalid(format!("formula: unknown id `{id}`; `genbound bound --list` shows the available ids")))?;
    let problems = violations(&doc, formula.fields);
    if !problems.is_empty() {
        return Err(Failure::Validation(problems));
    }
    let (value, details) = formula.evaluate(&doc)?;
    let mut outputs = json!({ "bound": value, "formula_id": id, "params": doc });
    if let Some(d) = details {
        outputs["details"] = d;
    }
    artifact("bound", &json!({ "formula": id, "params": doc }), outputs, None)
}

fn optimize_constants(params: Option<Value>) -> Result<Artifact, Failure> {
    let doc = params.unwrap_or_else(|| json!({}));
    let problems = violations(&doc, &[]);
    if !problems.is_empty() {
        return Err(Failure::Validation(problems));
    }
    artifact("optimize-constants", &doc, to_value(&optimize_v())?, None)
}

/// Either an explicit table or a class evaluated on a sample.
#[derive(Debug, Serialize, Deserialize)]
struct TableSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<HypothesisClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sample: Option<SequentialSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<ParamGrid>,
}

const SOURCE_FIELDS: [Field; 4] =
    [opt("table", Ty::Array), opt("class", Ty::Object), opt("sample", Ty::Object), opt("grid", Ty::Object)];

impl TableSource {
    fn table(&self) -> Result<FunctionTable, Failure> {
        match (&self.table, &self.class, &self.sample) {
            (Some(rows), None, None) if self.grid.is_none() => Ok(FunctionTable::from_rows(rows.clone())?),
            (None, Some(class), Some(sample)) => Ok(evaluate_class(class, sample, self.grid.as_ref())?),
            _ => Err(Failure::invalid("table: provide either `table` or both `class` and `sample` (with optional `grid`)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Mode {
    Auto,
    Exact,
    MonteCarlo,
}

fn default_draws() -> usize {
    DEFAULT_DRAWS
}

#[derive(Debug, Serialize, Deserialize)]
struct RademacherParams {
    #[serde(flatten)]
    source: TableSource,
    #[serde(default = "auto")]
    mode: Mode,
    #[serde(default = "default_draws")]
    draws: usize,
}

fn auto() -> Mode {
    Mode::Auto
}

fn rademacher(doc: Value, seed: Option<u64>) -> Result<Artifact, Failure> {
    let fields = [&SOURCE_FIELDS[..], &[opt("mode", Ty::String), opt("draws", Ty::Count)]].concat();
    let p: RademacherParams = checked(&doc, &fields)?;
    let table = p.source.table()?;
    let exact = match p.mode {
        Mode::Exact => true,
        Mode::MonteCarlo => false,
        Mode::Auto => table.n() <= AUTO_EXACT_MAX_N,
    };
    let (estimate, used_seed) = if exact {
        (rademacher_exact(&table)?, None)
    } else {
        let s = seed.unwrap_or(DEFAULT_MC_SEED);
        (rademacher_mc(&table, p.draws, s)?, Some(s))
    };
    let outputs = json!({
        "estimate": estimate,
        "normalized": estimate.value / table.n() as f64,
        "m": table.m(),
        "n": table.n(),
        "envelope_l2": table.envelope_l2(),
        "massart_bound": massart_bound(&table),
    });
    artifact("rademacher", &p, outputs, used_seed)
}

fn greedy() -> CoverMethod {
    CoverMethod::Greedy
}

#[derive(Debug, Serialize, Deserialize)]
struct CoverParams {
    #[serde(flatten)]
    source: TableSource,
    radii: Vec<f64>,
    #[serde(default = "greedy")]
    method: CoverMethod,
}

fn cover(doc: Value) -> Result<Artifact, Failure> {
    let fields = [&SOURCE_FIELDS[..], &[req("radii", Ty::Array), opt("method", Ty::String)]].concat();
    let p: CoverParams = checked(&doc, &fields)?;
    if p.radii.is_empty() {
        return Err(Failure::invalid("radii: need at least one radius"));
    }
    let table = p.source.table()?;
    let covers = p
        .radii
        .iter()
        .map(|&r| {
            let c = match p.method {
                CoverMethod::Greedy => greedy_cover(&table, r)?,
                CoverMethod::Exact => exact_cover_size(&table, r)?,
            };
            let mut v = to_value(&c)?;
            v["log_size"] = json!((c.size as f64).ln());
            Ok(v)
        })
        .collect::<Result<Vec<Value>, Failure>>()?;
    artifact("cover", &p, json!({ "m": table.m(), "n": table.n(), "covers": covers }), None)
}

#[derive(Debug, Serialize, Deserialize)]
struct EntropyParams {
    entropy: EntropyKind,
    radii: Vec<f64>,
}

fn entropy(doc: Value) -> Result<Artifact, Failure> {
    let p: EntropyParams = checked(&doc, &[req("entropy", Ty::Object), req("radii", Ty::Array)])?;
    let estimate = match p.entropy {
        EntropyKind::Vc { v, b } => EntropyEstimate::vc(v, b)?,
        EntropyKind::NeuralNet { d, units, b } => EntropyEstimate::neural_net(d, units, b)?,
        EntropyKind::Custom { .. } => return Err(Failure::invalid("entropy: kind must be vc or neural_net")),
    };
    let values = p
        .radii
        .iter()
        .map(|&r| Ok(json!({ "r": r, "log_cover": estimate.eval(r)? })))
        .collect::<Result<Vec<Value>, Failure>>()?;
    let outputs = json!({
        "validity": { "lower": estimate.lower, "upper": estimate.upper, "upper_open": estimate.upper_open },
        "tag": estimate.tag(),
        "values": values,
    });
    artifact("entropy", &p, outputs, None)
}

#[derive(Debug, Serialize, Deserialize)]
struct MixingDemoParams {
    #[serde(default = "MixingDemoParams::stay")]
    stay: f64,
    #[serde(default = "MixingDemoParams::n")]
    n: usize,
    #[serde(default = "MixingDemoParams::delta")]
    delta: f64,
    #[serde(default = "MixingDemoParams::trials")]
    trials: usize,
    #[serde(default = "MixingDemoParams::base_seed")]
    base_seed: u64,
}

impl MixingDemoParams {
    fn stay() -> f64 {
        0.9
    }
    fn n() -> usize {
        presets::markov_blocked().n
    }
    fn delta() -> f64 {
        presets::markov_blocked().delta
    }
    fn trials() -> usize {
        presets::markov_blocked().trials
    }
    fn base_seed() -> u64 {
        presets::markov_blocked().base_seed
    }
}

fn mixing_demo(params: Option<Value>, seed: Option<u64>) -> Result<Artifact, Failure> {
    let doc = params.unwrap_or_else(|| json!({}));
    let fields = [
        opt("stay", Ty::Number),
        opt("n", Ty::Count),
        opt("delta", Ty::Number),
        opt("trials", Ty::Count),
        opt("base_seed", Ty::Count),
    ];
    let mut p: MixingDemoParams = checked(&doc, &fields)?;
    if let Some(s) = seed {
        p.base_seed = s;
    }
    let mut config = presets::markov_blocked();
    config.n = p.n;
    config.delta = p.delta;
    config.trials = p.trials;
    config.base_seed = p.base_seed;
    let genbound::simulate::Experiment::BlockedDeviationBound { model, .. } = &mut config.experiment else {
        unreachable!("the markov_blocked preset is a blocked deviation experiment")
    };
    if let Covariates::Markov { transition, .. } = &mut model.covariates {
        *transition = two_state_symmetric(p.stay)?;
    }
    let report = coverage_experiment(&config)?;
    let m = report.parameters["m"] as usize;
    let sizes: Vec<usize> = block_indices(p.n, m)?.iter().map(Vec::len).collect();
    let bound = report.parameters["bound"];
    let freq = report.failures as f64 / report.trials as f64;
    let capped = bound.min(1.0);
    let se = (capped * (1.0 - capped) / report.trials as f64).sqrt();
    let outputs = json!({
        "m": m,
        "blocks": {
            "count": sizes.len(),
            "min_size": sizes.iter().min(),
            "max_size": sizes.iter().max(),
        },
        "beta_m": report.parameters["beta_m"],
        "threshold": report.parameters["threshold"],
        "bound": bound,
        "empirical_freq": freq,
        "failures": report.failures,
        "trials": report.trials,
        "within_3se": freq <= bound + 3.0 * se,
    });
    let mut art = artifact("mixing-demo", &p, outputs, Some(p.base_seed))?;
    art.csv = Some(csv_bytes(&report)?);
    Ok(art)
}

fn csv_bytes(report: &CoverageReport) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    Ok(buf)
}

fn coverage(preset: Option<&str>, params: Option<Value>, seed: Option<u64>) -> Result<Artifact, Failure> {
    let mut config: CoverageConfig = match (preset, params) {
        (Some(name), None) => presets::by_name(name).ok_or_else(|| {
            Failure::invalid(format!("preset: unknown name `{name}`; available: {}", presets::NAMES.join(", ")))
        })?,
        (None, Some(doc)) => checked(
            &doc,
            &[
                req("n", Ty::Count),
                req("delta", Ty::Number),
                req("trials", Ty::Count),
                req("base_seed", Ty::Count),
                req("experiment", Ty::Object),
            ],
        )?,
        (Some(_), Some(_)) => return Err(Failure::invalid("coverage: give either --preset or --params, not both")),
        (None, None) => return Err(Failure::invalid("coverage: needs --preset <name> or --params <config>")),
    };
    if let Some(s) = seed {
        config.base_seed = s;
    }
    let report = coverage_experiment(&config)?;
    let mut outputs = to_value(&report)?;
    outputs["passes"] = json!(report.passes());
    let mut art = artifact("coverage", &config, outputs, Some(config.base_seed))?;
    art.csv = Some(csv_bytes(&report)?);
    Ok(art)
}
