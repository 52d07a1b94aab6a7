//! Run configuration: a TOML document validated key by key.
//!
//! Every problem is collected with the line of the offending key, so a bad
//! file reports all of its errors at once.

use std::fmt;
use std::path::PathBuf;

use dse_core::dse::{SolverConfig, TieBreak};
use dse_core::hne::HneConfig;
use dse_core::oracle::OracleGrid;
use dse_core::scenarios::{self, MicrogridParams, WirelessParams, SCENARIO_NAMES};
use dse_core::GameDefinition;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::de::{DeTable, DeValue};
use toml::{Table, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Wdse,
    Sdse,
    EpsWdse,
    Hne,
    Consistency,
    Oracle,
    Sweep,
    Bench,
}

pub const MODE_NAMES: [&str; 8] = [
    "wdse",
    "sdse",
    "eps_wdse",
    "hne",
    "consistency",
    "oracle",
    "sweep",
    "bench",
];

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "wdse" => Mode::Wdse,
            "sdse" => Mode::Sdse,
            "eps_wdse" => Mode::EpsWdse,
            "hne" => Mode::Hne,
            "consistency" => Mode::Consistency,
            "oracle" => Mode::Oracle,
            "sweep" => Mode::Sweep,
            "bench" => Mode::Bench,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        MODE_NAMES[self as usize]
    }
}

/// Scenario name with its parameter overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Table::is_empty")]
    pub params: Table,
}

impl ScenarioSpec {
    pub fn build(&self) -> dse_core::Result<GameDefinition> {
        self.build_with(&self.params)
    }

    /// Build with `params` in place of the stored overrides.
    pub fn build_with(&self, params: &Table) -> dse_core::Result<GameDefinition> {
        let bad = |e: toml::de::Error| dse_core::Error::Config(e.message().to_string());
        match self.name.as_str() {
            "wireless" => scenarios::build_wireless(&params.clone().try_into::<WirelessParams>().map_err(bad)?),
            "microgrid" => scenarios::build_microgrid(&params.clone().try_into::<MicrogridParams>().map_err(bad)?),
            "nonexistence" | "robustness" if params.is_empty() => scenarios::build_toy(&self.name),
            "nonexistence" | "robustness" => Err(dse_core::Error::Config(format!(
                "scenario `{}` takes no parameters",
                self.name
            ))),
            _ => scenarios::build_by_name(&self.name),
        }
    }

    /// Overrides merged over the scenario defaults.
    pub fn effective_params(&self) -> Table {
        let full = match self.name.as_str() {
            "wireless" => self.params.clone().try_into::<WirelessParams>().ok().and_then(|p| Table::try_from(p).ok()),
            "microgrid" => self.params.clone().try_into::<MicrogridParams>().ok().and_then(|p| Table::try_from(p).ok()),
            _ => None,
        };
        full.unwrap_or_else(|| self.params.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub param1: String,
    pub values1: Vec<f64>,
    pub param2: String,
    pub values2: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub coupling_scale: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![50, 100, 150, 200, 250],
            coupling_scale: 0.1,
        }
    }
}

/// Gap-width study for `eps_wdse`: the bracket is bisected `halvings` times
/// around the zero of `f2` under the first deception parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapStudyConfig {
    pub bracket: [f64; 2],
    #[serde(default = "default_halvings")]
    pub halvings: usize,
    #[serde(default = "default_true")]
    pub oracle: bool,
}

fn default_halvings() -> usize {
    3
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
    pub solver: SolverConfig,
    pub hne: HneConfig,
    pub oracle: OracleGrid,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    pub bench: BenchConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_study: Option<GapStudyConfig>,
}

impl RunConfig {
    /// The effective configuration as TOML, with every default filled in.
    pub fn to_toml(&self) -> String {
        let mut echo = self.clone();
        if let Some(s) = &mut echo.scenario {
            s.params = s.effective_params();
        }
        toml::to_string(&echo).unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

struct Doc<'a> {
    text: &'a str,
    spans: Option<DeTable<'a>>,
    issues: Vec<ConfigIssue>,
}

impl<'a> Doc<'a> {
    fn line_at(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    /// Line of the key at `path`, or of its closest existing ancestor.
    fn line_of(&self, path: &[&str]) -> Option<usize> {
        let mut table = self.spans.as_ref()?;
        let mut line = None;
        for key in path {
            let Some((k, v)) = table.iter().find(|(k, _)| k.get_ref().as_ref() == *key) else {
                break;
            };
            line = Some(self.line_at(k.span().start));
            match v.get_ref() {
                DeValue::Table(t) => table = t,
                _ => break,
            }
        }
        line
    }

    fn push(&mut self, path: &[&str], message: impl Into<String>) {
        let line = self.line_of(path);
        self.issues.push(ConfigIssue {
            line,
            message: message.into(),
        });
    }

    /// Deserialize a section one key at a time over the defaults, recording
    /// each rejected key at its own line.
    fn section<T: Serialize + DeserializeOwned + Default>(&mut self, name: &str, value: Option<&Value>) -> T {
        let Some(value) = value else {
            return T::default();
        };
        let Some(user) = value.as_table() else {
            self.push(&[name], format!("`{name}` must be a table"));
            return T::default();
        };
        let mut current = Table::try_from(T::default()).unwrap_or_default();
        for (k, v) in user {
            let mut candidate = current.clone();
            candidate.insert(k.clone(), v.clone());
            match candidate.clone().try_into::<T>() {
                Ok(_) => current = candidate,
                Err(e) => self.push(&[name, k], format!("{name}.{k}: {}", e.message())),
            }
        }
        current.try_into().unwrap_or_default()
    }

    /// Attach semantic validation messages to the first key they mention.
    fn anchored(&mut self, section: &str, keys: &[&str], messages: Vec<String>) {
        for m in messages {
            // the key named earliest in the message, longest on ties
            let key = keys
                .iter()
                .filter_map(|k| m.find(*k).map(|at| (at, std::cmp::Reverse(k.len()), *k)))
                .min()
                .map(|(_, _, k)| k);
            match key {
                Some(k) if self.line_of(&[section, k]).is_some() => self.push(&[section, k], format!("{section}: {m}")),
                _ => self.push(&[section], format!("{section}: {m}")),
            }
        }
    }
}

const TOP_KEYS: [&str; 11] = [
    "mode",
    "seed",
    "output_dir",
    "workers",
    "scenario",
    "solver",
    "hne",
    "oracle",
    "sweep",
    "bench",
    "gap_study",
];

const SOLVER_KEYS: [&str; 17] = [
    "mode",
    "alpha0",
    "alpha_exponent",
    "sigma_c",
    "sigma_exponent",
    "max_outer",
    "x_inits",
    "x_tol_window",
    "x_tol",
    "grid_m",
    "zero_width",
    "y_grid",
    "gap_x_grid",
    "epsilon",
    "gaps",
    "freeze_y",
    "tie_tol",
];

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

/// Parse and validate a configuration. All problems are returned together.
pub fn validate_config(text: &str, overrides: &Overrides) -> Result<RunConfig, Vec<ConfigIssue>> {
    let root: Table = match text.parse::<Table>() {
        Ok(t) => t,
        Err(e) => {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            return Err(vec![ConfigIssue {
                line,
                message: e.message().to_string(),
            }]);
        }
    };
    let mut doc = Doc {
        text,
        spans: DeTable::parse(text).ok().map(|t| t.into_inner()),
        issues: Vec::new(),
    };

    for key in root.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            doc.push(&[key], format!("unknown key `{key}` (expected one of {})", TOP_KEYS.join(", ")));
        }
    }

    let mode_text = overrides
        .mode
        .clone()
        .or_else(|| root.get("mode").and_then(Value::as_str).map(str::to_string));
    let mode = match mode_text.as_deref() {
        None | Some("") => {
            if root.get("mode").is_some_and(|v| !v.is_str()) {
                doc.push(&["mode"], "mode must be a string");
            } else {
                doc.push(&["mode"], "mode required");
            }
            None
        }
        Some(m) => match Mode::parse(m) {
            Some(m) => Some(m),
            None => {
                doc.push(&["mode"], format!("unknown mode `{m}` (expected one of {})", MODE_NAMES.join(", ")));
                None
            }
        },
    };

    let seed = match (overrides.seed, root.get("seed")) {
        (Some(s), _) => s,
        (None, None) => 0,
        (None, Some(v)) => match v.as_integer().filter(|i| *i >= 0) {
            Some(i) => i as u64,
            None => {
                doc.push(&["seed"], "seed must be a nonnegative integer");
                0
            }
        },
    };
    let output_dir = match (&overrides.output_dir, root.get("output_dir")) {
        (Some(p), _) => p.clone(),
        (None, None) => PathBuf::from("out"),
        (None, Some(v)) => match v.as_str() {
            Some(s) => PathBuf::from(s),
            None => {
                doc.push(&["output_dir"], "output_dir must be a string");
                PathBuf::from("out")
            }
        },
    };
    let workers = match (overrides.workers, root.get("workers")) {
        (Some(w), _) => Some(w),
        (None, None) => None,
        (None, Some(v)) => match v.as_integer().filter(|i| *i > 0) {
            Some(i) => Some(i as usize),
            None => {
                doc.push(&["workers"], "workers must be a positive integer");
                None
            }
        },
    };
    if workers == Some(0) {
        doc.push(&["workers"], "workers must be a positive integer");
    }

    let scenario = scenario_section(&mut doc, root.get("scenario"));
    if scenario.is_none() && mode.is_some_and(|m| m != Mode::Bench) && root.get("scenario").is_none() {
        doc.push(&[], "scenario required (a [scenario] table with a `name`)");
    }

    let mut solver: SolverConfig = doc.section("solver", root.get("solver"));
    let mut hne: HneConfig = doc.section("hne", root.get("hne"));
    let oracle: OracleGrid = doc.section("oracle", root.get("oracle"));
    let bench: BenchConfig = doc.section("bench", root.get("bench"));
    let sweep = optional_section::<SweepConfig>(&mut doc, "sweep", root.get("sweep"));
    let gap_study = optional_section::<GapStudyConfig>(&mut doc, "gap_study", root.get("gap_study"));

    match mode {
        Some(Mode::Wdse) | Some(Mode::EpsWdse) => solver.mode = TieBreak::Weak,
        Some(Mode::Sdse) => solver.mode = TieBreak::Strong,
        _ => {}
    }
    if mode == Some(Mode::EpsWdse) && !(solver.epsilon > 0.0) {
        doc.push(&["solver", "epsilon"], "eps_wdse requires solver.epsilon > 0");
    }
    if mode != Some(Mode::EpsWdse) && solver.epsilon > 0.0 {
        doc.push(&["solver", "epsilon"], "solver.epsilon > 0 is only used in eps_wdse mode");
    }
    let solver_errs = solver.validation_errors();
    doc.anchored("solver", &SOLVER_KEYS, solver_errs);
    hne.mode = solver.mode;
    let hne_errs = hne.validation_errors();
    doc.anchored(
        "hne",
        &["damping", "max_br_rounds", "n_starts", "verify_step", "verify_tol", "t1_tol", "diff_tol", "nbhd_frac", "fd_step", "hne_match_tol", "n_samples", "y_grid"],
        hne_errs,
    );
    if oracle.nx < 2 || oracle.ny < 2 || oracle.nz < 2 {
        doc.push(&["oracle"], "oracle grid counts must be at least 2");
    }
    if mode == Some(Mode::Sweep) {
        match &sweep {
            None => doc.push(&[], "sweep mode requires a [sweep] table"),
            Some(s) => {
                if s.values1.is_empty() || s.values2.is_empty() {
                    doc.push(&["sweep"], "sweep values must be nonempty");
                }
                if let Some(sc) = &scenario {
                    let defaults = sc.effective_params();
                    for p in [&s.param1, &s.param2] {
                        if !defaults.get(p).is_some_and(|v| v.is_float() || v.is_integer()) {
                            doc.push(
                                &["sweep"],
                                format!("sweep parameter `{p}` is not a scalar parameter of `{}`", sc.name),
                            );
                        }
                    }
                }
            }
        }
    }
    if mode == Some(Mode::Bench) && (bench.sizes.is_empty() || bench.sizes.iter().any(|n| *n < 2)) {
        doc.push(&["bench", "sizes"], "bench.sizes must list sizes of at least 2");
    }
    if mode == Some(Mode::EpsWdse) {
        if let Some(g) = &gap_study {
            if !(g.bracket[0] < g.bracket[1]) {
                doc.push(&["gap_study", "bracket"], "gap_study.bracket must satisfy lo < hi");
            }
        }
    }

    if !doc.issues.is_empty() {
        doc.issues.sort_by_key(|i| i.line.unwrap_or(0));
        return Err(doc.issues);
    }
    Ok(RunConfig {
        mode: mode.expect("checked"),
        seed,
        output_dir,
        workers,
        scenario,
        solver,
        hne,
        oracle,
        sweep,
        bench,
        gap_study,
    })
}

fn optional_section<T: DeserializeOwned>(doc: &mut Doc<'_>, name: &str, value: Option<&Value>) -> Option<T> {
    let value = value?;
    match value.clone().try_into::<T>() {
        Ok(v) => Some(v),
        Err(e) => {
            doc.push(&[name], format!("{name}: {}", e.message()));
            None
        }
    }
}

fn scenario_section(doc: &mut Doc<'_>, value: Option<&Value>) -> Option<ScenarioSpec> {
    let value = value?;
    let Some(t) = value.as_table() else {
        doc.push(&["scenario"], "`scenario` must be a table");
        return None;
    };
    for k in t.keys() {
        if k != "name" && k != "params" {
            doc.push(&["scenario", k], format!("unknown key `scenario.{k}` (expected name, params)"));
        }
    }
    let name = match t.get("name").map(|v| v.as_str()) {
        Some(Some(n)) => n.to_string(),
        Some(None) => {
            doc.push(&["scenario", "name"], "scenario.name must be a string");
            return None;
        }
        None => {
            doc.push(&["scenario"], "scenario.name required");
            return None;
        }
    };
    if !SCENARIO_NAMES.contains(&name.as_str()) {
        doc.push(
            &["scenario", "name"],
            format!("unknown scenario `{name}` (available: {})", SCENARIO_NAMES.join(", ")),
        );
        return None;
    }
    let params = match t.get("params") {
        None => Table::new(),
        Some(Value::Table(p)) => p.clone(),
        Some(_) => {
            doc.push(&["scenario", "params"], "scenario.params must be a table");
            return None;
        }
    };
    let spec = ScenarioSpec { name, params };
    // type-check each override on its own so all bad keys are reported
    match spec.name.as_str() {
        "wireless" => check_params::<WirelessParams>(doc, &spec.params),
        "microgrid" => check_params::<MicrogridParams>(doc, &spec.params),
        _ => {
            if !spec.params.is_empty() {
                doc.push(&["scenario", "params"], format!("scenario `{}` takes no parameters", spec.name));
            }
        }
    }
    Some(spec)
}

fn check_params<T: Serialize + DeserializeOwned + Default>(doc: &mut Doc<'_>, params: &Table) {
    let mut current = Table::try_from(T::default()).unwrap_or_default();
    for (k, v) in params {
        let mut candidate = current.clone();
        candidate.insert(k.clone(), v.clone());
        match candidate.clone().try_into::<T>() {
            Ok(_) => current = candidate,
            Err(e) => doc.push(&["scenario", "params", k], format!("scenario.params.{k}: {}", e.message())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(text: &str) -> Result<RunConfig, Vec<ConfigIssue>> {
        validate_config(text, &Overrides::default())
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = check("mode = \"wdse\"\n[scenario]\nname = \"robustness\"\n").unwrap();
        assert_eq!(c.mode, Mode::Wdse);
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.seed, 0);
        let echo = c.to_toml();
        let again = check(&echo).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn missing_mode() {
        let errs = check("[scenario]\nname = \"robustness\"\n").unwrap_err();
        assert!(errs.iter().any(|e| e.message == "mode required"));
        let errs = check("mode = \"\"\n[scenario]\nname = \"robustness\"\n").unwrap_err();
        assert!(errs.iter().any(|e| e.message == "mode required" && e.line == Some(1)));
    }

    #[test]
    fn step_exponent_range() {
        let errs = check("mode = \"wdse\"\n[scenario]\nname = \"robustness\"\n[solver]\nalpha_exponent = 0.4\n").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("(0.5, 1]"), "{errs:?}");
        assert_eq!(errs[0].line, Some(5));
    }

    #[test]
    fn unknown_scenario_lists_registry() {
        let errs = check("mode = \"wdse\"\n[scenario]\nname = \"grid\"\n").unwrap_err();
        for name in SCENARIO_NAMES {
            assert!(errs[0].message.contains(name));
        }
        assert_eq!(errs[0].line, Some(3));
    }

    #[test]
    fn errors_are_aggregated_with_lines() {
        let text = "mode = \"eps_wdse\"\nbogus = 1\n[scenario]\nname = \"wireless\"\n[scenario.params]\nd1 = \"ten\"\nextra = 2\n[solver]\nmax_outer = -3\n";
        let errs = check(text).unwrap_err();
        let lines: Vec<Option<usize>> = errs.iter().map(|e| e.line).collect();
        assert!(errs.len() >= 5, "{errs:?}");
        for l in [2, 6, 7, 9] {
            assert!(lines.contains(&Some(l)), "{errs:?}");
        }
        assert!(errs.iter().any(|e| e.message.contains("epsilon")));
    }

    #[test]
    fn command_line_wins() {
        let o = Overrides {
            mode: Some("sdse".into()),
            seed: Some(9),
            workers: Some(2),
            output_dir: Some("elsewhere".into()),
        };
        let c = validate_config("mode = \"wdse\"\nseed = 1\n[scenario]\nname = \"robustness\"\n", &o).unwrap();
        assert_eq!(c.mode, Mode::Sdse);
        assert_eq!(c.solver.mode, TieBreak::Strong);
        assert_eq!(c.seed, 9);
        assert_eq!(c.workers, Some(2));
        assert_eq!(c.output_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn sweep_parameters_must_exist() {
        let text = "mode = \"sweep\"\n[scenario]\nname = \"wireless\"\n[sweep]\nparam1 = \"d1\"\nvalues1 = [1.0]\nparam2 = \"nope\"\nvalues2 = [1.0]\n";
        let errs = check(text).unwrap_err();
        assert!(errs.iter().any(|e| e.message.contains("nope")));
    }
}
