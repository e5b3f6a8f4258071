use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use sotif_core::catalog::{Catalog, ListFilter};
use sotif_core::classify::{classify_tc, find_threshold, ThresholdOutcome, TolerableWindow};
use sotif_core::constraints::{
    apply_to_scenario, compose, load_condition, validate_condition, ConditionSource, ConstrainedScenario,
    EffectiveConstraintSet,
};
use sotif_core::ontology::{lint_ontology, load_ontology, Ontology};
use sotif_core::scenario::{lint_scenario, Scenario};
use sotif_core::simkernel::{read_results, results_to_jsonl, run_matrix, CaseResult, SimConfig};
use sotif_core::testgen::{generate_grid, generate_pairwise, read_cases, Levels, TestMatrix};
use sotif_core::{corpus, report::ValidationReport, EntityId};

use crate::error::{CliError, CliResult, Code};
use crate::{CatalogCommand, Cli, Command, DocKind, GenArgs, ThresholdArgs};

pub fn run(cli: &Cli) -> CliResult<Code> {
    let ctx = Context { cli };
    match &cli.command {
        Command::Validate { kind, file, ontology } => ctx.validate(*kind, file, ontology.as_deref()),
        Command::Compose { tcs } => ctx.compose(tcs).map(|_| Code::Success),
        Command::Gen(args) => ctx.gen(args).map(|_| Code::Success),
        Command::Run { matrix, traces, output } => {
            ctx.run(matrix, traces.as_deref(), output.as_deref()).map(|_| Code::Success)
        }
        Command::Classify { nominal, tc_results, windows } => {
            ctx.classify(nominal, tc_results, windows.as_deref()).map(|_| Code::Success)
        }
        Command::Threshold(args) => ctx.threshold(args).map(|_| Code::Success),
        Command::Catalog(cmd) => ctx.catalog_command(cmd).map(|_| Code::Success),
    }
}

struct Context<'a> {
    cli: &'a Cli,
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("output serializes")
}

fn param_id(path: &str) -> CliResult<EntityId> {
    EntityId::parse(path).map_err(|e| CliError::new(Code::Usage, e.to_string()))
}

fn load_windows(path: Option<&Path>) -> CliResult<TolerableWindow> {
    let Some(path) = path else {
        return Ok(TolerableWindow::default());
    };
    let w: TolerableWindow = serde_json::from_str(&read_file(path)?)
        .map_err(|e| CliError::new(Code::Validation, format!("{}: {e}", path.display())))?;
    w.check()?;
    Ok(w)
}

fn load_results(path: &Path) -> CliResult<Vec<CaseResult>> {
    read_results(&read_file(path)?).map_err(|e| CliError::new(Code::Io, format!("{}: {e}", path.display())))
}

impl Context<'_> {
    fn out(&self, text: &str) {
        let mut stdout = std::io::stdout().lock();
        let _ = stdout.write_all(text.as_bytes());
        if !text.ends_with('\n') {
            let _ = stdout.write_all(b"\n");
        }
    }

    /// Prints `value` as JSON under `--json`, `text` otherwise.
    fn emit(&self, value: &impl Serialize, text: impl FnOnce() -> String) {
        if self.cli.json {
            self.out(&to_json(value));
        } else {
            self.out(&text());
        }
    }

    fn note(&self, msg: impl AsRef<str>) {
        eprintln!("{}", msg.as_ref());
    }

    fn catalog(&self) -> CliResult<Catalog> {
        let root = self.cli.catalog.as_ref().ok_or_else(|| {
            CliError::new(Code::Usage, "no catalog: pass --catalog <dir> or set SOTIF_CATALOG")
        })?;
        Ok(Catalog::open(root)?)
    }

    fn workers(&self) -> usize {
        self.cli
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    fn scenario_with(&self, cat: &Catalog, id: &str, tcs: &[String]) -> CliResult<(Scenario, ConstrainedScenario)> {
        let s = cat.get_scenario(id)?;
        let o = cat.ontology()?;
        let ecs = if tcs.is_empty() {
            EffectiveConstraintSet::default()
        } else {
            compose(tcs, &cat.conditions()?, &o)?
        };
        let cs = apply_to_scenario(&ecs, &s, &o)?;
        Ok((s, cs))
    }

    // --- validate -----------------------------------------------------------

    fn reference_ontology(&self, file: Option<&Path>) -> CliResult<Ontology> {
        if let Some(path) = file {
            return load_ontology(&read_file(path)?)
                .map_err(|e| CliError::new(Code::Validation, format!("{}: {e}", path.display())));
        }
        match &self.cli.catalog {
            Some(_) => Ok(self.catalog()?.ontology()?),
            None => Ok(corpus::ontology()),
        }
    }

    fn reference_conditions(&self) -> CliResult<Box<dyn ConditionSource>> {
        match &self.cli.catalog {
            Some(_) => Ok(Box::new(self.catalog()?.conditions()?)),
            None => Ok(Box::new(corpus::conditions())),
        }
    }

    fn validate(&self, kind: DocKind, file: &Path, ontology: Option<&Path>) -> CliResult<Code> {
        let text = read_file(file)?;
        let report = match kind {
            DocKind::Ontology => lint_ontology(&text),
            DocKind::Scenario => lint_scenario(&text, &self.reference_ontology(ontology)?),
            DocKind::Tc => match load_condition(&text) {
                Ok(tc) => {
                    let o = self.reference_ontology(ontology)?;
                    let source = self.reference_conditions()?;
                    validate_condition(&tc, &o, Some(source.as_ref()))
                }
                Err(e) => {
                    let mut r = ValidationReport::new();
                    r.error("<document>", e.to_string());
                    r
                }
            },
        };
        self.emit(
            &json!({ "file": file, "ok": report.is_empty(), "findings": report }),
            || report.to_string(),
        );
        Ok(if report.is_empty() { Code::Success } else { Code::Validation })
    }

    // --- compose ------------------------------------------------------------

    fn compose(&self, tcs: &[String]) -> CliResult {
        let cat = self.catalog()?;
        let ecs = compose(tcs, &cat.conditions()?, &cat.ontology()?)?;
        for w in &ecs.warnings {
            self.note(format!("warning: {}: {}", w.param, w.message));
        }
        self.out(&to_json(&ecs));
        Ok(())
    }

    // --- gen ----------------------------------------------------------------

    fn gen(&self, args: &GenArgs) -> CliResult {
        let cat = self.catalog()?;
        let (_, cs) = self.scenario_with(&cat, &args.scenario, &args.tcs)?;
        let mut levels = Levels::uniform(args.levels);
        for (p, k) in &args.level {
            levels = levels.with(param_id(p)?, *k);
        }
        let matrix = if args.pairwise {
            generate_pairwise(&cs, &levels, self.cli.seed)?
        } else {
            generate_grid(&cs, &levels)?
        };
        self.note(format!(
            "{} cases for `{}` ({})",
            matrix.len(),
            matrix.scenario_id,
            matrix.provenance.label()
        ));
        self.write_output(args.output.as_deref(), &matrix.to_jsonl(), || summary(&matrix), &matrix.cases)
    }

    /// Writes a JSON-lines body to `output` or stdout. Under `--json` stdout
    /// gets either the summary (file output) or the records as one array.
    fn write_output<T: Serialize>(
        &self,
        output: Option<&Path>,
        jsonl: &str,
        summary: impl FnOnce() -> serde_json::Value,
        records: &[T],
    ) -> CliResult {
        match output {
            Some(path) => {
                write_file(path, jsonl)?;
                if self.cli.json {
                    let mut s = summary();
                    s["output"] = json!(path);
                    self.out(&to_json(&s));
                }
            }
            None if self.cli.json => self.out(&to_json(&records)),
            None => print!("{jsonl}"),
        }
        Ok(())
    }

    // --- run ----------------------------------------------------------------

    fn run(&self, matrix: &Path, traces: Option<&Path>, output: Option<&Path>) -> CliResult {
        let cases = read_cases(&read_file(matrix)?)?;
        let Some(first) = cases.first() else {
            return Err(CliError::new(Code::Validation, format!("{}: empty matrix", matrix.display())));
        };
        if let Some(other) = cases.iter().find(|c| c.scenario_id != first.scenario_id) {
            return Err(CliError::new(
                Code::Validation,
                format!("matrix mixes scenarios `{}` and `{}`", first.scenario_id, other.scenario_id),
            ));
        }
        let s = self.catalog()?.get_scenario(&first.scenario_id)?;
        let runs = run_matrix(
            &cases,
            &s,
            &s.function_under_test(),
            &SimConfig::default(),
            self.workers(),
            traces.is_some(),
        )?;
        if let Some(dir) = traces {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            for (r, trace) in &runs {
                if let Some(trace) = trace {
                    write_file(&dir.join(format!("case_{:05}.csv", r.case_index)), &trace.to_csv())?;
                }
            }
        }
        let results: Vec<CaseResult> = runs.into_iter().map(|(r, _)| r).collect();
        let collisions = results.iter().filter(|r| r.report.collision).count();
        self.note(format!("{} cases simulated, {collisions} collisions", results.len()));
        self.write_output(
            output,
            &results_to_jsonl(&results),
            || json!({ "scenario_id": first.scenario_id, "cases": results.len(), "collisions": collisions }),
            &results,
        )
    }

    // --- classify -----------------------------------------------------------

    fn classify(&self, nominal: &Path, tc_results: &Path, windows: Option<&Path>) -> CliResult {
        let w = load_windows(windows)?;
        let c = classify_tc(&load_results(nominal)?, &load_results(tc_results)?, &w)?;
        self.emit(&c, || c.to_markdown());
        Ok(())
    }

    // --- threshold ----------------------------------------------------------

    fn threshold(&self, args: &ThresholdArgs) -> CliResult {
        let cat = self.catalog()?;
        let param = param_id(&args.param)?;
        cat.ontology()?
            .resolve_param(&param)
            .map_err(|e| CliError::new(Code::Validation, e.to_string()))?;
        let (s, cs) = self.scenario_with(&cat, &args.scenario, &args.tcs)?;
        let mut fixed: BTreeMap<EntityId, f64> = cs
            .params
            .iter()
            .filter(|(p, _)| **p != param)
            .map(|(p, d)| (p.clone(), d.realize(d.range.midpoint())))
            .collect();
        for (p, v) in &args.fix {
            fixed.insert(param_id(p)?, *v);
        }
        let w = load_windows(args.windows.as_deref())?;
        let outcome = find_threshold(
            &param,
            args.lo,
            args.hi,
            &fixed,
            &s,
            &s.function_under_test(),
            &w,
            args.tol,
            &SimConfig::default(),
        )?;
        let doc = json!({ "param": param, "fixed": fixed, "outcome": outcome });
        match &outcome {
            ThresholdOutcome::Boundary { value, tol, iterations } => {
                self.emit(&doc, || format!("{param}: boundary at {value} ± {} ({iterations} iterations)", tol / 2.0));
                Ok(())
            }
            ThresholdOutcome::NonMonotone { sweep } => {
                let points: Vec<String> = sweep.iter().map(|(x, v)| format!("{x}: {v}")).collect();
                if self.cli.json {
                    self.out(&to_json(&doc));
                }
                Err(CliError::new(
                    Code::Validation,
                    format!("verdict is not monotone in {param} on [{}, {}]: {}", args.lo, args.hi, points.join(", ")),
                ))
            }
        }
    }

    // --- catalog ------------------------------------------------------------

    fn catalog_command(&self, cmd: &CatalogCommand) -> CliResult {
        match cmd {
            CatalogCommand::Init => {
                let root = self.cli.catalog.as_ref().ok_or_else(|| {
                    CliError::new(Code::Usage, "no catalog: pass --catalog <dir> or set SOTIF_CATALOG")
                })?;
                Catalog::init(root)?;
                self.emit(&json!({ "root": root }), || format!("initialized {}", root.display()));
            }
            CatalogCommand::Add { kind, file, id } => {
                let cat = self.catalog()?;
                let text = read_file(file)?;
                let entry = match id {
                    Some(id) => cat.add_as(*kind, id, &text)?,
                    None => cat.add(*kind, &text)?,
                };
                self.emit(&entry, || format!("added {} `{}`", entry.kind, entry.id));
            }
            CatalogCommand::List { kind, odd_tag, element_kind } => {
                let filter = ListFilter {
                    odd_tag: odd_tag.clone(),
                    element_kind: element_kind.clone(),
                };
                let entries = self.catalog()?.list(*kind, &filter)?;
                self.emit(&entries, || {
                    entries
                        .iter()
                        .map(|e| format!("{}\t{}\t{}", e.kind, e.id, e.path))
                        .collect::<Vec<_>>()
                        .join("\n")
                });
            }
            CatalogCommand::Get { kind, id } => {
                self.out(&self.catalog()?.read(*kind, id)?);
            }
            CatalogCommand::Rebuild => {
                let index = self.catalog()?.rebuild()?;
                self.emit(&index, || format!("rebuilt index: {} entries", index.entries.len()));
            }
        }
        Ok(())
    }
}

fn summary(m: &TestMatrix) -> serde_json::Value {
    json!({
        "scenario_id": m.scenario_id,
        "provenance": m.provenance,
        "cases": m.len(),
        "domains": m.domains,
    })
}
