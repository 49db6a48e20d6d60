//! On-disk formats: the TOML system/policy config, hourly CSV series,
//! capacity sidecars, and JSON/CSV result writers.
//!
//! Loaders reject rather than repair malformed input. The one sanctioned
//! default: absent policy fields become explicit zeros with a warning.
//! Floats in result files carry 12 significant digits; CSV output is
//! comma-separated, `.` decimal, LF line endings, UTF-8.

use crate::bilevel::BilevelSolution;
use crate::equilibrium::{ExpansionPlan, KktReport, MarketOutcome, SolveStats};
use crate::model::{
    validate_policy, validate_system, ConvUnit, DemandCurve, EnergySystem, Line, Period,
    PolicySet, Scenario, ValidationReport, VreUnit,
};
use crate::repdays::{ClusterResult, HourlySeries, Representatives, SeriesKind, HOURS_PER_YEAR};
use crate::sweep::{SweepReport, SweepSolverChoice};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::path::Path;

pub const CONFIG_SCHEMA: &str = "gridplan/1";

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: parse error: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: unknown schema version {found:?}, expected {expected:?}")]
    Schema {
        path: String,
        found: String,
        expected: String,
    },
    #[error("{path}: {field}: {message}")]
    Field {
        path: String,
        field: String,
        message: String,
    },
    #[error("{path}: validation failed:\n{report}")]
    Validation { path: String, report: ValidationReport },
}

#[derive(Debug, thiserror::Error)]
pub enum WriteError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

// ---------------------------------------------------------------------------
// system config (TOML)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    pub schema: String,
    pub system: SystemSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSection {
    pub nodes: Vec<String>,
    pub producers: Vec<String>,
    #[serde(default)]
    pub budget_double_count: bool,
    pub scenarios: Vec<ScenarioRow>,
    pub periods: Vec<PeriodRow>,
    #[serde(default)]
    pub lines: Vec<LineRow>,
    #[serde(default)]
    pub conventional: Vec<ConvRow>,
    #[serde(default)]
    pub renewable: Vec<VreRow>,
    pub demand: Vec<DemandRow>,
    #[serde(default)]
    pub availability: Vec<AvailabilityRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub name: String,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodRow {
    pub name: String,
    pub hours: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineRow {
    pub from: String,
    pub to: String,
    pub capacity_mw: f64,
    pub maintenance_eur_per_mw: f64,
    pub investment_eur_per_mw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvRow {
    pub node: String,
    pub producer: String,
    pub kind: String,
    pub installed_mw: f64,
    pub operational_eur_per_mwh: f64,
    pub maintenance_eur_per_mw: f64,
    pub investment_eur_per_mw: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    #[serde(default = "default_true")]
    pub expandable: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VreRow {
    pub node: String,
    pub producer: String,
    pub kind: String,
    pub installed_mw: f64,
    pub maintenance_eur_per_mw: f64,
    pub investment_eur_per_mw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemandRow {
    pub scenario: String,
    pub period: String,
    pub node: String,
    pub intercept_eur_per_mwh: f64,
    pub slope_eur_per_mwh2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AvailabilityRow {
    pub kind: String,
    pub scenario: String,
    pub period: String,
    pub node: String,
    pub factor: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PolicySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teb_eur: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geb_eur: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carbon_tax_eur_per_mwh: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vre_incentive: Option<BTreeMap<String, f64>>,
}

/// A parsed, validated instance plus the policy and any default warnings.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub system: EnergySystem,
    pub policy: PolicySet,
    pub warnings: Vec<String>,
}

/// Loads, cross-references, and validates a system/policy config.
pub fn load_system(path: &Path) -> Result<LoadedSystem, LoadError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: display.clone(),
        source,
    })?;
    let config: SystemConfig = toml::from_str(&text).map_err(|e| LoadError::Parse {
        path: display.clone(),
        message: e.to_string(),
    })?;
    system_from_config(&config, &display)
}

/// Same cross-referencing as [`load_system`], usable on an in-memory config.
pub fn system_from_config(
    config: &SystemConfig,
    path: &str,
) -> Result<LoadedSystem, LoadError> {
    if config.schema != CONFIG_SCHEMA {
        return Err(LoadError::Schema {
            path: path.into(),
            found: config.schema.clone(),
            expected: CONFIG_SCHEMA.into(),
        });
    }
    let sec = &config.system;
    let field_err = |field: &str, message: String| LoadError::Field {
        path: path.into(),
        field: field.into(),
        message,
    };
    let lookup = |list: &[String], name: &str, field: &str| -> Result<usize, LoadError> {
        list.iter()
            .position(|n| n == name)
            .ok_or_else(|| field_err(field, format!("unknown name {name:?}")))
    };

    // derive kind lists in first-seen order
    let mut conv_kinds: Vec<String> = Vec::new();
    for row in &sec.conventional {
        if !conv_kinds.contains(&row.kind) {
            conv_kinds.push(row.kind.clone());
        }
    }
    let mut vre_kinds: Vec<String> = Vec::new();
    for row in &sec.renewable {
        if !vre_kinds.contains(&row.kind) {
            vre_kinds.push(row.kind.clone());
        }
    }

    let mut lines = Vec::with_capacity(sec.lines.len());
    for (i, row) in sec.lines.iter().enumerate() {
        let field = format!("system.lines[{i}]");
        let a = lookup(&sec.nodes, &row.from, &field)?;
        let b = lookup(&sec.nodes, &row.to, &field)?;
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        lines.push(Line {
            a,
            b,
            capacity: row.capacity_mw,
            maintenance_cost: row.maintenance_eur_per_mw,
            investment_cost: row.investment_eur_per_mw,
        });
    }

    let mut conventional = Vec::with_capacity(sec.conventional.len());
    for (i, row) in sec.conventional.iter().enumerate() {
        let field = format!("system.conventional[{i}]");
        conventional.push(ConvUnit {
            node: lookup(&sec.nodes, &row.node, &field)?,
            producer: lookup(&sec.producers, &row.producer, &field)?,
            kind: lookup(&conv_kinds, &row.kind, &field)?,
            installed: row.installed_mw,
            op_cost: row.operational_eur_per_mwh,
            maintenance_cost: row.maintenance_eur_per_mw,
            investment_cost: row.investment_eur_per_mw,
            ramp_up: row.ramp_up,
            ramp_down: row.ramp_down,
            expandable: row.expandable,
        });
    }
    let mut renewables = Vec::with_capacity(sec.renewable.len());
    for (i, row) in sec.renewable.iter().enumerate() {
        let field = format!("system.renewable[{i}]");
        renewables.push(VreUnit {
            node: lookup(&sec.nodes, &row.node, &field)?,
            producer: lookup(&sec.producers, &row.producer, &field)?,
            kind: lookup(&vre_kinds, &row.kind, &field)?,
            installed: row.installed_mw,
            maintenance_cost: row.maintenance_eur_per_mw,
            investment_cost: row.investment_eur_per_mw,
        });
    }

    let scenarios: Vec<Scenario> = sec
        .scenarios
        .iter()
        .map(|r| Scenario {
            name: r.name.clone(),
            probability: r.probability,
        })
        .collect();
    let periods: Vec<Period> = sec
        .periods
        .iter()
        .map(|r| Period {
            name: r.name.clone(),
            hours: r.hours,
        })
        .collect();
    let scenario_names: Vec<String> = scenarios.iter().map(|s| s.name.clone()).collect();
    let period_names: Vec<String> = periods.iter().map(|p| p.name.clone()).collect();

    let s_count = scenarios.len();
    let t_count = periods.len();
    let n_count = sec.nodes.len();
    let mut demand = vec![None; s_count * t_count * n_count];
    for (i, row) in sec.demand.iter().enumerate() {
        let field = format!("system.demand[{i}]");
        let s = lookup(&scenario_names, &row.scenario, &field)?;
        let t = lookup(&period_names, &row.period, &field)?;
        let n = lookup(&sec.nodes, &row.node, &field)?;
        let slot = (s * t_count + t) * n_count + n;
        if demand[slot].is_some() {
            return Err(field_err(
                &field,
                format!(
                    "duplicate demand entry for ({}, {}, {})",
                    row.scenario, row.period, row.node
                ),
            ));
        }
        demand[slot] = Some(DemandCurve {
            intercept: row.intercept_eur_per_mwh,
            slope: row.slope_eur_per_mwh2,
        });
    }
    let mut demand_full = Vec::with_capacity(demand.len());
    for (slot, entry) in demand.iter().enumerate() {
        match entry {
            Some(curve) => demand_full.push(*curve),
            None => {
                let n = slot % n_count;
                let t = (slot / n_count) % t_count;
                let s = slot / (n_count * t_count);
                return Err(field_err(
                    "system.demand",
                    format!(
                        "missing demand entry for ({}, {}, {})",
                        scenario_names[s], period_names[t], sec.nodes[n]
                    ),
                ));
            }
        }
    }

    let kind_count = vre_kinds.len();
    let mut availability = vec![None; kind_count * s_count * t_count * n_count];
    for (i, row) in sec.availability.iter().enumerate() {
        let field = format!("system.availability[{i}]");
        let kind = lookup(&vre_kinds, &row.kind, &field)?;
        let s = lookup(&scenario_names, &row.scenario, &field)?;
        let t = lookup(&period_names, &row.period, &field)?;
        let n = lookup(&sec.nodes, &row.node, &field)?;
        let slot = ((kind * s_count + s) * t_count + t) * n_count + n;
        if availability[slot].is_some() {
            return Err(field_err(&field, "duplicate availability entry".into()));
        }
        availability[slot] = Some(row.factor);
    }
    let mut availability_full = Vec::with_capacity(availability.len());
    for (slot, entry) in availability.iter().enumerate() {
        match entry {
            Some(v) => availability_full.push(*v),
            None => {
                let n = slot % n_count;
                let t = (slot / n_count) % t_count;
                let s = (slot / (n_count * t_count)) % s_count;
                let kind = slot / (n_count * t_count * s_count);
                return Err(field_err(
                    "system.availability",
                    format!(
                        "missing availability for ({}, {}, {}, {})",
                        vre_kinds[kind], scenario_names[s], period_names[t], sec.nodes[n]
                    ),
                ));
            }
        }
    }

    let system = EnergySystem {
        nodes: sec.nodes.clone(),
        producers: sec.producers.clone(),
        conv_kinds: conv_kinds.clone(),
        vre_kinds: vre_kinds.clone(),
        lines,
        conventional,
        renewables,
        scenarios,
        periods,
        demand: demand_full,
        availability: availability_full,
        budget_double_count: sec.budget_double_count,
    };
    let report = validate_system(&system);
    if !report.passed() {
        return Err(LoadError::Validation {
            path: path.into(),
            report,
        });
    }

    // policy: absent fields become zeros, with a warning
    let mut warnings = Vec::new();
    let empty = PolicySection::default();
    let policy_section = config.policy.as_ref().unwrap_or_else(|| {
        warnings.push("policy section absent; all instruments default to zero".to_string());
        &empty
    });
    let named_map = |map: &Option<BTreeMap<String, f64>>,
                     names: &[String],
                     field: &str,
                     warnings: &mut Vec<String>|
     -> Result<Vec<f64>, LoadError> {
        match map {
            None => {
                if config.policy.is_some() {
                    warnings.push(format!("policy.{field} absent; defaulting to zero"));
                }
                Ok(vec![0.0; names.len()])
            }
            Some(entries) => {
                for key in entries.keys() {
                    if !names.contains(key) {
                        return Err(LoadError::Field {
                            path: path.into(),
                            field: format!("policy.{field}"),
                            message: format!("unknown name {key:?}"),
                        });
                    }
                }
                Ok(names
                    .iter()
                    .map(|n| {
                        entries.get(n).copied().unwrap_or_else(|| {
                            warnings
                                .push(format!("policy.{field}.{n} absent; defaulting to zero"));
                            0.0
                        })
                    })
                    .collect())
            }
        }
    };
    let teb = policy_section.teb_eur.unwrap_or_else(|| {
        if config.policy.is_some() {
            warnings.push("policy.teb_eur absent; defaulting to zero".to_string());
        }
        0.0
    });
    let geb = named_map(
        &policy_section.geb_eur,
        &system.producers,
        "geb_eur",
        &mut warnings,
    )?;
    let carbon_tax = named_map(
        &policy_section.carbon_tax_eur_per_mwh,
        &conv_kinds,
        "carbon_tax_eur_per_mwh",
        &mut warnings,
    )?;
    let vre_incentive = named_map(
        &policy_section.vre_incentive,
        &system.nodes,
        "vre_incentive",
        &mut warnings,
    )?;
    let policy = PolicySet {
        carbon_tax,
        vre_incentive,
        teb,
        geb,
    };
    let report = validate_policy(&system, &policy);
    if !report.passed() {
        return Err(LoadError::Validation {
            path: path.into(),
            report,
        });
    }
    Ok(LoadedSystem {
        system,
        policy,
        warnings,
    })
}

/// Serializes a system and policy back to the canonical config text.
pub fn save_system(system: &EnergySystem, policy: &PolicySet) -> String {
    let sec = SystemSection {
        nodes: system.nodes.clone(),
        producers: system.producers.clone(),
        budget_double_count: system.budget_double_count,
        scenarios: system
            .scenarios
            .iter()
            .map(|s| ScenarioRow {
                name: s.name.clone(),
                probability: s.probability,
            })
            .collect(),
        periods: system
            .periods
            .iter()
            .map(|p| PeriodRow {
                name: p.name.clone(),
                hours: p.hours,
            })
            .collect(),
        lines: system
            .lines
            .iter()
            .map(|l| LineRow {
                from: system.nodes[l.a].clone(),
                to: system.nodes[l.b].clone(),
                capacity_mw: l.capacity,
                maintenance_eur_per_mw: l.maintenance_cost,
                investment_eur_per_mw: l.investment_cost,
            })
            .collect(),
        conventional: system
            .conventional
            .iter()
            .map(|u| ConvRow {
                node: system.nodes[u.node].clone(),
                producer: system.producers[u.producer].clone(),
                kind: system.conv_kinds[u.kind].clone(),
                installed_mw: u.installed,
                operational_eur_per_mwh: u.op_cost,
                maintenance_eur_per_mw: u.maintenance_cost,
                investment_eur_per_mw: u.investment_cost,
                ramp_up: u.ramp_up,
                ramp_down: u.ramp_down,
                expandable: u.expandable,
            })
            .collect(),
        renewable: system
            .renewables
            .iter()
            .map(|u| VreRow {
                node: system.nodes[u.node].clone(),
                producer: system.producers[u.producer].clone(),
                kind: system.vre_kinds[u.kind].clone(),
                installed_mw: u.installed,
                maintenance_eur_per_mw: u.maintenance_cost,
                investment_eur_per_mw: u.investment_cost,
            })
            .collect(),
        demand: (0..system.num_scenarios())
            .flat_map(|s| {
                (0..system.num_periods()).flat_map(move |t| {
                    (0..system.num_nodes()).map(move |n| (s, t, n))
                })
            })
            .map(|(s, t, n)| {
                let curve = system.demand_at(s, t, n);
                DemandRow {
                    scenario: system.scenarios[s].name.clone(),
                    period: system.periods[t].name.clone(),
                    node: system.nodes[n].clone(),
                    intercept_eur_per_mwh: curve.intercept,
                    slope_eur_per_mwh2: curve.slope,
                }
            })
            .collect(),
        availability: (0..system.vre_kinds.len())
            .flat_map(|k| {
                (0..system.num_scenarios()).flat_map(move |s| {
                    (0..system.num_periods()).flat_map(move |t| {
                        (0..system.num_nodes()).map(move |n| (k, s, t, n))
                    })
                })
            })
            .map(|(k, s, t, n)| AvailabilityRow {
                kind: system.vre_kinds[k].clone(),
                scenario: system.scenarios[s].name.clone(),
                period: system.periods[t].name.clone(),
                node: system.nodes[n].clone(),
                factor: system.availability[system.availability_index(k, s, t, n)],
            })
            .collect(),
    };
    let policy_section = PolicySection {
        teb_eur: Some(policy.teb),
        geb_eur: Some(
            system
                .producers
                .iter()
                .cloned()
                .zip(policy.geb.iter().copied())
                .collect(),
        ),
        carbon_tax_eur_per_mwh: Some(
            system
                .conv_kinds
                .iter()
                .cloned()
                .zip(policy.carbon_tax.iter().copied())
                .collect(),
        ),
        vre_incentive: Some(
            system
                .nodes
                .iter()
                .cloned()
                .zip(policy.vre_incentive.iter().copied())
                .collect(),
        ),
    };
    let config = SystemConfig {
        schema: CONFIG_SCHEMA.into(),
        system: sec,
        policy: Some(policy_section),
    };
    toml::to_string_pretty(&config).expect("config serializes")
}

// ---------------------------------------------------------------------------
// hourly CSV
// ---------------------------------------------------------------------------

/// Loads `hour,<node>:<kind>,...` series. Requires hours 1..8760 contiguous
/// (8784 rows are accepted for leap years; normalization truncates).
pub fn load_hourly_csv(path: &Path) -> Result<Vec<HourlySeries>, LoadError> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| LoadError::Parse {
            path: display.clone(),
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| LoadError::Parse {
            path: display.clone(),
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() || &headers[0] != "hour" {
        return Err(LoadError::Field {
            path: display,
            field: "header".into(),
            message: "first column must be 'hour'".into(),
        });
    }
    let mut columns: Vec<(String, SeriesKind)> = Vec::new();
    for (i, name) in headers.iter().enumerate().skip(1) {
        let (node, kind_text) = name.split_once(':').ok_or_else(|| LoadError::Field {
            path: display.clone(),
            field: format!("header column {}", i + 1),
            message: format!("expected <node>:<kind>, found {name:?}"),
        })?;
        let kind = SeriesKind::parse(kind_text).ok_or_else(|| LoadError::Field {
            path: display.clone(),
            field: format!("header column {}", i + 1),
            message: format!("unknown series kind {kind_text:?} (demand, wind or solar)"),
        })?;
        if columns.iter().any(|(n, k)| n == node && *k == kind) {
            return Err(LoadError::Field {
                path: display.clone(),
                field: format!("header column {}", i + 1),
                message: format!("duplicate column {name:?}"),
            });
        }
        columns.push((node.to_string(), kind));
    }

    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(HOURS_PER_YEAR); columns.len()];
    let mut rows = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| LoadError::Parse {
            path: display.clone(),
            message: e.to_string(),
        })?;
        rows += 1;
        if record.len() != columns.len() + 1 {
            return Err(LoadError::Field {
                path: display.clone(),
                field: format!("row {}", row_idx + 2),
                message: format!(
                    "expected {} cells, found {}",
                    columns.len() + 1,
                    record.len()
                ),
            });
        }
        let hour: usize = record[0].trim().parse().map_err(|_| LoadError::Field {
            path: display.clone(),
            field: format!("row {}, column 1", row_idx + 2),
            message: format!("bad hour index {:?}", &record[0]),
        })?;
        if hour != row_idx + 1 {
            return Err(LoadError::Field {
                path: display.clone(),
                field: format!("row {}", row_idx + 2),
                message: format!("hour indices must be contiguous from 1; found {hour}"),
            });
        }
        for (c, cell) in record.iter().enumerate().skip(1) {
            let value: f64 = cell.trim().parse().map_err(|_| LoadError::Field {
                path: display.clone(),
                field: format!("row {}, column {}", row_idx + 2, c + 1),
                message: format!("bad numeric cell {cell:?}"),
            })?;
            values[c - 1].push(value);
        }
    }
    if rows != HOURS_PER_YEAR && rows != HOURS_PER_YEAR + 24 {
        return Err(LoadError::Field {
            path: display,
            field: "rows".into(),
            message: format!("expected 8760 data rows (or 8784 for a leap year), found {rows}"),
        });
    }
    Ok(columns
        .into_iter()
        .zip(values)
        .map(|((node, kind), values)| HourlySeries {
            node,
            kind,
            values,
            basis: None,
            normalized: false,
        })
        .collect())
}

/// Loads a `node,kind,capacity_mw` sidecar mapping VRE series to their
/// installed capacities.
pub fn load_capacities_csv(
    path: &Path,
) -> Result<BTreeMap<(String, SeriesKind), f64>, LoadError> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| LoadError::Parse {
            path: display.clone(),
            message: e.to_string(),
        })?;
    let mut out = BTreeMap::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| LoadError::Parse {
            path: display.clone(),
            message: e.to_string(),
        })?;
        if record.len() != 3 {
            return Err(LoadError::Field {
                path: display.clone(),
                field: format!("row {}", row_idx + 2),
                message: "expected node,kind,capacity_mw".into(),
            });
        }
        let kind = SeriesKind::parse(&record[1]).ok_or_else(|| LoadError::Field {
            path: display.clone(),
            field: format!("row {}", row_idx + 2),
            message: format!("unknown series kind {:?}", &record[1]),
        })?;
        let capacity: f64 = record[2].trim().parse().map_err(|_| LoadError::Field {
            path: display.clone(),
            field: format!("row {}", row_idx + 2),
            message: format!("bad capacity {:?}", &record[2]),
        })?;
        out.insert((record[0].to_string(), kind), capacity);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// result writers (JSON and CSV)
// ---------------------------------------------------------------------------

/// Rounds to 12 significant digits, the precision every result file carries.
pub fn round12(v: f64) -> f64 {
    if v.is_finite() {
        format!("{v:.11e}").parse().unwrap_or(v)
    } else {
        v
    }
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(round12(v))
    } else {
        Value::Null
    }
}

fn keyed1(values: &[f64]) -> Value {
    let mut map = Map::new();
    for (i, v) in values.iter().enumerate() {
        map.insert(format!("({i})"), num(*v));
    }
    Value::Object(map)
}

fn keyed3(values: &[f64], dim1: usize, dim2: usize, dim3: usize) -> Value {
    let mut map = Map::new();
    for a in 0..dim1 {
        for b in 0..dim2 {
            for c in 0..dim3 {
                map.insert(
                    format!("({a},{b},{c})"),
                    num(values[(a * dim2 + b) * dim3 + c]),
                );
            }
        }
    }
    Value::Object(map)
}

fn stats_json(stats: &SolveStats) -> Value {
    json!({
        "status": format!("{:?}", stats.status),
        "iterations": stats.iterations,
        "polished": stats.polished,
        "primal_residual": num(stats.primal_residual),
        "dual_residual": num(stats.dual_residual),
        "duality_gap": num(stats.duality_gap),
    })
}

/// Market outcome as JSON: primal and dual blocks keyed by index tuples,
/// plus a legend naming every axis.
pub fn outcome_to_json(
    system: &EnergySystem,
    plan: &ExpansionPlan,
    outcome: &MarketOutcome,
) -> Value {
    let s = system.num_scenarios();
    let t = system.num_periods();
    let n = system.num_nodes();
    let cu = system.conventional.len();
    let vu = system.renewables.len();
    let li = system.lines.len();
    json!({
        "schema": "gridplan/outcome/1",
        "objective_value": num(outcome.objective_value),
        "teb_dual": outcome.teb_dual.map(num).unwrap_or(Value::Null),
        "plan": {
            "additions": keyed1(&plan.additions),
            "investment_cost": num(plan.investment_cost),
        },
        "primal": {
            "consumption": keyed3(&outcome.consumption, s, t, n),
            "conventional_generation": keyed3(&outcome.conv_generation, s, t, cu),
            "vre_generation": keyed3(&outcome.vre_generation, s, t, vu),
            "flows": keyed3(&outcome.flows, s, t, li),
            "conventional_expansion": keyed1(&outcome.conv_expansion),
            "vre_expansion": keyed1(&outcome.vre_expansion),
        },
        "duals": {
            "theta": keyed3(&outcome.theta, s, t, n),
            "nodal_price": keyed3(&outcome.nodal_price, s, t, n),
            "beta_vre": keyed3(&outcome.beta_vre, s, t, vu),
            "beta_conv": keyed3(&outcome.beta_conv, s, t, cu),
            "beta_ramp_up": keyed3(&outcome.beta_ramp_up, s, t, cu),
            "beta_ramp_down": keyed3(&outcome.beta_ramp_down, s, t, cu),
            "beta_flow_upper": keyed3(&outcome.beta_flow_upper, s, t, li),
            "beta_flow_lower": keyed3(&outcome.beta_flow_lower, s, t, li),
            "lambda_flow": keyed3(&outcome.lambda_flow, s, t, li),
            "beta_geb": keyed1(&outcome.beta_geb),
            "lambda_conv": keyed3(&outcome.lambda_conv, s, t, cu),
            "lambda_vre": keyed3(&outcome.lambda_vre, s, t, vu),
            "lambda_conv_expansion": keyed1(&outcome.lambda_conv_expansion),
            "lambda_vre_expansion": keyed1(&outcome.lambda_vre_expansion),
        },
        "stats": stats_json(&outcome.stats),
        "legend": {
            "tuple_order": "outer axes first: (scenario, period, inner)",
            "scenarios": system.scenarios.iter().map(|x| x.name.clone()).collect::<Vec<_>>(),
            "periods": system.periods.iter().map(|x| x.name.clone()).collect::<Vec<_>>(),
            "nodes": system.nodes.clone(),
            "producers": system.producers.clone(),
            "conventional_units": system.conventional.iter().map(|u| json!({
                "node": system.nodes[u.node],
                "producer": system.producers[u.producer],
                "kind": system.conv_kinds[u.kind],
            })).collect::<Vec<_>>(),
            "vre_units": system.renewables.iter().map(|u| json!({
                "node": system.nodes[u.node],
                "producer": system.producers[u.producer],
                "kind": system.vre_kinds[u.kind],
            })).collect::<Vec<_>>(),
            "lines": system.lines.iter().map(|l| json!([
                system.nodes[l.a], system.nodes[l.b]
            ])).collect::<Vec<_>>(),
        },
    })
}

fn parse_keyed(value: &Value, expected_len: usize, what: &str) -> Result<Vec<f64>, String> {
    let map = value
        .as_object()
        .ok_or_else(|| format!("{what}: expected an object"))?;
    let mut out = vec![0.0; expected_len];
    let mut seen = 0usize;
    for (key, v) in map {
        let inner = key
            .strip_prefix('(')
            .and_then(|k| k.strip_suffix(')'))
            .ok_or_else(|| format!("{what}: bad key {key:?}"))?;
        let slot: usize = inner
            .trim()
            .parse()
            .map_err(|_| format!("{what}: bad key {key:?}"))?;
        if slot >= expected_len {
            return Err(format!("{what}: key {key:?} out of range"));
        }
        out[slot] = v.as_f64().unwrap_or(f64::NAN);
        seen += 1;
    }
    if seen != expected_len {
        return Err(format!(
            "{what}: expected {expected_len} entries, found {seen}"
        ));
    }
    Ok(out)
}

/// Reads an outcome JSON back. The tuple keys sort alphabetically in the
/// file; entries are re-addressed by their parsed indices.
pub fn outcome_from_json(
    system: &EnergySystem,
    value: &Value,
) -> Result<(MarketOutcome, ExpansionPlan), String> {
    if value["schema"].as_str() != Some("gridplan/outcome/1") {
        return Err(format!("unknown outcome schema {:?}", value["schema"]));
    }
    let s = system.num_scenarios();
    let t = system.num_periods();
    let n = system.num_nodes();
    let cu = system.conventional.len();
    let vu = system.renewables.len();
    let li = system.lines.len();

    // 3-tuple blocks must be re-addressed by their indices
    let parse3 = |value: &Value, d2: usize, d3: usize, what: &str| -> Result<Vec<f64>, String> {
        let map = value
            .as_object()
            .ok_or_else(|| format!("{what}: expected an object"))?;
        let mut out = vec![0.0; s * d2 * d3];
        let mut seen = 0usize;
        for (key, v) in map {
            let inner = key
                .strip_prefix('(')
                .and_then(|k| k.strip_suffix(')'))
                .ok_or_else(|| format!("{what}: bad key {key:?}"))?;
            let idx: Vec<usize> = inner
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| format!("{what}: bad key {key:?}"))?;
            if idx.len() != 3 || idx[0] >= s || idx[1] >= d2 || idx[2] >= d3 {
                return Err(format!("{what}: key {key:?} out of range"));
            }
            out[(idx[0] * d2 + idx[1]) * d3 + idx[2]] = v.as_f64().unwrap_or(f64::NAN);
            seen += 1;
        }
        if seen != out.len() {
            return Err(format!("{what}: expected {} entries, found {seen}", out.len()));
        }
        Ok(out)
    };
    let primal = &value["primal"];
    let duals = &value["duals"];
    let additions = parse_keyed(&value["plan"]["additions"], li, "plan.additions")?;
    let plan = ExpansionPlan::new(system, additions).map_err(|e| e.to_string())?;
    let stats = &value["stats"];
    let outcome = MarketOutcome {
        consumption: parse3(&primal["consumption"], t, n, "consumption")?,
        conv_generation: parse3(&primal["conventional_generation"], t, cu, "conv gen")?,
        vre_generation: parse3(&primal["vre_generation"], t, vu, "vre gen")?,
        flows: parse3(&primal["flows"], t, li, "flows")?,
        conv_expansion: parse_keyed(&primal["conventional_expansion"], cu, "conv expansion")?,
        vre_expansion: parse_keyed(&primal["vre_expansion"], vu, "vre expansion")?,
        theta: parse3(&duals["theta"], t, n, "theta")?,
        nodal_price: parse3(&duals["nodal_price"], t, n, "nodal price")?,
        beta_vre: parse3(&duals["beta_vre"], t, vu, "beta_vre")?,
        beta_conv: parse3(&duals["beta_conv"], t, cu, "beta_conv")?,
        beta_ramp_up: parse3(&duals["beta_ramp_up"], t, cu, "beta_ramp_up")?,
        beta_ramp_down: parse3(&duals["beta_ramp_down"], t, cu, "beta_ramp_down")?,
        beta_flow_upper: parse3(&duals["beta_flow_upper"], t, li, "beta_flow_upper")?,
        beta_flow_lower: parse3(&duals["beta_flow_lower"], t, li, "beta_flow_lower")?,
        lambda_flow: parse3(&duals["lambda_flow"], t, li, "lambda_flow")?,
        beta_geb: parse_keyed(&duals["beta_geb"], system.producers.len(), "beta_geb")?,
        lambda_conv: parse3(&duals["lambda_conv"], t, cu, "lambda_conv")?,
        lambda_vre: parse3(&duals["lambda_vre"], t, vu, "lambda_vre")?,
        lambda_conv_expansion: parse_keyed(
            &duals["lambda_conv_expansion"],
            cu,
            "lambda_conv_expansion",
        )?,
        lambda_vre_expansion: parse_keyed(
            &duals["lambda_vre_expansion"],
            vu,
            "lambda_vre_expansion",
        )?,
        teb_dual: value["teb_dual"].as_f64(),
        objective_value: value["objective_value"]
            .as_f64()
            .ok_or("missing objective_value")?,
        stats: SolveStats {
            status: crate::solver::SolveStatus::Optimal,
            iterations: stats["iterations"].as_u64().unwrap_or(0) as usize,
            polished: stats["polished"].as_bool().unwrap_or(false),
            primal_residual: stats["primal_residual"].as_f64().unwrap_or(f64::NAN),
            dual_residual: stats["dual_residual"].as_f64().unwrap_or(f64::NAN),
            duality_gap: stats["duality_gap"].as_f64().unwrap_or(f64::NAN),
        },
    };
    Ok((outcome, plan))
}

pub fn kkt_to_json(report: &KktReport, tolerance: f64) -> Value {
    json!({
        "schema": "gridplan/kkt/1",
        "tolerance": num(tolerance),
        "passes": report.passes(tolerance),
        "worst": num(report.worst()),
        "stationarity": {
            "consumption": num(report.stationarity_consumption),
            "conventional_generation": num(report.stationarity_conv),
            "vre_generation": num(report.stationarity_vre),
            "conventional_expansion": num(report.stationarity_conv_expansion),
            "vre_expansion": num(report.stationarity_vre_expansion),
            "flow": num(report.stationarity_flow),
        },
        "complementarity": {
            "transmission_budget": report.complementarity_teb.map(num).unwrap_or(Value::Null),
            "generation_budget": num(report.complementarity_geb),
            "vre_capacity": num(report.complementarity_vre_cap),
            "conventional_capacity": num(report.complementarity_conv_cap),
            "ramp_up": num(report.complementarity_ramp_up),
            "ramp_down": num(report.complementarity_ramp_down),
            "flow_upper": num(report.complementarity_flow_upper),
            "flow_lower": num(report.complementarity_flow_lower),
            "nonnegativity": num(report.complementarity_nonneg),
        },
        "primal_feasibility": {
            "balance": num(report.primal_balance),
            "inequalities": num(report.primal_inequalities),
        },
        "dual_sign": num(report.dual_sign),
    })
}

/// Bilevel solution as JSON. The per-candidate log is written separately
/// (the checkpoint carries it); this document is bit-stable across runs.
pub fn bilevel_to_json(system: &EnergySystem, solution: &BilevelSolution) -> Value {
    json!({
        "schema": "gridplan/bilevel/1",
        "best_plan": {
            "additions": keyed1(&solution.best_plan.additions),
            "investment_cost": num(solution.best_plan.investment_cost),
        },
        "factors": {
            "welfare_eur": num(solution.factors.welfare),
            "vre_share": num(solution.factors.vre_share),
            "total_generation_mwh": num(solution.factors.total_generation),
            "degenerate_share": solution.factors.degenerate_share,
        },
        "candidates": {
            "generated": solution.candidates_generated,
            "pruned": solution.candidates_pruned,
            "solved": solution.candidates_solved,
            "failed": solution.candidates_failed,
        },
        "stats": stats_json(&solution.outcome.stats),
        "lines": system.lines.iter().map(|l| json!([
            system.nodes[l.a], system.nodes[l.b]
        ])).collect::<Vec<_>>(),
    })
}

fn csv_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{}", round12(v))
    }
}

/// Wide CSV: one row per design point plus the baseline row.
pub fn sweep_to_csv(system: &EnergySystem, report: &SweepReport) -> String {
    let mut header: Vec<String> = vec!["point".into(), "teb_eur".into()];
    for p in &system.producers {
        header.push(format!("geb_eur:{p}"));
    }
    for k in &system.conv_kinds {
        header.push(format!("carbon_tax_eur_per_mwh:{k}"));
    }
    for n in &system.nodes {
        header.push(format!("vre_incentive:{n}"));
    }
    header.extend(
        [
            "welfare_eur",
            "vre_share",
            "total_generation_mwh",
            "delta_vre_share_pp",
            "delta_welfare_pct",
            "delta_generation_pct",
            "solver_iterations",
            "error",
        ]
        .map(String::from),
    );
    for l in &system.lines {
        header.push(format!(
            "plan_mw:{}-{}",
            system.nodes[l.a], system.nodes[l.b]
        ));
    }
    let mut out = header.join(",");
    out.push('\n');
    let mut push_record = |label: &str, r: &crate::sweep::SweepRecord| {
        let mut row: Vec<String> = vec![label.to_string(), csv_num(r.teb)];
        row.extend(r.geb.iter().map(|v| csv_num(*v)));
        row.extend(r.carbon_tax.iter().map(|v| csv_num(*v)));
        row.extend(r.incentive.iter().map(|v| csv_num(*v)));
        match &r.factors {
            Some(f) => {
                row.push(csv_num(f.welfare));
                row.push(csv_num(f.vre_share));
                row.push(csv_num(f.total_generation));
            }
            None => row.extend(["".into(), "".into(), "".into()]),
        }
        match &r.delta {
            Some(d) => {
                row.push(csv_num(d.vre_share_pp));
                row.push(d.welfare_pct.map(csv_num).unwrap_or_default());
                row.push(d.generation_pct.map(csv_num).unwrap_or_default());
            }
            None => row.extend(["".into(), "".into(), "".into()]),
        }
        row.push(r.solver_iterations.to_string());
        row.push(r.error.clone().unwrap_or_default().replace(',', ";"));
        match &r.plan {
            Some(plan) => row.extend(plan.iter().map(|v| csv_num(*v))),
            None => row.extend(std::iter::repeat(String::new()).take(system.lines.len())),
        }
        out.push_str(&row.join(","));
        out.push('\n');
    };
    push_record("baseline", &report.baseline);
    for r in &report.records {
        push_record(&r.id.to_string(), r);
    }
    out
}

/// Long-format CSV for external charting: point, field, value.
pub fn sweep_to_long_csv(system: &EnergySystem, report: &SweepReport) -> String {
    let mut out = String::from("point,field,value\n");
    let mut push = |label: &str, field: String, value: String| {
        out.push_str(&format!("{label},{field},{value}\n"));
    };
    let mut emit = |label: &str, r: &crate::sweep::SweepRecord| {
        push(label, "param:teb_eur".into(), csv_num(r.teb));
        for (p, v) in system.producers.iter().zip(&r.geb) {
            push(label, format!("param:geb_eur:{p}"), csv_num(*v));
        }
        for (k, v) in system.conv_kinds.iter().zip(&r.carbon_tax) {
            push(label, format!("param:carbon_tax:{k}"), csv_num(*v));
        }
        for (n, v) in system.nodes.iter().zip(&r.incentive) {
            push(label, format!("param:vre_incentive:{n}"), csv_num(*v));
        }
        if let Some(f) = &r.factors {
            push(label, "factor:welfare_eur".into(), csv_num(f.welfare));
            push(label, "factor:vre_share".into(), csv_num(f.vre_share));
            push(
                label,
                "factor:total_generation_mwh".into(),
                csv_num(f.total_generation),
            );
        }
    };
    emit("baseline", &report.baseline);
    for r in &report.records {
        emit(&r.id.to_string(), r);
    }
    out
}

pub fn sweep_to_json(report: &SweepReport) -> Value {
    // SweepReport serializes directly; route floats through the 12-digit
    // normalization for stable output
    let raw = serde_json::to_value(report).expect("sweep report serializes");
    round_json(raw)
}

fn round_json(value: Value) -> Value {
    match value {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    return num(f);
                }
            }
            Value::Number(n)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_json).collect()),
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, v)| (k, round_json(v))).collect())
        }
        other => other,
    }
}

/// Cluster report: day labels, cluster weights and representative days.
pub fn cluster_to_csvs(
    result: &ClusterResult,
    reps: &Representatives,
    nodes: &[String],
    kinds: &[SeriesKind],
) -> (String, String, String) {
    let mut days = String::from("day,cluster\n");
    for (day, label) in result.labels.iter().enumerate() {
        days.push_str(&format!("{},{}\n", day + 1, label));
    }
    let mut clusters = String::from("cluster,size,weight\n");
    for c in 0..result.num_clusters() {
        clusters.push_str(&format!(
            "{},{},{}\n",
            c,
            result.sizes[c],
            csv_num(result.weights[c])
        ));
    }
    let mut representatives = String::from("cluster,node,kind,day\n");
    for c in 0..result.num_clusters() {
        for (ni, node) in nodes.iter().enumerate() {
            for (ki, kind) in kinds.iter().enumerate() {
                representatives.push_str(&format!(
                    "{},{},{},{}\n",
                    c,
                    node,
                    kind.name(),
                    reps.day_for(c, ni, ki) + 1
                ));
            }
        }
    }
    (days, clusters, representatives)
}

/// Writes text or a JSON document to a path.
pub fn write_text(path: &Path, content: &str) -> Result<(), WriteError> {
    std::fs::write(path, content).map_err(|source| WriteError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), WriteError> {
    let mut text = serde_json::to_string_pretty(value).expect("json serializes");
    text.push('\n');
    write_text(path, &text)
}

/// Sweep design file (TOML).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignFile {
    pub schema: String,
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_axis: Option<String>,
    pub solver: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    pub axes: DesignAxes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignAxes {
    pub teb: Vec<f64>,
    /// Uniform per-producer budget per level.
    pub geb: Vec<f64>,
    pub carbon_tax: Vec<BTreeMap<String, f64>>,
    /// Uniform per-node incentive per level.
    pub incentive: Vec<f64>,
}

pub const DESIGN_SCHEMA: &str = "gridplan-design/1";

/// Loads a sweep design and resolves it against a system.
pub fn load_design(path: &Path, system: &EnergySystem) -> Result<crate::sweep::SweepDesign, LoadError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: display.clone(),
        source,
    })?;
    let file: DesignFile = toml::from_str(&text).map_err(|e| LoadError::Parse {
        path: display.clone(),
        message: e.to_string(),
    })?;
    if file.schema != DESIGN_SCHEMA {
        return Err(LoadError::Schema {
            path: display,
            found: file.schema,
            expected: DESIGN_SCHEMA.into(),
        });
    }
    let mode = match file.mode.as_str() {
        "full_factorial" => crate::sweep::SweepMode::FullFactorial,
        "univariate" => crate::sweep::SweepMode::Univariate {
            axis: file.sweep_axis.clone().ok_or_else(|| LoadError::Field {
                path: display.clone(),
                field: "sweep_axis".into(),
                message: "univariate mode needs sweep_axis".into(),
            })?,
        },
        other => {
            return Err(LoadError::Field {
                path: display,
                field: "mode".into(),
                message: format!("unknown mode {other:?}"),
            })
        }
    };
    let solver = match file.solver.as_str() {
        "centralized" => SweepSolverChoice::Centralized,
        "bilevel_exact" => SweepSolverChoice::BilevelExact,
        "bilevel_enum" => SweepSolverChoice::BilevelEnum {
            grid: file.grid.clone().ok_or_else(|| LoadError::Field {
                path: display.clone(),
                field: "grid".into(),
                message: "bilevel_enum needs grid levels".into(),
            })?,
        },
        other => {
            return Err(LoadError::Field {
                path: display,
                field: "solver".into(),
                message: format!("unknown solver {other:?}"),
            })
        }
    };
    let mut carbon_tax = Vec::with_capacity(file.axes.carbon_tax.len());
    for (i, level) in file.axes.carbon_tax.iter().enumerate() {
        let mut vector = vec![0.0; system.conv_kinds.len()];
        for (kind, value) in level {
            let idx = system
                .conv_kinds
                .iter()
                .position(|k| k == kind)
                .ok_or_else(|| LoadError::Field {
                    path: display.clone(),
                    field: format!("axes.carbon_tax[{i}]"),
                    message: format!("unknown conventional kind {kind:?}"),
                })?;
            vector[idx] = *value;
        }
        carbon_tax.push(vector);
    }
    Ok(crate::sweep::SweepDesign {
        mode,
        solver,
        teb: file.axes.teb.clone(),
        geb: file
            .axes
            .geb
            .iter()
            .map(|&v| vec![v; system.producers.len()])
            .collect(),
        carbon_tax,
        incentive: file
            .axes
            .incentive
            .iter()
            .map(|&v| vec![v; system.num_nodes()])
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{three_node_policy, three_node_system};

    fn fixture_path(name: &str) -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../fixtures")
            .join(name)
    }

    #[test]
    fn packaged_three_node_fixture_round_trips_table_values() {
        let loaded = load_system(&fixture_path("illustrative_3node.toml")).unwrap();
        assert_eq!(loaded.system.nodes, vec!["n1", "n2", "n3"]);
        let d = loaded.system.demand_at(0, 0, 2);
        assert_eq!(d.slope, 0.0075);
        assert_eq!(d.intercept, 195.0);
        let a = loaded.system.availability
            [loaded.system.availability_index(0, 0, 0, 1)];
        assert_eq!(a, 0.7);
        // matches the programmatic fixture exactly
        assert_eq!(loaded.system, three_node_system());
        assert_eq!(loaded.policy, three_node_policy());
        assert!(loaded.warnings.is_empty(), "{:?}", loaded.warnings);
    }

    #[test]
    fn missing_field_is_located() {
        let text = std::fs::read_to_string(fixture_path("illustrative_3node.toml")).unwrap();
        let broken = text.replacen("investment_eur_per_mw", "investment_missing", 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.toml");
        std::fs::write(&path, broken).unwrap();
        let err = load_system(&path).unwrap_err();
        let message = err.to_string();
        assert!(
            message.contains("investment_eur_per_mw"),
            "unhelpful error: {message}"
        );
    }

    #[test]
    fn save_load_reaches_canonical_fixpoint() {
        let loaded = load_system(&fixture_path("illustrative_3node.toml")).unwrap();
        let canonical = save_system(&loaded.system, &loaded.policy);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("canon.toml");
        std::fs::write(&path, &canonical).unwrap();
        let reloaded = load_system(&path).unwrap();
        assert_eq!(reloaded.system, loaded.system);
        assert_eq!(reloaded.policy, loaded.policy);
        assert_eq!(save_system(&reloaded.system, &reloaded.policy), canonical);
    }

    fn hourly_csv(rows: usize, columns: &[&str]) -> String {
        let mut text = String::from("hour");
        for c in columns {
            text.push(',');
            text.push_str(c);
        }
        text.push('\n');
        for h in 1..=rows {
            text.push_str(&h.to_string());
            for (i, _) in columns.iter().enumerate() {
                text.push_str(&format!(",{}", 0.1 * (i + 1) as f64));
            }
            text.push('\n');
        }
        text
    }

    #[test]
    fn hourly_csv_loads_all_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hourly.csv");
        let mut columns = Vec::new();
        let names: Vec<String> = (1..=5)
            .flat_map(|n| {
                ["demand", "wind", "solar"]
                    .iter()
                    .map(move |k| format!("n{n}:{k}"))
            })
            .collect();
        for n in &names {
            columns.push(n.as_str());
        }
        std::fs::write(&path, hourly_csv(8760, &columns)).unwrap();
        let series = load_hourly_csv(&path).unwrap();
        assert_eq!(series.len(), 15);
        assert_eq!(series[0].node, "n1");
        assert_eq!(series[0].kind, SeriesKind::Demand);
        assert_eq!(series[0].values.len(), 8760);
    }

    #[test]
    fn wrong_row_count_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hourly.csv");
        std::fs::write(&path, hourly_csv(8761, &["n1:demand"])).unwrap();
        let err = load_hourly_csv(&path).unwrap_err();
        assert!(err.to_string().contains("8761"), "{err}");
    }

    #[test]
    fn empty_cell_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hourly.csv");
        let mut text = hourly_csv(8760, &["n1:demand"]);
        text = text.replacen("7,0.1", "7,", 1);
        std::fs::write(&path, text).unwrap();
        let err = load_hourly_csv(&path).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("row 8"), "{message}");
        assert!(message.contains("column 2"), "{message}");
    }

    #[test]
    fn duplicate_column_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hourly.csv");
        std::fs::write(&path, hourly_csv(8760, &["n1:demand", "n1:demand"])).unwrap();
        let err = load_hourly_csv(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn outcome_json_round_trips() {
        use crate::equilibrium::{solve_market, ExpansionPlan};
        use crate::model::apply_policy;
        let system = three_node_system();
        let effective = apply_policy(&system, &three_node_policy());
        let plan = ExpansionPlan::zero(&system);
        let outcome =
            solve_market(&system, &effective, &plan, &crate::solver::SolverSettings::default())
                .unwrap();
        let doc = outcome_to_json(&system, &plan, &outcome);
        let (back, back_plan) = outcome_from_json(&system, &doc).unwrap();
        assert_eq!(back_plan.additions, plan.additions);
        for (a, b) in outcome.theta.iter().zip(&back.theta) {
            assert!((a - b).abs() <= 1e-11 * a.abs().max(1.0));
        }
        for (a, b) in outcome.consumption.iter().zip(&back.consumption) {
            assert!((a - b).abs() <= 1e-11 * a.abs().max(1.0));
        }
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(round12(1.0 / 3.0), 0.333333333333);
        assert_eq!(round12(123456789012345.0), 123456789012000.0);
        assert_eq!(round12(0.0), 0.0);
    }
}
