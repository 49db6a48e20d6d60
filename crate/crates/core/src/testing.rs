//! Programmatic fixtures shared by unit, integration and acceptance tests.
//!
//! `three_node_system` mirrors the packaged `illustrative_3node` fixture:
//! the demand and availability profiles are the published ones, the cost
//! data is synthetic.

use crate::model::{
    ConvUnit, DemandCurve, EnergySystem, Line, Period, PolicySet, Scenario, VreUnit,
};

/// Three nodes, three 1 MW lines, two producers each owning one conventional
/// and one VRE unit per node, one scenario, two 720 h periods.
pub fn three_node_system() -> EnergySystem {
    let nodes = vec!["n1".to_string(), "n2".to_string(), "n3".to_string()];
    let producers = vec!["g1".to_string(), "g2".to_string()];
    let intercepts = [260.0, 260.0, 195.0];
    let slopes = [0.04, 0.04, 0.0075];
    let avail = [0.5, 0.7, 0.3];
    let conv_installed = [3500.0, 3500.0, 10500.0];

    let mut conventional = Vec::new();
    let mut renewables = Vec::new();
    for node in 0..3 {
        for producer in 0..2 {
            conventional.push(ConvUnit {
                node,
                producer,
                kind: 0,
                installed: conv_installed[node],
                op_cost: 60.0,
                maintenance_cost: 3_000.0,
                investment_cost: 80_000.0,
                ramp_up: 0.5,
                ramp_down: 0.5,
                expandable: true,
            });
            renewables.push(VreUnit {
                node,
                producer,
                kind: 0,
                installed: 100.0,
                maintenance_cost: 4_000.0,
                investment_cost: 50_000.0,
            });
        }
    }

    let periods = vec![
        Period {
            name: "m1".into(),
            hours: 720.0,
        },
        Period {
            name: "m2".into(),
            hours: 720.0,
        },
    ];
    let scenarios = vec![Scenario {
        name: "base".into(),
        probability: 1.0,
    }];

    let mut demand = Vec::new();
    for _s in 0..1 {
        for _t in 0..2 {
            for n in 0..3 {
                demand.push(DemandCurve {
                    intercept: intercepts[n],
                    slope: slopes[n],
                });
            }
        }
    }
    let mut availability = Vec::new();
    for _kind in 0..1 {
        for _s in 0..1 {
            for _t in 0..2 {
                for n in 0..3 {
                    availability.push(avail[n]);
                }
            }
        }
    }

    EnergySystem {
        nodes,
        producers,
        conv_kinds: vec!["conv".into()],
        vre_kinds: vec!["vre".into()],
        lines: vec![
            Line {
                a: 0,
                b: 1,
                capacity: 1.0,
                maintenance_cost: 2_000.0,
                investment_cost: 10_000.0,
            },
            Line {
                a: 0,
                b: 2,
                capacity: 1.0,
                maintenance_cost: 2_000.0,
                investment_cost: 10_000.0,
            },
            Line {
                a: 1,
                b: 2,
                capacity: 1.0,
                maintenance_cost: 2_000.0,
                investment_cost: 10_000.0,
            },
        ],
        conventional,
        renewables,
        scenarios,
        periods,
        demand,
        availability,
        budget_double_count: false,
    }
}

/// The packaged policy for the three-node fixture: TEB 10M, GEB 1B per
/// producer, no tax, no incentive.
pub fn three_node_policy() -> PolicySet {
    PolicySet {
        carbon_tax: vec![0.0],
        vre_incentive: vec![0.0, 0.0, 0.0],
        teb: 1.0e7,
        geb: vec![1.0e9, 1.0e9],
    }
}

/// One node, one producer, one conventional unit, one period; the smallest
/// instance with a nonempty generation budget row.
pub fn single_node_system() -> EnergySystem {
    EnergySystem {
        nodes: vec!["n1".into()],
        producers: vec!["g1".into()],
        conv_kinds: vec!["conv".into()],
        vre_kinds: vec![],
        lines: vec![],
        conventional: vec![ConvUnit {
            node: 0,
            producer: 0,
            kind: 0,
            installed: 1.0,
            op_cost: 10.0,
            maintenance_cost: 0.0,
            investment_cost: 1_000.0,
            ramp_up: 1.0,
            ramp_down: 1.0,
            expandable: true,
        }],
        renewables: vec![],
        scenarios: vec![Scenario {
            name: "base".into(),
            probability: 1.0,
        }],
        periods: vec![Period {
            name: "t1".into(),
            hours: 1.0,
        }],
        demand: vec![DemandCurve {
            intercept: 260.0,
            slope: 0.04,
        }],
        availability: vec![],
        budget_double_count: false,
    }
}
