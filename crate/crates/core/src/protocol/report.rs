use std::collections::BTreeMap;

use serde::Serialize;

use super::{OracleResult, ProtocolRun, Stage};
use crate::split::{DEPLOY_VERIFIED_INSTANCE, RETURN_DISPUTE_RESOLUTION};

/// Gas accounting for one run and its all-on-chain counterpart.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GasReport {
    pub by_function: BTreeMap<String, u64>,
    pub by_stage: BTreeMap<Stage, u64>,
    /// Gas of contract creation transactions.
    pub deployment: u64,
    /// Hybrid gas excluding contract creation.
    pub hybrid_total: u64,
    /// Oracle gas excluding contract creation.
    pub oracle_total: u64,
    pub oracle_deployment: u64,
    /// Gas of the successful dispute transactions.
    pub dispute_overhead: u64,
}

pub fn gas_report(run: &ProtocolRun, oracle: &OracleResult) -> GasReport {
    let mut report = GasReport::default();
    for (record, (label, stage)) in run.chain().records().iter().zip(run.tx_labels()) {
        let gas = record.receipt.gas_used;
        *report.by_function.entry(label.clone()).or_default() += gas;
        *report.by_stage.entry(*stage).or_default() += gas;
        if record.tx.to.is_none() {
            report.deployment += gas;
        } else {
            report.hybrid_total += gas;
        }
        if record.receipt.status.is_success()
            && (label == DEPLOY_VERIFIED_INSTANCE || label == RETURN_DISPUTE_RESOLUTION)
        {
            report.dispute_overhead += gas;
        }
    }
    report.oracle_total = oracle.execution_gas();
    report.oracle_deployment = oracle.deployment_gas();
    report
}
