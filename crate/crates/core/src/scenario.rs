//! Declarative scenario files and the JSON documents produced from them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::betting::{BettingConfig, ReassignMode};
use crate::crypto::{keccak256, Address, Hash32};
use crate::ir::{ContractSpec, Word};
use crate::ledger::{ChainEvent, InternalMessage, LedgerError};
use crate::protocol::{
    agents_from_seed, gas_report, run_all_on_chain_oracle, ChannelMessage, GasReport, Outcome,
    Policy, ProtocolError, ProtocolRun, Schedule, Stage, StageMarker,
};
use crate::split::ClassifyPolicy;

pub const PARTICIPANT_NAMES: [&str; 2] = ["alice", "bob"];

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("contract spec {path}: {message}")]
    Spec { path: PathBuf, message: String },
    #[error("scenario step {step}: {source}")]
    Step { step: usize, source: ProtocolError },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Betting parameters as written in a scenario; participant addresses come
/// from the seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub t1: u64,
    pub t2: u64,
    pub t3: u64,
    #[serde(default = "default_deposit", with = "crate::ir::word_serde")]
    pub deposit_amount: Word,
    #[serde(default, with = "crate::ir::bytes_serde")]
    pub reveal_params: Vec<u8>,
    #[serde(default)]
    pub reveal_padding: usize,
    #[serde(default)]
    pub reveal_compute_cost: u64,
    #[serde(default, with = "crate::ir::word_serde")]
    pub penalty_amount: Word,
    #[serde(default)]
    pub reassign_mode: ReassignMode,
}

fn default_deposit() -> Word {
    crate::ledger::ether(1)
}

impl ScenarioConfig {
    pub fn betting_config(&self, participants: [Address; 2]) -> BettingConfig {
        BettingConfig {
            participants,
            deposit_amount: self.deposit_amount,
            t1: self.t1,
            t2: self.t2,
            t3: self.t3,
            reveal_params: self.reveal_params.clone(),
            reveal_padding: self.reveal_padding,
            reveal_compute_cost: self.reveal_compute_cost,
            penalty_amount: self.penalty_amount,
            reassign_mode: self.reassign_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    SplitGenerate,
    DeploySign,
    Deposit,
    RefundRoundOne,
    RefundRoundTwo,
    Reassign,
    SubmitChallenge,
    Dispute,
    DisputeAll,
}

impl StepAction {
    fn needs_actor(&self) -> bool {
        !matches!(
            self,
            StepAction::SplitGenerate | StepAction::SubmitChallenge | StepAction::DisputeAll
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Step {
    AdvanceTime { advance_time: u64 },
    AdvanceTo { advance_to: u64 },
    Action {
        action: StepAction,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        by: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedWinner {
    Alice,
    Bob,
    None,
}

impl ExpectedWinner {
    fn index(&self) -> Option<usize> {
        match self {
            ExpectedWinner::Alice => Some(0),
            ExpectedWinner::Bob => Some(1),
            ExpectedWinner::None => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Completed,
    Aborted,
    /// The schedule ended before the run reached a final stage.
    Incomplete,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default)]
    pub winner: Option<ExpectedWinner>,
    #[serde(default)]
    pub outcome: Option<RunOutcome>,
    #[serde(default)]
    pub privacy_leak: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub scenario_id: String,
    /// Contract spec whose declared function kinds override classification.
    /// Relative paths resolve against the scenario file's directory.
    #[serde(default)]
    pub spec_path: Option<PathBuf>,
    pub config: ScenarioConfig,
    pub policies: Vec<Policy>,
    #[serde(default)]
    pub seed: Option<Hash32>,
    /// Explicit steps; when absent the standard schedule runs.
    #[serde(default)]
    pub schedule: Option<Vec<Step>>,
    #[serde(default)]
    pub expectations: Option<Expectations>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut file = Self::parse(&text)?;
        file.base_dir = path.parent().map(Path::to_path_buf);
        Ok(file)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if self.policies.len() != 2 {
            return invalid(format!("expected 2 policies, got {}", self.policies.len()));
        }
        let c = &self.config;
        if !(0 < c.t1 && c.t1 < c.t2 && c.t2 < c.t3) {
            return invalid(format!("time points must satisfy 0 < T1 < T2 < T3 (got {}, {}, {})", c.t1, c.t2, c.t3));
        }
        if c.penalty_amount != Word::ZERO {
            return invalid("penalty_amount must be zero".into());
        }
        if c.deposit_amount == Word::ZERO {
            return invalid("deposit_amount must be positive".into());
        }
        for (i, step) in self.schedule.iter().flatten().enumerate() {
            if let Step::Action { action, by } = step {
                match (action.needs_actor(), by) {
                    (true, None) => return invalid(format!("step {i}: {action:?} needs `by`")),
                    (false, Some(_)) => return invalid(format!("step {i}: {action:?} takes no `by`")),
                    (_, Some(b)) if *b > 1 => return invalid(format!("step {i}: participant {b} out of range")),
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// The seed in effect: the override, the file's own, or
    /// `keccak256(scenario_id)`.
    pub fn effective_seed(&self, seed_override: Option<Hash32>) -> Hash32 {
        seed_override
            .or(self.seed)
            .unwrap_or_else(|| keccak256(self.scenario_id.as_bytes()))
    }

    fn classify_policy(&self) -> Result<ClassifyPolicy, ScenarioError> {
        let mut policy = ClassifyPolicy::default();
        let Some(path) = &self.spec_path else {
            return Ok(policy);
        };
        let full = match &self.base_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.clone(),
        };
        let spec_err = |message: String| ScenarioError::Spec {
            path: full.clone(),
            message,
        };
        let text = std::fs::read_to_string(&full).map_err(|e| spec_err(e.to_string()))?;
        let spec = ContractSpec::from_json(&text).map_err(|e| spec_err(e.to_string()))?;
        for f in &spec.functions {
            if let Some(kind) = f.kind {
                policy = policy.with_override(&f.name, kind);
            }
        }
        Ok(policy)
    }

    pub fn build_run(&self, seed_override: Option<Hash32>) -> Result<ProtocolRun, ScenarioError> {
        let seed = self.effective_seed(seed_override);
        let policies = [self.policies[0], self.policies[1]];
        let agents = agents_from_seed(&seed.0, policies)
            .map_err(|e| ScenarioError::Invalid(format!("seed yields an invalid key: {e}")))?;
        let config = self.config.betting_config([agents[0].address, agents[1].address]);
        Ok(ProtocolRun::new(config, agents)?)
    }

    /// Builds and executes the run.
    pub fn execute(&self, seed_override: Option<Hash32>) -> Result<ProtocolRun, ScenarioError> {
        let mut run = self.build_run(seed_override)?;
        let policy = self.classify_policy()?;
        match &self.schedule {
            None => Schedule::standard(run.config()).execute_with(&mut run, &policy)?,
            Some(steps) => {
                for (i, step) in steps.iter().enumerate() {
                    apply_step(&mut run, step, &policy).map_err(|source| ScenarioError::Step { step: i, source })?;
                }
            }
        }
        Ok(run)
    }
}

fn apply_step(run: &mut ProtocolRun, step: &Step, policy: &ClassifyPolicy) -> Result<(), ProtocolError> {
    match step {
        Step::AdvanceTime { advance_time } => {
            let delta = i64::try_from(*advance_time).map_err(|_| ProtocolError::Ledger(LedgerError::ClockOverflow))?;
            run.advance_time(delta)
        }
        Step::AdvanceTo { advance_to } => {
            run.advance_to(*advance_to);
            Ok(())
        }
        Step::Action { action, by } => {
            let by = by.unwrap_or(0);
            match action {
                StepAction::SplitGenerate => run.stage_split_generate(policy),
                StepAction::DeploySign => run.stage_deploy_sign(by),
                StepAction::Deposit => run.deposit(by).map(drop),
                StepAction::RefundRoundOne => run.refund_round_one(by).map(drop),
                StepAction::RefundRoundTwo => run.refund_round_two(by).map(drop),
                StepAction::Reassign => run.reassign(by).map(drop),
                StepAction::SubmitChallenge => run.stage_submit_challenge(),
                StepAction::Dispute => run.stage_dispute_resolve(by),
                StepAction::DisputeAll => run.dispute_all(),
            }
        }
    }
}

fn run_outcome(run: &ProtocolRun) -> RunOutcome {
    match run.outcome() {
        Some(Outcome::Completed) => RunOutcome::Completed,
        Some(Outcome::Aborted) => RunOutcome::Aborted,
        None => RunOutcome::Incomplete,
    }
}

fn name_map(values: [Word; 2]) -> BTreeMap<String, String> {
    PARTICIPANT_NAMES
        .iter()
        .zip(values)
        .map(|(n, v)| (n.to_string(), v.to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GasSummary {
    pub hybrid_total: String,
    pub oracle_total: String,
    pub dispute_overhead: String,
    pub hybrid_deployment: String,
    pub oracle_deployment: String,
}

impl From<&GasReport> for GasSummary {
    fn from(r: &GasReport) -> Self {
        Self {
            hybrid_total: r.hybrid_total.to_string(),
            oracle_total: r.oracle_total.to_string(),
            dispute_overhead: r.dispute_overhead.to_string(),
            hybrid_deployment: r.deployment.to_string(),
            oracle_deployment: r.oracle_deployment.to_string(),
        }
    }
}

/// Document printed by `run`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunResult {
    pub scenario_id: String,
    pub seed: Hash32,
    pub policies: BTreeMap<String, Policy>,
    pub participants: BTreeMap<String, Address>,
    pub outcome: RunOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    pub winner: Option<String>,
    /// Final balances in wei.
    pub final_balances: BTreeMap<String, String>,
    /// Final balances with gas paid added back.
    pub balances_excluding_gas: BTreeMap<String, String>,
    pub gas: GasSummary,
    pub privacy_leak: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expectations_met: Option<bool>,
}

pub fn run_result(file: &ScenarioFile, run: &ProtocolRun) -> Result<RunResult, ScenarioError> {
    let oracle = run_all_on_chain_oracle(run)?;
    let report = gas_report(run, &oracle);
    let participants = run.config().participants;
    let outcome = run_outcome(run);
    let winner = run.winner();
    let privacy_leak = run.privacy_leak();
    let expectations_met = file.expectations.as_ref().map(|e| {
        e.winner.is_none_or(|w| w.index() == winner)
            && e.outcome.is_none_or(|o| o == outcome)
            && e.privacy_leak.is_none_or(|p| p == privacy_leak)
    });
    Ok(RunResult {
        scenario_id: file.scenario_id.clone(),
        seed: file.effective_seed(None),
        policies: PARTICIPANT_NAMES
            .iter()
            .zip(&run.agents()[..])
            .map(|(n, a)| (n.to_string(), a.policy))
            .collect(),
        participants: PARTICIPANT_NAMES
            .iter()
            .zip(participants)
            .map(|(n, a)| (n.to_string(), a))
            .collect(),
        outcome,
        abort_reason: run.abort_reason().map(str::to_string),
        winner: winner.map(|i| PARTICIPANT_NAMES[i].to_string()),
        final_balances: name_map(participants.map(|p| run.chain().balance(&p))),
        balances_excluding_gas: name_map(run.balances_excluding_gas()),
        gas: GasSummary::from(&report),
        privacy_leak,
        expectations_met,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BalanceDiff {
    pub participant: String,
    pub hybrid: String,
    pub oracle: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelSummary {
    pub balances_excluding_gas: BTreeMap<String, String>,
    pub gas_total: String,
    pub deployment_gas: String,
    pub gas_by_function: BTreeMap<String, String>,
}

/// Document printed by `compare`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompareResult {
    pub scenario_id: String,
    pub outcome: RunOutcome,
    pub hybrid: ModelSummary,
    pub oracle: ModelSummary,
    /// Participants whose gas-excluded balances differ; empty when the
    /// two models agree.
    pub balance_diff: Vec<BalanceDiff>,
    pub dispute_overhead: String,
    /// Oracle gas minus hybrid gas, excluding deployment.
    pub gas_saved: String,
}

pub fn compare_result(file: &ScenarioFile, run: &ProtocolRun) -> Result<CompareResult, ScenarioError> {
    let oracle = run_all_on_chain_oracle(run)?;
    let report = gas_report(run, &oracle);
    let participants = run.config().participants;
    let hybrid_bal = run.balances_excluding_gas();
    let oracle_bal = oracle.balances_excluding_gas(&participants);
    let balance_diff = (0..2)
        .filter(|i| hybrid_bal[*i] != oracle_bal[*i])
        .map(|i| BalanceDiff {
            participant: PARTICIPANT_NAMES[i].into(),
            hybrid: hybrid_bal[i].to_string(),
            oracle: oracle_bal[i].to_string(),
        })
        .collect();
    let mut oracle_by_function: BTreeMap<String, u64> = BTreeMap::new();
    for (record, label) in oracle.chain.records().iter().zip(&oracle.labels) {
        *oracle_by_function.entry(label.clone()).or_default() += record.receipt.gas_used;
    }
    let stringify = |m: &BTreeMap<String, u64>| m.iter().map(|(k, v)| (k.clone(), v.to_string())).collect();
    Ok(CompareResult {
        scenario_id: file.scenario_id.clone(),
        outcome: run_outcome(run),
        hybrid: ModelSummary {
            balances_excluding_gas: name_map(hybrid_bal),
            gas_total: report.hybrid_total.to_string(),
            deployment_gas: report.deployment.to_string(),
            gas_by_function: stringify(&report.by_function),
        },
        oracle: ModelSummary {
            balances_excluding_gas: name_map(oracle_bal),
            gas_total: report.oracle_total.to_string(),
            deployment_gas: report.oracle_deployment.to_string(),
            gas_by_function: stringify(&oracle_by_function),
        },
        balance_diff,
        dispute_overhead: report.dispute_overhead.to_string(),
        gas_saved: (i128::from(report.oracle_total) - i128::from(report.hybrid_total)).to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub index: usize,
    pub time: u64,
    pub function: String,
    pub stage: Stage,
    pub from: Address,
    pub to: Option<Address>,
    pub value_wei: String,
    pub input: String,
    pub gas_limit: u64,
    pub status: String,
    pub gas_used: u64,
    pub created_address: Option<Address>,
    pub emitted_messages: Vec<InternalMessage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GenesisEntry {
    pub address: Address,
    pub balance_wei: String,
}

/// Document printed by `trace`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceResult {
    pub scenario_id: String,
    pub genesis: Vec<GenesisEntry>,
    pub transactions: Vec<TraceRecord>,
    /// Simulator events in order; with `transactions` this replays the chain.
    pub events: Vec<ChainEvent>,
    pub stages: Vec<StageMarker>,
    pub offchain_channel: Vec<ChannelMessage>,
}

pub fn trace_result(file: &ScenarioFile, run: &ProtocolRun) -> TraceResult {
    let chain = run.chain();
    TraceResult {
        scenario_id: file.scenario_id.clone(),
        genesis: chain
            .genesis()
            .iter()
            .map(|(a, b)| GenesisEntry {
                address: *a,
                balance_wei: b.to_string(),
            })
            .collect(),
        transactions: chain
            .records()
            .iter()
            .zip(run.tx_labels())
            .map(|(r, (label, stage))| TraceRecord {
                index: r.index,
                time: r.time,
                function: label.clone(),
                stage: *stage,
                from: r.tx.from,
                to: r.tx.to,
                value_wei: r.tx.value.to_string(),
                input: hex::encode(&r.tx.payload),
                gas_limit: r.tx.gas_limit,
                status: r.receipt.status.to_string(),
                gas_used: r.receipt.gas_used,
                created_address: r.receipt.created_address,
                emitted_messages: r.receipt.emitted_messages.clone(),
            })
            .collect(),
        events: chain.events().to_vec(),
        stages: run.stage_log().to_vec(),
        offchain_channel: run.channel().log.clone(),
    }
}
