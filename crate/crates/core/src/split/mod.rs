//! Classification, splitting and padding of contracts into an on-chain part
//! and a privately held off-chain part.

pub mod codec;
pub mod signed;
pub mod templates;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::crypto::{keccak256, Address, Hash32};
use crate::ir::{
    AbiType, ContractSpec, FunctionKind, FunctionSpec, Guard, Instr, Parameter, SpecError, Word,
    DEPLOYED_ADDR, DEPOSIT_AMOUNT, RESOLVED,
};

pub use codec::{deserialize, serialize, CodecError, SERIALIZER_VERSION};
pub use signed::{sign_copy, verify_copy, SignedCopy, Verification};
pub use templates::{
    DEPLOY_VERIFIED_INSTANCE, ENFORCE_DISPUTE_RESOLUTION, RESOLVE_ON_CHAIN,
    RETURN_DISPUTE_RESOLUTION,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SplitError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("classification override names unknown function `{0}`")]
    UnknownOverride(String),
    #[error("function `{0}` has no kind assigned")]
    Unclassified(String),
    #[error("no heavy functions: nothing to move off-chain")]
    DegenerateSplit,
    #[error("no heavy function returning bool to resolve disputes with")]
    NoResolutionFunction,
    #[error("resolution function `{0}` is not a heavy function returning bool")]
    InvalidResolution(String),
    #[error("function name `{0}` is reserved for padding")]
    ReservedName(String),
    #[error("heavy function `{from}` invokes light function `{to}`")]
    HeavyInvokesLight { from: String, to: String },
    #[error("`{from}` invokes unknown function `{to}`")]
    UnknownInvoke { from: String, to: String },
    #[error("artifact is missing or duplicates padded function `{0}`")]
    Padding(String),
    #[error("artifact has role {actual:?}, expected {expected:?}")]
    WrongRole {
        expected: ArtifactRole,
        actual: ArtifactRole,
    },
}

/// Per-function kind overrides; anything not named falls back to the
/// function's own kind, then to the transfer heuristic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyPolicy {
    #[serde(default)]
    pub overrides: BTreeMap<String, FunctionKind>,
}

impl ClassifyPolicy {
    pub fn with_override(mut self, function: impl Into<String>, kind: FunctionKind) -> Self {
        self.overrides.insert(function.into(), kind);
        self
    }
}

/// Assigns a kind to every function. Currency-moving functions default to
/// light, everything else to heavy.
pub fn classify(spec: &ContractSpec, policy: &ClassifyPolicy) -> Result<ContractSpec, SplitError> {
    spec.validate()?;
    if let Some(unknown) = policy
        .overrides
        .keys()
        .find(|name| spec.function(name).is_none())
    {
        return Err(SplitError::UnknownOverride(unknown.clone()));
    }
    let mut out = spec.clone();
    for f in &mut out.functions {
        let default = if f.transfers_currency {
            FunctionKind::Light
        } else {
            FunctionKind::Heavy
        };
        f.kind = Some(
            policy
                .overrides
                .get(&f.name)
                .copied()
                .or(f.kind)
                .unwrap_or(default),
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactRole {
    /// Every function deployed together (the all-on-chain model).
    Whole,
    OnChain,
    OffChain,
}

/// Who may pass a `ParticipantOnly` guard. Off-chain code only commits to
/// participant digests so that it shares no identities with on-chain code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessList {
    Addresses(Vec<Address>),
    Digests(Vec<Hash32>),
}

impl AccessList {
    pub fn admits(&self, caller: &Address) -> bool {
        match self {
            AccessList::Addresses(list) => list.contains(caller),
            AccessList::Digests(list) => list.contains(&keccak256(caller.0)),
        }
    }

    pub fn addresses(&self) -> Option<&[Address]> {
        match self {
            AccessList::Addresses(list) => Some(list),
            AccessList::Digests(_) => None,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AccessList::Addresses(list) => list.len(),
            AccessList::Digests(list) => list.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Deployable contract code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Artifact {
    pub role: ArtifactRole,
    pub name: String,
    pub access: AccessList,
    pub parameters: Vec<Parameter>,
    pub functions: Vec<FunctionSpec>,
}

impl Artifact {
    pub fn function(&self, name: &str) -> Option<&FunctionSpec> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_names(&self) -> BTreeSet<&str> {
        self.functions.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn to_bytecode(&self) -> Vec<u8> {
        serialize(self)
    }

    pub fn instruction_count(&self) -> usize {
        self.functions.iter().map(|f| f.body.len()).sum()
    }

    fn require_padding(&self, expected: &[&str]) -> Result<(), SplitError> {
        for extra in templates::EXTRA_FUNCTIONS {
            let count = self.functions.iter().filter(|f| f.name == extra).count();
            let want = usize::from(expected.contains(&extra));
            if count != want {
                return Err(SplitError::Padding(extra.to_string()));
            }
        }
        Ok(())
    }

    fn require_role(&self, expected: ArtifactRole) -> Result<(), SplitError> {
        if self.role != expected {
            return Err(SplitError::WrongRole {
                expected,
                actual: self.role,
            });
        }
        Ok(())
    }
}

/// Light functions plus `deployVerifiedInstance` and `enforceDisputeResolution`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct OnChainArtifact(Artifact);

/// Heavy functions plus `returnDisputeResolution`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct OffChainArtifact(Artifact);

impl OnChainArtifact {
    pub fn new(artifact: Artifact) -> Result<Self, SplitError> {
        artifact.require_role(ArtifactRole::OnChain)?;
        artifact.require_padding(&[DEPLOY_VERIFIED_INSTANCE, ENFORCE_DISPUTE_RESOLUTION])?;
        Ok(Self(artifact))
    }

    pub fn artifact(&self) -> &Artifact {
        &self.0
    }

    pub fn into_artifact(self) -> Artifact {
        self.0
    }

    pub fn to_bytecode(&self) -> Vec<u8> {
        serialize(&self.0)
    }
}

impl OffChainArtifact {
    pub fn new(artifact: Artifact) -> Result<Self, SplitError> {
        artifact.require_role(ArtifactRole::OffChain)?;
        artifact.require_padding(&[RETURN_DISPUTE_RESOLUTION])?;
        Ok(Self(artifact))
    }

    pub fn artifact(&self) -> &Artifact {
        &self.0
    }

    pub fn into_artifact(self) -> Artifact {
        self.0
    }

    pub fn to_bytecode(&self) -> Vec<u8> {
        serialize(&self.0)
    }

    pub fn from_bytecode(bytes: &[u8]) -> Result<Self, OffChainDecodeError> {
        let artifact = deserialize(bytes)?;
        Ok(Self::new(artifact)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OffChainDecodeError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Split(#[from] SplitError),
}

fn resolution_function(spec: &ContractSpec) -> Result<String, SplitError> {
    let is_candidate = |f: &FunctionSpec| {
        f.kind == Some(FunctionKind::Heavy) && f.returns == Some(AbiType::Bool)
    };
    match &spec.resolution {
        Some(name) => match spec.function(name) {
            Some(f) if is_candidate(f) => Ok(name.clone()),
            _ => Err(SplitError::InvalidResolution(name.clone())),
        },
        None => spec
            .functions
            .iter()
            .find(|f| is_candidate(f))
            .map(|f| f.name.clone())
            .ok_or(SplitError::NoResolutionFunction),
    }
}

fn check_classified(spec: &ContractSpec) -> Result<(), SplitError> {
    spec.validate()?;
    for f in &spec.functions {
        if f.kind.is_none() {
            return Err(SplitError::Unclassified(f.name.clone()));
        }
        if templates::EXTRA_FUNCTIONS.contains(&f.name.as_str()) {
            return Err(SplitError::ReservedName(f.name.clone()));
        }
    }
    for f in &spec.functions {
        for instr in &f.body {
            if let Instr::Invoke { function } | Instr::OffchainInvoke { function } = instr {
                let target = spec.function(function).ok_or_else(|| SplitError::UnknownInvoke {
                    from: f.name.clone(),
                    to: function.clone(),
                })?;
                if f.kind == Some(FunctionKind::Heavy) && target.kind == Some(FunctionKind::Light) {
                    return Err(SplitError::HeavyInvokesLight {
                        from: f.name.clone(),
                        to: function.clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

fn with_dispute_slots(parameters: &[Parameter]) -> Vec<Parameter> {
    let mut out = parameters.to_vec();
    for name in [DEPLOYED_ADDR, RESOLVED] {
        if !out.iter().any(|p| p.name == name) {
            out.push(Parameter {
                name: name.into(),
                value: Word::ZERO,
            });
        }
    }
    out
}

/// Partitions a classified contract by kind and pads both halves.
///
/// Light functions that invoke a heavy function get the result through
/// `OffchainInvoke` instead of executing it. The off-chain half only keeps
/// the parameters its own functions and guards read.
pub fn split_and_pad(
    spec: &ContractSpec,
) -> Result<(OnChainArtifact, OffChainArtifact), SplitError> {
    check_classified(spec)?;
    let (light, heavy): (Vec<&FunctionSpec>, Vec<&FunctionSpec>) = spec
        .functions
        .iter()
        .partition(|f| f.kind == Some(FunctionKind::Light));
    if heavy.is_empty() {
        return Err(SplitError::DegenerateSplit);
    }
    let resolution = resolution_function(spec)?;
    let heavy_names: BTreeSet<&str> = heavy.iter().map(|f| f.name.as_str()).collect();
    let participants = spec.participants.len();

    let mut on_functions: Vec<FunctionSpec> = light
        .iter()
        .map(|f| {
            let mut f = (*f).clone();
            for instr in &mut f.body {
                if let Instr::Invoke { function } = instr {
                    if heavy_names.contains(function.as_str()) {
                        *instr = Instr::OffchainInvoke {
                            function: std::mem::take(function),
                        };
                    }
                }
            }
            f
        })
        .collect();
    on_functions.push(templates::deploy_verified_instance(participants, &spec.dispute));
    on_functions.push(templates::enforce_dispute_resolution(participants));

    let mut off_functions: Vec<FunctionSpec> = heavy.iter().map(|f| (*f).clone()).collect();
    off_functions.push(templates::return_dispute_resolution(&resolution));

    let mut read_slots: BTreeSet<&str> = BTreeSet::new();
    for f in &off_functions {
        for g in &f.modifiers {
            match g {
                Guard::NotAfter { param } | Guard::After { param } => {
                    read_slots.insert(param);
                }
                Guard::Window { after, until } => {
                    read_slots.insert(after);
                    read_slots.insert(until);
                }
                Guard::AmountMet | Guard::AmountNotMet => {
                    read_slots.insert(DEPOSIT_AMOUNT);
                }
                Guard::ParticipantOnly | Guard::DeployedAddrOnly => {}
            }
        }
        for i in &f.body {
            if let Instr::Slot { name } = i {
                read_slots.insert(name);
            }
        }
    }
    let off_parameters = spec
        .parameters
        .iter()
        .filter(|p| read_slots.contains(p.name.as_str()))
        .cloned()
        .collect();

    let on = OnChainArtifact::new(Artifact {
        role: ArtifactRole::OnChain,
        name: spec.name.clone(),
        access: AccessList::Addresses(spec.participants.clone()),
        parameters: with_dispute_slots(&spec.parameters),
        functions: on_functions,
    })?;
    let off = OffChainArtifact::new(Artifact {
        role: ArtifactRole::OffChain,
        name: spec.name.clone(),
        access: AccessList::Digests(spec.participants.iter().map(|a| keccak256(a.0)).collect()),
        parameters: off_parameters,
        functions: off_functions,
    })?;
    Ok((on, off))
}

/// The unsplit contract for the all-on-chain model: every function plus a
/// direct on-chain resolution entry point in place of the dispute pair.
pub fn all_on_chain_artifact(spec: &ContractSpec) -> Result<Artifact, SplitError> {
    check_classified(spec)?;
    let resolution = resolution_function(spec)?;
    let mut functions = spec.functions.clone();
    functions.push(templates::resolve_on_chain(
        &resolution,
        spec.participants.len(),
        &spec.dispute,
    ));
    Ok(Artifact {
        role: ArtifactRole::Whole,
        name: spec.name.clone(),
        access: AccessList::Addresses(spec.participants.clone()),
        parameters: with_dispute_slots(&spec.parameters),
        functions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{DisputeConfig, Visibility};

    fn func(name: &str, transfers: bool) -> FunctionSpec {
        let mut f = FunctionSpec::new(name);
        f.transfers_currency = transfers;
        f
    }

    fn heavy_bool(name: &str) -> FunctionSpec {
        let mut f = func(name, false);
        f.visibility = Visibility::Private;
        f.returns = Some(AbiType::Bool);
        f.body = vec![Instr::Push { value: Word::ONE }, Instr::Return];
        f
    }

    fn six_function_spec() -> ContractSpec {
        ContractSpec {
            name: "six".into(),
            participants: vec![Address([1; 20]), Address([2; 20])],
            parameters: vec![],
            functions: vec![
                func("f1", true),
                heavy_bool("f2"),
                func("f3", true),
                heavy_bool("f4"),
                func("f5", true),
                heavy_bool("f6"),
            ],
            resolution: None,
            dispute: DisputeConfig::default(),
        }
    }

    fn names(a: &Artifact) -> Vec<&str> {
        a.functions.iter().map(|f| f.name.as_str()).collect()
    }

    #[test]
    fn six_function_split() {
        let spec = classify(&six_function_spec(), &ClassifyPolicy::default()).unwrap();
        let (on, off) = split_and_pad(&spec).unwrap();
        assert_eq!(
            names(on.artifact()),
            ["f1", "f3", "f5", DEPLOY_VERIFIED_INSTANCE, ENFORCE_DISPUTE_RESOLUTION]
        );
        assert_eq!(
            names(off.artifact()),
            ["f2", "f4", "f6", RETURN_DISPUTE_RESOLUTION]
        );
    }

    #[test]
    fn overrides_win_and_unknown_override_errors() {
        let policy = ClassifyPolicy::default().with_override("f1", FunctionKind::Heavy);
        let spec = classify(&six_function_spec(), &policy).unwrap();
        assert_eq!(spec.function("f1").unwrap().kind, Some(FunctionKind::Heavy));

        let bad = ClassifyPolicy::default().with_override("nope", FunctionKind::Light);
        assert_eq!(
            classify(&six_function_spec(), &bad),
            Err(SplitError::UnknownOverride("nope".into()))
        );
    }

    #[test]
    fn all_light_is_degenerate() {
        let mut spec = six_function_spec();
        for f in &mut spec.functions {
            f.transfers_currency = true;
        }
        let spec = classify(&spec, &ClassifyPolicy::default()).unwrap();
        assert!(spec
            .functions
            .iter()
            .all(|f| f.kind == Some(FunctionKind::Light)));
        assert_eq!(split_and_pad(&spec), Err(SplitError::DegenerateSplit));
    }

    #[test]
    fn unclassified_is_rejected() {
        assert_eq!(
            split_and_pad(&six_function_spec()),
            Err(SplitError::Unclassified("f1".into()))
        );
    }

    #[test]
    fn light_invoke_of_heavy_becomes_offchain() {
        let mut spec = six_function_spec();
        spec.functions[0].body = vec![Instr::Invoke {
            function: "f2".into(),
        }];
        let spec = classify(&spec, &ClassifyPolicy::default()).unwrap();
        let (on, _) = split_and_pad(&spec).unwrap();
        assert_eq!(
            on.artifact().function("f1").unwrap().body,
            vec![Instr::OffchainInvoke {
                function: "f2".into()
            }]
        );
    }

    #[test]
    fn heavy_invoking_light_is_rejected() {
        let mut spec = six_function_spec();
        spec.functions[1].body.insert(
            0,
            Instr::Invoke {
                function: "f1".into(),
            },
        );
        let spec = classify(&spec, &ClassifyPolicy::default()).unwrap();
        assert!(matches!(
            split_and_pad(&spec),
            Err(SplitError::HeavyInvokesLight { .. })
        ));
    }

    #[test]
    fn reserved_names_rejected() {
        let mut spec = six_function_spec();
        spec.functions.push(func(DEPLOY_VERIFIED_INSTANCE, true));
        let spec = classify(&spec, &ClassifyPolicy::default()).unwrap();
        assert!(matches!(split_and_pad(&spec), Err(SplitError::ReservedName(_))));
    }

    #[test]
    fn wrong_role_rejected() {
        let spec = classify(&six_function_spec(), &ClassifyPolicy::default()).unwrap();
        let (on, _) = split_and_pad(&spec).unwrap();
        assert!(matches!(
            OffChainArtifact::new(on.into_artifact()),
            Err(SplitError::WrongRole { .. })
        ));
    }
}
