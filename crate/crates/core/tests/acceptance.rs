//! Acceptance suite: one test per criterion. Each test prints a single
//! `criterion N: PASS|FAIL` line with its measurements and fails if the
//! property or the runtime limit is not met.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hybridsplit_core::betting::{
    self, betting_spec, winner_index, BettingConfig, OnChainState,
};
use hybridsplit_core::crypto::vectors::{check, parse, VectorRecord};
use hybridsplit_core::crypto::{
    derive_keypair, ecrecover, ecsign, keccak256, Address, Hash32, PrivateKey,
};
use hybridsplit_core::ir::Word;
use hybridsplit_core::ledger::{ether, Chain, MessageKind, Transaction};
use hybridsplit_core::protocol::{
    agents_from_seed, genesis_balance, run_all_on_chain_oracle, Outcome, Policy, ProtocolRun,
    Schedule, GAS_LIMIT,
};
use hybridsplit_core::scenario::{compare_result, run_result, trace_result, ScenarioFile};
use hybridsplit_core::split::{
    sign_copy, split_and_pad, verify_copy, SignedCopy, Verification,
};

fn report(n: u8, ok: bool, elapsed: Duration, limit: Option<Duration>, detail: &str) {
    let in_time = limit.is_none_or(|l| elapsed < l);
    let limit_text = limit.map_or("none".to_string(), |l| format!("{}s", l.as_secs()));
    println!(
        "criterion {n}: {} ({detail}; {:.2}s, limit {limit_text})",
        if ok && in_time { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    assert!(ok, "criterion {n} property failed: {detail}");
    assert!(in_time, "criterion {n} exceeded its runtime limit");
}

fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn key(label: &str) -> PrivateKey {
    derive_keypair(&keccak256(label.as_bytes()).0).unwrap().0
}

#[test]
fn criterion_1_crypto_conformance() {
    let start = Instant::now();
    let text = std::fs::read_to_string(repo_path("testdata/vectors.txt")).unwrap();
    let records = parse(&text).unwrap();
    let keccak_vectors = records
        .iter()
        .filter(|r| matches!(r, VectorRecord::Keccak { .. }))
        .count();
    let sign_vectors = records.len() - keccak_vectors;
    let mismatches = check(&records);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut round_trip_failures = 0;
    for _ in 0..1000 {
        let key = loop {
            if let Ok((k, _, _)) = derive_keypair(&rng.gen()) {
                break k;
            }
        };
        let digest = Hash32(rng.gen());
        let sig = ecsign(&digest, &key);
        if !sig.is_low_s() || ecrecover(&digest, &sig).ok() != Some(key.address()) {
            round_trip_failures += 1;
        }
    }

    let mut one = [0u8; 32];
    one[31] = 1;
    let addr = derive_keypair(&one).unwrap().2;
    let addr_ok = addr.to_hex() == "7e5f4552091a69125d5dfcb7b8c2659029395bdf";

    let ok = keccak_vectors >= 10 && mismatches.is_empty() && round_trip_failures == 0 && addr_ok;
    report(
        1,
        ok,
        start.elapsed(),
        Some(Duration::from_secs(5)),
        &format!(
            "{keccak_vectors} keccak + {sign_vectors} signature vectors, {} mismatches; \
             1000 round trips, {round_trip_failures} failures; key 0x01 address match {addr_ok}",
            mismatches.len()
        ),
    );
}

/// An `n`-party betting contract deployed on a fresh chain with every
/// participant deposited and the clock past T3.
struct DisputeBench {
    chain: Chain,
    contract: Address,
    keys: Vec<PrivateKey>,
    participants: Vec<Address>,
    offchain: Vec<u8>,
}

impl DisputeBench {
    fn new(n: usize) -> Self {
        let keys: Vec<PrivateKey> = (0..n).map(|i| key(&format!("party-{i}"))).collect();
        let participants: Vec<Address> = keys.iter().map(PrivateKey::address).collect();
        let filler = Address([0xee; 20]);
        let pair = [participants[0], *participants.get(1).unwrap_or(&filler)];
        let config = BettingConfig::new(pair, 100, 200, 300, b"abc".to_vec());
        let mut spec = betting_spec(&config).unwrap();
        spec.participants = participants.clone();
        let (on, off) = split_and_pad(&spec).unwrap();
        let genesis: Vec<(Address, Word)> = participants.iter().map(|p| (*p, ether(10))).collect();
        let mut chain = Chain::new(&genesis).unwrap();
        chain.advance_to(1);
        let contract = chain
            .submit_transaction(Transaction::create(participants[0], on.to_bytecode(), GAS_LIMIT))
            .unwrap()
            .created_address
            .unwrap();
        for p in &participants {
            let r = chain
                .submit_transaction(Transaction::call(*p, contract, ether(1), betting::deposit_payload(), GAS_LIMIT))
                .unwrap();
            assert!(r.status.is_success(), "{}", r.status);
        }
        chain.advance_to(301);
        Self {
            chain,
            contract,
            keys,
            participants,
            offchain: off.to_bytecode(),
        }
    }

    fn submit(&mut self, copy: &SignedCopy) -> bool {
        let payload = betting::deploy_verified_instance_payload(copy);
        self.chain
            .submit_transaction(Transaction::call(self.participants[0], self.contract, Word::ZERO, payload, GAS_LIMIT))
            .unwrap()
            .status
            .is_success()
    }
}

#[test]
fn criterion_2_unforgeability() {
    let start = Instant::now();
    let mut false_accepts = 0;
    let mut false_rejects = 0;
    let mut cases = 0;
    let outsider = key("outsider");

    // all signer subsets for |P| = 1, 2, 3, checked off-chain and on-chain
    for n in 1..=3 {
        let mut bench = DisputeBench::new(n);
        let digest = keccak256(&bench.offchain);
        for mask in 0..(1u32 << n) {
            let full = mask == (1 << n) - 1;
            // missing signers replaced by an outsider's signature
            let substituted = SignedCopy {
                bytecode: bench.offchain.clone(),
                signatures: (0..n)
                    .map(|i| {
                        if mask & (1 << i) != 0 {
                            ecsign(&digest, &bench.keys[i])
                        } else {
                            ecsign(&digest, &outsider)
                        }
                    })
                    .collect(),
            };
            // missing signers simply left out
            let omitted = SignedCopy {
                bytecode: bench.offchain.clone(),
                signatures: (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| ecsign(&digest, &bench.keys[i]))
                    .collect(),
            };
            for copy in [&substituted, &omitted] {
                cases += 1;
                let accepted = verify_copy(copy, &bench.participants) == Verification::Accepted;
                match (accepted, full) {
                    (true, false) => false_accepts += 1,
                    (false, true) => false_rejects += 1,
                    _ => {}
                }
            }
            if !full {
                for copy in [&substituted, &omitted] {
                    cases += 1;
                    if bench.submit(copy) {
                        false_accepts += 1;
                    }
                }
            }
        }
        // the genuine copy goes last since a success pins the instance
        let genuine = sign_copy(&bench.offchain, &bench.keys, n).unwrap();
        cases += 1;
        if !bench.submit(&genuine) {
            false_rejects += 1;
        }
        let state = OnChainState::read(&bench.chain, &bench.contract, &[bench.participants[0], bench.participants[0]]);
        assert!(state.deployed_addr.is_some());
    }

    // 1000 single-byte flips of the two-party bytecode, signatures intact
    let mut bench = DisputeBench::new(2);
    let genuine = sign_copy(&bench.offchain, &bench.keys, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let flips = 1000;
    for _ in 0..flips {
        let mut copy = genuine.clone();
        let at = rng.gen_range(0..copy.bytecode.len());
        copy.bytecode[at] ^= rng.gen_range(1..=255u8);
        cases += 2;
        if verify_copy(&copy, &bench.participants) == Verification::Accepted {
            false_accepts += 1;
        }
        if bench.submit(&copy) {
            false_accepts += 1;
        }
    }
    cases += 2;
    if verify_copy(&genuine, &bench.participants) != Verification::Accepted {
        false_rejects += 1;
    }
    if !bench.submit(&genuine) {
        false_rejects += 1;
    }

    report(
        2,
        false_accepts == 0 && false_rejects == 0,
        start.elapsed(),
        Some(Duration::from_secs(30)),
        &format!(
            "{cases} checks over {flips} flips and all signer subsets for |P| <= 3; \
             {false_accepts} false accepts, {false_rejects} false rejects"
        ),
    );
}

fn random_honest_run(rng: &mut ChaCha8Rng) -> (ProtocolRun, Schedule) {
    let agents = agents_from_seed(&rng.gen(), [Policy::Honest; 2]).unwrap();
    let t1 = rng.gen_range(10..500);
    let t2 = t1 + rng.gen_range(1..500);
    let t3 = t2 + rng.gen_range(1..500);
    let len = rng.gen_range(0..64);
    let params: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
    let mut config = BettingConfig::new([agents[0].address, agents[1].address], t1, t2, t3, params);
    config.reveal_padding = rng.gen_range(0..20);
    config.reveal_compute_cost = rng.gen_range(0..100);
    config.deposit_amount = Word::from(rng.gen_range(1..=5u64)) * ether(1) / Word::from(rng.gen_range(1..=4u64));
    let deploy_at = rng.gen_range(1..=t1);
    let schedule = Schedule {
        deployer: rng.gen_range(0..2),
        deploy_at,
        deposits: [Some(rng.gen_range(deploy_at..=t1)), Some(rng.gen_range(deploy_at..=t1))],
        refund_round_one: Vec::new(),
        challenge_at: rng.gen_range(t2 + 1..=t3),
        dispute_at: rng.gen_range(t3 + 1..=t3 + 100),
    };
    (ProtocolRun::new(config, agents).unwrap(), schedule)
}

#[test]
fn criterion_3_honest_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let runs = 60;
    let mut balance_mismatches = 0;
    let mut gas_violations = 0;
    let mut wrong_winner = 0;
    let mut min_saving = u64::MAX;
    for _ in 0..runs {
        let (mut run, schedule) = random_honest_run(&mut rng);
        schedule.execute(&mut run).unwrap();
        let oracle = run_all_on_chain_oracle(&run).unwrap();
        let p = run.config().participants;
        if run.balances_excluding_gas() != oracle.balances_excluding_gas(&p) {
            balance_mismatches += 1;
        }
        if run.winner() != Some(winner_index(&run.config().reveal_params)) {
            wrong_winner += 1;
        }
        let hybrid_gas: u64 = run
            .chain()
            .records()
            .iter()
            .filter(|r| r.tx.to.is_some())
            .map(|r| r.receipt.gas_used)
            .sum();
        let oracle_gas = oracle.execution_gas();
        if hybrid_gas >= oracle_gas {
            gas_violations += 1;
        } else {
            min_saving = min_saving.min(oracle_gas - hybrid_gas);
        }
    }
    report(
        3,
        balance_mismatches == 0 && gas_violations == 0 && wrong_winner == 0,
        start.elapsed(),
        Some(Duration::from_secs(60)),
        &format!(
            "{runs} randomized honest runs; {balance_mismatches} balance mismatches, \
             {gas_violations} runs without gas saving, {wrong_winner} wrong winners; min saving {min_saving} gas"
        ),
    );
}

#[test]
fn criterion_4_honest_victory() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut combos = 0;
    for policy in Policy::ADVERSARIAL {
        for adversary in 0..2 {
            // "" makes Alice win, "abc" makes Bob win
            for params in [&b""[..], &b"abc"[..]] {
                combos += 1;
                let mut policies = [Policy::Honest; 2];
                policies[adversary] = policy;
                let agents = agents_from_seed(&keccak256(params).0, policies).unwrap();
                let config = BettingConfig::new([agents[0].address, agents[1].address], 100, 200, 300, params.to_vec());
                let deposit = config.deposit_amount;
                let mut run = ProtocolRun::new(config, agents).unwrap();
                Schedule::standard(run.config()).execute(&mut run).unwrap();

                let honest = 1 - adversary;
                let winner = winner_index(params);
                let balances = run.balances_excluding_gas();
                let entitled = |i: usize| {
                    if i == winner {
                        genesis_balance() + deposit
                    } else {
                        genesis_balance() - deposit
                    }
                };
                let label = format!("{policy} as {}, winner {winner}", ["alice", "bob"][adversary]);
                if run.outcome() != Some(&Outcome::Completed) {
                    failures.push(format!("{label}: run did not complete"));
                }
                if winner == honest && (run.winner() != Some(honest) || balances[honest] != entitled(honest)) {
                    failures.push(format!("{label}: honest winner not paid"));
                }
                if balances[adversary] > entitled(adversary) {
                    failures.push(format!("{label}: adversary profited"));
                }
                if balances[honest] < entitled(honest) {
                    failures.push(format!("{label}: honest party lost funds"));
                }
            }
        }
    }
    report(
        4,
        combos == 12 && failures.is_empty(),
        start.elapsed(),
        Some(Duration::from_secs(30)),
        &format!("{combos} combinations; failures: {failures:?}"),
    );
}

#[test]
fn criterion_5_privacy() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut runs = 0;
    let mut leaks = 0;
    let mut payloads_scanned = 0;
    for _ in 0..60 {
        let (mut run, schedule) = random_honest_run(&mut rng);
        schedule.execute(&mut run).unwrap();
        runs += 1;
        payloads_scanned += run.chain().records().len();
        if run.privacy_leak() {
            leaks += 1;
        }
    }
    for name in ["honest.json", "heavy_reveal.json", "missing_deposit.json"] {
        let file = ScenarioFile::load(&repo_path("scenarios").join(name)).unwrap();
        let run = file.execute(None).unwrap();
        runs += 1;
        payloads_scanned += run.chain().records().len();
        if run.privacy_leak() {
            leaks += 1;
        }
    }
    report(
        5,
        leaks == 0,
        start.elapsed(),
        Some(Duration::from_secs(10)),
        &format!("{runs} all-honest runs, {payloads_scanned} payloads scanned with 16-byte windows; {leaks} leaks"),
    );
}

/// Everything a call could change, with gas paid added back to balances.
#[derive(Debug, PartialEq, Eq)]
struct Observable {
    contracts: Vec<(Word, BTreeMap<Word, Word>)>,
    eoas: Vec<Word>,
}

fn observe(chain: &Chain, contracts: &[Address], eoas: &[Address]) -> Observable {
    Observable {
        contracts: contracts
            .iter()
            .map(|c| {
                let acc = chain.account(c);
                (
                    acc.map_or(Word::ZERO, |a| a.balance),
                    acc.map(|a| a.storage.clone()).unwrap_or_default(),
                )
            })
            .collect(),
        eoas: eoas.iter().map(|e| chain.balance(e) + chain.gas_paid(e)).collect(),
    }
}

#[derive(Debug, Clone, Copy)]
enum FuzzCall {
    Deposit(Word),
    RefundRoundOne,
    RefundRoundTwo,
    Reassign,
    DeployGenuine,
    DeployForged,
    DeployTampered,
    EnforceFromEoa(bool),
    ReturnOnInstance,
}

#[test]
fn criterion_6_gate_soundness() {
    let start = Instant::now();
    let (t1, t2, t3) = (100u64, 200u64, 300u64);
    let keys = [key("alice"), key("bob"), key("mallory")];
    let eoas: Vec<Address> = keys.iter().map(PrivateKey::address).collect();
    let participants = [eoas[0], eoas[1]];
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    let episodes = 100;
    let calls_per_episode = 130;
    let mut calls = 0;
    let mut gate_breaches = Vec::new();
    let mut model_disagreements = Vec::new();
    let mut double_payouts = 0;
    let mut payouts_total = 0;
    let mut successes: BTreeMap<String, usize> = BTreeMap::new();

    for episode in 0..episodes {
        let params: Vec<u8> = (0..rng.gen_range(0..8)).map(|_| rng.gen()).collect();
        let config = BettingConfig::new(participants, t1, t2, t3, params.clone());
        let deposit = config.deposit_amount;
        let pot = config.pot();
        let loser = 1 - winner_index(&params);
        let spec = betting_spec(&config).unwrap();
        let (on, off) = split_and_pad(&spec).unwrap();
        let off_bytes = off.to_bytecode();
        let genuine = sign_copy(&off_bytes, &keys[..2], 2).unwrap();
        let forged = sign_copy(&off_bytes, &[keys[0].clone(), keys[2].clone()], 2).unwrap();
        let tampered = ProtocolRun::tampered_copy(&genuine);

        let mut chain = Chain::new(&eoas.iter().map(|e| (*e, ether(10))).collect::<Vec<_>>()).unwrap();
        chain.advance_to(1);
        let contract = chain
            .submit_transaction(Transaction::create(eoas[0], on.to_bytecode(), GAS_LIMIT))
            .unwrap()
            .created_address
            .unwrap();
        chain.register_offchain(contract, &off_bytes).unwrap();
        let mut payouts = 0;
        // most episodes open with both stakes in so later stages get exercised
        let opening = if rng.gen_bool(0.7) { 2 } else { 0 };

        for step in 0..calls_per_episode {
            match rng.gen_range(0..20) {
                0..=11 => {}
                12..=18 => chain.advance_to(chain.now() + rng.gen_range(1..15)),
                _ => {
                    let mark = [t1, t1 + 1, t2, t2 + 1, t3, t3 + 1][rng.gen_range(0..6)];
                    chain.advance_to(mark);
                }
            }
            let caller_idx = if step < opening { step } else { rng.gen_range(0..3) };
            let caller = eoas[caller_idx];
            let choice = if step < opening { 9 } else { rng.gen_range(0..9) };
            let call = match choice {
                9 => FuzzCall::Deposit(deposit),
                0 => FuzzCall::Deposit(
                    [deposit, deposit - Word::ONE, Word::ZERO, pot][rng.gen_range(0..4)],
                ),
                1 => FuzzCall::RefundRoundOne,
                2 => FuzzCall::RefundRoundTwo,
                3 => FuzzCall::Reassign,
                4 => FuzzCall::DeployGenuine,
                5 => FuzzCall::DeployForged,
                6 => FuzzCall::DeployTampered,
                7 => FuzzCall::EnforceFromEoa(rng.gen()),
                _ => FuzzCall::ReturnOnInstance,
            };

            let now = chain.now();
            let state = OnChainState::read(&chain, &contract, &participants);
            let is_participant = caller_idx < 2;
            let met = state.account_balance.iter().all(|b| *b == deposit);
            let instance = state.deployed_addr;
            let (to, value, payload, allowed) = match call {
                FuzzCall::Deposit(v) => (
                    contract,
                    v,
                    betting::deposit_payload(),
                    now <= t1 && is_participant && v == deposit && state.account_balance[caller_idx] == Word::ZERO,
                ),
                FuzzCall::RefundRoundOne => (
                    contract,
                    Word::ZERO,
                    betting::refund_round_one_payload(),
                    now <= t1 && is_participant,
                ),
                FuzzCall::RefundRoundTwo => (
                    contract,
                    Word::ZERO,
                    betting::refund_round_two_payload(),
                    t1 < now && now <= t2 && is_participant && !met,
                ),
                FuzzCall::Reassign => (
                    contract,
                    Word::ZERO,
                    betting::reassign_payload(),
                    t2 < now && now <= t3 && is_participant && met && !state.resolved && caller_idx == loser,
                ),
                FuzzCall::DeployGenuine | FuzzCall::DeployForged | FuzzCall::DeployTampered => {
                    let (copy, valid) = match call {
                        FuzzCall::DeployGenuine => (&genuine, true),
                        FuzzCall::DeployForged => (&forged, false),
                        _ => (&tampered, false),
                    };
                    (
                        contract,
                        Word::ZERO,
                        betting::deploy_verified_instance_payload(copy),
                        now > t3 && is_participant && met && instance.is_none() && valid,
                    )
                }
                FuzzCall::EnforceFromEoa(w) => (
                    contract,
                    Word::ZERO,
                    betting::enforce_dispute_resolution_payload(w),
                    false,
                ),
                FuzzCall::ReturnOnInstance => match instance {
                    Some(inst) => (
                        inst,
                        Word::ZERO,
                        betting::return_dispute_resolution_payload(&contract),
                        is_participant && !state.resolved,
                    ),
                    None => continue,
                },
            };

            let watched: Vec<Address> = std::iter::once(contract).chain(instance).collect();
            let before = observe(&chain, &watched, &eoas);
            let receipt = chain
                .submit_transaction(Transaction::call(caller, to, value, payload, GAS_LIMIT))
                .unwrap();
            calls += 1;
            let after = observe(&chain, &watched, &eoas);
            if receipt.status.is_success() {
                let name = format!("{call:?}");
                let name = name.split('(').next().unwrap_or_default().to_string();
                *successes.entry(name).or_default() += 1;
            }

            if !allowed && (receipt.status.is_success() || before != after) {
                gate_breaches.push(format!("episode {episode} t={now}: {call:?} by {caller_idx}"));
            }
            if allowed && !receipt.status.is_success() {
                model_disagreements.push(format!("episode {episode} t={now}: {call:?} by {caller_idx}: {}", receipt.status));
            }
            payouts += receipt
                .emitted_messages
                .iter()
                .filter(|m| m.kind == MessageKind::Transfer && m.from == contract && m.value == pot)
                .count();
        }
        if payouts > 1 {
            double_payouts += 1;
        }
        payouts_total += payouts;
    }

    report(
        6,
        calls >= 10_000
            && payouts_total > 0
            && gate_breaches.is_empty()
            && model_disagreements.is_empty()
            && double_payouts == 0,
        start.elapsed(),
        Some(Duration::from_secs(60)),
        &format!(
            "{calls} fuzzed calls over {episodes} episodes, {payouts_total} pot payouts, successes {successes:?}; \
             {} guard breaches {:?}, {double_payouts} double payouts, {} model disagreements {:?}",
            gate_breaches.len(),
            gate_breaches.iter().take(3).collect::<Vec<_>>(),
            model_disagreements.len(),
            model_disagreements.iter().take(3).collect::<Vec<_>>(),
        ),
    );
}

#[test]
fn criterion_7_determinism() {
    let start = Instant::now();
    let mut files = 0;
    let mut differing = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(repo_path("scenarios"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    entries.sort();
    for path in entries {
        let Ok(file) = ScenarioFile::load(&path) else {
            continue;
        };
        files += 1;
        let render = || {
            let run = file.execute(None).unwrap();
            let replayed = run.chain().replay_self().unwrap();
            let replay_matches = replayed.accounts() == run.chain().accounts()
                && replayed.records() == run.chain().records();
            (
                serde_json::to_string(&trace_result(&file, &run)).unwrap(),
                serde_json::to_string(&run_result(&file, &run).unwrap()).unwrap(),
                serde_json::to_string(&compare_result(&file, &run).unwrap()).unwrap(),
                replay_matches,
            )
        };
        let a = render();
        let b = render();
        if a != b || !a.3 {
            differing.push(path.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    report(
        7,
        files >= 5 && differing.is_empty(),
        start.elapsed(),
        None,
        &format!("{files} scenario files executed twice and replayed; differing: {differing:?}"),
    );
}
