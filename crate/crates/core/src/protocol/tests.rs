use super::*;

fn run_with(policies: [Policy; 2], params: &[u8]) -> ProtocolRun {
    let agents = agents_from_seed(&[7; 32], policies).unwrap();
    let config = BettingConfig::new([agents[0].address, agents[1].address], 100, 200, 300, params.to_vec());
    ProtocolRun::new(config, agents).unwrap()
}

fn executed(policies: [Policy; 2], params: &[u8]) -> ProtocolRun {
    let mut run = run_with(policies, params);
    let schedule = Schedule::standard(run.config());
    schedule.execute(&mut run).unwrap();
    run
}

// "abc" makes Bob (index 1) the winner, "" makes Alice the winner.
const BOB_WINS: &[u8] = b"abc";
const ALICE_WINS: &[u8] = b"";

#[test]
fn honest_run_completes_without_dispute() {
    let run = executed([Policy::Honest; 2], BOB_WINS);
    assert_eq!(run.outcome(), Some(&Outcome::Completed));
    assert_eq!(run.winner(), Some(1));
    assert!(run.instance_address().is_none());
    let b = run.balances_excluding_gas();
    assert_eq!(b[1], genesis_balance() + ether(1));
    assert_eq!(b[0], genesis_balance() - ether(1));
    assert!(!run.privacy_leak());
}

#[test]
fn silent_loser_is_overruled_by_dispute() {
    let run = executed([Policy::SilentLoser, Policy::Honest], BOB_WINS);
    assert_eq!(run.outcome(), Some(&Outcome::Completed));
    assert_eq!(run.winner(), Some(1));
    assert!(run.instance_address().is_some());
    assert!(run
        .tx_labels()
        .iter()
        .any(|(l, s)| l == crate::split::RETURN_DISPUTE_RESOLUTION && *s == Stage::DisputeResolve));
    // disputing publishes the signed copy
    assert!(run.privacy_leak());
}

#[test]
fn tampered_copy_is_rejected() {
    let run = executed([Policy::Honest, Policy::TamperedCopySubmitter], ALICE_WINS);
    assert_eq!(run.winner(), Some(0));
    let first_dispute = run
        .chain()
        .records()
        .iter()
        .zip(run.tx_labels())
        .find(|(_, (l, _))| l == crate::split::DEPLOY_VERIFIED_INSTANCE)
        .unwrap();
    assert_eq!(first_dispute.0.tx.from, run.agents()[1].address);
    assert!(!first_dispute.0.receipt.status.is_success());
}

#[test]
fn non_signer_aborts_before_deposits() {
    let run = executed([Policy::Honest, Policy::NonSigner], BOB_WINS);
    assert_eq!(run.outcome(), Some(&Outcome::Aborted));
    assert!(run.abort_reason().unwrap().contains("bob"));
    assert_eq!(run.chain().records().len(), 1);
    assert_eq!(run.balances_excluding_gas(), [genesis_balance(); 2]);
}

#[test]
fn stages_run_in_order() {
    let mut run = run_with([Policy::Honest; 2], BOB_WINS);
    assert!(matches!(
        run.stage_deploy_sign(0),
        Err(ProtocolError::Stage { expected: Stage::DeploySign, .. })
    ));
    run.stage_split_generate(&ClassifyPolicy::default()).unwrap();
    assert!(run.stage_split_generate(&ClassifyPolicy::default()).is_err());
    assert!(run.stage_submit_challenge().is_err());
    run.advance_to(1);
    run.stage_deploy_sign(0).unwrap();
    assert!(run.stage_dispute_resolve(0).is_err());
    let stages: Vec<Stage> = run.stage_log().iter().map(|m| m.stage).collect();
    assert_eq!(stages, [Stage::SplitGenerate, Stage::DeploySign, Stage::SubmitChallenge]);
}

#[test]
fn early_dispute_reverts_and_stays_in_dispute() {
    let mut run = run_with([Policy::SilentLoser, Policy::Honest], BOB_WINS);
    run.stage_split_generate(&ClassifyPolicy::default()).unwrap();
    run.advance_to(1);
    run.stage_deploy_sign(0).unwrap();
    run.deposit(0).unwrap();
    run.deposit(1).unwrap();
    run.advance_to(250);
    run.stage_submit_challenge().unwrap();
    assert_eq!(run.stage(), Stage::DisputeResolve);
    run.advance_to(300);
    run.stage_dispute_resolve(1).unwrap();
    assert_eq!(run.stage(), Stage::DisputeResolve);
    assert!(!run.chain().records().last().unwrap().receipt.status.is_success());
    run.advance_to(301);
    run.stage_dispute_resolve(1).unwrap();
    assert_eq!(run.stage(), Stage::Completed);
}

#[test]
fn mismatched_deployment_is_refused() {
    let mut run = run_with([Policy::Honest; 2], BOB_WINS);
    run.stage_split_generate(&ClassifyPolicy::default()).unwrap();
    let mut code = run.onchain().unwrap().to_bytecode();
    let last = code.len() - 1;
    code[last] ^= 1;
    run.stage_deploy_sign_with_code(0, code).unwrap();
    assert_eq!(run.outcome(), Some(&Outcome::Aborted));
}

#[test]
fn missing_deposit_refunds() {
    let mut run = run_with([Policy::Honest; 2], BOB_WINS);
    let mut schedule = Schedule::standard(run.config());
    schedule.deposits[1] = None;
    schedule.challenge_at = 150;
    schedule.execute(&mut run).unwrap();
    assert_eq!(run.outcome(), Some(&Outcome::Completed));
    assert_eq!(run.balances_excluding_gas(), [genesis_balance(); 2]);
    assert_eq!(run.state().unwrap().recorded_total(), Word::ZERO);
}

#[test]
fn oracle_matches_hybrid_balances() {
    for policies in [
        [Policy::Honest, Policy::Honest],
        [Policy::SilentLoser, Policy::Honest],
        [Policy::Honest, Policy::FalseSubmitter],
        [Policy::TamperedCopySubmitter, Policy::Honest],
    ] {
        for params in [BOB_WINS, ALICE_WINS] {
            let run = executed(policies, params);
            let oracle = run_all_on_chain_oracle(&run).unwrap();
            let p = run.config().participants;
            assert_eq!(run.balances_excluding_gas(), oracle.balances_excluding_gas(&p), "{policies:?}");
            let report = gas_report(&run, &oracle);
            assert!(report.hybrid_total > 0 && report.oracle_total > 0);
        }
    }
}

#[test]
fn tampered_copy_keeps_signatures_but_changes_digest() {
    let run = executed([Policy::Honest; 2], BOB_WINS);
    let copy = run.copies().values().next().unwrap();
    let bad = ProtocolRun::tampered_copy(copy);
    assert_eq!(bad.signatures, copy.signatures);
    assert_ne!(bad.digest(), copy.digest());
    assert_ne!(verify_copy(&bad, &run.config().participants), Verification::Accepted);
}

#[test]
fn window_scan() {
    assert!(shares_window(b"0123456789abcdefXYZ", [&b"..0123456789abcdef.."[..]], 16));
    assert!(!shares_window(b"0123456789abcdeX", [&b"0123456789abcdef"[..]], 16));
    assert!(!shares_window(b"short", [&b"short"[..]], 16));
}

