mod common;

use std::time::{Duration, Instant};

use common::{fixture, stub_bridge};
use tlevo::fitness::TrainerRequest;
use tlevo::{
    run, Chromosome, Concurrency, EvaluatorError, FitnessEvaluator, GaConfig, GeneDomains, StopReason, TrainerBridge,
    TrainerBridgeConfig,
};

fn plan(inc: u32, frz: u32) -> tlevo::ArchitecturePlan {
    Chromosome::new(&GeneDomains::default(), inc, frz, 0.1, 0.1)
        .unwrap()
        .to_architecture()
}

#[test]
fn echo_trainer_returns_its_loss() {
    let bridge = TrainerBridge::new(stub_bridge("echo_trainer.sh", Duration::from_secs(5), 0)).unwrap();
    assert_eq!(bridge.evaluate(&plan(57, 2), 5).unwrap(), 0.42);
    // the same child serves later requests
    assert_eq!(bridge.evaluate(&plan(20, 3), 5).unwrap(), 0.42);
}

#[test]
fn malformed_once_then_success_on_retry() {
    let bridge = TrainerBridge::new(stub_bridge("malformed_once_trainer.sh", Duration::from_secs(5), 1)).unwrap();
    assert_eq!(bridge.evaluate(&plan(57, 2), 5).unwrap(), 0.37);
}

#[test]
fn malformed_without_retries_reports_the_raw_line() {
    let bridge = TrainerBridge::new(stub_bridge("malformed_once_trainer.sh", Duration::from_secs(5), 0)).unwrap();
    match bridge.evaluate(&plan(57, 2), 5) {
        Err(EvaluatorError::MalformedResponse { raw }) => assert_eq!(raw, "epoch 1/5 ... not a response"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn mismatched_id_is_malformed() {
    let bridge = TrainerBridge::new(stub_bridge("wrong_id_trainer.sh", Duration::from_secs(5), 2)).unwrap();
    assert!(matches!(
        bridge.evaluate(&plan(10, 0), 5),
        Err(EvaluatorError::MalformedResponse { .. })
    ));
}

#[test]
fn trainer_error_reply_is_a_failure() {
    let bridge = TrainerBridge::new(stub_bridge("error_trainer.sh", Duration::from_secs(5), 3)).unwrap();
    assert_eq!(
        bridge.evaluate(&plan(10, 0), 5),
        Err(EvaluatorError::Trainer("out of memory".into()))
    );
}

#[test]
fn crash_captures_stderr_and_status() {
    let bridge = TrainerBridge::new(stub_bridge("crash_trainer.sh", Duration::from_secs(5), 3)).unwrap();
    match bridge.evaluate(&plan(10, 0), 5) {
        Err(EvaluatorError::ChildExited { status, stderr }) => {
            assert!(status.contains('3'), "{status}");
            assert!(stderr.contains("device-side assert"), "{stderr}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn hang_times_out_within_the_retry_budget() {
    let timeout = Duration::from_millis(300);
    let bridge = TrainerBridge::new(stub_bridge("hang_trainer.sh", timeout, 2)).unwrap();
    let start = Instant::now();
    let err = bridge.evaluate(&plan(10, 0), 5).unwrap_err();
    let elapsed = start.elapsed();
    assert_eq!(err, EvaluatorError::Timeout { attempts: 3 });
    assert!(elapsed >= timeout * 3, "{elapsed:?}");
    // three timeouts plus process start-up
    assert!(elapsed < timeout * 3 + Duration::from_millis(700), "{elapsed:?}");
}

#[test]
fn hang_surfaces_evaluator_failure_in_the_run() {
    let bridge = TrainerBridge::new(stub_bridge("hang_trainer.sh", Duration::from_millis(300), 0)).unwrap();
    let result = run(GaConfig::with_seed(1), &bridge).unwrap();
    assert_eq!(result.stop_reason, StopReason::EvaluatorFailure);
    let failure = result.failure.unwrap();
    assert_eq!(failure.error, EvaluatorError::Timeout { attempts: 1 });
    assert_eq!(failure.generation, 0);
}

#[test]
fn plan_trainer_drives_a_search() {
    let bridge = TrainerBridge::new(stub_bridge("plan_trainer.sh", Duration::from_secs(5), 0)).unwrap();
    let result = run(GaConfig::with_seed(3), &bridge).unwrap();
    assert_ne!(result.stop_reason, StopReason::EvaluatorFailure);
    let best = result.best.unwrap();
    let expected =
        0.01 * f64::from(58 - best.chromosome.included_layers()) + 0.001 * f64::from(best.chromosome.frozen_layers());
    assert!((best.fitness + expected).abs() < 1e-9);
}

#[test]
fn pool_serves_requests_concurrently() {
    let cfg = TrainerBridgeConfig {
        command: vec![
            "env".into(),
            "TRAINER_DELAY=0.4".into(),
            "sh".into(),
            fixture("plan_trainer.sh"),
        ],
        request_timeout: Duration::from_secs(10),
        max_retries: 0,
        pool_size: 4,
    };
    let bridge = TrainerBridge::new(cfg).unwrap();
    assert_eq!(bridge.concurrency(), Concurrency::Concurrent { max_in_flight: 4 });
    let plans: Vec<_> = (30..38).map(|i| plan(i, 0)).collect();
    let start = Instant::now();
    let losses: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = plans
            .iter()
            .map(|p| s.spawn(|| bridge.evaluate(p, 5).unwrap()))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let elapsed = start.elapsed();
    for (i, loss) in losses.iter().enumerate() {
        let inc = 30 + i as u32;
        assert!((loss - 0.01 * f64::from(58 - inc)).abs() < 1e-9);
    }
    // 8 requests on 4 children: two rounds of 0.4 s, not eight
    assert!(elapsed < Duration::from_millis(2400), "{elapsed:?}");
}

#[test]
fn request_line_is_what_the_child_receives() {
    let line = TrainerRequest {
        id: 42,
        epochs: 5,
        plan: plan(18, 18),
    }
    .to_line();
    assert_eq!(
        line,
        "{\"id\": 42, \"epochs\": 5, \"plan\": {\"block_layer_counts\": [6, 12], \"frozen_prefix\": 18, \"se_layer_count\": 1, \"learning_rate\": 0.1, \"dropout\": 0.1}}\n"
    );
}
