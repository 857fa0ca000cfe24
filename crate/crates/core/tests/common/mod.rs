#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Duration;

use tlevo::{ChromosomeKey, GeneDomains, SyntheticLandscape, TrainerBridgeConfig};

pub fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

pub fn stub_bridge(script: &str, timeout: Duration, max_retries: u32) -> TrainerBridgeConfig {
    TrainerBridgeConfig {
        command: vec!["sh".into(), fixture(script)],
        request_timeout: timeout,
        max_retries,
        pool_size: 1,
    }
}

/// Every point of the gene box, frozen > included combinations included.
pub fn gene_box(domains: &GeneDomains) -> Vec<ChromosomeKey> {
    let mut keys = Vec::with_capacity(domains.box_size());
    for inc in domains.included_layers().min..=domains.included_layers().max {
        for frz in domains.frozen_layers().min..=domains.frozen_layers().max {
            for lr in 0..domains.learning_rates().len() as u16 {
                for dr in 0..domains.dropouts().len() as u16 {
                    keys.push(ChromosomeKey {
                        included_layers: inc,
                        frozen_layers: frz,
                        learning_rate_index: lr,
                        dropout_index: dr,
                    });
                }
            }
        }
    }
    keys
}

/// Losses of the whole gene box, ascending.
pub fn enumerated_losses(landscape: &SyntheticLandscape) -> Vec<f64> {
    let mut losses: Vec<f64> = gene_box(landscape.domains())
        .into_iter()
        .map(|k| landscape.loss_at(k))
        .collect();
    losses.sort_by(f64::total_cmp);
    losses
}

/// All-pairs AUC in exact integer arithmetic: returns (2 * wins + ties, 2 * pairs).
pub fn brute_force_auc(labels: &[bool], scores: &[f64]) -> (u64, u64) {
    let mut doubled = 0u64;
    let mut pairs = 0u64;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                doubled += 2;
            } else if scores[i] == scores[j] {
                doubled += 1;
            }
        }
    }
    (doubled, 2 * pairs)
}
