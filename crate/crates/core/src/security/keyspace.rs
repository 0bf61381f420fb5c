use crate::model::ModelConfig;

/// Natural-log sizes of the permutation keyspaces an attacker faces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyspaceReport {
    /// `ln(d!)`: guessing `π` to read activations.
    pub data_log: f64,
    /// `3L · ln(d!)`: the per-layer permutations protecting parameters.
    pub params_log: f64,
    /// `ln(s!)`: the classifier output permutation `π_c`.
    pub classifier_log: f64,
}

impl KeyspaceReport {
    pub fn total_log(&self) -> f64 {
        self.data_log + self.params_log + self.classifier_log
    }
}

/// `ln(n!)` via log-gamma.
pub fn ln_factorial(n: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

pub fn keyspace_log_size(cfg: &ModelConfig) -> KeyspaceReport {
    let data_log = ln_factorial(cfg.d_model);
    KeyspaceReport {
        data_log,
        params_log: 3.0 * cfg.n_layers as f64 * data_log,
        classifier_log: ln_factorial(cfg.vocab_size),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_factorials_match_direct_product() {
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
        assert!((ln_factorial(4) - 3.178_053_830_347_945_6).abs() <= 1e-9);
        let mut f = 1u64;
        for n in 1..=12u64 {
            f *= n;
            assert!((ln_factorial(n as usize) - (f as f64).ln()).abs() <= 1e-9, "n={n}");
        }
    }

    #[test]
    fn large_d_agrees_with_log_sum() {
        let direct: f64 = (1..=4096).map(|k| (k as f64).ln()).sum();
        let lg = ln_factorial(4096);
        assert!((lg - direct).abs() <= 1e-6);
        assert!((lg - 29_978.648_060_844).abs() <= 1e-6);
    }

    #[test]
    fn monotone_in_d_and_layers() {
        let mut prev = keyspace_log_size(&ModelConfig::new(2, 2, 4, 4));
        for d in 3..40 {
            let cur = keyspace_log_size(&ModelConfig::new(2, d, 4, 4));
            assert!(cur.data_log > prev.data_log && cur.params_log > prev.params_log);
            prev = cur;
        }
        let a = keyspace_log_size(&ModelConfig::new(2, 16, 4, 4));
        let b = keyspace_log_size(&ModelConfig::new(3, 16, 4, 4));
        assert!(b.params_log > a.params_log);
        assert!((a.params_log - 6.0 * a.data_log).abs() < 1e-9);
        assert!(b.total_log() > a.total_log());
    }
}
