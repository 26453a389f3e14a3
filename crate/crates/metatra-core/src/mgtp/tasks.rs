//! Meta-task sampling within the source domains.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::cvae_head::PreparedWindow;
use crate::error::{CoreError, Result};

/// Which phase a task batch feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskRole {
    MetaTrain,
    MetaTest,
}

/// A batch bound to its phase and origin domain.
#[derive(Debug, Clone)]
pub struct TaskBatch {
    pub role: TaskRole,
    pub domain_id: String,
    pub windows: Arc<Vec<PreparedWindow>>,
}

/// Prepared batches of one source domain.
#[derive(Debug, Clone)]
pub struct DomainBatches {
    pub domain_id: String,
    pub batches: Vec<Arc<Vec<PreparedWindow>>>,
}

/// All source domains, ready for task sampling.
#[derive(Debug, Clone)]
pub struct DomainPool {
    pub domains: Vec<DomainBatches>,
}

impl DomainPool {
    pub fn total_batches(&self) -> usize {
        self.domains.iter().map(|d| d.batches.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.domains.iter().any(|d| d.batches.is_empty()) {
            return Err(CoreError::Config(
                "every source domain needs at least one batch".into(),
            ));
        }
        Ok(())
    }
}

/// Choose one domain uniformly as the pseudo-target, draw the meta-test batch
/// from it, and the meta-train batch from a uniformly chosen remaining domain.
pub fn sample_tasks(pool: &DomainPool, rng: &mut ChaCha8Rng) -> Result<(TaskBatch, TaskBatch)> {
    let n = pool.domains.len();
    if n < 2 {
        return Err(CoreError::Config(
            "meta-learning needs >= 2 source domains (fall back to the ERM baseline for one)"
                .into(),
        ));
    }
    let target_idx = rng.gen_range(0..n);
    let mut source_idx = rng.gen_range(0..n - 1);
    if source_idx >= target_idx {
        source_idx += 1;
    }
    let source = &pool.domains[source_idx];
    let target = &pool.domains[target_idx];
    let s_batch = source.batches[rng.gen_range(0..source.batches.len())].clone();
    let t_batch = target.batches[rng.gen_range(0..target.batches.len())].clone();
    Ok((
        TaskBatch {
            role: TaskRole::MetaTrain,
            domain_id: source.domain_id.clone(),
            windows: s_batch,
        },
        TaskBatch {
            role: TaskRole::MetaTest,
            domain_id: target.domain_id.clone(),
            windows: t_batch,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn pool(n_domains: usize) -> DomainPool {
        DomainPool {
            domains: (0..n_domains)
                .map(|i| DomainBatches {
                    domain_id: format!("d{i}"),
                    batches: vec![Arc::new(Vec::new()); 3],
                })
                .collect(),
        }
    }

    #[test]
    fn two_domains_force_the_partition() {
        let p = pool(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let (s, t) = sample_tasks(&p, &mut rng).unwrap();
            assert_ne!(s.domain_id, t.domain_id);
            assert_eq!(s.role, TaskRole::MetaTrain);
            assert_eq!(t.role, TaskRole::MetaTest);
        }
    }

    #[test]
    fn sampling_is_reproducible_given_seed() {
        let p = pool(5);
        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10)
                .map(|_| {
                    let (s, t) = sample_tasks(&p, &mut rng).unwrap();
                    (s.domain_id, t.domain_id)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn single_domain_is_rejected() {
        let p = pool(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_tasks(&p, &mut rng).is_err());
    }
}
