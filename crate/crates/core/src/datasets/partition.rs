//! Assignment of training rows to simulated clients.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Disjoint row-index lists, one per client, covering every training row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientPartition {
    pub assignments: Vec<Vec<usize>>,
}

impl ClientPartition {
    pub fn num_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn client(&self, id: usize) -> &[usize] {
        &self.assignments[id]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }

    /// Checks disjointness, coverage of `0..n_samples` and non-empty clients.
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        let mut seen = vec![false; n_samples];
        for (c, rows) in self.assignments.iter().enumerate() {
            if rows.is_empty() {
                return Err(Error::Consistency(format!("client {c} has no data")));
            }
            for &i in rows {
                if i >= n_samples || seen[i] {
                    return Err(Error::Consistency(format!(
                        "row {i} out of range or assigned twice"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Consistency("some rows are unassigned".into()));
        }
        Ok(())
    }
}

/// Sizes of `n` items split into `k` near-equal contiguous chunks, larger
/// chunks first.
fn balanced_bounds(n: usize, k: usize) -> Vec<(usize, usize)> {
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let b = (start, start + len);
            start += len;
            b
        })
        .collect()
}

/// Random permutation cut into `m_clients` chunks whose sizes differ by at
/// most one.
pub fn partition_iid<R: Rng + ?Sized>(
    n_samples: usize,
    m_clients: usize,
    rng: &mut R,
) -> Result<ClientPartition> {
    if m_clients == 0 {
        return Err(Error::Argument("m_clients must be at least 1".into()));
    }
    if m_clients > n_samples {
        return Err(Error::Argument(format!(
            "{m_clients} clients but only {n_samples} samples"
        )));
    }
    let mut perm: Vec<usize> = (0..n_samples).collect();
    perm.shuffle(rng);
    Ok(ClientPartition {
        assignments: balanced_bounds(n_samples, m_clients)
            .into_iter()
            .map(|(a, b)| perm[a..b].to_vec())
            .collect(),
    })
}

/// Label-sorted shard dealing.
///
/// Rows are sorted by `(label, index)` and cut into
/// `m_clients * shards_per_client` contiguous shards. When the count does not
/// divide evenly the first `n mod shards` shards take one extra row, so every
/// row is assigned. Shards are then dealt to clients in a random order.
pub fn partition_noniid<R: Rng + ?Sized>(
    labels: &[usize],
    m_clients: usize,
    shards_per_client: usize,
    rng: &mut R,
) -> Result<ClientPartition> {
    if m_clients == 0 || shards_per_client == 0 {
        return Err(Error::Argument(
            "m_clients and shards_per_client must be at least 1".into(),
        ));
    }
    let n_shards = m_clients * shards_per_client;
    if labels.len() < n_shards {
        return Err(Error::Argument(format!(
            "{} samples cannot fill {n_shards} shards",
            labels.len()
        )));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by_key(|&i| (labels[i], i));
    let shards: Vec<&[usize]> = balanced_bounds(order.len(), n_shards)
        .into_iter()
        .map(|(a, b)| &order[a..b])
        .collect();
    let mut deal: Vec<usize> = (0..n_shards).collect();
    deal.shuffle(rng);
    let assignments = deal
        .chunks_exact(shards_per_client)
        .map(|ids| {
            let mut rows: Vec<usize> = ids
                .iter()
                .flat_map(|&s| shards[s].iter().copied())
                .collect();
            rows.sort_unstable();
            rows
        })
        .collect();
    Ok(ClientPartition { assignments })
}
