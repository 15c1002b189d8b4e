use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Sizes of the retrieval protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub n_query: usize,
    /// `None` puts every non-query item in the database.
    pub n_database: Option<usize>,
    /// Training images, drawn from the database.
    pub n_train: usize,
}

impl SplitSpec {
    /// 1000 queries, the remaining 59000 as database, 5000 training images.
    pub const FULL: SplitSpec = SplitSpec {
        n_query: 1000,
        n_database: None,
        n_train: 5000,
    };
    /// 200 queries, 5000 database items, 1000 training images.
    pub const DESK: SplitSpec = SplitSpec {
        n_query: 200,
        n_database: Some(5000),
        n_train: 1000,
    };
}

/// Ids into the source set. `query` and `database` are disjoint and
/// `train ⊆ database`; each list is ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub query: Vec<usize>,
    pub database: Vec<usize>,
    pub train: Vec<usize>,
}

/// Class-stratified draw of `count` ids. Per-class quotas are proportional
/// to class sizes, remainders going to the largest fractional parts (ties
/// to the smaller label). Returns `(chosen, rest)`, both ascending.
fn stratified(ids: &[usize], labels: &[u8], count: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut groups: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for &i in ids {
        groups.entry(labels[i]).or_default().push(i);
    }
    let total = ids.len();
    let mut quotas: Vec<(u8, usize, usize)> = groups
        .iter()
        .map(|(&label, g)| {
            let exact = g.len() * count;
            (label, exact / total.max(1), exact % total.max(1))
        })
        .collect();
    let mut assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.cmp(&quotas[a].2).then(quotas[a].0.cmp(&quotas[b].0)));
    for &i in order.iter().cycle().take(quotas.len() * 2) {
        if assigned == count {
            break;
        }
        if quotas[i].1 < groups[&quotas[i].0].len() {
            quotas[i].1 += 1;
            assigned += 1;
        }
    }
    let mut chosen = Vec::with_capacity(count);
    let mut rest = Vec::with_capacity(total - count);
    for (label, quota, _) in quotas {
        let mut g = groups[&label].clone();
        g.shuffle(rng);
        chosen.extend_from_slice(&g[..quota]);
        rest.extend_from_slice(&g[quota..]);
    }
    chosen.sort_unstable();
    rest.sort_unstable();
    (chosen, rest)
}

pub fn make_split(labels: &[u8], spec: SplitSpec, seed: u64) -> Result<Split> {
    let n = labels.len();
    let n_db = spec.n_database.unwrap_or(n.saturating_sub(spec.n_query));
    if spec.n_query + n_db > n {
        return Err(Error::Config(format!(
            "split needs {} queries + {n_db} database items but the set has {n}",
            spec.n_query
        )));
    }
    if spec.n_train > n_db {
        return Err(Error::Config(format!(
            "{} training images requested from a {n_db}-item database",
            spec.n_train
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..n).collect();
    let (query, rest) = stratified(&all, labels, spec.n_query, &mut rng);
    let database = if n_db == rest.len() {
        rest
    } else {
        stratified(&rest, labels, n_db, &mut rng).0
    };
    let (train, _) = stratified(&database, labels, spec.n_train, &mut rng);
    Ok(Split {
        query,
        database,
        train,
    })
}

/// One id per line.
pub fn write_manifest(path: impl AsRef<Path>, ids: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::with_capacity(ids.len() * 6);
    for id in ids {
        writeln!(s, "{id}").expect("writing to a String");
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::Format(format!("{}: line {}: not an id: {l:?}", path.display(), n + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(per_class: usize) -> Vec<u8> {
        (0..10 * per_class).map(|i| (i % 10) as u8).collect()
    }

    #[test]
    fn one_query_per_class() {
        let labels = balanced(10);
        let s = make_split(
            &labels,
            SplitSpec {
                n_query: 10,
                n_database: None,
                n_train: 20,
            },
            1,
        )
        .unwrap();
        let mut classes: Vec<u8> = s.query.iter().map(|&i| labels[i]).collect();
        classes.sort_unstable();
        assert_eq!(classes, (0..10).collect::<Vec<u8>>());
        assert_eq!(s.database.len(), 90);
        assert!(s.query.iter().all(|q| !s.database.contains(q)));
        assert!(s.train.iter().all(|t| s.database.contains(t)));
    }

    #[test]
    fn deterministic_for_seed() {
        let labels = balanced(50);
        let spec = SplitSpec {
            n_query: 20,
            n_database: Some(200),
            n_train: 50,
        };
        assert_eq!(make_split(&labels, spec, 9).unwrap(), make_split(&labels, spec, 9).unwrap());
        assert_ne!(make_split(&labels, spec, 9).unwrap(), make_split(&labels, spec, 10).unwrap());
    }

    #[test]
    fn full_protocol_sizes() {
        let labels = balanced(6000);
        let s = make_split(&labels, SplitSpec::FULL, 0).unwrap();
        assert_eq!((s.query.len(), s.database.len(), s.train.len()), (1000, 59000, 5000));
        let per_class = |ids: &[usize], c: u8| ids.iter().filter(|&&i| labels[i] == c).count();
        for c in 0..10 {
            assert_eq!(per_class(&s.query, c), 100);
            assert_eq!(per_class(&s.train, c), 500);
        }
        let s = make_split(&labels, SplitSpec::DESK, 0).unwrap();
        assert_eq!((s.query.len(), s.database.len(), s.train.len()), (200, 5000, 1000));
    }

    #[test]
    fn oversubscription_is_config_error() {
        let labels = balanced(2);
        let spec = SplitSpec {
            n_query: 15,
            n_database: Some(10),
            n_train: 1,
        };
        assert!(matches!(make_split(&labels, spec, 0), Err(Error::Config(_))));
        let spec = SplitSpec {
            n_query: 5,
            n_database: Some(5),
            n_train: 6,
        };
        assert!(matches!(make_split(&labels, spec, 0), Err(Error::Config(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ids.txt");
        write_manifest(&p, &[3, 1, 4, 1, 5]).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), vec![3, 1, 4, 1, 5]);
    }
}
