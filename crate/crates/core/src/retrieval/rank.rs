use rayon::prelude::*;

use super::packed::{hamming_words, Code, PackedCodes};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hit {
    pub id: usize,
    pub distance: u32,
}

/// Database ids ordered by ascending Hamming distance, ties by ascending id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedResult {
    pub query: usize,
    pub hits: Vec<Hit>,
}

const SHARD: usize = 4096;

fn check(query: Code<'_>, db: &PackedCodes) -> Result<()> {
    if query.bits != db.bits() || query.words.len() != db.words_per_code() {
        return Err(Error::Shape(format!(
            "{}-bit query against {}-bit database",
            query.bits,
            db.bits()
        )));
    }
    Ok(())
}

fn distances(query: Code<'_>, db: &PackedCodes) -> Vec<u32> {
    let w = db.words_per_code().max(1);
    db.words()
        .par_chunks(SHARD * w)
        .flat_map_iter(|shard| shard.chunks_exact(w).map(|c| hamming_words(query.words, c)))
        .collect()
}

/// Linear scan of the whole database followed by a counting sort on the
/// distance, which keeps equal-distance ids in ascending order.
pub fn rank_database(
    query_id: usize,
    query: Code<'_>,
    db: &PackedCodes,
    top: Option<usize>,
) -> Result<RankedResult> {
    check(query, db)?;
    let dist = distances(query, db);
    let mut counts = vec![0usize; db.bits() + 2];
    for &d in &dist {
        counts[d as usize + 1] += 1;
    }
    for i in 1..counts.len() {
        counts[i] += counts[i - 1];
    }
    let mut hits = vec![Hit { id: 0, distance: 0 }; dist.len()];
    for (id, &d) in dist.iter().enumerate() {
        let slot = &mut counts[d as usize];
        hits[*slot] = Hit { id, distance: d };
        *slot += 1;
    }
    if let Some(top) = top {
        hits.truncate(top);
    }
    Ok(RankedResult {
        query: query_id,
        hits,
    })
}

/// Ranks every query code against the database.
pub fn rank_all(queries: &PackedCodes, db: &PackedCodes, top: Option<usize>) -> Result<Vec<RankedResult>> {
    queries
        .iter()
        .enumerate()
        .map(|(q, code)| rank_database(q, code, db, top))
        .collect()
}

/// Ids within Hamming distance `radius` of the query, ascending.
pub fn hamming_radius_retrieve(query: Code<'_>, db: &PackedCodes, radius: usize) -> Result<Vec<usize>> {
    check(query, db)?;
    if radius > db.bits() {
        return Err(Error::Parameter(format!(
            "radius {radius} exceeds code length {}",
            db.bits()
        )));
    }
    Ok(distances(query, db)
        .into_iter()
        .enumerate()
        .filter(|&(_, d)| d as usize <= radius)
        .map(|(id, _)| id)
        .collect())
}
