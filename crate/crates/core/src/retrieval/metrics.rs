use super::rank::RankedResult;
use crate::error::{Error, Result};

/// Relevance judgments between query ids and database ids.
pub trait Relevance {
    /// `None` when no judgment exists for the pair.
    fn relevant(&self, query: usize, item: usize) -> Option<bool>;
}

/// Items are relevant to a query when they share its class label.
#[derive(Clone, Copy, Debug)]
pub struct LabelRelevance<'a> {
    pub query_labels: &'a [u8],
    pub db_labels: &'a [u8],
}

impl Relevance for LabelRelevance<'_> {
    fn relevant(&self, query: usize, item: usize) -> Option<bool> {
        Some(self.query_labels.get(query)? == self.db_labels.get(item)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapReport {
    pub map: f64,
    /// Queries that contributed an average precision.
    pub evaluated: usize,
    /// Queries without any relevant item in the considered ranks.
    pub excluded: Vec<usize>,
}

fn judge(rel: &impl Relevance, query: usize, item: usize) -> Result<bool> {
    rel.relevant(query, item)
        .ok_or_else(|| Error::MissingIds(vec![item]))
}

/// Mean over queries of average precision: for each relevant rank `r`
/// within the cutoff, the fraction of relevant items in the top `r`,
/// averaged over those ranks. Queries with no relevant item are excluded
/// and listed in the report; with none left the mAP is 0.
pub fn mean_average_precision(
    rankings: &[RankedResult],
    rel: &impl Relevance,
    at: Option<usize>,
) -> Result<MapReport> {
    let mut sum = 0.0;
    let mut evaluated = 0;
    let mut excluded = Vec::new();
    for r in rankings {
        let depth = at.map_or(r.hits.len(), |a| a.min(r.hits.len()));
        let mut found = 0usize;
        let mut precision_sum = 0.0;
        for (rank, hit) in r.hits[..depth].iter().enumerate() {
            if judge(rel, r.query, hit.id)? {
                found += 1;
                precision_sum += found as f64 / (rank + 1) as f64;
            }
        }
        if found == 0 {
            excluded.push(r.query);
        } else {
            sum += precision_sum / found as f64;
            evaluated += 1;
        }
    }
    Ok(MapReport {
        map: if evaluated == 0 { 0.0 } else { sum / evaluated as f64 },
        evaluated,
        excluded,
    })
}

/// Mean fraction of relevant items among the first `n` hits.
pub fn precision_at(rankings: &[RankedResult], rel: &impl Relevance, n: usize) -> Result<f64> {
    if rankings.is_empty() || n == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for r in rankings {
        let mut found = 0;
        for hit in r.hits.iter().take(n) {
            found += usize::from(judge(rel, r.query, hit.id)?);
        }
        sum += found as f64 / n as f64;
    }
    Ok(sum / rankings.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusReport {
    pub radius: usize,
    /// Mean precision inside the Hamming ball (0 for empty balls).
    pub precision: f64,
    /// Mean recall of all relevant database items.
    pub recall: f64,
}

/// Hamming-ball precision/recall from full rankings.
pub fn radius_metrics(rankings: &[RankedResult], rel: &impl Relevance, radius: usize) -> Result<RadiusReport> {
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut with_relevant = 0;
    for r in rankings {
        let (mut inside, mut rel_inside, mut rel_total) = (0usize, 0usize, 0usize);
        for hit in &r.hits {
            let is_rel = judge(rel, r.query, hit.id)?;
            rel_total += usize::from(is_rel);
            if hit.distance as usize <= radius {
                inside += 1;
                rel_inside += usize::from(is_rel);
            }
        }
        if inside > 0 {
            precision += rel_inside as f64 / inside as f64;
        }
        if rel_total > 0 {
            recall += rel_inside as f64 / rel_total as f64;
            with_relevant += 1;
        }
    }
    let n = rankings.len().max(1) as f64;
    Ok(RadiusReport {
        radius,
        precision: precision / n,
        recall: if with_relevant == 0 { 0.0 } else { recall / with_relevant as f64 },
    })
}
