use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::Example;
use crate::error::{Error, Result};
use crate::transformer::Batch;

/// Groups example indices into batches whose summed source length stays
/// within `token_budget`: shuffle, stable-sort by source length, pack
/// greedily in order, shuffle the batch order. An example longer than the
/// budget forms a batch of its own.
pub fn batch_plan(source_lens: &[usize], token_budget: usize, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    if source_lens.is_empty() {
        return Err(Error::invalid("cannot batch an empty dataset"));
    }
    let mut order: Vec<usize> = (0..source_lens.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| source_lens[i]);
    let mut plan = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut tokens = 0;
    for i in order {
        let n = source_lens[i];
        if !cur.is_empty() && tokens + n > token_budget {
            plan.push(std::mem::take(&mut cur));
            tokens = 0;
        }
        cur.push(i);
        tokens += n;
    }
    plan.push(cur);
    plan.shuffle(rng);
    Ok(plan)
}

pub fn make_batches(examples: &[Example], token_budget: usize, max_len: usize, rng: &mut impl Rng) -> Result<Vec<Batch>> {
    let lens: Vec<usize> = examples.iter().map(|e| e.source_ids.len()).collect();
    batch_plan(&lens, token_budget, rng)?
        .iter()
        .map(|idx| {
            let exs: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
            Batch::from_examples(&exs, max_len)
        })
        .collect()
}
