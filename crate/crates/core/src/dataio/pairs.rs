//! Verification pair lists and the stratified k-fold split.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEntry {
    pub id_a: String,
    pub id_b: String,
    pub same: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairList {
    pub entries: Vec<PairEntry>,
    /// Fold index per entry, once assigned.
    pub fold_of: Option<Vec<usize>>,
}

impl PairList {
    pub fn new(entries: Vec<PairEntry>) -> Self {
        Self {
            entries,
            fold_of: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_same(&self) -> usize {
        self.entries.iter().filter(|e| e.same).count()
    }

    pub fn n_diff(&self) -> usize {
        self.len() - self.n_same()
    }

    pub fn same_flags(&self) -> Vec<bool> {
        self.entries.iter().map(|e| e.same).collect()
    }

    /// Number of folds implied by `fold_of`, if assigned.
    pub fn fold_count(&self) -> Option<usize> {
        self.fold_of
            .as_ref()
            .map(|f| f.iter().copied().max().map_or(0, |m| m + 1))
    }
}

fn count_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Samples `n_same` matched and `n_diff` mismatched pairs, uniformly and
/// without replacement, from labeled items. Matched pairs come first.
pub fn make_pairs<S: AsRef<str>>(
    items: &[(S, usize)],
    n_same: usize,
    n_diff: usize,
    seed: u64,
) -> Result<PairList> {
    let num_labels = items.iter().map(|(_, l)| l + 1).max().unwrap_or(0);
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); num_labels];
    for (i, (_, label)) in items.iter().enumerate() {
        by_label[*label].push(i);
    }
    let same_total: usize = by_label.iter().map(|v| count_pairs(v.len())).sum();
    let diff_total = count_pairs(items.len()) - same_total;
    if n_same > same_total {
        return Err(Error::Data(format!(
            "requested {n_same} matched pairs but only {same_total} exist"
        )));
    }
    if n_diff > diff_total {
        return Err(Error::Data(format!(
            "requested {n_diff} mismatched pairs but only {diff_total} exist"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entry = |a: usize, b: usize, same: bool| PairEntry {
        id_a: items[a].0.as_ref().to_owned(),
        id_b: items[b].0.as_ref().to_owned(),
        same,
    };

    let mut all_same = Vec::with_capacity(same_total);
    for members in &by_label {
        for (k, &a) in members.iter().enumerate() {
            for &b in &members[k + 1..] {
                all_same.push((a, b));
            }
        }
    }
    let mut entries: Vec<PairEntry> = index::sample(&mut rng, same_total, n_same)
        .into_iter()
        .map(|i| {
            let (a, b) = all_same[i];
            entry(a, b, true)
        })
        .collect();

    if n_diff * 2 > diff_total {
        // Dense request: enumerate and subsample.
        let mut all_diff = Vec::with_capacity(diff_total);
        for a in 0..items.len() {
            for b in a + 1..items.len() {
                if items[a].1 != items[b].1 {
                    all_diff.push((a, b));
                }
            }
        }
        entries.extend(
            index::sample(&mut rng, diff_total, n_diff)
                .into_iter()
                .map(|i| entry(all_diff[i].0, all_diff[i].1, false)),
        );
    } else {
        // Sparse request: rejection sampling keeps memory bounded.
        let mut seen = HashSet::with_capacity(n_diff);
        while seen.len() < n_diff {
            let a = rng.random_range(0..items.len());
            let b = rng.random_range(0..items.len());
            if items[a].1 == items[b].1 {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if seen.insert(key) {
                entries.push(entry(key.0, key.1, false));
            }
        }
    }
    Ok(PairList::new(entries))
}

/// Splits into `k` folds with exactly `n_same / k` matched and
/// `n_diff / k` mismatched entries each. Entry order is unchanged.
pub fn assign_folds(pairs: &PairList, k: usize, seed: u64) -> Result<PairList> {
    if k == 0 {
        return Err(Error::Protocol("fold count must be >= 1".to_owned()));
    }
    let (n_same, n_diff) = (pairs.n_same(), pairs.n_diff());
    if !pairs.len().is_multiple_of(k) || !n_same.is_multiple_of(k) || !n_diff.is_multiple_of(k) {
        return Err(Error::Protocol(format!(
            "{} pairs ({n_same} matched, {n_diff} mismatched) cannot be split evenly into {k} folds",
            pairs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; pairs.len()];
    for same in [true, false] {
        let mut idx: Vec<usize> = (0..pairs.len())
            .filter(|&i| pairs.entries[i].same == same)
            .collect();
        idx.shuffle(&mut rng);
        let per_fold = idx.len() / k;
        for (pos, &i) in idx.iter().enumerate() {
            fold_of[i] = pos / per_fold.max(1);
        }
    }
    Ok(PairList {
        entries: pairs.entries.clone(),
        fold_of: Some(fold_of),
    })
}

#[derive(Serialize, Deserialize)]
struct PairRow {
    id_a: String,
    id_b: String,
    same: u8,
}

/// Writes the `id_a,id_b,same` CSV (LF line endings).
pub fn write_pairs_csv<W: Write>(pairs: &PairList, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for e in &pairs.entries {
        w.serialize(PairRow {
            id_a: e.id_a.clone(),
            id_b: e.id_b.clone(),
            same: u8::from(e.same),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs_csv<R: Read>(input: R) -> Result<PairList> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id_a", "id_b", "same"] {
        return Err(Error::Data(format!(
            "pair CSV header must be id_a,id_b,same, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut entries = Vec::new();
    for (line, row) in r.deserialize::<PairRow>().enumerate() {
        let row = row?;
        let same = match row.same {
            0 => false,
            1 => true,
            other => {
                return Err(Error::Data(format!(
                    "pair row {}: same must be 0 or 1, got {other}",
                    line + 1
                )))
            }
        };
        entries.push(PairEntry {
            id_a: row.id_a,
            id_b: row.id_b,
            same,
        });
    }
    Ok(PairList::new(entries))
}

pub fn save_pairs_csv(pairs: &PairList, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_pairs_csv(pairs, file)
}

pub fn load_pairs_csv(path: impl AsRef<Path>) -> Result<PairList> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_pairs_csv(file)
}

fn lfw_id(name: &str, number: &str) -> Result<String> {
    let n: usize = number
        .parse()
        .map_err(|_| Error::Data(format!("bad image number `{number}` for {name}")))?;
    Ok(format!("{name}_{n:04}"))
}

/// Parses an LFW-style `pairs.txt`.
///
/// Matched lines are `name n1 n2`, mismatched lines `name1 n1 name2 n2`;
/// ids become `Name_0001`. An optional first line `folds count` declares
/// the standard layout (per fold: `count` matched then `count`
/// mismatched), in which case folds are assigned from file order.
pub fn parse_lfw_pairs(text: &str) -> Result<PairList> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty()).peekable();
    let mut layout = None;
    if let Some(first) = lines.peek() {
        let fields: Vec<&str> = first.split_whitespace().collect();
        if !fields.is_empty() && fields.len() <= 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            let nums: Vec<usize> = fields.iter().map(|f| f.parse().unwrap_or(0)).collect();
            if nums.len() == 2 {
                layout = Some((nums[0], nums[1]));
            }
            lines.next();
        }
    }

    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        let entry = match f.as_slice() {
            [name, a, b] => PairEntry {
                id_a: lfw_id(name, a)?,
                id_b: lfw_id(name, b)?,
                same: true,
            },
            [name_a, a, name_b, b] => PairEntry {
                id_a: lfw_id(name_a, a)?,
                id_b: lfw_id(name_b, b)?,
                same: false,
            },
            _ => {
                return Err(Error::Data(format!(
                    "pairs line {}: expected 3 or 4 fields, got {}",
                    i + 1,
                    f.len()
                )))
            }
        };
        entries.push(entry);
    }

    let mut list = PairList::new(entries);
    if let Some((folds, per)) = layout {
        if folds * per * 2 != list.len() {
            return Err(Error::Protocol(format!(
                "header declares {folds} folds of {per}+{per} pairs but file has {} pairs",
                list.len()
            )));
        }
        for (i, e) in list.entries.iter().enumerate() {
            let expect_same = (i / per) % 2 == 0;
            if e.same != expect_same {
                return Err(Error::Protocol(format!(
                    "pair {} breaks the matched/mismatched block layout",
                    i + 1
                )));
            }
        }
        list.fold_of = Some((0..list.len()).map(|i| i / (2 * per)).collect());
    }
    Ok(list)
}
