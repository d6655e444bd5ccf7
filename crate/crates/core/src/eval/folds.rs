//! Seeded fold assignment.

use rand::seq::SliceRandom;

use crate::seed;

/// Shuffles `items` with `seed` and cuts them into `k` contiguous folds whose
/// sizes differ by at most one. Each fold is returned sorted.
pub fn kfold(items: &[usize], k: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(k >= 1, "k must be positive");
    let mut perm = items.to_vec();
    perm.shuffle(&mut seed::rng(seed));
    let n = perm.len();
    (0..k)
        .map(|f| {
            let mut fold = perm[f * n / k..(f + 1) * n / k].to_vec();
            fold.sort_unstable();
            fold
        })
        .collect()
}

/// Like [`kfold`] but deals each class out across the folds separately, so
/// every fold keeps roughly the overall class ratio. `labels[i]` is the class
/// of `items[i]`.
pub fn stratified_kfold(items: &[usize], labels: &[u8], k: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(k >= 1, "k must be positive");
    assert_eq!(items.len(), labels.len());
    let mut rng = seed::rng(seed);
    let mut classes: Vec<u8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in classes {
        let mut members: Vec<usize> = items
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == class)
            .map(|(&i, _)| i)
            .collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    folds
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kfold_partitions() {
        let items: Vec<usize> = (0..23).collect();
        let folds = kfold(&items, 5, 3);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, items);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().all(|&s| s == 4 || s == 5));
        assert_eq!(kfold(&items, 5, 3), folds);
        assert_ne!(kfold(&items, 5, 4), folds);
    }

    #[test]
    fn stratified_keeps_ratio() {
        let items: Vec<usize> = (100..150).collect();
        let labels: Vec<u8> = (0..50).map(|i| u8::from(i % 5 == 0)).collect();
        let folds = stratified_kfold(&items, &labels, 5, 1);
        let mut all = folds.concat();
        all.sort_unstable();
        assert_eq!(all, items);
        for f in &folds {
            let pos = f.iter().filter(|&&i| (i - 100) % 5 == 0).count();
            assert_eq!(pos, 2);
        }
    }
}
