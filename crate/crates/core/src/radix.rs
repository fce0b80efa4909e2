//! Linear-time sorting primitives.
//!
//! `radix_sort_fixed` is the textbook LSD radix sort for records of `w` digits
//! from `[1..k]`, running in O(w·m + w·k).
//!
//! `radix_sort_varlen` sorts m digit sequences of lengths l_1..l_m in
//! O(k + L) where L = Σ l_i. A proper prefix sorts before its extensions.
//! The counting buckets are allocated once (size k+1) and reset through
//! per-position occupied-digit lists `pos[j]` instead of zeroing the whole
//! array on every position, which is what makes the bound independent of
//! k·max(l_i).

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RadixError {
    #[error("digit {value} out of range [1..{k}]")]
    DigitOutOfRange { value: u32, k: u32 },
}

/// Counter of elementary bucket/list operations, used to check the
/// O(k + L) bound empirically.
#[derive(Debug, Default, Clone, Copy)]
pub struct RadixStats {
    pub bucket_touches: u64,
}

impl RadixStats {
    #[inline]
    fn touch(&mut self, n: u64) {
        self.bucket_touches += n;
    }
}

/// Stable LSD radix sort of `items` viewed as `width`-digit numbers.
/// `digit(item, j)` must return the j-th digit (0 = most significant),
/// each in `[1..k]`.
pub fn radix_sort_fixed<T, F>(
    items: Vec<T>,
    width: usize,
    k: u32,
    digit: F,
) -> Result<Vec<T>, RadixError>
where
    F: Fn(&T, usize) -> u32,
{
    for it in &items {
        for j in 0..width {
            let d = digit(it, j);
            if d < 1 || d > k {
                return Err(RadixError::DigitOutOfRange { value: d, k });
            }
        }
    }
    let mut cur = items;
    let mut counts = vec![0u32; k as usize + 1];
    for j in (0..width).rev() {
        counts.iter_mut().for_each(|c| *c = 0);
        for it in &cur {
            counts[digit(it, j) as usize] += 1;
        }
        let mut sum = 0u32;
        for c in counts.iter_mut() {
            let here = *c;
            *c = sum;
            sum += here;
        }
        let mut out: Vec<Option<T>> = (0..cur.len()).map(|_| None).collect();
        for it in cur {
            let d = digit(&it, j) as usize;
            out[counts[d] as usize] = Some(it);
            counts[d] += 1;
        }
        cur = out.into_iter().map(|o| o.unwrap()).collect();
    }
    Ok(cur)
}

/// Stable sort of variable-length digit sequences, lexicographic with
/// prefix-before-extension. Returns the items in sorted order.
pub fn radix_sort_varlen<T>(
    items: Vec<(Vec<u32>, T)>,
    k: u32,
) -> Result<Vec<(Vec<u32>, T)>, RadixError> {
    radix_sort_varlen_with_stats(items, k).map(|(v, _)| v)
}

pub fn radix_sort_varlen_with_stats<T>(
    items: Vec<(Vec<u32>, T)>,
    k: u32,
) -> Result<(Vec<(Vec<u32>, T)>, RadixStats), RadixError> {
    let mut stats = RadixStats::default();
    let m = items.len();
    let mut max_len = 0usize;
    for (key, _) in &items {
        max_len = max_len.max(key.len());
        for &d in key {
            if d < 1 || d > k {
                return Err(RadixError::DigitOutOfRange { value: d, k });
            }
        }
    }

    if m == 0 {
        return Ok((items, stats));
    }

    // pos[j]: ascending list of distinct digits occurring at position j.
    // Built from all (digit, position) pairs with two stable counting passes
    // (by digit, then by position), then deduplicated per position.
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    for (key, _) in &items {
        for (j, &d) in key.iter().enumerate() {
            pairs.push((d, j as u32));
        }
    }
    let total_len = pairs.len() as u64;
    stats.touch(total_len);

    let mut counts = vec![0u32; (k as usize + 1).max(max_len + 1)];
    let sorted_by_digit = counting_pass(
        pairs,
        &mut counts,
        k as usize + 1,
        |p| p.0 as usize,
        &mut stats,
    );
    let pairs = counting_pass(
        sorted_by_digit,
        &mut counts,
        max_len.max(1),
        |p| p.1 as usize,
        &mut stats,
    );

    let mut pos: Vec<Vec<u32>> = vec![Vec::new(); max_len];
    for (d, j) in pairs {
        let list = &mut pos[j as usize];
        if list.last() != Some(&d) {
            list.push(d);
        }
        stats.touch(1);
    }

    // new[j]: items of length exactly j+1, in input order.
    let mut new_at: Vec<Vec<u32>> = vec![Vec::new(); max_len + 1];
    let mut empties: Vec<u32> = Vec::new();
    for (i, (key, _)) in items.iter().enumerate() {
        if key.is_empty() {
            empties.push(i as u32);
        } else {
            new_at[key.len()].push(i as u32);
        }
        stats.touch(1);
    }

    // Main loop: maintain the indices with length >= j, sorted by the suffix
    // starting at position j. Counting sort touches only digits from pos[j].
    let mut cur: Vec<u32> = Vec::new();
    let mut scratch: Vec<u32> = Vec::new();
    for c in counts.iter_mut() {
        *c = 0;
    }
    stats.touch(counts.len() as u64);
    for j in (0..max_len).rev() {
        // Shorter sequences enter in front: prefix sorts before extension.
        let mut next: Vec<u32> = Vec::with_capacity(new_at[j + 1].len() + cur.len());
        next.extend_from_slice(&new_at[j + 1]);
        next.extend_from_slice(&cur);
        cur = next;

        let occupied = &pos[j];
        for &i in &cur {
            let d = items[i as usize].0[j] as usize;
            counts[d] += 1;
        }
        stats.touch(cur.len() as u64);
        let mut sum = 0u32;
        for &d in occupied {
            let here = counts[d as usize];
            counts[d as usize] = sum;
            sum += here;
        }
        stats.touch(occupied.len() as u64);
        scratch.clear();
        scratch.resize(cur.len(), 0);
        for &i in &cur {
            let d = items[i as usize].0[j] as usize;
            scratch[counts[d] as usize] = i;
            counts[d] += 1;
        }
        stats.touch(cur.len() as u64);
        for &d in occupied {
            counts[d as usize] = 0;
        }
        stats.touch(occupied.len() as u64);
        std::mem::swap(&mut cur, &mut scratch);
    }

    let mut order: Vec<u32> = empties;
    order.extend_from_slice(&cur);

    // Permute items into sorted order.
    let mut slots: Vec<Option<(Vec<u32>, T)>> = items.into_iter().map(Some).collect();
    let out = order
        .into_iter()
        .map(|i| slots[i as usize].take().unwrap())
        .collect();
    Ok((out, stats))
}

fn counting_pass<T, F>(
    items: Vec<T>,
    counts: &mut [u32],
    buckets: usize,
    key: F,
    stats: &mut RadixStats,
) -> Vec<T>
where
    F: Fn(&T) -> usize,
{
    for c in counts[..buckets].iter_mut() {
        *c = 0;
    }
    stats.touch(buckets as u64);
    for it in &items {
        counts[key(it)] += 1;
    }
    let mut sum = 0u32;
    for c in counts[..buckets].iter_mut() {
        let here = *c;
        *c = sum;
        sum += here;
    }
    stats.touch((buckets + items.len()) as u64);
    let mut out: Vec<Option<T>> = (0..items.len()).map(|_| None).collect();
    for it in items {
        let d = key(&it);
        out[counts[d] as usize] = Some(it);
        counts[d] += 1;
    }
    out.into_iter().map(|o| o.unwrap()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(v: &[(u32, u32)]) -> Vec<((u32, u32), usize)> {
        v.iter().copied().enumerate().map(|(i, p)| (p, i)).collect()
    }

    #[test]
    fn fixed_sorts_pairs() {
        let input = pairs(&[(2, 1), (1, 2), (1, 1)]);
        let out =
            radix_sort_fixed(input, 2, 2, |it, j| if j == 0 { it.0 .0 } else { it.0 .1 }).unwrap();
        let keys: Vec<(u32, u32)> = out.iter().map(|(p, _)| *p).collect();
        assert_eq!(keys, vec![(1, 1), (1, 2), (2, 1)]);
    }

    #[test]
    fn fixed_empty() {
        let out = radix_sort_fixed(Vec::<((u32, u32), ())>::new(), 2, 5, |it, j| {
            if j == 0 {
                it.0 .0
            } else {
                it.0 .1
            }
        })
        .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn fixed_rejects_out_of_range() {
        let input = pairs(&[(0, 1)]);
        let err = radix_sort_fixed(input, 2, 2, |it, j| if j == 0 { it.0 .0 } else { it.0 .1 })
            .unwrap_err();
        assert_eq!(err, RadixError::DigitOutOfRange { value: 0, k: 2 });
    }

    #[test]
    fn fixed_is_stable() {
        // Equal keys keep input order (payload is the input index).
        let input = pairs(&[(1, 1), (2, 2), (1, 1), (1, 1)]);
        let out =
            radix_sort_fixed(input, 2, 2, |it, j| if j == 0 { it.0 .0 } else { it.0 .1 }).unwrap();
        let payloads: Vec<usize> = out
            .iter()
            .filter(|(p, _)| *p == (1, 1))
            .map(|(_, i)| *i)
            .collect();
        assert_eq!(payloads, vec![0, 2, 3]);
    }

    #[test]
    fn fixed_matches_comparison_sort_oracle() {
        let mut rng = crate::generate::SplitMix64::new(0x5eed);
        let n = 100_000;
        let input: Vec<((u32, u32), usize)> = (0..n)
            .map(|i| (((rng.below(50) + 1) as u32, (rng.below(50) + 1) as u32), i))
            .collect();
        let mut oracle = input.clone();
        oracle.sort_by_key(|(p, i)| (*p, *i));
        let out =
            radix_sort_fixed(input, 2, 50, |it, j| if j == 0 { it.0 .0 } else { it.0 .1 }).unwrap();
        assert_eq!(out, oracle);
    }

    #[test]
    fn varlen_prefix_before_extension() {
        // "ba", "ab", "a" with a=1, b=2.
        let items = vec![(vec![2, 1], "ba"), (vec![1, 2], "ab"), (vec![1], "a")];
        let out = radix_sort_varlen(items, 2).unwrap();
        let names: Vec<&str> = out.iter().map(|(_, n)| *n).collect();
        assert_eq!(names, vec!["a", "ab", "ba"]);
    }

    #[test]
    fn varlen_identical_keys_keep_input_order() {
        let items: Vec<(Vec<u32>, usize)> = (0..10).map(|i| (vec![3, 3, 3], i)).collect();
        let out = radix_sort_varlen(items, 3).unwrap();
        let payloads: Vec<usize> = out.iter().map(|(_, i)| *i).collect();
        assert_eq!(payloads, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn varlen_rejects_out_of_range() {
        let err = radix_sort_varlen(vec![(vec![7], ())], 3).unwrap_err();
        assert_eq!(err, RadixError::DigitOutOfRange { value: 7, k: 3 });
    }

    #[test]
    fn varlen_matches_comparison_sort_oracle() {
        let mut rng = crate::generate::SplitMix64::new(42);
        let n = 100_000;
        let items: Vec<(Vec<u32>, usize)> = (0..n)
            .map(|i| {
                let len = rng.below(20) as usize;
                let key: Vec<u32> = (0..len).map(|_| (rng.below(256) + 1) as u32).collect();
                (key, i)
            })
            .collect();
        let mut oracle = items.clone();
        oracle.sort_by(|(a, i), (b, j)| a.cmp(b).then(i.cmp(j)));
        let out = radix_sort_varlen(items, 256).unwrap();
        assert_eq!(out, oracle);
    }

    #[test]
    fn varlen_bucket_touches_linear() {
        let mut rng = crate::generate::SplitMix64::new(7);
        for &(m, maxlen, k) in &[
            (1000usize, 8usize, 64u32),
            (4000, 16, 256),
            (16000, 4, 1024),
        ] {
            let items: Vec<(Vec<u32>, usize)> = (0..m)
                .map(|i| {
                    let len = 1 + rng.below(maxlen as u64 - 1) as usize;
                    (
                        (0..len).map(|_| (rng.below(k as u64) + 1) as u32).collect(),
                        i,
                    )
                })
                .collect();
            let total: u64 = items.iter().map(|(key, _)| key.len() as u64).sum();
            let (_, stats) = radix_sort_varlen_with_stats(items, k).unwrap();
            assert!(
                stats.bucket_touches <= 10 * (k as u64 + total),
                "touches {} for k={} L={}",
                stats.bucket_touches,
                k,
                total
            );
        }
    }
}
