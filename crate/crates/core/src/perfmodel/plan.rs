//! Block / chunk partitioning shared by the latency model and the instruction generator.

/// `(count, size)` classes of a dimension cut into blocks of `block`: full blocks first, then
/// the remainder if any.
pub fn dim_classes(total: usize, block: usize) -> Vec<(u64, usize)> {
    debug_assert!(block > 0);
    let full = total / block;
    let rem = total % block;
    let mut v = Vec::with_capacity(2);
    if full > 0 {
        v.push((full as u64, block));
    }
    if rem > 0 {
        v.push((1, rem));
    }
    v
}

/// Number of blocks of size `block` covering `total`.
pub fn num_blocks(total: usize, block: usize) -> usize {
    total.div_ceil(block)
}

/// Chunk length used when `total` rows are split over `parts` units, rounded up to `align`.
pub fn chunk_len(total: usize, parts: usize, align: usize) -> usize {
    total.div_ceil(parts).div_ceil(align) * align
}

/// Contiguous `(start, len)` chunks of `total` over at most `parts` units; empty chunks are
/// dropped, so trailing units may receive nothing.
pub fn split(total: usize, parts: usize, align: usize) -> Vec<(usize, usize)> {
    let w = chunk_len(total, parts, align).max(1);
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    while start < total {
        let len = w.min(total - start);
        out.push((start, len));
        start += len;
    }
    debug_assert!(out.len() <= parts);
    out
}

/// Block starts along one dimension.
pub fn block_starts(total: usize, block: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..num_blocks(total, block)).map(move |b| {
        let s = b * block;
        (s, block.min(total - s))
    })
}
