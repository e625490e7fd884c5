//! Heterogeneous architecture populations: uniform, monotone, bottleneck,
//! spindle and random hidden-width profiles over a grid of depths.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nncore::{is_valley, ArchitectureSpec, SpecDiagnostic, TopologyTag};
use crate::seeds;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("pool config: {0}")]
    Config(String),
    #[error("category {category} at depth {depth}: requested {requested} specs but only {available} distinct ones exist")]
    Infeasible { category: TopologyTag, depth: usize, requested: usize, available: u128 },
    #[error("category {category} at depth {depth}: sampler failed to find {requested} distinct specs")]
    Exhausted { category: TopologyTag, depth: usize, requested: usize },
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub depths: Vec<usize>,
    pub width_candidates: Vec<usize>,
    /// Specs requested per topology; split as evenly as possible over `depths`.
    pub per_category_counts: BTreeMap<TopologyTag, usize>,
    pub seed: u64,
}

impl Default for PoolConfig {
    /// 175 specs over depths {3, 5, 10} and widths 256…4096. Uniform gets
    /// every available spec (5 widths × 3 depths); the rest is spread over
    /// the other families.
    fn default() -> Self {
        let counts = [
            (TopologyTag::Uniform, 15),
            (TopologyTag::Increasing, 20),
            (TopologyTag::Decreasing, 20),
            (TopologyTag::Bottleneck, 40),
            (TopologyTag::Spindle, 40),
            (TopologyTag::Random, 40),
        ];
        PoolConfig {
            depths: vec![3, 5, 10],
            width_candidates: vec![256, 512, 1024, 2048, 4096],
            per_category_counts: counts.into_iter().collect(),
            seed: 0,
        }
    }
}

impl PoolConfig {
    /// The 30-spec desk pool: widths ≤ 1024, depths {3, 5, 10}, with all
    /// three depth-10 uniform nets included.
    pub fn desk() -> Self {
        let counts = [
            (TopologyTag::Uniform, 9),
            (TopologyTag::Increasing, 3),
            (TopologyTag::Decreasing, 3),
            (TopologyTag::Bottleneck, 5),
            (TopologyTag::Spindle, 5),
            (TopologyTag::Random, 5),
        ];
        PoolConfig { depths: vec![3, 5, 10], width_candidates: vec![256, 512, 1024], per_category_counts: counts.into_iter().collect(), seed: 0 }
    }

    pub fn total(&self) -> usize {
        self.per_category_counts.values().sum()
    }

    fn validate(&self) -> Result<(), PoolError> {
        if self.depths.is_empty() || self.depths.contains(&0) {
            return Err(PoolError::Config("depths must be non-empty and ≥ 1".into()));
        }
        if self.width_candidates.is_empty() || self.width_candidates.contains(&0) {
            return Err(PoolError::Config("width candidates must be non-empty and ≥ 1".into()));
        }
        let mut d = self.depths.clone();
        d.sort_unstable();
        d.dedup();
        let mut w = self.width_candidates.clone();
        w.sort_unstable();
        w.dedup();
        if d.len() != self.depths.len() || w.len() != self.width_candidates.len() {
            return Err(PoolError::Config("depths and width candidates must not repeat".into()));
        }
        Ok(())
    }
}

/// One pool member as stored in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: String,
    pub depth: usize,
    /// Full width vector `[w_in, hidden…, w_out]`.
    pub widths: Vec<usize>,
    pub category: TopologyTag,
    /// Per-architecture seed, mixed into every run's initialization seed.
    pub seed: u64,
}

impl PoolEntry {
    pub fn spec(&self) -> ArchitectureSpec {
        ArchitectureSpec { depth: self.depth, widths: self.widths.clone(), topology: self.category }
    }
}

pub fn validate_spec(spec: &ArchitectureSpec) -> Result<(), Vec<SpecDiagnostic>> {
    let d = spec.diagnostics();
    if d.is_empty() {
        Ok(())
    } else {
        Err(d)
    }
}

fn binom(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Exact number of distinct hidden-width vectors of length `depth` over `m`
/// candidates that the classifier assigns to `category`.
pub fn support_size(category: TopologyTag, depth: usize, m: usize) -> u128 {
    let (l, mm) = (depth as u128, m as u128);
    let uniform = mm;
    let nondecreasing = binom(mm + l - 1, l);
    let monotone = 2 * nondecreasing - uniform;
    // sequences that fall then rise, each counted once by the phase at which
    // the first strict rise happens
    let v_shaped = {
        let mut falling = vec![1u128; m];
        let mut rising = vec![0u128; m];
        for _ in 1..depth {
            let mut nf = vec![0u128; m];
            let mut nr = vec![0u128; m];
            for v in 0..m {
                nf[v] = (v..m).map(|u| falling[u]).sum();
                nr[v] = (0..v).map(|u| falling[u]).sum::<u128>() + (0..=v).map(|u| rising[u]).sum::<u128>();
            }
            falling = nf;
            rising = nr;
        }
        falling.iter().sum::<u128>() + rising.iter().sum::<u128>()
    };
    let valley = v_shaped - monotone;
    match category {
        TopologyTag::Uniform => uniform,
        TopologyTag::Increasing | TopologyTag::Decreasing => nondecreasing - uniform,
        TopologyTag::Bottleneck | TopologyTag::Spindle => valley,
        TopologyTag::Random => mm.pow(depth as u32) - monotone - 2 * valley,
    }
}

fn sample_hidden(category: TopologyTag, depth: usize, cands: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    fn draw(n: usize, cands: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
        (0..n).map(|_| cands[rng.gen_range(0..cands.len())]).collect()
    }
    match category {
        TopologyTag::Uniform => vec![draw(1, cands, rng)[0]; depth],
        TopologyTag::Increasing => {
            let mut v = draw(depth, cands, rng);
            v.sort_unstable();
            v
        }
        TopologyTag::Decreasing => {
            let mut v = draw(depth, cands, rng);
            v.sort_unstable_by(|a, b| b.cmp(a));
            v
        }
        TopologyTag::Bottleneck | TopologyTag::Spindle => {
            // turning point uniform over interior positions
            let k = if depth >= 3 { rng.gen_range(1..depth - 1) } else { 0 };
            let mut v = draw(depth, cands, rng);
            let descending = category == TopologyTag::Spindle;
            v.sort_unstable();
            if descending {
                v.reverse();
            }
            let extreme = v[0];
            let mut rest = v[1..].to_vec();
            rest.shuffle(rng);
            let (left, right) = rest.split_at_mut(k);
            let mut out = Vec::with_capacity(depth);
            if descending {
                left.sort_unstable();
                right.sort_unstable_by(|a, b| b.cmp(a));
            } else {
                left.sort_unstable_by(|a, b| b.cmp(a));
                right.sort_unstable();
            }
            out.extend_from_slice(left);
            out.push(extreme);
            out.extend_from_slice(right);
            out
        }
        TopologyTag::Random => draw(depth, cands, rng),
    }
}

fn matches_category(category: TopologyTag, hidden: &[usize]) -> bool {
    match category {
        TopologyTag::Bottleneck => is_valley(hidden),
        _ => TopologyTag::classify(hidden) == category,
    }
}

/// Generates the pool for one scenario. Input and output dimensions come from
/// the scenario; everything else is a pure function of `cfg`.
pub fn generate_pool(cfg: &PoolConfig, input_dim: usize, output_dim: usize) -> Result<Vec<PoolEntry>, PoolError> {
    cfg.validate()?;
    let m = cfg.width_candidates.len();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut out = Vec::with_capacity(cfg.total());

    for (&category, &count) in &cfg.per_category_counts {
        if count == 0 {
            continue;
        }
        // even split over the depths where the family exists (no depth-3 net
        // is "random", for instance), remainder to the shallower ones
        let depths: Vec<usize> = cfg.depths.iter().copied().filter(|&d| support_size(category, d, m) > 0).collect();
        if depths.is_empty() {
            return Err(PoolError::Infeasible { category, depth: cfg.depths[0], requested: count, available: 0 });
        }
        let per = count / depths.len();
        let extra = count % depths.len();
        for (di, &depth) in depths.iter().enumerate() {
            let want = per + usize::from(di < extra);
            if want == 0 {
                continue;
            }
            let available = support_size(category, depth, m);
            if want as u128 > available {
                return Err(PoolError::Infeasible { category, depth, requested: want, available });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, &format!("pool/{category}/{depth}")));
            let mut got = 0;
            let mut attempts = 0usize;
            while got < want {
                attempts += 1;
                if attempts > 100_000 + 1000 * want {
                    return Err(PoolError::Exhausted { category, depth, requested: want });
                }
                let hidden = sample_hidden(category, depth, &cfg.width_candidates, &mut rng);
                if !matches_category(category, &hidden) || !seen.insert(hidden.clone()) {
                    continue;
                }
                let mut widths = Vec::with_capacity(depth + 2);
                widths.push(input_dim);
                widths.extend_from_slice(&hidden);
                widths.push(output_dim);
                let id = format!("{}-d{}-{:02}", category.as_str(), depth, got);
                let seed = seeds::derive(cfg.seed, &id);
                out.push(PoolEntry { id, depth, widths, category, seed });
                got += 1;
            }
        }
    }
    Ok(out)
}

pub fn write_manifest<W: Write>(entries: &[PoolEntry], mut w: W) -> Result<(), PoolError> {
    for e in entries {
        serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest<R: BufRead>(r: R) -> Result<Vec<PoolEntry>, PoolError> {
    let mut out: Vec<PoolEntry> = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| PoolError::Manifest { line: i + 1, msg };
        let e: PoolEntry = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if let Err(d) = validate_spec(&e.spec()) {
            return Err(bad(d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")));
        }
        if !ids.insert(e.id.clone()) {
            return Err(bad(format!("duplicate id {}", e.id)));
        }
        out.push(e);
    }
    Ok(out)
}

pub fn save_manifest(entries: &[PoolEntry], path: &Path) -> Result<(), PoolError> {
    write_manifest(entries, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_manifest(path: &Path) -> Result<Vec<PoolEntry>, PoolError> {
    read_manifest(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enumerate(depth: usize, m: usize) -> BTreeMap<TopologyTag, u128> {
        let mut counts = BTreeMap::new();
        let total = m.pow(depth as u32);
        for code in 0..total {
            let mut c = code;
            let v: Vec<usize> = (0..depth)
                .map(|_| {
                    let d = c % m;
                    c /= m;
                    d
                })
                .collect();
            *counts.entry(TopologyTag::classify(&v)).or_insert(0) += 1;
        }
        counts
    }

    #[test]
    fn support_matches_brute_force() {
        for depth in 1..=6 {
            for m in 1..=4 {
                let brute = enumerate(depth, m);
                for tag in TopologyTag::ALL {
                    assert_eq!(support_size(tag, depth, m), brute.get(&tag).copied().unwrap_or(0), "{tag} depth {depth} m {m}");
                }
            }
        }
    }

    #[test]
    fn uniform_support_is_bounded() {
        let mut cfg = PoolConfig { depths: vec![3], width_candidates: vec![256, 512], per_category_counts: BTreeMap::new(), seed: 1 };
        cfg.per_category_counts.insert(TopologyTag::Uniform, 2);
        assert_eq!(generate_pool(&cfg, 784, 10).unwrap().len(), 2);
        cfg.per_category_counts.insert(TopologyTag::Uniform, 3);
        let err = generate_pool(&cfg, 784, 10).unwrap_err();
        assert!(err.to_string().contains("uniform"), "{err}");
    }

    #[test]
    fn default_pool_has_175_unique_specs() {
        let pool = generate_pool(&PoolConfig::default(), 784, 10).unwrap();
        assert_eq!(pool.len(), 175);
        let keys: HashSet<_> = pool.iter().map(|e| (e.depth, e.widths.clone())).collect();
        assert_eq!(keys.len(), 175);
    }

    #[test]
    fn category_predicates_hold() {
        let pool = generate_pool(&PoolConfig::default(), 784, 10).unwrap();
        for e in &pool {
            let spec = e.spec();
            let h = spec.hidden();
            match e.category {
                TopologyTag::Uniform => assert!(h.windows(2).all(|w| w[0] == w[1])),
                TopologyTag::Increasing => assert!(h.windows(2).all(|w| w[0] <= w[1])),
                TopologyTag::Decreasing => assert!(h.windows(2).all(|w| w[0] >= w[1])),
                TopologyTag::Bottleneck => {
                    let min = *h.iter().min().unwrap();
                    let k = h.iter().position(|&w| w == min).unwrap();
                    assert!(k > 0 && k < h.len() - 1);
                    assert!(h[..=k].windows(2).all(|w| w[0] >= w[1]));
                    assert!(h[k..].windows(2).all(|w| w[0] <= w[1]));
                }
                TopologyTag::Spindle => {
                    let max = *h.iter().max().unwrap();
                    let k = h.iter().position(|&w| w == max).unwrap();
                    assert!(k > 0 && k < h.len() - 1);
                    assert!(h[..=k].windows(2).all(|w| w[0] <= w[1]));
                    assert!(h[k..].windows(2).all(|w| w[0] >= w[1]));
                }
                TopologyTag::Random => assert_eq!(TopologyTag::classify(h), TopologyTag::Random),
            }
            assert_eq!(TopologyTag::classify(h), e.category);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate_pool(&PoolConfig::desk(), 784, 10).unwrap();
        let b = generate_pool(&PoolConfig::desk(), 784, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        let mut cfg = PoolConfig::desk();
        cfg.seed = 99;
        assert_ne!(generate_pool(&cfg, 784, 10).unwrap(), a);
    }

    #[test]
    fn manifest_round_trip() {
        let pool = generate_pool(&PoolConfig::desk(), 784, 10).unwrap();
        let mut buf = Vec::new();
        write_manifest(&pool, &mut buf).unwrap();
        assert_eq!(read_manifest(&buf[..]).unwrap(), pool);
        let bad = b"{\"id\":\"x\",\"depth\":2,\"widths\":[784,0,10],\"category\":\"uniform\",\"seed\":1}\n";
        assert!(matches!(read_manifest(&bad[..]), Err(PoolError::Manifest { line: 1, .. })));
    }

    #[test]
    fn validate_spec_examples() {
        let ok = ArchitectureSpec { depth: 1, widths: vec![784, 256, 10], topology: TopologyTag::Uniform };
        assert!(validate_spec(&ok).is_ok());
        let zero = ArchitectureSpec { depth: 1, widths: vec![784, 0, 10], topology: TopologyTag::Uniform };
        let d = validate_spec(&zero).unwrap_err();
        assert!(d.iter().any(|d| d.to_string().contains("width must be ≥ 1")));
        let short = ArchitectureSpec { depth: 2, widths: vec![784, 256, 10], topology: TopologyTag::Uniform };
        assert!(validate_spec(&short).is_err());
    }
}
