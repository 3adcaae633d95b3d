//! Railcar and container types, and the finite set of loading patterns
//! each railcar type admits.
//!
//! A catalog is read from a small TOML document (see `catalog/toy.cfg`).
//! Loading patterns are purely geometric: they record how many containers
//! of each length a railcar can hold at once, ignoring weight. Weight
//! feasibility is checked later against realized container weights with
//! [`RailcarType::arrange`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Current catalog file format.
pub const CATALOG_FORMAT_VERSION: u32 = 1;

const TOY_CFG: &str = include_str!("../catalog/toy.cfg");
const DEFAULT10_CFG: &str = include_str!("../catalog/default10.cfg");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid catalog: {0}")]
    Invalid(String),
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Payload law of one container length: weight = tare + U(payload_min, payload_max).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightModel {
    pub tare: f64,
    pub payload_min: f64,
    pub payload_max: f64,
}

impl WeightModel {
    pub fn mean(&self) -> f64 {
        self.tare + 0.5 * (self.payload_min + self.payload_max)
    }

    pub fn variance(&self) -> f64 {
        let w = self.payload_max - self.payload_min;
        w * w / 12.0
    }

    fn default_for(length_ft: u32) -> Option<Self> {
        match length_ft {
            40 => Some(WeightModel { tare: 3.8, payload_min: 2.0, payload_max: 26.0 }),
            53 => Some(WeightModel { tare: 4.9, payload_min: 2.0, payload_max: 22.0 }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainerType {
    /// Container length in feet; doubles as the token name (`c40_*`).
    pub length_ft: u32,
    pub weights: WeightModel,
}

/// One well or platform of a railcar. Length classes are stored as indices
/// into the catalog's container list.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatformSpec {
    pub allowed_bottom: Vec<usize>,
    pub allowed_top: Vec<usize>,
    pub weight_cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RailcarType {
    pub index: usize,
    pub name: String,
    pub platforms: Vec<PlatformSpec>,
    pub weight_cap: f64,
}

/// Containers placed on one platform: `(length class, weight)` per level.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlatformLoad {
    pub bottom: Option<(usize, f64)>,
    pub top: Option<(usize, f64)>,
}

impl RailcarType {
    /// Finds a slot assignment for `containers` (length class, weight) that
    /// respects the bottom/top sets, the stacking rule and both weight caps.
    /// Returns one load per platform, or `None` when no assignment exists.
    pub fn arrange(&self, containers: &[(usize, f64)]) -> Option<Vec<PlatformLoad>> {
        let total: f64 = containers.iter().map(|c| c.1).sum();
        if total > self.weight_cap || containers.len() > 2 * self.platforms.len() {
            return None;
        }
        let mut order: Vec<(usize, f64)> = containers.to_vec();
        // Heaviest first prunes weight caps early.
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut loads = vec![PlatformLoad::default(); self.platforms.len()];
        if self.place(&order, 0, &mut loads, true) {
            Some(loads)
        } else {
            None
        }
    }

    /// Same search with the stacking rule waived. Any subset of an
    /// arrangeable set passes this check.
    pub(crate) fn arrange_relaxed(&self, containers: &[(usize, f64)]) -> bool {
        let total: f64 = containers.iter().map(|c| c.1).sum();
        if total > self.weight_cap || containers.len() > 2 * self.platforms.len() {
            return false;
        }
        let mut order: Vec<(usize, f64)> = containers.to_vec();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut loads = vec![PlatformLoad::default(); self.platforms.len()];
        self.place(&order, 0, &mut loads, false)
    }

    fn place(&self, order: &[(usize, f64)], next: usize, loads: &mut [PlatformLoad], stacking: bool) -> bool {
        if next == order.len() {
            // Stacking rule: nothing on top of an empty well.
            return !stacking || loads.iter().all(|p| p.top.is_none() || p.bottom.is_some());
        }
        let (class, weight) = order[next];
        for q in 0..self.platforms.len() {
            // Skip platforms identical in spec and contents to an earlier one.
            if (0..q).any(|e| self.platforms[e] == self.platforms[q] && loads[e] == loads[q]) {
                continue;
            }
            let spec = &self.platforms[q];
            let used = loads[q].bottom.map_or(0.0, |c| c.1) + loads[q].top.map_or(0.0, |c| c.1);
            if used + weight > spec.weight_cap {
                continue;
            }
            if loads[q].bottom.is_none() && spec.allowed_bottom.contains(&class) {
                loads[q].bottom = Some((class, weight));
                if self.place(order, next + 1, loads, stacking) {
                    return true;
                }
                loads[q].bottom = None;
            }
            if loads[q].top.is_none() && spec.allowed_top.contains(&class) {
                loads[q].top = Some((class, weight));
                if self.place(order, next + 1, loads, stacking) {
                    return true;
                }
                loads[q].top = None;
            }
        }
        false
    }
}

/// A geometrically feasible loading of one railcar type: how many containers
/// of each length it carries.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LoadPattern {
    pub railcar_type: usize,
    /// Position within the type's pattern list.
    pub local_index: usize,
    pub counts: Vec<u32>,
    /// Fewest non-empty platforms that can hold `counts`.
    pub min_platforms: u32,
}

impl LoadPattern {
    pub fn containers(&self) -> u32 {
        self.counts.iter().sum()
    }
}

/// Per-type pattern lists: every distinct non-zero aggregate count vector
/// reachable by filling platforms under the bottom/top/stacking rules,
/// sorted ascending.
pub fn enumerate_patterns(railcars: &[RailcarType], lengths: usize) -> Vec<Vec<LoadPattern>> {
    railcars
        .iter()
        .map(|car| {
            // count vector -> fewest non-empty platforms reaching it
            let mut reach: BTreeMap<Vec<u32>, u32> = BTreeMap::new();
            reach.insert(vec![0; lengths], 0);
            for platform in &car.platforms {
                let options = platform_options(platform, lengths);
                let mut next: BTreeMap<Vec<u32>, u32> = BTreeMap::new();
                for (v, used) in &reach {
                    for opt in &options {
                        let sum: Vec<u32> = v.iter().zip(opt).map(|(a, b)| a + b).collect();
                        let nonempty = used + u32::from(opt.iter().any(|&c| c > 0));
                        next.entry(sum)
                            .and_modify(|m| *m = (*m).min(nonempty))
                            .or_insert(nonempty);
                    }
                }
                reach = next;
            }
            reach
                .into_iter()
                .filter(|(v, _)| v.iter().any(|&c| c > 0))
                .enumerate()
                .map(|(k, (counts, min_platforms))| LoadPattern {
                    railcar_type: car.index,
                    local_index: k,
                    counts,
                    min_platforms,
                })
                .collect()
        })
        .collect()
}

fn platform_options(platform: &PlatformSpec, lengths: usize) -> Vec<Vec<u32>> {
    let mut options = vec![vec![0; lengths]];
    for &b in &platform.allowed_bottom {
        let mut one = vec![0; lengths];
        one[b] += 1;
        for &t in &platform.allowed_top {
            let mut two = one.clone();
            two[t] += 1;
            options.push(two);
        }
        options.push(one);
    }
    options.sort();
    options.dedup();
    options
}

/// Immutable catalog: container types, railcar types and their enumerated
/// patterns with a global index (types in order, patterns in order).
#[derive(Debug, Clone)]
pub struct RailcarCatalog {
    name: String,
    containers: Vec<ContainerType>,
    railcars: Vec<RailcarType>,
    patterns: Vec<Vec<LoadPattern>>,
    offsets: Vec<usize>,
    hash: String,
}

impl RailcarCatalog {
    pub fn new(
        name: impl Into<String>,
        containers: Vec<ContainerType>,
        railcars: Vec<RailcarType>,
    ) -> Result<Self, CatalogError> {
        let name = name.into();
        validate(&containers, &railcars)?;
        let patterns = enumerate_patterns(&railcars, containers.len());
        let mut offsets = Vec::with_capacity(patterns.len() + 1);
        let mut acc = 0;
        for list in &patterns {
            offsets.push(acc);
            acc += list.len();
        }
        offsets.push(acc);
        let mut catalog = RailcarCatalog {
            name,
            containers,
            railcars,
            patterns,
            offsets,
            hash: String::new(),
        };
        let digest = Sha256::digest(catalog.to_canonical_text().as_bytes());
        catalog.hash = hex::encode(&digest[..8]);
        Ok(catalog)
    }

    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let file: CatalogFile = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1));
            CatalogError::Parse { line, message: e.message().to_string() }
        })?;
        file.into_catalog()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Two railcar types, two container lengths; twelve patterns.
    pub fn toy() -> Self {
        Self::parse(TOY_CFG).expect("bundled toy catalog is valid")
    }

    /// The bundled ten-type catalog.
    pub fn default10() -> Self {
        Self::parse(DEFAULT10_CFG).expect("bundled default catalog is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Short hex digest of the canonical catalog text.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn containers(&self) -> &[ContainerType] {
        &self.containers
    }

    pub fn railcars(&self) -> &[RailcarType] {
        &self.railcars
    }

    pub fn num_types(&self) -> usize {
        self.railcars.len()
    }

    pub fn num_lengths(&self) -> usize {
        self.containers.len()
    }

    /// Total pattern count P.
    pub fn pattern_count(&self) -> usize {
        self.offsets[self.offsets.len() - 1]
    }

    pub fn patterns_of(&self, railcar_type: usize) -> &[LoadPattern] {
        &self.patterns[railcar_type]
    }

    pub fn pattern(&self, global: usize) -> &LoadPattern {
        let j = self.offsets.partition_point(|&o| o <= global) - 1;
        &self.patterns[j][global - self.offsets[j]]
    }

    pub fn global_index(&self, railcar_type: usize, local: usize) -> usize {
        self.offsets[railcar_type] + local
    }

    pub fn find_pattern(&self, railcar_type: usize, counts: &[u32]) -> Option<usize> {
        let list = self.patterns.get(railcar_type)?;
        list.binary_search_by(|p| p.counts.as_slice().cmp(counts))
            .ok()
            .map(|k| self.offsets[railcar_type] + k)
    }

    pub fn platforms(&self, railcar_type: usize) -> usize {
        self.railcars[railcar_type].platforms.len()
    }

    /// Canonical TOML rendering; the catalog hash is taken over it.
    pub fn to_canonical_text(&self) -> String {
        let file = CatalogFile::from_catalog(self);
        toml::to_string(&file).expect("catalog serializes")
    }
}

impl fmt::Display for RailcarCatalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "catalog {} ({})", self.name, self.hash)?;
        for car in &self.railcars {
            let list = &self.patterns[car.index];
            write!(f, "  type {} {:<24} platforms={} patterns={}:", car.index, car.name, car.platforms.len(), list.len())?;
            for p in list {
                write!(f, " {:?}", p.counts)?;
            }
            writeln!(f)?;
        }
        write!(f, "  total patterns P = {}", self.pattern_count())
    }
}

fn validate(containers: &[ContainerType], railcars: &[RailcarType]) -> Result<(), CatalogError> {
    if containers.is_empty() {
        return Err(CatalogError::Invalid("no container types".into()));
    }
    if railcars.is_empty() {
        return Err(CatalogError::Invalid("no railcar types".into()));
    }
    for (i, c) in containers.iter().enumerate() {
        if containers[..i].iter().any(|o| o.length_ft == c.length_ft) {
            return Err(CatalogError::Invalid(format!("duplicate container length {}", c.length_ft)));
        }
        let w = c.weights;
        if !(w.tare >= 0.0 && w.payload_min >= 0.0 && w.payload_max >= w.payload_min) {
            return Err(CatalogError::Invalid(format!("bad weight model for container {}", c.length_ft)));
        }
    }
    for (pos, car) in railcars.iter().enumerate() {
        if railcars[..pos].iter().any(|o| o.index == car.index) {
            return Err(CatalogError::Invalid(format!("duplicate railcar index {} ({})", car.index, car.name)));
        }
        if car.index != pos {
            return Err(CatalogError::Invalid(format!(
                "railcar index {} ({}) out of order; indices must run 0..{} contiguously",
                car.index,
                car.name,
                railcars.len()
            )));
        }
        if car.platforms.is_empty() {
            return Err(CatalogError::Invalid(format!("railcar type {} ({}) has no platforms", car.index, car.name)));
        }
        if !(car.weight_cap > 0.0) {
            return Err(CatalogError::Invalid(format!("railcar type {} ({}) needs a positive weight cap", car.index, car.name)));
        }
        for p in &car.platforms {
            if p.allowed_bottom.is_empty() {
                return Err(CatalogError::Invalid(format!(
                    "railcar type {} ({}) has a platform with no allowed bottom length",
                    car.index, car.name
                )));
            }
            if p.allowed_bottom.iter().chain(&p.allowed_top).any(|&l| l >= containers.len()) {
                return Err(CatalogError::Invalid(format!("railcar type {} ({}) references an unknown length", car.index, car.name)));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    format_version: u32,
    name: String,
    #[serde(rename = "container")]
    containers: Vec<ContainerEntry>,
    #[serde(rename = "railcar")]
    railcars: Vec<RailcarEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContainerEntry {
    length_ft: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tare: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    payload: Option<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RailcarEntry {
    index: usize,
    name: String,
    weight_cap: f64,
    #[serde(rename = "platform", default)]
    platforms: Vec<PlatformEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlatformEntry {
    bottom: Vec<u32>,
    #[serde(default)]
    top: Vec<u32>,
    weight_cap: f64,
}

impl CatalogFile {
    fn into_catalog(self) -> Result<RailcarCatalog, CatalogError> {
        if self.format_version != CATALOG_FORMAT_VERSION {
            return Err(CatalogError::Invalid(format!(
                "unsupported format_version {} (expected {})",
                self.format_version, CATALOG_FORMAT_VERSION
            )));
        }
        let mut containers = Vec::with_capacity(self.containers.len());
        for c in &self.containers {
            let default = WeightModel::default_for(c.length_ft);
            let weights = match (c.tare, c.payload, default) {
                (Some(tare), Some([lo, hi]), _) => WeightModel { tare, payload_min: lo, payload_max: hi },
                (None, None, Some(d)) => d,
                (tare, payload, Some(d)) => WeightModel {
                    tare: tare.unwrap_or(d.tare),
                    payload_min: payload.map_or(d.payload_min, |p| p[0]),
                    payload_max: payload.map_or(d.payload_max, |p| p[1]),
                },
                _ => {
                    return Err(CatalogError::Invalid(format!(
                        "container length {} needs explicit tare and payload",
                        c.length_ft
                    )))
                }
            };
            containers.push(ContainerType { length_ft: c.length_ft, weights });
        }
        let class_of = |ft: u32, car: &RailcarEntry| {
            containers
                .iter()
                .position(|c| c.length_ft == ft)
                .ok_or_else(|| CatalogError::Invalid(format!("railcar type {} ({}) references unknown length {}", car.index, car.name, ft)))
        };
        let mut railcars = Vec::with_capacity(self.railcars.len());
        for car in &self.railcars {
            let mut platforms = Vec::with_capacity(car.platforms.len());
            for p in &car.platforms {
                let mut bottom = p.bottom.iter().map(|&ft| class_of(ft, car)).collect::<Result<Vec<_>, _>>()?;
                let mut top = p.top.iter().map(|&ft| class_of(ft, car)).collect::<Result<Vec<_>, _>>()?;
                bottom.sort_unstable();
                bottom.dedup();
                top.sort_unstable();
                top.dedup();
                platforms.push(PlatformSpec { allowed_bottom: bottom, allowed_top: top, weight_cap: p.weight_cap });
            }
            railcars.push(RailcarType { index: car.index, name: car.name.clone(), platforms, weight_cap: car.weight_cap });
        }
        RailcarCatalog::new(self.name, containers, railcars)
    }

    fn from_catalog(catalog: &RailcarCatalog) -> Self {
        let ft = |l: &usize| catalog.containers[*l].length_ft;
        CatalogFile {
            format_version: CATALOG_FORMAT_VERSION,
            name: catalog.name.clone(),
            containers: catalog
                .containers
                .iter()
                .map(|c| ContainerEntry {
                    length_ft: c.length_ft,
                    tare: Some(c.weights.tare),
                    payload: Some([c.weights.payload_min, c.weights.payload_max]),
                })
                .collect(),
            railcars: catalog
                .railcars
                .iter()
                .map(|car| RailcarEntry {
                    index: car.index,
                    name: car.name.clone(),
                    weight_cap: car.weight_cap,
                    platforms: car
                        .platforms
                        .iter()
                        .map(|p| PlatformEntry {
                            bottom: p.allowed_bottom.iter().map(ft).collect(),
                            top: p.allowed_top.iter().map(ft).collect(),
                            weight_cap: p.weight_cap,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(list: &[LoadPattern]) -> Vec<Vec<u32>> {
        list.iter().map(|p| p.counts.clone()).collect()
    }

    #[test]
    fn toy_patterns() {
        let cat = RailcarCatalog::toy();
        assert_eq!(cat.num_types(), 2);
        assert_eq!(cat.num_lengths(), 2);
        assert_eq!(counts(cat.patterns_of(0)), vec![vec![0, 1], vec![1, 0], vec![1, 1], vec![2, 0]]);
        assert_eq!(
            counts(cat.patterns_of(1)),
            vec![
                vec![1, 0],
                vec![1, 1],
                vec![2, 0],
                vec![2, 1],
                vec![2, 2],
                vec![3, 0],
                vec![3, 1],
                vec![4, 0]
            ]
        );
        assert_eq!(cat.pattern_count(), 12);
        assert_eq!(cat.global_index(1, 0), 4);
        assert_eq!(cat.pattern(5).counts, vec![1, 1]);
        assert_eq!(cat.find_pattern(1, &[2, 2]), Some(8));
        assert_eq!(cat.find_pattern(0, &[0, 2]), None);
    }

    #[test]
    fn min_platforms_of_toy_patterns() {
        let cat = RailcarCatalog::toy();
        let r1: Vec<u32> = cat.patterns_of(1).iter().map(|p| p.min_platforms).collect();
        assert_eq!(r1, vec![1, 1, 1, 2, 2, 2, 2, 2]);
        assert!(cat.patterns_of(0).iter().all(|p| p.min_platforms == 1));
    }

    #[test]
    fn default_catalog_shape() {
        let cat = RailcarCatalog::default10();
        assert_eq!(cat.num_types(), 10);
        assert_eq!(cat.num_lengths(), 2);
        assert_eq!(cat.pattern_count(), 155);
    }

    #[test]
    fn zero_platform_type_has_no_patterns() {
        let car = RailcarType { index: 0, name: "empty".into(), platforms: vec![], weight_cap: 10.0 };
        assert_eq!(enumerate_patterns(&[car], 2), vec![Vec::<LoadPattern>::new()]);
    }

    #[test]
    fn duplicate_railcar_index_is_rejected() {
        let text = TOY_CFG.replace("index = 1", "index = 0");
        let err = RailcarCatalog::parse(&text).unwrap_err();
        assert!(matches!(err, CatalogError::Invalid(ref m) if m.contains("duplicate railcar index 0")), "{err}");
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "format_version = 1\nname = \"x\"\n[[container]]\nlength_ft = forty\n";
        match RailcarCatalog::parse(text).unwrap_err() {
            CatalogError::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn hash_is_stable_and_canonical_text_roundtrips() {
        let a = RailcarCatalog::toy();
        let b = RailcarCatalog::parse(&a.to_canonical_text()).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.to_canonical_text(), b.to_canonical_text());
        assert_ne!(a.hash(), RailcarCatalog::default10().hash());
    }

    #[test]
    fn arrange_respects_caps_and_stacking() {
        let cat = RailcarCatalog::toy();
        let r0 = &cat.railcars()[0];
        // 40ft on a 53ft bottom.
        let loads = r0.arrange(&[(0, 20.0), (1, 25.0)]).unwrap();
        assert_eq!(loads[0].bottom, Some((1, 25.0)));
        assert_eq!(loads[0].top, Some((0, 20.0)));
        assert!(r0.arrange(&[(0, 35.0), (0, 35.0)]).is_none());
        assert!(r0.arrange(&[(1, 10.0), (1, 10.0)]).is_none());
        let r1 = &cat.railcars()[1];
        // 53ft only fits on top, which needs a 40ft underneath.
        assert!(r1.arrange(&[(1, 10.0)]).is_none());
        assert!(r1.arrange(&[(0, 10.0), (1, 10.0)]).is_some());
        // 4 x 17.6 = 70.4 > 70
        assert!(r1.arrange(&[(0, 17.6); 4]).is_none());
        assert!(r1.arrange(&[(0, 17.5); 4]).is_some());
    }
}
