//! Sampling of load-planning instances and construction of parallel-text
//! datasets labeled by the full-information solver.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::RailcarCatalog;
use crate::language::Lexicon;
use crate::oracle::{self, OracleError, SolverConfig};

/// Largest railcar count expressible by the two-digit source syntax.
pub const MAX_RAILCARS_PER_TYPE: u32 = 99;
/// Largest container count expressible by the three-digit source syntax.
pub const MAX_CONTAINERS_PER_LENGTH: u32 = 999;

/// First-stage information: what is known when the booking is made.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Booking {
    /// Available railcars per railcar type.
    pub railcars: Vec<u32>,
    /// Assignable containers per length class.
    pub containers: Vec<u32>,
}

impl Booking {
    pub fn new(railcars: Vec<u32>, containers: Vec<u32>) -> Self {
        Booking { railcars, containers }
    }

    pub fn empty(catalog: &RailcarCatalog) -> Self {
        Booking { railcars: vec![0; catalog.num_types()], containers: vec![0; catalog.num_lengths()] }
    }

    pub fn total_containers(&self) -> u32 {
        self.containers.iter().sum()
    }

    pub fn total_platforms(&self, catalog: &RailcarCatalog) -> u32 {
        self.railcars
            .iter()
            .enumerate()
            .map(|(j, &r)| r * catalog.platforms(j) as u32)
            .sum()
    }

    pub fn check_shape(&self, catalog: &RailcarCatalog) -> Result<(), InstanceError> {
        if self.railcars.len() != catalog.num_types() || self.containers.len() != catalog.num_lengths() {
            return Err(InstanceError::Shape {
                railcars: self.railcars.len(),
                containers: self.containers.len(),
                types: catalog.num_types(),
                lengths: catalog.num_lengths(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for Booking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "railcars {:?} containers {:?}", self.railcars, self.containers)
    }
}

/// A booking plus, once revealed, the weight of every container (tonnes),
/// grouped by length class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub booking: Booking,
    pub weights: Option<Vec<Vec<f64>>>,
}

impl Instance {
    pub fn new(booking: Booking) -> Self {
        Instance { booking, weights: None }
    }

    pub fn with_weights(booking: Booking, weights: Vec<Vec<f64>>) -> Self {
        Instance { booking, weights: Some(weights) }
    }
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("booking shape ({railcars} railcar counts, {containers} container counts) does not match catalog ({types} types, {lengths} lengths)")]
    Shape { railcars: usize, containers: usize, types: usize, lengths: usize },
    #[error("weights missing for instance")]
    MissingWeights,
    #[error("weight list for length class {class} has {got} entries, booking says {expected}")]
    WeightCount { class: usize, got: usize, expected: usize },
    #[error("instance {index}: {source}")]
    Solve {
        index: usize,
        #[source]
        source: OracleError,
    },
    #[error("invalid dataset spec: {0}")]
    Spec(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Instance difficulty class: ranges on total containers and total platforms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataClass {
    pub name: String,
    pub containers: (u32, u32),
    pub platforms: (u32, u32),
    /// Optional cap on the total number of railcars drawn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_railcars: Option<u32>,
}

impl DataClass {
    pub fn a() -> Self {
        Self::ranged("A", (1, 150), (1, 50))
    }
    pub fn b() -> Self {
        Self::ranged("B", (151, 300), (1, 50))
    }
    pub fn c() -> Self {
        Self::ranged("C", (1, 150), (51, 100))
    }
    pub fn d() -> Self {
        Self::ranged("D", (151, 300), (51, 100))
    }

    /// Desk-scale class for the toy catalog: at most five railcars and
    /// twenty containers.
    pub fn desk() -> Self {
        DataClass { name: "DESK".into(), containers: (1, 20), platforms: (1, 10), max_railcars: Some(5) }
    }

    pub fn ranged(name: &str, containers: (u32, u32), platforms: (u32, u32)) -> Self {
        DataClass { name: name.into(), containers, platforms, max_railcars: None }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "A" => Some(Self::a()),
            "B" => Some(Self::b()),
            "C" => Some(Self::c()),
            "D" => Some(Self::d()),
            "DESK" => Some(Self::desk()),
            _ => None,
        }
    }

    pub fn contains(&self, booking: &Booking, catalog: &RailcarCatalog) -> bool {
        let c = booking.total_containers();
        let p = booking.total_platforms(catalog);
        let r: u32 = booking.railcars.iter().sum();
        (self.containers.0..=self.containers.1).contains(&c)
            && (self.platforms.0..=self.platforms.1).contains(&p)
            && self.max_railcars.is_none_or(|m| r <= m)
    }
}

/// Draws a booking of the given class.
///
/// The container total is uniform on the class range and split uniformly
/// over all (n_1, ..., n_L) compositions. Railcars are added one at a time
/// with a uniformly drawn type until the platform total reaches a target
/// drawn uniformly from the class range; a draw that would overshoot the
/// range is rejected and redrawn.
pub fn sample_instance<R: Rng + ?Sized>(class: &DataClass, catalog: &RailcarCatalog, rng: &mut R) -> Booking {
    let lengths = catalog.num_lengths();
    let total = rng.random_range(class.containers.0..=class.containers.1);
    let containers = random_composition(total, lengths, rng);

    let platforms: Vec<u32> = (0..catalog.num_types()).map(|j| catalog.platforms(j) as u32).collect();
    let (lo, hi) = class.platforms;
    let max_cars = class.max_railcars.unwrap_or(u32::MAX);
    loop {
        let target = rng.random_range(lo..=hi);
        let mut railcars = vec![0u32; catalog.num_types()];
        let mut placed = 0u32;
        let mut cars = 0u32;
        let mut stuck = false;
        while placed < target && cars < max_cars {
            let fits: Vec<usize> = (0..platforms.len())
                .filter(|&j| placed + platforms[j] <= hi && railcars[j] < MAX_RAILCARS_PER_TYPE)
                .collect();
            if fits.is_empty() {
                stuck = true;
                break;
            }
            let j = rng.random_range(0..platforms.len());
            if !fits.contains(&j) {
                continue;
            }
            railcars[j] += 1;
            placed += platforms[j];
            cars += 1;
        }
        if !stuck && placed >= lo {
            return Booking { railcars, containers };
        }
    }
}

/// Uniform draw over all ways to write `total` as an ordered sum of
/// `parts` nonnegative integers (stars and bars).
fn random_composition<R: Rng + ?Sized>(total: u32, parts: usize, rng: &mut R) -> Vec<u32> {
    if parts == 1 {
        return vec![total];
    }
    let slots = total as usize + parts - 1;
    let mut bars: Vec<usize> = rand::seq::index::sample(rng, slots, parts - 1).into_vec();
    bars.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0usize;
    for (i, &b) in bars.iter().enumerate() {
        let start = if i == 0 { 0 } else { prev + 1 };
        out.push((b - start) as u32);
        prev = b;
    }
    let start = if bars.is_empty() { 0 } else { prev + 1 };
    out.push((slots - start) as u32);
    out
}

/// Draws i.i.d. container weights (tare plus uniform payload) for every
/// container in the booking.
pub fn sample_weights<R: Rng + ?Sized>(booking: &Booking, catalog: &RailcarCatalog, rng: &mut R) -> Instance {
    let weights = booking
        .containers
        .iter()
        .zip(catalog.containers())
        .map(|(&n, ct)| {
            let w = ct.weights;
            (0..n)
                .map(|_| {
                    let payload = if w.payload_max > w.payload_min {
                        rng.random_range(w.payload_min..w.payload_max)
                    } else {
                        w.payload_min
                    };
                    w.tare + payload
                })
                .collect()
        })
        .collect();
    Instance::with_weights(booking.clone(), weights)
}

/// Independent random stream for item `index` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub class: DataClass,
    pub count: usize,
    pub seed: u64,
    /// Train/valid/test fractions.
    pub split: [f64; 3],
}

impl DatasetSpec {
    pub fn new(class: DataClass, count: usize, seed: u64) -> Self {
        DatasetSpec { class, count, seed, split: [0.64, 0.16, 0.20] }
    }

    fn validate(&self) -> Result<(), InstanceError> {
        let sum: f64 = self.split.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.split.iter().any(|f| *f < 0.0) {
            return Err(InstanceError::Spec(format!("split fractions {:?} must be nonnegative and sum to 1", self.split)));
        }
        if self.class.containers.0 > self.class.containers.1 || self.class.platforms.0 > self.class.platforms.1 {
            return Err(InstanceError::Spec(format!("empty range in class {}", self.class.name)));
        }
        Ok(())
    }

    /// Split sizes: floor of the first two fractions, remainder to test.
    pub fn split_sizes(&self) -> [usize; 3] {
        let train = (self.split[0] * self.count as f64 + 1e-9).floor() as usize;
        let valid = (self.split[1] * self.count as f64 + 1e-9).floor() as usize;
        [train, valid, self.count - train - valid]
    }

    /// Split membership for each instance index (a seeded permutation).
    pub fn assignment(&self) -> Vec<Split> {
        let mut order: Vec<usize> = (0..self.count).collect();
        order.shuffle(&mut stream_rng(self.seed, u64::MAX));
        let [train, valid, _] = self.split_sizes();
        let mut out = vec![Split::Test; self.count];
        for (rank, &i) in order.iter().enumerate() {
            out[i] = if rank < train {
                Split::Train
            } else if rank < train + valid {
                Split::Valid
            } else {
                Split::Test
            };
        }
        out
    }
}

/// One solved, labeled instance.
#[derive(Debug, Clone)]
pub struct LabeledInstance {
    pub index: usize,
    pub instance: Instance,
    pub description: oracle::SolutionDescription,
    /// Node budget ran out; the label is the best incumbent found.
    pub budget_exhausted: bool,
}

/// Samples and labels instance `index` of a dataset.
pub fn label_instance(
    index: usize,
    class: &DataClass,
    seed: u64,
    catalog: &RailcarCatalog,
    solver: &SolverConfig,
) -> Result<LabeledInstance, InstanceError> {
    let mut rng = stream_rng(seed, index as u64);
    let booking = sample_instance(class, catalog, &mut rng);
    let instance = sample_weights(&booking, catalog, &mut rng);
    let (solution, budget_exhausted) = match oracle::solve_full_info(&instance, catalog, solver) {
        Ok(s) => (s, false),
        Err(OracleError::Budget { incumbent, .. }) => (*incumbent, true),
        Err(source) => return Err(InstanceError::Solve { index, source }),
    };
    Ok(LabeledInstance { index, description: oracle::synthesize(&solution, catalog), instance, budget_exhausted })
}

/// Generates and labels all instances of `spec` in index order.
pub fn generate(spec: &DatasetSpec, catalog: &RailcarCatalog, solver: &SolverConfig) -> Result<Vec<LabeledInstance>, InstanceError> {
    spec.validate()?;
    (0..spec.count)
        .into_par_iter()
        .map(|i| label_instance(i, &spec.class, spec.seed, catalog, solver))
        .collect()
}

/// Manifest written next to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub class: DataClass,
    pub count: usize,
    pub catalog: String,
    pub catalog_hash: String,
    pub split_fractions: [f64; 3],
    pub split_sizes: [usize; 3],
    /// Instances whose label is a budget-limited incumbent.
    pub budget_exhausted: Vec<usize>,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Paths of a written dataset.
#[derive(Debug, Clone)]
pub struct DatasetFiles {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl DatasetFiles {
    pub fn src(&self, split: Split) -> PathBuf {
        self.dir.join(format!("{}.src", split.name()))
    }
    pub fn tgt(&self, split: Split) -> PathBuf {
        self.dir.join(format!("{}.tgt", split.name()))
    }
}

/// Samples, solves and tokenizes `spec.count` instances and writes
/// `train/valid/test.{src,tgt}`, `vocab.{src,tgt}.txt` and `dataset.manifest`
/// under `dir`.
pub fn build_dataset(
    spec: &DatasetSpec,
    catalog: &RailcarCatalog,
    solver: &SolverConfig,
    dir: &Path,
) -> Result<DatasetFiles, InstanceError> {
    let labeled = generate(spec, catalog, solver)?;
    let lexicon = Lexicon::new(catalog);
    let assignment = spec.assignment();
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| InstanceError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;

    let mut members: [Vec<usize>; 3] = Default::default();
    for (i, s) in assignment.iter().enumerate() {
        members[*s as usize].push(i);
    }
    for split in Split::ALL {
        let mut src = String::new();
        let mut tgt = String::new();
        for &i in &members[split as usize] {
            let item = &labeled[i];
            let s = lexicon
                .encode_input(&item.instance.booking)
                .expect("sampled bookings respect the source syntax bounds");
            let t = lexicon.encode_output(&item.description).expect("solver patterns come from the catalog");
            src.push_str(&lexicon.source().render(&s));
            src.push('\n');
            tgt.push_str(&lexicon.target().render(&t));
            tgt.push('\n');
        }
        let sp = dir.join(format!("{}.src", split.name()));
        let tp = dir.join(format!("{}.tgt", split.name()));
        fs::write(&sp, src).map_err(io(&sp))?;
        fs::write(&tp, tgt).map_err(io(&tp))?;
    }
    lexicon.write_vocab_files(dir).map_err(io(dir))?;

    let [train, valid, test] = members;
    let manifest = Manifest {
        format_version: 1,
        seed: spec.seed,
        class: spec.class.clone(),
        count: spec.count,
        catalog: catalog.name().to_string(),
        catalog_hash: catalog.hash().to_string(),
        split_fractions: spec.split,
        split_sizes: spec.split_sizes(),
        budget_exhausted: labeled.iter().filter(|l| l.budget_exhausted).map(|l| l.index).collect(),
        train,
        valid,
        test,
    };
    let mp = dir.join("dataset.manifest");
    fs::write(&mp, toml::to_string(&manifest).expect("manifest serializes")).map_err(io(&mp))?;
    Ok(DatasetFiles { dir: dir.to_path_buf(), manifest })
}
