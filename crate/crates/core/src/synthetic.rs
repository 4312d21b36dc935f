//! Seeded synthetic usage logs from per-user second-order Markov processes.
//!
//! Each user owns a small subset of the app catalogue and a transition
//! table over pairs of previous apps. Every table row is peaked: one
//! dominant successor, one secondary, and a thin uniform tail. Sessions are
//! separated by gaps well above the five-minute threshold, and each session
//! happens at one of the user's places, which becomes the POI label.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const CATEGORY_NAMES: [&str; 8] = [
    "communication",
    "social",
    "travel",
    "utility",
    "game",
    "news",
    "music",
    "shopping",
];

const PLACES: [&str; 8] = [
    "home",
    "office",
    "restaurants",
    "shopping",
    "service",
    "transit",
    "gym",
    "school",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub users: usize,
    /// Total events across all users.
    pub events: usize,
    pub apps: usize,
    pub categories: usize,
    pub apps_per_user: usize,
    /// Probability mass of the dominant successor of each state.
    pub dominant: f64,
    /// Probability mass of the secondary successor.
    pub secondary: f64,
    pub with_poi: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            users: 20,
            events: 5000,
            apps: 30,
            categories: 6,
            apps_per_user: 8,
            dominant: 0.7,
            secondary: 0.2,
            with_poi: true,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEvent {
    pub user: String,
    pub timestamp: u64,
    pub app: String,
    pub category: String,
    pub poi: Option<String>,
}

pub fn app_name(i: usize) -> String {
    format!("com.example.app{i:02}")
}

pub fn category_of(app: usize, spec: &SyntheticSpec) -> &'static str {
    CATEGORY_NAMES[app % spec.categories.min(CATEGORY_NAMES.len())]
}

/// Draws the next local app index from a row's peaked distribution.
fn draw(rng: &mut ChaCha8Rng, row: &(usize, usize), n: usize, spec: &SyntheticSpec) -> usize {
    let u: f64 = rng.gen();
    if u < spec.dominant {
        row.0
    } else if u < spec.dominant + spec.secondary {
        row.1
    } else {
        rng.gen_range(0..n)
    }
}

/// Generates the log, ordered by user then time.
pub fn generate(spec: &SyntheticSpec) -> Vec<SyntheticEvent> {
    assert!(spec.users > 0 && spec.apps >= spec.apps_per_user && spec.apps_per_user >= 2);
    assert!(spec.categories >= 1 && spec.categories <= CATEGORY_NAMES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per_user = spec.events / spec.users;
    let mut events = Vec::with_capacity(per_user * spec.users);
    for u in 0..spec.users {
        let user = format!("user{u:03}");
        let mut catalogue: Vec<usize> = (0..spec.apps).collect();
        catalogue.shuffle(&mut rng);
        let owned = &catalogue[..spec.apps_per_user];
        let n = owned.len();
        let mut table: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for a in 0..n {
            for b in 0..n {
                let first = rng.gen_range(0..n);
                let second = (first + rng.gen_range(1..n)) % n;
                table.insert((a, b), (first, second));
            }
        }
        let mut places: Vec<&str> = PLACES.to_vec();
        places.shuffle(&mut rng);
        let places = &places[..3];

        let mut ts: u64 = 1_600_000_000 + rng.gen_range(0..86_400);
        let (mut prev2, mut prev1) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let mut place = places[0];
        for i in 0..per_user {
            if i > 0 {
                if rng.gen_bool(0.15) {
                    // New session somewhere else.
                    ts += rng.gen_range(900..14_400);
                    place = places[rng.gen_range(0..places.len())];
                } else {
                    ts += rng.gen_range(5..240);
                }
            }
            let next = draw(&mut rng, &table[&(prev2, prev1)], n, spec);
            let app = owned[next];
            events.push(SyntheticEvent {
                user: user.clone(),
                timestamp: ts,
                app: app_name(app),
                category: category_of(app, spec).to_string(),
                poi: spec.with_poi.then(|| place.to_string()),
            });
            prev2 = prev1;
            prev1 = next;
        }
    }
    events
}

pub const CSV_HEADER: &str = "user_id,timestamp,app,category,poi";

pub fn write_csv<W: Write>(events: &[SyntheticEvent], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for e in events {
        writeln!(
            out,
            "{},{},{},{},{}",
            e.user,
            e.timestamp,
            e.app,
            e.category,
            e.poi.as_deref().unwrap_or("")
        )?;
    }
    out.flush()
}

/// Writes `<dir>/<dataset_id>.csv` and a manifest `<dir>/<dataset_id>.toml`
/// pointing at it; returns the manifest path.
pub fn write_dataset(dir: &Path, dataset_id: &str, spec: &SyntheticSpec) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{dataset_id}.csv"));
    let file = io::BufWriter::new(fs::File::create(&csv_path)?);
    write_csv(&generate(spec), file)?;
    let manifest = format!(
        "dataset_id = \"{dataset_id}\"\nfiles = [\"{dataset_id}.csv\"]\ndelimiter = \",\"\npoi_separator = \";\"\n\n[columns]\nuser = \"user_id\"\ntimestamp = \"timestamp\"\napp = \"app\"\ncategory = \"category\"\npoi = \"poi\"\n"
    );
    let manifest_path = dir.join(format!("{dataset_id}.toml"));
    fs::write(&manifest_path, manifest)?;
    Ok(manifest_path)
}
