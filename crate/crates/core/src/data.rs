//! MovieLens-format ingestion, VU feature encoding and per-vehicle datasets.
//!
//! Content ids are the 1-based MovieLens movie ids; the rating block of a
//! feature row stores content `c` at column `PERSONAL_WIDTH + c - 1`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use log::warn;
use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};

/// MovieLens age codes, youngest first.
pub const AGE_CODES: [u8; 7] = [1, 18, 25, 35, 45, 50, 56];
pub const OCCUPATIONS: usize = 21;
pub const ZIP_PREFIXES: usize = 10;
/// Width `w` of the encoded personal-information block.
pub const PERSONAL_WIDTH: usize = 2 + OCCUPATIONS + ZIP_PREFIXES;
pub const MAX_RATING: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatingRecord {
    pub user_id: u32,
    pub content_id: u32,
    pub rating: u8,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn bit(self) -> f64 {
        match self {
            Gender::Female => 0.0,
            Gender::Male => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UserProfile {
    pub user_id: u32,
    pub gender: Gender,
    /// Index into [`AGE_CODES`].
    pub age_bucket: u8,
    pub occupation: u8,
    pub zip_prefix: u8,
}

impl UserProfile {
    pub fn age_code(&self) -> u8 {
        AGE_CODES[self.age_bucket as usize]
    }
}

fn read_text(path: &Path) -> Result<String> {
    // MovieLens ships latin-1 text; the fields we read are ASCII.
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn split_fields<'a>(line: &'a str, file: &str, lineno: usize, want: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split("::").collect();
    if fields.len() != want {
        return Err(Error::Parse {
            file: file.to_string(),
            line: lineno,
            message: format!("expected {want} '::'-separated fields, found {}", fields.len()),
        });
    }
    Ok(fields)
}

fn field<T: std::str::FromStr>(raw: &str, name: &str, file: &str, lineno: usize) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Parse {
        file: file.to_string(),
        line: lineno,
        message: format!("invalid {name} {raw:?}"),
    })
}

/// Parse `UserID::MovieID::Rating::Timestamp` lines. Blank lines are skipped.
pub fn parse_ratings_str(text: &str, file: &str) -> Result<Vec<RatingRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_fields(line.trim_end(), file, lineno, 4)?;
        let user_id: u32 = field(f[0], "user id", file, lineno)?;
        let content_id: u32 = field(f[1], "movie id", file, lineno)?;
        let rating: u8 = field(f[2], "rating", file, lineno)?;
        let timestamp: i64 = field(f[3], "timestamp", file, lineno)?;
        if user_id == 0 || content_id == 0 {
            return Err(Error::Parse {
                file: file.to_string(),
                line: lineno,
                message: "ids must be positive".into(),
            });
        }
        if !(1..=MAX_RATING).contains(&rating) {
            return Err(Error::Parse {
                file: file.to_string(),
                line: lineno,
                message: format!("rating {rating} outside 1..=5"),
            });
        }
        out.push(RatingRecord {
            user_id,
            content_id,
            rating,
            timestamp,
        });
    }
    Ok(out)
}

pub fn parse_ratings(path: impl AsRef<Path>) -> Result<Vec<RatingRecord>> {
    let path = path.as_ref();
    parse_ratings_str(&read_text(path)?, &path.display().to_string())
}

/// Parse `UserID::Gender::Age::Occupation::Zip` lines.
pub fn parse_users_str(text: &str, file: &str) -> Result<Vec<UserProfile>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_fields(line.trim_end(), file, lineno, 5)?;
        let err = |message: String| Error::Parse {
            file: file.to_string(),
            line: lineno,
            message,
        };
        let user_id: u32 = field(f[0], "user id", file, lineno)?;
        let gender = match f[1].trim() {
            "F" => Gender::Female,
            "M" => Gender::Male,
            other => return Err(err(format!("invalid gender {other:?}"))),
        };
        let age: u8 = field(f[2], "age", file, lineno)?;
        let age_bucket = AGE_CODES
            .iter()
            .position(|&c| c == age)
            .ok_or_else(|| err(format!("age code {age} is not a MovieLens age bucket")))?
            as u8;
        let occupation: u8 = field(f[3], "occupation", file, lineno)?;
        if occupation as usize >= OCCUPATIONS {
            return Err(err(format!("occupation {occupation} outside 0..=20")));
        }
        let zip_prefix = match f[4].trim().chars().next() {
            Some(c) if c.is_ascii_digit() => c as u8 - b'0',
            // A handful of MovieLens zips are non-US postcodes.
            Some(c) => (c as u32 % ZIP_PREFIXES as u32) as u8,
            None => return Err(err("empty zip code".into())),
        };
        out.push(UserProfile {
            user_id,
            gender,
            age_bucket,
            occupation,
            zip_prefix,
        });
    }
    Ok(out)
}

pub fn parse_users(path: impl AsRef<Path>) -> Result<Vec<UserProfile>> {
    let path = path.as_ref();
    parse_users_str(&read_text(path)?, &path.display().to_string())
}

/// Encode a profile as `[gender, age/6, one-hot(occupation), one-hot(zip prefix)]`.
pub fn encode_user(profile: &UserProfile) -> [f64; PERSONAL_WIDTH] {
    let mut v = [0.0; PERSONAL_WIDTH];
    v[0] = profile.gender.bit();
    v[1] = profile.age_bucket as f64 / (AGE_CODES.len() - 1) as f64;
    v[2 + profile.occupation as usize] = 1.0;
    v[2 + OCCUPATIONS + profile.zip_prefix as usize] = 1.0;
    v
}

/// Dense `n × m` rating matrix; 0 means unrated or uninterested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingMatrix {
    n: usize,
    m: usize,
    values: Vec<u8>,
}

impl RatingMatrix {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            values: vec![0; n * m],
        }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        let mut mat = Self::zeros(rows.len(), m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Shape(format!("row {i} has width {}, expected {m}", row.len())));
            }
            for (j, &r) in row.iter().enumerate() {
                mat.set(i, j as u32 + 1, r)?;
            }
        }
        Ok(mat)
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    /// Rating of VU `row` for 1-based `content_id`.
    pub fn get(&self, row: usize, content_id: u32) -> u8 {
        self.values[row * self.m + content_id as usize - 1]
    }

    pub fn set(&mut self, row: usize, content_id: u32, rating: u8) -> Result<()> {
        if row >= self.n || content_id == 0 || content_id as usize > self.m {
            return Err(Error::Shape(format!(
                "entry ({row}, {content_id}) outside {}x{} matrix",
                self.n, self.m
            )));
        }
        if rating > MAX_RATING {
            return Err(Error::Shape(format!("rating {rating} outside 0..=5")));
        }
        self.values[row * self.m + content_id as usize - 1] = rating;
        Ok(())
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.values[row * self.m..(row + 1) * self.m]
    }

    pub fn nonzero_count(&self, row: usize) -> usize {
        self.row(row).iter().filter(|&&r| r != 0).count()
    }

    /// Serialize the nonzero entries as `row::content::rating::0` lines (1-based rows).
    pub fn to_dat(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            for (j, &r) in self.row(i).iter().enumerate() {
                if r != 0 {
                    let _ = writeln!(s, "{}::{}::{}::0", i + 1, j + 1, r);
                }
            }
        }
        s
    }

    pub fn from_dat(text: &str, n: usize, m: usize) -> Result<Self> {
        let mut mat = Self::zeros(n, m);
        for rec in parse_ratings_str(text, "<rating matrix>")? {
            mat.set(rec.user_id as usize - 1, rec.content_id, rec.rating)?;
        }
        Ok(mat)
    }
}

/// One VU's ratings and profile, as held in the corpus.
#[derive(Debug, Clone)]
pub struct UserData {
    pub profile: UserProfile,
    pub personal: [f64; PERSONAL_WIDTH],
    /// `(content_id, rating)` sorted by content id.
    pub ratings: Vec<(u32, u8)>,
}

/// All users of a MovieLens-format dataset, ordered by user id.
#[derive(Debug, Clone)]
pub struct Corpus {
    catalog_size: u32,
    users: Vec<UserData>,
}

impl Corpus {
    /// Join ratings with profiles. `catalog_size` defaults to the largest content id seen.
    pub fn new(records: &[RatingRecord], profiles: &[UserProfile], catalog_size: Option<u32>) -> Result<Self> {
        let max_id = records.iter().map(|r| r.content_id).max().unwrap_or(0);
        let catalog_size = catalog_size.unwrap_or(max_id);
        if max_id > catalog_size {
            return Err(Error::Config(format!(
                "content id {max_id} exceeds catalog size {catalog_size}"
            )));
        }
        if catalog_size == 0 {
            return Err(Error::Config("empty catalog".into()));
        }
        let mut by_user: HashMap<u32, Vec<(u32, u8)>> = HashMap::new();
        for r in records {
            by_user.entry(r.user_id).or_default().push((r.content_id, r.rating));
        }
        let mut profiles = profiles.to_vec();
        profiles.sort_by_key(|p| p.user_id);
        if profiles.windows(2).any(|w| w[0].user_id == w[1].user_id) {
            return Err(Error::Config("duplicate user id in profiles".into()));
        }
        let mut users = Vec::with_capacity(profiles.len());
        for p in profiles {
            let mut ratings = by_user.remove(&p.user_id).unwrap_or_default();
            ratings.sort_unstable();
            ratings.dedup_by_key(|r| r.0);
            users.push(UserData {
                profile: p,
                personal: encode_user(&p),
                ratings,
            });
        }
        if let Some(orphan) = by_user.keys().min() {
            return Err(Error::Config(format!("user {orphan} has ratings but no profile")));
        }
        Ok(Self { catalog_size, users })
    }

    pub fn load(ratings: impl AsRef<Path>, users: impl AsRef<Path>, catalog_size: Option<u32>) -> Result<Self> {
        Self::new(&parse_ratings(ratings)?, &parse_users(users)?, catalog_size)
    }

    pub fn catalog_size(&self) -> u32 {
        self.catalog_size
    }

    pub fn users(&self) -> &[UserData] {
        &self.users
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn feature_width(&self) -> usize {
        PERSONAL_WIDTH + self.catalog_size as usize
    }
}

/// Sparse feature row: sorted column indices with their values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    pub width: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.width];
        for (&j, &x) in self.indices.iter().zip(&self.values) {
            v[j as usize] = x;
        }
        v
    }
}

/// A VU row inside a vehicle's dataset. `train`/`test` index into `ratings`.
#[derive(Debug, Clone)]
pub struct VuRow {
    pub user_id: u32,
    pub personal: [f64; PERSONAL_WIDTH],
    pub ratings: Vec<(u32, u8)>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl VuRow {
    fn features(&self, which: &[usize], catalog_size: u32) -> SparseRow {
        let mut indices = Vec::with_capacity(PERSONAL_WIDTH + which.len());
        let mut values = Vec::with_capacity(PERSONAL_WIDTH + which.len());
        for (j, &x) in self.personal.iter().enumerate() {
            if x != 0.0 {
                indices.push(j as u32);
                values.push(x);
            }
        }
        for &k in which {
            let (c, r) = self.ratings[k];
            indices.push((PERSONAL_WIDTH as u32) + c - 1);
            values.push(r as f64 / MAX_RATING as f64);
        }
        SparseRow {
            width: PERSONAL_WIDTH + catalog_size as usize,
            indices,
            values,
        }
    }
}

/// A vehicle's local data: one row per VU.
#[derive(Debug, Clone)]
pub struct LocalDataset {
    pub vehicle_id: u64,
    pub catalog_size: u32,
    pub rows: Vec<VuRow>,
}

impl LocalDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn feature_width(&self) -> usize {
        PERSONAL_WIDTH + self.catalog_size as usize
    }

    /// Local data size used for aggregation weights and simulated training time:
    /// the number of training-set ratings.
    pub fn train_size(&self) -> usize {
        self.rows.iter().map(|r| r.train.len()).sum()
    }

    pub fn test_size(&self) -> usize {
        self.rows.iter().map(|r| r.test.len()).sum()
    }

    /// Rows with at least one training rating.
    pub fn trainable_rows(&self) -> Vec<usize> {
        (0..self.rows.len()).filter(|&i| !self.rows[i].train.is_empty()).collect()
    }

    /// Personal info followed by training ratings scaled to [0,1].
    pub fn train_features(&self, row: usize) -> SparseRow {
        let r = &self.rows[row];
        r.features(&r.train, self.catalog_size)
    }

    /// Personal info followed by testing ratings scaled to [0,1].
    pub fn test_features(&self, row: usize) -> SparseRow {
        let r = &self.rows[row];
        r.features(&r.test, self.catalog_size)
    }

    pub fn test_rating_matrix(&self) -> RatingMatrix {
        let mut mat = RatingMatrix::zeros(self.rows.len(), self.catalog_size as usize);
        for (i, row) in self.rows.iter().enumerate() {
            for &k in &row.test {
                let (c, r) = row.ratings[k];
                mat.values[i * mat.m + c as usize - 1] = r;
            }
        }
        mat
    }

    /// Testing-set content ids of one VU, ascending.
    pub fn test_contents(&self, row: usize) -> Vec<u32> {
        let r = &self.rows[row];
        let mut ids: Vec<u32> = r.test.iter().map(|&k| r.ratings[k].0).collect();
        ids.sort_unstable();
        ids
    }
}

fn dataset_from_users(corpus: &Corpus, vehicle_id: u64, user_idx: &[usize]) -> LocalDataset {
    LocalDataset {
        vehicle_id,
        catalog_size: corpus.catalog_size,
        rows: user_idx
            .iter()
            .map(|&u| {
                let d = &corpus.users[u];
                VuRow {
                    user_id: d.profile.user_id,
                    personal: d.personal,
                    ratings: d.ratings.clone(),
                    train: Vec::new(),
                    test: Vec::new(),
                }
            })
            .collect(),
    }
}

/// Assign distinct users to vehicles, `vus_per_vehicle` each, sampled without
/// replacement. Vehicle ids are `0..num_vehicles`. Datasets come back unsplit.
pub fn allocate_vehicles<R: Rng + ?Sized>(
    corpus: &Corpus,
    num_vehicles: usize,
    vus_per_vehicle: usize,
    rng: &mut R,
) -> Result<Vec<LocalDataset>> {
    let needed = num_vehicles * vus_per_vehicle;
    if needed > corpus.num_users() {
        return Err(Error::Config(format!(
            "{num_vehicles} vehicles x {vus_per_vehicle} VUs needs {needed} distinct users, corpus has {}",
            corpus.num_users()
        )));
    }
    let picked = index::sample(rng, corpus.num_users(), needed).into_vec();
    Ok(picked
        .chunks(vus_per_vehicle.max(1))
        .take(num_vehicles)
        .enumerate()
        .map(|(v, users)| dataset_from_users(corpus, v as u64, users))
        .collect())
}

/// Split every VU's ratings: after a seeded shuffle the first
/// `floor(fraction * count)` go to training, the rest to testing.
pub fn split_train_test<R: Rng + ?Sized>(
    mut dataset: LocalDataset,
    train_fraction: f64,
    rng: &mut R,
) -> Result<LocalDataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} outside (0,1)")));
    }
    for row in &mut dataset.rows {
        let count = row.ratings.len();
        if count == 0 {
            warn!(
                "vehicle {}: VU {} has no ratings, keeping empty partitions",
                dataset.vehicle_id, row.user_id
            );
            row.train.clear();
            row.test.clear();
            continue;
        }
        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(rng);
        let k = (train_fraction * count as f64).floor() as usize;
        let (train, test) = order.split_at(k);
        row.train = train.to_vec();
        row.test = test.to_vec();
        row.train.sort_unstable();
        row.test.sort_unstable();
    }
    Ok(dataset)
}

/// Hands out fresh vehicle datasets drawn from users not currently on the road.
#[derive(Debug, Clone)]
pub struct UserPool {
    corpus: Arc<Corpus>,
    in_use: Vec<bool>,
    index_of: HashMap<u32, usize>,
    vus_per_vehicle: usize,
    train_fraction: f64,
}

impl UserPool {
    pub fn new(corpus: Arc<Corpus>, vus_per_vehicle: usize, train_fraction: f64) -> Result<Self> {
        if vus_per_vehicle == 0 {
            return Err(Error::Config("vus_per_vehicle must be at least 1".into()));
        }
        if vus_per_vehicle > corpus.num_users() {
            return Err(Error::Config(format!(
                "vus_per_vehicle {vus_per_vehicle} exceeds {} users",
                corpus.num_users()
            )));
        }
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!("train fraction {train_fraction} outside (0,1)")));
        }
        let index_of = corpus
            .users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.profile.user_id, i))
            .collect();
        Ok(Self {
            in_use: vec![false; corpus.num_users()],
            corpus,
            index_of,
            vus_per_vehicle,
            train_fraction,
        })
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn available(&self) -> usize {
        self.in_use.iter().filter(|&&b| !b).count()
    }

    /// Allocate and split a dataset for a new vehicle.
    pub fn draw<R: Rng + ?Sized>(&mut self, vehicle_id: u64, rng: &mut R) -> Result<LocalDataset> {
        let free: Vec<usize> = (0..self.in_use.len()).filter(|&i| !self.in_use[i]).collect();
        if free.len() < self.vus_per_vehicle {
            return Err(Error::Config(format!(
                "user pool exhausted: {} free users, {} needed per vehicle",
                free.len(),
                self.vus_per_vehicle
            )));
        }
        let picked: Vec<usize> = index::sample(rng, free.len(), self.vus_per_vehicle)
            .into_iter()
            .map(|k| free[k])
            .collect();
        for &u in &picked {
            self.in_use[u] = true;
        }
        split_train_test(
            dataset_from_users(&self.corpus, vehicle_id, &picked),
            self.train_fraction,
            rng,
        )
    }

    /// Return a departed vehicle's users to the pool.
    pub fn release(&mut self, dataset: &LocalDataset) {
        for row in &dataset.rows {
            if let Some(&i) = self.index_of.get(&row.user_id) {
                self.in_use[i] = false;
            }
        }
    }
}
