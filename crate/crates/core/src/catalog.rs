//! In-memory fashion item catalog.
//!
//! A [`Catalog`] is built once (from a JSON-lines or CSV file, or from a list of
//! items) and is immutable afterwards. Items are indexed by
//! `(type, category, occasion)` and every title/category token is registered in
//! the catalog vocabulary used by the bag-of-words text embedding.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Clothing type of an item. Engine outfits hold exactly one item per type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClothingType {
    TopWear,
    BottomWear,
    FootWear,
}

impl ClothingType {
    pub const ALL: [ClothingType; 3] = [
        ClothingType::TopWear,
        ClothingType::BottomWear,
        ClothingType::FootWear,
    ];

    pub fn short(self) -> &'static str {
        match self {
            ClothingType::TopWear => "tw",
            ClothingType::BottomWear => "bw",
            ClothingType::FootWear => "fw",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClothingType::TopWear => "top_wear",
            ClothingType::BottomWear => "bottom_wear",
            ClothingType::FootWear => "foot_wear",
        }
    }
}

impl fmt::Display for ClothingType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClothingType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "tw" | "top_wear" | "topwear" | "top" => Ok(ClothingType::TopWear),
            "bw" | "bottom_wear" | "bottomwear" | "bottom" => Ok(ClothingType::BottomWear),
            "fw" | "foot_wear" | "footwear" | "foot" => Ok(ClothingType::FootWear),
            other => Err(Error::Parse(format!("unknown clothing type `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occasion {
    Formal,
    Casual,
}

impl fmt::Display for Occasion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Occasion::Formal => "formal",
            Occasion::Casual => "casual",
        })
    }
}

impl FromStr for Occasion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "formal" => Ok(Occasion::Formal),
            "casual" => Ok(Occasion::Casual),
            other => Err(Error::Parse(format!("unknown occasion `{other}`"))),
        }
    }
}

/// A single catalog product.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: ClothingType,
    pub category: String,
    pub occasion: Occasion,
    /// Price in minor currency units.
    pub price: u64,
    pub title: String,
    /// Normalized tokens of the title and the category.
    pub title_tokens: BTreeSet<String>,
    /// Key into the feature store; defaults to the item id.
    pub feature_ref: String,
}

impl Item {
    /// Builds an item, deriving its token set from `title` and `category`.
    pub fn new(
        id: impl Into<String>,
        kind: ClothingType,
        category: impl Into<String>,
        occasion: Occasion,
        price: u64,
        title: impl Into<String>,
    ) -> Self {
        let id = id.into();
        let category = normalize_category(&category.into());
        let title = title.into();
        let mut title_tokens: BTreeSet<String> = tokenize(&title).collect();
        title_tokens.extend(tokenize(&category));
        Item {
            feature_ref: id.clone(),
            id,
            kind,
            category,
            occasion,
            price,
            title,
            title_tokens,
        }
    }
}

/// Lowercase, drop punctuation, split on whitespace.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().filter_map(|word| {
        let token: String = word
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        (!token.is_empty()).then_some(token)
    })
}

fn normalize_category(category: &str) -> String {
    category.trim().to_lowercase()
}

/// Ordered token set with a bijective index onto `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<String>", from = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        Vocabulary::new(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(vocabulary: Vocabulary) -> Self {
        vocabulary.tokens
    }
}

impl Vocabulary {
    pub fn new(tokens: impl IntoIterator<Item = String>) -> Self {
        let set: BTreeSet<String> = tokens.into_iter().collect();
        let tokens: Vec<String> = set.into_iter().collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Indices of `tokens`, failing on the first token outside the vocabulary.
    pub fn indices<'a>(&self, tokens: impl IntoIterator<Item = &'a String>) -> Result<Vec<usize>> {
        tokens
            .into_iter()
            .map(|t| self.index_of(t).ok_or_else(|| Error::UnknownToken(t.clone())))
            .collect()
    }

    /// SHA-256 over the newline-joined token list; stored in checkpoints.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for token in &self.tokens {
            hasher.update(token.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// Allowed categories per clothing type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogConfig {
    pub categories: BTreeMap<ClothingType, BTreeSet<String>>,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        let set = |names: &[&str]| names.iter().map(|s| s.to_string()).collect();
        let mut categories = BTreeMap::new();
        categories.insert(
            ClothingType::TopWear,
            set(&["shirt", "tshirt", "polo tshirt", "long sleeved top"]),
        );
        categories.insert(
            ClothingType::BottomWear,
            set(&["trouser/chino", "jeans", "track-pant", "shorts"]),
        );
        categories.insert(
            ClothingType::FootWear,
            set(&["ankle-boot", "lace-up", "slip-on", "trainer", "sandals"]),
        );
        CatalogConfig { categories }
    }
}

impl CatalogConfig {
    pub fn allows(&self, kind: ClothingType, category: &str) -> bool {
        self.categories
            .get(&kind)
            .is_some_and(|set| set.contains(category))
    }
}

type IndexKey = (ClothingType, String, Occasion);

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Catalog {
    items: BTreeMap<String, Item>,
    #[serde(skip)]
    index: BTreeMap<IndexKey, Vec<String>>,
    vocabulary: Vocabulary,
}

impl Catalog {
    /// Validates items against `config` and builds the index and vocabulary.
    pub fn from_items(items: impl IntoIterator<Item = Item>, config: &CatalogConfig) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for item in items {
            validate_item(&item, config)?;
            if by_id.contains_key(&item.id) {
                return Err(Error::DuplicateId(item.id));
            }
            by_id.insert(item.id.clone(), item);
        }
        let mut index: BTreeMap<IndexKey, Vec<String>> = BTreeMap::new();
        for item in by_id.values() {
            index
                .entry((item.kind, item.category.clone(), item.occasion))
                .or_default()
                .push(item.id.clone());
        }
        let vocabulary = Vocabulary::new(
            by_id
                .values()
                .flat_map(|item| item.title_tokens.iter().cloned()),
        );
        Ok(Catalog {
            items: by_id,
            index,
            vocabulary,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Item> {
        self.items.get(id)
    }

    pub fn item(&self, id: &str) -> Result<&Item> {
        self.get(id).ok_or_else(|| Error::UnknownItem(id.to_string()))
    }

    /// All items, ordered by id.
    pub fn items(&self) -> impl Iterator<Item = &Item> {
        self.items.values()
    }

    /// Items of one type, ordered by id.
    pub fn items_of(&self, kind: ClothingType) -> Vec<&Item> {
        self.items.values().filter(|item| item.kind == kind).collect()
    }

    /// Ids in one `(type, category, occasion)` partition, ordered by id.
    pub fn partition(&self, kind: ClothingType, category: &str, occasion: Occasion) -> &[String] {
        self.index
            .get(&(kind, category.to_string(), occasion))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn partitions(&self) -> impl Iterator<Item = (&IndexKey, &Vec<String>)> {
        self.index.iter()
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }
}

fn validate_item(item: &Item, config: &CatalogConfig) -> Result<()> {
    if item.id.trim().is_empty() {
        return Err(Error::Invalid("empty item id".into()));
    }
    if item.price == 0 {
        return Err(Error::Invalid(format!("item `{}` has zero price", item.id)));
    }
    if !config.allows(item.kind, &item.category) {
        return Err(Error::Invalid(format!(
            "category `{}` is not configured for {}",
            item.category, item.kind
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalogFormat {
    Jsonl,
    Csv,
}

impl FromStr for CatalogFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(CatalogFormat::Jsonl),
            "csv" => Ok(CatalogFormat::Csv),
            other => Err(Error::Parse(format!("unknown catalog format `{other}`"))),
        }
    }
}

impl CatalogFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CatalogFormat::Csv,
            _ => CatalogFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRow {
    /// 1-based line number in the source file.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedCatalog {
    pub catalog: Catalog,
    pub rejected: Vec<RejectedRow>,
}

#[derive(Debug, Default, Deserialize)]
struct RawRow {
    id: Option<String>,
    #[serde(rename = "type")]
    kind: Option<String>,
    category: Option<String>,
    occasion: Option<String>,
    price: Option<serde_json::Value>,
    title: Option<String>,
    feature_ref: Option<String>,
}

impl RawRow {
    fn into_item(self, config: &CatalogConfig) -> std::result::Result<Item, String> {
        let id = required(self.id, "id")?;
        let kind: ClothingType = required(self.kind, "type")?
            .parse()
            .map_err(|e: Error| e.to_string())?;
        let category = required(self.category, "category")?;
        let occasion: Occasion = required(self.occasion, "occasion")?
            .parse()
            .map_err(|e: Error| e.to_string())?;
        let price = parse_price(self.price)?;
        let title = self.title.unwrap_or_default();
        let mut item = Item::new(id, kind, category, occasion, price, title);
        if let Some(feature_ref) = self.feature_ref.filter(|f| !f.trim().is_empty()) {
            item.feature_ref = feature_ref;
        }
        validate_item(&item, config).map_err(|e| e.to_string())?;
        Ok(item)
    }
}

fn required(field: Option<String>, name: &str) -> std::result::Result<String, String> {
    match field {
        Some(v) if !v.trim().is_empty() => Ok(v.trim().to_string()),
        _ => Err(format!("missing `{name}`")),
    }
}

fn parse_price(value: Option<serde_json::Value>) -> std::result::Result<u64, String> {
    let price = match value {
        None | Some(serde_json::Value::Null) => return Err("missing `price`".into()),
        Some(serde_json::Value::Number(n)) => n.as_u64(),
        Some(serde_json::Value::String(s)) if s.trim().is_empty() => {
            return Err("missing `price`".into())
        }
        Some(serde_json::Value::String(s)) => s.trim().parse::<u64>().ok(),
        Some(_) => None,
    };
    match price {
        Some(p) if p > 0 => Ok(p),
        _ => Err("`price` must be a positive integer".into()),
    }
}

/// Reads a catalog file. Malformed rows are reported, duplicate ids are fatal.
pub fn load_catalog(path: &Path, format: CatalogFormat, config: &CatalogConfig) -> Result<LoadedCatalog> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_catalog(&text, format, config)
}

pub fn parse_catalog(text: &str, format: CatalogFormat, config: &CatalogConfig) -> Result<LoadedCatalog> {
    let rows: Vec<(u64, std::result::Result<RawRow, String>)> = match format {
        CatalogFormat::Jsonl => text
            .lines()
            .enumerate()
            .filter(|(_, line)| !line.trim().is_empty())
            .map(|(i, line)| {
                let row = serde_json::from_str::<RawRow>(line).map_err(|e| e.to_string());
                (i as u64 + 1, row)
            })
            .collect(),
        CatalogFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(text.as_bytes());
            let headers = reader
                .headers()
                .map_err(|e| Error::Parse(e.to_string()))?
                .clone();
            reader
                .records()
                .map(|record| match record {
                    Ok(record) => {
                        let line = record.position().map_or(0, |p| p.line());
                        (line, Ok(csv_row(&headers, &record)))
                    }
                    Err(e) => {
                        let line = e.position().map_or(0, |p| p.line());
                        (line, Err(e.to_string()))
                    }
                })
                .collect()
        }
    };

    let mut items = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, row) in rows {
        match row.and_then(|r| r.into_item(config)) {
            Ok(item) => {
                if !seen.insert(item.id.clone()) {
                    return Err(Error::DuplicateId(item.id));
                }
                items.push(item);
            }
            Err(reason) => rejected.push(RejectedRow { line, reason }),
        }
    }
    let catalog = Catalog::from_items(items, config)?;
    Ok(LoadedCatalog { catalog, rejected })
}

fn csv_row(headers: &csv::StringRecord, record: &csv::StringRecord) -> RawRow {
    let field = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .and_then(|i| record.get(i))
            .map(str::to_string)
    };
    RawRow {
        id: field("id"),
        kind: field("type"),
        category: field("category"),
        occasion: field("occasion"),
        price: field("price").map(serde_json::Value::String),
        title: field("title"),
        feature_ref: field("feature_ref"),
    }
}

/// Writes items as JSON lines with the columns the loader reads.
pub fn write_catalog_jsonl(items: impl IntoIterator<Item = impl std::borrow::Borrow<Item>>) -> String {
    let mut out = String::new();
    for item in items {
        let item = item.borrow();
        let row = serde_json::json!({
            "id": item.id,
            "type": item.kind.as_str(),
            "category": item.category,
            "occasion": item.occasion.to_string(),
            "price": item.price,
            "title": item.title,
        });
        out.push_str(&row.to_string());
        out.push('\n');
    }
    out
}
