//! Session state machine: occasion, then item picks per type, then prices and
//! budget, then a recommendation with feedback.

use std::collections::BTreeMap;

use boxrec_core::catalog::{Catalog, ClothingType, Item, Occasion};
use boxrec_core::engine::{PairScore, RoundTrace, DEFAULT_OUTFIT_TARGET};
use boxrec_core::metrics::{hit_ratio, Feedback};
use boxrec_core::retrieval::default_count;
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", content = "type", rename_all = "snake_case")]
pub enum SessionState {
    ChoosingOccasion,
    ChoosingItems(ClothingType),
    SettingPrices,
    Recommended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceRange {
    pub lo: u64,
    /// Exclusive upper bound.
    pub hi: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    pub price_ranges: BTreeMap<ClothingType, PriceRange>,
    pub budget: u64,
    /// Items retrieved per type and round; defaults to 15/3/2.
    #[serde(default)]
    pub counts: BTreeMap<ClothingType, usize>,
    /// Preferred outfits to generate before packing.
    #[serde(default = "default_target")]
    pub target: usize,
}

fn default_target() -> usize {
    DEFAULT_OUTFIT_TARGET
}

impl Constraints {
    pub fn count(&self, kind: ClothingType) -> usize {
        self.counts.get(&kind).copied().unwrap_or_else(|| default_count(kind))
    }

    pub fn validate(&self) -> ServiceResult<()> {
        for kind in ClothingType::ALL {
            let range = self
                .price_ranges
                .get(&kind)
                .ok_or_else(|| ServiceError::BadRequest(format!("no price range for {kind}")))?;
            if range.lo >= range.hi {
                return Err(ServiceError::BadRequest(format!(
                    "empty price range [{}, {}) for {kind}",
                    range.lo, range.hi
                )));
            }
            if self.count(kind) == 0 {
                return Err(ServiceError::BadRequest(format!("item count for {kind} must be positive")));
            }
        }
        if self.budget == 0 {
            return Err(ServiceError::BadRequest("budget must be positive".into()));
        }
        if self.target == 0 {
            return Err(ServiceError::BadRequest("outfit target must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemView {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: ClothingType,
    pub category: String,
    pub occasion: Occasion,
    pub price: u64,
    pub title: String,
}

impl From<&Item> for ItemView {
    fn from(item: &Item) -> Self {
        ItemView {
            id: item.id.clone(),
            kind: item.kind,
            category: item.category.clone(),
            occasion: item.occasion,
            price: item.price,
            title: item.title.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendedOutfit {
    pub id: String,
    /// Item ids, one per clothing type.
    pub items: Vec<String>,
    pub c1: f64,
    pub pairs: Vec<PairScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    /// Distinct items of the box.
    pub items: Vec<ItemView>,
    pub outfits: Vec<RecommendedOutfit>,
    pub total_price: u64,
    pub budget: u64,
    /// Whether outfit generation reached its target count.
    pub complete: bool,
    /// Preferred outfits generated before packing.
    pub generated: usize,
    /// Generated outfits priced above the budget on their own.
    pub over_budget: usize,
    pub rounds: Vec<RoundTrace>,
}

impl Recommendation {
    pub fn products(&self) -> impl Iterator<Item = &str> {
        self.items
            .iter()
            .map(|i| i.id.as_str())
            .chain(self.outfits.iter().map(|o| o.id.as_str()))
    }

    pub fn contains(&self, product: &str) -> bool {
        self.products().any(|p| p == product)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRatioReport {
    pub products: usize,
    pub hits: usize,
    pub hit_ratio: f64,
    pub item_hits: usize,
    pub outfit_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub created_ms: u64,
    pub state: SessionState,
    pub occasion: Option<Occasion>,
    pub chosen: BTreeMap<ClothingType, Vec<String>>,
    pub constraints: Option<Constraints>,
    pub recommendation: Option<Recommendation>,
    pub feedback: Vec<Feedback>,
}

fn step_index(kind: ClothingType) -> usize {
    ClothingType::ALL.iter().position(|&k| k == kind).unwrap_or(0)
}

impl Session {
    pub fn new(id: String, created_ms: u64) -> Self {
        Session {
            id,
            created_ms,
            state: SessionState::ChoosingOccasion,
            occasion: None,
            chosen: BTreeMap::new(),
            constraints: None,
            recommendation: None,
            feedback: Vec::new(),
        }
    }

    pub fn occasion(&self) -> ServiceResult<Occasion> {
        self.occasion
            .ok_or_else(|| ServiceError::WrongState("occasion has not been set".into()))
    }

    pub fn set_occasion(&mut self, occasion: Occasion) -> ServiceResult<()> {
        if self.state != SessionState::ChoosingOccasion {
            return Err(ServiceError::WrongState("occasion is already set".into()));
        }
        self.occasion = Some(occasion);
        self.state = SessionState::ChoosingItems(ClothingType::ALL[0]);
        Ok(())
    }

    /// Records picks for `kind`. The current type advances the session;
    /// earlier types may be revised until prices are submitted.
    pub fn set_choices(&mut self, kind: ClothingType, ids: Vec<String>, catalog: &Catalog) -> ServiceResult<()> {
        let reached = match self.state {
            SessionState::ChoosingItems(current) => step_index(current),
            SessionState::SettingPrices if self.constraints.is_none() => ClothingType::ALL.len(),
            _ => return Err(ServiceError::WrongState("item choices are closed".into())),
        };
        if step_index(kind) > reached {
            return Err(ServiceError::WrongState(format!(
                "choose {} items first",
                ClothingType::ALL[reached]
            )));
        }
        if ids.is_empty() {
            return Err(ServiceError::BadRequest(format!("choose at least one {kind} item")));
        }
        let occasion = self.occasion()?;
        for id in &ids {
            let item = catalog.item(id)?;
            if item.kind != kind {
                return Err(ServiceError::BadRequest(format!("`{id}` is {}, not {kind}", item.kind)));
            }
            if item.occasion != occasion {
                return Err(ServiceError::BadRequest(format!("`{id}` is not a {occasion} item")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        let unique: Vec<String> = ids.into_iter().filter(|id| seen.insert(id.clone())).collect();
        self.chosen.insert(kind, unique);
        if step_index(kind) == reached {
            self.state = match ClothingType::ALL.get(reached + 1) {
                Some(&next) => SessionState::ChoosingItems(next),
                None => SessionState::SettingPrices,
            };
        }
        Ok(())
    }

    pub fn set_constraints(&mut self, constraints: Constraints) -> ServiceResult<()> {
        if self.state != SessionState::SettingPrices {
            return Err(ServiceError::WrongState(
                "prices can be set once items are chosen and before recommending".into(),
            ));
        }
        constraints.validate()?;
        self.constraints = Some(constraints);
        Ok(())
    }

    pub fn constraints(&self) -> ServiceResult<&Constraints> {
        self.constraints
            .as_ref()
            .ok_or_else(|| ServiceError::WrongState("price ranges and budget are not set".into()))
    }

    pub fn ready_to_recommend(&self) -> ServiceResult<()> {
        if self.state != SessionState::SettingPrices {
            return Err(ServiceError::WrongState("session is not ready to recommend".into()));
        }
        self.constraints().map(|_| ())
    }

    pub fn set_recommendation(&mut self, recommendation: Recommendation) {
        self.recommendation = Some(recommendation);
        self.state = SessionState::Recommended;
    }

    pub fn recommendation(&self) -> ServiceResult<&Recommendation> {
        self.recommendation
            .as_ref()
            .ok_or_else(|| ServiceError::WrongState("no recommendation yet".into()))
    }

    pub fn record_feedback(&mut self, product: &str, liked: bool, timestamp: u64) -> ServiceResult<()> {
        if !self.recommendation()?.contains(product) {
            return Err(ServiceError::UnknownProduct(product.to_string()));
        }
        self.feedback.push(Feedback {
            session: self.id.clone(),
            product: product.to_string(),
            liked,
            timestamp,
        });
        Ok(())
    }

    /// Latest mark per product.
    pub fn feedback_state(&self) -> BTreeMap<String, bool> {
        let mut state = BTreeMap::new();
        for f in &self.feedback {
            state.insert(f.product.clone(), f.liked);
        }
        state
    }

    pub fn hit_ratio(&self) -> ServiceResult<HitRatioReport> {
        let rec = self.recommendation()?;
        let marks = self.feedback_state();
        let liked = |id: &str| marks.get(id).copied().unwrap_or(false);
        let item_hits = rec.items.iter().filter(|i| liked(&i.id)).count();
        let outfit_hits = rec.outfits.iter().filter(|o| liked(&o.id)).count();
        let products = rec.items.len() + rec.outfits.len();
        let hits = item_hits + outfit_hits;
        Ok(HitRatioReport {
            products,
            hits,
            hit_ratio: hit_ratio(products, hits)?,
            item_hits,
            outfit_hits,
        })
    }
}
