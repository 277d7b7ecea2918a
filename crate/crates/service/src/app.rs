//! Session operations over a loaded catalog, feature store and scorer.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use boxrec_core::catalog::{load_catalog, Catalog, CatalogConfig, CatalogFormat, ClothingType, Occasion};
use boxrec_core::engine::{generate_preferred_outfits, score_outfit, to_instance, ModelScorer, Outfit, PairScorer};
use boxrec_core::features::{load_features, FeatureStore};
use boxrec_core::metrics::Feedback;
use boxrec_core::retrieval::{PreferenceQuery, TypePreference};
use boxrec_core::solver::olr_solve;
use boxrec_core::training::Checkpoint;
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};
use crate::session::{
    Constraints, HitRatioReport, ItemView, Recommendation, RecommendedOutfit, Session,
};
use crate::store::SessionStore;

pub const PAGE_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemPage {
    #[serde(rename = "type")]
    pub kind: ClothingType,
    pub page: usize,
    pub items: Vec<ItemView>,
    pub total: usize,
    pub has_more: bool,
    /// Set when `page` is past the last item.
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub session: String,
    pub recommendation: Recommendation,
    /// Latest mark per product.
    pub feedback: BTreeMap<String, bool>,
    pub hit_ratio: HitRatioReport,
}

pub struct Service {
    catalog: Arc<Catalog>,
    features: Arc<FeatureStore>,
    scorer: Arc<dyn PairScorer>,
    store: SessionStore,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Service {
    pub fn new(
        catalog: Arc<Catalog>,
        features: Arc<FeatureStore>,
        scorer: Arc<dyn PairScorer>,
        store: SessionStore,
    ) -> Self {
        Service {
            catalog,
            features,
            scorer,
            store,
        }
    }

    /// Loads catalog, features and decoder checkpoints from disk.
    pub fn open(catalog: &Path, features: &Path, ckpt_dir: &Path, store: &Path) -> anyhow::Result<Self> {
        let loaded = load_catalog(catalog, CatalogFormat::from_path(catalog), &CatalogConfig::default())?;
        for row in &loaded.rejected {
            tracing::warn!(line = row.line, reason = %row.reason, "catalog row rejected");
        }
        let catalog = Arc::new(loaded.catalog);
        let features = Arc::new(load_features(features, &catalog)?);
        let checkpoint = Checkpoint::load_dir(ckpt_dir)?;
        let scorer = ModelScorer::new(checkpoint, catalog.clone(), features.clone())?;
        let store = SessionStore::open(store)?;
        Ok(Service::new(catalog, features, Arc::new(scorer), store))
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn create_session(&self) -> ServiceResult<Session> {
        let session = Session::new(uuid::Uuid::new_v4().to_string(), now_ms());
        self.store.put(session.clone())?;
        Ok(session)
    }

    pub fn session(&self, id: &str) -> ServiceResult<Session> {
        self.store.get(id)
    }

    fn update<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> ServiceResult<T>) -> ServiceResult<(Session, T)> {
        let lock = self.store.session_lock(id)?;
        let _guard = lock.lock().map_err(|_| ServiceError::Store("lock poisoned".into()))?;
        let mut session = self.store.get(id)?;
        let out = f(&mut session)?;
        self.store.put(session.clone())?;
        Ok((session, out))
    }

    pub fn set_occasion(&self, id: &str, occasion: Occasion) -> ServiceResult<Session> {
        self.update(id, |s| s.set_occasion(occasion)).map(|(s, _)| s)
    }

    /// Items of `kind` for the session's occasion, in id order, `PAGE_SIZE`
    /// per page.
    pub fn sample_items(&self, id: &str, kind: ClothingType, page: usize) -> ServiceResult<ItemPage> {
        let session = self.store.get(id)?;
        let occasion = session.occasion()?;
        let mut all: Vec<_> = self
            .catalog
            .items_of(kind)
            .into_iter()
            .filter(|i| i.occasion == occasion)
            .collect();
        all.sort_by(|a, b| a.id.cmp(&b.id));
        let start = page.saturating_mul(PAGE_SIZE);
        let items: Vec<ItemView> = all.iter().skip(start).take(PAGE_SIZE).map(|&i| i.into()).collect();
        Ok(ItemPage {
            kind,
            page,
            total: all.len(),
            has_more: start + items.len() < all.len(),
            exhausted: start >= all.len(),
            items,
        })
    }

    pub fn set_choices(&self, id: &str, kind: ClothingType, ids: Vec<String>) -> ServiceResult<Session> {
        let catalog = self.catalog.clone();
        self.update(id, |s| s.set_choices(kind, ids, &catalog)).map(|(s, _)| s)
    }

    pub fn set_constraints(&self, id: &str, constraints: Constraints) -> ServiceResult<Session> {
        self.update(id, |s| s.set_constraints(constraints)).map(|(s, _)| s)
    }

    /// Generates preferred outfits, packs them into a box within budget,
    /// rechecks the box and stores it on the session.
    pub fn recommend(&self, id: &str) -> ServiceResult<Recommendation> {
        self.update(id, |s| {
            s.ready_to_recommend()?;
            let rec = self.build_recommendation(s)?;
            s.set_recommendation(rec.clone());
            Ok(rec)
        })
        .map(|(_, r)| r)
    }

    fn build_recommendation(&self, session: &Session) -> ServiceResult<Recommendation> {
        let constraints = session.constraints()?;
        let mut types = BTreeMap::new();
        for kind in ClothingType::ALL {
            let range = constraints.price_ranges[&kind];
            types.insert(
                kind,
                TypePreference {
                    chosen: session.chosen.get(&kind).cloned().unwrap_or_default(),
                    price_lo: range.lo,
                    price_hi: range.hi,
                    count: constraints.count(kind),
                },
            );
        }
        let query = PreferenceQuery {
            occasion: session.occasion()?,
            types,
        };
        let generated = generate_preferred_outfits(
            &self.catalog,
            &self.features,
            self.scorer.as_ref(),
            &query,
            constraints.target,
        )?;
        if generated.outfits.is_empty() {
            return Err(ServiceError::NoCompatibleOutfits);
        }
        let instance = to_instance(&generated.outfits, &self.catalog, constraints.budget)?;
        let solution = olr_solve(&instance)?;
        if solution.chosen.outfits.is_empty() {
            let cheapest = (0..instance.outfit_count())
                .map(|j| instance.outfit_price(j))
                .min()
                .unwrap_or(0);
            return Err(ServiceError::BudgetTooLow {
                budget: constraints.budget,
                cheapest,
            });
        }

        let mut outfits = Vec::with_capacity(solution.chosen.outfits.len());
        for (k, &j) in solution.chosen.outfits.iter().enumerate() {
            let outfit: &Outfit = &generated.outfits[j].outfit;
            let score = score_outfit(outfit, &self.catalog, self.scorer.as_ref())?;
            if score.c2 != 1 {
                return Err(ServiceError::Integrity(format!(
                    "outfit {:?} no longer scores as compatible",
                    outfit.items
                )));
            }
            outfits.push(RecommendedOutfit {
                id: format!("outfit-{}", k + 1),
                items: outfit.items.clone(),
                c1: score.c1,
                pairs: score.pairs,
            });
        }
        let items = solution
            .chosen
            .items
            .iter()
            .map(|i| self.catalog.item(i).map(ItemView::from))
            .collect::<Result<Vec<_>, _>>()?;
        let total_price: u64 = items.iter().map(|i| i.price).sum();
        if total_price != solution.chosen.total_price || total_price > constraints.budget {
            return Err(ServiceError::Integrity(format!(
                "box price {total_price} does not fit budget {}",
                constraints.budget
            )));
        }
        tracing::info!(
            session = %session.id,
            generated = generated.outfits.len(),
            outfits = outfits.len(),
            items = items.len(),
            total_price,
            "recommendation ready"
        );
        Ok(Recommendation {
            items,
            outfits,
            total_price,
            budget: constraints.budget,
            complete: generated.complete,
            generated: generated.outfits.len(),
            over_budget: solution.dropped.len(),
            rounds: generated.rounds,
        })
    }

    pub fn recommendation(&self, id: &str) -> ServiceResult<RecommendationView> {
        let session = self.store.get(id)?;
        Ok(RecommendationView {
            session: session.id.clone(),
            recommendation: session.recommendation()?.clone(),
            feedback: session.feedback_state(),
            hit_ratio: session.hit_ratio()?,
        })
    }

    pub fn record_feedback(&self, id: &str, product: &str, liked: bool) -> ServiceResult<HitRatioReport> {
        self.update(id, |s| {
            s.record_feedback(product, liked, now_ms())?;
            s.hit_ratio()
        })
        .map(|(_, hr)| hr)
    }

    pub fn hit_ratio(&self, id: &str) -> ServiceResult<HitRatioReport> {
        self.store.get(id)?.hit_ratio()
    }

    pub fn feedback_log(&self, id: &str) -> ServiceResult<Vec<Feedback>> {
        Ok(self.store.get(id)?.feedback)
    }
}
