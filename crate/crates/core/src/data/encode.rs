//! Content-feature encoders: one-hot demographics and bag-of-words
//! interaction preference reduced by PCA.
//!
//! Every view is returned with L2-normalized columns so that the per-view
//! residuals compared by the self-weighting are on a common scale. A user
//! without any information for a view gets an all-zero column.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{normalize_columns, AttributeKind, AttributeSpec, Dataset, DemoRecord, EncoderTag, FeatureBlock, Result};
use crate::numerics::{pca_reduce, PcaBasis};

const OTHER: &str = "other";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureOptions {
    /// PCA output dimension of the interaction-preference view.
    pub preference_dim: usize,
    /// Most frequent item labels kept in the bag-of-words vocabulary.
    pub max_vocab: usize,
    /// Country tokens seen for fewer users collapse into `other`.
    pub min_country_users: usize,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self { preference_dim: 128, max_vocab: 512, min_country_users: 5 }
    }
}

/// Category list of one demographic attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeVocab {
    pub spec: AttributeSpec,
    pub categories: Vec<String>,
    /// Rare values that map onto the `other` category.
    pub collapsed: Vec<String>,
}

impl AttributeVocab {
    pub fn normalize(kind: AttributeKind, raw: &str) -> Option<String> {
        let raw = raw.trim();
        if raw.is_empty() {
            return None;
        }
        match kind {
            AttributeKind::Categorical => Some(raw.to_string()),
            AttributeKind::AgeDecade => {
                let age: f64 = raw.parse().ok()?;
                if !(0.0..=100.0).contains(&age) {
                    return None;
                }
                let decade = (age / 10.0).floor() as u32;
                Some(if decade >= 9 { "90+".to_string() } else { format!("{}-{}", decade * 10, decade * 10 + 9) })
            }
            AttributeKind::CountryToken => {
                let token = raw.rsplit(',').next()?.trim().to_lowercase();
                (!token.is_empty()).then_some(token)
            }
        }
    }

    /// Category index for a raw value; unseen values have none.
    pub fn lookup(&self, raw: Option<&String>) -> Option<usize> {
        let value = Self::normalize(self.spec.kind, raw?)?;
        let key = if self.collapsed.binary_search(&value).is_ok() { OTHER.to_string() } else { value };
        self.categories.binary_search(&key).ok()
    }
}

/// One-hot groups, one per attribute, concatenated in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicEncoder {
    pub attributes: Vec<AttributeVocab>,
}

impl DemographicEncoder {
    pub fn fit(schema: &[AttributeSpec], records: &[DemoRecord], min_country_users: usize) -> Self {
        let attributes = schema
            .iter()
            .map(|spec| {
                let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                for rec in records {
                    if let Some(v) = rec.get(&spec.name).and_then(|raw| AttributeVocab::normalize(spec.kind, raw)) {
                        *counts.entry(v).or_default() += 1;
                    }
                }
                let mut categories = Vec::new();
                let mut collapsed = Vec::new();
                for (value, count) in counts {
                    if spec.kind == AttributeKind::CountryToken && count < min_country_users {
                        collapsed.push(value);
                    } else {
                        categories.push(value);
                    }
                }
                if !collapsed.is_empty() && !categories.iter().any(|c| c == OTHER) {
                    categories.push(OTHER.to_string());
                    categories.sort();
                }
                // a genuine "other" token is merged with the collapsed ones
                collapsed.retain(|c| c != OTHER);
                AttributeVocab { spec: spec.clone(), categories, collapsed }
            })
            .collect();
        Self { attributes }
    }

    pub fn dim(&self) -> usize {
        self.attributes.iter().map(|a| a.categories.len()).sum()
    }

    /// Number of attributes in `rec` that resolve to a known category.
    pub fn known_attributes(&self, rec: &DemoRecord) -> usize {
        self.attributes.iter().filter(|a| a.lookup(rec.get(&a.spec.name)).is_some()).count()
    }

    /// 0/1 indicator columns (d×n) before normalization.
    pub fn encode_raw(&self, records: &[DemoRecord]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim(), records.len());
        for (u, rec) in records.iter().enumerate() {
            let mut offset = 0;
            for attr in &self.attributes {
                if let Some(k) = attr.lookup(rec.get(&attr.spec.name)) {
                    out[(offset + k, u)] = 1.0;
                }
                offset += attr.categories.len();
            }
        }
        out
    }

    pub fn encode(&self, records: &[DemoRecord]) -> DMatrix<f64> {
        let mut out = self.encode_raw(records);
        normalize_columns(&mut out);
        out
    }
}

/// Demographic view of `d`, with the vocabulary fitted on `d` itself.
pub fn encode_demographics(d: &Dataset) -> FeatureBlock {
    let enc = DemographicEncoder::fit(&d.demo_schema, &d.user_demo, FeatureOptions::default().min_country_users);
    FeatureBlock::new(0, enc.encode(&d.user_demo), EncoderTag::OneHot)
}

/// Label vocabulary (most frequent across items first, ties alphabetical)
/// and each item's label indices.
pub fn build_vocabulary(item_side: &[Vec<String>], max_vocab: usize) -> (Vec<String>, Vec<Vec<u32>>) {
    let mut df: HashMap<&str, usize> = HashMap::new();
    for labels in item_side {
        let mut seen: Vec<&str> = labels.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for l in seen {
            *df.entry(l).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.truncate(max_vocab);
    let vocab: Vec<String> = ranked.iter().map(|(l, _)| l.to_string()).collect();
    let index: HashMap<&str, u32> = vocab.iter().enumerate().map(|(i, l)| (l.as_str(), i as u32)).collect();
    let item_terms = item_side
        .iter()
        .map(|labels| {
            let mut terms: Vec<u32> = labels.iter().filter_map(|l| index.get(l.as_str()).copied()).collect();
            terms.sort_unstable();
            terms.dedup();
            terms
        })
        .collect();
    (vocab, item_terms)
}

/// Label counts over each user's rated items (V×n).
pub fn bag_of_words(item_terms: &[Vec<u32>], vocab_len: usize, histories: &[Vec<u32>]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(vocab_len, histories.len());
    for (u, items) in histories.iter().enumerate() {
        for &item in items {
            if let Some(terms) = item_terms.get(item as usize) {
                for &t in terms {
                    out[(t as usize, u)] += 1.0;
                }
            }
        }
    }
    out
}

/// Bag-of-words over rated items' labels, projected onto a PCA basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceEncoder {
    pub vocab: Vec<String>,
    pub item_terms: Vec<Vec<u32>>,
    pub pca: PcaBasis,
}

impl PreferenceEncoder {
    /// Fits vocabulary and PCA on `d`; returns the encoder and the
    /// normalized view of `d`'s users.
    pub fn fit(d: &Dataset, opts: &FeatureOptions) -> Result<(Self, DMatrix<f64>)> {
        let (vocab, item_terms) = build_vocabulary(&d.item_side, opts.max_vocab);
        if vocab.is_empty() {
            return Err(super::DataError::Parameter("items carry no side-information labels".into()));
        }
        let histories = d.ratings.items_by_user();
        let bow = bag_of_words(&item_terms, vocab.len(), &histories);
        let (_, pca) = pca_reduce(&bow, opts.preference_dim)?;
        let enc = Self { vocab, item_terms, pca };
        let view = enc.encode(&histories);
        Ok((enc, view))
    }

    pub fn dim(&self) -> usize {
        self.pca.dim()
    }

    /// PCA coordinates of each history's bag-of-words, unnormalized.
    pub fn project_raw(&self, histories: &[Vec<u32>]) -> DMatrix<f64> {
        self.pca.project(&bag_of_words(&self.item_terms, self.vocab.len(), histories))
    }

    /// Normalized view; users with an empty history get a zero column.
    pub fn encode(&self, histories: &[Vec<u32>]) -> DMatrix<f64> {
        let mut out = self.project_raw(histories);
        for (u, h) in histories.iter().enumerate() {
            if h.is_empty() {
                out.column_mut(u).fill(0.0);
            }
        }
        normalize_columns(&mut out);
        out
    }
}

/// Interaction-preference view of `d` reduced to `target_dim`.
pub fn encode_interaction_preference(d: &Dataset, target_dim: usize) -> Result<FeatureBlock> {
    let opts = FeatureOptions { preference_dim: target_dim, ..FeatureOptions::default() };
    let (_, view) = PreferenceEncoder::fit(d, &opts)?;
    Ok(FeatureBlock::new(1, view, EncoderTag::BagOfWordsPca))
}

/// Fitted encoder behind one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewEncoder {
    Demographic(DemographicEncoder),
    Preference(PreferenceEncoder),
    /// Externally supplied features; nothing to re-encode.
    Raw {
        dim: usize,
    },
}

impl ViewEncoder {
    pub fn dim(&self) -> usize {
        match self {
            ViewEncoder::Demographic(e) => e.dim(),
            ViewEncoder::Preference(e) => e.dim(),
            ViewEncoder::Raw { dim } => *dim,
        }
    }

    pub fn tag(&self) -> EncoderTag {
        match self {
            ViewEncoder::Demographic(_) => EncoderTag::OneHot,
            ViewEncoder::Preference(_) => EncoderTag::BagOfWordsPca,
            ViewEncoder::Raw { .. } => EncoderTag::Raw,
        }
    }
}

/// Encoders for all views, in view order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EncoderSet {
    pub views: Vec<ViewEncoder>,
}

impl EncoderSet {
    pub fn raw(dims: &[usize]) -> Self {
        Self { views: dims.iter().map(|&dim| ViewEncoder::Raw { dim }).collect() }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(ViewEncoder::dim).collect()
    }
}

/// Fits the shipped views (demographics, then interaction preference) on
/// the training users of `train`.
pub fn build_views(train: &Dataset, opts: &FeatureOptions) -> Result<(Vec<FeatureBlock>, EncoderSet)> {
    let mut blocks = Vec::new();
    let mut encoders = EncoderSet::default();
    if !train.demo_schema.is_empty() {
        let enc = DemographicEncoder::fit(&train.demo_schema, &train.user_demo, opts.min_country_users);
        if enc.dim() > 0 {
            blocks.push(FeatureBlock::new(blocks.len(), enc.encode(&train.user_demo), EncoderTag::OneHot));
            encoders.views.push(ViewEncoder::Demographic(enc));
        }
    }
    if train.item_side.iter().any(|labels| !labels.is_empty()) {
        let (enc, view) = PreferenceEncoder::fit(train, opts)?;
        blocks.push(FeatureBlock::new(blocks.len(), view, EncoderTag::BagOfWordsPca));
        encoders.views.push(ViewEncoder::Preference(enc));
    }
    if blocks.is_empty() {
        return Err(super::DataError::Parameter("dataset provides no content features".into()));
    }
    Ok((blocks, encoders))
}

/// Encodes users that were not part of encoder fitting. Without
/// `histories` the preference view is all-zero.
pub fn encode_view_columns(encoders: &EncoderSet, records: &[DemoRecord], histories: Option<&[Vec<u32>]>) -> Vec<DMatrix<f64>> {
    let n = records.len();
    encoders
        .views
        .iter()
        .map(|view| match (view, histories) {
            (ViewEncoder::Demographic(e), _) => e.encode(records),
            (ViewEncoder::Preference(e), Some(h)) => e.encode(h),
            _ => DMatrix::zeros(view.dim(), n),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Rating, RatingMatrix};
    use nalgebra::DVector;

    fn column_of(m: &DMatrix<f64>, j: usize) -> DVector<f64> {
        m.column(j).into_owned()
    }

    fn rec(pairs: &[(&str, &str)]) -> DemoRecord {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn ml_schema() -> Vec<AttributeSpec> {
        vec![
            AttributeSpec::new("gender", AttributeKind::Categorical),
            AttributeSpec::new("age", AttributeKind::Categorical),
            AttributeSpec::new("occupation", AttributeKind::Categorical),
        ]
    }

    #[test]
    fn one_hot_has_one_per_attribute() {
        let records = vec![
            rec(&[("gender", "F"), ("age", "25"), ("occupation", "4")]),
            rec(&[("gender", "M"), ("occupation", "7")]),
            rec(&[("gender", "M"), ("age", "18"), ("occupation", "4")]),
        ];
        let enc = DemographicEncoder::fit(&ml_schema(), &records, 5);
        // gender {F, M}, age {18, 25}, occupation {4, 7}
        assert_eq!(enc.dim(), 6);
        let raw = enc.encode_raw(&records);
        assert_eq!(raw.column(0).sum(), 3.0);
        // missing age: gender + occupation only
        assert_eq!(raw.column(1).sum(), 2.0);
        assert_eq!(raw.column(1).rows(2, 2).sum(), 0.0);
        let norm = enc.encode(&records);
        assert!((norm.column(0).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unseen_category_maps_to_zero_group() {
        let records = vec![rec(&[("gender", "F"), ("age", "25"), ("occupation", "4")])];
        let enc = DemographicEncoder::fit(&ml_schema(), &records, 5);
        let a = enc.encode_raw(&[rec(&[("gender", "F"), ("age", "99"), ("occupation", "4")])]);
        let b = enc.encode_raw(&[rec(&[("gender", "F"), ("age", "77"), ("occupation", "4")])]);
        assert_eq!(a, b);
        assert_eq!(a.sum(), 2.0);
    }

    #[test]
    fn bx_age_and_country_rules() {
        assert_eq!(AttributeVocab::normalize(AttributeKind::AgeDecade, "34"), Some("30-39".into()));
        assert_eq!(AttributeVocab::normalize(AttributeKind::AgeDecade, "0"), Some("0-9".into()));
        assert_eq!(AttributeVocab::normalize(AttributeKind::AgeDecade, "95"), Some("90+".into()));
        assert_eq!(AttributeVocab::normalize(AttributeKind::AgeDecade, "101"), None);
        assert_eq!(AttributeVocab::normalize(AttributeKind::AgeDecade, "NaN?"), None);
        assert_eq!(AttributeVocab::normalize(AttributeKind::CountryToken, "tyler, texas, USA "), Some("usa".into()));
        assert_eq!(AttributeVocab::normalize(AttributeKind::CountryToken, "porto, , "), None);

        let schema = vec![AttributeSpec::new("location", AttributeKind::CountryToken)];
        let mut records: Vec<DemoRecord> = (0..5).map(|_| rec(&[("location", "x, usa")])).collect();
        records.push(rec(&[("location", "y, malta")]));
        let enc = DemographicEncoder::fit(&schema, &records, 5);
        assert_eq!(enc.attributes[0].categories, vec!["other", "usa"]);
        assert_eq!(enc.attributes[0].lookup(Some(&"z, malta".to_string())), Some(0));
        assert_eq!(enc.attributes[0].lookup(Some(&"z, peru".to_string())), None);
    }

    #[test]
    fn hand_built_dictionary_encoding() {
        let records = vec![
            rec(&[("gender", "M"), ("age", "1"), ("occupation", "10")]),
            rec(&[("gender", "F"), ("age", "56"), ("occupation", "16")]),
            rec(&[("gender", "M"), ("age", "25"), ("occupation", "15")]),
            rec(&[("gender", "M"), ("age", "45"), ("occupation", "7")]),
            rec(&[("gender", "M"), ("age", "25"), ("occupation", "20")]),
        ];
        let enc = DemographicEncoder::fit(&ml_schema(), &records, 5);
        // sorted vocabularies: gender [F, M]; age [1, 25, 45, 56]; occupation [10, 15, 16, 20, 7]
        let expect_rows: [[usize; 3]; 5] = [[1, 2, 6], [0, 5, 8], [1, 3, 7], [1, 4, 10], [1, 3, 9]];
        let raw = enc.encode_raw(&records);
        assert_eq!(raw.nrows(), 11);
        for (u, ones) in expect_rows.iter().enumerate() {
            let mut expected = DVector::zeros(11);
            for &k in ones {
                expected[k] = 1.0;
            }
            assert_eq!(column_of(&raw, u), expected, "user {u}");
        }
    }

    fn toy_dataset() -> Dataset {
        let item_side = vec![
            vec!["Comedy".to_string(), "title:toy".to_string()],
            vec!["Comedy".to_string(), "Drama".to_string()],
            vec!["Drama".to_string()],
            vec!["Horror".to_string(), "title:toy".to_string()],
        ];
        let ratings = [(0, 0), (0, 1), (1, 2), (2, 0), (2, 3), (3, 1), (3, 2), (3, 3)]
            .iter()
            .map(|&(u, i)| Rating { user: u, item: i, value: 4.0, implicit: false })
            .collect();
        Dataset {
            name: "toy".into(),
            user_ids: (0..4).map(|i| i.to_string()).collect(),
            item_ids: (0..4).map(|i| i.to_string()).collect(),
            ratings: RatingMatrix::new(4, 4, ratings, (1.0, 5.0)).unwrap(),
            demo_schema: vec![],
            user_demo: vec![DemoRecord::new(); 4],
            item_side,
        }
    }

    #[test]
    fn bag_of_words_hand_count() {
        let d = toy_dataset();
        let (vocab, terms) = build_vocabulary(&d.item_side, 100);
        // document frequency: Comedy 2, Drama 2, title:toy 2, Horror 1
        assert_eq!(vocab, vec!["Comedy", "Drama", "title:toy", "Horror"]);
        let bow = bag_of_words(&terms, vocab.len(), &d.ratings.items_by_user());
        let expected = DMatrix::from_column_slice(
            4,
            4,
            &[
                2.0, 1.0, 1.0, 0.0, // user 0: items 0, 1
                0.0, 1.0, 0.0, 0.0, // user 1: item 2
                1.0, 0.0, 2.0, 1.0, // user 2: items 0, 3
                1.0, 2.0, 1.0, 1.0, // user 3: items 1, 2, 3
            ],
        );
        assert_eq!(bow, expected);

        let (enc, view) = PreferenceEncoder::fit(&d, &FeatureOptions { preference_dim: 2, ..Default::default() }).unwrap();
        let (oracle, _) = pca_reduce(&expected, 2).unwrap();
        assert!((enc.project_raw(&d.ratings.items_by_user()) - &oracle).norm() < 1e-12);
        for j in 0..4 {
            assert!((view.column(j).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_history_gives_zero_view() {
        let d = toy_dataset();
        let (views, encoders) = build_views(&d, &FeatureOptions { preference_dim: 2, ..Default::default() }).unwrap();
        assert_eq!(views.len(), 1);
        let cols = encode_view_columns(&encoders, &[DemoRecord::new()], None);
        assert_eq!(cols[0].shape(), (2, 1));
        assert_eq!(cols[0].amax(), 0.0);
        let with = encode_view_columns(&encoders, &[DemoRecord::new()], Some(&[vec![0, 1]]));
        assert!((with[0].column(0) - views[0].data.column(0)).norm() < 1e-12);
    }
}
