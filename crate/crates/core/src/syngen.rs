//! Synthetic query logs with planted per-intent behavior and ground truth.
//!
//! Every query carries an intent drawn from the configured mix. Its text,
//! clicks, snippets, dwell times and ad impressions are then drawn from that
//! intent's profile, so the whole pipeline can be checked against known
//! answers.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{IntentLabel, ALL_INTENTS};
use crate::log::{ClickEvent, QueryRecord};

#[derive(Debug, Error, PartialEq)]
pub enum SyngenError {
    #[error("invalid intent mix: {0}")]
    Mix(String),
    #[error("invalid profile for {intent}: {message}")]
    Profile { intent: IntentLabel, message: String },
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("truth file line {line}: {message}")]
    Truth { line: usize, message: String },
}

/// Behavior of queries with one intent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntentProfile {
    /// Relative weights of 0, 1, 2, ... clicks.
    pub click_weights: Vec<f64>,
    /// Most distinct domains among one query's clicks.
    pub domain_cap: usize,
    /// Inclusive range of background tokens added to the query.
    pub extra_tokens: (usize, usize),
    /// Chance the query contains one of the intent's cue words.
    pub cue_rate: f64,
    /// Chance a product query names its category.
    pub category_rate: f64,
    pub cue_words: Vec<String>,
    pub url_words: Vec<String>,
    pub snippet_words: Vec<String>,
    /// Inclusive snippet length range in words.
    pub snippet_len: (usize, usize),
    pub domains: Vec<String>,
    /// Median dwell seconds per click and the log-scale spread.
    pub dwell_median: f64,
    pub dwell_sigma: f64,
    pub ads_rate: f64,
}

impl Default for IntentProfile {
    fn default() -> Self {
        default_profile(IntentLabel::Transactional)
    }
}

impl IntentProfile {
    pub fn mean_clicks(&self) -> f64 {
        let total: f64 = self.click_weights.iter().sum();
        self.click_weights.iter().enumerate().map(|(i, w)| i as f64 * w).sum::<f64>() / total
    }

    fn validate(&self, intent: IntentLabel) -> Result<(), SyngenError> {
        let bad = |message: &str| Err(SyngenError::Profile { intent, message: message.to_string() });
        if self.click_weights.is_empty()
            || self.click_weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || self.click_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("click_weights must be non-negative with a positive sum");
        }
        if self.domain_cap == 0 {
            return bad("domain_cap must be at least 1");
        }
        for (name, r) in [("cue_rate", self.cue_rate), ("category_rate", self.category_rate), ("ads_rate", self.ads_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(&format!("{name} must be in [0, 1]"));
            }
        }
        if self.extra_tokens.0 > self.extra_tokens.1 || self.snippet_len.0 > self.snippet_len.1 {
            return bad("ranges must have min <= max");
        }
        if self.cue_words.is_empty() || self.url_words.is_empty() || self.snippet_words.is_empty() || self.domains.is_empty() {
            return bad("word and domain pools must be non-empty");
        }
        if !(self.dwell_median > 0.0 && self.dwell_sigma > 0.0 && self.dwell_median.is_finite() && self.dwell_sigma.is_finite()) {
            return bad("dwell_median and dwell_sigma must be positive");
        }
        Ok(())
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

/// Built-in profiles following the qualitative patterns of product search:
/// transactional queries mostly get one click, navigational ones are short and
/// touch at most two sites, comparisons spread over many domains.
pub fn default_profile(intent: IntentLabel) -> IntentProfile {
    use IntentLabel::*;
    match intent {
        Comparison => IntentProfile {
            click_weights: vec![0.03, 0.1, 0.2, 0.27, 0.22, 0.18],
            domain_cap: 5,
            extra_tokens: (1, 3),
            cue_rate: 0.9,
            category_rate: 0.5,
            cue_words: words("vs versus compare comparison best top review reviews alternatives better difference rated ranking"),
            url_words: words("review vs best comparison ranking roundup rated"),
            snippet_words: words("compared tested ranked winner pros cons verdict rating performance value battery"),
            snippet_len: (8, 16),
            domains: words("rtings.com cnet.com consumerreports.org wirecutter.com pcmag.com tomsguide.com versus.com techradar.com"),
            dwell_median: 30.0,
            dwell_sigma: 0.6,
            ads_rate: 0.6,
        },
        Informational => IntentProfile {
            click_weights: vec![0.06, 0.34, 0.34, 0.18, 0.08],
            domain_cap: 3,
            extra_tokens: (1, 3),
            cue_rate: 0.85,
            category_rate: 0.5,
            cue_words: words("what specs specifications dimensions weight history how does release date features size meaning"),
            url_words: words("wiki specs article facts overview history"),
            snippet_words: words("released introduced weighs measures designed originally announced generation specification model series"),
            snippet_len: (14, 24),
            domains: words("wikipedia.org gsmarena.com britannica.com howstuffworks.com specsheet.net"),
            dwell_median: 45.0,
            dwell_sigma: 0.6,
            ads_rate: 0.35,
        },
        Navigational => IntentProfile {
            click_weights: vec![0.03, 0.82, 0.15],
            domain_cap: 2,
            extra_tokens: (0, 0),
            cue_rate: 0.6,
            category_rate: 0.1,
            cue_words: words("official site website login store account homepage locator"),
            url_words: words("store home account signin"),
            snippet_words: words("official welcome shop sign explore discover"),
            snippet_len: (3, 7),
            domains: words("apple.com samsung.com nike.com ikea.com dell.com sony.com lego.com bose.com"),
            dwell_median: 15.0,
            dwell_sigma: 0.6,
            ads_rate: 0.5,
        },
        Support => IntentProfile {
            click_weights: vec![0.06, 0.3, 0.32, 0.2, 0.12],
            domain_cap: 4,
            extra_tokens: (1, 3),
            cue_rate: 0.9,
            category_rate: 0.5,
            cue_words: words("fix repair broken troubleshoot reset manual warranty error replace stuck update charging"),
            url_words: words("support troubleshooting manual repair help forum"),
            snippet_words: words("steps solution problem issue restart settings firmware replace contact technician"),
            snippet_len: (12, 22),
            domains: words("ifixit.com manualslib.com reddit.com answers.microsoft.com youtube.com support.apple.com"),
            dwell_median: 60.0,
            dwell_sigma: 0.6,
            ads_rate: 0.2,
        },
        Transactional => IntentProfile {
            click_weights: vec![0.04, 0.84, 0.1, 0.02],
            domain_cap: 2,
            extra_tokens: (1, 2),
            cue_rate: 0.85,
            category_rate: 0.5,
            cue_words: words("buy price cheap deal deals sale discount order coupon shipping cheapest purchase"),
            url_words: words("dp product item cart checkout offer"),
            snippet_words: words("free shipping stock add cart save off delivery returns"),
            snippet_len: (5, 10),
            domains: words("amazon.com walmart.com bestbuy.com target.com ebay.com newegg.com costco.com"),
            dwell_median: 40.0,
            dwell_sigma: 0.6,
            ads_rate: 0.8,
        },
        NotProduct => IntentProfile {
            click_weights: vec![0.15, 0.55, 0.2, 0.1],
            domain_cap: 3,
            extra_tokens: (0, 2),
            cue_rate: 0.25,
            category_rate: 0.0,
            cue_words: words("how what when where who near"),
            url_words: words("news story article page forecast results"),
            snippet_words: words("today latest report local update season city people"),
            snippet_len: (6, 16),
            domains: words("weather.com espn.com cnn.com allrecipes.com imdb.com indeed.com nytimes.com wikipedia.org"),
            dwell_median: 30.0,
            dwell_sigma: 0.8,
            ads_rate: 0.003,
        },
    }
}

fn default_catalog() -> Vec<(String, String)> {
    [
        ("iphone", "cell phones"),
        ("galaxy", "phones"),
        ("pixel", "phones"),
        ("macbook", "laptops"),
        ("thinkpad", "laptops"),
        ("chromebook", "computers"),
        ("printer", "computers"),
        ("monitor", "computers"),
        ("airpods", "headphones"),
        ("earbuds", "headphones"),
        ("nikon", "cameras"),
        ("gopro", "cameras"),
        ("oled", "tv"),
        ("roku", "electronics"),
        ("kindle", "electronics"),
        ("novel", "books"),
        ("cookbook", "books"),
        ("sneakers", "shoes"),
        ("boots", "shoes"),
        ("jacket", "clothing"),
        ("jeans", "clothing"),
        ("blender", "kitchen"),
        ("airfryer", "appliances"),
        ("dishwasher", "appliances"),
        ("drill", "tools"),
        ("lawnmower", "garden"),
        ("sofa", "furniture"),
        ("mattress", "furniture"),
        ("lego", "toys"),
        ("barbie", "toys"),
        ("xbox", "video games"),
        ("nintendo", "video games"),
        ("rolex", "watches"),
        ("fitbit", "watches"),
        ("stroller", "baby"),
        ("lipstick", "beauty"),
        ("guitar", "musical instruments"),
        ("suitcase", "luggage"),
        ("tent", "outdoors"),
        ("treadmill", "sports"),
        ("necklace", "jewelry"),
        ("kibble", "pet supplies"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect()
}

fn default_non_product() -> Vec<String> {
    words(
        "weather forecast recipe lyrics news score stock flight hotel jobs traffic election horoscope translate \
         calculator maps bank college obituary population capital timezone nba nfl chicken pasta soup salary \
         chicago seattle boston paris london texas holiday museum library marathon tax visa poem",
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_sessions: usize,
    /// When set, sessions are generated until exactly this many queries exist
    /// and `n_sessions` is ignored.
    pub n_queries: Option<usize>,
    pub intent_mix: BTreeMap<IntentLabel, f64>,
    pub profiles: BTreeMap<IntentLabel, IntentProfile>,
    /// Chance that each further query in a session continues the previous
    /// intent (comparisons continue as purchases) instead of a fresh draw.
    pub stickiness: f64,
    /// Geometric continuation probability for session length.
    pub session_continue: f64,
    pub max_session_len: usize,
    pub catalog: Vec<(String, String)>,
    pub background: Vec<String>,
    pub non_product_words: Vec<String>,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        use IntentLabel::*;
        let mix = [
            (NotProduct, 0.85),
            (Transactional, 0.0525),
            (Informational, 0.033),
            (Comparison, 0.027),
            (Support, 0.0195),
            (Navigational, 0.018),
        ];
        Self {
            n_sessions: 1000,
            n_queries: None,
            intent_mix: mix.into_iter().collect(),
            profiles: ALL_INTENTS.iter().map(|&l| (l, default_profile(l))).collect(),
            stickiness: 0.3,
            session_continue: 0.55,
            max_session_len: 8,
            catalog: default_catalog(),
            background: words("new black white pro mini max for with the my 2019 2020 large small wireless"),
            non_product_words: default_non_product(),
            seed: 7,
        }
    }
}

impl GeneratorConfig {
    /// Only product intents, in the default proportions.
    pub fn product_only(mut self) -> Self {
        self.intent_mix.remove(&IntentLabel::NotProduct);
        let total: f64 = self.intent_mix.values().sum();
        self.intent_mix.values_mut().for_each(|v| *v /= total);
        self
    }

    pub fn validate(&self) -> Result<(), SyngenError> {
        if self.intent_mix.values().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(SyngenError::Mix("probabilities must be finite and non-negative".into()));
        }
        let total: f64 = self.intent_mix.values().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(SyngenError::Mix(format!("probabilities sum to {total}, not 1")));
        }
        for (&l, &p) in &self.intent_mix {
            if p > 0.0 {
                self.profiles
                    .get(&l)
                    .ok_or_else(|| SyngenError::Profile { intent: l, message: "missing profile".into() })?
                    .validate(l)?;
            }
        }
        if !(0.0..=1.0).contains(&self.stickiness) || !(0.0..1.0).contains(&self.session_continue) {
            return Err(SyngenError::Config("stickiness must be in [0, 1] and session_continue in [0, 1)".into()));
        }
        if self.max_session_len == 0 {
            return Err(SyngenError::Config("max_session_len must be at least 1".into()));
        }
        if self.catalog.is_empty() || self.background.is_empty() || self.non_product_words.is_empty() {
            return Err(SyngenError::Config("catalog and word pools must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLog {
    pub records: Vec<QueryRecord>,
    /// Planted intent of every record, in record order.
    pub truth: Vec<(String, IntentLabel)>,
}

impl SyntheticLog {
    pub fn truth_map(&self) -> BTreeMap<String, IntentLabel> {
        self.truth.iter().cloned().collect()
    }

    pub fn write_truth<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (q, l) in &self.truth {
            writeln!(w, "{q}\t{l}")?;
        }
        Ok(())
    }
}

/// Parses `query_id<TAB>label` lines; blank lines are skipped.
pub fn parse_truth(text: &str) -> Result<BTreeMap<String, IntentLabel>, SyngenError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| SyngenError::Truth { line: i + 1, message };
        let (q, l) = line.split_once('\t').ok_or_else(|| err("expected query_id<TAB>label".into()))?;
        let label = l.trim().parse::<IntentLabel>().map_err(|e| err(e.to_string()))?;
        out.insert(q.to_string(), label);
    }
    Ok(out)
}

struct Generator<'a> {
    cfg: &'a GeneratorConfig,
    rng: ChaCha8Rng,
    intents: Vec<IntentLabel>,
    mix: WeightedIndex<f64>,
    clicks: BTreeMap<IntentLabel, WeightedIndex<f64>>,
}

fn slug(s: &str) -> String {
    s.replace(' ', "-")
}

impl Generator<'_> {
    fn pick<'b>(&mut self, pool: &'b [String]) -> &'b str {
        pool.choose(&mut self.rng).map(String::as_str).unwrap_or_default()
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    fn draw_intent(&mut self) -> IntentLabel {
        self.intents[self.mix.sample(&mut self.rng)]
    }

    fn next_intent(&mut self, prev: IntentLabel) -> IntentLabel {
        if self.chance(self.cfg.stickiness) {
            let follow = if prev == IntentLabel::Comparison { IntentLabel::Transactional } else { prev };
            if self.cfg.intent_mix.get(&follow).is_some_and(|&p| p > 0.0) {
                return follow;
            }
        }
        self.draw_intent()
    }

    fn record(&mut self, intent: IntentLabel, query_id: String, session_id: String, at: DateTime<Utc>) -> QueryRecord {
        let cfg = self.cfg;
        let p = &cfg.profiles[&intent];
        let product = intent.is_product();
        let (noun, category) = if product {
            let (n, c) = cfg.catalog.choose(&mut self.rng).expect("catalog validated");
            (n.as_str(), c.as_str())
        } else {
            (self.pick(&cfg.non_product_words), "")
        };
        let brand_domain = if intent == IntentLabel::Navigational { self.pick(&p.domains).to_string() } else { String::new() };
        let brand = brand_domain.split('.').next().unwrap_or_default().to_string();

        let mut tokens: Vec<String> = Vec::new();
        if self.chance(p.cue_rate) {
            tokens.push(self.pick(&p.cue_words).to_string());
        }
        if intent == IntentLabel::Navigational {
            tokens.push(brand.clone());
            if self.chance(0.3) {
                tokens.push(noun.to_string());
            }
        } else {
            tokens.push(noun.to_string());
            if !product {
                tokens.push(self.pick(&cfg.non_product_words).to_string());
            }
        }
        let extra = self.rng.random_range(p.extra_tokens.0..=p.extra_tokens.1);
        for _ in 0..extra {
            tokens.push(self.pick(&cfg.background).to_string());
        }
        tokens.shuffle(&mut self.rng);
        if product && self.chance(p.category_rate) {
            tokens.push(category.to_string());
        }

        let n_clicks = self.clicks[&intent].sample(&mut self.rng);
        let mut sites: Vec<String> = if intent == IntentLabel::Navigational {
            vec![brand_domain.clone()]
        } else {
            Vec::new()
        };
        let mut shuffled = p.domains.clone();
        shuffled.shuffle(&mut self.rng);
        for d in shuffled {
            if sites.len() >= p.domain_cap.min(n_clicks.max(1)) {
                break;
            }
            if !sites.contains(&d) {
                sites.push(d);
            }
        }
        let dwell = LogNormal::new(p.dwell_median.ln(), p.dwell_sigma).expect("profile validated");
        let mut clicks = Vec::with_capacity(n_clicks);
        for order in 1..=n_clicks {
            let site = if order <= sites.len() { sites[order - 1].clone() } else { self.pick(&sites).to_string() };
            let url_word = self.pick(&p.url_words).to_string();
            let id: u32 = self.rng.random_range(100..1000);
            let url = if product {
                format!("https://www.{site}/{}/{}-{url_word}-{id}", slug(category), slug(noun))
            } else {
                format!("https://www.{site}/{url_word}/{noun}-{id}")
            };
            let len = self.rng.random_range(p.snippet_len.0..=p.snippet_len.1);
            let mut snippet: Vec<&str> = vec![noun];
            while snippet.len() < len {
                let pool = if self.chance(0.7) { &p.snippet_words } else { &cfg.background };
                snippet.push(self.pick(pool));
            }
            let secs = (dwell.sample(&mut self.rng) * 10.0).round() / 10.0;
            clicks.push(ClickEvent { url, snippet: snippet.join(" "), dwell_seconds: secs, order: order as u32 });
        }

        let ads_shown = if self.chance(p.ads_rate) { self.rng.random_range(1..=4) } else { 0 };
        QueryRecord { query_id, session_id, timestamp: at, query: tokens.join(" "), ads_shown, clicks }
    }
}

/// Generates a log and its truth table. Identical configs give identical output.
pub fn generate(cfg: &GeneratorConfig) -> Result<SyntheticLog, SyngenError> {
    cfg.validate()?;
    let intents: Vec<IntentLabel> = cfg.intent_mix.iter().filter(|(_, &p)| p > 0.0).map(|(&l, _)| l).collect();
    let weights: Vec<f64> = intents.iter().map(|l| cfg.intent_mix[l]).collect();
    let mix = WeightedIndex::new(&weights).map_err(|e| SyngenError::Mix(e.to_string()))?;
    let clicks = intents
        .iter()
        .map(|&l| {
            let w = WeightedIndex::new(&cfg.profiles[&l].click_weights).expect("profile validated");
            (l, w)
        })
        .collect();
    let mut g = Generator { cfg, rng: ChaCha8Rng::seed_from_u64(cfg.seed), intents, mix, clicks };

    let start = Utc.with_ymd_and_hms(2019, 9, 1, 0, 0, 0).unwrap();
    let mut records = Vec::new();
    let mut truth = Vec::new();
    let mut session = 0usize;
    loop {
        match cfg.n_queries {
            Some(q) if records.len() >= q => break,
            None if session >= cfg.n_sessions => break,
            _ => {}
        }
        let session_id = format!("s{session:06}");
        let mut at = start + Duration::seconds(session as i64 * 97 + g.rng.random_range(0..60));
        let mut len = 1;
        while len < cfg.max_session_len && g.chance(cfg.session_continue) {
            len += 1;
        }
        let mut intent = g.draw_intent();
        for i in 0..len {
            if cfg.n_queries.is_some_and(|q| records.len() >= q) {
                break;
            }
            if i > 0 {
                intent = g.next_intent(intent);
                at += Duration::seconds(g.rng.random_range(5..300));
            }
            let query_id = format!("q{:07}", records.len());
            let r = g.record(intent, query_id.clone(), session_id.clone(), at);
            records.push(r);
            truth.push((query_id, intent));
        }
        session += 1;
    }
    Ok(SyntheticLog { records, truth })
}

/// Distinct click domains per record, for checking the domain caps.
pub fn domain_counts(records: &[QueryRecord]) -> Vec<usize> {
    records
        .iter()
        .map(|r| r.clicks.iter().map(|c| crate::text::extract_domain(&c.url)).collect::<BTreeSet<_>>().len())
        .collect()
}
