//! Fold pipeline with caches that survive across folds, repetitions and
//! sweep values: chunks per window geometry, spectral views per extractor,
//! and fitted front ends per training set.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::align::{embed_text, fit_alignment, normalize_text, score_projected, AlignError, SegmentEncoder, TextEmbedding};
use crate::align::segment::Document;
use crate::augment::augment;
use crate::dataset::{Dataset, Fold, Position, ACTIVITY_CLASSES};
use crate::metrics::{accuracy, macro_f1, mrr, ndcg_at_k, recall_at_k, RankedQuery};
use crate::signal::Signal;
use crate::spectral::{wavelet_l1_parts, StftParams, StftPlan};
use crate::tokenizer::{
    chunk, fit_codebook, js_divergence, time_l1_parts, token_histogram, Chunk, ChunkGrid, FeatureExtractor, FrontEnd,
    SpectralFeatures, TokenizerParams,
};
use crate::util::{derive_seed, fingerprint, fnv1a64, rng_from};

/// One (segment, position) pair that has a stream.
#[derive(Debug, Clone)]
struct Unit {
    session: usize,
    segment: usize,
    position: Position,
}

struct UnitChunks {
    grid: ChunkGrid,
    chunks: Vec<Chunk>,
    x: Signal,
    mask: Vec<bool>,
}

struct FrontEntry {
    front: FrontEnd,
    embeddings: HashMap<usize, Arc<Vec<Vec<f64>>>>,
}

/// Fingerprints of the segment ids each fitted statistic saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFingerprints {
    pub channel_stats: String,
    pub projection: String,
    pub codebook: String,
    pub idf: String,
    pub alignment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub split: String,
    pub repetition: usize,
    pub fold: usize,
    pub held_out_subject: String,
    pub seed: u64,
    pub train_fingerprint: String,
    pub test_fingerprint: String,
    pub fit_fingerprints: FitFingerprints,
    pub metrics: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, usize>,
    /// Test-time position sets handed to the segment encoder, with counts.
    pub test_presence: BTreeMap<String, usize>,
    pub notes: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

pub(crate) struct Engine<'d> {
    data: &'d Dataset,
    fs: f64,
    units: Vec<Unit>,
    unit_index: HashMap<(usize, usize, Position), usize>,
    positions: Vec<Position>,
    chunk_key: String,
    chunk_cache: Option<Arc<Vec<UnitChunks>>>,
    spectral_key: String,
    spectral_cache: Option<Arc<Vec<Vec<SpectralFeatures>>>>,
    extractor: Option<FeatureExtractor>,
    fronts: HashMap<String, FrontEntry>,
    texts: HashMap<String, Arc<TextEmbedding>>,
}

fn text_embedding(cache: &mut HashMap<String, Arc<TextEmbedding>>, text: &str, dim: usize) -> Arc<TextEmbedding> {
    let key = format!("{dim}|{}", normalize_text(text));
    cache.entry(key).or_insert_with(|| Arc::new(embed_text(text, dim))).clone()
}

fn float_key(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

impl<'d> Engine<'d> {
    pub fn new(data: &'d Dataset) -> Result<Self, HarnessError> {
        let rates: BTreeSet<u64> =
            data.sessions.iter().flat_map(|s| s.streams.iter().map(|st| st.sample_rate_hz.to_bits())).collect();
        if rates.len() != 1 {
            return Err(HarnessError::Data(format!("expected one common sample rate, found {}", rates.len())));
        }
        let fs = f64::from_bits(*rates.iter().next().expect("one rate"));
        let mut units = Vec::new();
        let mut unit_index = HashMap::new();
        for (si, session) in data.sessions.iter().enumerate() {
            for (gi, seg) in session.segments.iter().enumerate() {
                for &p in &seg.positions {
                    if session.stream(p).is_some() {
                        unit_index.insert((si, gi, p), units.len());
                        units.push(Unit { session: si, segment: gi, position: p });
                    }
                }
            }
        }
        Ok(Self {
            data,
            fs,
            units,
            unit_index,
            positions: data.positions(),
            chunk_key: String::new(),
            chunk_cache: None,
            spectral_key: String::new(),
            spectral_cache: None,
            extractor: None,
            fronts: HashMap::new(),
            texts: HashMap::new(),
        })
    }

    fn segment_id(&self, u: &Unit) -> &str {
        &self.data.sessions[u.session].segments[u.segment].id
    }

    fn unit_label(&self, u: usize) -> String {
        format!("{}/{}", self.segment_id(&self.units[u]), self.units[u].position)
    }

    fn chunks(&mut self, tp: &TokenizerParams) -> Result<Arc<Vec<UnitChunks>>, HarnessError> {
        let key = format!("{}|{}", float_key(tp.window_s), float_key(tp.overlap));
        if key != self.chunk_key || self.chunk_cache.is_none() {
            let mut out = Vec::with_capacity(self.units.len());
            for u in &self.units {
                let session = &self.data.sessions[u.session];
                let seg = &session.segments[u.segment];
                let stream = session.stream(u.position).expect("unit has a stream");
                let (grid, chunks) = chunk(stream, seg.start_s, seg.end_s, tp.window_s, tp.overlap)
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                let (x, mask) = crate::tokenizer::chunk::interval(stream, seg.start_s, seg.end_s);
                out.push(UnitChunks { grid, chunks, x, mask });
            }
            self.chunk_cache = Some(Arc::new(out));
            self.chunk_key = key;
            self.spectral_cache = None;
            self.fronts.clear();
        }
        Ok(self.chunk_cache.clone().expect("filled above"))
    }

    fn spectral(&mut self, tp: &TokenizerParams) -> Result<(FeatureExtractor, Arc<Vec<Vec<SpectralFeatures>>>), HarnessError> {
        let chunks = self.chunks(tp)?;
        let key = serde_json::to_string(&(&tp.views, &tp.stft_window, &tp.cwt, &self.chunk_key)).expect("key");
        if key != self.spectral_key || self.spectral_cache.is_none() {
            let extractor = tp.extractor(self.fs).map_err(|e| HarnessError::Config(e.to_string()))?;
            let mut all = Vec::with_capacity(chunks.len());
            for uc in chunks.iter() {
                let feats = uc
                    .chunks
                    .iter()
                    .map(|c| extractor.spectral(c))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                all.push(feats);
            }
            self.spectral_cache = Some(Arc::new(all));
            self.extractor = Some(extractor);
            self.spectral_key = key;
            self.fronts.clear();
        }
        Ok((self.extractor.clone().expect("filled above"), self.spectral_cache.clone().expect("filled above")))
    }


    fn units_of(&self, views: &[crate::dataset::SegmentView]) -> Vec<usize> {
        views
            .iter()
            .flat_map(|v| v.positions.iter().filter_map(move |&p| self.unit_index.get(&(v.session, v.segment, p)).copied()))
            .collect()
    }

    pub fn run_fold(
        &mut self,
        cfg: &ExperimentConfig,
        fold: &Fold,
        split: &str,
        repetition: usize,
        seed: u64,
    ) -> Result<FoldRecord, HarnessError> {
        let tp = &cfg.tokenizer;
        let mut warnings = Vec::new();
        let mut counts = BTreeMap::new();
        let mut metrics = BTreeMap::new();
        let mut notes = BTreeMap::new();
        let tok_err = |e: crate::tokenizer::TokenizerError| HarnessError::Config(e.to_string());

        let chunks = self.chunks(tp)?;
        let (extractor, spectral) = self.spectral(tp)?;
        let train_units = self.units_of(&fold.train);
        let test_units = self.units_of(&fold.test);
        let test_ids: BTreeSet<&str> = fold.test.iter().map(|v| v.segment_id.as_str()).collect();

        // Front end: channel statistics, view scaling and projection, fitted on training units only.
        let eligible: Vec<usize> = train_units
            .iter()
            .copied()
            .filter(|&u| chunks[u].chunks.iter().any(|c| c.missing_fraction <= tp.max_fit_missing))
            .collect();
        let fit_ids: Vec<String> = eligible.iter().map(|&u| self.segment_id(&self.units[u]).to_string()).collect();
        let fit_fp = fingerprint(&fit_ids);
        let labels: Vec<String> = train_units.iter().map(|&u| self.unit_label(u)).collect();
        let front_key = format!(
            "{}|{}|{}|{}|{}|{}",
            self.spectral_key,
            tp.d,
            tp.balance_views,
            float_key(tp.max_fit_missing),
            tp.max_projection_rows,
            fingerprint(&labels)
        );
        if !self.fronts.contains_key(&front_key) {
            let chunk_refs: Vec<&Chunk> = train_units.iter().flat_map(|&u| chunks[u].chunks.iter()).collect();
            let spec_refs: Vec<&SpectralFeatures> = train_units.iter().flat_map(|&u| spectral[u].iter()).collect();
            let front = FrontEnd::fit(tp, &extractor, &chunk_refs, &spec_refs, fnv1a64(front_key.as_bytes()))
                .map_err(tok_err)?;
            self.fronts.insert(front_key.clone(), FrontEntry { front, embeddings: HashMap::new() });
        }
        let entry = self.fronts.get_mut(&front_key).expect("inserted above");
        for &u in train_units.iter().chain(&test_units) {
            entry.embeddings.entry(u).or_insert_with(|| {
                Arc::new(
                    chunks[u].chunks.iter().zip(&spectral[u]).map(|(c, s)| entry.front.embed(&extractor, c, s)).collect(),
                )
            });
        }
        let projection = &entry.front.projection;
        notes.insert("projection".into(), format!("{} rank {}/{}", projection.method, projection.rank, tp.d));
        if projection.rank_deficient {
            warnings.push(format!("projection rank {} below d={}", projection.rank, tp.d));
        }
        let embeddings: HashMap<usize, Arc<Vec<Vec<f64>>>> =
            train_units.iter().chain(&test_units).map(|&u| (u, entry.embeddings[&u].clone())).collect();

        // Codebook on training chunks.
        let mut points = Vec::new();
        let mut fit_chunks = Vec::new();
        for &u in &train_units {
            for (c, h) in chunks[u].chunks.iter().zip(embeddings[&u].iter()) {
                if c.missing_fraction <= tp.max_fit_missing {
                    points.push(h.clone());
                    fit_chunks.push(c);
                }
            }
        }
        counts.insert("fit_chunks".into(), points.len());
        let codebook = fit_codebook(&points, &fit_chunks, tp.k, tp.max_iters, derive_seed(seed, &[1])).map_err(tok_err)?;
        notes.insert(
            "codebook".into(),
            format!(
                "{} iterations, converged {}, {} reseeded",
                codebook.fit.iterations, codebook.fit.converged, codebook.fit.reseeded
            ),
        );
        let tokens: HashMap<usize, Vec<u32>> = embeddings
            .iter()
            .map(|(&u, hs)| (u, hs.iter().map(|h| codebook.quantize(h).expect("fitted dimension")).collect()))
            .collect();

        // Representation metrics.
        let train_tokens: Vec<u32> = train_units.iter().flat_map(|u| tokens[u].iter().copied()).collect();
        let test_tokens: Vec<u32> = test_units.iter().flat_map(|u| tokens[u].iter().copied()).collect();
        counts.insert("train_chunks".into(), train_tokens.len());
        counts.insert("test_chunks".into(), test_tokens.len());
        if train_tokens.is_empty() || test_tokens.is_empty() {
            warnings.push("no test chunks; token divergence skipped".into());
        } else {
            let p = token_histogram(&train_tokens, tp.k).map_err(tok_err)?;
            let q = token_histogram(&test_tokens, tp.k).map_err(tok_err)?;
            metrics.insert("js".into(), js_divergence(&p, &q).map_err(tok_err)?);
        }
        let stft_params = tp.metric_stft(self.fs).map_err(tok_err)?;
        let stft_plan = StftPlan::new(StftParams { ..stft_params }).map_err(|e| HarnessError::Config(e.to_string()))?;
        let scales = tp.metric_scales(self.fs);
        let (mut t_sum, mut t_n, mut s_sum, mut s_n, mut w_sum, mut w_n) = (0.0, 0usize, 0.0, 0usize, 0.0, 0usize);
        for &u in &test_units {
            let uc = &chunks[u];
            if uc.grid.count() == 0 {
                continue;
            }
            let x_hat = codebook.decode(&tokens[&u], &uc.grid).map_err(tok_err)?;
            let (a, b) = time_l1_parts(&uc.x, &x_hat, Some(&uc.mask)).map_err(tok_err)?;
            t_sum += a;
            t_n += b;
            let (a, b) = crate::spectral::spectral_l1_parts(&uc.x, &x_hat, &stft_plan)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            s_sum += a;
            s_n += b;
            let (a, b) = wavelet_l1_parts(&uc.x, &x_hat, &scales, tp.cwt.wavelet)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            w_sum += a;
            w_n += b;
        }
        let fitted: usize = codebook.usage.iter().sum();
        let distortion = codebook.fit.final_distortion / fitted.max(1) as f64;
        metrics.insert("distortion".into(), distortion);
        if t_n > 0 {
            let (time, spec, wav) = (t_sum / t_n as f64, s_sum / s_n.max(1) as f64, w_sum / w_n.max(1) as f64);
            metrics.insert("time_l1".into(), time);
            metrics.insert("spectral_l1".into(), spec);
            metrics.insert("wavelet_l1".into(), wav);
            metrics.insert(
                "tokenizer_loss".into(),
                time + (1.0 + tp.beta) * distortion + tp.lambda_stft * spec + tp.lambda_wav * wav,
            );
        } else {
            warnings.push("no reconstructable test samples; reconstruction metrics skipped".into());
        }

        // Alignment: idf statistics and ridge map from training segments only.
        let source = cfg.retrieval.description_source;
        let text_dim = cfg.alignment.text_dim;
        let docs: Vec<Document<'_>> = train_units
            .iter()
            .map(|&u| Document { segment_id: self.segment_id(&self.units[u]), tokens: &tokens[&u] })
            .collect();
        let encoder = SegmentEncoder::fit(&docs, tp.k, &self.positions, cfg.alignment.segment.clone());
        let idf_fp = encoder.fingerprint.clone();
        drop(docs);

        let unit_index = &self.unit_index;
        let seqs_of = |view: &crate::dataset::SegmentView| -> Vec<(Position, &[u32])> {
            view.positions
                .iter()
                .filter_map(|&p| unit_index.get(&(view.session, view.segment, p)).map(|u| (p, tokens[u].as_slice())))
                .collect()
        };
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let mut pair_ids: Vec<String> = Vec::new();
        let mut skipped_train = 0;
        let mut fallbacks = 0;
        for (i, view) in fold.train.iter().enumerate() {
            let seg = &self.data.sessions[view.session].segments[view.segment];
            let Some(text) = seg.description(source) else {
                skipped_train += 1;
                continue;
            };
            let seqs = seqs_of(view);
            let u = match encoder.encode(&seqs, seg.duration_s()) {
                Ok(u) => u,
                Err(AlignError::EmptySegment) => {
                    skipped_train += 1;
                    continue;
                }
                Err(e) => return Err(HarnessError::Config(e.to_string())),
            };
            let v = text_embedding(&mut self.texts, text, text_dim).values.clone();
            inputs.push(u);
            targets.push(v.clone());
            pair_ids.push(seg.id.clone());
            if cfg.alignment.single_position_pairs && seqs.len() > 1 {
                for one in &seqs {
                    if let Ok(u) = encoder.encode(std::slice::from_ref(one), seg.duration_s()) {
                        inputs.push(u);
                        targets.push(v.clone());
                    }
                }
            }
            if cfg.augment.enabled {
                for copy in 0..cfg.augment.copies {
                    let augmented: Vec<(Position, Vec<u32>)> = seqs
                        .iter()
                        .map(|(p, t)| {
                            let s = derive_seed(seed, &[2, i as u64, copy as u64, p.index() as u64]);
                            let out = augment(t, &cfg.augment, tp.k, s);
                            fallbacks += usize::from(out.uniform_fallback);
                            (*p, out.tokens)
                        })
                        .collect();
                    let refs: Vec<(Position, &[u32])> = augmented.iter().map(|(p, t)| (*p, t.as_slice())).collect();
                    if let Ok(u) = encoder.encode(&refs, seg.duration_s()) {
                        inputs.push(u);
                        targets.push(v.clone());
                    }
                }
            }
        }
        counts.insert("train_pairs".into(), inputs.len());
        counts.insert("skipped_train_segments".into(), skipped_train);
        if fallbacks > 0 {
            warnings.push(format!("{fallbacks} augmentation inserts fell back to uniform draws"));
        }
        if inputs.is_empty() {
            return Err(HarnessError::Data("no training segment has both tokens and a description".into()));
        }
        let pair_refs: Vec<&str> = pair_ids.iter().map(String::as_str).collect();
        let map = fit_alignment(&inputs, &targets, cfg.alignment.lambda, &pair_refs)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if map.rank_deficient {
            warnings.push("alignment design is rank deficient; minimum-norm solution used".into());
        }

        // Retrieval and closed-set classification on the held-out subject.
        let mut universe: BTreeMap<String, (String, BTreeSet<String>)> = BTreeMap::new();
        for (_, seg) in self.data.segments() {
            if let Some(text) = seg.description(source) {
                let e = universe.entry(normalize_text(text)).or_insert_with(|| (text.to_string(), BTreeSet::new()));
                if let Some(c) = &seg.hard_class {
                    e.1.insert(c.clone());
                }
            }
        }
        let keys: Vec<&String> = universe.keys().collect();
        let class_texts: Vec<Arc<TextEmbedding>> = ACTIVITY_CLASSES.iter().map(|c| text_embedding(&mut self.texts, c, text_dim)).collect();
        let mut queries = Vec::new();
        let mut preds = Vec::new();
        let mut golds = Vec::new();
        let mut presence: BTreeMap<String, usize> = BTreeMap::new();
        let mut skipped = 0;
        let mut min_pool = usize::MAX;
        for (qi, view) in fold.test.iter().enumerate() {
            let seg = &self.data.sessions[view.session].segments[view.segment];
            let Some(text) = seg.description(source) else {
                skipped += 1;
                continue;
            };
            let seqs = seqs_of(view);
            let u = match encoder.encode(&seqs, seg.duration_s()) {
                Ok(u) => u,
                Err(AlignError::EmptySegment) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(HarnessError::Config(e.to_string())),
            };
            let label = seqs.iter().map(|(p, _)| p.as_str()).collect::<Vec<_>>().join("+");
            *presence.entry(label).or_default() += 1;
            let wx = map.apply(&u).map_err(|e| HarnessError::Config(e.to_string()))?;

            let gold_key = normalize_text(text);
            let others: Vec<&String> = keys.iter().copied().filter(|k| **k != gold_key).collect();
            let mut rng = rng_from(derive_seed(seed, &[3, qi as u64]));
            let take = (cfg.retrieval.pool_size - 1).min(others.len());
            let mut pool: Vec<&String> = rand::seq::index::sample(&mut rng, others.len(), take)
                .into_iter()
                .map(|i| others[i])
                .collect();
            pool.push(&gold_key);
            pool.shuffle(&mut rng);
            min_pool = min_pool.min(pool.len());
            let gold_class = seg.hard_class.clone();
            let mut scores = Vec::with_capacity(pool.len());
            let mut grades = Vec::with_capacity(pool.len());
            for key in &pool {
                let (raw, classes) = &universe[*key];
                let emb = text_embedding(&mut self.texts, raw, text_dim);
                scores.push(score_projected(&wx, &emb.values).value);
                grades.push(if **key == gold_key {
                    2
                } else if gold_class.as_ref().is_some_and(|c| classes.contains(c)) {
                    1
                } else {
                    0
                });
            }
            let ranking = crate::align::rank_scores(&scores).into_iter().map(|r| r.index).collect();
            queries.push(RankedQuery { ranking, grades });

            if let Some(gold) = gold_class {
                let class_scores: Vec<f64> = class_texts.iter().map(|t| score_projected(&wx, &t.values).value).collect();
                let best = crate::align::rank_scores(&class_scores)[0].index;
                preds.push(ACTIVITY_CLASSES[best].to_string());
                golds.push(gold);
            }
        }
        counts.insert("queries".into(), queries.len());
        counts.insert("skipped_queries".into(), skipped);
        if skipped > 0 {
            warnings.push(format!("{skipped} test segments without tokens or description skipped"));
        }
        if !queries.is_empty() {
            counts.insert("pool_size".into(), min_pool);
            if min_pool < cfg.retrieval.pool_size {
                warnings.push(format!(
                    "only {} distinct descriptions available; pool size {min_pool} instead of {}",
                    keys.len(),
                    cfg.retrieval.pool_size
                ));
            }
            let metric = |r: Result<crate::metrics::MetricValue, crate::metrics::MetricError>,
                          warnings: &mut Vec<String>| match r {
                Ok(m) => {
                    warnings.extend(m.warnings);
                    Some(m.value)
                }
                Err(e) => {
                    warnings.push(e.to_string());
                    None
                }
            };
            let values = [
                ("r@1", metric(recall_at_k(&queries, 1), &mut warnings)),
                ("r@5", metric(recall_at_k(&queries, 5), &mut warnings)),
                ("mrr", metric(mrr(&queries), &mut warnings)),
                ("ndcg@5", metric(ndcg_at_k(&queries, 5), &mut warnings)),
            ];
            for (name, v) in values {
                if let Some(v) = v {
                    metrics.insert(name.into(), v);
                }
            }
        }
        if !preds.is_empty() {
            let classes: Vec<String> = ACTIVITY_CLASSES.iter().map(|c| c.to_string()).collect();
            metrics.insert("accuracy".into(), accuracy(&preds, &golds).expect("non-empty").value);
            match macro_f1(&preds, &golds, &classes) {
                Ok(m) => {
                    metrics.insert("macro_f1".into(), m.value);
                }
                Err(e) => warnings.push(e.to_string()),
            }
        }

        let fit_fingerprints = FitFingerprints {
            channel_stats: fit_fp.clone(),
            projection: fit_fp.clone(),
            codebook: fit_fp,
            idf: idf_fp,
            alignment: map.fingerprint.clone(),
        };
        let fitted_ids: BTreeSet<&str> = fit_ids.iter().map(String::as_str).chain(pair_refs.iter().copied()).collect();
        if let Some(leak) = fitted_ids.intersection(&test_ids).next() {
            return Err(HarnessError::Leakage(format!("test segment {leak} reached a fitted statistic")));
        }
        Ok(FoldRecord {
            split: split.to_string(),
            repetition,
            fold: fold.index,
            held_out_subject: fold.held_out_subject.clone(),
            seed,
            train_fingerprint: fold.train_fingerprint(),
            test_fingerprint: fold.test_fingerprint(),
            fit_fingerprints,
            metrics,
            counts,
            test_presence: presence,
            notes,
            warnings,
        })
    }
}
