//! Fixed-lag Rao-Blackwellized particle filter over session assignments.
//!
//! Each particle holds a hard assignment `(concept, region)` for every
//! session seen so far. All mixture parameters are integrated out: words,
//! objects, regions-given-concept and concepts use Dirichlet-multinomial
//! predictives, positions use the NIW Student-t predictive. When session
//! `t` arrives, every particle is reweighted by the collapsed predictive
//! likelihood of that session, draws its assignment, and then re-samples
//! the assignments of the last `lag_window` sessions by one collapsed Gibbs
//! sweep. Systematic resampling triggers when the effective sample size
//! drops below half the particle count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gaussian::{NiwPosterior, NiwStats, Vec2};
use super::{Concept, Hyperparameters, Region, Session, SpatialConceptModel, SpatialError};

struct Observation {
    position: Vec2,
    words: Vec<usize>,
    objects: Vec<usize>,
}

#[derive(Clone)]
struct Particle {
    concept_of: Vec<usize>,
    region_of: Vec<usize>,
    concept_n: Vec<u32>,
    concept_region: Vec<Vec<u32>>,
    concept_words: Vec<Vec<u32>>,
    concept_word_total: Vec<u32>,
    concept_objects: Vec<Vec<u32>>,
    concept_object_total: Vec<u32>,
    regions: Vec<NiwStats>,
    log_weight: f64,
}

impl Particle {
    fn new(k: usize, r: usize, n_words: usize, n_objects: usize) -> Self {
        Particle {
            concept_of: Vec::new(),
            region_of: Vec::new(),
            concept_n: vec![0; k],
            concept_region: vec![vec![0; r]; k],
            concept_words: vec![vec![0; n_words]; k],
            concept_word_total: vec![0; k],
            concept_objects: vec![vec![0; n_objects]; k],
            concept_object_total: vec![0; k],
            regions: vec![NiwStats::default(); r],
            log_weight: 0.0,
        }
    }

    fn add(&mut self, obs: &Observation, c: usize, r: usize) {
        self.concept_n[c] += 1;
        self.concept_region[c][r] += 1;
        for &w in &obs.words {
            self.concept_words[c][w] += 1;
        }
        self.concept_word_total[c] += obs.words.len() as u32;
        for &o in &obs.objects {
            self.concept_objects[c][o] += 1;
        }
        self.concept_object_total[c] += obs.objects.len() as u32;
        self.regions[r].add(obs.position);
    }

    fn remove(&mut self, obs: &Observation, c: usize, r: usize) {
        self.concept_n[c] -= 1;
        self.concept_region[c][r] -= 1;
        for &w in &obs.words {
            self.concept_words[c][w] -= 1;
        }
        self.concept_word_total[c] -= obs.words.len() as u32;
        for &o in &obs.objects {
            self.concept_objects[c][o] -= 1;
        }
        self.concept_object_total[c] -= obs.objects.len() as u32;
        self.regions[r].remove(obs.position);
    }
}

/// Log of the Dirichlet-multinomial predictive of a token sequence, added
/// one token at a time so repeated tokens condition on each other.
fn sequence_log_predictive(tokens: &[usize], counts: &[u32], total: u32, conc: f64) -> f64 {
    let vocab = counts.len() as f64;
    let mut ll = 0.0;
    for (j, &v) in tokens.iter().enumerate() {
        let seen = tokens[..j].iter().filter(|&&u| u == v).count() as f64;
        ll += (counts[v] as f64 + conc + seen).ln() - (total as f64 + vocab * conc + j as f64).ln();
    }
    ll
}

struct Learner<'a> {
    hp: &'a Hyperparameters,
    obs: Vec<Observation>,
    n_words: usize,
    n_objects: usize,
}

impl Learner<'_> {
    fn region_posterior(&self, stats: &NiwStats) -> NiwPosterior {
        NiwPosterior::new(self.hp.m0, self.hp.kappa, self.hp.nu0, &self.hp.v0, stats)
    }

    /// Joint log scores over `(c, r)` for observation `t`, laid out as
    /// `c * R + r`. The particle must not currently count `t`.
    fn scores(&self, p: &Particle, t: usize) -> Vec<f64> {
        let hp = self.hp;
        let k = hp.num_concepts;
        let r = hp.num_regions;
        let obs = &self.obs[t];
        let n_assigned: u32 = p.concept_n.iter().sum();
        let log_norm = (n_assigned as f64 + k as f64 * hp.alpha).ln();
        let pos_ll: Vec<f64> = p
            .regions
            .iter()
            .map(|s| self.region_posterior(s).predictive_log_density(obs.position))
            .collect();
        let mut out = Vec::with_capacity(k * r);
        for c in 0..k {
            let nc = p.concept_n[c] as f64;
            let base = (nc + hp.alpha).ln() - log_norm
                + sequence_log_predictive(&obs.words, &p.concept_words[c], p.concept_word_total[c], hp.beta)
                + sequence_log_predictive(
                    &obs.objects,
                    &p.concept_objects[c],
                    p.concept_object_total[c],
                    hp.chi,
                );
            let region_norm = (nc + r as f64 * hp.gamma).ln();
            for (ri, pll) in pos_ll.iter().enumerate() {
                let region_term = (p.concept_region[c][ri] as f64 + hp.gamma).ln() - region_norm;
                out.push(base + region_term + pll);
            }
        }
        out
    }

    fn posterior_model(&self, p: &Particle, vocab_places: Vec<String>, vocab_objects: Vec<String>, seed: u64) -> SpatialConceptModel {
        let hp = self.hp;
        let k = hp.num_concepts;
        let r = hp.num_regions;
        let n = p.concept_of.len() as f64;

        // First-occurrence order: label 0 is whatever the earliest session
        // was assigned to, and so on. Unused labels keep their relative order.
        let concept_order = first_occurrence_order(&p.concept_of, k);
        let region_order = first_occurrence_order(&p.region_of, r);

        let pi = concept_order
            .iter()
            .map(|&c| (p.concept_n[c] as f64 + hp.alpha) / (n + k as f64 * hp.alpha))
            .collect();
        let concepts = concept_order
            .iter()
            .map(|&c| {
                let nc = p.concept_n[c] as f64;
                let wt = p.concept_word_total[c] as f64;
                let ot = p.concept_object_total[c] as f64;
                Concept {
                    word_dist: p.concept_words[c]
                        .iter()
                        .map(|&m| (m as f64 + hp.beta) / (wt + self.n_words as f64 * hp.beta))
                        .collect(),
                    object_dist: p.concept_objects[c]
                        .iter()
                        .map(|&m| (m as f64 + hp.chi) / (ot + self.n_objects as f64 * hp.chi))
                        .collect(),
                    region_dist: region_order
                        .iter()
                        .map(|&ri| (p.concept_region[c][ri] as f64 + hp.gamma) / (nc + r as f64 * hp.gamma))
                        .collect(),
                }
            })
            .collect();
        let regions = region_order
            .iter()
            .map(|&ri| {
                let post = self.region_posterior(&p.regions[ri]);
                Region {
                    mean: post.mean,
                    covariance: post.covariance_estimate(),
                    observations: p.regions[ri].n,
                }
            })
            .collect();
        SpatialConceptModel {
            vocab_places,
            vocab_objects,
            pi,
            concepts,
            regions,
            hyperparameters: hp.clone(),
            seed,
        }
    }
}

fn first_occurrence_order(assignment: &[usize], n: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(n);
    for &a in assignment {
        if !order.contains(&a) {
            order.push(a);
        }
    }
    for a in 0..n {
        if !order.contains(&a) {
            order.push(a);
        }
    }
    order
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn sample_log_categorical<R: Rng>(scores: &[f64], rng: &mut R) -> usize {
    let lse = log_sum_exp(scores);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, s) in scores.iter().enumerate() {
        acc += (s - lse).exp();
        if u < acc {
            return i;
        }
    }
    scores.len() - 1
}

/// Systematic resampling: one uniform offset, evenly spaced pointers.
fn systematic_resample<R: Rng>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let n = weights.len();
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut i = 0;
    for m in 0..n {
        let u = u0 + m as f64 / n as f64;
        while u > cumulative && i < n - 1 {
            i += 1;
            cumulative += weights[i];
        }
        out.push(i);
    }
    out
}

fn collect_vocab<'a>(items: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut vocab: Vec<String> = Vec::new();
    for item in items {
        if !vocab.contains(item) {
            vocab.push(item.clone());
        }
    }
    vocab
}

/// Learns a model with vocabularies taken from the sessions in order of
/// first appearance.
pub fn learn_fixed_lag(
    sessions: &[Session],
    hp: &Hyperparameters,
    seed: u64,
) -> Result<SpatialConceptModel, SpatialError> {
    let usable = || sessions.iter().filter(|s| s.position.iter().all(|v| v.is_finite()));
    let places = collect_vocab(usable().flat_map(|s| s.place_words.iter()));
    let objects = collect_vocab(usable().flat_map(|s| s.object_labels.iter()));
    learn_fixed_lag_with_vocab(sessions, hp, seed, places, objects)
}

/// Learns a model over supplied vocabularies. Session tokens outside them
/// are ignored; sessions with non-finite positions are dropped.
pub fn learn_fixed_lag_with_vocab(
    sessions: &[Session],
    hp: &Hyperparameters,
    seed: u64,
    vocab_places: Vec<String>,
    vocab_objects: Vec<String>,
) -> Result<SpatialConceptModel, SpatialError> {
    hp.validate()?;
    let index = |vocab: &[String], token: &String| vocab.iter().position(|v| v == token);
    let obs: Vec<Observation> = sessions
        .iter()
        .filter(|s| s.position.iter().all(|v| v.is_finite()))
        .map(|s| Observation {
            position: s.position,
            words: s.place_words.iter().filter_map(|w| index(&vocab_places, w)).collect(),
            objects: s.object_labels.iter().filter_map(|o| index(&vocab_objects, o)).collect(),
        })
        .collect();
    if obs.is_empty() {
        return Err(SpatialError::NoSessions);
    }
    if vocab_places.is_empty() {
        return Err(SpatialError::EmptyVocabulary("place words"));
    }
    if vocab_objects.is_empty() {
        return Err(SpatialError::EmptyVocabulary("object labels"));
    }

    let learner = Learner {
        hp,
        n_words: vocab_places.len(),
        n_objects: vocab_objects.len(),
        obs,
    };
    let k = hp.num_concepts;
    let r = hp.num_regions;
    let lag = hp.lag_window.min(learner.obs.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut particles =
        vec![Particle::new(k, r, learner.n_words, learner.n_objects); hp.num_particles];

    for t in 0..learner.obs.len() {
        let window_start = (t + 1).saturating_sub(lag);
        for p in particles.iter_mut() {
            let scores = learner.scores(p, t);
            p.log_weight += log_sum_exp(&scores);
            let pick = sample_log_categorical(&scores, &mut rng);
            let (c, ri) = (pick / r, pick % r);
            p.add(&learner.obs[t], c, ri);
            p.concept_of.push(c);
            p.region_of.push(ri);

            for s in window_start..t {
                let (oc, or) = (p.concept_of[s], p.region_of[s]);
                p.remove(&learner.obs[s], oc, or);
                let scores = learner.scores(p, s);
                let pick = sample_log_categorical(&scores, &mut rng);
                let (c, ri) = (pick / r, pick % r);
                p.add(&learner.obs[s], c, ri);
                p.concept_of[s] = c;
                p.region_of[s] = ri;
            }
        }

        let max_lw = particles.iter().map(|p| p.log_weight).fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = particles.iter().map(|p| (p.log_weight - max_lw).exp()).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        if ess < hp.num_particles as f64 / 2.0 {
            let picks = systematic_resample(&weights, &mut rng);
            particles = picks.into_iter().map(|i| particles[i].clone()).collect();
            for p in particles.iter_mut() {
                p.log_weight = 0.0;
            }
        } else {
            for (p, w) in particles.iter_mut().zip(&weights) {
                p.log_weight = w.ln();
            }
        }
    }

    let mut best = 0;
    for (i, p) in particles.iter().enumerate() {
        if p.log_weight > particles[best].log_weight {
            best = i;
        }
    }
    Ok(learner.posterior_model(&particles[best], vocab_places, vocab_objects, seed))
}
