//! The search owner: memoized evaluation, alpha optimization, divide and
//! conquer. All queue and memo mutations happen on this single owner.

use std::collections::{BTreeSet, VecDeque};
use std::time::Instant;

use super::{ConfigScore, Evaluator, Memo, SearchNode, SearchReport, SearchThresholds};
use crate::error::{Error, Result};
use crate::microformer::HeadAddress;
use crate::steering::{DirectionSet, InterventionConfig, SteeringDirection};

/// Outcome of one optimize-alphas run, with diagnostics for threshold
/// assertions (the final step bounds how far the result sits from the
/// precision boundary).
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub alphas: Vec<f64>,
    pub precision: f64,
    pub recall: f64,
    pub iterations: usize,
    pub final_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum StepDir {
    Up,
    Down,
}

pub struct HeadSearch<'a> {
    evaluator: &'a dyn Evaluator,
    directions: &'a DirectionSet,
    thresholds: SearchThresholds,
    memo: Memo,
    nodes: Vec<SearchNode>,
}

impl<'a> HeadSearch<'a> {
    pub fn new(
        evaluator: &'a dyn Evaluator,
        directions: &'a DirectionSet,
        thresholds: SearchThresholds,
    ) -> Result<Self> {
        thresholds.validate()?;
        Ok(Self {
            evaluator,
            directions,
            thresholds,
            memo: Memo::default(),
            nodes: Vec::new(),
        })
    }

    pub fn thresholds(&self) -> &SearchThresholds {
        &self.thresholds
    }

    pub fn memo(&self) -> &Memo {
        &self.memo
    }

    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &SearchNode {
        &self.nodes[id]
    }

    fn config_for(&self, heads: &[HeadAddress], alphas: &[f64]) -> Result<InterventionConfig> {
        let dirs: Vec<SteeringDirection> = heads
            .iter()
            .map(|a| {
                self.directions
                    .get(a)
                    .cloned()
                    .ok_or(Error::MissingDirection {
                        layer: a.layer,
                        head: a.head,
                    })
            })
            .collect::<Result<_>>()?;
        InterventionConfig::build(&dirs, alphas)
    }

    /// Evaluates a configuration at most once; repeat keys hit the memo.
    fn evaluate(&mut self, config: &InterventionConfig) -> Result<ConfigScore> {
        let key = config.canonical_key();
        if let Some(score) = self.memo.get(&key) {
            return Ok(score);
        }
        let score = self
            .evaluator
            .evaluate(config)
            .map_err(|e| Error::EvaluatorFailure {
                config: key.clone(),
                source: Box::new(e),
            })?;
        if !score.precision.is_finite() || !score.recall.is_finite() {
            return Err(Error::EvaluatorFailure {
                config: key,
                source: Box::new(Error::InvalidSettings(
                    "evaluator returned a non-finite score".into(),
                )),
            });
        }
        self.memo.insert(key, score);
        Ok(score)
    }

    fn push_node(
        &mut self,
        heads: Vec<HeadAddress>,
        alphas: Vec<f64>,
        score: ConfigScore,
        parent: Option<usize>,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(SearchNode {
            id,
            heads,
            alphas,
            precision: score.precision,
            recall: score.recall,
            parent,
        });
        id
    }

    /// Tunes a common scale factor on the incoming alphas (preserving their
    /// per-head ratios): strengths increase while precision stays below 1
    /// and decrease once it reaches 1 to recover recall. The step doubles
    /// while the scan keeps moving one way (bracketing) and halves on every
    /// direction flip (bisection), so any reachable precision boundary is
    /// found in logarithmically many moves. Keeps the best (precision, then
    /// recall) visit; stops on stagnation or the iteration cap.
    pub fn optimize_alphas(
        &mut self,
        heads: &[HeadAddress],
        alphas_in: &[f64],
    ) -> Result<OptimizeResult> {
        if heads.is_empty() {
            return Err(Error::EmptyHeadSet);
        }
        if heads.len() != alphas_in.len() {
            return Err(Error::LengthMismatch {
                context: "heads vs alphas".into(),
                left: heads.len(),
                right: alphas_in.len(),
            });
        }
        if alphas_in.iter().any(|&a| !a.is_finite() || a <= 0.0) {
            return Err(Error::InvalidThresholds(
                "optimize_alphas needs strictly positive starting alphas".into(),
            ));
        }

        let mean: f64 = alphas_in.iter().sum::<f64>() / alphas_in.len() as f64;
        let ratios: Vec<f64> = alphas_in.iter().map(|a| a / mean).collect();

        let mut scale = mean;
        let mut step = self.thresholds.alpha0 / 2.0;
        let mut dir: Option<StepDir> = None;
        let mut bracketed = false;

        let mut best: Option<(Vec<f64>, ConfigScore)> = None;
        let mut best_score = ConfigScore::new(0.0, 0.0);
        let mut no_improve = 0usize;
        let mut iterations = 0usize;

        while iterations < self.thresholds.max_iterations
            && no_improve < self.thresholds.required_no_improve
        {
            iterations += 1;
            let alphas: Vec<f64> = ratios.iter().map(|r| r * scale).collect();
            let config = self.config_for(heads, &alphas)?;
            let score = self.evaluate(&config)?;

            if score.lex_gt(&best_score) {
                best = Some((alphas, score));
                best_score = score;
                no_improve = 0;
            } else {
                no_improve += 1;
            }

            let next_dir = if score.precision >= 1.0 {
                StepDir::Down
            } else {
                StepDir::Up
            };
            match dir {
                Some(d) if d != next_dir => {
                    step /= 2.0;
                    bracketed = true;
                }
                Some(_) if !bracketed => step *= 2.0,
                _ => {}
            }
            dir = Some(next_dir);
            match next_dir {
                StepDir::Up => scale += step,
                StepDir::Down => {
                    let next = scale - step;
                    scale = if next > 0.0 { next } else { scale / 2.0 };
                }
            }
        }

        let (alphas, score) = best.unwrap_or((alphas_in.to_vec(), ConfigScore::new(0.0, 0.0)));
        Ok(OptimizeResult {
            alphas,
            precision: score.precision,
            recall: score.recall,
            iterations,
            final_step: step,
        })
    }

    /// Layer-wise queue-based recursive splitting. Every layer starts from
    /// its full head set at `alpha0`; a set meeting both thresholds is split
    /// into halves that inherit the optimized alphas. Singletons never
    /// split. Returns the ids of all evaluated nodes.
    pub fn divide(&mut self, layers: &[Vec<HeadAddress>]) -> Result<Vec<usize>> {
        let mut queue: VecDeque<(Vec<HeadAddress>, Vec<f64>, Option<usize>)> = VecDeque::new();
        for (index, layer) in layers.iter().enumerate() {
            if layer.is_empty() {
                return Err(Error::EmptyLayer { layer: index });
            }
            queue.push_back((
                layer.clone(),
                vec![self.thresholds.alpha0; layer.len()],
                None,
            ));
        }

        let mut ids = Vec::new();
        while let Some((heads, alphas, parent)) = queue.pop_front() {
            let opt = self.optimize_alphas(&heads, &alphas)?;
            let score = ConfigScore::new(opt.precision, opt.recall);
            let id = self.push_node(heads.clone(), opt.alphas.clone(), score, parent);
            ids.push(id);

            let passes = opt.precision >= self.thresholds.min_precision
                && opt.recall >= self.thresholds.min_recall;
            if passes && heads.len() >= 2 {
                let mid = heads.len() / 2;
                queue.push_back((heads[..mid].to_vec(), opt.alphas[..mid].to_vec(), Some(id)));
                queue.push_back((heads[mid..].to_vec(), opt.alphas[mid..].to_vec(), Some(id)));
            }
        }
        Ok(ids)
    }

    /// Sorts node ids by (precision, recall) descending, id ascending.
    pub fn rank(&self, ids: &mut [usize]) {
        ids.sort_by(|&a, &b| {
            let na = &self.nodes[a];
            let nb = &self.nodes[b];
            nb.precision
                .partial_cmp(&na.precision)
                .unwrap()
                .then(nb.recall.partial_cmp(&na.recall).unwrap())
                .then(a.cmp(&b))
        });
    }

    /// Recombination of intervened heads. Pops the ranked queue, unions the
    /// popped node with every threshold-passing peer, re-optimizes new
    /// unions and tracks the best solution under the lexicographic
    /// (precision, recall) order. Unions deduplicate overlapping addresses,
    /// keeping the higher-ranked parent's alpha. A visited-pair guard plus
    /// an iteration cap rule out livelock on re-queued candidates.
    pub fn conquer(&mut self, queue_ids: &[usize]) -> Result<usize> {
        if queue_ids.is_empty() {
            return Err(Error::EmptyQueue);
        }
        let mut active: Vec<usize> = queue_ids.to_vec();
        self.rank(&mut active);
        let mut best = active[0];

        let mut union_memo: BTreeSet<String> = BTreeSet::new();
        let mut visited_pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
        let cap = 64 + 4 * queue_ids.len() * queue_ids.len();
        let mut pops = 0usize;

        while !active.is_empty() && pops < cap {
            pops += 1;
            let c = active.remove(0);
            let snapshot = active.clone();
            let mut requeue_c = false;

            for cp in snapshot {
                let peer = &self.nodes[cp];
                if !(peer.precision >= self.thresholds.min_precision
                    && peer.recall >= self.thresholds.min_recall)
                {
                    continue;
                }
                let pair = (c.min(cp), c.max(cp));
                if !visited_pairs.insert(pair) {
                    continue;
                }

                let (heads, alphas) = self.union_of(c, cp);
                let key = self.config_for(&heads, &alphas)?.canonical_key();
                if !union_memo.insert(key) {
                    continue;
                }

                let opt = self.optimize_alphas(&heads, &alphas)?;
                let score = ConfigScore::new(opt.precision, opt.recall);
                let id = self.push_node(heads, opt.alphas, score, Some(c));

                let best_score = self.nodes[best].score();
                if score.lex_gt(&best_score) {
                    best = id;
                }
                // the looser either-metric-improved test still gates
                // exploration, as in the recombination loop's re-queue rule
                if score.precision > best_score.precision || score.recall > best_score.recall {
                    active.push(id);
                    self.rank(&mut active);
                } else {
                    requeue_c = true;
                }
            }

            if requeue_c && !active.contains(&c) {
                active.push(c);
                self.rank(&mut active);
            }
        }
        Ok(best)
    }

    /// Union of two nodes' head sets; overlapping addresses take the alpha
    /// of the lexicographically better-scoring parent (ties favor `a`).
    fn union_of(&self, a: usize, b: usize) -> (Vec<HeadAddress>, Vec<f64>) {
        let (na, nb) = (&self.nodes[a], &self.nodes[b]);
        let (first, second) = if nb.score().lex_gt(&na.score()) {
            (nb, na)
        } else {
            (na, nb)
        };
        let mut heads = first.heads.clone();
        let mut alphas = first.alphas.clone();
        for (h, al) in second.heads.iter().zip(second.alphas.iter()) {
            if !heads.contains(h) {
                heads.push(*h);
                alphas.push(*al);
            }
        }
        (heads, alphas)
    }

    /// Full pipeline: divide, rank and filter by the thresholds, conquer.
    /// When nothing passes, conquer runs on the single best divide node and
    /// the report is flagged `below_threshold`.
    pub fn run(mut self, layers: &[Vec<HeadAddress>]) -> Result<SearchReport> {
        let started = Instant::now();
        let ids = self.divide(layers)?;

        let mut queue: Vec<usize> = ids
            .iter()
            .copied()
            .filter(|&id| {
                let n = &self.nodes[id];
                n.precision >= self.thresholds.min_precision
                    && n.recall >= self.thresholds.min_recall
            })
            .collect();
        let below_threshold = queue.is_empty();
        if below_threshold {
            let mut all = ids.clone();
            self.rank(&mut all);
            queue = vec![all[0]];
        }
        self.rank(&mut queue);

        let best = self.conquer(&queue)?;
        Ok(SearchReport {
            best: self.nodes[best].clone(),
            nodes: self.nodes,
            evaluation_count: self.memo.len(),
            wall_time_ms: started.elapsed().as_millis(),
            below_threshold,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microformer::ModelDims;
    use ndarray::Array1;

    /// Unit directions for every head of the default-dims model.
    fn unit_directions() -> DirectionSet {
        let dims = ModelDims::default_dims();
        let mut set = DirectionSet::new();
        for a in dims.all_heads() {
            let mut v = Array1::zeros(dims.head_dim);
            v[0] = 1.0;
            set.insert(a, SteeringDirection { address: a, v });
        }
        set
    }

    /// Closed-form landscape: precision 1 iff the mean alpha reaches the
    /// threshold; recall decays linearly with alpha.
    struct StepLandscape {
        threshold: f64,
    }

    impl Evaluator for StepLandscape {
        fn evaluate(&self, config: &InterventionConfig) -> Result<ConfigScore> {
            let alphas = config.alphas();
            let mean = alphas.iter().sum::<f64>() / alphas.len().max(1) as f64;
            let precision = if mean >= self.threshold { 1.0 } else { 0.0 };
            let recall = (1.0 - mean / 40.0).max(0.0);
            Ok(ConfigScore::new(precision, recall))
        }
    }

    struct ConstantLandscape {
        precision: f64,
        recall: f64,
    }

    impl Evaluator for ConstantLandscape {
        fn evaluate(&self, _config: &InterventionConfig) -> Result<ConfigScore> {
            Ok(ConfigScore::new(self.precision, self.recall))
        }
    }

    /// Only sets containing the planted head can reach precision 1 (and only
    /// once their alpha is large enough); recall shrinks as total strength
    /// grows.
    struct PlantedLandscape {
        star: HeadAddress,
        threshold: f64,
    }

    impl Evaluator for PlantedLandscape {
        fn evaluate(&self, config: &InterventionConfig) -> Result<ConfigScore> {
            let entries = config.entries();
            let star = entries.iter().find(|e| e.address == self.star);
            let total: f64 = config.alphas().iter().sum();
            match star {
                Some(e) if e.alpha >= self.threshold => {
                    Ok(ConfigScore::new(1.0, (1.0 - total / 200.0).max(0.0)))
                }
                _ => Ok(ConfigScore::new(0.4, 1.0)),
            }
        }
    }

    fn heads_of(layer: usize, n: usize) -> Vec<HeadAddress> {
        (0..n).map(|h| HeadAddress::new(layer, h)).collect()
    }

    #[test]
    fn optimize_converges_to_minimal_passing_alpha() {
        let dirs = unit_directions();
        for alpha0 in [2.0, 5.0, 20.0] {
            let ev = StepLandscape { threshold: 10.0 };
            let th = SearchThresholds {
                alpha0,
                ..Default::default()
            };
            let mut hs = HeadSearch::new(&ev, &dirs, th).unwrap();
            let heads = vec![HeadAddress::new(0, 0)];
            let res = hs.optimize_alphas(&heads, &[alpha0]).unwrap();
            assert_eq!(res.precision, 1.0, "alpha0={alpha0}");
            assert!(
                res.alphas[0] >= 10.0 && res.alphas[0] <= 10.0 + res.final_step,
                "alpha0={alpha0}: alpha {} not within one final step ({}) of 10",
                res.alphas[0],
                res.final_step
            );
        }
    }

    #[test]
    fn constant_perfect_landscape_stops_on_stagnation() {
        let dirs = unit_directions();
        let ev = ConstantLandscape {
            precision: 1.0,
            recall: 1.0,
        };
        let mut hs = HeadSearch::new(&ev, &dirs, SearchThresholds::default()).unwrap();
        let res = hs
            .optimize_alphas(&[HeadAddress::new(1, 1)], &[5.0])
            .unwrap();
        // first iteration wins, then the no-improve counter exits the loop
        assert_eq!(res.precision, 1.0);
        assert_eq!(res.recall, 1.0);
        assert_eq!(res.iterations, 1 + 5);
        assert_eq!(res.alphas, vec![5.0]);
    }

    #[test]
    fn constant_zero_precision_returns_initial_alphas() {
        let dirs = unit_directions();
        let ev = ConstantLandscape {
            precision: 0.0,
            recall: 0.0,
        };
        let mut hs = HeadSearch::new(&ev, &dirs, SearchThresholds::default()).unwrap();
        let res = hs
            .optimize_alphas(&[HeadAddress::new(1, 1)], &[5.0])
            .unwrap();
        assert_eq!(res.precision, 0.0);
        assert_eq!(res.alphas, vec![5.0]);
        // the scan itself increased alphas every step: scale went up,
        // so the memo saw strictly increasing keys (one eval each)
        assert!(hs.memo().len() >= 2);
    }

    #[test]
    fn optimize_multi_head_preserves_ratios() {
        let dirs = unit_directions();
        let ev = StepLandscape { threshold: 6.0 };
        let mut hs = HeadSearch::new(&ev, &dirs, SearchThresholds::default()).unwrap();
        let heads = heads_of(0, 2);
        let res = hs.optimize_alphas(&heads, &[2.0, 6.0]).unwrap();
        assert_eq!(res.precision, 1.0);
        let ratio = res.alphas[1] / res.alphas[0];
        assert!((ratio - 3.0).abs() < 1e-9, "ratio drifted: {ratio}");
    }

    #[test]
    fn rejects_empty_or_nonpositive_input() {
        let dirs = unit_directions();
        let ev = ConstantLandscape {
            precision: 1.0,
            recall: 1.0,
        };
        let mut hs = HeadSearch::new(&ev, &dirs, SearchThresholds::default()).unwrap();
        assert!(matches!(
            hs.optimize_alphas(&[], &[]),
            Err(Error::EmptyHeadSet)
        ));
        assert!(hs
            .optimize_alphas(&[HeadAddress::new(0, 0)], &[0.0])
            .is_err());
    }

    #[test]
    fn divide_never_passing_gives_one_node_per_layer() {
        let dirs = unit_directions();
        let ev = ConstantLandscape {
            precision: 0.0,
            recall: 1.0,
        };
        let mut hs = HeadSearch::new(&ev, &dirs, SearchThresholds::default()).unwrap();
        let layers: Vec<Vec<HeadAddress>> = (0..4).map(|l| heads_of(l, 8)).collect();
        let ids = hs.divide(&layers).unwrap();
        assert_eq!(ids.len(), 4);
        for &id in &ids {
            assert_eq!(hs.node(id).heads.len(), 8);
            assert_eq!(hs.node(id).parent, None);
        }
    }

    #[test]
    fn divide_always_passing_builds_full_binary_tree() {
        let dirs = unit_directions();
        let ev = ConstantLandscape {
            precision: 1.0,
            recall: 1.0,
        };
        let th = SearchThresholds {
            min_recall: 0.5,
            ..Default::default()
        };
        let mut hs = HeadSearch::new(&ev, &dirs, th).unwrap();
        let ids = hs.divide(&[heads_of(0, 8)]).unwrap();
        assert_eq!(ids.len(), 15); // 1 + 2 + 4 + 8
        let mut sizes: Vec<usize> = ids.iter().map(|&i| hs.node(i).heads.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes.iter().filter(|&&s| s == 8).count(), 1);
        assert_eq!(sizes.iter().filter(|&&s| s == 4).count(), 2);
        assert_eq!(sizes.iter().filter(|&&s| s == 2).count(), 4);
        assert_eq!(sizes.iter().filter(|&&s| s == 1).count(), 8);
        // lineage from any singleton back to the root has sizes 1,2,4,8
        let leaf = ids
            .iter()
            .find(|&&i| hs.node(i).heads.len() == 1)
            .copied()
            .unwrap();
        let mut lineage = vec![hs.node(leaf).heads.len()];
        let mut cur = hs.node(leaf).parent;
        while let Some(p) = cur {
            lineage.push(hs.node(p).heads.len());
            cur = hs.node(p).parent;
        }
        assert_eq!(lineage, vec![1, 2, 4, 8]);
        // node count per layer stays within the 2h - 1 binary-tree bound
        assert!(ids.len() < 2 * 8);
    }

    #[test]
    fn divide_rejects_empty_layer() {
        let dirs = unit_directions();
        let ev = ConstantLandscape {
            precision: 1.0,
            recall: 1.0,
        };
        let mut hs = HeadSearch::new(&ev, &dirs, SearchThresholds::default()).unwrap();
        assert!(matches!(
            hs.divide(&[vec![]]),
            Err(Error::EmptyLayer { layer: 0 })
        ));
    }

    #[test]
    fn divide_planted_lineage_reaches_singleton() {
        let dirs = unit_directions();
        let star = HeadAddress::new(1, 5);
        let ev = PlantedLandscape {
            star,
            threshold: 4.0,
        };
        let th = SearchThresholds {
            min_recall: 0.1,
            ..Default::default()
        };
        let mut hs = HeadSearch::new(&ev, &dirs, th).unwrap();
        let layers: Vec<Vec<HeadAddress>> = (0..4).map(|l| heads_of(l, 8)).collect();
        let ids = hs.divide(&layers).unwrap();

        // exhaustive single-head sweep oracle identifies the star head:
        // only singleton {star} can reach precision 1 on this landscape
        let singleton = ids
            .iter()
            .find(|&&i| hs.node(i).heads == vec![star])
            .copied();
        let singleton = singleton.expect("lineage from full layer to {star} singleton present");
        assert_eq!(hs.node(singleton).precision, 1.0);

        // layers without the star never split
        for layer in [0usize, 2, 3] {
            let count = ids
                .iter()
                .filter(|&&i| hs.node(i).heads.iter().all(|h| h.layer == layer))
                .count();
            assert_eq!(count, 1, "layer {layer} should not split");
        }
    }

    #[test]
    fn conquer_single_node_queue_returns_it_unchanged() {
        let dirs = unit_directions();
        let ev = ConstantLandscape {
            precision: 1.0,
            recall: 0.5,
        };
        let mut hs = HeadSearch::new(&ev, &dirs, SearchThresholds::default()).unwrap();
        let opt = hs.optimize_alphas(&heads_of(0, 1), &[5.0]).unwrap();
        let id = hs.push_node(
            heads_of(0, 1),
            opt.alphas,
            ConfigScore::new(opt.precision, opt.recall),
            None,
        );
        let evals_before = hs.memo().len();
        let best = hs.conquer(&[id]).unwrap();
        assert_eq!(best, id);
        assert_eq!(
            hs.memo().len(),
            evals_before,
            "no recombination evaluations"
        );
    }

    /// Pair landscape: two specific heads only reach precision 1 together.
    struct PairLandscape {
        a: HeadAddress,
        b: HeadAddress,
    }

    impl Evaluator for PairLandscape {
        fn evaluate(&self, config: &InterventionConfig) -> Result<ConfigScore> {
            let addrs = config.addresses();
            let has = |x: &HeadAddress| addrs.contains(x);
            let mean = {
                let a = config.alphas();
                a.iter().sum::<f64>() / a.len().max(1) as f64
            };
            if has(&self.a) && has(&self.b) && mean >= 2.0 {
                Ok(ConfigScore::new(1.0, 0.8))
            } else if (has(&self.a) || has(&self.b)) && mean >= 2.0 {
                Ok(ConfigScore::new(1.0, 0.4))
            } else {
                Ok(ConfigScore::new(0.3, 1.0))
            }
        }
    }

    #[test]
    fn conquer_finds_strictly_better_union() {
        let dirs = unit_directions();
        let a = HeadAddress::new(0, 0);
        let b = HeadAddress::new(1, 0);
        let ev = PairLandscape { a, b };
        let th = SearchThresholds {
            min_recall: 0.2,
            ..Default::default()
        };
        let mut hs = HeadSearch::new(&ev, &dirs, th).unwrap();

        let mut queue = Vec::new();
        for h in [a, b] {
            let opt = hs.optimize_alphas(&[h], &[5.0]).unwrap();
            let id = hs.push_node(
                vec![h],
                opt.alphas,
                ConfigScore::new(opt.precision, opt.recall),
                None,
            );
            queue.push(id);
        }
        let best = hs.conquer(&queue).unwrap();
        let node = hs.node(best);
        let mut heads = node.heads.clone();
        heads.sort();
        assert_eq!(heads, vec![a, b], "union should win");
        assert_eq!(node.precision, 1.0);
        assert_eq!(node.recall, 0.8);

        // exhaustive enumeration over all <= 3-head configs on an alpha
        // grid confirms nothing beats the pair
        let grid: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let all = ModelDims::default_dims().all_heads();
        let mut best_oracle = ConfigScore::new(0.0, 0.0);
        let mut combos: Vec<Vec<HeadAddress>> = Vec::new();
        for i in 0..all.len() {
            combos.push(vec![all[i]]);
            for j in (i + 1)..all.len() {
                combos.push(vec![all[i], all[j]]);
                for k in (j + 1)..all.len() {
                    combos.push(vec![all[i], all[j], all[k]]);
                }
            }
        }
        for combo in combos {
            for &g in &grid {
                let cfg_dirs: Vec<SteeringDirection> =
                    combo.iter().map(|h| dirs[h].clone()).collect();
                let cfg = InterventionConfig::build(&cfg_dirs, &vec![g; combo.len()]).unwrap();
                let s = ev.evaluate(&cfg).unwrap();
                if s.lex_gt(&best_oracle) {
                    best_oracle = s;
                }
            }
        }
        assert_eq!(best_oracle.precision, node.precision);
        assert_eq!(best_oracle.recall, node.recall);
    }

    #[test]
    fn conquer_skips_memoized_unions() {
        let dirs = unit_directions();
        let ev = ConstantLandscape {
            precision: 1.0,
            recall: 0.5,
        };
        let th = SearchThresholds {
            min_recall: 0.2,
            ..Default::default()
        };
        let mut hs = HeadSearch::new(&ev, &dirs, th).unwrap();
        let mut queue = Vec::new();
        for h in [HeadAddress::new(0, 0), HeadAddress::new(0, 1)] {
            let opt = hs.optimize_alphas(&[h], &[5.0]).unwrap();
            let id = hs.push_node(
                vec![h],
                opt.alphas,
                ConfigScore::new(opt.precision, opt.recall),
                None,
            );
            queue.push(id);
        }
        let _ = hs.conquer(&queue).unwrap();
        let evals = hs.memo().len();
        // re-offering the same queue can only produce already-memoized
        // unions: the evaluation count must not increase
        let _ = hs.conquer(&queue).unwrap();
        assert_eq!(hs.memo().len(), evals);
    }

    /// Wraps a landscape and counts how often each canonical key is asked.
    struct CountingEvaluator<E> {
        inner: E,
        seen: std::cell::RefCell<std::collections::BTreeMap<String, usize>>,
    }

    impl<E: Evaluator> Evaluator for CountingEvaluator<E> {
        fn evaluate(&self, config: &InterventionConfig) -> crate::error::Result<ConfigScore> {
            *self
                .seen
                .borrow_mut()
                .entry(config.canonical_key())
                .or_insert(0) += 1;
            self.inner.evaluate(config)
        }
    }

    #[test]
    fn memo_ledger_audit_no_key_evaluated_twice() {
        let dirs = unit_directions();
        let star = HeadAddress::new(1, 5);
        let ev = CountingEvaluator {
            inner: PlantedLandscape {
                star,
                threshold: 4.0,
            },
            seen: Default::default(),
        };
        let th = SearchThresholds {
            min_recall: 0.1,
            ..Default::default()
        };
        let layers = ModelDims::default_dims().layer_heads();
        let report = HeadSearch::new(&ev, &dirs, th)
            .unwrap()
            .run(&layers)
            .unwrap();

        let seen = ev.seen.borrow();
        for (key, count) in seen.iter() {
            assert_eq!(*count, 1, "config {key} evaluated {count} times");
        }
        assert_eq!(report.evaluation_count, seen.len());
    }

    proptest::proptest! {
        /// Precision is a nondecreasing step function of alpha; the
        /// optimizer must end at precision 1 whenever an alpha in its
        /// scanned range achieves it. With the doubling climb and the
        /// default no-improve budget of 5, the scan reaches 16.5x the
        /// starting alpha, so thresholds are drawn inside that range.
        #[test]
        fn step_landscapes_always_reach_precision_one(
            alpha0 in 1.0f64..20.0,
            threshold_factor in 0.1f64..16.0,
        ) {
            let threshold = alpha0 * threshold_factor;
            let dirs = unit_directions();
            let ev = StepLandscape { threshold };
            let th = SearchThresholds { alpha0, ..Default::default() };
            let mut hs = HeadSearch::new(&ev, &dirs, th).unwrap();
            let res = hs.optimize_alphas(&[HeadAddress::new(0, 0)], &[alpha0]).unwrap();
            proptest::prop_assert_eq!(res.precision, 1.0);
            proptest::prop_assert!(res.alphas[0] >= threshold);
        }
    }

    #[test]
    fn run_is_reproducible_and_dominates_queue() {
        let dirs = unit_directions();
        let star = HeadAddress::new(2, 3);
        let layers = ModelDims::default_dims().layer_heads();
        let th = SearchThresholds {
            min_recall: 0.1,
            ..Default::default()
        };

        let run = || {
            let ev = PlantedLandscape {
                star,
                threshold: 4.0,
            };
            HeadSearch::new(&ev, &dirs, th)
                .unwrap()
                .run(&layers)
                .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.evaluation_count, b.evaluation_count);
        assert_eq!(a.best, b.best);
        assert!(!a.below_threshold);
        assert!(a.best.heads.contains(&star));

        // best weakly dominates every node lexicographically
        for node in &a.nodes {
            assert!(
                a.best.score().lex_ge(&node.score()),
                "node {:?} beats best",
                node.id
            );
        }
    }

    #[test]
    fn run_flags_below_threshold_on_hopeless_landscape() {
        let dirs = unit_directions();
        let ev = ConstantLandscape {
            precision: 0.0,
            recall: 0.0,
        };
        let layers = ModelDims::default_dims().layer_heads();
        let report = HeadSearch::new(&ev, &dirs, SearchThresholds::default())
            .unwrap()
            .run(&layers)
            .unwrap();
        assert!(report.below_threshold);
        assert_eq!(report.nodes.len(), 4); // one root node per layer, no splits
    }
}
