#pragma once

#include <cstdio>
#include <functional>
#include <map>
#include <optional>

#include <json.hpp>

#include "dnlb/eval.hpp"
#include "dnlb/loss.hpp"
#include "dnlb/sampling.hpp"

namespace dnlb {

enum class Strategy { random, in_batch, static_hard, static_refresh, star, adore };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::random: return "random";
    case Strategy::in_batch: return "in_batch";
    case Strategy::static_hard: return "static_hard";
    case Strategy::static_refresh: return "static_refresh";
    case Strategy::star: return "star";
    case Strategy::adore: return "adore";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  for (auto v : {Strategy::random, Strategy::in_batch, Strategy::static_hard,
                 Strategy::static_refresh, Strategy::star, Strategy::adore}) {
    if (to_string(v) == s) return v;
  }
  fail("unknown strategy '", s,
       "' (expected random|in_batch|static_hard|static_refresh|star|adore)");
}

enum class OptimizerKind { sgd, adam };
enum class PoolSelection { uniform, top_n };

/// Seed of the index an ADORE run trains against. Evaluating through the same
/// PQ index means rebuilding it with this seed.
inline std::uint64_t adore_index_seed(std::uint64_t seed) { return mix_seed(seed, 0x1d); }

struct TrainConfig {
  Strategy strategy = Strategy::random;
  std::size_t batch_size = 32;
  std::size_t negs_per_query = 8;
  std::size_t steps = 2000;
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 1e-3;
  double momentum = 0.0;  // sgd only
  double alpha = 0.1;     // star
  std::size_t K = 50;     // dynamic top-K (adore), top-K errors in logs
  MetricSpec metric{MetricKind::mrr, 10};  // delta-metric for adore
  std::size_t refresh_period = 500;        // static_refresh
  PoolSelection pool_selection = PoolSelection::uniform;
  std::uint64_t seed = 1;
  IndexSpec adore_index;                   // exact unless pq
  std::size_t eval_every = 100;
  bool freeze_doc = false;  // train the query tower only (always on for adore)

  void validate() const {
    if (batch_size == 0 || negs_per_query == 0 || K == 0 || eval_every == 0 ||
        refresh_period == 0) {
      fail("train config: counts must be positive");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) fail("train config: alpha must lie in (0, 1)");
    if (!(lr > 0.0) || !std::isfinite(lr)) fail("train config: lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
      fail("train config: momentum must lie in [0, 1)");
    }
  }
};

// ---------------------------------------------------------------------------
// Optimizers

struct OptimizerState {
  std::size_t t = 0;
  std::vector<std::vector<double>> first;   // adam m, or sgd velocity
  std::vector<std::vector<double>> second;  // adam v
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One update. Blocks of a frozen tower are neither read nor written.
inline void optimizer_step(DualEncoderParams& params,
                           const ParamGradient& grads, OptimizerState& state,
                           const TrainConfig& cfg,
                           std::optional<Tower> frozen = std::nullopt) {
  auto pb = blocks(params);
  const auto gb = blocks(grads);
  for (std::size_t b = 0; b < pb.size(); ++b) {
    if (pb[b].second->size() != gb[b].second->size()) {
      fail("optimizer_step: shape mismatch in block ", pb[b].first);
    }
  }
  auto is_frozen = [&](const std::string& name) {
    if (!frozen) return false;
    return name.rfind(*frozen == Tower::query ? "query." : "doc.", 0) == 0;
  };
  for (std::size_t b = 0; b < pb.size(); ++b) {
    if (is_frozen(pb[b].first)) continue;
    if (!all_finite(*gb[b].second)) {
      fail("non-finite gradient in parameter block ", gb[b].first);
    }
  }
  if (state.first.empty()) {
    for (const auto& [name, vec] : pb) {
      state.first.emplace_back(vec->size(), 0.0);
      state.second.emplace_back(
          cfg.optimizer == OptimizerKind::adam ? vec->size() : 0, 0.0);
    }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
  for (std::size_t b = 0; b < pb.size(); ++b) {
    if (is_frozen(pb[b].first)) continue;
    auto& p = *pb[b].second;
    const auto& g = *gb[b].second;
    auto& m = state.first[b];
    if (cfg.optimizer == OptimizerKind::sgd) {
      if (cfg.momentum == 0.0) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg.lr * g[i];
      } else {
        for (std::size_t i = 0; i < p.size(); ++i) {
          m[i] = g[i] + cfg.momentum * m[i];
          p[i] -= cfg.lr * m[i];
        }
      }
      continue;
    }
    auto& v = state.second[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      p[i] -= cfg.lr * mh / (std::sqrt(vh) + kAdamEps);
    }
  }
}

// ---------------------------------------------------------------------------
// Per-step pair batches. A StepBatch freezes every sampling decision of one
// step, so its loss is a pure function of the parameters.

enum class PairGroup { plain, random_part, static_part };

struct TrainPair {
  std::size_t row = 0;
  DocId pos = 0;
  DocId neg = 0;
  double weight = 1.0;  // delta metric for adore
  PairGroup group = PairGroup::plain;
};

struct StepBatch {
  BatchLayout layout;
  std::vector<TrainPair> pairs;
};

struct StepLoss {
  double loss = 0.0;
  double static_loss = 0.0;  // static-negative pairs only (star, static_*)
  ParamGradient grad;
};

/// Loss of `batch` divided by the number of rows, with its gradient.
/// `fixed_docs`, when given, supplies document vectors and the document
/// tower receives no gradient.
inline StepLoss step_loss(const DualEncoderParams& params,
                          const StepBatch& batch, const Collection& collection,
                          const QuerySplit& split, Strategy strategy,
                          double alpha,
                          const EmbeddingMatrix* fixed_docs = nullptr) {
  StepLoss out{0.0, 0.0, zero_gradient(params.shape)};
  const std::size_t rows = batch.layout.rows.size();
  if (rows == 0) return out;
  const double scale = 1.0 / static_cast<double>(rows);
  const std::size_t d = params.shape.d_emb;

  std::vector<Embedding> q_emb(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    q_emb[r] = embed_query(params, split.features[batch.layout.rows[r].query]);
  }
  std::map<DocId, Embedding> d_emb;  // ordered: fixed reduction order
  for (const auto& p : batch.pairs) {
    for (DocId id : {p.pos, p.neg}) {
      if (d_emb.count(id)) continue;
      if (fixed_docs) {
        auto row = fixed_docs->row(id);
        d_emb[id] = Embedding(row.begin(), row.end());
      } else {
        d_emb[id] = embed_doc(params, collection.doc_features[id]);
      }
    }
  }

  std::vector<PairItem> items;
  items.reserve(batch.pairs.size());
  for (const auto& p : batch.pairs) {
    items.push_back({p.pos, p.neg, score(q_emb[p.row], d_emb[p.pos]),
                     score(q_emb[p.row], d_emb[p.neg]), p.weight});
  }

  std::vector<PairLoss> terms(items.size());
  if (strategy == Strategy::star) {
    std::vector<PairItem> rnd, sta;
    std::vector<std::size_t> rnd_at, sta_at;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (batch.pairs[i].group == PairGroup::random_part) {
        rnd.push_back(items[i]);
        rnd_at.push_back(i);
      } else {
        sta.push_back(items[i]);
        sta_at.push_back(i);
      }
    }
    const auto obj = star_objective(rnd, sta, alpha);
    for (std::size_t i = 0; i < rnd_at.size(); ++i) terms[rnd_at[i]] = obj.random_terms[i];
    for (std::size_t i = 0; i < sta_at.size(); ++i) terms[sta_at[i]] = obj.static_terms[i];
  } else if (strategy == Strategy::adore) {
    for (std::size_t i = 0; i < items.size(); ++i) terms[i] = lambda_loss(items[i]);
  } else {
    for (std::size_t i = 0; i < items.size(); ++i) {
      terms[i] = ranknet_loss(items[i].s_pos, items[i].s_neg);
    }
  }

  std::vector<std::vector<double>> gq(rows, std::vector<double>(d, 0.0));
  std::map<DocId, std::vector<double>> gd;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& p = batch.pairs[i];
    const PairLoss& t = terms[i];
    out.loss += t.loss * scale;
    if (p.group == PairGroup::static_part) out.static_loss += t.loss * scale;
    const double dp = t.d_pos * scale, dn = t.d_neg * scale;
    if (dp == 0.0 && dn == 0.0) continue;
    const auto& ep = d_emb[p.pos];
    const auto& en = d_emb[p.neg];
    for (std::size_t c = 0; c < d; ++c) gq[p.row][c] += dp * ep[c] + dn * en[c];
    if (!fixed_docs) {
      auto& gp = gd[p.pos];
      auto& gn = gd[p.neg];
      gp.resize(d, 0.0);
      gn.resize(d, 0.0);
      for (std::size_t c = 0; c < d; ++c) {
        gp[c] += dp * q_emb[p.row][c];
        gn[c] += dn * q_emb[p.row][c];
      }
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    accumulate_backprop(params, split.features[batch.layout.rows[r].query],
                        Tower::query, gq[r], out.grad);
  }
  for (const auto& [id, g] : gd) {
    accumulate_backprop(params, collection.doc_features[id], Tower::doc, g,
                        out.grad);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logs

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double static_loss = 0.0;
};

struct EvalRecord {
  std::size_t step = 0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double mrr10 = std::numeric_limits<double>::quiet_NaN();
  double topk_errors = std::numeric_limits<double>::quiet_NaN();
  double phi = std::numeric_limits<double>::quiet_NaN();
  double overlap = std::numeric_limits<double>::quiet_NaN();
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
};

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// CSV with header step,loss,mrr10,topk_errors,phi,overlap; one row per
/// evaluation tick. `loss` is the mean step loss since the previous tick.
inline void write_train_log(const TrainLog& log, std::ostream& out) {
  out << "step,loss,mrr10,topk_errors,phi,overlap\n";
  for (const auto& e : log.evals) {
    out << e.step << ',' << format_real(e.loss) << ',' << format_real(e.mrr10)
        << ',' << format_real(e.topk_errors) << ',' << format_real(e.phi) << ','
        << format_real(e.overlap) << '\n';
  }
}

/// Called on each evaluation tick with frozen parameters and, for static
/// strategies, the current pool. Fills the metric fields of the record.
using EvalHook = std::function<EvalRecord(std::size_t step,
                                          const DualEncoderParams& params,
                                          const NegativePool* pool)>;

// ---------------------------------------------------------------------------
// Training

struct TrainInputs {
  const Collection* collection = nullptr;
  const QuerySplit* train = nullptr;
  const NegativePool* pool = nullptr;  // static_hard, static_refresh, star
};

struct TrainResult {
  DualEncoderParams params;
  TrainLog log;
  std::optional<NegativePool> final_pool;
};

namespace detail {

class BatchAssembler {
 public:
  BatchAssembler(const QuerySplit& split, std::uint64_t seed) : seed_(seed) {
    for (std::size_t i = 0; i < split.size(); ++i) {
      if (!split.judgments[i].relevant.empty()) usable_.push_back(i);
    }
    if (usable_.empty()) fail("no training query has a relevant document");
  }

  std::vector<std::size_t> next(std::size_t batch_size) {
    std::vector<std::size_t> out;
    while (out.size() < batch_size) {
      if (cursor_ == order_.size()) {
        order_ = usable_;
        Rng rng(mix_seed(seed_, 0xe90c0000ULL + epoch_++));
        rng.shuffle(order_);
        cursor_ = 0;
      }
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  std::uint64_t seed_;
  std::vector<std::size_t> usable_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
};

inline std::vector<DocId> pick_from_pool(const std::vector<DocId>& pool,
                                         std::size_t n, PoolSelection sel,
                                         Rng& rng) {
  if (pool.size() <= n) return pool;
  if (sel == PoolSelection::top_n) {
    return {pool.begin(), pool.begin() + static_cast<long>(n)};
  }
  std::vector<DocId> out;
  std::unordered_set<std::size_t> chosen;
  for (std::size_t k = pool.size() - n; k < pool.size(); ++k) {
    std::size_t t = rng.below(k + 1);
    if (!chosen.insert(t).second) {
      chosen.insert(k);
      t = k;
    }
    out.push_back(pool[t]);
  }
  return out;
}

}  // namespace detail

/// Sampling state that persists across steps.
struct TrainState {
  std::optional<NegativePool> pool;
  std::optional<AnyIndex> adore_index;
  std::optional<EmbeddingMatrix> fixed_docs;  // frozen document vectors
};

/// All sampling decisions for step `step` (1-based) of `cfg.strategy`.
inline StepBatch assemble_step(const std::vector<std::size_t>& queries,
                               std::size_t step, const DualEncoderParams& params,
                               const Collection& collection,
                               const QuerySplit& split, const TrainConfig& cfg,
                               const TrainState& state) {
  StepBatch batch;
  const std::size_t n_docs = collection.size();
  for (std::size_t qi : queries) {
    const auto& j = split.judgments[qi];
    Rng rng = query_stream(cfg.seed, split.queries[qi].qid, step);
    BatchRow row{qi, j.relevant[rng.below(j.relevant.size())], {}};
    switch (cfg.strategy) {
      case Strategy::random:
        row.negatives =
            sample_random_negatives(j, cfg.negs_per_query, n_docs, rng);
        break;
      case Strategy::static_hard:
      case Strategy::static_refresh:
      case Strategy::star:
        row.negatives = detail::pick_from_pool(
            state.pool->of(split.queries[qi].qid), cfg.negs_per_query,
            cfg.pool_selection, rng);
        break;
      default:
        break;
    }
    batch.layout.rows.push_back(std::move(row));
  }

  const auto& rows = batch.layout.rows;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& j = split.judgments[rows[r].query];
    switch (cfg.strategy) {
      case Strategy::random:
        for (DocId n : rows[r].negatives) batch.pairs.push_back({r, rows[r].positive, n});
        break;
      case Strategy::static_hard:
      case Strategy::static_refresh:
        for (DocId n : rows[r].negatives) {
          batch.pairs.push_back({r, rows[r].positive, n, 1.0, PairGroup::static_part});
        }
        break;
      case Strategy::in_batch:
        for (DocId n : in_batch_negatives(batch.layout, r, j)) {
          batch.pairs.push_back({r, rows[r].positive, n});
        }
        break;
      case Strategy::star:
        for (DocId n : rows[r].negatives) {
          batch.pairs.push_back({r, rows[r].positive, n, 1.0, PairGroup::static_part});
        }
        for (DocId n : in_batch_negatives(batch.layout, r, j)) {
          batch.pairs.push_back({r, rows[r].positive, n, 1.0, PairGroup::random_part});
        }
        break;
      case Strategy::adore: {
        const auto& docs = *state.fixed_docs;
        const auto q = embed_query(params, split.features[rows[r].query]);
        const auto negs = dynamic_hard_negatives(*state.adore_index, q, cfg.K, j);
        // Candidate list: retrieved negatives plus every positive, ranked by
        // the scores the index produces.
        RankedList cand;
        for (DocId id : negs) cand.push_back({id, dot(q, docs.row(id))});
        for (DocId id : j.relevant) cand.push_back({id, dot(q, docs.row(id))});
        std::sort(cand.begin(), cand.end(),
                  [](const ScoredDoc& a, const ScoredDoc& b) { return ranks_before(a, b); });
        const auto ids = ids_of(cand);
        for (DocId p : j.relevant) {
          for (DocId n : negs) {
            const double w = delta_metric(std::span<const DocId>(ids), p, n, cfg.metric, j);
            if (w > 0.0) batch.pairs.push_back({r, p, n, w});
          }
        }
        break;
      }
    }
  }
  return batch;
}

/// Fails before any step when a strategy's prerequisites are missing.
inline void check_prerequisites(const TrainInputs& in, const TrainConfig& cfg,
                                const DualEncoderParams& init) {
  cfg.validate();
  if (!in.collection || !in.train) fail("train: collection and queries required");
  if (in.collection->H != init.shape.H) {
    fail("train: collection hashed with H = ", in.collection->H,
         " but encoder expects H = ", init.shape.H);
  }
  const bool needs_pool = cfg.strategy == Strategy::static_hard ||
                          cfg.strategy == Strategy::static_refresh ||
                          cfg.strategy == Strategy::star;
  if (needs_pool) {
    if (!in.pool) {
      fail("train: strategy ", to_string(cfg.strategy),
           " requires a static negative pool");
    }
    for (const auto& q : in.train->queries) {
      if (!in.pool->negatives.count(q.qid)) {
        fail("train: pool has no entry for training query '", q.qid, "'");
      }
    }
  }
  if (cfg.strategy == Strategy::random) {
    for (const auto& j : in.train->judgments) {
      if (in.collection->size() < j.relevant.size() + cfg.negs_per_query) {
        fail("train: corpus too small for ", cfg.negs_per_query,
             " random negatives");
      }
    }
  }
  if (cfg.strategy == Strategy::adore && cfg.adore_index.pq &&
      (cfg.adore_index.M == 0 || init.shape.d_emb % cfg.adore_index.M != 0)) {
    fail("train: pq M = ", cfg.adore_index.M, " does not divide d_emb = ",
         init.shape.d_emb);
  }
}

inline TrainResult train(const TrainInputs& in, const TrainConfig& cfg,
                         const DualEncoderParams& init,
                         const EvalHook& hook = {}) {
  check_prerequisites(in, cfg, init);
  const Collection& collection = *in.collection;
  const QuerySplit& split = *in.train;

  TrainResult res{init, {}, std::nullopt};
  TrainState state;
  if (in.pool) state.pool = *in.pool;
  const bool query_only = cfg.freeze_doc || cfg.strategy == Strategy::adore;
  if (cfg.strategy == Strategy::adore) {
    // Documents are encoded once with the starting document tower.
    const auto docs = embed_all(init, Tower::doc, collection.doc_features);
    state.adore_index = build_index(docs, cfg.adore_index, adore_index_seed(cfg.seed));
    state.fixed_docs = stored_vectors(*state.adore_index);
  } else if (query_only) {
    state.fixed_docs = embed_all(init, Tower::doc, collection.doc_features);
  }
  const std::optional<Tower> frozen =
      query_only ? std::optional<Tower>(Tower::doc) : std::nullopt;

  auto tick = [&](std::size_t step, double mean_loss) {
    EvalRecord rec;
    if (hook) rec = hook(step, res.params, state.pool ? &*state.pool : nullptr);
    rec.step = step;
    rec.loss = mean_loss;
    res.log.evals.push_back(rec);
  };

  tick(0, std::numeric_limits<double>::quiet_NaN());
  detail::BatchAssembler assembler(split, cfg.seed);
  OptimizerState opt;
  double since_tick = 0.0;
  std::size_t n_since = 0;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const auto queries = assembler.next(cfg.batch_size);
    const auto batch = assemble_step(queries, step, res.params, collection,
                                     split, cfg, state);
    auto sl = step_loss(res.params, batch, collection, split, cfg.strategy,
                        cfg.alpha, state.fixed_docs ? &*state.fixed_docs : nullptr);
    optimizer_step(res.params, sl.grad, opt, cfg, frozen);
    res.log.steps.push_back({step, sl.loss, sl.static_loss});
    since_tick += sl.loss;
    ++n_since;
    if (cfg.strategy == Strategy::static_refresh && step % cfg.refresh_period == 0) {
      state.pool = refresh_static(*state.pool, res.params, collection, split,
                                  step, cfg.refresh_period);
    }
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      tick(step, since_tick / static_cast<double>(n_since));
      since_tick = 0.0;
      n_since = 0;
    }
  }
  res.final_pool = state.pool;
  return res;
}

// ---------------------------------------------------------------------------
// Standard evaluation hook

struct StandardEvalOptions {
  std::size_t topk = 50;
  std::size_t diag_queries = 200;  // training queries used for phi/overlap
};

/// Dev MRR@10 and top-K errors through an exact index over the current
/// document tower; mean pool phi and overlap with the dynamic set over a
/// prefix of the training queries.
inline EvalHook standard_eval_hook(const Collection& collection,
                                   const QuerySplit& dev,
                                   const QuerySplit& train,
                                   StandardEvalOptions opt = {}) {
  return [&collection, &dev, &train, opt](std::size_t,
                                          const DualEncoderParams& params,
                                          const NegativePool* pool) {
    EvalRecord rec;
    const AnyIndex index =
        build_exact(embed_all(params, Tower::doc, collection.doc_features));
    double mrr = 0.0;
    std::vector<QueryProfile> profiles;
    for (std::size_t i = 0; i < dev.size(); ++i) {
      const auto& j = dev.judgments[i];
      if (j.relevant.empty()) continue;
      const auto scores = score_all(index, embed_query(params, dev.features[i]));
      mrr += mrr_at_k(ids_of(top_k_from_scores(scores, 10)), j, 10);
      profiles.push_back(rank_profile(scores, j, dev.queries[i].qid));
    }
    if (!profiles.empty()) {
      rec.mrr10 = mrr / static_cast<double>(profiles.size());
      rec.topk_errors = topk_pairwise_errors(profiles, opt.topk);
    }
    if (pool) {
      double phi = 0.0, overlap = 0.0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < std::min(opt.diag_queries, train.size()); ++i) {
        const auto& set = pool->of(train.queries[i].qid);
        if (set.empty() || train.judgments[i].relevant.empty()) continue;
        const auto q = embed_query(params, train.features[i]);
        const auto scores = score_all(index, q);
        phi += static_cast<double>(quality_phi(set, scores));
        const auto dyn = dynamic_hard_negatives(index, q, set.size(), train.judgments[i]);
        overlap += overlap_ratio(set, dyn);
        ++n;
      }
      if (n) {
        rec.phi = phi / static_cast<double>(n);
        rec.overlap = overlap / static_cast<double>(n);
      }
    }
    return rec;
  };
}

/// MRR@10 through an exact index over the document tower of `params`.
inline double dev_mrr10(const DualEncoderParams& params,
                        const Collection& collection, const QuerySplit& dev) {
  const AnyIndex index =
      build_exact(embed_all(params, Tower::doc, collection.doc_features));
  EvalOptions opt;
  opt.metrics = {{MetricKind::mrr, 10}};
  return evaluate(index, params, dev, opt).means[0];
}

/// Short static-hard run on a BM25 pool from a fresh initialization.
struct WarmupResult {
  DualEncoderParams params;
  NegativePool bm25_pool;
};

inline WarmupResult warmup_model(const Collection& collection,
                                 const QuerySplit& train,
                                 const DualEncoderParams& init,
                                 TrainConfig quick, std::size_t k_pool = 200,
                                 Bm25Params bm25 = {}) {
  const Bm25Index bm(collection.corpus, bm25);
  NegativePool pool = build_static_negatives(Bm25Retriever{&bm}, train, k_pool);
  quick.strategy = Strategy::static_hard;
  quick.freeze_doc = false;
  TrainInputs in{&collection, &train, &pool};
  auto res = dnlb::train(in, quick, init);
  return {std::move(res.params), std::move(pool)};
}

}  // namespace dnlb
