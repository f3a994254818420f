#pragma once

// Experiment plumbing shared by the command-line tool and the acceptance
// harness: JSON configs, data loading, and the train/eval/analysis runs.

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "dnlb/trainer.hpp"

namespace dnlb {

using nlohmann::json;

namespace detail {

// Calls `set(key, value)` for every member; `set` returns false for keys it
// does not know.
template <typename Setter>
void read_object(const json& j, const char* what, Setter set) {
  if (!j.is_object()) fail(what, " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    try {
      known = set(key, value);
    } catch (const json::exception& e) {
      fail(what, ": bad value for '", key, "': ", e.what());
    }
    if (!known) fail(what, ": unknown key '", key, "'");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Index kinds: "exact" or "pqM".

inline IndexSpec parse_index_kind(const std::string& s) {
  if (s == "exact") return {};
  if (s.size() > 2 && s.rfind("pq", 0) == 0 &&
      std::all_of(s.begin() + 2, s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    IndexSpec spec;
    spec.pq = true;
    spec.M = std::stoul(s.substr(2));
    if (spec.M == 0) fail("index kind '", s, "': M must be >= 1");
    return spec;
  }
  fail("unknown index kind '", s, "' (expected exact or pqM, e.g. pq16)");
}

inline void to_json(json& j, const IndexSpec& s) {
  j = json{{"kind", s.pq ? "pq" : "exact"}};
  if (s.pq) {
    j["M"] = s.M;
    j["k_c"] = s.k_c;
    j["iters"] = s.iters;
  }
}

inline void from_json(const json& j, IndexSpec& s) {
  std::string kind = "exact";
  detail::read_object(j, "index config", [&](const std::string& k, const json& v) {
    if (k == "kind") kind = v.get<std::string>();
    else if (k == "M") s.M = v.get<std::size_t>();
    else if (k == "k_c") s.k_c = v.get<std::size_t>();
    else if (k == "iters") s.iters = v.get<std::size_t>();
    else return false;
    return true;
  });
  if (kind != "exact" && kind != "pq") fail("index config: kind must be exact or pq");
  s.pq = kind == "pq";
  if (s.pq && s.M == 0) fail("index config: pq needs M >= 1");
  if (s.k_c == 0 || s.k_c > 256) fail("index config: k_c must lie in [1, 256]");
}

// ---------------------------------------------------------------------------
// Train config. The seed is not part of it: every run takes it from --seed.

inline void to_json(json& j, const TrainConfig& c) {
  j = json{{"strategy", to_string(c.strategy)},
           {"batch_size", c.batch_size},
           {"negs_per_query", c.negs_per_query},
           {"steps", c.steps},
           {"optimizer", c.optimizer == OptimizerKind::sgd ? "sgd" : "adam"},
           {"lr", c.lr},
           {"momentum", c.momentum},
           {"alpha", c.alpha},
           {"K", c.K},
           {"metric", c.metric.name()},
           {"refresh_period", c.refresh_period},
           {"pool_selection", c.pool_selection == PoolSelection::uniform ? "uniform" : "top_n"},
           {"adore_index", c.adore_index},
           {"eval_every", c.eval_every},
           {"freeze_doc", c.freeze_doc}};
}

inline void from_json(const json& j, TrainConfig& c) {
  bool lr_given = false;
  detail::read_object(j, "train config", [&](const std::string& k, const json& v) {
    if (k == "strategy") c.strategy = parse_strategy(v.get<std::string>());
    else if (k == "batch_size") c.batch_size = v.get<std::size_t>();
    else if (k == "negs_per_query") c.negs_per_query = v.get<std::size_t>();
    else if (k == "steps") c.steps = v.get<std::size_t>();
    else if (k == "optimizer") {
      const auto s = v.get<std::string>();
      if (s == "sgd") c.optimizer = OptimizerKind::sgd;
      else if (s == "adam") c.optimizer = OptimizerKind::adam;
      else fail("train config: optimizer must be sgd or adam");
    } else if (k == "lr") {
      c.lr = v.get<double>();
      lr_given = true;
    } else if (k == "momentum") c.momentum = v.get<double>();
    else if (k == "alpha") c.alpha = v.get<double>();
    else if (k == "K") c.K = v.get<std::size_t>();
    else if (k == "metric") c.metric = parse_metric(v.get<std::string>());
    else if (k == "refresh_period") c.refresh_period = v.get<std::size_t>();
    else if (k == "pool_selection") {
      const auto s = v.get<std::string>();
      if (s == "uniform") c.pool_selection = PoolSelection::uniform;
      else if (s == "top_n") c.pool_selection = PoolSelection::top_n;
      else fail("train config: pool_selection must be uniform or top_n");
    } else if (k == "adore_index") c.adore_index = v.get<IndexSpec>();
    else if (k == "eval_every") c.eval_every = v.get<std::size_t>();
    else if (k == "freeze_doc") c.freeze_doc = v.get<bool>();
    else return false;
    return true;
  });
  if (!lr_given) c.lr = c.optimizer == OptimizerKind::sgd ? 0.05 : 1e-3;
  c.validate();
}

// ---------------------------------------------------------------------------
// Experiment config

struct EncoderSpec {
  Arch arch = Arch::linear;
  std::uint32_t H = 8192;
  std::uint32_t d_emb = 32;
  std::uint32_t hidden = 0;
};

inline void to_json(json& j, const EncoderSpec& e) {
  j = json{{"arch", to_string(e.arch)}, {"H", e.H}, {"d_emb", e.d_emb}, {"hidden", e.hidden}};
}

inline void from_json(const json& j, EncoderSpec& e) {
  detail::read_object(j, "encoder config", [&](const std::string& k, const json& v) {
    if (k == "arch") e.arch = parse_arch(v.get<std::string>());
    else if (k == "H") e.H = v.get<std::uint32_t>();
    else if (k == "d_emb") e.d_emb = v.get<std::uint32_t>();
    else if (k == "hidden") e.hidden = v.get<std::uint32_t>();
    else return false;
    return true;
  });
  validate_shape({e.arch, e.H, e.d_emb, e.arch == Arch::mlp ? e.hidden : 0});
}

/// Either a synthetic generator config or four files.
struct DataSpec {
  std::optional<SyntheticConfig> synthetic;
  std::filesystem::path collection, train_queries, dev_queries, qrels;
};

/// Where static negatives come from: "bm25", "dense" (retrieval with the
/// starting model, i.e. the warm-up), or "file" (TSV with JSON sidecar).
struct PoolSpec {
  std::string source = "dense";
  std::size_t k_pool = 200;
  std::filesystem::path path;  // TSV; the sidecar is path + ".json"
};

struct ExperimentConfig {
  DataSpec data;
  EncoderSpec encoder;
  std::filesystem::path init_checkpoint;  // required for adore
  std::size_t warmup_steps = 0;           // BM25 static_hard warm-up first
  PoolSpec pool;
  TrainConfig train;
  std::size_t eval_topk = 50;
  std::size_t diag_queries = 200;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only

  bool needs_pool() const {
    return train.strategy == Strategy::static_hard ||
           train.strategy == Strategy::static_refresh || train.strategy == Strategy::star;
  }

  void validate() const {
    train.validate();
    if (!data.synthetic &&
        (data.collection.empty() || data.train_queries.empty() || data.qrels.empty())) {
      fail("config: data needs either 'synthetic' or collection, train_queries and qrels");
    }
    if (train.strategy == Strategy::adore && init_checkpoint.empty()) {
      fail("config: strategy adore requires 'init_checkpoint' (the document encoder)");
    }
    if (pool.source != "bm25" && pool.source != "dense" && pool.source != "file") {
      fail("config: pool source must be bm25, dense or file");
    }
    if (pool.source == "file" && pool.path.empty()) fail("config: pool source file needs 'path'");
    if (pool.k_pool == 0) fail("config: K_pool must be >= 1");
    if (eval_topk == 0) fail("config: eval_topk must be >= 1");
  }
};

/// Relative paths are resolved against `base`.
inline ExperimentConfig parse_experiment(const json& j, const std::filesystem::path& base = {}) {
  ExperimentConfig c;
  auto path = [&](const json& v) {
    std::filesystem::path p = v.get<std::string>();
    return p.is_relative() && !base.empty() ? base / p : p;
  };
  detail::read_object(j, "config", [&](const std::string& k, const json& v) {
    if (k == "data") {
      detail::read_object(v, "data config", [&](const std::string& dk, const json& dv) {
        if (dk == "synthetic") c.data.synthetic = dv.get<SyntheticConfig>();
        else if (dk == "collection") c.data.collection = path(dv);
        else if (dk == "train_queries") c.data.train_queries = path(dv);
        else if (dk == "dev_queries") c.data.dev_queries = path(dv);
        else if (dk == "qrels") c.data.qrels = path(dv);
        else return false;
        return true;
      });
    } else if (k == "encoder") c.encoder = v.get<EncoderSpec>();
    else if (k == "init_checkpoint") c.init_checkpoint = path(v);
    else if (k == "warmup_steps") c.warmup_steps = v.get<std::size_t>();
    else if (k == "pool") {
      detail::read_object(v, "pool config", [&](const std::string& pk, const json& pv) {
        if (pk == "source") c.pool.source = pv.get<std::string>();
        else if (pk == "k_pool") c.pool.k_pool = pv.get<std::size_t>();
        else if (pk == "path") c.pool.path = path(pv);
        else return false;
        return true;
      });
    } else if (k == "train") c.train = v.get<TrainConfig>();
    else if (k == "eval_topk") c.eval_topk = v.get<std::size_t>();
    else if (k == "diag_queries") c.diag_queries = v.get<std::size_t>();
    else if (k == "checkpoint_every") c.checkpoint_every = v.get<std::size_t>();
    else return false;
    return true;
  });
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& file) {
  auto in = detail::open_in(file);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail("config '", file.string(), "': ", e.what());
  }
  return parse_experiment(j, file.parent_path());
}

// ---------------------------------------------------------------------------
// Data

struct Workspace {
  Collection collection;
  QuerySplit train;
  QuerySplit dev;
  Qrels qrels;
};

inline Workspace load_workspace(const DataSpec& spec, std::uint32_t H, std::uint64_t seed) {
  Workspace ws;
  QuerySet train, dev;
  Corpus corpus;
  if (spec.synthetic) {
    auto d = generate_synthetic(*spec.synthetic, seed);
    corpus = std::move(d.corpus);
    train = std::move(d.train);
    dev = std::move(d.dev);
    ws.qrels = std::move(d.qrels);
  } else {
    corpus = load_collection(spec.collection);
    train = load_queries(spec.train_queries);
    if (!spec.dev_queries.empty()) dev = load_queries(spec.dev_queries);
    ws.qrels = load_qrels(spec.qrels);
  }
  ws.collection = Collection(std::move(corpus), H);
  ws.train = QuerySplit(std::move(train), ws.qrels, ws.collection);
  ws.dev = QuerySplit(std::move(dev), ws.qrels, ws.collection);
  return ws;
}

// ---------------------------------------------------------------------------
// Train command

struct TrainOutcome {
  DualEncoderParams start;  // after warm-up, if any
  TrainResult result;
};

inline TrainOutcome run_training(const ExperimentConfig& cfg, const Workspace& ws,
                                 std::uint64_t seed,
                                 const std::filesystem::path& out_dir = {}) {
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  DualEncoderParams init =
      cfg.init_checkpoint.empty()
          ? init_params(cfg.encoder.arch, cfg.encoder.H, cfg.encoder.d_emb,
                        cfg.encoder.hidden, seed)
          : load_checkpoint(cfg.init_checkpoint);
  if (init.shape.H != ws.collection.H) {
    fail("checkpoint expects H = ", init.shape.H, " but data was hashed with H = ",
         ws.collection.H);
  }
  if (cfg.warmup_steps > 0) {
    TrainConfig quick = tc;
    quick.steps = cfg.warmup_steps;
    quick.eval_every = std::max<std::size_t>(cfg.warmup_steps, 1);
    log(LogLevel::info, "warm-up: ", cfg.warmup_steps, " static_hard steps on a BM25 pool");
    init = warmup_model(ws.collection, ws.train, init, quick, cfg.pool.k_pool).params;
  }

  std::optional<NegativePool> pool;
  if (cfg.needs_pool()) {
    if (cfg.pool.source == "bm25") {
      const Bm25Index bm(ws.collection.corpus);
      pool = build_static_negatives(Bm25Retriever{&bm}, ws.train, cfg.pool.k_pool);
    } else if (cfg.pool.source == "dense") {
      const AnyIndex idx = build_exact(embed_all(init, Tower::doc, ws.collection.doc_features));
      pool = build_static_negatives(DenseRetriever{&init, &idx}, ws.train, cfg.pool.k_pool);
    } else {
      auto side = cfg.pool.path;
      side += ".json";
      pool = load_pool(ws.collection.corpus, cfg.pool.path, side);
    }
  }

  StandardEvalOptions eo{cfg.eval_topk, cfg.diag_queries};
  EvalHook base = standard_eval_hook(ws.collection, ws.dev, ws.train, eo);
  EvalHook hook = [&](std::size_t step, const DualEncoderParams& p, const NegativePool* pl) {
    if (!out_dir.empty() && cfg.checkpoint_every && step > 0 && step % cfg.checkpoint_every == 0) {
      save_checkpoint(p, out_dir / ("checkpoint_step" + std::to_string(step) + ".dnlb"));
    }
    auto rec = base(step, p, pl);
    log(LogLevel::info, "step ", step, " mrr@10 ", format_real(rec.mrr10));
    return rec;
  };
  TrainInputs in{&ws.collection, &ws.train, pool ? &*pool : nullptr};
  TrainOutcome outcome{init, train(in, tc, init, hook)};

  if (!out_dir.empty()) {
    save_checkpoint(outcome.result.params, out_dir / "checkpoint.dnlb");
    auto log_out = detail::open_out(out_dir / "train_log.csv");
    write_train_log(outcome.result.log, log_out);
    if (outcome.result.final_pool) {
      save_pool(*outcome.result.final_pool, ws.collection.corpus, out_dir / "pool.tsv",
                out_dir / "pool.tsv.json");
    }
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// Table-2 style matrix: ADORE trained against each index kind, evaluated
// through each index kind.

struct PqMatrix {
  std::vector<IndexSpec> kinds;
  std::vector<std::vector<double>> mrr;  // [train kind][test kind]
};

inline PqMatrix pq_matrix(const Collection& collection, const QuerySplit& train_split,
                          const QuerySplit& dev, const DualEncoderParams& model,
                          TrainConfig adore, const std::vector<IndexSpec>& kinds) {
  adore.strategy = Strategy::adore;
  PqMatrix m{kinds, {}};
  const auto docs = embed_all(model, Tower::doc, collection.doc_features);
  std::vector<AnyIndex> test;
  for (const auto& k : kinds) test.push_back(build_index(docs, k, adore_index_seed(adore.seed)));
  EvalOptions eo;
  eo.metrics = {{MetricKind::mrr, 10}};
  for (const auto& k : kinds) {
    adore.adore_index = k;
    log(LogLevel::info, "pq-matrix: training adore against ", k.label());
    auto res = train({&collection, &train_split, nullptr}, adore, model);
    std::vector<double> row;
    for (const auto& idx : test) row.push_back(evaluate(idx, res.params, dev, eo).means[0]);
    m.mrr.push_back(std::move(row));
  }
  return m;
}

inline void write_pq_matrix(const PqMatrix& m, std::ostream& out) {
  out << "train\\test";
  for (const auto& k : m.kinds) out << ',' << k.label();
  out << '\n';
  for (std::size_t r = 0; r < m.kinds.size(); ++r) {
    out << m.kinds[r].label();
    for (double v : m.mrr[r]) out << ',' << format_real(v);
    out << '\n';
  }
}

/// TrainLog CSV back into records.
inline std::vector<EvalRecord> read_train_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "step,loss,mrr10,topk_errors,phi,overlap") {
    fail("train log: missing or unexpected header");
  }
  std::vector<EvalRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ',')) f.push_back(cell);
    if (f.size() != 6) fail("train log line ", lineno, ": expected 6 columns");
    auto num = [&](const std::string& x) {
      return x == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(x);
    };
    try {
      out.push_back({std::stoul(f[0]), num(f[1]), num(f[2]), num(f[3]), num(f[4]), num(f[5])});
    } catch (const std::exception&) {
      fail("train log line ", lineno, ": bad number");
    }
  }
  return out;
}

}  // namespace dnlb
