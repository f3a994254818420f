// dnlb: data generation, index building, training, evaluation and analysis.

#include <iostream>

#include <CLI11.hpp>

#include "dnlb/experiment.hpp"

namespace fs = std::filesystem;
using namespace dnlb;

namespace {

struct Common {
  std::uint64_t seed = 1;
  unsigned threads = 1;  // accepted for interface parity; runs are single-threaded
  fs::path out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_seed = true) {
  if (needs_seed) cmd->add_option("--seed", c.seed, "Seed for every random choice")->capture_default_str();
  cmd->add_option("--threads", c.threads, "Worker cap (computation is single-threaded)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--out", c.out, "Output directory")->required();
}

void prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail("cannot create output directory '", out.string(), "': ", ec.message());
}

json read_json_file(const fs::path& p) {
  auto in = detail::open_in(p);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail("'", p.string(), "': ", e.what());
  }
}

void write_text(const fs::path& p, const std::string& s) {
  auto out = detail::open_out(p);
  out << s;
}

/// Collection hashed for `params`, and a split of `queries` judged by `qrels`.
struct LoadedSplit {
  Collection collection;
  Qrels qrels;
  QuerySplit split;
  QuerySet queries;
};

LoadedSplit load_split(const fs::path& collection, const fs::path& queries,
                       const fs::path& qrels, std::uint32_t H) {
  LoadedSplit s;
  s.collection = Collection(load_collection(collection), H);
  s.qrels = load_qrels(qrels);
  s.queries = load_queries(queries);
  s.split = QuerySplit(s.queries, s.qrels, s.collection);
  return s;
}

std::vector<MetricSpec> parse_metric_list(const std::string& list) {
  std::vector<MetricSpec> out;
  std::istringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(parse_metric(item));
  }
  if (out.empty()) fail("--metrics: no metrics given; valid metrics: ", kValidMetricNames);
  return out;
}

std::vector<IndexSpec> parse_kind_list(const std::string& list, std::size_t d_emb) {
  std::vector<IndexSpec> out;
  if (list.empty()) {
    out.push_back({});
    for (std::size_t M : {d_emb / 2, d_emb / 4}) {
      if (M == 0) fail("pq-matrix: d_emb = ", d_emb, " is too small for the default kinds");
      IndexSpec s;
      s.pq = true;
      s.M = M;
      out.push_back(s);
    }
    return out;
  }
  std::istringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_index_kind(item));
  return out;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  Common common;
  fs::path config;
};

void cmd_gen_data(const GenDataArgs& a) {
  SyntheticConfig cfg;
  if (!a.config.empty()) {
    try {
      cfg = read_json_file(a.config).get<SyntheticConfig>();
    } catch (const json::exception& e) {
      fail("synthetic config: ", e.what());
    }
  }
  const auto data = generate_synthetic(cfg, a.common.seed);
  prepare_out(a.common.out);
  write_collection(data.corpus, a.common.out / "collection.tsv");
  write_queries(data.train, a.common.out / "queries.train.tsv");
  write_queries(data.dev, a.common.out / "queries.dev.tsv");
  write_qrels(data.qrels, a.common.out / "qrels.tsv");
  log(LogLevel::info, "wrote ", data.corpus.size(), " documents, ", data.train.size(),
      " train and ", data.dev.size(), " dev queries");
}

struct BuildIndexArgs {
  Common common;
  fs::path checkpoint, collection, queries, qrels;
  std::string kind = "exact";
  std::size_t pq_m = 0, pq_k = 256, pq_iters = 25;
};

void cmd_build_index(const BuildIndexArgs& a) {
  const auto params = load_checkpoint(a.checkpoint);
  const Collection coll(load_collection(a.collection), params.shape.H);
  IndexSpec spec;
  if (a.kind == "pq") {
    spec.pq = true;
    spec.M = a.pq_m;
    spec.k_c = a.pq_k;
    spec.iters = a.pq_iters;
    if (spec.M == 0) fail("--kind pq needs --pq-m >= 1");
    if (spec.k_c == 0 || spec.k_c > 256) fail("--pq-k must lie in [1, 256]");
  } else if (a.kind != "exact") {
    fail("--kind must be exact or pq");
  }
  const auto index =
      build_index(embed_all(params, Tower::doc, coll.doc_features), spec, a.common.seed);
  prepare_out(a.common.out);
  save_index(index, a.common.out / "index.dnix");
  if (!a.qrels.empty() && !a.queries.empty()) {
    const auto q = index_quality(index, load_queries(a.queries), load_qrels(a.qrels),
                                 coll.corpus, params);
    const json j{{"kind", spec.label()}, {"num_queries", q.num_queries}, {"mrr@10", q.mrr10}};
    std::cout << j.dump() << '\n';
    write_text(a.common.out / "index_quality.json", j.dump(2) + "\n");
  }
}

struct TrainArgs {
  Common common;
  fs::path config;
};

void cmd_train(const TrainArgs& a) {
  const auto cfg = load_experiment(a.config);
  const std::uint32_t H = cfg.init_checkpoint.empty()
                              ? cfg.encoder.H
                              : load_checkpoint(cfg.init_checkpoint).shape.H;
  const auto ws = load_workspace(cfg.data, H, a.common.seed);
  prepare_out(a.common.out);
  run_training(cfg, ws, a.common.seed, a.common.out);
}

struct EvalArgs {
  Common common;
  fs::path checkpoint, index, collection, queries, qrels;
  std::string metrics = "mrr@10,ndcg@10,r@100";
  std::string run_out = "run.trec";
  std::size_t topk = 50;
};

void cmd_eval(const EvalArgs& a) {
  EvalOptions opt;
  opt.metrics = parse_metric_list(a.metrics);
  opt.topk = a.topk;
  const auto params = load_checkpoint(a.checkpoint);
  const auto s = load_split(a.collection, a.queries, a.qrels, params.shape.H);
  const AnyIndex index =
      a.index.empty() ? AnyIndex(build_exact(embed_all(params, Tower::doc, s.collection.doc_features)))
                      : load_index(a.index);
  if (index_size(index) != s.collection.size()) {
    fail("index holds ", index_size(index), " vectors but the collection has ",
         s.collection.size(), " documents");
  }
  Run run;
  const auto rep = evaluate(index, params, s.split, opt, &run);
  prepare_out(a.common.out);
  {
    auto out = detail::open_out(a.common.out / a.run_out);
    write_run(run, s.collection.corpus, out);
  }
  write_text(a.common.out / "metrics.json", to_json(rep).dump(2) + "\n");
  auto csv = detail::open_out(a.common.out / "metrics.csv");
  write_report_csv(rep, csv);
}

struct AnalyzeArgs {
  Common common;
  std::string mode;
  fs::path log, checkpoint, collection, queries, qrels, index, config;
  std::size_t K = 50;
  std::string kinds;
};

void cmd_analyze(const AnalyzeArgs& a) {
  auto need = [&](const fs::path& p, const char* flag) {
    if (p.empty()) fail("--mode ", a.mode, " requires ", flag);
  };
  if (a.mode == "overlap" || a.mode == "phi") {
    need(a.log, "--log");
    auto in = detail::open_in(a.log);
    const auto records = read_train_log(in);
    prepare_out(a.common.out);
    auto out = detail::open_out(a.common.out / (a.mode + ".csv"));
    out << "step," << a.mode << '\n';
    for (const auto& r : records) {
      out << r.step << ',' << format_real(a.mode == "phi" ? r.phi : r.overlap) << '\n';
    }
    return;
  }
  if (a.mode == "errors" || a.mode == "theorem1") {
    need(a.checkpoint, "--checkpoint");
    need(a.collection, "--collection");
    need(a.queries, "--queries");
    need(a.qrels, "--qrels");
    const auto params = load_checkpoint(a.checkpoint);
    const auto s = load_split(a.collection, a.queries, a.qrels, params.shape.H);
    const AnyIndex index =
        a.index.empty()
            ? AnyIndex(build_exact(embed_all(params, Tower::doc, s.collection.doc_features)))
            : load_index(a.index);
    const auto profiles = profiles_for(index, params, s.split);
    prepare_out(a.common.out);
    if (a.mode == "theorem1") {
      const auto r = theorem1_audit(profiles, a.K);
      const json j{{"K", a.K},
                   {"num_queries", profiles.size()},
                   {"condition_holds", r.condition_holds},
                   {"max_errors", r.max_errors},
                   {"objective_random", r.objective_random},
                   {"objective_topk", r.objective_topk}};
      write_text(a.common.out / "theorem1.json", j.dump(2) + "\n");
      std::cout << j.dump() << '\n';
      return;
    }
    std::vector<double> totals;
    for (const auto& p : profiles) totals.push_back(static_cast<double>(p.total_errors()));
    auto out = detail::open_out(a.common.out / "error_distribution.csv");
    out << "lo,hi,query_fraction,error_fraction\n";
    for (const auto& b : error_distribution(totals)) {
      out << format_real(b.lo) << ',' << (std::isinf(b.hi) ? "inf" : format_real(b.hi)) << ','
          << format_real(b.query_fraction) << ',' << format_real(b.error_fraction) << '\n';
    }
    return;
  }
  if (a.mode == "pq-matrix") {
    need(a.config, "--config");
    need(a.checkpoint, "--checkpoint");
    const auto cfg = load_experiment(a.config);
    const auto model = load_checkpoint(a.checkpoint);
    const auto ws = load_workspace(cfg.data, model.shape.H, a.common.seed);
    TrainConfig adore = cfg.train;
    adore.seed = a.common.seed;
    const auto m = pq_matrix(ws.collection, ws.train, ws.dev, model, adore,
                             parse_kind_list(a.kinds, model.shape.d_emb));
    prepare_out(a.common.out);
    auto out = detail::open_out(a.common.out / "pq_matrix.csv");
    write_pq_matrix(m, out);
    return;
  }
  fail("unknown --mode '", a.mode, "' (errors, overlap, phi, theorem1, pq-matrix)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense-retrieval negative-sampling lab"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic corpus, queries and qrels");
  g->add_option("--config", gen.config, "Synthetic generator config (JSON); defaults if omitted")
      ->check(CLI::ExistingFile);
  add_common(g, gen.common);

  BuildIndexArgs bi;
  auto* b = app.add_subcommand("build-index", "Encode the collection and write an index file");
  b->add_option("--checkpoint", bi.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  b->add_option("--collection", bi.collection, "Collection TSV")->required()->check(CLI::ExistingFile);
  b->add_option("--kind", bi.kind, "exact or pq")->check(CLI::IsMember({"exact", "pq"}))->capture_default_str();
  b->add_option("--pq-m", bi.pq_m, "PQ sub-spaces M (must divide d_emb)");
  b->add_option("--pq-k", bi.pq_k, "PQ centroids per sub-space")->capture_default_str();
  b->add_option("--pq-iters", bi.pq_iters, "k-means iterations")->capture_default_str();
  b->add_option("--queries", bi.queries, "Queries TSV; with --qrels prints index quality")->check(CLI::ExistingFile);
  b->add_option("--qrels", bi.qrels, "Qrels TSV")->check(CLI::ExistingFile);
  add_common(b, bi.common);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a dual encoder; writes checkpoint and train log");
  t->add_option("--config", tr.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  add_common(t, tr.common);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint; writes a TREC run and a report");
  e->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  e->add_option("--index", ev.index, "Index file (default: exact index from the doc tower)")
      ->check(CLI::ExistingFile);
  e->add_option("--collection", ev.collection, "Collection TSV")->required()->check(CLI::ExistingFile);
  e->add_option("--queries", ev.queries, "Queries TSV")->required()->check(CLI::ExistingFile);
  e->add_option("--qrels", ev.qrels, "Qrels TSV")->required()->check(CLI::ExistingFile);
  e->add_option("--metrics", ev.metrics, "Comma-separated metrics")->capture_default_str();
  e->add_option("--run-out", ev.run_out, "Run file name under --out")->capture_default_str();
  e->add_option("--topk", ev.topk, "K for top-K pairwise errors")->check(CLI::PositiveNumber)->capture_default_str();
  add_common(e, ev.common, false);

  AnalyzeArgs an;
  auto* z = app.add_subcommand("analyze", "Diagnostics: error shares, pool curves, audits, PQ matrix");
  z->add_option("--mode", an.mode, "errors | overlap | phi | theorem1 | pq-matrix")
      ->required()
      ->check(CLI::IsMember({"errors", "overlap", "phi", "theorem1", "pq-matrix"}));
  z->add_option("--log", an.log, "Train log CSV (overlap, phi)")->check(CLI::ExistingFile);
  z->add_option("--checkpoint", an.checkpoint, "Model checkpoint (errors, theorem1, pq-matrix)")
      ->check(CLI::ExistingFile);
  z->add_option("--collection", an.collection, "Collection TSV (errors, theorem1)")->check(CLI::ExistingFile);
  z->add_option("--queries", an.queries, "Queries TSV (errors, theorem1)")->check(CLI::ExistingFile);
  z->add_option("--qrels", an.qrels, "Qrels TSV (errors, theorem1)")->check(CLI::ExistingFile);
  z->add_option("--index", an.index, "Index file (errors, theorem1; default exact)")->check(CLI::ExistingFile);
  z->add_option("--K", an.K, "Clamp K (theorem1)")->check(CLI::PositiveNumber)->capture_default_str();
  z->add_option("--config", an.config, "Experiment config: data and ADORE settings (pq-matrix)")
      ->check(CLI::ExistingFile);
  z->add_option("--kinds", an.kinds, "Index kinds, e.g. exact,pq16,pq8 (pq-matrix; default exact,pq{d/2},pq{d/4})");
  add_common(z, an.common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (g->parsed()) cmd_gen_data(gen);
    else if (b->parsed()) cmd_build_index(bi);
    else if (t->parsed()) cmd_train(tr);
    else if (e->parsed()) cmd_eval(ev);
    else if (z->parsed()) cmd_analyze(an);
  } catch (const std::exception& ex) {
    log(LogLevel::error, ex.what());
    return 1;
  }
  return 0;
}
