#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dnlb/experiment.hpp"

namespace fs = std::filesystem;
using namespace dnlb;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(testing::TempDir()) / ("dnlb_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Result {
  int code = -1;
  std::string err;
  std::string out;
};

Result run(const std::string& args, const fs::path& dir) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string(DNLB_CLI_PATH) + " " + args + " >" + out.string() +
                          " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  };
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

const char* kSynthetic =
    R"({"n_docs": 300, "n_train_queries": 40, "n_dev_queries": 12, "n_topics": 60,
        "vocab_size": 200, "n_clusters": 8, "cluster_terms": 20})";

std::string experiment(const std::string& train, const std::string& extra = "") {
  return std::string(R"({"data": {"synthetic": )") + kSynthetic +
         R"(}, "encoder": {"H": 512, "d_emb": 8}, "pool": {"source": "bm25", "k_pool": 20},
             "train": )" + train + extra + "}";
}

std::string data_args(const fs::path& data, const std::string& split = "dev") {
  return "--collection " + (data / "collection.tsv").string() + " --queries " +
         (data / ("queries." + split + ".tsv")).string() + " --qrels " +
         (data / "qrels.tsv").string();
}

// gen-data plus a short static_hard training run, shared by several tests.
struct Fixture {
  fs::path dir, data, model;
};

const Fixture& trained() {
  static const Fixture f = [] {
    Fixture x;
    x.dir = scratch("shared");
    write_file(x.dir / "syn.json", kSynthetic);
    auto g = run("gen-data --config " + (x.dir / "syn.json").string() + " --seed 5 --out " +
                     (x.dir / "data").string(), x.dir);
    EXPECT_EQ(g.code, 0) << g.err;
    write_file(x.dir / "exp.json",
               experiment(R"({"strategy": "static_hard", "steps": 30, "eval_every": 10,
                              "batch_size": 8})"));
    auto t = run("train --config " + (x.dir / "exp.json").string() + " --seed 5 --out " +
                     (x.dir / "run").string(), x.dir);
    EXPECT_EQ(t.code, 0) << t.err;
    x.data = x.dir / "data";
    x.model = x.dir / "run" / "checkpoint.dnlb";
    return x;
  }();
  return f;
}

}  // namespace

TEST(Cli, HelpExitsZeroEverywhere) {
  const auto dir = scratch("help");
  for (const std::string sub : {"", "gen-data", "build-index", "train", "eval", "analyze"}) {
    auto r = run(sub + " --help", dir);
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("--"), std::string::npos) << sub;
  }
  auto r = run("analyze --help", dir);
  for (const char* flag : {"--mode", "--log", "--checkpoint", "--K", "--kinds", "--seed",
                           "--threads", "--out"}) {
    EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
  }
}

TEST(Cli, UsageErrorsExitTwo) {
  const auto dir = scratch("usage");
  EXPECT_EQ(run("gen-data --seed 1", dir).code, 2);
  EXPECT_EQ(run("", dir).code, 2);
  EXPECT_EQ(run("frobnicate", dir).code, 2);
  EXPECT_EQ(run("analyze --mode bogus --out " + (dir / "o").string(), dir).code, 2);
}

TEST(Cli, GenDataWritesFourFilesDeterministically) {
  const auto dir = scratch("gen");
  write_file(dir / "syn.json", kSynthetic);
  for (const char* sub : {"a", "b"}) {
    auto r = run("gen-data --config " + (dir / "syn.json").string() + " --seed 9 --out " +
                     (dir / sub).string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
  }
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 4u);
  for (const char* f : {"collection.tsv", "queries.train.tsv", "queries.dev.tsv", "qrels.tsv"}) {
    EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
  }
  write_file(dir / "bad.json", R"({"n_docs": 10, "colour": 3})");
  auto bad = run("gen-data --config " + (dir / "bad.json").string() + " --out " +
                     (dir / "c").string(), dir);
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("colour"), std::string::npos);
}

TEST(Cli, TrainLogHasOneRowPerTickAndReruns) {
  const auto& f = trained();
  std::ifstream log(f.dir / "run" / "train_log.csv");
  std::vector<std::string> lines;
  for (std::string l; std::getline(log, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 5u);  // header + ticks 0, 10, 20, 30
  EXPECT_EQ(lines[0], "step,loss,mrr10,topk_errors,phi,overlap");
  EXPECT_EQ(lines[4].substr(0, 3), "30,");

  auto again = run("train --config " + (f.dir / "exp.json").string() + " --seed 5 --out " +
                       (f.dir / "run2").string(), f.dir);
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(slurp(f.dir / "run" / "train_log.csv"), slurp(f.dir / "run2" / "train_log.csv"));
  EXPECT_EQ(slurp(f.model), slurp(f.dir / "run2" / "checkpoint.dnlb"));
}

TEST(Cli, AdoreNeedsDocumentCheckpoint) {
  const auto dir = scratch("adore");
  write_file(dir / "exp.json", experiment(R"({"strategy": "adore", "steps": 5})"));
  auto r = run("train --config " + (dir / "exp.json").string() + " --out " +
                   (dir / "o").string(), dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("init_checkpoint"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "o" / "checkpoint.dnlb"));

  const auto& f = trained();
  write_file(dir / "exp2.json",
             experiment(R"({"strategy": "adore", "steps": 5, "batch_size": 4})",
                        R"(, "init_checkpoint": ")" + f.model.string() + "\""));
  auto ok = run("train --config " + (dir / "exp2.json").string() + " --out " +
                    (dir / "o2").string(), dir);
  EXPECT_EQ(ok.code, 0) << ok.err;
  // Only the query tower moves.
  EXPECT_EQ(load_checkpoint(dir / "o2" / "checkpoint.dnlb").doc, load_checkpoint(f.model).doc);
}

TEST(Cli, TrainConfigRejectsUnknownKeys) {
  const auto dir = scratch("badcfg");
  write_file(dir / "exp.json", experiment(R"({"strategy": "random", "stepz": 5})"));
  auto r = run("train --config " + (dir / "exp.json").string() + " --out " +
                   (dir / "o").string(), dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("stepz"), std::string::npos);
}

TEST(Cli, EvalReportAndRunAgree) {
  const auto& f = trained();
  const auto out = f.dir / "eval";
  auto r = run("eval --checkpoint " + f.model.string() + " " + data_args(f.data) +
                   " --metrics r@100,mrr@10 --out " + out.string(), f.dir);
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream jin(out / "metrics.json");
  const auto rep = json::parse(jin);
  EXPECT_EQ(rep["metrics"], json({"r@100", "mrr@10"}));

  const Corpus corpus = load_collection(f.data / "collection.tsv");
  const Qrels qrels = load_qrels(f.data / "qrels.tsv");
  std::ifstream rin(out / "run.trec");
  const dnlb::Run parsed = parse_run(rin, corpus);
  ASSERT_EQ(parsed.size(), rep["per_query"].size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    const auto& q = rep["per_query"][i];
    ASSERT_EQ(parsed[i].qid, q["qid"]);
    const auto j = resolve(qrels, parsed[i].qid, corpus);
    std::size_t first = 0;
    for (std::size_t k = 0; k < parsed[i].ranked.size(); ++k) {
      if (j.is_relevant(parsed[i].ranked[k].id)) {
        first = k + 1;
        break;
      }
    }
    EXPECT_EQ(first, q["first_relevant_rank"].get<std::size_t>());
  }
}

TEST(Cli, EvalUnknownMetricListsValidNames) {
  const auto& f = trained();
  auto r = run("eval --checkpoint " + f.model.string() + " " + data_args(f.data) +
                   " --metrics map@10 --out " + (f.dir / "bad").string(), f.dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("mrr@N"), std::string::npos);
  EXPECT_NE(r.err.find("ndcg@N"), std::string::npos);
}

TEST(Cli, EvalEmptyDevSet) {
  const auto& f = trained();
  const auto dir = scratch("empty");
  write_file(dir / "none.tsv", "");
  auto r = run("eval --checkpoint " + f.model.string() + " --collection " +
                   (f.data / "collection.tsv").string() + " --queries " +
                   (dir / "none.tsv").string() + " --qrels " + (f.data / "qrels.tsv").string() +
                   " --out " + (dir / "o").string(), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream jin(dir / "o" / "metrics.json");
  const auto rep = json::parse(jin);
  EXPECT_EQ(rep["num_queries"], 0);
  EXPECT_TRUE(rep["per_query"].empty());
  EXPECT_EQ(slurp(dir / "o" / "run.trec"), "");
}

TEST(Cli, BuildIndexSizesQualityAndBadM) {
  const auto& f = trained();
  const auto dir = scratch("index");
  auto ex = run("build-index --checkpoint " + f.model.string() + " --collection " +
                    (f.data / "collection.tsv").string() + " --out " + (dir / "exact").string(),
                dir);
  ASSERT_EQ(ex.code, 0) << ex.err;
  auto pq = run("build-index --checkpoint " + f.model.string() + " --collection " +
                    (f.data / "collection.tsv").string() + " --kind pq --pq-m 4 --pq-k 16" +
                    " --queries " + (f.data / "queries.dev.tsv").string() + " --qrels " +
                    (f.data / "qrels.tsv").string() + " --seed 2 --out " + (dir / "pq").string(),
                dir);
  ASSERT_EQ(pq.code, 0) << pq.err;
  // 32-byte header; exact stores n x d f32, pq stores M x k_c x (d/M) f32 + n x M u8.
  EXPECT_EQ(fs::file_size(dir / "exact" / "index.dnix"), 32u + 300u * 8u * 4u);
  EXPECT_EQ(fs::file_size(dir / "pq" / "index.dnix"), 32u + 4u * 16u * 2u * 4u + 300u * 4u);

  const auto printed = json::parse(pq.out);
  const auto params = load_checkpoint(f.model);
  const auto index = load_index(dir / "pq" / "index.dnix");
  const auto q = index_quality(index, load_queries(f.data / "queries.dev.tsv"),
                               load_qrels(f.data / "qrels.tsv"),
                               load_collection(f.data / "collection.tsv"), params);
  EXPECT_DOUBLE_EQ(printed["mrr@10"].get<double>(), q.mrr10);
  EXPECT_EQ(printed["num_queries"].get<std::size_t>(), q.num_queries);

  auto bad = run("build-index --checkpoint " + f.model.string() + " --collection " +
                     (f.data / "collection.tsv").string() + " --kind pq --pq-m 3 --out " +
                     (dir / "bad").string(), dir);
  EXPECT_EQ(bad.code, 1);
}

TEST(Cli, AnalyzeErrorsColumnsSumToOne) {
  const auto& f = trained();
  const auto out = f.dir / "an_errors";
  auto r = run("analyze --mode errors --checkpoint " + f.model.string() + " " +
                   data_args(f.data) + " --out " + out.string(), f.dir);
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(out / "error_distribution.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "lo,hi,query_fraction,error_fraction");
  double qf = 0, ef = 0;
  while (std::getline(in, line)) {
    std::istringstream s(line);
    std::string lo, hi, a, b;
    std::getline(s, lo, ',');
    std::getline(s, hi, ',');
    std::getline(s, a, ',');
    std::getline(s, b, ',');
    qf += std::stod(a);
    ef += std::stod(b);
  }
  EXPECT_NEAR(qf, 1.0, 1e-9);
  EXPECT_NEAR(ef, 1.0, 1e-9);
}

TEST(Cli, AnalyzeCurvesFromLog) {
  const auto& f = trained();
  const auto out = f.dir / "an_curves";
  for (const char* mode : {"phi", "overlap"}) {
    auto r = run(std::string("analyze --mode ") + mode + " --log " +
                     (f.dir / "run" / "train_log.csv").string() + " --out " + out.string(),
                 f.dir);
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream in(out / (std::string(mode) + ".csv"));
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, std::string("step,") + mode);
  }
  std::ifstream in(out / "overlap.csv");
  std::size_t rows = 0;
  for (std::string l; std::getline(in, l);) ++rows;
  EXPECT_EQ(rows, 5u);
}

TEST(Cli, AnalyzeMissingInputsFail) {
  const auto dir = scratch("an_missing");
  EXPECT_EQ(run("analyze --mode phi --out " + (dir / "o").string(), dir).code, 1);
  EXPECT_EQ(run("analyze --mode theorem1 --out " + (dir / "o").string(), dir).code, 1);
}

TEST(Cli, Theorem1HoldsOnTopRankedToy) {
  const auto dir = scratch("theorem1");
  // Five single-token documents with distinct hash buckets and an identity
  // encoder: every query's own document is the unique top hit.
  const std::uint32_t H = 64;
  std::vector<std::string> tokens;
  std::set<std::uint32_t> used;
  for (int i = 0; tokens.size() < 5; ++i) {
    const std::string t = "tok" + std::to_string(i);
    const auto b = hash_features({t}, H).entries.at(0).index;
    if (used.insert(b).second) tokens.push_back(t);
  }
  std::string coll, queries, qrels;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    coll += "d" + std::to_string(i) + "\t" + tokens[i] + "\n";
    queries += "q" + std::to_string(i) + "\t" + tokens[i] + "\n";
    qrels += "q" + std::to_string(i) + "\t0\td" + std::to_string(i) + "\t1\n";
  }
  write_file(dir / "c.tsv", coll);
  write_file(dir / "q.tsv", queries);
  write_file(dir / "r.tsv", qrels);
  auto p = init_params(Arch::linear, H, H, 0, 1);
  for (auto* t : {&p.query, &p.doc}) {
    std::fill(t->w1.begin(), t->w1.end(), 0.0);
    for (std::uint32_t i = 0; i < H; ++i) t->w1[i * H + i] = 1.0;
  }
  save_checkpoint(p, dir / "m.dnlb");
  auto r = run("analyze --mode theorem1 --K 1 --checkpoint " + (dir / "m.dnlb").string() +
                   " --collection " + (dir / "c.tsv").string() + " --queries " +
                   (dir / "q.tsv").string() + " --qrels " + (dir / "r.tsv").string() + " --out " +
                   (dir / "o").string(), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir / "o" / "theorem1.json");
  const auto j = json::parse(in);
  EXPECT_TRUE(j["condition_holds"].get<bool>());
  EXPECT_EQ(j["max_errors"], 0);
  EXPECT_EQ(j["num_queries"], 5);
}

TEST(Cli, PqMatrixIsSquareWithKindLabels) {
  const auto& f = trained();
  const auto dir = scratch("pqm");
  write_file(dir / "exp.json",
             experiment(R"({"strategy": "adore", "steps": 4, "batch_size": 4, "eval_every": 4})",
                        R"(, "init_checkpoint": ")" + f.model.string() + "\""));
  auto r = run("analyze --mode pq-matrix --config " + (dir / "exp.json").string() +
                   " --checkpoint " + f.model.string() + " --seed 5 --out " + (dir / "o").string(),
               dir);
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir / "o" / "pq_matrix.csv");
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream s(line);
    for (std::string c; std::getline(s, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  const std::vector<std::string> kinds{"exact", "pq4", "pq2"};
  ASSERT_EQ(rows.size(), kinds.size() + 1);
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    EXPECT_EQ(rows[0][i + 1], kinds[i]);
    EXPECT_EQ(rows[i + 1][0], kinds[i]);
    EXPECT_EQ(rows[i + 1].size(), kinds.size() + 1);
  }
}
