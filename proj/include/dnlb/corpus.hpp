#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "dnlb/common.hpp"

namespace dnlb {

// ---------------------------------------------------------------------------
// Data model

struct Document {
  DocId internal_id = 0;
  std::string external_id;
  std::vector<std::string> tokens;
};

class Corpus {
 public:
  Corpus() = default;

  /// Appends a document; its internal id is the current size.
  DocId add(std::string external_id, std::vector<std::string> tokens) {
    if (tokens.empty()) fail("document '", external_id, "' has no tokens");
    const auto id = static_cast<DocId>(docs_.size());
    if (!by_external_.emplace(external_id, id).second) {
      fail("duplicate document id '", external_id, "'");
    }
    docs_.push_back({id, std::move(external_id), std::move(tokens)});
    return id;
  }

  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }
  const Document& operator[](DocId id) const { return docs_.at(id); }
  const std::vector<Document>& documents() const { return docs_; }

  std::optional<DocId> find(const std::string& external_id) const {
    auto it = by_external_.find(external_id);
    if (it == by_external_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, DocId> by_external_;
};

struct QueryRecord {
  std::string qid;
  std::vector<std::string> tokens;
};

using QuerySet = std::vector<QueryRecord>;

inline constexpr int kDefaultRelevanceThreshold = 1;

/// TREC-style judgments keyed by query id and external document id.
struct Qrels {
  std::map<std::string, std::map<std::string, int>> judgments;
  int threshold = kDefaultRelevanceThreshold;

  bool judged(const std::string& qid) const {
    return judgments.count(qid) != 0;
  }

  /// Sorted internal ids with grade >= threshold. Judged documents missing
  /// from the corpus are ignored.
  std::vector<DocId> relevant(const std::string& qid,
                              const Corpus& corpus) const {
    std::vector<DocId> out;
    auto it = judgments.find(qid);
    if (it == judgments.end()) return out;
    for (const auto& [ext, grade] : it->second) {
      if (grade < threshold) continue;
      if (auto id = corpus.find(ext)) out.push_back(*id);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Grades of all judged documents present in the corpus.
  std::vector<std::pair<DocId, int>> grades(const std::string& qid,
                                            const Corpus& corpus) const {
    std::vector<std::pair<DocId, int>> out;
    auto it = judgments.find(qid);
    if (it == judgments.end()) return out;
    for (const auto& [ext, grade] : it->second) {
      if (auto id = corpus.find(ext)) out.emplace_back(*id, grade);
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

/// Judgments resolved to internal ids for one query.
struct QueryJudgments {
  std::vector<DocId> relevant;                 // sorted, grade >= threshold
  std::vector<std::pair<DocId, int>> graded;   // sorted by id, all judged

  bool is_relevant(DocId id) const {
    return std::binary_search(relevant.begin(), relevant.end(), id);
  }

  int grade(DocId id) const {
    auto it = std::lower_bound(
        graded.begin(), graded.end(), id,
        [](const std::pair<DocId, int>& p, DocId x) { return p.first < x; });
    return (it != graded.end() && it->first == id) ? it->second : 0;
  }
};

inline QueryJudgments resolve(const Qrels& qrels, const std::string& qid,
                              const Corpus& corpus) {
  return {qrels.relevant(qid, corpus), qrels.grades(qid, corpus)};
}

// ---------------------------------------------------------------------------
// Tokenization and file formats

/// Lowercases ASCII letters and splits on every non-alphanumeric byte.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace detail {

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open '", path.string(), "' for reading");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open '", path.string(), "' for writing");
  return out;
}

inline std::string join(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s.push_back(' ');
    s += tokens[i];
  }
  return s;
}

// Parses `id<TAB>text` lines; `what` names the record kind in errors.
template <typename Sink>
void read_tsv(std::istream& in, const std::string& what, Sink&& sink) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      fail(what, " line ", lineno, ": expected 'id<TAB>text'");
    }
    auto tokens = tokenize(std::string_view(line).substr(tab + 1));
    if (tokens.empty()) fail(what, " line ", lineno, ": empty text");
    sink(line.substr(0, tab), std::move(tokens), lineno);
  }
}

}  // namespace detail

inline Corpus parse_collection(std::istream& in) {
  Corpus corpus;
  detail::read_tsv(in, "collection",
                   [&](std::string id, std::vector<std::string> tokens,
                       std::size_t lineno) {
                     if (corpus.find(id)) {
                       fail("collection line ", lineno,
                            ": duplicate document id '", id, "'");
                     }
                     corpus.add(std::move(id), std::move(tokens));
                   });
  return corpus;
}

inline Corpus load_collection(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return parse_collection(in);
}

inline void write_collection(const Corpus& corpus, std::ostream& out) {
  for (const auto& d : corpus.documents()) {
    out << d.external_id << '\t' << detail::join(d.tokens) << '\n';
  }
}

inline void write_collection(const Corpus& corpus,
                             const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  write_collection(corpus, out);
}

inline QuerySet parse_queries(std::istream& in) {
  QuerySet queries;
  std::unordered_set<std::string> seen;
  detail::read_tsv(in, "queries",
                   [&](std::string id, std::vector<std::string> tokens,
                       std::size_t lineno) {
                     if (!seen.insert(id).second) {
                       fail("queries line ", lineno, ": duplicate qid '", id,
                            "'");
                     }
                     queries.push_back({std::move(id), std::move(tokens)});
                   });
  return queries;
}

inline QuerySet load_queries(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return parse_queries(in);
}

inline void write_queries(const QuerySet& queries,
                          const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  for (const auto& q : queries) {
    out << q.qid << '\t' << detail::join(q.tokens) << '\n';
  }
}

/// Whitespace-separated `qid iter docid grade`; `iter` is ignored.
inline Qrels parse_qrels(std::istream& in) {
  Qrels qrels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::string qid, iter, docid, grade_text, extra;
    if (!(fields >> qid)) continue;  // blank line
    if (!(fields >> iter >> docid >> grade_text) || (fields >> extra)) {
      fail("qrels line ", lineno, ": expected 'qid iter docid grade'");
    }
    int grade = 0;
    std::size_t used = 0;
    try {
      grade = std::stoi(grade_text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != grade_text.size() || grade_text.empty()) {
      fail("qrels line ", lineno, ": grade '", grade_text,
           "' is not an integer");
    }
    if (grade < 0) fail("qrels line ", lineno, ": negative grade ", grade);
    qrels.judgments[qid][docid] = grade;
  }
  return qrels;
}

inline Qrels load_qrels(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return parse_qrels(in);
}

inline void write_qrels(const Qrels& qrels, std::ostream& out) {
  for (const auto& [qid, docs] : qrels.judgments) {
    for (const auto& [docid, grade] : docs) {
      out << qid << " 0 " << docid << ' ' << grade << '\n';
    }
  }
}

inline void write_qrels(const Qrels& qrels,
                        const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  write_qrels(qrels, out);
}

/// Qrels restricted to the given queries.
inline Qrels subset_qrels(const Qrels& qrels, const QuerySet& queries) {
  Qrels out;
  out.threshold = qrels.threshold;
  for (const auto& q : queries) {
    auto it = qrels.judgments.find(q.qid);
    if (it != qrels.judgments.end()) out.judgments[q.qid] = it->second;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hashed features

struct Feature {
  std::uint32_t index = 0;
  double weight = 0.0;

  friend bool operator==(const Feature&, const Feature&) = default;
};

/// Sparse vector with strictly increasing indices and no zero weights.
struct FeatureVector {
  std::vector<Feature> entries;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Each token adds 1 at fnv1a64(token) mod H; collisions sum.
inline FeatureVector hash_features(const std::vector<std::string>& tokens,
                                   std::uint32_t H) {
  if (H == 0) fail("hash dimension must be >= 1");
  std::vector<std::uint32_t> idx;
  idx.reserve(tokens.size());
  for (const auto& t : tokens) {
    idx.push_back(static_cast<std::uint32_t>(fnv1a64(t) % H));
  }
  std::sort(idx.begin(), idx.end());
  FeatureVector fv;
  for (std::uint32_t i : idx) {
    if (!fv.entries.empty() && fv.entries.back().index == i) {
      fv.entries.back().weight += 1.0;
    } else {
      fv.entries.push_back({i, 1.0});
    }
  }
  return fv;
}

// ---------------------------------------------------------------------------
// Synthetic collections

/// Knobs for the synthetic generator. Documents belong to one latent topic;
/// a query is relevant to every document of its topic. Topics are grouped
/// into clusters and draw their words from the cluster's word pool, so
/// related topics overlap lexically (n_clusters = 0 draws from the whole
/// vocabulary). Queries with a lexical gap use synonym terms that never
/// occur in documents.
struct SyntheticConfig {
  std::size_t n_docs = 10000;
  std::size_t n_train_queries = 1000;
  std::size_t n_dev_queries = 200;
  std::size_t n_topics = 2000;
  std::size_t vocab_size = 1000;
  std::size_t doc_terms = 24;
  std::size_t query_terms = 4;
  double lexical_gap_fraction = 0.05;
  std::size_t topic_terms = 8;
  double topic_mass = 0.25;  // share of non-core doc tokens drawn from topic
  std::size_t n_clusters = 64;
  std::size_t cluster_terms = 30;

  void validate() const {
    if (n_docs == 0 || n_train_queries == 0 || n_dev_queries == 0 ||
        n_topics == 0 || vocab_size == 0 || doc_terms == 0 ||
        query_terms == 0 || topic_terms == 0) {
      fail("synthetic config: all counts must be >= 1");
    }
    if (!(lexical_gap_fraction >= 0.0 && lexical_gap_fraction <= 1.0)) {
      fail("synthetic config: lexical_gap_fraction must lie in [0, 1]");
    }
    if (!(topic_mass >= 0.0 && topic_mass <= 1.0)) {
      fail("synthetic config: topic_mass must lie in [0, 1]");
    }
    if (n_topics > n_docs) {
      fail("synthetic config: n_topics (", n_topics, ") exceeds n_docs (",
           n_docs, ")");
    }
    if (topic_terms > vocab_size) {
      fail("synthetic config: topic_terms exceeds vocab_size");
    }
    if (n_clusters > 0 &&
        (cluster_terms < topic_terms || cluster_terms > vocab_size)) {
      fail("synthetic config: cluster_terms must lie in [topic_terms, vocab_size]");
    }
    if (doc_terms < topic_terms) {
      fail("synthetic config: doc_terms must be >= topic_terms");
    }
  }
};

inline void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = nlohmann::json{{"n_docs", c.n_docs},
                     {"n_train_queries", c.n_train_queries},
                     {"n_dev_queries", c.n_dev_queries},
                     {"n_topics", c.n_topics},
                     {"vocab_size", c.vocab_size},
                     {"doc_terms", c.doc_terms},
                     {"query_terms", c.query_terms},
                     {"lexical_gap_fraction", c.lexical_gap_fraction},
                     {"topic_terms", c.topic_terms},
                     {"topic_mass", c.topic_mass},
                     {"n_clusters", c.n_clusters},
                     {"cluster_terms", c.cluster_terms}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  if (!j.is_object()) fail("synthetic config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "n_docs") c.n_docs = value.get<std::size_t>();
    else if (key == "n_train_queries") c.n_train_queries = value.get<std::size_t>();
    else if (key == "n_dev_queries") c.n_dev_queries = value.get<std::size_t>();
    else if (key == "n_topics") c.n_topics = value.get<std::size_t>();
    else if (key == "vocab_size") c.vocab_size = value.get<std::size_t>();
    else if (key == "doc_terms") c.doc_terms = value.get<std::size_t>();
    else if (key == "query_terms") c.query_terms = value.get<std::size_t>();
    else if (key == "lexical_gap_fraction") c.lexical_gap_fraction = value.get<double>();
    else if (key == "topic_terms") c.topic_terms = value.get<std::size_t>();
    else if (key == "topic_mass") c.topic_mass = value.get<double>();
    else if (key == "n_clusters") c.n_clusters = value.get<std::size_t>();
    else if (key == "cluster_terms") c.cluster_terms = value.get<std::size_t>();
    else fail("synthetic config: unknown key '", key, "'");
  }
}

struct SyntheticData {
  Corpus corpus;
  QuerySet train;
  QuerySet dev;
  Qrels qrels;  // judgments for both splits
  std::vector<std::size_t> doc_topic;
  std::unordered_set<std::string> gap_queries;
};

inline std::string synthetic_word(std::size_t i) {
  return "w" + std::to_string(i);
}

inline std::string synthetic_synonym(std::size_t i) {
  return "s" + std::to_string(i);
}

inline SyntheticData generate_synthetic(const SyntheticConfig& cfg,
                                        std::uint64_t seed) {
  cfg.validate();
  Rng rng(mix_seed(seed, 0x5157ULL));
  SyntheticData out;

  auto distinct_words = [&](std::size_t n, std::span<const std::size_t> from) {
    std::vector<std::size_t> words;
    std::unordered_set<std::size_t> chosen;
    while (words.size() < n) {
      const auto k = static_cast<std::size_t>(
          rng.below(from.empty() ? cfg.vocab_size : from.size()));
      const std::size_t w = from.empty() ? k : from[k];
      if (chosen.insert(w).second) words.push_back(w);
    }
    return words;
  };
  std::vector<std::vector<std::size_t>> cluster_pool(cfg.n_clusters);
  for (auto& pool : cluster_pool) pool = distinct_words(cfg.cluster_terms, {});

  // Topic vocabularies: distinct words within a topic, shared across topics.
  std::vector<std::vector<std::size_t>> topic_words(cfg.n_topics);
  for (std::size_t t = 0; t < cfg.n_topics; ++t) {
    topic_words[t] = cfg.n_clusters == 0
                         ? distinct_words(cfg.topic_terms, {})
                         : distinct_words(cfg.topic_terms,
                                          cluster_pool[t % cfg.n_clusters]);
  }

  // Every topic owns at least one document; assignment order is shuffled.
  std::vector<std::size_t> assignment(cfg.n_docs);
  for (std::size_t i = 0; i < cfg.n_docs; ++i) assignment[i] = i % cfg.n_topics;
  rng.shuffle(assignment);
  out.doc_topic = assignment;

  std::vector<std::vector<DocId>> topic_docs(cfg.n_topics);
  for (std::size_t i = 0; i < cfg.n_docs; ++i) {
    const auto& words = topic_words[assignment[i]];
    // Each document carries its topic's core words once, plus a mix of
    // repeated topic words and background noise.
    std::vector<std::string> tokens;
    tokens.reserve(cfg.doc_terms);
    for (std::size_t w : words) tokens.push_back(synthetic_word(w));
    while (tokens.size() < cfg.doc_terms) {
      if (rng.uniform() < cfg.topic_mass) {
        tokens.push_back(synthetic_word(words[rng.below(words.size())]));
      } else {
        tokens.push_back(synthetic_word(rng.below(cfg.vocab_size)));
      }
    }
    rng.shuffle(tokens);
    const DocId id = out.corpus.add("D" + std::to_string(i), std::move(tokens));
    topic_docs[assignment[i]].push_back(id);
  }

  auto make_queries = [&](std::size_t n, const std::string& prefix,
                          QuerySet& dst) {
    const auto n_gap = static_cast<std::size_t>(
        std::llround(cfg.lexical_gap_fraction * static_cast<double>(n)));
    std::vector<char> is_gap(n, 0);
    for (std::size_t i = 0; i < n_gap; ++i) is_gap[i] = 1;
    rng.shuffle(is_gap);
    for (std::size_t i = 0; i < n; ++i) {
      const auto topic = static_cast<std::size_t>(rng.below(cfg.n_topics));
      std::vector<std::size_t> words = topic_words[topic];
      rng.shuffle(words);
      words.resize(std::min(cfg.query_terms, words.size()));
      std::vector<std::string> tokens;
      for (std::size_t w : words) {
        tokens.push_back(is_gap[i] ? synthetic_synonym(w) : synthetic_word(w));
      }
      std::string qid = prefix + std::to_string(i);
      if (is_gap[i]) out.gap_queries.insert(qid);
      for (DocId d : topic_docs[topic]) {
        out.qrels.judgments[qid][out.corpus[d].external_id] = 1;
      }
      dst.push_back({std::move(qid), std::move(tokens)});
    }
  };
  make_queries(cfg.n_train_queries, "train", out.train);
  make_queries(cfg.n_dev_queries, "dev", out.dev);
  return out;
}

// ---------------------------------------------------------------------------
// BM25

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;
};

/// Inverted index with precomputed df, document lengths, and avgdl.
class Bm25Index {
 public:
  explicit Bm25Index(const Corpus& corpus, Bm25Params params = {})
      : params_(params), doc_len_(corpus.size()) {
    double total = 0.0;
    for (const auto& d : corpus.documents()) {
      doc_len_[d.internal_id] = static_cast<double>(d.tokens.size());
      total += static_cast<double>(d.tokens.size());
      std::map<std::string_view, std::uint32_t> tf;
      for (const auto& t : d.tokens) ++tf[t];
      for (const auto& [term, count] : tf) {
        postings_[std::string(term)].push_back({d.internal_id, count});
      }
    }
    avgdl_ = corpus.empty() ? 0.0 : total / static_cast<double>(corpus.size());
  }

  std::size_t size() const { return doc_len_.size(); }
  const Bm25Params& params() const { return params_; }

  double idf(std::size_t df) const {
    const double n = static_cast<double>(size());
    const double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
  }

  /// Scores of every document; query tokens are summed as given.
  std::vector<double> score_all(const std::vector<std::string>& query) const {
    std::vector<double> scores(size(), 0.0);
    for (const auto& term : query) {
      auto it = postings_.find(term);
      if (it == postings_.end()) continue;
      const double w = idf(it->second.size());
      for (const auto& p : it->second) {
        const double tf = p.tf;
        const double norm =
            params_.k1 *
            (1.0 - params_.b + params_.b * doc_len_[p.doc] / avgdl_);
        scores[p.doc] += w * tf * (params_.k1 + 1.0) / (tf + norm);
      }
    }
    return scores;
  }

  RankedList top_k(const std::vector<std::string>& query,
                   std::size_t k) const {
    if (k == 0) fail("bm25 top_k: k must be >= 1");
    if (query.empty()) return {};
    return top_k_from_scores(score_all(query), k);
  }

 private:
  struct Posting {
    DocId doc;
    std::uint32_t tf;
  };

  Bm25Params params_;
  std::vector<double> doc_len_;
  double avgdl_ = 0.0;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

inline RankedList bm25_top_k(const Bm25Index& index,
                             const std::vector<std::string>& query_tokens,
                             std::size_t k) {
  return index.top_k(query_tokens, k);
}

}  // namespace dnlb
