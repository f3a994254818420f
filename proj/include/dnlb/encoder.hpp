#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "dnlb/binary_io.hpp"
#include "dnlb/common.hpp"
#include "dnlb/corpus.hpp"

namespace dnlb {

using Embedding = std::vector<double>;
using EmbeddingGradient = std::vector<double>;

enum class Arch : std::uint32_t { linear = 0, mlp = 1 };
enum class Tower { query, doc };

inline std::string to_string(Arch a) {
  return a == Arch::linear ? "linear" : "mlp";
}

inline Arch parse_arch(const std::string& s) {
  if (s == "linear") return Arch::linear;
  if (s == "mlp") return Arch::mlp;
  fail("unknown architecture '", s, "' (expected linear|mlp)");
}

/// Weights of one tower. Linear towers use only the first layer
/// (H x d_emb); MLP towers use H x hidden, ReLU, hidden x d_emb.
/// Matrices are row-major, one row per input unit.
struct TowerWeights {
  std::vector<double> w1, b1, w2, b2;

  friend bool operator==(const TowerWeights&, const TowerWeights&) = default;
};

struct DualEncoderShape {
  Arch arch = Arch::linear;
  std::uint32_t H = 1;
  std::uint32_t d_emb = 1;
  std::uint32_t hidden = 0;  // mlp only

  std::uint32_t first_out() const {
    return arch == Arch::linear ? d_emb : hidden;
  }

  friend bool operator==(const DualEncoderShape&,
                         const DualEncoderShape&) = default;
};

struct DualEncoderParams {
  DualEncoderShape shape;
  TowerWeights query;
  TowerWeights doc;

  TowerWeights& tower(Tower t) { return t == Tower::query ? query : doc; }
  const TowerWeights& tower(Tower t) const {
    return t == Tower::query ? query : doc;
  }

  friend bool operator==(const DualEncoderParams&,
                         const DualEncoderParams&) = default;
};

/// Same layout as the parameters it differentiates.
struct ParamGradient {
  TowerWeights query;
  TowerWeights doc;

  TowerWeights& tower(Tower t) { return t == Tower::query ? query : doc; }
  const TowerWeights& tower(Tower t) const {
    return t == Tower::query ? query : doc;
  }
};

/// Named views over every parameter array, in checkpoint order.
template <typename Weights>
auto weight_blocks(Weights& q, Weights& d) {
  using Vec = std::conditional_t<std::is_const_v<Weights>,
                                 const std::vector<double>,
                                 std::vector<double>>;
  return std::vector<std::pair<std::string, Vec*>>{
      {"query.w1", &q.w1}, {"query.b1", &q.b1}, {"query.w2", &q.w2},
      {"query.b2", &q.b2}, {"doc.w1", &d.w1},   {"doc.b1", &d.b1},
      {"doc.w2", &d.w2},   {"doc.b2", &d.b2}};
}

inline auto blocks(DualEncoderParams& p) { return weight_blocks(p.query, p.doc); }
inline auto blocks(const DualEncoderParams& p) {
  return weight_blocks(p.query, p.doc);
}
inline auto blocks(ParamGradient& g) { return weight_blocks(g.query, g.doc); }
inline auto blocks(const ParamGradient& g) {
  return weight_blocks(g.query, g.doc);
}

inline TowerWeights zero_tower(const DualEncoderShape& s) {
  TowerWeights t;
  t.w1.assign(std::size_t{s.H} * s.first_out(), 0.0);
  t.b1.assign(s.first_out(), 0.0);
  if (s.arch == Arch::mlp) {
    t.w2.assign(std::size_t{s.hidden} * s.d_emb, 0.0);
    t.b2.assign(s.d_emb, 0.0);
  }
  return t;
}

inline ParamGradient zero_gradient(const DualEncoderShape& s) {
  return {zero_tower(s), zero_tower(s)};
}

inline void validate_shape(const DualEncoderShape& s) {
  if (s.H == 0 || s.d_emb == 0) fail("encoder dims must be >= 1");
  if (s.arch == Arch::mlp && s.hidden == 0) {
    fail("mlp encoder needs hidden >= 1");
  }
}

/// Glorot-uniform weights, zero biases.
inline DualEncoderParams init_params(Arch arch, std::uint32_t H,
                                     std::uint32_t d_emb, std::uint32_t hidden,
                                     std::uint64_t seed) {
  DualEncoderShape shape{arch, H, d_emb, arch == Arch::mlp ? hidden : 0};
  validate_shape(shape);
  Rng rng(mix_seed(seed, 0xe4c0ULL));
  auto fill = [&](std::vector<double>& w, std::size_t fan_in,
                  std::size_t fan_out) {
    const double bound =
        std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& x : w) x = rng.uniform(-bound, bound);
  };
  DualEncoderParams p{shape, zero_tower(shape), zero_tower(shape)};
  for (TowerWeights* t : {&p.query, &p.doc}) {
    fill(t->w1, H, shape.first_out());
    if (arch == Arch::mlp) fill(t->w2, shape.hidden, d_emb);
  }
  return p;
}

namespace detail {

inline void check_features(const FeatureVector& fv, std::uint32_t H) {
  for (const auto& f : fv.entries) {
    if (f.index >= H) {
      fail("feature index ", f.index, " out of range for H = ", H);
    }
  }
}

// First layer pre-activation: W1^T fv + b1.
inline std::vector<double> first_layer(const DualEncoderShape& s,
                                       const TowerWeights& t,
                                       const FeatureVector& fv) {
  const std::size_t out = s.first_out();
  std::vector<double> h(t.b1.begin(), t.b1.end());
  for (const auto& f : fv.entries) {
    const double* row = t.w1.data() + std::size_t{f.index} * out;
    for (std::size_t c = 0; c < out; ++c) h[c] += f.weight * row[c];
  }
  return h;
}

}  // namespace detail

inline Embedding embed(const DualEncoderParams& p, Tower tower,
                       const FeatureVector& fv) {
  detail::check_features(fv, p.shape.H);
  const TowerWeights& t = p.tower(tower);
  std::vector<double> h = detail::first_layer(p.shape, t, fv);
  if (p.shape.arch == Arch::linear) return h;
  Embedding e(t.b2.begin(), t.b2.end());
  const std::size_t d = p.shape.d_emb;
  for (std::size_t i = 0; i < p.shape.hidden; ++i) {
    const double a = h[i] > 0.0 ? h[i] : 0.0;
    if (a == 0.0) continue;
    const double* row = t.w2.data() + i * d;
    for (std::size_t c = 0; c < d; ++c) e[c] += a * row[c];
  }
  return e;
}

inline Embedding embed_query(const DualEncoderParams& p,
                             const FeatureVector& fv) {
  return embed(p, Tower::query, fv);
}

inline Embedding embed_doc(const DualEncoderParams& p,
                           const FeatureVector& fv) {
  return embed(p, Tower::doc, fv);
}

/// f(q, d): the inner product.
inline double score(std::span<const double> q_emb,
                    std::span<const double> d_emb) {
  return dot(q_emb, d_emb);
}

/// Adds d<embed(fv), g>/dparams for one tower into `out`.
inline void accumulate_backprop(const DualEncoderParams& p,
                                const FeatureVector& fv, Tower tower,
                                std::span<const double> g,
                                ParamGradient& out) {
  const auto& s = p.shape;
  if (g.size() != s.d_emb) fail("embedding gradient has wrong dimension");
  const TowerWeights& t = p.tower(tower);
  TowerWeights& gt = out.tower(tower);
  const std::size_t d = s.d_emb;
  if (s.arch == Arch::linear) {
    for (const auto& f : fv.entries) {
      double* row = gt.w1.data() + std::size_t{f.index} * d;
      for (std::size_t c = 0; c < d; ++c) row[c] += f.weight * g[c];
    }
    for (std::size_t c = 0; c < d; ++c) gt.b1[c] += g[c];
    return;
  }
  const std::vector<double> h = detail::first_layer(s, t, fv);
  std::vector<double> dh(s.hidden, 0.0);
  for (std::size_t i = 0; i < s.hidden; ++i) {
    const double a = h[i] > 0.0 ? h[i] : 0.0;
    const double* w2row = t.w2.data() + i * d;
    double* g2row = gt.w2.data() + i * d;
    double back = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      g2row[c] += a * g[c];
      back += w2row[c] * g[c];
    }
    dh[i] = h[i] > 0.0 ? back : 0.0;
  }
  for (std::size_t c = 0; c < d; ++c) gt.b2[c] += g[c];
  for (const auto& f : fv.entries) {
    double* row = gt.w1.data() + std::size_t{f.index} * s.hidden;
    for (std::size_t i = 0; i < s.hidden; ++i) row[i] += f.weight * dh[i];
  }
  for (std::size_t i = 0; i < s.hidden; ++i) gt.b1[i] += dh[i];
}

inline ParamGradient backprop(const DualEncoderParams& p,
                              const FeatureVector& fv, Tower tower,
                              std::span<const double> g) {
  ParamGradient out = zero_gradient(p.shape);
  accumulate_backprop(p, fv, tower, g, out);
  return out;
}

/// Row-major matrix of document embeddings, aligned with internal ids.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * dim, dim};
  }
  std::span<double> row(std::size_t i) {
    return {values.data() + i * dim, dim};
  }
};

inline EmbeddingMatrix embed_all(const DualEncoderParams& p, Tower tower,
                                 const std::vector<FeatureVector>& features) {
  EmbeddingMatrix m{features.size(), p.shape.d_emb, {}};
  m.values.resize(m.rows * m.dim);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const Embedding e = embed(p, tower, features[i]);
    std::copy(e.begin(), e.end(), m.row(i).begin());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (little-endian):
//   "DNLB" | u32 version=1 | u32 arch (0 linear, 1 mlp) | u32 H | u32 d_emb |
//   u32 hidden | f64 arrays in order query.w1, query.b1, query.w2, query.b2,
//   doc.w1, doc.b1, doc.w2, doc.b2 (w2/b2 empty for linear).

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const DualEncoderParams& p, std::ostream& out) {
  LeWriter w(out);
  w.magic("DNLB");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(p.shape.arch));
  w.u32(p.shape.H);
  w.u32(p.shape.d_emb);
  w.u32(p.shape.hidden);
  for (const auto& [name, vec] : blocks(p)) w.f64s(*vec);
  w.check();
}

inline void save_checkpoint(const DualEncoderParams& p,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open '", path.string(), "' for writing");
  save_checkpoint(p, out);
}

inline DualEncoderParams load_checkpoint(std::istream& in) {
  LeReader r(in);
  r.expect_magic("DNLB");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    fail("unsupported checkpoint version ", version);
  }
  const auto arch = r.u32();
  if (arch > 1) fail("unknown architecture tag ", arch);
  DualEncoderShape s{static_cast<Arch>(arch), r.u32(), r.u32(), r.u32()};
  validate_shape(s);
  if (s.arch == Arch::linear && s.hidden != 0) {
    fail("linear checkpoint with nonzero hidden size");
  }
  DualEncoderParams p{s, zero_tower(s), zero_tower(s)};
  for (auto& [name, vec] : blocks(p)) r.f64s(*vec);
  r.expect_eof();
  for (const auto& [name, vec] : blocks(p)) {
    if (!all_finite(*vec)) fail("non-finite value in checkpoint block ", name);
  }
  return p;
}

inline DualEncoderParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open '", path.string(), "' for reading");
  return load_checkpoint(in);
}

}  // namespace dnlb
