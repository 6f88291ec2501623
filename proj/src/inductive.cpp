#include "citekg/inductive.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "citekg/kernels.hpp"
#include "json.hpp"

namespace citekg::ind {

namespace {

constexpr double kLnEps = 1e-5;

template <typename E>
struct Names {
  E value;
  std::string_view name;
};

constexpr Names<EncoderKind> kEncoders[] = {{EncoderKind::GraphSage, "graphsage"},
                                            {EncoderKind::Rgcn, "rgcn"}};
constexpr Names<Variant> kVariants[] = {{Variant::E, "E"}, {Variant::H, "H"}, {Variant::D, "D"}};
constexpr Names<Aggregator> kAggregators[] = {{Aggregator::Mean, "mean"}, {Aggregator::Pool, "pool"}};
constexpr Names<Norm> kNorms[] = {{Norm::None, "none"}, {Norm::Layer, "layer"}};

template <typename E, std::size_t N>
std::string_view lookup(const Names<E> (&table)[N], E v) {
  for (const auto& n : table)
    if (n.value == v) return n.name;
  return "?";
}

template <typename E, std::size_t N>
std::optional<E> lookup(const Names<E> (&table)[N], std::string_view s) {
  for (const auto& n : table)
    if (n.name == s) return n.value;
  return std::nullopt;
}

std::uint64_t pair_key(EntityId a, EntityId b) {
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

// Message-passing structure of one layer: outputs for `dst` computed from the
// previous layer's rows of `src`.
struct Block {
  std::vector<EntityId> dst, src;
  std::vector<std::uint32_t> offsets{0};
  std::vector<std::uint32_t> nbr;  // index into src
  std::vector<std::uint8_t> type;
};

// Blocks from the input layer (front) up to `targets` (back).
std::vector<Block> sample_blocks(const Encoder& enc, const GraphView& view,
                                 std::span<const EntityId> targets, std::size_t fanout, Rng& rng,
                                 const EdgeExclusion* exclude) {
  const std::size_t K = enc.layers.size();
  std::vector<Block> blocks(K);
  std::vector<EntityId> dst(targets.begin(), targets.end());
  std::unordered_map<EntityId, std::uint32_t> index;
  for (std::size_t k = K; k-- > 0;) {
    Block& b = blocks[k];
    b.dst = dst;
    index.clear();
    for (EntityId u : b.dst) {
      auto nb = view.neighbors(u);
      auto take = [&](const GraphView::Neighbor& n) {
        auto [it, fresh] = index.try_emplace(n.node, static_cast<std::uint32_t>(b.src.size()));
        if (fresh) b.src.push_back(n.node);
        b.nbr.push_back(it->second);
        b.type.push_back(n.type);
      };
      if (fanout == 0) {
        for (const auto& n : nb)
          if (!exclude || !exclude->contains(u, n.node)) take(n);
      } else {
        for (auto i : sample_neighborhood(view, u, fanout, rng, exclude)) take(nb[i]);
      }
      b.offsets.push_back(static_cast<std::uint32_t>(b.nbr.size()));
    }
    dst = b.src;
  }
  return blocks;
}

struct LayerCache {
  std::vector<double> x;     // inputs after dropout, src x in
  std::vector<double> mask;  // dropout scales, empty when off
  std::vector<double> pool;  // graphsage pool: relu(Wp x + b), src x in
  std::vector<std::int32_t> arg;  // graphsage pool: winning src row, dst x in
  std::vector<double> m;     // graphsage: dst x in; rgcn: dst x types x in
  std::vector<double> u;     // rgcn: dst x bases x in
  std::vector<double> z;     // pre-activation, dst x out
  std::vector<double> xhat;  // layer norm
  std::vector<double> rstd;
  std::vector<double> y;     // output, dst x out
};

void matvec(const double* w, std::size_t out, std::size_t in, const double* x, double* y) {
  for (std::size_t o = 0; o < out; ++o) {
    double s = 0;
    const double* row = w + o * in;
    for (std::size_t i = 0; i < in; ++i) s += row[i] * x[i];
    y[o] = s;
  }
}

// y += W^T g; dW += g x^T
void matvec_backward(const double* w, std::size_t out, std::size_t in, const double* x,
                     const double* g, double* gx, double* gw) {
  for (std::size_t o = 0; o < out; ++o) {
    const double go = g[o];
    if (go == 0.0) continue;
    const double* row = w + o * in;
    if (gx)
      for (std::size_t i = 0; i < in; ++i) gx[i] += row[i] * go;
    if (gw) {
      double* grow = gw + o * in;
      for (std::size_t i = 0; i < in; ++i) grow[i] += go * x[i];
    }
  }
}

void forward_layer(const Encoder& enc, const LayerParams& lp, const Block& b,
                   std::vector<double> x, double dropout, Rng* rng, LayerCache& c) {
  const std::size_t in = lp.in, out = lp.out;
  const std::size_t nd = b.dst.size(), ns = b.src.size();
  const double* P = enc.params.data();
  c.mask.clear();
  if (dropout > 0 && rng) {
    c.mask.resize(x.size());
    const double keep = 1.0 - dropout;
    for (std::size_t i = 0; i < x.size(); ++i) {
      c.mask[i] = uniform01(*rng) < dropout ? 0.0 : 1.0 / keep;
      x[i] *= c.mask[i];
    }
  }
  c.x = std::move(x);
  const bool rgcn = enc.config.kind == EncoderKind::Rgcn;
  const bool pool = !rgcn && enc.config.aggregator == Aggregator::Pool;
  const std::size_t nb = enc.config.n_bases;
  if (pool) {
    c.pool.assign(ns * in, 0.0);
    for (std::size_t j = 0; j < ns; ++j) {
      double* p = c.pool.data() + j * in;
      matvec(P + lp.pool_w, in, in, c.x.data() + j * in, p);
      for (std::size_t i = 0; i < in; ++i) p[i] = std::max(0.0, p[i] + P[lp.pool_b + i]);
    }
    c.arg.assign(nd * in, -1);
  }
  c.m.assign(nd * (rgcn ? kNumEdgeTypes * in : in), 0.0);
  if (rgcn) c.u.assign(nd * nb * in, 0.0);
  c.z.assign(nd * out, 0.0);
  c.y.assign(nd * out, 0.0);
  const bool norm = enc.config.norm == Norm::Layer;
  if (norm) {
    c.xhat.assign(nd * out, 0.0);
    c.rstd.assign(nd, 0.0);
  }
  for (std::size_t d = 0; d < nd; ++d) {
    const auto lo = b.offsets[d], hi = b.offsets[d + 1];
    double* z = c.z.data() + d * out;
    if (rgcn) {
      double* m = c.m.data() + d * kNumEdgeTypes * in;
      std::array<std::size_t, kNumEdgeTypes> count{};
      for (auto e = lo; e < hi; ++e) {
        const std::size_t t = b.type[e];
        ++count[t];
        const double* xs = c.x.data() + static_cast<std::size_t>(b.nbr[e]) * in;
        for (std::size_t i = 0; i < in; ++i) m[t * in + i] += xs[i];
      }
      double* u = c.u.data() + d * nb * in;
      for (std::size_t t = 0; t < kNumEdgeTypes; ++t) {
        if (count[t] == 0) continue;
        const double inv = 1.0 / static_cast<double>(count[t]);
        for (std::size_t i = 0; i < in; ++i) m[t * in + i] *= inv;
        for (std::size_t q = 0; q < nb; ++q) {
          const double a = P[lp.coeff + t * nb + q];
          for (std::size_t i = 0; i < in; ++i) u[q * in + i] += a * m[t * in + i];
        }
      }
      std::vector<double> tmp(out);
      for (std::size_t q = 0; q < nb; ++q) {
        matvec(P + lp.basis + q * out * in, out, in, u + q * in, tmp.data());
        for (std::size_t o = 0; o < out; ++o) z[o] += tmp[o];
      }
    } else {
      double* m = c.m.data() + d * in;
      if (pool) {
        std::int32_t* arg = c.arg.data() + d * in;
        for (auto e = lo; e < hi; ++e) {
          const double* p = c.pool.data() + static_cast<std::size_t>(b.nbr[e]) * in;
          for (std::size_t i = 0; i < in; ++i)
            if (arg[i] < 0 || p[i] > m[i]) {
              m[i] = p[i];
              arg[i] = static_cast<std::int32_t>(b.nbr[e]);
            }
        }
      } else if (hi > lo) {
        for (auto e = lo; e < hi; ++e) {
          const double* xs = c.x.data() + static_cast<std::size_t>(b.nbr[e]) * in;
          for (std::size_t i = 0; i < in; ++i) m[i] += xs[i];
        }
        const double inv = 1.0 / static_cast<double>(hi - lo);
        for (std::size_t i = 0; i < in; ++i) m[i] *= inv;
      }
      matvec(P + lp.w, out, in, m, z);
    }
    double* y = c.y.data() + d * out;
    for (std::size_t o = 0; o < out; ++o) y[o] = std::max(0.0, z[o]);
    if (norm) {
      double mean = 0, var = 0;
      for (std::size_t o = 0; o < out; ++o) mean += y[o];
      mean /= static_cast<double>(out);
      for (std::size_t o = 0; o < out; ++o) var += (y[o] - mean) * (y[o] - mean);
      var /= static_cast<double>(out);
      const double rstd = 1.0 / std::sqrt(var + kLnEps);
      c.rstd[d] = rstd;
      double* xh = c.xhat.data() + d * out;
      for (std::size_t o = 0; o < out; ++o) {
        xh[o] = (y[o] - mean) * rstd;
        y[o] = P[lp.gain + o] * xh[o] + P[lp.bias + o];
      }
    }
  }
}

// Returns d loss / d inputs (src x in); accumulates parameter gradients.
std::vector<double> backward_layer(const Encoder& enc, const LayerParams& lp, const Block& b,
                                   const LayerCache& c, std::vector<double> gy,
                                   std::vector<double>& gp) {
  const std::size_t in = lp.in, out = lp.out;
  const std::size_t nd = b.dst.size(), ns = b.src.size();
  const double* P = enc.params.data();
  const bool rgcn = enc.config.kind == EncoderKind::Rgcn;
  const bool pool = !rgcn && enc.config.aggregator == Aggregator::Pool;
  const bool norm = enc.config.norm == Norm::Layer;
  const std::size_t nb = enc.config.n_bases;
  std::vector<double> gx(ns * in, 0.0), gpool(pool ? ns * in : 0, 0.0);
  std::vector<double> gz(out), gm(rgcn ? kNumEdgeTypes * in : in), gu(rgcn ? nb * in : 0);
  for (std::size_t d = 0; d < nd; ++d) {
    const double* g = gy.data() + d * out;
    const double* z = c.z.data() + d * out;
    if (norm) {
      const double* xh = c.xhat.data() + d * out;
      double mean_g = 0, mean_gx = 0;
      for (std::size_t o = 0; o < out; ++o) {
        gp[lp.gain + o] += g[o] * xh[o];
        gp[lp.bias + o] += g[o];
        const double gxh = g[o] * P[lp.gain + o];
        gz[o] = gxh;
        mean_g += gxh;
        mean_gx += gxh * xh[o];
      }
      mean_g /= static_cast<double>(out);
      mean_gx /= static_cast<double>(out);
      for (std::size_t o = 0; o < out; ++o) gz[o] = c.rstd[d] * (gz[o] - mean_g - xh[o] * mean_gx);
    } else {
      std::copy(g, g + out, gz.begin());
    }
    for (std::size_t o = 0; o < out; ++o)
      if (z[o] <= 0) gz[o] = 0.0;
    const auto lo = b.offsets[d], hi = b.offsets[d + 1];
    if (rgcn) {
      const double* m = c.m.data() + d * kNumEdgeTypes * in;
      const double* u = c.u.data() + d * nb * in;
      std::fill(gu.begin(), gu.end(), 0.0);
      for (std::size_t q = 0; q < nb; ++q)
        matvec_backward(P + lp.basis + q * out * in, out, in, u + q * in, gz.data(),
                        gu.data() + q * in, gp.data() + lp.basis + q * out * in);
      std::array<std::size_t, kNumEdgeTypes> count{};
      for (auto e = lo; e < hi; ++e) ++count[b.type[e]];
      std::fill(gm.begin(), gm.end(), 0.0);
      for (std::size_t t = 0; t < kNumEdgeTypes; ++t) {
        if (count[t] == 0) continue;
        for (std::size_t q = 0; q < nb; ++q) {
          double dot = 0;
          for (std::size_t i = 0; i < in; ++i) dot += gu[q * in + i] * m[t * in + i];
          gp[lp.coeff + t * nb + q] += dot;
          const double a = P[lp.coeff + t * nb + q];
          for (std::size_t i = 0; i < in; ++i) gm[t * in + i] += a * gu[q * in + i];
        }
      }
      for (auto e = lo; e < hi; ++e) {
        const std::size_t t = b.type[e];
        const double inv = 1.0 / static_cast<double>(count[t]);
        double* gxs = gx.data() + static_cast<std::size_t>(b.nbr[e]) * in;
        for (std::size_t i = 0; i < in; ++i) gxs[i] += gm[t * in + i] * inv;
      }
    } else {
      const double* m = c.m.data() + d * in;
      std::fill(gm.begin(), gm.end(), 0.0);
      matvec_backward(P + lp.w, out, in, m, gz.data(), gm.data(), gp.data() + lp.w);
      if (pool) {
        const std::int32_t* arg = c.arg.data() + d * in;
        for (std::size_t i = 0; i < in; ++i)
          if (arg[i] >= 0) gpool[static_cast<std::size_t>(arg[i]) * in + i] += gm[i];
      } else if (hi > lo) {
        const double inv = 1.0 / static_cast<double>(hi - lo);
        for (auto e = lo; e < hi; ++e) {
          double* gxs = gx.data() + static_cast<std::size_t>(b.nbr[e]) * in;
          for (std::size_t i = 0; i < in; ++i) gxs[i] += gm[i] * inv;
        }
      }
    }
  }
  if (pool) {
    for (std::size_t j = 0; j < ns; ++j) {
      double* g = gpool.data() + j * in;
      const double* p = c.pool.data() + j * in;
      for (std::size_t i = 0; i < in; ++i) {
        if (p[i] <= 0) g[i] = 0.0;
        gp[lp.pool_b + i] += g[i];
      }
      matvec_backward(P + lp.pool_w, in, in, c.x.data() + j * in, g, gx.data() + j * in,
                      gp.data() + lp.pool_w);
    }
  }
  if (!c.mask.empty())
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= c.mask[i];
  return gx;
}

std::vector<double> gather_inputs(const Encoder& enc, const GraphView& view,
                                  std::span<const EntityId> nodes) {
  const std::size_t w = enc.input_width;
  std::vector<double> x(nodes.size() * w);
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    auto row = enc.input_row(nodes[j], view);
    std::copy(row.begin(), row.end(), x.begin() + static_cast<std::ptrdiff_t>(j * w));
  }
  return x;
}

// Forward pass over sampled blocks; returns the final representations of the
// last block's dst rows.
std::vector<double> forward(const Encoder& enc, const GraphView& view, std::span<const Block> blocks,
                            double dropout, Rng* rng, std::vector<LayerCache>* caches) {
  std::vector<double> x = gather_inputs(enc, view, blocks.front().src);
  std::vector<LayerCache> local;
  auto& cs = caches ? *caches : local;
  cs.assign(blocks.size(), {});
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    forward_layer(enc, enc.layers[k], blocks[k], std::move(x), dropout, rng, cs[k]);
    x = caches ? cs[k].y : std::move(cs[k].y);
    if (!caches) cs[k] = {};
  }
  return x;
}

void fill_uniform(std::vector<double>& p, std::size_t at, std::size_t n, double bound, Rng& rng) {
  for (std::size_t i = 0; i < n; ++i) p[at + i] = uniform_real(rng, -bound, bound);
}

}  // namespace

std::string_view encoder_name(EncoderKind k) { return lookup(kEncoders, k); }
std::optional<EncoderKind> parse_encoder(std::string_view s) { return lookup(kEncoders, s); }
std::string_view variant_name(Variant v) { return lookup(kVariants, v); }
std::optional<Variant> parse_variant(std::string_view s) { return lookup(kVariants, s); }
std::string_view aggregator_name(Aggregator a) { return lookup(kAggregators, a); }
std::optional<Aggregator> parse_aggregator(std::string_view s) { return lookup(kAggregators, s); }
std::string_view norm_name(Norm n) { return lookup(kNorms, n); }
std::optional<Norm> parse_norm(std::string_view s) { return lookup(kNorms, s); }

void EncoderConfig::validate() const {
  if (layers < 1) throw ConfigError("encoder needs at least one layer");
  if (dim < 1) throw ConfigError("encoder dimension must be positive");
  if (fanout < 1) throw ConfigError("fanout must be >= 1");
  if (kind == EncoderKind::Rgcn && (n_bases < 1 || n_bases > kNumEdgeTypes))
    throw ConfigError("number of bases must be in [1, " + std::to_string(kNumEdgeTypes) + "]");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must be in [0, 1)");
  if (negatives < 1) throw ConfigError("negatives must be >= 1");
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (time_budget_s < 0) throw ConfigError("time budget must be >= 0");
}

EncoderConfig paper_defaults(EncoderKind kind, Variant variant) {
  EncoderConfig c;
  c.kind = kind;
  c.variant = variant;
  c.aggregator = Aggregator::Mean;
  c.norm = Norm::Layer;
  c.n_bases = 8;
  if (kind == EncoderKind::GraphSage) {
    switch (variant) {
      case Variant::D:
        c.negatives = 25, c.lr = 0.03, c.fanout = 15, c.dim = 100, c.dropout = 0.0;
        break;
      case Variant::H:
        c.negatives = 50, c.lr = 0.03, c.fanout = 50, c.dim = 400, c.dropout = 0.1;
        break;
      case Variant::E:
        c.negatives = 50, c.lr = 0.03, c.fanout = 25, c.dim = 400, c.dropout = 0.1;
        break;
    }
  } else {
    c.dropout = 0.0;
    switch (variant) {
      case Variant::D:
        c.negatives = 25, c.lr = 0.01, c.fanout = 25, c.dim = 100;
        break;
      case Variant::H:
        c.negatives = 25, c.lr = 0.003, c.fanout = 15, c.dim = 400;
        break;
      case Variant::E:
        c.negatives = 50, c.lr = 0.03, c.fanout = 25, c.dim = 200;
        break;
    }
  }
  return c;
}

DegreeFeatures degree_features(std::size_t n_entities, std::span<const Quad> quads) {
  DegreeFeatures f(n_entities);
  for (const Quad& q : quads) {
    const auto r = static_cast<std::size_t>(q.r);
    ++f[q.o][r];
    ++f[q.s][kNumRelations + r];
  }
  return f;
}

DegreeFeatures degree_features(const GraphStore& store) {
  return degree_features(store.num_entities(), store.quads());
}

GraphView::GraphView(std::size_t n_entities, std::span<const Quad> quads) {
  std::vector<std::pair<EntityId, Neighbor>> e;
  e.reserve(2 * quads.size());
  for (const Quad& q : quads) {
    if (q.s >= n_entities || q.o >= n_entities) throw ContractError("quad endpoint outside the view");
    const auto r = static_cast<std::uint8_t>(q.r);
    e.push_back({q.s, {q.o, static_cast<std::uint8_t>(kNumRelations + r)}});
    e.push_back({q.o, {q.s, r}});
  }
  std::sort(e.begin(), e.end());
  e.erase(std::unique(e.begin(), e.end()), e.end());
  offsets_.assign(n_entities + 1, 0);
  for (const auto& [u, n] : e) ++offsets_[u + 1];
  for (std::size_t u = 0; u < n_entities; ++u) offsets_[u + 1] += offsets_[u];
  nbrs_.reserve(e.size());
  for (const auto& [u, n] : e) nbrs_.push_back(n);

  const auto deg = degree_features(n_entities, quads);
  degree_input_ = kge::EmbeddingTable(n_entities, kNumEdgeTypes);
  for (std::size_t u = 0; u < n_entities; ++u)
    for (std::size_t t = 0; t < kNumEdgeTypes; ++t)
      degree_input_.row(u)[t] = std::log1p(static_cast<double>(deg[u][t]));
}

std::size_t GraphView::max_degree() const {
  std::size_t m = 0;
  for (std::size_t u = 0; u + 1 < offsets_.size(); ++u) m = std::max<std::size_t>(m, offsets_[u + 1] - offsets_[u]);
  return m;
}

void EdgeExclusion::add(EntityId a, EntityId b) {
  keys_.insert(pair_key(a, b));
  keys_.insert(pair_key(b, a));
}

bool EdgeExclusion::contains(EntityId a, EntityId b) const { return keys_.count(pair_key(a, b)) > 0; }

std::vector<std::uint32_t> sample_neighborhood(const GraphView& view, EntityId node,
                                               std::size_t fanout, Rng& rng,
                                               const EdgeExclusion* exclude) {
  auto nb = view.neighbors(node);
  std::vector<std::uint32_t> idx;
  idx.reserve(nb.size());
  for (std::uint32_t i = 0; i < nb.size(); ++i)
    if (!exclude || !exclude->contains(node, nb[i].node)) idx.push_back(i);
  if (idx.size() <= fanout) return idx;
  for (std::size_t i = 0; i < fanout; ++i) {
    const std::size_t j = i + uniform_index(rng, idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(fanout);
  return idx;
}

double decode_dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ContractError("embedding dimensions differ: " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  return kge::dot(a, b);
}

std::span<const double> Encoder::input_row(EntityId u, const GraphView& view) const {
  static thread_local std::vector<double> zeros;
  if (config.variant == Variant::D) return view.degree_input().row(u);
  if (input.empty()) throw ContractError("frozen input table is not attached");
  if (!known[u]) {
    zeros.assign(input_width, 0.0);
    return zeros;
  }
  return input.row(u);
}

Encoder init_encoder(const EncoderConfig& config, std::size_t n_entities,
                     const std::vector<bool>& known, const kge::Checkpoint* pretrained,
                     std::uint64_t seed) {
  config.validate();
  if (known.size() != n_entities) throw ConfigError("seen mask does not match the entity count");
  Encoder enc;
  enc.config = config;
  enc.known = known;
  Rng rng(seed);
  switch (config.variant) {
    case Variant::E:
      enc.input_width = config.dim;
      enc.input = kge::EmbeddingTable(n_entities, config.dim);
      for (std::size_t u = 0; u < n_entities; ++u)
        if (known[u])
          for (double& v : enc.input.row(u)) v = uniform_real(rng, -1.0, 1.0);
      break;
    case Variant::H:
      if (!pretrained) throw ConfigError("the H variant needs a pretrained checkpoint");
      enc.input_width = pretrained->model.table(kge::TableId::Entity).width;
      attach_pretrained(enc, *pretrained);
      enc.frozen_hash = pretrained->entity_table_hash();
      break;
    case Variant::D:
      enc.input_width = kNumEdgeTypes;
      break;
  }
  std::size_t size = 0;
  auto take = [&](std::size_t n) {
    const std::size_t at = size;
    size += n;
    return at;
  };
  const std::size_t T = kNumEdgeTypes, B = config.n_bases;
  for (std::size_t k = 0; k < config.layers; ++k) {
    LayerParams lp;
    lp.in = k == 0 ? enc.input_width : config.dim;
    lp.out = config.dim;
    if (config.kind == EncoderKind::GraphSage) {
      lp.w = take(lp.out * lp.in);
      if (config.aggregator == Aggregator::Pool) {
        lp.pool_w = take(lp.in * lp.in);
        lp.pool_b = take(lp.in);
      }
    } else {
      lp.basis = take(B * lp.out * lp.in);
      lp.coeff = take(T * B);
    }
    if (config.norm == Norm::Layer) {
      lp.gain = take(lp.out);
      lp.bias = take(lp.out);
    }
    enc.layers.push_back(lp);
  }
  enc.params.assign(size, 0.0);
  for (const auto& lp : enc.layers) {
    const double glorot = std::sqrt(6.0 / static_cast<double>(lp.in + lp.out));
    if (config.kind == EncoderKind::GraphSage) {
      fill_uniform(enc.params, lp.w, lp.out * lp.in, glorot, rng);
      if (config.aggregator == Aggregator::Pool)
        fill_uniform(enc.params, lp.pool_w, lp.in * lp.in,
                     std::sqrt(3.0 / static_cast<double>(lp.in)), rng);
    } else {
      fill_uniform(enc.params, lp.basis, B * lp.out * lp.in, glorot, rng);
      fill_uniform(enc.params, lp.coeff, T * B, std::sqrt(6.0 / static_cast<double>(T + B)), rng);
    }
    if (config.norm == Norm::Layer)
      std::fill_n(enc.params.begin() + static_cast<std::ptrdiff_t>(lp.gain), lp.out, 1.0);
  }
  return enc;
}

void attach_pretrained(Encoder& enc, const kge::Checkpoint& pretrained) {
  const auto& tab = pretrained.model.table(kge::TableId::Entity);
  if (tab.rows != enc.num_entities())
    throw ConfigError("pretrained checkpoint has " + std::to_string(tab.rows) +
                      " entities, the graph has " + std::to_string(enc.num_entities()));
  if (tab.width != enc.input_width)
    throw ConfigError("pretrained embedding width does not match the encoder input");
  if (enc.frozen_hash != 0 && pretrained.entity_table_hash() != enc.frozen_hash)
    throw ConfigError("pretrained checkpoint does not match the one the encoder was trained on");
  enc.input = tab;
}

double batch_loss(const Encoder& enc, const GraphView& view, const PairBatch& batch,
                  const LossOptions& opts, Rng& rng, Gradients* grads) {
  if (batch.positives.empty()) throw ContractError("empty batch");
  // distinct target nodes
  std::vector<EntityId> targets;
  std::unordered_map<EntityId, std::uint32_t> pos;
  auto slot = [&](EntityId e) {
    auto [it, fresh] = pos.try_emplace(e, static_cast<std::uint32_t>(targets.size()));
    if (fresh) targets.push_back(e);
    return it->second;
  };
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (auto [u, v] : batch.positives) pairs.emplace_back(slot(u), slot(v));
  std::vector<std::uint32_t> negs;
  for (EntityId n : batch.negatives) negs.push_back(slot(n));

  EdgeExclusion exclude;
  if (opts.exclude_positive_edges)
    for (auto [u, v] : batch.positives) exclude.add(u, v);
  const auto blocks = sample_blocks(enc, view, targets, opts.fanout, rng,
                                    exclude.empty() ? nullptr : &exclude);
  std::vector<LayerCache> caches;
  const auto h = forward(enc, view, blocks, opts.dropout, opts.dropout > 0 ? &rng : nullptr,
                         grads ? &caches : nullptr);
  const std::size_t d = enc.config.dim;
  auto row = [&](std::uint32_t i) { return std::span<const double>(h.data() + i * d, d); };

  std::vector<double> gh(grads ? h.size() : 0, 0.0);
  auto grow = [&](std::uint32_t i) { return gh.data() + i * d; };
  const double scale = 1.0 / static_cast<double>(pairs.size());
  const std::size_t n = negs.size();
  std::vector<double> s(n + 1);
  double total = 0;
  for (auto [u, v] : pairs) {
    for (int side = 0; side < 2; ++side) {
      // tail side corrupts v and keeps u; head side the other way round
      const std::uint32_t keep = side == 0 ? u : v, truth = side == 0 ? v : u;
      s[0] = kge::dot(row(keep), row(truth));
      for (std::size_t j = 0; j < n; ++j) s[j + 1] = kge::dot(row(keep), row(negs[j]));
      const double top = *std::max_element(s.begin(), s.end());
      double z = 0;
      for (double x : s) z += std::exp(x - top);
      total += (top + std::log(z) - s[0]) * scale;
      if (!grads) continue;
      double* gk = grow(keep);
      for (std::size_t j = 0; j <= n; ++j) {
        const double p = std::exp(s[j] - top) / z;
        const double g = (p - (j == 0 ? 1.0 : 0.0)) * scale;
        if (g == 0.0) continue;
        const std::uint32_t other = j == 0 ? truth : negs[j - 1];
        auto ro = row(other);
        auto rk = row(keep);
        double* go = grow(other);
        for (std::size_t i = 0; i < d; ++i) {
          gk[i] += g * ro[i];
          go[i] += g * rk[i];
        }
      }
    }
  }
  if (!grads) return total;

  grads->params.assign(enc.params.size(), 0.0);
  std::vector<double> g = std::move(gh);
  for (std::size_t k = blocks.size(); k-- > 0;)
    g = backward_layer(enc, enc.layers[k], blocks[k], caches[k], std::move(g), grads->params);
  grads->input_rows.clear();
  grads->input_grads.clear();
  if (enc.config.variant == Variant::E) {
    const auto& src = blocks.front().src;
    const std::size_t w = enc.input_width;
    for (std::size_t j = 0; j < src.size(); ++j) {
      if (!enc.known[src[j]]) continue;
      grads->input_rows.push_back(src[j]);
      grads->input_grads.insert(grads->input_grads.end(), g.begin() + static_cast<std::ptrdiff_t>(j * w),
                                g.begin() + static_cast<std::ptrdiff_t>((j + 1) * w));
    }
  }
  return total;
}

kge::EmbeddingTable embed_all(const Encoder& enc, const GraphView& view) {
  const std::size_t n = view.num_nodes();
  if (n != enc.num_entities()) throw ContractError("view and encoder entity counts differ");
  Block full;
  full.dst.resize(n);
  std::iota(full.dst.begin(), full.dst.end(), 0u);
  full.src = full.dst;
  full.offsets.assign(n + 1, 0);
  for (EntityId u = 0; u < n; ++u) {
    for (const auto& nb : view.neighbors(u)) {
      full.nbr.push_back(nb.node);
      full.type.push_back(nb.type);
    }
    full.offsets[u + 1] = static_cast<std::uint32_t>(full.nbr.size());
  }
  std::vector<Block> blocks(enc.layers.size(), full);
  const auto h = forward(enc, view, blocks, 0.0, nullptr, nullptr);
  kge::EmbeddingTable out(n, enc.config.dim);
  out.values = h;
  return out;
}

std::vector<double> embed_node(const Encoder& enc, const GraphView& view, EntityId node,
                               std::size_t fanout, std::uint64_t seed) {
  Rng rng(seed);
  const EntityId target[] = {node};
  const auto blocks = sample_blocks(enc, view, target, fanout, rng, nullptr);
  return forward(enc, view, blocks, 0.0, nullptr, nullptr);
}

void EncoderScorer::score_tails(const Quad& q, std::span<const EntityId> c, std::span<double> out) const {
  auto h = emb_.row(q.s);
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = kge::dot(h, emb_.row(c[i]));
}

void EncoderScorer::score_heads(const Quad& q, std::span<const EntityId> c, std::span<double> out) const {
  auto h = emb_.row(q.o);
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = kge::dot(emb_.row(c[i]), h);
}

GraphView evaluation_view(const GraphStore& store, const TemporalSplit& split) {
  auto quads = split.training_quads();
  if (split.mode == SplitMode::Inductive) {
    const auto aux = split.auxiliary_links();
    quads.insert(quads.end(), aux.begin(), aux.end());
  }
  return GraphView(store.num_entities(), quads);
}

InductiveTrainResult train_inductive(const GraphStore& store, const TemporalSplit& split,
                                     const EncoderConfig& config,
                                     const kge::Checkpoint* pretrained, const Validator& validate) {
  config.validate();
  const std::size_t n = store.num_entities();
  if (split.seen.size() != n) throw ConfigError("split does not belong to this store");
  if (pretrained) pretrained->validate_against(store);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  Encoder enc = init_encoder(config, n, split.seen, pretrained, config.seed);
  const auto train_quads = split.training_quads();
  const GraphView view(n, train_quads);
  std::vector<std::pair<EntityId, EntityId>> positives;
  for (const Quad& q : train_quads)
    if (q.r == Relation::Cites) positives.emplace_back(q.s, q.o);
  std::sort(positives.begin(), positives.end());
  positives.erase(std::unique(positives.begin(), positives.end()), positives.end());
  std::vector<EntityId> pool;
  for (EntityId e = 0; e < n; ++e)
    if (split.seen[e]) pool.push_back(e);
  if (positives.empty()) throw ConfigError("training graph has no citation links");

  InductiveTrainResult res;
  auto log = [&](std::uint64_t step, double loss, std::optional<double> val) {
    if (!config.progress) return;
    nlohmann::json j;
    j["step"] = step;
    j["loss"] = std::isfinite(loss) ? nlohmann::json(loss) : nlohmann::json(nullptr);
    j["val_mrr"] = val ? nlohmann::json(*val) : nlohmann::json(nullptr);
    j["elapsed_s"] = elapsed();
    *config.progress << j.dump() << '\n';
  };
  auto consider = [&](double loss) {
    std::optional<double> val;
    if (validate) val = validate(enc);
    log(enc.step, loss, val);
    if (val && (!res.best_val_mrr || *val > *res.best_val_mrr)) {
      res.best_val_mrr = val;
      res.best = enc;
    }
  };

  res.best = enc;
  if (config.time_budget_s <= 0) {
    if (validate) res.best_val_mrr = validate(enc);
    log(0, std::nan(""), res.best_val_mrr);
    res.last = enc;
    return res;
  }

  // Adam; input rows are updated lazily, only when touched
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> m1(enc.params.size(), 0.0), m2(enc.params.size(), 0.0);
  std::vector<double> in1(enc.input.values.size(), 0.0), in2(enc.input.values.size(), 0.0);
  Rng rng(mix_seed(config.seed, 1));
  std::vector<std::uint32_t> perm(positives.size());
  std::iota(perm.begin(), perm.end(), 0u);
  std::size_t at = perm.size();
  const double limit = config.max_epochs > 0 ? config.max_epochs * static_cast<double>(perm.size())
                                             : std::numeric_limits<double>::infinity();
  double consumed = 0;
  PairBatch batch;
  Gradients g;
  LossOptions lo;
  lo.fanout = config.fanout;
  lo.dropout = config.dropout;
  double loss_acc = 0;
  std::size_t loss_n = 0;
  while (elapsed() < config.time_budget_s && consumed < limit &&
         (!config.max_steps || res.steps < config.max_steps)) {
    batch.positives.clear();
    while (batch.positives.size() < config.batch_size && consumed < limit) {
      if (at == perm.size()) {
        shuffle(perm, rng);
        at = 0;
      }
      batch.positives.push_back(positives[perm[at++]]);
      consumed += 1;
    }
    batch.negatives.resize(config.negatives);
    for (auto& e : batch.negatives) e = pool[uniform_index(rng, pool.size())];
    const double loss = batch_loss(enc, view, batch, lo, rng, &g);
    bool finite = std::isfinite(loss);
    for (double x : g.params) finite = finite && std::isfinite(x);
    for (double x : g.input_grads) finite = finite && std::isfinite(x);
    if (!finite) {
      res.diverged = true;
      break;
    }
    ++enc.step;
    ++res.steps;
    const double t = static_cast<double>(enc.step);
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    const double lr = config.lr;
    auto adam = [&](double& p, double& a, double& b, double gr) {
      a = b1 * a + (1 - b1) * gr;
      b = b2 * b + (1 - b2) * gr * gr;
      p -= lr * (a / c1) / (std::sqrt(b / c2) + eps);
    };
    for (std::size_t i = 0; i < enc.params.size(); ++i) adam(enc.params[i], m1[i], m2[i], g.params[i]);
    const std::size_t w = enc.input_width;
    for (std::size_t r = 0; r < g.input_rows.size(); ++r) {
      const std::size_t base = static_cast<std::size_t>(g.input_rows[r]) * w;
      for (std::size_t i = 0; i < w; ++i)
        adam(enc.input.values[base + i], in1[base + i], in2[base + i], g.input_grads[r * w + i]);
    }
    loss_acc += loss;
    ++loss_n;
    res.final_loss = loss;
    if (config.eval_every && enc.step % config.eval_every == 0) {
      consider(loss_acc / static_cast<double>(loss_n));
      loss_acc = 0;
      loss_n = 0;
    }
  }
  res.elapsed_s = elapsed();
  if (!(config.eval_every && res.steps && enc.step % config.eval_every == 0))
    consider(loss_n ? loss_acc / static_cast<double>(loss_n) : std::nan(""));
  res.last = enc;
  if (!validate) res.best = enc;
  return res;
}

void save_encoder(const Encoder& enc, std::ostream& out) {
  BinaryWriter w(out);
  const auto& c = enc.config;
  w.bytes("KGI1");
  w.pod<std::uint32_t>(1);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.kind));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.variant));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.layers));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.aggregator));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.norm));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.n_bases));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.dim));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.fanout));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.negatives));
  w.pod(c.dropout);
  w.pod(c.lr);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(enc.input_width));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(enc.num_entities()));
  w.pod<std::uint64_t>(enc.step);
  w.pod<std::uint64_t>(enc.frozen_hash);
  std::string bits((enc.num_entities() + 7) / 8, '\0');
  for (std::size_t u = 0; u < enc.num_entities(); ++u)
    if (enc.known[u]) bits[u / 8] = static_cast<char>(bits[u / 8] | (1 << (u % 8)));
  w.bytes(bits);
  w.pod<std::uint64_t>(enc.params.size());
  w.f32_array(enc.params);
  const bool has_input = c.variant == Variant::E;
  w.pod<std::uint8_t>(has_input ? 1 : 0);
  if (has_input) w.f32_array(enc.input.values);
}

Encoder load_encoder(std::istream& in, const std::string& source) {
  BinaryReader rd(in, source);
  rd.expect_magic("KGI1");
  if (rd.pod<std::uint32_t>() != 1) rd.fail("unsupported KGI1 version");
  EncoderConfig c;
  const auto kind = rd.pod<std::uint32_t>();
  const auto variant = rd.pod<std::uint32_t>();
  if (kind > 1) rd.fail("unknown encoder kind");
  if (variant > 2) rd.fail("unknown encoder variant");
  c.kind = static_cast<EncoderKind>(kind);
  c.variant = static_cast<Variant>(variant);
  c.layers = rd.pod<std::uint32_t>();
  const auto agg = rd.pod<std::uint32_t>();
  const auto norm = rd.pod<std::uint32_t>();
  if (agg > 1 || norm > 1) rd.fail("unknown aggregator or normalization");
  c.aggregator = static_cast<Aggregator>(agg);
  c.norm = static_cast<Norm>(norm);
  c.n_bases = rd.pod<std::uint32_t>();
  c.dim = rd.pod<std::uint32_t>();
  c.fanout = rd.pod<std::uint32_t>();
  c.negatives = rd.pod<std::uint32_t>();
  c.dropout = rd.pod<double>();
  c.lr = rd.pod<double>();
  const auto width = rd.pod<std::uint32_t>();
  const auto n = rd.pod<std::uint32_t>();
  const auto step = rd.pod<std::uint64_t>();
  const auto hash = rd.pod<std::uint64_t>();
  const std::string bits = rd.bytes((n + 7) / 8);
  std::vector<bool> known(n);
  for (std::size_t u = 0; u < n; ++u) known[u] = (bits[u / 8] >> (u % 8)) & 1;
  try {
    c.validate();
  } catch (const ConfigError& e) {
    rd.fail(e.what());
  }

  // rebuild the layout, then overwrite the values
  Encoder enc;
  if (c.variant == Variant::H) {
    kge::Checkpoint stub;
    stub.model = kge::Model(kge::ModelConfig{}, n, kNumRelations, {});
    stub.model.table(kge::TableId::Entity) = kge::EmbeddingTable(n, width);
    enc = init_encoder(c, n, known, &stub, 0);
    enc.input = {};
  } else {
    enc = init_encoder(c, n, known, nullptr, 0);
    if (enc.input_width != width) rd.fail("input width does not match the encoder config");
  }
  enc.step = step;
  enc.frozen_hash = hash;
  if (rd.pod<std::uint64_t>() != enc.params.size()) rd.fail("parameter count does not match the config");
  rd.f32_array(enc.params);
  const bool has_input = rd.pod<std::uint8_t>() != 0;
  if (has_input != (c.variant == Variant::E)) rd.fail("input table presence does not match the variant");
  if (has_input) rd.f32_array(enc.input.values);
  return enc;
}

void save_encoder_file(const Encoder& enc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  save_encoder(enc, out);
}

Encoder load_encoder_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return load_encoder(in, path);
}

}  // namespace citekg::ind
