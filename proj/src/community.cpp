#include "citekg/community.hpp"

#include <algorithm>
#include <atomic>
#include <deque>
#include <functional>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace citekg::community {

namespace {

double pairs(double n) { return n * (n - 1) / 2; }

// Kullback-Leibler divergence between Bernoulli(x) and Bernoulli(y).
double bernoulli_kl(double x, double y) {
  x = std::clamp(x, 0.0, 1.0);
  if (x == y) return 0.0;
  if (y <= 0.0 || y >= 1.0) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  if (x > 0) d += x * std::log(x / y);
  if (x < 1) d += (1 - x) * std::log((1 - x) / (1 - y));
  return d;
}

// Incrementally maintained community statistics of a labelling of g.
class State {
 public:
  State(const Graph& g, std::vector<std::int32_t> label, std::size_t n_labels, double cap,
        const QualityOptions& q)
      : g_(g), label_(std::move(label)), q_(q), cap_(cap) {
    e_.assign(n_labels, 0.0);
    n_.assign(n_labels, 0.0);
    k_.assign(n_labels, 0.0);
    members_.assign(n_labels, 0);
    for (std::size_t v = 0; v < g.n; ++v) {
      const auto c = static_cast<std::size_t>(label_[v]);
      e_[c] += g.self_weight[v];
      n_[c] += g.size[v];
      k_[c] += g.strength[v];
      ++members_[c];
      auto nb = g.neighbors(v);
      auto w = g.neighbor_weights(v);
      for (std::size_t i = 0; i < nb.size(); ++i)
        if (nb[i] > v && label_[nb[i]] == label_[v]) e_[c] += w[i];
    }
    m_ = g.total_weight;
    p_ = pairs(g.total_size) > 0 ? m_ / pairs(g.total_size) : 0.0;
    for (std::size_t c = 0; c < n_labels; ++c) {
      e_in_ += e_[c];
      p_in_ += pairs(n_[c]);
      if (members_[c] == 0) empty_.insert(static_cast<std::int32_t>(c));
    }
    scratch_.assign(n_labels, 0.0);
  }

  const std::vector<std::int32_t>& labels() const { return label_; }
  std::int32_t label(std::size_t v) const { return label_[v]; }
  std::size_t members(std::int32_t c) const { return members_[static_cast<std::size_t>(c)]; }
  double scale() const { return q_.kind == QualityKind::Modularity ? 1.0 : 1.0 + m_; }

  double term(double e, double n, double k) const {
    switch (q_.kind) {
      case QualityKind::Modularity: {
        const double x = k / (2 * m_);
        return e / m_ - q_.resolution * x * x;
      }
      case QualityKind::Rber:
        return e - q_.resolution * p_ * pairs(n);
      case QualityKind::Significance: {
        const double np = pairs(n);
        return np > 0 ? np * bernoulli_kl(e / np, p_) : 0.0;
      }
      case QualityKind::Surprise:
        return 0.0;
    }
    return 0.0;
  }

  double surprise(double e_in, double p_in) const {
    const double total = pairs(g_.total_size);
    return m_ * bernoulli_kl(e_in / m_, total > 0 ? p_in / total : 0.0);
  }

  // Gain of moving v from its community to b, given edge weights from v to
  // the members of both (v itself excluded).
  double delta(std::size_t v, std::int32_t b, double w_va, double w_vb) const {
    const auto a = static_cast<std::size_t>(label_[v]);
    const auto bb = static_cast<std::size_t>(b);
    const double sv = g_.size[v], kv = g_.strength[v], iv = g_.self_weight[v];
    if (q_.kind == QualityKind::Surprise) {
      const double e_in = e_in_ - w_va + w_vb;
      const double p_in = p_in_ - pairs(n_[a]) + pairs(n_[a] - sv) - pairs(n_[bb]) + pairs(n_[bb] + sv);
      return surprise(e_in, p_in) - surprise(e_in_, p_in_);
    }
    return term(e_[a] - iv - w_va, n_[a] - sv, k_[a] - kv) +
           term(e_[bb] + iv + w_vb, n_[bb] + sv, k_[bb] + kv) - term(e_[a], n_[a], k_[a]) -
           term(e_[bb], n_[bb], k_[bb]);
  }

  bool fits(std::size_t v, std::int32_t b) const {
    return n_[static_cast<std::size_t>(b)] + g_.size[v] <= cap_;
  }

  void move(std::size_t v, std::int32_t b, double w_va, double w_vb) {
    const auto a = static_cast<std::size_t>(label_[v]);
    const auto bb = static_cast<std::size_t>(b);
    const double sv = g_.size[v], kv = g_.strength[v], iv = g_.self_weight[v];
    p_in_ += -pairs(n_[a]) + pairs(n_[a] - sv) - pairs(n_[bb]) + pairs(n_[bb] + sv);
    e_in_ += w_vb - w_va;
    e_[a] -= iv + w_va;
    n_[a] -= sv;
    k_[a] -= kv;
    e_[bb] += iv + w_vb;
    n_[bb] += sv;
    k_[bb] += kv;
    if (--members_[a] == 0) empty_.insert(static_cast<std::int32_t>(a));
    if (members_[bb]++ == 0) empty_.erase(b);
    label_[v] = b;
  }

  std::optional<std::int32_t> some_empty() const {
    if (empty_.empty()) return std::nullopt;
    return *empty_.begin();
  }

  // Edge weight from v to each neighboring community; `touched` lists them in
  // discovery order. The caller must call clear_weights afterwards.
  void neighbor_weights(std::size_t v, std::vector<std::int32_t>& touched,
                        std::vector<double>& acc) const {
    auto nb = g_.neighbors(v);
    auto w = g_.neighbor_weights(v);
    for (std::size_t i = 0; i < nb.size(); ++i) {
      const auto c = label_[nb[i]];
      if (acc[static_cast<std::size_t>(c)] == 0.0) touched.push_back(c);
      acc[static_cast<std::size_t>(c)] += w[i];
    }
  }

  double weight_to(std::size_t v, std::int32_t c) const {
    double s = 0;
    auto nb = g_.neighbors(v);
    auto w = g_.neighbor_weights(v);
    for (std::size_t i = 0; i < nb.size(); ++i)
      if (label_[nb[i]] == c) s += w[i];
    return s;
  }

  struct Proposal {
    std::int32_t target = -1;
    double gain = 0.0;
  };

  // Best strictly improving move of v that respects the cap.
  Proposal best_move(std::size_t v, std::vector<std::int32_t>& touched, std::vector<double>& acc) const {
    touched.clear();
    neighbor_weights(v, touched, acc);
    const std::int32_t a = label_[v];
    const double w_va = acc[static_cast<std::size_t>(a)];
    Proposal best;
    const double eps = 1e-12 * scale();
    auto consider = [&](std::int32_t b, double w_vb) {
      if (b == a || !fits(v, b)) return;
      const double d = delta(v, b, w_va, w_vb);
      if (d > eps && d > best.gain) best = {b, d};
    };
    for (auto c : touched) consider(c, acc[static_cast<std::size_t>(c)]);
    if (members_[static_cast<std::size_t>(a)] > 1)
      if (auto e = some_empty()) consider(*e, 0.0);
    for (auto c : touched) acc[static_cast<std::size_t>(c)] = 0.0;
    return best;
  }

  std::vector<double>& scratch() { return scratch_; }

 private:
  const Graph& g_;
  std::vector<std::int32_t> label_;
  QualityOptions q_;
  double cap_;
  std::vector<double> e_, n_, k_;
  std::vector<std::size_t> members_;
  std::set<std::int32_t> empty_;
  double m_ = 0, p_ = 0, e_in_ = 0, p_in_ = 0;
  std::vector<double> scratch_;
};

std::size_t local_move_sequential(State& st, const Graph& g, Rng& rng) {
  std::vector<std::uint32_t> order(g.n);
  std::iota(order.begin(), order.end(), 0u);
  shuffle(order, rng);
  std::deque<std::uint32_t> queue(order.begin(), order.end());
  std::vector<char> queued(g.n, 1);
  std::vector<std::int32_t> touched;
  auto& acc = st.scratch();
  std::size_t moves = 0;
  while (!queue.empty()) {
    const std::uint32_t v = queue.front();
    queue.pop_front();
    queued[v] = 0;
    const auto p = st.best_move(v, touched, acc);
    if (p.target < 0) continue;
    st.move(v, p.target, st.weight_to(v, st.label(v)), st.weight_to(v, p.target));
    ++moves;
    for (auto u : g.neighbors(v))
      if (!queued[u] && st.label(u) != p.target) {
        queued[u] = 1;
        queue.push_back(u);
      }
  }
  return moves;
}

// Synchronous rounds: every node proposes against the same state, then
// proposals are re-validated and applied in node-id order.
std::size_t local_move_parallel(State& st, const Graph& g, std::size_t workers, std::size_t n_labels) {
  std::size_t moves = 0;
  std::vector<State::Proposal> prop(g.n);
  for (std::size_t round = 0; round < 10000; ++round) {
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      std::vector<std::int32_t> touched;
      std::vector<double> acc(n_labels, 0.0);
      constexpr std::size_t chunk = 256;
      for (std::size_t lo; (lo = next.fetch_add(chunk)) < g.n;)
        for (std::size_t v = lo; v < std::min(g.n, lo + chunk); ++v) prop[v] = st.best_move(v, touched, acc);
    };
    if (workers <= 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    std::size_t applied = 0;
    const double eps = 1e-12 * st.scale();
    for (std::size_t v = 0; v < g.n; ++v) {
      const auto b = prop[v].target;
      if (b < 0 || b == st.label(v) || !st.fits(v, b)) continue;
      if (st.members(b) == 0 && st.members(st.label(v)) == 1) continue;
      const double w_va = st.weight_to(v, st.label(v)), w_vb = st.weight_to(v, b);
      if (st.delta(v, b, w_va, w_vb) > eps) {
        st.move(v, b, w_va, w_vb);
        ++applied;
      }
    }
    moves += applied;
    if (applied == 0) break;
  }
  return moves;
}

// Leiden refinement: inside each community, well-connected singletons merge
// into a well-connected sub-cluster with non-negative gain, picked with
// probability proportional to exp(gain / theta).
std::vector<std::int32_t> refine(const Graph& g, const std::vector<std::int32_t>& community,
                                 std::size_t n_labels, const QualityOptions& q, double randomness,
                                 Rng& rng) {
  std::vector<std::int32_t> sub(g.n);
  std::iota(sub.begin(), sub.end(), 0);
  State st(g, sub, g.n, std::numeric_limits<double>::infinity(), q);

  // Expected weight between two groups under the quality's null model.
  const double m = g.total_weight;
  const double density = g.total_size > 1 ? m / (g.total_size * (g.total_size - 1) / 2) : 0.0;
  const double gamma = q.kind == QualityKind::Modularity || q.kind == QualityKind::Rber ? q.resolution : 1.0;
  auto expected = [&](double strength_a, double size_a, double strength_b, double size_b) {
    if (q.kind == QualityKind::Modularity) return gamma * strength_a * strength_b / (2 * m);
    return gamma * density * size_a * size_b;
  };
  std::vector<double> comm_strength(n_labels, 0.0), comm_size(n_labels, 0.0);
  for (std::size_t v = 0; v < g.n; ++v) {
    comm_strength[static_cast<std::size_t>(community[v])] += g.strength[v];
    comm_size[static_cast<std::size_t>(community[v])] += g.size[v];
  }
  // per refined cluster: strength, size and weight to the rest of its community
  std::vector<double> strength(g.strength), size(g.size), external(g.n, 0.0);
  for (std::size_t v = 0; v < g.n; ++v) {
    auto nb = g.neighbors(v);
    auto w = g.neighbor_weights(v);
    for (std::size_t i = 0; i < nb.size(); ++i)
      if (community[nb[i]] == community[v]) external[v] += w[i];
  }
  auto well_connected = [&](std::size_t c, std::size_t comm) {
    return external[c] >= expected(strength[c], size[c], comm_strength[comm] - strength[c],
                                   comm_size[comm] - size[c]) - 1e-12 * st.scale();
  };

  std::vector<std::uint32_t> order(g.n);
  std::iota(order.begin(), order.end(), 0u);
  shuffle(order, rng);
  std::vector<double> acc(g.n, 0.0);
  std::vector<std::int32_t> touched, cand;
  std::vector<double> gain;
  const double eps = 1e-12 * st.scale();
  const double theta = randomness * st.scale();
  for (auto v : order) {
    const auto comm = static_cast<std::size_t>(community[v]);
    if (st.members(st.label(v)) != 1 || !well_connected(static_cast<std::size_t>(st.label(v)), comm)) continue;
    touched.clear();
    auto nb = g.neighbors(v);
    auto w = g.neighbor_weights(v);
    for (std::size_t i = 0; i < nb.size(); ++i) {
      if (community[nb[i]] != community[v]) continue;
      const auto c = st.label(nb[i]);
      if (acc[static_cast<std::size_t>(c)] == 0.0) touched.push_back(c);
      acc[static_cast<std::size_t>(c)] += w[i];
    }
    cand.clear();
    gain.clear();
    double top = -std::numeric_limits<double>::infinity();
    for (auto c : touched) {
      if (c == st.label(v) || !well_connected(static_cast<std::size_t>(c), comm)) continue;
      const double d = st.delta(v, c, 0.0, acc[static_cast<std::size_t>(c)]);
      if (d < -eps) continue;
      cand.push_back(c);
      gain.push_back(d);
      top = std::max(top, d);
    }
    if (!cand.empty()) {
      std::size_t pick = 0;
      if (theta > 0) {
        double total = 0;
        for (double& x : gain) total += x = std::exp((x - top) / theta);
        double u = uniform01(rng) * total;
        while (pick + 1 < cand.size() && (u -= gain[pick]) >= 0) ++pick;
      } else {
        pick = static_cast<std::size_t>(std::max_element(gain.begin(), gain.end()) - gain.begin());
      }
      const auto t = static_cast<std::size_t>(cand[pick]);
      const auto self = static_cast<std::size_t>(st.label(v));
      external[t] += external[self] - 2 * acc[t];
      strength[t] += strength[self];
      size[t] += size[self];
      st.move(v, cand[pick], 0.0, acc[t]);
    }
    for (auto c : touched) acc[static_cast<std::size_t>(c)] = 0.0;
  }
  // compact ids
  std::vector<std::int32_t> remap(g.n, -1), out(g.n);
  std::int32_t next = 0;
  for (std::size_t v = 0; v < g.n; ++v) {
    auto& r = remap[static_cast<std::size_t>(st.label(v))];
    if (r < 0) r = next++;
    out[v] = r;
  }
  return out;
}

Graph aggregate(const Graph& g, const std::vector<std::int32_t>& cluster, std::size_t k) {
  Graph a;
  a.n = k;
  a.self_weight.assign(k, 0.0);
  a.size.assign(k, 0.0);
  a.strength.assign(k, 0.0);
  a.total_weight = g.total_weight;
  a.total_size = g.total_size;
  std::vector<std::map<std::uint32_t, double>> adj(k);
  for (std::size_t v = 0; v < g.n; ++v) {
    const auto c = static_cast<std::size_t>(cluster[v]);
    a.self_weight[c] += g.self_weight[v];
    a.size[c] += g.size[v];
    a.strength[c] += g.strength[v];
    auto nb = g.neighbors(v);
    auto w = g.neighbor_weights(v);
    for (std::size_t i = 0; i < nb.size(); ++i) {
      const auto d = static_cast<std::size_t>(cluster[nb[i]]);
      if (d == c) {
        if (nb[i] > v) a.self_weight[c] += w[i];
      } else {
        adj[c][static_cast<std::uint32_t>(d)] += w[i];
      }
    }
  }
  a.offsets.assign(k + 1, 0);
  for (std::size_t c = 0; c < k; ++c) {
    a.offsets[c + 1] = a.offsets[c] + static_cast<std::uint32_t>(adj[c].size());
    for (auto [d, w] : adj[c]) {
      a.targets.push_back(d);
      a.weights.push_back(w);
    }
  }
  return a;
}

}  // namespace

std::string_view quality_name(QualityKind k) {
  switch (k) {
    case QualityKind::Modularity:
      return "modularity";
    case QualityKind::Rber:
      return "rber";
    case QualityKind::Significance:
      return "significance";
    case QualityKind::Surprise:
      return "surprise";
  }
  return "?";
}

std::optional<QualityKind> parse_quality(std::string_view s) {
  for (auto k : {QualityKind::Modularity, QualityKind::Rber, QualityKind::Significance,
                 QualityKind::Surprise})
    if (s == quality_name(k)) return k;
  return std::nullopt;
}

Graph Graph::from_edges(std::size_t n, std::span<const std::pair<std::uint32_t, std::uint32_t>> edges) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> e;
  for (auto [a, b] : edges) {
    if (a >= n || b >= n) throw ContractError("edge endpoint out of range");
    if (a == b) continue;
    e.emplace_back(a, b);
    e.emplace_back(b, a);
  }
  std::sort(e.begin(), e.end());
  e.erase(std::unique(e.begin(), e.end()), e.end());
  Graph g;
  g.n = n;
  g.offsets.assign(n + 1, 0);
  for (auto [a, b] : e) ++g.offsets[a + 1];
  for (std::size_t v = 0; v < n; ++v) g.offsets[v + 1] += g.offsets[v];
  g.targets.reserve(e.size());
  for (auto [a, b] : e) g.targets.push_back(b);
  g.weights.assign(e.size(), 1.0);
  g.self_weight.assign(n, 0.0);
  g.size.assign(n, 1.0);
  g.strength.assign(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) g.strength[v] = g.offsets[v + 1] - g.offsets[v];
  g.total_weight = static_cast<double>(e.size()) / 2;
  g.total_size = static_cast<double>(n);
  return g;
}

CitationGraph citation_graph(const GraphStore& store) {
  CitationGraph cg;
  auto works = store.entities_of_class(EntityClass::Work);
  cg.works.assign(works.begin(), works.end());
  std::vector<std::uint32_t> index(store.num_entities(), 0);
  for (std::size_t i = 0; i < cg.works.size(); ++i) index[cg.works[i]] = static_cast<std::uint32_t>(i);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (const Quad& q : store.quads_of(Relation::Cites)) edges.emplace_back(index[q.s], index[q.o]);
  cg.graph = Graph::from_edges(cg.works.size(), edges);
  return cg;
}

std::size_t Partition::used_labels() const {
  std::set<std::int32_t> s(label.begin(), label.end());
  return s.size();
}

void Partition::check(const Graph& g) const {
  if (label.size() != g.n) throw ContractError("partition size does not match graph");
  std::vector<double> size(n_labels, 0.0);
  for (std::size_t v = 0; v < g.n; ++v) {
    if (label[v] < 0 || static_cast<std::size_t>(label[v]) >= n_labels)
      throw ContractError("label " + std::to_string(label[v]) + " outside the budget of " +
                          std::to_string(n_labels));
    size[static_cast<std::size_t>(label[v])] += g.size[v];
  }
  for (std::size_t c = 0; c < n_labels; ++c)
    if (size[c] > cap)
      throw ContractError("community " + std::to_string(c) + " exceeds the size cap");
}

Partition init_fixed_partition(std::size_t n_nodes, std::size_t n_labels, double cap, Rng& rng) {
  if (n_labels < 1) throw ConfigError("community budget must be >= 1");
  if (!(cap >= 1)) throw ConfigError("community size cap must be >= 1");
  if (static_cast<double>(n_labels) * cap < static_cast<double>(n_nodes))
    throw ConfigError("community budget times size cap is smaller than the number of papers");
  Partition p;
  p.n_labels = n_labels;
  p.cap = cap;
  p.label.resize(n_nodes);
  std::vector<double> size(n_labels, 0.0);
  std::vector<std::int32_t> open(n_labels);
  std::iota(open.begin(), open.end(), 0);
  for (auto& l : p.label) {
    const std::size_t i = uniform_index(rng, open.size());
    l = open[i];
    if (++size[static_cast<std::size_t>(l)] >= cap) {
      open[i] = open.back();
      open.pop_back();
    }
  }
  return p;
}

std::optional<double> quality(const Graph& g, std::span<const std::int32_t> label,
                              const QualityOptions& opts) {
  if (g.total_weight <= 0) return std::nullopt;
  const auto n_labels = static_cast<std::size_t>(*std::max_element(label.begin(), label.end())) + 1;
  State st(g, std::vector<std::int32_t>(label.begin(), label.end()), n_labels,
           std::numeric_limits<double>::infinity(), opts);
  // recompute from scratch rather than trusting incremental totals
  std::vector<double> e(n_labels, 0.0), n(n_labels, 0.0), k(n_labels, 0.0);
  for (std::size_t v = 0; v < g.n; ++v) {
    const auto c = static_cast<std::size_t>(label[v]);
    e[c] += g.self_weight[v];
    n[c] += g.size[v];
    k[c] += g.strength[v];
    auto nb = g.neighbors(v);
    auto w = g.neighbor_weights(v);
    for (std::size_t i = 0; i < nb.size(); ++i)
      if (nb[i] > v && label[nb[i]] == label[v]) e[c] += w[i];
  }
  if (opts.kind == QualityKind::Surprise) {
    double e_in = 0, p_in = 0;
    for (std::size_t c = 0; c < n_labels; ++c) {
      e_in += e[c];
      p_in += pairs(n[c]);
    }
    return st.surprise(e_in, p_in);
  }
  double q = 0;
  for (std::size_t c = 0; c < n_labels; ++c)
    if (n[c] > 0) q += st.term(e[c], n[c], k[c]);
  return q;
}

LeidenResult leiden_constrained(const Graph& g, const Partition& init, const LeidenOptions& opts) {
  init.check(g);
  LeidenResult res;
  res.partition = init;
  auto& labels = res.partition.label;
  Rng rng(opts.seed);
  auto q = quality(g, labels, opts.quality);
  if (!q) return res;
  res.trace.push_back(*q);

  for (std::size_t sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    std::size_t moves = 0;
    Graph level_graph;
    const Graph* cur = &g;
    std::vector<std::int32_t> cur_labels = labels;
    std::vector<std::int32_t> base_to_cur(g.n);
    std::iota(base_to_cur.begin(), base_to_cur.end(), 0);
    while (true) {
      State st(*cur, cur_labels, init.n_labels, init.cap, opts.quality);
      moves += opts.parallel ? local_move_parallel(st, *cur, opts.workers, init.n_labels)
                             : local_move_sequential(st, *cur, rng);
      cur_labels = st.labels();
      auto sub = refine(*cur, cur_labels, init.n_labels, opts.quality, opts.randomness, rng);
      const auto k = static_cast<std::size_t>(*std::max_element(sub.begin(), sub.end())) + 1;
      if (k == cur->n) break;
      std::vector<std::int32_t> next_labels(k);
      for (std::size_t v = 0; v < cur->n; ++v) next_labels[static_cast<std::size_t>(sub[v])] = cur_labels[v];
      for (auto& m : base_to_cur) m = sub[static_cast<std::size_t>(m)];
      Graph next = aggregate(*cur, sub, k);
      level_graph = std::move(next);
      cur = &level_graph;
      cur_labels = std::move(next_labels);
    }
    for (std::size_t v = 0; v < g.n; ++v) labels[v] = cur_labels[static_cast<std::size_t>(base_to_cur[v])];
    res.partition.check(g);
    res.moves += moves;
    ++res.sweeps;
    res.trace.push_back(*quality(g, labels, opts.quality));
    if (moves == 0) break;
  }
  return res;
}

std::vector<ConceptQuality> concept_quality(const GraphStore& store, std::span<const EntityId> works,
                                            std::span<const std::int32_t> label,
                                            std::size_t n_labels) {
  const std::size_t n = store.num_entities();
  std::vector<std::vector<EntityId>> parents(n), links(n);
  for (const auto& cp : store.concept_parents()) parents[cp.child].push_back(cp.parent);
  for (const auto& cl : store.concept_links()) links[cl.work].push_back(cl.topic);

  // roots reachable from each concept
  std::vector<std::vector<EntityId>> roots(n);
  std::vector<std::uint8_t> state(n, 0);  // 0 new, 1 on stack, 2 done
  std::function<const std::vector<EntityId>&(EntityId)> roots_of = [&](EntityId c) -> const std::vector<EntityId>& {
    if (state[c] == 2) return roots[c];
    if (state[c] == 1) throw ContractError("concept hierarchy has a cycle at " + store.name(c));
    state[c] = 1;
    std::vector<EntityId> r;
    if (parents[c].empty()) r.push_back(c);
    for (EntityId p : parents[c]) {
      const auto& pr = roots_of(p);
      r.insert(r.end(), pr.begin(), pr.end());
    }
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    roots[c] = std::move(r);
    state[c] = 2;
    return roots[c];
  };

  std::vector<ConceptQuality> out(n_labels);
  std::vector<std::map<EntityId, std::size_t>> tally(n_labels);
  std::vector<bool> any_link(n_labels, false);
  for (std::size_t c = 0; c < n_labels; ++c) out[c].community = static_cast<std::int32_t>(c);
  for (std::size_t i = 0; i < works.size(); ++i) {
    if (label[i] < 0) continue;
    const auto c = static_cast<std::size_t>(label[i]);
    ++out[c].papers;
    std::set<EntityId> paper_roots;
    for (EntityId t : links[works[i]]) {
      const auto& r = roots_of(t);
      paper_roots.insert(r.begin(), r.end());
    }
    if (!links[works[i]].empty()) any_link[c] = true;
    for (EntityId r : paper_roots) ++tally[c][r];
  }
  std::vector<ConceptQuality> result;
  for (std::size_t c = 0; c < n_labels; ++c) {
    if (out[c].papers == 0) continue;
    if (any_link[c]) {
      std::size_t best = 0;
      for (auto [r, cnt] : tally[c])
        if (cnt > best) {
          best = cnt;
          out[c].root = r;
        }
      out[c].percent = 100.0 * static_cast<double>(best) / static_cast<double>(out[c].papers);
    }
    result.push_back(out[c]);
  }
  return result;
}

std::vector<std::int32_t> entity_labels(const GraphStore& store, std::span<const EntityId> works,
                                        std::span<const std::int32_t> label) {
  std::vector<std::int32_t> out(store.num_entities(), -1);
  for (std::size_t i = 0; i < works.size(); ++i) out[works[i]] = label[i];
  return out;
}

void write_partition_tsv(const GraphStore& store, std::span<const EntityId> works,
                         std::span<const std::int32_t> label, std::ostream& out) {
  out << "node\tcommunity\n";
  for (std::size_t i = 0; i < works.size(); ++i) out << store.name(works[i]) << '\t' << label[i] << '\n';
}

std::vector<std::int32_t> read_partition_tsv(const GraphStore& store, std::istream& in,
                                             const std::string& source) {
  std::vector<std::int32_t> out(store.num_entities(), -1);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(source, lineno, "expected node<TAB>community");
    const std::string node = line.substr(0, tab), comm = line.substr(tab + 1);
    if (lineno == 1 && node == "node") continue;
    const auto id = store.find(node);
    if (!id) throw ParseError(source, lineno, "unknown node '" + node + "'");
    try {
      std::size_t used = 0;
      const int v = std::stoi(comm, &used);
      if (used != comm.size() || v < 0) throw std::invalid_argument("bad");
      out[*id] = v;
    } catch (const std::exception&) {
      throw ParseError(source, lineno, "community must be a non-negative integer");
    }
  }
  return out;
}

}  // namespace citekg::community
