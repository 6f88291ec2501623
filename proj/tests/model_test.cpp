#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "citekg/kernels.hpp"
#include "citekg/model.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace citekg;
using namespace citekg::kge;
using citekg::testing::numeric_grad;
using citekg::testing::rel_error;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> random_vec(Rng& rng, std::size_t n, double a = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform_real(rng, -a, a);
  return v;
}

// Re(sum s_i r_i conj(o_i)) with std::complex as the oracle
double complex_oracle(const std::vector<double>& s, const std::vector<double>& r,
                      const std::vector<double>& o) {
  std::complex<double> acc = 0;
  for (std::size_t i = 0; i < s.size(); i += 2)
    acc += std::complex<double>(s[i], s[i + 1]) * std::complex<double>(r[i], r[i + 1]) *
           std::conj(std::complex<double>(o[i], o[i + 1]));
  return acc.real();
}

}  // namespace

TEST(ComplEx, HandExample) {
  std::vector<double> s{1, 2}, r{0.5, 0.5}, o{1, -1};
  EXPECT_DOUBLE_EQ(score_complex(s, r, o), -2.0);
}

TEST(ComplEx, ZeroRelationAndIdentity) {
  Rng rng(1);
  auto s = random_vec(rng, 8), o = random_vec(rng, 8);
  std::vector<double> zero(8, 0.0);
  EXPECT_EQ(score_complex(s, zero, o), 0.0);
  // all-ones real vectors, d=4
  std::vector<double> ones{1, 0, 1, 0, 1, 0, 1, 0};
  EXPECT_DOUBLE_EQ(score_complex(ones, ones, ones), 4.0);
  EXPECT_THROW(score_complex(s, std::vector<double>(6), o), ContractError);
}

TEST(ComplEx, MatchesStdComplexAndConjugateSymmetry) {
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    auto s = random_vec(rng, 10), r = random_vec(rng, 10), o = random_vec(rng, 10);
    EXPECT_NEAR(score_complex(s, r, o), complex_oracle(s, r, o), 1e-12);
    auto rc = r;
    for (std::size_t i = 1; i < rc.size(); i += 2) rc[i] = -rc[i];
    EXPECT_NEAR(score_complex(s, r, o), score_complex(o, rc, s), 1e-12);
  }
}

TEST(ComplEx, GradientAtHandExample) {
  std::vector<double> s{1, 2}, r{0.5, 0.5}, o{1, -1};
  std::vector<double> gs(2, 0.0), gr(2, 0.0), go(2, 0.0);
  grad_complex(s, r, o, 1.0, gs, gr, go);
  auto num = numeric_grad([&] { return score_complex(s, r, o); }, s, 1e-5);
  EXPECT_LT(rel_error(gs, num), 1e-6);
}

TEST(RotatE, HandExamples) {
  std::vector<double> one{1, 0}, i{0, 1}, theta{kPi / 2};
  EXPECT_NEAR(score_rotate(one, theta, i), 0.0, 1e-15);
  EXPECT_NEAR(score_rotate(one, theta, one), -2.0, 1e-12);
}

TEST(RotatE, NonPositiveAndGlobalPhaseInvariance) {
  Rng rng(3);
  for (int k = 0; k < 100; ++k) {
    auto s = random_vec(rng, 8), o = random_vec(rng, 8);
    std::vector<double> th(4);
    for (double& x : th) x = uniform_real(rng, 0, 2 * kPi);
    const double f = score_rotate(s, th, o);
    EXPECT_LE(f, 0.0);
    const double phi = uniform_real(rng, 0, 2 * kPi);
    auto rot = [&](std::vector<double> v) {
      for (std::size_t j = 0; j < v.size(); j += 2) {
        auto z = std::complex<double>(v[j], v[j + 1]) * std::polar(1.0, phi);
        v[j] = z.real();
        v[j + 1] = z.imag();
      }
      return v;
    };
    EXPECT_NEAR(score_rotate(rot(s), th, rot(o)), f, 1e-10);
  }
}

TEST(RotatE, PhaseGradientRealEntities) {
  std::vector<double> s{0.7, 0.0, -1.2, 0.0}, o{0.3, 0.0, 0.9, 0.0}, th{0.4, 2.1};
  std::vector<double> gs(4, 0), go(4, 0), gth(2, 0);
  grad_rotate(s, th, o, 1.0, gs, gth, go);
  auto num = numeric_grad([&] { return score_rotate(s, th, o); }, th, 1e-5);
  EXPECT_LT(rel_error(gth, num), 1e-6);
}

TEST(RotatE, UnitModulusByConstruction) {
  Rng rng(4);
  ModelConfig cfg;
  cfg.kind = ModelKind::RotatE;
  cfg.dim = 16;
  cfg.gamma = 6;
  Model m(cfg, 3, 4, {});
  m.init_uniform(rng);
  for (double th : m.table(TableId::Relation).values) {
    EXPECT_GE(th, 0.0);
    EXPECT_LT(th, 2 * kPi);
    EXPECT_NEAR(std::abs(std::polar(1.0, th)), 1.0, 1e-15);
  }
  std::vector<double> ph{-0.5, 7.0, 2 * kPi};
  m.normalize_phases(ph);
  for (double th : ph) {
    EXPECT_GE(th, 0.0);
    EXPECT_LT(th, 2 * kPi);
  }
}

TEST(Diachronic, Examples) {
  std::vector<double> base{0.3, -0.2}, amp{1, 1}, zero{0, 0}, half_pi{kPi / 2, kPi / 2};
  std::vector<double> out(4);
  diachronic_embed(base, amp, zero, zero, 0.37, out);
  EXPECT_EQ(out, (std::vector<double>{0.3, -0.2, 0.0, 0.0}));
  diachronic_embed(base, amp, std::vector<double>{1, 1}, half_pi, 0.0, out);
  EXPECT_DOUBLE_EQ(out[2], 1.0);
  EXPECT_DOUBLE_EQ(out[3], 1.0);
  for (double psi : {0.01, 0.08, 0.25, 0.5, 0.9}) {
    for (std::size_t d : {1u, 7u, 50u, 100u, 200u}) {
      ModelConfig cfg;
      cfg.kind = ModelKind::DEDistMult;
      cfg.dim = d;
      cfg.psi = psi;
      EXPECT_EQ(cfg.static_dim() + cfg.dynamic_dim(), d);
      EXPECT_EQ(cfg.static_dim(), static_cast<std::size_t>(std::ceil((1 - psi) * d - 1e-9)));
    }
  }
}

TEST(Diachronic, Periodicity) {
  Rng rng(5);
  auto base = random_vec(rng, 3), amp = random_vec(rng, 2), ph = random_vec(rng, 2);
  std::vector<double> freq{1.7, 0.6};
  std::vector<double> a(5), b(5);
  for (int i = 0; i < 2; ++i) {
    const double t = 0.3;
    diachronic_embed(base, amp, freq, ph, t, a);
    diachronic_embed(base, amp, freq, ph, t + 2 * kPi / freq[i], b);
    EXPECT_NEAR(a[3 + i], b[3 + i], 1e-12);
  }
}

TEST(DETransE, Examples) {
  std::vector<double> s{1, 1}, r{3, 4}, o{1, 1}, zero{0, 0};
  EXPECT_DOUBLE_EQ(score_transe(s, r, o), -5.0);
  EXPECT_EQ(score_transe(zero, zero, zero), 0.0);
  std::vector<double> s2{0.5, -1}, r2{1, 2}, o2{1.5, 1};
  EXPECT_EQ(score_transe(s2, r2, o2), 0.0);
}

TEST(DEDistMult, Examples) {
  std::vector<double> s{1, 2}, r{3, 4}, o{5, 6}, ones{1, 1}, zero{0, 0};
  EXPECT_DOUBLE_EQ(score_distmult(s, r, o), 63.0);
  EXPECT_DOUBLE_EQ(score_distmult(s, ones, s), 5.0);
  EXPECT_EQ(score_distmult(s, zero, o), 0.0);
  std::vector<double> gs(2, 0), gr(2, 0), go(2, 0);
  grad_distmult(zero, zero, zero, {}, 1.0, gs, gr, go);
  EXPECT_EQ(gs, zero);
  EXPECT_EQ(gr, zero);
  EXPECT_EQ(go, zero);
}

TEST(Init, RandomEntityRange) {
  ModelConfig cfg;
  cfg.dim = 50;
  cfg.gamma = 6;
  EXPECT_DOUBLE_EQ(cfg.init_range(), 0.16);
  Rng rng(6);
  const auto v = init_entity_random(50, 6.0, rng);
  for (double x : v) {
    EXPECT_GT(x, -0.16);
    EXPECT_LT(x, 0.16);
  }
  double sum = 0;
  const int n = 1000000;
  for (int i = 0; i < n / 50; ++i)
    for (double x : init_entity_random(50, 6.0, rng)) sum += x;
  const double sigma = 0.16 / std::sqrt(3.0) / std::sqrt(static_cast<double>(n));
  EXPECT_LT(std::abs(sum / n), 3 * sigma);
}

class Gradients : public ::testing::TestWithParam<ModelKind> {};

TEST_P(Gradients, MatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 100; ++seed)
    EXPECT_LT(citekg::testing::shallow_gradcheck(GetParam(), seed), 1e-4) << "seed " << seed;
}

INSTANTIATE_TEST_SUITE_P(AllModels, Gradients,
                         ::testing::Values(ModelKind::ComplEx, ModelKind::RotatE,
                                           ModelKind::DETransE, ModelKind::DEDistMult),
                         [](const auto& info) {
                           std::string n(model_name(info.param));
                           std::erase(n, '-');
                           return n;
                         });

TEST(Model, ScoreTailsMatchesScore) {
  Rng rng(8);
  for (auto kind : {ModelKind::ComplEx, ModelKind::RotatE, ModelKind::DETransE,
                    ModelKind::DEDistMult}) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.dim = 8;
    Model m(cfg, 10, 4, TimeCode{Date{0}, Date{100}});
    m.init_uniform(rng);
    std::vector<EntityId> cands{0, 3, 5, 9};
    std::vector<double> out(4), heads(4);
    m.score_tails(2, Relation::Cites, Date{40}, cands, out);
    m.score_heads(2, Relation::Author, Date{40}, cands, heads);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      EXPECT_DOUBLE_EQ(out[i], m.score(2, Relation::Cites, cands[i], Date{40}));
      EXPECT_DOUBLE_EQ(heads[i], m.score(cands[i], Relation::Author, 2, Date{40}));
    }
  }
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  for (auto kind : {ModelKind::ComplEx, ModelKind::RotatE, ModelKind::DETransE,
                    ModelKind::DEDistMult}) {
    Rng rng(9);
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.dim = 5;
    Checkpoint c;
    c.model = Model(cfg, 7, 4, TimeCode{Date{10}, Date{900}});
    c.model.init_uniform(rng);
    c.step = 42;
    c.rng_state = rng_state(rng);
    c.optimizer[0].assign(7, 0.25);
    std::stringstream a;
    save_checkpoint(c, a);
    auto loaded = load_checkpoint(a, "mem");
    EXPECT_EQ(loaded.step, 42u);
    EXPECT_EQ(loaded.model.config().kind, kind);
    std::stringstream b;
    save_checkpoint(loaded, b);
    EXPECT_EQ(a.str(), b.str());
    EXPECT_EQ(loaded.entity_table_hash(), c.entity_table_hash());
  }
}

TEST(Checkpoint, RejectsBadInput) {
  std::stringstream junk("NOPE....");
  EXPECT_THROW(load_checkpoint(junk, "junk"), ConfigError);
  GraphStoreBuilder b;
  b.add_quad("W1", Relation::Cites, "W2", Date{5});
  auto g = b.finish();
  Checkpoint c;
  c.model = Model(ModelConfig{}, 3, 4, {});
  EXPECT_THROW(c.validate_against(g), ConfigError);
  c.model = Model(ModelConfig{}, 2, 4, {});
  EXPECT_NO_THROW(c.validate_against(g));
}

TEST(ModelConfig, Validation) {
  ModelConfig c;
  c.dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.dim = 4;
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.dropout = 0;
  c.gamma = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}
