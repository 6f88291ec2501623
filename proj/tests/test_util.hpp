#pragma once

#include <string>
#include <vector>

#include "citekg/store.hpp"

namespace citekg::testing {

inline Date ymd(int y, unsigned m = 1, unsigned d = 1) { return make_date(y, m, d); }

// Small random store: dated works 2012..2022, cites from later to earlier
// (plus occasional reciprocal pairs), author/venue links per work and
// affiliations per author.
inline GraphStore random_store(std::uint64_t seed, int works = 20, int authors = 6, int venues = 3,
                               int insts = 3, int cites = 40) {
  Rng rng(seed);
  GraphStoreBuilder b;
  std::vector<Date> dates;
  for (int i = 0; i < works; ++i) {
    const Date d = ymd(2012 + static_cast<int>(uniform_index(rng, 11)),
                       1 + static_cast<unsigned>(uniform_index(rng, 12)), 1);
    dates.push_back(d);
    b.entity("W" + std::to_string(i), EntityClass::Work);
    b.set_date("W" + std::to_string(i), d);
  }
  auto w = [](std::uint64_t i) { return "W" + std::to_string(i); };
  for (int k = 0; k < cites; ++k) {
    const auto i = uniform_index(rng, works), j = uniform_index(rng, works);
    if (i == j) continue;
    b.add_quad(w(i), Relation::Cites, w(j), dates[i]);
    if (uniform01(rng) < 0.1) b.add_quad(w(j), Relation::Cites, w(i), dates[j]);
  }
  for (int i = 0; i < works; ++i) {
    if (uniform01(rng) < 0.8)
      b.add_quad(w(i), Relation::Author, "A" + std::to_string(uniform_index(rng, authors)), dates[i]);
    if (uniform01(rng) < 0.6)
      b.add_quad(w(i), Relation::PublishedIn, "V" + std::to_string(uniform_index(rng, venues)),
                 dates[i]);
  }
  for (int a = 0; a < authors; ++a) {
    const std::string name = "A" + std::to_string(a);
    if (uniform01(rng) < 0.5) continue;
    b.add_quad(name, Relation::Affiliation, "I" + std::to_string(uniform_index(rng, insts)),
               ymd(2012 + static_cast<int>(uniform_index(rng, 11))));
  }
  return b.finish();
}

}  // namespace citekg::testing

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

namespace citekg::testing {

// Central differences of f with respect to every coordinate of x.
inline std::vector<double> numeric_grad(const std::function<double()>& f, std::span<double> x,
                                        double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f();
    x[i] = keep - h;
    const double fm = f();
    x[i] = keep;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

// max |a - n| / max(max|a|, max|n|, floor)
inline double rel_error(std::span<const double> a, std::span<const double> n, double floor = 1e-8) {
  double diff = 0, scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - n[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(n[i])});
  }
  return diff / scale;
}

}  // namespace citekg::testing
